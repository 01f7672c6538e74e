#include "covrl/grid_map.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "covrl/errors.h"

namespace covrl {

namespace {

constexpr std::array<Cell, 4> kNeighbors = {{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

}  // namespace

int flood_fill_count(int height, int width,
                     const std::vector<Occupancy>& cells, Cell from) {
  auto inside = [&](Cell c) {
    return c.row >= 0 && c.row < height && c.col >= 0 && c.col < width;
  };
  if (!inside(from) ||
      cells[from.row * width + from.col] != Occupancy::kFree) {
    return 0;
  }
  std::vector<char> seen(cells.size(), 0);
  std::vector<Cell> stack = {from};
  seen[from.row * width + from.col] = 1;
  int count = 0;
  while (!stack.empty()) {
    Cell c = stack.back();
    stack.pop_back();
    ++count;
    for (Cell d : kNeighbors) {
      Cell n{c.row + d.row, c.col + d.col};
      if (!inside(n)) continue;
      int idx = n.row * width + n.col;
      if (seen[idx] || cells[idx] != Occupancy::kFree) continue;
      seen[idx] = 1;
      stack.push_back(n);
    }
  }
  return count;
}

GridMap::GridMap(int height, int width, std::vector<Occupancy> cells,
                 Cell start)
    : height_(height), width_(width), cells_(std::move(cells)), start_(start) {
  if (height_ < 1 || width_ < 1) {
    throw InvalidMap("map must be at least 1x1");
  }
  if (static_cast<int>(cells_.size()) != height_ * width_) {
    throw InvalidMap("cell count does not match dimensions");
  }
  if (!in_bounds(start_) || at(start_) != Occupancy::kFree) {
    throw InvalidMap("start cell must be a free in-bounds cell");
  }
  free_count_ = static_cast<int>(
      std::count(cells_.begin(), cells_.end(), Occupancy::kFree));
  if (flood_fill_count(height_, width_, cells_, start_) != free_count_) {
    throw InvalidMap("free cells are not 4-connected");
  }
}

std::string GridMap::to_text() const {
  std::string out;
  out.reserve(static_cast<size_t>((width_ + 1) * height_));
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      Cell cell{r, c};
      if (cell == start_) {
        out.push_back('S');
      } else {
        out.push_back(at(cell) == Occupancy::kFree ? '.' : '#');
      }
    }
    out.push_back('\n');
  }
  return out;
}

GridMap generate_map(const MapGenParams& params) {
  if (params.width < 1 || params.height < 1) {
    throw InvalidArgument("map dimensions must be positive");
  }
  if (!(params.obstacle_density >= 0.0 && params.obstacle_density <= 0.4)) {
    throw InvalidArgument("obstacle density must lie in [0, 0.4]");
  }
  if (params.shape == ObstacleShape::kRectangles &&
      (params.max_rect_w < 1 || params.max_rect_h < 1)) {
    throw InvalidArgument("rectangle extents must be positive");
  }
  if (params.max_attempts < 1) {
    throw InvalidArgument("max_attempts must be positive");
  }
  const int area = params.width * params.height;
  const int target = static_cast<int>(
      std::lround(params.obstacle_density * static_cast<double>(area)));
  std::mt19937_64 rng(params.seed);

  std::vector<Occupancy> cells(static_cast<size_t>(area), Occupancy::kFree);
  int obstacles = 0;
  int failures = 0;
  std::vector<int> placed;
  while (obstacles < target) {
    int rw = 1, rh = 1;
    if (params.shape == ObstacleShape::kRectangles) {
      rw = std::uniform_int_distribution<int>(1, params.max_rect_w)(rng);
      rh = std::uniform_int_distribution<int>(1, params.max_rect_h)(rng);
    }
    const int r0 = std::uniform_int_distribution<int>(0, params.height - 1)(rng);
    const int c0 = std::uniform_int_distribution<int>(0, params.width - 1)(rng);
    placed.clear();
    for (int r = r0; r < std::min(r0 + rh, params.height); ++r) {
      for (int c = c0; c < std::min(c0 + rw, params.width); ++c) {
        const int idx = r * params.width + c;
        if (cells[idx] == Occupancy::kFree &&
            obstacles + static_cast<int>(placed.size()) < target) {
          cells[idx] = Occupancy::kObstacle;
          placed.push_back(idx);
        }
      }
    }
    const int free_left = area - obstacles - static_cast<int>(placed.size());
    bool connected = false;
    if (!placed.empty() && free_left > 0) {
      auto first_free = std::find(cells.begin(), cells.end(), Occupancy::kFree);
      const int idx = static_cast<int>(first_free - cells.begin());
      connected = flood_fill_count(params.height, params.width, cells,
                                   {idx / params.width, idx % params.width}) ==
                  free_left;
    }
    if (connected) {
      obstacles += static_cast<int>(placed.size());
      failures = 0;
      continue;
    }
    for (int idx : placed) cells[idx] = Occupancy::kFree;
    if (++failures >= params.max_attempts) {
      throw GenerationFailed("no connectivity-preserving obstacle placement "
                             "found in " + std::to_string(params.max_attempts) +
                             " attempts");
    }
  }

  std::vector<int> free_cells;
  for (int i = 0; i < area; ++i) {
    if (cells[i] == Occupancy::kFree) free_cells.push_back(i);
  }
  const int pick = free_cells[std::uniform_int_distribution<size_t>(
      0, free_cells.size() - 1)(rng)];
  return GridMap(params.height, params.width, std::move(cells),
                 {pick / params.width, pick % params.width});
}

GridMap load_map(std::string_view text) {
  std::vector<std::string> rows;
  std::string line;
  for (char ch : text) {
    if (ch == '\n') {
      rows.push_back(line);
      line.clear();
    } else if (ch != '\r') {
      line.push_back(ch);
    }
  }
  if (!line.empty()) rows.push_back(line);
  while (!rows.empty() && rows.back().empty()) rows.pop_back();
  if (rows.empty()) throw ParseError("map is empty");

  const int height = static_cast<int>(rows.size());
  const int width = static_cast<int>(rows.front().size());
  if (width == 0) throw ParseError("map row 0 is empty");
  std::vector<Occupancy> cells;
  cells.reserve(static_cast<size_t>(height * width));
  int starts = 0;
  Cell start;
  for (int r = 0; r < height; ++r) {
    if (static_cast<int>(rows[r].size()) != width) {
      throw ParseError("ragged map: row " + std::to_string(r) + " has " +
                       std::to_string(rows[r].size()) + " cells, expected " +
                       std::to_string(width));
    }
    for (int c = 0; c < width; ++c) {
      switch (rows[r][c]) {
        case '.':
          cells.push_back(Occupancy::kFree);
          break;
        case '#':
          cells.push_back(Occupancy::kObstacle);
          break;
        case 'S':
          cells.push_back(Occupancy::kFree);
          start = {r, c};
          ++starts;
          break;
        default:
          throw ParseError("bad character '" + std::string(1, rows[r][c]) +
                           "' at row " + std::to_string(r) + ", col " +
                           std::to_string(c));
      }
    }
  }
  if (starts != 1) {
    throw ParseError("map must contain exactly one 'S', found " +
                     std::to_string(starts));
  }
  return GridMap(height, width, std::move(cells), start);
}

GridMap load_map_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open map file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_map(buf.str());
}

}  // namespace covrl
