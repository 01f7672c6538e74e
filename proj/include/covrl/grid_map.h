#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace covrl {

enum class Occupancy : std::uint8_t { kFree = 0, kObstacle = 1 };

struct Cell {
  int row = 0;
  int col = 0;

  auto operator<=>(const Cell&) const = default;
};

// Ground-truth occupancy grid with a start cell. The constructor enforces
// that the start is free and that the free cells form one 4-connected
// component, so every GridMap in the program is a valid coverage arena.
class GridMap {
 public:
  GridMap(int height, int width, std::vector<Occupancy> cells, Cell start);

  int height() const { return height_; }
  int width() const { return width_; }
  Cell start() const { return start_; }
  int free_count() const { return free_count_; }

  bool in_bounds(Cell c) const {
    return c.row >= 0 && c.row < height_ && c.col >= 0 && c.col < width_;
  }
  int index(Cell c) const { return c.row * width_ + c.col; }
  Cell cell_at(int index) const { return {index / width_, index % width_}; }
  Occupancy at(Cell c) const { return cells_[index(c)]; }
  bool is_free(Cell c) const {
    return in_bounds(c) && cells_[index(c)] == Occupancy::kFree;
  }
  const std::vector<Occupancy>& cells() const { return cells_; }

  // ASCII rendering in the map-file format ('.', '#', 'S').
  std::string to_text() const;

  bool operator==(const GridMap&) const = default;

 private:
  int height_;
  int width_;
  std::vector<Occupancy> cells_;
  Cell start_;
  int free_count_ = 0;
};

enum class ObstacleShape { kUnitCells, kRectangles };

struct MapGenParams {
  int width = 15;
  int height = 15;
  double obstacle_density = 0.2;  // in [0, 0.4]
  ObstacleShape shape = ObstacleShape::kRectangles;
  int max_rect_w = 3;
  int max_rect_h = 3;
  std::uint64_t seed = 0;
  // Consecutive rejected obstacle placements tolerated before giving up.
  int max_attempts = 1000;
};

// Places obstacles (unit cells or clipped rectangles) at uniformly random
// positions until the target density is met. A placement that would split
// the free space is undone and resampled; the start is drawn uniformly from
// the remaining free cells.
GridMap generate_map(const MapGenParams& params);

// Parses the map-file format: one row per line, '.' free, '#' obstacle,
// 'S' start (free). Trailing '\r' and blank trailing lines are ignored.
GridMap load_map(std::string_view text);
GridMap load_map_file(const std::string& path);

// Size of the 4-connected free component containing `from` (0 if `from` is
// not free).
int flood_fill_count(int height, int width,
                     const std::vector<Occupancy>& cells, Cell from);

}  // namespace covrl
