#include "covrl/planners.h"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <deque>
#include <queue>
#include <tuple>

#include "covrl/errors.h"

namespace covrl {

namespace {

constexpr std::array<Heading, 4> kHeadings = {Heading::kNorth, Heading::kEast,
                                              Heading::kSouth, Heading::kWest};

Heading opposite(Heading h) { return rotate_left(rotate_left(h)); }

Heading direction_to(Cell from, Cell to) {
  if (to.row < from.row) return Heading::kNorth;
  if (to.row > from.row) return Heading::kSouth;
  if (to.col > from.col) return Heading::kEast;
  return Heading::kWest;
}

bool open_unvisited(const CoverageEnv& env, Cell c) {
  return env.map().in_bounds(c) && env.belief(c) == Belief::kFree &&
         env.visit_count(c) == 0;
}

int cardinal_action(const ActionSet& set, Heading h) {
  switch (h) {
    case Heading::kNorth: return set.index_of(Action::kUp);
    case Heading::kSouth: return set.index_of(Action::kDown);
    case Heading::kWest: return set.index_of(Action::kLeft);
    case Heading::kEast: return set.index_of(Action::kRight);
  }
  return -1;
}

// Action that makes progress toward moving in direction `h`.
int action_for(const CoverageEnv& env, Heading h) {
  const ActionSet& set = env.action_set();
  if (set.mode() == ActionMode::kCardinal) return cardinal_action(set, h);
  const Heading facing = env.pose().heading;
  if (facing == h) return set.index_of(Action::kForward);
  if (rotate_right(facing) == h) return set.index_of(Action::kRotateRight);
  return set.index_of(Action::kRotateLeft);
}

bool is_move(const CoverageEnv& env, Heading h) {
  return env.action_set().mode() == ActionMode::kCardinal ||
         env.pose().heading == h;
}

// Cell that action `a` tries to enter from the current pose.
Cell action_target(const CoverageEnv& env, int a) {
  const Cell here = env.pose().cell;
  switch (env.action_set().action(a)) {
    case Action::kUp: return neighbor(here, Heading::kNorth);
    case Action::kDown: return neighbor(here, Heading::kSouth);
    case Action::kLeft: return neighbor(here, Heading::kWest);
    case Action::kRight: return neighbor(here, Heading::kEast);
    default: return neighbor(here, env.pose().heading);
  }
}

EpisodeResult finish(const CoverageEnv& env) {
  EpisodeResult r;
  r.steps = env.steps();
  r.coverage = env.coverage_fraction();
  r.overlap = env.reported_overlap();
  r.ret = env.total_reward();
  r.reached_eta = env.target_reached();
  return r;
}

// True while every remaining path cell is still believed traversable.
bool path_intact(const BeliefGrid& grid, const std::vector<Cell>& path,
                 size_t from) {
  for (size_t i = from; i < path.size(); ++i) {
    if (!grid.traversable(path[i])) return false;
  }
  return true;
}

}  // namespace

BeliefGrid belief_grid(const CoverageEnv& env) {
  return {env.map().height(), env.map().width(), env.beliefs()};
}

std::optional<std::vector<Cell>> astar(const BeliefGrid& grid, Cell start,
                                       Cell goal) {
  if (!grid.in_bounds(start) || grid.at(start) == Belief::kObstacle) {
    throw InvalidArgument("A* start must be an in-bounds non-obstacle cell");
  }
  if (!grid.traversable(goal)) return std::nullopt;
  const int n = grid.height * grid.width;
  auto index = [&](Cell c) { return c.row * grid.width + c.col; };
  auto h = [&](Cell c) {
    return std::abs(c.row - goal.row) + std::abs(c.col - goal.col);
  };
  std::vector<int> g(n, -1), parent(n, -1);
  std::vector<char> closed(n, 0);
  using Entry = std::tuple<int, int, int>;  // f, row, col
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  g[index(start)] = 0;
  open.emplace(h(start), start.row, start.col);
  while (!open.empty()) {
    const auto [f, row, col] = open.top();
    open.pop();
    const Cell c{row, col};
    const int ci = index(c);
    if (closed[ci]) continue;
    closed[ci] = 1;
    if (c == goal) break;
    for (Heading d : kHeadings) {
      const Cell nb = neighbor(c, d);
      if (!grid.traversable(nb)) continue;
      const int ni = index(nb);
      const int cost = g[ci] + 1;
      if (closed[ni] || (g[ni] >= 0 && g[ni] <= cost)) continue;
      g[ni] = cost;
      parent[ni] = ci;
      open.emplace(cost + h(nb), nb.row, nb.col);
    }
  }
  if (!closed[index(goal)]) return std::nullopt;
  std::vector<Cell> path;
  for (int i = index(goal); i >= 0; i = parent[i]) {
    path.push_back({i / grid.width, i % grid.width});
  }
  std::reverse(path.begin(), path.end());
  return path;
}

ZigzagState init_zigzag(const CoverageEnv& env) {
  const Cell c = env.pose().cell;
  ZigzagState z;
  z.lane = c.row <= env.map().height() - 1 - c.row ? Heading::kSouth
                                                   : Heading::kNorth;
  z.sweep = c.col <= env.map().width() - 1 - c.col ? Heading::kEast
                                                  : Heading::kWest;
  return z;
}

std::optional<int> zigzag_step(const CoverageEnv& env, ZigzagState& z) {
  const Cell here = env.pose().cell;
  const std::array<Heading, 4> order = {z.lane, opposite(z.lane), z.sweep,
                                        opposite(z.sweep)};
  for (int k = 0; k < 4; ++k) {
    const Heading d = order[k];
    if (!open_unvisited(env, neighbor(here, d))) continue;
    if (is_move(env, d)) {
      switch (k) {
        case 0: break;
        case 1: z.lane = d; break;
        case 2: z.lane = opposite(z.lane); break;
        case 3:
          z.lane = opposite(z.lane);
          z.sweep = d;
          break;
      }
    }
    return action_for(env, d);
  }
  return std::nullopt;
}

int move_toward(const CoverageEnv& env, Cell next) {
  const Cell here = env.pose().cell;
  if (std::abs(here.row - next.row) + std::abs(here.col - next.col) != 1) {
    throw InvalidArgument("move_toward needs a 4-adjacent cell");
  }
  return action_for(env, direction_to(here, next));
}

std::vector<Cell> backtrack_candidates(const CoverageEnv& env) {
  std::vector<Cell> out;
  const GridMap& m = env.map();
  for (int r = 0; r < m.height(); ++r) {
    for (int c = 0; c < m.width(); ++c) {
      const Cell cell{r, c};
      if (env.visit_count(cell) == 0) continue;
      for (Heading h : kHeadings) {
        if (open_unvisited(env, neighbor(cell, h))) {
          out.push_back(cell);
          break;
        }
      }
    }
  }
  return out;
}

std::optional<Backtrack> nearest_backtrack(const CoverageEnv& env,
                                           const std::vector<Cell>& candidates) {
  return nearest_backtrack(belief_grid(env), env.pose().cell, candidates);
}

std::optional<Backtrack> nearest_backtrack(const BeliefGrid& grid, Cell start,
                                           const std::vector<Cell>& candidates) {
  if (candidates.empty()) return std::nullopt;
  std::vector<int> dist(static_cast<size_t>(grid.height) * grid.width, -1);
  std::deque<Cell> queue = {start};
  dist[start.row * grid.width + start.col] = 0;
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    for (Heading h : kHeadings) {
      const Cell nb = neighbor(c, h);
      if (!grid.traversable(nb)) continue;
      int& d = dist[nb.row * grid.width + nb.col];
      if (d >= 0) continue;
      d = dist[c.row * grid.width + c.col] + 1;
      queue.push_back(nb);
    }
  }
  std::optional<Cell> best;
  int best_dist = 0;
  for (Cell c : candidates) {
    const int d = dist[c.row * grid.width + c.col];
    if (d < 0) continue;
    if (!best || d < best_dist || (d == best_dist && c < *best)) {
      best = c;
      best_dist = d;
    }
  }
  if (!best) return std::nullopt;
  return Backtrack{*best, *astar(grid, start, *best)};
}

EpisodeResult zigzag_episode(CoverageEnv& env) {
  ZigzagState z = init_zigzag(env);
  while (!env.done()) {
    const std::optional<int> a = zigzag_step(env, z);
    if (!a) break;
    env.step(*a);
  }
  return finish(env);
}

EpisodeResult ba_star_episode(CoverageEnv& env) {
  ZigzagState z = init_zigzag(env);
  const GridMap& m = env.map();
  std::vector<char> bumped(static_cast<size_t>(m.height()) * m.width(), 0);
  std::vector<Belief> relaxed;
  while (!env.done()) {
    if (const std::optional<int> a = zigzag_step(env, z)) {
      const Cell target = action_target(env, *a);
      if (env.step(*a).event == StepEvent::kBump && m.in_bounds(target)) {
        bumped[m.index(target)] = 1;
      }
      continue;
    }
    std::vector<Cell> goals = backtrack_candidates(env);
    bool probing = goals.empty();
    std::optional<Backtrack> bt;
    if (!probing) {
      bt = nearest_backtrack(env, goals);
    } else {
      // No believed-free frontier left: walk into the nearest unvisited cell
      // next to the covered area that no bump has ruled out yet.
      for (int r = 0; r < m.height(); ++r) {
        for (int c = 0; c < m.width(); ++c) {
          const Cell cell{r, c};
          if (env.visit_count(cell) > 0 || bumped[m.index(cell)]) continue;
          for (Heading h : kHeadings) {
            const Cell nb = neighbor(cell, h);
            if (m.in_bounds(nb) && env.visit_count(nb) > 0) {
              goals.push_back(cell);
              break;
            }
          }
        }
      }
      relaxed = env.beliefs();
      for (size_t i = 0; i < relaxed.size(); ++i) {
        if (relaxed[i] == Belief::kObstacle && !bumped[i]) relaxed[i] = Belief::kUnknown;
      }
      bt = nearest_backtrack(BeliefGrid{m.height(), m.width(), relaxed},
                             env.pose().cell, goals);
    }
    if (!bt) break;
    // Follow the path; any bump or newly believed obstacle on the remaining
    // path sends control back to the outer loop, which replans.
    size_t next = 1;
    while (next < bt->path.size() && !env.done()) {
      const Cell target = bt->path[next];
      const StepOutcome out = env.step(move_toward(env, target));
      if (out.event == StepEvent::kBump) {
        bumped[m.index(target)] = 1;
        break;
      }
      if (env.pose().cell == target) ++next;
      if (!probing && !path_intact(belief_grid(env), bt->path, next)) break;
    }
  }
  return finish(env);
}

EpisodeResult hybrid_episode(CoverageEnv& env, DqnAgent& agent, bool training) {
  EpisodeResult r;
  double ret = 0.0;
  ZigzagState z = init_zigzag(env);
  std::optional<Transition> pending;
  bool repositioning = false;
  auto store = [&](Transition t) {
    if (const std::optional<double> loss = agent.observe(std::move(t))) {
      r.loss_sum += *loss;
      ++r.loss_count;
    }
  };
  auto flush = [&] {
    if (!pending) return;
    pending->next_state = env.observe();
    pending->done = env.target_reached();
    store(std::move(*pending));
    pending.reset();
  };

  while (!env.done()) {
    if (!repositioning) {
      if (const std::optional<int> a = zigzag_step(env, z)) {
        const StepOutcome out = env.step(*a);
        ret += out.reward;
        if (pending) pending->reward += out.reward;
        continue;
      }
      if (training) flush();
      repositioning = true;
      continue;
    }
    Observation obs = env.observe();
    const int a = agent.select(obs, training);
    const StepOutcome out = env.step(a);
    ret += out.reward;
    ++r.agent_actions;
    if (out.event == StepEvent::kNewCell) repositioning = false;
    if (!training) continue;
    if (!repositioning && !env.done()) {
      pending = Transition{std::move(obs), a, out.reward, {}, false};
    } else {
      store({std::move(obs), a, out.reward, env.observe(), env.target_reached()});
    }
  }
  if (training) flush();

  EpisodeResult f = finish(env);
  f.ret = ret;
  f.agent_actions = r.agent_actions;
  f.loss_sum = r.loss_sum;
  f.loss_count = r.loss_count;
  return f;
}

}  // namespace covrl
