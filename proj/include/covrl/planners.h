#pragma once

#include <optional>
#include <span>
#include <vector>

#include "covrl/agent.h"
#include "covrl/env.h"

namespace covrl {

// Read-only view of an online occupancy estimate.
struct BeliefGrid {
  int height = 0;
  int width = 0;
  std::span<const Belief> cells;

  bool in_bounds(Cell c) const {
    return c.row >= 0 && c.row < height && c.col >= 0 && c.col < width;
  }
  Belief at(Cell c) const { return cells[c.row * width + c.col]; }
  // Unknown cells count as traversable.
  bool traversable(Cell c) const {
    return in_bounds(c) && at(c) != Belief::kObstacle;
  }
};

BeliefGrid belief_grid(const CoverageEnv& env);

// Shortest 4-connected path from start to goal (both included) under unit
// step cost and the Manhattan heuristic, ties broken by (row, col). Empty
// optional when the goal is unreachable on the belief map.
std::optional<std::vector<Cell>> astar(const BeliefGrid& grid, Cell start,
                                       Cell goal);

// Boustrophedon sweep along vertical lanes. `lane` is the current travel
// direction within a column, `sweep` the direction in which lanes advance.
struct ZigzagState {
  Heading lane = Heading::kSouth;
  Heading sweep = Heading::kEast;
};

// Lane direction and sweep direction both point away from the nearest wall.
ZigzagState init_zigzag(const CoverageEnv& env);

// Next action index of the sweep, or empty when Blocked (no believed-free
// unvisited neighbour). In differential mode rotations are issued first and
// the state only advances with the move itself.
std::optional<int> zigzag_step(const CoverageEnv& env, ZigzagState& z);

// Action index that turns toward or moves onto the 4-adjacent cell `next`.
int move_toward(const CoverageEnv& env, Cell next);

// Visited cells with at least one believed-free unvisited neighbour.
std::vector<Cell> backtrack_candidates(const CoverageEnv& env);

struct Backtrack {
  Cell goal;
  std::vector<Cell> path;  // from the robot's cell to goal
};

// Candidate with the smallest path cost from the robot, ties by (row, col).
// Empty when no candidate is reachable.
std::optional<Backtrack> nearest_backtrack(const CoverageEnv& env,
                                           const std::vector<Cell>& candidates);
std::optional<Backtrack> nearest_backtrack(const BeliefGrid& grid, Cell start,
                                           const std::vector<Cell>& candidates);

// Zigzag until Blocked or done.
EpisodeResult zigzag_episode(CoverageEnv& env);

// Zigzag, and on Blocked follow an A* path to the nearest backtracking point;
// ends when no candidate remains or the episode is done. Without candidates
// it probes the nearest unvisited cell bordering the covered area that has
// not been confirmed as an obstacle by a bump, and stops once none is left.
EpisodeResult ba_star_episode(CoverageEnv& env);

// Zigzag while possible; on Blocked the agent acts until it enters an
// unvisited cell. When `training`, each zigzag segment is folded into the
// agent action that started it (summed reward, next state at Blocked) and
// repositioning steps are stored one by one.
EpisodeResult hybrid_episode(CoverageEnv& env, DqnAgent& agent, bool training);

}  // namespace covrl
