#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "covrl/grid_map.h"

namespace covrl {

enum class Heading : std::uint8_t { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };

enum class Action : std::uint8_t {
  kUp,
  kDown,
  kLeft,
  kRight,
  kForward,
  kRotateLeft,
  kRotateRight,
};

enum class ActionMode { kCardinal, kDifferential };

const char* action_name(Action a);

// The active action list plus a per-action delay cost. Agents address
// actions by index into `actions()`.
class ActionSet {
 public:
  explicit ActionSet(ActionMode mode = ActionMode::kCardinal);
  ActionSet(ActionMode mode, std::vector<double> costs);

  ActionMode mode() const { return mode_; }
  int size() const { return static_cast<int>(actions_.size()); }
  Action action(int index) const { return actions_.at(index); }
  const std::vector<Action>& actions() const { return actions_; }
  double cost(int index) const { return costs_.at(index); }
  // Index of `a` in this set, or -1 when `a` is not part of it.
  int index_of(Action a) const;

 private:
  ActionMode mode_;
  std::vector<Action> actions_;
  std::vector<double> costs_;
};

struct SensorModel {
  double flip_prob = 0.0;  // rho, must be < 0.5
  int range = 1;           // Manhattan radius around the robot
};

struct EpisodeConfig {
  double eta = 0.90;
  int step_cap = 500;
  double lambda = 0.5;
  // Penalty for bumping into an obstacle; defaults to lambda when unset.
  std::optional<double> bump_penalty;
  // Coverage level at which overlap is snapshotted for reporting.
  double report_coverage = 0.90;
};

enum class Belief : std::uint8_t { kUnknown = 0, kFree = 1, kObstacle = 2 };

struct Pose {
  Cell cell;
  Heading heading = Heading::kNorth;

  bool operator==(const Pose&) const = default;
};

enum class StepEvent : std::uint8_t { kNewCell, kOverlap, kBump, kRotate };

struct StepOutcome {
  double reward = 0.0;
  bool done = false;
  StepEvent event = StepEvent::kNewCell;
};

// Compact agent-side view of an episode: everything the encoder needs and
// nothing hidden. Stored in replay memory instead of encoded tensors.
struct Observation {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> covered;  // 1 where visit_count >= 1
  std::vector<Belief> belief;
  Pose pose;

  bool operator==(const Observation&) const = default;
};

Cell neighbor(Cell c, Heading h);
Heading rotate_left(Heading h);
Heading rotate_right(Heading h);

// One coverage episode on a fixed map. Constructing it performs the reset:
// the robot sits on the map start facing north, the start is visited, and
// one sensing pass has been applied.
class CoverageEnv {
 public:
  CoverageEnv(std::shared_ptr<const GridMap> map, EpisodeConfig cfg,
              SensorModel sensor, ActionSet actions, std::uint64_t seed);
  CoverageEnv(const GridMap& map, EpisodeConfig cfg, SensorModel sensor,
              ActionSet actions, std::uint64_t seed);

  StepOutcome step(int action_index);
  void sense();

  bool done() const;
  // Coverage has reached eta (as opposed to hitting the step cap).
  bool target_reached() const;
  double coverage_fraction() const;
  double overlap_fraction() const;

  const GridMap& map() const { return *map_; }
  const std::shared_ptr<const GridMap>& map_ptr() const { return map_; }
  const EpisodeConfig& config() const { return cfg_; }
  const SensorModel& sensor() const { return sensor_; }
  const ActionSet& action_set() const { return actions_; }
  const Pose& pose() const { return pose_; }
  int steps() const { return steps_; }
  int covered_cells() const { return covered_cells_; }
  int visit_count(Cell c) const { return visits_[map_->index(c)]; }
  Belief belief(Cell c) const { return belief_[map_->index(c)]; }
  const std::vector<int>& visit_counts() const { return visits_; }
  const std::vector<Belief>& beliefs() const { return belief_; }

  double total_reward() const { return total_reward_; }
  int new_cell_events() const { return new_cells_; }
  int overlap_events() const { return overlaps_; }
  int bump_events() const { return bumps_; }
  // Overlap fraction at the first step where coverage reached
  // cfg.report_coverage; empty if that level has not been reached.
  std::optional<double> overlap_at_report() const { return overlap_at_report_; }
  // Reported overlap: overlap_at_report() if reached, else current overlap.
  double reported_overlap() const;

  Observation observe() const;

 private:
  void record_report_point();

  std::shared_ptr<const GridMap> map_;
  EpisodeConfig cfg_;
  SensorModel sensor_;
  ActionSet actions_;
  std::mt19937_64 rng_;

  Pose pose_;
  std::vector<int> visits_;
  std::vector<Belief> belief_;
  int steps_ = 0;
  int covered_cells_ = 0;
  long extra_visits_ = 0;

  double total_reward_ = 0.0;
  int new_cells_ = 0;
  int overlaps_ = 0;
  int bumps_ = 0;
  std::optional<double> overlap_at_report_;
};

}  // namespace covrl
