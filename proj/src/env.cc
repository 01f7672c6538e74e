#include "covrl/env.h"

#include <cmath>
#include <cstdlib>
#include <string>

#include "covrl/errors.h"

namespace covrl {

const char* action_name(Action a) {
  switch (a) {
    case Action::kUp: return "up";
    case Action::kDown: return "down";
    case Action::kLeft: return "left";
    case Action::kRight: return "right";
    case Action::kForward: return "forward";
    case Action::kRotateLeft: return "rotate_left";
    case Action::kRotateRight: return "rotate_right";
  }
  return "?";
}

ActionSet::ActionSet(ActionMode mode) : mode_(mode) {
  if (mode == ActionMode::kCardinal) {
    actions_ = {Action::kUp, Action::kDown, Action::kLeft, Action::kRight};
  } else {
    actions_ = {Action::kForward, Action::kRotateLeft, Action::kRotateRight};
  }
  costs_.assign(actions_.size(), 0.0);
}

ActionSet::ActionSet(ActionMode mode, std::vector<double> costs)
    : ActionSet(mode) {
  if (costs.size() != actions_.size()) {
    throw InvalidArgument("action cost table must have one entry per action");
  }
  for (double c : costs) {
    if (!(c >= 0.0) || !std::isfinite(c)) {
      throw InvalidArgument("action costs must be finite and nonnegative");
    }
  }
  costs_ = std::move(costs);
}

int ActionSet::index_of(Action a) const {
  for (int i = 0; i < size(); ++i) {
    if (actions_[i] == a) return i;
  }
  return -1;
}

Cell neighbor(Cell c, Heading h) {
  switch (h) {
    case Heading::kNorth: return {c.row - 1, c.col};
    case Heading::kEast: return {c.row, c.col + 1};
    case Heading::kSouth: return {c.row + 1, c.col};
    case Heading::kWest: return {c.row, c.col - 1};
  }
  return c;
}

Heading rotate_left(Heading h) {
  return static_cast<Heading>((static_cast<int>(h) + 3) % 4);
}

Heading rotate_right(Heading h) {
  return static_cast<Heading>((static_cast<int>(h) + 1) % 4);
}

CoverageEnv::CoverageEnv(const GridMap& map, EpisodeConfig cfg,
                         SensorModel sensor, ActionSet actions,
                         std::uint64_t seed)
    : CoverageEnv(std::make_shared<const GridMap>(map), cfg, sensor,
                  std::move(actions), seed) {}

CoverageEnv::CoverageEnv(std::shared_ptr<const GridMap> map,
                         EpisodeConfig cfg, SensorModel sensor,
                         ActionSet actions, std::uint64_t seed)
    : map_(std::move(map)),
      cfg_(cfg),
      sensor_(sensor),
      actions_(std::move(actions)),
      rng_(seed) {
  if (!map_) throw InvalidArgument("environment needs a map");
  if (!(cfg_.eta > 0.0 && cfg_.eta <= 1.0)) {
    throw InvalidArgument("eta must lie in (0, 1]");
  }
  if (!(cfg_.lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
  if (cfg_.bump_penalty && !(*cfg_.bump_penalty >= 0.0)) {
    throw InvalidArgument("bump penalty must be >= 0");
  }
  if (cfg_.step_cap < 1) throw InvalidArgument("step cap must be positive");
  if (!(sensor_.flip_prob >= 0.0 && sensor_.flip_prob < 0.5)) {
    throw InvalidArgument("sensor flip probability must lie in [0, 0.5)");
  }
  if (sensor_.range < 0) throw InvalidArgument("sensor range must be >= 0");

  const size_t n = map_->cells().size();
  visits_.assign(n, 0);
  belief_.assign(n, Belief::kUnknown);
  pose_ = {map_->start(), Heading::kNorth};
  visits_[map_->index(pose_.cell)] = 1;
  belief_[map_->index(pose_.cell)] = Belief::kFree;
  covered_cells_ = 1;
  sense();
  record_report_point();
}

void CoverageEnv::sense() {
  const int range = sensor_.range;
  std::bernoulli_distribution flip(sensor_.flip_prob);
  for (int dr = -range; dr <= range; ++dr) {
    for (int dc = -range; dc <= range; ++dc) {
      if (dr == 0 && dc == 0) continue;
      if (std::abs(dr) + std::abs(dc) > range) continue;
      Cell c{pose_.cell.row + dr, pose_.cell.col + dc};
      if (!map_->in_bounds(c)) continue;
      const int idx = map_->index(c);
      bool obstacle = map_->at(c) == Occupancy::kObstacle;
      if (sensor_.flip_prob > 0.0 && flip(rng_)) obstacle = !obstacle;
      if (visits_[idx] > 0) {
        belief_[idx] = Belief::kFree;
      } else {
        belief_[idx] = obstacle ? Belief::kObstacle : Belief::kFree;
      }
    }
  }
}

bool CoverageEnv::target_reached() const {
  const double needed = std::ceil(cfg_.eta * map_->free_count() - 1e-9);
  return covered_cells_ >= needed;
}

bool CoverageEnv::done() const {
  return target_reached() || steps_ >= cfg_.step_cap;
}

double CoverageEnv::coverage_fraction() const {
  return static_cast<double>(covered_cells_) / map_->free_count();
}

double CoverageEnv::overlap_fraction() const {
  return static_cast<double>(extra_visits_) / map_->free_count();
}

double CoverageEnv::reported_overlap() const {
  return overlap_at_report_ ? *overlap_at_report_ : overlap_fraction();
}

void CoverageEnv::record_report_point() {
  if (overlap_at_report_) return;
  const double needed =
      std::ceil(cfg_.report_coverage * map_->free_count() - 1e-9);
  if (covered_cells_ >= needed) overlap_at_report_ = overlap_fraction();
}

StepOutcome CoverageEnv::step(int action_index) {
  if (done()) throw EpisodeFinished("step() called after the episode ended");
  if (action_index < 0 || action_index >= actions_.size()) {
    throw InvalidArgument("action index " + std::to_string(action_index) +
                          " outside the active action set");
  }
  const Action action = actions_.action(action_index);
  const double cost = actions_.cost(action_index);
  StepOutcome out;

  bool moves = true;
  Heading dir = pose_.heading;
  switch (action) {
    case Action::kUp: dir = Heading::kNorth; break;
    case Action::kDown: dir = Heading::kSouth; break;
    case Action::kLeft: dir = Heading::kWest; break;
    case Action::kRight: dir = Heading::kEast; break;
    case Action::kForward: break;
    case Action::kRotateLeft:
      pose_.heading = rotate_left(pose_.heading);
      moves = false;
      break;
    case Action::kRotateRight:
      pose_.heading = rotate_right(pose_.heading);
      moves = false;
      break;
  }

  if (!moves) {
    out.event = StepEvent::kRotate;
    out.reward = -cost;
  } else {
    const Cell target = neighbor(pose_.cell, dir);
    if (map_->is_free(target)) {
      pose_.cell = target;
      int& visits = visits_[map_->index(target)];
      if (visits == 0) {
        out.event = StepEvent::kNewCell;
        out.reward = 1.0 - cost;
        ++covered_cells_;
        ++new_cells_;
      } else {
        out.event = StepEvent::kOverlap;
        out.reward = -cfg_.lambda - cost;
        ++extra_visits_;
        ++overlaps_;
      }
      ++visits;
      belief_[map_->index(target)] = Belief::kFree;
    } else {
      out.event = StepEvent::kBump;
      out.reward = -cfg_.bump_penalty.value_or(cfg_.lambda) - cost;
      if (map_->in_bounds(target)) {
        belief_[map_->index(target)] = Belief::kObstacle;
      }
      ++bumps_;
    }
  }

  sense();
  ++steps_;
  total_reward_ += out.reward;
  record_report_point();
  out.done = done();
  return out;
}

Observation CoverageEnv::observe() const {
  Observation obs;
  obs.height = map_->height();
  obs.width = map_->width();
  obs.covered.resize(visits_.size());
  for (size_t i = 0; i < visits_.size(); ++i) obs.covered[i] = visits_[i] > 0;
  obs.belief = belief_;
  obs.pose = pose_;
  return obs;
}

}  // namespace covrl
