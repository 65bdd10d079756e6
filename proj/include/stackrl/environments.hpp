#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "stackrl/errors.hpp"
#include "stackrl/numcore.hpp"
#include "stackrl/rng.hpp"

namespace stackrl {

struct EnvDescriptor {
  std::string name;
  int obs_dim_pro = 0;
  int obs_dim_adv = 0;
  int n_actions_pro = 0;
  int n_actions_adv = 0;
  int max_steps = 1;
  double gamma = 1.0;
};

struct StepInfo {
  bool collision = false;
  bool merged = false;
  bool crashed = false;
  bool landed = false;
  bool ramp_end = false;
};

struct TwoPlayerStepResult {
  Vec next_obs_pro;
  Vec next_obs_adv;
  double reward_pro = 0.0;
  bool done = false;
  StepInfo info;
};

// Two-player stochastic game: the protagonist and the adversary act
// simultaneously each step; only the protagonist's reward is emitted, the
// adversary's objective is composed downstream.
class TwoPlayerEnv {
 public:
  virtual ~TwoPlayerEnv() = default;
  virtual const EnvDescriptor& descriptor() const = 0;
  virtual std::pair<Vec, Vec> reset(std::uint64_t seed) = 0;
  virtual TwoPlayerStepResult step(int action_pro, int action_adv) = 0;
  virtual std::unique_ptr<TwoPlayerEnv> clone() const = 0;
  // (lane-or-x, position-or-y, vx, vy) for trajectory CSV dumps.
  virtual std::array<double, 4> dump_state() const { return {0, 0, 0, 0}; }

 protected:
  void check_actions(int action_pro, int action_adv, bool done) const {
    const auto& d = descriptor();
    if (done) throw InputError(d.name + ": step() called after episode end");
    if (action_pro < 0 || action_pro >= d.n_actions_pro)
      throw InputError(d.name + ": protagonist action out of range");
    if (action_adv < 0 || action_adv >= d.n_actions_adv)
      throw InputError(d.name + ": adversary action out of range");
  }
};

// One-shot matrix game: protagonist picks a row, adversary a column.
class MatrixGame final : public TwoPlayerEnv {
 public:
  explicit MatrixGame(Mat payoff) : payoff_(std::move(payoff)) {
    desc_ = {"matrix_game",
             0,
             0,
             static_cast<int>(payoff_.rows()),
             static_cast<int>(payoff_.cols()),
             1,
             1.0};
  }

  const EnvDescriptor& descriptor() const override { return desc_; }
  const Mat& payoff() const { return payoff_; }

  std::pair<Vec, Vec> reset(std::uint64_t) override {
    done_ = false;
    return {Vec(0), Vec(0)};
  }

  TwoPlayerStepResult step(int action_pro, int action_adv) override {
    check_actions(action_pro, action_adv, done_);
    done_ = true;
    return {Vec(0), Vec(0), payoff_(action_pro, action_adv), true, {}};
  }

  std::unique_ptr<TwoPlayerEnv> clone() const override {
    return std::make_unique<MatrixGame>(payoff_);
  }

 private:
  Mat payoff_;
  EnvDescriptor desc_;
  bool done_ = true;
};

// Discrete-time kinematic merge task. Three lanes (0 = ramp, 1 = middle,
// 2 = left); the ego car starts on the ramp, which ends at a fixed
// longitudinal position, and succeeds by reaching the goal position on the
// middle lane before the horizon. The adversary-controlled yellow car drives
// the middle lane with acceleration proportional to the chosen aggressiveness.
// The yellow car spawns ahead of or behind the ego (50/50) at low speed: at
// aggressiveness 0 it rolls on at constant velocity, while sustained
// aggressiveness lets it outrun the ego's top speed and ram it from behind
// in the middle lane. Lane changes shed speed, so evading a charging yellow
// costs time against the goal/horizon budget.
class HighwayMerge final : public TwoPlayerEnv {
 public:
  static constexpr double kRampLength = 20.0;
  static constexpr double kGoalPos = 70.0;
  static constexpr double kCarLength = 1.0;
  static constexpr double kEgoAccel = 0.5;
  static constexpr double kEgoVMin = 0.45;
  static constexpr double kEgoVMax = 2.0;
  static constexpr double kLaneChangeDrag = 0.5;
  static constexpr double kYellowV0 = 0.8;
  static constexpr double kYellowVMax = 2.3;
  static constexpr double kAggressivenessGain = 0.5;  // velocity-units/step^2 per level
  static constexpr double kStepCost = 0.1;
  static constexpr double kTimeoutPenalty = 9.0;
  static constexpr int kMaxSteps = 60;
  // Crashes (collision, ramp end) forfeit the unspent horizon cost, so every
  // crashing episode totals exactly -10 - 0.1*(kMaxSteps - 1); this is the
  // minimum achievable episode return. Running out the clock is a milder
  // failure worth kTimeoutReturn in total.
  static constexpr double kFailureReturn = -10.0 - kStepCost * (kMaxSteps - 1);
  static constexpr double kTimeoutReturn = -kTimeoutPenalty - kStepCost * (kMaxSteps - 1);

  enum EgoAction { kKeep = 0, kAccelerate = 1, kDecelerate = 2, kLaneLeft = 3, kLaneRight = 4 };

  HighwayMerge() {
    desc_ = {"highway_merge", 6, 7, 5, 11, kMaxSteps, 1.0};
  }

  const EnvDescriptor& descriptor() const override { return desc_; }

  std::pair<Vec, Vec> reset(std::uint64_t seed) override {
    Rng rng = Rng::substream(seed, 0x48574d);
    ego_lane_ = 0;
    ego_pos_ = 0.0;
    ego_v_ = 1.0;
    const double gap = rng.uniform(2.0, 6.0);
    yellow_pos_ = ego_pos_ + (rng.next_u64() % 2 == 0 ? gap : -gap);
    yellow_v_ = kYellowV0;
    t_ = 0;
    done_ = false;
    return {obs_pro(), obs_adv()};
  }

  TwoPlayerStepResult step(int action_pro, int action_adv) override {
    check_actions(action_pro, action_adv, done_);
    switch (action_pro) {
      case kAccelerate:
        ego_v_ = std::min(ego_v_ + kEgoAccel, kEgoVMax);
        break;
      case kDecelerate:
        ego_v_ = std::max(ego_v_ - kEgoAccel, kEgoVMin);
        break;
      case kLaneLeft:
        if (ego_lane_ < 2) {
          ++ego_lane_;
          ego_v_ = std::max(ego_v_ - kLaneChangeDrag, kEgoVMin);
        }
        break;
      case kLaneRight:
        // The ramp cannot be re-entered once left.
        if (ego_lane_ == 2) {
          --ego_lane_;
          ego_v_ = std::max(ego_v_ - kLaneChangeDrag, kEgoVMin);
        }
        break;
      default:
        break;
    }
    yellow_v_ = std::clamp(
        yellow_v_ + kAggressivenessGain * static_cast<double>(action_adv), 0.0, kYellowVMax);
    ego_pos_ += ego_v_;
    yellow_pos_ += yellow_v_;
    ++t_;

    TwoPlayerStepResult out;
    const bool collision =
        ego_lane_ == 1 && std::abs(ego_pos_ - yellow_pos_) < kCarLength;
    const bool ramp_end = ego_lane_ == 0 && ego_pos_ >= kRampLength;
    const bool merged = !collision && ego_lane_ == 1 && ego_pos_ >= kGoalPos;
    const bool timeout = t_ >= kMaxSteps;
    if (collision || ramp_end) {
      // A crash forfeits the rest of the horizon's time penalty, so every
      // crashing episode totals the same return regardless of when it ends.
      out.reward_pro = -10.0 - kStepCost * static_cast<double>(kMaxSteps - t_);
      out.done = true;
      out.info.collision = collision;
      out.info.ramp_end = ramp_end;
      out.info.crashed = true;
    } else if (merged) {
      out.reward_pro = 10.0;
      out.done = true;
      out.info.merged = true;
    } else if (timeout) {
      out.reward_pro = -kTimeoutPenalty;
      out.done = true;
    } else {
      out.reward_pro = -kStepCost;
      out.done = false;
    }
    done_ = out.done;
    out.next_obs_pro = obs_pro();
    out.next_obs_adv = obs_adv();
    return out;
  }

  std::unique_ptr<TwoPlayerEnv> clone() const override {
    return std::make_unique<HighwayMerge>(*this);
  }

  std::array<double, 4> dump_state() const override {
    return {static_cast<double>(ego_lane_), ego_pos_, ego_v_, yellow_v_};
  }

  double yellow_velocity() const { return yellow_v_; }
  double yellow_position() const { return yellow_pos_; }
  int ego_lane() const { return ego_lane_; }
  double ego_position() const { return ego_pos_; }
  double ego_velocity() const { return ego_v_; }

 private:
  Vec obs_pro() const {
    Vec o(6);
    o << static_cast<double>(ego_lane_) / 2.0, ego_pos_ / kGoalPos, ego_v_ / kEgoVMax,
        (yellow_pos_ - ego_pos_) / 10.0, yellow_v_ / kYellowVMax,
        (kRampLength - ego_pos_) / kRampLength;
    return o;
  }
  Vec obs_adv() const {
    Vec o(7);
    o.head(6) = obs_pro();
    o[6] = static_cast<double>(t_) / kMaxSteps;
    return o;
  }

  EnvDescriptor desc_;
  int ego_lane_ = 0;
  double ego_pos_ = 0.0, ego_v_ = 1.0;
  double yellow_pos_ = 0.0, yellow_v_ = kYellowV0;
  int t_ = 0;
  bool done_ = true;
};

// Command buffer for adversary-chosen action delays: a command issued at
// step t with delay d becomes executable at t + d; each step executes the
// most recently issued command whose executable time has arrived, or the
// no-op action when none has.
class DelayBuffer {
 public:
  static constexpr int kNoopAction = 0;

  void clear() { entries_.clear(); }

  // Records the command issued at step t and returns the action to execute
  // at step t under the buffered-delay rule.
  int push_and_execute(int t, int commanded_action, int delay) {
    if (delay < 0) throw InputError("DelayBuffer: negative delay");
    entries_.push_back({t, t + delay, commanded_action});
    // Most recently issued wins among executable commands.
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
      if (it->executable_at <= t) return it->action;
    return kNoopAction;
  }

 private:
  struct Entry {
    int issued_at;
    int executable_at;
    int action;
  };
  std::vector<Entry> entries_;
};

// 2-D point-mass lander with adversary-chosen actuation delay in {0..10}.
// Protagonist actions: 0 = all engines off, 1 = left engine (pushes right),
// 2 = right engine (pushes left), 3 = main engine.
class DelayedPointLander final : public TwoPlayerEnv {
 public:
  static constexpr double kGravity = 1.0;
  static constexpr double kDt = 0.1;
  static constexpr double kLateralThrust = 0.6;
  static constexpr double kMainThrust = 1.4;
  static constexpr double kMainEngineCost = 0.3;
  static constexpr double kStartAltitude = 3.0;
  static constexpr double kPadHalfWidth = 0.2;
  static constexpr double kSoftSpeed = 0.1;
  static constexpr double kBoundX = 3.0;
  static constexpr int kMaxSteps = 300;
  static constexpr double kDistanceShaping = 50.0;
  static constexpr double kSpeedShaping = 25.0;

  DelayedPointLander() { desc_ = {"delayed_lander", 4, 5, 4, 11, kMaxSteps, 1.0}; }

  const EnvDescriptor& descriptor() const override { return desc_; }

  std::pair<Vec, Vec> reset(std::uint64_t seed) override {
    Rng rng = Rng::substream(seed, 0x4c414e44);
    x_ = rng.uniform(-0.4, 0.4);
    y_ = kStartAltitude;
    vx_ = 0.0;
    vy_ = 0.0;
    t_ = 0;
    done_ = false;
    buffer_.clear();
    return {obs_pro(), obs_adv()};
  }

  TwoPlayerStepResult step(int action_pro, int action_adv) override {
    check_actions(action_pro, action_adv, done_);
    const int executed = buffer_.push_and_execute(t_, action_pro, action_adv);
    const double phi_before = potential();
    double ax = 0.0, ay = 0.0, engine_cost = 0.0;
    switch (executed) {
      case 1: ax = kLateralThrust; break;
      case 2: ax = -kLateralThrust; break;
      case 3:
        ay = kMainThrust;
        engine_cost = kMainEngineCost;
        break;
      default: break;
    }
    vx_ += ax * kDt;
    vy_ += (ay - kGravity) * kDt;
    x_ += vx_ * kDt;
    y_ += vy_ * kDt;
    ++t_;

    TwoPlayerStepResult out;
    out.reward_pro = potential() - phi_before - engine_cost;
    if (y_ <= 0.0) {
      const bool soft = std::abs(vx_) <= kSoftSpeed && std::abs(vy_) <= kSoftSpeed &&
                        std::abs(x_) <= kPadHalfWidth;
      out.reward_pro += soft ? 100.0 : -100.0;
      out.info.landed = soft;
      out.info.crashed = !soft;
      out.done = true;
    } else if (std::abs(x_) > kBoundX) {
      out.reward_pro += -100.0;
      out.info.crashed = true;
      out.done = true;
    } else {
      out.done = t_ >= kMaxSteps;
    }
    done_ = out.done;
    out.next_obs_pro = obs_pro();
    out.next_obs_adv = obs_adv();
    return out;
  }

  std::unique_ptr<TwoPlayerEnv> clone() const override {
    return std::make_unique<DelayedPointLander>(*this);
  }

  std::array<double, 4> dump_state() const override { return {x_, y_, vx_, vy_}; }

  double x() const { return x_; }
  double y() const { return y_; }
  double vx() const { return vx_; }
  double vy() const { return vy_; }

 private:
  double potential() const {
    const double dist = std::sqrt(x_ * x_ + y_ * y_);
    const double speed = std::sqrt(vx_ * vx_ + vy_ * vy_);
    return -kDistanceShaping * dist - kSpeedShaping * speed;
  }

  Vec obs_pro() const {
    Vec o(4);
    o << x_ / kBoundX, y_ / kStartAltitude, vx_, vy_;
    return o;
  }
  Vec obs_adv() const {
    Vec o(5);
    o.head(4) = obs_pro();
    o[4] = static_cast<double>(t_) / kMaxSteps;
    return o;
  }

  EnvDescriptor desc_;
  DelayBuffer buffer_;
  double x_ = 0.0, y_ = 0.0, vx_ = 0.0, vy_ = 0.0;
  int t_ = 0;
  bool done_ = true;
};

inline std::unique_ptr<TwoPlayerEnv> make_env(const std::string& name, const Mat* payoff = nullptr) {
  if (name == "highway_merge") return std::make_unique<HighwayMerge>();
  if (name == "delayed_lander") return std::make_unique<DelayedPointLander>();
  if (name == "matrix_game") {
    if (!payoff) throw ConfigError("matrix_game requires a payoff matrix");
    return std::make_unique<MatrixGame>(*payoff);
  }
  throw ConfigError("unknown environment: " + name);
}

}  // namespace stackrl
