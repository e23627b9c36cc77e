#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "spark/kinematics.hpp"

namespace spark {

/// How the observed torque is normalized into the mode ratio.
enum class ModeRatioVariant {
  Main,           // max|tau| / tau_max
  Supplementary,  // (max|tau| - tau_min) / (tau_max - tau_min)
};

struct ControllerGains {
  double target_distance_a = 0.05;  // rad/(N*m)
  double step_size_s = 5.0;
  double tau_max = 15.0;  // N*m
  double tau_min = 0.0;   // N*m, supplementary variant only
  int buffer_size = 1;
  bool ik_conditioning_enabled = false;
  double spark_weight = 1.0;
  ModeRatioVariant mode_ratio_variant = ModeRatioVariant::Main;

  void validate() const {
    if (!(tau_max > 0.0)) throw std::invalid_argument("gains: tau_max must be > 0");
    if (buffer_size < 1) throw std::invalid_argument("gains: buffer_size must be >= 1");
    if (!(step_size_s >= 0.0)) throw std::invalid_argument("gains: s must be >= 0");
    if (!(spark_weight > 0.0)) throw std::invalid_argument("gains: spark_weight must be > 0");
    if (!std::isfinite(target_distance_a)) throw std::invalid_argument("gains: a must be finite");
    if (mode_ratio_variant == ModeRatioVariant::Supplementary && !(tau_max > tau_min)) {
      throw std::invalid_argument("gains: tau_max must exceed tau_min");
    }
  }
};

inline nlohmann::json gains_to_json(const ControllerGains& g) {
  return {{"a", g.target_distance_a},
          {"s", g.step_size_s},
          {"tau_max", g.tau_max},
          {"tau_min", g.tau_min},
          {"buffer_size", g.buffer_size},
          {"spark_weight", g.spark_weight},
          {"ik_conditioning", g.ik_conditioning_enabled},
          {"mode_ratio_variant", g.mode_ratio_variant == ModeRatioVariant::Main ? "main" : "supplementary"}};
}

/// Missing keys keep the values already in `base`.
inline ControllerGains gains_from_json(const nlohmann::json& j, ControllerGains base = {}) {
  base.target_distance_a = j.value("a", base.target_distance_a);
  base.step_size_s = j.value("s", base.step_size_s);
  base.tau_max = j.value("tau_max", base.tau_max);
  base.tau_min = j.value("tau_min", base.tau_min);
  base.buffer_size = j.value("buffer_size", base.buffer_size);
  base.spark_weight = j.value("spark_weight", base.spark_weight);
  base.ik_conditioning_enabled = j.value("ik_conditioning", base.ik_conditioning_enabled);
  if (j.contains("mode_ratio_variant")) {
    const auto v = j.at("mode_ratio_variant").get<std::string>();
    if (v == "main") {
      base.mode_ratio_variant = ModeRatioVariant::Main;
    } else if (v == "supplementary") {
      base.mode_ratio_variant = ModeRatioVariant::Supplementary;
    } else {
      throw std::invalid_argument("gains: unknown mode_ratio_variant '" + v + "'");
    }
  }
  base.validate();
  return base;
}

struct ControllerInput {
  JointVector theta = JointVector::Zero();        // follower joints
  JointVector theta_spark = JointVector::Zero();  // leader target
  JointVector tau = JointVector::Zero();          // joint torques, N*m
};

struct LossBreakdown {
  double torque = 0.0;
  double spark = 0.0;
  double ik = 0.0;
};

struct ControllerOutput {
  JointVector joint_speeds = JointVector::Zero();
  double mode_ratio = 0.0;
  double loss_value = 0.0;
  LossBreakdown per_mode_losses;
  bool fault = false;  // non-finite gradient; speeds forced to zero
};

/// Per-joint target pushed away from the sensed torque.
inline JointVector torque_targets(const JointVector& theta, const JointVector& tau, double a) {
  return theta - tau * a;
}

template <typename T>
T torque_loss(const JointArray<T>& theta, const JointVector& targets) {
  T sum(0.0);
  for (std::size_t i = 0; i < kJointCount; ++i) {
    const T e = theta[i] - targets(static_cast<Eigen::Index>(i));
    sum += e * e;
  }
  return sum;
}

inline double torque_loss(const JointVector& theta, const JointVector& targets) {
  return torque_loss(to_array(theta), targets);
}

template <typename T>
T spark_loss(const JointArray<T>& theta, const JointVector& theta_spark, double weight) {
  T sum(0.0);
  for (std::size_t i = 0; i < kJointCount; ++i) {
    const T e = theta[i] - theta_spark(static_cast<Eigen::Index>(i));
    sum += e * e;
  }
  return sum * weight;
}

inline double spark_loss(const JointVector& theta, const JointVector& theta_spark, double weight = 1.0) {
  return spark_loss(to_array(theta), theta_spark, weight);
}

inline constexpr double kIkTargetHeight = 0.6;
inline constexpr double kIkWeight = 100.0;

/// Penalizes end-effector height (base-frame z) away from 0.6 m.
template <typename T>
T ik_conditioning_loss(const DHTable& table, const JointArray<T>& theta) {
  const auto fk = forward_kinematics_generic(table, theta);
  const T e = fk.p[2] - kIkTargetHeight;
  return e * e * kIkWeight;
}

inline double ik_conditioning_loss(const DHTable& table, const JointVector& theta) {
  return ik_conditioning_loss(table, to_array(theta));
}

inline double max_abs(const JointVector& v) { return v.cwiseAbs().maxCoeff(); }

/// Blend factor between mirroring (0) and torque relief (1), clamped to [0, 1].
inline double mode_ratio(const JointVector& tau, const ControllerGains& gains) {
  const double peak = max_abs(tau);
  double m = 0.0;
  if (gains.mode_ratio_variant == ModeRatioVariant::Main) {
    m = peak / gains.tau_max;
  } else {
    m = (peak - gains.tau_min) / (gains.tau_max - gains.tau_min);
  }
  if (!(m > 0.0)) return 0.0;  // also maps NaN to 0
  return std::min(m, 1.0);
}

inline double mode_ratio(const JointVector& tau, double tau_max) {
  ControllerGains g;
  g.tau_max = tau_max;
  return mode_ratio(tau, g);
}

/// The blended loss as a function of theta with the torque targets and the
/// mode ratio held fixed. Targets are constants here: no derivative flows
/// through the theta used to build them.
struct CombinedLoss {
  JointVector targets;
  JointVector theta_spark;
  double mode_ratio = 0.0;
  double spark_weight = 1.0;
  bool ik_enabled = false;

  template <typename T>
  T operator()(const DHTable& table, const JointArray<T>& theta) const {
    T loss = torque_loss(theta, targets) * mode_ratio + spark_loss(theta, theta_spark, spark_weight) * (1.0 - mode_ratio);
    if (ik_enabled) loss += ik_conditioning_loss(table, theta);
    return loss;
  }

  LossBreakdown breakdown(const DHTable& table, const JointVector& theta) const {
    const auto q = to_array(theta);
    return {torque_loss(q, targets), spark_loss(q, theta_spark, spark_weight),
            ik_enabled ? ik_conditioning_loss(table, q) : 0.0};
  }
};

inline CombinedLoss make_combined_loss(const ControllerInput& in, const ControllerGains& gains) {
  return {torque_targets(in.theta, in.tau, gains.target_distance_a), in.theta_spark, mode_ratio(in.tau, gains),
          gains.spark_weight, gains.ik_conditioning_enabled};
}

inline double combined_loss(const ControllerInput& in, const ControllerGains& gains, const DHTable& table) {
  return make_combined_loss(in, gains)(table, to_array(in.theta));
}

/// d(combined_loss)/d(theta), nullopt if non-finite.
inline std::optional<JointVector> combined_loss_gradient(const ControllerInput& in, const ControllerGains& gains,
                                                         const DHTable& table) {
  return loss_gradient(table, in.theta, make_combined_loss(in, gains));
}

/// Gradient-as-velocity joint controller for one arm.
///
/// Each step differentiates the blended loss at the current joints, pushes
/// the gradient into a ring of `buffer_size` entries, and commands
/// `-s * mean(buffer)` as joint speeds. Not thread-safe; use one per arm.
class ForceController {
 public:
  explicit ForceController(ControllerGains gains = {}, DHTable table = ur5e_table())
      : gains_(gains), table_(std::move(table)) {
    gains_.validate();
  }

  const ControllerGains& gains() const { return gains_; }
  const DHTable& table() const { return table_; }

  ControllerOutput step(const ControllerInput& in) {
    ControllerOutput out;
    const CombinedLoss loss = make_combined_loss(in, gains_);
    out.mode_ratio = loss.mode_ratio;
    out.per_mode_losses = loss.breakdown(table_, in.theta);
    out.loss_value = loss(table_, to_array(in.theta));

    const auto grad = loss_gradient(table_, in.theta, loss);
    if (!grad || !std::isfinite(out.loss_value)) {
      out.fault = true;
      return out;
    }
    buffer_.push_back(*grad);
    while (buffer_.size() > static_cast<std::size_t>(gains_.buffer_size)) buffer_.pop_front();

    JointVector mean = JointVector::Zero();
    for (const auto& g : buffer_) mean += g;
    mean /= static_cast<double>(buffer_.size());
    out.joint_speeds = -mean * gains_.step_size_s;
    return out;
  }

  void reset() { buffer_.clear(); }
  std::size_t buffered() const { return buffer_.size(); }

 private:
  ControllerGains gains_;
  DHTable table_;
  std::deque<JointVector> buffer_;
};

/// Pure joint-space mirroring used when the force controller is off:
/// the spark-loss gradient step with the torque mode disabled.
inline JointVector mirror_speeds(const JointVector& theta, const JointVector& theta_spark, double step_size_s) {
  return (theta_spark - theta) * (2.0 * step_size_s);
}

}  // namespace spark
