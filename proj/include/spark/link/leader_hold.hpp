#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>

#include "spark/kinematics.hpp"
#include "spark/link/protocol.hpp"

namespace spark::link {

struct HoldOutput {
  JointVector targets = JointVector::Zero();
  double gripper = 1.0;
  bool enabled = true;
  bool stale = false;    // no leader state within the timeout
  bool holding = false;  // targets frozen at the follower pose
};

/// Zero-order hold bridging the 30 Hz leader stream to the control tick.
///
/// Holds the most recent leader joints. Targets freeze at the follower pose
/// seen on entry whenever there is no usable leader state: the stream is
/// stale, the pedal is up (DISABLE), or nothing has arrived yet.
class LeaderHold {
 public:
  explicit LeaderHold(std::uint64_t stale_timeout_us = 250'000) : stale_timeout_us_(stale_timeout_us) {}

  void on_message(const LinkMessage& msg, std::uint64_t now_us) {
    switch (msg.kind) {
      case MessageKind::LeaderState: {
        const auto& p = std::get<LeaderPayload>(msg.payload);
        JointVector q;
        for (std::size_t i = 0; i < 6; ++i) q(static_cast<Eigen::Index>(i)) = p.q[i];
        latest_ = q;
        latest_gripper_ = static_cast<double>(p.gripper);
        last_rx_us_ = now_us;
        break;
      }
      case MessageKind::Enable: enabled_ = true; break;
      case MessageKind::Disable: enabled_ = false; break;
      default: break;
    }
  }

  HoldOutput query(std::uint64_t now_us, const JointVector& follower_q, double follower_gripper) {
    HoldOutput out;
    out.enabled = enabled_;
    out.stale = latest_.has_value() && now_us > last_rx_us_ + stale_timeout_us_;
    const bool hold = !enabled_ || !latest_ || out.stale;
    if (hold) {
      if (!frozen_) {
        frozen_ = follower_q;
        frozen_gripper_ = follower_gripper;
      }
      out.targets = *frozen_;
      out.gripper = frozen_gripper_;
      out.holding = true;
      return out;
    }
    frozen_.reset();
    out.targets = unwrap_near(*latest_, follower_q);
    out.gripper = latest_gripper_;
    return out;
  }

  /// Leader angles arrive wrapped; pick the 2*pi branch nearest the follower.
  static JointVector unwrap_near(const JointVector& leader, const JointVector& follower) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    JointVector out = leader;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      const double diff = out(i) - follower(i);
      if (std::abs(diff) > std::numbers::pi) out(i) -= two_pi * std::round(diff / two_pi);
    }
    return out;
  }

  bool enabled() const { return enabled_; }
  bool has_leader() const { return latest_.has_value(); }

 private:
  std::uint64_t stale_timeout_us_;
  std::optional<JointVector> latest_;
  double latest_gripper_ = 1.0;
  std::uint64_t last_rx_us_ = 0;
  bool enabled_ = true;
  std::optional<JointVector> frozen_;
  double frozen_gripper_ = 1.0;
};

}  // namespace spark::link
