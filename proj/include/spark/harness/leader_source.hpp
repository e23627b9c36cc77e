#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spark/link/channel.hpp"
#include "spark/sim_world.hpp"

namespace spark::harness {

struct LeaderSample {
  JointVector q = JointVector::Zero();
  double gripper = 1.0;
  bool operator==(const LeaderSample&) const = default;
};

struct Waypoint {
  double t = 0.0;
  JointVector q = JointVector::Zero();
  double gripper = 1.0;
  bool operator==(const Waypoint&) const = default;
};

/// Piecewise-linear joint-space trajectory. Holds the end points outside
/// its time span.
class Script {
 public:
  Script() = default;
  explicit Script(std::vector<Waypoint> wps) : wps_(std::move(wps)) { validate(); }

  const std::vector<Waypoint>& waypoints() const { return wps_; }
  bool empty() const { return wps_.empty(); }

  void validate() const {
    for (std::size_t i = 0; i < wps_.size(); ++i) {
      if (!std::isfinite(wps_[i].t) || !wps_[i].q.allFinite() || !std::isfinite(wps_[i].gripper)) {
        throw std::invalid_argument("script: non-finite waypoint");
      }
      if (i > 0 && !(wps_[i].t > wps_[i - 1].t)) throw std::invalid_argument("script: waypoint times must increase");
    }
  }

  LeaderSample sample(double t) const {
    if (wps_.empty()) throw std::logic_error("script: no waypoints");
    if (t <= wps_.front().t) return {wps_.front().q, wps_.front().gripper};
    if (t >= wps_.back().t) return {wps_.back().q, wps_.back().gripper};
    const auto hi = std::upper_bound(wps_.begin(), wps_.end(), t, [](double x, const Waypoint& w) { return x < w.t; });
    const Waypoint& b = *hi;
    const Waypoint& a = *(hi - 1);
    const double u = (t - a.t) / (b.t - a.t);
    return {a.q + (b.q - a.q) * u, a.gripper + (b.gripper - a.gripper) * u};
  }

  /// Copy with every joint of every waypoint nudged by U(-amp, amp).
  Script perturbed(std::mt19937_64& rng, double amp) const {
    std::vector<Waypoint> out = wps_;
    for (Waypoint& w : out) {
      for (Eigen::Index j = 0; j < 6; ++j) w.q(j) += amp * (2.0 * link::unit_uniform(rng) - 1.0);
    }
    return Script(std::move(out));
  }

 private:
  std::vector<Waypoint> wps_;
};

inline nlohmann::json script_to_json(const Script& s) {
  nlohmann::json a = nlohmann::json::array();
  for (const Waypoint& w : s.waypoints()) a.push_back({{"t", w.t}, {"q", spark::detail::vec_json(w.q)}, {"g", w.gripper}});
  return a;
}

inline Script script_from_json(const nlohmann::json& j) {
  std::vector<Waypoint> wps;
  for (const auto& e : j) wps.push_back({e.at("t").get<double>(), spark::detail::json_vec<6>(e.at("q"), "waypoint.q"), e.value("g", 1.0)});
  return Script(std::move(wps));
}

/// Where leader joint states come from. `sample` returns nothing for an arm
/// that has no leader (its follower then holds position).
class LeaderSource {
 public:
  virtual ~LeaderSource() = default;
  virtual std::optional<LeaderSample> sample(std::size_t arm, double t) = 0;
};

class ScriptedLeader final : public LeaderSource {
 public:
  explicit ScriptedLeader(std::array<Script, kArmCount> scripts) : scripts_(std::move(scripts)) {}

  std::optional<LeaderSample> sample(std::size_t arm, double t) override {
    if (scripts_.at(arm).empty()) return std::nullopt;
    return scripts_[arm].sample(t);
  }

 private:
  std::array<Script, kArmCount> scripts_;
};

struct ReplayEntry {
  double t = 0.0;
  std::size_t arm = 0;
  LeaderSample state;
};

/// Recorded leader stream, one `{t, arm, q:[6], g}` object per line.
/// Sampling is zero-order: the newest entry at or before `t`.
class ReplayLeader final : public LeaderSource {
 public:
  explicit ReplayLeader(const std::vector<ReplayEntry>& entries) {
    for (const ReplayEntry& e : entries) {
      if (e.arm >= kArmCount) throw std::invalid_argument("replay: bad arm id");
      auto& track = tracks_[e.arm];
      if (!track.empty() && !(e.t > track.back().t)) throw std::invalid_argument("replay: times must increase per arm");
      track.push_back(e);
    }
  }

  static std::vector<ReplayEntry> parse(std::istream& in) {
    std::vector<ReplayEntry> out;
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("t").get<double>(), j.at("arm").get<std::size_t>(),
                     {spark::detail::json_vec<6>(j.at("q"), "replay.q"), j.value("g", 1.0)}});
    }
    return out;
  }

  static ReplayLeader load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("replay: cannot open " + path);
    return ReplayLeader(parse(in));
  }

  static std::string format(const ReplayEntry& e) {
    return nlohmann::json{{"t", e.t}, {"arm", e.arm}, {"q", spark::detail::vec_json(e.state.q)}, {"g", e.state.gripper}}.dump();
  }

  std::optional<LeaderSample> sample(std::size_t arm, double t) override {
    const auto& track = tracks_.at(arm);
    const auto it = std::upper_bound(track.begin(), track.end(), t, [](double x, const ReplayEntry& e) { return x < e.t; });
    if (it == track.begin()) return std::nullopt;
    return (it - 1)->state;
  }

 private:
  std::array<std::vector<ReplayEntry>, kArmCount> tracks_;
};

/// Latest pose pushed by a live operator connection. Thread-safe.
class LiveLeader final : public LeaderSource {
 public:
  void set(std::size_t arm, const LeaderSample& s) {
    std::lock_guard lock(mu_);
    latest_.at(arm) = s;
  }
  void clear() {
    std::lock_guard lock(mu_);
    latest_ = {};
  }

  std::optional<LeaderSample> sample(std::size_t arm, double) override {
    std::lock_guard lock(mu_);
    return latest_.at(arm);
  }

 private:
  std::mutex mu_;
  std::array<std::optional<LeaderSample>, kArmCount> latest_{};
};

}  // namespace spark::harness
