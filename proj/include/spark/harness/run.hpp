#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "spark/harness/session.hpp"

namespace spark::harness {

struct RunResult {
  Outcome outcome = Outcome::Timeout;
  std::optional<double> completion_time;  // active (non-e-stopped) seconds
  int estop_count = 0;
  double peak_force = 0.0;
  std::uint64_t ticks = 0;
  SessionLog log;
};

class ConfigMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json summary_json(const RunResult& r, const Session& s) {
  return {{"type", "summary"},
          {"outcome", outcome_name(r.outcome)},
          {"completion_time", r.completion_time ? nlohmann::json(*r.completion_time) : nlohmann::json(nullptr)},
          {"estop_count", r.estop_count},
          {"peak_force", r.peak_force},
          {"ticks", r.ticks},
          {"active_time", s.active_time()},
          {"sim_time", static_cast<double>(s.tick()) * s.options().dt}};
}

/// Runs until the success predicate holds or the task timer reaches the
/// scenario timeout. The timer only advances while no arm is e-stopped; a
/// wall-clock cap of four timeouts bounds runs that never reset.
inline RunResult run_scenario(const RunOptions& opts, LeaderSource* leader = nullptr,
                              std::optional<std::uint64_t> max_ticks = std::nullopt) {
  Session s(opts, leader);
  const RunOptions& o = s.options();
  RunResult r;
  const nlohmann::json config = options_to_json(o);
  r.log.meta = {{"type", "meta"},
                {"version", kLogVersion},
                {"scenario", o.scenario.name},
                {"variant", variant_name(o.variant.mode)},
                {"seed", o.seed},
                {"channel", o.variant.channel_name},
                {"config_hash", config_hash(config)},
                {"config", config}};

  const auto timeout_ticks = static_cast<std::uint64_t>(std::llround(o.scenario.timeout_s / o.dt));
  const std::uint64_t cap_ticks = 4 * timeout_ticks;
  for (;;) {
    if (o.scenario.success(s.world())) {
      r.outcome = Outcome::Success;
      r.completion_time = s.active_time();
      break;
    }
    if (s.active_ticks() >= timeout_ticks || s.tick() >= cap_ticks) {
      r.outcome = Outcome::Timeout;
      break;
    }
    if (max_ticks && s.tick() >= *max_ticks) {
      r.outcome = Outcome::Truncated;
      break;
    }
    r.log.append(s.step());
  }
  r.estop_count = s.estop_count();
  r.peak_force = s.peak_force();
  r.ticks = s.tick();
  if (r.outcome != Outcome::Truncated) r.log.summary = summary_json(r, s);
  return r;
}

/// Leader stream recorded in a session log, as replay entries.
inline std::vector<ReplayEntry> leader_entries(const SessionLog& log) {
  std::vector<ReplayEntry> out;
  for (const auto& rec : log.ticks()) {
    const double t = rec.at("t").get<double>();
    const auto& arms = rec.at("arms");
    for (std::size_t i = 0; i < arms.size(); ++i) {
      const auto& l = arms[i].at("leader");
      if (l.is_null()) continue;
      out.push_back({t, i, {spark::detail::json_vec<6>(l.at("q"), "leader.q"), l.at("g").get<double>()}});
    }
  }
  return out;
}

/// Re-simulates a recorded session from its own leader stream. A complete
/// log reruns to completion; a truncated one reruns its prefix.
inline RunResult replay(const SessionLog& log, std::optional<std::string> expected_hash = std::nullopt) {
  const auto& meta = log.meta;
  if (!meta.contains("config") || !meta.contains("config_hash")) throw ConfigMismatch("log has no config");
  const std::string recorded = meta.at("config_hash").get<std::string>();
  if (config_hash(meta.at("config")) != recorded) throw ConfigMismatch("config does not match its recorded hash");
  if (expected_hash && *expected_hash != recorded) {
    throw ConfigMismatch("log config " + recorded + " differs from expected " + *expected_hash);
  }
  const RunOptions opts = options_from_json(meta.at("config"), meta.at("seed").get<std::uint64_t>());
  ReplayLeader leader(leader_entries(log));
  std::optional<std::uint64_t> limit;
  if (!log.summary) limit = log.ticks().size();
  return run_scenario(opts, &leader, limit);
}

}  // namespace spark::harness
