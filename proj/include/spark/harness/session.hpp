#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spark/force_controller.hpp"
#include "spark/haptics.hpp"
#include "spark/harness/leader_source.hpp"
#include "spark/harness/scenario.hpp"
#include "spark/harness/variant.hpp"
#include "spark/link/channel.hpp"
#include "spark/link/leader_hold.hpp"
#include "spark/link/protocol.hpp"
#include "spark/sim_world.hpp"

namespace spark::harness {

inline constexpr int kLogVersion = 1;

/// Test hook: trip `arm` at `at_s` and clear it `duration_s` later.
struct ForcedEstop {
  std::size_t arm = 0;
  double at_s = 0.0;
  double duration_s = 0.0;
  bool operator==(const ForcedEstop&) const = default;
};

struct RunOptions {
  Scenario scenario;
  VariantConfig variant;
  std::uint64_t seed = 0;
  double dt = 0.01;
  double perturbation = 1e-3;  // rad, per joint and waypoint
  int encoder_bits = 14;
  std::vector<ForcedEstop> forced_estops;

  void validate() const {
    scenario.validate();
    variant.validate();
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("run: dt must be > 0");
    if (!(perturbation >= 0.0)) throw std::invalid_argument("run: perturbation must be >= 0");
    encoder_step(encoder_bits);
    for (const ForcedEstop& f : forced_estops) {
      if (f.arm >= kArmCount || !(f.at_s >= 0.0) || !(f.duration_s >= 0.0)) {
        throw std::invalid_argument("run: bad forced estop");
      }
    }
  }
};

inline nlohmann::json options_to_json(const RunOptions& o) {
  nlohmann::json forced = nlohmann::json::array();
  for (const ForcedEstop& f : o.forced_estops) forced.push_back({{"arm", f.arm}, {"at", f.at_s}, {"duration", f.duration_s}});
  return {{"scenario", scenario_to_json(o.scenario)},
          {"variant", variant_to_json(o.variant)},
          {"dt", o.dt},
          {"perturbation", o.perturbation},
          {"encoder_bits", o.encoder_bits},
          {"forced_estops", forced}};
}

inline RunOptions options_from_json(const nlohmann::json& j, std::uint64_t seed) {
  RunOptions o;
  o.scenario = scenario_from_json(j.at("scenario"));
  o.variant = variant_from_json(j.at("variant"));
  o.seed = seed;
  o.dt = j.value("dt", o.dt);
  o.perturbation = j.value("perturbation", o.perturbation);
  o.encoder_bits = j.value("encoder_bits", o.encoder_bits);
  for (const auto& f : j.value("forced_estops", nlohmann::json::array())) {
    o.forced_estops.push_back({f.at("arm").get<std::size_t>(), f.at("at").get<double>(), f.at("duration").get<double>()});
  }
  o.validate();
  return o;
}

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Object keys are stored sorted, so the dump is canonical.
inline std::string config_hash(const nlohmann::json& config) { return fnv1a_hex(config.dump()); }

class LogFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// JSON-lines session record. A meta line comes first, then one line per
/// tick; the summary line is appended when the run ends.
class SessionLog {
 public:
  nlohmann::json meta;
  std::optional<nlohmann::json> summary;

  const std::vector<nlohmann::json>& ticks() const { return ticks_; }

  void append(nlohmann::json rec) {
    if (summary) throw std::logic_error("session log: append after summary");
    if (rec.at("tick").get<std::uint64_t>() != ticks_.size()) throw std::logic_error("session log: tick gap");
    ticks_.push_back(std::move(rec));
  }

  std::string to_jsonl() const {
    std::string out = meta.dump() + "\n";
    for (const auto& t : ticks_) out += t.dump() + "\n";
    if (summary) out += summary->dump() + "\n";
    return out;
  }

  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << to_jsonl();
  }

  /// A trailing partial line (interrupted writer) is dropped; anything else
  /// malformed is an error.
  static SessionLog parse(std::istream& in) {
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) lines.push_back(line);
    }
    SessionLog log;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      nlohmann::json j = nlohmann::json::parse(lines[i], nullptr, false);
      if (j.is_discarded()) {
        if (i + 1 == lines.size() && i > 0) break;
        throw LogFormatError("session log: bad JSON on line " + std::to_string(i + 1));
      }
      const std::string type = j.value("type", "");
      if (i == 0) {
        if (type != "meta") throw LogFormatError("session log: first line must be meta");
        log.meta = std::move(j);
      } else if (type == "tick") {
        try {
          log.append(std::move(j));
        } catch (const std::exception& e) {
          throw LogFormatError(e.what());
        }
      } else if (type == "summary" && !log.summary) {
        log.summary = std::move(j);
      } else {
        throw LogFormatError("session log: unexpected line " + std::to_string(i + 1));
      }
    }
    if (log.meta.is_null()) throw LogFormatError("session log: empty");
    return log;
  }

  static SessionLog load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return parse(in);
  }

  static SessionLog parse_string(const std::string& s) {
    std::istringstream in(s);
    return parse(in);
  }

 private:
  std::vector<nlohmann::json> ticks_;
};

enum class Outcome { Success, Timeout, Truncated };

inline std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Success: return "success";
    case Outcome::Timeout: return "timeout";
    case Outcome::Truncated: return "truncated";
  }
  return "truncated";
}

struct ArmTelemetry {
  std::optional<LeaderSample> leader;
  link::HoldOutput hold;
  JointVector command = JointVector::Zero();
  GloveFrame glove;
  double mode_ratio = 0.0;
  bool controller_fault = false;
};

/// One teleoperation session wiring the leader through the link into the
/// per-arm controllers and the world. `step` advances one tick.
///
/// Without an explicit source the scenario scripts drive the leader, each
/// waypoint jittered from the seed.
class Session {
 public:
  explicit Session(RunOptions opts, LeaderSource* leader = nullptr)
      : opts_(std::move(opts)), external_(leader), world_(init_world()) {
    auto down = opts_.variant.channel;
    down.seed = opts_.seed;
    auto up = opts_.variant.channel;
    up.seed = opts_.seed ^ 0x9e3779b97f4a7c15ULL;
    downlink_ = link::SimChannel(down);
    uplink_ = link::SimChannel(up);
    for (std::size_t i = 0; i < kArmCount; ++i) controllers_[i] = ForceController(opts_.variant.gains, world_.config().table);
    forced_state_.assign(opts_.forced_estops.size(), 0);
  }

  const RunOptions& options() const { return opts_; }
  const World& world() const { return world_; }
  const std::array<ArmTelemetry, kArmCount>& telemetry() const { return telemetry_; }
  std::uint64_t tick() const { return tick_; }
  std::uint64_t active_ticks() const { return active_ticks_; }
  double active_time() const { return static_cast<double>(active_ticks_) * opts_.dt; }
  double peak_force() const { return peak_force_; }
  int estop_count() const {
    int n = 0;
    for (std::size_t i = 0; i < kArmCount; ++i) n += world_.estop(i).count;
    return n;
  }
  bool any_tripped() const {
    for (std::size_t i = 0; i < kArmCount; ++i) {
      if (world_.estop(i).tripped) return true;
    }
    return false;
  }
  const link::ChannelStats& downlink_stats() const { return downlink_.stats(); }
  const link::ChannelStats& uplink_stats() const { return uplink_.stats(); }

  /// Operator pedal; delivered over the downlink on the next tick.
  void set_enabled(bool on) {
    for (std::size_t i = 0; i < kArmCount; ++i) queued_.push_back(on ? link::MessageKind::Enable : link::MessageKind::Disable);
  }
  /// Operator reset request, applied at the start of the next tick.
  void request_reset(std::size_t arm) { reset_requests_.at(arm) = true; }

  nlohmann::json step() {
    const double t = static_cast<double>(tick_) * opts_.dt;
    const auto now_us = static_cast<std::uint64_t>(std::llround(t * 1e6));
    nlohmann::json events = nlohmann::json::array();

    apply_resets(t, events);
    send_leader(t, now_us);
    for (const auto& msg : downlink_.poll(now_us)) holds_[msg.arm_id].on_message(msg, now_us);

    std::array<ArmCommand, kArmCount> cmds{};
    for (std::size_t i = 0; i < kArmCount; ++i) {
      ArmTelemetry& tel = telemetry_[i];
      const ArmState& a = world_.arm(i);
      tel.hold = holds_[i].query(now_us, a.q, a.gripper);
      tel.controller_fault = false;
      if (force_control_enabled(opts_.variant.mode)) {
        const ControllerOutput out = controllers_[i].step({a.q, tel.hold.targets, last_tau_[i]});
        tel.command = out.joint_speeds;
        tel.mode_ratio = out.mode_ratio;
        tel.controller_fault = out.fault;
      } else {
        tel.command = mirror_speeds(a.q, tel.hold.targets, opts_.variant.gains.step_size_s);
        tel.mode_ratio = 0.0;
      }
      cmds[i] = {tel.command, tel.hold.gripper};
    }

    const std::vector<Prop> props_before = world_.props();
    const SenseFrame& frame = world_.step(cmds, opts_.dt);
    for (std::size_t i = 0; i < kArmCount; ++i) {
      last_tau_[i] = frame.arms[i].tau;
      const double f = frame.arms[i].wrench.force.norm();
      if (std::isfinite(f)) peak_force_ = std::max(peak_force_, f);
      if (frame.tripped_now[i]) {
        trip_time_[i] = t;
        events.push_back({{"type", "estop"}, {"arm", i}, {"force", f}});
      }
    }
    prop_events(props_before, events);
    send_feedback(frame, now_us);
    for (const auto& msg : uplink_.poll(now_us)) on_feedback(msg);

    if (!any_tripped()) ++active_ticks_;
    nlohmann::json rec = record(t, events);
    ++tick_;
    return rec;
  }

 private:
  World init_world() {
    opts_.validate();
    std::mt19937_64 rng(opts_.seed);
    std::array<Script, kArmCount> scripts;
    for (std::size_t i = 0; i < kArmCount; ++i) {
      const Script& s = opts_.scenario.scripts[i];
      scripts[i] = s.empty() ? s : s.perturbed(rng, opts_.perturbation);
    }
    scripted_ = std::make_unique<ScriptedLeader>(std::move(scripts));
    return World(opts_.scenario.world, opts_.scenario.props);
  }

  void apply_resets(double t, nlohmann::json& events) {
    for (std::size_t k = 0; k < opts_.forced_estops.size(); ++k) {
      const ForcedEstop& f = opts_.forced_estops[k];
      if (forced_state_[k] == 0 && t >= f.at_s) {
        forced_state_[k] = 1;
        if (!world_.estop(f.arm).tripped) {
          world_.force_estop(f.arm);
          trip_time_[f.arm] = t;
          forced_hold_[f.arm] = true;
          events.push_back({{"type", "estop"}, {"arm", f.arm}, {"forced", true}});
        }
      }
      if (forced_state_[k] == 1 && t >= f.at_s + f.duration_s) {
        forced_state_[k] = 2;
        if (forced_hold_[f.arm]) {
          forced_hold_[f.arm] = false;
          reset_arm(f.arm, events);
        }
      }
    }
    const double delay = opts_.scenario.estop_reset_delay_s;
    for (std::size_t i = 0; i < kArmCount; ++i) {
      if (!world_.estop(i).tripped) continue;
      const bool timed = !forced_hold_[i] && delay >= 0.0 && trip_time_[i] && t - *trip_time_[i] >= delay;
      if (reset_requests_[i] || timed) reset_arm(i, events);
    }
    reset_requests_ = {};
  }

  void reset_arm(std::size_t i, nlohmann::json& events) {
    world_.estop_reset(i);
    controllers_[i].reset();
    last_tau_[i].setZero();
    trip_time_[i].reset();
    forced_hold_[i] = false;
    events.push_back({{"type", "estop_reset"}, {"arm", i}});
  }

  void send_leader(double t, std::uint64_t now_us) {
    for (link::MessageKind k : queued_) {
      for (std::uint8_t arm = 0; arm < kArmCount; ++arm) {
        downlink_.send({k, seq_.next(k, arm), now_us, arm, std::monostate{}}, now_us);
      }
    }
    queued_.clear();
    for (std::size_t i = 0; i < kArmCount; ++i) {
      auto& tel = telemetry_[i];
      tel.leader = leader().sample(i, t);
      // A corrupt leader reading is dropped; the hold then goes stale and freezes.
      if (tel.leader && (!tel.leader->q.allFinite() || !std::isfinite(tel.leader->gripper))) tel.leader.reset();
      if (!tel.leader) continue;
      const JointVector q = quantize_joints(tel.leader->q, opts_.encoder_bits);
      link::LeaderPayload p;
      for (std::size_t j = 0; j < 6; ++j) p.q[j] = wrap_angle(q(static_cast<Eigen::Index>(j)));
      p.gripper = static_cast<float>(tel.leader->gripper);
      const auto arm = static_cast<std::uint8_t>(i);
      downlink_.send({link::MessageKind::LeaderState, seq_.next(link::MessageKind::LeaderState, arm), now_us, arm, p},
                     now_us);
    }
  }

  void send_feedback(const SenseFrame& frame, std::uint64_t now_us) {
    for (std::size_t i = 0; i < kArmCount; ++i) {
      const auto arm = static_cast<std::uint8_t>(i);
      link::ForcePayload p;
      const Vec6 w = frame.arms[i].wrench.stacked();
      for (std::size_t j = 0; j < 6; ++j) p.wrench[j] = static_cast<float>(w(static_cast<Eigen::Index>(j)));
      uplink_.send({link::MessageKind::FollowerForce, seq_.next(link::MessageKind::FollowerForce, arm), now_us, arm, p},
                   now_us);
      if (frame.tripped_now[i]) {
        uplink_.send({link::MessageKind::EstopEvent, seq_.next(link::MessageKind::EstopEvent, arm), now_us, arm,
                      std::monostate{}},
                     now_us);
      }
    }
  }

  void on_feedback(const link::LinkMessage& msg) {
    if (msg.kind != link::MessageKind::FollowerForce || !glove_enabled(opts_.variant.mode)) return;
    const auto& p = std::get<link::ForcePayload>(msg.payload);
    const Vec3 f(p.wrench[0], p.wrench[1], p.wrench[2]);
    telemetry_[msg.arm_id].glove = force_to_glove(f, opts_.variant.haptics);
  }

  void prop_events(const std::vector<Prop>& before, nlohmann::json& events) const {
    const auto& after = world_.props();
    for (std::size_t k = 0; k < after.size(); ++k) {
      const Prop &a = before[k], &b = after[k];
      if (a.holder != b.holder) {
        const char* type = a.holder < 0 ? "grasp" : (b.holder < 0 ? "release" : "handover");
        events.push_back({{"type", type}, {"prop", k}, {"from", a.holder}, {"to", b.holder}});
      }
      if (!a.toppled && b.toppled) events.push_back({{"type", "topple"}, {"prop", k}});
    }
  }

  nlohmann::json record(double t, nlohmann::json& events) const {
    using spark::detail::vec_json;
    nlohmann::json arms = nlohmann::json::array();
    const SenseFrame& frame = world_.last_frame();
    for (std::size_t i = 0; i < kArmCount; ++i) {
      const ArmTelemetry& tel = telemetry_[i];
      const ArmState& a = world_.arm(i);
      nlohmann::json leader = nullptr;
      if (tel.leader) leader = {{"q", vec_json(tel.leader->q)}, {"g", tel.leader->gripper}};
      arms.push_back({{"leader", leader},
                      {"target", vec_json(tel.hold.targets)},
                      {"cmd", vec_json(tel.command)},
                      {"q", vec_json(a.q)},
                      {"qd", vec_json(a.qd)},
                      {"g", a.gripper},
                      {"ee", vec_json(frame.arms[i].ee_position)},
                      {"wrench", vec_json(frame.arms[i].wrench.stacked())},
                      {"tau", vec_json(frame.arms[i].tau)},
                      {"glove", tel.glove.intensities},
                      {"mode_ratio", tel.mode_ratio},
                      {"estop", world_.estop(i).tripped},
                      {"stale", tel.hold.stale},
                      {"holding", tel.hold.holding},
                      {"fault", tel.controller_fault}});
    }
    nlohmann::json props = nlohmann::json::array();
    for (const Prop& p : world_.props()) props.push_back(prop_to_json(p));
    return {{"type", "tick"},  {"tick", tick_},      {"t", t},          {"active_time", active_time()},
            {"arms", arms},    {"events", events},   {"props", props}};
  }

  LeaderSource& leader() { return external_ ? *external_ : *scripted_; }

  RunOptions opts_;
  LeaderSource* external_;
  std::unique_ptr<ScriptedLeader> scripted_;
  World world_;
  link::SimChannel downlink_;
  link::SimChannel uplink_;
  link::StreamSequencer seq_;
  std::array<link::LeaderHold, kArmCount> holds_;
  std::array<ForceController, kArmCount> controllers_;
  std::array<ArmTelemetry, kArmCount> telemetry_{};
  std::array<JointVector, kArmCount> last_tau_{JointVector::Zero(), JointVector::Zero()};
  std::array<std::optional<double>, kArmCount> trip_time_{};
  std::array<bool, kArmCount> forced_hold_{};
  std::array<bool, kArmCount> reset_requests_{};
  std::vector<int> forced_state_;
  std::vector<link::MessageKind> queued_;
  std::uint64_t tick_ = 0;
  std::uint64_t active_ticks_ = 0;
  double peak_force_ = 0.0;
};

}  // namespace spark::harness
