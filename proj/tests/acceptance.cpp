// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "spark/force_controller.hpp"
#include "spark/haptics.hpp"
#include "spark/harness/run.hpp"
#include "spark/kinematics.hpp"
#include "spark/link/channel.hpp"
#include "spark/link/protocol.hpp"
#include "spark/sim_world.hpp"
#include "test_util.hpp"

using namespace spark;
using namespace spark::harness;
using spark::testing::central_difference;
using spark::testing::random_joints;
using spark::testing::rel_err;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

Check fk_oracle() {
  Check c;
  const auto t0 = Clock::now();
  const Pose p = forward_kinematics(ur5e_table(), JointVector::Zero());
  const auto ref = spark::testing::oracle_fk(spark::testing::ur5e_rows(), {0, 0, 0, 0, 0, 0});
  double err = 0.0;
  for (int i = 0; i < 3; ++i) err = std::max(err, std::abs(p.position(i) - ref[i][3]));
  c.require(err <= 1e-9, "oracle mismatch " + fmt("%.3g", err));
  c.require((p.position - Vec3(-0.8172, -0.2329, 0.0628)).norm() < 1e-4, "position far from (-0.8172, -0.2329, 0.0628)");
  const double dt = seconds_since(t0);
  c.require(dt < 1.0, "took " + fmt("%.3f s", dt));
  if (c.ok) {
    c.detail = "p = (" + fmt("%.4f", p.position.x()) + ", " + fmt("%.4f", p.position.y()) + ", " +
               fmt("%.4f", p.position.z()) + "), |err| " + fmt("%.1e", err);
  }
  return c;
}

Check scale_equivariance() {
  Check c;
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    const JointVector q = random_joints(rng);
    const Pose base = forward_kinematics(ur5e_table(), q);
    for (double s : {0.5, 2.0}) {
      const Pose scaled = forward_kinematics(ur5e_table().scaled(s), q);
      worst = std::max(worst, (scaled.position - base.position * s).cwiseAbs().maxCoeff());
      c.require(scaled.rotation == base.rotation, "rotation changed under scaling");
    }
  }
  c.require(worst <= 1e-12, "position error " + fmt("%.3g", worst));
  if (c.ok) c.detail = "worst |dp| " + fmt("%.1e", worst);
  return c;
}

ControllerInput random_input(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> t(-20.0, 20.0);
  ControllerInput in;
  in.theta = random_joints(rng);
  in.theta_spark = in.theta + random_joints(rng, 0.5);
  for (int i = 0; i < 6; ++i) in.tau(i) = t(rng);
  return in;
}

Check gradient_suite() {
  Check c;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  ControllerGains gains;
  gains.ik_conditioning_enabled = true;
  const DHTable table = ur5e_table();
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    const ControllerInput in = random_input(rng);
    const auto g = combined_loss_gradient(in, gains, table);
    c.require(g.has_value(), "non-finite gradient");
    if (!g) break;
    const CombinedLoss frozen = make_combined_loss(in, gains);
    const auto fd = central_difference([&](const JointVector& x) { return frozen(table, to_array(x)); }, in.theta);
    worst = std::max(worst, rel_err(*g, fd));
  }
  c.require(worst < 1e-6, "rel err " + fmt("%.3g", worst));
  const double dt = seconds_since(t0);
  c.require(dt < 10.0, "took " + fmt("%.2f s", dt));
  if (c.ok) c.detail = "worst rel err " + fmt("%.1e", worst) + " over 100 inputs, " + fmt("%.2f s", dt);
  return c;
}

Check descent() {
  Check c;
  std::mt19937_64 rng(4242);
  int decreased_total = 0, flat_total = 0;
  for (bool ik : {false, true}) {
    ControllerGains gains;
    gains.ik_conditioning_enabled = ik;
    ForceController ctl(gains);
    int decreased = 0, flat = 0;
    for (int n = 0; n < 1000; ++n) {
      const ControllerInput in = random_input(rng);
      ctl.reset();
      const auto out = ctl.step(in);
      if (out.joint_speeds.norm() <= 1e-8) {
        ++flat;
        continue;
      }
      const CombinedLoss frozen = make_combined_loss(in, gains);
      if (frozen(ur5e_table(), to_array(in.theta + 1e-4 * out.joint_speeds)) < out.loss_value) ++decreased;
    }
    c.require(decreased >= 990, std::string("ik=") + (ik ? "on" : "off") + ": only " + std::to_string(decreased) + "/1000");
    c.require(decreased + flat == 1000, "a non-flat step increased the loss");
    decreased_total += decreased;
    flat_total += flat;
  }
  if (c.ok) c.detail = std::to_string(decreased_total) + "/2000 decreased, " + std::to_string(flat_total) + " flat";
  return c;
}

Check mode_interpolation() {
  Check c;
  ControllerGains gains;
  JointVector tau = JointVector::Zero();
  c.require(mode_ratio(tau, gains) == 0.0, "M(0) != 0");
  tau(1) = gains.tau_max;
  c.require(mode_ratio(tau, gains) == 1.0, "M(tau_max) != 1");
  tau(1) = -4.0 * gains.tau_max;
  c.require(mode_ratio(tau, gains) == 1.0, "M not clamped above");
  tau(1) = 0.5 * gains.tau_max;
  c.require(mode_ratio(tau, gains) == 0.5, "M(tau_max / 2) != 0.5");

  std::mt19937_64 rng(5);
  for (int n = 0; n < 200; ++n) {
    ControllerInput in = random_input(rng);
    in.tau.setZero();
    c.require(combined_loss(in, gains, ur5e_table()) == spark_loss(in.theta, in.theta_spark, gains.spark_weight),
              "Loss at M = 0 differs from the spark loss");
    in.tau.setZero();
    in.tau(n % 6) = (n % 2 ? 1.0 : -3.0) * gains.tau_max;
    const JointVector targets = torque_targets(in.theta, in.tau, gains.target_distance_a);
    c.require(combined_loss(in, gains, ur5e_table()) == torque_loss(in.theta, targets),
              "Loss at M = 1 differs from the torque loss");
  }
  if (c.ok) c.detail = "endpoints exact over 200 inputs";
  return c;
}

Check force_compliance_trend() {
  Check c;
  const auto t0 = Clock::now();
  int basic_min = 1 << 30, fc_max = 0;
  double fc_peak = 0.0;
  for (const char* channel : {"inperson", "remote"}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      RunOptions o;
      o.scenario = bundled_scenario("place");
      o.seed = seed;
      o.variant = make_variant(Variant::Basic, channel);
      const RunResult basic = run_scenario(o);
      o.variant = make_variant(Variant::FC, channel);
      const RunResult fc = run_scenario(o);
      basic_min = std::min(basic_min, basic.estop_count);
      fc_max = std::max(fc_max, fc.estop_count);
      fc_peak = std::max(fc_peak, fc.peak_force);
      const std::string tag = std::string(channel) + " seed " + std::to_string(seed);
      c.require(basic.estop_count >= 1, "basic had no e-stop (" + tag + ")");
      c.require(fc.estop_count == 0, "fc e-stopped (" + tag + ")");
      c.require(fc.peak_force < 25.0, "fc peak " + fmt("%.2f N", fc.peak_force) + " (" + tag + ")");
    }
  }
  const double dt = seconds_since(t0);
  c.require(dt < 30.0, "took " + fmt("%.1f s", dt));
  if (c.ok) {
    c.detail = "basic >= " + std::to_string(basic_min) + " e-stops/run, fc " + std::to_string(fc_max) +
               " e-stops, fc peak " + fmt("%.2f N", fc_peak) + ", 2x20 seeds, " + fmt("%.1f s", dt);
  }
  return c;
}

Check estop_semantics() {
  Check c;
  // Drive arm 0 straight down into the table with pure mirroring.
  const JointVector above = scenarios::joints(0.0, -1.2054, 2.1163, -2.4816, -1.5708, 0.0);
  const JointVector pressed = scenarios::joints(0.0, -0.9259, 2.1403, -2.7852, -1.5708, 0.0);
  World w;
  w.set_joints(0, above);
  std::optional<std::uint64_t> over_tick, trip_tick;
  for (int k = 0; k < 400 && !trip_tick; ++k) {
    const SenseFrame f = w.step({ArmCommand{mirror_speeds(w.arm(0).q, pressed, 5.0), 0.0}, ArmCommand{}}, 0.01);
    if (!over_tick && f.arms[0].wrench.force.norm() > 25.0) over_tick = f.tick;
    if (f.tripped_now[0]) trip_tick = f.tick;
  }
  c.require(over_tick && trip_tick, "never exceeded 25 N");
  if (over_tick && trip_tick) c.require(*trip_tick <= *over_tick + 1, "trip later than one tick after 25 N");
  const JointVector frozen = w.arm(0).q;
  for (int k = 0; k < 100; ++k) {
    w.step({ArmCommand{JointVector::Constant(1.0), 1.0}, ArmCommand{}}, 0.01);
    c.require(w.arm(0).qd.isZero(0.0), "velocity nonzero while tripped");
    c.require(w.arm(0).q == frozen, "joints moved while tripped");
  }
  w.estop_reset(0);
  w.step({ArmCommand{JointVector::Constant(0.5), 0.0}, ArmCommand{}}, 0.01);
  c.require(!w.arm(0).qd.isZero(0.0), "no motion after reset");

  // Timer: stop the idle arm for 2 s during a placement run.
  RunOptions o;
  o.scenario = bundled_scenario("place");
  o.variant = make_variant(Variant::FC, "inperson");
  const RunResult plain = run_scenario(o);
  o.forced_estops = {{1, 1.0, 2.0}};
  const RunResult stopped = run_scenario(o);
  c.require(plain.completion_time && stopped.completion_time, "placement did not complete");
  double gap = 0.0;
  if (plain.completion_time && stopped.completion_time) {
    gap = *plain.completion_time - *stopped.completion_time;
    c.require(std::abs(gap - 2.0) <= o.dt + 1e-9, "timer excluded " + fmt("%.3f s", gap) + " instead of 2 s");
  }
  if (c.ok) {
    c.detail = "trip at tick " + std::to_string(*trip_tick) + " (first > 25 N at " + std::to_string(*over_tick) +
               "), stopped interval excluded " + fmt("%.2f s", gap);
  }
  return c;
}

link::LinkMessage random_message(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> kind(1, 6), arm(0, 1);
  std::uniform_real_distribution<double> ang(-M_PI, M_PI);
  std::uniform_real_distribution<float> f(-100.0f, 100.0f);
  link::LinkMessage m;
  m.kind = static_cast<link::MessageKind>(kind(rng));
  m.seq = static_cast<std::uint32_t>(rng());
  m.timestamp_us = rng();
  m.arm_id = static_cast<std::uint8_t>(arm(rng));
  if (m.kind == link::MessageKind::LeaderState) {
    link::LeaderPayload p;
    for (auto& x : p.q) x = ang(rng);
    p.gripper = f(rng);
    m.payload = p;
  } else if (m.kind == link::MessageKind::FollowerForce) {
    link::ForcePayload p;
    for (auto& x : p.wrench) x = f(rng);
    m.payload = p;
  }
  return m;
}

std::vector<std::pair<std::uint64_t, std::uint32_t>> channel_trace(std::uint64_t seed) {
  link::ChannelConfig cfg = link::remote_profile();
  cfg.drop_probability = 0.1;
  cfg.seed = seed;
  link::SimChannel ch(cfg);
  link::StreamSequencer seq;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> out;
  for (std::uint64_t t = 0; t < 3'000'000; t += 10'000) {
    link::LeaderPayload p;
    ch.send({link::MessageKind::LeaderState, seq.next(link::MessageKind::LeaderState, 0), t, 0, p}, t);
    for (const auto& m : ch.poll(t)) out.emplace_back(t, m.seq);
  }
  return out;
}

Check protocol() {
  Check c;
  std::mt19937_64 rng(31337);
  for (int n = 0; n < 10000; ++n) {
    const link::LinkMessage m = random_message(rng);
    const auto bytes = link::encode(m);
    const auto back = link::decode(bytes);
    c.require(std::holds_alternative<link::LinkMessage>(back) && std::get<link::LinkMessage>(back) == m,
              "round trip failed at message " + std::to_string(n));
    if (!c.ok) return c;
  }
  link::LinkMessage leader{link::MessageKind::LeaderState, 1, 0, 0, link::LeaderPayload{}};
  const std::size_t frame = link::encode(leader).size();
  c.require(frame == 69, "LEADER_STATE frame is " + std::to_string(frame) + " bytes");

  link::ChannelConfig cfg;
  cfg.base_latency_ms = 100.0;
  link::SimChannel ch(cfg);
  link::StreamSequencer seq;
  for (std::uint64_t t = 0; t < 5'000'000; t += 10'000) {
    ch.send({link::MessageKind::LeaderState, seq.next(link::MessageKind::LeaderState, 0), t, 0, link::LeaderPayload{}}, t);
    ch.poll(t);
  }
  const double mean_ms = ch.stats().mean_latency_ms();
  c.require(ch.stats().delivered > 100, "too few deliveries");
  c.require(std::abs(mean_ms - 100.0) <= 10.0, "mean delay " + fmt("%.2f ms", mean_ms));

  c.require(channel_trace(5) == channel_trace(5), "same seed gave different deliveries");
  c.require(channel_trace(5) != channel_trace(6), "different seeds gave identical deliveries");
  if (c.ok) c.detail = "10^4 round trips, frame 69 B, mean delay " + fmt("%.2f ms", mean_ms) + ", seeded";
  return c;
}

Check glove_mapping() {
  Check c;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-40.0, 40.0), grow(1.0, 2.0);
  HapticConfig cfg;
  for (int n = 0; n < 10000; ++n) {
    const Vec3 f(u(rng), u(rng), u(rng));
    const GloveFrame g = force_to_glove(f, cfg);
    const GloveFrame bigger = force_to_glove(f * grow(rng), cfg);
    for (std::size_t axis = 0; axis < 3; ++axis) {
      c.require(g.intensities[2 * axis] == 0.0 || g.intensities[2 * axis + 1] == 0.0, "opposite motors both active");
      for (std::size_t k = 0; k < 2; ++k) {
        c.require(bigger.intensities[2 * axis + k] >= g.intensities[2 * axis + k], "intensity not monotone");
      }
    }
  }
  HapticConfig ex;
  ex.f_max = 10.0;
  ex.deadband = 0.0;
  const GloveFrame g = force_to_glove(Vec3(3.0, 0.0, -4.0), ex);
  const std::array<double, 6> want{0.3, 0.0, 0.0, 0.0, 0.0, 0.4};
  c.require(g.intensities == want, "(3, 0, -4) with f_max 10 did not map to (0.3, 0, 0, 0, 0, 0.4)");
  if (c.ok) c.detail = "10^4 forces exclusive and monotone; example exact";
  return c;
}

Check encoder() {
  Check c;
  const double step = encoder_step(14);
  c.require(std::abs(step - 3.835e-4) < 5e-7, "14-bit step " + fmt("%.4e", step));
  c.require(std::round(step * 1e5) / 1e5 == 3.8e-4, "step does not round to 3.8e-4 rad");
  const double deg = step * 180.0 / M_PI;
  c.require(std::round(deg * 1000.0) / 1000.0 == 0.022, "step does not round to 0.022 deg");
  if (c.ok) c.detail = "step " + fmt("%.4e rad", step) + " = " + fmt("%.4f deg", deg);
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int shell(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Check end_to_end_determinism() {
  Check c;
  for (Variant v : {Variant::Basic, Variant::FGC}) {
    RunOptions o;
    o.scenario = bundled_scenario("handover");
    o.variant = make_variant(v, "remote");
    o.seed = 17;
    const std::string a = run_scenario(o).log.to_jsonl();
    const std::string b = run_scenario(o).log.to_jsonl();
    c.require(a == b, "in-process runs differ");
    c.require(replay(SessionLog::parse_string(a)).log.to_jsonl() == a, "in-process replay differs");
  }
#ifdef SPARKCTL_PATH
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("spark_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string bin = SPARKCTL_PATH;
  const std::string run = bin + " run --scenario place --variant fc --seed 7 --channel remote --log ";
  const int r1 = shell(run + (dir / "a.jsonl").string());
  const int r2 = shell(run + (dir / "b.jsonl").string());
  c.require(r1 == 0 && r2 == 0, "sparkctl run failed");
  const std::string a = slurp(dir / "a.jsonl");
  c.require(!a.empty() && a == slurp(dir / "b.jsonl"), "sparkctl run logs differ");
  const int rr = shell(bin + " replay --log " + (dir / "a.jsonl").string() + " --out " + (dir / "r.jsonl").string());
  c.require(rr == 0 && slurp(dir / "r.jsonl") == a, "sparkctl replay differs");
  fs::remove_all(dir);
  if (c.ok) c.detail = "CLI and in-process logs bit-identical; replay identical";
#else
  if (c.ok) c.detail = "in-process logs bit-identical; replay identical";
#endif
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Check()>>> criteria = {
      {"fk-oracle", fk_oracle},
      {"scale-equivariance", scale_equivariance},
      {"gradient-suite", gradient_suite},
      {"descent-property", descent},
      {"mode-interpolation", mode_interpolation},
      {"force-compliance-trend", force_compliance_trend},
      {"estop-semantics", estop_semantics},
      {"protocol", protocol},
      {"glove-mapping", glove_mapping},
      {"encoder", encoder},
      {"end-to-end-determinism", end_to_end_determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Check c;
    try {
      c = fn();
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s  %-24s %s\n", c.ok ? "PASS" : "FAIL", name, c.detail.c_str());
    failed += c.ok ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
