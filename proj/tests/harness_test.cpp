#include <gtest/gtest.h>

#include <sstream>

#include "spark/harness/config.hpp"
#include "spark/harness/report.hpp"
#include "spark/harness/run.hpp"

using namespace spark;
using namespace spark::harness;

namespace {

RunOptions options(const std::string& scenario, Variant v, std::uint64_t seed = 0, const std::string& channel = "inperson") {
  RunOptions o;
  o.scenario = bundled_scenario(scenario);
  o.variant = make_variant(v, channel);
  o.seed = seed;
  return o;
}

JointVector filled(double x) { return JointVector::Constant(x); }

/// Leader that returns garbage for arm 0.
class NanLeader final : public LeaderSource {
 public:
  std::optional<LeaderSample> sample(std::size_t arm, double) override {
    if (arm != 0) return std::nullopt;
    return LeaderSample{filled(std::numeric_limits<double>::quiet_NaN()), 1.0};
  }
};

}  // namespace

TEST(Script, InterpolatesLinearlyAndHoldsEnds) {
  const Script s({{1.0, filled(0.0), 1.0}, {3.0, filled(2.0), 0.0}});
  EXPECT_EQ(s.sample(0.0).q, filled(0.0));
  EXPECT_EQ(s.sample(2.0).q, filled(1.0));
  EXPECT_DOUBLE_EQ(s.sample(2.0).gripper, 0.5);
  EXPECT_EQ(s.sample(10.0).q, filled(2.0));
}

TEST(Script, RejectsNonIncreasingTimes) {
  EXPECT_THROW(Script({{1.0, filled(0.0), 1.0}, {1.0, filled(1.0), 1.0}}), std::invalid_argument);
  EXPECT_THROW(Script({{1.0, filled(0.0), 1.0}, {0.5, filled(1.0), 1.0}}), std::invalid_argument);
  EXPECT_THROW(Script({{0.0, filled(std::nan("")), 1.0}}), std::invalid_argument);
}

TEST(Script, PerturbationIsBoundedAndSeeded) {
  const Script base = scenarios::place().scripts[0];
  std::mt19937_64 a(9), b(9), c(10);
  const Script pa = base.perturbed(a, 1e-3), pb = base.perturbed(b, 1e-3), pc = base.perturbed(c, 1e-3);
  EXPECT_EQ(pa.waypoints(), pb.waypoints());
  EXPECT_NE(pa.waypoints(), pc.waypoints());
  for (std::size_t k = 0; k < base.waypoints().size(); ++k) {
    EXPECT_LE((pa.waypoints()[k].q - base.waypoints()[k].q).cwiseAbs().maxCoeff(), 1e-3);
    EXPECT_EQ(pa.waypoints()[k].t, base.waypoints()[k].t);
  }
}

TEST(ReplayLeader, ZeroOrderHoldPerArm) {
  ReplayLeader r({{0.0, 0, {filled(0.1), 1.0}}, {0.5, 0, {filled(0.2), 0.0}}, {0.2, 1, {filled(-1.0), 1.0}}});
  EXPECT_EQ(r.sample(0, 0.0)->q, filled(0.1));
  EXPECT_EQ(r.sample(0, 0.49)->q, filled(0.1));
  EXPECT_EQ(r.sample(0, 0.5)->q, filled(0.2));
  EXPECT_FALSE(r.sample(1, 0.1));
  EXPECT_EQ(r.sample(1, 5.0)->q, filled(-1.0));
}

TEST(ReplayLeader, ParsesItsOwnFormat) {
  const ReplayEntry e{0.25, 1, {filled(0.3), 0.75}};
  std::istringstream in(ReplayLeader::format(e) + "\n\n" + ReplayLeader::format({0.5, 1, {filled(0.4), 0.0}}) + "\n");
  const auto entries = ReplayLeader::parse(in);
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].t, 0.25);
  EXPECT_EQ(entries[0].arm, 1u);
  EXPECT_EQ(entries[0].state, e.state);
  EXPECT_THROW(ReplayLeader({{0.5, 0, {}}, {0.5, 0, {}}}), std::invalid_argument);
  EXPECT_THROW(ReplayLeader({{0.5, 2, {}}}), std::invalid_argument);
}

TEST(Scenario, BundledRoundTripThroughJson) {
  for (const auto& name : bundled_scenario_names()) {
    const Scenario s = bundled_scenario(name);
    EXPECT_NO_THROW(s.validate()) << name;
    const nlohmann::json j = scenario_to_json(s);
    EXPECT_EQ(scenario_to_json(scenario_from_json(j)), j) << name;
  }
  EXPECT_THROW(bundled_scenario("nope"), std::invalid_argument);
}

TEST(Scenario, RejectsBadDefinitions) {
  nlohmann::json j = scenario_to_json(scenarios::place());
  j["success"]["prop"] = 3;
  EXPECT_THROW(scenario_from_json(j), std::invalid_argument);
  j = scenario_to_json(scenarios::place());
  j["timeout"] = 0.0;
  EXPECT_THROW(scenario_from_json(j), std::invalid_argument);
  j = scenario_to_json(scenarios::place());
  j["success"] = {{"kind", "levitate"}};
  EXPECT_THROW(scenario_from_json(j), std::invalid_argument);
}

TEST(SuccessPredicate, ReadsWorldState) {
  World w(WorldConfig{}, {Prop{"p", Vec3(0.1, 0.2, 0.05), 0.02, -1, false}});
  SuccessPredicate placed;
  placed.kind = SuccessPredicate::Kind::PropPlaced;
  placed.goal = Vec3(0.1, 0.22, 0.0);
  EXPECT_TRUE(placed(w));
  placed.goal = Vec3(0.2, 0.2, 0.0);
  EXPECT_FALSE(placed(w));

  SuccessPredicate region;
  region.kind = SuccessPredicate::Kind::PropInRegion;
  region.box_min = Vec3(0.0, 0.1, 0.0);
  region.box_max = Vec3(0.2, 0.3, 0.1);
  EXPECT_TRUE(region(w));

  SuccessPredicate near;
  near.kind = SuccessPredicate::Kind::EeProximity;
  EXPECT_FALSE(near(w));  // home poses are far apart

  SuccessPredicate held;
  held.kind = SuccessPredicate::Kind::PropHeldBy;
  EXPECT_FALSE(held(w));
}

TEST(RunScenario, TrivialScenarioCompletesAtTimeZero) {
  const RunResult r = run_scenario(options("idle", Variant::Basic));
  EXPECT_EQ(r.outcome, Outcome::Success);
  ASSERT_TRUE(r.completion_time);
  EXPECT_EQ(*r.completion_time, 0.0);
  EXPECT_EQ(r.estop_count, 0);
  EXPECT_EQ(r.ticks, 0u);
  ASSERT_TRUE(r.log.summary);
  EXPECT_EQ(r.log.summary->at("outcome"), "success");
}

TEST(RunScenario, IdenticalInputsGiveIdenticalLogs) {
  for (Variant v : {Variant::Basic, Variant::FGC}) {
    const auto a = run_scenario(options("place", v, 5, "remote")).log.to_jsonl();
    const auto b = run_scenario(options("place", v, 5, "remote")).log.to_jsonl();
    EXPECT_EQ(a, b);
    EXPECT_NE(a, run_scenario(options("place", v, 6, "remote")).log.to_jsonl());
  }
}

TEST(RunScenario, TickNumbersAreContiguous) {
  const RunResult r = run_scenario(options("handover", Variant::FC, 2));
  ASSERT_EQ(r.log.ticks().size(), r.ticks);
  for (std::size_t k = 0; k < r.log.ticks().size(); ++k) EXPECT_EQ(r.log.ticks()[k].at("tick"), k);
}

TEST(RunScenario, PressIntoTableTripsWithoutForceControlOnly) {
  const RunResult basic = run_scenario(options("place", Variant::Basic, 0));
  const RunResult fc = run_scenario(options("place", Variant::FC, 0));
  EXPECT_GE(basic.estop_count, 1);
  EXPECT_GT(basic.peak_force, 25.0);
  EXPECT_EQ(fc.estop_count, 0);
  EXPECT_LT(fc.peak_force, 25.0);
  EXPECT_EQ(fc.outcome, Outcome::Success);
}

TEST(RunScenario, AllBundledScenariosSucceedWithForceControl) {
  for (const auto& name : bundled_scenario_names()) {
    for (const char* ch : {"inperson", "remote"}) {
      const RunResult r = run_scenario(options(name, Variant::FGC, 1, ch));
      EXPECT_EQ(r.outcome, Outcome::Success) << name << " " << ch;
      EXPECT_EQ(r.estop_count, 0) << name << " " << ch;
    }
  }
}

TEST(RunScenario, TimerExcludesForcedStop) {
  // Arm 1 idles in this scenario, so stopping it leaves arm 0's task untouched.
  RunOptions o = options("place", Variant::FC, 4);
  const RunResult plain = run_scenario(o);
  o.forced_estops = {{1, 1.0, 2.0}};
  const RunResult stopped = run_scenario(o);
  ASSERT_EQ(plain.outcome, Outcome::Success);
  ASSERT_EQ(stopped.outcome, Outcome::Success);
  EXPECT_EQ(stopped.estop_count, 1);
  const double wall = stopped.log.summary->at("sim_time").get<double>();
  EXPECT_NEAR(wall, plain.log.summary->at("sim_time").get<double>(), 1e-9);
  EXPECT_NEAR(*plain.completion_time - *stopped.completion_time, 2.0, o.dt + 1e-9);
}

TEST(RunScenario, ArmStaysStillWhileStopped) {
  RunOptions o = options("place", Variant::Basic, 4);
  o.forced_estops = {{0, 0.5, 1.0}};
  const RunResult r = run_scenario(o);
  const auto& ticks = r.log.ticks();
  const auto q_at = [&](std::size_t k) { return ticks[k].at("arms")[0].at("q"); };
  for (std::size_t k = 51; k < 150; ++k) {
    EXPECT_TRUE(ticks[k].at("arms")[0].at("estop").get<bool>()) << k;
    EXPECT_EQ(q_at(k), q_at(50)) << k;
    for (double v : ticks[k].at("arms")[0].at("qd")) EXPECT_EQ(v, 0.0);
  }
  EXPECT_FALSE(ticks[150].at("arms")[0].at("estop").get<bool>());
}

TEST(RunScenario, GloveIsFeedbackOnly) {
  const RunResult basic = run_scenario(options("place", Variant::Basic, 3, "remote"));
  const RunResult fg = run_scenario(options("place", Variant::FG, 3, "remote"));
  ASSERT_EQ(basic.ticks, fg.ticks);
  bool glove_seen = false;
  for (std::size_t k = 0; k < basic.ticks; ++k) {
    const auto& a = basic.log.ticks()[k].at("arms");
    const auto& b = fg.log.ticks()[k].at("arms");
    for (std::size_t i = 0; i < kArmCount; ++i) {
      EXPECT_EQ(a[i].at("q"), b[i].at("q"));
      for (double g : a[i].at("glove")) EXPECT_EQ(g, 0.0);
      for (double g : b[i].at("glove")) glove_seen |= g > 0.0;
    }
  }
  EXPECT_TRUE(glove_seen);
}

TEST(RunScenario, CorruptLeaderHoldsInsteadOfThrowing) {
  RunOptions o = options("idle", Variant::FC);
  o.scenario.success.kind = SuccessPredicate::Kind::PropHeldBy;  // unreachable prop, so the run times out
  o.scenario.props = {Prop{"p", Vec3(5, 5, 0.05), 0.01, -1, false}};
  o.scenario.timeout_s = 0.5;
  NanLeader leader;
  RunResult r;
  ASSERT_NO_THROW(r = run_scenario(o, &leader));
  EXPECT_EQ(r.outcome, Outcome::Timeout);
  for (const auto& t : r.log.ticks()) {
    EXPECT_TRUE(t.at("arms")[0].at("holding").get<bool>());
    EXPECT_EQ(t.at("arms")[0].at("q"), r.log.ticks()[0].at("arms")[0].at("q"));
  }
}

TEST(RunScenario, InvalidOptionsFailBeforeStart) {
  RunOptions o = options("place", Variant::FC);
  o.variant.gains.tau_max = -1.0;
  EXPECT_THROW(run_scenario(o), std::invalid_argument);
  o = options("place", Variant::FC);
  o.dt = 0.0;
  EXPECT_THROW(run_scenario(o), std::invalid_argument);
}

TEST(Replay, ReproducesLogExactly) {
  for (Variant v : {Variant::Basic, Variant::FGC}) {
    const RunResult r = run_scenario(options("place", v, 11, "remote"));
    const SessionLog parsed = SessionLog::parse_string(r.log.to_jsonl());
    const RunResult again = replay(parsed);
    EXPECT_EQ(again.log.to_jsonl(), r.log.to_jsonl());
  }
}

TEST(Replay, TruncatedLogReplaysPrefix) {
  const RunResult r = run_scenario(options("handover", Variant::FC, 2, "remote"));
  const std::string full = r.log.to_jsonl();
  std::size_t cut = 0;
  for (int n = 0; n < 201; ++n) cut = full.find('\n', cut) + 1;  // meta + 200 ticks
  const std::string prefix = full.substr(0, cut) + full.substr(cut, 40);  // plus a torn line
  const SessionLog truncated = SessionLog::parse_string(prefix);
  ASSERT_EQ(truncated.ticks().size(), 200u);
  EXPECT_FALSE(truncated.summary);
  const RunResult again = replay(truncated);
  EXPECT_EQ(again.outcome, Outcome::Truncated);
  EXPECT_EQ(again.log.to_jsonl(), full.substr(0, cut));
}

TEST(Replay, ConfigMismatchIsRejected) {
  const RunResult r = run_scenario(options("proximity", Variant::FC, 1));
  SessionLog tampered = SessionLog::parse_string(r.log.to_jsonl());
  tampered.meta["config"]["dt"] = 0.02;
  EXPECT_THROW(replay(tampered), ConfigMismatch);

  const SessionLog ok = SessionLog::parse_string(r.log.to_jsonl());
  EXPECT_THROW(replay(ok, std::string("0000000000000000")), ConfigMismatch);
  EXPECT_NO_THROW(replay(ok, ok.meta.at("config_hash").get<std::string>()));
}

TEST(SessionLog, RejectsGapsAndGarbage) {
  SessionLog log;
  log.meta = {{"type", "meta"}};
  log.append({{"type", "tick"}, {"tick", 0}});
  EXPECT_THROW(log.append({{"type", "tick"}, {"tick", 2}}), std::logic_error);
  EXPECT_THROW(SessionLog::parse_string("{\"type\":\"tick\",\"tick\":0}\n"), LogFormatError);
  EXPECT_THROW(SessionLog::parse_string("{\"type\":\"meta\"}\nnot json\n{\"type\":\"tick\",\"tick\":0}\n"),
               LogFormatError);
  EXPECT_THROW(SessionLog::parse_string(""), LogFormatError);
}

TEST(ConfigHash, StableAndSensitive) {
  const nlohmann::json a = options_to_json(options("place", Variant::FC));
  nlohmann::json b = a;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b["dt"] = 0.011;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(Report, SingleLogReportsItsOwnValues) {
  const RunResult r = run_scenario(options("insert", Variant::FC, 1));
  const auto rows = build_report({r.log});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].runs, 1);
  EXPECT_EQ(rows[0].successes, 1);
  EXPECT_DOUBLE_EQ(*rows[0].mean_time, *r.completion_time);
  EXPECT_EQ(*rows[0].std_time, 0.0);
}

TEST(Report, IdenticalLogsHaveZeroSpread) {
  const RunResult r = run_scenario(options("insert", Variant::FC, 1));
  const auto rows = build_report({r.log, r.log});
  EXPECT_EQ(rows[0].runs, 2);
  EXPECT_EQ(*rows[0].std_time, 0.0);
}

TEST(Report, TimeoutsAreCountedSeparately) {
  const RunResult ok = run_scenario(options("place", Variant::Basic, 0));
  ASSERT_EQ(ok.outcome, Outcome::Timeout);
  SessionLog a = ok.log, b = ok.log, c = ok.log;
  a.summary->at("outcome") = "success";
  a.summary->at("completion_time") = 4.0;
  b.summary->at("outcome") = "success";
  b.summary->at("completion_time") = 6.0;
  const auto rows = build_report({a, b, c});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].successes, 2);
  EXPECT_EQ(rows[0].timeouts, 1);
  EXPECT_DOUBLE_EQ(*rows[0].mean_time, 5.0);
  EXPECT_DOUBLE_EQ(*rows[0].std_time, 1.0);
  EXPECT_EQ(rows[0].total_estops, 3 * ok.estop_count);
  const std::string csv = report_csv(rows);
  EXPECT_NE(csv.find("place,basic,3,2,1,0,5,1,"), std::string::npos) << csv;
}

TEST(Report, GroupsByScenarioAndVariant) {
  const auto rows = build_report({run_scenario(options("idle", Variant::FC)).log, run_scenario(options("idle", Variant::Basic)).log,
                                  run_scenario(options("proximity", Variant::FC)).log});
  EXPECT_EQ(rows.size(), 3u);
  EXPECT_NE(report_table(rows).find("proximity"), std::string::npos);
}

TEST(BuildOptions, AppliesOverrides) {
  const nlohmann::json ov = {{"gains", {{"s", 4.0}}},
                             {"channel", {{"base_latency_ms", 40.0}}},
                             {"timeout", 3.0},
                             {"forced_estops", {{{"arm", 1}, {"at", 0.5}, {"duration", 0.2}}}}};
  const RunOptions o = build_options("place", "fgc", 7, "remote", ov);
  EXPECT_EQ(o.variant.mode, Variant::FGC);
  EXPECT_EQ(o.variant.gains.step_size_s, 4.0);
  EXPECT_EQ(o.variant.channel.base_latency_ms, 40.0);
  EXPECT_EQ(o.variant.channel.jitter_ms, link::remote_profile().jitter_ms);
  EXPECT_EQ(o.scenario.timeout_s, 3.0);
  EXPECT_EQ(o.forced_estops.size(), 1u);
  EXPECT_EQ(o.seed, 7u);
}

TEST(BuildOptions, BadInputIsAConfigError) {
  EXPECT_THROW(build_options("place", "turbo", 0, "inperson"), ConfigError);
  EXPECT_THROW(build_options("place", "fc", 0, "moon"), ConfigError);
  EXPECT_THROW(build_options("nowhere", "fc", 0, "inperson"), ConfigError);
  EXPECT_THROW(build_options("place", "fc", 0, "inperson", nlohmann::json{{"gains", {{"tau_max", -1.0}}}}), ConfigError);
  EXPECT_THROW(build_options("place", "fc", 0, "inperson", nlohmann::json{{"dt", "fast"}}), ConfigError);
}
