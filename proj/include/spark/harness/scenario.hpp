#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spark/harness/leader_source.hpp"
#include "spark/sim_world.hpp"

namespace spark::harness {

/// Task completion test. Every kind reads world state only.
struct SuccessPredicate {
  enum class Kind { Always, PropPlaced, PropLifted, PropInRegion, EeProximity, PropHeldBy };

  Kind kind = Kind::Always;
  std::size_t prop = 0;
  int arm = 0;
  Vec3 goal = Vec3::Zero();  // PropPlaced: xy used
  double tolerance = 0.03;   // PropPlaced: xy radius
  double min_z = 0.0;        // PropLifted
  Vec3 box_min = Vec3::Zero();
  Vec3 box_max = Vec3::Zero();
  double gap = 0.02;  // EeProximity: surface gap between end-effector spheres

  void validate(std::size_t prop_count) const {
    const bool needs_prop = kind != Kind::Always && kind != Kind::EeProximity;
    if (needs_prop && prop >= prop_count) throw std::invalid_argument("success: prop index out of range");
    if (arm < 0 || arm >= static_cast<int>(kArmCount)) throw std::invalid_argument("success: bad arm");
    if (kind == Kind::PropInRegion && !(box_min.array() <= box_max.array()).all()) {
      throw std::invalid_argument("success: empty region");
    }
  }

  bool operator()(const World& w) const {
    switch (kind) {
      case Kind::Always: return true;
      case Kind::PropPlaced: {
        const Prop& p = w.props().at(prop);
        return p.holder < 0 && !p.toppled && (p.position - goal).head<2>().norm() <= tolerance;
      }
      case Kind::PropLifted: {
        const Prop& p = w.props().at(prop);
        return p.holder == arm && p.position.z() >= min_z;
      }
      case Kind::PropInRegion: {
        const Vec3& x = w.props().at(prop).position;
        return (x.array() >= box_min.array()).all() && (x.array() <= box_max.array()).all();
      }
      case Kind::EeProximity: {
        const double dist = (w.ee_position(0) - w.ee_position(1)).norm();
        return dist - 2.0 * w.config().contact.ee_radius <= gap;
      }
      case Kind::PropHeldBy: return w.props().at(prop).holder == arm;
    }
    return false;
  }
};

inline nlohmann::json success_to_json(const SuccessPredicate& s) {
  using K = SuccessPredicate::Kind;
  switch (s.kind) {
    case K::Always: return {{"kind", "always"}};
    case K::PropPlaced:
      return {{"kind", "prop_placed"}, {"prop", s.prop}, {"goal", spark::detail::vec_json(s.goal)}, {"tolerance", s.tolerance}};
    case K::PropLifted: return {{"kind", "prop_lifted"}, {"prop", s.prop}, {"arm", s.arm}, {"min_z", s.min_z}};
    case K::PropInRegion:
      return {{"kind", "prop_in_region"},
              {"prop", s.prop},
              {"min", spark::detail::vec_json(s.box_min)},
              {"max", spark::detail::vec_json(s.box_max)}};
    case K::EeProximity: return {{"kind", "ee_proximity"}, {"gap", s.gap}};
    case K::PropHeldBy: return {{"kind", "prop_held_by"}, {"prop", s.prop}, {"arm", s.arm}};
  }
  return {};
}

inline SuccessPredicate success_from_json(const nlohmann::json& j) {
  using K = SuccessPredicate::Kind;
  SuccessPredicate s;
  const std::string kind = j.at("kind").get<std::string>();
  s.prop = j.value("prop", std::size_t{0});
  s.arm = j.value("arm", 0);
  if (kind == "always") {
    s.kind = K::Always;
  } else if (kind == "prop_placed") {
    s.kind = K::PropPlaced;
    s.goal = spark::detail::json_vec<3>(j.at("goal"), "success.goal");
    s.tolerance = j.value("tolerance", s.tolerance);
  } else if (kind == "prop_lifted") {
    s.kind = K::PropLifted;
    s.min_z = j.at("min_z").get<double>();
  } else if (kind == "prop_in_region") {
    s.kind = K::PropInRegion;
    s.box_min = spark::detail::json_vec<3>(j.at("min"), "success.min");
    s.box_max = spark::detail::json_vec<3>(j.at("max"), "success.max");
  } else if (kind == "ee_proximity") {
    s.kind = K::EeProximity;
    s.gap = j.value("gap", s.gap);
  } else if (kind == "prop_held_by") {
    s.kind = K::PropHeldBy;
  } else {
    throw std::invalid_argument("success: unknown kind '" + kind + "'");
  }
  return s;
}

struct Scenario {
  std::string name;
  std::vector<std::string> tags;
  WorldConfig world;
  std::vector<Prop> props;
  std::array<Script, kArmCount> scripts{};
  SuccessPredicate success;
  double timeout_s = 10.0;
  double estop_reset_delay_s = 1.0;  // operator reset after a trip; negative disables

  void validate() const {
    if (name.empty()) throw std::invalid_argument("scenario: empty name");
    world.validate();
    for (const Script& s : scripts) s.validate();
    success.validate(props.size());
    if (!(timeout_s > 0.0) || !std::isfinite(timeout_s)) throw std::invalid_argument("scenario: timeout must be > 0");
    if (!std::isfinite(estop_reset_delay_s)) throw std::invalid_argument("scenario: bad estop_reset_delay");
  }
};

inline nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json props = nlohmann::json::array();
  for (const Prop& p : s.props) props.push_back(prop_to_json(p));
  nlohmann::json scripts = nlohmann::json::array();
  for (const Script& sc : s.scripts) scripts.push_back(script_to_json(sc));
  return {{"name", s.name},
          {"tags", s.tags},
          {"world", world_to_json(s.world)},
          {"props", props},
          {"scripts", scripts},
          {"success", success_to_json(s.success)},
          {"timeout", s.timeout_s},
          {"estop_reset_delay", s.estop_reset_delay_s}};
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s;
  s.name = j.at("name").get<std::string>();
  s.tags = j.value("tags", std::vector<std::string>{});
  if (j.contains("world")) s.world = world_from_json(j.at("world"));
  for (const auto& p : j.value("props", nlohmann::json::array())) s.props.push_back(prop_from_json(p));
  if (j.contains("scripts")) {
    const auto& a = j.at("scripts");
    if (!a.is_array() || a.size() > kArmCount) throw std::invalid_argument("scenario: scripts must be a list per arm");
    for (std::size_t i = 0; i < a.size(); ++i) s.scripts[i] = script_from_json(a[i]);
  }
  s.success = success_from_json(j.value("success", nlohmann::json{{"kind", "always"}}));
  s.timeout_s = j.value("timeout", s.timeout_s);
  s.estop_reset_delay_s = j.value("estop_reset_delay", s.estop_reset_delay_s);
  s.validate();
  return s;
}

namespace scenarios {

inline JointVector joints(double a, double b, double c, double d, double e, double f) {
  JointVector q;
  q << a, b, c, d, e, f;
  return q;
}

inline WorldConfig bundled_world() {
  WorldConfig w;
  w.home_on_reset = true;
  return w;
}

// Arm 0 carries a piece down onto the table, lets go and backs off. The
// script asks for 15 mm of penetration below the resting contact height.
inline Scenario place() {
  const JointVector home = default_home();
  const JointVector above = joints(0.0, -1.2054, 2.1163, -2.4816, -1.5708, 0.0);   // ee z 0.150
  const JointVector pressed = joints(0.0, -0.9259, 2.1403, -2.7852, -1.5708, 0.0); // ee z 0.035
  const JointVector lifted = joints(0.0, -1.3068, 2.0774, -2.3413, -1.5708, 0.0);  // ee z 0.200
  Scenario s;
  s.name = "place";
  s.tags = {"positional-precision"};
  s.world = bundled_world();
  s.props = {Prop{"piece", Vec3(0.108, -0.1333, 0.488), 0.05, 0, false}};
  s.scripts[0] = Script({{0.0, home, 0.0},
                         {1.0, above, 0.0},
                         {2.5, pressed, 0.0},
                         {4.0, pressed, 0.0},
                         {4.5, pressed, 1.0},
                         {5.5, lifted, 1.0}});
  s.success.kind = SuccessPredicate::Kind::PropPlaced;
  s.success.goal = Vec3(0.108, -0.1333, 0.0);
  s.success.tolerance = 0.03;
  s.timeout_s = 15.0;
  return s;
}

// Arm 1 closes on a small target that only attaches within 1 cm.
inline Scenario precision_grasp() {
  const JointVector home = default_home();
  const JointVector above = joints(-0.0747, -1.2920, 2.2530, -2.5317, -1.5708, 0.0);
  const JointVector at = joints(-0.0747, -1.0307, 2.2824, -2.8225, -1.5708, 0.0);
  const JointVector lifted = joints(-0.0747, -1.4072, 2.2104, -2.3740, -1.5708, 0.0);
  Scenario s;
  s.name = "precision-grasp";
  s.tags = {"positional-precision", "rotational-precision"};
  s.world = bundled_world();
  s.props = {Prop{"tab", Vec3(-0.15, 0.10, 0.05), 0.01, -1, false}};
  s.scripts[1] = Script({{0.0, home, 1.0},
                         {1.5, above, 1.0},
                         {3.0, at, 1.0},
                         {3.5, at, 1.0},
                         {4.0, at, 0.0},
                         {5.5, lifted, 0.0}});
  s.success.kind = SuccessPredicate::Kind::PropLifted;
  s.success.arm = 1;
  s.success.min_z = 0.12;
  s.timeout_s = 15.0;
  return s;
}

// Arm 0 threads a held marker into a 3 cm wide slot.
inline Scenario insert() {
  const JointVector home = default_home();
  const JointVector approach = joints(-0.3907, -1.8837, 2.3243, -2.0114, -1.5708, 0.0);  // (0.25, 0, 0.3)
  const JointVector inside = joints(-0.3907, -1.6768, 2.4922, -2.3862, -1.5708, 0.0);    // (0.25, 0, 0.2)
  Scenario s;
  s.name = "insert";
  s.tags = {"positional-precision", "large-movement"};
  s.world = bundled_world();
  s.props = {Prop{"marker", Vec3(0.108, -0.1333, 0.488), 0.05, 0, false}};
  s.scripts[0] = Script({{0.0, home, 0.0}, {2.0, approach, 0.0}, {3.5, inside, 0.0}});
  s.success.kind = SuccessPredicate::Kind::PropInRegion;
  s.success.box_min = Vec3(0.235, -0.015, 0.17);
  s.success.box_max = Vec3(0.265, 0.015, 0.23);
  s.timeout_s = 10.0;
  return s;
}

// Both end effectors meet over the table centre.
inline Scenario proximity() {
  const JointVector home = default_home();
  const JointVector meet = joints(-0.2471, -1.3805, 1.8579, -2.0483, -1.5708, 0.0);  // (+-0.055, 0, 0.3)
  Scenario s;
  s.name = "proximity";
  s.tags = {"bimanual", "positional-precision"};
  s.world = bundled_world();
  s.scripts[0] = Script({{0.0, home, 1.0}, {3.0, meet, 1.0}});
  s.scripts[1] = Script({{0.0, home, 1.0}, {3.0, meet, 1.0}});
  s.success.kind = SuccessPredicate::Kind::EeProximity;
  s.success.gap = 0.02;
  s.timeout_s = 10.0;
  return s;
}

// Arm 0 passes its piece to arm 1.
inline Scenario handover() {
  const JointVector home = default_home();
  const JointVector meet = joints(-0.2494, -1.3917, 1.8717, -2.0508, -1.5708, 0.0);     // (+-0.06, 0, 0.3)
  const JointVector retreat = joints(-0.4604, -2.0544, 2.4171, -1.9335, -1.5708, 0.0);  // arm 1 at (-0.3, 0, 0.3)
  Scenario s;
  s.name = "handover";
  s.tags = {"bimanual", "large-movement"};
  s.world = bundled_world();
  s.props = {Prop{"piece", Vec3(0.108, -0.1333, 0.488), 0.15, 0, false}};
  s.scripts[0] = Script({{0.0, home, 0.0}, {3.0, meet, 0.0}, {4.0, meet, 0.0}, {4.5, meet, 1.0}});
  s.scripts[1] = Script({{0.0, home, 1.0}, {3.0, meet, 1.0}, {3.5, meet, 0.0}, {5.0, meet, 0.0}, {6.5, retreat, 0.0}});
  s.success.kind = SuccessPredicate::Kind::PropHeldBy;
  s.success.arm = 1;
  s.timeout_s = 12.0;
  return s;
}

// Nothing to do; the predicate already holds at t = 0.
inline Scenario idle() {
  Scenario s;
  s.name = "idle";
  s.world = bundled_world();
  s.timeout_s = 1.0;
  return s;
}

}  // namespace scenarios

inline std::vector<std::string> bundled_scenario_names() {
  return {"place", "precision-grasp", "insert", "proximity", "handover", "idle"};
}

inline Scenario bundled_scenario(const std::string& name) {
  if (name == "place") return scenarios::place();
  if (name == "precision-grasp") return scenarios::precision_grasp();
  if (name == "insert") return scenarios::insert();
  if (name == "proximity") return scenarios::proximity();
  if (name == "handover") return scenarios::handover();
  if (name == "idle") return scenarios::idle();
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

/// Bundled name, or a path to a scenario JSON file.
inline Scenario load_scenario(const std::string& name_or_path) {
  for (const auto& n : bundled_scenario_names()) {
    if (n == name_or_path) return bundled_scenario(n);
  }
  std::ifstream in(name_or_path);
  if (!in) throw std::invalid_argument("unknown scenario '" + name_or_path + "'");
  return scenario_from_json(nlohmann::json::parse(in));
}

}  // namespace spark::harness
