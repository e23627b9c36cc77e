#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spark/kinematics.hpp"

namespace spark {

inline constexpr std::size_t kArmCount = 2;

using Vec6 = Eigen::Matrix<double, 6, 1>;

struct Wrench {
  Vec3 force = Vec3::Zero();   // N
  Vec3 torque = Vec3::Zero();  // N*m

  Vec6 stacked() const {
    Vec6 w;
    w << force, torque;
    return w;
  }
  Wrench operator+(const Wrench& o) const { return {force + o.force, torque + o.torque}; }
  Wrench operator-() const { return {-force, -torque}; }
  bool operator==(const Wrench&) const = default;
};

struct ContactModel {
  double table_height = 0.0;   // m
  double stiffness_k = 3000.0;  // N/m
  double damping_c = 50.0;      // N*s/m
  double ee_radius = 0.05;      // m

  void validate() const {
    if (!(stiffness_k > 0.0)) throw std::invalid_argument("contact: stiffness must be > 0");
    if (!(damping_c >= 0.0)) throw std::invalid_argument("contact: damping must be >= 0");
    if (!(ee_radius > 0.0)) throw std::invalid_argument("contact: ee_radius must be > 0");
  }
};

struct BasePlacement {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  Pose pose() const { return Pose::from_xyz_yaw(position, yaw); }
};

inline JointVector default_home() {
  constexpr double h = std::numbers::pi / 2.0;
  JointVector q;
  q << 0.0, -h, h, -h, -h, 0.0;
  return q;
}

struct WorldConfig {
  DHTable table = ur5e_table();
  ContactModel contact;
  // Bases 1.2 m apart, each reaching toward the center line.
  std::array<BasePlacement, kArmCount> bases{{{Vec3(0.6, 0.0, 0.0), 0.0}, {Vec3(-0.6, 0.0, 0.0), std::numbers::pi}}};
  double estop_threshold = 25.0;  // N
  std::array<JointVector, kArmCount> home{default_home(), default_home()};
  double qd_limit = std::numbers::pi;  // rad/s
  double accel_limit = 6.0;            // rad/s^2
  bool home_on_reset = false;
  double topple_height = 0.02;  // m; release higher than this above rest topples the prop

  void validate() const {
    contact.validate();
    if (!(estop_threshold > 0.0)) throw std::invalid_argument("world: estop_threshold must be > 0");
    if (!(qd_limit > 0.0)) throw std::invalid_argument("world: qd_limit must be > 0");
    if (!(accel_limit > 0.0)) throw std::invalid_argument("world: accel_limit must be > 0");
    for (const auto& h : home) {
      if (!h.allFinite()) throw std::invalid_argument("world: home must be finite");
    }
  }
};

namespace detail {
inline nlohmann::json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}
template <int N>
Eigen::Matrix<double, N, 1> json_vec(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(N)) {
    throw std::invalid_argument(std::string(what) + ": expected array of " + std::to_string(N));
  }
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) out(i) = j[static_cast<std::size_t>(i)].get<double>();
  return out;
}
}  // namespace detail

inline nlohmann::json world_to_json(const WorldConfig& c) {
  nlohmann::json bases = nlohmann::json::array();
  for (const auto& b : c.bases) bases.push_back({{"position", detail::vec_json(b.position)}, {"yaw", b.yaw}});
  nlohmann::json home = nlohmann::json::array();
  for (const auto& h : c.home) home.push_back(detail::vec_json(h));
  return {{"dh", table_to_json(c.table)},
          {"table_height", c.contact.table_height},
          {"contact", {{"k", c.contact.stiffness_k}, {"c", c.contact.damping_c}, {"ee_radius", c.contact.ee_radius}}},
          {"bases", bases},
          {"estop_threshold", c.estop_threshold},
          {"home", home},
          {"qd_limit", c.qd_limit},
          {"accel_limit", c.accel_limit},
          {"home_on_reset", c.home_on_reset},
          {"topple_height", c.topple_height}};
}

inline WorldConfig world_from_json(const nlohmann::json& j, WorldConfig base = {}) {
  if (j.contains("dh")) base.table = table_from_json(j.at("dh"));
  base.contact.table_height = j.value("table_height", base.contact.table_height);
  if (j.contains("contact")) {
    const auto& c = j.at("contact");
    base.contact.stiffness_k = c.value("k", base.contact.stiffness_k);
    base.contact.damping_c = c.value("c", base.contact.damping_c);
    base.contact.ee_radius = c.value("ee_radius", base.contact.ee_radius);
  }
  if (j.contains("bases")) {
    const auto& b = j.at("bases");
    if (!b.is_array() || b.size() != kArmCount) throw std::invalid_argument("world: bases needs 2 entries");
    for (std::size_t i = 0; i < kArmCount; ++i) {
      base.bases[i].position = detail::json_vec<3>(b[i].at("position"), "world.bases.position");
      base.bases[i].yaw = b[i].value("yaw", 0.0);
    }
  }
  base.estop_threshold = j.value("estop_threshold", base.estop_threshold);
  if (j.contains("home")) {
    const auto& h = j.at("home");
    if (!h.is_array() || h.size() != kArmCount) throw std::invalid_argument("world: home needs 2 entries");
    for (std::size_t i = 0; i < kArmCount; ++i) base.home[i] = detail::json_vec<6>(h[i], "world.home");
  }
  base.qd_limit = j.value("qd_limit", base.qd_limit);
  base.accel_limit = j.value("accel_limit", base.accel_limit);
  base.home_on_reset = j.value("home_on_reset", base.home_on_reset);
  base.topple_height = j.value("topple_height", base.topple_height);
  base.validate();
  return base;
}

struct ArmState {
  JointVector q = JointVector::Zero();
  JointVector qd = JointVector::Zero();
  double gripper = 1.0;  // aperture: 1 open, 0 closed
  Pose base_pose;

  bool gripper_closed() const { return gripper < 0.5; }
};

struct EStopState {
  bool tripped = false;
  double trip_force = 0.0;
  std::uint64_t trip_tick = 0;
  int count = 0;
};

/// Latching over-force check. Trips iff |F| > threshold; once tripped it
/// stays tripped (and does not recount) until `estop_reset`.
inline bool estop_check(EStopState& state, const Wrench& wrench, double threshold, std::uint64_t tick) {
  if (state.tripped) return true;
  const double f = wrench.force.norm();
  if (f > threshold) {
    state.tripped = true;
    state.trip_force = f;
    state.trip_tick = tick;
    ++state.count;
  }
  return state.tripped;
}

/// Spring-damper contact of an end-effector sphere with the table plane.
/// `damping` receives the velocity-dependent part of the returned force.
inline Vec3 table_contact(const Vec3& ee, const Vec3& ee_velocity, const ContactModel& m, Vec3* damping = nullptr) {
  if (damping) damping->setZero();
  const double penetration = m.table_height + m.ee_radius - ee.z();
  if (penetration <= 0.0) return Vec3::Zero();
  const double spring = m.stiffness_k * penetration;
  double damp = -m.damping_c * ee_velocity.z();
  // No adhesion: the total normal force never pulls into the table.
  if (spring + damp < 0.0) damp = -spring;
  if (damping) *damping = Vec3(0.0, 0.0, damp);
  return Vec3(0.0, 0.0, spring + damp);
}

/// Equal and opposite spring forces between two end-effector spheres.
inline std::pair<Wrench, Wrench> inter_arm_contact(const Vec3& ee_a, const Vec3& ee_b, const ContactModel& m) {
  const Vec3 delta = ee_a - ee_b;
  const double dist = delta.norm();
  const double overlap = 2.0 * m.ee_radius - dist;
  if (overlap <= 0.0) return {Wrench{}, Wrench{}};
  const Vec3 dir = dist > 0.0 ? Vec3(delta / dist) : Vec3::UnitX();
  Wrench on_a;
  on_a.force = dir * (m.stiffness_k * overlap);
  return {on_a, -on_a};
}

struct Prop {
  std::string name;
  Vec3 position = Vec3::Zero();
  double grasp_radius = 0.02;
  int holder = -1;  // arm index, -1 when free
  bool toppled = false;

  bool operator==(const Prop&) const = default;
};

inline nlohmann::json prop_to_json(const Prop& p) {
  return {{"name", p.name},
          {"position", detail::vec_json(p.position)},
          {"grasp_radius", p.grasp_radius},
          {"holder", p.holder},
          {"toppled", p.toppled}};
}

inline Prop prop_from_json(const nlohmann::json& j) {
  Prop p;
  p.name = j.value("name", std::string("prop"));
  p.position = detail::json_vec<3>(j.at("position"), "prop.position");
  p.grasp_radius = j.value("grasp_radius", p.grasp_radius);
  p.holder = j.value("holder", -1);
  p.toppled = j.value("toppled", false);
  if (p.holder < -1 || p.holder >= static_cast<int>(kArmCount)) throw std::invalid_argument("prop: bad holder");
  if (!(p.grasp_radius > 0.0)) throw std::invalid_argument("prop: grasp_radius must be > 0");
  return p;
}

struct ArmCommand {
  JointVector joint_speeds = JointVector::Zero();  // rad/s setpoint
  double gripper = 1.0;
};

struct ArmSense {
  Wrench wrench;  // external force on the end effector (sensor reading)
  Wrench table_wrench;
  Wrench peer_wrench;
  JointVector tau = JointVector::Zero();  // joint load torques, J^T * (-wrench)
  Vec3 ee_position = Vec3::Zero();
  Vec3 ee_velocity = Vec3::Zero();
  Vec3 table_damping = Vec3::Zero();
};

struct SenseFrame {
  std::uint64_t tick = 0;
  double sim_time = 0.0;
  std::array<ArmSense, kArmCount> arms{};
  std::array<bool, kArmCount> tripped_now{};  // latch transitioned this tick
};

/// Kinematic two-arm world advanced at a fixed timestep.
///
/// Joint velocities follow the commanded setpoints subject to an acceleration
/// cap and a speed limit; contacts are evaluated after integration and mapped
/// to joint torques through the world-frame Jacobian.
class World {
 public:
  explicit World(WorldConfig cfg = {}, std::vector<Prop> props = {}) : cfg_(std::move(cfg)), props_(std::move(props)) {
    cfg_.validate();
    for (std::size_t i = 0; i < kArmCount; ++i) {
      arms_[i].q = cfg_.home[i];
      arms_[i].base_pose = cfg_.bases[i].pose();
    }
    for (const Prop& p : props_) {
      if (p.holder >= 0) arms_[static_cast<std::size_t>(p.holder)].gripper = 0.0;
    }
    for (std::size_t i = 0; i < kArmCount; ++i) was_closed_[i] = arms_[i].gripper_closed();
    refresh_kinematics();
    for (Prop& p : props_) {
      if (p.holder >= 0) p.position = ee_[static_cast<std::size_t>(p.holder)].position;
    }
  }

  const WorldConfig& config() const { return cfg_; }
  const ArmState& arm(std::size_t i) const { return arms_.at(i); }
  const EStopState& estop(std::size_t i) const { return estops_.at(i); }
  const std::vector<Prop>& props() const { return props_; }
  std::uint64_t tick() const { return tick_; }
  double sim_time() const { return sim_time_; }
  const SenseFrame& last_frame() const { return frame_; }

  Vec3 ee_position(std::size_t i) const { return ee_[i].position; }
  const Pose& ee_pose(std::size_t i) const { return ee_.at(i); }

  void set_joints(std::size_t i, const JointVector& q) {
    arms_.at(i).q = q;
    arms_[i].qd.setZero();
    refresh_kinematics();
  }
  void set_gripper(std::size_t i, double g) { arms_.at(i).gripper = std::clamp(g, 0.0, 1.0); }

  SenseFrame step(const std::array<ArmCommand, kArmCount>& commands, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("world step: dt must be > 0");
    const double dv_max = cfg_.accel_limit * dt;

    for (std::size_t i = 0; i < kArmCount; ++i) {
      ArmState& a = arms_[i];
      if (estops_[i].tripped) {
        a.qd.setZero();
        continue;
      }
      const JointVector& cmd = commands[i].joint_speeds;
      for (Eigen::Index j = 0; j < 6; ++j) {
        const double target = std::isfinite(cmd(j)) ? std::clamp(cmd(j), -cfg_.qd_limit, cfg_.qd_limit) : 0.0;
        a.qd(j) += std::clamp(target - a.qd(j), -dv_max, dv_max);
      }
      a.q += a.qd * dt;
      if (std::isfinite(commands[i].gripper)) a.gripper = std::clamp(commands[i].gripper, 0.0, 1.0);
    }
    refresh_kinematics();
    ++tick_;
    sim_time_ = static_cast<double>(tick_) * dt;
    frame_ = sense();
    update_props();
    return frame_;
  }

  /// Clears a tripped latch; no-op otherwise. The trip count is kept.
  void estop_reset(std::size_t i) {
    EStopState& e = estops_.at(i);
    if (!e.tripped) return;
    e.tripped = false;
    arms_[i].qd.setZero();
    if (cfg_.home_on_reset) {
      arms_[i].q = cfg_.home[i];
      refresh_kinematics();
    }
  }

  /// Trips the latch without a force event (operator e-stop / test injection).
  void force_estop(std::size_t i) {
    EStopState& e = estops_.at(i);
    if (e.tripped) return;
    e.tripped = true;
    e.trip_force = frame_.arms[i].wrench.force.norm();
    e.trip_tick = tick_;
    ++e.count;
    arms_[i].qd.setZero();
  }

  double rest_height() const { return cfg_.contact.table_height + cfg_.contact.ee_radius; }

 private:
  void refresh_kinematics() {
    for (std::size_t i = 0; i < kArmCount; ++i) {
      ee_[i] = arms_[i].base_pose * forward_kinematics(cfg_.table, arms_[i].q);
      jac_[i] = rotate_jacobian(arms_[i].base_pose.rotation, jacobian(cfg_.table, arms_[i].q));
    }
  }

  SenseFrame sense() {
    SenseFrame f;
    f.tick = tick_;
    f.sim_time = sim_time_;
    for (std::size_t i = 0; i < kArmCount; ++i) {
      ArmSense& s = f.arms[i];
      s.ee_position = ee_[i].position;
      s.ee_velocity = jac_[i].topRows<3>() * arms_[i].qd;
      s.table_wrench.force = table_contact(s.ee_position, s.ee_velocity, cfg_.contact, &s.table_damping);
    }
    const auto [on_a, on_b] = inter_arm_contact(ee_[0].position, ee_[1].position, cfg_.contact);
    f.arms[0].peer_wrench = on_a;
    f.arms[1].peer_wrench = on_b;
    for (std::size_t i = 0; i < kArmCount; ++i) {
      ArmSense& s = f.arms[i];
      s.wrench = s.table_wrench + s.peer_wrench;
      s.tau = jac_[i].transpose() * (-s.wrench).stacked();
      const bool was = estops_[i].tripped;
      if (estop_check(estops_[i], s.wrench, cfg_.estop_threshold, tick_) && !was) {
        f.tripped_now[i] = true;
        arms_[i].qd.setZero();
      }
    }
    return f;
  }

  void update_props() {
    for (Prop& p : props_) {
      if (p.holder >= 0) {
        const auto h = static_cast<std::size_t>(p.holder);
        if (!arms_[h].gripper_closed()) {
          const int taker = closed_arm_near(p, h);
          if (taker >= 0) {
            p.holder = taker;
            p.position = ee_[static_cast<std::size_t>(taker)].position;
          } else {
            p.holder = -1;
            const double drop = p.position.z() - rest_height();
            if (drop > cfg_.topple_height) p.toppled = true;
            p.position.z() = rest_height();
          }
        } else {
          p.position = ee_[h].position;
        }
      } else {
        for (std::size_t i = 0; i < kArmCount; ++i) {
          const bool closing = arms_[i].gripper_closed() && !was_closed_[i];
          if (closing && (ee_[i].position - p.position).norm() <= p.grasp_radius && !holds_any(i)) {
            p.holder = static_cast<int>(i);
            p.position = ee_[i].position;
            break;
          }
        }
      }
    }
    for (std::size_t i = 0; i < kArmCount; ++i) was_closed_[i] = arms_[i].gripper_closed();
  }

  int closed_arm_near(const Prop& p, std::size_t except) const {
    for (std::size_t i = 0; i < kArmCount; ++i) {
      if (i == except || !arms_[i].gripper_closed() || holds_any(i)) continue;
      if ((ee_[i].position - p.position).norm() <= p.grasp_radius) return static_cast<int>(i);
    }
    return -1;
  }

  bool holds_any(std::size_t arm) const {
    return std::any_of(props_.begin(), props_.end(), [&](const Prop& p) { return p.holder == static_cast<int>(arm); });
  }

  WorldConfig cfg_;
  std::vector<Prop> props_;
  std::array<ArmState, kArmCount> arms_{};
  std::array<EStopState, kArmCount> estops_{};
  std::array<Pose, kArmCount> ee_{};
  std::array<Jacobian, kArmCount> jac_{};
  std::array<bool, kArmCount> was_closed_{};
  std::uint64_t tick_ = 0;
  double sim_time_ = 0.0;
  SenseFrame frame_{};
};

}  // namespace spark
