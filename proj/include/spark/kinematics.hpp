#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>

#include <Eigen/Dense>
#include <json.hpp>

#include "spark/dual.hpp"

namespace spark {

inline constexpr std::size_t kJointCount = 6;

using JointVector = Eigen::Matrix<double, 6, 1>;
using Jacobian = Eigen::Matrix<double, 6, 6>;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Joint angles in a scalar-generic container, used for differentiable losses.
template <typename T>
using JointArray = std::array<T, kJointCount>;

/// One standard Denavit-Hartenberg row: Rz(theta) Tz(d) Tx(a) Rx(alpha).
struct DHRow {
  double theta_offset = 0.0;
  double a = 0.0;
  double d = 0.0;
  double alpha = 0.0;

  bool finite() const {
    return std::isfinite(theta_offset) && std::isfinite(a) && std::isfinite(d) && std::isfinite(alpha);
  }
  bool operator==(const DHRow&) const = default;
};

/// Six DH rows plus a uniform length scale. The rows are stored unscaled;
/// link lengths (a, d) are multiplied by `scale` when evaluated.
class DHTable {
 public:
  DHTable() = default;
  DHTable(std::string name, std::array<DHRow, kJointCount> rows, double scale = 1.0)
      : name_(std::move(name)), rows_(rows), scale_(scale) {
    if (!(scale_ > 0.0) || !std::isfinite(scale_)) {
      throw std::invalid_argument("DH table scale must be finite and > 0");
    }
    for (const auto& r : rows_) {
      if (!r.finite()) throw std::invalid_argument("DH table rows must be finite");
    }
  }

  const std::string& name() const { return name_; }
  double scale() const { return scale_; }
  const std::array<DHRow, kJointCount>& rows() const { return rows_; }

  /// Row i with a and d multiplied by the table scale.
  DHRow effective_row(std::size_t i) const {
    DHRow r = rows_[i];
    r.a *= scale_;
    r.d *= scale_;
    return r;
  }

  /// Same geometry uniformly scaled by `factor` (compounds with the current scale).
  DHTable scaled(double factor) const { return DHTable(name_, rows_, scale_ * factor); }

  bool operator==(const DHTable&) const = default;

 private:
  std::string name_ = "zero";
  std::array<DHRow, kJointCount> rows_{};
  double scale_ = 1.0;
};

/// The UR5e follower profile.
inline DHTable ur5e_table() {
  constexpr double half_pi = std::numbers::pi / 2.0;
  return DHTable("ur5e",
                 {{
                     {0.0, 0.0, 0.1625, half_pi},
                     {0.0, -0.425, 0.0, 0.0},
                     {0.0, -0.3922, 0.0, 0.0},
                     {0.0, 0.0, 0.1333, half_pi},
                     {0.0, 0.0, 0.0997, -half_pi},
                     {0.0, 0.0, 0.0996, 0.0},
                 }},
                 1.0);
}

/// The half-size leader replica of the UR5e.
inline DHTable ur5e_leader_table() {
  DHTable t = ur5e_table().scaled(0.5);
  return DHTable("ur5e-leader", t.rows(), t.scale());
}

inline DHTable table_from_json(const nlohmann::json& j) {
  const auto& rows_j = j.at("rows");
  if (!rows_j.is_array() || rows_j.size() != kJointCount) {
    throw std::invalid_argument("DH profile must have exactly 6 rows");
  }
  std::array<DHRow, kJointCount> rows{};
  for (std::size_t i = 0; i < kJointCount; ++i) {
    const auto& r = rows_j[i];
    if (!r.is_array() || r.size() != 4) {
      throw std::invalid_argument("DH row must be [theta_offset, a, d, alpha]");
    }
    rows[i] = {r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>()};
  }
  return DHTable(j.value("name", std::string("custom")), rows, j.value("scale", 1.0));
}

inline nlohmann::json table_to_json(const DHTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows()) rows.push_back({r.theta_offset, r.a, r.d, r.alpha});
  return {{"name", t.name()}, {"scale", t.scale()}, {"rows", rows}};
}

/// Rigid transform. `rotation` is kept orthonormal by construction.
struct Pose {
  Vec3 position = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();

  static Pose identity() { return {}; }

  /// Planar base placement: translation plus rotation about world z.
  static Pose from_xyz_yaw(const Vec3& p, double yaw) {
    Pose out;
    out.position = p;
    out.rotation = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
    return out;
  }

  Pose operator*(const Pose& o) const {
    return {position + rotation * o.position, rotation * o.rotation};
  }
  Vec3 apply(const Vec3& p) const { return position + rotation * p; }
};

// Scalar-generic affine transform used by the differentiable FK path.
template <typename T>
struct Affine {
  std::array<std::array<T, 3>, 3> r{};
  std::array<T, 3> p{};

  static Affine identity() {
    Affine out;
    for (int i = 0; i < 3; ++i) {
      for (int k = 0; k < 3; ++k) out.r[i][k] = T(i == k ? 1.0 : 0.0);
      out.p[i] = T(0.0);
    }
    return out;
  }

  Affine operator*(const Affine& o) const {
    Affine out;
    for (int i = 0; i < 3; ++i) {
      for (int k = 0; k < 3; ++k) {
        out.r[i][k] = r[i][0] * o.r[0][k] + r[i][1] * o.r[1][k] + r[i][2] * o.r[2][k];
      }
      out.p[i] = r[i][0] * o.p[0] + r[i][1] * o.p[1] + r[i][2] * o.p[2] + p[i];
    }
    return out;
  }
};

template <typename T>
Affine<T> dh_affine(const DHRow& row, const T& theta) {
  using std::cos;
  using std::sin;
  const T th = theta + row.theta_offset;
  const T ct = cos(th);
  const T st = sin(th);
  const double ca = std::cos(row.alpha);
  const double sa = std::sin(row.alpha);
  Affine<T> A;
  A.r[0] = {ct, -st * ca, st * sa};
  A.r[1] = {st, ct * ca, -ct * sa};
  A.r[2] = {T(0.0), T(sa), T(ca)};
  A.p = {ct * row.a, st * row.a, T(row.d)};
  return A;
}

/// End-effector transform for any scalar type (double or Dual).
template <typename T>
Affine<T> forward_kinematics_generic(const DHTable& table, const JointArray<T>& q) {
  Affine<T> out = Affine<T>::identity();
  for (std::size_t j = 0; j < kJointCount; ++j) out = out * dh_affine(table.effective_row(j), q[j]);
  return out;
}

inline Pose to_pose(const Affine<double>& a) {
  Pose out;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) out.rotation(i, k) = a.r[i][k];
    out.position(i) = a.p[i];
  }
  return out;
}

inline JointArray<double> to_array(const JointVector& q) {
  JointArray<double> out{};
  for (std::size_t i = 0; i < kJointCount; ++i) out[i] = q(static_cast<Eigen::Index>(i));
  return out;
}

inline Pose joint_transform(const DHRow& row, double theta) { return to_pose(dh_affine(row, theta)); }

inline Pose forward_kinematics(const DHTable& table, const JointVector& q) {
  return to_pose(forward_kinematics_generic(table, to_array(q)));
}

/// Geometric Jacobian at the end effector, expressed in the base frame.
/// Rows 0-2 are linear velocity (m/rad), rows 3-5 angular velocity (rad/rad).
inline Jacobian jacobian(const DHTable& table, const JointVector& q) {
  std::array<Pose, kJointCount + 1> frames;
  frames[0] = Pose::identity();
  for (std::size_t j = 0; j < kJointCount; ++j) {
    frames[j + 1] = frames[j] * joint_transform(table.effective_row(j), q(static_cast<Eigen::Index>(j)));
  }
  const Vec3 tip = frames[kJointCount].position;
  Jacobian J;
  for (std::size_t j = 0; j < kJointCount; ++j) {
    const Vec3 axis = frames[j].rotation.col(2);
    const auto col = static_cast<Eigen::Index>(j);
    J.block<3, 1>(0, col) = axis.cross(tip - frames[j].position);
    J.block<3, 1>(3, col) = axis;
  }
  return J;
}

/// Jacobian re-expressed in the frame that `base` maps into (typically world).
inline Jacobian rotate_jacobian(const Mat3& base_rotation, const Jacobian& J) {
  Jacobian out;
  out.topRows<3>() = base_rotation * J.topRows<3>();
  out.bottomRows<3>() = base_rotation * J.bottomRows<3>();
  return out;
}

using JointDual = Dual<kJointCount>;

/// Gradient of a scalar loss with respect to the joint angles.
///
/// `loss` is a generic callable evaluated on dual numbers, invoked either as
/// `loss(table, q)` or `loss(q)` with `q` a `JointArray<JointDual>`. Returns
/// nullopt when the loss value or any derivative is non-finite.
template <typename Loss>
std::optional<JointVector> loss_gradient(const DHTable& table, const JointVector& q, Loss&& loss) {
  JointArray<JointDual> qd;
  for (std::size_t i = 0; i < kJointCount; ++i) {
    qd[i] = JointDual::variable(q(static_cast<Eigen::Index>(i)), i);
  }
  JointDual out;
  if constexpr (std::is_invocable_v<Loss, const DHTable&, const JointArray<JointDual>&>) {
    out = loss(table, qd);
  } else {
    out = loss(qd);
  }
  if (!std::isfinite(out.v)) return std::nullopt;
  JointVector g;
  for (std::size_t i = 0; i < kJointCount; ++i) {
    if (!std::isfinite(out.d[i])) return std::nullopt;
    g(static_cast<Eigen::Index>(i)) = out.d[i];
  }
  return g;
}

/// Wraps an angle into (-pi, pi]. Only applied at serialization boundaries.
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a, two_pi);
  if (w <= -std::numbers::pi) w += two_pi;
  if (w > std::numbers::pi) w -= two_pi;
  return w;
}

}  // namespace spark
