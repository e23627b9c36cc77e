#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "spark/kinematics.hpp"

namespace spark {

enum class IntensityCurve { Linear, Sqrt };

struct HapticConfig {
  double f_max = 20.0;    // N at full intensity
  double deadband = 0.5;  // N
  IntensityCurve curve = IntensityCurve::Linear;

  void validate() const {
    if (!(deadband >= 0.0) || !(f_max > deadband)) {
      throw std::invalid_argument("haptics: require f_max > deadband >= 0");
    }
  }
};

inline nlohmann::json haptics_to_json(const HapticConfig& c) {
  return {{"f_max", c.f_max}, {"deadband", c.deadband}, {"curve", c.curve == IntensityCurve::Linear ? "linear" : "sqrt"}};
}

inline HapticConfig haptics_from_json(const nlohmann::json& j, HapticConfig base = {}) {
  base.f_max = j.value("f_max", base.f_max);
  base.deadband = j.value("deadband", base.deadband);
  if (j.contains("curve")) {
    const auto c = j.at("curve").get<std::string>();
    if (c == "linear") {
      base.curve = IntensityCurve::Linear;
    } else if (c == "sqrt") {
      base.curve = IntensityCurve::Sqrt;
    } else {
      throw std::invalid_argument("haptics: unknown curve '" + c + "'");
    }
  }
  base.validate();
  return base;
}

/// Six motor intensities ordered (x+, x-, y+, y-, z+, z-).
struct GloveFrame {
  std::array<double, 6> intensities{};
  Vec3 source_force = Vec3::Zero();
};

inline double axis_intensity(double magnitude, const HapticConfig& cfg) {
  if (magnitude <= cfg.deadband) return 0.0;
  const double x = std::min((magnitude - cfg.deadband) / (cfg.f_max - cfg.deadband), 1.0);
  return cfg.curve == IntensityCurve::Sqrt ? std::sqrt(x) : x;
}

/// Maps the end-effector force onto the glove. Sensor axes map to glove axes
/// one to one; torque is not rendered.
inline GloveFrame force_to_glove(const Vec3& force, const HapticConfig& cfg) {
  GloveFrame out;
  out.source_force = force;
  for (int axis = 0; axis < 3; ++axis) {
    const double f = force(axis);
    const double level = axis_intensity(std::abs(f), cfg);
    out.intensities[static_cast<std::size_t>(2 * axis + (f < 0.0 ? 1 : 0))] = level;
  }
  return out;
}

inline double encoder_step(int bits) {
  if (bits < 1 || bits > 32) throw std::invalid_argument("encoder bits must be in [1, 32]");
  return 2.0 * std::numbers::pi / std::ldexp(1.0, bits);
}

/// Rounds to the nearest encoder count; ties go away from zero.
inline double quantize_encoder(double angle, int bits) {
  const double step = encoder_step(bits);
  return std::round(angle / step) * step;
}

inline JointVector quantize_joints(const JointVector& q, int bits) {
  JointVector out;
  for (Eigen::Index i = 0; i < q.size(); ++i) out(i) = quantize_encoder(q(i), bits);
  return out;
}

}  // namespace spark
