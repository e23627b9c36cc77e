#pragma once

#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "spark/harness/session.hpp"

namespace spark::harness {

/// Thrown for anything wrong with user-supplied configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Resolves CLI selections plus an optional override document into run
/// options. Recognised override keys: scenario (object), world, props,
/// timeout, estop_reset_delay, gains, haptics, channel, dt, perturbation,
/// encoder_bits, forced_estops.
inline RunOptions build_options(const std::string& scenario, const std::string& variant, std::uint64_t seed,
                                const std::string& channel, const std::optional<nlohmann::json>& overrides = {}) {
  try {
    RunOptions o;
    const nlohmann::json ov = overrides.value_or(nlohmann::json::object());
    if (!ov.is_object()) throw std::invalid_argument("config must be a JSON object");
    o.scenario = ov.contains("scenario") ? scenario_from_json(ov.at("scenario")) : load_scenario(scenario);
    if (ov.contains("world")) o.scenario.world = world_from_json(ov.at("world"), o.scenario.world);
    if (ov.contains("props")) {
      o.scenario.props.clear();
      for (const auto& p : ov.at("props")) o.scenario.props.push_back(prop_from_json(p));
    }
    o.scenario.timeout_s = ov.value("timeout", o.scenario.timeout_s);
    o.scenario.estop_reset_delay_s = ov.value("estop_reset_delay", o.scenario.estop_reset_delay_s);

    o.variant = make_variant(parse_variant(variant), channel);
    if (ov.contains("gains")) o.variant.gains = gains_from_json(ov.at("gains"), o.variant.gains);
    if (ov.contains("haptics")) o.variant.haptics = haptics_from_json(ov.at("haptics"), o.variant.haptics);
    if (ov.contains("channel")) {
      o.variant.channel = link::channel_from_json(ov.at("channel"), o.variant.channel);
      o.variant.channel_name = channel + "+custom";
    }
    o.seed = seed;
    o.dt = ov.value("dt", o.dt);
    o.perturbation = ov.value("perturbation", o.perturbation);
    o.encoder_bits = ov.value("encoder_bits", o.encoder_bits);
    for (const auto& f : ov.value("forced_estops", nlohmann::json::array())) {
      o.forced_estops.push_back({f.at("arm").get<std::size_t>(), f.at("at").get<double>(), f.at("duration").get<double>()});
    }
    o.validate();
    return o;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace spark::harness
