#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "spark/force_controller.hpp"
#include "spark/haptics.hpp"
#include "spark/link/channel.hpp"

namespace spark::harness {

enum class Variant { Basic, FG, FC, FGC };

inline std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Basic: return "basic";
    case Variant::FG: return "fg";
    case Variant::FC: return "fc";
    case Variant::FGC: return "fgc";
  }
  return "basic";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "basic") return Variant::Basic;
  if (s == "fg") return Variant::FG;
  if (s == "fc") return Variant::FC;
  if (s == "fgc") return Variant::FGC;
  throw std::invalid_argument("unknown variant '" + std::string(s) + "'");
}

inline bool glove_enabled(Variant v) { return v == Variant::FG || v == Variant::FGC; }
inline bool force_control_enabled(Variant v) { return v == Variant::FC || v == Variant::FGC; }

struct VariantConfig {
  Variant mode = Variant::Basic;
  std::string channel_name = "inperson";
  link::ChannelConfig channel = link::inperson_profile();
  ControllerGains gains{};
  HapticConfig haptics{};

  void validate() const {
    channel.validate();
    gains.validate();
    haptics.validate();
  }
};

inline VariantConfig make_variant(Variant mode, const std::string& channel_name) {
  VariantConfig v;
  v.mode = mode;
  v.channel_name = channel_name;
  v.channel = link::channel_profile(channel_name);
  return v;
}

inline nlohmann::json variant_to_json(const VariantConfig& v) {
  return {{"mode", variant_name(v.mode)},
          {"channel_name", v.channel_name},
          {"channel", link::channel_to_json(v.channel)},
          {"gains", gains_to_json(v.gains)},
          {"haptics", haptics_to_json(v.haptics)}};
}

inline VariantConfig variant_from_json(const nlohmann::json& j) {
  VariantConfig v;
  v.mode = parse_variant(j.at("mode").get<std::string>());
  v.channel_name = j.value("channel_name", std::string("custom"));
  v.channel = link::channel_from_json(j.at("channel"));
  v.gains = gains_from_json(j.at("gains"));
  v.haptics = haptics_from_json(j.at("haptics"));
  v.validate();
  return v;
}

}  // namespace spark::harness
