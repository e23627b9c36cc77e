#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <span>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace spark::link {

// Frame layout (little-endian):
//   0  magic "SP"       2 bytes
//   2  version          u8 (= 1)
//   3  kind             u8
//   4  seq              u32
//   8  timestamp_us     u64
//  16  arm_id           u8
//  17  payload          LEADER_STATE 6*f64 + f32 (52), FOLLOWER_FORCE 6*f32 (24), events 0
inline constexpr std::uint8_t kMagic0 = 0x53;
inline constexpr std::uint8_t kMagic1 = 0x50;
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 17;
inline constexpr std::size_t kLeaderPayloadSize = 6 * 8 + 4;
inline constexpr std::size_t kForcePayloadSize = 6 * 4;

enum class MessageKind : std::uint8_t {
  LeaderState = 1,
  FollowerForce = 2,
  EstopEvent = 3,
  EstopReset = 4,
  Enable = 5,
  Disable = 6,
};

inline constexpr bool is_known_kind(std::uint8_t k) { return k >= 1 && k <= 6; }

inline std::string_view kind_name(MessageKind k) {
  switch (k) {
    case MessageKind::LeaderState: return "LEADER_STATE";
    case MessageKind::FollowerForce: return "FOLLOWER_FORCE";
    case MessageKind::EstopEvent: return "ESTOP_EVENT";
    case MessageKind::EstopReset: return "ESTOP_RESET";
    case MessageKind::Enable: return "ENABLE";
    case MessageKind::Disable: return "DISABLE";
  }
  return "UNKNOWN";
}

struct LeaderPayload {
  std::array<double, 6> q{};  // rad, wrapped to (-pi, pi] on the wire
  float gripper = 0.0f;
  bool operator==(const LeaderPayload&) const = default;
};

struct ForcePayload {
  std::array<float, 6> wrench{};  // fx fy fz (N), tx ty tz (N*m)
  bool operator==(const ForcePayload&) const = default;
};

using Payload = std::variant<std::monostate, LeaderPayload, ForcePayload>;

struct LinkMessage {
  MessageKind kind = MessageKind::Enable;
  std::uint32_t seq = 0;
  std::uint64_t timestamp_us = 0;
  std::uint8_t arm_id = 0;
  Payload payload;

  bool operator==(const LinkMessage&) const = default;

  /// Payload alternative matches the kind and arm_id is 0 or 1.
  bool valid() const {
    if (arm_id > 1) return false;
    switch (kind) {
      case MessageKind::LeaderState: return std::holds_alternative<LeaderPayload>(payload);
      case MessageKind::FollowerForce: return std::holds_alternative<ForcePayload>(payload);
      default: return std::holds_alternative<std::monostate>(payload);
    }
  }
};

inline std::size_t payload_size(MessageKind k) {
  switch (k) {
    case MessageKind::LeaderState: return kLeaderPayloadSize;
    case MessageKind::FollowerForce: return kForcePayloadSize;
    default: return 0;
  }
}

inline std::size_t frame_size(MessageKind k) { return kHeaderSize + payload_size(k); }

enum class DecodeError {
  BadMagic,
  BadVersion,
  TruncatedFrame,
  UnknownKind,
  BadArmId,
  TrailingBytes,
};

inline std::string_view error_name(DecodeError e) {
  switch (e) {
    case DecodeError::BadMagic: return "BadMagic";
    case DecodeError::BadVersion: return "BadVersion";
    case DecodeError::TruncatedFrame: return "TruncatedFrame";
    case DecodeError::UnknownKind: return "UnknownKind";
    case DecodeError::BadArmId: return "BadArmId";
    case DecodeError::TrailingBytes: return "TrailingBytes";
  }
  return "?";
}

namespace detail {

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U>
U get_le(std::span<const std::uint8_t> in, std::size_t at) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(in[at + i]) << (8 * i));
  return v;
}

}  // namespace detail

/// Serializes a valid message. Callers are responsible for `msg.valid()`.
inline std::vector<std::uint8_t> encode(const LinkMessage& msg) {
  std::vector<std::uint8_t> out;
  out.reserve(frame_size(msg.kind));
  out.push_back(kMagic0);
  out.push_back(kMagic1);
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(msg.kind));
  detail::put_le(out, msg.seq);
  detail::put_le(out, msg.timestamp_us);
  out.push_back(msg.arm_id);
  if (const auto* leader = std::get_if<LeaderPayload>(&msg.payload)) {
    for (double q : leader->q) detail::put_le(out, std::bit_cast<std::uint64_t>(q));
    detail::put_le(out, std::bit_cast<std::uint32_t>(leader->gripper));
  } else if (const auto* force = std::get_if<ForcePayload>(&msg.payload)) {
    for (float w : force->wrench) detail::put_le(out, std::bit_cast<std::uint32_t>(w));
  }
  return out;
}

using DecodeResult = std::variant<LinkMessage, DecodeError>;

/// Parses one frame from the front of `bytes`; `consumed` receives its length.
inline DecodeResult decode_prefix(std::span<const std::uint8_t> bytes, std::size_t& consumed) {
  consumed = 0;
  if (bytes.empty()) return DecodeError::TruncatedFrame;
  if (bytes[0] != kMagic0) return DecodeError::BadMagic;
  if (bytes.size() < 2) return DecodeError::TruncatedFrame;
  if (bytes[1] != kMagic1) return DecodeError::BadMagic;
  if (bytes.size() < 3) return DecodeError::TruncatedFrame;
  if (bytes[2] != kVersion) return DecodeError::BadVersion;
  if (bytes.size() < 4) return DecodeError::TruncatedFrame;
  if (!is_known_kind(bytes[3])) return DecodeError::UnknownKind;
  const auto kind = static_cast<MessageKind>(bytes[3]);
  if (bytes.size() < frame_size(kind)) return DecodeError::TruncatedFrame;

  LinkMessage msg;
  msg.kind = kind;
  msg.seq = detail::get_le<std::uint32_t>(bytes, 4);
  msg.timestamp_us = detail::get_le<std::uint64_t>(bytes, 8);
  msg.arm_id = bytes[16];
  if (msg.arm_id > 1) return DecodeError::BadArmId;

  if (kind == MessageKind::LeaderState) {
    LeaderPayload p;
    for (std::size_t i = 0; i < 6; ++i) {
      p.q[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(bytes, kHeaderSize + 8 * i));
    }
    p.gripper = std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes, kHeaderSize + 48));
    msg.payload = p;
  } else if (kind == MessageKind::FollowerForce) {
    ForcePayload p;
    for (std::size_t i = 0; i < 6; ++i) {
      p.wrench[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes, kHeaderSize + 4 * i));
    }
    msg.payload = p;
  }
  consumed = frame_size(kind);
  return msg;
}

/// Parses exactly one frame; extra bytes are an error.
inline DecodeResult decode(std::span<const std::uint8_t> bytes) {
  std::size_t consumed = 0;
  DecodeResult r = decode_prefix(bytes, consumed);
  if (std::holds_alternative<LinkMessage>(r) && consumed != bytes.size()) return DecodeError::TrailingBytes;
  return r;
}

/// Stamps strictly increasing sequence numbers per (kind, arm) stream.
class StreamSequencer {
 public:
  std::uint32_t next(MessageKind kind, std::uint8_t arm) { return ++counters_[{kind, arm}]; }

 private:
  std::map<std::pair<MessageKind, std::uint8_t>, std::uint32_t> counters_;
};

}  // namespace spark::link
