#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spark/link/protocol.hpp"

namespace spark::link {

/// Uniform draw in [0, 1) from the top 53 bits; identical on every platform.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct ChannelConfig {
  double base_latency_ms = 0.0;
  double jitter_ms = 0.0;
  double drop_probability = 0.0;
  double rate_hz = 30.0;  // applies to LEADER_STATE and FOLLOWER_FORCE streams
  std::uint64_t seed = 0;

  void validate() const {
    if (!(base_latency_ms >= 0.0)) throw std::invalid_argument("channel: base_latency_ms must be >= 0");
    if (!(jitter_ms >= 0.0)) throw std::invalid_argument("channel: jitter_ms must be >= 0");
    if (!(drop_probability >= 0.0 && drop_probability < 1.0)) {
      throw std::invalid_argument("channel: drop_probability must be in [0, 1)");
    }
    if (!(rate_hz > 0.0)) throw std::invalid_argument("channel: rate_hz must be > 0");
  }
};

/// Co-located operator: no added latency.
inline ChannelConfig inperson_profile() { return {}; }

/// Remote operator link.
inline ChannelConfig remote_profile() {
  ChannelConfig c;
  c.base_latency_ms = 100.0;
  c.jitter_ms = 5.0;
  return c;
}

inline ChannelConfig channel_profile(const std::string& name) {
  if (name == "inperson") return inperson_profile();
  if (name == "remote") return remote_profile();
  throw std::invalid_argument("unknown channel profile '" + name + "'");
}

inline nlohmann::json channel_to_json(const ChannelConfig& c) {
  return {{"base_latency_ms", c.base_latency_ms},
          {"jitter_ms", c.jitter_ms},
          {"drop_probability", c.drop_probability},
          {"rate_hz", c.rate_hz}};
}

inline ChannelConfig channel_from_json(const nlohmann::json& j, ChannelConfig base = {}) {
  base.base_latency_ms = j.value("base_latency_ms", base.base_latency_ms);
  base.jitter_ms = j.value("jitter_ms", base.jitter_ms);
  base.drop_probability = j.value("drop_probability", base.drop_probability);
  base.rate_hz = j.value("rate_hz", base.rate_hz);
  base.validate();
  return base;
}

struct ChannelStats {
  std::uint64_t sent = 0;
  std::uint64_t rate_limited = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t discarded_stale = 0;
  std::vector<std::uint64_t> latencies_us;  // per delivered message

  double mean_latency_ms() const {
    if (latencies_us.empty()) return 0.0;
    double sum = 0.0;
    for (auto l : latencies_us) sum += static_cast<double>(l);
    return sum / static_cast<double>(latencies_us.size()) / 1000.0;
  }

  /// Nearest-rank percentile, p in [0, 100].
  double percentile_latency_ms(double p) const {
    if (latencies_us.empty()) return 0.0;
    std::vector<std::uint64_t> sorted = latencies_us;
    std::sort(sorted.begin(), sorted.end());
    const auto n = sorted.size();
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return static_cast<double>(sorted[rank - 1]) / 1000.0;
  }

  nlohmann::json to_json() const {
    return {{"sent", sent},
            {"rate_limited", rate_limited},
            {"delivered", delivered},
            {"dropped", dropped},
            {"discarded_stale", discarded_stale},
            {"mean_latency_ms", mean_latency_ms()},
            {"p50_latency_ms", percentile_latency_ms(50.0)},
            {"p95_latency_ms", percentile_latency_ms(95.0)},
            {"max_latency_ms", percentile_latency_ms(100.0)}};
  }
};

enum class SendStatus { Queued, Dropped, RateLimited };

/// One direction of a simulated link on the simulation clock.
///
/// Messages travel as encoded frames. Each accepted frame is either dropped or
/// scheduled for `send + base_latency + jitter * U[0,1)`. Polling returns due
/// frames in arrival order and discards any whose seq is not newer than the
/// last one delivered on its (kind, arm) stream. Deterministic per seed.
class SimChannel {
 public:
  explicit SimChannel(ChannelConfig cfg = {}) : cfg_(cfg), rng_(cfg.seed) { cfg_.validate(); }

  const ChannelConfig& config() const { return cfg_; }
  const ChannelStats& stats() const { return stats_; }
  std::size_t in_flight() const { return pending_.size(); }

  SendStatus send(const LinkMessage& msg, std::uint64_t now_us) {
    if (msg.kind == MessageKind::LeaderState || msg.kind == MessageKind::FollowerForce) {
      const auto slot = static_cast<std::int64_t>(std::floor(static_cast<double>(now_us) * cfg_.rate_hz / 1e6));
      auto [it, fresh] = last_slot_.try_emplace({msg.kind, msg.arm_id}, slot);
      if (!fresh) {
        if (slot <= it->second) {
          ++stats_.rate_limited;
          return SendStatus::RateLimited;
        }
        it->second = slot;
      }
    }
    ++stats_.sent;
    const double drop_draw = uniform();
    const double jitter_draw = uniform();
    if (drop_draw < cfg_.drop_probability) {
      ++stats_.dropped;
      return SendStatus::Dropped;
    }
    const double delay_us = (cfg_.base_latency_ms + cfg_.jitter_ms * jitter_draw) * 1000.0;
    pending_.push_back({now_us + static_cast<std::uint64_t>(std::llround(delay_us)), now_us, order_++, encode(msg)});
    return SendStatus::Queued;
  }

  std::vector<LinkMessage> poll(std::uint64_t now_us) {
    std::vector<InFlight> due;
    auto split = std::stable_partition(pending_.begin(), pending_.end(),
                                       [&](const InFlight& f) { return f.deliver_us > now_us; });
    due.assign(std::make_move_iterator(split), std::make_move_iterator(pending_.end()));
    pending_.erase(split, pending_.end());
    std::sort(due.begin(), due.end(), [](const InFlight& a, const InFlight& b) {
      return a.deliver_us != b.deliver_us ? a.deliver_us < b.deliver_us : a.order < b.order;
    });

    std::vector<LinkMessage> out;
    for (const InFlight& f : due) {
      auto decoded = decode(f.frame);
      if (!std::holds_alternative<LinkMessage>(decoded)) continue;  // frames are produced by encode()
      LinkMessage msg = std::get<LinkMessage>(std::move(decoded));
      auto [it, fresh] = last_seq_.try_emplace({msg.kind, msg.arm_id}, msg.seq);
      if (!fresh) {
        if (msg.seq <= it->second) {
          ++stats_.discarded_stale;
          continue;
        }
        it->second = msg.seq;
      }
      ++stats_.delivered;
      stats_.latencies_us.push_back(now_us - f.sent_us);
      out.push_back(std::move(msg));
    }
    return out;
  }

 private:
  struct InFlight {
    std::uint64_t deliver_us;
    std::uint64_t sent_us;
    std::uint64_t order;
    std::vector<std::uint8_t> frame;
  };

  double uniform() { return unit_uniform(rng_); }

  ChannelConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<InFlight> pending_;
  std::uint64_t order_ = 0;
  std::map<std::pair<MessageKind, std::uint8_t>, std::int64_t> last_slot_;
  std::map<std::pair<MessageKind, std::uint8_t>, std::uint32_t> last_seq_;
  ChannelStats stats_;
};

}  // namespace spark::link
