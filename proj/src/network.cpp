#include "evcs/network.hpp"

#include <cmath>
#include <deque>
#include <functional>
#include <queue>
#include <random>
#include <tuple>
#include <vector>

#include "evcs/errors.hpp"

namespace evcs::network {

const std::array<DelayRow, 16>& delay_table() {
  static const std::array<DelayRow, 16> rows{{
      {0, 2.957, 23.138},
      {1, 23.262, 22.944},
      {2, 23.261, 22.944},
      {3, 92.687, 22.283},
      {4, 127.318, 21.928},
      {5, 162.019, 21.617},
      {6, 196.850, 21.285},
      {7, 231.308, 20.954},
      {8, 266.424, 20.629},
      {9, 300.954, 20.274},
      {10, 335.503, 19.956},
      {11, 370.730, 19.621},
      {12, 405.044, 19.290},
      {13, 439.928, 18.973},
      {14, 474.631, 18.627},
      {15, 509.476, 18.293},
  }};
  return rows;
}

namespace {

template <typename Field>
double lookup(double k, Field field) {
  if (!(k >= 0.0)) throw InvalidArgument("attacker count must be >= 0");
  const auto& rows = delay_table();
  const double base = std::floor(k);
  if (k == base && k <= 15.0) return field(rows[static_cast<std::size_t>(k)]);
  std::size_t lo = static_cast<std::size_t>(base);
  if (lo >= 15) lo = 14;
  const double y0 = field(rows[lo]);
  const double y1 = field(rows[lo + 1]);
  return y0 + (y1 - y0) * (k - static_cast<double>(lo));
}

}  // namespace

double table_delay(double k) {
  return lookup(k, [](const DelayRow& r) { return r.delay_ms; });
}

double table_throughput(double k) {
  return lookup(k, [](const DelayRow& r) { return r.throughput_mbps; });
}

std::size_t delay_samples(double delay_ms, double ts) {
  if (!(ts > 0.0) || delay_ms < 0.0) throw InvalidArgument("delay and Ts must be positive");
  return static_cast<std::size_t>(std::llround(delay_ms * 1e-3 / ts));
}

void SynFloodConfig::validate() const {
  if (attacker_count < 0) throw InvalidArgument("attacker_count must be >= 0");
  if (!(attacker_syn_interval_us > 0 && synack_processing_us > 0 && half_open_timeout_s > 0 &&
        legit_request_rate > 0 && sim_duration_s > 0 && initial_rto_s > 0)) {
    throw InvalidArgument("SYN flood timing parameters must be positive");
  }
  if (backlog_capacity < 1) throw InvalidArgument("backlog_capacity must be >= 1");
  if (max_syn_retries < 0) throw InvalidArgument("max_syn_retries must be >= 0");
}

SynFloodResult synflood_simulate(const SynFloodConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double interval = cfg.attacker_syn_interval_us * 1e-6;
  const double service = cfg.synack_processing_us * 1e-6;

  // Legitimate arrivals over the offered window.
  std::vector<double> arrivals;
  for (double t = -std::log(1.0 - unit(rng)) / cfg.legit_request_rate; t < cfg.sim_duration_s;
       t += -std::log(1.0 - unit(rng)) / cfg.legit_request_rate) {
    arrivals.push_back(t);
  }

  // (time, client, attempt); ties resolve by client index.
  using LegitEvent = std::tuple<double, std::size_t, int>;
  std::priority_queue<LegitEvent, std::vector<LegitEvent>, std::greater<>> legit;
  for (std::size_t c = 0; c < arrivals.size(); ++c) legit.emplace(arrivals[c], c, 0);

  using AttackEvent = std::pair<double, int>;
  std::priority_queue<AttackEvent, std::vector<AttackEvent>, std::greater<>> attackers;
  for (int a = 0; a < cfg.attacker_count; ++a) attackers.emplace(unit(rng) * interval, a);

  // Slots are released in FIFO order per holder class since hold times are
  // constant within each class.
  std::deque<double> attacker_release;
  std::deque<double> legit_release;
  auto occupied = [&](double now) {
    while (!attacker_release.empty() && attacker_release.front() <= now) {
      attacker_release.pop_front();
    }
    while (!legit_release.empty() && legit_release.front() <= now) legit_release.pop_front();
    return attacker_release.size() + legit_release.size();
  };
  const auto capacity = static_cast<std::size_t>(cfg.backlog_capacity);

  SynFloodResult result;
  result.offered = arrivals.size();
  double total_delay = 0.0;

  while (!legit.empty()) {
    const bool attacker_first = !attackers.empty() && attackers.top().first < std::get<0>(legit.top());
    if (attacker_first) {
      auto [t, a] = attackers.top();
      attackers.pop();
      if (occupied(t) < capacity) attacker_release.push_back(t + cfg.half_open_timeout_s);
      attackers.emplace(t + interval, a);
      continue;
    }
    auto [t, c, attempt] = legit.top();
    legit.pop();
    if (occupied(t) < capacity) {
      legit_release.push_back(t + service);
      total_delay += t + service - arrivals[c];
      ++result.served;
    } else if (attempt < cfg.max_syn_retries) {
      legit.emplace(t + cfg.initial_rto_s * std::ldexp(1.0, attempt), c, attempt + 1);
    } else {
      // Gives up after the final retransmission times out.
      total_delay += t + cfg.initial_rto_s * std::ldexp(1.0, attempt) - arrivals[c];
    }
  }

  if (result.offered > 0) {
    result.mean_delay_ms = 1e3 * total_delay / static_cast<double>(result.offered);
    result.throughput_ratio =
        static_cast<double>(result.served) / static_cast<double>(result.offered);
  } else {
    result.throughput_ratio = 1.0;
  }
  return result;
}

}  // namespace evcs::network
