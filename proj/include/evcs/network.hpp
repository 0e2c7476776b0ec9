#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace evcs::network {

struct DelayRow {
  int malicious_nodes;
  double delay_ms;
  double throughput_mbps;
};

// Measured 5G link performance under a SYN flood, 0..15 attacking nodes.
const std::array<DelayRow, 16>& delay_table();

// Exact row values for integral k in [0, 15], linear interpolation between
// rows, linear extrapolation from the last two rows beyond 15.
double table_delay(double k);
double table_throughput(double k);

// Delay expressed in plant samples: round(delay_ms * 1e-3 / ts).
std::size_t delay_samples(double delay_ms, double ts);

struct SynFloodConfig {
  int attacker_count = 0;
  double attacker_syn_interval_us = 1000.0;
  double synack_processing_us = 2000.0;
  int backlog_capacity = 1024;
  double half_open_timeout_s = 3.0;
  double legit_request_rate = 20.0;  // per second, Poisson
  double sim_duration_s = 10.0;
  double initial_rto_s = 1.0;        // SYN retransmission timeout, doubled per retry
  int max_syn_retries = 5;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynFloodResult {
  // Mean time from a legitimate client's first SYN to handshake completion,
  // or to giving up for clients that exhaust their retries.
  double mean_delay_ms = 0.0;
  double throughput_ratio = 0.0;  // served / offered
  std::size_t offered = 0;
  std::size_t served = 0;
};

// Discrete-event model of a listener backlog under a SYN flood. Attacker SYNs
// hold a half-open slot until the timeout; a legitimate SYN that finds the
// backlog full is retransmitted with exponential backoff.
SynFloodResult synflood_simulate(const SynFloodConfig& cfg);

}  // namespace evcs::network
