#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "evcs/errors.hpp"
#include "evcs/network.hpp"

using namespace evcs;
using namespace evcs::network;

TEST_CASE("delay table") {
  CHECK(table_delay(0) == 2.957);
  CHECK(table_delay(15) == 509.476);
  CHECK(table_delay(5) == 162.019);
  CHECK(table_throughput(0) == 23.138);
  CHECK(table_throughput(15) == 18.293);
  CHECK(table_throughput(8) == 20.629);
  CHECK(100.0 * (1.0 - table_throughput(15) / table_throughput(0)) == doctest::Approx(20.94).epsilon(0.0025));

  const auto& rows = delay_table();
  for (std::size_t k = 0; k < rows.size(); ++k) CHECK(rows[k].malicious_nodes == static_cast<int>(k));
  for (std::size_t k = 1; k < rows.size(); ++k) {
    CHECK(rows[k].delay_ms >= rows[k - 1].delay_ms - 0.01);
    CHECK(rows[k].throughput_mbps <= rows[k - 1].throughput_mbps);
  }

  CHECK(table_delay(4.5) == doctest::Approx(0.5 * (127.318 + 162.019)));
  CHECK(table_throughput(0.25) == doctest::Approx(23.138 + 0.25 * (22.944 - 23.138)));
  CHECK_THROWS_AS(table_delay(-1), InvalidArgument);
}

TEST_CASE("delay in samples") {
  CHECK(delay_samples(509.476, 1e-4) == 5095);
  CHECK(delay_samples(509.476, 1e-5) == 50948);
  CHECK(delay_samples(0.0, 1e-4) == 0);
  CHECK_THROWS_AS(delay_samples(10.0, 0.0), InvalidArgument);
}

TEST_CASE("SYN flood simulation") {
  SynFloodConfig quiet;
  const auto r0 = synflood_simulate(quiet);
  CHECK(r0.offered > 0);
  CHECK(r0.served == r0.offered);
  CHECK(r0.throughput_ratio == 1.0);
  CHECK(r0.mean_delay_ms == doctest::Approx(quiet.synack_processing_us * 1e-3));

  const auto again = synflood_simulate(quiet);
  CHECK(again.mean_delay_ms == r0.mean_delay_ms);
  CHECK(again.served == r0.served);

  SUBCASE("a single-slot backlog starves legitimate clients") {
    for (double duration : {5.0, 20.0, 80.0}) {
      SynFloodConfig c;
      c.attacker_count = 1;
      c.attacker_syn_interval_us = 1000.0;
      c.backlog_capacity = 1;
      c.sim_duration_s = duration;
      const auto r = synflood_simulate(c);
      CHECK(r.offered > 0);
      CHECK(r.throughput_ratio < 0.01);
    }
  }

  SUBCASE("more attackers never help") {
    double delay = 0.0, ratio = 1.0;
    for (int k = 0; k <= 15; ++k) {
      double d = 0.0, q = 0.0;
      for (std::uint64_t s = 1; s <= 5; ++s) {
        SynFloodConfig c;
        c.attacker_count = k;
        c.seed = s;
        const auto r = synflood_simulate(c);
        d += r.mean_delay_ms / 5.0;
        q += r.throughput_ratio / 5.0;
      }
      CHECK(d >= delay);
      CHECK(q <= ratio);
      delay = d;
      ratio = q;
    }
  }

  SynFloodConfig bad;
  bad.backlog_capacity = 0;
  CHECK_THROWS_AS(synflood_simulate(bad), InvalidArgument);
}
