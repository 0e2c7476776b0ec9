#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "evcs/config.hpp"
#include "evcs/control.hpp"
#include "evcs/plant.hpp"
#include "evcs/simulation.hpp"

using namespace evcs;
using namespace evcs::control;

namespace {

CascadeGains bes_gains(const config::ControlConfig& k) {
  CascadeGains g;
  g.outer = {k.bes_outer_kp, k.bes_outer_ki, 0.0, -k.i_bes_max, k.i_bes_max};
  g.inner = {k.bes_inner_kp, k.bes_inner_ki, 0.0, 0.0, plant::kDutyMax};
  g.outer_ratio = k.outer_ratio;
  return g;
}

CascadeGains ev_gains(const config::ControlConfig& k) {
  CascadeGains g;
  g.outer = {k.ev_outer_kp, k.ev_outer_ki, 0.0, 0.0, k.i_ev_max};
  g.inner = {k.ev_inner_kp, k.ev_inner_ki, 0.0, 0.0, plant::kDutyMax};
  g.outer_ratio = k.outer_ratio;
  return g;
}

}  // namespace

TEST_CASE("perturb and observe logic table") {
  MpptState m;
  m.duty = 0.5;
  m.prev_p = 100.0;
  m.direction = 1;

  const auto up = mppt_po_step(11.0, 10.0, m);
  CHECK(up.direction == 1);
  CHECK(up.duty == doctest::Approx(0.505));
  CHECK(up.prev_p == 110.0);

  const auto down = mppt_po_step(9.0, 10.0, m);
  CHECK(down.direction == -1);
  CHECK(down.duty == doctest::Approx(0.495));

  m.direction = -1;
  CHECK(mppt_po_step(11.0, 10.0, m).duty == doctest::Approx(0.495));
  CHECK(mppt_po_step(9.0, 10.0, m).duty == doctest::Approx(0.505));

  m.duty = plant::kDutyMax;
  m.direction = 1;
  CHECK(mppt_po_step(11.0, 10.0, m).duty == plant::kDutyMax);
  m.duty = 0.0;
  m.direction = -1;
  CHECK(mppt_po_step(11.0, 10.0, m).duty == 0.0);
}

TEST_CASE("tracker reaches the maximum power point from a low duty") {
  auto cfg = config::defaults();
  cfg.duration = 3.0;
  cfg.control.mppt_duty_init = 0.1;
  const auto r = sim::run(cfg, sim::impact_plan(cfg, "normal"));
  const auto mpp = plant::pv_mpp(cfg.environment.irradiance, cfg.environment.temperature, cfg.plant.pv);
  const double band = 2.0 * cfg.control.mppt_step * cfg.control.v_ref_bus;
  const auto v = sim::window_stats(r.trace, &sim::Trace::v_pv, 2.0, 3.0, mpp.v);
  CHECK(v.max_abs_dev <= band);
  const auto p = sim::window_stats(r.trace, &sim::Trace::p_pv, 2.0, 3.0);
  CHECK(p.mean >= 0.99 * mpp.p);
}

TEST_CASE("PI step") {
  PiState pi{2.0, 5.0, 0.0, -10.0, 10.0};
  const auto idle = pi_step(0.0, pi, 1e-3);
  CHECK(idle.u == 0.0);
  CHECK(idle.state.integrator == 0.0);

  PiState p_only{3.0, 0.0, 0.0, -10.0, 10.0};
  for (int k = 0; k < 50; ++k) {
    const auto o = pi_step(1.5, p_only, 1e-3);
    CHECK(o.u == doctest::Approx(4.5));
    p_only = o.state;
  }

  SUBCASE("first-order plant tracks a step") {
    const double tau = 0.1, dt = 1e-4;
    PiState c{2.0, 20.0, 0.0, -10.0, 10.0};
    double y = 0.0;
    for (int k = 0; k < static_cast<int>(5 * tau / dt); ++k) {
      const auto o = pi_step(1.0 - y, c, dt);
      c = o.state;
      y += dt / tau * (o.u - y);
    }
    CHECK(std::abs(1.0 - y) < 1e-3);
  }

  SUBCASE("integrator does not wind up in saturation") {
    PiState c{1.0, 10.0, 0.0, -1.0, 1.0};
    for (int k = 0; k < 1000; ++k) {
      const auto o = pi_step(5.0, c, 1e-2);
      CHECK(o.u == 1.0);
      c = o.state;
    }
    CHECK(c.integrator == 0.0);
    CHECK(pi_step(-0.5, c, 1e-2).u < 0.0);
  }
}

TEST_CASE("setpoint limiter") {
  SetpointLimiter lim{69.84, 74.16, 72.0};
  CHECK(lim.accept(73.0) == 73.0);
  CHECK(lim.accept(0.0) == 73.0);
  CHECK(lim.accept(-12.0) == 73.0);
  CHECK(lim.accept(NAN) == 73.0);
  CHECK(lim.accept(500.0) == 74.16);
  CHECK(lim.accept(3.0) == 69.84);
}

TEST_CASE("cascade runs the outer loop every tenth tick") {
  const auto k = config::defaults().control;
  CascadedPi c(bes_gains(k));
  for (int n = 0; n < 100; ++n) c.step(70.0, 72.0, 0.0, 1e-4);
  CHECK(c.ticks() == 100);
  CHECK(c.outer_calls() == 10);

  CascadedPi a(bes_gains(k)), b(bes_gains(k));
  for (int n = 0; n < 500; ++n) {
    CHECK(a.step(71.0 + 0.01 * n, 72.0, n * 0.1, 1e-4) == b.step(71.0 + 0.01 * n, 72.0, n * 0.1, 1e-4));
  }
}

TEST_CASE("battery controller") {
  const auto k = config::defaults().control;
  CascadedPi c(bes_gains(k));
  c.preset(5.0, 0.3);
  for (int n = 0; n < 20; ++n) {
    CHECK(bes_control_step(72.0, 72.0, 5.0, c, 1e-4) == doctest::Approx(0.3).epsilon(1e-12));
  }
  CHECK(c.i_ref() == doctest::Approx(5.0).epsilon(1e-12));

  CascadedPi low(bes_gains(k));
  low.preset(5.0, 0.3);
  bes_control_step(70.0, 72.0, 5.0, low, 1e-4);
  CHECK(low.i_ref() > 5.0);

  SUBCASE("bus recovers from a load step") {
    const auto cfg = config::defaults();
    const auto& pp = cfg.plant;
    const double ts = 1e-4;
    auto s = plant::initial_state(pp, cfg.environment, 0.49);
    CascadedPi bes(bes_gains(k));
    bes.preset(0.0, 1.0 - pp.bes.ocv(s.bes.soc) / s.v_bus);
    const double d_load = (pp.ev.ocv(pp.ev.soc_init) + 20.0 * pp.ev.r_int) / 72.0;
    double worst_late = 0.0, worst_step = 0.0;
    for (int n = 0; n < 20000; ++n) {
      const double t = n * ts;
      const double d_ev = t >= 1.0 ? d_load : 0.0;
      const double d_bes = bes_control_step(s.v_bus, 72.0, s.i_bdc, bes, ts);
      s = plant::plant_step(s, {0.49, d_bes, d_ev}, cfg.environment, ts, pp);
      if (t >= 1.0 && t < 1.5) worst_step = std::max(worst_step, std::abs(s.v_bus - 72.0));
      if (t >= 1.5) worst_late = std::max(worst_late, std::abs(s.v_bus - 72.0));
    }
    CHECK(s.i_chg > 10.0);
    CHECK(worst_step > 0.0);
    CHECK(worst_late <= 0.02 * 72.0);
  }
}

TEST_CASE("EV charger") {
  const auto k = config::defaults().control;

  EvChargerState full{CascadedPi(ev_gains(k)), true, false};
  full.loop.preset(10.0, 0.4);
  CHECK(ev_control_step(28.5, 28.0, 10.0, full, 1e-4) == 0.0);
  CHECK(full.terminated);
  CHECK(ev_control_step(20.0, 28.0, 0.0, full, 1e-4) == 0.0);
  CHECK(full.loop.i_ref() == 0.0);

  EvChargerState hold{CascadedPi(ev_gains(k)), false, false};
  hold.loop.preset(10.0, 0.4);
  for (int n = 0; n < 20; ++n) {
    CHECK(ev_control_step(28.0, 28.0, 10.0, hold, 1e-4) == doctest::Approx(0.4).epsilon(1e-12));
  }

  SUBCASE("charging current at the nominal setpoint") {
    auto cfg = config::defaults();
    cfg.duration = 2.0;
    const auto r = sim::run(cfg, sim::impact_plan(cfg, "normal"));
    const auto i = sim::window_stats(r.trace, &sim::Trace::i_ev, 1.0, 2.0, -k.i_ev_max);
    CHECK(i.max_abs_dev <= 0.1 * k.i_ev_max);
  }
}
