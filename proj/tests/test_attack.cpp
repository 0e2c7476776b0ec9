#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <vector>

#include "evcs/attack.hpp"
#include "evcs/errors.hpp"

using namespace evcs;
using namespace evcs::attack;

namespace {

Eigen::MatrixXd random_matrix(std::mt19937_64& gen, int rows, int cols) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = nd(gen);
  return m;
}

double j_of(const Eigen::VectorXd& y, const LinearMeasurementModel& m) {
  return residual_detect(y, wls_estimate(y, m), m).j;
}

}  // namespace

TEST_CASE("weighted least squares") {
  SUBCASE("identity model returns the measurements") {
    // The model must be overdetermined, so the identity is stacked with a sum row.
    Eigen::MatrixXd h(4, 3);
    h << 1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 1, 1;
    const LinearMeasurementModel m(h, Eigen::VectorXd::Ones(4), 1.0);
    Eigen::VectorXd x0(3);
    x0 << 0.5, -2.0, 7.0;
    const Eigen::VectorXd x = wls_estimate(h * x0, m);
    CHECK((x - x0).norm() < 1e-12);
  }

  SUBCASE("consistent 3x2 system") {
    Eigen::MatrixXd h(3, 2);
    h << 1, 2, 3, 4, 5, 6;
    Eigen::VectorXd sig(3);
    sig << 1.0, 0.5, 2.0;
    const LinearMeasurementModel m(h, sig, 1.0);
    Eigen::VectorXd x0(2);
    x0 << 1.25, -3.5;
    CHECK((wls_estimate(h * x0, m) - x0).norm() < 1e-12);
  }

  SUBCASE("matches a pseudo-inverse oracle") {
    std::mt19937_64 gen(5);
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::MatrixXd h = random_matrix(gen, 8, 3);
      const Eigen::VectorXd sig = random_matrix(gen, 8, 1).cwiseAbs().array() + 0.1;
      const Eigen::VectorXd y = random_matrix(gen, 8, 1);
      const LinearMeasurementModel m(h, sig, 1.0);
      const Eigen::VectorXd root_w = sig.cwiseInverse();
      const Eigen::MatrixXd hw = root_w.asDiagonal() * h;
      const Eigen::VectorXd oracle =
          hw.completeOrthogonalDecomposition().pseudoInverse() * (root_w.asDiagonal() * y);
      CHECK((wls_estimate(y, m) - oracle).norm() < 1e-9);
    }
  }

  Eigen::MatrixXd square = Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(LinearMeasurementModel(square, Eigen::VectorXd::Ones(3), 1.0), InvalidArgument);
  Eigen::MatrixXd rank1(4, 2);
  rank1 << 1, 2, 2, 4, 3, 6, 4, 8;
  CHECK_THROWS_AS(LinearMeasurementModel(rank1, Eigen::VectorXd::Ones(4), 1.0), InvalidArgument);
}

TEST_CASE("residual detector") {
  Eigen::MatrixXd h(3, 2);
  h << 1, 0, 0, 1, 1, 1;
  const LinearMeasurementModel m(h, Eigen::VectorXd::Ones(3), 2.5);
  Eigen::VectorXd x0(2);
  x0 << 1.0, 2.0;

  const Eigen::VectorXd clean = h * x0;
  const auto c = residual_detect(clean, wls_estimate(clean, m), m);
  CHECK(c.j < 1e-24);
  CHECK_FALSE(c.flagged);

  // x_hat = (2, 3), residual (-1, -1, 1), J = 3 by hand.
  Eigen::VectorXd y = clean;
  y[2] += 3.0;
  const Eigen::VectorXd xh = wls_estimate(y, m);
  CHECK(xh[0] == doctest::Approx(2.0));
  CHECK(xh[1] == doctest::Approx(3.0));
  const auto d = residual_detect(y, xh, m);
  CHECK(d.j == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(d.flagged);

  const LinearMeasurementModel strict(h, Eigen::VectorXd::Ones(3), 0.0);
  Eigen::VectorXd noisy = clean;
  noisy[0] += 1e-6;
  CHECK(residual_detect(noisy, wls_estimate(noisy, strict), strict).flagged);
}

TEST_CASE("stealthy attack vector") {
  std::mt19937_64 gen(17);
  const Eigen::MatrixXd h = random_matrix(gen, 8, 3);
  const LinearMeasurementModel m(h, Eigen::VectorXd::Constant(8, 0.2), 1.0);

  const Eigen::VectorXd zero = stealthy_attack_vector(m, Eigen::VectorXd::Zero(3), 10.0);
  CHECK(zero.norm() == 0.0);

  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd y = random_matrix(gen, 8, 1);
    const Eigen::VectorXd c = random_matrix(gen, 3, 1);
    const Eigen::VectorXd a = stealthy_attack_vector(m, c, 1e9);
    const double j0 = j_of(y, m);
    CHECK(std::abs(j_of(y + a, m) - j0) / std::max(j0, 1.0) < 1e-9);
    CHECK((wls_estimate(y + a, m) - wls_estimate(y, m) - c).norm() < 1e-9);
  }

  const Eigen::VectorXd c = Eigen::VectorXd::Constant(3, 4.0);
  CHECK(stealthy_attack_vector(m, c, 0.5).norm() == doctest::Approx(0.5));

  SUBCASE("no grid vector within the budget moves the estimate further") {
    Eigen::MatrixXd h3(3, 2);
    h3 << 1.0, 0.3, -0.4, 1.2, 0.7, 0.5;
    const LinearMeasurementModel small(h3, Eigen::VectorXd::Ones(3), 0.05);
    const double budget = 1.0;
    Eigen::VectorXd xs(2);
    xs << 0.3, -0.1;
    const Eigen::VectorXd y = h3 * xs;
    const Eigen::VectorXd x0 = wls_estimate(y, small);

    double family_best = 0.0;
    for (int k = 0; k < 3600; ++k) {
      const double th = 2.0 * std::numbers::pi * k / 3600.0;
      Eigen::VectorXd dir(2);
      dir << std::cos(th), std::sin(th);
      const Eigen::VectorXd a = stealthy_attack_vector(small, dir, budget);
      CHECK(j_of(y + a, small) == doctest::Approx(j_of(y, small)).epsilon(1e-9));
      family_best = std::max(family_best, (wls_estimate(y + a, small) - x0).norm());
    }

    double grid_best = 0.0;
    const int steps = 40;
    for (int i = -steps; i <= steps; ++i) {
      for (int j = -steps; j <= steps; ++j) {
        for (int k = -steps; k <= steps; ++k) {
          Eigen::VectorXd a(3);
          a << i * budget / steps, j * budget / steps, k * budget / steps;
          if (a.norm() > budget) continue;
          if (j_of(y + a, small) >= small.tau()) continue;
          grid_best = std::max(grid_best, (wls_estimate(y + a, small) - x0).norm());
        }
      }
    }
    CHECK(grid_best > 0.9 * family_best);
    CHECK(grid_best <= family_best * (1.0 + 1e-6));
  }
}

TEST_CASE("FDI injectors") {
  const auto pv = default_injector(FdiTarget::PvDuty, 2.0, 4.0, 42);
  CHECK_FALSE(fdi_sample(pv, 1.9999).has_value());
  CHECK_FALSE(fdi_sample(pv, 4.0).has_value());
  CHECK(fdi_sample(pv, 2.0).has_value());

  std::set<double> held;
  std::vector<double> seq;
  for (int n = 20000; n < 40000; ++n) {
    const auto v = fdi_sample(pv, n * 1e-4);
    REQUIRE(v.has_value());
    CHECK(*v >= 0.0);
    CHECK(*v <= 1.0);
    held.insert(*v);
    seq.push_back(*v);
  }
  CHECK(held.size() == 20);
  int changes = 0;
  for (std::size_t k = 1; k < seq.size(); ++k) changes += seq[k] != seq[k - 1];
  CHECK(changes == 19);

  for (int n = 20000; n < 40000; n += 37) {
    CHECK(*fdi_sample(pv, n * 1e-4) == *fdi_sample(default_injector(FdiTarget::PvDuty, 2.0, 4.0, 42), n * 1e-4));
  }
  CHECK(*fdi_sample(pv, 2.5) != *fdi_sample(default_injector(FdiTarget::PvDuty, 2.0, 4.0, 43), 2.5));

  auto bes = default_injector(FdiTarget::BesVref, 6.0, 8.0, 1);
  bes.dist.variance = 0.0;
  for (double t = 6.0; t < 8.0; t += 0.013) CHECK(*fdi_sample(bes, t) == 48.0);

  SUBCASE("gaussian moments") {
    auto g = default_injector(FdiTarget::EvVref, 0.0, 20000.0, 9);
    double sum = 0.0, sq = 0.0;
    const int count = 200000;
    for (int k = 0; k < count; ++k) {
      const double v = *fdi_sample(g, k * 0.1);
      sum += v;
      sq += v * v;
    }
    const double mean = sum / count;
    CHECK(mean == doctest::Approx(24.0).epsilon(0.002));
    CHECK(sq / count - mean * mean == doctest::Approx(10.0).epsilon(0.02));
  }

  FdiInjector bad = pv;
  bad.t_end = bad.t_start;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("DDoS composition") {
  const std::vector<double> x{1, 2, 3, 4, 5, 6};
  CHECK(ddos_compose(x, {2, 0, 5}) == x);
  CHECK(ddos_compose(x, {2, 2, 5}) == std::vector<double>{1, 2, 3, 0, 0, 4});
  CHECK_THROWS_AS(ddos_compose(x, {2, 4, 5}), WindowOutOfRange);
  CHECK_THROWS_AS(ddos_compose(x, {2, 1, 6}), InvalidArgument);

  SUBCASE("successive windows add their lags") {
    std::vector<double> ramp(100);
    for (std::size_t k = 0; k < ramp.size(); ++k) ramp[k] = static_cast<double>(k + 1);
    const DdosWindow a{10, 5, 99}, b{40, 7, 99};
    const auto once = ddos_compose(ramp, a);
    const auto twice = ddos_compose(once, b);
    for (std::size_t k = 48; k < 100; ++k) CHECK(twice[k] == ramp[k - 12]);
    for (std::size_t k = 16; k <= 40; ++k) CHECK(twice[k] == ramp[k - 5]);
  }

  SUBCASE("streaming channel equals the batch form") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> nd;
    std::vector<double> sig(300);
    for (auto& v : sig) v = nd(gen);
    const auto batch = ddos_compose(sig, {120, 60, 299});
    DdosChannel ch(120, 60);
    for (std::size_t k = 0; k < sig.size(); ++k) CHECK(ch.push(sig[k]) == batch[k]);
  }
}

TEST_CASE("attack binding") {
  const ControlSignals in{0.49, 72.0, 28.0};
  AttackBinding none(AttackScenario{}, 1e-4);
  for (std::size_t n = 0; n < 1000; ++n) {
    const auto out = none.apply(n, n * 1e-4, in);
    CHECK(out.duty_pv == in.duty_pv);
    CHECK(out.v_ref_bus == in.v_ref_bus);
    CHECK(out.v_ref_ev == in.v_ref_ev);
  }

  SUBCASE("simultaneous FDI is active exactly inside its window") {
    AttackScenario s;
    s.kind = AttackKind::Fdi;
    s.target = AttackTarget::All;
    s.t_start = 2.0;
    s.t_end = 4.0;
    s.seed = 4;
    AttackBinding b(s, 1e-3);
    for (std::size_t n = 0; n < 6000; ++n) {
      const double t = n * 1e-3;
      const auto out = b.apply(n, t, in);
      const bool inside = n >= 2000 && n < 4000;
      CHECK(b.active() == inside);
      if (!inside) {
        CHECK(out.duty_pv == in.duty_pv);
        CHECK(out.v_ref_bus == in.v_ref_bus);
        CHECK(out.v_ref_ev == in.v_ref_ev);
      } else {
        CHECK(out.v_ref_bus != in.v_ref_bus);
        CHECK(out.v_ref_ev != in.v_ref_ev);
      }
    }
  }

  SUBCASE("PV denial of service freezes then replays") {
    AttackScenario s;
    s.kind = AttackKind::Ddos;
    s.target = AttackTarget::Pv;
    s.t_start = 2.0;
    s.delay_samples = 500;
    AttackBinding b(s, 1e-3);
    for (std::size_t n = 0; n < 4000; ++n) {
      const ControlSignals sig{static_cast<double>(n), 72.0, 28.0};
      const auto out = b.apply(n, n * 1e-3, sig);
      if (n <= 2000) {
        CHECK(out.duty_pv == sig.duty_pv);
      } else if (n <= 2500) {
        CHECK(out.duty_pv == 0.0);
      } else {
        CHECK(out.duty_pv == static_cast<double>(n - 500));
      }
      CHECK(out.v_ref_bus == 72.0);
      CHECK(out.v_ref_ev == 28.0);
    }
  }
}
