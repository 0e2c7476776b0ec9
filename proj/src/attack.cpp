#include "evcs/attack.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "evcs/errors.hpp"

namespace evcs::attack {

LinearMeasurementModel::LinearMeasurementModel(Eigen::MatrixXd h,
                                               const Eigen::VectorXd& sigmas, double tau)
    : h_(std::move(h)), tau_(tau) {
  if (h_.rows() <= h_.cols()) {
    throw InvalidArgument("measurement model must be overdetermined (N_m > N_n)");
  }
  if (sigmas.size() != h_.rows() || (sigmas.array() <= 0.0).any()) {
    throw InvalidArgument("one positive sigma per measurement is required");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(h_);
  if (qr.rank() < h_.cols()) throw InvalidArgument("H must have full column rank");
  w_ = sigmas.array().square().inverse().matrix();
}

Eigen::VectorXd wls_estimate(const Eigen::VectorXd& y, const LinearMeasurementModel& m) {
  if (y.size() != m.measurements()) throw InvalidArgument("measurement vector size mismatch");
  const Eigen::MatrixXd htw = m.h().transpose() * m.weights().asDiagonal();
  Eigen::LLT<Eigen::MatrixXd> llt(htw * m.h());
  if (llt.info() != Eigen::Success) throw RankDeficient("gain matrix is not positive definite");
  return llt.solve(htw * y);
}

ResidualCheck residual_detect(const Eigen::VectorXd& y, const Eigen::VectorXd& x_hat,
                              const LinearMeasurementModel& m) {
  if (y.size() != m.measurements() || x_hat.size() != m.states()) {
    throw InvalidArgument("residual check shape mismatch");
  }
  const Eigen::VectorXd r = y - m.h() * x_hat;
  const double j = r.dot(m.weights().asDiagonal() * r);
  return {j, j > m.tau()};
}

Eigen::VectorXd stealthy_attack_vector(const LinearMeasurementModel& m,
                                       const Eigen::VectorXd& c, double budget) {
  if (c.size() != m.states()) throw InvalidArgument("state shift size mismatch");
  Eigen::VectorXd a = m.h() * c;
  const double norm = a.norm();
  if (norm > budget && norm > 0.0) a *= budget / norm;
  return a;
}

// ---------------------------------------------------------------------------

void FdiInjector::validate() const {
  if (!(t_start < t_end)) throw InvalidArgument("FDI window needs t_start < t_end");
  if (!(resample_hz > 0.0)) throw InvalidArgument("FDI resample rate must be positive");
  if (dist.kind == Distribution::Kind::Gaussian && dist.variance < 0.0) {
    throw InvalidArgument("FDI variance must be >= 0");
  }
}

namespace {

double canonical(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

}  // namespace

std::optional<double> fdi_sample(const FdiInjector& inj, double t) {
  if (t < inj.t_start || t >= inj.t_end) return std::nullopt;
  // Small guard so that t = t_start + k / rate lands in slot k despite rounding.
  const auto slot = static_cast<std::uint64_t>(
      std::floor((t - inj.t_start) * inj.resample_hz + 1e-9));
  std::seed_seq seq{static_cast<std::uint32_t>(inj.seed), static_cast<std::uint32_t>(inj.seed >> 32),
                    static_cast<std::uint32_t>(slot), static_cast<std::uint32_t>(slot >> 32)};
  std::mt19937_64 gen(seq);
  if (inj.dist.kind == Distribution::Kind::Uniform01) return canonical(gen);
  // Box-Muller keeps the stream independent of the standard library's
  // unspecified normal_distribution algorithm.
  const double u1 = 1.0 - canonical(gen);
  const double u2 = canonical(gen);
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return inj.dist.mean + std::sqrt(inj.dist.variance) * z;
}

FdiInjector default_injector(FdiTarget target, double t_start, double t_end,
                             std::uint64_t seed) {
  FdiInjector inj;
  inj.target = target;
  inj.t_start = t_start;
  inj.t_end = t_end;
  inj.seed = seed;
  switch (target) {
    case FdiTarget::PvDuty:
      inj.dist = {Distribution::Kind::Uniform01, 0.0, 0.0};
      break;
    case FdiTarget::BesVref:
      inj.dist = {Distribution::Kind::Gaussian, 48.0, 10.0};
      break;
    case FdiTarget::EvVref:
      inj.dist = {Distribution::Kind::Gaussian, 24.0, 10.0};
      break;
  }
  return inj;
}

// ---------------------------------------------------------------------------

std::vector<double> ddos_compose(std::span<const double> x, const DdosWindow& w) {
  if (x.size() != w.n + 1) {
    throw InvalidArgument("sequence length must equal N + 1 (" + std::to_string(w.n + 1) + ")");
  }
  if (w.n2() > w.n) throw WindowOutOfRange("DDoS window end n2 exceeds N");
  std::vector<double> out(x.size());
  for (std::size_t n = 0; n <= w.n; ++n) {
    if (n <= w.n1) {
      out[n] = x[n];
    } else if (n <= w.n2()) {
      out[n] = 0.0;
    } else {
      out[n] = x[n - w.n0];
    }
  }
  return out;
}

DdosChannel::DdosChannel(std::size_t n1, std::size_t n0) : n1_(n1), n0_(n0) {}

double DdosChannel::push(double x) {
  history_.push_back(x);
  if (history_.size() > n0_ + 1) history_.pop_front();
  const std::size_t n = n_++;
  if (n <= n1_) return x;
  if (n <= n1_ + n0_) return 0.0;
  return history_.front();
}

// ---------------------------------------------------------------------------

AttackBinding::AttackBinding(const AttackScenario& s, double ts) : scenario_(s) {
  const bool pv = s.target == AttackTarget::Pv || s.target == AttackTarget::All;
  const bool bes = s.target == AttackTarget::Bes || s.target == AttackTarget::All;
  const bool ev = s.target == AttackTarget::Ev || s.target == AttackTarget::All;
  if (s.kind == AttackKind::Fdi) {
    auto make = [&](FdiTarget target, const Distribution& dist, std::uint64_t stream) {
      FdiInjector inj;
      inj.target = target;
      inj.t_start = s.t_start;
      inj.t_end = s.t_end;
      inj.dist = dist;
      inj.resample_hz = s.resample_hz;
      inj.seed = s.seed * 3 + stream;
      inj.validate();
      injectors_.push_back(inj);
    };
    if (pv) make(FdiTarget::PvDuty, {Distribution::Kind::Uniform01, 0.0, 0.0}, 0);
    if (bes) make(FdiTarget::BesVref, s.bes_dist, 1);
    if (ev) make(FdiTarget::EvVref, s.ev_dist, 2);
  } else if (s.kind == AttackKind::Ddos) {
    first_sample_ = static_cast<std::size_t>(std::llround(s.t_start / ts));
    if (pv) ddos_pv_.emplace(first_sample_, s.delay_samples);
    if (bes) ddos_bes_.emplace(first_sample_, s.delay_samples);
    if (ev) ddos_ev_.emplace(first_sample_, s.delay_samples);
  }
}

ControlSignals AttackBinding::apply(std::size_t n, double t, const ControlSignals& in) {
  ControlSignals out = in;
  active_ = false;
  if (scenario_.kind == AttackKind::Fdi) {
    for (const FdiInjector& inj : injectors_) {
      const auto v = fdi_sample(inj, t);
      if (!v) continue;
      active_ = true;
      switch (inj.target) {
        case FdiTarget::PvDuty:
          out.duty_pv = *v;
          break;
        case FdiTarget::BesVref:
          out.v_ref_bus = *v;
          break;
        case FdiTarget::EvVref:
          out.v_ref_ev = *v;
          break;
      }
    }
  } else if (scenario_.kind == AttackKind::Ddos) {
    if (ddos_pv_) out.duty_pv = ddos_pv_->push(in.duty_pv);
    if (ddos_bes_) out.v_ref_bus = ddos_bes_->push(in.v_ref_bus);
    if (ddos_ev_) out.v_ref_ev = ddos_ev_->push(in.v_ref_ev);
    active_ = n > first_sample_ && n <= first_sample_ + scenario_.delay_samples;
  }
  return out;
}

}  // namespace evcs::attack
