#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace evcs::attack {

// ---------------------------------------------------------------------------
// Weighted least-squares state estimation and residual-based bad-data
// detection for a linear measurement model y = H x + e.

class LinearMeasurementModel {
 public:
  // `sigmas` are the measurement standard deviations; W = diag(sigma^-2).
  // Throws InvalidArgument unless rows > cols, sigmas > 0, and H has full
  // column rank.
  LinearMeasurementModel(Eigen::MatrixXd h, const Eigen::VectorXd& sigmas, double tau);

  const Eigen::MatrixXd& h() const { return h_; }
  const Eigen::VectorXd& weights() const { return w_; }
  double tau() const { return tau_; }
  Eigen::Index measurements() const { return h_.rows(); }
  Eigen::Index states() const { return h_.cols(); }

 private:
  Eigen::MatrixXd h_;
  Eigen::VectorXd w_;
  double tau_;
};

// argmin_x (y - Hx)^T W (y - Hx) via Cholesky of H^T W H. Throws RankDeficient.
Eigen::VectorXd wls_estimate(const Eigen::VectorXd& y, const LinearMeasurementModel& m);

struct ResidualCheck {
  double j = 0.0;
  bool flagged = false;
};

ResidualCheck residual_detect(const Eigen::VectorXd& y, const Eigen::VectorXd& x_hat,
                              const LinearMeasurementModel& m);

// a = H c, scaled down so that ||a|| <= budget. Leaves the WLS residual of any
// measurement vector unchanged while shifting the estimate by the scaled c.
Eigen::VectorXd stealthy_attack_vector(const LinearMeasurementModel& m,
                                       const Eigen::VectorXd& c, double budget);

// ---------------------------------------------------------------------------
// Setpoint injectors.

enum class FdiTarget { PvDuty, BesVref, EvVref };

struct Distribution {
  enum class Kind { Uniform01, Gaussian };
  Kind kind = Kind::Uniform01;
  double mean = 0.0;
  double variance = 0.0;
};

struct FdiInjector {
  FdiTarget target = FdiTarget::PvDuty;
  double t_start = 0.0;
  double t_end = 0.0;
  Distribution dist;
  double resample_hz = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Absolute override value at time t, or nullopt outside [t_start, t_end).
// Values are a pure function of (seed, redraw slot) and are held between
// redraws.
std::optional<double> fdi_sample(const FdiInjector& inj, double t);

// Default injectors: uniform duty for PV, Gaussian setpoints N(48, 10) for the
// bus reference and N(24, 10) for the EV reference (second moment = variance).
FdiInjector default_injector(FdiTarget target, double t_start, double t_end,
                             std::uint64_t seed);

// ---------------------------------------------------------------------------
// DDoS delay composition on sampled command sequences.

struct DdosWindow {
  std::size_t n1 = 0;  // attack start sample
  std::size_t n0 = 0;  // delay in samples
  std::size_t n = 0;   // last sample index (sequence holds n + 1 samples)

  std::size_t n2() const { return n1 + n0; }
};

// Pre-attack samples pass through (n <= n1), the signal is lost while the
// attack lasts (n1 < n <= n2), and afterwards the stream replays delayed by n0.
// Throws WindowOutOfRange when n2 > n, InvalidArgument on a length mismatch.
std::vector<double> ddos_compose(std::span<const double> x, const DdosWindow& w);

// Streaming form of ddos_compose for closed-loop use: feed samples in order.
class DdosChannel {
 public:
  DdosChannel(std::size_t n1, std::size_t n0);
  double push(double x);

 private:
  std::size_t n1_;
  std::size_t n0_;
  std::size_t n_ = 0;
  std::deque<double> history_;
};

// ---------------------------------------------------------------------------
// Binding injectors and delay channels to the controller I/O.

enum class AttackKind { None, Fdi, Ddos };
enum class AttackTarget { Pv, Bes, Ev, All };

struct AttackScenario {
  AttackKind kind = AttackKind::None;
  AttackTarget target = AttackTarget::Pv;
  double t_start = 0.0;
  double t_end = 0.0;  // FDI only; DDoS lasts delay_samples
  double resample_hz = 10.0;
  Distribution bes_dist{Distribution::Kind::Gaussian, 48.0, 10.0};
  Distribution ev_dist{Distribution::Kind::Gaussian, 24.0, 10.0};
  std::size_t delay_samples = 0;  // DDoS N0
  std::uint64_t seed = 0;
};

// Remote-set signals seen by the three controllers at one step.
struct ControlSignals {
  double duty_pv = 0.0;
  double v_ref_bus = 0.0;
  double v_ref_ev = 0.0;
};

class AttackBinding {
 public:
  AttackBinding() = default;
  AttackBinding(const AttackScenario& s, double ts);

  // Must be called once per step, in order, with step index n and time t.
  ControlSignals apply(std::size_t n, double t, const ControlSignals& in);

  // Whether any injector modified the signals at the last call.
  bool active() const { return active_; }
  const std::vector<FdiInjector>& injectors() const { return injectors_; }

 private:
  AttackScenario scenario_;
  std::vector<FdiInjector> injectors_;
  std::optional<DdosChannel> ddos_pv_;
  std::optional<DdosChannel> ddos_bes_;
  std::optional<DdosChannel> ddos_ev_;
  std::size_t first_sample_ = 0;
  bool active_ = false;
};

}  // namespace evcs::attack
