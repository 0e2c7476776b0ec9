#pragma once

#include <cstdint>

#include "evcs/plant.hpp"

namespace evcs::control {

// PI controller with output clamping and conditional-integration anti-windup.
struct PiState {
  double kp = 0.0;
  double ki = 0.0;  // 1/s
  double integrator = 0.0;
  double u_min = -1.0;
  double u_max = 1.0;
};

struct PiOutput {
  double u = 0.0;
  PiState state;
};

PiOutput pi_step(double error, const PiState& pi, double dt);

// Perturb-and-observe tracker state.
struct MpptState {
  double duty = 0.49;
  double step = 0.005;
  double prev_p = 0.0;
  double prev_v = 0.0;
  int direction = 1;
  double d_max = plant::kDutyMax;
};

MpptState mppt_po_step(double v_pv, double i_pv, const MpptState& m);

// Setpoint conditioning applied by each controller to the reference it
// receives over the network. Non-positive or non-finite values are treated as
// a lost signal and the last accepted setpoint is held; anything else is
// clamped into [lo, hi].
struct SetpointLimiter {
  double lo = 0.0;
  double hi = 0.0;
  double last = 0.0;

  double accept(double received);
};

struct CascadeGains {
  PiState outer;
  PiState inner;
  int outer_ratio = 10;  // inner ticks per outer tick
};

// Outer voltage loop producing a current reference, inner current loop
// producing a duty. The outer loop executes on every `outer_ratio`-th call.
class CascadedPi {
 public:
  CascadedPi() = default;
  explicit CascadedPi(const CascadeGains& gains);

  double step(double v_meas, double v_ref, double i_meas, double dt);

  // Presets the integrators so that the next step reproduces (i_ref, duty)
  // for zero error.
  void preset(double i_ref, double duty);

  double i_ref() const { return i_ref_; }
  double duty() const { return duty_; }
  const PiState& outer() const { return outer_; }
  const PiState& inner() const { return inner_; }
  std::int64_t ticks() const { return ticks_; }
  std::int64_t outer_calls() const { return outer_calls_; }

 private:
  PiState outer_;
  PiState inner_;
  int ratio_ = 10;
  double i_ref_ = 0.0;
  double duty_ = 0.0;
  std::int64_t ticks_ = 0;
  std::int64_t outer_calls_ = 0;
};

// BES converter: regulates the DC bus. Current is discharge-positive, so a bus
// below its setpoint raises the reference.
double bes_control_step(double v_bus, double v_ref_bus, double i_bes, CascadedPi& c,
                        double dt);

// EV charger: constant-current / constant-voltage charging. `i_ev_charge` is
// the charging current (positive into the battery). When `terminate` is set
// and the battery reaches the voltage setpoint, the session latches off.
struct EvChargerState {
  CascadedPi loop;
  bool terminate_on_target = true;
  bool terminated = false;
};

double ev_control_step(double v_ev, double v_ref_ev, double i_ev_charge, EvChargerState& c,
                       double dt);

}  // namespace evcs::control
