#include "evcs/control.hpp"

#include <algorithm>
#include <cmath>

namespace evcs::control {

PiOutput pi_step(double error, const PiState& pi, double dt) {
  PiOutput out{0.0, pi};
  const double advanced = pi.integrator + error * dt;
  double u_raw = pi.kp * error + pi.ki * advanced;
  // Freeze the integrator while saturated unless the error pulls it back.
  const bool wind_up = (u_raw > pi.u_max && error > 0.0) || (u_raw < pi.u_min && error < 0.0);
  if (wind_up) {
    u_raw = pi.kp * error + pi.ki * pi.integrator;
  } else {
    out.state.integrator = advanced;
  }
  out.u = std::clamp(u_raw, pi.u_min, pi.u_max);
  return out;
}

MpptState mppt_po_step(double v_pv, double i_pv, const MpptState& m) {
  MpptState n = m;
  const double p = v_pv * i_pv;
  if (p < m.prev_p) n.direction = -m.direction;
  n.duty = std::clamp(m.duty + n.direction * m.step, 0.0, m.d_max);
  n.prev_p = p;
  n.prev_v = v_pv;
  return n;
}

double SetpointLimiter::accept(double received) {
  if (std::isfinite(received) && received > 0.0) last = std::clamp(received, lo, hi);
  return last;
}

CascadedPi::CascadedPi(const CascadeGains& gains)
    : outer_(gains.outer), inner_(gains.inner), ratio_(std::max(1, gains.outer_ratio)) {}

double CascadedPi::step(double v_meas, double v_ref, double i_meas, double dt) {
  if (ticks_ % ratio_ == 0) {
    const PiOutput o = pi_step(v_ref - v_meas, outer_, dt * ratio_);
    outer_ = o.state;
    i_ref_ = o.u;
    ++outer_calls_;
  }
  const PiOutput in = pi_step(i_ref_ - i_meas, inner_, dt);
  inner_ = in.state;
  duty_ = in.u;
  ++ticks_;
  return duty_;
}

void CascadedPi::preset(double i_ref, double duty) {
  outer_.integrator = outer_.ki != 0.0 ? i_ref / outer_.ki : 0.0;
  inner_.integrator = inner_.ki != 0.0 ? duty / inner_.ki : 0.0;
  i_ref_ = i_ref;
  duty_ = duty;
}

double bes_control_step(double v_bus, double v_ref_bus, double i_bes, CascadedPi& c,
                        double dt) {
  return c.step(v_bus, v_ref_bus, i_bes, dt);
}

double ev_control_step(double v_ev, double v_ref_ev, double i_ev_charge, EvChargerState& c,
                       double dt) {
  if (c.terminate_on_target && !c.terminated && v_ev >= v_ref_ev) c.terminated = true;
  if (c.terminated) {
    c.loop.preset(0.0, 0.0);
    return 0.0;
  }
  return c.loop.step(v_ev, v_ref_ev, i_ev_charge, dt);
}

}  // namespace evcs::control
