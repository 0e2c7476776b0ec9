#include "evcs/plant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "evcs/errors.hpp"

namespace evcs::plant {
namespace {

constexpr double kResidualTol = 1e-9;
constexpr int kNewtonIters = 60;
constexpr int kBisectIters = 200;
constexpr double kInvPhi = 0.6180339887498949;  // 1/golden ratio

void require(bool ok, const char* what) {
  if (!ok) throw InvalidArgument(what);
}

// d(residual)/dI, always negative.
double residual_slope(double v, double i, double temperature, const PvParams& p) {
  const double vt = p.thermal_voltage(temperature);
  const double e = std::exp((v + i * p.r_s) / vt);
  return -p.i_0 * p.r_s / vt * e - p.r_s / p.r_sh - 1.0;
}

}  // namespace

void PvParams::validate() const {
  require(r_s >= 0.0, "PV series resistance must be >= 0");
  require(r_sh > 0.0, "PV shunt resistance must be > 0");
  require(i_0 > 0.0, "PV saturation current must be > 0");
  require(gamma >= 1.0 && gamma <= 2.0, "PV ideality factor must lie in [1, 2]");
  require(n_cs >= 1, "PV module needs at least one cell in series");
  require(t_ref > 0.0 && g_ref > 0.0, "PV reference conditions must be positive");
}

double PvParams::thermal_voltage(double temperature) const {
  return n_cs * kBoltzmann * temperature * gamma / kElementaryCharge;
}

void ConverterParams::validate() const {
  require(l_boost > 0 && c_dc > 0 && l_bdc > 0 && l_buck > 0 && c_buck > 0,
          "converter reactive components must be positive");
  require(f_sw > 0 && r_0 > 0 && delta_il > 0 && delta_v > 0,
          "converter switching frequency and ripple specs must be positive");
}

void BatteryParams::validate() const {
  require(v_nom > 0.0, "battery nominal voltage must be positive");
  require(q_rated_ah > 0.0, "battery capacity must be positive");
  require(r_int >= 0.0, "battery internal resistance must be >= 0");
  require(soc_init >= 0.0 && soc_init <= 1.0, "battery initial SOC must lie in [0, 1]");
}

void PlantParams::validate() const {
  pv.validate();
  converter.validate();
  bes.validate();
  ev.validate();
  require(v_bus_nominal > 0.0, "nominal bus voltage must be positive");
}

double pv_photocurrent(double irradiance, double temperature, const PvParams& p) {
  return irradiance / p.g_ref * (p.i_ph_ref + p.mu_isc * (temperature - p.t_ref));
}

double pv_residual(double v, double i, double irradiance, double temperature,
                   const PvParams& p) {
  const double i_ph = pv_photocurrent(irradiance, temperature, p);
  const double vd = v + i * p.r_s;
  return i_ph - p.i_0 * std::expm1(vd / p.thermal_voltage(temperature)) - vd / p.r_sh - i;
}

double pv_diode_current(double v, double i, double temperature, const PvParams& p) {
  return p.i_0 * std::expm1((v + i * p.r_s) / p.thermal_voltage(temperature));
}

double pv_current(double v, double irradiance, double temperature, const PvParams& p,
                  double guess) {
  require(v >= 0.0, "PV voltage must be >= 0");
  require(irradiance >= 0.0, "irradiance must be >= 0");
  const double i_ph = pv_photocurrent(irradiance, temperature, p);

  double i = std::isfinite(guess) ? guess : i_ph;
  for (int k = 0; k < kNewtonIters; ++k) {
    const double f = pv_residual(v, i, irradiance, temperature, p);
    if (std::abs(f) < kResidualTol) return i;
    double step = -f / residual_slope(v, i, temperature, p);
    // Damping: never move more than the photocurrent scale in one step.
    const double cap = std::max(1.0, std::abs(i_ph));
    step = std::clamp(step, -cap, cap);
    i += step;
    if (!std::isfinite(i)) break;
  }

  double lo = -0.1 * i_ph;
  double hi = 1.1 * i_ph;
  double f_lo = pv_residual(v, lo, irradiance, temperature, p);
  double f_hi = pv_residual(v, hi, irradiance, temperature, p);
  if (std::abs(f_lo) < kResidualTol) return lo;
  if (std::abs(f_hi) < kResidualTol) return hi;
  if (f_lo * f_hi < 0.0) {
    for (int k = 0; k < kBisectIters; ++k) {
      const double mid = 0.5 * (lo + hi);
      const double f_mid = pv_residual(v, mid, irradiance, temperature, p);
      if (std::abs(f_mid) < kResidualTol) return mid;
      if ((f_mid > 0.0) == (f_lo > 0.0)) {
        lo = mid;
        f_lo = f_mid;
      } else {
        hi = mid;
      }
    }
  }
  throw NoConvergence("PV current solver did not converge at v=" + std::to_string(v));
}

double pv_current(double v, double irradiance, double temperature, const PvParams& p) {
  return pv_current(v, irradiance, temperature, p,
                    std::numeric_limits<double>::quiet_NaN());
}

double pv_open_circuit_voltage(double irradiance, double temperature, const PvParams& p) {
  const double i_ph = pv_photocurrent(irradiance, temperature, p);
  if (i_ph <= 0.0) return 0.0;
  const double vt = p.thermal_voltage(temperature);
  // I = 0 residual is strictly decreasing in v; the shunt-free root bounds it.
  double lo = 0.0;
  double hi = vt * std::log1p(i_ph / p.i_0);
  for (int k = 0; k < kBisectIters && hi - lo > 1e-13; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (pv_residual(mid, 0.0, irradiance, temperature, p) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

OperatingPoint pv_mpp(double irradiance, double temperature, const PvParams& p) {
  require(irradiance >= 0.0, "irradiance must be >= 0");
  if (irradiance == 0.0) return {};
  const double voc = pv_open_circuit_voltage(irradiance, temperature, p);
  auto power = [&](double v) {
    return v * pv_current(v, irradiance, temperature, p);
  };

  double a = 0.0;
  double b = voc;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = power(c);
  double fd = power(d);
  while (b - a > 1e-4) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = power(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = power(d);
    }
  }
  const double v = 0.5 * (a + b);
  const double i = pv_current(v, irradiance, temperature, p);
  return {v, i, v * i};
}

double boost_output(double v_pv, double duty, double d_max) {
  if (duty < 0.0 || duty > d_max) {
    throw DutyOutOfRange("boost duty " + std::to_string(duty) + " outside [0, " +
                         std::to_string(d_max) + "]");
  }
  return v_pv / (1.0 - duty);
}

BoostSizing size_boost(double v_pv, double v_dc, double delta_il, double delta_v,
                       double r_0, double f) {
  if (!(v_pv > 0 && v_dc > 0 && delta_il > 0 && delta_v > 0 && r_0 > 0 && f > 0)) {
    throw InvalidSizing("boost sizing inputs must be positive");
  }
  if (v_dc <= v_pv) throw InvalidSizing("boost output must exceed its input");
  const double d_b = 1.0 - v_pv / v_dc;
  return {v_dc * d_b / (delta_il * f), v_pv * d_b / (r_0 * delta_v * f)};
}

BuckSizing size_buck(double v_dc, double v_batt, double delta_il, double delta_v,
                     double f) {
  if (!(v_dc > 0 && v_batt > 0 && delta_il > 0 && delta_v > 0 && f > 0)) {
    throw InvalidSizing("buck sizing inputs must be positive");
  }
  if (v_batt >= v_dc) throw InvalidSizing("buck output must be below its input");
  const double d_buck = v_batt / v_dc;
  const double l = (v_dc - v_batt) * d_buck / (delta_il * f);
  const double c = (1.0 - d_buck) * v_batt / (8.0 * l * delta_v * f * f);
  return {l, c};
}

BatteryState battery_step(const BatteryState& b, const BatteryParams& p,
                          double i_terminal, double dt) {
  require(dt > 0.0, "battery step needs dt > 0");
  BatteryState out;
  out.soc = std::clamp(b.soc - i_terminal * dt / (3600.0 * p.q_rated_ah), 0.0, 1.0);
  out.i = i_terminal;
  out.v = p.ocv(out.soc) - i_terminal * p.r_int;
  return out;
}

PlantState initial_state(const PlantParams& p, const Environment& env, double duty_pv) {
  p.validate();
  PlantState s;
  s.irradiance = env.irradiance;
  s.temperature = env.temperature;
  s.v_oc = pv_open_circuit_voltage(env.irradiance, env.temperature, p.pv);
  s.v_bus = p.v_bus_nominal;
  s.bes = {p.bes.soc_init, 0.0, p.bes.ocv(p.bes.soc_init)};
  s.ev = {p.ev.soc_init, 0.0, p.ev.ocv(p.ev.soc_init)};
  s.duty_pv = std::clamp(duty_pv, 0.0, kDutyMax);
  s.v_pv = std::min((1.0 - s.duty_pv) * s.v_bus, s.v_oc);
  if (env.irradiance > 0.0 && s.v_pv < s.v_oc) {
    s.i_pv = pv_current(s.v_pv, env.irradiance, env.temperature, p.pv);
  }
  s.p_pv = s.v_pv * s.i_pv;
  s.i_pv_diode = pv_diode_current(s.v_pv, s.i_pv, env.temperature, p.pv);
  return s;
}

PlantState plant_step(const PlantState& s, const Duties& duties, const Environment& env,
                      double dt, const PlantParams& p) {
  require(dt > 0.0, "plant step needs dt > 0");
  const ConverterParams& cv = p.converter;
  PlantState n = s;
  n.t = s.t + dt;
  n.irradiance = env.irradiance;
  n.temperature = env.temperature;
  if (env.irradiance != s.irradiance || env.temperature != s.temperature || s.v_oc == 0.0) {
    n.v_oc = pv_open_circuit_voltage(env.irradiance, env.temperature, p.pv);
  }

  const double d_pv = std::clamp(duties.pv, 0.0, kDutyMax);
  const double d_bes = std::clamp(duties.bes, 0.0, 1.0);
  const double d_ev = std::clamp(duties.ev, 0.0, 1.0);
  n.duty_pv = d_pv;
  n.duty_bes = d_bes;
  n.duty_ev = d_ev;

  // PV operating point. Above V_oc the boost diode blocks and the module floats.
  const double v_reflected = (1.0 - d_pv) * s.v_bus;
  if (env.irradiance > 0.0 && v_reflected < n.v_oc) {
    n.v_pv = v_reflected;
    n.i_pv = std::max(0.0, pv_current(n.v_pv, env.irradiance, env.temperature, p.pv,
                                      s.i_pv > 0.0 ? s.i_pv : std::nan("")));
  } else {
    n.v_pv = n.v_oc;
    n.i_pv = 0.0;
  }
  n.p_pv = n.v_pv * n.i_pv;
  n.i_pv_diode = pv_diode_current(n.v_pv, n.i_pv, env.temperature, p.pv);

  // Inductor currents, battery resistance implicit.
  const double ocv_bes = p.bes.ocv(s.bes.soc);
  const double a_bes = dt * p.bes.r_int / cv.l_bdc;
  n.i_bdc = (s.i_bdc + dt / cv.l_bdc * (ocv_bes - (1.0 - d_bes) * s.v_bus)) / (1.0 + a_bes);

  const double ocv_ev = p.ev.ocv(s.ev.soc);
  const double a_ev = dt * p.ev.r_int / cv.l_buck;
  n.i_chg = (s.i_chg + dt / cv.l_buck * (d_ev * s.v_bus - ocv_ev)) / (1.0 + a_ev);
  n.i_chg = std::max(0.0, n.i_chg);

  // DC link from the updated branch currents.
  n.i_bus = (1.0 - d_pv) * n.i_pv + (1.0 - d_bes) * n.i_bdc - d_ev * n.i_chg;
  n.v_bus = std::max(0.0, s.v_bus + dt / cv.c_dc * n.i_bus);

  n.bes = battery_step(s.bes, p.bes, n.i_bdc, dt);
  n.ev = battery_step(s.ev, p.ev, -n.i_chg, dt);

  n.boost_diode = {(1.0 - d_pv) * n.i_pv, d_pv * n.v_bus};
  n.buck_diode = {(1.0 - d_ev) * n.i_chg, d_ev * n.v_bus};

  n.e_pv = s.e_pv + n.p_pv * dt;
  n.e_bes = s.e_bes - ocv_bes * n.i_bdc * dt;
  n.e_ev = s.e_ev + ocv_ev * n.i_chg * dt;
  n.e_loss = s.e_loss +
             (p.bes.r_int * n.i_bdc * n.i_bdc + p.ev.r_int * n.i_chg * n.i_chg) * dt;

  const double v_limit = 10.0 * p.v_bus_nominal;
  const bool finite = std::isfinite(n.v_bus) && std::isfinite(n.i_bdc) &&
                      std::isfinite(n.i_chg) && std::isfinite(n.i_pv);
  if (!finite || n.v_bus > v_limit || std::abs(n.bes.v) > v_limit ||
      std::abs(n.ev.v) > v_limit) {
    throw NumericBlowup("plant state diverged at t=" + std::to_string(n.t));
  }
  return n;
}

double stored_energy(const PlantState& s, const PlantParams& p) {
  const ConverterParams& cv = p.converter;
  return 0.5 * cv.c_dc * s.v_bus * s.v_bus + 0.5 * cv.l_bdc * s.i_bdc * s.i_bdc +
         0.5 * cv.l_buck * s.i_chg * s.i_chg;
}

}  // namespace evcs::plant
