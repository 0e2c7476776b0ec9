#pragma once

// Averaged-model simulation of the standalone PV charging station: PV array
// behind a boost converter, DC link, battery storage behind a bidirectional
// converter and an EV battery behind a buck charger.

namespace evcs::plant {

inline constexpr double kBoltzmann = 1.380649e-23;         // J/K
inline constexpr double kElementaryCharge = 1.602176634e-19;  // C
inline constexpr double kDutyMax = 0.95;

// One-diode module model. Defaults are the calibrated set fitted by
// tools/calibrate_pv.py to 1065.75 W / 36.75 V / 29 A at 1000 W/m^2, 25 C.
struct PvParams {
  double i_ph_ref = 30.9137313114;    // A
  double i_0 = 6.85421072235e-09;     // A
  double r_s = 0.0666567919458;       // ohm
  double r_sh = 150.0;                // ohm
  double gamma = 1.3;
  int n_cs = 60;
  double t_ref = 298.15;              // K
  double g_ref = 1000.0;              // W/m^2
  double mu_isc = 0.0;                // A/K

  // Throws InvalidArgument when a physical constraint is violated.
  void validate() const;
  double thermal_voltage(double temperature) const;
};

struct ConverterParams {
  double l_boost = 1.2e-3;   // H, PV boost inductor (sizing only)
  double c_dc = 10e-3;       // F, DC-link capacitance
  double l_bdc = 1.0e-3;     // H, BES bidirectional converter inductor
  double l_buck = 1.0e-3;    // H, EV charger inductor
  double c_buck = 0.5e-3;    // F, EV charger output filter (sizing only)
  double f_sw = 20e3;        // Hz
  double r_0 = 4.87;         // ohm, boost output impedance
  double delta_il = 2.9;     // A
  double delta_v = 0.72;     // V

  void validate() const;
};

struct BatteryParams {
  double v_nom = 48.0;              // V
  double q_rated_ah = 100.0;        // Ah
  double i_nom_discharge = 43.47;   // A
  double r_int = 0.02 * 48.0 / 43.47;  // ohm, 2 % sag at nominal current
  double soc_init = 0.6;

  void validate() const;
  // Open-circuit voltage, affine in SOC and anchored at v_nom for soc = 0.5.
  double ocv(double soc) const { return v_nom * (0.9 + 0.2 * soc); }
};

// Terminal current convention: discharge positive, charging negative.
struct BatteryState {
  double soc = 0.0;
  double i = 0.0;
  double v = 0.0;
};

struct DiodeReading {
  double i = 0.0;
  double v = 0.0;
};

struct Environment {
  double irradiance = 1000.0;   // W/m^2
  double temperature = 298.15;  // K
};

struct Duties {
  double pv = 0.0;
  double bes = 0.0;
  double ev = 0.0;
};

struct PlantParams {
  PvParams pv;
  ConverterParams converter;
  BatteryParams bes;
  BatteryParams ev{.v_nom = 24.0,
                   .q_rated_ah = 40.0,
                   .i_nom_discharge = 20.0,
                   .r_int = 0.02 * 24.0 / 20.0,
                   .soc_init = 0.8};
  double v_bus_nominal = 72.0;  // V, blow-up bound reference and initial bus voltage

  void validate() const;
};

struct PlantState {
  double t = 0.0;
  double irradiance = 0.0;
  double temperature = 0.0;

  double v_pv = 0.0;
  double i_pv = 0.0;
  double p_pv = 0.0;
  double i_pv_diode = 0.0;  // junction current of the one-diode model
  double v_oc = 0.0;        // open-circuit voltage at the current environment

  double v_bus = 0.0;
  double i_bus = 0.0;  // net current into the DC-link capacitor

  double i_bdc = 0.0;  // BES converter inductor current, discharge positive
  double i_chg = 0.0;  // EV charger inductor current, always >= 0

  BatteryState bes;
  BatteryState ev;

  double duty_pv = 0.0;
  double duty_bes = 0.0;
  double duty_ev = 0.0;

  DiodeReading boost_diode;
  DiodeReading buck_diode;

  // Cumulative energy bookkeeping (J): PV output, energy absorbed by the
  // battery chemistries (charging positive) and resistive losses.
  double e_pv = 0.0;
  double e_bes = 0.0;
  double e_ev = 0.0;
  double e_loss = 0.0;
};

struct OperatingPoint {
  double v = 0.0;
  double i = 0.0;
  double p = 0.0;
};

struct BoostSizing {
  double l_boost = 0.0;
  double c_dc = 0.0;
};

struct BuckSizing {
  double l_buck = 0.0;
  double c_buck = 0.0;
};

double pv_photocurrent(double irradiance, double temperature, const PvParams& p);

// Right-hand side minus left-hand side of the one-diode equation at (v, i).
double pv_residual(double v, double i, double irradiance, double temperature,
                   const PvParams& p);

// Junction (diode) current for a given operating point.
double pv_diode_current(double v, double i, double temperature, const PvParams& p);

// Solves the one-diode equation for the module current. Damped Newton from
// `guess` (or I_ph when guess is NaN), bisection on [-0.1 I_ph, 1.1 I_ph] as a
// fallback. Throws NoConvergence when neither reaches |residual| < 1e-9 A.
double pv_current(double v, double irradiance, double temperature,
                  const PvParams& p, double guess);
double pv_current(double v, double irradiance, double temperature,
                  const PvParams& p);

double pv_open_circuit_voltage(double irradiance, double temperature,
                               const PvParams& p);

// Golden-section search for the maximum power point, refined to 1 mV.
OperatingPoint pv_mpp(double irradiance, double temperature, const PvParams& p);

double boost_output(double v_pv, double duty, double d_max = kDutyMax);

BoostSizing size_boost(double v_pv, double v_dc, double delta_il, double delta_v,
                       double r_0, double f);

BuckSizing size_buck(double v_dc, double v_batt, double delta_il, double delta_v,
                     double f);

BatteryState battery_step(const BatteryState& b, const BatteryParams& p,
                          double i_terminal, double dt);

// Steady initial condition: bus at nominal, converters idle, batteries at
// their initial SOC, PV operating at the voltage implied by `duty_pv`.
PlantState initial_state(const PlantParams& p, const Environment& env, double duty_pv);

// Advances the averaged model by dt. Inductor currents are integrated with the
// battery resistance treated implicitly; the DC-link capacitor is then updated
// from the new currents. Throws NumericBlowup on non-finite or runaway states.
PlantState plant_step(const PlantState& s, const Duties& duties, const Environment& env,
                      double dt, const PlantParams& p);

// Energy stored in the DC-link capacitor and converter inductors (J).
double stored_energy(const PlantState& s, const PlantParams& p);

}  // namespace evcs::plant
