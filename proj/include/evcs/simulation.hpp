#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "evcs/attack.hpp"
#include "evcs/config.hpp"
#include "evcs/dataset.hpp"
#include "evcs/plant.hpp"

namespace evcs::sim {

struct ScenarioPlan {
  std::string name;
  int label = 0;  // dataset class for the run
  attack::AttackScenario attack;
  bool record_dataset = false;
  double delay_ms = 0.0;  // DDoS only
  int attackers = 0;      // DDoS only
};

// Impact run for one named scenario, with attack windows from the config.
ScenarioPlan impact_plan(const config::RunConfig& cfg, const std::string& name);
// Class run used for the fingerprint dataset (labels 0..3).
ScenarioPlan class_plan(const config::RunConfig& cfg, int label);

// DDoS delay for the configured attacker count, from Table 4 lookup or the
// DES averaged over `des_seeds` seeds.
double ddos_delay_ms(const config::NetworkConfig& net, int attackers);

// Full-rate trace of the quantities the impact checks and plots need.
struct Trace {
  std::vector<double> t, p_pv, v_pv, i_pv, duty_pv, v_bus, i_bes, v_bes, soc_bes, i_ev, v_ev,
      soc_ev, v_ref_bus, v_ref_ev;

  std::size_t size() const { return t.size(); }
  void reserve(std::size_t n);
};

struct RunResult {
  ScenarioPlan plan;
  Trace trace;
  dataset::Dataset data;  // empty unless plan.record_dataset
  plant::PlantState final_state;
  std::size_t steps = 0;
};

RunResult run(const config::RunConfig& cfg, const ScenarioPlan& plan);

// Summary statistics over [t0, t1) of a trace channel.
struct Stats {
  double mean = 0.0;
  double std_dev = 0.0;
  double max_abs_dev = 0.0;  // max |x - reference|
  std::size_t count = 0;
};

Stats window_stats(const Trace& tr, const std::vector<double> Trace::*channel, double t0,
                   double t1, double reference = 0.0);

void write_trace_csv(const Trace& tr, double interval, double ts,
                     const std::filesystem::path& path);

// Runs every configured scenario plus the class runs, writes one time-series
// file per scenario, dataset.csv and manifest.json under cfg.output_dir.
struct SimulateSummary {
  std::vector<RunResult> impact;
  dataset::Dataset data;
};

SimulateSummary simulate_all(const config::RunConfig& cfg, bool keep_traces = true);

}  // namespace evcs::sim
