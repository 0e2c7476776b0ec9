#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evcs/dataset.hpp"
#include "evcs/ids.hpp"
#include "evcs/network.hpp"
#include "evcs/plant.hpp"

namespace evcs::config {

inline const std::vector<std::string>& known_scenarios() {
  static const std::vector<std::string> names{"normal",  "fdi-pv",  "fdi-bes",
                                              "fdi-ev",  "fdi-all", "ddos-pv",
                                              "ddos-bes", "ddos-ev"};
  return names;
}

struct ControlConfig {
  double v_ref_bus = 72.0;
  double v_ref_ev = 28.0;
  double i_ev_max = 20.0;
  double i_bes_max = 2.0 * 43.47;
  double bes_ref_band = 0.03;  // accepted bus setpoints: v_ref_bus * (1 +- band)
  double ev_ref_min = 18.0;
  double ev_ref_max = 30.0;
  bool ev_terminate_on_target = true;

  double mppt_interval = 1e-3;  // s
  double mppt_step = 0.005;
  double mppt_duty_init = 0.49;

  double bes_outer_kp = 1.88;
  double bes_outer_ki = 59.0;
  double bes_inner_kp = 0.0175;
  double bes_inner_ki = 5.5;
  double ev_outer_kp = 5.0;
  double ev_outer_ki = 50.0;
  double ev_inner_kp = 0.0175;
  double ev_inner_ki = 5.5;
  int outer_ratio = 10;

  void validate() const;
};

struct Window {
  double start = 0.0;
  double end = 0.0;
};

struct AttackConfig {
  Window fdi_pv{2.0, 4.0};
  Window fdi_bes{6.0, 8.0};
  Window fdi_ev{10.0, 12.0};
  Window fdi_all{2.0, 4.0};
  double ddos_pv_start = 2.0;
  double ddos_bes_start = 6.0;
  double ddos_ev_start = 10.0;
  double resample_hz = 10.0;
  double bes_mean = 48.0;
  double bes_variance = 10.0;
  double ev_mean = 24.0;
  double ev_variance = 10.0;

  void validate() const;
};

struct NetworkConfig {
  int attackers = 15;
  std::string mode = "table";  // "table" or "des"
  int des_seeds = 5;
  network::SynFloodConfig des;

  void validate() const;
};

struct DatasetConfig {
  std::size_t window = 50;
  std::size_t stride = 25;
  dataset::SplitSpec split;
  // "run": class datasets come from runs attacked end to end; "window": from
  // the impact runs, labelled by class for every row.
  std::string attack_span = "run";

  void validate() const;
};

struct RunConfig {
  double ts = 1e-4;
  double duration = 15.0;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "out";
  std::vector<std::string> scenarios = known_scenarios();
  double series_interval = 1e-3;  // s between rows of the time-series files

  plant::PlantParams plant;
  plant::Environment environment;
  ControlConfig control;
  AttackConfig attack;
  NetworkConfig network;
  DatasetConfig dataset;
  ids::ArchSpec arch;
  ids::TrainConfig train;

  void validate() const;
};

// Reads a JSON document onto the defaults. Unknown keys and type mismatches
// throw ConfigError.
RunConfig load(const std::filesystem::path& path);
RunConfig parse(const std::string& json_text);
RunConfig defaults();

// Full configuration as JSON, as recorded in run manifests.
std::string to_json(const RunConfig& cfg, int indent = 2);

}  // namespace evcs::config
