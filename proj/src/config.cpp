#include "evcs/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "evcs/errors.hpp"

namespace evcs::config {

using nlohmann::json;

void ControlConfig::validate() const {
  const bool positive = v_ref_bus > 0 && v_ref_ev > 0 && i_ev_max > 0 && i_bes_max > 0 &&
                        mppt_interval > 0 && mppt_step > 0 && outer_ratio >= 1;
  if (!positive) throw ConfigError("control setpoints, limits and intervals must be positive");
  if (!(bes_ref_band >= 0 && bes_ref_band < 1)) throw ConfigError("control.bes_ref_band must be in [0, 1)");
  if (!(ev_ref_min > 0 && ev_ref_min <= ev_ref_max)) throw ConfigError("control EV setpoint band is empty");
  if (!(mppt_duty_init >= 0 && mppt_duty_init <= plant::kDutyMax)) {
    throw ConfigError("control.mppt_duty_init outside [0, 0.95]");
  }
  for (double g : {bes_outer_kp, bes_outer_ki, bes_inner_kp, bes_inner_ki, ev_outer_kp, ev_outer_ki,
                   ev_inner_kp, ev_inner_ki}) {
    if (!(g >= 0 && std::isfinite(g))) throw ConfigError("controller gains must be finite and >= 0");
  }
}

void AttackConfig::validate() const {
  for (const Window& w : {fdi_pv, fdi_bes, fdi_ev, fdi_all}) {
    if (!(w.start >= 0 && w.start < w.end)) {
      throw ConfigError("FDI windows must satisfy 0 <= start < end");
    }
  }
  for (double t : {ddos_pv_start, ddos_bes_start, ddos_ev_start}) {
    if (!(t >= 0)) throw ConfigError("DDoS start times must be >= 0");
  }
  if (!(resample_hz > 0)) throw ConfigError("attack.resample_hz must be positive");
  if (!(bes_variance >= 0 && ev_variance >= 0)) throw ConfigError("attack variances must be >= 0");
}

void NetworkConfig::validate() const {
  if (attackers < 0) throw ConfigError("network.attackers must be >= 0");
  if (mode != "table" && mode != "des") throw ConfigError("network.mode must be \"table\" or \"des\"");
  if (des_seeds < 1) throw ConfigError("network.des_seeds must be >= 1");
  des.validate();
}

void DatasetConfig::validate() const {
  if (window < 1 || stride < 1) throw ConfigError("dataset.window and dataset.stride must be >= 1");
  if (attack_span != "run" && attack_span != "window") {
    throw ConfigError("dataset.attack_span must be \"run\" or \"window\"");
  }
  split.validate();
}

void RunConfig::validate() const {
  if (!(ts > 0 && std::isfinite(ts))) throw ConfigError("ts must be positive");
  if (!(duration > ts && std::isfinite(duration))) throw ConfigError("duration must exceed ts");
  if (!(series_interval > 0)) throw ConfigError("series_interval must be positive");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (scenarios.empty()) throw ConfigError("at least one scenario is required");
  for (const auto& s : scenarios) {
    const auto& k = known_scenarios();
    if (std::find(k.begin(), k.end(), s) == k.end()) throw ConfigError("unknown scenario '" + s + "'");
  }
  if (!(environment.irradiance >= 0 && environment.temperature > 0)) {
    throw ConfigError("environment needs irradiance >= 0 and temperature > 0 K");
  }
  plant.validate();
  control.validate();
  attack.validate();
  for (const auto& s : scenarios) {
    const std::map<std::string, Window> fdi{{"fdi-pv", attack.fdi_pv},
                                            {"fdi-bes", attack.fdi_bes},
                                            {"fdi-ev", attack.fdi_ev},
                                            {"fdi-all", attack.fdi_all}};
    const std::map<std::string, double> ddos{{"ddos-pv", attack.ddos_pv_start},
                                             {"ddos-bes", attack.ddos_bes_start},
                                             {"ddos-ev", attack.ddos_ev_start}};
    if (fdi.contains(s) && fdi.at(s).end > duration) {
      throw ConfigError("scenario " + s + " attacks past the end of the run");
    }
    if (ddos.contains(s) && ddos.at(s) >= duration) {
      throw ConfigError("scenario " + s + " starts after the end of the run");
    }
  }
  network.validate();
  dataset.validate();
  if (arch.input_dim != dataset::kFeatureCount || arch.classes != dataset::kClassCount) {
    throw ConfigError("the classifier must take 36 features and emit 4 classes");
  }
  if (arch.hidden.empty() || std::count(arch.hidden.begin(), arch.hidden.end(), 0u) > 0) {
    throw ConfigError("ids.hidden must list positive layer widths");
  }
  if (!(arch.dropout >= 0 && arch.dropout < 1)) throw ConfigError("ids.dropout must be in [0, 1)");
  train.validate();
}

namespace {

// Walks the configuration tree once per direction so readers and writers
// share a single key list.
class Binder {
 public:
  Binder(json& j, bool reading, std::string path) : j_(j), reading_(reading), path_(std::move(path)) {
    if (reading_ && !j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void field(const char* key, T& v) {
    seen_.insert(key);
    if (!reading_) {
      j_[key] = v;
      return;
    }
    if (!j_.contains(key)) return;
    const json& node = j_.at(key);
    check_type<T>(node, key);
    try {
      v = node.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  void field(const char* key, std::filesystem::path& p) {
    std::string s = p.string();
    field(key, s);
    p = s;
  }

  void field(const char* key, Window& w) {
    std::vector<double> v{w.start, w.end};
    field(key, v);
    if (v.size() != 2) throw ConfigError(where(key) + " must be [start, end]");
    w = {v[0], v[1]};
  }

  void object(const char* key, const std::function<void(Binder&)>& fn) {
    seen_.insert(key);
    if (!reading_) {
      json child = json::object();
      Binder b(child, false, path_ + "." + key);
      fn(b);
      j_[key] = child;
      return;
    }
    if (!j_.contains(key)) return;
    Binder b(j_.at(key), true, path_ + "." + key);
    fn(b);
    b.finish();
  }

  void finish() const {
    if (!reading_) return;
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown key " + where(item.key().c_str()));
    }
  }

 private:
  template <typename T>
  void check_type(const json& node, const char* key) const {
    bool ok = true;
    if constexpr (std::is_same_v<T, bool>) {
      ok = node.is_boolean();
    } else if constexpr (std::is_integral_v<T>) {
      ok = std::is_signed_v<T> ? node.is_number_integer() : node.is_number_unsigned();
    } else if constexpr (std::is_floating_point_v<T>) {
      ok = node.is_number();
    } else if constexpr (std::is_same_v<T, std::string>) {
      ok = node.is_string();
    } else {
      ok = node.is_array();
    }
    if (!ok) throw ConfigError(where(key) + " has the wrong type");
  }

  std::string where(const char* key = nullptr) const {
    std::string p = path_.empty() ? "<root>" : path_;
    if (key) p = path_.empty() ? key : path_ + "." + key;
    return "'" + p + "'";
  }

  json& j_;
  bool reading_;
  std::string path_;
  std::set<std::string> seen_;
};

void bind_battery(Binder& b, plant::BatteryParams& p) {
  b.field("v_nom", p.v_nom);
  b.field("q_rated_ah", p.q_rated_ah);
  b.field("i_nom_discharge", p.i_nom_discharge);
  b.field("r_int", p.r_int);
  b.field("soc_init", p.soc_init);
}

void bind(Binder& b, RunConfig& c) {
  b.field("ts", c.ts);
  b.field("duration", c.duration);
  b.field("seed", c.seed);
  b.field("output_dir", c.output_dir);
  b.field("scenarios", c.scenarios);
  b.field("series_interval", c.series_interval);

  b.object("plant", [&](Binder& p) {
    p.object("pv", [&](Binder& q) {
      auto& pv = c.plant.pv;
      q.field("i_ph_ref", pv.i_ph_ref);
      q.field("i_0", pv.i_0);
      q.field("r_s", pv.r_s);
      q.field("r_sh", pv.r_sh);
      q.field("gamma", pv.gamma);
      q.field("n_cs", pv.n_cs);
      q.field("t_ref", pv.t_ref);
      q.field("g_ref", pv.g_ref);
      q.field("mu_isc", pv.mu_isc);
    });
    p.object("converter", [&](Binder& q) {
      auto& cv = c.plant.converter;
      q.field("l_boost", cv.l_boost);
      q.field("c_dc", cv.c_dc);
      q.field("l_bdc", cv.l_bdc);
      q.field("l_buck", cv.l_buck);
      q.field("c_buck", cv.c_buck);
      q.field("f_sw", cv.f_sw);
      q.field("r_0", cv.r_0);
      q.field("delta_il", cv.delta_il);
      q.field("delta_v", cv.delta_v);
    });
    p.object("bes", [&](Binder& q) { bind_battery(q, c.plant.bes); });
    p.object("ev", [&](Binder& q) { bind_battery(q, c.plant.ev); });
    p.field("v_bus_nominal", c.plant.v_bus_nominal);
    p.field("irradiance", c.environment.irradiance);
    p.field("temperature", c.environment.temperature);
  });

  b.object("control", [&](Binder& q) {
    auto& k = c.control;
    q.field("v_ref_bus", k.v_ref_bus);
    q.field("v_ref_ev", k.v_ref_ev);
    q.field("i_ev_max", k.i_ev_max);
    q.field("i_bes_max", k.i_bes_max);
    q.field("bes_ref_band", k.bes_ref_band);
    q.field("ev_ref_min", k.ev_ref_min);
    q.field("ev_ref_max", k.ev_ref_max);
    q.field("ev_terminate_on_target", k.ev_terminate_on_target);
    q.field("mppt_interval", k.mppt_interval);
    q.field("mppt_step", k.mppt_step);
    q.field("mppt_duty_init", k.mppt_duty_init);
    q.field("bes_outer_kp", k.bes_outer_kp);
    q.field("bes_outer_ki", k.bes_outer_ki);
    q.field("bes_inner_kp", k.bes_inner_kp);
    q.field("bes_inner_ki", k.bes_inner_ki);
    q.field("ev_outer_kp", k.ev_outer_kp);
    q.field("ev_outer_ki", k.ev_outer_ki);
    q.field("ev_inner_kp", k.ev_inner_kp);
    q.field("ev_inner_ki", k.ev_inner_ki);
    q.field("outer_ratio", k.outer_ratio);
  });

  b.object("attack", [&](Binder& q) {
    auto& a = c.attack;
    q.field("fdi_pv", a.fdi_pv);
    q.field("fdi_bes", a.fdi_bes);
    q.field("fdi_ev", a.fdi_ev);
    q.field("fdi_all", a.fdi_all);
    q.field("ddos_pv_start", a.ddos_pv_start);
    q.field("ddos_bes_start", a.ddos_bes_start);
    q.field("ddos_ev_start", a.ddos_ev_start);
    q.field("resample_hz", a.resample_hz);
    q.field("bes_mean", a.bes_mean);
    q.field("bes_variance", a.bes_variance);
    q.field("ev_mean", a.ev_mean);
    q.field("ev_variance", a.ev_variance);
  });

  b.object("network", [&](Binder& q) {
    auto& n = c.network;
    q.field("attackers", n.attackers);
    q.field("mode", n.mode);
    q.field("des_seeds", n.des_seeds);
    q.object("des", [&](Binder& r) {
      auto& d = n.des;
      r.field("attacker_syn_interval_us", d.attacker_syn_interval_us);
      r.field("synack_processing_us", d.synack_processing_us);
      r.field("backlog_capacity", d.backlog_capacity);
      r.field("half_open_timeout_s", d.half_open_timeout_s);
      r.field("legit_request_rate", d.legit_request_rate);
      r.field("sim_duration_s", d.sim_duration_s);
      r.field("initial_rto_s", d.initial_rto_s);
      r.field("max_syn_retries", d.max_syn_retries);
      r.field("seed", d.seed);
    });
  });

  b.object("dataset", [&](Binder& q) {
    auto& d = c.dataset;
    q.field("window", d.window);
    q.field("stride", d.stride);
    q.field("train_frac", d.split.train_frac);
    q.field("test_frac", d.split.test_frac);
    q.field("val_frac_of_train", d.split.val_frac_of_train);
    q.field("split_seed", d.split.seed);
    q.field("attack_span", d.attack_span);
  });

  b.object("ids", [&](Binder& q) {
    q.field("hidden", c.arch.hidden);
    q.field("dropout", c.arch.dropout);
    q.field("epochs", c.train.epochs);
    q.field("batch_size", c.train.batch_size);
    q.field("chunk_size", c.train.chunk_size);
    q.field("lr", c.train.adam.lr);
    q.field("beta1", c.train.adam.beta1);
    q.field("beta2", c.train.adam.beta2);
    q.field("eps", c.train.adam.eps);
    q.field("seed", c.train.seed);
  });
}

}  // namespace

RunConfig defaults() { return RunConfig{}; }

RunConfig parse(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Binder b(j, true, "");
  bind(b, c);
  b.finish();
  c.validate();
  return c;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string to_json(const RunConfig& cfg, int indent) {
  json j = json::object();
  RunConfig copy = cfg;
  Binder b(j, false, "");
  bind(b, copy);
  return j.dump(indent);
}

}  // namespace evcs::config
