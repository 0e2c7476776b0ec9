#include "evcs/simulation.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "evcs/control.hpp"
#include "evcs/errors.hpp"
#include "evcs/network.hpp"

namespace evcs::sim {

using attack::AttackKind;
using attack::AttackTarget;

namespace {

attack::AttackScenario base_attack(const config::RunConfig& cfg) {
  attack::AttackScenario a;
  a.resample_hz = cfg.attack.resample_hz;
  a.bes_dist = {attack::Distribution::Kind::Gaussian, cfg.attack.bes_mean, cfg.attack.bes_variance};
  a.ev_dist = {attack::Distribution::Kind::Gaussian, cfg.attack.ev_mean, cfg.attack.ev_variance};
  a.seed = cfg.seed;
  return a;
}

}  // namespace

double ddos_delay_ms(const config::NetworkConfig& net, int attackers) {
  if (net.mode == "table") return network::table_delay(attackers);
  double sum = 0.0;
  for (int s = 0; s < net.des_seeds; ++s) {
    network::SynFloodConfig c = net.des;
    c.attacker_count = attackers;
    c.seed = net.des.seed + static_cast<std::uint64_t>(s);
    sum += network::synflood_simulate(c).mean_delay_ms;
  }
  return sum / net.des_seeds;
}

ScenarioPlan impact_plan(const config::RunConfig& cfg, const std::string& name) {
  ScenarioPlan p;
  p.name = name;
  p.attack = base_attack(cfg);
  auto fdi = [&](AttackTarget target, const config::Window& w, int label) {
    p.attack.kind = AttackKind::Fdi;
    p.attack.target = target;
    p.attack.t_start = w.start;
    p.attack.t_end = w.end;
    p.label = label;
  };
  auto ddos = [&](AttackTarget target, double start, int label) {
    p.attack.kind = AttackKind::Ddos;
    p.attack.target = target;
    p.attack.t_start = start;
    p.attackers = cfg.network.attackers;
    p.delay_ms = ddos_delay_ms(cfg.network, p.attackers);
    p.attack.delay_samples = network::delay_samples(p.delay_ms, cfg.ts);
    p.attack.t_end = start + static_cast<double>(p.attack.delay_samples) * cfg.ts;
    p.label = label;
  };
  if (name == "normal") {
    p.attack.kind = AttackKind::None;
  } else if (name == "fdi-pv") {
    fdi(AttackTarget::Pv, cfg.attack.fdi_pv, 1);
  } else if (name == "fdi-bes") {
    fdi(AttackTarget::Bes, cfg.attack.fdi_bes, 2);
  } else if (name == "fdi-ev") {
    fdi(AttackTarget::Ev, cfg.attack.fdi_ev, 3);
  } else if (name == "fdi-all") {
    fdi(AttackTarget::All, cfg.attack.fdi_all, -1);
  } else if (name == "ddos-pv") {
    ddos(AttackTarget::Pv, cfg.attack.ddos_pv_start, -1);
  } else if (name == "ddos-bes") {
    ddos(AttackTarget::Bes, cfg.attack.ddos_bes_start, -1);
  } else if (name == "ddos-ev") {
    ddos(AttackTarget::Ev, cfg.attack.ddos_ev_start, -1);
  } else {
    throw ConfigError("unknown scenario '" + name + "'");
  }
  return p;
}

ScenarioPlan class_plan(const config::RunConfig& cfg, int label) {
  static const char* names[] = {"normal", "fdi-pv", "fdi-bes", "fdi-ev"};
  if (label < 0 || label >= dataset::kClassCount) throw InvalidArgument("class label out of range");
  ScenarioPlan p = impact_plan(cfg, names[label]);
  p.record_dataset = true;
  if (label > 0 && cfg.dataset.attack_span == "run") {
    p.name = std::string(names[label]) + "-class";
    p.attack.t_start = 0.0;
    p.attack.t_end = cfg.duration + cfg.ts;
    p.attack.seed = cfg.seed + 1;
  }
  return p;
}

void Trace::reserve(std::size_t n) {
  for (auto* v : {&t, &p_pv, &v_pv, &i_pv, &duty_pv, &v_bus, &i_bes, &v_bes, &soc_bes, &i_ev, &v_ev,
                  &soc_ev, &v_ref_bus, &v_ref_ev}) {
    v->reserve(n);
  }
}

RunResult run(const config::RunConfig& cfg, const ScenarioPlan& plan) {
  const auto& k = cfg.control;
  const auto& pp = cfg.plant;
  const double ts = cfg.ts;
  const auto steps = static_cast<std::size_t>(std::llround(cfg.duration / ts));
  const auto mppt_every = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(k.mppt_interval / ts)));

  RunResult r;
  r.plan = plan;
  r.steps = steps;
  plant::PlantState s = plant::initial_state(pp, cfg.environment, k.mppt_duty_init);

  control::MpptState mppt;
  mppt.duty = k.mppt_duty_init;
  mppt.step = k.mppt_step;

  control::CascadeGains bes_gains;
  bes_gains.outer = {k.bes_outer_kp, k.bes_outer_ki, 0.0, -k.i_bes_max, k.i_bes_max};
  bes_gains.inner = {k.bes_inner_kp, k.bes_inner_ki, 0.0, 0.0, plant::kDutyMax};
  bes_gains.outer_ratio = k.outer_ratio;
  control::CascadedPi bes(bes_gains);
  bes.preset(0.0, 1.0 - pp.bes.ocv(s.bes.soc) / s.v_bus);

  control::CascadeGains ev_gains;
  ev_gains.outer = {k.ev_outer_kp, k.ev_outer_ki, 0.0, 0.0, k.i_ev_max};
  ev_gains.inner = {k.ev_inner_kp, k.ev_inner_ki, 0.0, 0.0, plant::kDutyMax};
  ev_gains.outer_ratio = k.outer_ratio;
  control::EvChargerState ev{control::CascadedPi(ev_gains), k.ev_terminate_on_target, false};
  ev.loop.preset(0.0, pp.ev.ocv(s.ev.soc) / s.v_bus);

  control::SetpointLimiter bus_limit{k.v_ref_bus * (1.0 - k.bes_ref_band),
                                     k.v_ref_bus * (1.0 + k.bes_ref_band), k.v_ref_bus};
  control::SetpointLimiter ev_limit{k.ev_ref_min, k.ev_ref_max, k.v_ref_ev};

  attack::AttackBinding binding(plan.attack, ts);

  r.trace.reserve(steps);
  if (plan.record_dataset) r.data.reserve(steps);

  for (std::size_t n = 0; n < steps; ++n) {
    const double t = static_cast<double>(n) * ts;
    // The tracker perturbs only once the converter reports its previous
    // command in effect; otherwise it holds.
    const bool applied = n == 0 || s.duty_pv == mppt.duty;
    if (n % mppt_every == 0 && applied) mppt = control::mppt_po_step(s.v_pv, s.i_pv, mppt);
    const double duty_mppt = mppt.duty;

    const attack::ControlSignals sig = binding.apply(n, t, {duty_mppt, k.v_ref_bus, k.v_ref_ev});

    const double v_ref_bus = bus_limit.accept(sig.v_ref_bus);
    const double v_ref_ev = ev_limit.accept(sig.v_ref_ev);
    const double d_bes = control::bes_control_step(s.v_bus, v_ref_bus, s.i_bdc, bes, ts);
    const double d_ev = control::ev_control_step(s.ev.v, v_ref_ev, s.i_chg, ev, ts);

    s = plant::plant_step(s, {sig.duty_pv, d_bes, d_ev}, cfg.environment, ts, pp);

    auto& tr = r.trace;
    tr.t.push_back(s.t);
    tr.p_pv.push_back(s.p_pv);
    tr.v_pv.push_back(s.v_pv);
    tr.i_pv.push_back(s.i_pv);
    tr.duty_pv.push_back(s.duty_pv);
    tr.v_bus.push_back(s.v_bus);
    tr.i_bes.push_back(s.bes.i);
    tr.v_bes.push_back(s.bes.v);
    tr.soc_bes.push_back(s.bes.soc);
    tr.i_ev.push_back(s.ev.i);
    tr.v_ev.push_back(s.ev.v);
    tr.soc_ev.push_back(s.ev.soc);
    tr.v_ref_bus.push_back(v_ref_bus);
    tr.v_ref_ev.push_back(v_ref_ev);

    if (plan.record_dataset) {
      const dataset::ControlSnapshot snap{duty_mppt, bes.i_ref(), sig.v_ref_bus, ev.loop.i_ref(),
                                          sig.v_ref_ev};
      r.data.append(dataset::record_step(s, snap, plan.label));
    }
  }
  r.final_state = s;
  return r;
}

Stats window_stats(const Trace& tr, const std::vector<double> Trace::*channel, double t0, double t1,
                   double reference) {
  const auto& x = tr.*channel;
  Stats st;
  double sum = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    if (tr.t[i] < t0 || tr.t[i] >= t1) continue;
    sum += x[i];
    st.max_abs_dev = std::max(st.max_abs_dev, std::abs(x[i] - reference));
    ++st.count;
  }
  if (st.count == 0) return st;
  st.mean = sum / static_cast<double>(st.count);
  double sq = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    if (tr.t[i] < t0 || tr.t[i] >= t1) continue;
    sq += (x[i] - st.mean) * (x[i] - st.mean);
  }
  st.std_dev = std::sqrt(sq / static_cast<double>(st.count));
  return st;
}

void write_trace_csv(const Trace& tr, double interval, double ts, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  const auto every = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(interval / ts)));
  const std::vector<const std::vector<double>*> cols{
      &tr.t,     &tr.p_pv,  &tr.v_pv,    &tr.i_pv, &tr.duty_pv, &tr.v_bus,     &tr.i_bes,
      &tr.v_bes, &tr.soc_bes, &tr.i_ev,  &tr.v_ev, &tr.soc_ev,  &tr.v_ref_bus, &tr.v_ref_ev};
  std::string buf =
      "t,p_pv,v_pv,i_pv,duty_pv,v_bus,i_bes,v_bes,soc_bes,i_ev,v_ev,soc_ev,v_ref_bus,v_ref_ev\n";
  char num[64];
  for (std::size_t i = every - 1; i < tr.size(); i += every) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto res = std::to_chars(num, num + sizeof num, (*cols[c])[i]);
      buf.append(num, res.ptr);
      buf.push_back(c + 1 < cols.size() ? ',' : '\n');
    }
  }
  out << buf;
}

SimulateSummary simulate_all(const config::RunConfig& cfg, bool keep_traces) {
  cfg.validate();
  std::filesystem::create_directories(cfg.output_dir);
  SimulateSummary summary;
  nlohmann::json manifest;
  manifest["config"] = nlohmann::json::parse(config::to_json(cfg, -1));
  manifest["scenarios"] = nlohmann::json::array();

  auto describe = [&](const RunResult& r, const std::string& kind, const std::string& file) {
    nlohmann::json e;
    e["name"] = r.plan.name;
    e["purpose"] = kind;
    e["file"] = file;
    e["rows"] = r.steps;
    e["label"] = r.plan.label;
    const auto& a = r.plan.attack;
    e["seed"] = a.seed;
    if (a.kind == AttackKind::None) {
      e["attack"] = "none";
    } else {
      static const char* targets[] = {"pv", "bes", "ev", "all"};
      e["attack"] = a.kind == AttackKind::Fdi ? "fdi" : "ddos";
      e["target"] = targets[static_cast<int>(a.target)];
      e["window"] = {a.t_start, a.t_end};
      if (a.target == AttackTarget::All) {
        e["simultaneous"] = {"pv", "bes", "ev"};
      }
    }
    if (a.kind == AttackKind::Ddos) {
      e["attackers"] = r.plan.attackers;
      e["delay_ms"] = r.plan.delay_ms;
      e["delay_samples"] = a.delay_samples;
      e["delay_source"] = cfg.network.mode;
    }
    manifest["scenarios"].push_back(e);
  };

  for (const auto& name : cfg.scenarios) {
    ScenarioPlan plan = impact_plan(cfg, name);
    const bool doubles_as_class = name == "normal" || (cfg.dataset.attack_span == "window" &&
                                                       plan.label >= 1 && plan.label <= 3);
    plan.record_dataset = doubles_as_class;
    RunResult r = run(cfg, plan);
    const std::string file = "series_" + name + ".csv";
    write_trace_csv(r.trace, cfg.series_interval, cfg.ts, cfg.output_dir / file);
    describe(r, doubles_as_class ? "impact+class" : "impact", file);
    if (!keep_traces) r.trace = Trace{};
    summary.impact.push_back(std::move(r));
  }

  // Class datasets in label order.
  for (int label = 0; label < dataset::kClassCount; ++label) {
    const dataset::Dataset* existing = nullptr;
    for (const auto& r : summary.impact) {
      if (r.plan.record_dataset && r.plan.label == label) existing = &r.data;
    }
    if (existing) {
      summary.data.extend(*existing);
      continue;
    }
    RunResult r = run(cfg, class_plan(cfg, label));
    describe(r, "class", "dataset.csv");
    summary.data.extend(r.data);
  }
  for (auto& r : summary.impact) r.data = dataset::Dataset{};

  dataset::export_csv(summary.data, cfg.output_dir / "dataset.csv");
  const auto counts = summary.data.class_counts();
  manifest["dataset"] = {{"file", "dataset.csv"}, {"rows", summary.data.rows()}, {"class_rows", counts}};
  std::ofstream(cfg.output_dir / "manifest.json") << manifest.dump(2) << "\n";
  return summary;
}

}  // namespace evcs::sim
