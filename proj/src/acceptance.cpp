#include "evcs/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "evcs/attack.hpp"
#include "evcs/dataset.hpp"
#include "evcs/errors.hpp"
#include "evcs/ids.hpp"
#include "evcs/network.hpp"
#include "evcs/plant.hpp"
#include "evcs/simulation.hpp"

namespace evcs::acceptance {

namespace {

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

CriterionResult pv_calibration() {
  const double t0 = cpu_seconds();
  const auto mpp = plant::pv_mpp(1000.0, 298.15, plant::PvParams{});
  const double dt = cpu_seconds() - t0;
  const double p_err = std::abs(mpp.p - 1065.0) / 1065.0;
  const double v_err = std::abs(mpp.v - 36.75) / 36.75;
  return {"1", "PV calibration", p_err <= 0.01 && v_err <= 0.02 && dt < 1.0,
          fmt("P_mpp=%.3f W (%.3f%%), V_mpp=%.4f V (%.3f%%), %.3f s", mpp.p, 100 * p_err, mpp.v,
              100 * v_err, dt)};
}

CriterionResult param_counts() {
  const auto c = ids::param_count(ids::ArchSpec{});
  std::size_t total = 0;
  for (auto n : c) total += n;
  const bool ok = c == std::vector<std::size_t>{25856, 33024, 33024, 260} && total == 92164 &&
                  ids::LstmModel::zeros(ids::ArchSpec{}).parameter_count() == 92164;
  return {"2", "Parameter-count identity", ok,
          fmt("%zu / %zu / %zu / %zu, total %zu", c[0], c[1], c[2], c[3], total)};
}

double max_gradient_error(std::uint64_t seed, bool dropout) {
  ids::ArchSpec arch{3, {4, 4, 4}, 2, 0.1};
  ids::LstmModel m = ids::LstmModel::init(arch, seed);
  std::mt19937_64 gen(seed + 1000);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto blk : m.blocks()) {
    for (Eigen::Index k = 0; k < blk.size(); ++k) blk[k] += 0.3 * nd(gen);
  }
  std::vector<Eigen::MatrixXd> windows(2, Eigen::MatrixXd(5, 3));
  for (auto& w : windows) {
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = nd(gen);
  }
  const std::vector<int> labels{0, 1};
  const auto batch = ids::make_batch(std::span<const Eigen::MatrixXd>(windows), labels);
  const ids::DropoutMode mode{dropout, seed};
  const auto lg = ids::loss_and_gradients(batch, m, mode);
  const auto analytic = lg.grads.blocks();

  const double h = 1e-5;
  double worst = 0.0;
  auto params = m.blocks();
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (Eigen::Index k = 0; k < params[b].size(); ++k) {
      const double saved = params[b][k];
      params[b][k] = saved + h;
      const double lp = ids::loss_and_gradients(batch, m, mode).loss;
      params[b][k] = saved - h;
      const double lm = ids::loss_and_gradients(batch, m, mode).loss;
      params[b][k] = saved;
      const double numeric = (lp - lm) / (2 * h);
      const double a = analytic[b][k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

CriterionResult gradient_check() {
  const double t0 = cpu_seconds();
  double worst = 0.0;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    worst = std::max(worst, max_gradient_error(s, false));
    worst = std::max(worst, max_gradient_error(s, true));
  }
  const double dt = cpu_seconds() - t0;
  return {"3", "BPTT gradient check", worst < 1e-4 && dt < 10.0,
          fmt("max relative error %.3e over 10 seeds (dropout off and on), %.2f s", worst, dt)};
}

CriterionResult stealth_invariance() {
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_int_distribution<int> states(2, 6);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = states(gen);
    const int m = n + 2 + static_cast<int>(gen() % 10);
    Eigen::MatrixXd h(m, n);
    for (Eigen::Index k = 0; k < h.size(); ++k) h.data()[k] = nd(gen);
    Eigen::VectorXd sig(m);
    for (int k = 0; k < m; ++k) sig[k] = 0.01 + 0.1 * std::abs(nd(gen));
    const attack::LinearMeasurementModel model(h, sig, 1.0);
    Eigen::VectorXd x(n), c(n), noise(m);
    for (int k = 0; k < n; ++k) x[k] = nd(gen), c[k] = 5.0 * nd(gen);
    for (int k = 0; k < m; ++k) noise[k] = sig[k] * nd(gen);
    const Eigen::VectorXd y = h * x + noise;
    const Eigen::VectorXd a = attack::stealthy_attack_vector(model, c, 1e12);
    const double j0 = attack::residual_detect(y, attack::wls_estimate(y, model), model).j;
    const Eigen::VectorXd ya = y + a;
    const double j1 = attack::residual_detect(ya, attack::wls_estimate(ya, model), model).j;
    worst = std::max(worst, std::abs(j1 - j0) / std::max(j0, 1e-300));
  }
  return {"4", "Stealth invariance", worst < 1e-9,
          fmt("max relative residual change %.3e over 100 models", worst)};
}

CriterionResult ddos_laws() {
  std::mt19937_64 gen(77);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::size_t failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + gen() % 200;
    std::vector<double> x(n + 1);
    for (auto& v : x) v = nd(gen);
    const std::size_t n1 = gen() % (n + 1);
    const std::size_t n0 = gen() % (n - n1 + 1);
    const attack::DdosWindow w{n1, n0, n};
    const auto y = attack::ddos_compose(x, w);
    bool ok = y.size() == x.size();
    for (std::size_t k = 0; ok && k <= n; ++k) {
      if (k <= n1) {
        ok = y[k] == x[k];
      } else if (k <= n1 + n0) {
        ok = y[k] == 0.0;
      } else {
        ok = y[k] == x[k - n0];
      }
    }
    const auto id = attack::ddos_compose(x, {n1, 0, n});
    ok = ok && id == x;
    attack::DdosChannel ch(n1, n0);
    for (std::size_t k = 0; ok && k <= n; ++k) ok = ch.push(x[k]) == y[k];
    if (!ok) ++failures;
  }
  return {"5", "DDoS composition laws", failures == 0,
          fmt("%zu of 1000 randomized cases violate a law", failures)};
}

CriterionResult table_fidelity() {
  static const double expected[16][2] = {
      {2.957, 23.138},   {23.262, 22.944},  {23.261, 22.944},  {92.687, 22.283},
      {127.318, 21.928}, {162.019, 21.617}, {196.850, 21.285}, {231.308, 20.954},
      {266.424, 20.629}, {300.954, 20.274}, {335.503, 19.956}, {370.730, 19.621},
      {405.044, 19.290}, {439.928, 18.973}, {474.631, 18.627}, {509.476, 18.293}};
  bool exact = true;
  for (int k = 0; k < 16; ++k) {
    exact = exact && network::table_delay(k) == expected[k][0] &&
            network::table_throughput(k) == expected[k][1];
  }
  const double drop = 100.0 * (1.0 - network::table_throughput(15) / network::table_throughput(0));
  const bool drop_ok = std::abs(drop - 20.94) <= 0.05;

  std::vector<double> delay(16), thr(16);
  for (int k = 0; k < 16; ++k) {
    for (std::uint64_t s = 1; s <= 5; ++s) {
      network::SynFloodConfig c;
      c.attacker_count = k;
      c.seed = s;
      const auto r = network::synflood_simulate(c);
      delay[k] += r.mean_delay_ms / 5.0;
      thr[k] += r.throughput_ratio / 5.0;
    }
  }
  bool monotone = true;
  for (int k = 1; k < 16; ++k) monotone = monotone && delay[k] >= delay[k - 1] && thr[k] <= thr[k - 1];
  return {"6", "Delay table fidelity", exact && drop_ok && monotone,
          fmt("rows %s, drop at k=15 %.3f%%, DES delay %.1f..%.1f ms throughput %.3f..%.3f %s",
              exact ? "exact" : "MISMATCH", drop, delay[0], delay[15], thr[0], thr[15],
              monotone ? "monotone" : "NOT monotone")};
}

// ---------------------------------------------------------------------------

struct ImpactRuns {
  std::map<std::string, sim::RunResult> runs;
  const sim::Trace& trace(const std::string& name) const { return runs.at(name).trace; }
};

ImpactRuns impact_runs(const config::RunConfig& cfg) {
  ImpactRuns r;
  for (const char* name : {"normal", "fdi-pv", "fdi-bes", "fdi-ev", "ddos-pv", "ddos-bes", "ddos-ev"}) {
    r.runs.emplace(name, sim::run(cfg, sim::impact_plan(cfg, name)));
  }
  return r;
}

using Channel = const std::vector<double> sim::Trace::*;

double max_deviation(const sim::Trace& a, const sim::Trace& b, Channel ch, double t0, double t1) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    if (a.t[i] >= t0 && a.t[i] < t1) worst = std::max(worst, std::abs((a.*ch)[i] - (b.*ch)[i]));
  }
  return worst;
}

std::vector<CriterionResult> impact_criteria(const config::RunConfig& cfg) {
  const ImpactRuns ir = impact_runs(cfg);
  const double vref = cfg.control.v_ref_bus;
  const auto& normal = ir.trace("normal");
  const auto baseline = sim::window_stats(normal, &sim::Trace::v_bus, 1.0, 2.0);
  std::vector<CriterionResult> out;

  {
    const auto& tr = ir.trace("fdi-pv");
    const auto& w = cfg.attack.fdi_pv;
    const auto pre = sim::window_stats(tr, &sim::Trace::v_bus, 1.0, 2.0);
    const auto during = sim::window_stats(tr, &sim::Trace::v_bus, w.start, w.end);
    const double t_end = cfg.duration;
    const auto post_v = sim::window_stats(tr, &sim::Trace::v_bus, t_end - 1.0, t_end);
    const auto base_v = sim::window_stats(normal, &sim::Trace::v_bus, t_end - 1.0, t_end);
    const auto post_p = sim::window_stats(tr, &sim::Trace::p_pv, t_end - 1.0, t_end);
    const auto base_p = sim::window_stats(normal, &sim::Trace::p_pv, t_end - 1.0, t_end);
    const double ratio = during.std_dev / pre.std_dev;
    const double dv = std::abs(post_v.mean - base_v.mean) / base_v.mean;
    const double dp = std::abs(post_p.mean - base_p.mean) / base_p.mean;
    out.push_back({"7a", "FDI-PV impact and recovery", ratio >= 3.0 && dv <= 0.02 && dp <= 0.02,
                   fmt("v_bus std %.4f V during vs %.4f V before (x%.1f); final-second v_bus off "
                       "%.3f%%, p_pv off %.3f%% from normal",
                       during.std_dev, pre.std_dev, ratio, 100 * dv, 100 * dp)});
  }
  {
    const auto& tr = ir.trace("fdi-bes");
    const auto& w = cfg.attack.fdi_bes;
    const auto s = sim::window_stats(tr, &sim::Trace::v_bus, w.start, w.end, vref);
    out.push_back({"7b", "FDI-BES bus deviation", s.max_abs_dev <= 0.05 * vref,
                   fmt("max |v_bus - %.1f| = %.3f V (%.2f%%) during attack", vref, s.max_abs_dev,
                       100 * s.max_abs_dev / vref)});
  }
  {
    const auto& tr = ir.trace("fdi-ev");
    const auto& w = cfg.attack.fdi_ev;
    double during = 0.0, pre = 0.0;
    std::size_t nd = 0, np = 0;
    for (std::size_t i = 0; i < tr.size(); ++i) {
      if (tr.t[i] >= w.start && tr.t[i] < w.end) during += std::abs(tr.i_ev[i]), ++nd;
      if (tr.t[i] >= w.start - 1.0 && tr.t[i] < w.start) pre += std::abs(tr.i_ev[i]), ++np;
    }
    during /= static_cast<double>(std::max<std::size_t>(nd, 1));
    pre /= static_cast<double>(std::max<std::size_t>(np, 1));
    out.push_back({"7c", "FDI-EV charging stop", during <= 0.1 * pre,
                   fmt("mean |i_ev| %.3f A during vs %.3f A before (%.1f%%)", during, pre,
                       100 * during / pre)});
  }
  {
    const auto& run = ir.runs.at("ddos-pv");
    const auto& tr = run.trace;
    const double t1 = run.plan.attack.t_start;
    const double t2 = run.plan.attack.t_end;
    const auto during = sim::window_stats(tr, &sim::Trace::v_bus, t1, t2);
    const double ratio = during.std_dev / baseline.std_dev;
    const double dev = max_deviation(tr, normal, &sim::Trace::v_bus, t2 + 0.5, t2 + 1.5);
    out.push_back({"7d", "DDoS-PV oscillation and recovery", ratio >= 3.0 && dev <= 0.02 * vref,
                   fmt("delay %.3f ms, v_bus std x%.1f of baseline during loss; max |v_bus - "
                       "normal| %.4f V over [t2+0.5, t2+1.5)",
                       run.plan.delay_ms, ratio, dev)});
  }
  {
    bool ok = true;
    std::string detail;
    for (const char* name : {"ddos-bes", "ddos-ev"}) {
      double worst = 0.0;
      const auto& tr = ir.trace(name);
      for (Channel ch : {&sim::Trace::p_pv, &sim::Trace::v_bus, &sim::Trace::i_bes, &sim::Trace::v_bes,
                         &sim::Trace::i_ev, &sim::Trace::v_ev}) {
        double mag = 0.0;
        for (double v : normal.*ch) mag = std::max(mag, std::abs(v));
        worst = std::max(worst, max_deviation(tr, normal, ch, 0.0, cfg.duration + 1.0) / mag);
      }
      ok = ok && worst <= 0.01;
      detail += fmt("%s max relative deviation %.3e; ", name, worst);
    }
    detail.resize(detail.size() - 2);
    out.push_back({"7e", "DDoS-BES/EV no impact", ok, detail});
  }
  return out;
}

// ---------------------------------------------------------------------------

dataset::Dataset class_dataset(const config::RunConfig& cfg) {
  dataset::Dataset d;
  for (int label = 0; label < dataset::kClassCount; ++label) {
    d.extend(sim::run(cfg, sim::class_plan(cfg, label)).data);
  }
  return d;
}

struct IdsOutcome {
  ids::LstmModel model;
  ids::MetricsReport report;
  std::vector<ids::EpochStats> history;
};

IdsOutcome train_and_evaluate(const config::RunConfig& cfg, dataset::Dataset data,
                              const ids::TrainConfig& tc, std::size_t train_limit,
                              std::ostream* progress) {
  const auto prep = dataset::prepare(data, cfg.dataset.window, cfg.dataset.stride, cfg.dataset.split);
  auto train = prep.split.train;
  if (train_limit && train.size() > train_limit) train.resize(train_limit);
  IdsOutcome o;
  o.model = ids::LstmModel::init(cfg.arch, tc.seed);
  o.history = ids::train(o.model, data, train, prep.split.val, tc, [&](const ids::EpochStats& e) {
    if (progress) {
      *progress << fmt("      epoch %2zu  loss %.5f  acc %.5f  val_loss %.5f  val_acc %.5f\n", e.epoch,
                       e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy)
                << std::flush;
    }
  });
  o.report = ids::evaluate(o.model, data, prep.split.test);
  return o;
}

CriterionResult ids_end_to_end(const config::RunConfig& cfg, std::ostream& out) {
  const double t0 = cpu_seconds();
  dataset::Dataset data = class_dataset(cfg);
  const double t_sim = cpu_seconds() - t0;
  const auto o = train_and_evaluate(cfg, std::move(data), cfg.train, 0, &out);
  const double total = cpu_seconds() - t0;
  double min_f1 = 1.0;
  for (double f : o.report.f1) min_f1 = std::min(min_f1, f);
  const bool ok = o.report.accuracy >= 0.99 && min_f1 >= 0.99 && total < 20 * 60;
  return {"8", "IDS end to end", ok,
          fmt("test accuracy %.5f, min per-class F1 %.5f on %zu windows; CPU %.1f s (simulation %.1f s)",
              o.report.accuracy, min_f1, o.report.total, total, t_sim)};
}

CriterionResult determinism(const config::RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> datasets, checkpoints, metrics;
  std::vector<Eigen::MatrixXd> probes;
  for (int rep = 0; rep < 2; ++rep) {
    const dataset::Dataset data = class_dataset(cfg);
    const auto csv = dir / fmt("dataset_%d.csv", rep);
    dataset::export_csv(data, csv);
    datasets.push_back(read_file(csv));
    std::filesystem::remove(csv);

    ids::TrainConfig tc = cfg.train;
    tc.epochs = 2;
    const auto o = train_and_evaluate(cfg, data, tc, 2000, nullptr);
    const auto ckpt = dir / fmt("model_%d.ckpt", rep);
    ids::save_model(o.model, ckpt);
    checkpoints.push_back(read_file(ckpt));
    metrics.push_back(ids::format_metrics_csv(o.report) + ids::format_metrics_table(o.report));

    const auto loaded = ids::load_model(ckpt);
    std::vector<dataset::SequenceWindow> probe;
    for (std::size_t s = 0; s < 8; ++s) probe.push_back({s * 1000, cfg.dataset.window, 0});
    dataset::Dataset norm = data;
    dataset::normalize_apply(dataset::normalize_fit(norm), norm);
    probes.push_back(ids::forward_probs(ids::make_batch(norm, probe), loaded));
  }
  const bool ok = datasets[0] == datasets[1] && checkpoints[0] == checkpoints[1] &&
                  metrics[0] == metrics[1] && probes[0] == probes[1];
  return {"9", "Determinism", ok,
          fmt("dataset %s (%zu bytes), checkpoint %s, metrics %s, probe predictions %s",
              datasets[0] == datasets[1] ? "identical" : "DIFFER", datasets[0].size(),
              checkpoints[0] == checkpoints[1] ? "identical" : "DIFFER",
              metrics[0] == metrics[1] ? "identical" : "DIFFER",
              probes[0] == probes[1] ? "identical" : "DIFFER")};
}

void report(std::ostream& out, const CriterionResult& r) {
  out << (r.passed ? "[PASS] " : "[FAIL] ") << std::left << std::setw(4) << r.id << r.title << ": "
      << r.detail << fmt(" (%.1f s)", r.seconds) << "\n"
      << std::flush;
}

}  // namespace

std::vector<CriterionResult> run(const Options& opts, std::ostream& out) {
  const auto& cfg = opts.cfg;
  cfg.validate();
  std::vector<CriterionResult> results;
  auto wanted = [&](std::initializer_list<const char*> ids) {
    if (opts.only.empty()) return true;
    for (const char* id : ids) {
      if (opts.only.count(id)) return true;
    }
    return false;
  };
  auto timed = [&](const std::function<std::vector<CriterionResult>()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<CriterionResult> rs;
    try {
      rs = fn();
    } catch (const std::exception& e) {
      rs.push_back({"?", "criterion raised", false, e.what()});
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (auto& r : rs) {
      r.seconds = secs / static_cast<double>(rs.size());
      report(out, r);
      results.push_back(r);
    }
  };
  auto single = [](CriterionResult (*fn)()) {
    return [fn] { return std::vector<CriterionResult>{fn()}; };
  };

  if (wanted({"1"})) timed(single(pv_calibration));
  if (wanted({"2"})) timed(single(param_counts));
  if (wanted({"3"})) timed(single(gradient_check));
  if (wanted({"4"})) timed(single(stealth_invariance));
  if (wanted({"5"})) timed(single(ddos_laws));
  if (wanted({"6"})) timed(single(table_fidelity));
  if (wanted({"7", "7a", "7b", "7c", "7d", "7e"})) {
    timed([&] {
      auto rs = impact_criteria(cfg);
      if (!opts.only.empty() && !opts.only.count("7")) {
        std::erase_if(rs, [&](const CriterionResult& r) { return !opts.only.count(r.id); });
      }
      return rs;
    });
  }
  if (wanted({"8"})) timed([&] { return std::vector<CriterionResult>{ids_end_to_end(cfg, out)}; });
  if (wanted({"9"})) {
    timed([&] { return std::vector<CriterionResult>{determinism(cfg, opts.work_dir)}; });
  }
  std::size_t passed = 0;
  for (const auto& r : results) passed += r.passed;
  out << passed << "/" << results.size() << " criteria passed\n";
  return results;
}

}  // namespace evcs::acceptance
