#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "evcs/dataset.hpp"
#include "evcs/errors.hpp"
#include "evcs/ids.hpp"

using namespace evcs;
using namespace evcs::ids;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

const ArchSpec kTiny{3, {4, 4, 4}, 2, 0.1};

std::vector<Eigen::MatrixXd> random_windows(std::mt19937_64& gen, std::size_t n, std::size_t len,
                                            std::size_t dim) {
  std::normal_distribution<double> nd;
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t k = 0; k < n; ++k) {
    Eigen::MatrixXd w(len, dim);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = nd(gen);
    out.push_back(w);
  }
  return out;
}

std::filesystem::path scratch(const char* name) {
  const auto dir = std::filesystem::temp_directory_path() / "evcs-test-ids";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Two well separated classes of short sequences over the full feature width.
dataset::Dataset toy_sequences(std::size_t per_class, std::size_t len) {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> nd(0.0, 0.3);
  dataset::Dataset d;
  for (std::size_t s = 0; s < 2 * per_class; ++s) {
    const int label = static_cast<int>(s % 2);
    d.begin_segment();
    for (std::size_t t = 0; t < len; ++t) {
      dataset::FingerprintRecord r;
      r.label = label;
      for (auto& f : r.features) f = nd(gen);
      r.features[0] += label == 0 ? -1.0 : 1.0;
      r.features[13] = static_cast<double>(t);
      d.append(r);
    }
  }
  return d;
}

}  // namespace

TEST_CASE("parameter counts") {
  CHECK(lstm_param_count(36, 64) == 25856);
  CHECK(lstm_param_count(64, 64) == 33024);
  CHECK(dense_param_count(64, 4) == 260);
  const auto counts = param_count(ArchSpec{});
  CHECK(counts == std::vector<std::size_t>{25856, 33024, 33024, 260});
  const auto m = LstmModel::init(ArchSpec{}, 1);
  CHECK(m.parameter_count() == 92164);
  std::size_t sum = 0;
  for (const auto& b : m.blocks()) sum += static_cast<std::size_t>(b.size());
  CHECK(sum == 92164);
}

TEST_CASE("cell forward") {
  LstmLayerParams p{Eigen::MatrixXd::Zero(5, 12), Eigen::VectorXd::Zero(12)};
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(2, 0.7);
  const auto z = lstm_cell_forward(x, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3), p);
  CHECK(z.i.isApproxToConstant(0.5));
  CHECK(z.f.isApproxToConstant(0.5));
  CHECK(z.o.isApproxToConstant(0.5));
  CHECK(z.g.isZero());
  CHECK(z.c.isZero());
  CHECK(z.h.isZero());

  Eigen::VectorXd v(3);
  v << -1.0, 0.5, 2.0;
  const auto carried = lstm_cell_forward(x, Eigen::VectorXd::Zero(3), v, p);
  for (int k = 0; k < 3; ++k) {
    CHECK(carried.c[k] == doctest::Approx(0.5 * v[k]));
    CHECK(carried.h[k] == doctest::Approx(0.5 * std::tanh(0.5 * v[k])));
  }

  SUBCASE("scalar loop oracle") {
    std::mt19937_64 gen(21);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    const std::size_t D = 2, H = 3;
    LstmLayerParams q{Eigen::MatrixXd(D + H, 4 * H), Eigen::VectorXd(4 * H)};
    for (Eigen::Index k = 0; k < q.w.size(); ++k) q.w.data()[k] = u(gen);
    for (Eigen::Index k = 0; k < q.b.size(); ++k) q.b[k] = u(gen);
    Eigen::VectorXd xi(D), hp(H), cp(H);
    for (auto* vec : {&xi, &hp, &cp}) {
      for (Eigen::Index k = 0; k < vec->size(); ++k) (*vec)[k] = u(gen);
    }
    const auto got = lstm_cell_forward(xi, hp, cp, q);
    for (std::size_t j = 0; j < H; ++j) {
      double pre[4];
      for (std::size_t gate = 0; gate < 4; ++gate) {
        const std::size_t col = gate * H + j;
        double s = q.b[col];
        for (std::size_t d = 0; d < D; ++d) s += xi[d] * q.w(d, col);
        for (std::size_t k = 0; k < H; ++k) s += hp[k] * q.w(D + k, col);
        pre[gate] = s;
      }
      const double ig = sigmoid(pre[0]), fg = sigmoid(pre[1]), gg = std::tanh(pre[2]),
                   og = sigmoid(pre[3]);
      const double c = fg * cp[j] + ig * gg;
      CHECK(got.c[j] == doctest::Approx(c).epsilon(1e-14));
      CHECK(got.h[j] == doctest::Approx(og * std::tanh(c)).epsilon(1e-14));
    }
  }
}

TEST_CASE("softmax head") {
  OutputLayerParams out{Eigen::MatrixXd::Zero(3, 4), Eigen::VectorXd::Zero(4)};
  const Eigen::VectorXd h = Eigen::VectorXd::Constant(3, 0.4);
  const auto uniform = predict(h, out);
  CHECK(uniform.p.isApproxToConstant(0.25));
  CHECK(uniform.k_hat == 0);
  out.b << 10.0, 0.0, 0.0, 0.0;
  const auto sharp = predict(h, out);
  CHECK(sharp.p[0] == doctest::Approx(1.0 / (1.0 + 3.0 * std::exp(-10.0))).epsilon(1e-14));
  CHECK(sharp.p[0] > 0.9998);
  CHECK(sharp.k_hat == 0);

  std::mt19937_64 gen(4);
  std::normal_distribution<double> nd(0.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    for (Eigen::Index k = 0; k < out.w.size(); ++k) out.w.data()[k] = nd(gen);
    const auto pr = predict(h, out);
    CHECK(std::abs(pr.p.sum() - 1.0) < 1e-12);
    CHECK(pr.p.minCoeff() > 0.0);
    CHECK(pr.p.maxCoeff() < 1.0);
  }
}

TEST_CASE("batched forward matches the reference path") {
  std::mt19937_64 gen(2);
  const auto m = LstmModel::init(kTiny, 3);
  const auto windows = random_windows(gen, 5, 6, 3);
  const std::vector<int> labels{0, 1, 1, 0, 1};
  const auto batch = make_batch(windows, labels);
  const Eigen::MatrixXd probs = forward_probs(batch, m);
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const Eigen::VectorXd h1 = stack_forward(windows[b], m, false);
    const Eigen::VectorXd h2 = stack_forward(windows[b], m, false);
    CHECK(h1 == h2);
    const auto pr = predict(h1, m.out);
    CHECK((pr.p - probs.col(static_cast<Eigen::Index>(b))).norm() < 1e-12);
  }
  const Eigen::VectorXd dropped = stack_forward(windows[0], m, true, 99);
  CHECK(dropped != stack_forward(windows[0], m, false));
  CHECK(dropped == stack_forward(windows[0], m, true, 99));
}

TEST_CASE("loss and gradients") {
  std::mt19937_64 gen(6);
  const auto windows = random_windows(gen, 2, 5, 3);
  const std::vector<int> labels{0, 1};
  const auto batch = make_batch(windows, labels);

  const auto zero = LstmModel::zeros(ArchSpec{3, {4, 4, 4}, 4, 0.1});
  CHECK(loss_and_gradients(batch, zero).loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  auto sure = zero;
  sure.out.b << 60.0, 0.0, 0.0, 0.0;
  const std::vector<int> zeros{0, 0};
  CHECK(loss_and_gradients(make_batch(windows, zeros), sure).loss < 1e-20);

  SUBCASE("central finite differences") {
    for (const bool drop : {false, true}) {
      auto m = LstmModel::init(kTiny, 12);
      const DropoutMode mode{drop, 5};
      const auto lg = loss_and_gradients(batch, m, mode);
      auto grads = lg.grads;
      auto params = m.blocks();
      auto analytic = grads.blocks();
      double worst = 0.0;
      for (std::size_t blk = 0; blk < params.size(); ++blk) {
        for (Eigen::Index k = 0; k < params[blk].size(); ++k) {
          const double keep = params[blk][k];
          params[blk][k] = keep + 1e-5;
          const double up = loss_and_gradients(batch, m, mode).loss;
          params[blk][k] = keep - 1e-5;
          const double down = loss_and_gradients(batch, m, mode).loss;
          params[blk][k] = keep;
          const double numeric = (up - down) / 2e-5;
          const double a = analytic[blk][k];
          worst = std::max(worst, std::abs(a - numeric) /
                                      std::max({std::abs(a), std::abs(numeric), 1e-6}));
        }
      }
      CHECK(worst < 1e-4);
    }
  }

  SUBCASE("duplicating the batch changes nothing") {
    const auto m = LstmModel::init(kTiny, 4);
    std::vector<Eigen::MatrixXd> twice = windows;
    twice.insert(twice.end(), windows.begin(), windows.end());
    const std::vector<int> twice_labels{0, 1, 0, 1};
    const auto a = loss_and_gradients(batch, m);
    const auto b = loss_and_gradients(make_batch(twice, twice_labels), m);
    CHECK(b.loss == doctest::Approx(a.loss).epsilon(1e-13));
    const auto ga = a.grads.blocks();
    const auto gb = b.grads.blocks();
    for (std::size_t k = 0; k < ga.size(); ++k) CHECK((ga[k] - gb[k]).norm() <= 1e-13 * (1.0 + ga[k].norm()));
  }
}

TEST_CASE("Adam") {
  const ArchSpec one{1, {1}, 2, 0.0};
  auto params = LstmModel::init(one, 1);
  const auto before = params;
  auto fresh = AdamState::for_model(params);
  adam_step(params, LstmModel::zeros(one), fresh, AdamConfig{});
  CHECK(params.layers[0].w == before.layers[0].w);
  CHECK(params.out.b == before.out.b);

  auto state = AdamState::for_model(params);
  for (auto& b : state.m.blocks()) b.setConstant(1.0);
  for (auto& b : state.v.blocks()) b.setConstant(1.0);
  state.t = 1;
  adam_step(params, LstmModel::zeros(one), state, AdamConfig{});
  CHECK(state.m.out.b[0] == doctest::Approx(0.9));
  CHECK(state.v.out.b[0] == doctest::Approx(0.999));

  SUBCASE("first step by hand") {
    auto p = LstmModel::zeros(one);
    auto s = AdamState::for_model(p);
    auto g = LstmModel::zeros(one);
    g.out.b << 0.3, -2.0;
    adam_step(p, g, s, AdamConfig{});
    CHECK(p.out.b[0] == doctest::Approx(-1e-3 * 0.3 / (0.3 + 1e-8)).epsilon(1e-12));
    CHECK(p.out.b[1] == doctest::Approx(1e-3 * 2.0 / (2.0 + 1e-8)).epsilon(1e-12));
    CHECK(p.layers[0].w.isZero());
  }

  SUBCASE("constant gradient steps approach the learning rate") {
    auto p = LstmModel::zeros(one);
    auto s = AdamState::for_model(p);
    auto g = LstmModel::zeros(one);
    g.out.b << 0.05, -7.0;
    double prev0 = 0.0;
    for (int k = 0; k < 2000; ++k) {
      prev0 = p.out.b[0];
      adam_step(p, g, s, AdamConfig{});
    }
    CHECK(prev0 - p.out.b[0] == doctest::Approx(1e-3).epsilon(1e-6));
    CHECK(p.out.b[1] == doctest::Approx(2.0).epsilon(1e-6));
  }
}

TEST_CASE("training") {
  const auto data = toy_sequences(60, 8);
  const auto windows = dataset::window(data, 8, 8);
  const auto split = dataset::split(windows, dataset::SplitSpec{});
  const ArchSpec arch{36, {8, 8}, 2, 0.1};
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  cfg.chunk_size = 8;
  cfg.adam.lr = 1e-2;

  auto a = LstmModel::init(arch, 3);
  const auto hist = train(a, data, split.train, split.val, cfg);
  REQUIRE(hist.size() == 5);
  CHECK(hist.back().val_accuracy == 1.0);
  CHECK(hist.back().train_loss < hist.front().train_loss);

  auto b = LstmModel::init(arch, 3);
  const auto again = train(b, data, split.train, split.val, cfg);
  for (std::size_t e = 0; e < hist.size(); ++e) {
    CHECK(again[e].train_loss == hist[e].train_loss);
    CHECK(again[e].val_loss == hist[e].val_loss);
  }
  CHECK(a.out.w == b.out.w);

  auto broken = data;
  broken.row(3)[0] = NAN;
  auto c = LstmModel::init(arch, 3);
  CHECK_THROWS_AS(train(c, broken, windows, {}, cfg), Diverged);

  SUBCASE("checkpoint round trip") {
    const auto path = scratch("toy.ckpt");
    save_model(a, path);
    const auto back = load_model(path);
    const auto s1 = score(a, data, split.test);
    const auto s2 = score(back, data, split.test);
    CHECK(s1.predicted == s2.predicted);
    CHECK(s1.loss == s2.loss);
    const auto probe = make_batch(data, split.test);
    CHECK(forward_probs(probe, a) == forward_probs(probe, back));

    std::ifstream in(path);
    std::string line;
    std::vector<std::size_t> declared;
    while (std::getline(in, line) && line != "params") {
      std::istringstream ls(line);
      std::string tag;
      ls >> tag;
      if (tag == "lstm" || tag == "dense") {
        std::size_t x, y, n;
        ls >> x >> y >> n;
        declared.push_back(n);
      }
    }
    CHECK(declared == param_count(arch));

    std::ifstream whole(path);
    std::stringstream buf;
    buf << whole.rdbuf();
    const std::string text = buf.str();
    const auto cut = scratch("cut.ckpt");
    std::ofstream(cut) << text.substr(0, text.size() / 2);
    CHECK_THROWS_AS(load_model(cut), CorruptCheckpoint);
    std::ofstream(cut) << "not a checkpoint\n";
    CHECK_THROWS_AS(load_model(cut), CorruptCheckpoint);
  }
}

TEST_CASE("metrics") {
  std::vector<int> actual, pred;
  for (int c = 0; c < 4; ++c) {
    for (int k = 0; k < 100; ++k) actual.push_back(c);
  }
  const auto perfect = compute_metrics(actual, actual, 4);
  CHECK(perfect.accuracy == 1.0);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(perfect.confusion[c][c] == 100);
    CHECK(perfect.precision[c] == 1.0);
    CHECK(perfect.recall[c] == 1.0);
    CHECK(perfect.f1[c] == 1.0);
  }

  std::mt19937_64 gen(10);
  for (int a : actual) pred.push_back(gen() % 5 == 0 ? static_cast<int>(gen() % 4) : a);
  const auto r = compute_metrics(pred, actual, 4);
  std::size_t hits = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) hits += pred[k] == actual[k];
  CHECK(r.accuracy == static_cast<double>(hits) / pred.size());
  CHECK(r.total == 400);
  for (int c = 0; c < 4; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0, row = 0, col = 0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
      tp += pred[k] == c && actual[k] == c;
      fp += pred[k] == c && actual[k] != c;
      fn += pred[k] != c && actual[k] == c;
    }
    for (int o = 0; o < 4; ++o) {
      row += r.confusion[c][o];
      col += r.confusion[o][c];
    }
    CHECK(col == r.support[c]);
    CHECK(col == 100);
    CHECK(row == tp + fp);
    const double p = static_cast<double>(tp) / (tp + fp);
    const double rc = static_cast<double>(tp) / (tp + fn);
    CHECK(r.precision[c] == doctest::Approx(p).epsilon(1e-15));
    CHECK(r.recall[c] == doctest::Approx(rc).epsilon(1e-15));
    CHECK(r.f1[c] == doctest::Approx(2 * p * rc / (p + rc)).epsilon(1e-15));
  }

  const std::vector<int> never{0, 0, 0};
  const std::vector<int> truth{0, 1, 0};
  const auto z = compute_metrics(never, truth, 2);
  CHECK(z.precision[1] == 0.0);
  CHECK(z.f1[1] == 0.0);

  std::istringstream csv(format_metrics_csv(r));
  std::string line;
  std::getline(csv, line);
  std::size_t cells = 0;
  while (std::getline(csv, line)) {
    if (line.rfind("confusion,", 0) != 0) continue;
    int p = 0, a = 0;
    std::size_t n = 0;
    std::sscanf(line.c_str(), "confusion,,%d,%d,%zu", &p, &a, &n);
    std::size_t count = 0;
    for (std::size_t k = 0; k < pred.size(); ++k) count += pred[k] == p && actual[k] == a;
    CHECK(n == count);
    ++cells;
  }
  CHECK(cells == 16);
  CHECK(format_metrics_table(r).find("Normal") != std::string::npos);
}
