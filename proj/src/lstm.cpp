#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "evcs/errors.hpp"
#include "evcs/ids.hpp"

namespace evcs::ids {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::size_t lstm_param_count(std::size_t d, std::size_t h) { return 4 * ((d + h) * h + h); }

std::size_t dense_param_count(std::size_t h, std::size_t k) { return h * k + k; }

std::vector<std::size_t> param_count(const ArchSpec& arch) {
  if (arch.hidden.empty() || arch.input_dim == 0 || arch.classes == 0) {
    throw InvalidArgument("architecture needs at least one layer and non-zero dims");
  }
  std::vector<std::size_t> counts;
  std::size_t d = arch.input_dim;
  for (std::size_t h : arch.hidden) {
    counts.push_back(lstm_param_count(d, h));
    d = h;
  }
  counts.push_back(dense_param_count(d, arch.classes));
  return counts;
}

namespace {

double unit_draw(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

std::mt19937_64 seeded(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (auto p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace

LstmModel LstmModel::zeros(const ArchSpec& arch) {
  param_count(arch);
  if (!(arch.dropout >= 0.0 && arch.dropout < 1.0)) {
    throw InvalidArgument("dropout rate must lie in [0, 1)");
  }
  LstmModel m;
  m.dropout = arch.dropout;
  std::size_t d = arch.input_dim;
  for (std::size_t h : arch.hidden) {
    const auto rows = static_cast<Eigen::Index>(d + h);
    const auto cols = static_cast<Eigen::Index>(4 * h);
    m.layers.push_back({MatrixXd::Zero(rows, cols), VectorXd::Zero(cols)});
    d = h;
  }
  m.out.w = MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(arch.classes));
  m.out.b = VectorXd::Zero(static_cast<Eigen::Index>(arch.classes));
  return m;
}

LstmModel LstmModel::init(const ArchSpec& arch, std::uint64_t seed) {
  LstmModel m = zeros(arch);
  std::mt19937_64 gen(seed);
  for (auto& layer : m.layers) {
    const auto h = static_cast<double>(layer.hidden());
    const auto d = static_cast<double>(layer.input_dim());
    const double a = std::sqrt(6.0 / (d + 2.0 * h));
    for (Eigen::Index c = 0; c < layer.w.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.w.rows(); ++r) {
        layer.w(r, c) = a * (2.0 * unit_draw(gen) - 1.0);
      }
    }
    const auto hi = static_cast<Eigen::Index>(layer.hidden());
    layer.b.segment(hi, hi).setOnes();
  }
  const double a = std::sqrt(6.0 / static_cast<double>(m.out.w.rows() + m.out.w.cols()));
  for (Eigen::Index c = 0; c < m.out.w.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.out.w.rows(); ++r) {
      m.out.w(r, c) = a * (2.0 * unit_draw(gen) - 1.0);
    }
  }
  return m;
}

ArchSpec LstmModel::arch() const {
  ArchSpec a;
  a.input_dim = layers.empty() ? 0 : layers.front().input_dim();
  a.hidden.clear();
  for (const auto& l : layers) a.hidden.push_back(l.hidden());
  a.classes = classes();
  a.dropout = dropout;
  return a;
}

std::size_t LstmModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& blk : blocks()) n += static_cast<std::size_t>(blk.size());
  return n;
}

std::vector<Eigen::Map<VectorXd>> LstmModel::blocks() {
  std::vector<Eigen::Map<VectorXd>> out_blocks;
  for (auto& l : layers) {
    out_blocks.emplace_back(l.w.data(), l.w.size());
    out_blocks.emplace_back(l.b.data(), l.b.size());
  }
  out_blocks.emplace_back(out.w.data(), out.w.size());
  out_blocks.emplace_back(out.b.data(), out.b.size());
  return out_blocks;
}

std::vector<Eigen::Map<const VectorXd>> LstmModel::blocks() const {
  std::vector<Eigen::Map<const VectorXd>> out_blocks;
  for (const auto& l : layers) {
    out_blocks.emplace_back(l.w.data(), l.w.size());
    out_blocks.emplace_back(l.b.data(), l.b.size());
  }
  out_blocks.emplace_back(out.w.data(), out.w.size());
  out_blocks.emplace_back(out.b.data(), out.b.size());
  return out_blocks;
}

// ---------------------------------------------------------------------------

namespace {

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& z) {
  return 1.0 / (1.0 + (-z).exp());
}

}  // namespace

CellCache lstm_cell_forward(const VectorXd& x, const VectorXd& h_prev, const VectorXd& c_prev,
                            const LstmLayerParams& p) {
  const auto d = static_cast<Eigen::Index>(p.input_dim());
  const auto h = static_cast<Eigen::Index>(p.hidden());
  if (x.size() != d || h_prev.size() != h || c_prev.size() != h) {
    throw InvalidArgument("cell input dimensions do not match the layer");
  }
  VectorXd z = p.w.topRows(d).transpose() * x + p.w.bottomRows(h).transpose() * h_prev + p.b;
  CellCache c;
  c.i = sigmoid(z.segment(0, h).array()).matrix();
  c.f = sigmoid(z.segment(h, h).array()).matrix();
  c.g = z.segment(2 * h, h).array().tanh().matrix();
  c.o = sigmoid(z.segment(3 * h, h).array()).matrix();
  c.c = (c.f.array() * c_prev.array() + c.i.array() * c.g.array()).matrix();
  c.h = (c.o.array() * c.c.array().tanh()).matrix();
  return c;
}

Prediction predict(const VectorXd& h_t, const OutputLayerParams& out) {
  const VectorXd logits = out.w.transpose() * h_t + out.b;
  Prediction p;
  const double mx = logits.maxCoeff();
  p.p = (logits.array() - mx).exp().matrix();
  p.p /= p.p.sum();
  Eigen::Index k = 0;
  for (Eigen::Index j = 1; j < logits.size(); ++j) {
    if (logits(j) > logits(k)) k = j;
  }
  p.k_hat = static_cast<int>(k);
  return p;
}

// ---------------------------------------------------------------------------

SequenceBatch make_batch(const dataset::Dataset& data,
                         std::span<const dataset::SequenceWindow> windows) {
  if (windows.empty()) throw InvalidArgument("batch must hold at least one window");
  SequenceBatch b;
  b.length = windows.front().length;
  b.batch = windows.size();
  const auto d = static_cast<Eigen::Index>(dataset::kFeatureCount);
  b.x.resize(d, static_cast<Eigen::Index>(b.length * b.batch));
  for (std::size_t s = 0; s < b.batch; ++s) {
    const auto& w = windows[s];
    if (w.length != b.length) throw InvalidArgument("windows in a batch must share one length");
    if (w.start + w.length > data.rows()) throw InvalidArgument("window exceeds dataset rows");
    for (std::size_t t = 0; t < b.length; ++t) {
      const auto row = data.row(w.start + t);
      b.x.col(static_cast<Eigen::Index>(t * b.batch + s)) = Eigen::Map<const VectorXd>(row.data(), d);
    }
    b.labels.push_back(w.label);
  }
  return b;
}

SequenceBatch make_batch(std::span<const MatrixXd> windows, std::span<const int> labels) {
  if (windows.empty() || windows.size() != labels.size()) {
    throw InvalidArgument("batch needs one label per window");
  }
  SequenceBatch b;
  b.length = static_cast<std::size_t>(windows.front().rows());
  b.batch = windows.size();
  const auto d = windows.front().cols();
  b.x.resize(d, static_cast<Eigen::Index>(b.length * b.batch));
  for (std::size_t s = 0; s < b.batch; ++s) {
    if (windows[s].rows() != static_cast<Eigen::Index>(b.length) || windows[s].cols() != d) {
      throw InvalidArgument("windows in a batch must share one shape");
    }
    for (std::size_t t = 0; t < b.length; ++t) {
      b.x.col(static_cast<Eigen::Index>(t * b.batch + s)) =
          windows[s].row(static_cast<Eigen::Index>(t)).transpose();
    }
  }
  b.labels.assign(labels.begin(), labels.end());
  return b;
}

namespace {

struct LayerCache {
  MatrixXd in;     // D x LB, the layer input
  MatrixXd gates;  // 4H x LB, activated i, f, g, o
  MatrixXd c;      // H x LB
  MatrixXd h;      // H x LB, before dropout
  MatrixXd mask;   // dropout mask on the layer output, empty when inactive
};

struct ForwardPass {
  std::vector<LayerCache> layers;
  MatrixXd top;     // H x B, last hidden state after dropout
  MatrixXd logits;  // K x B
};

MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::uint64_t seed,
                      std::size_t layer) {
  auto gen = seeded({seed, layer});
  const double keep = 1.0 / (1.0 - rate);
  MatrixXd m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = unit_draw(gen) < rate ? 0.0 : keep;
  return m;
}

void layer_forward(const LstmLayerParams& p, std::size_t length, std::size_t batch,
                   LayerCache& lc) {
  const auto h = static_cast<Eigen::Index>(p.hidden());
  const auto d = static_cast<Eigen::Index>(p.input_dim());
  const auto bsz = static_cast<Eigen::Index>(batch);
  lc.gates.noalias() = p.w.topRows(d).transpose() * lc.in;
  lc.gates.colwise() += p.b;
  lc.c.resize(h, lc.in.cols());
  lc.h.resize(h, lc.in.cols());
  const auto wh = p.w.bottomRows(h);
  for (std::size_t t = 0; t < length; ++t) {
    const auto col = static_cast<Eigen::Index>(t) * bsz;
    auto z = lc.gates.middleCols(col, bsz);
    if (t > 0) z.noalias() += wh.transpose() * lc.h.middleCols(col - bsz, bsz);
    z.topRows(2 * h) = sigmoid(z.topRows(2 * h).array()).matrix();
    z.middleRows(2 * h, h) = z.middleRows(2 * h, h).array().tanh().matrix();
    z.bottomRows(h) = sigmoid(z.bottomRows(h).array()).matrix();
    auto c = lc.c.middleCols(col, bsz);
    if (t > 0) {
      c = (z.middleRows(h, h).array() * lc.c.middleCols(col - bsz, bsz).array() +
           z.topRows(h).array() * z.middleRows(2 * h, h).array())
              .matrix();
    } else {
      c = (z.topRows(h).array() * z.middleRows(2 * h, h).array()).matrix();
    }
    lc.h.middleCols(col, bsz) = (z.bottomRows(h).array() * c.array().tanh()).matrix();
  }
}

ForwardPass forward(const SequenceBatch& batch, const LstmModel& m, const DropoutMode& mode) {
  if (m.layers.empty()) throw InvalidArgument("model has no layers");
  if (batch.x.rows() != static_cast<Eigen::Index>(m.layers.front().input_dim()) ||
      batch.x.cols() != static_cast<Eigen::Index>(batch.length * batch.batch) || batch.length == 0) {
    throw InvalidArgument("batch shape does not match the model");
  }
  const bool drop = mode.training && m.dropout > 0.0;
  const auto bsz = static_cast<Eigen::Index>(batch.batch);
  ForwardPass fp;
  fp.layers.resize(m.layers.size());
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto& lc = fp.layers[l];
    if (l == 0) {
      lc.in = batch.x;
    } else {
      const auto& prev = fp.layers[l - 1];
      lc.in = prev.mask.size() ? MatrixXd(prev.h.cwiseProduct(prev.mask)) : prev.h;
    }
    layer_forward(m.layers[l], batch.length, batch.batch, lc);
    const bool last = l + 1 == m.layers.size();
    if (drop) {
      lc.mask = dropout_mask(lc.h.rows(), last ? bsz : lc.h.cols(), m.dropout, mode.seed, l);
    }
  }
  const auto& top = fp.layers.back();
  fp.top = top.h.rightCols(bsz);
  if (top.mask.size()) fp.top = fp.top.cwiseProduct(top.mask);
  fp.logits.noalias() = m.out.w.transpose() * fp.top;
  fp.logits.colwise() += m.out.b;
  return fp;
}

MatrixXd softmax_columns(const MatrixXd& logits) {
  MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double mx = logits.col(j).maxCoeff();
    p.col(j) = (logits.col(j).array() - mx).exp().matrix();
    p.col(j) /= p.col(j).sum();
  }
  return p;
}

int argmax(const MatrixXd& m, Eigen::Index col) {
  Eigen::Index k = 0;
  for (Eigen::Index r = 1; r < m.rows(); ++r) {
    if (m(r, col) > m(k, col)) k = r;
  }
  return static_cast<int>(k);
}

// Mean cross-entropy over the batch from logits, plus correct-prediction count.
std::pair<double, std::size_t> cross_entropy(const MatrixXd& logits, const std::vector<int>& y) {
  double loss = 0.0;
  std::size_t correct = 0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const auto label = y[static_cast<std::size_t>(j)];
    if (label < 0 || label >= logits.rows()) throw InvalidArgument("label out of range");
    const double mx = logits.col(j).maxCoeff();
    const double lse = mx + std::log((logits.col(j).array() - mx).exp().sum());
    loss += lse - logits(label, j);
    if (argmax(logits, j) == label) ++correct;
  }
  return {loss / static_cast<double>(logits.cols()), correct};
}

}  // namespace

Eigen::VectorXd stack_forward(const MatrixXd& window, const LstmModel& m, bool training,
                              std::uint64_t dropout_seed) {
  const std::array<MatrixXd, 1> w{window};
  const std::array<int, 1> y{0};
  const auto batch = make_batch(std::span<const MatrixXd>(w), std::span<const int>(y));
  return forward(batch, m, {training, dropout_seed}).top.col(0);
}

MatrixXd forward_probs(const SequenceBatch& batch, const LstmModel& m, const DropoutMode& mode) {
  return softmax_columns(forward(batch, m, mode).logits);
}

LossGrad loss_and_gradients(const SequenceBatch& batch, const LstmModel& m,
                            const DropoutMode& mode) {
  if (batch.labels.size() != batch.batch) throw InvalidArgument("batch needs one label per sample");
  ForwardPass fp = forward(batch, m, mode);
  LossGrad out;
  std::tie(out.loss, out.correct) = cross_entropy(fp.logits, batch.labels);
  out.grads = LstmModel::zeros(m.arch());

  const auto bsz = static_cast<Eigen::Index>(batch.batch);
  MatrixXd dlogits = softmax_columns(fp.logits);
  for (Eigen::Index j = 0; j < bsz; ++j) dlogits(batch.labels[static_cast<std::size_t>(j)], j) -= 1.0;
  dlogits /= static_cast<double>(bsz);

  out.grads.out.w.noalias() = fp.top * dlogits.transpose();
  out.grads.out.b = dlogits.rowwise().sum();

  // Upstream gradient on the current layer's hidden sequence (before dropout).
  const auto& top = fp.layers.back();
  MatrixXd dh_seq = MatrixXd::Zero(top.h.rows(), top.h.cols());
  {
    MatrixXd dtop = m.out.w * dlogits;
    if (top.mask.size()) dtop = dtop.cwiseProduct(top.mask);
    dh_seq.rightCols(bsz) = dtop;
  }

  for (std::size_t li = m.layers.size(); li-- > 0;) {
    const auto& p = m.layers[li];
    const auto& lc = fp.layers[li];
    const auto h = static_cast<Eigen::Index>(p.hidden());
    const auto d = static_cast<Eigen::Index>(p.input_dim());
    const auto wh = p.w.bottomRows(h);
    MatrixXd dz(4 * h, lc.gates.cols());
    MatrixXd dh_next = MatrixXd::Zero(h, bsz);
    MatrixXd dc_next = MatrixXd::Zero(h, bsz);
    for (std::size_t t = batch.length; t-- > 0;) {
      const auto col = static_cast<Eigen::Index>(t) * bsz;
      const auto g = lc.gates.middleCols(col, bsz);
      const auto gi = g.topRows(h).array();
      const auto gf = g.middleRows(h, h).array();
      const auto gg = g.middleRows(2 * h, h).array();
      const auto go = g.bottomRows(h).array();
      const Eigen::ArrayXXd tc = lc.c.middleCols(col, bsz).array().tanh();
      const Eigen::ArrayXXd dh = dh_seq.middleCols(col, bsz).array() + dh_next.array();
      const Eigen::ArrayXXd dc = dc_next.array() + dh * go * (1.0 - tc.square());
      auto dzt = dz.middleCols(col, bsz);
      dzt.topRows(h) = (dc * gg * gi * (1.0 - gi)).matrix();
      if (t > 0) {
        dzt.middleRows(h, h) =
            (dc * lc.c.middleCols(col - bsz, bsz).array() * gf * (1.0 - gf)).matrix();
      } else {
        dzt.middleRows(h, h).setZero();
      }
      dzt.middleRows(2 * h, h) = (dc * gi * (1.0 - gg.square())).matrix();
      dzt.bottomRows(h) = (dh * tc * go * (1.0 - go)).matrix();
      dc_next = (dc * gf).matrix();
      dh_next.noalias() = wh * dzt;
    }
    auto& gp = out.grads.layers[li];
    gp.w.topRows(d).noalias() = lc.in * dz.transpose();
    if (batch.length > 1) {
      const auto n = lc.h.cols() - bsz;
      gp.w.bottomRows(h).noalias() = lc.h.leftCols(n) * dz.rightCols(n).transpose();
    }
    gp.b = dz.rowwise().sum();
    if (li > 0) {
      MatrixXd din = p.w.topRows(d) * dz;
      const auto& prev = fp.layers[li - 1];
      if (prev.mask.size()) din = din.cwiseProduct(prev.mask);
      dh_seq = std::move(din);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

AdamState AdamState::for_model(const LstmModel& model) {
  return {LstmModel::zeros(model.arch()), LstmModel::zeros(model.arch()), 0};
}

void adam_step(LstmModel& params, const LstmModel& grads, AdamState& state,
               const AdamConfig& cfg) {
  auto p = params.blocks();
  const auto g = grads.blocks();
  auto m = state.m.blocks();
  auto v = state.v.blocks();
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw InvalidArgument("optimizer state does not match the model");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (g[k].size() != p[k].size()) throw InvalidArgument("gradient shape mismatch");
    m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
    v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k].cwiseAbs2();
    p[k].array() -= cfg.lr * (m[k].array() / c1) / ((v[k].array() / c2).sqrt() + cfg.eps);
  }
}

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0 || chunk_size == 0) {
    throw InvalidArgument("epochs, batch_size and chunk_size must be positive");
  }
  if (!(adam.lr > 0 && adam.beta1 > 0 && adam.beta1 < 1 && adam.beta2 > 0 && adam.beta2 < 1 &&
        adam.eps > 0)) {
    throw InvalidArgument("Adam hyperparameters out of range");
  }
}

BatchScore score(const LstmModel& model, const dataset::Dataset& data,
                 const std::vector<dataset::SequenceWindow>& windows, std::size_t chunk_size) {
  BatchScore s;
  if (windows.empty()) return s;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < windows.size(); start += chunk_size) {
    const auto n = std::min(chunk_size, windows.size() - start);
    const auto batch = make_batch(data, std::span(windows).subspan(start, n));
    const auto fp = forward(batch, model, {});
    const auto [l, c] = cross_entropy(fp.logits, batch.labels);
    loss += l * static_cast<double>(n);
    correct += c;
    for (Eigen::Index j = 0; j < fp.logits.cols(); ++j) s.predicted.push_back(argmax(fp.logits, j));
  }
  s.loss = loss / static_cast<double>(windows.size());
  s.accuracy = static_cast<double>(correct) / static_cast<double>(windows.size());
  return s;
}

std::vector<EpochStats> train(LstmModel& model, const dataset::Dataset& data,
                              const std::vector<dataset::SequenceWindow>& train_set,
                              const std::vector<dataset::SequenceWindow>& val_set,
                              const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw InvalidArgument("training set is empty");
  AdamState opt = AdamState::for_model(model);
  std::mt19937_64 shuffler(cfg.seed);
  std::vector<dataset::SequenceWindow> order = train_set;
  std::vector<EpochStats> history;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffler);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const auto n = std::min(cfg.batch_size, order.size() - start);
      LstmModel total = LstmModel::zeros(model.arch());
      auto total_blocks = total.blocks();
      double batch_loss = 0.0;
      std::size_t chunk_index = 0;
      for (std::size_t c0 = 0; c0 < n; c0 += cfg.chunk_size, ++chunk_index) {
        const auto cn = std::min(cfg.chunk_size, n - c0);
        const auto batch = make_batch(data, std::span(order).subspan(start + c0, cn));
        const auto mask_seed = seeded({cfg.seed, epoch, batch_index, chunk_index})();
        const auto lg = loss_and_gradients(batch, model, {true, mask_seed});
        const double weight = static_cast<double>(cn) / static_cast<double>(n);
        const auto g = lg.grads.blocks();
        for (std::size_t k = 0; k < g.size(); ++k) total_blocks[k] += weight * g[k];
        batch_loss += weight * lg.loss;
        correct += lg.correct;
      }
      if (!std::isfinite(batch_loss)) {
        throw Diverged("training loss became non-finite in epoch " + std::to_string(epoch));
      }
      adam_step(model, total, opt, cfg.adam);
      loss_sum += batch_loss * static_cast<double>(n);
    }
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(order.size());
    st.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    if (!val_set.empty()) {
      const auto v = score(model, data, val_set);
      st.val_loss = v.loss;
      st.val_accuracy = v.accuracy;
    }
    history.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return history;
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kMagic = "evcs-lstm-checkpoint";
constexpr int kVersion = 1;

void write_matrix(std::string& out, const MatrixXd& m) {
  char buf[64];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const auto res = std::to_chars(buf, buf + sizeof buf, m(r, c));
      out.append(buf, res.ptr);
      out.push_back('\n');
    }
  }
}

void write_vector(std::string& out, const VectorXd& v) {
  char buf[64];
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    const auto res = std::to_chars(buf, buf + sizeof buf, v(k));
    out.append(buf, res.ptr);
    out.push_back('\n');
  }
}

[[noreturn]] void corrupt(const std::string& what) { throw CorruptCheckpoint(what); }

class ValueReader {
 public:
  explicit ValueReader(std::istream& in) : in_(in) {}

  double next() {
    std::string line;
    if (!std::getline(in_, line)) corrupt("checkpoint ends before all parameters were read");
    double v = 0.0;
    const auto res = std::from_chars(line.data(), line.data() + line.size(), v);
    if (res.ec != std::errc() || res.ptr != line.data() + line.size() || !std::isfinite(v)) {
      corrupt("malformed parameter value '" + line + "'");
    }
    return v;
  }

  void fill(MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = next();
    }
  }

  void fill(VectorXd& v) {
    for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = next();
  }

 private:
  std::istream& in_;
};

std::istringstream header_line(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) corrupt("checkpoint header truncated before '" + key + "'");
  std::istringstream ss(line);
  std::string k;
  ss >> k;
  if (k != key) corrupt("expected '" + key + "' in checkpoint header, found '" + line + "'");
  return ss;
}

}  // namespace

void save_model(const LstmModel& m, const std::filesystem::path& path) {
  const auto counts = param_count(m.arch());
  std::string out;
  out += std::string(kMagic) + " " + std::to_string(kVersion) + "\n";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, m.dropout);
  out += "dropout " + std::string(buf, res.ptr) + "\n";
  out += "layers " + std::to_string(m.layers.size()) + "\n";
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    out += "lstm " + std::to_string(m.layers[l].input_dim()) + " " +
           std::to_string(m.layers[l].hidden()) + " " + std::to_string(counts[l]) + "\n";
  }
  out += "dense " + std::to_string(m.out.w.rows()) + " " + std::to_string(m.classes()) + " " +
         std::to_string(counts.back()) + "\n";
  out += "params\n";
  for (const auto& l : m.layers) {
    write_matrix(out, l.w);
    write_vector(out, l.b);
  }
  write_matrix(out, m.out.w);
  write_vector(out, m.out.b);
  out += "end\n";

  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open " + path.string() + " for writing");
  f << out;
  if (!f) throw InvalidArgument("failed writing " + path.string());
}

LstmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptCheckpoint("cannot open " + path.string());
  {
    auto ss = header_line(in, kMagic);
    int version = 0;
    if (!(ss >> version) || version != kVersion) corrupt("unsupported checkpoint version");
  }
  ArchSpec arch;
  {
    auto ss = header_line(in, "dropout");
    if (!(ss >> arch.dropout)) corrupt("bad dropout rate");
  }
  std::size_t n_layers = 0;
  {
    auto ss = header_line(in, "layers");
    if (!(ss >> n_layers) || n_layers == 0 || n_layers > 64) corrupt("bad layer count");
  }
  std::vector<std::size_t> declared;
  arch.hidden.clear();
  for (std::size_t l = 0; l < n_layers; ++l) {
    auto ss = header_line(in, "lstm");
    std::size_t d = 0, h = 0, n = 0;
    if (!(ss >> d >> h >> n) || d == 0 || h == 0) corrupt("bad lstm layer line");
    if (l == 0) {
      arch.input_dim = d;
    } else if (d != arch.hidden.back()) {
      corrupt("layer input dim does not match previous layer width");
    }
    arch.hidden.push_back(h);
    declared.push_back(n);
  }
  {
    auto ss = header_line(in, "dense");
    std::size_t h = 0, k = 0, n = 0;
    if (!(ss >> h >> k >> n) || h != arch.hidden.back() || k == 0) corrupt("bad dense layer line");
    arch.classes = k;
    declared.push_back(n);
  }
  if (declared != param_count(arch)) corrupt("declared parameter counts do not match the layer dims");
  header_line(in, "params");

  LstmModel m;
  try {
    m = LstmModel::zeros(arch);
  } catch (const InvalidArgument& e) {
    corrupt(e.what());
  }
  ValueReader reader(in);
  for (auto& l : m.layers) {
    reader.fill(l.w);
    reader.fill(l.b);
  }
  reader.fill(m.out.w);
  reader.fill(m.out.b);
  std::string tail;
  if (!std::getline(in, tail) || tail != "end") corrupt("checkpoint has extra or missing values");
  return m;
}

}  // namespace evcs::ids
