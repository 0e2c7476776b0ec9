#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "evcs/dataset.hpp"

namespace evcs::ids {

struct ArchSpec {
  std::size_t input_dim = dataset::kFeatureCount;
  std::vector<std::size_t> hidden{64, 64, 64};
  std::size_t classes = dataset::kClassCount;
  double dropout = 0.10;
};

std::size_t lstm_param_count(std::size_t d, std::size_t h);
std::size_t dense_param_count(std::size_t h, std::size_t k);
// One entry per LSTM layer followed by the dense layer.
std::vector<std::size_t> param_count(const ArchSpec& arch);

// Gate blocks are stored side by side in the order input, forget, cell,
// output: w is (D+H) x 4H with the x rows first, b has length 4H.
struct LstmLayerParams {
  Eigen::MatrixXd w;
  Eigen::VectorXd b;

  std::size_t input_dim() const { return static_cast<std::size_t>(w.rows() - b.size() / 4); }
  std::size_t hidden() const { return static_cast<std::size_t>(b.size() / 4); }
};

struct OutputLayerParams {
  Eigen::MatrixXd w;  // H x K
  Eigen::VectorXd b;  // K
};

struct LstmModel {
  std::vector<LstmLayerParams> layers;
  OutputLayerParams out;
  double dropout = 0.10;

  static LstmModel zeros(const ArchSpec& arch);
  static LstmModel init(const ArchSpec& arch, std::uint64_t seed);

  ArchSpec arch() const;
  std::size_t classes() const { return static_cast<std::size_t>(out.b.size()); }
  std::size_t parameter_count() const;

  // Flat views over every parameter block in checkpoint order.
  std::vector<Eigen::Map<Eigen::VectorXd>> blocks();
  std::vector<Eigen::Map<const Eigen::VectorXd>> blocks() const;
};

// ---------------------------------------------------------------------------
// Single-sample reference path.

struct CellCache {
  Eigen::VectorXd i, f, g, o;
  Eigen::VectorXd c, h;
};

CellCache lstm_cell_forward(const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev,
                            const Eigen::VectorXd& c_prev, const LstmLayerParams& p);

struct Prediction {
  Eigen::VectorXd p;
  int k_hat = 0;
};

Prediction predict(const Eigen::VectorXd& h_t, const OutputLayerParams& out);

// `window` is L x D, one timestep per row. Returns the top layer's last hidden
// state after the final dropout.
Eigen::VectorXd stack_forward(const Eigen::MatrixXd& window, const LstmModel& m, bool training,
                              std::uint64_t dropout_seed = 0);

// ---------------------------------------------------------------------------
// Batched path.

// Column t * batch + b of x holds timestep t of sample b.
struct SequenceBatch {
  Eigen::MatrixXd x;
  std::size_t length = 0;
  std::size_t batch = 0;
  std::vector<int> labels;
};

SequenceBatch make_batch(const dataset::Dataset& data,
                         std::span<const dataset::SequenceWindow> windows);
SequenceBatch make_batch(std::span<const Eigen::MatrixXd> windows, std::span<const int> labels);

struct DropoutMode {
  bool training = false;
  std::uint64_t seed = 0;
};

// Class probabilities, K x batch.
Eigen::MatrixXd forward_probs(const SequenceBatch& batch, const LstmModel& m,
                              const DropoutMode& mode = {});

struct LossGrad {
  double loss = 0.0;
  std::size_t correct = 0;
  LstmModel grads;
};

// Mean categorical cross-entropy and its exact gradient by backpropagation
// through time.
LossGrad loss_and_gradients(const SequenceBatch& batch, const LstmModel& m,
                            const DropoutMode& mode = {});

// ---------------------------------------------------------------------------
// Optimizer and training.

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  LstmModel m;
  LstmModel v;
  std::uint64_t t = 0;

  static AdamState for_model(const LstmModel& model);
};

void adam_step(LstmModel& params, const LstmModel& grads, AdamState& state,
               const AdamConfig& cfg);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 1000;
  std::size_t chunk_size = 250;  // samples per forward/backward pass
  AdamConfig adam;
  std::uint64_t seed = 11;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Windows index into `data`, which must already be normalized. Throws
// Diverged when the loss turns non-finite.
std::vector<EpochStats> train(LstmModel& model, const dataset::Dataset& data,
                              const std::vector<dataset::SequenceWindow>& train_set,
                              const std::vector<dataset::SequenceWindow>& val_set,
                              const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct BatchScore {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predicted;
};

BatchScore score(const LstmModel& model, const dataset::Dataset& data,
                 const std::vector<dataset::SequenceWindow>& windows,
                 std::size_t chunk_size = 500);

// ---------------------------------------------------------------------------
// Metrics.

struct MetricsReport {
  std::vector<std::vector<std::size_t>> confusion;  // [predicted][actual]
  std::vector<double> precision, recall, f1;
  std::vector<std::size_t> support;  // per actual class
  double accuracy = 0.0;
  std::size_t total = 0;
};

MetricsReport compute_metrics(std::span<const int> predicted, std::span<const int> actual,
                              std::size_t classes);

MetricsReport evaluate(const LstmModel& model, const dataset::Dataset& data,
                       const std::vector<dataset::SequenceWindow>& test);

std::string format_metrics_table(const MetricsReport& r);
std::string format_metrics_csv(const MetricsReport& r);

// ---------------------------------------------------------------------------
// Checkpoint: text header with layer dims, dropout and per-layer counts, then
// one parameter value per line in shortest round-trip form.

void save_model(const LstmModel& m, const std::filesystem::path& path);
LstmModel load_model(const std::filesystem::path& path);

}  // namespace evcs::ids
