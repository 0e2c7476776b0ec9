#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "evcs/plant.hpp"

namespace evcs::dataset {

inline constexpr std::size_t kFeatureCount = 36;
inline constexpr std::size_t kColumnCount = kFeatureCount + 1;
inline constexpr int kClassCount = 4;

enum class Label : int { Normal = 0, PvAttack = 1, BesAttack = 2, EvAttack = 3 };

// Column order of the fingerprint. Groups: PV panel (7), boost stage (7),
// BES (12), EV (6), diodes (4).
const std::array<std::string_view, kFeatureCount>& feature_names();

// Controller-side quantities that complete the fingerprint.
struct ControlSnapshot {
  double duty_mppt = 0.0;  // tracker output before any override
  double i_bes_ref = 0.0;
  double v_ref_bus = 0.0;  // setpoint as received over the network
  double i_ev_ref = 0.0;
  double v_ref_ev = 0.0;
};

struct FingerprintRecord {
  std::array<double, kFeatureCount> features{};
  int label = 0;
};

FingerprintRecord record_step(const plant::PlantState& s, const ControlSnapshot& c, int label);

// Rows from one or more scenario runs stored row-major; `segments` holds the
// starting row of each run so windows never cross run boundaries.
class Dataset {
 public:
  void append(const FingerprintRecord& r);
  void begin_segment();
  // Appends all rows of `other` as new segments.
  void extend(const Dataset& other);

  std::size_t rows() const { return labels_.size(); }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * kFeatureCount, kFeatureCount};
  }
  std::span<double> row(std::size_t i) {
    return {values_.data() + i * kFeatureCount, kFeatureCount};
  }
  int label(std::size_t i) const { return labels_[i]; }
  const std::vector<std::size_t>& segments() const { return segments_; }
  std::size_t segment_end(std::size_t k) const {
    return k + 1 < segments_.size() ? segments_[k + 1] : rows();
  }
  std::vector<std::size_t> class_counts() const;

  void reserve(std::size_t n);
  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::vector<double> values_;
  std::vector<int> labels_;
  std::vector<std::size_t> segments_;
};

// L consecutive rows starting at `start`, labelled by its scenario class.
struct SequenceWindow {
  std::size_t start = 0;
  std::size_t length = 0;
  int label = 0;
  friend bool operator==(const SequenceWindow&, const SequenceWindow&) = default;
};

// Throws TooShort when no segment holds at least `length` rows.
std::vector<SequenceWindow> window(const Dataset& data, std::size_t length, std::size_t stride);

struct SplitSpec {
  double train_frac = 0.70;
  double test_frac = 0.30;
  double val_frac_of_train = 0.20;
  std::uint64_t seed = 7;

  void validate() const;
};

struct Split {
  std::vector<SequenceWindow> train;
  std::vector<SequenceWindow> val;
  std::vector<SequenceWindow> test;
};

// Seeded, class-stratified partition. Sizes: test = round(test_frac * n),
// val = round(val_frac_of_train * (n - test)), train = remainder.
Split split(const std::vector<SequenceWindow>& windows, const SplitSpec& spec);

struct NormalizationStats {
  std::array<double, kFeatureCount> mean{};
  std::array<double, kFeatureCount> scale{};  // 1/std, 0 for constant features
  std::array<double, kFeatureCount> std_dev{};
};

// Fits per-feature mean/std on the distinct rows covered by `train`.
NormalizationStats normalize_fit(const Dataset& data, const std::vector<SequenceWindow>& train);
NormalizationStats normalize_fit(const Dataset& data);
void normalize_apply(const NormalizationStats& stats, Dataset& data);
void denormalize_apply(const NormalizationStats& stats, Dataset& data);

// feature,mean,std_dev,scale rows; round-trips exactly.
void save_stats(const NormalizationStats& stats, const std::filesystem::path& path);
NormalizationStats load_stats(const std::filesystem::path& path);

// Windowing, split and train-fitted normalization in one pass; `data` is
// normalized in place.
struct Prepared {
  Split split;
  NormalizationStats stats;
};

Prepared prepare(Dataset& data, std::size_t length, std::size_t stride, const SplitSpec& spec);

// 37-column CSV with a header row; values are written in shortest round-trip
// form. Import starts a new segment whenever the label changes or the
// timestep column stops increasing. Throws SchemaMismatch.
void export_csv(const Dataset& data, const std::filesystem::path& path);
Dataset import_csv(const std::filesystem::path& path);

}  // namespace evcs::dataset
