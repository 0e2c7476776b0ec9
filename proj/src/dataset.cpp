#include "evcs/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "evcs/errors.hpp"

namespace evcs::dataset {

const std::array<std::string_view, kFeatureCount>& feature_names() {
  static const std::array<std::string_view, kFeatureCount> names{
      // PV panel
      "pv_i", "pv_v", "pv_p", "pv_i_diode", "pv_duty_in", "pv_temperature", "pv_irradiance",
      // MPPT boost stage
      "boost_s", "boost_i_switch", "boost_v_switch", "boost_duty", "bus_i", "bus_v", "timestep",
      // battery storage
      "bes_soc", "bes_i", "bes_v", "bes_s_p", "bes_s_n", "bes_i_ref", "bes_duty", "bes_v_ref",
      "bes_i_switch", "bes_v_switch", "bes_i_bus_side", "bes_p",
      // EV
      "ev_soc", "ev_i", "ev_v", "ev_duty", "ev_i_ref", "ev_v_ref",
      // diodes
      "diode_boost_i", "diode_boost_v", "diode_buck_i", "diode_buck_v"};
  return names;
}

FingerprintRecord record_step(const plant::PlantState& s, const ControlSnapshot& c, int label) {
  FingerprintRecord r;
  r.label = label;
  auto& f = r.features;
  f[0] = s.i_pv;
  f[1] = s.v_pv;
  f[2] = s.p_pv;
  f[3] = s.i_pv_diode;
  f[4] = c.duty_mppt;
  f[5] = s.temperature;
  f[6] = s.irradiance;

  f[7] = s.duty_pv;
  f[8] = s.duty_pv * s.i_pv;
  f[9] = (1.0 - s.duty_pv) * s.v_bus;
  f[10] = s.duty_pv;
  f[11] = s.i_bus;
  f[12] = s.v_bus;
  f[13] = s.t;

  f[14] = s.bes.soc;
  f[15] = s.bes.i;
  f[16] = s.bes.v;
  f[17] = s.duty_bes;
  f[18] = 1.0 - s.duty_bes;
  f[19] = c.i_bes_ref;
  f[20] = s.duty_bes;
  f[21] = c.v_ref_bus;
  f[22] = s.duty_bes * s.i_bdc;
  f[23] = (1.0 - s.duty_bes) * s.v_bus;
  f[24] = (1.0 - s.duty_bes) * s.i_bdc;
  f[25] = s.bes.v * s.bes.i;

  f[26] = s.ev.soc;
  f[27] = s.ev.i;
  f[28] = s.ev.v;
  f[29] = s.duty_ev;
  f[30] = c.i_ev_ref;
  f[31] = c.v_ref_ev;

  f[32] = s.boost_diode.i;
  f[33] = s.boost_diode.v;
  f[34] = s.buck_diode.i;
  f[35] = s.buck_diode.v;
  return r;
}

// ---------------------------------------------------------------------------

void Dataset::append(const FingerprintRecord& r) {
  if (segments_.empty()) segments_.push_back(0);
  values_.insert(values_.end(), r.features.begin(), r.features.end());
  labels_.push_back(r.label);
}

void Dataset::begin_segment() {
  if (segments_.empty() || segments_.back() != rows()) segments_.push_back(rows());
}

void Dataset::extend(const Dataset& other) {
  const std::size_t offset = rows();
  if (!segments_.empty() && segments_.back() == offset) segments_.pop_back();
  for (std::size_t s : other.segments_) segments_.push_back(s + offset);
  values_.insert(values_.end(), other.values_.begin(), other.values_.end());
  labels_.insert(labels_.end(), other.labels_.begin(), other.labels_.end());
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(kClassCount, 0);
  for (int l : labels_) {
    if (l >= 0 && l < kClassCount) ++counts[static_cast<std::size_t>(l)];
  }
  return counts;
}

void Dataset::reserve(std::size_t n) {
  values_.reserve(n * kFeatureCount);
  labels_.reserve(n);
}

// ---------------------------------------------------------------------------

std::vector<SequenceWindow> window(const Dataset& data, std::size_t length, std::size_t stride) {
  if (length < 1 || stride < 1) throw InvalidArgument("window length and stride must be >= 1");
  std::vector<SequenceWindow> out;
  bool any = false;
  for (std::size_t k = 0; k < data.segments().size(); ++k) {
    const std::size_t begin = data.segments()[k];
    const std::size_t end = data.segment_end(k);
    if (end - begin < length) continue;
    any = true;
    const std::size_t count = (end - begin - length) / stride + 1;
    for (std::size_t w = 0; w < count; ++w) {
      const std::size_t start = begin + w * stride;
      out.push_back({start, length, data.label(start)});
    }
  }
  if (!any) throw TooShort("no scenario run holds " + std::to_string(length) + " rows");
  return out;
}

void SplitSpec::validate() const {
  if (!(train_frac > 0 && test_frac > 0 && std::abs(train_frac + test_frac - 1.0) < 1e-9)) {
    throw InvalidArgument("train and test fractions must be positive and sum to 1");
  }
  if (!(val_frac_of_train >= 0 && val_frac_of_train < 1)) {
    throw InvalidArgument("validation fraction must lie in [0, 1)");
  }
}

namespace {

// Largest-remainder apportionment of `total` over groups proportional to sizes.
std::vector<std::size_t> apportion(const std::vector<std::size_t>& sizes, std::size_t total) {
  const double n = static_cast<double>(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}));
  std::vector<std::size_t> quota(sizes.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t given = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    const double exact = n > 0 ? static_cast<double>(total) * static_cast<double>(sizes[c]) / n : 0;
    quota[c] = std::min(sizes[c], static_cast<std::size_t>(std::floor(exact)));
    given += quota[c];
    rem.emplace_back(-(exact - std::floor(exact)), c);
  }
  std::sort(rem.begin(), rem.end());
  for (std::size_t k = 0; given < total && k < rem.size(); ++k) {
    const std::size_t c = rem[k].second;
    if (quota[c] < sizes[c]) {
      ++quota[c];
      ++given;
    }
  }
  return quota;
}

}  // namespace

Split split(const std::vector<SequenceWindow>& windows, const SplitSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::vector<std::vector<SequenceWindow>> by_class(kClassCount);
  for (const auto& w : windows) {
    if (w.label < 0 || w.label >= kClassCount) throw InvalidArgument("window label out of range");
    by_class[static_cast<std::size_t>(w.label)].push_back(w);
  }
  for (auto& group : by_class) std::shuffle(group.begin(), group.end(), rng);

  std::vector<std::size_t> sizes;
  for (const auto& group : by_class) sizes.push_back(group.size());
  const auto n = windows.size();
  const auto n_test = static_cast<std::size_t>(std::llround(spec.test_frac * static_cast<double>(n)));
  const auto test_q = apportion(sizes, n_test);
  std::vector<std::size_t> rest(sizes.size());
  for (std::size_t c = 0; c < sizes.size(); ++c) rest[c] = sizes[c] - test_q[c];
  const auto n_val = static_cast<std::size_t>(
      std::llround(spec.val_frac_of_train * static_cast<double>(n - n_test)));
  const auto val_q = apportion(rest, n_val);

  Split out;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const auto& g = by_class[c];
    const auto t_end = static_cast<std::ptrdiff_t>(test_q[c]);
    const auto v_end = t_end + static_cast<std::ptrdiff_t>(val_q[c]);
    out.test.insert(out.test.end(), g.begin(), g.begin() + t_end);
    out.val.insert(out.val.end(), g.begin() + t_end, g.begin() + v_end);
    out.train.insert(out.train.end(), g.begin() + v_end, g.end());
  }
  std::shuffle(out.train.begin(), out.train.end(), rng);
  std::shuffle(out.val.begin(), out.val.end(), rng);
  std::shuffle(out.test.begin(), out.test.end(), rng);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

NormalizationStats fit_rows(const Dataset& data, const std::vector<char>* mask) {
  NormalizationStats st;
  std::array<double, kFeatureCount> sum{};
  std::size_t n = 0;
  for (std::size_t r = 0; r < data.rows(); ++r) {
    if (mask && !(*mask)[r]) continue;
    const auto row = data.row(r);
    for (std::size_t f = 0; f < kFeatureCount; ++f) sum[f] += row[f];
    ++n;
  }
  if (n == 0) throw InvalidArgument("normalization needs at least one row");
  for (std::size_t f = 0; f < kFeatureCount; ++f) st.mean[f] = sum[f] / static_cast<double>(n);
  std::array<double, kFeatureCount> sq{};
  for (std::size_t r = 0; r < data.rows(); ++r) {
    if (mask && !(*mask)[r]) continue;
    const auto row = data.row(r);
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      const double d = row[f] - st.mean[f];
      sq[f] += d * d;
    }
  }
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    const double sd = std::sqrt(sq[f] / static_cast<double>(n));
    st.std_dev[f] = sd;
    st.scale[f] = sd > 1e-12 * std::max(1.0, std::abs(st.mean[f])) ? 1.0 / sd : 0.0;
  }
  return st;
}

}  // namespace

NormalizationStats normalize_fit(const Dataset& data, const std::vector<SequenceWindow>& train) {
  std::vector<char> mask(data.rows(), 0);
  for (const auto& w : train) {
    std::fill(mask.begin() + static_cast<std::ptrdiff_t>(w.start),
              mask.begin() + static_cast<std::ptrdiff_t>(w.start + w.length), 1);
  }
  return fit_rows(data, &mask);
}

NormalizationStats normalize_fit(const Dataset& data) { return fit_rows(data, nullptr); }

void normalize_apply(const NormalizationStats& stats, Dataset& data) {
  for (std::size_t r = 0; r < data.rows(); ++r) {
    auto row = data.row(r);
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      row[f] = (row[f] - stats.mean[f]) * stats.scale[f];
    }
  }
}

void denormalize_apply(const NormalizationStats& stats, Dataset& data) {
  for (std::size_t r = 0; r < data.rows(); ++r) {
    auto row = data.row(r);
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      row[f] = stats.scale[f] != 0.0 ? row[f] / stats.scale[f] + stats.mean[f] : stats.mean[f];
    }
  }
}

void save_stats(const NormalizationStats& stats, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  out << "feature,mean,std_dev,scale\n";
  char buf[64];
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    out << feature_names()[f];
    for (double v : {stats.mean[f], stats.std_dev[f], stats.scale[f]}) {
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
}

NormalizationStats load_stats(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaMismatch("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  NormalizationStats st;
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    if (!std::getline(in, line)) throw SchemaMismatch("normalization file has too few rows");
    const char* p = line.data();
    const char* end = p + line.size();
    const char* comma = std::find(p, end, ',');
    if (std::string_view(p, static_cast<std::size_t>(comma - p)) != feature_names()[f]) {
      throw SchemaMismatch("normalization rows do not follow the feature order");
    }
    for (double* v : {&st.mean[f], &st.std_dev[f], &st.scale[f]}) {
      if (comma == end) throw SchemaMismatch("normalization row too short");
      p = comma + 1;
      comma = std::find(p, end, ',');
      const auto res = std::from_chars(p, comma, *v);
      if (res.ec != std::errc() || res.ptr != comma) throw SchemaMismatch("bad normalization value");
    }
  }
  return st;
}

Prepared prepare(Dataset& data, std::size_t length, std::size_t stride, const SplitSpec& spec) {
  Prepared p;
  p.split = split(window(data, length, stride), spec);
  p.stats = normalize_fit(data, p.split.train);
  normalize_apply(p.stats, data);
  return p;
}

// ---------------------------------------------------------------------------

void export_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  std::string line;
  for (const auto& name : feature_names()) {
    line.append(name);
    line.push_back(',');
  }
  line.append("label\n");
  out << line;

  char buf[64];
  std::string block;
  block.reserve(1 << 20);
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (double v : data.row(r)) {
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      block.append(buf, res.ptr);
      block.push_back(',');
    }
    block.append(std::to_string(data.label(r)));
    block.push_back('\n');
    if (block.size() > (1 << 20) - 4096) {
      out << block;
      block.clear();
    }
  }
  out << block;
  if (!out) throw InvalidArgument("failed writing " + path.string());
}

Dataset import_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaMismatch("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaMismatch("missing header row");
  if (std::count(line.begin(), line.end(), ',') + 1 != static_cast<long>(kColumnCount)) {
    throw SchemaMismatch("header must name " + std::to_string(kColumnCount) + " columns");
  }

  Dataset data;
  constexpr std::size_t kTimeColumn = 13;
  double prev_t = 0.0;
  int prev_label = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    FingerprintRecord rec;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (std::size_t col = 0; col < kColumnCount; ++col) {
      const char* stop = std::find(p, end, ',');
      if ((col + 1 < kColumnCount) == (stop == end)) {
        throw SchemaMismatch("wrong column count on line " + std::to_string(line_no));
      }
      if (col < kFeatureCount) {
        const auto res = std::from_chars(p, stop, rec.features[col]);
        if (res.ec != std::errc() || res.ptr != stop || !std::isfinite(rec.features[col])) {
          throw SchemaMismatch("non-numeric cell on line " + std::to_string(line_no));
        }
      } else {
        const auto res = std::from_chars(p, stop, rec.label);
        if (res.ec != std::errc() || res.ptr != stop || rec.label < 0 || rec.label >= kClassCount) {
          throw SchemaMismatch("label must be an integer in [0, 3] on line " +
                               std::to_string(line_no));
        }
      }
      p = stop == end ? end : stop + 1;
    }
    const double t = rec.features[kTimeColumn];
    if (data.rows() > 0 && (rec.label != prev_label || !(t > prev_t))) data.begin_segment();
    prev_t = t;
    prev_label = rec.label;
    data.append(rec);
  }
  return data;
}

}  // namespace evcs::dataset
