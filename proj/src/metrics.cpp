#include <cstdio>
#include <string>

#include "evcs/errors.hpp"
#include "evcs/ids.hpp"

namespace evcs::ids {

MetricsReport compute_metrics(std::span<const int> predicted, std::span<const int> actual,
                              std::size_t classes) {
  if (predicted.size() != actual.size()) {
    throw InvalidArgument("predicted and actual label counts differ");
  }
  MetricsReport r;
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  r.support.assign(classes, 0);
  std::size_t correct = 0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    const int p = predicted[k];
    const int a = actual[k];
    if (p < 0 || a < 0 || static_cast<std::size_t>(p) >= classes ||
        static_cast<std::size_t>(a) >= classes) {
      throw InvalidArgument("class label out of range");
    }
    ++r.confusion[static_cast<std::size_t>(p)][static_cast<std::size_t>(a)];
    ++r.support[static_cast<std::size_t>(a)];
    if (p == a) ++correct;
  }
  r.total = predicted.size();
  r.accuracy = r.total ? static_cast<double>(correct) / static_cast<double>(r.total) : 0.0;

  auto ratio = [](std::size_t num, std::size_t den) {
    return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
  };
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t predicted_c = 0;
    for (std::size_t a = 0; a < classes; ++a) predicted_c += r.confusion[c][a];
    const std::size_t tp = r.confusion[c][c];
    const double p = ratio(tp, predicted_c);
    const double rc = ratio(tp, r.support[c]);
    r.precision.push_back(p);
    r.recall.push_back(rc);
    r.f1.push_back(p + rc > 0 ? 2.0 * p * rc / (p + rc) : 0.0);
  }
  return r;
}

MetricsReport evaluate(const LstmModel& model, const dataset::Dataset& data,
                       const std::vector<dataset::SequenceWindow>& test) {
  const auto s = score(model, data, test);
  std::vector<int> actual;
  actual.reserve(test.size());
  for (const auto& w : test) actual.push_back(w.label);
  return compute_metrics(s.predicted, actual, model.classes());
}

namespace {

const char* class_name(std::size_t c) {
  static const char* names[] = {"Normal", "PV", "BES", "EV"};
  return c < 4 ? names[c] : "class";
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace

std::string format_metrics_table(const MetricsReport& r) {
  const std::size_t k = r.confusion.size();
  std::string out = "Confusion matrix (rows: predicted, columns: actual)\n";
  out += std::string(10, ' ');
  for (std::size_t a = 0; a < k; ++a) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%10s", class_name(a));
    out += buf;
  }
  out += "       sum\n";
  for (std::size_t p = 0; p < k; ++p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%-10s", class_name(p));
    out += buf;
    std::size_t row = 0;
    for (std::size_t a = 0; a < k; ++a) {
      std::snprintf(buf, sizeof buf, "%10zu", r.confusion[p][a]);
      out += buf;
      row += r.confusion[p][a];
    }
    std::snprintf(buf, sizeof buf, "%10zu\n", row);
    out += buf;
  }
  {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%-10s", "sum");
    out += buf;
    for (std::size_t a = 0; a < k; ++a) {
      std::snprintf(buf, sizeof buf, "%10zu", r.support[a]);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, "%10zu\n\n", r.total);
    out += buf;
  }
  out += "class      precision    recall        f1   support\n";
  for (std::size_t c = 0; c < k; ++c) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-10s %9.6f %9.6f %9.6f %9zu\n", class_name(c),
                  r.precision[c], r.recall[c], r.f1[c], r.support[c]);
    out += buf;
  }
  out += fmt("accuracy   %.6f\n", r.accuracy);
  return out;
}

std::string format_metrics_csv(const MetricsReport& r) {
  const std::size_t k = r.confusion.size();
  std::string out = "section,class,predicted,actual,value\n";
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t a = 0; a < k; ++a) {
      out += "confusion,," + std::to_string(p) + "," + std::to_string(a) + "," +
             std::to_string(r.confusion[p][a]) + "\n";
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    const std::string cls = std::to_string(c);
    out += "precision," + cls + ",,," + fmt("%.17g", r.precision[c]) + "\n";
    out += "recall," + cls + ",,," + fmt("%.17g", r.recall[c]) + "\n";
    out += "f1," + cls + ",,," + fmt("%.17g", r.f1[c]) + "\n";
    out += "support," + cls + ",,," + std::to_string(r.support[c]) + "\n";
  }
  out += "accuracy,,,," + fmt("%.17g", r.accuracy) + "\n";
  out += "total,,,," + std::to_string(r.total) + "\n";
  return out;
}

}  // namespace evcs::ids
