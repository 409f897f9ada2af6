#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cover/core.hpp"
#include "cover/errors.hpp"
#include "cover/llm_backend.hpp"

namespace cover {

// Which labels F_AVG averages over: the two-class convention averages favor
// and against only (None still exists as a prediction, and still costs
// precision when predicted wrongly); the three-class convention averages
// all three.
enum class DatasetKind { TwoClassAvg = 0, ThreeClassAvg = 1 };

inline const char* to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::TwoClassAvg:
      return "two_class";
    case DatasetKind::ThreeClassAvg:
      return "three_class";
  }
  throw std::invalid_argument("unknown dataset kind value");
}

inline std::optional<DatasetKind> parse_dataset_kind(std::string_view text) {
  const std::string s = detail::to_lower(detail::trim(text));
  if (s == "two_class" || s == "two-class" || s == "2") return DatasetKind::TwoClassAvg;
  if (s == "three_class" || s == "three-class" || s == "3") return DatasetKind::ThreeClassAvg;
  return std::nullopt;
}

struct ClassF1 {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct F1Report {
  std::array<ClassF1, kLabelCount> per_class;  // indexed by label_index
  double f_avg = 0.0;
  DatasetKind kind = DatasetKind::TwoClassAvg;
  std::size_t count = 0;
};

// Per-class one-vs-rest F1 with the zero-denominator convention: a class
// with no predicted and no gold occurrences contributes F1 = 0.
inline F1Report f1_report(const std::vector<StanceLabel>& predictions,
                          const std::vector<StanceLabel>& golds, DatasetKind kind) {
  if (predictions.size() != golds.size()) {
    throw std::invalid_argument("predictions and golds differ in length: " +
                                std::to_string(predictions.size()) + " vs " +
                                std::to_string(golds.size()));
  }
  if (predictions.empty()) {
    throw std::invalid_argument("cannot evaluate an empty prediction set");
  }
  F1Report report;
  report.kind = kind;
  report.count = predictions.size();
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    for (StanceLabel label : kAllLabels) {
      ClassF1& c = report.per_class[label_index(label)];
      const bool predicted = predictions[i] == label;
      const bool actual = golds[i] == label;
      if (predicted && actual) ++c.tp;
      if (predicted && !actual) ++c.fp;
      if (!predicted && actual) ++c.fn;
    }
  }
  for (ClassF1& c : report.per_class) {
    c.precision = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp)
                                    : 0.0;
    c.recall = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn)
                                 : 0.0;
    c.f1 = (c.precision + c.recall) > 0.0 ? 2.0 * c.precision * c.recall / (c.precision + c.recall)
                                          : 0.0;
  }
  const auto& pc = report.per_class;
  if (kind == DatasetKind::TwoClassAvg) {
    report.f_avg = (pc[label_index(StanceLabel::Favor)].f1 +
                    pc[label_index(StanceLabel::Against)].f1) /
                   2.0;
  } else {
    report.f_avg = (pc[0].f1 + pc[1].f1 + pc[2].f1) / 3.0;
  }
  return report;
}

inline double f_avg(const std::vector<StanceLabel>& predictions,
                    const std::vector<StanceLabel>& golds, DatasetKind kind) {
  return f1_report(predictions, golds, kind).f_avg;
}

// Average billable queries per tweet.
inline double q_avg(const QueryLog& log, std::size_t n_tweets, bool include_escalation = true) {
  if (n_tweets == 0) throw std::invalid_argument("q_avg needs a non-empty dataset");
  return static_cast<double>(count_queries(log, include_escalation)) /
         static_cast<double>(n_tweets);
}

}  // namespace cover
