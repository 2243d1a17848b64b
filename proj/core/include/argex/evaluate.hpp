#pragma once

#include <map>
#include <string>
#include <vector>

#include "argex/pipeline.hpp"

namespace argex {

enum class ErrorCategory { WrongSpan, Partial, Overlap, OverExtraction, UnderExtraction };

const char* error_category_name(ErrorCategory c);

/// Five-way error taxonomy over a (predicted, gold) span pair. Requires the
/// pair to be an actual error: not both empty, and not equal.
ErrorCategory classify_error(const Span& pred, const Span& gold);

struct PRF {
  long long tp = 0;
  long long n_pred = 0;
  long long n_gold = 0;
  double precision() const { return n_pred ? static_cast<double>(tp) / n_pred : 0.0; }
  double recall() const { return n_gold ? static_cast<double>(tp) / n_gold : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return (p + r > 0.0) ? 2.0 * p * r / (p + r) : 0.0;
  }
};

struct Metrics {
  PRF arg_i;
  PRF arg_c;
  PRF single_event_arg_c;  // docs with exactly one event
  PRF multi_event_arg_c;   // docs with two or more
  std::map<std::string, long long> error_counts;
};

/// Micro-averaged strict argument identification (boundaries, same event)
/// and classification (boundaries + role) F1, with event-count buckets and
/// the five-way error breakdown. Duplicate golds match at most once.
Metrics evaluate(const std::vector<Prediction>& preds, const Corpus& gold);

std::string metrics_to_json(const Metrics& m);

/// Standalone error report: per-category counts plus per-pair detail rows.
struct ErrorReport {
  std::map<std::string, long long> counts;
  struct Item {
    std::string doc_id, event_id, role;
    Span pred, gold;
    std::string category;
  };
  std::vector<Item> items;
};
ErrorReport error_report(const std::vector<Prediction>& preds, const Corpus& gold);
std::string error_report_to_json(const ErrorReport& report);

}  // namespace argex
