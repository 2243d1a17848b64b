#include "argex/evaluate.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "argex/error.hpp"

namespace argex {

using nlohmann::json;

const char* error_category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::WrongSpan: return "wrong_span";
    case ErrorCategory::Partial: return "partial";
    case ErrorCategory::Overlap: return "overlap";
    case ErrorCategory::OverExtraction: return "over_extraction";
    case ErrorCategory::UnderExtraction: return "under_extraction";
  }
  return "?";
}

ErrorCategory classify_error(const Span& pred, const Span& gold) {
  if (pred.empty() && gold.empty())
    throw std::invalid_argument("classify_error: both spans empty");
  if (gold.empty()) return ErrorCategory::OverExtraction;
  if (pred.empty()) return ErrorCategory::UnderExtraction;
  if (pred == gold) throw std::invalid_argument("classify_error: equal spans are not an error");
  const bool intersect = pred.start < gold.end && gold.start < pred.end;
  if (!intersect) return ErrorCategory::WrongSpan;
  const bool pred_in_gold = gold.start <= pred.start && pred.end <= gold.end;
  const bool gold_in_pred = pred.start <= gold.start && gold.end <= pred.end;
  if (pred_in_gold || gold_in_pred) return ErrorCategory::Partial;  // proper subset either way
  return ErrorCategory::Overlap;
}

namespace {

struct Key {
  std::string doc_id, event_id;
  bool operator<(const Key& o) const {
    return doc_id != o.doc_id ? doc_id < o.doc_id : event_id < o.event_id;
  }
};

// Pairs up the non-matching predictions and golds of one (doc, event, role)
// group: each leftover prediction takes the unused gold it overlaps most
// (earliest on ties), finally unmatched preds pair with an empty gold and
// unmatched golds with an empty prediction.
void pair_errors(const std::string& doc_id, const std::string& event_id, const std::string& role,
                 std::vector<Span> preds, std::vector<Span> golds, ErrorReport* report) {
  std::sort(preds.begin(), preds.end());
  std::sort(golds.begin(), golds.end());
  // remove exact matches, multiset-style
  std::vector<bool> gold_used(golds.size(), false);
  std::vector<Span> wrong;
  for (const Span& p : preds) {
    bool matched = false;
    for (std::size_t g = 0; g < golds.size(); ++g) {
      if (!gold_used[g] && golds[g] == p) {
        gold_used[g] = true;
        matched = true;
        break;
      }
    }
    if (!matched) wrong.push_back(p);
  }
  auto emit = [&](const Span& p, const Span& g) {
    const ErrorCategory cat = classify_error(p, g);
    const std::string name = error_category_name(cat);
    ++report->counts[name];
    report->items.push_back({doc_id, event_id, role, p, g, name});
  };
  for (const Span& p : wrong) {
    int best = -1;
    int best_inter = -1;
    for (std::size_t g = 0; g < golds.size(); ++g) {
      if (gold_used[g]) continue;
      const int inter =
          std::max(0, std::min(p.end, golds[g].end) - std::max(p.start, golds[g].start));
      if (inter > best_inter) {
        best_inter = inter;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      gold_used[best] = true;
      emit(p, golds[best]);
    } else {
      emit(p, Span{0, 0});
    }
  }
  for (std::size_t g = 0; g < golds.size(); ++g)
    if (!gold_used[g]) emit(Span{0, 0}, golds[g]);
}

}  // namespace

Metrics evaluate(const std::vector<Prediction>& preds, const Corpus& gold) {
  std::map<Key, const Event*> events;
  std::map<std::string, int> doc_event_count;
  for (const Document& doc : gold.docs) {
    doc_event_count[doc.doc_id] = static_cast<int>(doc.events.size());
    for (const Event& ev : doc.events) events[{doc.doc_id, ev.event_id}] = &ev;
  }

  struct GoldItem {
    std::string role;
    Span span;
    bool used_i = false;
    bool used_c = false;
  };
  std::map<Key, std::vector<GoldItem>> gold_items;
  for (const Document& doc : gold.docs)
    for (const Event& ev : doc.events)
      for (const Argument& arg : ev.arguments)
        gold_items[{doc.doc_id, ev.event_id}].push_back({arg.role, arg.span, false, false});

  Metrics m;
  for (const auto& [key, items] : gold_items) {
    const long long n = static_cast<long long>(items.size());
    m.arg_i.n_gold += n;
    m.arg_c.n_gold += n;
    (doc_event_count[key.doc_id] == 1 ? m.single_event_arg_c : m.multi_event_arg_c).n_gold += n;
  }

  for (const Prediction& p : preds) {
    if (p.span.empty()) continue;
    const Key key{p.doc_id, p.event_id};
    if (!events.count(key))
      throw DataError("prediction references unknown event '" + p.event_id + "' in doc '" +
                      p.doc_id + "'");
    PRF& bucket =
        (doc_event_count[key.doc_id] == 1) ? m.single_event_arg_c : m.multi_event_arg_c;
    ++m.arg_i.n_pred;
    ++m.arg_c.n_pred;
    ++bucket.n_pred;
    auto it = gold_items.find(key);
    if (it == gold_items.end()) continue;
    for (GoldItem& g : it->second) {
      if (!g.used_i && g.span == p.span) {
        g.used_i = true;
        ++m.arg_i.tp;
        break;
      }
    }
    for (GoldItem& g : it->second) {
      if (!g.used_c && g.span == p.span && g.role == p.role) {
        g.used_c = true;
        ++m.arg_c.tp;
        ++bucket.tp;
        break;
      }
    }
  }

  const ErrorReport report = error_report(preds, gold);
  m.error_counts = report.counts;
  return m;
}

ErrorReport error_report(const std::vector<Prediction>& preds, const Corpus& gold) {
  ErrorReport report;
  for (const char* name : {"wrong_span", "partial", "overlap", "over_extraction", "under_extraction"})
    report.counts[name] = 0;

  struct RoleKey {
    std::string doc_id, event_id, role;
    bool operator<(const RoleKey& o) const {
      if (doc_id != o.doc_id) return doc_id < o.doc_id;
      if (event_id != o.event_id) return event_id < o.event_id;
      return role < o.role;
    }
  };
  std::map<RoleKey, std::pair<std::vector<Span>, std::vector<Span>>> groups;
  std::set<std::pair<std::string, std::string>> known;
  for (const Document& doc : gold.docs) {
    for (const Event& ev : doc.events) {
      known.insert({doc.doc_id, ev.event_id});
      for (const Argument& arg : ev.arguments)
        groups[{doc.doc_id, ev.event_id, arg.role}].second.push_back(arg.span);
    }
  }
  for (const Prediction& p : preds) {
    if (p.span.empty()) continue;
    if (!known.count({p.doc_id, p.event_id}))
      throw DataError("prediction references unknown event '" + p.event_id + "' in doc '" +
                      p.doc_id + "'");
    groups[{p.doc_id, p.event_id, p.role}].first.push_back(p.span);
  }
  for (const auto& [key, pg] : groups)
    pair_errors(key.doc_id, key.event_id, key.role, pg.first, pg.second, &report);
  return report;
}

namespace {
json prf_to_json(const PRF& p) {
  return {{"precision", p.precision()}, {"recall", p.recall()}, {"f1", p.f1()},
          {"tp", p.tp},                 {"predicted", p.n_pred}, {"gold", p.n_gold}};
}
}  // namespace

std::string metrics_to_json(const Metrics& m) {
  json j;
  j["arg_i"] = prf_to_json(m.arg_i);
  j["arg_c"] = prf_to_json(m.arg_c);
  j["by_event_count"] = {{"single", prf_to_json(m.single_event_arg_c)},
                         {"multi", prf_to_json(m.multi_event_arg_c)}};
  j["error_counts"] = m.error_counts;
  return j.dump(2);
}

std::string error_report_to_json(const ErrorReport& report) {
  json j;
  j["counts"] = report.counts;
  json items = json::array();
  for (const auto& it : report.items) {
    items.push_back({{"doc_id", it.doc_id},
                     {"event_id", it.event_id},
                     {"role", it.role},
                     {"pred", {{"start", it.pred.start}, {"end", it.pred.end}}},
                     {"gold", {{"start", it.gold.start}, {"end", it.gold.end}}},
                     {"category", it.category}});
  }
  j["items"] = items;
  return j.dump(2);
}

}  // namespace argex
