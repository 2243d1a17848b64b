#include "argex/bench.hpp"

#include <chrono>
#include <map>

#include <nlohmann/json.hpp>

#include "argex/error.hpp"

namespace argex {

using nlohmann::json;

BenchReport bench(const Corpus& corpus, const TemplateRegistry& reg, const Checkpoint& ck,
                  int repeats) {
  if (repeats < 1) throw DataError("bench: repeats must be >= 1");
  std::map<int, std::vector<const Document*>> buckets;
  for (const Document& doc : corpus.docs)
    if (!doc.events.empty()) buckets[static_cast<int>(doc.events.size())].push_back(&doc);
  if (buckets.empty()) throw DataError("bench: no documents with events");

  using Clock = std::chrono::steady_clock;
  BenchReport report;
  report.repeats = repeats;
  for (const auto& [k, docs] : buckets) {
    BenchBucket bucket;
    bucket.event_count = k;
    bucket.docs = static_cast<int>(docs.size());

    const PredictMode modes[2] = {PredictMode::Multi, PredictMode::SingleLoop};
    for (PredictMode mode : modes) {
      ForwardStats stats;
      for (const Document* doc : docs) predict(*doc, reg, ck, mode, &stats);  // counted sweep
      for (int w = 0; w < 2; ++w)
        for (const Document* doc : docs) predict(*doc, reg, ck, mode);  // warmup

      double total = 0.0;
      for (int r = 0; r < repeats; ++r) {
        const auto t0 = Clock::now();
        for (const Document* doc : docs) predict(*doc, reg, ck, mode);
        const auto t1 = Clock::now();
        total += std::chrono::duration<double>(t1 - t0).count();
      }
      const double mean_per_doc = total / repeats / docs.size();
      if (mode == PredictMode::Multi) {
        bucket.multi_mean_seconds = mean_per_doc;
        bucket.multi_encoder_passes = stats.encoder_passes;
      } else {
        bucket.single_loop_mean_seconds = mean_per_doc;
        bucket.single_loop_encoder_passes = stats.encoder_passes;
      }
    }
    report.buckets.push_back(bucket);
  }
  return report;
}

std::string bench_report_to_json(const BenchReport& report) {
  json j;
  j["repeats"] = report.repeats;
  json arr = json::array();
  for (const BenchBucket& b : report.buckets) {
    arr.push_back({{"event_count", b.event_count},
                   {"docs", b.docs},
                   {"multi",
                    {{"mean_seconds", b.multi_mean_seconds},
                     {"encoder_passes", b.multi_encoder_passes}}},
                   {"single_loop",
                    {{"mean_seconds", b.single_loop_mean_seconds},
                     {"encoder_passes", b.single_loop_encoder_passes}}}});
  }
  j["buckets"] = arr;
  return j.dump(2);
}

}  // namespace argex
