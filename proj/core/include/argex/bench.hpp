#pragma once

#include <string>
#include <vector>

#include "argex/pipeline.hpp"

namespace argex {

struct BenchBucket {
  int event_count = 0;
  int docs = 0;
  double multi_mean_seconds = 0.0;
  double single_loop_mean_seconds = 0.0;
  long long multi_encoder_passes = 0;
  long long single_loop_encoder_passes = 0;
};

struct BenchReport {
  int repeats = 0;
  std::vector<BenchBucket> buckets;
};

/// Wall-time comparison of the two inference schemes, bucketed by event
/// count. Per bucket and mode: mean per-document time across `repeats`
/// timed runs (monotonic clock, warmup runs excluded) plus encoder-pass
/// counts for a single sweep.
BenchReport bench(const Corpus& corpus, const TemplateRegistry& reg, const Checkpoint& ck,
                  int repeats);

std::string bench_report_to_json(const BenchReport& report);

}  // namespace argex
