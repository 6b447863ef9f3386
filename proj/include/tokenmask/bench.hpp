#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tokenmask/cost_model.hpp"
#include "tokenmask/heads.hpp"

namespace tokenmask {

inline constexpr int kReportSchemaVersion = 1;

enum class Precision { kFloat32, kFloat64 };

inline const char* to_string(Precision p) {
  return p == Precision::kFloat32 ? "f32" : "f64";
}

enum class ReportFormat { kJson, kCsv };

struct BenchConfig {
  std::string preset = "vit-tiny";
  std::int64_t image_h = 640;
  std::int64_t image_w = 640;
  std::int64_t queries = 200;
  std::vector<UpsampleLocation> variants = {UpsampleLocation::kFeature, UpsampleLocation::kLogit};
  std::int64_t output_stride = 4;
  std::int64_t batch = 1;
  int repetitions = 5;
  int warmup = 1;
  std::uint64_t seed = 0;
  Precision precision = Precision::kFloat32;

  HeadConfig head_config(UpsampleLocation loc) const;
  // Checks every variant's geometry up front; throws config_error before
  // any execution happens.
  void validate() const;
};

// Order statistics over the timed repetitions (simple index quartiles).
struct TimingStats {
  double median_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  double iqr_ms = 0.0;
  int repetitions = 0;
};

struct VariantResult {
  UpsampleLocation upsample_location = UpsampleLocation::kNone;
  HeadKind head = HeadKind::kTokenSpace;
  TimingStats timing;
  double throughput = 0.0;  // head executions per second, 1000 / median_ms
  CostReport cost;
  // Max absolute output difference against comparable variants of the same
  // run (same output resolution); NaN when nothing is comparable.
  double max_deviation = std::numeric_limits<double>::quiet_NaN();
};

struct BenchResult {
  BenchConfig config;
  std::uint64_t backbone_flops_modeled = 0;  // analytical context, never measured
  std::vector<VariantResult> variants;
};

// Runs every requested head variant on identical synthetic inputs: warmup,
// then timed repetitions on a monotonic clock. Outputs are deterministic for
// a given seed; only the timing fields vary between runs.
BenchResult run_bench(const BenchConfig& config);

// Preset x {feature, logit, none} sweep at the base geometry (12 rows).
std::vector<BenchResult> sweep_upsample(const BenchConfig& base);

// Output-stride sweep of the logit path (one row per stride).
std::vector<BenchResult> sweep_stride(const BenchConfig& base,
                                      const std::vector<std::int64_t>& strides = {1, 4, 8, 16});

// Both sweeps may distribute configurations over worker threads; results
// keep the input order and are identical to a single-threaded run apart
// from the timing fields.
std::vector<BenchResult> sweep_upsample(const BenchConfig& base, int threads);
std::vector<BenchResult> sweep_stride(const BenchConfig& base,
                                      const std::vector<std::int64_t>& strides, int threads);

std::string report_json(const std::vector<BenchResult>& results);
std::string report_csv(const std::vector<BenchResult>& results);
void write_report(const std::vector<BenchResult>& results, ReportFormat format,
                  const std::string& path);

ReportFormat report_format_from_string(const std::string& s);

}  // namespace tokenmask
