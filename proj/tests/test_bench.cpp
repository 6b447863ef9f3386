#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "tokenmask/bench.hpp"
#include "tokenmask/synthetic.hpp"

using namespace tokenmask;
using json = nlohmann::json;

namespace {

BenchConfig tiny_config() {
  BenchConfig cfg;
  cfg.preset = "vit-tiny";
  cfg.image_h = cfg.image_w = 64;
  cfg.queries = 8;
  cfg.output_stride = 4;
  cfg.repetitions = 3;
  cfg.warmup = 0;
  return cfg;
}

std::uint64_t checksum(const Tensor& t) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    std::uint32_t bits;
    const float v = t.at(i);
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    h = (h ^ bits) * 1099511628211ull;
  }
  return h;
}

json scrub_timing(json j) {
  for (auto& r : j["results"]) {
    for (auto& v : r["variants"]) {
      v.erase("timing");
      v.erase("throughput");
    }
  }
  return j;
}

}  // namespace

TEST_CASE("gen_synthetic is seed-deterministic") {
  auto a = gen_synthetic<float>(42, 1, 16, 8, 4);
  auto b = gen_synthetic<float>(42, 1, 16, 8, 4);
  CHECK(oracles::bitwise_equal(a.tokens, b.tokens));
  CHECK(oracles::bitwise_equal(a.queries.values, b.queries.values));
  CHECK(oracles::bitwise_equal(a.projection.weight, b.projection.weight));
  CHECK(oracles::bitwise_equal(a.class_logits, b.class_logits));

  auto c = gen_synthetic<float>(43, 1, 16, 8, 4);
  CHECK(checksum(a.tokens) != checksum(c.tokens));
}

TEST_CASE("gen_synthetic full-scale shapes and value range") {
  auto in = gen_synthetic<float>(0, 1, 1600, 192, 200);
  CHECK(in.tokens.shape() == Shape{1, 1600, 192});
  CHECK(in.queries.values.shape() == Shape{1, 200, 192});
  for (std::int64_t i = 0; i < in.tokens.numel(); ++i) {
    CHECK(in.tokens.at(i) >= -1.0f);
    CHECK(in.tokens.at(i) <= 1.0f);
  }
  CHECK_THROWS_AS(gen_synthetic<float>(0, 0, 1, 1, 1), config_error);
}

TEST_CASE("identity-resample variants agree exactly") {
  BenchConfig cfg = tiny_config();
  cfg.output_stride = 16;  // == patch
  const BenchResult r = run_bench(cfg);
  REQUIRE(r.variants.size() == 2);
  CHECK(r.variants[0].max_deviation == 0.0);
  CHECK(r.variants[1].max_deviation == 0.0);
}

TEST_CASE("upsampled variants agree within the commutation bound") {
  const BenchResult r = run_bench(tiny_config());
  for (const auto& v : r.variants) {
    CHECK(std::isfinite(v.max_deviation));
    CHECK(v.max_deviation <= 1e-4);
  }
}

TEST_CASE("timing stats are ordered and throughput is positive") {
  const BenchResult r = run_bench(tiny_config());
  for (const auto& v : r.variants) {
    CHECK(v.timing.median_ms >= v.timing.min_ms);
    CHECK(v.timing.median_ms <= v.timing.max_ms);
    CHECK(v.timing.repetitions == 3);
    CHECK(v.throughput > 0.0);
  }
}

TEST_CASE("bad configurations fail before any execution") {
  BenchConfig cfg = tiny_config();
  cfg.repetitions = 2;
  CHECK_THROWS_AS(run_bench(cfg), config_error);

  cfg = tiny_config();
  cfg.image_h = 65;
  CHECK_THROWS_AS(run_bench(cfg), config_error);

  cfg = tiny_config();
  cfg.output_stride = 5;
  CHECK_THROWS_AS(run_bench(cfg), config_error);

  cfg = tiny_config();
  cfg.preset = "vit-giant";
  CHECK_THROWS_AS(run_bench(cfg), config_error);
}

TEST_CASE("upsample sweep has the 4x3 table shape") {
  const auto results = sweep_upsample(tiny_config());
  CHECK(results.size() == 4);
  std::size_t rows = 0;
  for (const auto& r : results) rows += r.variants.size();
  CHECK(rows == 12);

  const std::string csv = report_csv(results);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line ==
        "schema_version,preset,resolution,queries,upsample_location,stride,median_ms,"
        "throughput,head_gflops,peak_bytes,max_deviation");
  std::size_t data_rows = 0;
  while (std::getline(is, line)) {
    if (!line.empty()) {
      ++data_rows;
      CHECK(line.rfind("1,", 0) == 0);  // schema version stamp
    }
  }
  CHECK(data_rows == 12);
}

TEST_CASE("stride sweep emits one row per stride") {
  const auto results = sweep_stride(tiny_config(), {1, 4, 8, 16});
  CHECK(results.size() == 4);
  for (const auto& r : results) {
    CHECK(r.variants.size() == 1);
    CHECK(r.variants[0].upsample_location == UpsampleLocation::kLogit);
  }
}

TEST_CASE("json report round-trips every non-timing field") {
  const auto results = sweep_stride(tiny_config(), {4, 16});
  const std::string text = report_json(results);
  const json j = json::parse(text);
  CHECK(j["schema_version"] == kReportSchemaVersion);
  REQUIRE(j["results"].size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& jr = j["results"][i];
    CHECK(jr["config"]["preset"] == results[i].config.preset);
    CHECK(jr["config"]["queries"] == results[i].config.queries);
    CHECK(jr["config"]["output_stride"] == results[i].config.output_stride);
    CHECK(jr["backbone_flops_modeled"] == results[i].backbone_flops_modeled);
    const auto& jv = jr["variants"][0];
    CHECK(jv["head_flops"] == results[i].variants[0].cost.total_flops());
    CHECK(jv["peak_bytes"] == results[i].variants[0].cost.peak_activation_bytes());
    // reported gflops equals the cost-model value exactly
    CHECK(jv["head_gflops"].get<double>() ==
          static_cast<double>(results[i].variants[0].cost.total_flops()) / 1e9);
    CHECK(jv["timing"]["repetitions"] == 3);
  }
}

TEST_CASE("reports are reproducible apart from timing") {
  const json a = scrub_timing(json::parse(report_json({run_bench(tiny_config())})));
  const json b = scrub_timing(json::parse(report_json({run_bench(tiny_config())})));
  CHECK(a == b);
}

TEST_CASE("parallel sweep matches the single-threaded sweep") {
  const json a = scrub_timing(json::parse(report_json(sweep_stride(tiny_config(), {4, 8}, 1))));
  const json b = scrub_timing(json::parse(report_json(sweep_stride(tiny_config(), {4, 8}, 2))));
  CHECK(a == b);
}

TEST_CASE("64-bit precision path works end to end") {
  BenchConfig cfg = tiny_config();
  cfg.precision = Precision::kFloat64;
  const BenchResult r = run_bench(cfg);
  for (const auto& v : r.variants) CHECK(v.max_deviation <= 1e-10);
}

TEST_CASE("write_report rejects unwritable paths") {
  CHECK_THROWS(write_report({run_bench(tiny_config())}, ReportFormat::kCsv,
                            "/nonexistent-dir/report.csv"));
  CHECK_THROWS_AS(report_format_from_string("xml"), config_error);
}
