#include "tokenmask/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "tokenmask/synthetic.hpp"

namespace tokenmask {

namespace {

using json = nlohmann::ordered_json;

TimingStats timing_stats(std::vector<double> ms) {
  std::sort(ms.begin(), ms.end());
  const std::size_t n = ms.size();
  TimingStats s;
  s.repetitions = static_cast<int>(n);
  s.min_ms = ms.front();
  s.max_ms = ms.back();
  s.median_ms = (n % 2 == 1) ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  s.iqr_ms = ms[(3 * (n - 1)) / 4] - ms[(n - 1) / 4];
  return s;
}

template <typename T>
BenchResult run_bench_impl(const BenchConfig& config) {
  const BackbonePreset& preset = preset_by_name(config.preset);
  const std::int64_t N =
      (config.image_h / preset.patch) * (config.image_w / preset.patch);

  auto inputs = gen_synthetic<T>(config.seed, config.batch, N, preset.embed_dim, config.queries);
  TensorT<T> mq = project_queries(inputs.queries, inputs.projection);

  BenchResult result;
  result.config = config;
  result.backbone_flops_modeled = backbone_cost(preset, config.image_h, config.image_w,
                                                config.queries, default_query_blocks(preset));

  std::vector<TensorT<T>> outputs;
  for (UpsampleLocation loc : config.variants) {
    const HeadConfig hc = config.head_config(loc);
    const HeadKind kind = head_kind_for(hc);

    const auto run_once = [&]() {
      return kind == HeadKind::kImageSpace ? image_space_head(inputs.tokens, mq, hc)
                                           : token_space_head(inputs.tokens, mq, hc);
    };

    for (int i = 0; i < config.warmup; ++i) run_once();

    std::vector<double> times_ms;
    times_ms.reserve(static_cast<std::size_t>(config.repetitions));
    TensorT<T> out;
    for (int i = 0; i < config.repetitions; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      out = run_once();
      const auto t1 = std::chrono::steady_clock::now();
      times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }

    VariantResult vr;
    vr.upsample_location = loc;
    vr.head = kind;
    vr.timing = timing_stats(std::move(times_ms));
    vr.throughput = 1000.0 / vr.timing.median_ms;
    vr.cost = head_cost(hc, preset, config.queries, kind, config.batch,
                        static_cast<std::int64_t>(sizeof(T)));
    result.variants.push_back(std::move(vr));
    outputs.push_back(std::move(out));
  }

  // Deviation across variants with the same output resolution.
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    for (std::size_t j = i + 1; j < outputs.size(); ++j) {
      if (outputs[i].shape() != outputs[j].shape()) continue;
      double dev = 0.0;
      for (std::int64_t k = 0; k < outputs[i].numel(); ++k) {
        dev = std::max(dev, std::abs(static_cast<double>(outputs[i].at(k)) -
                                     static_cast<double>(outputs[j].at(k))));
      }
      auto& a = result.variants[i].max_deviation;
      auto& b = result.variants[j].max_deviation;
      a = std::isnan(a) ? dev : std::max(a, dev);
      b = std::isnan(b) ? dev : std::max(b, dev);
    }
  }
  return result;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename Fn>
std::vector<BenchResult> run_parallel(const std::vector<BenchConfig>& configs, int threads,
                                      Fn&& runner) {
  std::vector<BenchResult> results(configs.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < configs.size(); ++i) results[i] = runner(configs[i]);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  const int n = std::min<int>(threads, static_cast<int>(configs.size()));
  for (int w = 0; w < n; ++w) {
    workers.emplace_back([&]() {
      for (std::size_t i = next.fetch_add(1); i < configs.size(); i = next.fetch_add(1)) {
        results[i] = runner(configs[i]);
      }
    });
  }
  for (auto& t : workers) t.join();
  return results;
}

}  // namespace

HeadConfig BenchConfig::head_config(UpsampleLocation loc) const {
  const BackbonePreset& p = preset_by_name(preset);
  HeadConfig hc;
  hc.upsample_location = loc;
  hc.output_stride = output_stride;
  hc.image_h = image_h;
  hc.image_w = image_w;
  hc.patch = p.patch;
  return hc;
}

void BenchConfig::validate() const {
  if (repetitions < 3) throw config_error("repetitions must be >= 3");
  if (warmup < 0) throw config_error("warmup must be >= 0");
  if (batch < 1) throw config_error("batch must be >= 1");
  if (queries < 1) throw config_error("queries must be >= 1");
  if (variants.empty()) throw config_error("at least one upsample variant required");
  for (UpsampleLocation loc : variants) head_config(loc).validate();
}

BenchResult run_bench(const BenchConfig& config) {
  config.validate();
  return config.precision == Precision::kFloat32 ? run_bench_impl<float>(config)
                                                 : run_bench_impl<double>(config);
}

std::vector<BenchResult> sweep_upsample(const BenchConfig& base, int threads) {
  std::vector<BenchConfig> configs;
  for (const auto& preset : backbone_presets()) {
    BenchConfig cfg = base;
    cfg.preset = preset.name;
    cfg.variants = {UpsampleLocation::kFeature, UpsampleLocation::kLogit,
                    UpsampleLocation::kNone};
    cfg.validate();
    configs.push_back(std::move(cfg));
  }
  return run_parallel(configs, threads, [](const BenchConfig& c) { return run_bench(c); });
}

std::vector<BenchResult> sweep_upsample(const BenchConfig& base) {
  return sweep_upsample(base, 1);
}

std::vector<BenchResult> sweep_stride(const BenchConfig& base,
                                      const std::vector<std::int64_t>& strides, int threads) {
  std::vector<BenchConfig> configs;
  for (std::int64_t stride : strides) {
    BenchConfig cfg = base;
    cfg.output_stride = stride;
    cfg.variants = {UpsampleLocation::kLogit};
    cfg.validate();
    configs.push_back(std::move(cfg));
  }
  return run_parallel(configs, threads, [](const BenchConfig& c) { return run_bench(c); });
}

std::vector<BenchResult> sweep_stride(const BenchConfig& base,
                                      const std::vector<std::int64_t>& strides) {
  return sweep_stride(base, strides, 1);
}

std::string report_json(const std::vector<BenchResult>& results) {
  json root;
  root["schema_version"] = kReportSchemaVersion;
  root["results"] = json::array();
  for (const auto& r : results) {
    json jr;
    jr["config"] = {{"preset", r.config.preset},
                    {"image_h", r.config.image_h},
                    {"image_w", r.config.image_w},
                    {"queries", r.config.queries},
                    {"output_stride", r.config.output_stride},
                    {"batch", r.config.batch},
                    {"repetitions", r.config.repetitions},
                    {"warmup", r.config.warmup},
                    {"seed", r.config.seed},
                    {"precision", to_string(r.config.precision)}};
    jr["backbone_flops_modeled"] = r.backbone_flops_modeled;
    jr["variants"] = json::array();
    for (const auto& v : r.variants) {
      json jv;
      jv["upsample_location"] = to_string(v.upsample_location);
      jv["head"] = to_string(v.head);
      jv["timing"] = {{"median_ms", v.timing.median_ms},
                      {"min_ms", v.timing.min_ms},
                      {"max_ms", v.timing.max_ms},
                      {"iqr_ms", v.timing.iqr_ms},
                      {"repetitions", v.timing.repetitions}};
      jv["throughput"] = v.throughput;
      jv["head_flops"] = v.cost.total_flops();
      jv["head_gflops"] = static_cast<double>(v.cost.total_flops()) / 1e9;
      jv["peak_bytes"] = v.cost.peak_activation_bytes();
      if (std::isnan(v.max_deviation)) {
        jv["max_deviation"] = nullptr;
      } else {
        jv["max_deviation"] = v.max_deviation;
      }
      jr["variants"].push_back(std::move(jv));
    }
    root["results"].push_back(std::move(jr));
  }
  return root.dump(2) + "\n";
}

std::string report_csv(const std::vector<BenchResult>& results) {
  std::ostringstream os;
  os << "schema_version,preset,resolution,queries,upsample_location,stride,median_ms,"
        "throughput,head_gflops,peak_bytes,max_deviation\n";
  for (const auto& r : results) {
    for (const auto& v : r.variants) {
      os << kReportSchemaVersion << ',' << r.config.preset << ',' << r.config.image_h << 'x'
         << r.config.image_w << ',' << r.config.queries << ',' << to_string(v.upsample_location)
         << ',' << r.config.output_stride << ',' << format_double(v.timing.median_ms) << ','
         << format_double(v.throughput) << ','
         << format_double(static_cast<double>(v.cost.total_flops()) / 1e9) << ','
         << v.cost.peak_activation_bytes() << ',' << format_double(v.max_deviation) << '\n';
    }
  }
  return os.str();
}

void write_report(const std::vector<BenchResult>& results, ReportFormat format,
                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open report path '" + path + "' for writing");
  out << (format == ReportFormat::kJson ? report_json(results) : report_csv(results));
  if (!out) throw std::runtime_error("failed writing report to '" + path + "'");
}

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "json") return ReportFormat::kJson;
  if (s == "csv") return ReportFormat::kCsv;
  throw config_error("unknown report format '" + s + "' (json|csv)");
}

}  // namespace tokenmask
