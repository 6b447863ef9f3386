#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tokenmask/bench.hpp"
#include "tokenmask/cost_model.hpp"
#include "tokenmask/decode.hpp"
#include "tokenmask/selftest.hpp"
#include "tokenmask/synthetic.hpp"

namespace {

using namespace tokenmask;

// "640" means square, "640x480" sets both extents.
void parse_size(const std::string& text, std::int64_t& h, std::int64_t& w) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) {
      h = w = std::stoll(text);
    } else {
      h = std::stoll(text.substr(0, x));
      w = std::stoll(text.substr(x + 1));
    }
  } catch (const std::exception&) {
    throw config_error("cannot parse size '" + text + "' (expected N or HxW)");
  }
  if (h < 1 || w < 1) throw config_error("size extents must be positive");
}

void emit(const std::vector<BenchResult>& results, const std::string& format,
          const std::string& out) {
  const ReportFormat fmt = report_format_from_string(format);
  if (out.empty()) {
    std::cout << (fmt == ReportFormat::kJson ? report_json(results) : report_csv(results));
  } else {
    write_report(results, fmt, out);
    std::cout << "wrote " << out << "\n";
  }
}

void print_timing_summary(const std::vector<BenchResult>& results) {
  for (const auto& r : results) {
    for (const auto& v : r.variants) {
      std::printf("%-10s %5ldx%-5ld q=%-4ld stride=%-2ld %-8s median %9.3f ms  %8.2f exec/s  %8.3f gflops\n",
                  r.config.preset.c_str(), static_cast<long>(r.config.image_h),
                  static_cast<long>(r.config.image_w), static_cast<long>(r.config.queries),
                  static_cast<long>(r.config.output_stride), to_string(v.upsample_location),
                  v.timing.median_ms, v.throughput,
                  static_cast<double>(v.cost.total_flops()) / 1e9);
    }
  }
}

int cmd_bench(const BenchConfig& cfg, const std::string& format, const std::string& out) {
  const BenchResult result = run_bench(cfg);
  print_timing_summary({result});
  emit({result}, format, out);
  return 0;
}

int cmd_sweep(BenchConfig base, const std::string& stride_preset, int threads,
              const std::string& format, const std::string& out_prefix) {
  const std::string ext = format == "csv" ? ".csv" : ".json";

  auto upsample_results = sweep_upsample(base, threads);
  print_timing_summary(upsample_results);
  emit(upsample_results, format, out_prefix + "_upsample" + ext);

  BenchConfig stride_base = base;
  stride_base.preset = stride_preset;
  auto stride_results = sweep_stride(stride_base, {1, 4, 8, 16}, threads);
  print_timing_summary(stride_results);
  emit(stride_results, format, out_prefix + "_stride" + ext);
  return 0;
}

int cmd_cost(const std::string& preset_name, const std::string& size,
             std::int64_t queries, const std::string& upsample, std::int64_t stride,
             const std::string& format, const std::string& out) {
  const BackbonePreset& preset = preset_by_name(preset_name);
  HeadConfig cfg;
  cfg.upsample_location = upsample_location_from_string(upsample);
  cfg.output_stride = stride;
  parse_size(size, cfg.image_h, cfg.image_w);
  cfg.patch = preset.patch;
  cfg.validate();

  const CostReport report = head_cost(cfg, preset, queries);
  const std::string text =
      report_format_from_string(format) == ReportFormat::kCsv ? report.to_csv()
                                                              : report.to_json() + "\n";
  std::cout << text;
  std::cout << "backbone_gflops_modeled: "
            << static_cast<double>(backbone_cost(preset, cfg.image_h, cfg.image_w, queries,
                                                 default_query_blocks(preset))) /
                   1e9
            << "\n";
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot open '" + out + "' for writing");
    f << text;
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

// Builds a structured scene instead of raw noise: queries are orthonormal
// prototypes, each patch cell belongs to its nearest of a few random seeds
// on the grid, and a constant bias channel pushes non-owner affinities well
// below zero. Decoding then produces actual segments.
struct DemoScene {
  Tensor tokens;        // [1, N, C]
  Tensor queries;       // [1, Qn, C]
  Tensor class_logits;  // [1, Qn, K+1]
};

DemoScene build_demo_scene(std::uint64_t seed, const HeadConfig& cfg, std::int64_t queries,
                           std::int64_t categories) {
  const std::int64_t C = 64;
  const std::int64_t N = cfg.token_count();
  std::mt19937_64 rng(seed);

  // Random directions, Gram-Schmidt over channels 1..C-1; channel 0 is bias.
  Tensor proto({queries, C});
  for (std::int64_t q = 0; q < queries; ++q) {
    for (std::int64_t c = 1; c < C; ++c) {
      proto.at(q, c) = static_cast<float>(uniform_draw(rng, -1.0, 1.0));
    }
    for (std::int64_t p = 0; p < q; ++p) {
      double dot = 0.0;
      for (std::int64_t c = 1; c < C; ++c) dot += proto.at(q, c) * proto.at(p, c);
      for (std::int64_t c = 1; c < C; ++c)
        proto.at(q, c) -= static_cast<float>(dot) * proto.at(p, c);
    }
    double norm = 0.0;
    for (std::int64_t c = 1; c < C; ++c) norm += proto.at(q, c) * proto.at(q, c);
    norm = std::sqrt(std::max(norm, 1e-12));
    for (std::int64_t c = 1; c < C; ++c)
      proto.at(q, c) = static_cast<float>(proto.at(q, c) / norm);
  }

  // Nearest-seed ownership on the patch grid.
  const std::int64_t gh = cfg.grid_h(), gw = cfg.grid_w();
  std::vector<std::pair<double, double>> centers;
  for (std::int64_t q = 0; q < queries; ++q) {
    centers.emplace_back(uniform_draw(rng, 0.0, static_cast<double>(gh)),
                         uniform_draw(rng, 0.0, static_cast<double>(gw)));
  }
  Tensor tokens({1, N, C});
  for (std::int64_t y = 0; y < gh; ++y) {
    for (std::int64_t x = 0; x < gw; ++x) {
      std::int64_t owner = 0;
      double best = 1e300;
      for (std::int64_t q = 0; q < queries; ++q) {
        const double dy = centers[static_cast<std::size_t>(q)].first - (y + 0.5);
        const double dx = centers[static_cast<std::size_t>(q)].second - (x + 0.5);
        const double d = dy * dy + dx * dx;
        if (d < best) {
          best = d;
          owner = q;
        }
      }
      const std::int64_t n = y * gw + x;
      tokens.at(0, n, 0) = 1.0f;  // bias channel
      for (std::int64_t c = 1; c < C; ++c) {
        tokens.at(0, n, c) = 6.0f * proto.at(owner, c) +
                             static_cast<float>(uniform_draw(rng, -0.3, 0.3));
      }
    }
  }

  // Query embeddings: own prototype plus a -3 bias, so affinities land near
  // +3 on owned cells and -3 elsewhere. A trailing slice of the queries is
  // classified no-object to exercise query dropping.
  Tensor qv({1, queries, C});
  Tensor cls({1, queries, categories + 1});
  for (std::int64_t q = 0; q < queries; ++q) {
    qv.at(0, q, 0) = -3.0f;
    for (std::int64_t c = 1; c < C; ++c) qv.at(0, q, c) = proto.at(q, c);
    const bool no_object = q >= queries - queries / 4;
    const std::int64_t label = no_object ? categories : q % categories;
    for (std::int64_t k = 0; k <= categories; ++k) {
      cls.at(0, q, k) = k == label ? 4.0f : 0.0f;
    }
  }
  return DemoScene{std::move(tokens), std::move(qv), std::move(cls)};
}

int cmd_decode_demo(std::uint64_t seed, const std::string& size, std::int64_t queries,
                    std::int64_t categories, std::int64_t stride, const std::string& out_dir) {
  HeadConfig cfg;
  cfg.upsample_location = UpsampleLocation::kLogit;
  cfg.output_stride = stride;
  parse_size(size, cfg.image_h, cfg.image_w);
  cfg.patch = 16;
  cfg.validate();
  if (queries < 1 || categories < 1) throw config_error("queries and classes must be >= 1");

  DemoScene scene = build_demo_scene(seed, cfg, queries, categories);
  Tensor mq = project_queries(QuerySet(scene.queries), MaskProjection::identity(64));
  Tensor masks4 = token_space_head(scene.tokens, mq, cfg);
  Tensor masks = slice_batch(masks4, 0);
  Tensor classes = slice_batch(scene.class_logits, 0);

  // Mark the lower half of the categories as stuff for the demo.
  std::vector<std::uint8_t> thing_flags(static_cast<std::size_t>(categories), 1);
  for (std::int64_t k = 0; k < categories / 2; ++k) thing_flags[static_cast<std::size_t>(k)] = 0;

  const SemanticMap sem = semantic_decode(masks, classes);
  const PanopticMap pan = panoptic_decode(masks, classes, DecodeThresholds{}, thing_flags);
  const auto instances = instance_decode(masks, classes, std::min<std::int64_t>(queries, 5));

  std::int64_t void_pixels = 0;
  for (auto id : pan.segment_id) void_pixels += id == 0 ? 1 : 0;

  std::printf("decoded %ldx%ld grid from %ld queries over %ld categories (seed %llu)\n",
              static_cast<long>(sem.h), static_cast<long>(sem.w), static_cast<long>(queries),
              static_cast<long>(categories), static_cast<unsigned long long>(seed));
  std::printf("panoptic: %zu segments, %ld void pixels\n", pan.segments.size(),
              static_cast<long>(void_pixels));
  for (const auto& seg : pan.segments) {
    std::printf("  segment %d: category %d, %s, area %ld\n", seg.id, seg.category,
                seg.is_thing ? "thing" : "stuff", static_cast<long>(seg.area));
  }
  std::printf("instances (top %zu):\n", instances.size());
  for (const auto& inst : instances) {
    std::int64_t area = 0;
    for (auto b : inst.mask) area += b;
    std::printf("  category %d score %.4f area %ld\n", inst.category, inst.score,
                static_cast<long>(area));
  }
  const PqResult self_pq = pq_metric(pan, pan);
  std::printf("self PQ/SQ/RQ: %.3f/%.3f/%.3f over %ld categories\n", self_pq.pq, self_pq.sq,
              self_pq.rq, static_cast<long>(self_pq.num_defined));

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const auto sem_path = std::filesystem::path(out_dir) / "semantic.json";
    const auto pan_path = std::filesystem::path(out_dir) / "panoptic.json";
    std::ofstream(sem_path) << semantic_to_json(sem) << "\n";
    std::ofstream(pan_path) << panoptic_to_json(pan) << "\n";
    std::printf("wrote %s and %s\n", sem_path.c_str(), pan_path.c_str());
  }
  return 0;
}

int cmd_selftest(std::uint64_t seed) {
  int failures = 0;
  for (const auto& c : run_selftest(seed)) {
    std::printf("[%s] %-34s %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
    failures += c.passed ? 0 : 1;
  }
  if (failures > 0) {
    std::fprintf(stderr, "%d selftest case(s) failed\n", failures);
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query-based segmentation mask heads: token-space vs image-space "
               "benchmarking, decoding, and cost modeling"};
  app.require_subcommand(1);

  std::string preset = "vit-tiny";
  std::string size = "640";
  std::int64_t queries = 200;
  std::string upsample;
  std::int64_t stride = 4;
  std::uint64_t seed = 0;
  int reps = 5;
  int warmup = 1;
  std::string format = "json";
  std::string out;
  std::string precision = "f32";
  int threads = 1;

  auto add_geometry = [&](CLI::App* cmd) {
    cmd->add_option("--preset", preset, "backbone preset (vit-tiny|vit-small|vit-base|vit-large)");
    cmd->add_option("--size", size, "input resolution, N or HxW");
    cmd->add_option("--queries", queries, "query count");
    cmd->add_option("--stride", stride, "output stride (1|4|8|16)");
  };

  CLI::App* bench = app.add_subcommand("bench", "time one configuration, both heads by default");
  add_geometry(bench);
  bench->add_option("--upsample", upsample, "single variant (feature|logit|none); default both");
  bench->add_option("--seed", seed, "PRNG seed");
  bench->add_option("--reps", reps, "timed repetitions (>= 3)");
  bench->add_option("--warmup", warmup, "warmup executions");
  bench->add_option("--precision", precision, "f32|f64");
  bench->add_option("--format", format, "json|csv");
  bench->add_option("--out", out, "report path (stdout when omitted)");

  std::string stride_preset = "vit-small";
  CLI::App* sweep = app.add_subcommand(
      "sweep", "preset x upsample table and output-stride table, written as two reports");
  add_geometry(sweep);
  sweep->add_option("--stride-preset", stride_preset, "preset for the stride sweep");
  sweep->add_option("--seed", seed, "PRNG seed");
  sweep->add_option("--reps", reps, "timed repetitions (>= 3)");
  sweep->add_option("--warmup", warmup, "warmup executions");
  sweep->add_option("--threads", threads, "parallel sweep workers");
  sweep->add_option("--format", format, "json|csv");
  std::string out_prefix = "sweep";
  sweep->add_option("--out", out_prefix, "report path prefix");

  CLI::App* cost = app.add_subcommand("cost", "analytical per-stage cost report");
  add_geometry(cost);
  std::string cost_upsample = "logit";
  cost->add_option("--upsample", cost_upsample, "feature|logit|none");
  cost->add_option("--format", format, "json|csv");
  cost->add_option("--out", out, "also write the report here");

  CLI::App* demo = app.add_subcommand("decode-demo",
                                      "decode synthetic head outputs into all three map kinds");
  demo->add_option("--seed", seed, "PRNG seed");
  std::string demo_size = "128";
  demo->add_option("--size", demo_size, "input resolution, N or HxW");
  std::int64_t demo_queries = 12;
  demo->add_option("--queries", demo_queries, "query count");
  std::int64_t demo_categories = 6;
  demo->add_option("--classes", demo_categories, "category count (without no-object)");
  demo->add_option("--stride", stride, "output stride (1|4|8|16)");
  demo->add_option("--out", out, "directory for JSON maps");

  CLI::App* selftest = app.add_subcommand("selftest", "internal consistency checks");
  selftest->add_option("--seed", seed, "PRNG seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (bench->parsed()) {
      BenchConfig cfg;
      cfg.preset = preset;
      parse_size(size, cfg.image_h, cfg.image_w);
      cfg.queries = queries;
      cfg.output_stride = stride;
      cfg.repetitions = reps;
      cfg.warmup = warmup;
      cfg.seed = seed;
      cfg.precision = precision == "f64" ? Precision::kFloat64 : Precision::kFloat32;
      if (!upsample.empty()) {
        cfg.variants = {upsample_location_from_string(upsample)};
      }
      return cmd_bench(cfg, format, out);
    }
    if (sweep->parsed()) {
      BenchConfig base;
      base.preset = preset;
      parse_size(size, base.image_h, base.image_w);
      base.queries = queries;
      base.output_stride = stride;
      base.repetitions = reps;
      base.warmup = warmup;
      base.seed = seed;
      return cmd_sweep(base, stride_preset, threads, format, out_prefix);
    }
    if (cost->parsed()) {
      return cmd_cost(preset, size, queries, cost_upsample, stride, format, out);
    }
    if (demo->parsed()) {
      return cmd_decode_demo(seed, demo_size, demo_queries, demo_categories, stride, out);
    }
    if (selftest->parsed()) {
      return cmd_selftest(seed);
    }
  } catch (const config_error& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const shape_error& e) {
    std::fprintf(stderr, "shape error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
