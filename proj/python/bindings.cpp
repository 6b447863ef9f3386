#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tokenmask/bench.hpp"
#include "tokenmask/cost_model.hpp"
#include "tokenmask/decode.hpp"
#include "tokenmask/heads.hpp"
#include "tokenmask/selftest.hpp"
#include "tokenmask/synthetic.hpp"

namespace py = pybind11;
using namespace tokenmask;

namespace {

Tensor tensor_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<std::size_t>(i)] = a.shape(i);
  std::vector<float> data(a.data(), a.data() + a.size());
  return Tensor(std::move(shape), std::move(data));
}

py::array_t<float> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::array_t<std::int32_t> grid_array(const std::vector<std::int32_t>& grid, std::int64_t h,
                                     std::int64_t w) {
  py::array_t<std::int32_t> out({static_cast<py::ssize_t>(h), static_cast<py::ssize_t>(w)});
  std::copy(grid.begin(), grid.end(), out.mutable_data());
  return out;
}

py::dict cost_report_dict(const CostReport& r) {
  py::dict d;
  d["preset"] = r.preset;
  d["head"] = to_string(r.head);
  d["upsample_location"] = to_string(r.upsample_location);
  d["output_stride"] = r.output_stride;
  d["queries"] = r.queries;
  py::list stages;
  for (const auto& s : r.stages) {
    py::dict sd;
    sd["name"] = s.name;
    sd["flops"] = s.flops;
    sd["bytes_read"] = s.bytes_read;
    sd["bytes_written"] = s.bytes_written;
    sd["peak_activation_bytes"] = s.peak_activation_bytes;
    stages.append(sd);
  }
  d["stages"] = stages;
  d["total_flops"] = r.total_flops();
  d["peak_activation_bytes"] = r.peak_activation_bytes();
  return d;
}

py::dict panoptic_dict(const PanopticMap& map) {
  py::dict d;
  d["segment_id"] = grid_array(map.segment_id, map.h, map.w);
  py::list segs;
  for (const auto& s : map.segments) {
    py::dict sd;
    sd["id"] = s.id;
    sd["category"] = s.category;
    sd["is_thing"] = s.is_thing;
    sd["area"] = s.area;
    segs.append(sd);
  }
  d["segments"] = segs;
  return d;
}

HeadConfig make_config(const std::string& upsample, std::int64_t stride, std::int64_t image_h,
                       std::int64_t image_w, std::int64_t patch) {
  HeadConfig cfg;
  cfg.upsample_location = upsample_location_from_string(upsample);
  cfg.output_stride = stride;
  cfg.image_h = image_h;
  cfg.image_w = image_w;
  cfg.patch = patch;
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Token-space and image-space mask heads with decoding and cost models";

  py::register_exception<shape_error>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<config_error>(m, "ConfigError", PyExc_ValueError);

  m.def(
      "gemm",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& b) {
        return array_from_tensor(gemm(tensor_from_array(a), tensor_from_array(b)));
      },
      py::arg("a"), py::arg("b"),
      "Batched GEMM over [B,P,R] x [B,R,S].");

  m.def(
      "bilinear_resize",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& x,
         std::int64_t dst_h, std::int64_t dst_w) {
        const Tensor t = tensor_from_array(x);
        if (t.rank() != 4) throw shape_error("bilinear_resize expects [B,Ch,H,W]");
        ResamplePlan plan{t.dim(2), t.dim(3), dst_h, dst_w, t.dim(1)};
        return array_from_tensor(bilinear_resize(t, plan));
      },
      py::arg("x"), py::arg("dst_h"), py::arg("dst_w"),
      "Half-pixel bilinear resampling of [B,Ch,H,W].");

  m.def(
      "tokens_to_grid",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& t, std::int64_t hp,
         std::int64_t wp) { return array_from_tensor(tokens_to_grid(tensor_from_array(t), hp, wp)); },
      py::arg("tokens"), py::arg("hp"), py::arg("wp"));

  m.def(
      "scores_to_grid",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& l, std::int64_t hp,
         std::int64_t wp) { return array_from_tensor(scores_to_grid(tensor_from_array(l), hp, wp)); },
      py::arg("scores"), py::arg("hp"), py::arg("wp"));

  m.def(
      "project_queries",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& queries,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& weight,
         const std::optional<py::array_t<float, py::array::c_style | py::array::forcecast>>&
             bias) {
        MaskProjection proj{tensor_from_array(weight), std::nullopt};
        if (bias) proj.bias = tensor_from_array(*bias);
        return array_from_tensor(project_queries(QuerySet(tensor_from_array(queries)), proj));
      },
      py::arg("queries"), py::arg("weight"), py::arg("bias") = py::none());

  m.def(
      "token_scores",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& tokens,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& mq) {
        return array_from_tensor(token_scores(tensor_from_array(tokens), tensor_from_array(mq)));
      },
      py::arg("tokens"), py::arg("mask_embeddings"),
      "Query-token affinities [B,Qn,N] from one batched GEMM.");

  m.def(
      "token_space_head",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& tokens,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& mq,
         const std::string& upsample, std::int64_t stride, std::int64_t image_h,
         std::int64_t image_w, std::int64_t patch) {
        return array_from_tensor(token_space_head(
            tensor_from_array(tokens), tensor_from_array(mq),
            make_config(upsample, stride, image_h, image_w, patch)));
      },
      py::arg("tokens"), py::arg("mask_embeddings"), py::arg("upsample") = "logit",
      py::arg("stride") = 4, py::arg("image_h") = 640, py::arg("image_w") = 640,
      py::arg("patch") = 16);

  m.def(
      "image_space_head",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& tokens,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& mq,
         const std::string& upsample, std::int64_t stride, std::int64_t image_h,
         std::int64_t image_w, std::int64_t patch) {
        return array_from_tensor(image_space_head(
            tensor_from_array(tokens), tensor_from_array(mq),
            make_config(upsample, stride, image_h, image_w, patch)));
      },
      py::arg("tokens"), py::arg("mask_embeddings"), py::arg("upsample") = "feature",
      py::arg("stride") = 4, py::arg("image_h") = 640, py::arg("image_w") = 640,
      py::arg("patch") = 16);

  m.def(
      "semantic_decode",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& masks,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& classes) {
        const SemanticMap map = semantic_decode(tensor_from_array(masks), tensor_from_array(classes));
        return grid_array(map.category, map.h, map.w);
      },
      py::arg("masks"), py::arg("classes"),
      "Per-pixel categories from [Qn,H,W] mask logits and [Qn,K+1] class logits.");

  m.def(
      "panoptic_decode",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& masks,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& classes,
         double tau_cls, double tau_mask, double tau_overlap, std::int64_t min_area,
         const std::vector<std::uint8_t>& thing_flags) {
        DecodeThresholds th{tau_cls, tau_mask, tau_overlap, min_area};
        return panoptic_dict(
            panoptic_decode(tensor_from_array(masks), tensor_from_array(classes), th, thing_flags));
      },
      py::arg("masks"), py::arg("classes"), py::arg("tau_cls") = 0.5, py::arg("tau_mask") = 0.5,
      py::arg("tau_overlap") = 0.8, py::arg("min_area") = 0,
      py::arg("thing_flags") = std::vector<std::uint8_t>{});

  m.def(
      "instance_decode",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& masks,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& classes,
         std::int64_t top_k, double tau_mask) {
        const Tensor m64 = tensor_from_array(masks);
        auto preds = instance_decode(m64, tensor_from_array(classes), top_k, tau_mask);
        py::list out;
        for (const auto& p : preds) {
          py::dict d;
          d["category"] = p.category;
          d["score"] = p.score;
          py::array_t<std::uint8_t> mask(
              {static_cast<py::ssize_t>(m64.dim(1)), static_cast<py::ssize_t>(m64.dim(2))});
          std::copy(p.mask.begin(), p.mask.end(), mask.mutable_data());
          d["mask"] = mask;
          out.append(d);
        }
        return out;
      },
      py::arg("masks"), py::arg("classes"), py::arg("top_k"), py::arg("tau_mask") = 0.5);

  m.def(
      "pq_metric",
      [](const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& pred_cats,
         const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& gt,
         const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& gt_cats) {
        const auto build = [](const py::array_t<std::int32_t, py::array::c_style |
                                                                  py::array::forcecast>& grid,
                              const py::array_t<std::int32_t, py::array::c_style |
                                                                  py::array::forcecast>& cats) {
          if (grid.ndim() != 2) throw shape_error("pq_metric grids must be 2-D");
          PanopticMap map;
          map.h = grid.shape(0);
          map.w = grid.shape(1);
          map.segment_id.assign(grid.data(), grid.data() + grid.size());
          std::map<std::int32_t, std::int64_t> areas;
          for (auto id : map.segment_id) {
            if (id != 0) ++areas[id];
          }
          std::int64_t i = 0;
          for (const auto& [id, area] : areas) {
            if (i >= cats.size()) throw shape_error("pq_metric: one category per segment id");
            map.segments.push_back({id, cats.data()[i], true, area});
            ++i;
          }
          if (i != cats.size()) throw shape_error("pq_metric: one category per segment id");
          return map;
        };
        const PqResult r = pq_metric(build(pred, pred_cats), build(gt, gt_cats));
        py::dict d;
        d["pq"] = r.pq;
        d["sq"] = r.sq;
        d["rq"] = r.rq;
        d["num_defined"] = r.num_defined;
        return d;
      },
      py::arg("pred_segments"), py::arg("pred_categories"), py::arg("gt_segments"),
      py::arg("gt_categories"),
      "PQ/SQ/RQ from segment-id grids (0 = void) with per-id categories in "
      "ascending id order.");

  m.def(
      "miou_metric",
      [](const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& gt,
         std::int32_t num_classes) {
        if (pred.ndim() != 2 || gt.ndim() != 2) throw shape_error("miou grids must be 2-D");
        SemanticMap p{pred.shape(0), pred.shape(1),
                      {pred.data(), pred.data() + pred.size()}};
        SemanticMap g{gt.shape(0), gt.shape(1), {gt.data(), gt.data() + gt.size()}};
        return miou_metric(p, g, num_classes);
      },
      py::arg("pred"), py::arg("gt"), py::arg("num_classes"));

  m.def(
      "head_cost",
      [](const std::string& preset, const std::string& upsample, std::int64_t stride,
         std::int64_t image_h, std::int64_t image_w, std::int64_t queries, std::int64_t batch,
         std::int64_t bytes_per_scalar) {
        const BackbonePreset& p = preset_by_name(preset);
        const HeadConfig cfg = make_config(upsample, stride, image_h, image_w, p.patch);
        return cost_report_dict(head_cost(cfg, p, queries, batch, bytes_per_scalar));
      },
      py::arg("preset"), py::arg("upsample") = "logit", py::arg("stride") = 4,
      py::arg("image_h") = 640, py::arg("image_w") = 640, py::arg("queries") = 200,
      py::arg("batch") = 1, py::arg("bytes_per_scalar") = 4);

  m.def(
      "backbone_cost",
      [](const std::string& preset, std::int64_t image_h, std::int64_t image_w,
         std::int64_t queries, std::optional<std::int64_t> query_blocks) {
        const BackbonePreset& p = preset_by_name(preset);
        return backbone_cost(p, image_h, image_w, queries,
                             query_blocks ? *query_blocks : default_query_blocks(p));
      },
      py::arg("preset"), py::arg("image_h") = 640, py::arg("image_w") = 640,
      py::arg("queries") = 200, py::arg("query_blocks") = py::none());

  m.def(
      "peak_memory",
      [](const std::string& preset, const std::string& upsample, std::int64_t stride,
         std::int64_t image_h, std::int64_t image_w, std::int64_t queries,
         std::int64_t bytes_per_scalar) {
        const BackbonePreset& p = preset_by_name(preset);
        const HeadConfig cfg = make_config(upsample, stride, image_h, image_w, p.patch);
        return peak_memory(cfg, p, queries, bytes_per_scalar);
      },
      py::arg("preset"), py::arg("upsample") = "logit", py::arg("stride") = 4,
      py::arg("image_h") = 640, py::arg("image_w") = 640, py::arg("queries") = 200,
      py::arg("bytes_per_scalar") = 4);

  m.def(
      "gen_synthetic",
      [](std::uint64_t seed, std::int64_t batch, std::int64_t tokens, std::int64_t channels,
         std::int64_t queries, std::int64_t categories) {
        auto in = gen_synthetic<float>(seed, batch, tokens, channels, queries, categories);
        py::dict d;
        d["tokens"] = array_from_tensor(in.tokens);
        d["queries"] = array_from_tensor(in.queries.values);
        d["projection_weight"] = array_from_tensor(in.projection.weight);
        d["projection_bias"] = array_from_tensor(*in.projection.bias);
        d["class_logits"] = array_from_tensor(in.class_logits);
        return d;
      },
      py::arg("seed") = 0, py::arg("batch") = 1, py::arg("tokens") = 1600,
      py::arg("channels") = 192, py::arg("queries") = 200, py::arg("categories") = 8);

  m.def("selftest", [](std::uint64_t seed) {
    py::list out;
    for (const auto& c : run_selftest(seed)) {
      py::dict d;
      d["name"] = c.name;
      d["passed"] = c.passed;
      d["detail"] = c.detail;
      out.append(d);
    }
    return out;
  }, py::arg("seed") = 0);

  m.def("presets", []() {
    py::list out;
    for (const auto& p : backbone_presets()) {
      py::dict d;
      d["name"] = p.name;
      d["embed_dim"] = p.embed_dim;
      d["depth"] = p.depth;
      d["heads"] = p.heads;
      d["patch"] = p.patch;
      out.append(d);
    }
    return out;
  });

#ifdef TOKENMASK_VERSION
  m.attr("__version__") = TOKENMASK_VERSION;
#else
  m.attr("__version__") = "dev";
#endif
}
