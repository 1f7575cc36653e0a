#pragma once

#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "frbdet/augment.hpp"
#include "frbdet/checkpoint.hpp"
#include "frbdet/config.hpp"
#include "frbdet/model.hpp"
#include "frbdet/optim.hpp"

namespace frbdet {

// Numerical failures (NaN loss) map to CLI exit code 3.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LossBreakdown {
  double total = 0.0;
  double score = 0.0;
  double rbox = 0.0;
  double quad = 0.0;
};

// Computes the detection loss for one sample and accumulates gradients into
// the model, scaled by `grad_scale` (1/batch for mean reduction).
inline LossBreakdown backprop_sample(DetectorModel& model, const HeadOutput& out,
                                     const GroundTruthMaps& gt, const RunConfig& cfg,
                                     double grad_scale) {
  LossBreakdown losses;
  HeadOutput grads;
  Tensor pos = gt.score;
  for (std::int64_t i = 0; i < pos.size(); ++i) pos[i] *= gt.mask[i];

  if (cfg.score_loss == "bce") {
    losses.score = balanced_bce_score_loss(out.score, gt.score, gt.mask, &grads.score);
  } else {
    losses.score = dice_score_loss(out.score, gt.score, gt.mask, &grads.score);
  }
  RBoxGeometry gt_rbox;
  gt_rbox.distances = gt.distances;
  gt_rbox.angle = gt.angle;
  RBoxGeometry rbox_grads;
  losses.rbox = rbox_loss(out.rbox, gt_rbox, pos, cfg.loss_weights.lambda_theta, &rbox_grads);
  losses.quad = quad_loss(out.quad, gt.quad, pos, gt.short_edge, &grads.quad);
  losses.total = total_loss(losses.score, losses.rbox, losses.quad, cfg.loss_weights);

  grads.score.scale_(grad_scale);
  grads.rbox.distances = rbox_grads.distances;
  grads.rbox.angle = rbox_grads.angle;
  grads.rbox.distances.scale_(cfg.loss_weights.lambda_g * grad_scale);
  grads.rbox.angle.scale_(cfg.loss_weights.lambda_g * grad_scale);
  grads.quad.scale_(cfg.loss_weights.lambda_g * grad_scale);
  model.backward(grads);
  return losses;
}

inline std::vector<LoadedSample> load_corpus(const RunConfig& cfg) {
  const auto records = load_manifest(cfg.manifest);
  std::vector<LoadedSample> samples;
  for (const auto& r : records) {
    LoadedSample s;
    s.image = load_image(r.image_path);
    if (s.image.dim(1) % 32 != 0 || s.image.dim(2) % 32 != 0)
      throw DataError("training image dims must be multiples of 32: " + r.image_path);
    s.polygons = load_icdar_gt(r.gt_path);
    s.record = r;
    s.record.difficulty = rank_difficulty(s.polygons, s.image);
    samples.push_back(std::move(s));
  }
  return samples;
}

struct TrainResult {
  double final_loss = 0.0;
  long iterations = 0;
  std::string last_checkpoint;
};

inline KeyValues checkpoint_config(const RunConfig& cfg) {
  KeyValues kv;
  model_config_to_kv(cfg.model, kv);
  kv["geometry"] = cfg.geometry.geometry;
  kv["score_thresh"] = std::to_string(cfg.geometry.score_threshold);
  kv["nms_merge_iou"] = std::to_string(cfg.geometry.nms_merge_iou);
  kv["nms_final_iou"] = std::to_string(cfg.geometry.nms_final_iou);
  kv["min_box_area"] = std::to_string(cfg.geometry.min_box_area);
  kv["shrink_ratio"] = std::to_string(cfg.geometry.shrink_ratio);
  return kv;
}

inline TrainResult train_model(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  ModelConfig mc = cfg.model;
  mc.apply_norm_flag();
  DetectorModel model(mc);
  model.init_params(cfg.seed);
  const int stride = model.output_stride();

  CurriculumSampler sampler(load_corpus(cfg), cfg.schedule, cfg.seed);
  SgdMomentum opt(cfg.optimizer);
  opt.attach(model.registry());
  std::filesystem::create_directories(cfg.checkpoint_dir);

  TrainResult result;
  const KeyValues snapshot = checkpoint_config(cfg);
  for (long t = 0; t < cfg.iterations; ++t) {
    const auto batch = sampler.batch(t, cfg.batch_size);
    model.zero_grads();
    LossBreakdown mean;
    for (const auto& sample : batch) {
      const HeadOutput out = model.forward(sample.image, /*train=*/true);
      const int mh = sample.image.dim(1) / stride;
      const int mw = sample.image.dim(2) / stride;
      const GroundTruthMaps gt = encode_ground_truth(sample.source->polygons, mh, mw, stride,
                                                     cfg.geometry.shrink_ratio);
      const LossBreakdown l =
          backprop_sample(model, out, gt, cfg, 1.0 / static_cast<double>(batch.size()));
      mean.total += l.total / batch.size();
      mean.score += l.score / batch.size();
      mean.rbox += l.rbox / batch.size();
      mean.quad += l.quad / batch.size();
    }
    if (!std::isfinite(mean.total)) {
      log << "iter " << t << " loss is not finite; offending batch:\n";
      for (const auto& sample : batch)
        log << "  " << sample.source->record.image_path << '\n';
      throw NumericalError("NaN loss at iteration " + std::to_string(t));
    }
    opt.step(model.registry(), t);
    if (cfg.log_every > 0 && (t % cfg.log_every == 0 || t + 1 == cfg.iterations)) {
      log << "iter " << t << " lr " << opt.learning_rate(t) << " loss " << mean.total << " (score "
          << mean.score << " rbox " << mean.rbox << " quad " << mean.quad << ")\n";
    }
    result.final_loss = mean.total;
    if (cfg.checkpoint_every > 0 && (t + 1) % cfg.checkpoint_every == 0 &&
        t + 1 != cfg.iterations) {
      const std::string path =
          cfg.checkpoint_dir + "/ckpt_" + std::to_string(t + 1) + ".frbdet";
      save_checkpoint(path, t + 1, snapshot, model.registry(), opt.state());
      result.last_checkpoint = path;
    }
  }
  const std::string final_path = cfg.checkpoint_dir + "/ckpt_final.frbdet";
  save_checkpoint(final_path, cfg.iterations, snapshot, model.registry(), opt.state());
  result.last_checkpoint = final_path;
  result.iterations = cfg.iterations;
  return result;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

struct LoadedModel {
  std::unique_ptr<DetectorModel> model;
  GeometryConfig geometry;
  long iteration = 0;
};

inline LoadedModel load_model(const std::string& ckpt_path) {
  const CheckpointData data = load_checkpoint(ckpt_path);
  ModelConfig mc;
  model_config_from_kv(data.config, mc);
  LoadedModel lm;
  lm.model = std::make_unique<DetectorModel>(mc);
  restore_params(data, lm.model->registry());
  lm.iteration = data.iteration;
  auto get = [&](const char* key) -> const std::string* {
    auto it = data.config.find(key);
    return it == data.config.end() ? nullptr : &it->second;
  };
  if (auto* v = get("geometry")) lm.geometry.geometry = *v;
  if (auto* v = get("score_thresh")) lm.geometry.score_threshold = std::stod(*v);
  if (auto* v = get("nms_merge_iou")) lm.geometry.nms_merge_iou = std::stod(*v);
  if (auto* v = get("nms_final_iou")) lm.geometry.nms_final_iou = std::stod(*v);
  if (auto* v = get("min_box_area")) lm.geometry.min_box_area = std::stod(*v);
  if (auto* v = get("shrink_ratio")) lm.geometry.shrink_ratio = std::stod(*v);
  return lm;
}

// Full pipeline: encode -> FRB -> MFRM -> decode -> head -> geometry -> NMS.
inline std::vector<DetectionBox> detect_boxes(DetectorModel& model, const Tensor& image,
                                              const GeometryConfig& geo) {
  const Tensor padded = pad_to_multiple(image, 32);
  const HeadOutput out = model.forward(padded, /*train=*/false);
  const int stride = model.output_stride();
  std::vector<DetectionBox> raw;
  if (geo.geometry == "quad") {
    raw = decode_quad(out.score, out.quad, geo.score_threshold, stride, geo.min_box_area);
  } else {
    raw = decode_rbox(out.score, out.rbox.distances, out.rbox.angle, geo.score_threshold, stride,
                      geo.min_box_area);
  }
  return locality_aware_nms(raw, geo.nms_merge_iou, geo.nms_final_iou);
}

}  // namespace frbdet
