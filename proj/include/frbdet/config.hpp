#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "frbdet/augment.hpp"
#include "frbdet/image.hpp"
#include "frbdet/model.hpp"

namespace frbdet {

// Flat key=value configuration file; '#' starts a comment.
using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r\n");
      const auto e = s.find_last_not_of(" \t\r\n");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = value;
  }
  return kv;
}

inline KeyValues load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path);
  return parse_key_values(in);
}

namespace detail {

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

inline std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << v[i];
  }
  return os.str();
}

}  // namespace detail

struct OptimizerConfig {
  double lr = 0.002;          // toy-scale default; full-scale 0.01 diverges on tiny corpora
  double momentum = 0.9;
  long decay_every = 15000;   // learning rate divided by decay_factor per window
  double decay_factor = 10.0;
  double grad_clip = 0.0;     // 0 disables
};

struct GeometryConfig {
  double shrink_ratio = 0.3;
  double score_threshold = 0.8;
  double nms_merge_iou = 0.5;
  double nms_final_iou = 0.2;
  double min_box_area = 4.0;
  std::string geometry = "rbox";  // rbox | quad decode route
};

struct RunConfig {
  ModelConfig model = ModelConfig::toy();
  OptimizerConfig optimizer;
  GeometryConfig geometry;
  CurriculumSchedule schedule = CurriculumSchedule::default_schedule();
  LossWeights loss_weights;
  std::string score_loss = "dice";  // dice | bce
  std::string manifest;
  std::string checkpoint_dir = "checkpoints";
  long iterations = 500;
  int batch_size = 1;
  long checkpoint_every = 250;
  long log_every = 1;
  std::uint64_t seed = 42;

  void validate() const {
    if (iterations < 0 || batch_size < 1) throw DataError("config: bad iterations/batch_size");
    if (optimizer.lr <= 0 || optimizer.momentum < 0 || optimizer.momentum >= 1)
      throw DataError("config: optimizer params out of range");
    if (optimizer.decay_every < 1 || optimizer.decay_factor <= 1)
      throw DataError("config: lr decay params out of range");
    if (geometry.shrink_ratio < 0 || geometry.shrink_ratio >= 0.5)
      throw DataError("config: shrink_ratio outside [0, 0.5)");
    if (geometry.score_threshold <= 0 || geometry.score_threshold >= 1)
      throw DataError("config: score_threshold outside (0,1)");
    if (loss_weights.lambda_g <= 0 || loss_weights.lambda_theta <= 0)
      throw DataError("config: loss weights must be positive");
    if (score_loss != "dice" && score_loss != "bce") throw DataError("config: unknown score_loss");
    if (geometry.geometry != "rbox" && geometry.geometry != "quad")
      throw DataError("config: geometry must be rbox or quad");
    schedule.validate();
  }
};

// ---------------------------------------------------------------------------
// Key=value (de)serialization shared by config files and checkpoint headers
// ---------------------------------------------------------------------------

inline void model_config_to_kv(const ModelConfig& m, KeyValues& kv) {
  kv["orientations"] = std::to_string(m.gabor.orientations);
  kv["scales"] = std::to_string(m.gabor.scales);
  kv["gabor_lambda"] = std::to_string(m.gabor.wavelength);
  kv["gabor_gamma"] = std::to_string(m.gabor.aspect);
  kv["gabor_sigma"] = std::to_string(m.gabor.bandwidth);
  kv["gabor_psi"] = std::to_string(m.gabor.phase);
  kv["enc_stem"] = std::to_string(m.encoder.stem_channels);
  kv["enc_c2"] = std::to_string(m.encoder.c2_channels);
  kv["enc_c3"] = std::to_string(m.encoder.c3_channels);
  kv["frb_rows"] = std::to_string(m.frb.rows);
  kv["frb_layers_per_row"] = std::to_string(m.frb.layers_per_row);
  kv["frb_kernels"] = detail::join_ints(m.frb.kernel_sizes);
  kv["frb_downsample"] = std::to_string(m.frb.downsample_factor);
  kv["mfrm_channels"] = std::to_string(m.mfrm.channels);
  kv["mfrm_out"] = std::to_string(m.mfrm.out_channels);
  kv["dec_channels"] = detail::join_ints(m.decoder.channels);
  kv["dec_upsample"] = detail::join_ints(m.decoder.upsample);
  kv["max_distance"] = std::to_string(m.max_distance);
  kv["norm"] = norm_mode_to_string(m.norm);
}

inline void model_config_from_kv(const KeyValues& kv, ModelConfig& m) {
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto* v = get("orientations")) m.gabor.orientations = std::stoi(*v);
  if (auto* v = get("scales")) m.gabor.scales = std::stoi(*v);
  if (auto* v = get("gabor_lambda")) m.gabor.wavelength = std::stod(*v);
  if (auto* v = get("gabor_gamma")) m.gabor.aspect = std::stod(*v);
  if (auto* v = get("gabor_sigma")) m.gabor.bandwidth = std::stod(*v);
  if (auto* v = get("gabor_psi")) m.gabor.phase = std::stod(*v);
  if (auto* v = get("enc_stem")) m.encoder.stem_channels = std::stoi(*v);
  if (auto* v = get("enc_c2")) m.encoder.c2_channels = std::stoi(*v);
  if (auto* v = get("enc_c3")) m.encoder.c3_channels = std::stoi(*v);
  if (auto* v = get("frb_rows")) m.frb.rows = std::stoi(*v);
  if (auto* v = get("frb_layers_per_row")) m.frb.layers_per_row = std::stoi(*v);
  if (auto* v = get("frb_kernels")) m.frb.kernel_sizes = detail::parse_int_list(*v);
  if (auto* v = get("frb_downsample")) m.frb.downsample_factor = std::stoi(*v);
  if (auto* v = get("mfrm_channels")) m.mfrm.channels = std::stoi(*v);
  if (auto* v = get("mfrm_out")) m.mfrm.out_channels = std::stoi(*v);
  if (auto* v = get("dec_channels")) m.decoder.channels = detail::parse_int_list(*v);
  if (auto* v = get("dec_upsample")) m.decoder.upsample = detail::parse_int_list(*v);
  if (auto* v = get("max_distance")) m.max_distance = std::stod(*v);
  if (auto* v = get("norm")) m.norm = norm_mode_from_string(*v);
  m.apply_norm_flag();
}

inline RunConfig run_config_from_kv(const KeyValues& kv) {
  RunConfig cfg;
  model_config_from_kv(kv, cfg.model);
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto* v = get("lr")) cfg.optimizer.lr = std::stod(*v);
  if (auto* v = get("momentum")) cfg.optimizer.momentum = std::stod(*v);
  if (auto* v = get("lr_decay_every")) cfg.optimizer.decay_every = std::stol(*v);
  if (auto* v = get("lr_decay_factor")) cfg.optimizer.decay_factor = std::stod(*v);
  if (auto* v = get("grad_clip")) cfg.optimizer.grad_clip = std::stod(*v);
  if (auto* v = get("shrink_ratio")) cfg.geometry.shrink_ratio = std::stod(*v);
  if (auto* v = get("score_thresh")) cfg.geometry.score_threshold = std::stod(*v);
  if (auto* v = get("nms_merge_iou")) cfg.geometry.nms_merge_iou = std::stod(*v);
  if (auto* v = get("nms_final_iou")) cfg.geometry.nms_final_iou = std::stod(*v);
  if (auto* v = get("min_box_area")) cfg.geometry.min_box_area = std::stod(*v);
  if (auto* v = get("geometry")) cfg.geometry.geometry = *v;
  if (auto* v = get("curriculum")) cfg.schedule = CurriculumSchedule::parse(*v);
  if (auto* v = get("lambda_g")) cfg.loss_weights.lambda_g = std::stod(*v);
  if (auto* v = get("lambda_theta")) cfg.loss_weights.lambda_theta = std::stod(*v);
  if (auto* v = get("score_loss")) cfg.score_loss = *v;
  if (auto* v = get("manifest")) cfg.manifest = *v;
  if (auto* v = get("checkpoint_dir")) cfg.checkpoint_dir = *v;
  if (auto* v = get("iterations")) cfg.iterations = std::stol(*v);
  if (auto* v = get("batch_size")) cfg.batch_size = std::stoi(*v);
  if (auto* v = get("checkpoint_every")) cfg.checkpoint_every = std::stol(*v);
  if (auto* v = get("log_every")) cfg.log_every = std::stol(*v);
  if (auto* v = get("seed")) cfg.seed = std::stoull(*v);
  cfg.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  return run_config_from_kv(load_key_values(path));
}

}  // namespace frbdet
