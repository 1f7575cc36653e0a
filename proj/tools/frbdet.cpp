// frbdet — scene-text detector: training, inference, evaluation, synthetic
// data and augmentation previews. Exit codes: 0 success, 1 usage error,
// 2 data error, 3 numerical failure.

#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "frbdet/augment.hpp"
#include "frbdet/checkpoint.hpp"
#include "frbdet/config.hpp"
#include "frbdet/eval.hpp"
#include "frbdet/image.hpp"
#include "frbdet/train.hpp"

namespace fs = std::filesystem;
using namespace frbdet;

namespace {

int cmd_train(const std::string& config_path) {
  const RunConfig cfg = load_run_config(config_path);
  const TrainResult result = train_model(cfg, std::cout);
  std::cout << "training done: " << result.iterations << " iterations, final loss "
            << result.final_loss << "\ncheckpoint: " << result.last_checkpoint << "\n";
  return 0;
}

int cmd_detect(const std::string& ckpt, const std::string& image_path, const std::string& out_dir,
               double score_thresh, bool annotate, const std::string& geometry) {
  LoadedModel lm = load_model(ckpt);
  if (score_thresh > 0) lm.geometry.score_threshold = score_thresh;
  if (!geometry.empty()) lm.geometry.geometry = geometry;
  const Tensor image = load_image(image_path);
  const auto boxes = detect_boxes(*lm.model, image, lm.geometry);

  fs::create_directories(out_dir);
  const std::string stem = fs::path(image_path).stem().string();
  const std::string det_path = out_dir + "/" + stem + ".txt";
  save_detections(det_path, boxes);
  std::cout << boxes.size() << " detections -> " << det_path << "\n";
  if (annotate) {
    Tensor annotated = image;
    for (const auto& b : boxes) draw_polygon(annotated, b.v, 1.0, 0.0, 0.0);
    const std::string img_path = out_dir + "/" + stem + "_annotated.png";
    save_image(img_path, annotated);
    std::cout << "annotated image -> " << img_path << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& det_dir, const std::string& gt_dir, double iou, bool optimal) {
  const EvalReport r = evaluate_directories(det_dir, gt_dir, iou, optimal);
  std::cout << "matched " << r.matched << " / detections " << r.detections_counted << " / gts "
            << r.gt_counted << "\n";
  std::cout << "precision " << r.precision << "\nrecall " << r.recall << "\nfscore " << r.fscore
            << "\n";
  return 0;
}

int cmd_synth(int count, std::uint64_t seed, const std::string& out_dir, int size) {
  const auto records = generate_synthetic_dataset(count, size, seed, out_dir);
  std::cout << records.size() << " samples -> " << out_dir << "/manifest.tsv\n";
  return 0;
}

int cmd_augment(const std::string& config_path, const std::string& preview_dir, long iteration,
                int count) {
  const RunConfig cfg = load_run_config(config_path);
  CurriculumSampler sampler(load_corpus(cfg), cfg.schedule, cfg.seed);
  const auto& stage = cfg.schedule.stage_at(iteration);
  fs::create_directories(preview_dir);
  const auto batch = sampler.batch(iteration, count);
  std::ofstream listing(preview_dir + "/preview.txt");
  listing << "iteration " << iteration << " blur " << stage.blur_fraction << " mask "
          << stage.mask_fraction << " cutoff " << stage.difficulty_cutoff << "\n";
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::string path = preview_dir + "/aug_" + std::to_string(i) + ".png";
    save_image(path, batch[i].image);
    listing << path << "\t" << batch[i].source->record.image_path << "\tdifficulty "
            << batch[i].source->record.difficulty << "\n";
  }
  std::cout << batch.size() << " previews -> " << preview_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frbdet: Gabor-FRB scene text detector"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "train a model from a run config");
  std::string train_config;
  train->add_option("--config", train_config, "run config file")->required();

  auto* detect = app.add_subcommand("detect", "run detection on one image");
  std::string ckpt, image, out_dir = ".", geometry;
  double score_thresh = 0.0;
  bool annotate = false;
  detect->add_option("--ckpt", ckpt, "checkpoint file")->required();
  detect->add_option("--image", image, "input image (png/jpeg/ppm)")->required();
  detect->add_option("--out-dir", out_dir, "output directory");
  detect->add_option("--score-thresh", score_thresh, "score threshold override");
  detect->add_option("--geometry", geometry, "decode route: rbox or quad");
  detect->add_flag("--annotate", annotate, "write a box-overlaid image");

  auto* eval = app.add_subcommand("eval", "ICDAR-protocol evaluation");
  std::string det_dir, gt_dir;
  double iou = 0.5;
  bool optimal = false;
  eval->add_option("--det-dir", det_dir, "directory of detection files")->required();
  eval->add_option("--gt-dir", gt_dir, "directory of ground-truth files")->required();
  eval->add_option("--iou", iou, "IoU threshold (default 0.5)");
  eval->add_flag("--optimal", optimal, "use optimal bipartite matching instead of greedy");

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  int count = 20, size = 64;
  std::uint64_t seed = 7;
  std::string synth_out;
  synth->add_option("--count", count, "number of images")->required();
  synth->add_option("--seed", seed, "rng seed")->required();
  synth->add_option("--out-dir", synth_out, "output directory")->required();
  synth->add_option("--size", size, "image side length (multiple of 32)");

  auto* augment = app.add_subcommand("augment", "preview curriculum augmentations");
  std::string aug_config, preview_dir;
  long aug_iteration = 0;
  int aug_count = 4;
  augment->add_option("--config", aug_config, "run config file")->required();
  augment->add_option("--preview", preview_dir, "preview output directory")->required();
  augment->add_option("--iteration", aug_iteration, "schedule iteration to preview");
  augment->add_option("--count", aug_count, "number of preview samples");

  try {
    app.parse(argc, argv);
    if (*train) return cmd_train(train_config);
    if (*detect) return cmd_detect(ckpt, image, out_dir, score_thresh, annotate, geometry);
    if (*eval) return cmd_eval(det_dir, gt_dir, iou, optimal);
    if (*synth) {
      if (size < 32 || size % 32 != 0) throw DataError("--size must be a positive multiple of 32");
      return cmd_synth(count, seed, synth_out, size);
    }
    if (*augment) return cmd_augment(aug_config, preview_dir, aug_iteration, aug_count);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
