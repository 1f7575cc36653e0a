// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit code is the number of
// failed criteria.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "frbdet/augment.hpp"
#include "frbdet/checkpoint.hpp"
#include "frbdet/config.hpp"
#include "frbdet/eval.hpp"
#include "frbdet/geometry.hpp"
#include "frbdet/head.hpp"
#include "frbdet/mfrm.hpp"
#include "frbdet/model.hpp"
#include "frbdet/optim.hpp"
#include "frbdet/train.hpp"
#include "testutil.hpp"

using namespace frbdet;
using test::fd_compare;
using test::random_tensor;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

Quad axis_rect(double x0, double y0, double x1, double y1) {
  return {Point{x0, y0}, Point{x1, y0}, Point{x1, y1}, Point{x0, y1}};
}

Quad rect_quad(double cx, double cy, double hw, double hh, double angle) {
  RotatedRect r;
  r.center = {cx, cy};
  r.half_w = hw;
  r.half_h = hh;
  r.angle = angle;
  return rotated_rect_corners(r);
}

// ---------------------------------------------------------------------------
// 1. Full benchmark reproduction is out of scope by design
// ---------------------------------------------------------------------------

bool criterion_scope(std::string& detail) {
  detail = "full-scale benchmark training is out of scope; property-based criteria substitute";
  return true;
}

// ---------------------------------------------------------------------------
// 2. Gradient suite: analytic vs central finite differences, rel err < 1e-4
// ---------------------------------------------------------------------------

bool criterion_gradients(std::string& detail) {
  const double start = now_seconds();
  double worst = 0.0;
  std::ostringstream info;

  {  // gof_conv_forward w.r.t. canonical weights, bias and input
    GaborBankCache banks(GaborParams{});
    Rng rng(901);
    GofConv2d conv(2, 3, 3, 1, banks.get(3), 1);
    conv.init(rng);
    rng.fill_uniform(conv.b_, -0.3, 0.3);
    Tensor x = random_tensor({2, 4, 8, 8}, rng);
    const Tensor proj = random_tensor({3, 4, 8, 8}, rng);
    auto eval = [&]() { return test::dot(conv.forward(x), proj); };
    eval();
    conv.g_canonical_.fill(0.0);
    conv.gb_.fill(0.0);
    const Tensor gx = conv.backward(proj);
    worst = std::max(worst, fd_compare(eval, conv.canonical_, conv.g_canonical_));
    worst = std::max(worst, fd_compare(eval, conv.b_, conv.gb_));
    worst = std::max(worst, fd_compare(eval, x, gx));
    info << "gof " << worst;
  }
  {  // channel_attention
    Rng rng(902);
    ChannelAttention att(8);
    att.init(rng);
    rng.fill_uniform(att.gate_.b_, -0.5, 0.5);
    Tensor x = random_tensor({8, 8, 8}, rng);
    const Tensor proj = random_tensor({8, 8, 8}, rng);
    auto eval = [&]() { return test::dot(att.forward(x), proj); };
    eval();
    att.gate_.gw_.fill(0.0);
    att.gate_.gb_.fill(0.0);
    const Tensor gx = att.backward(proj);
    double w = fd_compare(eval, x, gx);
    w = std::max(w, fd_compare(eval, att.gate_.w_, att.gate_.gw_));
    w = std::max(w, fd_compare(eval, att.gate_.b_, att.gate_.gb_));
    worst = std::max(worst, w);
    info << " att " << w;
  }
  {  // irnn_forward; biases randomized so no pre-activation sits on the ReLU kink
    Rng rng(903);
    Irnn4Dir irnn(8);
    irnn.init(rng);
    for (int d = 0; d < 4; ++d) rng.fill_uniform(irnn.in_conv_[d].b_, -0.3, 0.3);
    rng.fill_uniform(irnn.out_conv_.b_, -0.3, 0.3);
    Tensor x = random_tensor({8, 6, 6}, rng);
    const Tensor proj = random_tensor({8, 6, 6}, rng);
    auto eval = [&]() { return test::dot(irnn.forward(x), proj); };
    eval();
    ParamRegistry reg;
    irnn.register_params(reg, "irnn");
    reg.zero_grads();
    const Tensor gx = irnn.backward(proj);
    double w = fd_compare(eval, x, gx);
    for (auto& e : reg.entries())
      if (e.trainable) w = std::max(w, fd_compare(eval, *e.value, *e.grad));
    worst = std::max(worst, w);
    info << " irnn " << w;
  }
  {  // crf_aggregate
    Rng rng(904);
    CrfAggregate crf(3, 4, 3);
    crf.init(rng);
    rng.fill_uniform(crf.compat_, -1.0, 1.0);
    std::vector<Tensor> feats;
    for (int i = 0; i < 3; ++i) feats.push_back(random_tensor({4, 6, 6}, rng));
    const Tensor proj = random_tensor({3, 6, 6}, rng);
    auto eval = [&]() { return test::dot(crf.forward(feats), proj); };
    eval();
    ParamRegistry reg;
    crf.register_params(reg, "crf");
    reg.zero_grads();
    const auto gf = crf.backward(proj);
    double w = 0.0;
    for (int i = 0; i < 3; ++i)
      w = std::max(w, fd_compare(eval, feats[static_cast<std::size_t>(i)],
                                 gf[static_cast<std::size_t>(i)]));
    for (auto& e : reg.entries())
      if (e.trainable) w = std::max(w, fd_compare(eval, *e.value, *e.grad));
    worst = std::max(worst, w);
    info << " crf " << w;
  }
  {  // score / rbox / quad / total losses
    Rng rng(905);
    Tensor pred = random_tensor({1, 8, 8}, rng, 0.05, 0.95);
    Tensor gt({1, 8, 8});
    for (std::int64_t i = 0; i < gt.size(); ++i) gt[i] = rng.uniform(0, 1) > 0.6 ? 1.0 : 0.0;
    const Tensor mask = Tensor::full({1, 8, 8}, 1.0);
    Tensor grad;
    auto eval_dice = [&]() { return dice_score_loss(pred, gt, mask); };
    dice_score_loss(pred, gt, mask, &grad);
    double w = fd_compare(eval_dice, pred, grad);
    auto eval_bce = [&]() { return balanced_bce_score_loss(pred, gt, mask); };
    balanced_bce_score_loss(pred, gt, mask, &grad);
    w = std::max(w, fd_compare(eval_bce, pred, grad));

    Tensor dp = random_tensor({4, 8, 8}, rng, 2.0, 10.0);
    Tensor ap = random_tensor({1, 8, 8}, rng, -0.6, 0.6);
    const Tensor dg = random_tensor({4, 8, 8}, rng, 2.0, 10.0);
    const Tensor ag = random_tensor({1, 8, 8}, rng, -0.6, 0.6);
    Tensor pos({1, 8, 8});
    for (std::int64_t i = 0; i < pos.size(); ++i) pos[i] = rng.uniform(0, 1) > 0.4 ? 1.0 : 0.0;
    RBoxGeometry p2{dp, ap}, g2{dg, ag}, rgrad;
    auto eval_rbox = [&]() { return rbox_loss(p2, g2, pos, 10.0); };
    rbox_loss(p2, g2, pos, 10.0, &rgrad);
    w = std::max(w, fd_compare(eval_rbox, p2.distances, rgrad.distances));
    w = std::max(w, fd_compare(eval_rbox, p2.angle, rgrad.angle));

    Tensor qp = random_tensor({8, 8, 8}, rng, -8, 8);
    const Tensor qg = random_tensor({8, 8, 8}, rng, -8, 8);
    const Tensor se = Tensor::full({1, 8, 8}, 6.0);
    Tensor qgrad;
    auto eval_quad = [&]() { return quad_loss(qp, qg, pos, se); };
    quad_loss(qp, qg, pos, se, &qgrad);
    w = std::max(w, fd_compare(eval_quad, qp, qgrad));

    // total loss gradient w.r.t. every head output channel at once
    LossWeights lw;
    lw.lambda_g = 0.7;
    Tensor tgrad_s, tgrad_q;
    RBoxGeometry tgrad_r;
    auto eval_total = [&]() {
      return total_loss(dice_score_loss(pred, gt, mask), rbox_loss(p2, g2, pos, lw.lambda_theta),
                        quad_loss(qp, qg, pos, se), lw);
    };
    dice_score_loss(pred, gt, mask, &tgrad_s);
    rbox_loss(p2, g2, pos, lw.lambda_theta, &tgrad_r);
    quad_loss(qp, qg, pos, se, &tgrad_q);
    tgrad_r.distances.scale_(lw.lambda_g);
    tgrad_r.angle.scale_(lw.lambda_g);
    tgrad_q.scale_(lw.lambda_g);
    w = std::max(w, fd_compare(eval_total, pred, tgrad_s));
    w = std::max(w, fd_compare(eval_total, p2.distances, tgrad_r.distances));
    w = std::max(w, fd_compare(eval_total, p2.angle, tgrad_r.angle));
    w = std::max(w, fd_compare(eval_total, qp, tgrad_q));
    worst = std::max(worst, w);
    info << " loss " << w;
  }

  const double secs = now_seconds() - start;
  std::ostringstream os;
  os << "max rel err " << worst << " (" << info.str() << "), " << secs << " s";
  detail = os.str();
  return worst < 1e-4 && secs < 120.0;
}

// ---------------------------------------------------------------------------
// 3. Oracle suite, each family on >= 100 randomized instances
// ---------------------------------------------------------------------------

bool criterion_oracles(std::string& detail) {
  const double start = now_seconds();
  std::ostringstream info;
  bool ok = true;

  {  // GOF convolution vs naive loops, diff < 1e-10, 100 instances
    GaborBankCache banks(GaborParams{});
    Rng rng(911);
    double worst = 0.0;
    for (int it = 0; it < 100; ++it) {
      const int ci = rng.uniform_int(1, 3), co = rng.uniform_int(1, 3);
      const int h = rng.uniform_int(5, 8), w = rng.uniform_int(5, 8);
      const int stride = rng.uniform_int(1, 2);
      GofConv2d conv(ci, co, 3, stride, banks.get(3), rng.uniform_int(0, 3));
      conv.init(rng);
      rng.fill_uniform(conv.b_, -0.5, 0.5);
      const Tensor x = random_tensor({ci, 4, h, w}, rng);
      const Tensor got = conv.forward(x);
      const Tensor ref =
          test::naive_gof_conv(x, conv.canonical_, *banks.get(3), conv.scale_, &conv.b_, stride, 1);
      worst = std::max(worst, max_abs_diff(got, ref));
    }
    info << "gofconv " << worst;
    ok = ok && worst < 1e-10;
  }
  {  // attention vs scalar oracle, diff < 1e-12, 100 instances
    Rng rng(912);
    double worst = 0.0;
    for (int it = 0; it < 100; ++it) {
      const int c = rng.uniform_int(2, 8);
      ChannelAttention att(c);
      att.init(rng);
      rng.fill_uniform(att.gate_.b_, -0.5, 0.5);
      const Tensor f = random_tensor({c, 4, 4}, rng);
      const Tensor y = att.forward(f);
      for (int cc = 0; cc < c; ++cc)
        for (int yy = 0; yy < 4; ++yy)
          for (int xx = 0; xx < 4; ++xx) {
            double pre = att.gate_.b_(cc);
            for (int i = 0; i < c; ++i) pre += att.gate_.w_(cc, i, 0, 0) * f(i, yy, xx);
            const double expect = f(cc, yy, xx) / (1.0 + std::exp(-pre));
            worst = std::max(worst, std::fabs(y(cc, yy, xx) - expect));
          }
    }
    info << " att " << worst;
    ok = ok && worst < 1e-12;
  }
  {  // IRNN identity-recurrence prefix sums, exact, 100 instances
    Rng rng(913);
    bool exact = true;
    for (int it = 0; it < 100; ++it) {
      const int h = rng.uniform_int(2, 6), w = rng.uniform_int(2, 6);
      Irnn4Dir irnn(4);
      for (int d = 0; d < 4; ++d) irnn.in_conv_[d].w_(0, 0, 0, 0) = 1.0;
      for (int c = 0; c < 4; ++c) irnn.out_conv_.w_(c, c, 0, 0) = 1.0;
      const Tensor x = random_tensor({4, h, w}, rng, 0.0, 1.0);
      const Tensor y = irnn.forward(x);
      for (int yy = 0; yy < h; ++yy) {
        double acc = 0.0;
        for (int xx = 0; xx < w; ++xx) {
          acc = x(0, yy, xx) + acc;
          if (y(0, yy, xx) != acc) exact = false;
        }
      }
      for (int xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (int yy = 0; yy < h; ++yy) {
          acc = x(2, yy, xx) + acc;
          if (y(2, yy, xx) != acc) exact = false;
        }
      }
    }
    info << " irnn " << (exact ? "exact" : "MISMATCH");
    ok = ok && exact;
  }
  {  // polygon IoU vs 1000x1000 raster oracle, abs err < 5e-3, 100 instances
    Rng rng(914);
    double worst = 0.0;
    for (int it = 0; it < 100; ++it) {
      const Quad a = rect_quad(rng.uniform(0.35, 0.65), rng.uniform(0.35, 0.65),
                               rng.uniform(0.12, 0.3), rng.uniform(0.08, 0.25),
                               rng.uniform(-0.8, 0.8));
      const Quad b = rect_quad(rng.uniform(0.35, 0.65), rng.uniform(0.35, 0.65),
                               rng.uniform(0.12, 0.3), rng.uniform(0.08, 0.25),
                               rng.uniform(-0.8, 0.8));
      const Quad ca = make_clockwise(a), cb = make_clockwise(b);
      std::int64_t in_a = 0, in_b = 0, in_both = 0;
      const int n = 1000;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const Point p{(j + 0.5) / n, (i + 0.5) / n};
          const bool pa = point_in_polygon(ca, p);
          const bool pb = point_in_polygon(cb, p);
          in_a += pa;
          in_b += pb;
          in_both += pa && pb;
        }
      const std::int64_t uni = in_a + in_b - in_both;
      const double slow = uni == 0 ? 0.0 : static_cast<double>(in_both) / uni;
      worst = std::max(worst, std::fabs(polygon_iou(a, b) - slow));
    }
    info << " iou " << worst;
    ok = ok && worst < 5e-3;
  }
  {  // locality-aware NMS pass 2 vs brute-force greedy NMS, exact, 100 instances
    Rng rng(915);
    bool exact = true;
    for (int inst = 0; inst < 100; ++inst) {
      std::vector<DetectionBox> boxes;
      for (int i = 0; i < 50; ++i) {
        DetectionBox b;
        b.v = rect_quad(rng.uniform(10, 90), rng.uniform(10, 90), rng.uniform(3, 12),
                        rng.uniform(2, 8), rng.uniform(-0.7, 0.7));
        b.score = rng.uniform(0.05, 0.95);
        boxes.push_back(b);
      }
      const double merge_iou = 0.6, final_iou = 0.3;
      // independent pass-1 accumulator + brute-force greedy pass 2
      std::vector<DetectionBox> merged;
      Quad acc{};
      double acc_s = 0.0, max_s = 0.0;
      bool have = false;
      auto emit = [&]() {
        DetectionBox d;
        for (int k = 0; k < 4; ++k)
          d.v[static_cast<std::size_t>(k)] = {acc[static_cast<std::size_t>(k)].x / acc_s,
                                              acc[static_cast<std::size_t>(k)].y / acc_s};
        d.score = std::min(acc_s, max_s);
        merged.push_back(d);
      };
      for (const auto& b : boxes) {
        if (have) {
          Quad cur;
          for (int k = 0; k < 4; ++k)
            cur[static_cast<std::size_t>(k)] = {acc[static_cast<std::size_t>(k)].x / acc_s,
                                                acc[static_cast<std::size_t>(k)].y / acc_s};
          if (polygon_iou(cur, b.v) > merge_iou) {
            for (int k = 0; k < 4; ++k) {
              acc[static_cast<std::size_t>(k)].x += b.v[static_cast<std::size_t>(k)].x * b.score;
              acc[static_cast<std::size_t>(k)].y += b.v[static_cast<std::size_t>(k)].y * b.score;
            }
            acc_s += b.score;
            max_s = std::max(max_s, b.score);
            continue;
          }
          emit();
        }
        for (int k = 0; k < 4; ++k)
          acc[static_cast<std::size_t>(k)] = {b.v[static_cast<std::size_t>(k)].x * b.score,
                                              b.v[static_cast<std::size_t>(k)].y * b.score};
        acc_s = b.score;
        max_s = b.score;
        have = true;
      }
      if (have) emit();
      std::vector<DetectionBox> oracle;
      std::vector<bool> used(merged.size(), false);
      while (true) {
        int best = -1;
        for (std::size_t i = 0; i < merged.size(); ++i)
          if (!used[i] &&
              (best < 0 || merged[i].score > merged[static_cast<std::size_t>(best)].score))
            best = static_cast<int>(i);
        if (best < 0) break;
        used[static_cast<std::size_t>(best)] = true;
        oracle.push_back(merged[static_cast<std::size_t>(best)]);
        for (std::size_t j = 0; j < merged.size(); ++j)
          if (!used[j] &&
              polygon_iou(merged[static_cast<std::size_t>(best)].v, merged[j].v) > final_iou)
            used[j] = true;
      }
      const auto got = locality_aware_nms(boxes, merge_iou, final_iou);
      if (got.size() != oracle.size()) {
        exact = false;
        continue;
      }
      for (std::size_t i = 0; i < got.size(); ++i) {
        if (got[i].score != oracle[i].score) exact = false;
        for (int k = 0; k < 4; ++k) {
          if (got[i].v[static_cast<std::size_t>(k)].x != oracle[i].v[static_cast<std::size_t>(k)].x ||
              got[i].v[static_cast<std::size_t>(k)].y != oracle[i].v[static_cast<std::size_t>(k)].y)
            exact = false;
        }
      }
    }
    info << " nms " << (exact ? "exact" : "MISMATCH");
    ok = ok && exact;
  }

  const double secs = now_seconds() - start;
  std::ostringstream os;
  os << info.str() << ", " << secs << " s";
  detail = os.str();
  return ok && secs < 300.0;
}

// ---------------------------------------------------------------------------
// 4. Roundtrip suite
// ---------------------------------------------------------------------------

bool criterion_roundtrips(std::string& detail) {
  std::ostringstream info;
  bool ok = true;

  {  // encode -> decode (both routes) -> NMS recovers sources one-to-one at IoU > 0.9
    Rng rng(921);
    int failures = 0;
    for (int inst = 0; inst < 50; ++inst) {
      std::vector<TextPolygon> polys;
      for (int b = 0; b < 3; ++b) {
        for (int attempt = 0; attempt < 40; ++attempt) {
          const Quad q = rect_quad(rng.uniform(20, 76), rng.uniform(20, 76), rng.uniform(8, 14),
                                   rng.uniform(6, 10), rng.uniform(-0.6, 0.6));
          bool clash = false;
          for (const auto& e : polys)
            if (polygon_iou(q, e.v) > 0.0) clash = true;
          if (clash) continue;
          TextPolygon p;
          p.v = q;
          polys.push_back(p);
          break;
        }
      }
      const auto gt = encode_ground_truth(polys, 24, 24, 4, 0.3);
      for (int route = 0; route < 2; ++route) {
        const auto raw = route == 0
                             ? decode_rbox(gt.score, gt.distances, gt.angle, 0.5, 4)
                             : decode_quad(gt.score, gt.quad, 0.5, 4);
        const auto boxes = locality_aware_nms(raw, 0.5, 0.2);
        if (boxes.size() != polys.size()) {
          ++failures;
          continue;
        }
        std::vector<bool> used(polys.size(), false);
        for (const auto& b : boxes) {
          bool matched = false;
          for (std::size_t g = 0; g < polys.size(); ++g) {
            if (used[g]) continue;
            if (polygon_iou(b.v, polys[g].v) > 0.9) {
              used[g] = true;
              matched = true;
              break;
            }
          }
          if (!matched) ++failures;
        }
      }
    }
    info << "roundtrip failures " << failures;
    ok = ok && failures == 0;
  }
  {  // checkpoint save/load bitwise forward equality
    ModelConfig mc = ModelConfig::toy();
    mc.gabor.orientations = 2;
    mc.encoder = {4, 6, 8, NormMode::batch};
    mc.mfrm.channels = 4;
    mc.mfrm.out_channels = 4;
    mc.decoder.channels = {8, 6, 4, 2};
    DetectorModel model(mc);
    model.init_params(31);
    Rng rng(922);
    const Tensor img = random_tensor({3, 32, 32}, rng, 0.0, 1.0);
    model.forward(img, true);  // populate running stats
    const HeadOutput before = model.forward(img, false);
    KeyValues kv;
    model_config_to_kv(mc, kv);
    const auto dir = std::filesystem::temp_directory_path() / "frbdet_acceptance";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "roundtrip.frbdet").string();
    save_checkpoint(path, 1, kv, model.registry());
    const CheckpointData data = load_checkpoint(path);
    ModelConfig mc2;
    model_config_from_kv(data.config, mc2);
    DetectorModel restored(mc2);
    restore_params(data, restored.registry());
    const HeadOutput after = restored.forward(img, false);
    const bool bitwise = before.score.bitwise_equal(after.score) &&
                         before.rbox.distances.bitwise_equal(after.rbox.distances) &&
                         before.rbox.angle.bitwise_equal(after.rbox.angle) &&
                         before.quad.bitwise_equal(after.quad);
    info << "; checkpoint bitwise " << (bitwise ? "equal" : "DIFFERENT");
    ok = ok && bitwise;
  }
  detail = info.str();
  return ok;
}

// ---------------------------------------------------------------------------
// 5. Tiny overfit run: 20 synthetic images, toy dims, 500 iterations,
//    curriculum enabled -> F >= 0.90 on the training set at IoU 0.5
// ---------------------------------------------------------------------------

bool criterion_overfit(std::string& detail) {
  const double start = now_seconds();
  const auto dir = std::filesystem::temp_directory_path() / "frbdet_acceptance" / "overfit";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const std::string work = dir.string();
  generate_synthetic_dataset(20, 64, 7, work);

  RunConfig cfg;
  cfg.model = ModelConfig::toy();  // N=32 trunk, encoder ladder 16/32/64
  cfg.model.norm = NormMode::instance;
  cfg.model.apply_norm_flag();
  cfg.manifest = work + "/manifest.tsv";
  cfg.checkpoint_dir = work + "/ckpt";
  cfg.iterations = 500;
  cfg.batch_size = 2;
  cfg.optimizer.lr = 0.02;
  cfg.optimizer.decay_every = 200;  // same 10x decay shape at desk scale
  cfg.optimizer.grad_clip = 10.0;
  cfg.score_loss = "bce";
  cfg.loss_weights.lambda_g = 0.25;
  cfg.schedule = CurriculumSchedule::default_schedule();  // curriculum enabled
  cfg.checkpoint_every = 0;
  cfg.log_every = 100;
  cfg.seed = 42;

  TrainResult result = train_model(cfg, std::cout);
  LoadedModel lm = load_model(result.last_checkpoint);
  lm.geometry.score_threshold = 0.8;

  const auto records = load_manifest(cfg.manifest);
  std::vector<std::vector<DetectionBox>> dets;
  std::vector<std::vector<TextPolygon>> gts;
  for (const auto& rec : records) {
    gts.push_back(load_icdar_gt(rec.gt_path));
    dets.push_back(detect_boxes(*lm.model, load_image(rec.image_path), lm.geometry));
  }
  const EvalReport rep = evaluate_detections(dets, gts, 0.5);
  const double secs = now_seconds() - start;
  std::ostringstream os;
  os << "train-set P " << rep.precision << " R " << rep.recall << " F " << rep.fscore << ", "
     << secs / 60.0 << " min";
  detail = os.str();
  return rep.fscore >= 0.90 && secs <= 30.0 * 60.0;
}

// ---------------------------------------------------------------------------
// 6. Schedule conformance
// ---------------------------------------------------------------------------

bool criterion_schedule(std::string& detail) {
  bool ok = true;
  // lr(t) = base * 10^(-floor(t/15000)), exact at the boundaries
  ok = ok && lr_at(0.01, 0, 15000, 10.0) == 0.01;
  ok = ok && lr_at(0.01, 14999, 15000, 10.0) == 0.01;
  for (long t = 0; t <= 60000; t += 500) {
    const double expect = 0.01 * std::pow(10.0, -static_cast<double>(t / 15000));
    if (std::fabs(lr_at(0.01, t, 15000, 10.0) - expect) > 1e-15 * expect) ok = false;
  }
  // curriculum fractions non-decreasing, enforced on load
  const auto sched = CurriculumSchedule::default_schedule();
  sched.validate();
  for (std::size_t i = 1; i < sched.stages.size(); ++i) {
    ok = ok && sched.stages[i].blur_fraction >= sched.stages[i - 1].blur_fraction;
    ok = ok && sched.stages[i].mask_fraction >= sched.stages[i - 1].mask_fraction;
  }
  bool rejected = false;
  try {
    CurriculumSchedule::parse("0:0.2:0.2:0.5;100:0.1:0.3:1.0");  // blur decreases
  } catch (const std::invalid_argument&) {
    rejected = true;
  }
  ok = ok && rejected;
  detail = "lr schedule exact over [0, 60000]; curriculum monotonicity enforced";
  return ok;
}

// ---------------------------------------------------------------------------
// 7. Evaluation harness validation
// ---------------------------------------------------------------------------

bool criterion_eval_harness(std::string& detail) {
  bool ok = true;
  // Hand-built 5-image case:
  //   img1: 2 gts, 2 matching dets          img2: 1 ignore gt + 1 det on it
  //   img3: 3 gts, 1 matching det           img4: 0 gts, 2 false positives
  //   img5: 2 gts, 0 dets
  // totals: matched 3, counted dets 5, counted gts 7 -> P=3/5, R=3/7, F=1/2
  std::vector<std::vector<TextPolygon>> gts(5);
  std::vector<std::vector<DetectionBox>> dets(5);
  auto gt_at = [&](int img, double x, double y, bool ignore = false) {
    TextPolygon p;
    p.v = axis_rect(x, y, x + 10, y + 8);
    p.ignore = ignore;
    gts[static_cast<std::size_t>(img)].push_back(p);
  };
  auto det_at = [&](int img, double x, double y, double score) {
    DetectionBox d;
    d.v = axis_rect(x, y, x + 10, y + 8);
    d.score = score;
    dets[static_cast<std::size_t>(img)].push_back(d);
  };
  gt_at(0, 0, 0);
  gt_at(0, 30, 0);
  det_at(0, 0, 0, 0.9);
  det_at(0, 30, 0, 0.8);
  gt_at(1, 0, 0, /*ignore=*/true);
  det_at(1, 0, 0, 0.7);
  gt_at(2, 0, 0);
  gt_at(2, 30, 0);
  gt_at(2, 60, 0);
  det_at(2, 30, 0, 0.6);
  det_at(3, 0, 0, 0.5);
  det_at(3, 30, 0, 0.4);
  gt_at(4, 0, 0);
  gt_at(4, 30, 0);
  const EvalReport rep = evaluate_detections(dets, gts, 0.5);
  ok = ok && rep.matched == 3 && rep.detections_counted == 5 && rep.gt_counted == 7;
  ok = ok && rep.precision == 3.0 / 5.0 && rep.recall == 3.0 / 7.0;
  ok = ok && std::fabs(rep.fscore - 0.5) < 1e-12;

  // greedy vs optimal matching within 1 on 100 random 30-box instances
  Rng rng(931);
  int max_gap = 0;
  for (int inst = 0; inst < 100; ++inst) {
    std::vector<TextPolygon> g;
    std::vector<DetectionBox> d;
    for (int i = 0; i < 30; ++i) {
      TextPolygon p;
      const double x = rng.uniform(0, 150), y = rng.uniform(0, 150);
      p.v = axis_rect(x, y, x + rng.uniform(8, 18), y + rng.uniform(6, 12));
      g.push_back(p);
      DetectionBox b;
      const double bx = rng.uniform(0, 150), by = rng.uniform(0, 150);
      b.v = axis_rect(bx, by, bx + rng.uniform(8, 18), by + rng.uniform(6, 12));
      b.score = rng.uniform(0.1, 0.9);
      d.push_back(b);
    }
    const EvalReport greedy = evaluate_detections({d}, {g}, 0.3, false);
    const EvalReport optimal = evaluate_detections({d}, {g}, 0.3, true);
    max_gap = std::max(max_gap, optimal.matched - greedy.matched);
    if (optimal.matched < greedy.matched) ok = false;
  }
  ok = ok && max_gap <= 1;
  std::ostringstream os;
  os << "hand case P " << rep.precision << " R " << rep.recall << " F " << rep.fscore
     << "; greedy-vs-optimal max gap " << max_gap;
  detail = os.str();
  return ok;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<bool(std::string&)> run;
  };
  const std::vector<Criterion> criteria = {
      {"benchmark-reproduction-out-of-scope", criterion_scope},
      {"gradient-suite", criterion_gradients},
      {"oracle-suite", criterion_oracles},
      {"roundtrip-suite", criterion_roundtrips},
      {"tiny-overfit-run", criterion_overfit},
      {"schedule-conformance", criterion_schedule},
      {"evaluation-harness", criterion_eval_harness},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    std::string det;
    bool pass = false;
    try {
      pass = c.run(det);
    } catch (const std::exception& e) {
      det = std::string("exception: ") + e.what();
    }
    std::printf("[%s] %s — %s\n", pass ? "PASS" : "FAIL", c.name, det.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
  return failures;
}
