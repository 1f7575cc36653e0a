#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "frbdet/nn.hpp"

namespace frbdet {

// Per-pixel rotated-box encoding: distances to the top/right/bottom/left box
// edges (input-image pixels) plus a rotation angle in (-pi/4, pi/4].
struct RBoxGeometry {
  Tensor distances;  // [4][h][w]
  Tensor angle;      // [1][h][w]
};

struct HeadOutput {
  Tensor score;        // [1][h][w], sigmoid
  RBoxGeometry rbox;   // distances via scaled sigmoid, angle via tanh * pi/4
  Tensor quad;         // [8][h][w], linear offsets (dx,dy per vertex, clockwise from top-left)
};

struct LossWeights {
  double lambda_g = 1.0;      // geometry weight in L = L_s + lambda_g * L_g
  double lambda_theta = 10.0; // angle term weight inside the RBOX loss
};

// Detection head: four 1x1 convolutions emitting 1 (score), 4 (RBOX
// distances), 1 (RBOX angle) and 8 (QUAD offsets) channels.
struct DetectHead {
  DetectHead() = default;
  DetectHead(int in_channels, double max_distance)
      : score_conv_(in_channels, 1, 1), dist_conv_(in_channels, 4, 1),
        angle_conv_(in_channels, 1, 1), quad_conv_(in_channels, 8, 1),
        max_distance_(max_distance) {}

  HeadOutput forward(const Tensor& f) {
    HeadOutput out;
    out.score = score_act_.forward(score_conv_.forward(f));
    out.rbox.distances = dist_act_.forward(dist_conv_.forward(f));
    out.rbox.distances.scale_(max_distance_);
    out.rbox.angle = angle_act_.forward(angle_conv_.forward(f));
    out.rbox.angle.scale_(kPi / 4.0);
    out.quad = quad_conv_.forward(f);
    return out;
  }

  Tensor backward(const HeadOutput& g) {
    Tensor gd = g.rbox.distances;
    gd.scale_(max_distance_);
    Tensor ga = g.rbox.angle;
    ga.scale_(kPi / 4.0);
    Tensor gf = score_conv_.backward(score_act_.backward(g.score));
    gf.add_(dist_conv_.backward(dist_act_.backward(gd)));
    gf.add_(angle_conv_.backward(angle_act_.backward(ga)));
    gf.add_(quad_conv_.backward(g.quad));
    return gf;
  }

  void register_params(ParamRegistry& r, const std::string& p) {
    score_conv_.register_params(r, p + ".score");
    dist_conv_.register_params(r, p + ".dist");
    angle_conv_.register_params(r, p + ".angle");
    quad_conv_.register_params(r, p + ".quad");
  }

  void init(Rng& rng) {
    score_conv_.init(rng);
    dist_conv_.init(rng);
    angle_conv_.init(rng);
    quad_conv_.init(rng);
  }

  Conv2d score_conv_, dist_conv_, angle_conv_, quad_conv_;
  Sigmoid score_act_, dist_act_;
  Tanh angle_act_;
  double max_distance_ = 512.0;
};

// ---------------------------------------------------------------------------
// Losses. Each returns the scalar and optionally writes the gradient with
// respect to the prediction. All reductions run over masked pixels only.
// ---------------------------------------------------------------------------

// Dice loss 1 - 2*sum(p*g)/(sum(p)+sum(g)) over masked pixels; 0 when the
// mask selects nothing or both maps vanish.
inline double dice_score_loss(const Tensor& pred, const Tensor& gt, const Tensor& mask,
                              Tensor* grad = nullptr) {
  if (!pred.same_shape(gt) || !pred.same_shape(mask))
    throw std::invalid_argument("dice_score_loss: shape mismatch");
  double inter = 0.0, sp = 0.0, sg = 0.0;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    if (mask[i] == 0.0) continue;
    inter += pred[i] * gt[i];
    sp += pred[i];
    sg += gt[i];
  }
  const double denom = sp + sg;
  if (grad) {
    *grad = Tensor(pred.shape());
    if (denom > 0.0) {
      for (std::int64_t i = 0; i < pred.size(); ++i) {
        if (mask[i] == 0.0) continue;
        (*grad)[i] = -2.0 * gt[i] / denom + 2.0 * inter / (denom * denom);
      }
    }
  }
  if (denom <= 0.0) return 0.0;
  return 1.0 - 2.0 * inter / denom;
}

// Balanced binary cross-entropy alternative to dice, selectable from config.
inline double balanced_bce_score_loss(const Tensor& pred, const Tensor& gt, const Tensor& mask,
                                      Tensor* grad = nullptr) {
  if (!pred.same_shape(gt) || !pred.same_shape(mask))
    throw std::invalid_argument("balanced_bce_score_loss: shape mismatch");
  double npos = 0.0, nall = 0.0;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    if (mask[i] == 0.0) continue;
    nall += 1.0;
    npos += gt[i];
  }
  if (grad) *grad = Tensor(pred.shape());
  if (nall == 0.0) return 0.0;
  const double beta = 1.0 - npos / nall;  // weight on positives
  const double eps = 1e-12;
  double loss = 0.0;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    if (mask[i] == 0.0) continue;
    const double p = std::min(std::max(pred[i], eps), 1.0 - eps);
    loss += -(beta * gt[i] * std::log(p) + (1.0 - beta) * (1.0 - gt[i]) * std::log(1.0 - p));
    if (grad) (*grad)[i] = (-(beta * gt[i] / p) + (1.0 - beta) * (1.0 - gt[i]) / (1.0 - p)) / nall;
  }
  return loss / nall;
}

// RBOX loss: mean over positive pixels of -log(IoU of the axis-aligned
// distance boxes) plus lambda_theta * (1 - cos(dtheta)).
inline double rbox_loss(const RBoxGeometry& pred, const RBoxGeometry& gt,
                        const Tensor& positive_mask, double lambda_theta,
                        RBoxGeometry* grad = nullptr) {
  const Tensor& pd = pred.distances;
  const Tensor& gd = gt.distances;
  if (!pd.same_shape(gd) || !pred.angle.same_shape(gt.angle))
    throw std::invalid_argument("rbox_loss: shape mismatch");
  const int h = pd.dim(1), w = pd.dim(2);
  if (grad) {
    grad->distances = Tensor(pd.shape());
    grad->angle = Tensor(pred.angle.shape());
  }
  double n = 0.0;
  for (std::int64_t i = 0; i < positive_mask.size(); ++i) n += positive_mask[i] != 0.0 ? 1.0 : 0.0;
  if (n == 0.0) return 0.0;

  const double eps = 1e-12;
  double loss = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (positive_mask(0, y, x) == 0.0) continue;
      const double pt = pd(0, y, x), pr = pd(1, y, x), pb = pd(2, y, x), pl = pd(3, y, x);
      const double qt = gd(0, y, x), qr = gd(1, y, x), qb = gd(2, y, x), ql = gd(3, y, x);
      const double area_p = (pt + pb) * (pl + pr);
      const double area_g = (qt + qb) * (ql + qr);
      const double ih = std::min(pt, qt) + std::min(pb, qb);
      const double iw = std::min(pl, ql) + std::min(pr, qr);
      const double inter = ih * iw;
      const double uni = area_p + area_g - inter;
      const double iou = inter / (uni + eps);
      loss += -std::log(std::max(iou, eps));
      const double dth = pred.angle(0, y, x) - gt.angle(0, y, x);
      loss += lambda_theta * (1.0 - std::cos(dth));
      if (grad) {
        // d(-log iou)/d p* via inter and union partials
        const double d_dims[4][2] = {{(pt < qt) ? iw : 0.0, (pl + pr)},   // top: d inter, d area_p
                                     {(pr < qr) ? ih : 0.0, (pt + pb)},   // right
                                     {(pb < qb) ? iw : 0.0, (pl + pr)},   // bottom
                                     {(pl < ql) ? ih : 0.0, (pt + pb)}};  // left
        for (int c = 0; c < 4; ++c) {
          const double d_inter = d_dims[c][0];
          const double d_area = d_dims[c][1];
          const double d_union = d_area - d_inter;
          const double d_iou = (d_inter * (uni + eps) - inter * d_union) / ((uni + eps) * (uni + eps));
          grad->distances(c, y, x) = (-1.0 / std::max(iou, eps)) * d_iou / n;
        }
        grad->angle(0, y, x) = lambda_theta * std::sin(dth) / n;
      }
    }
  }
  return loss / n;
}

inline double smooth_l1(double x) {
  const double a = std::fabs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

inline double smooth_l1_grad(double x) {
  if (x > 1.0) return 1.0;
  if (x < -1.0) return -1.0;
  return x;
}

// QUAD loss: smooth-L1 over the 8 offsets normalized by the ground-truth
// short edge length, summed per pixel and averaged over positive pixels.
inline double quad_loss(const Tensor& pred, const Tensor& gt, const Tensor& positive_mask,
                        const Tensor& short_edge, Tensor* grad = nullptr) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("quad_loss: shape mismatch");
  const int h = pred.dim(1), w = pred.dim(2);
  if (grad) *grad = Tensor(pred.shape());
  double n = 0.0;
  for (std::int64_t i = 0; i < positive_mask.size(); ++i) n += positive_mask[i] != 0.0 ? 1.0 : 0.0;
  if (n == 0.0) return 0.0;
  double loss = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (positive_mask(0, y, x) == 0.0) continue;
      const double se = std::max(short_edge(0, y, x), 1e-6);
      for (int c = 0; c < 8; ++c) {
        const double d = (pred(c, y, x) - gt(c, y, x)) / se;
        loss += smooth_l1(d);
        if (grad) (*grad)(c, y, x) = smooth_l1_grad(d) / (se * n);
      }
    }
  }
  return loss / n;
}

// Total detection loss L = L_s + lambda_g * (L_rbox + L_quad).
inline double total_loss(double l_s, double l_rbox, double l_quad, const LossWeights& w) {
  return l_s + w.lambda_g * (l_rbox + l_quad);
}

}  // namespace frbdet
