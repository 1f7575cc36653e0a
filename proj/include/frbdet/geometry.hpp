#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "frbdet/tensor.hpp"

namespace frbdet {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

using Quad = std::array<Point, 4>;

// Ground-truth text region: 4 vertices clockwise (screen coordinates, y
// down), ignore_flag set for "###" regions.
struct TextPolygon {
  Quad v{};
  bool ignore = false;
  std::string transcription;
};

struct DetectionBox {
  Quad v{};
  double score = 0.0;
};

// Signed shoelace area; positive for clockwise order in screen coordinates.
inline double polygon_area_signed(const Quad& q) {
  double s = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Point& a = q[static_cast<std::size_t>(i)];
    const Point& b = q[static_cast<std::size_t>((i + 1) % 4)];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * s;
}

inline double polygon_area(const Quad& q) { return std::fabs(polygon_area_signed(q)); }

inline Quad make_clockwise(Quad q) {
  if (polygon_area_signed(q) < 0) std::swap(q[1], q[3]);
  return q;
}

inline double edge_length(const Point& a, const Point& b) {
  return std::hypot(b.x - a.x, b.y - a.y);
}

inline double shortest_edge(const Quad& q) {
  double m = edge_length(q[0], q[1]);
  for (int i = 1; i < 4; ++i)
    m = std::min(m, edge_length(q[static_cast<std::size_t>(i)], q[static_cast<std::size_t>((i + 1) % 4)]));
  return m;
}

inline double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (b.x - o.x) * (a.y - o.y);
}

// Inside test for clockwise (screen) polygons: all edge cross products >= 0.
inline bool point_in_polygon(const Quad& q, const Point& p) {
  for (int i = 0; i < 4; ++i) {
    const Point& a = q[static_cast<std::size_t>(i)];
    const Point& b = q[static_cast<std::size_t>((i + 1) % 4)];
    if (cross(a, b, p) < 0) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Convex polygon intersection (Sutherland-Hodgman) and IoU
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<Point> clip_by_halfplane(const std::vector<Point>& poly, const Point& a,
                                            const Point& b) {
  std::vector<Point> out;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % n];
    const double dp = cross(a, b, p);
    const double dq = cross(a, b, q);
    if (dp >= 0) out.push_back(p);
    if ((dp > 0 && dq < 0) || (dp < 0 && dq > 0)) {
      const double t = dp / (dp - dq);
      out.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
    }
  }
  return out;
}

inline double poly_area_signed(const std::vector<Point>& poly) {
  double s = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % n];
    s += p.x * q.y - q.x * p.y;
  }
  return 0.5 * s;
}

}  // namespace detail

// Intersection area of two convex quads.
inline double polygon_intersection_area(const Quad& qa, const Quad& qb) {
  const Quad a = make_clockwise(qa);
  const Quad b = make_clockwise(qb);
  std::vector<Point> poly(a.begin(), a.end());
  for (int i = 0; i < 4 && !poly.empty(); ++i)
    poly = detail::clip_by_halfplane(poly, b[static_cast<std::size_t>(i)],
                                     b[static_cast<std::size_t>((i + 1) % 4)]);
  if (poly.size() < 3) return 0.0;
  return std::fabs(detail::poly_area_signed(poly));
}

// IoU in [0,1]; degenerate polygons give 0.
inline double polygon_iou(const Quad& a, const Quad& b) {
  const double area_a = polygon_area(a);
  const double area_b = polygon_area(b);
  if (area_a < 1e-12 || area_b < 1e-12) return 0.0;
  const double inter = polygon_intersection_area(a, b);
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::min(1.0, std::max(0.0, inter / uni));
}

// ---------------------------------------------------------------------------
// Minimum-area enclosing rectangle (rotating calipers over the quad edges)
// ---------------------------------------------------------------------------

// Rotated rectangle in the RBOX frame: local +x axis is (cos a, -sin a),
// local +y axis is (sin a, cos a), angle a in (-pi/4, pi/4].
struct RotatedRect {
  Point center;
  double half_w = 0.0;  // extent along local x
  double half_h = 0.0;  // extent along local y
  double angle = 0.0;
};

inline Point rbox_axis_x(double angle) { return {std::cos(angle), -std::sin(angle)}; }
inline Point rbox_axis_y(double angle) { return {std::sin(angle), std::cos(angle)}; }

inline Quad rotated_rect_corners(const RotatedRect& r) {
  const Point ex = rbox_axis_x(r.angle);
  const Point ey = rbox_axis_y(r.angle);
  auto corner = [&](double sx, double sy) -> Point {
    return {r.center.x + sx * r.half_w * ex.x + sy * r.half_h * ey.x,
            r.center.y + sx * r.half_w * ex.y + sy * r.half_h * ey.y};
  };
  return {corner(-1, -1), corner(1, -1), corner(1, 1), corner(-1, 1)};
}

inline RotatedRect min_area_rect(const Quad& quad) {
  const Quad q = make_clockwise(quad);
  double best_area = 1e300;
  double best_angle = 0.0;
  double best_cx = 0, best_cy = 0, best_hw = 0, best_hh = 0;
  for (int e = 0; e < 4; ++e) {
    const Point& a = q[static_cast<std::size_t>(e)];
    const Point& b = q[static_cast<std::size_t>((e + 1) % 4)];
    const double len = edge_length(a, b);
    if (len < 1e-12) continue;
    const Point dir{(b.x - a.x) / len, (b.y - a.y) / len};
    const Point nrm{-dir.y, dir.x};
    double lo_d = 1e300, hi_d = -1e300, lo_n = 1e300, hi_n = -1e300;
    for (const Point& p : q) {
      const double pd = p.x * dir.x + p.y * dir.y;
      const double pn = p.x * nrm.x + p.y * nrm.y;
      lo_d = std::min(lo_d, pd);
      hi_d = std::max(hi_d, pd);
      lo_n = std::min(lo_n, pn);
      hi_n = std::max(hi_n, pn);
    }
    const double area = (hi_d - lo_d) * (hi_n - lo_n);
    if (area < best_area) {
      best_area = area;
      // angle of the local x axis matching dir: local +x maps to (cos a, -sin a)
      best_angle = std::atan2(-dir.y, dir.x);
      const double cd = 0.5 * (lo_d + hi_d);
      const double cn = 0.5 * (lo_n + hi_n);
      best_cx = cd * dir.x + cn * nrm.x;
      best_cy = cd * dir.y + cn * nrm.y;
      best_hw = 0.5 * (hi_d - lo_d);
      best_hh = 0.5 * (hi_n - lo_n);
    }
  }
  RotatedRect r;
  r.center = {best_cx, best_cy};
  r.half_w = best_hw;
  r.half_h = best_hh;
  r.angle = best_angle;
  // Fold the angle into (-pi/4, pi/4]; each quarter turn swaps the extents.
  while (r.angle > kPi / 4.0 + 1e-12) {
    r.angle -= kPi / 2.0;
    std::swap(r.half_w, r.half_h);
  }
  while (r.angle <= -kPi / 4.0 - 1e-12) {
    r.angle += kPi / 2.0;
    std::swap(r.half_w, r.half_h);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Polygon shrinking for score-map targets (ratio r along both edge pairs)
// ---------------------------------------------------------------------------

inline Quad shrink_polygon(const Quad& quad, double ratio) {
  Quad q = make_clockwise(quad);
  std::array<double, 4> ref{};
  for (int i = 0; i < 4; ++i) {
    const double prev = edge_length(q[static_cast<std::size_t>(i)], q[static_cast<std::size_t>((i + 3) % 4)]);
    const double next = edge_length(q[static_cast<std::size_t>(i)], q[static_cast<std::size_t>((i + 1) % 4)]);
    ref[static_cast<std::size_t>(i)] = std::min(prev, next);
  }
  auto move_along = [&](Quad& poly, int i, int j) {
    // shrink edge (i, j): endpoints step toward each other by ratio * ref
    const Point& a = poly[static_cast<std::size_t>(i)];
    const Point& b = poly[static_cast<std::size_t>(j)];
    const double len = edge_length(a, b);
    if (len < 1e-12) return;
    const double ux = (b.x - a.x) / len, uy = (b.y - a.y) / len;
    poly[static_cast<std::size_t>(i)] = {a.x + ratio * ref[static_cast<std::size_t>(i)] * ux,
                                         a.y + ratio * ref[static_cast<std::size_t>(i)] * uy};
    poly[static_cast<std::size_t>(j)] = {b.x - ratio * ref[static_cast<std::size_t>(j)] * ux,
                                         b.y - ratio * ref[static_cast<std::size_t>(j)] * uy};
  };
  const double pair02 = edge_length(q[0], q[1]) + edge_length(q[2], q[3]);
  const double pair13 = edge_length(q[1], q[2]) + edge_length(q[3], q[0]);
  if (pair02 >= pair13) {
    move_along(q, 0, 1);
    move_along(q, 2, 3);
    move_along(q, 1, 2);
    move_along(q, 3, 0);
  } else {
    move_along(q, 1, 2);
    move_along(q, 3, 0);
    move_along(q, 0, 1);
    move_along(q, 2, 3);
  }
  return q;
}

// ---------------------------------------------------------------------------
// Ground-truth map encoding and geometry decoding
// ---------------------------------------------------------------------------

struct GroundTruthMaps {
  Tensor score;       // [1][h][w], 1 inside shrunk valid polygons
  Tensor distances;   // [4][h][w] RBOX distances (top,right,bottom,left), input px
  Tensor angle;       // [1][h][w] radians
  Tensor quad;        // [8][h][w] offsets (dx0,dy0,...,dx3,dy3) clockwise from top-left
  Tensor mask;        // [1][h][w], 0 inside ignore polygons
  Tensor short_edge;  // [1][h][w] shortest gt edge per positive pixel
  int skipped_degenerate = 0;
};

// Rolls the quad so the vertex nearest the top-left (min x+y) comes first,
// preserving clockwise order. Fixes the QUAD channel-vertex correspondence.
inline Quad canonical_vertex_order(const Quad& quad) {
  Quad q = make_clockwise(quad);
  int best = 0;
  double best_key = q[0].x + q[0].y;
  for (int i = 1; i < 4; ++i) {
    const double key = q[static_cast<std::size_t>(i)].x + q[static_cast<std::size_t>(i)].y;
    if (key < best_key) {
      best_key = key;
      best = i;
    }
  }
  Quad out;
  for (int i = 0; i < 4; ++i) out[static_cast<std::size_t>(i)] = q[static_cast<std::size_t>((best + i) % 4)];
  return out;
}

inline GroundTruthMaps encode_ground_truth(const std::vector<TextPolygon>& polygons, int map_h,
                                           int map_w, int stride, double shrink_ratio = 0.3) {
  GroundTruthMaps gt;
  gt.score = Tensor({1, map_h, map_w});
  gt.distances = Tensor({4, map_h, map_w});
  gt.angle = Tensor({1, map_h, map_w});
  gt.quad = Tensor({8, map_h, map_w});
  gt.mask = Tensor::full({1, map_h, map_w}, 1.0);
  gt.short_edge = Tensor({1, map_h, map_w});

  // Membership nudge keeps integer-aligned boundaries half-open: a sample on
  // a polygon's min edge is positive, on its max edge negative.
  const double eps = 1e-6;

  for (const auto& poly : polygons) {
    Quad q = make_clockwise(poly.v);
    if (polygon_area(q) < 1e-9) {
      ++gt.skipped_degenerate;
      std::cerr << "encode_ground_truth: skipping degenerate polygon\n";
      continue;
    }
    if (poly.ignore) {
      for (int i = 0; i < map_h; ++i)
        for (int j = 0; j < map_w; ++j)
          if (point_in_polygon(q, {j * static_cast<double>(stride) + eps,
                                   i * static_cast<double>(stride) + eps}))
            gt.mask(0, i, j) = 0.0;
      continue;
    }
    const Quad shrunk = shrink_polygon(q, shrink_ratio);
    const RotatedRect rect = min_area_rect(q);
    const Quad ordered = canonical_vertex_order(q);
    const double se = shortest_edge(q);
    const double ca = std::cos(rect.angle), sa = std::sin(rect.angle);
    for (int i = 0; i < map_h; ++i) {
      for (int j = 0; j < map_w; ++j) {
        const double px = j * static_cast<double>(stride);
        const double py = i * static_cast<double>(stride);
        if (!point_in_polygon(shrunk, {px + eps, py + eps})) continue;
        gt.score(0, i, j) = 1.0;
        const double dx = px - rect.center.x, dy = py - rect.center.y;
        const double lx = dx * ca - dy * sa;  // Rot(-angle) applied to (dx,dy)
        const double ly = dx * sa + dy * ca;
        gt.distances(0, i, j) = std::max(0.0, ly + rect.half_h);  // top
        gt.distances(1, i, j) = std::max(0.0, rect.half_w - lx);  // right
        gt.distances(2, i, j) = std::max(0.0, rect.half_h - ly);  // bottom
        gt.distances(3, i, j) = std::max(0.0, lx + rect.half_w);  // left
        gt.angle(0, i, j) = rect.angle;
        for (int v = 0; v < 4; ++v) {
          gt.quad(2 * v, i, j) = ordered[static_cast<std::size_t>(v)].x - px;
          gt.quad(2 * v + 1, i, j) = ordered[static_cast<std::size_t>(v)].y - py;
        }
        gt.short_edge(0, i, j) = se;
      }
    }
  }
  return gt;
}

// Rebuilds the rotated rectangle around each above-threshold pixel. Boxes are
// emitted in row-major pixel order (the locality contract for NMS pass 1).
inline std::vector<DetectionBox> decode_rbox(const Tensor& score, const Tensor& distances,
                                             const Tensor& angle, double score_threshold,
                                             int stride, double min_area = 4.0) {
  const int h = score.dim(1), w = score.dim(2);
  std::vector<DetectionBox> boxes;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double s = score(0, i, j);
      if (s <= score_threshold) continue;
      const double px = j * static_cast<double>(stride);
      const double py = i * static_cast<double>(stride);
      const double t = distances(0, i, j), r = distances(1, i, j);
      const double b = distances(2, i, j), l = distances(3, i, j);
      if ((t + b) * (l + r) < min_area) continue;
      const double a = angle(0, i, j);
      const double ca = std::cos(a), sa = std::sin(a);
      auto corner = [&](double ox, double oy) -> Point {
        // world = pixel + Rot(a) * offset, Rot(a)*(x,y) = (x ca + y sa, -x sa + y ca)
        return {px + ox * ca + oy * sa, py - ox * sa + oy * ca};
      };
      DetectionBox box;
      box.v = {corner(-l, -t), corner(r, -t), corner(r, b), corner(-l, b)};
      box.score = s;
      boxes.push_back(box);
    }
  }
  return boxes;
}

inline std::vector<DetectionBox> decode_quad(const Tensor& score, const Tensor& quad,
                                             double score_threshold, int stride,
                                             double min_area = 4.0) {
  const int h = score.dim(1), w = score.dim(2);
  std::vector<DetectionBox> boxes;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double s = score(0, i, j);
      if (s <= score_threshold) continue;
      const double px = j * static_cast<double>(stride);
      const double py = i * static_cast<double>(stride);
      DetectionBox box;
      for (int v = 0; v < 4; ++v)
        box.v[static_cast<std::size_t>(v)] = {px + quad(2 * v, i, j), py + quad(2 * v + 1, i, j)};
      if (polygon_area(box.v) < min_area) continue;
      box.score = s;
      boxes.push_back(box);
    }
  }
  return boxes;
}

// ---------------------------------------------------------------------------
// Locality-aware NMS: score-weighted merging of consecutive overlapping boxes
// followed by standard greedy NMS.
// ---------------------------------------------------------------------------

inline std::vector<DetectionBox> standard_greedy_nms(std::vector<DetectionBox> boxes,
                                                     double iou_threshold) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });
  std::vector<bool> suppressed(boxes.size(), false);
  std::vector<DetectionBox> kept;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (suppressed[i]) continue;
    kept.push_back(boxes[i]);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (suppressed[j]) continue;
      if (polygon_iou(boxes[i].v, boxes[j].v) > iou_threshold) suppressed[j] = true;
    }
  }
  return kept;
}

inline std::vector<DetectionBox> locality_aware_nms(const std::vector<DetectionBox>& boxes,
                                                    double merge_iou, double final_iou) {
  std::vector<DetectionBox> merged;
  bool have = false;
  Quad acc_v{};
  double acc_score = 0.0, max_score = 0.0;
  auto flush = [&]() {
    DetectionBox b;
    for (int k = 0; k < 4; ++k)
      b.v[static_cast<std::size_t>(k)] = {acc_v[static_cast<std::size_t>(k)].x / acc_score,
                                          acc_v[static_cast<std::size_t>(k)].y / acc_score};
    b.score = std::min(acc_score, max_score);
    merged.push_back(b);
  };
  for (const auto& box : boxes) {
    if (have) {
      Quad cur;
      for (int k = 0; k < 4; ++k)
        cur[static_cast<std::size_t>(k)] = {acc_v[static_cast<std::size_t>(k)].x / acc_score,
                                            acc_v[static_cast<std::size_t>(k)].y / acc_score};
      if (polygon_iou(cur, box.v) > merge_iou) {
        for (int k = 0; k < 4; ++k) {
          acc_v[static_cast<std::size_t>(k)].x += box.v[static_cast<std::size_t>(k)].x * box.score;
          acc_v[static_cast<std::size_t>(k)].y += box.v[static_cast<std::size_t>(k)].y * box.score;
        }
        acc_score += box.score;
        max_score = std::max(max_score, box.score);
        continue;
      }
      flush();
    }
    for (int k = 0; k < 4; ++k)
      acc_v[static_cast<std::size_t>(k)] = {box.v[static_cast<std::size_t>(k)].x * box.score,
                                            box.v[static_cast<std::size_t>(k)].y * box.score};
    acc_score = box.score;
    max_score = box.score;
    have = true;
  }
  if (have) flush();
  return standard_greedy_nms(std::move(merged), final_iou);
}

// ---------------------------------------------------------------------------
// ICDAR-style file formats
// ---------------------------------------------------------------------------

// One region per line: "x1,y1,x2,y2,x3,y3,x4,y4,transcription"; a "###"
// transcription marks an ignore region.
inline std::vector<TextPolygon> parse_icdar_gt(std::istream& in) {
  std::vector<TextPolygon> polys;
  std::string line;
  while (std::getline(in, line)) {
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
        static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
      line = line.substr(3);
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (int k = 0; k < 8; ++k) {
      const std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        fields.clear();
        break;
      }
      fields.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    if (fields.size() != 8) continue;
    TextPolygon p;
    try {
      for (int k = 0; k < 4; ++k)
        p.v[static_cast<std::size_t>(k)] = {std::stod(fields[static_cast<std::size_t>(2 * k)]),
                                            std::stod(fields[static_cast<std::size_t>(2 * k + 1)])};
    } catch (const std::exception&) {
      continue;
    }
    p.transcription = line.substr(start);
    p.ignore = (p.transcription == "###");
    polys.push_back(p);
  }
  return polys;
}

inline std::vector<TextPolygon> load_icdar_gt(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ground-truth file: " + path);
  return parse_icdar_gt(in);
}

// One detection per line: "x1,y1,...,x4,y4,score".
inline void write_detections(std::ostream& out, const std::vector<DetectionBox>& boxes) {
  out.setf(std::ios::fixed);
  out.precision(2);
  for (const auto& b : boxes) {
    for (int k = 0; k < 4; ++k)
      out << b.v[static_cast<std::size_t>(k)].x << ',' << b.v[static_cast<std::size_t>(k)].y << ',';
    out.precision(6);
    out << b.score << '\n';
    out.precision(2);
  }
}

inline void save_detections(const std::string& path, const std::vector<DetectionBox>& boxes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write detection file: " + path);
  write_detections(out, boxes);
}

inline std::vector<DetectionBox> parse_detections(std::istream& in) {
  std::vector<DetectionBox> boxes;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> vals;
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        vals.push_back(std::stod(tok));
      } catch (const std::exception&) {
        break;
      }
    }
    if (vals.size() < 9) continue;
    DetectionBox b;
    for (int k = 0; k < 4; ++k)
      b.v[static_cast<std::size_t>(k)] = {vals[static_cast<std::size_t>(2 * k)],
                                          vals[static_cast<std::size_t>(2 * k + 1)]};
    b.score = vals[8];
    boxes.push_back(b);
  }
  return boxes;
}

inline std::vector<DetectionBox> load_detections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open detection file: " + path);
  return parse_detections(in);
}

}  // namespace frbdet
