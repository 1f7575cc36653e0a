#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "frbdet/geometry.hpp"
#include "frbdet/image.hpp"
#include "frbdet/tensor.hpp"

namespace frbdet {

// splitmix64; used to derive independent per-(iteration, slot) seeds so the
// augmentation stream is a pure function of (corpus, schedule, seed).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Curriculum schedule
// ---------------------------------------------------------------------------

struct CurriculumStage {
  long iteration_start = 0;
  double blur_fraction = 0.0;
  double mask_fraction = 0.0;
  double difficulty_cutoff = 1.0;
};

struct CurriculumSchedule {
  std::vector<CurriculumStage> stages;

  static CurriculumSchedule default_schedule() {
    CurriculumSchedule s;
    s.stages = {{0, 0.0, 0.0, 0.4}, {150, 0.05, 0.10, 0.7}, {300, 0.10, 0.25, 1.0}};
    return s;
  }

  void validate() const {
    if (stages.empty()) throw std::invalid_argument("CurriculumSchedule: no stages");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const auto& st = stages[i];
      if (st.blur_fraction < 0 || st.blur_fraction > 1 || st.mask_fraction < 0 ||
          st.mask_fraction > 1 || st.difficulty_cutoff < 0 || st.difficulty_cutoff > 1)
        throw std::invalid_argument("CurriculumSchedule: fractions out of [0,1]");
      if (i > 0) {
        if (stages[i].iteration_start <= stages[i - 1].iteration_start)
          throw std::invalid_argument("CurriculumSchedule: iteration starts must increase");
        if (stages[i].blur_fraction < stages[i - 1].blur_fraction ||
            stages[i].mask_fraction < stages[i - 1].mask_fraction ||
            stages[i].difficulty_cutoff < stages[i - 1].difficulty_cutoff)
          throw std::invalid_argument("CurriculumSchedule: fractions must be non-decreasing");
      }
    }
    if (stages[0].iteration_start != 0)
      throw std::invalid_argument("CurriculumSchedule: first stage must start at 0");
  }

  const CurriculumStage& stage_at(long iteration) const {
    std::size_t best = 0;
    for (std::size_t i = 0; i < stages.size(); ++i)
      if (stages[i].iteration_start <= iteration) best = i;
    return stages[best];
  }

  // "start:blur:mask:cutoff;start:blur:mask:cutoff;..."
  static CurriculumSchedule parse(const std::string& text) {
    CurriculumSchedule s;
    std::stringstream ss(text);
    std::string stage_str;
    while (std::getline(ss, stage_str, ';')) {
      if (stage_str.empty()) continue;
      CurriculumStage st;
      if (std::sscanf(stage_str.c_str(), "%ld:%lf:%lf:%lf", &st.iteration_start, &st.blur_fraction,
                      &st.mask_fraction, &st.difficulty_cutoff) != 4)
        throw std::invalid_argument("CurriculumSchedule: bad stage '" + stage_str + "'");
      s.stages.push_back(st);
    }
    s.validate();
    return s;
  }

  std::string to_string() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (i) os << ';';
      os << stages[i].iteration_start << ':' << stages[i].blur_fraction << ':'
         << stages[i].mask_fraction << ':' << stages[i].difficulty_cutoff;
    }
    return os.str();
  }
};

// ---------------------------------------------------------------------------
// Pixel-wise blurring: exactly floor(fraction*H*W) seeded sites replaced by a
// 3x3 Gaussian (sigma=1) average of the original neighborhood.
// ---------------------------------------------------------------------------

inline Tensor apply_pixel_blur(const Tensor& image, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("apply_pixel_blur: fraction outside [0,1]");
  const int H = image.dim(1), W = image.dim(2);
  const std::int64_t total = static_cast<std::int64_t>(H) * W;
  const std::int64_t count = static_cast<std::int64_t>(fraction * static_cast<double>(total));
  if (count == 0) return image;

  std::vector<std::int64_t> sites(static_cast<std::size_t>(total));
  std::iota(sites.begin(), sites.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::int64_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::int64_t> pick(i, total - 1);
    std::swap(sites[static_cast<std::size_t>(i)], sites[static_cast<std::size_t>(pick(rng))]);
  }

  static const double kSigma = 1.0;
  double wts[3][3];
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx)
      wts[dy + 1][dx + 1] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));

  Tensor out = image;
  for (std::int64_t i = 0; i < count; ++i) {
    const std::int64_t site = sites[static_cast<std::size_t>(i)];
    const int y = static_cast<int>(site / W);
    const int x = static_cast<int>(site % W);
    for (int c = 0; c < 3; ++c) {
      double num = 0.0, den = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= H) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= W) continue;
          num += wts[dy + 1][dx + 1] * image(c, yy, xx);
          den += wts[dy + 1][dx + 1];
        }
      }
      out(c, y, x) = num / den;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mask-and-Predict occlusion: per non-ignored polygon, fill a seeded
// axis-aligned sub-rectangle covering `fraction` of the bounding-box area
// with the image mean color. Ground truth stays untouched.
// ---------------------------------------------------------------------------

inline Tensor apply_mask(const Tensor& image, const std::vector<TextPolygon>& polygons,
                         double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("apply_mask: fraction outside [0,1]");
  if (fraction == 0.0 || polygons.empty()) return image;
  const int H = image.dim(1), W = image.dim(2);

  double mean[3] = {0, 0, 0};
  for (int c = 0; c < 3; ++c) {
    double s = 0.0;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) s += image(c, y, x);
    mean[c] = s / (static_cast<double>(H) * W);
  }

  std::mt19937_64 rng(seed);
  Tensor out = image;
  for (const auto& poly : polygons) {
    if (poly.ignore) continue;
    double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
    for (const Point& p : poly.v) {
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
    const int bx0 = std::max(0, static_cast<int>(std::floor(x0)));
    const int by0 = std::max(0, static_cast<int>(std::floor(y0)));
    const int bx1 = std::min(W, static_cast<int>(std::ceil(x1)));
    const int by1 = std::min(H, static_cast<int>(std::ceil(y1)));
    const int bw = bx1 - bx0, bh = by1 - by0;
    if (bw <= 0 || bh <= 0) continue;
    const double target = fraction * bw * bh;
    int mw = std::clamp(static_cast<int>(std::lround(bw * std::sqrt(fraction))), 1, bw);
    int mh = std::clamp(static_cast<int>(std::lround(target / mw)), 1, bh);
    std::uniform_int_distribution<int> px(bx0, bx1 - mw);
    std::uniform_int_distribution<int> py(by0, by1 - mh);
    const int ox = px(rng);
    const int oy = py(rng);
    for (int c = 0; c < 3; ++c)
      for (int y = oy; y < oy + mh; ++y)
        for (int x = ox; x < ox + mw; ++x) out(c, y, x) = mean[c];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Difficulty proxy: box count, small-box count and blur each contribute a
// saturating score in [0,1); every added box strictly raises the total.
// ---------------------------------------------------------------------------

struct DifficultyWeights {
  double count = 1.0 / 3.0;
  double small_boxes = 1.0 / 3.0;
  double blur = 1.0 / 3.0;
  double small_edge_px = 12.0;
  double sharpness_scale = 1000.0;
};

// Variance of the 4-neighbor Laplacian on the grayscale image.
inline double variance_of_laplacian(const Tensor& image) {
  const int H = image.dim(1), W = image.dim(2);
  if (H < 3 || W < 3) return 0.0;
  double sum = 0.0, sum2 = 0.0;
  std::int64_t n = 0;
  for (int y = 1; y + 1 < H; ++y) {
    for (int x = 1; x + 1 < W; ++x) {
      double g = 0.0;
      auto gray = [&](int yy, int xx) {
        return (image(0, yy, xx) + image(1, yy, xx) + image(2, yy, xx)) / 3.0;
      };
      g = 4.0 * gray(y, x) - gray(y - 1, x) - gray(y + 1, x) - gray(y, x - 1) - gray(y, x + 1);
      sum += g;
      sum2 += g * g;
      ++n;
    }
  }
  const double m = sum / static_cast<double>(n);
  return sum2 / static_cast<double>(n) - m * m;
}

inline double rank_difficulty(const std::vector<TextPolygon>& gt, const Tensor& image,
                              const DifficultyWeights& w = {}) {
  int boxes = 0, small = 0;
  for (const auto& p : gt) {
    if (p.ignore) continue;
    ++boxes;
    if (shortest_edge(p.v) < w.small_edge_px) ++small;
  }
  const double f_count = boxes / (boxes + 5.0);
  const double f_small = small / (small + 3.0);
  const double f_blur = 1.0 / (1.0 + w.sharpness_scale * variance_of_laplacian(image));
  const double total = w.count + w.small_boxes + w.blur;
  return (w.count * f_count + w.small_boxes * f_small + w.blur * f_blur) / total;
}

// ---------------------------------------------------------------------------
// Corpus records and manifest
// ---------------------------------------------------------------------------

struct SampleRecord {
  std::string image_path;
  std::string gt_path;
  double difficulty = 0.0;
};

// One line per sample: "image_path<TAB>gt_path".
inline std::vector<SampleRecord> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  std::vector<SampleRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("manifest line missing tab: " + line);
    records.push_back({line.substr(0, tab), line.substr(tab + 1), 0.0});
  }
  return records;
}

// ---------------------------------------------------------------------------
// Curriculum sampler: iteration -> reproducible batch of augmented samples.
// ---------------------------------------------------------------------------

struct LoadedSample {
  Tensor image;
  std::vector<TextPolygon> polygons;
  SampleRecord record;
};

struct AugmentedSample {
  Tensor image;                        // blurred + masked
  const LoadedSample* source = nullptr;
};

class CurriculumSampler {
public:
  CurriculumSampler(std::vector<LoadedSample> samples, CurriculumSchedule schedule,
                    std::uint64_t seed)
      : samples_(std::move(samples)), schedule_(std::move(schedule)), seed_(seed) {
    schedule_.validate();
    if (samples_.empty()) throw DataError("CurriculumSampler: empty corpus");
    by_difficulty_.resize(samples_.size());
    std::iota(by_difficulty_.begin(), by_difficulty_.end(), 0);
    std::stable_sort(by_difficulty_.begin(), by_difficulty_.end(), [&](std::size_t a, std::size_t b) {
      return samples_[a].record.difficulty < samples_[b].record.difficulty;
    });
  }

  const std::vector<LoadedSample>& samples() const { return samples_; }
  const CurriculumSchedule& schedule() const { return schedule_; }

  std::vector<std::size_t> eligible_at(long iteration) const {
    const auto& stage = schedule_.stage_at(iteration);
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < samples_.size(); ++i)
      if (samples_[i].record.difficulty <= stage.difficulty_cutoff) eligible.push_back(i);
    if (eligible.empty()) {
      // fall back to the easiest decile
      const std::size_t n = std::max<std::size_t>(1, (samples_.size() + 9) / 10);
      eligible.assign(by_difficulty_.begin(), by_difficulty_.begin() + static_cast<long>(n));
      std::cerr << "curriculum: no samples under cutoff at iteration " << iteration
                << "; falling back to the easiest decile\n";
    }
    return eligible;
  }

  std::vector<AugmentedSample> batch(long iteration, int batch_size) const {
    const auto& stage = schedule_.stage_at(iteration);
    const auto eligible = eligible_at(iteration);
    std::mt19937_64 rng(mix_seed(seed_, static_cast<std::uint64_t>(iteration)));
    std::vector<AugmentedSample> out;
    for (int b = 0; b < batch_size; ++b) {
      std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
      const std::size_t idx = eligible[pick(rng)];
      const LoadedSample& s = samples_[idx];
      AugmentedSample a;
      const std::uint64_t aug_seed =
          mix_seed(seed_ ^ 0x5bf0'3635ULL, static_cast<std::uint64_t>(iteration) * 64 +
                                               static_cast<std::uint64_t>(b));
      a.image = apply_pixel_blur(s.image, stage.blur_fraction, aug_seed);
      a.image = apply_mask(a.image, s.polygons, stage.mask_fraction, mix_seed(aug_seed, 0x77));
      a.source = &s;
      out.push_back(std::move(a));
    }
    return out;
  }

private:
  std::vector<LoadedSample> samples_;
  CurriculumSchedule schedule_;
  std::uint64_t seed_;
  std::vector<std::size_t> by_difficulty_;
};

// ---------------------------------------------------------------------------
// Synthetic corpus: high-contrast striped rotated rectangles ("pseudo-text")
// on smoothly textured backgrounds, with exact ground-truth quads.
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor synth_background(int size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int grid = 5;
  double coarse[3][grid][grid];
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < grid; ++i)
      for (int j = 0; j < grid; ++j) coarse[c][i][j] = 0.35 + 0.3 * u(rng);
  Tensor img({3, size, size});
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double gy = static_cast<double>(y) / size * (grid - 1);
      const double gx = static_cast<double>(x) / size * (grid - 1);
      const int i0 = std::min(grid - 2, static_cast<int>(gy));
      const int j0 = std::min(grid - 2, static_cast<int>(gx));
      const double fy = gy - i0, fx = gx - j0;
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - fy) * ((1 - fx) * coarse[c][i0][j0] + fx * coarse[c][i0][j0 + 1]) +
                         fy * ((1 - fx) * coarse[c][i0 + 1][j0] + fx * coarse[c][i0 + 1][j0 + 1]);
        img(c, y, x) = v;
      }
    }
  }
  // light per-pixel grain
  for (std::int64_t i = 0; i < img.size(); ++i) img[i] += 0.04 * (u(rng) - 0.5);
  return img;
}

inline void render_text_rect(Tensor& img, const RotatedRect& rect, double base, double stripe_delta) {
  const int size = img.dim(1);
  const double ca = std::cos(rect.angle), sa = std::sin(rect.angle);
  const int x0 = std::max(0, static_cast<int>(rect.center.x - rect.half_w - rect.half_h - 2));
  const int x1 = std::min(size - 1, static_cast<int>(rect.center.x + rect.half_w + rect.half_h + 2));
  const int y0 = std::max(0, static_cast<int>(rect.center.y - rect.half_w - rect.half_h - 2));
  const int y1 = std::min(size - 1, static_cast<int>(rect.center.y + rect.half_w + rect.half_h + 2));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - rect.center.x, dy = y - rect.center.y;
      const double lx = dx * ca - dy * sa;
      const double ly = dx * sa + dy * ca;
      if (std::fabs(lx) > rect.half_w || std::fabs(ly) > rect.half_h) continue;
      // stroke-like stripes along the long axis
      const int band = static_cast<int>(std::floor((lx + rect.half_w) / 5.0));
      const double v = base + (band % 2 == 0 ? stripe_delta : 0.0);
      for (int c = 0; c < 3; ++c) img(c, y, x) = v;
    }
  }
}

}  // namespace detail

// Writes images/, gts/ and manifest.tsv under out_dir; bitwise deterministic
// per (count, image_size, seed).
inline std::vector<SampleRecord> generate_synthetic_dataset(int count, int image_size,
                                                            std::uint64_t seed,
                                                            const std::string& out_dir) {
  std::vector<SampleRecord> records;
  if (count == 0) return records;
  std::filesystem::create_directories(out_dir + "/images");
  std::filesystem::create_directories(out_dir + "/gts");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  for (int n = 0; n < count; ++n) {
    Tensor img = detail::synth_background(image_size, rng);
    const int boxes = 1 + static_cast<int>(u(rng) * 3.0);  // 1..3
    std::vector<TextPolygon> polys;
    for (int b = 0; b < boxes; ++b) {
      for (int attempt = 0; attempt < 60; ++attempt) {
        RotatedRect rect;
        rect.half_h = 6.0 + 4.0 * u(rng);                  // short side 12..20
        rect.half_w = rect.half_h * (1.5 + 1.1 * u(rng));  // elongated like a word
        rect.half_w = std::min(rect.half_w, image_size / 3.2);
        rect.angle = -0.55 + 1.1 * u(rng);
        const double margin = std::hypot(rect.half_w, rect.half_h) + 3.0;
        if (2 * margin >= image_size) continue;
        rect.center = {margin + u(rng) * (image_size - 2 * margin),
                       margin + u(rng) * (image_size - 2 * margin)};
        const Quad q = rotated_rect_corners(rect);
        bool clash = false;
        for (const auto& existing : polys) {
          // keep regions separated so decode/NMS roundtrips stay one-to-one
          RotatedRect grown = rect;
          grown.half_w += 4;
          grown.half_h += 4;
          if (polygon_iou(rotated_rect_corners(grown), existing.v) > 0.0) clash = true;
        }
        if (clash) continue;
        const bool dark = u(rng) < 0.5;
        const double base = dark ? 0.05 + 0.1 * u(rng) : 0.85 + 0.1 * u(rng);
        const double stripe = dark ? 0.25 : -0.25;
        detail::render_text_rect(img, rect, base, stripe);
        TextPolygon p;
        p.v = q;
        p.transcription = "TEXT";
        polys.push_back(p);
        break;
      }
    }
    char img_name[64], gt_name[64];
    std::snprintf(img_name, sizeof img_name, "images/img_%03d.png", n);
    std::snprintf(gt_name, sizeof gt_name, "gts/img_%03d.txt", n);
    const std::string img_path = out_dir + "/" + img_name;
    const std::string gt_path = out_dir + "/" + gt_name;
    save_image(img_path, img);
    std::ofstream gt(gt_path);
    if (!gt) throw DataError("cannot write gt file: " + gt_path);
    for (const auto& p : polys) {
      for (int k = 0; k < 4; ++k)
        gt << std::lround(p.v[static_cast<std::size_t>(k)].x) << ','
           << std::lround(p.v[static_cast<std::size_t>(k)].y) << ',';
      gt << p.transcription << '\n';
    }
    records.push_back({img_path, gt_path, 0.0});
  }
  std::ofstream manifest(out_dir + "/manifest.tsv");
  if (!manifest) throw DataError("cannot write manifest in " + out_dir);
  for (const auto& r : records) manifest << r.image_path << '\t' << r.gt_path << '\n';
  return records;
}

}  // namespace frbdet
