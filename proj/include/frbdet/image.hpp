#pragma once

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>
#include <jpeglib.h>

#include "frbdet/geometry.hpp"
#include "frbdet/tensor.hpp"

namespace frbdet {

// Data-level failures (missing files, bad formats) map to CLI exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Images are Tensor [3][H][W] with values in [0,1].

inline unsigned char to_byte(double v) {
  const double s = std::min(std::max(v, 0.0), 1.0) * 255.0;
  return static_cast<unsigned char>(s + 0.5);
}

inline std::string lower_ext(const std::string& path) {
  const std::size_t dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

// ----------------------------- PPM (P6) -----------------------------------

inline Tensor load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw DataError("not a P6 ppm: " + path);
  auto next_token = [&]() -> long {
    long v;
    while (true) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string comment;
        std::getline(in, comment);
        continue;
      }
      if (!(in >> v)) throw DataError("bad ppm header: " + path);
      return v;
    }
  };
  const long w = next_token();
  const long h = next_token();
  const long maxv = next_token();
  if (w <= 0 || h <= 0 || maxv != 255) throw DataError("unsupported ppm: " + path);
  in.get();  // single whitespace after header
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  Tensor img({3, static_cast<int>(h), static_cast<int>(w)});
  for (long y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!in) throw DataError("truncated ppm: " + path);
    for (long x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img(c, static_cast<int>(y), static_cast<int>(x)) =
            row[static_cast<std::size_t>(3 * x + c)] / 255.0;
  }
  return img;
}

inline void save_ppm(const std::string& path, const Tensor& img) {
  const int h = img.dim(1), w = img.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image: " + path);
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(3 * x + c)] = to_byte(img(c, y, x));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

// ----------------------------- PNG ----------------------------------------

inline Tensor load_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw DataError("cannot open image: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DataError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DataError("corrupt png: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  std::vector<unsigned char> data(static_cast<std::size_t>(w) * h * 3);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = data.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  Tensor img({3, static_cast<int>(h), static_cast<int>(w)});
  for (png_uint_32 y = 0; y < h; ++y)
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img(c, static_cast<int>(y), static_cast<int>(x)) =
            data[(static_cast<std::size_t>(y) * w + x) * 3 + static_cast<std::size_t>(c)] / 255.0;
  return img;
}

inline void save_png(const std::string& path, const Tensor& img) {
  const int h = img.dim(1), w = img.dim(2);
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw DataError("cannot write image: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw DataError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw DataError("png write failed: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(3 * x + c)] = to_byte(img(c, y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

// ----------------------------- JPEG ---------------------------------------

inline Tensor load_jpeg(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw DataError("cannot open image: " + path);
  jpeg_decompress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, fp);
  if (jpeg_read_header(&cinfo, TRUE) != JPEG_HEADER_OK) {
    jpeg_destroy_decompress(&cinfo);
    std::fclose(fp);
    throw DataError("corrupt jpeg: " + path);
  }
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const int w = static_cast<int>(cinfo.output_width);
  const int h = static_cast<int>(cinfo.output_height);
  Tensor img({3, h, w});
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  unsigned char* rowp = row.data();
  while (cinfo.output_scanline < cinfo.output_height) {
    const int y = static_cast<int>(cinfo.output_scanline);
    jpeg_read_scanlines(&cinfo, &rowp, 1);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img(c, y, x) = row[static_cast<std::size_t>(3 * x + c)] / 255.0;
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  std::fclose(fp);
  return img;
}

inline void save_jpeg(const std::string& path, const Tensor& img, int quality = 95) {
  const int h = img.dim(1), w = img.dim(2);
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw DataError("cannot write image: " + path);
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, fp);
  cinfo.image_width = static_cast<JDIMENSION>(w);
  cinfo.image_height = static_cast<JDIMENSION>(h);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  unsigned char* rowp = row.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(3 * x + c)] = to_byte(img(c, y, x));
    jpeg_write_scanlines(&cinfo, &rowp, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::fclose(fp);
}

// ----------------------------- dispatch -----------------------------------

inline Tensor load_image(const std::string& path) {
  const std::string ext = lower_ext(path);
  if (ext == "ppm") return load_ppm(path);
  if (ext == "png") return load_png(path);
  if (ext == "jpg" || ext == "jpeg") return load_jpeg(path);
  throw DataError("unsupported image format: " + path);
}

inline void save_image(const std::string& path, const Tensor& img) {
  if (img.rank() != 3 || img.dim(0) != 3) throw std::invalid_argument("save_image: [3][H][W] expected");
  const std::string ext = lower_ext(path);
  if (ext == "ppm") return save_ppm(path, img);
  if (ext == "png") return save_png(path, img);
  if (ext == "jpg" || ext == "jpeg") return save_jpeg(path, img);
  throw DataError("unsupported image format: " + path);
}

// Pads to the next multiple of `multiple` with mid-gray so arbitrary images
// fit the encoder's 32-pixel grid; geometry coordinates are unaffected.
inline Tensor pad_to_multiple(const Tensor& img, int multiple) {
  const int h = img.dim(1), w = img.dim(2);
  const int H = (h + multiple - 1) / multiple * multiple;
  const int W = (w + multiple - 1) / multiple * multiple;
  if (H == h && W == w) return img;
  Tensor out = Tensor::full({3, H, W}, 0.5);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out(c, y, x) = img(c, y, x);
  return out;
}

// Draws the polygon outline (used by detect --annotate).
inline void draw_polygon(Tensor& img, const Quad& q, double r, double g, double b) {
  const int H = img.dim(1), W = img.dim(2);
  for (int e = 0; e < 4; ++e) {
    const Point& a = q[static_cast<std::size_t>(e)];
    const Point& c = q[static_cast<std::size_t>((e + 1) % 4)];
    const double len = std::max(1.0, edge_length(a, c));
    const int steps = static_cast<int>(len * 2.0) + 1;
    for (int s = 0; s <= steps; ++s) {
      const double t = static_cast<double>(s) / steps;
      const int x = static_cast<int>(a.x + t * (c.x - a.x) + 0.5);
      const int y = static_cast<int>(a.y + t * (c.y - a.y) + 0.5);
      if (x < 0 || x >= W || y < 0 || y >= H) continue;
      img(0, y, x) = r;
      img(1, y, x) = g;
      img(2, y, x) = b;
    }
  }
}

}  // namespace frbdet
