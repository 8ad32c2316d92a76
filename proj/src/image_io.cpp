#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "nsdehaze/error.hpp"
#include "nsdehaze/image.hpp"

namespace nsd::imaging {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_for_read(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NotFound("image not found: " + path.string());
  FilePtr f(std::fopen(path.string().c_str(), "rb"));
  if (!f) throw NotFound("cannot open image: " + path.string());
  return f;
}

Image from_bytes(int h, int w, const std::vector<unsigned char>& rgb) {
  std::vector<double> px(rgb.size());
  std::transform(rgb.begin(), rgb.end(), px.begin(), [](unsigned char v) { return v / 255.0; });
  return Image::from_pixels(h, w, std::move(px));
}

Image read_png(const std::filesystem::path& path) {
  FilePtr f = open_for_read(path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw FormatError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw FormatError("libpng init failed");
  }
  std::vector<unsigned char> rgb;
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  std::string problem;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("cannot decode PNG: " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (bit_depth != 8) {
    problem = "only 8-bit PNG is supported";
  } else if (!(color_type & PNG_COLOR_MASK_COLOR)) {
    problem = "grayscale PNG is not RGB";
  } else {
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    if (stride != static_cast<std::size_t>(width) * 3) {
      problem = "unexpected PNG row layout";
    } else {
      rgb.resize(stride * height);
      std::vector<png_bytep> rows(height);
      for (png_uint_32 y = 0; y < height; ++y) rows[y] = rgb.data() + y * stride;
      png_read_image(png, rows.data());
      png_read_end(png, nullptr);
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (!problem.empty()) throw FormatError(problem + ": " + path.string());
  return from_bytes(static_cast<int>(height), static_cast<int>(width), rgb);
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

Image read_jpeg(const std::filesystem::path& path) {
  FilePtr f = open_for_read(path);
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  std::vector<unsigned char> rgb;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw FormatError("cannot decode JPEG: " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.num_components != 3) {
    jpeg_destroy_decompress(&cinfo);
    throw FormatError("JPEG is not a 3-component color image: " + path.string());
  }
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const int w = static_cast<int>(cinfo.output_width);
  const int h = static_cast<int>(cinfo.output_height);
  rgb.resize(static_cast<std::size_t>(w) * h * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_bytes(h, w, rgb);
}

void write_png(const std::filesystem::path& path, int h, int w, int channels,
               const std::vector<unsigned char>& bytes) {
  FilePtr f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw IoError("cannot write image: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed while writing PNG: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(w) * channels;
  for (int y = 0; y < h; ++y) {
    png_write_row(png, const_cast<png_bytep>(bytes.data() + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  FilePtr f = open_for_read(path);
  std::array<unsigned char, 8> sig{};
  const std::size_t n = std::fread(sig.data(), 1, sig.size(), f.get());
  f.reset();
  if (n >= 8 && png_sig_cmp(sig.data(), 0, 8) == 0) return read_png(path);
  if (n >= 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF) return read_jpeg(path);
  throw FormatError("unrecognized image format: " + path.string());
}

void save_image(const Image& img, const std::filesystem::path& path) {
  if (img.empty()) throw ArgumentError("save_image: empty image");
  std::vector<unsigned char> bytes(img.size());
  const auto px = img.data();
  std::transform(px.begin(), px.end(), bytes.begin(), quantize);
  write_png(path, img.height(), img.width(), 3, bytes);
}

void save_map(const Map& map, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes(map.size());
  const auto px = map.data();
  std::transform(px.begin(), px.end(), bytes.begin(), quantize);
  write_png(path, map.height(), map.width(), 1, bytes);
}

}  // namespace nsd::imaging
