#include "tpsadv/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include <png.h>

namespace tpsadv {
namespace {

static_assert(std::endian::native == std::endian::little,
              "PF32 encoding assumes a little-endian host");

constexpr char kMagic[4] = {'P', 'F', '3', '2'};

void put_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_pf32(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(img.width()));
  put_u32(out, static_cast<std::uint32_t>(img.height()));
  put_u32(out, Image::kChannels);
  std::vector<float> buf(img.size());
  std::transform(img.data().begin(), img.data().end(), buf.begin(),
                 [](double v) { return static_cast<float>(v); });
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw IoError("write failed: " + path.string());
}

Image read_pf32(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw IoError("not a PF32 file: " + path.string());
  const std::uint32_t w = get_u32(in);
  const std::uint32_t h = get_u32(in);
  const std::uint32_t c = get_u32(in);
  if (!in || c != Image::kChannels || w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16)) {
    throw IoError("unsupported PF32 header in " + path.string());
  }
  Image img(static_cast<int>(w), static_cast<int>(h));
  std::vector<float> buf(img.size());
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw IoError("truncated PF32 data in " + path.string());
  std::copy(buf.begin(), buf.end(), img.data().begin());
  return img;
}

void write_png(const Image& img, const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_byte> rows(static_cast<std::size_t>(img.width()) * img.height() * 3);
  for (std::size_t i = 0; i < img.size(); ++i) {
    rows[i] = static_cast<png_byte>(std::lround(std::clamp(img.data()[i], 0.0, 1.0) * 255.0));
  }
  std::vector<png_bytep> row_ptrs(img.height());
  for (int y = 0; y < img.height(); ++y) row_ptrs[y] = rows.data() + static_cast<std::size_t>(y) * img.width() * 3;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_byte> rows;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("PNG decoding failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_gray_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  rows.resize(static_cast<std::size_t>(w) * h * 3);
  row_ptrs.resize(h);
  for (int y = 0; y < h; ++y) row_ptrs[y] = rows.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, row_ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(w, h);
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = rows[i] / 255.0;
  return img;
}

Image read_image(const std::filesystem::path& path) {
  if (path.extension() == ".png") return read_png(path);
  if (path.extension() == ".pf32") return read_pf32(path);
  throw IoError("unsupported image extension (use .pf32 or .png): " + path.string());
}

void write_image(const Image& img, const std::filesystem::path& path) {
  if (path.extension() == ".png") {
    write_png(img, path);
  } else if (path.extension() == ".pf32") {
    write_pf32(img, path);
  } else {
    throw IoError("unsupported image extension (use .pf32 or .png): " + path.string());
  }
}

}  // namespace tpsadv
