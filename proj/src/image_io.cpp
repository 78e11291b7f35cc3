#include "dctgen/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "dctgen/error.hpp"

namespace dctgen {
namespace fs = std::filesystem;

namespace {

std::string lower_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Reads the next whitespace-delimited PPM header token, skipping comments.
int read_ppm_token(std::istream& in, const fs::path& path) {
  std::string token;
  while (in) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  in >> token;
  if (token.empty() || !std::all_of(token.begin(), token.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw InputError("malformed PPM header in " + path.string());
  }
  return std::stoi(token);
}

}  // namespace

RgbImage read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '6') throw InputError(path.string() + " is not a binary PPM (P6)");
  const int width = read_ppm_token(in, path);
  const int height = read_ppm_token(in, path);
  const int maxval = read_ppm_token(in, path);
  if (width < 1 || height < 1 || maxval != 255) throw InputError("unsupported PPM geometry in " + path.string());
  in.get();  // single whitespace before the raster
  RgbImage img(height, width);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!in) throw InputError("truncated PPM raster in " + path.string());
  return img;
}

void write_ppm(const RgbImage& img, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
}

RgbImage read_png(const fs::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw InputError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("libpng initialisation failed");
  }
  RgbImage img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("failed to decode PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img = RgbImage(static_cast<int>(png_get_image_height(png, info)), static_cast<int>(png_get_image_width(png, info)));
  rows.resize(img.height);
  for (int r = 0; r < img.height; ++r) rows[r] = img.data.data() + static_cast<std::size_t>(r) * img.width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const RgbImage& img, const fs::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw InputError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw InputError("libpng initialisation failed");
  }
  std::vector<png_bytep> rows(img.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw InputError("failed to encode PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < img.height; ++r) {
    rows[r] = const_cast<png_bytep>(img.data.data() + static_cast<std::size_t>(r) * img.width * 3);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RgbImage read_image(const fs::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw InputError("cannot open image " + path.string());
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  probe.close();
  if (png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  if (sig[0] == 'P' && sig[1] == '6') return read_ppm(path);
  throw InputError("unrecognised image format: " + path.string());
}

void write_image(const RgbImage& img, const fs::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".ppm") {
    write_ppm(img, path);
  } else if (ext == ".png") {
    write_png(img, path);
  } else {
    throw InputError("output image must end in .png or .ppm: " + path.string());
  }
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = lower_extension(entry.path());
    if (ext == ".png" || ext == ".ppm") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace dctgen
