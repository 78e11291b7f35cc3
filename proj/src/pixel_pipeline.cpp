#include "dctgen/pixel_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dctgen/error.hpp"

namespace dctgen {

RgbImage::RgbImage(int h, int w, std::uint8_t fill)
    : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, fill) {}

Plane::Plane(int h, int w, double fill)
    : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

BlockGrid::BlockGrid(int r, int c, int b, PlaneKind k)
    : rows(r), cols(c), block_size(b), kind(k),
      values(static_cast<std::size_t>(r) * c * b * b, 0.0) {}

bool is_supported_block_size(int block_size) {
  return block_size == 4 || block_size == 8 || block_size == 16 || block_size == 32;
}

int ceil_div(int numerator, int denominator) { return (numerator + denominator - 1) / denominator; }

namespace {

double clamp_centered(double v) { return std::clamp(v, -128.0, 127.0); }

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

Plane downsample_chroma(const Plane& full) {
  Plane half(ceil_div(full.height, 2), ceil_div(full.width, 2));
  for (int i = 0; i < half.height; ++i) {
    for (int j = 0; j < half.width; ++j) {
      double sum = 0.0;
      int n = 0;
      for (int r = 2 * i; r < std::min(2 * i + 2, full.height); ++r) {
        for (int c = 2 * j; c < std::min(2 * j + 2, full.width); ++c) {
          sum += full.at(r, c);
          ++n;
        }
      }
      half.at(i, j) = sum / n;
    }
  }
  return half;
}

Plane upsample_chroma(const Plane& half, int height, int width) {
  Plane full(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) full.at(r, c) = half.at(r / 2, c / 2);
  }
  return full;
}

YccPlanes rgb_to_ycc(const RgbImage& img) {
  if (img.height < 1 || img.width < 1) throw InputError("image must be at least 1x1");
  Plane y(img.height, img.width), cb(img.height, img.width), cr(img.height, img.width);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      const double red = img.at(r, c, 0), green = img.at(r, c, 1), blue = img.at(r, c, 2);
      y.at(r, c) = clamp_centered(0.299 * red + 0.587 * green + 0.114 * blue - 128.0);
      cb.at(r, c) = clamp_centered(-0.168736 * red - 0.331264 * green + 0.5 * blue);
      cr.at(r, c) = clamp_centered(0.5 * red - 0.418688 * green - 0.081312 * blue);
    }
  }
  return {std::move(y), downsample_chroma(cb), downsample_chroma(cr)};
}

RgbImage ycc_to_rgb(const YccPlanes& planes) {
  const int h = planes.y.height, w = planes.y.width;
  if (planes.cb.height != ceil_div(h, 2) || planes.cb.width != ceil_div(w, 2) ||
      planes.cr.height != planes.cb.height || planes.cr.width != planes.cb.width) {
    throw InputError("chroma planes must be ceil(H/2) x ceil(W/2)");
  }
  RgbImage img(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double luma = planes.y.at(r, c) + 128.0;
      const double cb = planes.cb.at(r / 2, c / 2);
      const double cr = planes.cr.at(r / 2, c / 2);
      img.at(r, c, 0) = to_byte(luma + 1.402 * cr);
      img.at(r, c, 1) = to_byte(luma - 0.344136 * cb - 0.714136 * cr);
      img.at(r, c, 2) = to_byte(luma + 1.772 * cb);
    }
  }
  return img;
}

BlockGrid split_blocks(const Plane& plane, int block_size, PlaneKind kind) {
  if (!is_supported_block_size(block_size)) {
    throw InputError("unsupported block size " + std::to_string(block_size) + " (expected 4, 8, 16 or 32)");
  }
  if (plane.height < 1 || plane.width < 1) throw InputError("plane must be at least 1x1");
  const int b = block_size;
  BlockGrid grid(ceil_div(plane.height, b), ceil_div(plane.width, b), b, kind);
  for (int i = 0; i < grid.rows; ++i) {
    for (int j = 0; j < grid.cols; ++j) {
      auto blk = grid.block(i, j);
      for (int r = 0; r < b; ++r) {
        const int src_r = std::min(i * b + r, plane.height - 1);
        for (int c = 0; c < b; ++c) {
          const int src_c = std::min(j * b + c, plane.width - 1);
          blk[static_cast<std::size_t>(r) * b + c] = plane.at(src_r, src_c);
        }
      }
    }
  }
  return grid;
}

Plane merge_blocks(const BlockGrid& grid, int height, int width) {
  const int b = grid.block_size;
  if (ceil_div(height, b) != grid.rows || ceil_div(width, b) != grid.cols) {
    throw InputError("block grid does not cover a " + std::to_string(height) + "x" + std::to_string(width) + " plane");
  }
  Plane plane(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      plane.at(r, c) = grid.block(r / b, c / b)[static_cast<std::size_t>(r % b) * b + c % b];
    }
  }
  return plane;
}

}  // namespace dctgen
