#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dctgen {

// Interleaved 8-bit RGB, row-major.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;  // height * width * 3

  RgbImage() = default;
  RgbImage(int h, int w, std::uint8_t fill = 0);

  std::uint8_t& at(int row, int col, int ch) { return data[(static_cast<std::size_t>(row) * width + col) * 3 + ch]; }
  std::uint8_t at(int row, int col, int ch) const { return data[(static_cast<std::size_t>(row) * width + col) * 3 + ch]; }

  bool operator==(const RgbImage&) const = default;
};

// Real-valued single-channel plane, row-major.
struct Plane {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Plane() = default;
  Plane(int h, int w, double fill = 0.0);

  double& at(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
  double at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col]; }

  bool operator==(const Plane&) const = default;
};

// Zero-centered luma at full resolution and chroma at ceil(H/2) x ceil(W/2).
struct YccPlanes {
  Plane y;
  Plane cb;
  Plane cr;
};

enum class PlaneKind : std::uint8_t { Luma, Chroma };

// A plane cut into B x B blocks. Block (i, j) is stored contiguously,
// row-major inside the block: element (r, c) covers plane pixel
// (i*B + r, j*B + c).
struct BlockGrid {
  int rows = 0;  // Hb
  int cols = 0;  // Wb
  int block_size = 0;
  PlaneKind kind = PlaneKind::Luma;
  std::vector<double> values;  // rows * cols * B * B

  BlockGrid() = default;
  BlockGrid(int r, int c, int b, PlaneKind k);

  std::size_t block_area() const { return static_cast<std::size_t>(block_size) * block_size; }
  std::span<double> block(int i, int j) {
    return {values.data() + (static_cast<std::size_t>(i) * cols + j) * block_area(), block_area()};
  }
  std::span<const double> block(int i, int j) const {
    return {values.data() + (static_cast<std::size_t>(i) * cols + j) * block_area(), block_area()};
  }
};

bool is_supported_block_size(int block_size);
int ceil_div(int numerator, int denominator);

// JFIF full-range conversion, then shifted by -128 and clamped to [-128, 127].
// Chroma is reduced by a 2x2 mean (partial cells at odd edges average what exists).
YccPlanes rgb_to_ycc(const RgbImage& img);

// Nearest (2x2 replication) chroma upsampling, inverse JFIF, round and clamp.
RgbImage ycc_to_rgb(const YccPlanes& planes);

Plane downsample_chroma(const Plane& full);
Plane upsample_chroma(const Plane& half, int height, int width);

// Pads by edge replication to a multiple of B. Throws InputError for
// unsupported block sizes.
BlockGrid split_blocks(const Plane& plane, int block_size, PlaneKind kind = PlaneKind::Luma);
Plane merge_blocks(const BlockGrid& grid, int height, int width);

}  // namespace dctgen
