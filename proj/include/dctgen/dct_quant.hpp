#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dctgen {

// Square B x B real block stored row-major. For spatial blocks element
// (r, c) is pixel row r (vertical, y) and column c (horizontal, x). For DCT
// blocks element (r, c) is vertical frequency r and horizontal frequency c.
struct Block {
  int size = 0;
  std::vector<double> values;

  Block() = default;
  explicit Block(int b, double fill = 0.0) : size(b), values(static_cast<std::size_t>(b) * b, fill) {}
  Block(int b, std::span<const double> v) : size(b), values(v.begin(), v.end()) {}

  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * size + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * size + c]; }
};

enum class QuantKind : std::uint8_t { Luma, Chroma };

struct QuantMatrix {
  int size = 0;
  QuantKind kind = QuantKind::Luma;
  int quality = 50;
  std::vector<int> entries;  // row-major, every entry >= 1

  int at(int r, int c) const { return entries[static_cast<std::size_t>(r) * size + c]; }
};

// Upper bound on the magnitude of quantized coefficients.
struct ClipBound {
  int value = 1200;
};

inline constexpr int kDefaultClip = 1200;

// The 8x8 IJG base tables, row-major.
std::span<const int, 64> base_luma_table();
std::span<const int, 64> base_chroma_table();

// Orthonormal 2D DCT-II with scale 2/B, computed as two separable 1D passes.
Block dct2(const Block& pixels);
Block idct2(const Block& coefficients);

// Direct quadruple-sum forward and inverse transforms. Slow; used as
// a verification oracle for the separable path.
Block dct2_direct(const Block& pixels);
Block idct2_direct(const Block& coefficients);

// Quality-scaled table for block size B; base table resized by nearest
// neighbour. Throws InputError for q outside [1, 100] or unsupported B.
QuantMatrix quant_matrix(int quality, QuantKind kind, int block_size);

// IJG scale factor: 5000/q for q < 50, else 200 - 2q (integer arithmetic).
int quality_scale(int quality);

// Round half away from zero, then clamp to [-clip, clip].
std::vector<int> quantize(const Block& coefficients, const QuantMatrix& q, ClipBound clip);
Block dequantize(std::span<const int> quantized, const QuantMatrix& q);

}  // namespace dctgen
