#include "dctgen/dct_quant.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "dctgen/error.hpp"
#include "dctgen/pixel_pipeline.hpp"

namespace dctgen {

namespace {

constexpr std::array<int, 64> kLuma = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

constexpr std::array<int, 64> kChroma = {
    17, 18, 24, 47, 99, 99, 99, 99,  //
    18, 21, 26, 66, 99, 99, 99, 99,  //
    24, 26, 56, 99, 99, 99, 99, 99,  //
    47, 66, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99};

constexpr int kMaxCachedBasis = 32;

double alpha(int k) { return k == 0 ? 1.0 / std::numbers::sqrt2 : 1.0; }

// basis[k * B + n] = sqrt(2/B) * alpha(k) * cos((2n + 1) k pi / 2B)
std::vector<double> make_basis(int b) {
  std::vector<double> basis(static_cast<std::size_t>(b) * b);
  const double scale = std::sqrt(2.0 / b);
  for (int k = 0; k < b; ++k) {
    for (int n = 0; n < b; ++n) {
      basis[static_cast<std::size_t>(k) * b + n] =
          scale * alpha(k) * std::cos((2.0 * n + 1.0) * k * std::numbers::pi / (2.0 * b));
    }
  }
  return basis;
}

const std::vector<double>& cached_basis(int b) {
  static const std::vector<std::vector<double>> tables = [] {
    std::vector<std::vector<double>> t(kMaxCachedBasis + 1);
    for (int size = 1; size <= kMaxCachedBasis; ++size) t[size] = make_basis(size);
    return t;
  }();
  return tables[b];
}

void check_block(const Block& block) {
  if (block.size < 1 || block.values.size() != static_cast<std::size_t>(block.size) * block.size) {
    throw InputError("block values do not match block size");
  }
}

// out = M * in * M^T (forward) or M^T * in * M (inverse), M the basis matrix.
Block separable(const Block& in, bool inverse) {
  check_block(in);
  const int b = in.size;
  std::vector<double> local;
  const std::vector<double>* basis_ptr = nullptr;
  if (b <= kMaxCachedBasis) {
    basis_ptr = &cached_basis(b);
  } else {
    local = make_basis(b);
    basis_ptr = &local;
  }
  const auto& m = *basis_ptr;
  auto coef = [&](int k, int n) { return inverse ? m[static_cast<std::size_t>(n) * b + k] : m[static_cast<std::size_t>(k) * b + n]; };

  // Rows first (horizontal transform), then columns.
  Block tmp(b);
  for (int r = 0; r < b; ++r) {
    for (int k = 0; k < b; ++k) {
      double acc = 0.0;
      for (int n = 0; n < b; ++n) acc += coef(k, n) * in.at(r, n);
      tmp.at(r, k) = acc;
    }
  }
  Block out(b);
  for (int c = 0; c < b; ++c) {
    for (int k = 0; k < b; ++k) {
      double acc = 0.0;
      for (int n = 0; n < b; ++n) acc += coef(k, n) * tmp.at(n, c);
      out.at(k, c) = acc;
    }
  }
  return out;
}

}  // namespace

std::span<const int, 64> base_luma_table() { return kLuma; }
std::span<const int, 64> base_chroma_table() { return kChroma; }

Block dct2(const Block& pixels) { return separable(pixels, false); }
Block idct2(const Block& coefficients) { return separable(coefficients, true); }

Block dct2_direct(const Block& pixels) {
  check_block(pixels);
  const int b = pixels.size;
  const double pi = std::numbers::pi;
  Block out(b);
  for (int v = 0; v < b; ++v) {
    for (int u = 0; u < b; ++u) {
      double acc = 0.0;
      for (int y = 0; y < b; ++y) {
        for (int x = 0; x < b; ++x) {
          acc += pixels.at(y, x) * std::cos((2.0 * x + 1.0) * u * pi / (2.0 * b)) *
                 std::cos((2.0 * y + 1.0) * v * pi / (2.0 * b));
        }
      }
      out.at(v, u) = (2.0 / b) * alpha(u) * alpha(v) * acc;
    }
  }
  return out;
}

Block idct2_direct(const Block& coefficients) {
  check_block(coefficients);
  const int b = coefficients.size;
  const double pi = std::numbers::pi;
  Block out(b);
  for (int y = 0; y < b; ++y) {
    for (int x = 0; x < b; ++x) {
      double acc = 0.0;
      for (int v = 0; v < b; ++v) {
        for (int u = 0; u < b; ++u) {
          acc += alpha(u) * alpha(v) * coefficients.at(v, u) * std::cos((2.0 * x + 1.0) * u * pi / (2.0 * b)) *
                 std::cos((2.0 * y + 1.0) * v * pi / (2.0 * b));
        }
      }
      out.at(y, x) = (2.0 / b) * acc;
    }
  }
  return out;
}

int quality_scale(int quality) {
  if (quality < 1 || quality > 100) throw InputError("quality must be in [1, 100], got " + std::to_string(quality));
  return quality < 50 ? 5000 / quality : 200 - 2 * quality;
}

QuantMatrix quant_matrix(int quality, QuantKind kind, int block_size) {
  const int scale = quality_scale(quality);
  if (!is_supported_block_size(block_size)) {
    throw InputError("unsupported block size " + std::to_string(block_size) + " (expected 4, 8, 16 or 32)");
  }
  const auto& base = kind == QuantKind::Luma ? kLuma : kChroma;
  QuantMatrix q{block_size, kind, quality, std::vector<int>(static_cast<std::size_t>(block_size) * block_size)};
  // Nearest neighbour with half-pixel centres: src = floor((i + 0.5) * 8 / B).
  auto src_index = [block_size](int i) { return std::min(7, (2 * i + 1) * 8 / (2 * block_size)); };
  for (int r = 0; r < block_size; ++r) {
    for (int c = 0; c < block_size; ++c) {
      const long t = base[static_cast<std::size_t>(src_index(r)) * 8 + src_index(c)];
      const long entry = (t * scale + 50) / 100;
      q.entries[static_cast<std::size_t>(r) * block_size + c] = static_cast<int>(std::max(1L, entry));
    }
  }
  return q;
}

std::vector<int> quantize(const Block& coefficients, const QuantMatrix& q, ClipBound clip) {
  check_block(coefficients);
  if (coefficients.size != q.size) throw InputError("quantization matrix size does not match block");
  if (clip.value < 1) throw InputError("clip bound must be >= 1");
  std::vector<int> out(coefficients.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double r = std::round(coefficients.values[i] / q.entries[i]);  // std::round ties away from zero
    out[i] = static_cast<int>(std::clamp(r, -static_cast<double>(clip.value), static_cast<double>(clip.value)));
  }
  return out;
}

Block dequantize(std::span<const int> quantized, const QuantMatrix& q) {
  if (quantized.size() != q.entries.size()) throw InputError("quantized block size does not match matrix");
  Block out(q.size);
  for (std::size_t i = 0; i < quantized.size(); ++i) out.values[i] = static_cast<double>(quantized[i]) * q.entries[i];
  return out;
}

}  // namespace dctgen
