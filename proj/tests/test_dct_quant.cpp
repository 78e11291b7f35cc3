#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "dctgen/dct_quant.hpp"
#include "dctgen/error.hpp"

using namespace dctgen;

namespace {

Block random_block(std::mt19937_64& rng, int b) {
  std::uniform_real_distribution<double> d(-128.0, 127.0);
  Block blk(b);
  for (double& v : blk.values) v = d(rng);
  return blk;
}

double max_abs_diff(const Block& a, const Block& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

double energy(const Block& a) {
  double s = 0.0;
  for (double v : a.values) s += v * v;
  return s;
}

}  // namespace

TEST_CASE("constant block has a single DC coefficient") {
  const Block d = dct2(Block(8, 4.0));
  CHECK(d.at(0, 0) == doctest::Approx(32.0).epsilon(1e-12));
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      if (r || c) CHECK(std::abs(d.at(r, c)) < 1e-12);
    }
  }
  CHECK(max_abs_diff(dct2(Block(8)), Block(8)) == 0.0);
}

TEST_CASE("DC-only inverse is constant") {
  Block d(8);
  d.at(0, 0) = 32.0;
  CHECK(max_abs_diff(idct2(d), Block(8, 4.0)) < 1e-12);
}

TEST_CASE("single vertical-frequency coefficient gives the cosine row pattern") {
  for (int b : {4, 8, 16}) {
    Block d(b);
    d.at(1, 0) = 1.0;
    const Block p = idct2(d);
    for (int y = 0; y < b; ++y) {
      const double expect = (2.0 / b) * (1.0 / std::sqrt(2.0)) * std::cos((2 * y + 1) * std::numbers::pi / (2.0 * b));
      for (int x = 0; x < b; ++x) CHECK(std::abs(p.at(y, x) - expect) < 1e-12);
    }
  }
}

TEST_CASE("separable transforms agree with the direct sums") {
  std::mt19937_64 rng(1);
  for (int b : {4, 8, 16}) {
    for (int t = 0; t < 5; ++t) {
      const Block p = random_block(rng, b);
      CHECK(max_abs_diff(dct2(p), dct2_direct(p)) < 1e-9);
      CHECK(max_abs_diff(idct2(p), idct2_direct(p)) < 1e-9);
    }
  }
}

TEST_CASE("round trip and Parseval over random blocks") {
  std::mt19937_64 rng(2);
  for (int b : {4, 8, 16, 32}) {
    for (int t = 0; t < 100; ++t) {
      const Block p = random_block(rng, b);
      const Block d = dct2(p);
      CHECK(max_abs_diff(idct2(d), p) <= 1e-9);
      CHECK(std::abs(energy(d) - energy(p)) <= 1e-9 * energy(p));
    }
  }
}

TEST_CASE("transform is linear") {
  std::mt19937_64 rng(3);
  const Block p1 = random_block(rng, 8), p2 = random_block(rng, 8);
  Block mix(8);
  for (std::size_t i = 0; i < mix.values.size(); ++i) mix.values[i] = 2.5 * p1.values[i] - 0.75 * p2.values[i];
  const Block d1 = dct2(p1), d2 = dct2(p2), dm = dct2(mix);
  for (std::size_t i = 0; i < mix.values.size(); ++i) {
    CHECK(std::abs(dm.values[i] - (2.5 * d1.values[i] - 0.75 * d2.values[i])) < 1e-9);
  }
}

TEST_CASE("coefficients are bounded by 128 B") {
  std::mt19937_64 rng(4);
  for (int b : {4, 8, 32}) {
    const Block d = dct2(random_block(rng, b));
    for (double v : d.values) CHECK(std::abs(v) <= 128.0 * b);
    CHECK(std::abs(dct2(Block(b, -128.0)).at(0, 0)) <= 128.0 * b);
  }
}

TEST_CASE("quality scale follows the IJG rule") {
  CHECK(quality_scale(50) == 100);
  CHECK(quality_scale(10) == 500);
  CHECK(quality_scale(100) == 0);
  CHECK(quality_scale(75) == 50);
  CHECK(quality_scale(1) == 5000);
  CHECK_THROWS_AS(quality_scale(0), InputError);
  CHECK_THROWS_AS(quality_scale(101), InputError);
}

TEST_CASE("q=50 reproduces the base tables") {
  const QuantMatrix l = quant_matrix(50, QuantKind::Luma, 8);
  const QuantMatrix c = quant_matrix(50, QuantKind::Chroma, 8);
  for (int i = 0; i < 64; ++i) {
    CHECK(l.entries[i] == base_luma_table()[i]);
    CHECK(c.entries[i] == base_chroma_table()[i]);
  }
  CHECK(base_luma_table()[0] == 16);
  CHECK(base_luma_table()[63] == 99);
  CHECK(base_chroma_table()[0] == 17);
}

TEST_CASE("quality extremes") {
  CHECK(quant_matrix(10, QuantKind::Luma, 8).at(0, 0) == 80);
  for (int b : {4, 8, 16, 32}) {
    for (int v : quant_matrix(100, QuantKind::Luma, b).entries) CHECK(v == 1);
  }
  CHECK_THROWS_AS(quant_matrix(0, QuantKind::Luma, 8), InputError);
  CHECK_THROWS_AS(quant_matrix(50, QuantKind::Luma, 12), InputError);
}

TEST_CASE("resized tables use nearest neighbour") {
  const QuantMatrix q4 = quant_matrix(50, QuantKind::Luma, 4);
  // Cell i of a 4x4 table samples base index 2i + 1.
  CHECK(q4.at(0, 0) == base_luma_table()[1 * 8 + 1]);
  CHECK(q4.at(3, 2) == base_luma_table()[7 * 8 + 5]);
  const QuantMatrix q16 = quant_matrix(50, QuantKind::Chroma, 16);
  CHECK(q16.at(0, 1) == base_chroma_table()[0]);
  CHECK(q16.at(15, 14) == base_chroma_table()[63]);
}

TEST_CASE("quant matrices are elementwise non-increasing in quality") {
  for (QuantKind kind : {QuantKind::Luma, QuantKind::Chroma}) {
    for (int b : {4, 8, 16, 32}) {
      QuantMatrix prev = quant_matrix(1, kind, b);
      for (int q = 2; q <= 100; ++q) {
        const QuantMatrix cur = quant_matrix(q, kind, b);
        for (std::size_t i = 0; i < cur.entries.size(); ++i) {
          CHECK(cur.entries[i] >= 1);
          CHECK(cur.entries[i] <= prev.entries[i]);
        }
        prev = cur;
      }
    }
  }
}

TEST_CASE("quantize rounding and clipping") {
  QuantMatrix q{1, QuantKind::Luma, 50, {16}};
  auto one = [&](double d, int clip = 1200) { return quantize(Block(1, d), q, ClipBound{clip})[0]; };
  CHECK(one(17.0) == 1);
  CHECK(one(-24.0) == -2);
  CHECK(one(24.0) == 2);
  CHECK(one(7.9) == 0);
  QuantMatrix unit{1, QuantKind::Luma, 100, {1}};
  CHECK(quantize(Block(1, 100000.0), unit, ClipBound{1200})[0] == 1200);
  CHECK(quantize(Block(1, -100000.0), unit, ClipBound{1200})[0] == -1200);
  const int v[] = {1};
  CHECK(dequantize(v, q).at(0, 0) == 16.0);
  const int z[] = {0};
  CHECK(dequantize(z, q).at(0, 0) == 0.0);
}

TEST_CASE("quantization error is at most Q/2") {
  std::mt19937_64 rng(6);
  for (int b : {4, 8, 16, 32}) {
    for (int quality : {1, 10, 50, 90, 100}) {
      const QuantMatrix q = quant_matrix(quality, QuantKind::Luma, b);
      for (int t = 0; t < 10; ++t) {
        const Block d = dct2(random_block(rng, b));
        const Block back = dequantize(quantize(d, q, ClipBound{}), q);
        for (std::size_t i = 0; i < d.values.size(); ++i) {
          CHECK(std::abs(back.values[i] - d.values[i]) <= q.entries[i] / 2.0 + 1e-9);
        }
      }
    }
  }
}
