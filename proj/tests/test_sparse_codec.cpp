#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "dctgen/error.hpp"
#include "dctgen/sparse_codec.hpp"
#include "dctgen/synthetic.hpp"

using namespace dctgen;

namespace {

Geometry geo64() { return Geometry{64, 64, 8, 50, 1200}; }

std::string sdct_bytes(const TupleSeq& seq) {
  std::ostringstream os;
  write_sdct(seq, os);
  return os.str();
}

TupleSeq parse_bytes(const std::string& bytes) {
  std::istringstream is(bytes);
  return read_sdct(is);
}

}  // namespace

TEST_CASE("zigzag tables") {
  using P = std::vector<std::pair<int, int>>;
  CHECK(zigzag(1) == P{{0, 0}});
  CHECK(zigzag(2) == P{{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  CHECK(zigzag(3) == P{{0, 0}, {0, 1}, {1, 0}, {2, 0}, {1, 1}, {0, 2}, {1, 2}, {2, 1}, {2, 2}});
  for (int b : {4, 8, 16, 32}) {
    const auto z = zigzag(b);
    std::vector<int> seen(b * b, 0);
    for (auto [r, c] : z) ++seen[r * b + c];
    for (int s : seen) CHECK(s == 1);
    CHECK(z.back() == std::pair{b - 1, b - 1});
  }
  const auto z8 = zigzag(8);
  CHECK(z8[63] == std::pair{7, 7});
  CHECK(z8[5] == std::pair{0, 2});
}

TEST_CASE("channel ranks") {
  for (int c = 0; c < 192; ++c) {
    CHECK(channel_at_rank(channel_rank(c, 8, Ordering::Generation), 8, Ordering::Generation) == c);
    CHECK(channel_at_rank(channel_rank(c, 8, Ordering::Colorization), 8, Ordering::Colorization) == c);
  }
  CHECK(channel_at_rank(0, 8, Ordering::Generation) == 0);
  CHECK(channel_at_rank(1, 8, Ordering::Generation) == 64);
  CHECK(channel_at_rank(2, 8, Ordering::Generation) == 128);
  CHECK(channel_at_rank(3, 8, Ordering::Generation) == 1);
  CHECK(channel_at_rank(64, 8, Ordering::Colorization) == 64);
  CHECK(channel_at_rank(65, 8, Ordering::Colorization) == 128);
}

TEST_CASE("assembly geometry and placement") {
  const Geometry g = geo64();
  DctImage img(g);
  CHECK(g.blocks_high() == 8);
  CHECK(g.num_channels() == 192);
  CHECK(img.values.size() == 8u * 8u * 192u);

  QuantGrids grids{QuantGrid(8, 8, 8), QuantGrid(4, 4, 8), QuantGrid(4, 4, 8)};
  CHECK(assemble_dct_image(grids, g).count_nonzero() == 0);
  grids.luma.block(1, 2)[0] = 5;
  grids.cb.block(1, 1)[1] = -3;  // natural (0, 1) is zigzag index 1
  const DctImage a = assemble_dct_image(grids, g);
  CHECK(a.count_nonzero() == 2);
  CHECK(a.at(1, 2, 0) == 5);
  CHECK(a.at(2, 2, 64 + 1) == -3);
  CHECK(disassemble_dct_image(a) == grids);
}

TEST_CASE("disassemble rejects chroma at odd positions") {
  DctImage img(geo64());
  img.at(1, 1, 64) = 4;
  CHECK_THROWS_AS(disassemble_dct_image(img), FormatError);
  DctImage zero(geo64());
  const QuantGrids g = disassemble_dct_image(zero);
  for (int v : g.luma.values) CHECK(v == 0);
}

TEST_CASE("serialize orders") {
  DctImage img(geo64());
  img.at(0, 0) = 5;
  TupleSeq s = serialize(img, Ordering::Generation);
  REQUIRE(s.triples.size() == 1);
  CHECK(s.triples[0] == Triple{0, 0, 5});
  CHECK(s.terminated);
  CHECK(s.elements().back() == Triple{192, 0, 0});

  DctImage dense(geo64());
  for (int c : {0, 64, 128, 1, 65, 129, 2}) dense.at(0, c) = 1;
  std::vector<int> channels;
  for (const Triple& t : serialize(dense, Ordering::Generation).triples) channels.push_back(t.channel);
  CHECK(channels == std::vector<int>{0, 64, 128, 1, 65, 129, 2});

  std::mt19937_64 rng(1);
  const DctImage r = make_random_dct_image(rng, geo64(), 400, 50);
  const TupleSeq col = serialize(r, Ordering::Colorization);
  int max_luma = -1, min_chroma = 1 << 30;
  std::size_t last_luma = 0, first_chroma = col.triples.size();
  for (std::size_t i = 0; i < col.triples.size(); ++i) {
    const int c = col.triples[i].channel;
    if (c < 64) {
      max_luma = std::max(max_luma, c);
      last_luma = i;
    } else {
      min_chroma = std::min(min_chroma, c);
      first_chroma = std::min(first_chroma, i);
    }
  }
  CHECK(max_luma < min_chroma);
  CHECK(last_luma < first_chroma);
}

TEST_CASE("generation key strictly increases") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const DctImage r = make_random_dct_image(rng, geo64(), 300);
    const TupleSeq s = serialize(r, Ordering::Generation);
    for (std::size_t i = 1; i < s.triples.size(); ++i) {
      const auto& a = s.triples[i - 1];
      const auto& b = s.triples[i];
      const int ra = channel_rank(a.channel, 8, Ordering::Generation);
      const int rb = channel_rank(b.channel, 8, Ordering::Generation);
      CHECK((ra < rb || (ra == rb && a.position < b.position)));
    }
  }
}

TEST_CASE("deserialize inverts serialize") {
  std::mt19937_64 rng(3);
  for (Ordering o : {Ordering::Generation, Ordering::Colorization}) {
    for (int t = 0; t < 50; ++t) {
      const Geometry g{1 + static_cast<int>(rng() % 70), 1 + static_cast<int>(rng() % 70), 8, 50, 1200};
      const DctImage r = make_random_dct_image(rng, g, rng() % std::min<std::size_t>(200, g.num_positions() * 64 + 1));
      const TupleSeq s = serialize(r, o);
      CHECK(deserialize(s) == r);
      CHECK(serialize(deserialize(s), o) == s);
    }
  }
  TupleSeq empty{geo64(), Ordering::Generation, {}, false};
  CHECK(deserialize(empty).count_nonzero() == 0);
}

TEST_CASE("deserialize rejects malformed sequences") {
  const Geometry g = geo64();
  auto bad = [&](std::vector<Triple> t) {
    const TupleSeq s{g, Ordering::Generation, std::move(t), true};
    CHECK_THROWS_AS(deserialize(s), FormatError);
  };
  bad({{0, 3, 1}, {0, 3, 2}});     // duplicate
  bad({{0, 3, 0}});                // zero value
  bad({{0, 64, 1}});               // position out of range
  bad({{192, 0, 0}});              // stop before the end
  bad({{-1, 0, 1}});               // channel out of range
  bad({{64, 1, 1}});               // chroma at odd column
  bad({{64, 8, 1}});               // chroma at odd row
  bad({{0, 0, 1201}});             // beyond clip
  bad({{1, 0, 1}, {0, 0, 1}});     // out of order
  bad({{0, 5, 1}, {0, 4, 1}});     // positions out of order
}

TEST_CASE("encode and decode real images") {
  std::mt19937_64 rng(4);
  const RgbImage img = make_shapes_image(rng, 40, 56);
  const TupleSeq s = encode_image(img, 8, 75, Ordering::Generation);
  CHECK(s.geometry.height == 40);
  const RgbImage back = decode_to_rgb(s);
  CHECK(back.height == 40);
  CHECK(back.width == 56);
  double err = 0.0;
  for (std::size_t i = 0; i < img.data.size(); ++i) err += std::abs(img.data[i] - back.data[i]);
  CHECK(err / static_cast<double>(img.data.size()) < 6.0);
  CHECK(decode_to_rgb(s) == back);

  const TupleSeq tiny = encode_image(RgbImage(1, 1, 200), 8, 50, Ordering::Generation);
  CHECK(decode_to_rgb(tiny).height == 1);
  CHECK_THROWS_AS(encode_image(img, 6, 50, Ordering::Generation), InputError);
}

TEST_CASE("empty prefix decodes to gray; DC prefix is constant per block") {
  std::mt19937_64 rng(5);
  const TupleSeq s = encode_image(make_shapes_image(rng, 32, 32), 8, 75, Ordering::Generation);
  const RgbImage gray = decode_to_rgb(take_prefix(s, 0));
  for (auto v : gray.data) CHECK(v == 128);

  TupleSeq dc{s.geometry, s.ordering, {}, false};
  for (const Triple& t : s.triples) {
    if (t.channel % 64 == 0) dc.triples.push_back(t);
  }
  const YccPlanes p = dct_image_to_planes(deserialize(dc));
  for (int by = 0; by < 4; ++by) {
    for (int bx = 0; bx < 4; ++bx) {
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) CHECK(std::abs(p.y.at(by * 8 + y, bx * 8 + x) - p.y.at(by * 8, bx * 8)) < 1e-9);
      }
    }
  }
}

TEST_CASE("progressive error strictly decreases") {
  std::mt19937_64 rng(6);
  const TupleSeq s = encode_image(make_shapes_image(rng, 32, 48), 8, 50, Ordering::Generation);
  const DctImage full = deserialize(s);
  double prev = coefficient_sq_error(deserialize(take_prefix(s, 0)), full);
  for (std::size_t n = 1; n <= s.triples.size(); ++n) {
    const double e = coefficient_sq_error(deserialize(take_prefix(s, n)), full);
    CHECK(e < prev);
    prev = e;
  }
  CHECK(prev == 0.0);
  CHECK(take_prefix(s, s.triples.size()).terminated);
  CHECK_FALSE(take_prefix(s, s.triples.size() - 1).terminated);
}

TEST_CASE("bit cost accounting") {
  CHECK(bits_for(1) == 0);
  CHECK(bits_for(2401) == 12);
  CHECK(bits_for(193) == 8);
  CHECK(bits_for(64) == 6);
  DctImage zero(geo64());
  BitCost c = bit_cost(zero);
  CHECK(c.dense_bits == 73728.0);
  CHECK(c.dense_bpp == 6.0);
  CHECK(c.sparse_bits == 0.0);
  std::mt19937_64 rng(7);
  const DctImage r = make_random_dct_image(rng, geo64(), 500);
  c = bit_cost(r);
  CHECK(c.nonzeros == 500);
  CHECK(c.sparse_bits == 13000.0);
  // Breakeven: 73728 / 26 = 2835.7 nonzeros.
  CHECK(bit_cost(make_random_dct_image(rng, geo64(), 2835)).sparse_bits < 73728.0);
  CHECK(bit_cost(make_random_dct_image(rng, geo64(), 2836)).sparse_bits > 73728.0);
}

TEST_CASE("SDCT round trip and byte layout") {
  std::mt19937_64 rng(8);
  const Geometry g{37, 21, 8, 75, 1200};
  const TupleSeq s = serialize(make_random_dct_image(rng, g, 60), Ordering::Colorization);
  const std::string bytes = sdct_bytes(s);
  CHECK(bytes.size() == 4 + 1 + 4 + 4 + 1 + 1 + 1 + 2 + 4 + 60 * 8);
  CHECK(bytes.substr(0, 4) == "SDCT");
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);
  CHECK(static_cast<unsigned char>(bytes[5]) == 37);
  CHECK(static_cast<unsigned char>(bytes[15]) == 1);  // ordering
  CHECK(parse_bytes(bytes) == s);

  TupleSeq one{geo64(), Ordering::Generation, {{1, 2, -3}}, true};
  const std::string b1 = sdct_bytes(one);
  const std::string rec = b1.substr(b1.size() - 8);
  CHECK(rec == std::string("\x01\x00\x02\x00\x00\x00\xfd\xff", 8));
}

TEST_CASE("SDCT reader rejects corrupt files by field") {
  TupleSeq s{geo64(), Ordering::Generation, {{0, 0, 5}, {0, 1, 2}}, true};
  const std::string good = sdct_bytes(s);
  auto expect_error = [](std::string bytes, const char* needle) {
    try {
      parse_bytes(bytes);
      FAIL("accepted corrupt file");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  std::string b = good;
  b[0] = 'X';
  expect_error(b, "magic");
  b = good;
  b[4] = 2;
  expect_error(b, "version");
  b = good;
  b[13] = 6;
  expect_error(b, "block");
  b = good;
  b[14] = 0;
  expect_error(b, "quality");
  b = good;
  b[15] = 7;
  expect_error(b, "ordering");
  expect_error(good.substr(0, good.size() - 3), "trunc");
  expect_error(good + "x", "trailing");
  b = good;
  b[good.size() - 2] = 0;
  b[good.size() - 1] = 0;
  expect_error(b, "zero");
  b = good;
  b[good.size() - 6] = 0;  // second triple's position becomes 0: duplicate
  expect_error(b, "duplicate");
}
