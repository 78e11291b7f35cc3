#include "doctest.h"

#include <filesystem>
#include <random>

#include "dctgen/error.hpp"
#include "dctgen/image_io.hpp"
#include "dctgen/pixel_pipeline.hpp"
#include "dctgen/synthetic.hpp"

using namespace dctgen;

namespace {

RgbImage uniform(int h, int w, int r, int g, int b) {
  RgbImage img(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(y, x, 0) = static_cast<std::uint8_t>(r);
      img.at(y, x, 1) = static_cast<std::uint8_t>(g);
      img.at(y, x, 2) = static_cast<std::uint8_t>(b);
    }
  }
  return img;
}

Plane random_plane(std::mt19937_64& rng, int h, int w) {
  Plane p(h, w);
  std::uniform_real_distribution<double> d(-128.0, 127.0);
  for (double& v : p.data) v = d(rng);
  return p;
}

}  // namespace

TEST_CASE("gray maps to the zero planes") {
  const YccPlanes p = rgb_to_ycc(uniform(4, 6, 128, 128, 128));
  CHECK(p.cb.height == 2);
  CHECK(p.cb.width == 3);
  for (double v : p.y.data) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
  for (double v : p.cb.data) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
  for (double v : p.cr.data) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("white maps to luma 127 and neutral chroma") {
  const YccPlanes p = rgb_to_ycc(uniform(3, 3, 255, 255, 255));
  for (double v : p.y.data) CHECK(std::abs(v - 127.0) < 1e-9);
  for (double v : p.cb.data) CHECK(std::abs(v) < 1e-9);
  for (double v : p.cr.data) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("constant chroma survives 2x2 downsampling") {
  const RgbImage img = uniform(2, 2, 200, 30, 90);
  const YccPlanes p = rgb_to_ycc(img);
  const double cb = -0.168736 * 200 - 0.331264 * 30 + 0.5 * 90;
  const double cr = 0.5 * 200 - 0.418688 * 30 - 0.081312 * 90;
  CHECK(p.cb.at(0, 0) == doctest::Approx(cb).epsilon(1e-12));
  CHECK(p.cr.at(0, 0) == doctest::Approx(cr).epsilon(1e-12));
}

TEST_CASE("zero planes decode to mid gray") {
  YccPlanes p{Plane(5, 3), Plane(3, 2), Plane(3, 2)};
  CHECK(ycc_to_rgb(p) == uniform(5, 3, 128, 128, 128));
}

TEST_CASE("out of gamut planes clamp") {
  YccPlanes p{Plane(2, 2, 127.0), Plane(1, 1, 127.0), Plane(1, 1, 127.0)};
  const RgbImage img = ycc_to_rgb(p);
  CHECK(img.at(0, 0, 0) == 255);
  CHECK(img.at(0, 0, 2) == 255);
}

TEST_CASE("colour round trip on 2x2-constant chroma images") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> d(0, 255);
  for (int trial = 0; trial < 50; ++trial) {
    RgbImage img(8, 10);
    for (int y = 0; y < 8; y += 2) {
      for (int x = 0; x < 10; x += 2) {
        // Equal RGB within each 2x2 cell keeps its chroma constant.
        const int r = d(rng), g = d(rng), b = d(rng);
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            img.at(y + dy, x + dx, 0) = static_cast<std::uint8_t>(r);
            img.at(y + dy, x + dx, 1) = static_cast<std::uint8_t>(g);
            img.at(y + dy, x + dx, 2) = static_cast<std::uint8_t>(b);
          }
        }
      }
    }
    const RgbImage back = ycc_to_rgb(rgb_to_ycc(img));
    for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(std::abs(img.data[i] - back.data[i]) <= 1);
  }
}

TEST_CASE("planes stay inside [-128, 127]") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    const YccPlanes p = rgb_to_ycc(make_noise_image(rng, 7, 9));
    for (const Plane* pl : {&p.y, &p.cb, &p.cr}) {
      for (double v : pl->data) {
        CHECK(v >= -128.0);
        CHECK(v <= 127.0);
      }
    }
  }
  const YccPlanes extreme = rgb_to_ycc(uniform(2, 2, 0, 0, 255));
  CHECK(extreme.cb.at(0, 0) <= 127.0);
}

TEST_CASE("odd sizes give ceil-half chroma") {
  const YccPlanes p = rgb_to_ycc(uniform(5, 7, 10, 20, 30));
  CHECK(p.cb.height == 3);
  CHECK(p.cb.width == 4);
  CHECK(p.cr.height == 3);
}

TEST_CASE("split_blocks grid shapes and padding") {
  std::mt19937_64 rng(3);
  const BlockGrid g = split_blocks(random_plane(rng, 64, 64), 8);
  CHECK(g.rows == 8);
  CHECK(g.cols == 8);

  Plane p = random_plane(rng, 65, 64);
  const BlockGrid h = split_blocks(p, 8);
  CHECK(h.rows == 9);
  CHECK(h.cols == 8);
  // Row 64 is the only real row of the last block row; rows below replicate it.
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) CHECK(h.block(8, 2)[r * 8 + c] == p.at(64, 16 + c));
  }
}

TEST_CASE("merge inverts split for all supported block sizes") {
  std::mt19937_64 rng(5);
  for (int b : {4, 8, 16, 32}) {
    for (auto [h, w] : {std::pair{1, 1}, {33, 17}, {64, 64}, {5, 70}}) {
      const Plane p = random_plane(rng, h, w);
      CHECK(merge_blocks(split_blocks(p, b), h, w) == p);
    }
  }
}

TEST_CASE("unsupported block sizes are rejected") {
  CHECK_THROWS_AS(split_blocks(Plane(8, 8), 6), InputError);
  CHECK_THROWS_AS(split_blocks(Plane(8, 8), 64), InputError);
}

TEST_CASE("png and ppm round trip") {
  std::mt19937_64 rng(9);
  const RgbImage img = make_noise_image(rng, 13, 21);
  const auto dir = std::filesystem::temp_directory_path() / "dctgen_io_test";
  std::filesystem::create_directories(dir);
  write_image(img, dir / "a.png");
  write_image(img, dir / "b.ppm");
  CHECK(read_image(dir / "a.png") == img);
  CHECK(read_image(dir / "b.ppm") == img);
  CHECK(list_images(dir).size() == 2);
  CHECK_THROWS_AS(read_image(dir / "missing.png"), InputError);
  std::filesystem::remove_all(dir);
}
