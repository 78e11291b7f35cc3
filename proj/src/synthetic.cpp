#include "dctgen/synthetic.hpp"

#include <algorithm>
#include <array>

#include "dctgen/error.hpp"

namespace dctgen {

namespace {

using Color = std::array<std::uint8_t, 3>;

Color random_color(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, 255);
  return {static_cast<std::uint8_t>(d(rng)), static_cast<std::uint8_t>(d(rng)), static_cast<std::uint8_t>(d(rng))};
}

void paint(RgbImage& img, int r, int c, const Color& col) {
  for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = col[ch];
}

}  // namespace

RgbImage make_shapes_image(std::mt19937_64& rng, int height, int width) {
  if (height < 1 || width < 1) throw InputError("synthetic image must be at least 1x1");
  // Muted backgrounds, like a grey floor.
  std::uniform_int_distribution<int> bg(90, 170);
  const int base = bg(rng);
  const Color background = {static_cast<std::uint8_t>(base), static_cast<std::uint8_t>(base),
                            static_cast<std::uint8_t>(std::clamp(base + 8, 0, 255))};
  RgbImage img(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) paint(img, r, c, background);
  }

  std::uniform_int_distribution<int> n_shapes(1, 3);
  std::uniform_int_distribution<int> kind(0, 1);
  const int shapes = n_shapes(rng);
  const int min_side = std::max(2, std::min(height, width) / 8);
  const int max_side = std::max(min_side, std::min(height, width) / 3);
  std::uniform_int_distribution<int> side(min_side, max_side);
  for (int s = 0; s < shapes; ++s) {
    const Color col = random_color(rng);
    const int sh = side(rng), sw = side(rng);
    std::uniform_int_distribution<int> row0(0, std::max(0, height - sh));
    std::uniform_int_distribution<int> col0(0, std::max(0, width - sw));
    const int top = row0(rng), left = col0(rng);
    const bool ellipse = kind(rng) == 1;
    const double cy = top + (sh - 1) / 2.0, cx = left + (sw - 1) / 2.0;
    const double ry = sh / 2.0, rx = sw / 2.0;
    for (int r = top; r < std::min(height, top + sh); ++r) {
      for (int c = left; c < std::min(width, left + sw); ++c) {
        if (ellipse) {
          const double dy = (r - cy) / ry, dx = (c - cx) / rx;
          if (dy * dy + dx * dx > 1.0) continue;
        }
        paint(img, r, c, col);
      }
    }
  }
  return img;
}

RgbImage make_noise_image(std::mt19937_64& rng, int height, int width) {
  if (height < 1 || width < 1) throw InputError("synthetic image must be at least 1x1");
  RgbImage img(height, width);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(d(rng));
  return img;
}

std::vector<RgbImage> make_shapes_dataset(int count, std::uint64_t seed, int min_size, int max_size) {
  if (count < 0 || min_size < 1 || max_size < min_size) throw InputError("invalid synthetic dataset parameters");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> size(min_size, max_size);
  std::vector<RgbImage> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int h = size(rng);
    const int w = min_size == max_size ? h : size(rng);
    out.push_back(make_shapes_image(rng, h, w));
  }
  return out;
}

DctImage make_random_dct_image(std::mt19937_64& rng, const Geometry& geometry, std::size_t nonzeros, int max_abs) {
  geometry.validate();
  const int hb = geometry.blocks_high(), wb = geometry.blocks_wide();
  const long even_positions = static_cast<long>((hb + 1) / 2) * ((wb + 1) / 2);
  const long capacity = static_cast<long>(geometry.num_positions()) * geometry.band_size() +
                        2L * even_positions * geometry.band_size();
  if (static_cast<long>(nonzeros) > capacity) throw InputError("more nonzeros requested than the image can hold");
  const int bound = max_abs > 0 ? std::min(max_abs, geometry.clip) : geometry.clip;
  std::uniform_int_distribution<int> channel(0, geometry.num_channels() - 1);
  std::uniform_int_distribution<int> position(0, geometry.num_positions() - 1);
  std::uniform_int_distribution<int> magnitude(1, bound);
  DctImage img(geometry);
  std::size_t placed = 0;
  while (placed < nonzeros) {
    const int c = channel(rng);
    const int p = position(rng);
    const bool even = (p / wb) % 2 == 0 && (p % wb) % 2 == 0;
    if ((c >= geometry.band_size() && !even) || img.at(p, c) != 0) continue;
    img.at(p, c) = magnitude(rng) * (rng() % 2 ? 1 : -1);
    ++placed;
  }
  return img;
}

}  // namespace dctgen
