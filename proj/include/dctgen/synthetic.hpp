#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dctgen/pixel_pipeline.hpp"
#include "dctgen/sparse_codec.hpp"

namespace dctgen {

// Plain background with a few flat-coloured rectangles and ellipses.
RgbImage make_shapes_image(std::mt19937_64& rng, int height, int width);

// Independent uniform RGB noise.
RgbImage make_noise_image(std::mt19937_64& rng, int height, int width);

// `count` shape images; side lengths drawn from [min_size, max_size] unless
// both are equal.
std::vector<RgbImage> make_shapes_dataset(int count, std::uint64_t seed, int min_size = 32, int max_size = 64);

// Valid DCT image with `nonzeros` random entries (chroma only at even
// positions). Values are uniform in [-max_abs, max_abs] without 0; max_abs
// defaults to the clip bound.
DctImage make_random_dct_image(std::mt19937_64& rng, const Geometry& geometry, std::size_t nonzeros, int max_abs = 0);

}  // namespace dctgen
