#pragma once

#include <cstdint>
#include <limits>
#include <random>

#include "dctgen/model.hpp"
#include "dctgen/sparse_codec.hpp"

namespace dctgen {

struct SampleOptions {
  double temperature = 1.0;  // 0 selects the arg max
  int max_chunks = std::numeric_limits<int>::max();
  // Channels whose rank is below min_rank are never sampled, so a
  // conditioning prefix is left untouched.
  int min_rank = 0;
};

// Extends `context` chunk by chunk until a stop is sampled or max_chunks
// chunks have been filled. Each chunk conditions on the DCT image of the
// elements before its chunk-aligned start. Invalid triples are masked out,
// so the result always deserializes.
template <typename T>
TupleSeq sample_continuation(DCTransformer<T>& model, const TupleSeq& context, std::mt19937_64& rng,
                             const SampleOptions& options = {});

// Logit row restricted to `allowed` (entries outside get -inf) and drawn at
// the given temperature. Returns -1 if nothing is allowed.
template <typename T>
int sample_masked(const T* logits, const std::vector<std::uint8_t>& allowed, double temperature,
                  std::mt19937_64& rng);

// DC triples of every plane (channels 0, B^2, 2B^2) of a generation-ordered
// sequence: the conditioning prefix for upsampling.
TupleSeq upsample_condition(const TupleSeq& full);
// DC-only prefix built from a low-resolution image: each low-resolution
// pixel becomes a constant B x B block of the full-resolution image.
TupleSeq upsample_condition(const RgbImage& low_res, const Geometry& geometry);
// All luma triples of a colorization-ordered sequence.
TupleSeq colorize_condition(const TupleSeq& full);
// Luma prefix of an image (converted with its own chroma discarded).
TupleSeq colorize_condition(const RgbImage& image, const Geometry& geometry);

// Rank a conditioned continuation must start at; sampling never goes below.
int upsample_min_rank();
int colorize_min_rank(int block_size);

// Throws InputError unless `model_ordering` equals `required`.
void require_ordering(Ordering model_ordering, Ordering required, const char* task);

}  // namespace dctgen
