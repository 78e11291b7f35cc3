#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "dctgen/sparse_codec.hpp"

namespace dctgen {

// Target chunks start at multiples of `size`; each decoder window also
// carries up to `overlap` preceding elements.
struct ChunkSpec {
  int size = 896;
  int overlap = 128;

  void validate() const;  // 0 <= overlap < size
};

struct Chunk {
  std::size_t start = 0;
  std::size_t length = 0;
  bool operator==(const Chunk&) const = default;
};

// Starts 0, C, 2C, ...; the last chunk holds L mod C elements (C if exact).
std::vector<Chunk> enumerate_chunks(std::size_t length, int chunk_size);

// Raw weight of 1-based chunk k is max(k^-exponent, p_min), normalised.
// `uniform` replaces the decay with equal weights.
struct SelectionPolicy {
  double exponent = 3.0;
  double p_min = 0.1;
  bool uniform = false;
};

std::vector<double> chunk_weights(std::size_t num_chunks, const SelectionPolicy& policy);

// Probability of keeping a sequence of length L for a training step,
// min(L / L_max, 1).
double keep_probability(std::size_t length, std::size_t max_length);

struct ExampleOptions {
  // Colorization training: no loss on luma-band elements.
  bool chroma_loss_only = false;
};

struct TrainingExample {
  DctImage input;                  // densified elements [0, chunk_start)
  std::optional<Triple> lead;      // element at first - 1; empty means begin-of-sequence
  std::vector<Triple> window;      // elements [first, chunk_start + chunk length)
  std::vector<std::uint8_t> loss_mask;
  std::size_t first = 0;
  std::size_t chunk_start = 0;
  std::size_t chunk_index = 0;
  bool stop_in_window = false;     // window ends with the stop marker

  std::size_t tokens() const;      // number of loss-masked elements
};

// Throws InputError if chunk_index is out of range.
TrainingExample build_training_example(const TupleSeq& seq, std::size_t chunk_index, const ChunkSpec& spec,
                                       const ExampleOptions& options = {});

// Index of the first chroma-band element (or the stop marker) in a
// colorization-ordered sequence.
std::size_t chroma_tail_start(const TupleSeq& seq);

// Chunks eligible for training: all of them, or for chroma-only training
// those that intersect the chroma tail.
std::vector<std::size_t> eligible_chunks(const TupleSeq& seq, const ChunkSpec& spec, bool chroma_only);

// Draws a chunk index from `candidates` (ordered) with chunk_weights over
// their 1-based rank in the candidate list.
std::size_t select_chunk(const std::vector<std::size_t>& candidates, const SelectionPolicy& policy,
                         std::mt19937_64& rng);

}  // namespace dctgen
