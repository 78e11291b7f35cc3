#include "dctgen/chunker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dctgen/error.hpp"

namespace dctgen {

void ChunkSpec::validate() const {
  if (size < 1) throw InputError("chunk size must be >= 1");
  if (overlap < 0 || overlap >= size) throw InputError("chunk overlap must be in [0, chunk size)");
}

std::vector<Chunk> enumerate_chunks(std::size_t length, int chunk_size) {
  if (chunk_size < 1) throw InputError("chunk size must be >= 1");
  const auto c = static_cast<std::size_t>(chunk_size);
  std::vector<Chunk> chunks;
  for (std::size_t start = 0; start < length; start += c) chunks.push_back({start, std::min(c, length - start)});
  return chunks;
}

std::vector<double> chunk_weights(std::size_t num_chunks, const SelectionPolicy& policy) {
  if (num_chunks < 1) throw InputError("chunk_weights needs at least one chunk");
  if (!policy.uniform && (policy.p_min <= 0.0 || policy.exponent < 0.0)) {
    throw InputError("selection policy needs p_min > 0 and exponent >= 0");
  }
  std::vector<double> w(num_chunks);
  for (std::size_t k = 0; k < num_chunks; ++k) {
    w[k] = policy.uniform ? 1.0 : std::max(std::pow(static_cast<double>(k + 1), -policy.exponent), policy.p_min);
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
  return w;
}

double keep_probability(std::size_t length, std::size_t max_length) {
  if (length < 1 || max_length < 1) throw InputError("keep_probability needs L >= 1 and L_max >= 1");
  return std::min(static_cast<double>(length) / static_cast<double>(max_length), 1.0);
}

std::size_t TrainingExample::tokens() const {
  return static_cast<std::size_t>(std::count(loss_mask.begin(), loss_mask.end(), std::uint8_t{1}));
}

TrainingExample build_training_example(const TupleSeq& seq, std::size_t chunk_index, const ChunkSpec& spec,
                                       const ExampleOptions& options) {
  spec.validate();
  const std::vector<Triple> elements = seq.elements();
  const auto chunks = enumerate_chunks(elements.size(), spec.size);
  if (chunk_index >= chunks.size()) {
    throw InputError("chunk index " + std::to_string(chunk_index) + " out of range (" + std::to_string(chunks.size()) +
                     " chunks)");
  }
  const Chunk chunk = chunks[chunk_index];
  TrainingExample ex;
  ex.chunk_index = chunk_index;
  ex.chunk_start = chunk.start;
  ex.first = chunk.start > static_cast<std::size_t>(spec.overlap) ? chunk.start - spec.overlap : 0;

  TupleSeq context{seq.geometry, seq.ordering, {}, false};
  context.triples.assign(seq.triples.begin(), seq.triples.begin() + static_cast<std::ptrdiff_t>(chunk.start));
  ex.input = deserialize(context);

  if (ex.first > 0) ex.lead = elements[ex.first - 1];
  const std::size_t end = chunk.start + chunk.length;
  ex.window.assign(elements.begin() + static_cast<std::ptrdiff_t>(ex.first),
                   elements.begin() + static_cast<std::ptrdiff_t>(end));
  ex.stop_in_window = seq.terminated && end == elements.size();
  ex.loss_mask.assign(ex.window.size(), 0);
  const int band = seq.geometry.band_size();
  for (std::size_t i = chunk.start; i < end; ++i) {
    const Triple& t = elements[i];
    const bool luma = t.channel < band;
    ex.loss_mask[i - ex.first] = (options.chroma_loss_only && luma) ? 0 : 1;
  }
  return ex;
}

std::size_t chroma_tail_start(const TupleSeq& seq) {
  const int band = seq.geometry.band_size();
  const auto it = std::find_if(seq.triples.begin(), seq.triples.end(), [band](const Triple& t) { return t.channel >= band; });
  return static_cast<std::size_t>(it - seq.triples.begin());
}

std::vector<std::size_t> eligible_chunks(const TupleSeq& seq, const ChunkSpec& spec, bool chroma_only) {
  const auto chunks = enumerate_chunks(seq.num_elements(), spec.size);
  std::vector<std::size_t> out;
  const std::size_t tail = chroma_only ? chroma_tail_start(seq) : 0;
  for (std::size_t k = 0; k < chunks.size(); ++k) {
    if (chunks[k].start + chunks[k].length > tail) out.push_back(k);
  }
  return out;
}

std::size_t select_chunk(const std::vector<std::size_t>& candidates, const SelectionPolicy& policy,
                         std::mt19937_64& rng) {
  if (candidates.empty()) throw InputError("no eligible chunks to select from");
  const auto w = chunk_weights(candidates.size(), policy);
  std::discrete_distribution<std::size_t> dist(w.begin(), w.end());
  return candidates[dist(rng)];
}

}  // namespace dctgen
