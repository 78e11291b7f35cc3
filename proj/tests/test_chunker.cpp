#include "doctest.h"

#include <cmath>
#include <random>

#include "dctgen/chunker.hpp"
#include "dctgen/error.hpp"
#include "dctgen/synthetic.hpp"

using namespace dctgen;

namespace {

TupleSeq random_seq(std::size_t triples, Ordering o = Ordering::Generation, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  return serialize(make_random_dct_image(rng, Geometry{64, 64, 8, 50, 1200}, triples), o);
}

}  // namespace

TEST_CASE("enumerate_chunks") {
  CHECK(enumerate_chunks(2000, 896) == std::vector<Chunk>{{0, 896}, {896, 896}, {1792, 208}});
  CHECK(enumerate_chunks(896, 896) == std::vector<Chunk>{{0, 896}});
  CHECK(enumerate_chunks(10, 896) == std::vector<Chunk>{{0, 10}});
  CHECK(enumerate_chunks(1792, 896).back() == Chunk{896, 896});
}

TEST_CASE("chunk_weights") {
  const auto w = chunk_weights(3, SelectionPolicy{});
  CHECK(w[0] == doctest::Approx(0.8163).epsilon(1e-4));
  CHECK(w[1] == doctest::Approx(0.1020).epsilon(1e-3));
  CHECK(w[2] == doctest::Approx(0.0816).epsilon(1e-3));
  CHECK(std::abs(w[0] - 1.0 / 1.225) < 1e-12);
  CHECK(chunk_weights(1, SelectionPolicy{}) == std::vector<double>{1.0});
  const auto w10 = chunk_weights(10, SelectionPolicy{});
  double sum = 0.0;
  for (std::size_t i = 0; i < w10.size(); ++i) {
    sum += w10[i];
    if (i) CHECK(w10[i] <= w10[i - 1]);
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  for (std::size_t i = 2; i < 10; ++i) CHECK(w10[i] == w10[9]);
  CHECK(w10[1] > w10[2]);
  SelectionPolicy uniform;
  uniform.uniform = true;
  for (double x : chunk_weights(4, uniform)) CHECK(x == 0.25);
}

TEST_CASE("keep_probability") {
  CHECK(keep_probability(500, 1000) == 0.5);
  CHECK(keep_probability(1000, 1000) == 1.0);
  CHECK(keep_probability(5000, 1000) == 1.0);
  CHECK(keep_probability(1, 1000) == 0.001);
  CHECK_THROWS_AS(keep_probability(0, 1000), InputError);
}

TEST_CASE("selection frequencies match the weights") {
  std::mt19937_64 rng(42);
  const std::vector<std::size_t> candidates{0, 1, 2};
  const auto w = chunk_weights(3, SelectionPolicy{});
  std::vector<int> counts(3, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[select_chunk(candidates, SelectionPolicy{}, rng)];
  for (int k = 0; k < 3; ++k) {
    const double sigma = std::sqrt(n * w[k] * (1 - w[k]));
    CHECK(std::abs(counts[k] - n * w[k]) < 3 * sigma);
  }
}

TEST_CASE("chunk 0 example") {
  const TupleSeq s = random_seq(99);
  const TrainingExample ex = build_training_example(s, 0, ChunkSpec{});
  CHECK(ex.input.count_nonzero() == 0);
  CHECK_FALSE(ex.lead.has_value());
  CHECK(ex.window.size() == 100);
  CHECK(ex.tokens() == 100);
  CHECK(ex.window.back() == s.stop_marker());
  CHECK(ex.stop_in_window);
}

TEST_CASE("middle chunk of a 2000-element sequence") {
  const TupleSeq s = random_seq(1999);
  REQUIRE(s.num_elements() == 2000);
  const ChunkSpec spec{896, 128};
  const TrainingExample ex = build_training_example(s, 1, spec);
  const auto elements = s.elements();
  CHECK(ex.first == 768);
  CHECK(ex.chunk_start == 896);
  CHECK(ex.window.size() == 1024);
  CHECK(ex.window.front() == elements[768]);
  CHECK(ex.window.back() == elements[1791]);
  CHECK(ex.lead == elements[767]);
  CHECK(ex.tokens() == 896);
  for (std::size_t i = 0; i < ex.window.size(); ++i) CHECK(ex.loss_mask[i] == (i >= 128 ? 1 : 0));
  CHECK(ex.input == deserialize(take_prefix(s, 896)));
  CHECK_FALSE(ex.stop_in_window);

  const TrainingExample last = build_training_example(s, 2, spec);
  CHECK(last.window.back() == s.stop_marker());
  CHECK(last.loss_mask.back() == 1);
  CHECK(last.tokens() == 208);
  CHECK(last.window.size() <= static_cast<std::size_t>(spec.size + spec.overlap));
  CHECK_THROWS_AS(build_training_example(s, 3, spec), InputError);
}

TEST_CASE("colorization training masks luma") {
  const TupleSeq s = random_seq(600, Ordering::Colorization, 3);
  const ChunkSpec spec{128, 32};
  const std::size_t tail = chroma_tail_start(s);
  REQUIRE(tail > 0);
  REQUIRE(tail < s.triples.size());
  const auto eligible = eligible_chunks(s, spec, true);
  REQUIRE_FALSE(eligible.empty());
  CHECK(eligible.front() == tail / 128);
  for (std::size_t k : eligible) {
    const TrainingExample ex = build_training_example(s, k, spec, ExampleOptions{true});
    for (std::size_t i = 0; i < ex.window.size(); ++i) {
      if (ex.window[i].channel < 64) CHECK(ex.loss_mask[i] == 0);
    }
    CHECK(ex.tokens() > 0);
  }
  CHECK(eligible_chunks(s, spec, false).size() == enumerate_chunks(s.num_elements(), 128).size());
}

TEST_CASE("chunk spec validation") {
  CHECK_THROWS_AS((ChunkSpec{8, 8}.validate()), InputError);
  CHECK_THROWS_AS((ChunkSpec{0, 0}.validate()), InputError);
  CHECK_NOTHROW((ChunkSpec{8, 0}.validate()));
}
