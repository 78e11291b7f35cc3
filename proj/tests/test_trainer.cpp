#include "doctest.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "dctgen/error.hpp"
#include "dctgen/synthetic.hpp"
#include "dctgen/trainer.hpp"

using namespace dctgen;

namespace {

ModelConfig train_config() {
  ModelConfig c;
  c.geometry = Geometry{16, 16, 4, 50, 8};
  c.chunk = ChunkSpec{6, 2};
  c.hidden = 8;
  c.heads = 2;
  c.encoder_spec = c.channel_spec = c.position_spec = c.value_spec = {{1, 1}};
  c.kernel = 3;
  c.stride = 2;
  return c;
}

std::vector<TupleSeq> dataset(const ModelConfig& c, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TupleSeq> out;
  for (int i = 0; i < count; ++i) {
    out.push_back(serialize(make_random_dct_image(rng, c.geometry, 3 + rng() % 15, 4), c.ordering));
  }
  return out;
}

TrainConfig small_train() {
  TrainConfig t;
  t.lr_max = 3e-3;
  t.warmup_steps = 5;
  t.token_budget = 600;
  t.batch_size = 3;
  t.seed = 11;
  return t;
}

}  // namespace

TEST_CASE("learning rate schedule") {
  CHECK(lr_schedule(0, 1e-3, 1000, 5000) == 0.0);
  CHECK(lr_schedule(500, 1e-3, 1000, 5000) == doctest::Approx(5e-4));
  CHECK(lr_schedule(1000, 1e-3, 1000, 5000) == doctest::Approx(1e-3));
  CHECK(lr_schedule(3000, 1e-3, 1000, 5000) == doctest::Approx(5e-4).epsilon(1e-12));
  CHECK(lr_schedule(5000, 1e-3, 1000, 5000) == 0.0);
  CHECK(lr_schedule(1001, 1e-3, 1000, 5000) < 1e-3);
  CHECK_THROWS_AS(lr_schedule(-1, 1e-3, 1000, 5000), InputError);
  CHECK_THROWS_AS(lr_schedule(10, 1e-3, 1000, 1000), InputError);
}

TEST_CASE("Adam with zero gradient leaves parameters unchanged") {
  ParameterSet<float> ps;
  auto& p = ps.add("w", 3, 3);
  p.value.setConstant(0.25f);
  p.grad.setZero();
  Adam<float> adam(ps, 0.9, 0.999, 1e-8);
  for (int i = 0; i < 5; ++i) adam.step(1e-2);
  CHECK(p.value == Mat<float>::Constant(3, 3, 0.25f));
  p.grad.setConstant(1.0f);
  adam.step(1e-2);
  // Sixth step: bias-corrected moments of a single unit gradient.
  const double m_hat = 0.1 / (1 - std::pow(0.9, 6)), v_hat = 0.001 / (1 - std::pow(0.999, 6));
  CHECK(p.value(0, 0) == doctest::Approx(0.25 - 1e-2 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-5));
}

TEST_CASE("global norm clipping") {
  ParameterSet<double> ps;
  auto& a = ps.add("a", 1, 2);
  auto& b = ps.add("b", 1, 1);
  a.grad << 3.0, 0.0;
  b.grad << 4.0;
  CHECK(clip_gradients(ps, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad(0, 0) == doctest::Approx(0.6));
  CHECK(b.grad(0, 0) == doctest::Approx(0.8));
  CHECK(clip_gradients(ps, 0.0) == doctest::Approx(1.0));
}

TEST_CASE("token accounting per step") {
  ModelConfig c = train_config();
  c.geometry = Geometry{64, 64, 8, 50, 8};
  c.chunk = ChunkSpec{896, 128};
  c.kernel = 1;
  c.stride = 4;
  std::mt19937_64 rng(1);
  std::vector<TupleSeq> data;
  for (int i = 0; i < 3; ++i) data.push_back(serialize(make_random_dct_image(rng, c.geometry, 895, 4), c.ordering));
  DCTransformer<float> m(c);
  m.initialize(1);
  TrainConfig t;
  t.batch_size = 4;
  t.token_budget = 3584;
  t.warmup_steps = 0;
  t.total_steps = 2;
  const TrainResult r = train(m, data, t);
  CHECK(r.steps == 1);
  CHECK(r.history[0].tokens == 3584);
}

TEST_CASE("training is deterministic and stops at the budget") {
  const ModelConfig c = train_config();
  const auto data = dataset(c, 12, 2);
  DCTransformer<float> a(c), b(c);
  a.initialize(5);
  b.initialize(5);
  std::ostringstream log_a, log_b;
  const TrainResult ra = train(a, data, small_train(), &log_a);
  const TrainResult rb = train(b, data, small_train(), &log_b);
  REQUIRE(ra.history.size() == rb.history.size());
  for (std::size_t i = 0; i < ra.history.size(); ++i) CHECK(ra.history[i].loss == rb.history[i].loss);
  CHECK(log_a.str() == log_b.str());
  auto pb = b.params().begin();
  for (const auto& p : a.params()) {
    CHECK(p.value == pb->value);
    ++pb;
  }
  CHECK(ra.tokens >= 600);
  CHECK(ra.tokens - static_cast<long>(ra.history.back().breakdown.tokens) < 600);

  std::istringstream lines(log_a.str());
  std::string line;
  std::getline(lines, line);
  const auto j = nlohmann::json::parse(line);
  for (const char* key : {"step", "loss", "lr", "tokens", "batch_bpd"}) CHECK(j.contains(key));
}

TEST_CASE("training reduces the loss") {
  const ModelConfig c = train_config();
  const auto data = dataset(c, 20, 3);
  DCTransformer<float> m(c);
  m.initialize(7);
  const double before = eval_bpd(m, data).total;
  TrainConfig t = small_train();
  t.token_budget = 20000;
  t.warmup_steps = 20;
  train(m, data, t);
  CHECK(eval_bpd(m, data).total < 0.8 * before);
}

TEST_CASE("non-finite loss aborts with a numeric error") {
  const ModelConfig c = train_config();
  DCTransformer<float> m(c);
  m.initialize(1);
  m.params().find("embed.chunk_position")->value.setConstant(std::numeric_limits<float>::quiet_NaN());
  CHECK_THROWS_AS(train(m, dataset(c, 4, 1), small_train()), NumericError);
}

TEST_CASE("bpd of the initial model") {
  const ModelConfig c = train_config();
  DCTransformer<double> m(c);
  m.initialize(3);
  TupleSeq one{c.geometry, c.ordering, {{0, 0, 2}}, true};
  const BpdReport r = eval_bpd(m, {one});
  const double subpixels = 16.0 * 16.0 * 3.0;
  CHECK(std::abs(r.value - std::log2(17.0) / subpixels) < 1e-12);
  CHECK(std::abs(r.position - std::log2(16.0) / subpixels) < 1e-12);
  CHECK(std::abs(r.channel - 2 * std::log2(49.0) / subpixels) < 1e-12);
  CHECK(r.tokens == 2);
}

TEST_CASE("bpd decompositions add up") {
  const ModelConfig c = train_config();
  DCTransformer<double> m(c);
  m.randomize(4, 0.3);
  const auto data = dataset(c, 6, 4);
  const BpdReport r = eval_bpd(m, data);
  CHECK(std::abs(r.total - (r.channel + r.position + r.value)) < 1e-9);
  double chunks = 0.0;
  for (double x : r.per_chunk) {
    CHECK(x >= 0.0);
    chunks += x;
  }
  CHECK(std::abs(chunks - r.total) < 1e-9);
  long tokens = 0;
  for (const auto& s : data) tokens += static_cast<long>(s.num_elements());
  CHECK(r.tokens == tokens);
  CHECK(r.images == 6);

  // Per-image NLL in nats, recomputed directly.
  double nats = 0.0;
  for (const auto& s : data) {
    for (std::size_t k = 0; k < enumerate_chunks(s.num_elements(), c.chunk.size).size(); ++k) {
      nats += m.evaluate(build_training_example(s, k, c.chunk)).total();
    }
  }
  CHECK(std::abs(nats / std::numbers::ln2 / (16.0 * 16.0 * 3.0) / 6.0 - r.total) < 1e-9);
}

TEST_CASE("train config validation") {
  TrainConfig t;
  t.token_budget = 0;
  CHECK_THROWS_AS(t.validate(), InputError);
  t = TrainConfig{};
  t.warmup_steps = 10;
  t.total_steps = 10;
  CHECK_THROWS_AS(t.validate(), InputError);
}
