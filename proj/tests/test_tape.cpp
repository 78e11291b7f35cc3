#include "doctest.h"

#include <cmath>
#include <functional>
#include <random>

#include "dctgen/tape.hpp"

using namespace dctgen;

namespace {

using Md = Mat<double>;
using TapeD = Tape<double>;
using Var = TapeD::Var;

Md random_mat(std::mt19937_64& rng, int r, int c, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Md m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

// Reduces an n x m variable to a scalar with fixed random projections.
Var reduce(TapeD& tape, Var x, std::mt19937_64& rng) {
  const Md& v = tape.value(x);
  Var left = tape.constant(random_mat(rng, 1, static_cast<int>(v.rows())));
  Var right = tape.constant(random_mat(rng, static_cast<int>(v.cols()), 1));
  return tape.matmul(tape.matmul(left, x), right);
}

// Worst relative error between analytic and numeric gradients of every
// parameter entry.
double check(ParameterSet<double>& params, const std::function<Var(TapeD&)>& build) {
  params.zero_grad();
  {
    TapeD tape;
    Var loss = build(tape);
    tape.backward(loss);
  }
  double worst = 0.0;
  const double h = 1e-5;
  for (auto& p : params) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& x = p.value.data()[i];
      const double saved = x;
      x = saved + h;
      TapeD up(false);
      const double fu = up.value(build(up))(0, 0);
      x = saved - h;
      TapeD down(false);
      const double fd = down.value(build(down))(0, 0);
      x = saved;
      const double numeric = (fu - fd) / (2 * h);
      const double a = p.grad.data()[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-4}));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("matmul, add, bias and scale gradients") {
  std::mt19937_64 rng(1);
  ParameterSet<double> ps;
  auto& a = ps.add("a", 3, 4);
  auto& b = ps.add("b", 4, 2);
  auto& bias = ps.add("bias", 1, 2);
  auto& s = ps.add("s", 1, 1);
  a.value = random_mat(rng, 3, 4);
  b.value = random_mat(rng, 4, 2);
  bias.value = random_mat(rng, 1, 2);
  s.value(0, 0) = 0.7;
  const Md extra = random_mat(rng, 3, 2);
  const std::uint64_t seed = rng();
  CHECK(check(ps, [&](TapeD& t) {
          std::mt19937_64 r(seed);
          Var x = t.add_bias(t.matmul(t.param(a), t.param(b)), t.param(bias));
          x = t.add(t.scale(x, t.param(s)), t.constant(extra));
          return reduce(t, x, r);
        }) < 1e-6);
}

TEST_CASE("layer norm and gelu gradients") {
  std::mt19937_64 rng(2);
  ParameterSet<double> ps;
  auto& x = ps.add("x", 4, 6);
  auto& g = ps.add("g", 1, 6);
  auto& b = ps.add("b", 1, 6);
  x.value = random_mat(rng, 4, 6, 2.0);
  g.value = random_mat(rng, 1, 6);
  b.value = random_mat(rng, 1, 6);
  const std::uint64_t seed = rng();
  CHECK(check(ps, [&](TapeD& t) {
          std::mt19937_64 r(seed);
          return reduce(t, t.gelu(t.layer_norm(t.param(x), t.param(g), t.param(b))), r);
        }) < 1e-6);
}

TEST_CASE("layer norm output statistics") {
  std::mt19937_64 rng(3);
  TapeD t(false);
  Md ones = Md::Ones(1, 5), zeros = Md::Zero(1, 5);
  const Md& y = t.value(t.layer_norm(t.constant(random_mat(rng, 3, 5, 4.0)), t.constant(ones), t.constant(zeros)));
  for (int r = 0; r < 3; ++r) {
    CHECK(std::abs(y.row(r).mean()) < 1e-12);
    CHECK(std::abs((y.row(r).array().square().mean()) - 1.0) < 1e-4);
  }
}

TEST_CASE("gather and replace_row gradients") {
  std::mt19937_64 rng(4);
  ParameterSet<double> ps;
  auto& table = ps.add("table", 5, 3);
  auto& row = ps.add("row", 1, 3);
  table.value = random_mat(rng, 5, 3);
  row.value = random_mat(rng, 1, 3);
  const std::uint64_t seed = rng();
  CHECK(check(ps, [&](TapeD& t) {
          std::mt19937_64 r(seed);
          Var g = t.gather_rows(t.param(table), {4, 0, 4, 2});
          return reduce(t, t.replace_row(g, 1, t.param(row)), r);
        }) < 1e-6);
}

TEST_CASE("attention gradients, causal and cross") {
  std::mt19937_64 rng(5);
  ParameterSet<double> ps;
  auto& q = ps.add("q", 4, 6);
  auto& k = ps.add("k", 4, 6);
  auto& v = ps.add("v", 4, 6);
  auto& km = ps.add("km", 3, 6);
  auto& vm = ps.add("vm", 3, 6);
  for (auto* p : {&q, &k, &v, &km, &vm}) p->value = random_mat(rng, static_cast<int>(p->value.rows()), 6);
  const std::uint64_t seed = rng();
  CHECK(check(ps, [&](TapeD& t) {
          std::mt19937_64 r(seed);
          Var self = t.attention(t.param(q), t.param(k), t.param(v), 2, true);
          Var cross = t.attention(self, t.param(km), t.param(vm), 3, false);
          return reduce(t, cross, r);
        }) < 1e-6);
}

TEST_CASE("causal attention ignores later rows") {
  std::mt19937_64 rng(6);
  Md q = random_mat(rng, 5, 4), k = random_mat(rng, 5, 4), v = random_mat(rng, 5, 4);
  TapeD t1(false);
  const Md a = t1.value(t1.attention(t1.constant(q), t1.constant(k), t1.constant(v), 2, true));
  k.row(3).setRandom();
  v.row(3).setRandom();
  q.row(4).setRandom();
  TapeD t2(false);
  const Md b = t2.value(t2.attention(t2.constant(q), t2.constant(k), t2.constant(v), 2, true));
  CHECK(a.topRows(3) == b.topRows(3));
  CHECK(a.row(3) != b.row(3));
}

TEST_CASE("cross entropy value and gradient") {
  std::mt19937_64 rng(7);
  ParameterSet<double> ps;
  auto& logits = ps.add("logits", 3, 5);
  logits.value = random_mat(rng, 3, 5);
  CHECK(check(ps, [&](TapeD& t) { return t.cross_entropy(t.param(logits), {1, 4, 0}, {1.0, 0.0, 2.0}); }) < 1e-6);

  TapeD t(false);
  std::vector<double> nll;
  const double total = t.value(t.cross_entropy(t.constant(Md::Zero(2, 7)), {3, 6}, {1.0, 1.0}, &nll))(0, 0);
  CHECK(std::abs(total - 2 * std::log(7.0)) < 1e-12);
  CHECK(std::abs(nll[1] - std::log(7.0)) < 1e-12);
}

TEST_CASE("dropout is inverted and seeded") {
  TapeD t(false);
  Var x = t.constant(Md::Ones(50, 40));
  CHECK(t.value(t.dropout(x, 0.5, nullptr)) == Md::Ones(50, 40));
  std::mt19937_64 r1(3), r2(3);
  const Md a = t.value(t.dropout(x, 0.25, &r1));
  const Md b = t.value(t.dropout(x, 0.25, &r2));
  CHECK(a == b);
  CHECK(std::abs(a.mean() - 1.0) < 0.05);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double v = a.data()[i];
    CHECK((v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-12));
  }
}

TEST_CASE("parameter set bookkeeping") {
  ParameterSet<float> ps;
  auto& a = ps.add("a", 2, 3);
  ps.add("b", 4, 1);
  CHECK(ps.count() == 10);
  CHECK(ps.find("a") == &a);
  CHECK(ps.find("zzz") == nullptr);
  a.grad.setOnes();
  ps.zero_grad();
  CHECK(a.grad.isZero());
}
