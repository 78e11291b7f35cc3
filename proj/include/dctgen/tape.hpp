#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace dctgen {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct Parameter {
  std::string name;
  Mat<T> value;
  Mat<T> grad;
};

// Named trainable tensors. References returned by add() stay valid for the
// lifetime of the set.
template <typename T>
class ParameterSet {
 public:
  Parameter<T>& add(const std::string& name, int rows, int cols);
  Parameter<T>* find(const std::string& name);
  const Parameter<T>* find(const std::string& name) const;
  void zero_grad();
  std::size_t count() const;  // total scalar count

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

 private:
  std::deque<Parameter<T>> params_;
};

// Reverse-mode differentiation over row-major matrices. Each op records a
// closure that propagates the output gradient to its inputs; backward()
// replays them in reverse and accumulates into Parameter::grad.
template <typename T>
class Tape {
 public:
  struct Var {
    int id = -1;
  };

  // With record_grad == false no closures are stored (inference).
  explicit Tape(bool record_grad = true) : record_(record_grad) {}

  Var constant(Mat<T> value);
  Var param(Parameter<T>& p);
  const Mat<T>& value(Var v) const;

  // a (n x k) * b (k x m)
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  // a (n x m) + bias (1 x m) broadcast over rows
  Var add_bias(Var a, Var bias);
  // a * s, s a 1 x 1 variable
  Var scale(Var a, Var s);
  // per-row layer norm with gain and bias (1 x m)
  Var layer_norm(Var x, Var gain, Var bias, T eps = T(1e-5));
  // tanh-approximated GELU
  Var gelu(Var x);
  // out.row(i) = table.row(index[i])
  Var gather_rows(Var table, std::vector<int> index);
  // a with row `row` replaced by r (1 x m)
  Var replace_row(Var a, int row, Var r);
  // inverted dropout; identity when rate <= 0 or rng is null
  Var dropout(Var x, double rate, std::mt19937_64* rng);
  // Multi-head scaled dot-product attention. q: n x d, k and v: m x d.
  // With causal, query i attends to keys j <= i (requires n == m).
  Var attention(Var q, Var k, Var v, int heads, bool causal);
  // Weighted sum over rows of -log softmax(logits)[target]. Rows with zero
  // weight are skipped. Per-row NLL is written to row_nll when non-null.
  Var cross_entropy(Var logits, std::vector<int> targets, std::vector<T> weights, std::vector<T>* row_nll = nullptr);

  // Seeds d(loss) = 1 for a 1 x 1 variable.
  void backward(Var loss);

 private:
  struct Node {
    Mat<T> value;
    const Mat<T>* ref = nullptr;  // parameter value, not copied
    Mat<T> grad;
    Parameter<T>* param = nullptr;
    bool needs_grad = false;
    std::function<void()> back;
  };

  Var push(Mat<T> value, bool needs_grad);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  Mat<T>& grad(Var v);

  bool record_;
  std::deque<Node> nodes_;
};

}  // namespace dctgen
