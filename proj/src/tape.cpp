#include "dctgen/tape.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace dctgen {

template <typename T>
Parameter<T>& ParameterSet<T>::add(const std::string& name, int rows, int cols) {
  if (find(name)) throw std::logic_error("duplicate parameter name " + name);
  params_.push_back({name, Mat<T>::Zero(rows, cols), Mat<T>::Zero(rows, cols)});
  return params_.back();
}

template <typename T>
Parameter<T>* ParameterSet<T>::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
const Parameter<T>* ParameterSet<T>::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

template <typename T>
std::size_t ParameterSet<T>::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

template <typename T>
typename Tape<T>::Var Tape<T>::push(Mat<T> value, bool needs_grad) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = record_ && needs_grad;
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
typename Tape<T>::Var Tape<T>::constant(Mat<T> value) {
  return push(std::move(value), false);
}

template <typename T>
typename Tape<T>::Var Tape<T>::param(Parameter<T>& p) {
  Node node;
  node.ref = &p.value;
  node.param = &p;
  node.needs_grad = record_;
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
const Mat<T>& Tape<T>::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.ref ? *n.ref : n.value;
}

template <typename T>
Mat<T>& Tape<T>::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() == 0) {
    const Mat<T>& val = value(v);
    n.grad = Mat<T>::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

template <typename T>
typename Tape<T>::Var Tape<T>::matmul(Var a, Var b) {
  const Mat<T>& av = value(a);
  const Mat<T>& bv = value(b);
  if (av.cols() != bv.rows()) throw std::logic_error("matmul shape mismatch");
  Var out = push(av * bv, needs(a) || needs(b));
  if (needs(out)) {
    nodes_[out.id].back = [this, a, b, out] {
      const Mat<T>& g = nodes_[out.id].grad;
      if (needs(a)) grad(a).noalias() += g * value(b).transpose();
      if (needs(b)) grad(b).noalias() += value(a).transpose() * g;
    };
  }
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::add(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
    throw std::logic_error("add shape mismatch");
  }
  Var out = push(value(a) + value(b), needs(a) || needs(b));
  if (needs(out)) {
    nodes_[out.id].back = [this, a, b, out] {
      const Mat<T>& g = nodes_[out.id].grad;
      if (needs(a)) grad(a) += g;
      if (needs(b)) grad(b) += g;
    };
  }
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::add_bias(Var a, Var bias) {
  const Mat<T>& bv = value(bias);
  if (bv.rows() != 1 || bv.cols() != value(a).cols()) throw std::logic_error("bias shape mismatch");
  Mat<T> out_v = value(a);
  out_v.rowwise() += bv.row(0);
  Var out = push(std::move(out_v), needs(a) || needs(bias));
  if (needs(out)) {
    nodes_[out.id].back = [this, a, bias, out] {
      const Mat<T>& g = nodes_[out.id].grad;
      if (needs(a)) grad(a) += g;
      if (needs(bias)) grad(bias) += g.colwise().sum();
    };
  }
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::scale(Var a, Var s) {
  const T sv = value(s)(0, 0);
  Var out = push(value(a) * sv, needs(a) || needs(s));
  if (needs(out)) {
    nodes_[out.id].back = [this, a, s, out] {
      const Mat<T>& g = nodes_[out.id].grad;
      if (needs(a)) grad(a) += g * value(s)(0, 0);
      if (needs(s)) grad(s)(0, 0) += g.cwiseProduct(value(a)).sum();
    };
  }
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::layer_norm(Var x, Var gain, Var bias, T eps) {
  const Mat<T>& xv = value(x);
  const auto n = xv.rows();
  const auto m = xv.cols();
  Mat<T> xhat(n, m);
  std::vector<T> inv_std(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = xv.row(i).mean();
    const T var = (xv.row(i).array() - mean).square().mean();
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    xhat.row(i) = (xv.row(i).array() - mean) * is;
  }
  Mat<T> y = xhat.array().rowwise() * value(gain).row(0).array();
  y.rowwise() += value(bias).row(0);
  Var out = push(std::move(y), needs(x) || needs(gain) || needs(bias));
  if (needs(out)) {
    nodes_[out.id].back = [this, x, gain, bias, out, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
      const Mat<T>& g = nodes_[out.id].grad;
      if (needs(gain)) grad(gain) += g.cwiseProduct(xhat).colwise().sum();
      if (needs(bias)) grad(bias) += g.colwise().sum();
      if (needs(x)) {
        Mat<T>& gx = grad(x);
        const auto m = static_cast<T>(g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
          const auto dxhat = (g.row(i).array() * value(gain).row(0).array()).eval();
          const T mean_d = dxhat.sum() / m;
          const T mean_dx = (dxhat * xhat.row(i).array()).sum() / m;
          gx.row(i).array() += inv_std[static_cast<std::size_t>(i)] * (dxhat - mean_d - xhat.row(i).array() * mean_dx);
        }
      }
    };
  }
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::gelu(Var x) {
  const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  const T k = static_cast<T>(0.044715);
  const Mat<T>& xv = value(x);
  Mat<T> th = (c * (xv.array() + k * xv.array().cube())).tanh().matrix();
  Mat<T> y = (T(0.5) * xv.array() * (T(1) + th.array())).matrix();
  Var out = push(std::move(y), needs(x));
  if (needs(out)) {
    nodes_[out.id].back = [this, x, out, th = std::move(th), c, k] {
      const Mat<T>& g = nodes_[out.id].grad;
      const auto xa = value(x).array();
      grad(x).array() += g.array() * (T(0.5) * (T(1) + th.array()) +
                                      T(0.5) * xa * (T(1) - th.array().square()) * c * (T(1) + T(3) * k * xa.square()));
    };
  }
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::gather_rows(Var table, std::vector<int> index) {
  const Mat<T>& tv = value(table);
  Mat<T> out_v(static_cast<Eigen::Index>(index.size()), tv.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= tv.rows()) throw std::out_of_range("gather_rows index out of range");
    out_v.row(static_cast<Eigen::Index>(i)) = tv.row(index[i]);
  }
  Var out = push(std::move(out_v), needs(table));
  if (needs(out)) {
    nodes_[out.id].back = [this, table, out, index = std::move(index)] {
      const Mat<T>& g = nodes_[out.id].grad;
      Mat<T>& gt = grad(table);
      for (std::size_t i = 0; i < index.size(); ++i) gt.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
    };
  }
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::replace_row(Var a, int row, Var r) {
  Mat<T> out_v = value(a);
  if (row < 0 || row >= out_v.rows() || value(r).rows() != 1 || value(r).cols() != out_v.cols()) {
    throw std::logic_error("replace_row shape mismatch");
  }
  out_v.row(row) = value(r).row(0);
  Var out = push(std::move(out_v), needs(a) || needs(r));
  if (needs(out)) {
    nodes_[out.id].back = [this, a, row, r, out] {
      const Mat<T>& g = nodes_[out.id].grad;
      if (needs(a)) {
        Mat<T>& ga = grad(a);
        ga += g;
        ga.row(row) -= g.row(row);
      }
      if (needs(r)) grad(r) += g.row(row);
    };
  }
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::dropout(Var x, double rate, std::mt19937_64* rng) {
  if (rate <= 0.0 || rng == nullptr) return x;
  const Mat<T>& xv = value(x);
  Mat<T> mask(xv.rows(), xv.cols());
  std::bernoulli_distribution keep(1.0 - rate);
  const T s = static_cast<T>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? s : T(0);
  Var out = push(xv.cwiseProduct(mask), needs(x));
  if (needs(out)) {
    nodes_[out.id].back = [this, x, out, mask = std::move(mask)] { grad(x) += nodes_[out.id].grad.cwiseProduct(mask); };
  }
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::attention(Var q, Var k, Var v, int heads, bool causal) {
  const Mat<T>& qv = value(q);
  const Mat<T>& kv = value(k);
  const Mat<T>& vv = value(v);
  const auto n = qv.rows();
  const auto m = kv.rows();
  const auto d = qv.cols();
  if (kv.cols() != d || vv.cols() != d || vv.rows() != m || heads < 1 || d % heads != 0) {
    throw std::logic_error("attention shape mismatch");
  }
  if (causal && n != m) throw std::logic_error("causal attention requires equal query and key lengths");
  const auto dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<Mat<T>> probs(static_cast<std::size_t>(heads));
  Mat<T> out_v(n, d);
  for (int h = 0; h < heads; ++h) {
    Mat<T> s = (qv.middleCols(h * dh, dh) * kv.middleCols(h * dh, dh).transpose()) * scale;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index limit = causal ? i + 1 : m;
      const T mx = s.row(i).head(limit).maxCoeff();
      T sum = 0;
      for (Eigen::Index j = 0; j < limit; ++j) {
        const T e = std::exp(s(i, j) - mx);
        s(i, j) = e;
        sum += e;
      }
      for (Eigen::Index j = 0; j < limit; ++j) s(i, j) /= sum;
      for (Eigen::Index j = limit; j < m; ++j) s(i, j) = T(0);
    }
    out_v.middleCols(h * dh, dh).noalias() = s * vv.middleCols(h * dh, dh);
    probs[static_cast<std::size_t>(h)] = std::move(s);
  }
  Var out = push(std::move(out_v), needs(q) || needs(k) || needs(v));
  if (needs(out)) {
    nodes_[out.id].back = [this, q, k, v, out, heads, dh, scale, probs = std::move(probs)] {
      const Mat<T>& g = nodes_[out.id].grad;
      const Mat<T>& qv = value(q);
      const Mat<T>& kv = value(k);
      const Mat<T>& vv = value(v);
      for (int h = 0; h < heads; ++h) {
        const Mat<T>& p = probs[static_cast<std::size_t>(h)];
        const auto go = g.middleCols(h * dh, dh);
        if (needs(v)) grad(v).middleCols(h * dh, dh).noalias() += p.transpose() * go;
        if (!needs(q) && !needs(k)) continue;
        Mat<T> dp = go * vv.middleCols(h * dh, dh).transpose();
        // softmax backward: ds = p * (dp - rowsum(dp * p))
        const auto row_dot = dp.cwiseProduct(p).rowwise().sum().eval();
        Mat<T> ds = (p.array() * (dp.array().colwise() - row_dot.array())).matrix() * scale;
        if (needs(q)) grad(q).middleCols(h * dh, dh).noalias() += ds * kv.middleCols(h * dh, dh);
        if (needs(k)) grad(k).middleCols(h * dh, dh).noalias() += ds.transpose() * qv.middleCols(h * dh, dh);
      }
    };
  }
  return out;
}

template <typename T>
typename Tape<T>::Var Tape<T>::cross_entropy(Var logits, std::vector<int> targets, std::vector<T> weights,
                                             std::vector<T>* row_nll) {
  const Mat<T>& lv = value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != lv.rows() || weights.size() != targets.size()) {
    throw std::logic_error("cross_entropy target count mismatch");
  }
  const auto n = lv.rows();
  Mat<T> probs = Mat<T>::Zero(n, lv.cols());
  T total = 0;
  if (row_nll) row_nll->assign(targets.size(), T(0));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    if (weights[iu] == T(0)) continue;
    if (targets[iu] < 0 || targets[iu] >= lv.cols()) throw std::out_of_range("cross_entropy target out of range");
    const T mx = lv.row(i).maxCoeff();
    probs.row(i) = (lv.row(i).array() - mx).exp();
    const T sum = probs.row(i).sum();
    probs.row(i) /= sum;
    const T nll = std::log(sum) + mx - lv(i, targets[iu]);
    if (row_nll) (*row_nll)[iu] = nll;
    total += weights[iu] * nll;
  }
  Mat<T> loss(1, 1);
  loss(0, 0) = total;
  Var out = push(std::move(loss), needs(logits));
  if (needs(out)) {
    nodes_[out.id].back = [this, logits, out, targets = std::move(targets), weights = std::move(weights),
                           probs = std::move(probs)] {
      const T g = nodes_[out.id].grad(0, 0);
      Mat<T>& gl = grad(logits);
      for (std::size_t i = 0; i < targets.size(); ++i) {
        if (weights[i] == T(0)) continue;
        const auto r = static_cast<Eigen::Index>(i);
        gl.row(r) += (g * weights[i]) * probs.row(r);
        gl(r, targets[i]) -= g * weights[i];
      }
    };
  }
  return out;
}

template <typename T>
void Tape<T>::backward(Var loss) {
  if (!record_) throw std::logic_error("backward on a tape that does not record gradients");
  if (value(loss).size() != 1) throw std::logic_error("backward needs a scalar loss");
  grad(loss)(0, 0) += T(1);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.back) n.back();
    if (n.param) n.param->grad += n.grad;
  }
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace dctgen
