#pragma once

// Tape-based reverse-mode differentiation over dense row-major tensors.
//
// Every op appends a node holding its forward value and a closure that pushes
// the node's gradient into its inputs. Nodes whose inputs are all constants are
// marked as not requiring gradients and their closures are dropped.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dgclr/error.hpp"
#include "dgclr/params.hpp"
#include "dgclr/tensor.hpp"

namespace dgclr {

using Index = std::vector<std::size_t>;
using IndexPtr = std::shared_ptr<const Index>;

inline IndexPtr makeIndex(Index idx) { return std::make_shared<const Index>(std::move(idx)); }

template <typename Real>
class Tape;

template <typename Real>
struct Var {
  Tape<Real>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<Real>& value() const { return tape->value(id); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Real scalar() const { return value()[0]; }
};

template <typename Real>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Real> constant(Tensor<Real> value) {
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
    return {this, nodes_.size() - 1};
  }

  // Leaf bound to a parameter; gradients flow into Parameter::grad on backward().
  Var<Real> param(Parameter<Real>& p) {
    auto it = leaf_of_.find(&p);
    if (it != leaf_of_.end()) return {this, it->second};
    nodes_.push_back(Node{p.value, {}, {}, &p, true});
    leaf_of_.emplace(&p, nodes_.size() - 1);
    return {this, nodes_.size() - 1};
  }

  Var<Real> push(Tensor<Real> value, std::initializer_list<Var<Real>> inputs, Backward bw) {
    return push(std::move(value), std::vector<Var<Real>>(inputs), std::move(bw));
  }

  Var<Real> push(Tensor<Real> value, const std::vector<Var<Real>>& inputs, Backward bw) {
    bool needs = false;
    for (const auto& in : inputs) {
      if (in.tape != this) throw Error("variable belongs to a different tape");
      needs = needs || nodes_[in.id].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(bw) : Backward{}, nullptr, needs});
    return {this, nodes_.size() - 1};
  }

  const Tensor<Real>& value(std::size_t id) const { return nodes_[id].value; }
  bool requiresGrad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Gradient buffer of a node, allocated as zeros on first access.
  Tensor<Real>& grad(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) n.grad = Tensor<Real>(n.value.shape());
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  // Writes d(loss)/d(parameter) into every parameter reached from `loss`,
  // accumulating on top of whatever the parameter grads already hold.
  void backward(Var<Real> loss) {
    const auto& lv = value(loss.id);
    if (lv.size() != 1) throw ShapeError("backward() expects a scalar loss");
    if (!std::isfinite(static_cast<double>(lv[0]))) throw NumericError("loss is not finite");
    for (auto& n : nodes_) n.grad = Tensor<Real>();
    grad(loss.id)[0] = Real(1);
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      auto& n = nodes_[id];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, id);
    }
    for (auto& n : nodes_) {
      if (n.param && !n.grad.empty()) {
        auto& g = n.param->grad.values();
        const auto& src = n.grad.values();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
      }
    }
  }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    Backward backward;
    Parameter<Real>* param;
    bool requires_grad;
  };

  std::deque<Node> nodes_;  // deque keeps value() references stable
  std::unordered_map<const Parameter<Real>*, std::size_t> leaf_of_;
};

namespace ad {

template <typename Real>
void requireSameShape(const Var<Real>& a, const Var<Real>& b, const char* op) {
  if (!a.value().sameShape(b.value()))
    throw ShapeError(std::string(op) + ": shape mismatch " + shapeString(a.value().shape()) + " vs " +
                     shapeString(b.value().shape()));
}

template <typename Real>
Tensor<Real> asMatrix(const Tensor<Real>& t) {
  return t.rank() == 2 ? t : t.reshaped({t.rows(), t.cols()});
}

template <typename Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  requireSameShape(a, b, "add");
  Tensor<Real> out = asMatrix(a.value());
  const auto& bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape->push(std::move(out), {a, b}, [a = a.id, b = b.id](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self).values();
    for (auto in : {a, b}) {
      if (!t.requiresGrad(in)) continue;
      auto& gi = t.grad(in).values();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

template <typename Real>
Var<Real> sub(Var<Real> a, Var<Real> b) {
  requireSameShape(a, b, "sub");
  Tensor<Real> out = asMatrix(a.value());
  const auto& bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape->push(std::move(out), {a, b}, [a = a.id, b = b.id](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self).values();
    if (t.requiresGrad(a)) {
      auto& ga = t.grad(a).values();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requiresGrad(b)) {
      auto& gb = t.grad(b).values();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

// Elementwise product.
template <typename Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  requireSameShape(a, b, "mul");
  Tensor<Real> out = asMatrix(a.value());
  const auto& bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->push(std::move(out), {a, b}, [a = a.id, b = b.id](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self).values();
    const auto& av = t.value(a).values();
    const auto& bv = t.value(b).values();
    if (t.requiresGrad(a)) {
      auto& ga = t.grad(a).values();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requiresGrad(b)) {
      auto& gb = t.grad(b).values();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename Real>
Var<Real> scale(Var<Real> a, Real c) {
  Tensor<Real> out = asMatrix(a.value());
  for (auto& v : out.values()) v *= c;
  return a.tape->push(std::move(out), {a}, [a = a.id, c](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self).values();
    auto& ga = t.grad(a).values();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

// a (n x m) + b broadcast over rows; b is 1 x m (any rank-1 tensor of length m).
template <typename Real>
Var<Real> addRowBroadcast(Var<Real> a, Var<Real> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (bv.size() != av.cols())
    throw ShapeError("addRowBroadcast: bias of " + std::to_string(bv.size()) + " values for " +
                     std::to_string(av.cols()) + " columns");
  Tensor<Real> out = asMatrix(av);
  const std::size_t n = out.rows(), m = out.cols();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out(r, c) += bv[c];
  return a.tape->push(std::move(out), {a, b}, [a = a.id, b = b.id, n, m](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requiresGrad(a)) {
      auto& ga = t.grad(a).values();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    }
    if (t.requiresGrad(b)) {
      auto& gb = t.grad(b);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) gb[c] += g(r, c);
    }
  });
}

template <typename Real>
Var<Real> relu(Var<Real> a) {
  Tensor<Real> out = asMatrix(a.value());
  for (auto& v : out.values()) v = v > Real(0) ? v : Real(0);
  return a.tape->push(std::move(out), {a}, [a = a.id](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self).values();
    const auto& y = t.value(self).values();
    auto& ga = t.grad(a).values();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (y[i] > Real(0)) ga[i] += g[i];
  });
}

template <typename Real>
Var<Real> square(Var<Real> a) {
  Tensor<Real> out = asMatrix(a.value());
  for (auto& v : out.values()) v = v * v;
  return a.tape->push(std::move(out), {a}, [a = a.id](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self).values();
    const auto& x = t.value(a).values();
    auto& ga = t.grad(a).values();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += Real(2) * x[i] * g[i];
  });
}

namespace detail {

// out(n x p) += a(n x m) * b(m x p)
template <typename Real>
void gemmNN(const Real* a, const Real* b, Real* out, std::size_t n, std::size_t m, std::size_t p) {
  for (std::size_t i = 0; i < n; ++i) {
    Real* o = out + i * p;
    const Real* ai = a + i * m;
    for (std::size_t k = 0; k < m; ++k) {
      const Real aik = ai[k];
      if (aik == Real(0)) continue;
      const Real* bk = b + k * p;
      for (std::size_t j = 0; j < p; ++j) o[j] += aik * bk[j];
    }
  }
}

// out(n x p) += a(n x m) * b(p x m)^T
template <typename Real>
void gemmNT(const Real* a, const Real* b, Real* out, std::size_t n, std::size_t m, std::size_t p) {
  for (std::size_t i = 0; i < n; ++i) {
    const Real* ai = a + i * m;
    for (std::size_t j = 0; j < p; ++j) {
      const Real* bj = b + j * m;
      Real s = 0;
      for (std::size_t k = 0; k < m; ++k) s += ai[k] * bj[k];
      out[i * p + j] += s;
    }
  }
}

// out(m x p) += a(n x m)^T * b(n x p)
template <typename Real>
void gemmTN(const Real* a, const Real* b, Real* out, std::size_t n, std::size_t m, std::size_t p) {
  for (std::size_t i = 0; i < n; ++i) {
    const Real* ai = a + i * m;
    const Real* bi = b + i * p;
    for (std::size_t k = 0; k < m; ++k) {
      const Real aik = ai[k];
      if (aik == Real(0)) continue;
      Real* o = out + k * p;
      for (std::size_t j = 0; j < p; ++j) o[j] += aik * bi[j];
    }
  }
}

}  // namespace detail

// a (n x m) * b (m x p)
template <typename Real>
Var<Real> matmul(Var<Real> a, Var<Real> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t n = av.rows(), m = av.cols(), p = bv.cols();
  if (bv.rows() != m)
    throw ShapeError("matmul: " + shapeString(av.shape()) + " x " + shapeString(bv.shape()));
  Tensor<Real> out(n, p);
  detail::gemmNN(av.data(), bv.data(), out.data(), n, m, p);
  return a.tape->push(std::move(out), {a, b}, [a = a.id, b = b.id, n, m, p](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requiresGrad(a)) detail::gemmNT(g.data(), t.value(b).data(), t.grad(a).data(), n, p, m);
    if (t.requiresGrad(b)) detail::gemmTN(t.value(a).data(), g.data(), t.grad(b).data(), n, m, p);
  });
}

// a (n x m) * b^T where b is p x m.
template <typename Real>
Var<Real> matmulTransB(Var<Real> a, Var<Real> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t n = av.rows(), m = av.cols(), p = bv.rows();
  if (bv.cols() != m)
    throw ShapeError("matmulTransB: " + shapeString(av.shape()) + " x " + shapeString(bv.shape()) + "^T");
  Tensor<Real> out(n, p);
  detail::gemmNT(av.data(), bv.data(), out.data(), n, m, p);
  return a.tape->push(std::move(out), {a, b}, [a = a.id, b = b.id, n, m, p](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    // dA = G * B, dB = G^T * A
    if (t.requiresGrad(a)) detail::gemmNN(g.data(), t.value(b).data(), t.grad(a).data(), n, p, m);
    if (t.requiresGrad(b)) detail::gemmTN(g.data(), t.value(a).data(), t.grad(b).data(), n, p, m);
  });
}

template <typename Real>
Var<Real> concatCols(const std::vector<Var<Real>>& parts) {
  if (parts.empty()) throw ShapeError("concatCols: no inputs");
  const std::size_t n = parts[0].rows();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw ShapeError("concatCols: row count mismatch");
    offsets.push_back(total);
    total += p.cols();
  }
  Tensor<Real> out(n, total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].value();
    const std::size_t w = pv.cols();
    for (std::size_t r = 0; r < n; ++r)
      std::copy_n(pv.data() + r * w, w, out.data() + r * total + offsets[k]);
  }
  std::vector<std::size_t> ids;
  for (const auto& p : parts) ids.push_back(p.id);
  return parts[0].tape->push(std::move(out), parts, [ids, offsets, n, total](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requiresGrad(ids[k])) continue;
      auto& gi = t.grad(ids[k]);
      const std::size_t w = gi.cols();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < w; ++c) gi(r, c) += g.data()[r * total + offsets[k] + c];
    }
  });
}

// Stacks a (n x m) on top of b (p x m).
template <typename Real>
Var<Real> concatRows(Var<Real> a, Var<Real> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.cols()) throw ShapeError("concatRows: column count mismatch");
  Tensor<Real> out(av.rows() + bv.rows(), av.cols());
  std::copy(av.values().begin(), av.values().end(), out.values().begin());
  std::copy(bv.values().begin(), bv.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(av.size()));
  const std::size_t split = av.size();
  return a.tape->push(std::move(out), {a, b}, [a = a.id, b = b.id, split](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self).values();
    if (t.requiresGrad(a)) {
      auto& ga = t.grad(a).values();
      for (std::size_t i = 0; i < split; ++i) ga[i] += g[i];
    }
    if (t.requiresGrad(b)) {
      auto& gb = t.grad(b).values();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[split + i];
    }
  });
}

// Row r comes from b where use_b[r] is set, otherwise from a.
template <typename Real>
Var<Real> selectRows(Var<Real> a, Var<Real> b, std::shared_ptr<const std::vector<bool>> use_b) {
  requireSameShape(a, b, "selectRows");
  if (use_b->size() != a.rows()) throw ShapeError("selectRows: mask length mismatch");
  Tensor<Real> out = asMatrix(a.value());
  const std::size_t m = out.cols();
  const auto& bv = b.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    if ((*use_b)[r]) std::copy_n(bv.data() + r * m, m, out.data() + r * m);
  return a.tape->push(std::move(out), {a, b}, [a = a.id, b = b.id, use_b, m](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (std::size_t r = 0; r < use_b->size(); ++r) {
      const std::size_t in = (*use_b)[r] ? b : a;
      if (!t.requiresGrad(in)) continue;
      auto& gi = t.grad(in);
      for (std::size_t c = 0; c < m; ++c) gi.data()[r * m + c] += g.data()[r * m + c];
    }
  });
}

template <typename Real>
Var<Real> reshape(Var<Real> a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.value().size()) throw ShapeError("reshape: element count mismatch");
  Tensor<Real> out = a.value().reshaped({rows, cols});
  return a.tape->push(std::move(out), {a}, [a = a.id](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self).values();
    auto& ga = t.grad(a).values();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

// out.row(i) = a.row(idx[i])
template <typename Real>
Var<Real> gatherRows(Var<Real> a, IndexPtr idx) {
  const auto& av = a.value();
  const std::size_t m = av.cols();
  Tensor<Real> out(idx->size(), m);
  for (std::size_t i = 0; i < idx->size(); ++i) {
    if ((*idx)[i] >= av.rows()) throw ShapeError("gatherRows: index out of range");
    std::copy_n(av.data() + (*idx)[i] * m, m, out.data() + i * m);
  }
  return a.tape->push(std::move(out), {a}, [a = a.id, idx, m](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(a);
    for (std::size_t i = 0; i < idx->size(); ++i) {
      Real* dst = ga.data() + (*idx)[i] * m;
      const Real* src = g.data() + i * m;
      for (std::size_t c = 0; c < m; ++c) dst[c] += src[c];
    }
  });
}

// Sum along each row -> n x 1.
template <typename Real>
Var<Real> rowSum(Var<Real> a) {
  const auto& av = a.value();
  const std::size_t n = av.rows(), m = av.cols();
  Tensor<Real> out(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    Real s = 0;
    for (std::size_t c = 0; c < m; ++c) s += av(r, c);
    out[r] = s;
  }
  return a.tape->push(std::move(out), {a}, [a = a.id, n, m](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(a);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) ga(r, c) += g[r];
  });
}

// Mean of all entries as a 1 x 1 tensor; 0 for an empty input. Computed as
// x0 + sum(x - x0) / n so that a constant input returns that constant exactly.
template <typename Real>
Var<Real> mean(Var<Real> a) {
  const auto& v = a.value().values();
  const std::size_t n = v.size();
  Tensor<Real> out(1, 1);
  if (n > 0) {
    Real acc = 0;
    for (std::size_t i = 1; i < n; ++i) acc += v[i] - v[0];
    out[0] = v[0] + acc / static_cast<Real>(n);
  }
  return a.tape->push(std::move(out), {a}, [a = a.id, n](Tape<Real>& t, std::size_t self) {
    if (n == 0) return;
    const Real g = t.grad(self)[0] / static_cast<Real>(n);
    for (auto& gi : t.grad(a).values()) gi += g;
  });
}

// Row-wise softmax of logits / tau, computed with max subtraction.
template <typename Real>
Var<Real> rowSoftmax(Var<Real> a, Real tau) {
  if (!(tau > Real(0))) throw DomainError("softmax temperature must be positive");
  const auto& av = a.value();
  const std::size_t n = av.rows(), m = av.cols();
  Tensor<Real> out(n, m);
  for (std::size_t r = 0; r < n; ++r) {
    Real mx = av(r, 0);
    for (std::size_t c = 1; c < m; ++c) mx = std::max(mx, av(r, c));
    Real z = 0;
    for (std::size_t c = 0; c < m; ++c) {
      out(r, c) = std::exp((av(r, c) - mx) / tau);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < m; ++c) out(r, c) /= z;
  }
  return a.tape->push(std::move(out), {a}, [a = a.id, n, m, tau](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& ga = t.grad(a);
    for (std::size_t r = 0; r < n; ++r) {
      Real dot = 0;
      for (std::size_t c = 0; c < m; ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < m; ++c) ga(r, c) += y(r, c) * (g(r, c) - dot) / tau;
    }
  });
}

inline constexpr double kCosineEps = 1e-12;

// Per-chunk cosine similarity. a is n x d, b is n x d or 1 x d (broadcast);
// each row is split into `chunks` contiguous blocks and the result is n x chunks.
// A block whose norm is below 1e-12 yields 0 with zero gradient.
template <typename Real>
Var<Real> chunkCosine(Var<Real> a, Var<Real> b, std::size_t chunks) {
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t n = av.rows(), d = av.cols();
  const bool bcast = bv.rows() == 1 && n != 1;
  if (bv.cols() != d || (!bcast && bv.rows() != n)) throw ShapeError("chunkCosine: shape mismatch");
  if (chunks == 0 || d % chunks != 0) throw ShapeError("chunkCosine: width not divisible by chunk count");
  const std::size_t w = d / chunks;
  Tensor<Real> out(n, chunks);
  for (std::size_t r = 0; r < n; ++r) {
    const Real* ar = av.data() + r * d;
    const Real* br = bv.data() + (bcast ? 0 : r * d);
    for (std::size_t k = 0; k < chunks; ++k) {
      Real dot = 0, na = 0, nb = 0;
      for (std::size_t c = k * w; c < (k + 1) * w; ++c) {
        dot += ar[c] * br[c];
        na += ar[c] * ar[c];
        nb += br[c] * br[c];
      }
      na = std::sqrt(na);
      nb = std::sqrt(nb);
      out(r, k) = (na < Real(kCosineEps) || nb < Real(kCosineEps)) ? Real(0) : dot / (na * nb);
    }
  }
  return a.tape->push(std::move(out), {a, b},
                      [a = a.id, b = b.id, n, d, w, chunks, bcast](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    const bool needA = t.requiresGrad(a), needB = t.requiresGrad(b);
    Real* ga = needA ? t.grad(a).data() : nullptr;
    Real* gb = needB ? t.grad(b).data() : nullptr;
    for (std::size_t r = 0; r < n; ++r) {
      const Real* ar = av.data() + r * d;
      const std::size_t boff = bcast ? 0 : r * d;
      const Real* br = bv.data() + boff;
      for (std::size_t k = 0; k < chunks; ++k) {
        Real na = 0, nb = 0;
        for (std::size_t c = k * w; c < (k + 1) * w; ++c) {
          na += ar[c] * ar[c];
          nb += br[c] * br[c];
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        if (na < Real(kCosineEps) || nb < Real(kCosineEps)) continue;
        const Real gk = g(r, k), cs = y(r, k);
        for (std::size_t c = k * w; c < (k + 1) * w; ++c) {
          if (needA) ga[r * d + c] += gk * (br[c] / (na * nb) - cs * ar[c] / (na * na));
          if (needB) gb[boff + c] += gk * (ar[c] / (na * nb) - cs * br[c] / (nb * nb));
        }
      }
    }
  });
}

// Interleaves per-chunk pairs: row (p*chunks + k) = [a_p chunk k, b_p chunk k].
// a, b are P x d; the result is (P*chunks) x (2d/chunks).
template <typename Real>
Var<Real> chunkPairRows(Var<Real> a, Var<Real> b, std::size_t chunks) {
  requireSameShape(a, b, "chunkPairRows");
  const std::size_t n = a.rows(), d = a.cols();
  if (chunks == 0 || d % chunks != 0) throw ShapeError("chunkPairRows: width not divisible by chunk count");
  const std::size_t w = d / chunks;
  Tensor<Real> out(n * chunks, 2 * w);
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t k = 0; k < chunks; ++k) {
      Real* o = out.data() + (p * chunks + k) * 2 * w;
      std::copy_n(av.data() + p * d + k * w, w, o);
      std::copy_n(bv.data() + p * d + k * w, w, o + w);
    }
  return a.tape->push(std::move(out), {a, b}, [a = a.id, b = b.id, n, d, w, chunks](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (int side = 0; side < 2; ++side) {
      const std::size_t in = side == 0 ? a : b;
      if (!t.requiresGrad(in)) continue;
      auto& gi = t.grad(in);
      for (std::size_t p = 0; p < n; ++p)
        for (std::size_t k = 0; k < chunks; ++k) {
          const Real* src = g.data() + (p * chunks + k) * 2 * w + side * w;
          Real* dst = gi.data() + p * d + k * w;
          for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
        }
    }
  });
}

inline constexpr double kProbClamp = 1e-7;

namespace detail {
inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace detail

// log(clamp(sigmoid(x), eps, 1 - eps)), elementwise. The gradient is zero
// wherever the clamp is active.
template <typename Real>
Var<Real> logSigmoidClamped(Var<Real> a, double eps = kProbClamp) {
  Tensor<Real> out = asMatrix(a.value());
  for (auto& v : out.values()) v = static_cast<Real>(std::log(std::clamp(detail::logistic(v), eps, 1.0 - eps)));
  return a.tape->push(std::move(out), {a}, [a = a.id, eps](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self).values();
    const auto& x = t.value(a).values();
    auto& ga = t.grad(a).values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = detail::logistic(x[i]);
      if (s > eps && s < 1.0 - eps) ga[i] += static_cast<Real>(g[i] * (1.0 - s));
    }
  });
}

// log(1 - clamp(sigmoid(x), eps, 1 - eps)), elementwise.
template <typename Real>
Var<Real> logOneMinusSigmoidClamped(Var<Real> a, double eps = kProbClamp) {
  Tensor<Real> out = asMatrix(a.value());
  for (auto& v : out.values())
    v = static_cast<Real>(std::log(1.0 - std::clamp(detail::logistic(v), eps, 1.0 - eps)));
  return a.tape->push(std::move(out), {a}, [a = a.id, eps](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self).values();
    const auto& x = t.value(a).values();
    auto& ga = t.grad(a).values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = detail::logistic(x[i]);
      if (s > eps && s < 1.0 - eps) ga[i] -= static_cast<Real>(g[i] * s);
    }
  });
}

// Row-wise bilinear form a_r^T W b_r -> n x 1.
template <typename Real>
Var<Real> rowBilinear(Var<Real> a, Var<Real> w, Var<Real> b) {
  return rowSum(mul(matmul(a, w), b));
}

}  // namespace ad

// Scalar helpers with the same numerics as the tape ops, for use outside a tape.

template <typename Real>
std::vector<Real> softmaxT(std::span<const Real> logits, Real tau) {
  if (!(tau > Real(0))) throw DomainError("softmax temperature must be positive");
  if (logits.empty()) return {};
  const Real mx = *std::max_element(logits.begin(), logits.end());
  std::vector<Real> out(logits.size());
  Real z = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - mx) / tau);
    z += out[i];
  }
  for (auto& v : out) v /= z;
  return out;
}

template <typename Real>
std::vector<Real> softmaxT(const std::vector<Real>& logits, Real tau) {
  return softmaxT(std::span<const Real>(logits), tau);
}

template <typename Real>
Real cosineSim(std::span<const Real> a, std::span<const Real> b) {
  if (a.size() != b.size()) throw ShapeError("cosineSim: length mismatch");
  Real dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < Real(ad::kCosineEps) || nb < Real(ad::kCosineEps)) return Real(0);
  return dot / (na * nb);
}

template <typename Real>
Real cosineSim(const std::vector<Real>& a, const std::vector<Real>& b) {
  return cosineSim(std::span<const Real>(a), std::span<const Real>(b));
}

}  // namespace dgclr
