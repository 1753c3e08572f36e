#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dgclr/error.hpp"
#include "dgclr/tensor.hpp"

namespace dgclr {

// A trainable tensor with its gradient accumulator and Adam moments.
template <typename Real>
struct Parameter {
  Tensor<Real> value;
  Tensor<Real> grad;
  Tensor<Real> adam_m;
  Tensor<Real> adam_v;
  std::uint64_t step_count = 0;

  Parameter() = default;
  explicit Parameter(Tensor<Real> v)
      : value(std::move(v)), grad(value.shape()), adam_m(value.shape()), adam_v(value.shape()) {}

  const Shape& shape() const { return value.shape(); }
  void zeroGrad() { grad.fill(Real(0)); }
};

// Named parameters, iterated in sorted-name order. Parameters live behind
// unique_ptr so tape leaves can keep stable pointers while the map grows.
template <typename Real>
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed), rng_(seed) {}

  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  std::uint64_t seed() const { return seed_; }

  Parameter<Real>& add(const std::string& name, Tensor<Real> value) {
    if (params_.count(name)) throw Error("parameter '" + name + "' is already registered");
    auto [it, ok] = params_.emplace(name, std::make_unique<Parameter<Real>>(std::move(value)));
    return *it->second;
  }

  // Glorot-uniform draw from [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))].
  // A rank-1 shape (n) is treated as an n x 1 column. Draws consume the store's
  // generator, so results depend on the seed and on registration order.
  Parameter<Real>& xavier(const std::string& name, const Shape& shape) {
    if (shape.empty() || shape.size() > 2)
      throw ShapeError("xavier init expects 1 or 2 extents, got " + shapeString(shape));
    if (params_.count(name)) throw Error("parameter '" + name + "' is already registered");
    const double fan_in = static_cast<double>(shape[0]);
    const double fan_out = shape.size() == 2 ? static_cast<double>(shape[1]) : 1.0;
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<Real> t(shape);
    for (auto& v : t.values()) v = static_cast<Real>(dist(rng_));
    return add(name, std::move(t));
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Parameter<Real>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
    return *it->second;
  }
  const Parameter<Real>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
    return *it->second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, _] : params_) out.push_back(name);
    return out;
  }

  std::size_t size() const { return params_.size(); }

  std::size_t scalarCount() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p->value.size();
    return n;
  }

  void zeroGrad() {
    for (auto& [_, p] : params_) p->zeroGrad();
  }

  template <typename F>
  void forEach(F&& f) {
    for (auto& [name, p] : params_) f(name, *p);
  }
  template <typename F>
  void forEach(F&& f) const {
    for (const auto& [name, p] : params_) f(name, static_cast<const Parameter<Real>&>(*p));
  }

  // Value-only snapshot, used to keep the best validation state.
  std::map<std::string, Tensor<Real>> snapshot() const {
    std::map<std::string, Tensor<Real>> out;
    for (const auto& [name, p] : params_) out.emplace(name, p->value);
    return out;
  }

  void restore(const std::map<std::string, Tensor<Real>>& snap) {
    for (const auto& [name, value] : snap) {
      auto& p = at(name);
      if (!p.value.sameShape(value)) throw ShapeError("snapshot shape mismatch for '" + name + "'");
      p.value = value;
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::map<std::string, std::unique_ptr<Parameter<Real>>> params_;
};

struct AdamOptions {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update over every parameter, then zeroes gradients.
template <typename Real>
void adamStep(ParameterStore<Real>& store, const AdamOptions& opt = {}) {
  if (!(opt.lr >= 0.0)) throw DomainError("learning rate must be non-negative");
  store.forEach([&](const std::string&, Parameter<Real>& p) {
    ++p.step_count;
    const double t = static_cast<double>(p.step_count);
    const double c1 = 1.0 - std::pow(opt.beta1, t);
    const double c2 = 1.0 - std::pow(opt.beta2, t);
    auto& w = p.value.values();
    auto& g = p.grad.values();
    auto& m = p.adam_m.values();
    auto& v = p.adam_v.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = opt.beta1 * m[i] + (1.0 - opt.beta1) * gi;
      const double vi = opt.beta2 * v[i] + (1.0 - opt.beta2) * gi * gi;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      const double step = opt.lr * (mi / c1) / (std::sqrt(vi / c2) + opt.eps);
      w[i] = static_cast<Real>(w[i] - step);
    }
    p.zeroGrad();
  });
}

}  // namespace dgclr
