#pragma once

// Shared fixtures and independent reference implementations for the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dgclr/dgclr.hpp"

namespace testing_support {

using namespace dgclr;

// Random graph with distinct (user, item) pairs and Gaussian review vectors.
inline RatingGraph randomGraph(std::mt19937_64& rng, std::size_t M, std::size_t N, std::size_t R, std::size_t E,
                               std::size_t review_dim) {
  E = std::min(E, M * N);
  std::set<std::pair<std::size_t, std::size_t>> used;
  std::uniform_int_distribution<std::size_t> pu(0, M - 1), pi(0, N - 1), pr(0, R - 1);
  std::normal_distribution<double> n01;
  std::vector<Edge> edges;
  std::vector<double> reviews;
  while (edges.size() < E) {
    const auto u = pu(rng), i = pi(rng);
    if (!used.insert({u, i}).second) continue;
    edges.push_back({u, i, pr(rng), edges.size()});
    for (std::size_t j = 0; j < review_dim; ++j) reviews.push_back(n01(rng));
  }
  return RatingGraph(M, N, R, review_dim, std::move(edges), std::move(reviews));
}

inline ModelDims dimsOf(const RatingGraph& g, std::size_t d, std::size_t K, std::size_t L) {
  ModelDims dims{g.numUsers(), g.numItems(), g.numRatings(), g.reviewDim(), d, K, L, {}};
  for (std::size_t r = 0; r < g.numRatings(); ++r) dims.rating_values.push_back(static_cast<double>(r + 1));
  return dims;
}

// Small split dataset: `pairs` (user, item) with ratings cycling through 1..R.
inline InteractionDataset tinyDataset(std::size_t users, std::size_t items, std::size_t interactions,
                                      std::size_t review_dim, std::uint64_t seed, std::size_t R = 3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  InteractionDataset ds;
  ds.dim = review_dim;
  for (std::size_t r = 1; r <= R; ++r) ds.rating_values.push_back(static_cast<double>(r));
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t u = 0; u < users; ++u)
    for (std::size_t i = 0; i < items; ++i) all.push_back({u, i});
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(all.size(), interactions));
  std::vector<double> rev(review_dim);
  for (std::size_t n = 0; n < all.size(); ++n) {
    for (auto& x : rev) x = n01(rng);
    ds.addInteraction("u" + std::to_string(all[n].first), "i" + std::to_string(all[n].second),
                      static_cast<double>(1 + n % R), rev);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Naive per-edge, per-scalar message passing. Degrees and messages are
// recomputed for each receiving node by scanning the full edge list.
struct NaiveLayerInput {
  std::size_t M = 0, N = 0, K = 1, w = 1;
  std::vector<Edge> edges;
  std::vector<std::vector<double>> s;       // E x K
  std::vector<std::vector<double>> e;       // E x d
  std::vector<std::vector<double>> prev;    // (M+N) x d
  std::vector<std::vector<std::vector<double>>> wr;  // [r * K + k] w x w
  std::vector<std::vector<double>> wl;      // w x w
};

inline std::vector<std::vector<double>> naiveLayer(const NaiveLayerInput& in) {
  const std::size_t nodes = in.M + in.N, d = in.K * in.w;
  auto endpoint = [&](const Edge& x, bool user_side) { return user_side ? x.user : in.M + x.item; };
  auto degree = [&](std::size_t node, std::size_t k) {
    double D = 0;
    for (std::size_t e = 0; e < in.edges.size(); ++e)
      if (endpoint(in.edges[e], true) == node || endpoint(in.edges[e], false) == node) D += in.s[e][k];
    return D;
  };
  std::vector<std::vector<double>> out(nodes, std::vector<double>(d, 0.0));
  for (std::size_t n = 0; n < nodes; ++n) {
    for (std::size_t k = 0; k < in.K; ++k) {
      std::vector<double> acc(in.w, 0.0);
      const double Dn = degree(n, k);
      for (std::size_t e = 0; e < in.edges.size(); ++e) {
        const auto& x = in.edges[e];
        const std::size_t u = endpoint(x, true), v = endpoint(x, false);
        if (u != n && v != n) continue;
        const std::size_t other = (u == n) ? v : u;
        const double Do = degree(other, k);
        if (Dn < 1e-12 || Do < 1e-12) continue;
        const double c = in.s[e][k] / std::sqrt(Dn * Do);
        const auto& W = in.wr[x.rating * in.K + k];
        for (std::size_t b = 0; b < in.w; ++b) {
          double y = 0;
          for (std::size_t a = 0; a < in.w; ++a) y += in.e[e][k * in.w + a] * W[a][b];
          acc[b] += c * (y + in.prev[other][k * in.w + b]);
        }
      }
      for (std::size_t a = 0; a < in.w; ++a) {
        double o = 0;
        for (std::size_t b = 0; b < in.w; ++b) o += in.wl[a][b] * acc[b];
        out[n][k * in.w + a] = o;
      }
    }
  }
  return out;
}

inline std::vector<std::vector<double>> toRows(const Tensor<double>& t) {
  std::vector<std::vector<double>> out(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) out[r][c] = t(r, c);
  return out;
}

// ---------------------------------------------------------------------------
// Single-channel (K = 1) forward path written with plain loops in edge order.
// With one factor every score is 1, so the layer reduces to degree-normalized
// sums of rating-transformed review projections and neighbour embeddings.
inline std::vector<double> singleChannelForward(ParameterStore<double>& store, const ModelDims& dims,
                                                const RatingGraph& g) {
  const std::size_t M = dims.num_users, nodes = dims.numNodes(), d = dims.d, E = g.numEdges();
  const std::size_t D = dims.review_dim;
  std::vector<double> z(nodes * d);
  const auto& eu = store.at(names::userEmbedding()).value.values();
  const auto& ei = store.at(names::itemEmbedding()).value.values();
  std::copy(eu.begin(), eu.end(), z.begin());
  std::copy(ei.begin(), ei.end(), z.begin() + static_cast<std::ptrdiff_t>(M * d));

  const auto& P = store.at(names::projW(0)).value;
  const auto& pb = store.at(names::projB(0)).value;
  std::vector<double> proj(E * d);
  for (std::size_t e = 0; e < E; ++e) {
    const auto rv = g.review(e);
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0;
      for (std::size_t a = 0; a < D; ++a)
        if (rv[a] != 0) acc += rv[a] * P(a, j);
      acc = acc + pb[j];
      proj[e * d + j] = acc > 0 ? acc : 0;
    }
  }

  std::vector<double> deg(nodes, 0.0);
  for (std::size_t e = 0; e < E; ++e) {
    deg[g.edge(e).user] += 1.0;
    deg[M + g.edge(e).item] += 1.0;
  }
  std::vector<double> inv(nodes);
  for (std::size_t n = 0; n < nodes; ++n) inv[n] = deg[n] < 1e-12 ? 0.0 : 1.0 / std::sqrt(deg[n]);

  std::vector<double> sum(nodes * d, 0.0);
  std::vector<std::vector<double>> layers;
  for (std::size_t l = 1; l <= dims.L; ++l) {
    std::vector<double> agg(nodes * d, 0.0);
    for (std::size_t e = 0; e < E; ++e) {
      const std::size_t u = g.edge(e).user, v = M + g.edge(e).item;
      const double c = 1.0 * inv[u] * inv[v];
      if (c == 0) continue;
      const auto& W = store.at(names::ratingW(l, 0, g.edge(e).rating)).value;
      for (std::size_t b = 0; b < d; ++b) {
        double y = 0;
        for (std::size_t a = 0; a < d; ++a) y += proj[e * d + a] * W(a, b);
        agg[u * d + b] += c * (y + z[v * d + b]);
        agg[v * d + b] += c * (y + z[u * d + b]);
      }
    }
    const auto& Wl = store.at(names::layerW(l)).value;
    std::vector<double> next(nodes * d);
    for (std::size_t n = 0; n < nodes; ++n)
      for (std::size_t a = 0; a < d; ++a) {
        double acc = 0;
        for (std::size_t b = 0; b < d; ++b) acc += Wl(a, b) * agg[n * d + b];
        next[n * d + a] = acc;
      }
    layers.push_back(next);
    z = std::move(next);
  }
  if (layers.size() == 1) return layers[0];
  std::vector<double> out = layers[0];
  for (std::size_t l = 1; l < layers.size(); ++l)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] + layers[l][i];
  const double inv_l = 1.0 / static_cast<double>(layers.size());
  for (auto& x : out) x = x * inv_l;
  return out;
}

// ---------------------------------------------------------------------------
// Central finite differences over every scalar of every parameter.
struct GradCheckResult {
  double worst_rel = 0;
  std::string worst_name;
  std::size_t checked = 0;
};

// `loss` evaluates the objective from the current parameter values;
// `analytic` fills Parameter::grad. Relative error is
// |a - f| / max(|a|, |f|, floor); the floor keeps exact zeros well defined.
inline GradCheckResult finiteDifferenceCheck(ParameterStore<double>& store, const std::function<double()>& loss,
                                             const std::function<void()>& analytic, double h = 1e-5,
                                             double floor = 1e-6) {
  store.zeroGrad();
  analytic();
  GradCheckResult res;
  store.forEach([&](const std::string& name, Parameter<double>& p) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double old = p.value[i];
      p.value[i] = old + h;
      const double lp = loss();
      p.value[i] = old - h;
      const double lm = loss();
      p.value[i] = old;
      const double fd = (lp - lm) / (2 * h);
      const double an = p.grad[i];
      const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), floor});
      ++res.checked;
      if (rel > res.worst_rel) {
        res.worst_rel = rel;
        res.worst_name = name + "[" + std::to_string(i) + "]";
      }
    }
  });
  return res;
}

}  // namespace testing_support
