#pragma once

// Disentangled graph learning: factor projection of review vectors, semantic
// and structural edge scores, factorized message passing and layer averaging.
//
// Node embeddings are kept as one (M + N) x d table, users first, so a layer
// is a single tensor and item node j lives in row M + j. Every d-wide row is
// split into K contiguous chunks of width d/K, one per latent factor.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "dgclr/autodiff.hpp"
#include "dgclr/config.hpp"
#include "dgclr/graph.hpp"
#include "dgclr/params.hpp"

namespace dgclr {

struct ModelDims {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t num_ratings = 0;
  std::size_t review_dim = 0;
  std::size_t d = 0;
  std::size_t K = 1;
  std::size_t L = 1;
  std::vector<double> rating_values;  // numeric value of each rating index

  std::size_t chunk() const { return d / K; }
  std::size_t numNodes() const { return num_users + num_items; }
};

namespace names {
inline std::string userEmbedding() { return "emb.user"; }
inline std::string itemEmbedding() { return "emb.item"; }
inline std::string projW(std::size_t k) { return "dgl.proj.W.k" + std::to_string(k); }
inline std::string projB(std::size_t k) { return "dgl.proj.b.k" + std::to_string(k); }
inline std::string prototype(std::size_t k) { return "dgl.proto.k" + std::to_string(k); }
inline std::string layerW(std::size_t l) { return "dgl.l" + std::to_string(l) + ".W"; }
inline std::string ratingW(std::size_t l, std::size_t k, std::size_t r) {
  return "dgl.l" + std::to_string(l) + ".Wr.k" + std::to_string(k) + ".r" + std::to_string(r);
}
}  // namespace names

template <typename Real>
void registerDglParams(ParameterStore<Real>& store, const ModelDims& dims) {
  const std::size_t w = dims.chunk();
  store.xavier(names::userEmbedding(), {dims.num_users, dims.d});
  store.xavier(names::itemEmbedding(), {dims.num_items, dims.d});
  for (std::size_t k = 0; k < dims.K; ++k) {
    store.xavier(names::projW(k), {dims.review_dim, w});
    store.xavier(names::projB(k), {w});
  }
  for (std::size_t k = 0; k < dims.K; ++k) store.xavier(names::prototype(k), {w});
  for (std::size_t l = 1; l <= dims.L; ++l) {
    store.xavier(names::layerW(l), {w, w});
    for (std::size_t k = 0; k < dims.K; ++k)
      for (std::size_t r = 0; r < dims.num_ratings; ++r) store.xavier(names::ratingW(l, k, r), {w, w});
  }
}

// Per-edge node indices into the stacked embedding table.
struct EdgeEndpoints {
  IndexPtr user_rows;
  IndexPtr item_rows;

  explicit EdgeEndpoints(const RatingGraph& g) {
    Index u, i;
    u.reserve(g.numEdges());
    i.reserve(g.numEdges());
    for (const auto& e : g.edges()) {
      u.push_back(e.user);
      i.push_back(g.numUsers() + e.item);
    }
    user_rows = makeIndex(std::move(u));
    item_rows = makeIndex(std::move(i));
  }
};

// e^k = ReLU(W_k^T e + b_k) for every edge at once; E x d, chunk k holds e^k.
template <typename Real>
Var<Real> projectReviewToFactors(Tape<Real>& tape, ParameterStore<Real>& store, const ModelDims& dims,
                                 Var<Real> reviews) {
  if (reviews.cols() != dims.review_dim) throw ShapeError("review vectors do not match the projection input width");
  std::vector<Var<Real>> ws, bs;
  for (std::size_t k = 0; k < dims.K; ++k) {
    ws.push_back(tape.param(store.at(names::projW(k))));
    bs.push_back(tape.param(store.at(names::projB(k))));
  }
  const auto w = dims.K == 1 ? ws[0] : ad::concatCols(ws);
  const auto b = dims.K == 1 ? bs[0] : ad::concatCols(bs);
  return ad::relu(ad::addRowBroadcast(ad::matmul(reviews, w), b));
}

// se: softmax over factors of cos(e^k, c_k) / tau. E x K.
template <typename Real>
Var<Real> semanticScores(Tape<Real>& tape, ParameterStore<Real>& store, const ModelDims& dims,
                         Var<Real> review_factors, Real tau) {
  std::vector<Var<Real>> protos;
  for (std::size_t k = 0; k < dims.K; ++k) protos.push_back(tape.param(store.at(names::prototype(k))));
  auto c = dims.K == 1 ? ad::reshape(protos[0], 1, dims.chunk()) : ad::concatCols(protos);
  return ad::rowSoftmax(ad::chunkCosine(review_factors, c, dims.K), tau);
}

// st at layer l: softmax over factors of cos(u^{k,(l-1)}, v^{k,(l-1)}) / tau. E x K.
template <typename Real>
Var<Real> structuralScores(const EdgeEndpoints& ends, Var<Real> prev, std::size_t K, Real tau) {
  auto u = ad::gatherRows(prev, ends.user_rows);
  auto v = ad::gatherRows(prev, ends.item_rows);
  return ad::rowSoftmax(ad::chunkCosine(u, v, K), tau);
}

// s = eta * se + (1 - eta) * st, evaluated as st + eta * (se - st) so that
// equal inputs pass through unchanged; the endpoints return se or st exactly.
template <typename Real>
Var<Real> combineScores(Var<Real> se, Var<Real> st, Real eta) {
  if (!(eta >= Real(0) && eta <= Real(1))) throw DomainError("eta must lie in [0, 1]");
  ad::requireSameShape(se, st, "combineScores");
  Tensor<Real> out = ad::asMatrix(st.value());
  const auto& a = se.value().values();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = eta == Real(1) ? a[i] : (eta == Real(0) ? out[i] : out[i] + eta * (a[i] - out[i]));
  return se.tape->push(std::move(out), {se, st}, [se = se.id, st = st.id, eta](Tape<Real>& t, std::size_t self) {
    const auto& g = t.grad(self).values();
    if (t.requiresGrad(se)) {
      auto& gs = t.grad(se).values();
      for (std::size_t i = 0; i < g.size(); ++i) gs[i] += eta * g[i];
    }
    if (t.requiresGrad(st)) {
      auto& gt = t.grad(st).values();
      for (std::size_t i = 0; i < g.size(); ++i) gt[i] += (Real(1) - eta) * g[i];
    }
  });
}

inline constexpr double kDegreeEps = 1e-12;

// One factorized message-passing layer.
//
//   D_n^k        = sum of s^k over all edges at node n (any rating)
//   x_{r;j->i}^k = s_ij^k (e_ij^k W_r^k + v_j^{k,(l-1)}) / sqrt(D_i^k D_j^k)
//   u_i^{k,(l)}  = W^{(l)} sum_r sum_{j in N_{i,r}} x_{r;j->i}^k
//
// and symmetrically for items. `rating_w[r * K + k]` is W_r^k. Nodes whose
// degree falls below 1e-12 send and receive nothing. Returns (M + N) x d.
template <typename Real>
Var<Real> messagePassingLayer(const RatingGraph& graph, Var<Real> scores, Var<Real> review_factors, Var<Real> prev,
                              const std::vector<Var<Real>>& rating_w, Var<Real> layer_w, std::size_t K) {
  Tape<Real>& tape = *scores.tape;
  const std::size_t E = graph.numEdges();
  const std::size_t M = graph.numUsers();
  const std::size_t nodes = graph.numNodes();
  const std::size_t d = prev.cols();
  if (K == 0 || d % K != 0) throw ShapeError("messagePassingLayer: width not divisible by K");
  const std::size_t w = d / K;
  if (prev.rows() != nodes) throw ShapeError("messagePassingLayer: embedding table has wrong row count");
  if (scores.rows() != E || scores.cols() != K) throw ShapeError("messagePassingLayer: scores must be E x K");
  if (review_factors.rows() != E || review_factors.cols() != d)
    throw ShapeError("messagePassingLayer: review factors must be E x d");
  if (rating_w.size() != graph.numRatings() * K) throw ShapeError("messagePassingLayer: wrong number of W_r");
  for (const auto& wr : rating_w)
    if (wr.rows() != w || wr.cols() != w) throw ShapeError("messagePassingLayer: W_r must be (d/K) x (d/K)");
  if (layer_w.rows() != w || layer_w.cols() != w) throw ShapeError("messagePassingLayer: W must be (d/K) x (d/K)");

  struct Saved {
    std::vector<double> inv_sqrt_deg;  // nodes x K
    Tensor<Real> agg;                  // nodes x d, pre-W^{(l)} sums
  };
  auto saved = std::make_shared<Saved>();
  saved->inv_sqrt_deg.assign(nodes * K, 0.0);
  saved->agg = Tensor<Real>(nodes, d);

  const auto& s = scores.value();
  const auto& ek = review_factors.value();
  const auto& z = prev.value();
  const auto& edges = graph.edges();

  std::vector<double> deg(nodes * K, 0.0);
  for (std::size_t e = 0; e < E; ++e) {
    const std::size_t u = edges[e].user, v = M + edges[e].item;
    for (std::size_t k = 0; k < K; ++k) {
      deg[u * K + k] += s(e, k);
      deg[v * K + k] += s(e, k);
    }
  }
  for (std::size_t i = 0; i < deg.size(); ++i)
    saved->inv_sqrt_deg[i] = deg[i] < kDegreeEps ? 0.0 : 1.0 / std::sqrt(deg[i]);

  std::vector<Real> y(w);
  auto& agg = saved->agg;
  for (std::size_t e = 0; e < E; ++e) {
    const std::size_t u = edges[e].user, v = M + edges[e].item, r = edges[e].rating;
    for (std::size_t k = 0; k < K; ++k) {
      const Real c = s(e, k) * static_cast<Real>(saved->inv_sqrt_deg[u * K + k]) *
                     static_cast<Real>(saved->inv_sqrt_deg[v * K + k]);
      if (c == Real(0)) continue;
      const auto& W = rating_w[r * K + k].value();
      const Real* ekc = ek.data() + e * d + k * w;
      std::fill(y.begin(), y.end(), Real(0));
      for (std::size_t a = 0; a < w; ++a)
        for (std::size_t b = 0; b < w; ++b) y[b] += ekc[a] * W(a, b);
      const Real* zu = z.data() + u * d + k * w;
      const Real* zv = z.data() + v * d + k * w;
      Real* au = agg.data() + u * d + k * w;
      Real* av = agg.data() + v * d + k * w;
      for (std::size_t b = 0; b < w; ++b) {
        au[b] += c * (y[b] + zv[b]);
        av[b] += c * (y[b] + zu[b]);
      }
    }
  }

  const auto& Wl = layer_w.value();
  Tensor<Real> out(nodes, d);
  for (std::size_t n = 0; n < nodes; ++n)
    for (std::size_t k = 0; k < K; ++k) {
      const Real* an = agg.data() + n * d + k * w;
      Real* on = out.data() + n * d + k * w;
      for (std::size_t a = 0; a < w; ++a) {
        Real acc = 0;
        for (std::size_t b = 0; b < w; ++b) acc += Wl(a, b) * an[b];
        on[a] = acc;
      }
    }

  std::vector<Var<Real>> inputs{scores, review_factors, prev, layer_w};
  inputs.insert(inputs.end(), rating_w.begin(), rating_w.end());
  std::vector<std::size_t> wr_ids;
  for (const auto& wr : rating_w) wr_ids.push_back(wr.id);

  auto edge_list = std::make_shared<std::vector<Edge>>(edges);
  return tape.push(std::move(out), inputs,
                   [saved, edge_list, wr_ids, s_id = scores.id, ek_id = review_factors.id, z_id = prev.id,
                    wl_id = layer_w.id, E, M, nodes, d, w, K](Tape<Real>& t, std::size_t self) {
    const auto& G = t.grad(self);
    const auto& Wl = t.value(wl_id);
    const auto& agg = saved->agg;
    const auto& isd = saved->inv_sqrt_deg;

    // out = W agg per chunk: dagg = W^T G, dW += G agg^T
    Tensor<Real> dagg(nodes, d);
    const bool need_wl = t.requiresGrad(wl_id);
    Tensor<Real>* dwl = need_wl ? &t.grad(wl_id) : nullptr;
    for (std::size_t n = 0; n < nodes; ++n)
      for (std::size_t k = 0; k < K; ++k) {
        const Real* gn = G.data() + n * d + k * w;
        const Real* an = agg.data() + n * d + k * w;
        Real* dn = dagg.data() + n * d + k * w;
        for (std::size_t a = 0; a < w; ++a) {
          const Real ga = gn[a];
          if (ga == Real(0)) continue;
          for (std::size_t b = 0; b < w; ++b) {
            dn[b] += Wl(a, b) * ga;
            if (dwl) (*dwl)(a, b) += ga * an[b];
          }
        }
      }

    const auto& s = t.value(s_id);
    const auto& ek = t.value(ek_id);
    const auto& z = t.value(z_id);
    const bool need_s = t.requiresGrad(s_id), need_ek = t.requiresGrad(ek_id), need_z = t.requiresGrad(z_id);
    Real* ds = need_s ? t.grad(s_id).data() : nullptr;
    Real* dek = need_ek ? t.grad(ek_id).data() : nullptr;
    Real* dz = need_z ? t.grad(z_id).data() : nullptr;
    std::vector<double> d_isd(nodes * K, 0.0);
    std::vector<Real> y(w), dy(w);

    for (std::size_t e = 0; e < E; ++e) {
      const auto& edge = (*edge_list)[e];
      const std::size_t u = edge.user, v = M + edge.item, r = edge.rating;
      for (std::size_t k = 0; k < K; ++k) {
        const Real iu = static_cast<Real>(isd[u * K + k]), iv = static_cast<Real>(isd[v * K + k]);
        if (iu == Real(0) || iv == Real(0)) continue;
        const Real se = s(e, k);
        const Real c = se * iu * iv;
        const std::size_t wr_id = wr_ids[r * K + k];
        const auto& W = t.value(wr_id);
        const Real* ekc = ek.data() + e * d + k * w;
        std::fill(y.begin(), y.end(), Real(0));
        for (std::size_t a = 0; a < w; ++a)
          for (std::size_t b = 0; b < w; ++b) y[b] += ekc[a] * W(a, b);
        const Real* gu = dagg.data() + u * d + k * w;
        const Real* gv = dagg.data() + v * d + k * w;
        const Real* zu = z.data() + u * d + k * w;
        const Real* zv = z.data() + v * d + k * w;
        Real dc = 0;
        for (std::size_t b = 0; b < w; ++b) {
          dc += gu[b] * (y[b] + zv[b]) + gv[b] * (y[b] + zu[b]);
          dy[b] = c * (gu[b] + gv[b]);
        }
        if (dz) {
          for (std::size_t b = 0; b < w; ++b) {
            dz[v * d + k * w + b] += c * gu[b];
            dz[u * d + k * w + b] += c * gv[b];
          }
        }
        if (dek) {
          Real* de = dek + e * d + k * w;
          for (std::size_t a = 0; a < w; ++a) {
            Real acc = 0;
            for (std::size_t b = 0; b < w; ++b) acc += W(a, b) * dy[b];
            de[a] += acc;
          }
        }
        if (t.requiresGrad(wr_id)) {
          auto& dW = t.grad(wr_id);
          for (std::size_t a = 0; a < w; ++a)
            for (std::size_t b = 0; b < w; ++b) dW(a, b) += ekc[a] * dy[b];
        }
        if (ds) {
          ds[e * K + k] += dc * iu * iv;
          d_isd[u * K + k] += static_cast<double>(dc * se * iv);
          d_isd[v * K + k] += static_cast<double>(dc * se * iu);
        }
      }
    }

    if (ds) {
      // inv_sqrt_deg = D^{-1/2}; dD = -1/2 D^{-3/2} = -1/2 inv_sqrt_deg^3
      std::vector<double> ddeg(nodes * K, 0.0);
      for (std::size_t i = 0; i < ddeg.size(); ++i)
        if (isd[i] != 0.0) ddeg[i] = -0.5 * d_isd[i] * isd[i] * isd[i] * isd[i];
      for (std::size_t e = 0; e < E; ++e) {
        const std::size_t u = (*edge_list)[e].user, v = M + (*edge_list)[e].item;
        for (std::size_t k = 0; k < K; ++k) ds[e * K + k] += static_cast<Real>(ddeg[u * K + k] + ddeg[v * K + k]);
      }
    }
  });
}

// Mean of the layer outputs l = 1..L (layer 0 excluded).
template <typename Real>
Var<Real> layerCombine(const std::vector<Var<Real>>& layers) {
  if (layers.empty()) throw ShapeError("layerCombine: need at least one layer");
  if (layers.size() == 1) return layers[0];
  auto acc = layers[0];
  for (std::size_t l = 1; l < layers.size(); ++l) acc = ad::add(acc, layers[l]);
  return ad::scale(acc, Real(1) / static_cast<Real>(layers.size()));
}

// How per-edge factor scores are formed.
enum class ScoreMode { Combined, Uniform, SemanticOnly, StructuralOnly };

inline ScoreMode scoreModeFor(Variant v) {
  switch (v) {
    case Variant::UniformScores: return ScoreMode::Uniform;
    case Variant::SemanticOnly: return ScoreMode::SemanticOnly;
    case Variant::StructuralOnly: return ScoreMode::StructuralOnly;
    default: return ScoreMode::Combined;
  }
}

template <typename Real>
struct DglOutput {
  Var<Real> initial;                // (M + N) x d, layer-0 chunked ID embeddings
  Var<Real> review_factors;         // E x d
  Var<Real> se;                     // E x K, layer independent
  std::vector<Var<Real>> st;        // per layer, E x K (absent for uniform/semantic-only)
  std::vector<Var<Real>> s;         // per layer, E x K
  std::vector<Var<Real>> layers;    // per layer, (M + N) x d
  Var<Real> final;                  // (M + N) x d
};

struct DglOptions {
  double tau = 0.5;
  double eta = 0.7;
  ScoreMode mode = ScoreMode::Combined;
};

// Full disentangled propagation over `graph`: factor projection and semantic
// scores once, then per layer structural scores, combined scores and message
// passing, then the layer mean.
template <typename Real>
DglOutput<Real> forwardDGL(Tape<Real>& tape, ParameterStore<Real>& store, const ModelDims& dims,
                           const RatingGraph& graph, const DglOptions& opt) {
  if (graph.numUsers() != dims.num_users || graph.numItems() != dims.num_items)
    throw ShapeError("graph node counts do not match the model");
  if (graph.numRatings() != dims.num_ratings) throw ShapeError("graph rating count does not match the model");
  const Real tau = static_cast<Real>(opt.tau);
  if (!(tau > Real(0))) throw DomainError("tau must be positive");
  const std::size_t E = graph.numEdges();
  const std::size_t K = dims.K;

  DglOutput<Real> out;
  out.initial = ad::concatRows(tape.param(store.at(names::userEmbedding())), tape.param(store.at(names::itemEmbedding())));

  Tensor<Real> rev(E, graph.reviewDim());
  for (std::size_t i = 0; i < rev.size(); ++i) rev[i] = static_cast<Real>(graph.reviews()[i]);
  out.review_factors = projectReviewToFactors(tape, store, dims, tape.constant(std::move(rev)));
  out.se = semanticScores(tape, store, dims, out.review_factors, tau);

  const EdgeEndpoints ends(graph);
  auto prev = out.initial;
  for (std::size_t l = 1; l <= dims.L; ++l) {
    Var<Real> s;
    switch (opt.mode) {
      case ScoreMode::Uniform:
        s = tape.constant(Tensor<Real>(E, K, Real(1) / static_cast<Real>(K)));
        break;
      case ScoreMode::SemanticOnly:
        s = out.se;
        break;
      case ScoreMode::StructuralOnly: {
        auto st = structuralScores(ends, prev, K, tau);
        out.st.push_back(st);
        s = st;
        break;
      }
      case ScoreMode::Combined: {
        auto st = structuralScores(ends, prev, K, tau);
        out.st.push_back(st);
        s = combineScores(out.se, st, static_cast<Real>(opt.eta));
        break;
      }
    }
    out.s.push_back(s);
    std::vector<Var<Real>> wr;
    for (std::size_t r = 0; r < dims.num_ratings; ++r)
      for (std::size_t k = 0; k < K; ++k) wr.push_back(tape.param(store.at(names::ratingW(l, k, r))));
    auto next = messagePassingLayer(graph, s, out.review_factors, prev, wr, tape.param(store.at(names::layerW(l))), K);
    out.layers.push_back(next);
    prev = next;
  }
  out.final = layerCombine(out.layers);
  return out;
}

}  // namespace dgclr
