#pragma once

// The assembled rating model: parameter registration, the prediction path and
// the training objective L = L_sup + lambda1 * L_fnd + lambda2 * L_fed.

#include <cstdint>
#include <memory>
#include <vector>

#include "dgclr/autodiff.hpp"
#include "dgclr/config.hpp"
#include "dgclr/data.hpp"
#include "dgclr/dcl.hpp"
#include "dgclr/dgl.hpp"
#include "dgclr/graph.hpp"
#include "dgclr/interact.hpp"
#include "dgclr/params.hpp"

namespace dgclr {

// SplitMix64 finaliser; derives independent stream seeds from (seed, tags).
inline std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ b);
}

inline ModelDims dimsFor(const InteractionDataset& ds, const TrainConfig& cfg) {
  return {ds.numUsers(), ds.numItems(), ds.rating_values.size(), ds.dim, cfg.d, cfg.K, cfg.L, ds.rating_values};
}

// Mean squared error between predictions and targets (both P x 1).
template <typename Real>
Var<Real> supervisedLoss(Var<Real> predictions, Var<Real> targets) {
  if (predictions.rows() == 0) throw Error("supervised loss needs a non-empty batch");
  return ad::mean(ad::square(ad::sub(predictions, targets)));
}

inline double totalLoss(double sup, double fnd, double fed, double lambda1, double lambda2) {
  return sup + lambda1 * fnd + lambda2 * fed;
}

template <typename Real>
Var<Real> totalLoss(Var<Real> sup, Var<Real> fnd, Var<Real> fed, Real lambda1, Real lambda2) {
  return ad::add(sup, ad::add(ad::scale(fnd, lambda1), ad::scale(fed, lambda2)));
}

template <typename Real>
struct LossTerms {
  Var<Real> total;
  Var<Real> sup;
  Var<Real> fnd;
  Var<Real> fed;
  bool views_built = false;
};

// Per-pair outputs of the prediction path.
struct PairPredictions {
  std::size_t chunks = 0;
  std::vector<double> rating;         // P
  std::vector<double> attention;      // P x chunks
  std::vector<double> factor_rating;  // P x chunks
};

template <typename Real>
class Model {
 public:
  Model(const TrainConfig& cfg, const ModelDims& dims) : cfg_(cfg), dims_(dims), store_(cfg.seed) {
    cfg_.validate();
    if (dims_.d != cfg_.d || dims_.K != cfg_.K || dims_.L != cfg_.L) throw Error("model dims disagree with config");
    if (dims_.rating_values.size() != dims_.num_ratings) throw Error("model needs one numeric value per rating type");
    registerDglParams(store_, dims_);
    registerInteractionParams(store_, dims_.d, interactionChunks());
    const std::size_t fnd_width = dims_.d / nodeChunks();
    if (cfg_.variant == Variant::HolisticEdge)
      registerDclParams(store_, fnd_width, dims_.d, dims_.review_dim);
    else
      registerDclParams(store_, fnd_width, dims_.d / edgeChunks(), dims_.d / edgeChunks());
  }

  const TrainConfig& config() const { return cfg_; }
  const ModelDims& dims() const { return dims_; }
  ParameterStore<Real>& params() { return store_; }
  const ParameterStore<Real>& params() const { return store_; }

  std::size_t interactionChunks() const { return cfg_.variant == Variant::NoAttention ? 1 : dims_.K; }
  std::size_t nodeChunks() const { return cfg_.variant == Variant::HolisticNode ? 1 : dims_.K; }
  std::size_t edgeChunks() const {
    return (cfg_.variant == Variant::HolisticEdge || cfg_.variant == Variant::NoAttention) ? 1 : dims_.K;
  }

  DglOptions dglOptions() const { return {cfg_.tau, cfg_.eta, scoreModeFor(cfg_.variant)}; }

  DglOutput<Real> propagate(Tape<Real>& tape, const RatingGraph& graph) {
    return forwardDGL(tape, store_, dims_, graph, dglOptions());
  }

  // Final embedding table used for prediction. Nodes without any edge in
  // `graph` keep their layer-0 chunked ID embedding.
  Var<Real> predictionTable(const DglOutput<Real>& dgl, const RatingGraph& graph) const {
    auto cold = std::make_shared<std::vector<bool>>(graph.numNodes(), false);
    bool any = false;
    for (std::size_t u = 0; u < graph.numUsers(); ++u)
      if (graph.userDegree(u) == 0) (*cold)[u] = any = true;
    for (std::size_t i = 0; i < graph.numItems(); ++i)
      if (graph.itemDegree(i) == 0) (*cold)[graph.numUsers() + i] = any = true;
    if (!any) return dgl.final;
    return ad::selectRows(dgl.final, dgl.initial, std::shared_ptr<const std::vector<bool>>(cold));
  }

  InteractionOutput<Real> interactPairs(Tape<Real>& tape, Var<Real> table, const Index& users, const Index& items) {
    Index item_rows;
    item_rows.reserve(items.size());
    for (auto i : items) {
      if (i >= dims_.num_items) throw Error("item index out of range");
      item_rows.push_back(dims_.num_users + i);
    }
    for (auto u : users)
      if (u >= dims_.num_users) throw Error("user index out of range");
    auto zu = ad::gatherRows(table, makeIndex(users));
    auto zv = ad::gatherRows(table, makeIndex(std::move(item_rows)));
    return interact(tape, store_, zu, zv, interactionChunks(), static_cast<Real>(cfg_.tau));
  }

  // Predictions for (user, item) pairs, propagating over `graph`.
  PairPredictions predict(const RatingGraph& graph, const Index& users, const Index& items) {
    if (users.size() != items.size()) throw ShapeError("predict: user and item lists differ in length");
    Tape<Real> tape;
    auto dgl = propagate(tape, graph);
    auto out = interactPairs(tape, predictionTable(dgl, graph), users, items);
    PairPredictions p;
    p.chunks = interactionChunks();
    for (auto v : out.prediction.value().values()) p.rating.push_back(static_cast<double>(v));
    for (auto v : out.attention.value().values()) p.attention.push_back(static_cast<double>(v));
    for (auto v : out.factor_rating.value().values()) p.factor_rating.push_back(static_cast<double>(v));
    return p;
  }

  // Objective over the training graph for the edges in `batch` (edge ids into
  // `graph`). `full_batch` selects negative pools: every edge / node when set,
  // otherwise the batch's own edges and nodes.
  LossTerms<Real> loss(Tape<Real>& tape, const RatingGraph& graph, const Index& batch, bool full_batch,
                       std::uint64_t step_seed) {
    if (batch.empty()) throw Error("supervised loss needs a non-empty batch");
    LossTerms<Real> terms;
    auto dgl = propagate(tape, graph);
    auto table = predictionTable(dgl, graph);

    Index users, items;
    Tensor<Real> targets(batch.size(), 1);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& e = graph.edge(batch[b]);
      users.push_back(e.user);
      items.push_back(e.item);
      targets[b] = static_cast<Real>(ratingValue(e.rating));
    }
    auto io = interactPairs(tape, table, users, items);
    terms.sup = supervisedLoss(io.prediction, tape.constant(std::move(targets)));

    const double l1 = cfg_.effectiveLambda1(), l2 = cfg_.effectiveLambda2();
    terms.fnd = tape.constant(Tensor<Real>(1, 1));
    terms.fed = tape.constant(Tensor<Real>(1, 1));

    if (l1 != 0.0) {
      const double p = cfg_.dropProbability();
      const auto g1 = dropEdges(graph, p, mixSeed(step_seed, 1));
      const auto g2 = dropEdges(graph, p, mixSeed(step_seed, 2));
      auto v1 = propagate(tape, g1);
      auto v2 = propagate(tape, g2);
      terms.views_built = true;
      Index node_users, node_items;
      if (full_batch) {
        for (std::size_t u = 0; u < dims_.num_users; ++u) node_users.push_back(u);
        for (std::size_t i = 0; i < dims_.num_items; ++i) node_items.push_back(i);
      } else {
        node_users = uniqueSorted(users);
        node_items = uniqueSorted(items);
      }
      terms.fnd = fndLoss(v1.final, v2.final, dims_.num_users, nodeChunks(), tape.param(store_.at(names::fndUser())),
                          tape.param(store_.at(names::fndItem())), node_users, node_items, mixSeed(step_seed, 3),
                          cfg_.cl_objective);
    }

    if (l2 != 0.0) {
      Index pool;
      if (full_batch) {
        for (std::size_t e = 0; e < graph.numEdges(); ++e) pool.push_back(e);
      } else {
        pool = batch;
      }
      auto W = tape.param(store_.at(names::fed()));
      const std::size_t P = batch.size();
      if (cfg_.variant == Variant::HolisticEdge) {
        Tensor<Real> raw(graph.numEdges(), graph.reviewDim());
        for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<Real>(graph.reviews()[i]);
        terms.fed = fedLoss(ad::reshape(io.features, P, dims_.d), tape.constant(std::move(raw)), W, batch, pool, 1,
                            mixSeed(step_seed, 4), cfg_.cl_objective);
      } else {
        const std::size_t c = edgeChunks();
        auto targets_e = ad::reshape(dgl.review_factors, graph.numEdges() * c, dims_.d / c);
        terms.fed = fedLoss(io.features, targets_e, W, batch, pool, c, mixSeed(step_seed, 4), cfg_.cl_objective);
      }
    }

    terms.total = totalLoss(terms.sup, terms.fnd, terms.fed, static_cast<Real>(l1), static_cast<Real>(l2));
    return terms;
  }

  double ratingValue(std::size_t rating_index) const { return dims_.rating_values.at(rating_index); }

 private:
  static Index uniqueSorted(Index v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  }

  TrainConfig cfg_;
  ModelDims dims_;
  ParameterStore<Real> store_;
};

}  // namespace dgclr
