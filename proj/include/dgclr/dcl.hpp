#pragma once

// Factor-wise contrastive objectives: node discrimination between two
// edge-dropped views, and edge discrimination between interaction features and
// review factors. Both use a bilinear discriminator D(a, b) = sigmoid(a^T W b)
// with D clamped to [1e-7, 1 - 1e-7] before the logarithm.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dgclr/autodiff.hpp"
#include "dgclr/config.hpp"
#include "dgclr/error.hpp"
#include "dgclr/params.hpp"

namespace dgclr {

namespace names {
inline std::string fndUser() { return "dcl.fnd.user"; }
inline std::string fndItem() { return "dcl.fnd.item"; }
inline std::string fed() { return "dcl.fed"; }
}  // namespace names

template <typename Real>
void registerDclParams(ParameterStore<Real>& store, std::size_t node_width, std::size_t fed_rows,
                       std::size_t fed_cols) {
  store.xavier(names::fndUser(), {node_width, node_width});
  store.xavier(names::fndItem(), {node_width, node_width});
  store.xavier(names::fed(), {fed_rows, fed_cols});
}

// sigmoid(a^T W b), clamped to [eps, 1 - eps].
template <typename Real>
double discriminate(std::span<const Real> a, const Tensor<Real>& W, std::span<const Real> b,
                    double eps = ad::kProbClamp) {
  if (W.rows() != a.size() || W.cols() != b.size()) throw ShapeError("discriminate: shape mismatch");
  double logit = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) logit += static_cast<double>(a[i]) * W(i, j) * b[j];
  return std::clamp(ad::detail::logistic(logit), eps, 1.0 - eps);
}

// Anchor/negative pairs over a candidate pool. For anchor a with identity
// anchor_ids[a], one candidate is drawn uniformly from `pool`; a draw equal to
// the anchor's own identity is redrawn once and the term is skipped if it
// collides again.
struct NegativeSample {
  Index anchor;    // position in the anchor list
  Index negative;  // identity drawn from the pool
};

inline NegativeSample sampleNegatives(const Index& anchor_ids, const Index& pool, std::mt19937_64& rng) {
  NegativeSample out;
  if (pool.empty()) return out;
  out.anchor.reserve(anchor_ids.size());
  out.negative.reserve(anchor_ids.size());
  for (std::size_t a = 0; a < anchor_ids.size(); ++a) {
    std::size_t pick = pool[static_cast<std::size_t>(rng() % pool.size())];
    if (pick == anchor_ids[a]) {
      pick = pool[static_cast<std::size_t>(rng() % pool.size())];
      if (pick == anchor_ids[a]) continue;
    }
    out.anchor.push_back(a);
    out.negative.push_back(pick);
  }
  return out;
}

// literal:    -mean log D(pos) + mean log D(neg)
// stabilized: -mean log D(pos) - mean log(1 - D(neg))
template <typename Real>
Var<Real> contrastiveTerm(Var<Real> pos_logits, Var<Real> neg_logits, ClObjective objective) {
  auto pos = ad::mean(ad::logSigmoidClamped(pos_logits));
  if (objective == ClObjective::Literal) return ad::sub(ad::mean(ad::logSigmoidClamped(neg_logits)), pos);
  return ad::sub(ad::scale(ad::mean(ad::logOneMinusSigmoidClamped(neg_logits)), Real(-1)), pos);
}

// Node discrimination for one side (users or items).
//
// `view1` and `view2` are (rows * chunks) x width tables where row n * chunks + k
// holds node n's factor-k embedding. `nodes` lists the participating node rows
// (already offset for items). Negatives come from the same node list.
template <typename Real>
Var<Real> nodeDiscrimination(Var<Real> view1, Var<Real> view2, Var<Real> W, const Index& nodes, std::size_t chunks,
                             std::mt19937_64& rng, ClObjective objective) {
  Index pos_rows, anchor_ids;
  pos_rows.reserve(nodes.size() * chunks);
  for (auto n : nodes)
    for (std::size_t k = 0; k < chunks; ++k) {
      pos_rows.push_back(n * chunks + k);
      anchor_ids.push_back(n);
    }
  const auto neg = sampleNegatives(anchor_ids, nodes, rng);
  Index neg_anchor_rows, neg_rows;
  for (std::size_t i = 0; i < neg.anchor.size(); ++i) {
    const std::size_t a = neg.anchor[i];
    neg_anchor_rows.push_back(pos_rows[a]);
    neg_rows.push_back(neg.negative[i] * chunks + (a % chunks));
  }
  auto pos_idx = makeIndex(std::move(pos_rows));
  auto pos = ad::rowBilinear(ad::gatherRows(view1, pos_idx), W, ad::gatherRows(view2, pos_idx));
  auto negl = ad::rowBilinear(ad::gatherRows(view1, makeIndex(std::move(neg_anchor_rows))), W,
                              ad::gatherRows(view2, makeIndex(std::move(neg_rows))));
  return contrastiveTerm(pos, negl, objective);
}

// Sum of user-side and item-side node discrimination between two views of the
// final (M + N) x d embeddings. `chunks` = K gives the factor-wise task; 1 gives
// the holistic variant.
template <typename Real>
Var<Real> fndLoss(Var<Real> view1, Var<Real> view2, std::size_t num_users, std::size_t chunks, Var<Real> W_user,
                  Var<Real> W_item, const Index& users, const Index& items, std::uint64_t seed,
                  ClObjective objective) {
  ad::requireSameShape(view1, view2, "fndLoss");
  const std::size_t rows = view1.rows(), d = view1.cols();
  if (chunks == 0 || d % chunks != 0) throw ShapeError("fndLoss: width not divisible by chunk count");
  const std::size_t w = d / chunks;
  auto v1 = ad::reshape(view1, rows * chunks, w);
  auto v2 = ad::reshape(view2, rows * chunks, w);
  std::mt19937_64 rng(seed);
  Index item_rows;
  item_rows.reserve(items.size());
  for (auto i : items) item_rows.push_back(num_users + i);
  auto lu = nodeDiscrimination(v1, v2, W_user, users, chunks, rng, objective);
  auto li = nodeDiscrimination(v1, v2, W_item, item_rows, chunks, rng, objective);
  return ad::add(lu, li);
}

// Edge discrimination. `features` is (P * chunks) x a with row b * chunks + k the
// factor-k interaction feature of batch edge b; `targets` is (E * chunks) x b
// with row e * chunks + k the factor-k review projection of edge e.
// `batch_edges[b]` is the edge id of batch row b; negatives are drawn from
// `pool` (edge ids) excluding the edge itself.
template <typename Real>
Var<Real> fedLoss(Var<Real> features, Var<Real> targets, Var<Real> W, const Index& batch_edges, const Index& pool,
                  std::size_t chunks, std::uint64_t seed, ClObjective objective) {
  if (pool.size() < 2) throw Error("edge discrimination needs at least 2 training edges");
  if (features.rows() != batch_edges.size() * chunks) throw ShapeError("fedLoss: feature rows do not match batch");
  Index anchor_rows, pos_rows, anchor_ids;
  for (std::size_t b = 0; b < batch_edges.size(); ++b)
    for (std::size_t k = 0; k < chunks; ++k) {
      anchor_rows.push_back(b * chunks + k);
      pos_rows.push_back(batch_edges[b] * chunks + k);
      anchor_ids.push_back(batch_edges[b]);
    }
  std::mt19937_64 rng(seed);
  const auto neg = sampleNegatives(anchor_ids, pool, rng);
  Index neg_anchor_rows, neg_rows;
  for (std::size_t i = 0; i < neg.anchor.size(); ++i) {
    const std::size_t a = neg.anchor[i];
    neg_anchor_rows.push_back(anchor_rows[a]);
    neg_rows.push_back(neg.negative[i] * chunks + (a % chunks));
  }
  auto pos = ad::rowBilinear(ad::gatherRows(features, makeIndex(std::move(anchor_rows))), W,
                             ad::gatherRows(targets, makeIndex(std::move(pos_rows))));
  auto negl = ad::rowBilinear(ad::gatherRows(features, makeIndex(std::move(neg_anchor_rows))), W,
                              ad::gatherRows(targets, makeIndex(std::move(neg_rows))));
  return contrastiveTerm(pos, negl, objective);
}

}  // namespace dgclr
