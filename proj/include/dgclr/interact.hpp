#pragma once

// Attention-based interaction: per-factor interaction features, per-factor
// ratings and softmax attention over factors.

#include <string>
#include <vector>

#include "dgclr/autodiff.hpp"
#include "dgclr/params.hpp"

namespace dgclr {

namespace names {
inline std::string mlpW() { return "ai.mlp.W"; }
inline std::string mlpB() { return "ai.mlp.b"; }
inline std::string rateW() { return "ai.w"; }
inline std::string attnW() { return "ai.wr"; }
inline std::string attnB() { return "ai.br"; }
}  // namespace names

// `chunks` is K for the factor-wise head and 1 for the single-head ablation
// that treats the concatenated embedding as one factor.
template <typename Real>
void registerInteractionParams(ParameterStore<Real>& store, std::size_t d, std::size_t chunks) {
  const std::size_t w = d / chunks;
  store.xavier(names::mlpW(), {2 * w, w});
  store.xavier(names::mlpB(), {w});
  store.xavier(names::rateW(), {w});
  store.xavier(names::attnW(), {w});
  store.xavier(names::attnB(), {1});
}

template <typename Real>
struct InteractionOutput {
  Var<Real> features;      // (P * chunks) x w, row p * chunks + k is h_p^k
  Var<Real> factor_rating; // P x chunks
  Var<Real> attention;     // P x chunks
  Var<Real> prediction;    // P x 1
};

// h^k = ReLU([u^k, v^k] W_mlp + b_mlp)
template <typename Real>
Var<Real> interactionFeatures(Tape<Real>& tape, ParameterStore<Real>& store, Var<Real> users, Var<Real> items,
                              std::size_t chunks) {
  auto x = ad::chunkPairRows(users, items, chunks);
  return ad::relu(ad::addRowBroadcast(ad::matmul(x, tape.param(store.at(names::mlpW()))),
                                      tape.param(store.at(names::mlpB()))));
}

// r^k = w^T h^k, a_k = ReLU(w_r^T h^k + b_r), alpha = softmax(a / tau),
// prediction = sum_k alpha_k r^k.
template <typename Real>
InteractionOutput<Real> interact(Tape<Real>& tape, ParameterStore<Real>& store, Var<Real> users, Var<Real> items,
                                 std::size_t chunks, Real tau) {
  if (!(tau > Real(0))) throw DomainError("tau must be positive");
  InteractionOutput<Real> out;
  const std::size_t P = users.rows();
  out.features = interactionFeatures(tape, store, users, items, chunks);
  out.factor_rating = ad::reshape(ad::matmulTransB(out.features, tape.param(store.at(names::rateW()))), P, chunks);
  auto logits = ad::relu(ad::addRowBroadcast(ad::matmulTransB(out.features, tape.param(store.at(names::attnW()))),
                                             tape.param(store.at(names::attnB()))));
  out.attention = ad::rowSoftmax(ad::reshape(logits, P, chunks), tau);
  out.prediction = ad::rowSum(ad::mul(out.attention, out.factor_rating));
  return out;
}

// Attention-weighted vote over per-factor ratings.
template <typename Real>
Real predictRating(std::span<const Real> alpha, std::span<const Real> factor_ratings) {
  if (alpha.size() != factor_ratings.size()) throw ShapeError("predictRating: length mismatch");
  Real r = 0;
  for (std::size_t k = 0; k < alpha.size(); ++k) r += alpha[k] * factor_ratings[k];
  return r;
}

}  // namespace dgclr
