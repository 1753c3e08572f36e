#pragma once

// Synthetic data with planted latent factors, and random rating graphs for
// timing runs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dgclr/data.hpp"
#include "dgclr/graph.hpp"

namespace dgclr {

struct PlantedSpec {
  std::size_t users = 50;
  std::size_t items = 40;
  std::size_t interactions = 600;
  std::size_t factors = 2;
  std::size_t review_dim = 8;     // >= factors; the first `factors` dims carry the indicator
  double rating_offset = 1.0;     // latent rating = offset + scale * <p_u, q_i> + noise
  double rating_scale = 2.0;
  double rating_noise = 0.1;      // std-dev of Gaussian noise on the latent rating
  double review_noise = 0.1;      // std-dev of Gaussian noise on every review dim
  std::uint64_t seed = 0;
};

// Users and items get latent vectors p_u, q_i uniform in [0, 1]^F. The latent
// rating offset + scale * <p_u, q_i> + noise is rounded and clamped to 1..5. The
// review vector is one-hot(z) plus Gaussian noise, where z = argmax_k |p_uk q_ik|
// is the factor contributing most to the rating.
inline InteractionDataset makePlantedDataset(const PlantedSpec& spec) {
  if (spec.factors == 0 || spec.review_dim < spec.factors)
    throw DomainError("planted data needs 1 <= factors <= review_dim");
  if (spec.interactions > spec.users * spec.items)
    throw DomainError("more interactions requested than (user, item) pairs exist");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> rnoise(0.0, spec.rating_noise), vnoise(0.0, spec.review_noise);

  std::vector<double> p(spec.users * spec.factors), q(spec.items * spec.factors);
  for (auto& x : p) x = unif(rng);
  for (auto& x : q) x = unif(rng);

  std::vector<std::size_t> pairs(spec.users * spec.items);
  for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i] = i;
  for (std::size_t i = 0; i < spec.interactions; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pairs.size() - 1);
    std::swap(pairs[i], pairs[pick(rng)]);
  }
  pairs.resize(spec.interactions);

  InteractionDataset ds;
  ds.dim = spec.review_dim;
  ds.rating_values = {1, 2, 3, 4, 5};
  for (std::size_t u = 0; u < spec.users; ++u) ds.internUser("u" + std::to_string(u));
  for (std::size_t i = 0; i < spec.items; ++i) ds.internItem("i" + std::to_string(i));

  std::vector<double> review(spec.review_dim);
  for (auto pair : pairs) {
    const std::size_t u = pair / spec.items, i = pair % spec.items;
    std::size_t z = 0;
    double best = -1;
    for (std::size_t k = 0; k < spec.factors; ++k) {
      const double c = std::abs(p[u * spec.factors + k] * q[i * spec.factors + k]);
      if (c > best) best = c, z = k;
    }
    double dot = 0;
    for (std::size_t k = 0; k < spec.factors; ++k) dot += p[u * spec.factors + k] * q[i * spec.factors + k];
    const double latent = spec.rating_offset + spec.rating_scale * dot + rnoise(rng);
    const double rating = std::clamp(std::round(latent), 1.0, 5.0);
    for (std::size_t j = 0; j < spec.review_dim; ++j) review[j] = (j == z ? 1.0 : 0.0) + vnoise(rng);
    ds.addInteraction(ds.users[u], ds.items[i], rating, review);
  }
  return ds;
}

// Uniformly random bipartite graph. Parallel edges may occur; they cost the
// same as distinct ones.
inline RatingGraph makeRandomGraph(std::size_t users, std::size_t items, std::size_t edges, std::size_t ratings,
                                   std::size_t review_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pu(0, users - 1), pi(0, items - 1), pr(0, ratings - 1);
  std::normal_distribution<double> n01;
  std::vector<Edge> es;
  es.reserve(edges);
  std::vector<double> reviews(edges * review_dim);
  for (std::size_t e = 0; e < edges; ++e) es.push_back({pu(rng), pi(rng), pr(rng), e});
  for (auto& x : reviews) x = n01(rng);
  return RatingGraph(users, items, ratings, review_dim, std::move(es), std::move(reviews));
}

}  // namespace dgclr
