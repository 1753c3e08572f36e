#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dgclr/data.hpp"
#include "dgclr/error.hpp"

namespace dgclr {

struct Edge {
  std::size_t user = 0;
  std::size_t item = 0;
  std::size_t rating = 0;  // index into the rating set
  std::size_t source = 0;  // originating interaction index
};

// Bipartite training graph. Edges are stored once; per-rating adjacency lists
// hold edge ids for both directions so the two views can never drift apart.
class RatingGraph {
 public:
  RatingGraph() = default;

  RatingGraph(std::size_t num_users, std::size_t num_items, std::size_t num_ratings, std::size_t review_dim,
              std::vector<Edge> edges, std::vector<double> reviews)
      : num_users_(num_users),
        num_items_(num_items),
        num_ratings_(num_ratings),
        review_dim_(review_dim),
        edges_(std::move(edges)),
        reviews_(std::move(reviews)) {
    if (reviews_.size() != edges_.size() * review_dim_) throw ShapeError("graph: review matrix does not match edges");
    user_adj_.assign(num_ratings_, std::vector<std::vector<std::size_t>>(num_users_));
    item_adj_.assign(num_ratings_, std::vector<std::vector<std::size_t>>(num_items_));
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const auto& x = edges_[e];
      if (x.user >= num_users_ || x.item >= num_items_ || x.rating >= num_ratings_)
        throw ShapeError("graph: edge " + std::to_string(e) + " out of range");
      user_adj_[x.rating][x.user].push_back(e);
      item_adj_[x.rating][x.item].push_back(e);
    }
  }

  std::size_t numUsers() const { return num_users_; }
  std::size_t numItems() const { return num_items_; }
  std::size_t numNodes() const { return num_users_ + num_items_; }
  std::size_t numRatings() const { return num_ratings_; }
  std::size_t reviewDim() const { return review_dim_; }
  std::size_t numEdges() const { return edges_.size(); }

  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(std::size_t e) const { return edges_[e]; }
  std::span<const double> review(std::size_t e) const { return {reviews_.data() + e * review_dim_, review_dim_}; }
  const std::vector<double>& reviews() const { return reviews_; }

  // Edge ids of user u with rating index r (the set N_{u,r}).
  const std::vector<std::size_t>& userEdges(std::size_t u, std::size_t r) const { return user_adj_[r][u]; }
  const std::vector<std::size_t>& itemEdges(std::size_t i, std::size_t r) const { return item_adj_[r][i]; }

  std::vector<std::size_t> userNeighbors(std::size_t u, std::size_t r) const {
    std::vector<std::size_t> out;
    for (auto e : user_adj_[r][u]) out.push_back(edges_[e].item);
    return out;
  }
  std::vector<std::size_t> itemNeighbors(std::size_t i, std::size_t r) const {
    std::vector<std::size_t> out;
    for (auto e : item_adj_[r][i]) out.push_back(edges_[e].user);
    return out;
  }

  std::size_t userDegree(std::size_t u) const {
    std::size_t n = 0;
    for (std::size_t r = 0; r < num_ratings_; ++r) n += user_adj_[r][u].size();
    return n;
  }
  std::size_t itemDegree(std::size_t i) const {
    std::size_t n = 0;
    for (std::size_t r = 0; r < num_ratings_; ++r) n += item_adj_[r][i].size();
    return n;
  }

  // Subgraph with the same node sets keeping only the listed edges (in order).
  RatingGraph subgraph(const std::vector<std::size_t>& keep) const {
    std::vector<Edge> edges;
    std::vector<double> reviews;
    edges.reserve(keep.size());
    reviews.reserve(keep.size() * review_dim_);
    for (auto e : keep) {
      edges.push_back(edges_.at(e));
      const auto r = review(e);
      reviews.insert(reviews.end(), r.begin(), r.end());
    }
    return RatingGraph(num_users_, num_items_, num_ratings_, review_dim_, std::move(edges), std::move(reviews));
  }

 private:
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::size_t num_ratings_ = 0;
  std::size_t review_dim_ = 0;
  std::vector<Edge> edges_;
  std::vector<double> reviews_;
  std::vector<std::vector<std::vector<std::size_t>>> user_adj_;
  std::vector<std::vector<std::vector<std::size_t>>> item_adj_;
};

// Graph over the training interactions only, in dataset order.
inline RatingGraph buildGraph(const InteractionDataset& ds) {
  if (!ds.isSplit()) throw Error("buildGraph: dataset has not been split");
  std::vector<Edge> edges;
  std::vector<double> reviews;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.split[i] != Split::Train) continue;
    const auto& x = ds.interactions[i];
    edges.push_back({x.user, x.item, x.rating_index, i});
    const auto r = ds.review(i);
    reviews.insert(reviews.end(), r.begin(), r.end());
  }
  return RatingGraph(ds.numUsers(), ds.numItems(), ds.rating_values.size(), ds.dim, std::move(edges),
                     std::move(reviews));
}

// Removes each edge independently with probability p.
inline RatingGraph dropEdges(const RatingGraph& g, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("edge drop probability must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::size_t> keep;
  keep.reserve(g.numEdges());
  for (std::size_t e = 0; e < g.numEdges(); ++e)
    if (unif(rng) >= p) keep.push_back(e);
  return g.subgraph(keep);
}

}  // namespace dgclr
