#pragma once

// Evaluation, degree-bucketed reports, ablation runs, explanation records and
// the runtime scaling benchmark.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dgclr/data.hpp"
#include "dgclr/graph.hpp"
#include "dgclr/io.hpp"
#include "dgclr/model.hpp"
#include "dgclr/synthetic.hpp"
#include "dgclr/trainer.hpp"

namespace dgclr {

inline const std::vector<std::size_t>& defaultDegreeBoundaries() {
  static const std::vector<std::size_t> b{5, 10, 20, 50};
  return b;
}

// Every edge of `graph` must be a train interaction of `ds` carrying that
// interaction's review vector. Guards the prediction path against val/test
// reviews.
inline void requireTrainOnlyGraph(const RatingGraph& graph, const InteractionDataset& ds) {
  if (graph.numUsers() != ds.numUsers() || graph.numItems() != ds.numItems())
    throw Error("graph does not belong to this dataset");
  for (std::size_t e = 0; e < graph.numEdges(); ++e) {
    const auto src = graph.edge(e).source;
    if (src >= ds.size() || ds.split.at(src) != Split::Train)
      throw Error("prediction graph contains a non-train interaction (edge " + std::to_string(e) + ")");
    const auto a = graph.review(e), b = ds.review(src);
    if (!std::equal(a.begin(), a.end(), b.begin()))
      throw Error("prediction graph edge " + std::to_string(e) + " carries a foreign review vector");
  }
}

template <typename Real>
double evaluateMSE(Model<Real>& model, const RatingGraph& graph, const InteractionDataset& ds, Split split,
                   bool clip = false) {
  requireTrainOnlyGraph(graph, ds);
  return splitMSE(model, graph, ds, split, clip);
}

struct BucketResult {
  std::string label;
  std::size_t users = 0;         // evaluated users in the bucket
  std::size_t interactions = 0;  // evaluated interactions in the bucket
  std::optional<double> mse;     // absent for empty buckets
};

struct EvalReport {
  std::string split;
  double overall_mse = 0;
  std::size_t interactions = 0;
  std::size_t users = 0;
  std::vector<BucketResult> buckets;
};

// Overall MSE on `split` plus MSE per train-degree bucket of the evaluated users.
template <typename Real>
EvalReport sparsityReport(Model<Real>& model, const RatingGraph& graph, const InteractionDataset& ds,
                          const std::vector<std::size_t>& boundaries, Split split = Split::Test, bool clip = false) {
  requireTrainOnlyGraph(graph, ds);
  const auto idx = ds.indicesOf(split);
  if (idx.empty()) throw Error(std::string("split '") + splitName(split) + "' is empty");
  const auto se = squaredErrors(model, graph, ds, idx, clip);
  const auto buckets = bucketUsersByDegree(ds, boundaries);
  std::vector<std::size_t> bucket_of(ds.numUsers());
  for (std::size_t b = 0; b < buckets.size(); ++b)
    for (auto u : buckets[b].users) bucket_of[u] = b;

  EvalReport rep;
  rep.split = splitName(split);
  std::vector<double> sums(buckets.size(), 0.0);
  rep.buckets.resize(buckets.size());
  std::vector<bool> user_seen(ds.numUsers(), false);
  double total = 0;
  for (std::size_t p = 0; p < idx.size(); ++p) {
    const auto u = ds.interactions[idx[p]].user;
    const auto b = bucket_of[u];
    sums[b] += se[p];
    total += se[p];
    ++rep.buckets[b].interactions;
    if (!user_seen[u]) {
      user_seen[u] = true;
      ++rep.buckets[b].users;
      ++rep.users;
    }
  }
  rep.interactions = idx.size();
  rep.overall_mse = total / static_cast<double>(idx.size());
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    rep.buckets[b].label = buckets[b].label();
    if (rep.buckets[b].interactions > 0) rep.buckets[b].mse = sums[b] / static_cast<double>(rep.buckets[b].interactions);
  }
  return rep;
}

inline std::string formatReport(const EvalReport& rep) {
  std::string out = "split\tbucket\tusers\tinteractions\tmse\n";
  out += rep.split + "\tall\t" + std::to_string(rep.users) + "\t" + std::to_string(rep.interactions) + "\t" +
         formatDouble(rep.overall_mse) + "\n";
  for (const auto& b : rep.buckets)
    out += rep.split + "\t" + b.label + "\t" + std::to_string(b.users) + "\t" + std::to_string(b.interactions) + "\t" +
           (b.mse ? formatDouble(*b.mse) : std::string()) + "\n";
  return out;
}

struct AblationResult {
  Variant variant = Variant::Full;
  FitResult fit;
  double val_mse = std::numeric_limits<double>::quiet_NaN();
  EvalReport test;
};

// Trains a fresh model with `variant` on a split dataset and reports test MSE.
inline AblationResult runAblation(const InteractionDataset& ds, TrainConfig cfg, Variant variant,
                                  const std::vector<std::size_t>& boundaries = defaultDegreeBoundaries()) {
  if (!ds.isSplit()) throw Error("runAblation: dataset has not been split");
  cfg.variant = variant;
  const auto graph = buildGraph(ds);
  Model<double> model(cfg, dimsFor(ds, cfg));
  AblationResult res;
  res.variant = variant;
  res.fit = fit(model, ds, graph);
  if (!ds.indicesOf(Split::Val).empty()) res.val_mse = evaluateMSE(model, graph, ds, Split::Val);
  res.test = sparsityReport(model, graph, ds, boundaries, Split::Test);
  return res;
}

// Final-layer factor scores for every train edge (E x K, row-major).
template <typename Real>
std::vector<double> finalEdgeScores(Model<Real>& model, const RatingGraph& graph) {
  Tape<Real> tape;
  const auto dgl = model.propagate(tape, graph);
  std::vector<double> out;
  for (auto v : dgl.s.back().value().values()) out.push_back(static_cast<double>(v));
  return out;
}

inline std::string formatEdgeScores(const RatingGraph& graph, const InteractionDataset& ds,
                                    const std::vector<double>& scores, std::size_t K) {
  std::string out = "user\titem\trating";
  for (std::size_t k = 0; k < K; ++k) out += "\ts" + std::to_string(k);
  out += "\n";
  for (std::size_t e = 0; e < graph.numEdges(); ++e) {
    const auto& x = graph.edge(e);
    out += ds.users[x.user] + "\t" + ds.items[x.item] + "\t" + formatDouble(ds.rating_values[x.rating]);
    for (std::size_t k = 0; k < K; ++k) out += "\t" + formatDouble(scores[e * K + k]);
    out += "\n";
  }
  return out;
}

struct FactorReviewRecord {
  std::size_t factor = 0;
  double rating = 0;
  bool empty = true;
  std::string user, item;
  double score = 0;
  std::size_t review = 0;  // interaction index of the review
};

// For each factor and requested rating, up to `samples` train edges whose
// final-layer score exceeds `threshold`, drawn without replacement with `seed`.
// Cells without a qualifying edge produce one empty record.
template <typename Real>
std::vector<FactorReviewRecord> factorReviewReport(Model<Real>& model, const RatingGraph& graph,
                                                   const InteractionDataset& ds, double threshold,
                                                   const std::vector<double>& ratings, std::size_t samples,
                                                   std::uint64_t seed) {
  const std::size_t K = model.dims().K;
  const auto s = finalEdgeScores(model, graph);
  std::mt19937_64 rng(seed);
  std::vector<FactorReviewRecord> out;
  for (std::size_t k = 0; k < K; ++k) {
    for (double r : ratings) {
      std::vector<std::size_t> hits;
      for (std::size_t e = 0; e < graph.numEdges(); ++e)
        if (ds.rating_values[graph.edge(e).rating] == r && s[e * K + k] > threshold) hits.push_back(e);
      if (hits.empty()) {
        out.push_back({k, r, true, "", "", 0, 0});
        continue;
      }
      std::shuffle(hits.begin(), hits.end(), rng);
      hits.resize(std::min(hits.size(), samples));
      for (auto e : hits) {
        const auto& x = graph.edge(e);
        out.push_back({k, r, false, ds.users[x.user], ds.items[x.item], s[e * K + k], x.source});
      }
    }
  }
  return out;
}

inline std::string formatFactorReviews(const std::vector<FactorReviewRecord>& recs) {
  std::string out = "factor\trating\tuser\titem\tscore\treview\n";
  for (const auto& r : recs) {
    out += std::to_string(r.factor) + "\t" + formatDouble(r.rating) + "\t";
    if (r.empty)
      out += "\t\t\t\n";
    else
      out += r.user + "\t" + r.item + "\t" + formatDouble(r.score) + "\t" + std::to_string(r.review) + "\n";
  }
  return out;
}

struct Explanation {
  std::string user, item;
  double rating = 0;
  std::vector<double> alpha;
  std::vector<double> factor_rating;
  std::optional<std::size_t> flagged;  // argmax factor when its weight exceeds 0.5
};

// Index of the largest weight if it is strictly above 0.5.
inline std::optional<std::size_t> dominantFactor(const std::vector<double>& alpha) {
  if (alpha.empty()) return std::nullopt;
  const auto it = std::max_element(alpha.begin(), alpha.end());
  if (*it > 0.5) return static_cast<std::size_t>(it - alpha.begin());
  return std::nullopt;
}

template <typename Real>
Explanation explainPrediction(Model<Real>& model, const RatingGraph& graph, const InteractionDataset& ds,
                              const std::string& user, const std::string& item) {
  const auto u = ds.user_index.find(user);
  if (u == ds.user_index.end()) throw Error("unknown user '" + user + "'");
  const auto i = ds.item_index.find(item);
  if (i == ds.item_index.end()) throw Error("unknown item '" + item + "'");
  requireTrainOnlyGraph(graph, ds);
  const auto p = model.predict(graph, {u->second}, {i->second});
  Explanation ex;
  ex.user = user;
  ex.item = item;
  ex.rating = p.rating[0];
  ex.alpha = p.attention;
  ex.factor_rating = p.factor_rating;
  ex.flagged = dominantFactor(ex.alpha);
  return ex;
}

inline std::string formatExplanation(const Explanation& ex) {
  std::ostringstream os;
  os << "user " << ex.user << "  item " << ex.item << "\n";
  os << "predicted rating " << formatDouble(ex.rating) << "\n";
  os << "factor\talpha\trating\n";
  for (std::size_t k = 0; k < ex.alpha.size(); ++k)
    os << k << "\t" << formatDouble(ex.alpha[k]) << "\t" << formatDouble(ex.factor_rating[k])
       << (ex.flagged && *ex.flagged == k ? "\t<- dominant" : "") << "\n";
  if (!ex.flagged) os << "no factor has attention above 0.5\n";
  return os.str();
}

inline std::string formatPredictions(const InteractionDataset& ds, const std::vector<std::size_t>& indices,
                                     const std::vector<double>& predictions) {
  std::string out = "user\titem\trating\tprediction\n";
  for (std::size_t p = 0; p < indices.size(); ++p) {
    const auto& x = ds.interactions[indices[p]];
    out += ds.users[x.user] + "\t" + ds.items[x.item] + "\t" + formatDouble(x.rating) + "\t" +
           formatDouble(predictions[p]) + "\n";
  }
  return out;
}

// Least-squares slope of log(y) against log(x).
inline double logLogSlope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("slope fit needs at least two points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw DomainError("slope fit needs positive values");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0) throw DomainError("slope fit needs distinct x values");
  return sxy / sxx;
}

struct BenchOptions {
  std::vector<std::size_t> edges{1000, 10000, 100000};
  std::size_t d = 64;
  std::size_t K = 4;
  std::size_t L = 2;
  std::size_t review_dim = 32;
  std::size_t ratings = 5;
  std::size_t degree = 10;  // average degree on each side; node counts scale with |E|
  std::size_t reps = 3;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::size_t edges = 0;
  std::size_t users = 0;
  std::size_t items = 0;
  double seconds = 0;  // fastest of the repetitions
};

struct BenchResult {
  std::vector<BenchRow> rows;
  double exponent = std::numeric_limits<double>::quiet_NaN();  // over rows with edges > 0
};

// Times one forward propagation plus backward pass through the disentangled
// graph layers on random graphs of increasing size.
inline BenchResult runtimeBench(const BenchOptions& opt) {
  BenchResult res;
  std::vector<double> xs, ys;
  for (std::size_t E : opt.edges) {
    const std::size_t nodes = std::max<std::size_t>(10, E / std::max<std::size_t>(1, opt.degree));
    const auto graph = makeRandomGraph(nodes, nodes, E, opt.ratings, opt.review_dim, mixSeed(opt.seed, E));
    TrainConfig cfg;
    cfg.d = opt.d;
    cfg.K = opt.K;
    cfg.L = opt.L;
    cfg.seed = opt.seed;
    ModelDims dims{nodes, nodes, opt.ratings, opt.review_dim, opt.d, opt.K, opt.L, {}};
    for (std::size_t r = 0; r < opt.ratings; ++r) dims.rating_values.push_back(static_cast<double>(r + 1));
    Model<double> model(cfg, dims);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t rep = 0; rep < std::max<std::size_t>(1, opt.reps); ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      Tape<double> tape;
      const auto dgl = model.propagate(tape, graph);
      tape.backward(ad::mean(ad::square(dgl.final)));
      const auto t1 = std::chrono::steady_clock::now();
      model.params().zeroGrad();
      best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    res.rows.push_back({E, nodes, nodes, best});
    if (E > 0) {
      xs.push_back(static_cast<double>(E));
      ys.push_back(best);
    }
  }
  if (xs.size() >= 2) res.exponent = logLogSlope(xs, ys);
  return res;
}

inline std::string formatBench(const BenchResult& b) {
  std::string out = "edges\tusers\titems\tseconds\n";
  for (const auto& r : b.rows)
    out += std::to_string(r.edges) + "\t" + std::to_string(r.users) + "\t" + std::to_string(r.items) + "\t" +
           formatDouble(r.seconds) + "\n";
  return out;
}

}  // namespace dgclr
