#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dgclr/data.hpp"
#include "dgclr/graph.hpp"
#include "dgclr/io.hpp"
#include "dgclr/model.hpp"
#include "dgclr/params.hpp"

namespace dgclr {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double sup = 0;
  double fnd = 0;
  double fed = 0;
  double val_mse = std::numeric_limits<double>::quiet_NaN();
};

struct FitResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0 when no validation split exists
  double best_val_mse = std::numeric_limits<double>::infinity();
  bool early_stopped = false;
  bool diverged = false;
  std::size_t views_built = 0;
};

// Squared errors of the model on the interactions in `indices`, propagating
// over `graph` (the training graph). Only IDs are read from the dataset.
template <typename Real>
std::vector<double> squaredErrors(Model<Real>& model, const RatingGraph& graph, const InteractionDataset& ds,
                                  const std::vector<std::size_t>& indices, bool clip = false) {
  Index users, items;
  users.reserve(indices.size());
  items.reserve(indices.size());
  for (auto i : indices) {
    users.push_back(ds.interactions.at(i).user);
    items.push_back(ds.interactions.at(i).item);
  }
  const auto pred = model.predict(graph, users, items);
  const auto [lo, hi] = std::minmax_element(ds.rating_values.begin(), ds.rating_values.end());
  std::vector<double> out(indices.size());
  for (std::size_t p = 0; p < indices.size(); ++p) {
    double r = pred.rating[p];
    if (clip) r = std::clamp(r, *lo, *hi);
    const double diff = r - ds.interactions[indices[p]].rating;
    out[p] = diff * diff;
  }
  return out;
}

template <typename Real>
double splitMSE(Model<Real>& model, const RatingGraph& graph, const InteractionDataset& ds, Split split,
                bool clip = false) {
  const auto idx = ds.indicesOf(split);
  if (idx.empty()) throw Error(std::string("split '") + splitName(split) + "' is empty");
  const auto se = squaredErrors(model, graph, ds, idx, clip);
  double sum = 0;
  for (double v : se) sum += v;
  return sum / static_cast<double>(se.size());
}

// Per-epoch callback; returning false stops training after that epoch.
using EpochCallback = std::function<bool(const EpochRecord&)>;

// Trains `model` on the train edges of `graph`. Keeps the parameters with the
// lowest validation MSE and restores them at the end. A non-finite loss aborts
// training and restores the last parameters that produced a finite loss
// (the initial parameters if the first step already fails).
template <typename Real>
FitResult fit(Model<Real>& model, const InteractionDataset& ds, const RatingGraph& graph,
              const EpochCallback& on_epoch = {}) {
  const TrainConfig& cfg = model.config();
  cfg.validate();
  if (graph.numEdges() == 0) throw Error("fit: the training graph has no edges");
  const bool have_val = !ds.indicesOf(Split::Val).empty();
  const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= graph.numEdges();
  const AdamOptions adam{cfg.lr};
  auto& store = model.params();

  FitResult res;
  std::map<std::string, Tensor<Real>> best;
  std::size_t since_best = 0;
  auto last_good = store.snapshot();

  Index order(graph.numEdges());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (!full_batch) {
      std::mt19937_64 rng(mixSeed(cfg.seed, epoch, 0xBA7C));
      std::shuffle(order.begin(), order.end(), rng);
    }
    const std::size_t bs = full_batch ? order.size() : cfg.batch_size;
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++steps) {
      Index batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                  order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bs)));
      auto before = store.snapshot();
      Tape<Real> tape;
      auto terms = model.loss(tape, graph, batch, full_batch, mixSeed(cfg.seed, epoch, steps + 1));
      if (terms.views_built) ++res.views_built;
      const double total = static_cast<double>(terms.total.scalar());
      if (!std::isfinite(total)) {
        store.restore(last_good);
        store.zeroGrad();
        res.diverged = true;
        break;
      }
      last_good = std::move(before);
      tape.backward(terms.total);
      adamStep(store, adam);
      rec.train_loss += total;
      rec.sup += static_cast<double>(terms.sup.scalar());
      rec.fnd += static_cast<double>(terms.fnd.scalar());
      rec.fed += static_cast<double>(terms.fed.scalar());
    }
    if (res.diverged) break;
    const double n = static_cast<double>(steps);
    rec.train_loss /= n;
    rec.sup /= n;
    rec.fnd /= n;
    rec.fed /= n;

    if (have_val) {
      rec.val_mse = splitMSE(model, graph, ds, Split::Val);
      if (rec.val_mse < res.best_val_mse) {
        res.best_val_mse = rec.val_mse;
        res.best_epoch = epoch;
        best = store.snapshot();
        since_best = 0;
      } else {
        ++since_best;
      }
    }
    res.history.push_back(rec);
    if (on_epoch && !on_epoch(rec)) break;
    if (have_val && cfg.patience > 0 && since_best >= cfg.patience) {
      res.early_stopped = true;
      break;
    }
  }
  if (!best.empty()) store.restore(best);
  return res;
}

inline const char* kHistoryHeader = "epoch\ttrain_loss\tsup\tfnd\tfed\tval_mse";

inline std::string formatHistory(const std::vector<EpochRecord>& history) {
  std::string out = std::string(kHistoryHeader) + "\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "\t" + formatDouble(r.train_loss) + "\t" + formatDouble(r.sup) + "\t" +
           formatDouble(r.fnd) + "\t" + formatDouble(r.fed) + "\t" + formatDouble(r.val_mse) + "\n";
  }
  return out;
}

}  // namespace dgclr
