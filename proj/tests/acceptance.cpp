// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "support.hpp"
#include "temp_dir.hpp"

using namespace dgclr;
using namespace testing_support;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

int failures = 0;

void run(int id, const std::string& title, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  std::ostringstream line;
  if (limit_s > 0 && secs >= limit_s) {
    o.pass = false;
    o.detail += "; over the " + formatDouble(limit_s) + " s budget";
  }
  line << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << title << ": " << o.detail << " ["
       << formatDouble(std::round(secs * 1000) / 1000) << " s]";
  std::cout << line.str() << std::endl;
  if (!o.pass) ++failures;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

InteractionDataset plantedSplit(std::uint64_t data_seed) {
  PlantedSpec spec;
  spec.seed = data_seed;
  auto ds = makePlantedDataset(spec);
  applySplit(ds, data_seed);
  return ds;
}

Outcome gradientSuite() {
  auto ds = tinyDataset(3, 3, 5, 4, 11);
  ds.split.assign(ds.size(), Split::Train);
  const auto graph = buildGraph(ds);
  TrainConfig cfg;
  cfg.d = 8;
  cfg.K = 2;
  cfg.L = 2;
  cfg.tau = 0.5;
  cfg.eta = 0.7;
  cfg.lambda1 = cfg.lambda2 = 0.5;
  Model<double> model(cfg, dimsFor(ds, cfg));
  Index all(graph.numEdges());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  auto build = [&](Tape<double>& t) { return model.loss(t, graph, all, true, 2024).total; };
  const auto res = finiteDifferenceCheck(
      model.params(),
      [&] {
        Tape<double> t;
        return build(t).scalar();
      },
      [&] {
        Tape<double> t;
        t.backward(build(t));
      },
      1e-5);
  const bool every = res.checked == model.params().scalarCount();
  return {every && res.worst_rel < 1e-4, std::to_string(model.params().size()) + " tensors, " +
                                             std::to_string(res.checked) + " scalars, worst relative error " +
                                             fmt(res.worst_rel) + " (" + res.worst_name + ")"};
}

Outcome normalizationSuite() {
  std::mt19937_64 rng(7);
  double worst = 0;
  bool interior = true;
  std::size_t rows = 0;
  auto check = [&](const std::vector<double>& v, std::size_t K) {
    for (std::size_t r = 0; r < v.size() / K; ++r) {
      double sum = 0;
      for (std::size_t k = 0; k < K; ++k) {
        const double x = v[r * K + k];
        sum += x;
        if (K > 1 && !(x > 0 && x < 1)) interior = false;
      }
      worst = std::max(worst, std::abs(sum - 1.0));
      ++rows;
    }
  };
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t K = std::vector<std::size_t>{1, 2, 4, 8}[inst % 4];
    std::uniform_int_distribution<std::size_t> nodes(2, 12);
    const std::size_t M = nodes(rng), N = nodes(rng);
    const std::size_t E = std::uniform_int_distribution<std::size_t>(1, M * N)(rng);
    const auto g = randomGraph(rng, M, N, 3, E, 6);
    TrainConfig cfg;
    cfg.K = K;
    cfg.d = 2 * K;
    cfg.L = 1 + inst % 3;
    cfg.tau = std::vector<double>{0.2, 0.5, 1.0}[inst % 3];
    cfg.seed = static_cast<std::uint64_t>(inst);
    Model<double> model(cfg, dimsOf(g, cfg.d, cfg.K, cfg.L));
    Tape<double> t;
    const auto out = model.propagate(t, g);
    check(out.se.value().values(), K);
    for (const auto& v : out.st) check(v.value().values(), K);
    for (const auto& v : out.s) check(v.value().values(), K);
    Index us, is;
    for (const auto& e : g.edges()) {
      us.push_back(e.user);
      is.push_back(e.item);
    }
    check(model.predict(g, us, is).attention, K);
  }
  return {worst < 1e-10 && interior, std::to_string(rows) + " score/attention rows, max |sum - 1| = " + fmt(worst) +
                                         (interior ? ", all components in (0,1) for K>1" : ", boundary component")};
}

Outcome oracleEquivalence() {
  std::mt19937_64 rng(99);
  double worst = 0;
  std::size_t layers = 0;
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t K = std::vector<std::size_t>{1, 2, 4}[inst % 3], L = 1 + inst % 2;
    std::uniform_int_distribution<std::size_t> nodes(2, 10);
    const std::size_t M = nodes(rng), N = nodes(rng);
    const std::size_t E = std::uniform_int_distribution<std::size_t>(1, M * N)(rng);
    const auto g = randomGraph(rng, M, N, 3, E, 5);
    const auto dims = dimsOf(g, 2 * K, K, L);
    ParameterStore<double> store(static_cast<std::uint64_t>(inst));
    registerDglParams(store, dims);
    Tape<double> t;
    const auto out = forwardDGL(t, store, dims, g, DglOptions{});
    for (std::size_t l = 0; l < L; ++l) {
      NaiveLayerInput in;
      in.M = M;
      in.N = N;
      in.K = K;
      in.w = 2;
      in.edges = g.edges();
      in.s = toRows(out.s[l].value());
      in.e = toRows(out.review_factors.value());
      in.prev = toRows(l == 0 ? out.initial.value() : out.layers[l - 1].value());
      for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t k = 0; k < K; ++k) in.wr.push_back(toRows(store.at(names::ratingW(l + 1, k, r)).value));
      in.wl = toRows(store.at(names::layerW(l + 1)).value);
      const auto ref = naiveLayer(in);
      const auto& got = out.layers[l].value();
      for (std::size_t n = 0; n < ref.size(); ++n)
        for (std::size_t j = 0; j < ref[n].size(); ++j) worst = std::max(worst, std::abs(got(n, j) - ref[n][j]));
      ++layers;
    }
  }
  return {worst < 1e-10, std::to_string(layers) + " layers over 20 instances, max abs difference " + fmt(worst)};
}

Outcome singleFactorCollapse() {
  std::mt19937_64 rng(5);
  bool ones = true, bitwise = true;
  for (int inst = 0; inst < 10; ++inst) {
    const std::size_t L = 1 + inst % 3;
    const auto g = randomGraph(rng, 3 + inst, 4 + inst, 3, 6 + 3 * inst, 5);
    const auto dims = dimsOf(g, 6, 1, L);
    ParameterStore<double> store(static_cast<std::uint64_t>(inst));
    registerDglParams(store, dims);
    Tape<double> t;
    const auto out = forwardDGL(t, store, dims, g, DglOptions{});
    for (double v : out.se.value().values()) ones = ones && v == 1.0;
    for (const auto& s : out.st)
      for (double v : s.value().values()) ones = ones && v == 1.0;
    for (const auto& s : out.s)
      for (double v : s.value().values()) ones = ones && v == 1.0;
    const auto ref = singleChannelForward(store, dims, g);
    bitwise = bitwise && ref == out.final.value().values();
  }
  return {ones && bitwise, std::string("scores ") + (ones ? "all exactly 1" : "NOT all 1") + ", final embeddings " +
                               (bitwise ? "bitwise equal" : "differ") + " on 10 instances"};
}

Outcome overfit() {
  const auto ds = plantedSplit(0);
  const auto graph = buildGraph(ds);
  TrainConfig cfg;
  cfg.lambda1 = cfg.lambda2 = 0;
  cfg.epochs = 200;
  cfg.batch_size = 0;
  cfg.lr = 0.01;
  cfg.patience = 0;
  Model<double> model(cfg, dimsFor(ds, cfg));
  fit(model, ds, graph);
  const double train = evaluateMSE(model, graph, ds, Split::Train);
  const double test = evaluateMSE(model, graph, ds, Split::Test);
  return {train < 0.05 && test < 0.5, "train MSE " + fmt(train) + " (< 0.05), test MSE " + fmt(test) + " (< 0.5)"};
}

Outcome disentangling() {
  const auto ds = plantedSplit(0);
  std::string detail;
  double full = 0, uniform = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.lambda1 = cfg.lambda2 = 0.5;
    const auto a = runAblation(ds, cfg, Variant::Full).test.overall_mse;
    const auto b = runAblation(ds, cfg, Variant::UniformScores).test.overall_mse;
    full += a / 5;
    uniform += b / 5;
    detail += "seed " + std::to_string(seed) + " full " + fmt(a) + " uniform_s " + fmt(b) + "; ";
  }
  return {full <= uniform, detail + "mean full " + fmt(full) + " vs uniform_s " + fmt(uniform)};
}

Outcome symmetricPoint() {
  const auto ds = plantedSplit(3);
  const auto graph = buildGraph(ds);
  bool exact = true;
  std::string detail;
  for (std::size_t batch : {0u, 64u}) {
    TrainConfig cfg;
    cfg.lambda1 = 0.7;
    cfg.lambda2 = 0.3;
    cfg.batch_size = batch;
    Model<double> model(cfg, dimsFor(ds, cfg));
    for (const auto& name : {names::fndUser(), names::fndItem(), names::fed()}) model.params().at(name).value.fill(0);
    Index edges;
    for (std::size_t e = 0; e < (batch ? batch : graph.numEdges()); ++e) edges.push_back(e);
    Tape<double> t;
    const auto terms = model.loss(t, graph, edges, batch == 0, 17);
    exact = exact && terms.fnd.scalar() == 0.0 && terms.fed.scalar() == 0.0 &&
            terms.total.scalar() == terms.sup.scalar();
    detail += (batch ? "minibatch" : "full batch") + std::string(": fnd ") + fmt(terms.fnd.scalar()) + " fed " +
              fmt(terms.fed.scalar()) + " total-sup " + fmt(terms.total.scalar() - terms.sup.scalar()) + "; ";
  }
  return {exact, detail.substr(0, detail.size() - 2)};
}

Outcome complexity() {
  const auto res = runtimeBench(BenchOptions{});
  std::string detail;
  for (const auto& r : res.rows) detail += "|E|=" + std::to_string(r.edges) + " " + fmt(r.seconds) + " s; ";
  return {res.exponent >= 0.8 && res.exponent <= 1.3, detail + "fit exponent " + fmt(res.exponent) + " (in [0.8, 1.3])"};
}

Outcome determinism() {
  const auto ds = plantedSplit(1);
  const auto graph = buildGraph(ds);
  TempDir dir;
  std::string detail;
  bool same = true;
  for (std::size_t batch : {0u, 100u}) {
    std::string ckpt[2], hist[2];
    for (int runi = 0; runi < 2; ++runi) {
      TrainConfig cfg;
      cfg.seed = 42;
      cfg.epochs = 25;
      cfg.batch_size = batch;
      Model<double> model(cfg, dimsFor(ds, cfg));
      const auto res = fit(model, ds, graph);
      const auto path = dir.file("run" + std::to_string(runi) + ".ckpt");
      saveCheckpoint(path, model, res.history.size(), res.best_val_mse);
      ckpt[runi] = readFile(path);
      hist[runi] = formatHistory(res.history);
    }
    same = same && ckpt[0] == ckpt[1] && hist[0] == hist[1];
    detail += (batch ? "minibatch" : "full batch") + std::string(": checkpoints ") +
              (ckpt[0] == ckpt[1] ? "identical" : "differ") + " (" + std::to_string(ckpt[0].size()) +
              " bytes), histories " + (hist[0] == hist[1] ? "identical" : "differ") + "; ";
  }
  return {same, detail.substr(0, detail.size() - 2)};
}

Outcome roundTrip() {
  const auto ds = plantedSplit(2);
  const auto graph = buildGraph(ds);
  TrainConfig cfg;
  cfg.epochs = 30;
  Model<double> model(cfg, dimsFor(ds, cfg));
  const auto res = fit(model, ds, graph);
  TempDir dir;
  const auto path = dir.file("model.ckpt");
  saveCheckpoint(path, model, res.history.size(), res.best_val_mse);
  auto loaded = loadCheckpoint<double>(path);
  const double a = evaluateMSE(model, graph, ds, Split::Test);
  const double b = evaluateMSE(loaded, graph, ds, Split::Test);
  return {a == b, "test MSE " + formatDouble(a) + " vs reloaded " + formatDouble(b) + ", difference " + fmt(b - a)};
}

}  // namespace

int main() {
  run(1, "gradient suite", 30, gradientSuite);
  run(2, "normalization suite", 10, normalizationSuite);
  run(3, "oracle equivalence", 30, oracleEquivalence);
  run(4, "K=1 collapse", 0, singleFactorCollapse);
  run(5, "overfit on planted factors", 120, overfit);
  run(6, "disentangling benefit over uniform scores", 0, disentangling);
  run(7, "contrastive symmetric point", 0, symmetricPoint);
  run(8, "runtime scaling", 300, complexity);
  run(9, "determinism", 0, determinism);
  run(10, "checkpoint round trip", 0, roundTrip);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
