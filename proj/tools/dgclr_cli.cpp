// dgclr command-line tool: ingest, train, evaluate, explain, ablate, bench.
//
// Standard output carries summary lines only; logs go to standard error.
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "dgclr/dgclr.hpp"

#ifndef DGCLR_VERSION
#define DGCLR_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dgclr;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string utcNow() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json configJson(const TrainConfig& cfg) {
  json j = json::object();
  for (const auto& [k, v] : cfg.items()) j[k] = v;
  return j;
}

// Run record written next to the outputs of every invocation.
class Manifest {
 public:
  Manifest(std::string verb, int argc, char** argv) : verb_(std::move(verb)), start_(Clock::now()) {
    doc_["command"] = verb_;
    doc_["version"] = DGCLR_VERSION;
    doc_["started_at"] = utcNow();
    json args = json::array();
    for (int i = 0; i < argc; ++i) args.push_back(argv[i]);
    doc_["argv"] = args;
    doc_["outputs"] = json::array();
  }

  void config(const TrainConfig& cfg) {
    doc_["config"] = configJson(cfg);
    doc_["seed"] = cfg.seed;
  }
  void seed(std::uint64_t s) { doc_["seed"] = s; }
  json& operator[](const std::string& key) { return doc_[key]; }

  void write(const std::string& dir, const std::string& name, const std::string& contents) {
    const auto path = (fs::path(dir) / name).string();
    atomicWrite(path, contents);
    doc_["outputs"].push_back(name);
  }

  void finish(const std::string& dir) {
    doc_["finished_at"] = utcNow();
    doc_["wall_clock_seconds"] = std::chrono::duration<double>(Clock::now() - start_).count();
    if (!doc_.contains("seed")) doc_["seed"] = nullptr;
    atomicWrite((fs::path(dir) / (verb_ + ".manifest.json")).string(), doc_.dump(2) + "\n");
  }

 private:
  using Clock = std::chrono::steady_clock;
  std::string verb_;
  Clock::time_point start_;
  json doc_;
};

// --------------------------------------------------------------------------
// Shared option groups

// One optional string per config key; applied on top of the --config file.
struct ConfigFlags {
  std::string path;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", path, "key = value configuration file")->check(CLI::ExistingFile);
    for (const auto& [key, value] : TrainConfig{}.items()) {
      std::string dashed = key;
      for (auto& c : dashed)
        if (c == '_') c = '-';
      std::string names = "--" + dashed;
      if (dashed != key) names += ",--" + key;
      app->add_option_function<std::string>(
          names, [this, key = key](const std::string& v) { values[key] = v; }, "config key '" + key + "' (default " + value + ")");
    }
  }

  // Malformed or out-of-range settings are usage errors.
  TrainConfig resolve() const {
    try {
      TrainConfig cfg = path.empty() ? TrainConfig{} : loadConfig(path);
      for (const auto& [k, v] : values) cfg.set(k, v);
      cfg.validate();
      return cfg;
    } catch (const ParseError& e) {
      throw UsageError(e.what());
    } catch (const DomainError& e) {
      throw UsageError(e.what());
    }
  }
};

// Dataset source: an ingest directory, or a raw interaction file split on the fly.
struct DataFlags {
  std::string dir, input, vectors;

  void attach(CLI::App* app) {
    auto* d = app->add_option("--data", dir, "directory written by 'ingest'")->check(CLI::ExistingDirectory);
    auto* i = app->add_option("--input", input, "interaction file (split with split_seed)")->check(CLI::ExistingFile);
    app->add_option("--vectors", vectors, "binary review-vector file for --input")->check(CLI::ExistingFile)->needs(i);
    d->excludes(i);
  }

  InteractionDataset load(std::uint64_t split_seed) const {
    if (!dir.empty()) {
      auto ds = loadInteractions((fs::path(dir) / "dataset.tsv").string());
      ds.split = parseSplitManifest(readFile((fs::path(dir) / "splits.tsv").string()));
      if (ds.split.size() != ds.size())
        throw Error("splits.tsv has " + std::to_string(ds.split.size()) + " labels for " + std::to_string(ds.size()) +
                    " interactions");
      return ds;
    }
    if (input.empty()) throw UsageError("one of --data or --input is required");
    auto ds = loadInteractions(input, vectors.empty() ? std::nullopt : std::optional<std::string>(vectors));
    applySplit(ds, split_seed);
    return ds;
  }
};

std::vector<std::size_t> parseSizes(const std::string& text, const std::string& flag) {
  std::vector<std::size_t> out;
  if (text.empty()) return out;
  for (const auto& tok : detail::splitOn(text, ',')) {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(tok, &pos);
      if (pos != tok.size()) throw std::invalid_argument(tok);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError(flag + ": '" + tok + "' is not a non-negative integer");
    }
  }
  return out;
}

std::vector<double> parseDoubles(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  for (const auto& tok : detail::splitOn(text, ',')) {
    try {
      out.push_back(detail::parseNumber(tok, flag));
    } catch (const ParseError&) {
      throw UsageError(flag + ": '" + tok + "' is not a number");
    }
  }
  return out;
}

void requireCheckpointFits(const CheckpointInfo& info, const InteractionDataset& ds) {
  if (info.dims.num_users != ds.numUsers() || info.dims.num_items != ds.numItems() ||
      info.dims.review_dim != ds.dim || info.dims.rating_values != ds.rating_values)
    throw Error("checkpoint was trained on a different dataset (users/items/review dimension/rating set differ)");
}

void logLine(const std::string& s) { std::cerr << s << std::endl; }

// --------------------------------------------------------------------------
// Verbs

struct IngestArgs {
  std::string input, vectors, out;
  std::size_t whiten_dim = 0;
  std::uint64_t split_seed = 0;
};

int runIngest(const IngestArgs& a, Manifest& man) {
  auto ds = loadInteractions(a.input, a.vectors.empty() ? std::nullopt : std::optional<std::string>(a.vectors));
  applySplit(ds, a.split_seed);
  if (a.whiten_dim > 0) {
    // statistics come from train reviews only
    std::vector<double> train_rows;
    const auto train = ds.indicesOf(Split::Train);
    for (auto i : train) {
      const auto r = ds.review(i);
      train_rows.insert(train_rows.end(), r.begin(), r.end());
    }
    const auto w = fitWhitening(train_rows, train.size(), ds.dim, a.whiten_dim);
    ds.reviews = w.apply(ds.reviews, ds.size());
    ds.dim = a.whiten_dim;
  }
  man.seed(a.split_seed);
  man["split_seed"] = a.split_seed;
  man["whiten_dim"] = a.whiten_dim;
  man["input"] = a.input;
  man.write(a.out, "dataset.tsv", formatInteractions(ds));
  man.write(a.out, "splits.tsv", formatSplitManifest(ds.split));
  const auto n = [&](Split s) { return ds.indicesOf(s).size(); };
  std::cout << "users " << ds.numUsers() << " items " << ds.numItems() << " interactions " << ds.size() << " train "
            << n(Split::Train) << " val " << n(Split::Val) << " test " << n(Split::Test) << " d " << ds.dim << "\n";
  return 0;
}

struct TrainArgs {
  ConfigFlags cfg;
  DataFlags data;
  std::string out;
  bool quiet = false;
};

int runTrain(const TrainArgs& a, Manifest& man) {
  const auto cfg = a.cfg.resolve();
  man.config(cfg);
  const auto ds = a.data.load(cfg.split_seed);
  const auto graph = buildGraph(ds);
  Model<double> model(cfg, dimsFor(ds, cfg));
  logLine("training on " + std::to_string(graph.numEdges()) + " edges, " + std::to_string(model.params().scalarCount()) +
          " parameters");
  const auto res = fit(model, ds, graph, [&](const EpochRecord& r) {
    if (!a.quiet && (r.epoch == 1 || r.epoch % 10 == 0))
      logLine("epoch " + std::to_string(r.epoch) + " loss " + formatDouble(r.train_loss) + " val_mse " +
              formatDouble(r.val_mse));
    return true;
  });
  if (res.diverged) logLine("warning: loss became non-finite; training stopped early");
  man.write(a.out, "history.tsv", formatHistory(res.history));
  saveCheckpoint((fs::path(a.out) / "model.ckpt").string(), model, res.history.size(), res.best_val_mse);
  man["outputs"].push_back("model.ckpt");
  const double test = ds.indicesOf(Split::Test).empty() ? std::nan("") : evaluateMSE(model, graph, ds, Split::Test);
  man["epochs_run"] = res.history.size();
  man["best_epoch"] = res.best_epoch;
  man["best_val_mse"] = res.best_val_mse;
  man["test_mse"] = test;
  man["early_stopped"] = res.early_stopped;
  man["diverged"] = res.diverged;
  std::cout << "epochs " << res.history.size() << " best_epoch " << res.best_epoch << " val_mse "
            << formatDouble(res.best_val_mse) << " test_mse " << formatDouble(test) << "\n";
  return res.diverged ? kRuntimeError : 0;
}

struct LoadedModel {
  CheckpointInfo info;
  InteractionDataset ds;
  RatingGraph graph;
  std::optional<Model<double>> model;
};

LoadedModel loadForEval(const std::string& checkpoint, const DataFlags& data) {
  LoadedModel m;
  m.model.emplace(loadCheckpoint<double>(checkpoint, &m.info));
  m.ds = data.load(m.info.config.split_seed);
  requireCheckpointFits(m.info, m.ds);
  m.graph = buildGraph(m.ds);
  return m;
}

struct EvaluateArgs {
  std::string checkpoint, split = "test", boundaries, out;
  DataFlags data;
  bool clip = false;
};

int runEvaluate(const EvaluateArgs& a, Manifest& man) {
  const Split split = [&] {
    try {
      return parseSplit(a.split);
    } catch (const ParseError& e) {
      throw UsageError(e.what());
    }
  }();
  auto bounds = a.boundaries.empty() ? defaultDegreeBoundaries() : parseSizes(a.boundaries, "--boundaries");
  auto m = loadForEval(a.checkpoint, a.data);
  man.config(m.info.config);
  man["checkpoint"] = a.checkpoint;
  const auto rep = sparsityReport(*m.model, m.graph, m.ds, bounds, split, a.clip);
  const auto idx = m.ds.indicesOf(split);
  const auto pred = m.model->predict(m.graph, [&] {
    Index u;
    for (auto i : idx) u.push_back(m.ds.interactions[i].user);
    return u;
  }(), [&] {
    Index v;
    for (auto i : idx) v.push_back(m.ds.interactions[i].item);
    return v;
  }());
  std::string preds = "user\titem\trating\tprediction";
  for (std::size_t k = 0; k < pred.chunks; ++k) preds += "\talpha" + std::to_string(k) + "\trating" + std::to_string(k);
  preds += "\n";
  for (std::size_t p = 0; p < idx.size(); ++p) {
    const auto& x = m.ds.interactions[idx[p]];
    preds += m.ds.users[x.user] + "\t" + m.ds.items[x.item] + "\t" + formatDouble(x.rating) + "\t" +
             formatDouble(pred.rating[p]);
    for (std::size_t k = 0; k < pred.chunks; ++k)
      preds += "\t" + formatDouble(pred.attention[p * pred.chunks + k]) + "\t" +
               formatDouble(pred.factor_rating[p * pred.chunks + k]);
    preds += "\n";
  }
  man.write(a.out, "report_" + a.split + ".tsv", formatReport(rep));
  man.write(a.out, "predictions_" + a.split + ".tsv", preds);
  man[a.split + "_mse"] = rep.overall_mse;
  man["clip"] = a.clip;
  std::cout << a.split << "_mse " << formatDouble(rep.overall_mse) << "\n";
  return 0;
}

struct ExplainArgs {
  std::string checkpoint, user, item, out, ratings = "1,3,5";
  DataFlags data;
  bool factor_reviews = false;
  double threshold = 0.5;
  std::size_t samples = 1;
  std::uint64_t sample_seed = 0;
};

int runExplain(const ExplainArgs& a, Manifest& man) {
  if ((a.user.empty() != a.item.empty()) || (a.user.empty() && !a.factor_reviews))
    throw UsageError("explain needs --user and --item, or --factor-reviews");
  const auto ratings = parseDoubles(a.ratings, "--ratings");
  auto m = loadForEval(a.checkpoint, a.data);
  man.config(m.info.config);
  man["checkpoint"] = a.checkpoint;
  if (!a.user.empty()) {
    const auto ex = explainPrediction(*m.model, m.graph, m.ds, a.user, a.item);
    const auto text = formatExplanation(ex);
    man.write(a.out, "explain_" + a.user + "_" + a.item + ".txt", text);
    man["prediction"] = ex.rating;
    std::cout << text;
  }
  if (a.factor_reviews) {
    const auto recs = factorReviewReport(*m.model, m.graph, m.ds, a.threshold, ratings, a.samples, a.sample_seed);
    man.write(a.out, "factor_reviews.tsv", formatFactorReviews(recs));
    man.write(a.out, "edge_scores.tsv", formatEdgeScores(m.graph, m.ds, finalEdgeScores(*m.model, m.graph), m.model->dims().K));
    man["threshold"] = a.threshold;
    man["sample_seed"] = a.sample_seed;
    std::size_t filled = 0;
    for (const auto& r : recs) filled += r.empty ? 0 : 1;
    std::cout << "factor_reviews " << filled << " of " << recs.size() << " records filled\n";
  }
  return 0;
}

struct AblateArgs {
  ConfigFlags cfg;
  DataFlags data;
  std::string out, variants, seeds = "0", boundaries;
  std::size_t jobs = 1;
};

std::string ablationRow(const std::string& variant, std::uint64_t seed, const AblationResult& r) {
  return variant + "\t" + std::to_string(seed) + "\t" + std::to_string(r.fit.history.size()) + "\t" +
         std::to_string(r.fit.best_epoch) + "\t" + formatDouble(r.val_mse) + "\t" + formatDouble(r.test.overall_mse) + "\n";
}

int runAblate(const AblateArgs& a, Manifest& man) {
  const auto base = a.cfg.resolve();
  man.config(base);
  std::vector<Variant> variants;
  if (a.variants.empty()) {
    for (const auto& [v, name] : variantNames()) variants.push_back(v);
  } else {
    for (const auto& name : detail::splitOn(a.variants, ',')) {
      try {
        variants.push_back(parseVariant(name));
      } catch (const ParseError& e) {
        throw UsageError(e.what());
      }
    }
  }
  const auto seeds = parseSizes(a.seeds, "--seeds");
  if (seeds.empty()) throw UsageError("--seeds must list at least one seed");
  const auto bounds = a.boundaries.empty() ? defaultDegreeBoundaries() : parseSizes(a.boundaries, "--boundaries");
  if (a.jobs == 0) throw UsageError("--jobs must be at least 1");
  const auto ds = a.data.load(base.split_seed);

  struct Job {
    Variant variant;
    std::uint64_t seed;
    std::string part;  // per-run result file
  };
  std::vector<Job> jobs;
  const auto parts = fs::path(a.out) / "ablate_runs";
  fs::create_directories(parts);
  for (auto v : variants)
    for (auto s : seeds)
      jobs.push_back({v, s, (parts / (variantName(v) + "_seed" + std::to_string(s) + ".tsv")).string()});

  auto runOne = [&](const Job& j) {
    TrainConfig cfg = base;
    cfg.seed = j.seed;
    const auto r = runAblation(ds, cfg, j.variant, bounds);
    atomicWrite(j.part, ablationRow(variantName(j.variant), j.seed, r) + formatReport(r.test));
    logLine("ablate " + variantName(j.variant) + " seed " + std::to_string(j.seed) + " test_mse " +
            formatDouble(r.test.overall_mse));
  };

  bool failed = false;
  if (a.jobs == 1) {
    for (const auto& j : jobs) runOne(j);
  } else {
    // independent variants run in forked worker processes
    std::size_t next = 0, running = 0;
    std::cout.flush();
    std::cerr.flush();
    while (next < jobs.size() || running > 0) {
      while (running < a.jobs && next < jobs.size()) {
        const pid_t pid = fork();
        if (pid < 0) throw Error("fork failed");
        if (pid == 0) {
          int code = 0;
          try {
            runOne(jobs[next]);
          } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << std::endl;
            code = kRuntimeError;
          }
          std::fflush(nullptr);
          _exit(code);
        }
        ++next;
        ++running;
      }
      int status = 0;
      if (wait(&status) > 0) {
        --running;
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) failed = true;
      }
    }
  }
  if (failed) throw Error("one or more ablation runs failed");

  std::string table = "variant\tseed\tepochs\tbest_epoch\tval_mse\ttest_mse\n", buckets;
  std::map<std::string, std::pair<double, std::size_t>> means;
  for (const auto& j : jobs) {
    const auto text = readFile(j.part);
    const auto nl = text.find('\n');
    table += text.substr(0, nl + 1);
    const auto fields = detail::splitOn(text.substr(0, nl), '\t');
    auto& m = means[fields[0]];
    m.first += std::stod(fields[5]);
    ++m.second;
    for (const auto& line : detail::splitOn(text.substr(nl + 1), '\n'))
      if (!line.empty() && line.rfind("split\t", 0) != 0)
        buckets += fields[0] + "\t" + fields[1] + "\t" + line + "\n";
  }
  man.write(a.out, "ablation.tsv", table);
  man.write(a.out, "ablation_buckets.tsv", "variant\tseed\tsplit\tbucket\tusers\tinteractions\tmse\n" + buckets);
  man["jobs"] = a.jobs;
  for (auto v : variants) {
    const auto& m = means[variantName(v)];
    const double mean = m.first / static_cast<double>(m.second);
    man["mean_test_mse"][variantName(v)] = mean;
    std::cout << variantName(v) << " mean_test_mse " << formatDouble(mean) << " over " << m.second << " seeds\n";
  }
  return 0;
}

struct BenchArgs {
  std::string edges = "1000,10000,100000", out;
  BenchOptions opt;
};

int runBench(BenchArgs a, Manifest& man) {
  a.opt.edges = parseSizes(a.edges, "--edges");
  if (a.opt.K == 0 || a.opt.d % a.opt.K != 0) throw UsageError("--d must be a positive multiple of --K");
  if (a.opt.L == 0 || a.opt.ratings == 0 || a.opt.review_dim == 0) throw UsageError("--L, --ratings and --review-dim must be positive");
  man.seed(a.opt.seed);
  man["bench"] = {{"edges", a.opt.edges}, {"d", a.opt.d},       {"K", a.opt.K},
                  {"L", a.opt.L},         {"reps", a.opt.reps}, {"review_dim", a.opt.review_dim}};
  const auto res = runtimeBench(a.opt);
  man.write(a.out, "bench.tsv", formatBench(res));
  man["exponent"] = res.exponent;
  for (const auto& r : res.rows) logLine("edges " + std::to_string(r.edges) + " seconds " + formatDouble(r.seconds));
  std::cout << "exponent " << formatDouble(res.exponent) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disentangled graph contrastive rating prediction"};
  app.set_version_flag("--version", std::string(DGCLR_VERSION));
  app.require_subcommand(1, 1);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "parse, optionally whiten, and split an interaction file");
  c_ingest->add_option("--input", ingest.input, "interaction file")->required()->check(CLI::ExistingFile);
  c_ingest->add_option("--vectors", ingest.vectors, "binary review-vector file")->check(CLI::ExistingFile);
  c_ingest->add_option("--whiten-dim,--whiten_dim", ingest.whiten_dim, "whiten review vectors to this dimension (0 = off)");
  c_ingest->add_option("--split-seed,--split_seed", ingest.split_seed, "seed of the 8:1:1 split");
  c_ingest->add_option("--out", ingest.out, "output directory")->required();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "train a model and write a checkpoint and history");
  train.cfg.attach(c_train);
  train.data.attach(c_train);
  c_train->add_option("--out", train.out, "output directory")->required();
  c_train->add_flag("--quiet", train.quiet, "suppress per-epoch logging");

  EvaluateArgs eval;
  auto* c_eval = app.add_subcommand("evaluate", "MSE and degree-bucketed report for a checkpoint");
  c_eval->add_option("--checkpoint", eval.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  eval.data.attach(c_eval);
  c_eval->add_option("--split", eval.split, "train, val or test");
  c_eval->add_option("--boundaries", eval.boundaries, "comma-separated degree boundaries (default 5,10,20,50)");
  c_eval->add_flag("--clip", eval.clip, "clip predictions to the rating range");
  c_eval->add_option("--out", eval.out, "output directory")->required();

  ExplainArgs explain;
  auto* c_explain = app.add_subcommand("explain", "per-factor attention and ratings for one prediction");
  c_explain->add_option("--checkpoint", explain.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  explain.data.attach(c_explain);
  c_explain->add_option("--user", explain.user, "user id");
  c_explain->add_option("--item", explain.item, "item id");
  c_explain->add_flag("--factor-reviews,--factor_reviews", explain.factor_reviews,
                      "export sampled reviews per factor and rating, plus final edge scores");
  c_explain->add_option("--threshold", explain.threshold, "score threshold for --factor-reviews");
  c_explain->add_option("--ratings", explain.ratings, "ratings sampled by --factor-reviews");
  c_explain->add_option("--samples", explain.samples, "reviews per (factor, rating) cell");
  c_explain->add_option("--sample-seed,--sample_seed", explain.sample_seed, "sampling seed");
  c_explain->add_option("--out", explain.out, "output directory")->required();

  AblateArgs ablate;
  auto* c_ablate = app.add_subcommand("ablate", "train and evaluate model variants over several seeds");
  ablate.cfg.attach(c_ablate);
  ablate.data.attach(c_ablate);
  c_ablate->add_option("--variants", ablate.variants, "comma-separated variants (default: all)");
  c_ablate->add_option("--seeds", ablate.seeds, "comma-separated model seeds");
  c_ablate->add_option("--boundaries", ablate.boundaries, "comma-separated degree boundaries");
  c_ablate->add_option("--jobs", ablate.jobs, "parallel worker processes");
  c_ablate->add_option("--out", ablate.out, "output directory")->required();

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "time propagation against edge count");
  c_bench->add_option("--edges", bench.edges, "comma-separated edge counts");
  c_bench->add_option("--d", bench.opt.d, "embedding width");
  c_bench->add_option("--K", bench.opt.K, "factors");
  c_bench->add_option("--L", bench.opt.L, "layers");
  c_bench->add_option("--review-dim,--review_dim", bench.opt.review_dim, "review vector dimension");
  c_bench->add_option("--ratings", bench.opt.ratings, "rating types");
  c_bench->add_option("--degree", bench.opt.degree, "average node degree");
  c_bench->add_option("--reps", bench.opt.reps, "repetitions (fastest is kept)");
  c_bench->add_option("--seed", bench.opt.seed, "graph seed");
  c_bench->add_option("--out", bench.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  const std::string verb = app.get_subcommands().front()->get_name();
  try {
    Manifest man(verb, argc, argv);
    int code = 0;
    std::string out;
    if (verb == "ingest") code = runIngest(ingest, man), out = ingest.out;
    else if (verb == "train") code = runTrain(train, man), out = train.out;
    else if (verb == "evaluate") code = runEvaluate(eval, man), out = eval.out;
    else if (verb == "explain") code = runExplain(explain, man), out = explain.out;
    else if (verb == "ablate") code = runAblate(ablate, man), out = ablate.out;
    else code = runBench(bench, man), out = bench.out;
    man["exit_code"] = code;
    man.finish(out);
    return code;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.get_subcommands().front()->help();
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kRuntimeError;
  }
}
