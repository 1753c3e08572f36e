#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dgclr/error.hpp"
#include "dgclr/io.hpp"

namespace dgclr {

// Which parts of the model are active. `Full` is the complete model; the rest
// are the ablations.
enum class Variant {
  Full,
  UniformScores,    // s = 1/K on every edge
  SemanticOnly,     // s = se
  StructuralOnly,   // s = st
  HolisticNode,     // node discrimination on concatenated vectors
  HolisticEdge,     // edge discrimination on concatenated h against the raw review vector
  NoAttention,      // single prediction head over concatenated chunks
  NoContrastive,    // lambda1 = lambda2 = 0
};

inline const std::vector<std::pair<Variant, std::string>>& variantNames() {
  static const std::vector<std::pair<Variant, std::string>> names{
      {Variant::Full, "full"},
      {Variant::UniformScores, "uniform_s"},
      {Variant::SemanticOnly, "semantic_only"},
      {Variant::StructuralOnly, "structural_only"},
      {Variant::HolisticNode, "holistic_nd"},
      {Variant::HolisticEdge, "holistic_ed"},
      {Variant::NoAttention, "no_ai"},
      {Variant::NoContrastive, "no_dcl"},
  };
  return names;
}

inline std::string variantName(Variant v) {
  for (const auto& [k, n] : variantNames())
    if (k == v) return n;
  return "?";
}

inline Variant parseVariant(const std::string& s) {
  for (const auto& [k, n] : variantNames())
    if (n == s) return k;
  throw ParseError("unknown ablation variant '" + s + "'");
}

// literal:    -log D(pos) + log D(neg)
// stabilized: -log D(pos) - log(1 - D(neg))
enum class ClObjective { Literal, Stabilized };

inline std::string clObjectiveName(ClObjective c) { return c == ClObjective::Literal ? "literal" : "stabilized"; }

inline ClObjective parseClObjective(const std::string& s) {
  if (s == "literal") return ClObjective::Literal;
  if (s == "stabilized") return ClObjective::Stabilized;
  throw ParseError("unknown cl_objective '" + s + "' (expected literal or stabilized)");
}

struct TrainConfig {
  std::size_t d = 64;
  std::size_t K = 4;
  std::size_t L = 2;
  double tau = 0.5;
  double eta = 0.7;
  // Fraction of edges each contrastive view keeps; views drop with p = 1 - keep.
  double edge_keep_ratio = 0.8;
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  double lr = 0.01;
  std::size_t epochs = 200;
  std::size_t batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  std::size_t patience = 20;   // 0 disables early stopping
  Variant variant = Variant::Full;
  ClObjective cl_objective = ClObjective::Literal;

  double dropProbability() const { return 1.0 - edge_keep_ratio; }

  // Effective loss weights after the variant is applied.
  double effectiveLambda1() const { return variant == Variant::NoContrastive ? 0.0 : lambda1; }
  double effectiveLambda2() const { return variant == Variant::NoContrastive ? 0.0 : lambda2; }
  bool contrastiveActive() const { return effectiveLambda1() != 0.0 || effectiveLambda2() != 0.0; }

  void validate() const {
    if (K == 0) throw DomainError("K must be at least 1");
    if (d == 0 || d % K != 0) throw DomainError("d must be a positive multiple of K");
    if (L == 0) throw DomainError("L must be at least 1");
    if (!(tau > 0)) throw DomainError("tau must be positive");
    if (!(eta >= 0 && eta <= 1)) throw DomainError("eta must lie in [0, 1]");
    if (!(edge_keep_ratio >= 0 && edge_keep_ratio <= 1)) throw DomainError("edge_keep_ratio must lie in [0, 1]");
    if (!(lambda1 >= 0) || !(lambda2 >= 0)) throw DomainError("lambda1 and lambda2 must be non-negative");
    if (!(lr >= 0)) throw DomainError("lr must be non-negative");
  }

  // Applies one `key = value` assignment. Keys match the field names; the
  // dashed spelling (edge-keep-ratio) is accepted as well.
  void set(std::string key, const std::string& value) {
    for (auto& c : key)
      if (c == '-') c = '_';
    auto num = [&](const std::string& v) {
      std::size_t pos = 0;
      double x = 0;
      try {
        x = std::stod(v, &pos);
      } catch (const std::exception&) {
        throw ParseError("config key '" + key + "': '" + v + "' is not a number");
      }
      if (pos != v.size()) throw ParseError("config key '" + key + "': '" + v + "' is not a number");
      return x;
    };
    auto count = [&](const std::string& v) -> std::uint64_t {
      const double x = num(v);
      if (x < 0 || x != static_cast<double>(static_cast<std::uint64_t>(x)))
        throw ParseError("config key '" + key + "': '" + v + "' is not a non-negative integer");
      return static_cast<std::uint64_t>(x);
    };
    if (key == "d") d = count(value);
    else if (key == "K") K = count(value);
    else if (key == "L") L = count(value);
    else if (key == "tau") tau = num(value);
    else if (key == "eta") eta = num(value);
    else if (key == "edge_keep_ratio") edge_keep_ratio = num(value);
    else if (key == "lambda1") lambda1 = num(value);
    else if (key == "lambda2") lambda2 = num(value);
    else if (key == "lr") lr = num(value);
    else if (key == "epochs") epochs = count(value);
    else if (key == "batch_size") batch_size = count(value);
    else if (key == "seed") seed = count(value);
    else if (key == "split_seed") split_seed = count(value);
    else if (key == "patience") patience = count(value);
    else if (key == "variant") variant = parseVariant(value);
    else if (key == "cl_objective") cl_objective = parseClObjective(value);
    else throw ParseError("unknown config key '" + key + "'");
  }

  std::vector<std::pair<std::string, std::string>> items() const {
    return {
        {"d", std::to_string(d)},
        {"K", std::to_string(K)},
        {"L", std::to_string(L)},
        {"tau", formatDouble(tau)},
        {"eta", formatDouble(eta)},
        {"edge_keep_ratio", formatDouble(edge_keep_ratio)},
        {"lambda1", formatDouble(lambda1)},
        {"lambda2", formatDouble(lambda2)},
        {"lr", formatDouble(lr)},
        {"epochs", std::to_string(epochs)},
        {"batch_size", std::to_string(batch_size)},
        {"seed", std::to_string(seed)},
        {"split_seed", std::to_string(split_seed)},
        {"patience", std::to_string(patience)},
        {"variant", variantName(variant)},
        {"cl_objective", clObjectiveName(cl_objective)},
    };
  }

  std::string toText() const {
    std::string out;
    for (const auto& [k, v] : items()) out += k + " = " + v + "\n";
    return out;
  }

  friend bool operator==(const TrainConfig& a, const TrainConfig& b) { return a.items() == b.items(); }
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Flat `key = value` text; blank lines and lines starting with '#' are skipped.
inline TrainConfig parseConfig(const std::string& text, TrainConfig base = {}) {
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    try {
      base.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const ParseError& e) {
      throw ParseError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

inline TrainConfig loadConfig(const std::string& path, TrainConfig base = {}) {
  return parseConfig(readFile(path), std::move(base));
}

}  // namespace dgclr
