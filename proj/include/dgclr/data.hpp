#pragma once

// Interaction ingestion, 8:1:1 splitting and degree bucketing.
//
// Text format, one header line followed by one record per line:
//
//   #dgclr d=<dim> ratings=<r1>,<r2>,...
//   <user_id>\t<item_id>\t<rating>\t<v1> <v2> ... <vd>
//
// When review vectors come from a separate binary file the fourth column is
// omitted. Binary layout: "DGCLRV1", u32 count, u32 d, then count*d
// little-endian float32 values in interaction-file row order.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dgclr/error.hpp"
#include "dgclr/io.hpp"

namespace dgclr {

enum class Split : std::uint8_t { Train, Val, Test };

inline const char* splitName(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split parseSplit(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ParseError("unknown split '" + s + "' (expected train, val or test)");
}

struct Interaction {
  std::size_t user = 0;
  std::size_t item = 0;
  double rating = 0.0;
  std::size_t rating_index = 0;  // position of `rating` in the rating set
};

// Interactions plus vocabularies. Review vectors are stored per observed
// interaction (row i of `reviews` belongs to interactions[i]).
struct InteractionDataset {
  std::size_t dim = 0;
  std::vector<double> rating_values;
  std::vector<std::string> users;
  std::vector<std::string> items;
  std::unordered_map<std::string, std::size_t> user_index;
  std::unordered_map<std::string, std::size_t> item_index;
  std::vector<Interaction> interactions;
  std::vector<double> reviews;  // interactions.size() x dim, row-major
  std::vector<Split> split;     // empty until splitDataset has been applied

  std::size_t numUsers() const { return users.size(); }
  std::size_t numItems() const { return items.size(); }
  std::size_t size() const { return interactions.size(); }
  bool isSplit() const { return split.size() == interactions.size() && !interactions.empty(); }

  std::span<const double> review(std::size_t i) const { return {reviews.data() + i * dim, dim}; }

  std::optional<std::size_t> ratingIndex(double r) const {
    for (std::size_t k = 0; k < rating_values.size(); ++k)
      if (rating_values[k] == r) return k;
    return std::nullopt;
  }

  std::size_t internUser(const std::string& id) {
    auto [it, fresh] = user_index.emplace(id, users.size());
    if (fresh) users.push_back(id);
    return it->second;
  }
  std::size_t internItem(const std::string& id) {
    auto [it, fresh] = item_index.emplace(id, items.size());
    if (fresh) items.push_back(id);
    return it->second;
  }

  std::vector<std::size_t> indicesOf(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
      if (split[i] == s) out.push_back(i);
    return out;
  }

  // Appends one record; rejects duplicates and out-of-set ratings.
  void addInteraction(const std::string& user_id, const std::string& item_id, double rating,
                      std::span<const double> review_vec) {
    if (review_vec.size() != dim)
      throw ParseError("review vector has " + std::to_string(review_vec.size()) + " values, expected " +
                       std::to_string(dim));
    auto ri = ratingIndex(rating);
    if (!ri) throw ParseError("rating " + formatDouble(rating) + " is not in the declared rating set");
    const std::size_t u = internUser(user_id);
    const std::size_t it = internItem(item_id);
    if (!pairs_.insert({u, it}).second)
      throw ParseError("duplicate (user, item) pair (" + user_id + ", " + item_id + ")");
    interactions.push_back({u, it, rating, *ri});
    reviews.insert(reviews.end(), review_vec.begin(), review_vec.end());
  }

 private:
  std::set<std::pair<std::size_t, std::size_t>> pairs_;
};

namespace detail {

inline std::vector<std::string> splitOn(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline double parseNumber(const std::string& s, const std::string& where) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ParseError(where + ": '" + s + "' is not a number");
  }
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  if (pos != s.size() || !std::isfinite(v)) throw ParseError(where + ": '" + s + "' is not a finite number");
  return v;
}

inline void parseHeader(const std::string& line, InteractionDataset& ds) {
  std::istringstream is(line);
  std::string tag;
  is >> tag;
  if (tag != "#dgclr") throw ParseError("line 1: expected header '#dgclr d=<dim> ratings=<list>'");
  bool have_d = false, have_r = false;
  std::string kv;
  while (is >> kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ParseError("line 1: malformed header field '" + kv + "'");
    const auto key = kv.substr(0, eq), val = kv.substr(eq + 1);
    if (key == "d") {
      const double d = parseNumber(val, "line 1");
      if (d < 1 || d != std::floor(d)) throw ParseError("line 1: d must be a positive integer");
      ds.dim = static_cast<std::size_t>(d);
      have_d = true;
    } else if (key == "ratings") {
      for (const auto& r : splitOn(val, ',')) ds.rating_values.push_back(parseNumber(r, "line 1"));
      std::set<double> uniq(ds.rating_values.begin(), ds.rating_values.end());
      if (uniq.size() != ds.rating_values.size() || ds.rating_values.empty())
        throw ParseError("line 1: rating set must be non-empty with distinct values");
      have_r = true;
    } else {
      throw ParseError("line 1: unknown header field '" + key + "'");
    }
  }
  if (!have_d || !have_r) throw ParseError("line 1: header must declare both d and ratings");
}

inline void putU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t getU32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline constexpr std::array<char, 7> kReviewVectorMagic{'D', 'G', 'C', 'L', 'R', 'V', '1'};

struct ReviewVectors {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<double> values;  // count x dim
};

inline ReviewVectors readReviewVectors(const std::string& path) {
  const std::string bytes = readFile(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 15 || std::memcmp(bytes.data(), kReviewVectorMagic.data(), 7) != 0)
    throw ParseError(path + ": not a review-vector file (bad magic)");
  ReviewVectors rv;
  rv.count = detail::getU32(p + 7);
  rv.dim = detail::getU32(p + 11);
  const std::size_t need = 15 + rv.count * rv.dim * 4;
  if (bytes.size() != need)
    throw ParseError(path + ": expected " + std::to_string(need) + " bytes, found " + std::to_string(bytes.size()));
  rv.values.resize(rv.count * rv.dim);
  for (std::size_t i = 0; i < rv.values.size(); ++i) {
    const std::uint32_t bits = detail::getU32(p + 15 + 4 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    if (!std::isfinite(f)) throw ParseError(path + ": non-finite value at index " + std::to_string(i));
    rv.values[i] = f;
  }
  return rv;
}

inline void writeReviewVectors(const std::string& path, const ReviewVectors& rv) {
  if (rv.values.size() != rv.count * rv.dim) throw ShapeError("review vectors: count x dim mismatch");
  std::string out(kReviewVectorMagic.begin(), kReviewVectorMagic.end());
  detail::putU32(out, static_cast<std::uint32_t>(rv.count));
  detail::putU32(out, static_cast<std::uint32_t>(rv.dim));
  for (double v : rv.values) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    detail::putU32(out, bits);
  }
  atomicWrite(path, out);
}

// Parses an interaction file. If `vectors_path` is given, review vectors are
// read from that binary file and rows carry only user, item and rating.
inline InteractionDataset loadInteractions(const std::string& path,
                                           const std::optional<std::string>& vectors_path = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open interaction file '" + path + "'");
  InteractionDataset ds;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file (missing header)");
  detail::parseHeader(line, ds);

  std::optional<ReviewVectors> bin;
  if (vectors_path) {
    bin = readReviewVectors(*vectors_path);
    if (bin->dim != ds.dim)
      throw ParseError(*vectors_path + ": vector dimension " + std::to_string(bin->dim) +
                       " does not match header d=" + std::to_string(ds.dim));
  }

  std::size_t line_no = 1;
  std::vector<double> vec(ds.dim);
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    const auto fields = detail::splitOn(line, '\t');
    const std::size_t want = bin ? 3 : 4;
    if (fields.size() != want)
      throw ParseError(where + ": expected " + std::to_string(want) + " tab-separated fields, found " +
                       std::to_string(fields.size()));
    if (fields[0].empty() || fields[1].empty()) throw ParseError(where + ": empty user or item id");
    const double rating = detail::parseNumber(fields[2], where);
    if (!ds.ratingIndex(rating))
      throw ParseError(where + ": rating " + fields[2] + " is outside the declared rating set");
    if (bin) {
      const std::size_t row = ds.size();
      if (row >= bin->count) throw ParseError(where + ": more rows than review vectors in the binary file");
      std::copy_n(bin->values.begin() + static_cast<std::ptrdiff_t>(row * ds.dim), ds.dim, vec.begin());
    } else {
      std::istringstream vs(fields[3]);
      std::string tok;
      std::size_t n = 0;
      while (vs >> tok) {
        if (n >= ds.dim) throw ParseError(where + ": review vector longer than d=" + std::to_string(ds.dim));
        vec[n++] = detail::parseNumber(tok, where);
      }
      if (n != ds.dim)
        throw ParseError(where + ": review vector has " + std::to_string(n) + " values, expected d=" +
                         std::to_string(ds.dim));
    }
    try {
      ds.addInteraction(fields[0], fields[1], rating, vec);
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  if (bin && bin->count != ds.size())
    throw ParseError(*vectors_path + ": holds " + std::to_string(bin->count) + " vectors for " +
                     std::to_string(ds.size()) + " interactions");
  return ds;
}

inline std::string formatInteractions(const InteractionDataset& ds) {
  std::ostringstream os;
  os << "#dgclr d=" << ds.dim << " ratings=";
  for (std::size_t k = 0; k < ds.rating_values.size(); ++k) os << (k ? "," : "") << formatDouble(ds.rating_values[k]);
  os << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& x = ds.interactions[i];
    os << ds.users[x.user] << '\t' << ds.items[x.item] << '\t' << formatDouble(x.rating) << '\t';
    const auto v = ds.review(i);
    for (std::size_t c = 0; c < ds.dim; ++c) os << (c ? " " : "") << formatDouble(v[c]);
    os << '\n';
  }
  return os.str();
}

inline void saveInteractions(const std::string& path, const InteractionDataset& ds) {
  atomicWrite(path, formatInteractions(ds));
}

// Uniform shuffle under `seed`; the first floor(0.8n) go to train, the next
// floor(0.1n) to validation, the remainder to test.
inline std::vector<Split> splitDataset(const InteractionDataset& ds, std::uint64_t seed) {
  const std::size_t n = ds.size();
  if (n < 3) throw Error("cannot split " + std::to_string(n) + " interactions into train/val/test (need at least 3)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  const std::size_t n_train = (8 * n) / 10;
  const std::size_t n_val = n / 10;
  std::vector<Split> labels(n, Split::Test);
  for (std::size_t r = 0; r < n; ++r)
    labels[order[r]] = r < n_train ? Split::Train : (r < n_train + n_val ? Split::Val : Split::Test);
  return labels;
}

inline void applySplit(InteractionDataset& ds, std::uint64_t seed) { ds.split = splitDataset(ds, seed); }

inline std::string formatSplitManifest(const std::vector<Split>& labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out += std::to_string(i);
    out += '\t';
    out += splitName(labels[i]);
    out += '\n';
  }
  return out;
}

inline std::vector<Split> parseSplitManifest(const std::string& text) {
  std::vector<Split> labels;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::splitOn(line, '\t');
    if (f.size() != 2 || f[0] != std::to_string(labels.size()))
      throw ParseError("split manifest line " + std::to_string(line_no) + ": expected '" +
                       std::to_string(labels.size()) + "<TAB>train|val|test'");
    labels.push_back(parseSplit(f[1]));
  }
  return labels;
}

// Number of training interactions per user.
inline std::vector<std::size_t> trainDegrees(const InteractionDataset& ds) {
  std::vector<std::size_t> deg(ds.numUsers(), 0);
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.split.empty() || ds.split[i] == Split::Train) ++deg[ds.interactions[i].user];
  return deg;
}

struct DegreeBucket {
  std::size_t lo = 0;
  std::size_t hi = std::numeric_limits<std::size_t>::max();  // exclusive; max() means unbounded
  std::vector<std::size_t> users;

  std::string label() const {
    return "[" + std::to_string(lo) + "," + (hi == std::numeric_limits<std::size_t>::max() ? "inf" : std::to_string(hi)) + ")";
  }
};

// Partitions users by train degree into [0,b1), [b1,b2), ..., [bn, inf).
// Empty boundaries give a single bucket holding every user.
inline std::vector<DegreeBucket> bucketUsersByDegree(const InteractionDataset& ds,
                                                     const std::vector<std::size_t>& boundaries) {
  for (std::size_t i = 1; i < boundaries.size(); ++i)
    if (boundaries[i] <= boundaries[i - 1]) throw DomainError("degree boundaries must be strictly increasing");
  std::vector<DegreeBucket> buckets(boundaries.size() + 1);
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    buckets[b].lo = b == 0 ? 0 : boundaries[b - 1];
    if (b < boundaries.size()) buckets[b].hi = boundaries[b];
  }
  const auto deg = trainDegrees(ds);
  for (std::size_t u = 0; u < deg.size(); ++u) {
    const auto it = std::upper_bound(boundaries.begin(), boundaries.end(), deg[u]);
    buckets[static_cast<std::size_t>(it - boundaries.begin())].users.push_back(u);
  }
  return buckets;
}

}  // namespace dgclr
