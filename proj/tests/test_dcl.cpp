#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace dgclr;
using namespace testing_support;

namespace {

Tensor<double> randn(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n01(0.0, scale);
  Tensor<double> t(r, c);
  for (auto& v : t.values()) v = n01(rng);
  return t;
}

Index iota(std::size_t n) {
  Index out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

double fnd(const Tensor<double>& a, const Tensor<double>& b, const Tensor<double>& Wu, const Tensor<double>& Wi,
           std::size_t M, std::size_t K, std::uint64_t seed, ClObjective obj = ClObjective::Literal) {
  Tape<double> t;
  const std::size_t N = a.rows() - M;
  return fndLoss(t.constant(a), t.constant(b), M, K, t.constant(Wu), t.constant(Wi), iota(M), iota(N), seed, obj)
      .scalar();
}

}  // namespace

TEST(Discriminate, Examples) {
  std::mt19937_64 rng(1);
  const auto a = randn(1, 3, rng), b = randn(1, 3, rng);
  EXPECT_EQ(discriminate<double>(a.values(), Tensor<double>(3, 3, 0.0), b.values()), 0.5);
  const std::vector<double> zero(3, 0.0);
  EXPECT_EQ(discriminate<double>(zero, randn(3, 3, rng), b.values()), 0.5);
  Tensor<double> I(2, 2, 0.0);
  I(0, 0) = I(1, 1) = 1;
  const double x = std::sqrt(std::log(3.0) / 2.0);
  const std::vector<double> v{x, x};
  EXPECT_NEAR(discriminate<double>(v, I, v), 0.75, 1e-12);
  const std::vector<double> big{100.0, 0.0};
  EXPECT_EQ(discriminate<double>(big, I, big), 1.0 - 1e-7);
  const std::vector<double> neg{-100.0, 0.0};
  EXPECT_EQ(discriminate<double>(big, I, neg), 1e-7);
  EXPECT_THROW(discriminate<double>(v, Tensor<double>(3, 2), v), ShapeError);
}

TEST(ContrastiveTerm, SymmetricPointAndLimits) {
  Tape<double> t;
  auto zeros = t.constant(Tensor<double>(5, 1, 0.0));
  EXPECT_EQ(contrastiveTerm(zeros, zeros, ClObjective::Literal).scalar(), 0.0);
  EXPECT_NEAR(contrastiveTerm(zeros, zeros, ClObjective::Stabilized).scalar(), 2 * std::log(2.0), 1e-12);
  auto pos = t.constant(Tensor<double>(4, 1, 100.0));
  auto neg = t.constant(Tensor<double>(4, 1, -100.0));
  EXPECT_NEAR(contrastiveTerm(pos, neg, ClObjective::Literal).scalar(), std::log(1e-7), 1e-6);
  EXPECT_NEAR(contrastiveTerm(pos, neg, ClObjective::Stabilized).scalar(), 0.0, 1e-6);
}

TEST(ContrastiveTerm, GradientSigns) {
  std::mt19937_64 rng(2);
  for (auto obj : {ClObjective::Literal, ClObjective::Stabilized}) {
    ParameterStore<double> store;
    store.add("pos", randn(6, 1, rng));
    store.add("neg", randn(6, 1, rng));
    Tape<double> t;
    t.backward(contrastiveTerm(t.param(store.at("pos")), t.param(store.at("neg")), obj));
    for (double g : store.at("pos").grad.values()) EXPECT_LT(g, 0.0);
    for (double g : store.at("neg").grad.values()) EXPECT_GT(g, 0.0);

    // finite-difference agreement
    const auto res = finiteDifferenceCheck(
        store,
        [&] {
          Tape<double> u;
          return contrastiveTerm(u.param(store.at("pos")), u.param(store.at("neg")), obj).scalar();
        },
        [&] {
          Tape<double> u;
          u.backward(contrastiveTerm(u.param(store.at("pos")), u.param(store.at("neg")), obj));
        });
    EXPECT_LT(res.worst_rel, 1e-6);
  }
}

TEST(SampleNegatives, CollisionsRedrawThenSkip) {
  std::mt19937_64 rng(3);
  const Index anchors{0, 0, 0};
  const auto none = sampleNegatives(anchors, Index{0}, rng);
  EXPECT_TRUE(none.anchor.empty());
  const auto all = sampleNegatives(Index{0, 1}, Index{2, 3}, rng);
  EXPECT_EQ(all.anchor, (Index{0, 1}));
  // with two candidates a term is dropped only when both draws collide
  std::size_t kept = 0;
  const std::size_t trials = 20000;
  for (std::size_t i = 0; i < trials; ++i) kept += sampleNegatives(Index{0}, Index{0, 1}, rng).anchor.size();
  const double rate = static_cast<double>(kept) / static_cast<double>(trials);
  EXPECT_NEAR(rate, 0.75, 4 * std::sqrt(0.75 * 0.25 / trials));
  EXPECT_TRUE(sampleNegatives(Index{0}, Index{}, rng).anchor.empty());
}

TEST(FndLoss, ZeroDiscriminatorGivesZero) {
  std::mt19937_64 rng(4);
  const auto a = randn(9, 8, rng), b = randn(9, 8, rng);
  const Tensor<double> Z(4, 4, 0.0);
  EXPECT_EQ(fnd(a, b, Z, Z, 4, 2, 7), 0.0);
  EXPECT_NEAR(fnd(a, b, Z, Z, 4, 2, 7, ClObjective::Stabilized), 4 * std::log(2.0), 1e-12);
}

TEST(FndLoss, DeterministicPerSeed) {
  std::mt19937_64 rng(5);
  const auto a = randn(12, 8, rng), b = randn(12, 8, rng);
  const auto Wu = randn(4, 4, rng), Wi = randn(4, 4, rng);
  const double x = fnd(a, b, Wu, Wi, 5, 2, 11);
  EXPECT_EQ(x, fnd(a, b, Wu, Wi, 5, 2, 11));
  EXPECT_NE(x, fnd(a, b, Wu, Wi, 5, 2, 12));
  EXPECT_THROW(fnd(a, b, Wu, Wi, 5, 3, 11), ShapeError);
}

TEST(FndLoss, MatchesManualEvaluation) {
  // one user and one item: every negative collides twice and is skipped,
  // leaving only the positive terms
  std::mt19937_64 rng(6);
  const auto a = randn(2, 4, rng), b = randn(2, 4, rng);
  const auto Wu = randn(2, 2, rng), Wi = randn(2, 2, rng);
  double expected = 0;
  for (std::size_t n = 0; n < 2; ++n) {
    const auto& W = n == 0 ? Wu : Wi;
    double side = 0;
    for (std::size_t k = 0; k < 2; ++k) {
      const std::span<const double> x(a.values().data() + n * 4 + k * 2, 2), y(b.values().data() + n * 4 + k * 2, 2);
      side += std::log(discriminate<double>(x, W, y));
    }
    expected -= side / 2;
  }
  EXPECT_NEAR(fnd(a, b, Wu, Wi, 1, 2, 3), expected, 1e-12);
}

TEST(FndLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  ParameterStore<double> store;
  store.add("v1", randn(7, 6, rng, 0.5));
  store.add("v2", randn(7, 6, rng, 0.5));
  store.add("wu", randn(3, 3, rng, 0.5));
  store.add("wi", randn(3, 3, rng, 0.5));
  auto build = [&](Tape<double>& t) {
    return fndLoss(t.param(store.at("v1")), t.param(store.at("v2")), 3, 2, t.param(store.at("wu")),
                   t.param(store.at("wi")), iota(3), iota(4), 5, ClObjective::Literal);
  };
  const auto res = finiteDifferenceCheck(
      store,
      [&] {
        Tape<double> t;
        return build(t).scalar();
      },
      [&] {
        Tape<double> t;
        t.backward(build(t));
      });
  EXPECT_LT(res.worst_rel, 1e-6) << res.worst_name;
}

TEST(FedLoss, PreconditionAndSymmetricPoint) {
  std::mt19937_64 rng(8);
  Tape<double> t;
  auto h = t.constant(randn(2, 3, rng));
  auto e = t.constant(randn(2, 3, rng));
  EXPECT_THROW(fedLoss(h, e, t.constant(randn(3, 3, rng)), Index{0}, Index{0}, 2, 1, ClObjective::Literal), Error);
  auto h4 = t.constant(randn(8, 3, rng));
  auto e4 = t.constant(randn(8, 3, rng));
  EXPECT_EQ(fedLoss(h4, e4, t.constant(Tensor<double>(3, 3, 0.0)), iota(4), iota(4), 2, 9, ClObjective::Literal)
                .scalar(),
            0.0);
  EXPECT_THROW(fedLoss(h4, e4, t.constant(Tensor<double>(3, 3, 0.0)), iota(3), iota(4), 2, 9, ClObjective::Literal),
               ShapeError);
}

TEST(FedLoss, NegativeTermIsLocal) {
  // batch {edge 0}, pool {0, 1}: the negative is edge 1 whenever it is kept
  std::mt19937_64 rng(9);
  const std::size_t K = 1;
  const auto h = randn(1, 3, rng), W = randn(3, 3, rng);
  auto e = randn(2, 3, rng);
  std::uint64_t seed = 0;
  for (;; ++seed) {
    std::mt19937_64 probe(seed);
    if (!sampleNegatives(Index{0}, Index{0, 1}, probe).anchor.empty()) break;
  }
  auto eval = [&] {
    Tape<double> t;
    return fedLoss(t.constant(h), t.constant(e), t.constant(W), Index{0}, Index{0, 1}, K, seed, ClObjective::Literal)
        .scalar();
  };
  auto negTerm = [&] {
    return std::log(discriminate<double>(h.values(), W, std::span<const double>(e.values().data() + 3, 3)));
  };
  const double pos_before = eval() - negTerm();
  e(1, 0) += 0.8;
  e(1, 2) -= 1.1;
  const double pos_after = eval() - negTerm();
  EXPECT_NEAR(pos_before, pos_after, 1e-12);
  EXPECT_NEAR(pos_after, -std::log(discriminate<double>(h.values(), W, std::span<const double>(e.values().data(), 3))),
              1e-12);
}

TEST(FedLoss, DeterministicAndDifferentiable) {
  std::mt19937_64 rng(10);
  ParameterStore<double> store;
  store.add("h", randn(6, 2, rng, 0.7));
  store.add("e", randn(10, 2, rng, 0.7));
  store.add("w", randn(2, 2, rng, 0.7));
  const Index batch{1, 3, 4};
  auto build = [&](Tape<double>& t, std::uint64_t seed) {
    return fedLoss(t.param(store.at("h")), t.param(store.at("e")), t.param(store.at("w")), batch, iota(5), 2, seed,
                   ClObjective::Literal);
  };
  Tape<double> a, b;
  EXPECT_EQ(build(a, 3).scalar(), build(b, 3).scalar());
  const auto res = finiteDifferenceCheck(
      store,
      [&] {
        Tape<double> t;
        return build(t, 3).scalar();
      },
      [&] {
        Tape<double> t;
        t.backward(build(t, 3));
      });
  EXPECT_LT(res.worst_rel, 1e-6) << res.worst_name;
}
