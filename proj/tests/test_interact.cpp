#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace dgclr;
using namespace testing_support;

namespace {

Tensor<double> randn(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  Tensor<double> t(r, c);
  for (auto& v : t.values()) v = n01(rng);
  return t;
}

struct Head {
  ParameterStore<double> store;
  std::size_t d, K, w;
  Head(std::uint64_t seed, std::size_t d_, std::size_t K_) : store(seed), d(d_), K(K_), w(d_ / K_) {
    registerInteractionParams(store, d, K);
  }
  InteractionOutput<double> run(Tape<double>& t, const Tensor<double>& u, const Tensor<double>& v, double tau = 0.5) {
    return interact(t, store, t.constant(u), t.constant(v), K, tau);
  }
};

}  // namespace

TEST(InteractionFeature, ZeroMapAndBiasOnly) {
  Head h(1, 8, 2);
  std::mt19937_64 rng(1);
  h.store.at(names::mlpW()).value.fill(0);
  h.store.at(names::mlpB()).value.fill(0);
  Tape<double> t;
  for (double x : h.run(t, randn(3, 8, rng), randn(3, 8, rng)).features.value().values()) EXPECT_EQ(x, 0.0);

  Head g(2, 8, 2);
  g.store.at(names::mlpB()).value = Tensor<double>::vector({0.5, -1.0, 2.0, -0.25});
  const auto f = g.run(t, Tensor<double>(2, 8, 0.0), Tensor<double>(2, 8, 0.0)).features.value();
  for (std::size_t r = 0; r < f.rows(); ++r) {
    EXPECT_EQ(f(r, 0), 0.5);
    EXPECT_EQ(f(r, 1), 0.0);
    EXPECT_EQ(f(r, 2), 2.0);
    EXPECT_EQ(f(r, 3), 0.0);
  }
}

TEST(InteractionFeature, MatchesScalarLoop) {
  Head h(3, 12, 3);
  std::mt19937_64 rng(3);
  const auto u = randn(5, 12, rng), v = randn(5, 12, rng);
  Tape<double> t;
  const auto out = h.run(t, u, v);
  const auto& W = h.store.at(names::mlpW()).value;
  const auto& b = h.store.at(names::mlpB()).value;
  const auto& wv = h.store.at(names::rateW()).value;
  const auto f = out.features.value();
  for (std::size_t p = 0; p < 5; ++p)
    for (std::size_t k = 0; k < 3; ++k) {
      std::vector<double> hk(h.w);
      for (std::size_t j = 0; j < h.w; ++j) {
        double acc = b[j];
        for (std::size_t a = 0; a < h.w; ++a) acc += u(p, k * h.w + a) * W(a, j) + v(p, k * h.w + a) * W(h.w + a, j);
        hk[j] = std::max(acc, 0.0);
        EXPECT_NEAR(f(p * 3 + k, j), hk[j], 1e-12);
      }
      double r = 0;
      for (std::size_t j = 0; j < h.w; ++j) r += wv[j] * hk[j];
      EXPECT_NEAR(out.factor_rating.value()(p, k), r, 1e-12);
    }
}

TEST(FactorRating, InnerProductCases) {
  Head h(4, 4, 1);
  // identity MLP on the user half, zero bias, so h = ReLU(u) when v = 0
  auto& W = h.store.at(names::mlpW()).value;
  W.fill(0);
  for (std::size_t i = 0; i < 4; ++i) W(i, i) = 1;
  h.store.at(names::mlpB()).value.fill(0);
  h.store.at(names::rateW()).value = Tensor<double>::vector({0.5, 1.5, 2.0, 0.25});
  Tape<double> t;
  const auto zero = Tensor<double>(1, 4, 0.0);
  auto r1 = h.run(t, Tensor<double>::matrix(1, 4, {0.5, 1.5, 2.0, 0.25}), zero).factor_rating.value()[0];
  EXPECT_NEAR(r1, 0.25 + 2.25 + 4.0 + 0.0625, 1e-12);
  auto r2 = h.run(t, Tensor<double>::matrix(1, 4, {1, 0, 0, 0}), zero).factor_rating.value()[0];
  EXPECT_EQ(r2, 0.5);
  h.store.at(names::rateW()).value.fill(0);
  Tape<double> fresh;
  EXPECT_EQ(h.run(fresh, Tensor<double>::matrix(1, 4, {1, 2, 3, 4}), zero).factor_rating.value()[0], 0.0);
}

TEST(Attention, SingleFactorAndSymmetry) {
  std::mt19937_64 rng(5);
  Head one(5, 6, 1);
  Tape<double> t;
  for (double a : one.run(t, randn(4, 6, rng), randn(4, 6, rng)).attention.value().values()) EXPECT_EQ(a, 1.0);

  Head four(6, 8, 4);
  // identical chunks give identical h^k
  Tensor<double> u(2, 8), v(2, 8);
  for (std::size_t p = 0; p < 2; ++p)
    for (std::size_t j = 0; j < 8; ++j) {
      u(p, j) = 0.3 * static_cast<double>(j % 2) + static_cast<double>(p);
      v(p, j) = -0.7 + 0.1 * static_cast<double>(j % 2);
    }
  for (double a : four.run(t, u, v).attention.value().values()) EXPECT_NEAR(a, 0.25, 1e-15);
}

TEST(Attention, ClosedFormSoftmax) {
  Tape<double> t;
  auto logits = t.constant(Tensor<double>::matrix(1, 2, {1.0, 0.0}));
  const auto a = ad::rowSoftmax(logits, 1.0).value();
  EXPECT_NEAR(a[0], 0.7310585786300049, 1e-12);
  EXPECT_NEAR(a[1], 0.2689414213699951, 1e-12);
  auto shifted = t.constant(Tensor<double>::matrix(1, 2, {4.5, 3.5}));
  const auto b = ad::rowSoftmax(shifted, 1.0).value();
  EXPECT_NEAR(a[0], b[0], 1e-15);
  EXPECT_NEAR(a[1], b[1], 1e-15);
}

TEST(Attention, RejectsNonPositiveTau) {
  Head h(7, 4, 2);
  Tape<double> t;
  EXPECT_THROW(h.run(t, Tensor<double>(1, 4), Tensor<double>(1, 4), 0.0), DomainError);
  EXPECT_THROW(h.run(t, Tensor<double>(1, 4), Tensor<double>(1, 4), -1.0), DomainError);
}

TEST(PredictRating, Examples) {
  const std::vector<double> one_hot{1, 0}, r{2.5, 4.0}, half{0.5, 0.5}, r24{2, 4};
  EXPECT_EQ(predictRating<double>(one_hot, r), 2.5);
  EXPECT_EQ(predictRating<double>(half, r24), 3.0);
  const std::vector<double> alpha{0.2, 0.3, 0.5}, same{3.25, 3.25, 3.25};
  EXPECT_NEAR(predictRating<double>(alpha, same), 3.25, 1e-15);
  EXPECT_THROW(predictRating<double>(alpha, r), ShapeError);
}

TEST(Interact, InvariantsOnRandomInputs) {
  std::mt19937_64 rng(8);
  for (std::size_t K : {1u, 2u, 4u, 8u}) {
    Head h(10 + K, 16, K);
    Tape<double> t;
    const auto out = h.run(t, randn(20, 16, rng), randn(20, 16, rng), 0.2);
    const auto& alpha = out.attention.value();
    const auto& fr = out.factor_rating.value();
    for (std::size_t p = 0; p < 20; ++p) {
      double sum = 0, lo = 1e300, hi = -1e300, manual = 0;
      for (std::size_t k = 0; k < K; ++k) {
        sum += alpha(p, k);
        EXPECT_GT(alpha(p, k), 0.0);
        if (K > 1) {
          EXPECT_LT(alpha(p, k), 1.0);
        }
        lo = std::min(lo, fr(p, k));
        hi = std::max(hi, fr(p, k));
        manual += alpha(p, k) * fr(p, k);
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
      const double r = out.prediction.value()[p];
      EXPECT_GE(r, lo - 1e-12);
      EXPECT_LE(r, hi + 1e-12);
      EXPECT_NEAR(r, manual, 1e-12);
    }
  }
}

TEST(Interact, GradientsMatchFiniteDifferences) {
  Head h(20, 8, 2);
  std::mt19937_64 rng(9);
  const auto u = randn(4, 8, rng), v = randn(4, 8, rng), target = randn(4, 1, rng);
  // keep attention logits inside the ReLU's active region
  h.store.at(names::attnB()).value.fill(2.0);
  auto build = [&](Tape<double>& t) {
    auto out = h.run(t, u, v, 0.5);
    return ad::mean(ad::square(ad::sub(out.prediction, t.constant(target))));
  };
  const auto res = finiteDifferenceCheck(
      h.store,
      [&] {
        Tape<double> t;
        return build(t).scalar();
      },
      [&] {
        Tape<double> t;
        t.backward(build(t));
      });
  EXPECT_LT(res.worst_rel, 1e-5) << res.worst_name;
  EXPECT_EQ(res.checked, h.store.scalarCount());
}
