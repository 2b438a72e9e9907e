#include <cmath>

#include <gtest/gtest.h>

#include "envae/autodiff.hpp"
#include "envae/random.hpp"

using namespace envae;

namespace {

double pearson_r(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= a.size();
  mb /= b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

GaussianPosterior posterior(Tape& t, Tensor mu, Tensor lv, bool track = false) {
  return {track ? t.variable(std::move(mu)) : t.constant(std::move(mu)),
          track ? t.variable(std::move(lv)) : t.constant(std::move(lv))};
}

}  // namespace

TEST(Rng, SameSeedSameSequence) {
  Rng a(42), b(42);
  const Tensor a1 = sample_standard_normal(a, {2, 2}).eps;
  const Tensor a2 = sample_standard_normal(a, {2, 2}).eps;
  EXPECT_NE(a1, a2);
  EXPECT_EQ(sample_standard_normal(b, {2, 2}).eps, a1);
  EXPECT_EQ(sample_standard_normal(b, {2, 2}).eps, a2);
}

TEST(Rng, StreamsDiffer) {
  Rng a(1, 0), b(1, 1);
  EXPECT_NE(a.next_u64(), b.next_u64());
}

TEST(Rng, SerializeRestoresMidStream) {
  Rng a(9);
  a.normal();  // leaves a cached second variate in the normal sampler
  Rng b = Rng::deserialize(a.serialize());
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.normal(), b.normal());
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, MalformedStateThrows) { EXPECT_THROW(Rng::deserialize("not a state"), ContractError); }

TEST(Sampling, MomentsOfStandardNormal) {
  Rng rng(7);
  const Tensor e = sample_standard_normal(rng, {100000}).eps;
  double m = 0, v = 0;
  for (double x : e.data()) m += x;
  m /= e.size();
  for (double x : e.data()) v += (x - m) * (x - m);
  v /= (e.size() - 1);
  EXPECT_NEAR(m, 0.0, 0.02);
  EXPECT_NEAR(v, 1.0, 0.02);
}

TEST(Sampling, SplitStreamsUncorrelated) {
  Rng root(11);
  auto kids = root.split(2);
  std::vector<double> a(10000), b(10000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = kids[0].normal();
    b[i] = kids[1].normal();
  }
  EXPECT_LT(std::fabs(pearson_r(a, b)), 0.05);
}

TEST(Sampling, EmptyShapeThrows) {
  Rng rng;
  EXPECT_THROW(sample_standard_normal(rng, {}), DimensionError);
}

TEST(Reparameterize, ZeroNoiseGivesMean) {
  Tape t;
  auto q = posterior(t, Tensor::matrix({{0.3, -2}}), Tensor::matrix({{1.5, -0.5}}));
  EXPECT_EQ(reparameterize(q, {Tensor(Shape{1, 2}, 0.0)}).value(), q.mu.value());
}

TEST(Reparameterize, StandardPosteriorPassesNoise) {
  Tape t;
  auto q = posterior(t, Tensor(Shape{1, 3}, 0.0), Tensor(Shape{1, 3}, 0.0));
  const Tensor e = Tensor::matrix({{0.1, -1.2, 3.0}});
  EXPECT_EQ(reparameterize(q, {e}).value(), e);
}

TEST(Reparameterize, HandValue) {
  Tape t;
  auto q = posterior(t, Tensor::matrix({{1.0}}), Tensor::matrix({{std::log(4.0)}}));
  EXPECT_NEAR(reparameterize(q, {Tensor::matrix({{0.5}})}).item(), 2.0, 1e-15);
}

TEST(Reparameterize, ShapeMismatchThrows) {
  Tape t;
  auto q = posterior(t, Tensor(Shape{1, 2}), Tensor(Shape{1, 2}));
  EXPECT_THROW(reparameterize(q, {Tensor(Shape{1, 3})}), DimensionError);
}

TEST(Reparameterize, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  const Tensor eps = sample_standard_normal(rng, {2, 3}).eps;
  const Tensor lv = sample_standard_normal(rng, {2, 3}).eps;
  const Tensor mu = sample_standard_normal(rng, {2, 3}).eps;
  const Tensor w = sample_standard_normal(rng, {2, 3}).eps;
  auto through_mu = [&](Tape& t, Var m) {
    return sum(square(reparameterize({m, t.constant(lv)}, {eps})) * t.constant(w));
  };
  auto through_lv = [&](Tape& t, Var l) {
    return sum(square(reparameterize({t.constant(mu), l}, {eps})) * t.constant(w));
  };
  EXPECT_LE(finite_diff_check(through_mu, mu, 1e-6).max_rel_error, 1e-6);
  EXPECT_LE(finite_diff_check(through_lv, lv, 1e-6).max_rel_error, 1e-6);
}

TEST(Reparameterize, EmpiricalMomentsMatchPosterior) {
  const double mu = 0.7, lv = std::log(0.3);
  Rng rng(21);
  const std::size_t n = 100000;
  Tape t;
  auto q = posterior(t, Tensor(Shape{n, 1}, mu), Tensor(Shape{n, 1}, lv));
  const Tensor z = reparameterize(q, sample_standard_normal(rng, {n, 1})).value();
  double m = 0, v = 0;
  for (double x : z.data()) m += x;
  m /= n;
  for (double x : z.data()) v += (x - m) * (x - m);
  v /= (n - 1);
  const double var = std::exp(lv);
  EXPECT_NEAR(m, mu, 3 * std::sqrt(var / n));
  EXPECT_NEAR(v, var, 3 * var * std::sqrt(2.0 / (n - 1)));
}

TEST(Kl, KnownValues) {
  Tape t;
  EXPECT_EQ(kl_diag_gaussian(posterior(t, Tensor(Shape{1, 2}, 0.0), Tensor(Shape{1, 2}, 0.0))).value(),
            Tensor(Shape{1}, 0.0));
  EXPECT_DOUBLE_EQ(kl_diag_gaussian(posterior(t, Tensor::matrix({{1.0}}), Tensor::matrix({{0.0}}))).value()[0], 0.5);
  EXPECT_DOUBLE_EQ(
      kl_diag_gaussian(posterior(t, Tensor::matrix({{1.0, 0.0}}), Tensor::matrix({{0.0, 0.0}}))).value()[0], 0.5);
}

TEST(Kl, PerExampleShape) {
  Tape t;
  const Tensor kl = kl_diag_gaussian(posterior(t, Tensor(Shape{5, 3}, 0.2), Tensor(Shape{5, 3}, -0.1))).value();
  EXPECT_EQ(kl.shape(), (Shape{5}));
}

TEST(Kl, NonnegativeOnRandomPosteriors) {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    Tape t;
    Tensor lv = sample_standard_normal(rng, {4, 3}).eps;
    for (double& v : lv.data()) v *= 5.0;
    Tensor mu = sample_standard_normal(rng, {4, 3}).eps;
    for (double& v : mu.data()) v *= (trial % 2 ? 1e-9 : 3.0);
    for (double v : kl_diag_gaussian(posterior(t, mu, lv)).value().data()) EXPECT_GE(v, 0.0);
  }
  Tape t;
  const Tensor tiny = kl_diag_gaussian(posterior(t, Tensor(Shape{1, 1}, 0.0), Tensor(Shape{1, 1}, 1e-9))).value();
  EXPECT_GE(tiny[0], 0.0);
}

TEST(Kl, GradientMatchesFiniteDifferences) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor mu = sample_standard_normal(rng, {3, 2}).eps;
    const Tensor lv = sample_standard_normal(rng, {3, 2}).eps;
    auto f_mu = [&](Tape& t, Var m) { return sum(kl_diag_gaussian({m, t.constant(lv)})); };
    auto f_lv = [&](Tape& t, Var l) { return sum(kl_diag_gaussian({t.constant(mu), l})); };
    EXPECT_LE(finite_diff_check(f_mu, mu, 1e-6).max_rel_error, 1e-6);
    EXPECT_LE(finite_diff_check(f_lv, lv, 1e-6).max_rel_error, 1e-6);
  }
}
