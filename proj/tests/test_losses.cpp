#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "envae/losses.hpp"
#include "test_util.hpp"

using namespace envae;
using namespace envae::testing;

namespace {

// Brute-force reference score over all ordered pairs, straight from the
// definition.
double reference_score(const Tensor& s, std::size_t b, const Tensor& x, double beta) {
  const std::size_t M = s.dim(0), B = s.dim(1), n = s.dim(2);
  auto dist = [&](const double* u, const double* v) {
    double sq = 0;
    for (std::size_t k = 0; k < n; ++k) sq += (u[k] - v[k]) * (u[k] - v[k]);
    return std::pow(std::sqrt(sq), beta);
  };
  double first = 0, pair = 0;
  for (std::size_t i = 0; i < M; ++i) {
    first += dist(&s[(i * B + b) * n], &x[b * n]);
    for (std::size_t j = 0; j < M; ++j)
      if (i != j) pair += dist(&s[(i * B + b) * n], &s[(j * B + b) * n]);
  }
  return first / M - pair / (2.0 * M * (M - 1));
}

Tensor score(const Tensor& samples, const Tensor& x, double beta) {
  Tape t;
  return energy_score_mc({t.constant(samples)}, t.constant(x), beta).value();
}

Params constant_decoder(const ModelArch& a, const Tensor& c, Rng& rng) {
  Params p = init_params(a, rng);
  for (auto& [name, t] : p.tensors)
    if (!Params::is_encoder(name)) t = Tensor(t.shape(), 0.0);
  p.at("dec.out.b") = c;
  return p;
}

// Loss terms detached from the tape they were computed on.
struct Terms {
  double total, recon, dispersion, kl;
  std::size_t decoded_rows;
};

Terms eval_loss(const Params& p, const Tensor& x, const LossConfig& cfg, Rng& rng) {
  Tape t;
  const BoundParams b = bind(t, p);
  const LossTerms l = compute_loss(b, t.constant(x), cfg, rng);
  return {l.total.item(), l.recon, l.dispersion, l.kl, l.decoded_rows};
}

}  // namespace

TEST(EnergyScore, HandExample) {
  const Tensor s(Shape{2, 1, 1}, std::vector<double>{0.0, 2.0});
  const Tensor x = Tensor::matrix({{0.0}});
  Tape t;
  const DecodedSamples ds{t.constant(s)};
  EXPECT_DOUBLE_EQ(mean_distance_to_data(ds, t.constant(x), 1.0).value()[0], 1.0);
  EXPECT_DOUBLE_EQ(0.5 * mean_pairwise_distance(ds, 1.0).value()[0], 1.0);
  EXPECT_DOUBLE_EQ(score(s, x, 1.0)[0], 0.0);
}

TEST(EnergyScore, IdenticalSamplesReduceToDistance) {
  Tensor s(Shape{5, 1, 3});
  for (std::size_t i = 0; i < 5; ++i) {
    s[i * 3 + 0] = 1.0;
    s[i * 3 + 1] = -2.0;
    s[i * 3 + 2] = 2.0;
  }
  const Tensor x = Tensor::matrix({{0.0, 0.0, 0.0}});
  EXPECT_NEAR(score(s, x, 1.0)[0], 3.0, 1e-14);
  EXPECT_NEAR(score(s, x, 0.5)[0], std::sqrt(3.0), 1e-14);
}

TEST(EnergyScore, FewerThanTwoSamplesRejected) {
  EXPECT_THROW(score(Tensor(Shape{1, 2, 3}), Tensor(Shape{2, 3}), 1.0), ConfigError);
}

TEST(EnergyScore, ShapeMismatchRejected) {
  EXPECT_THROW(score(Tensor(Shape{3, 2, 3}), Tensor(Shape{2, 4}), 1.0), DimensionError);
}

TEST(EnergyScore, MatchesBruteForce) {
  Rng rng(1);
  for (double beta : {0.5, 1.0, 1.5, 2.0}) {
    const Tensor s = randn(rng, {7, 3, 4});
    const Tensor x = randn(rng, {3, 4});
    const Tensor got = score(s, x, beta);
    for (std::size_t b = 0; b < 3; ++b) EXPECT_NEAR(got[b], reference_score(s, b, x, beta), 1e-12);
  }
}

TEST(EnergyScore, PermutationInvariant) {
  Rng rng(2);
  const std::size_t M = 6, B = 2, n = 3;
  const Tensor s = randn(rng, {M, B, n});
  const Tensor x = randn(rng, {B, n});
  std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  Tensor p(s.shape());
  for (std::size_t i = 0; i < M; ++i)
    std::copy_n(&s[perm[i] * B * n], B * n, &p[i * B * n]);
  const Tensor a = score(s, x, 1.0), c = score(p, x, 1.0);
  for (std::size_t b = 0; b < B; ++b) EXPECT_NEAR(a[b], c[b], 1e-13);
}

TEST(EnergyScore, Homogeneous) {
  Rng rng(3);
  const Tensor s = randn(rng, {5, 2, 3});
  const Tensor x = randn(rng, {2, 3});
  for (double beta : {0.5, 1.0, 2.0}) {
    const double c = 2.5;
    Tensor sc = s, xc = x;
    for (double& v : sc.data()) v *= c;
    for (double& v : xc.data()) v *= c;
    const Tensor a = score(s, x, beta), b = score(sc, xc, beta);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(b[i], std::pow(c, beta) * a[i], 1e-12);
  }
}

TEST(EnergyScore, QuadraticCaseIdentity) {
  Rng rng(4);
  for (std::size_t M : {2u, 5u, 50u}) {
    const std::size_t n = 4;
    const Tensor s = randn(rng, {M, 1, n});
    const Tensor x = randn(rng, {1, n});
    std::vector<double> mean(n, 0.0);
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t k = 0; k < n; ++k) mean[k] += s[i * n + k] / M;
    double bias = 0, spread = 0;
    for (std::size_t k = 0; k < n; ++k) bias += (mean[k] - x[k]) * (mean[k] - x[k]);
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t k = 0; k < n; ++k) spread += (s[i * n + k] - mean[k]) * (s[i * n + k] - mean[k]);
    EXPECT_NEAR(score(s, x, 2.0)[0], bias - spread / (M * (M - 1.0)), 1e-10);
  }
}

TEST(EnergyScore, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  for (double beta : {0.7, 1.0, 2.0}) {
    const Tensor s = randn(rng, {4, 2, 3});
    const Tensor x = randn(rng, {2, 3});
    auto fs = [&](Tape& t, Var v) { return sum(energy_score_mc({v}, t.constant(x), beta)); };
    auto fx = [&](Tape& t, Var v) { return sum(energy_score_mc({t.constant(s)}, v, beta)); };
    EXPECT_LE(finite_diff_check(fs, s, 1e-6).max_rel_error, 1e-5);
    EXPECT_LE(finite_diff_check(fx, x, 1e-6).max_rel_error, 1e-5);
  }
}

TEST(LossConfig, Validation) {
  LossConfig c;
  EXPECT_NO_THROW(c.validate());
  c.m_samples = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = LossConfig{};
  c.beta = 3.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = LossConfig{};
  c.alpha = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_variant("vae"), ConfigError);
  for (auto v : {LossVariant::vanilla, LossVariant::l1, LossVariant::envae, LossVariant::fenvae})
    EXPECT_EQ(parse_variant(to_string(v)), v);
}

TEST(EnvaeLoss, ConstantDecoderGivesDistance) {
  Rng rng(6);
  const Tensor c = Tensor::vector({1.0, -1.0, 2.0});
  const Params p = constant_decoder(small_arch(3, 2, {4}), c, rng);
  const Tensor x = Tensor::matrix({{0.0, 0.0, 0.0}, {1.0, 1.0, 2.0}});
  LossConfig cfg;
  cfg.alpha = 0.0;
  cfg.m_samples = 5;
  const Terms t = eval_loss(p, x, cfg, rng);
  EXPECT_NEAR(t.total, 0.5 * (std::sqrt(6.0) + 2.0), 1e-12);
  EXPECT_EQ(t.dispersion, 0.0);
  EXPECT_EQ(t.decoded_rows, 5u * 2u);
}

TEST(EnvaeLoss, QuadraticCaseEqualsAveragedSquaredErrorMinusSpread) {
  Rng rng(7);
  const Tensor A = randn(rng, {2, 3});
  const Params p = linear_decoder(A, randn(rng, {3}), rng);
  const Tensor x = randn(rng, {4, 3});
  LossConfig cfg;
  cfg.beta = 2.0;
  cfg.m_samples = 50;
  cfg.alpha = 0.7;
  std::vector<NoiseDraw> noise;
  for (std::size_t i = 0; i < cfg.m_samples; ++i) noise.push_back(sample_standard_normal(rng, {4, 2}));

  Tape t;
  const BoundParams b = bind(t, p);
  const LossTerms terms = envae_loss(b, t.constant(x), cfg, noise);

  // Same draws through the single-draw squared-error loss, then the spread.
  LossConfig van = cfg;
  van.variant = LossVariant::vanilla;
  double recon = 0, kl = 0;
  std::vector<Tensor> decoded;
  for (const auto& e : noise) {
    Tape u;
    const LossTerms v = vanilla_elbo_loss(bind(u, p), u.constant(x), van, e);
    recon += v.recon / cfg.m_samples;
    kl = v.kl;
    const auto [mu, lv] = encode(p, x);
    Tensor z = mu;
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += std::exp(0.5 * lv[i]) * e.eps[i];
    decoded.push_back(decode(p, z));
  }
  double spread = 0;
  const double M = cfg.m_samples;
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t k = 0; k < 3; ++k) {
      double m = 0;
      for (const auto& d : decoded) m += d.at(r, k) / M;
      for (const auto& d : decoded) spread += (d.at(r, k) - m) * (d.at(r, k) - m);
    }
  // Half the mean over ordered pairs i != j of |a_i - a_j|^2 is the
  // unbiased sample variance sum_i |a_i - mean|^2 / (M - 1); average over rows.
  spread /= 4.0 * (M - 1);
  EXPECT_NEAR(terms.total.item(), recon - spread + cfg.alpha * kl, 1e-10);
}

TEST(EnvaeLoss, NoiseCountMustMatch) {
  Rng rng(8);
  const Params p = init_params(small_arch(3, 2, {4}), rng);
  Tape t;
  LossConfig cfg;
  cfg.m_samples = 3;
  std::vector<NoiseDraw> noise(2, NoiseDraw{Tensor(Shape{1, 2})});
  EXPECT_THROW(envae_loss(bind(t, p), t.constant(Tensor(Shape{1, 3})), cfg, noise), ContractError);
}

TEST(FenvaeLoss, ZeroNoiseRemovesUncertainty) {
  Rng rng(9);
  const Params p = init_params(small_arch(3, 2, {5}), rng);
  const Tensor x = randn(rng, {4, 3});
  LossConfig cfg;
  cfg.variant = LossVariant::fenvae;
  Tape t;
  const BoundParams b = bind(t, p);
  const LossTerms terms = fenvae_loss(b, t.constant(x), cfg, NoiseDraw{Tensor(Shape{4, 2}, 0.0)});
  EXPECT_EQ(terms.dispersion, 0.0);
  const auto [mu, lv] = encode(p, x);
  const Tensor g = decode(p, mu);
  double recon = 0, kl = 0;
  for (std::size_t r = 0; r < 4; ++r) {
    double sq = 0;
    for (std::size_t k = 0; k < 3; ++k) sq += (g.at(r, k) - x.at(r, k)) * (g.at(r, k) - x.at(r, k));
    recon += std::sqrt(sq) / 4;
    for (std::size_t k = 0; k < 2; ++k) kl += 0.5 * (mu.at(r, k) * mu.at(r, k) + std::exp(lv.at(r, k)) - 1 - lv.at(r, k)) / 4;
  }
  EXPECT_NEAR(terms.total.item(), recon + kl, 1e-12);
  EXPECT_EQ(terms.decoded_rows, 12u);
}

TEST(FenvaeLoss, LinearDecoderUncertaintyHasClosedForm) {
  Rng rng(10);
  const Tensor A = randn(rng, {2, 3});
  const Params p = linear_decoder(A, randn(rng, {3}), rng);
  const Tensor x = randn(rng, {1, 3});
  const Tensor eps = randn(rng, {1, 2});
  for (double beta : {1.0, 2.0, 0.5}) {
    LossConfig cfg;
    cfg.variant = LossVariant::fenvae;
    cfg.beta = beta;
    Tape t;
    const LossTerms terms = fenvae_loss(bind(t, p), t.constant(x), cfg, {eps});
    const auto [mu, lv] = encode(p, x);
    double sq = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      double d = 0;
      for (std::size_t j = 0; j < 2; ++j) d += std::sqrt(2.0) * std::exp(0.5 * lv[j]) * eps[j] * A.at(j, k);
      sq += d * d;
    }
    EXPECT_NEAR(terms.dispersion, 0.5 * std::pow(sq, 0.5 * beta), 1e-12);
  }
}

TEST(FenvaeLoss, SharedAndFreshNoiseAgreeInExpectation) {
  Rng rng(11);
  const Params p = init_params(small_arch(3, 2, {6}), rng);
  const std::size_t N = 10000;
  const Tensor x = randn(rng, {N, 3});
  LossConfig cfg;
  cfg.variant = LossVariant::fenvae;
  auto per_example = [&](bool share) {
    cfg.share_noise = share;
    std::vector<double> out;
    const auto [mu, lv] = encode(p, x);
    const Tensor e1 = randn(rng, {N, 2});
    const Tensor e2 = randn(rng, {N, 2});
    Tensor zw = mu;
    const Tensor& e = share ? e1 : e2;
    for (std::size_t i = 0; i < zw.size(); ++i) zw[i] += std::sqrt(2.0) * std::exp(0.5 * lv[i]) * e[i];
    const Tensor gw = decode(p, zw), gm = decode(p, mu);
    for (std::size_t r = 0; r < N; ++r) {
      double sq = 0;
      for (std::size_t k = 0; k < 3; ++k) sq += (gw.at(r, k) - gm.at(r, k)) * (gw.at(r, k) - gm.at(r, k));
      out.push_back(0.5 * std::sqrt(sq));
    }
    return out;
  };
  // The batch loss with each setting reproduces the batch mean of these terms.
  {
    Rng a(99), b(99);
    cfg.share_noise = false;
    const Terms terms = eval_loss(p, x, cfg, a);
    const Tensor e1 = randn(b, {N, 2});
    const Tensor e2 = randn(b, {N, 2});
    (void)e1;
    const auto [mu, lv] = encode(p, x);
    Tensor zw = mu;
    for (std::size_t i = 0; i < zw.size(); ++i) zw[i] += std::sqrt(2.0) * std::exp(0.5 * lv[i]) * e2[i];
    const Tensor gw = decode(p, zw), gm = decode(p, mu);
    double m = 0;
    for (std::size_t r = 0; r < N; ++r) {
      double sq = 0;
      for (std::size_t k = 0; k < 3; ++k) sq += (gw.at(r, k) - gm.at(r, k)) * (gw.at(r, k) - gm.at(r, k));
      m += 0.5 * std::sqrt(sq) / N;
    }
    EXPECT_NEAR(terms.dispersion, m, 1e-12);
  }
  const auto shared = per_example(true);
  const auto fresh = per_example(false);
  const double se = std::sqrt(sample_var(shared) / N + sample_var(fresh) / N);
  EXPECT_LE(std::fabs(sample_mean(shared) - sample_mean(fresh)), 3 * se);
}

TEST(VanillaLoss, PerfectReconstructionIsZero) {
  Rng rng(12);
  const Tensor x = Tensor::matrix({{0.2, 0.4, 0.6}});
  Params p = constant_decoder(small_arch(3, 2, {4}), x.reshaped({3}), rng);
  set_constant_posterior(p, Tensor(Shape{2}, 0.0), Tensor(Shape{2}, 0.0));
  LossConfig cfg;
  cfg.variant = LossVariant::vanilla;
  EXPECT_EQ(eval_loss(p, x, cfg, rng).total, 0.0);
}

TEST(VanillaAndL1, OffsetByOne) {
  Rng rng(13);
  const Tensor x = Tensor::matrix({{0.1, 0.2, 0.3, 0.4}});
  Tensor c = x.reshaped({4});
  for (double& v : c.data()) v += 1.0;
  const Params p = constant_decoder(small_arch(4, 2, {3}), c, rng);
  LossConfig cfg;
  cfg.alpha = 0.0;
  cfg.variant = LossVariant::vanilla;
  EXPECT_NEAR(eval_loss(p, x, cfg, rng).total, 4.0, 1e-12);
  cfg.variant = LossVariant::l1;
  EXPECT_NEAR(eval_loss(p, x, cfg, rng).total, 4.0, 1e-12);
}

TEST(L1Loss, PerfectReconstructionIsKlOnly) {
  Rng rng(14);
  const Tensor x = Tensor::matrix({{0.3, 0.9}});
  Params p = constant_decoder(small_arch(2, 1, {3}), x.reshaped({2}), rng);
  set_constant_posterior(p, Tensor::vector({1.0}), Tensor::vector({0.0}));
  LossConfig cfg;
  cfg.variant = LossVariant::l1;
  cfg.alpha = 2.0;
  const Terms t = eval_loss(p, x, cfg, rng);
  EXPECT_EQ(t.recon, 0.0);
  EXPECT_NEAR(t.total, 2.0 * 0.5, 1e-15);
}

TEST(L1Loss, GradientIsSignPattern) {
  Rng rng(15);
  const Tensor x = randn(rng, {2, 3});
  const Tensor g0 = randn(rng, {2, 3});
  Tape t;
  Var g = t.variable(g0);
  const Tensor grad = backward(t, sum(sum_last(abs(g - t.constant(x))))).wrt(g);
  for (std::size_t i = 0; i < grad.size(); ++i) EXPECT_EQ(grad[i], g0[i] > x[i] ? 1.0 : -1.0);
}

TEST(Losses, VanillaExceedsQuadraticEnergyByPushforwardTrace) {
  // E[squared error] - E[beta=2 energy score] = tr Cov(g(z)) for a linear decoder.
  Rng rng(16);
  const Tensor A = randn(rng, {2, 3});
  Params p = linear_decoder(A, randn(rng, {3}), rng);
  const Tensor lv = Tensor::vector({std::log(0.5), std::log(0.2)});
  set_constant_posterior(p, Tensor::vector({0.3, -0.4}), lv);
  const Tensor x = randn(rng, {1, 3});
  double trace = 0;
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t k = 0; k < 3; ++k) trace += std::exp(lv[j]) * A.at(j, k) * A.at(j, k);
  LossConfig van, env;
  van.variant = LossVariant::vanilla;
  env.beta = 2.0;
  env.m_samples = 10;
  // Both losses carry the same KL, so compare the reconstruction parts.
  std::vector<double> gap;
  for (int rep = 0; rep < 1000; ++rep) {
    const Terms v = eval_loss(p, x, van, rng);
    const Terms e = eval_loss(p, x, env, rng);
    gap.push_back(v.recon - (e.recon - e.dispersion));
  }
  EXPECT_LE(std::fabs(sample_mean(gap) - trace), 3 * std::sqrt(sample_var(gap) / gap.size()));
}

TEST(Losses, AllVariantsGradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + seed % 5, m = 1 + seed % 3;
    const Params p = init_params(small_arch(n, m, {5}), rng);
    const Tensor x = randn(rng, {3, n});
    for (auto variant : {LossVariant::vanilla, LossVariant::l1, LossVariant::envae, LossVariant::fenvae}) {
      LossConfig cfg;
      cfg.variant = variant;
      cfg.m_samples = 4;
      cfg.beta = seed % 2 ? 1.0 : 1.5;
      const std::uint64_t noise_seed = rng.next_u64();
      for (const auto& [name, value] : p.tensors) {
        auto f = [&, name = name](Tape& t, Var leaf) {
          BoundParams b = bind(t, p, false);
          b.vars.at(name) = leaf;
          Rng local(noise_seed);
          return compute_loss(b, t.constant(x), cfg, local).total;
        };
        const auto r = finite_diff_check(f, value, 1e-6);
        EXPECT_LE(r.max_rel_error, 1e-4) << to_string(variant) << " " << name << " seed " << seed;
      }
    }
  }
}

TEST(Losses, NonFiniteLossIsNumericError) {
  Rng rng(17);
  const Params p = init_params(small_arch(2, 1, {3}), rng);
  LossConfig cfg;
  cfg.variant = LossVariant::vanilla;
  EXPECT_THROW(eval_loss(p, Tensor(Shape{1, 2}, 1e300), cfg, rng), NumericError);
}

TEST(Losses, TermsRecombine) {
  Rng rng(18);
  const Params p = init_params(small_arch(3, 2, {4}), rng);
  const Tensor x = randn(rng, {5, 3});
  for (auto variant : {LossVariant::vanilla, LossVariant::l1, LossVariant::envae, LossVariant::fenvae}) {
    LossConfig cfg;
    cfg.variant = variant;
    cfg.alpha = 0.3;
    const Terms t = eval_loss(p, x, cfg, rng);
    EXPECT_NEAR(t.total, t.recon - t.dispersion + cfg.alpha * t.kl, 1e-12);
  }
}
