#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "envae/train.hpp"
#include "test_util.hpp"

using namespace envae;
using namespace envae::testing;

namespace {

Dataset toy(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.name = "toy";
  d.x = Tensor(Shape{n, dim});
  for (double& v : d.x.data()) v = rng.uniform();
  return d;
}

TrainConfig small_config(LossVariant v, std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 4;
  c.seed = 3;
  c.loss.variant = v;
  c.loss.m_samples = 4;
  c.arch = small_arch(3, 2, {8});
  return c;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Rng rng;
  Params p = init_params(small_arch(3, 2, {4}), rng);
  const Params before = p;
  std::map<std::string, Tensor> grads;
  for (const auto& [name, t] : p.tensors) grads.emplace(name, Tensor(t.shape(), 0.0));
  AdamState s;
  adam_step(p, grads, s, AdamConfig{});
  EXPECT_EQ(p, before);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  Params p;
  p.tensors.emplace("w", Tensor::vector({0.0}));
  AdamState s;
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  adam_step(p, {{"w", Tensor::vector({1.0})}}, s, cfg);
  // m_hat = 1, v_hat = 1: w = -0.1 / (1 + 1e-8)
  EXPECT_NEAR(p.at("w")[0], -0.1, 1e-8);
  EXPECT_DOUBLE_EQ(p.at("w")[0], -0.1 / (1.0 + 1e-8));
}

TEST(Adam, MissingGradientIsContractError) {
  Params p;
  p.tensors.emplace("w", Tensor::vector({0.0}));
  p.tensors.emplace("v", Tensor::vector({0.0}));
  AdamState s;
  EXPECT_THROW(adam_step(p, {{"w", Tensor::vector({1.0})}}, s, AdamConfig{}), ContractError);
}

TEST(Adam, ConfigValidation) {
  AdamConfig c;
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AdamConfig{};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, VanillaLossDecreasesOnToySet) {
  const Dataset d = toy(16, 3, 1);
  TrainConfig c = small_config(LossVariant::vanilla, 50);
  c.adam.learning_rate = 1e-2;
  const auto [ck, trace] = train(c, d);
  ASSERT_EQ(trace.steps.size(), 50u * 4u);
  auto epoch_mean = [&](std::size_t e) {
    double s = 0;
    for (const auto& r : trace.steps)
      if (r.epoch == e) s += r.total / 4.0;
    return s;
  };
  EXPECT_LT(epoch_mean(49), epoch_mean(0));
}

TEST(Train, DimensionMismatchThrows) {
  EXPECT_THROW(train(small_config(LossVariant::vanilla, 1), toy(8, 4, 1)), DimensionError);
}

TEST(Train, SameSeedSameTrajectory) {
  const Dataset d = toy(20, 3, 2);
  for (auto v : {LossVariant::vanilla, LossVariant::l1, LossVariant::envae, LossVariant::fenvae}) {
    const auto a = train(small_config(v, 3), d);
    const auto b = train(small_config(v, 3), d);
    EXPECT_EQ(a.first.params, b.first.params) << to_string(v);
    EXPECT_EQ(a.first.adam, b.first.adam);
    std::ostringstream ca, cb;
    a.second.write_csv(ca, false);
    b.second.write_csv(cb, false);
    EXPECT_EQ(ca.str(), cb.str());
  }
}

TEST(Train, ResumeEqualsStraightRun) {
  const Dataset d = toy(18, 3, 3);
  for (auto v : {LossVariant::envae, LossVariant::fenvae}) {
    const auto straight = train(small_config(v, 10), d);
    const auto half = train(small_config(v, 5), d);
    const auto resumed = train(small_config(v, 10), d, &half.first);
    EXPECT_EQ(resumed.first.params, straight.first.params);
    EXPECT_EQ(resumed.first.adam, straight.first.adam);
    EXPECT_EQ(resumed.first.step, straight.first.step);
    EXPECT_EQ(resumed.first.rng_state, straight.first.rng_state);
    ASSERT_EQ(half.second.steps.size() + resumed.second.steps.size(), straight.second.steps.size());
    for (std::size_t i = 0; i < resumed.second.steps.size(); ++i) {
      const auto& r = resumed.second.steps[i];
      const auto& s = straight.second.steps[half.second.steps.size() + i];
      EXPECT_EQ(r.step, s.step);
      EXPECT_EQ(r.total, s.total);
    }
  }
}

TEST(Train, ResumeWithDifferentArchRejected) {
  const Dataset d = toy(8, 3, 4);
  const auto half = train(small_config(LossVariant::vanilla, 1), d);
  TrainConfig c = small_config(LossVariant::vanilla, 2);
  c.arch.latent_dim = 3;
  EXPECT_THROW(train(c, d, &half.first), ConfigError);
}

TEST(Train, TraceTermsRecombine) {
  const Dataset d = toy(12, 3, 5);
  for (auto v : {LossVariant::vanilla, LossVariant::l1, LossVariant::envae, LossVariant::fenvae}) {
    TrainConfig c = small_config(v, 2);
    c.loss.alpha = 0.37;
    const auto [ck, trace] = train(c, d);
    for (const auto& r : trace.steps) EXPECT_NEAR(r.total, r.recon - r.dispersion + 0.37 * r.kl, 1e-12);
  }
}

TEST(Train, StepNumbersMonotoneAndLogEvery) {
  const Dataset d = toy(16, 3, 6);
  TrainConfig c = small_config(LossVariant::vanilla, 3);
  c.log_every = 3;
  const auto [ck, trace] = train(c, d);
  EXPECT_EQ(ck.step, 12u);
  ASSERT_EQ(trace.steps.size(), 4u);
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    EXPECT_EQ(trace.steps[i].step, 3 * (i + 1));
    EXPECT_GE(trace.steps[i].ms, 0.0);
  }
  EXPECT_EQ(trace.epoch_ms.size(), 3u);
}

TEST(Train, CsvLayout) {
  TrainTrace t;
  t.steps.push_back({1, 0, 1.5, 2.0, 0.25, 0.125, 12.5});
  std::ostringstream a, b;
  t.write_csv(a, false);
  t.write_csv(b, true);
  EXPECT_EQ(a.str(), "step,epoch,total,recon,dispersion,kl,ms\n1,0,1.5,2,0.25,0.125,0\n");
  EXPECT_EQ(b.str(), "step,epoch,total,recon,dispersion,kl,ms\n1,0,1.5,2,0.25,0.125,12.5\n");
}

TEST(Train, MedianEpochTime) {
  TrainTrace t;
  t.epoch_ms = {5.0, 1.0, 3.0};
  EXPECT_EQ(t.median_epoch_ms(), 3.0);
  t.epoch_ms = {4.0, 1.0, 3.0, 2.0};
  EXPECT_EQ(t.median_epoch_ms(), 2.5);
}

TEST(Train, LargeAlphaPullsPosteriorToPrior) {
  Dataset d;
  d.x = Tensor::matrix({{0.3, 0.8, 0.5}});
  TrainConfig c = small_config(LossVariant::envae, 1500);
  c.batch_size = 1;
  c.loss.alpha = 100.0;
  c.adam.learning_rate = 1e-2;
  const auto [ck, trace] = train(c, d);
  EXPECT_LE(trace.steps.back().kl, 1e-3);
}
