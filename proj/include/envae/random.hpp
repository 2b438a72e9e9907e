#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "envae/autodiff.hpp"
#include "envae/errors.hpp"
#include "envae/tensor.hpp"

namespace envae {

/// Seeded generator: a 64-bit Mersenne Twister (std::mt19937_64) keyed by
/// (seed, stream) through std::seed_seq, plus a cached standard-normal
/// sampler. Output is reproducible for a given build and call sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  std::uint64_t next_u64() { return engine_(); }
  double normal() { return normal_(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() noexcept { return engine_; }

  /// `k` child generators on distinct streams under a seed drawn from this one.
  std::vector<Rng> split(std::size_t k) {
    const std::uint64_t child_seed = next_u64();
    std::vector<Rng> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.emplace_back(child_seed, i + 1);
    return out;
  }

  /// Full generator state as text (engine words plus the normal cache).
  std::string serialize() const {
    std::ostringstream os;
    os << seed_ << ' ' << stream_ << ' ' << engine_ << ' ' << normal_;
    return os.str();
  }

  static Rng deserialize(const std::string& text) {
    std::istringstream is(text);
    Rng rng;
    is >> rng.seed_ >> rng.stream_ >> rng.engine_ >> rng.normal_;
    if (!is) throw ContractError("malformed rng state");
    return rng;
  }

  friend bool operator==(const Rng& a, const Rng& b) { return a.serialize() == b.serialize(); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// A batch of i.i.d. N(0, 1) variates destined for one reparameterization.
struct NoiseDraw {
  Tensor eps;
};

inline NoiseDraw sample_standard_normal(Rng& rng, const Shape& shape) {
  if (shape.empty()) throw DimensionError("sample_standard_normal: empty shape");
  Tensor t(shape);
  for (double& v : t.data()) v = rng.normal();
  return NoiseDraw{std::move(t)};
}

/// Diagonal Gaussian q(z|x) for a batch: mean and log-variance, both [B x m].
struct GaussianPosterior {
  Var mu;
  Var logvar;
};

/// z = mu + exp(logvar / 2) * eps.
inline Var reparameterize(const GaussianPosterior& post, const NoiseDraw& noise) {
  if (post.mu.shape() != post.logvar.shape()) throw DimensionError("posterior mean/logvar shapes differ");
  if (noise.eps.shape() != post.mu.shape()) {
    throw DimensionError("noise shape " + to_string(noise.eps.shape()) + " does not match posterior " +
                         to_string(post.mu.shape()));
  }
  Tape& tape = *post.mu.tape();
  Var sigma = exp(scale(post.logvar, 0.5));
  return add(post.mu, mul(sigma, tape.constant(noise.eps)));
}

/// KL(q || N(0, I)) per example: -1/2 * sum_k (1 + logvar_k - mu_k^2 - exp(logvar_k)).
/// Returns a [B] tensor. Evaluated as 1/2 * sum_k (mu_k^2 + expm1(logvar_k) - logvar_k),
/// which keeps every term nonnegative in floating point.
inline Var kl_diag_gaussian(const GaussianPosterior& post) {
  const Tensor& mu = post.mu.value();
  const Tensor& lv = post.logvar.value();
  if (mu.shape() != lv.shape()) throw DimensionError("posterior mean/logvar shapes differ");
  if (mu.rank() == 0) throw DimensionError("posterior needs a latent axis");
  const std::size_t m = mu.shape().back();
  Tensor kl(Shape(mu.shape().begin(), mu.shape().end() - 1));
  for (std::size_t b = 0; b < kl.size(); ++b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t i = b * m + k;
      acc += mu[i] * mu[i] + (std::expm1(lv[i]) - lv[i]);
    }
    kl[b] = 0.5 * acc;
  }
  detail::require_finite(kl, "kl_diag_gaussian");
  return post.mu.tape()->record(std::move(kl), {post.mu, post.logvar}, [m](const BackwardArgs& args) {
    const Tensor& mu = args.input(0);
    const Tensor& lv = args.input(1);
    Tensor* gmu = args.grad_of(0);
    Tensor* glv = args.grad_of(1);
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double g = args.grad[i / m];
      if (gmu) (*gmu)[i] += g * mu[i];
      if (glv) (*glv)[i] += g * 0.5 * std::expm1(lv[i]);
    }
  });
}

}  // namespace envae
