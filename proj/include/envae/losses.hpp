#pragma once

// Training objectives. Every loss returns its batch-mean terms alongside the
// differentiable total, with total = recon - dispersion + alpha * kl:
//
//   vanilla  recon = ||g(z) - x||^2,              dispersion = 0
//   l1       recon = ||g(z) - x||_1,              dispersion = 0
//   envae    recon = 1/M sum_i ||x*_i - x||^b,     dispersion = 1/(2M(M-1)) sum_{i!=j} ||x*_i - x*_j||^b
//   fenvae   recon = ||g(z*) - x||^b,              dispersion = 1/2 ||g(mu + sqrt2 (z* - mu)) - g(mu)||^b

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "envae/autodiff.hpp"
#include "envae/errors.hpp"
#include "envae/nets.hpp"
#include "envae/parallel.hpp"
#include "envae/random.hpp"
#include "envae/tensor.hpp"

namespace envae {

enum class LossVariant { vanilla, l1, envae, fenvae };

inline std::string to_string(LossVariant v) {
  switch (v) {
    case LossVariant::vanilla: return "vanilla";
    case LossVariant::l1: return "l1";
    case LossVariant::envae: return "envae";
    case LossVariant::fenvae: return "fenvae";
  }
  return "vanilla";
}

inline LossVariant parse_variant(const std::string& s) {
  if (s == "vanilla") return LossVariant::vanilla;
  if (s == "l1") return LossVariant::l1;
  if (s == "envae") return LossVariant::envae;
  if (s == "fenvae") return LossVariant::fenvae;
  throw ConfigError("unknown loss variant '" + s + "'");
}

struct LossConfig {
  LossVariant variant = LossVariant::envae;
  double beta = 1.0;
  double alpha = 1.0;
  std::size_t m_samples = 10;
  bool share_noise = true;

  void validate() const {
    check_beta(beta);
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
    if (variant == LossVariant::envae && m_samples < 2) {
      throw ConfigError("m_samples must be >= 2 for envae (pairwise term undefined)");
    }
  }

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

struct LossTerms {
  Var total;  ///< scalar on the tape
  double recon = 0.0;
  double dispersion = 0.0;
  double kl = 0.0;
  std::size_t decoded_rows = 0;  ///< decoder evaluations, counted per example row
};

/// M decoded realizations per example, laid out [M x B x n].
struct DecodedSamples {
  Var samples;
};

namespace detail {

inline void check_samples(const Tensor& s, const Tensor* x) {
  if (s.rank() != 3) throw DimensionError("decoded samples must be [M x B x n], got " + to_string(s.shape()));
  if (x && (x->rank() != 2 || x->dim(0) != s.dim(1) || x->dim(1) != s.dim(2))) {
    throw DimensionError("data " + to_string(x->shape()) + " does not match samples " + to_string(s.shape()));
  }
}

inline double norm_sq(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double d = a[k] - b[k];
    acc += d * d;
  }
  return acc;
}

/// d||v||^beta / dv = coef * v, with coef zero at the origin.
inline double grad_coef(double sq, double beta) {
  const double norm = std::sqrt(sq);
  if (norm <= kNormEpsilon) return 0.0;
  return grad_factor(norm, beta);
}

}  // namespace detail

/// Per example: 1/M sum_i ||x*_i - x||^beta. Returns [B].
inline Var mean_distance_to_data(const DecodedSamples& ds, Var x, double beta) {
  check_beta(beta);
  const Tensor& s = ds.samples.value();
  detail::check_samples(s, &x.value());
  const std::size_t M = s.dim(0), B = s.dim(1), n = s.dim(2);
  const Tensor& xv = x.value();
  Tensor out(Shape{B});
  parallel_for(B, [&](std::size_t b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < M; ++i)
      acc += detail::pow_from_sq(detail::norm_sq(&s[(i * B + b) * n], &xv[b * n], n), beta);
    out[b] = acc / static_cast<double>(M);
  });
  return x.tape()->record(std::move(out), {ds.samples, x}, [M, B, n, beta](const BackwardArgs& args) {
    const Tensor& s = args.input(0);
    const Tensor& xv = args.input(1);
    Tensor* gs = args.grad_of(0);
    Tensor* gx = args.grad_of(1);
    parallel_for(B, [&](std::size_t b) {
      const double gb = args.grad[b] / static_cast<double>(M);
      for (std::size_t i = 0; i < M; ++i) {
        const double* si = &s[(i * B + b) * n];
        const double* xb = &xv[b * n];
        const double c = gb * detail::grad_coef(detail::norm_sq(si, xb, n), beta);
        if (c == 0.0) continue;
        for (std::size_t k = 0; k < n; ++k) {
          const double d = c * (si[k] - xb[k]);
          if (gs) (*gs)[(i * B + b) * n + k] += d;
          if (gx) (*gx)[b * n + k] -= d;
        }
      }
    });
  });
}

/// Per example: 1/(M(M-1)) sum_{i != j} ||x*_i - x*_j||^beta, summed over
/// ordered pairs i < j and doubled. O(M^2) per example. Returns [B].
inline Var mean_pairwise_distance(const DecodedSamples& ds, double beta) {
  check_beta(beta);
  const Tensor& s = ds.samples.value();
  detail::check_samples(s, nullptr);
  const std::size_t M = s.dim(0), B = s.dim(1), n = s.dim(2);
  if (M < 2) throw ConfigError("pairwise term undefined for fewer than 2 samples");
  const double norm = 2.0 / (static_cast<double>(M) * static_cast<double>(M - 1));
  Tensor out(Shape{B});
  parallel_for(B, [&](std::size_t b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = i + 1; j < M; ++j)
        acc += detail::pow_from_sq(detail::norm_sq(&s[(i * B + b) * n], &s[(j * B + b) * n], n), beta);
    out[b] = norm * acc;
  });
  return ds.samples.tape()->record(std::move(out), {ds.samples}, [M, B, n, beta, norm](const BackwardArgs& args) {
    Tensor* gs = args.grad_of(0);
    if (!gs) return;
    const Tensor& s = args.input(0);
    parallel_for(B, [&](std::size_t b) {
      const double gb = args.grad[b] * norm;
      for (std::size_t i = 0; i < M; ++i) {
        const double* si = &s[(i * B + b) * n];
        for (std::size_t j = i + 1; j < M; ++j) {
          const double* sj = &s[(j * B + b) * n];
          const double c = gb * detail::grad_coef(detail::norm_sq(si, sj, n), beta);
          if (c == 0.0) continue;
          for (std::size_t k = 0; k < n; ++k) {
            const double d = c * (si[k] - sj[k]);
            (*gs)[(i * B + b) * n + k] += d;
            (*gs)[(j * B + b) * n + k] -= d;
          }
        }
      }
    });
  });
}

/// Monte-Carlo energy score per example:
///   1/M sum_i ||x*_i - x||^beta - 1/(2M(M-1)) sum_{i != j} ||x*_i - x*_j||^beta.
inline Var energy_score_mc(const DecodedSamples& ds, Var x, double beta) {
  if (ds.samples.value().rank() == 3 && ds.samples.value().dim(0) < 2) {
    throw ConfigError("energy score needs M >= 2 samples: pairwise term undefined");
  }
  return sub(mean_distance_to_data(ds, x, beta), scale(mean_pairwise_distance(ds, beta), 0.5));
}

namespace detail {

inline LossTerms assemble(Var recon, std::optional<Var> dispersion, Var kl, double alpha, std::size_t rows) {
  Var r = mean(recon);
  Var k = mean(kl);
  LossTerms t;
  t.recon = r.item();
  t.kl = k.item();
  Var total = r;
  if (dispersion) {
    Var d = mean(*dispersion);
    t.dispersion = d.item();
    total = sub(total, d);
  }
  t.total = add(total, scale(k, alpha));
  t.decoded_rows = rows;
  if (!std::isfinite(t.total.item())) throw NumericError("loss is not finite");
  return t;
}

inline void check_batch(const BoundParams& p, Var x) {
  if (x.value().rank() != 2 || x.value().dim(1) != p.arch.input_dim) {
    throw DimensionError("data batch must be [B x " + std::to_string(p.arch.input_dim) + "], got " +
                         to_string(x.shape()));
  }
}

inline Shape latent_shape(const BoundParams& p, Var x) { return Shape{x.value().dim(0), p.arch.latent_dim}; }

}  // namespace detail

/// Full energy-score objective with M posterior draws per example, decoded in
/// one batched pass.
inline LossTerms envae_loss(const BoundParams& p, Var x, const LossConfig& cfg, std::span<const NoiseDraw> noise) {
  cfg.validate();
  detail::check_batch(p, x);
  if (noise.size() != cfg.m_samples) throw ContractError("envae_loss: need one noise draw per sample");
  const std::size_t B = x.value().dim(0);
  const GaussianPosterior q = encoder_forward(p, x);
  std::vector<Var> zs;
  zs.reserve(noise.size());
  for (const auto& e : noise) zs.push_back(reparameterize(q, e));
  Var decoded = decoder_forward(p, concat_rows(zs));
  const DecodedSamples ds{reshape(decoded, Shape{cfg.m_samples, B, p.arch.input_dim})};
  Var recon = mean_distance_to_data(ds, x, cfg.beta);
  Var disp = scale(mean_pairwise_distance(ds, cfg.beta), 0.5);
  return detail::assemble(recon, disp, kl_diag_gaussian(q), cfg.alpha, cfg.m_samples * B);
}

inline LossTerms envae_loss(const BoundParams& p, Var x, const LossConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<NoiseDraw> noise;
  noise.reserve(cfg.m_samples);
  for (std::size_t i = 0; i < cfg.m_samples; ++i) noise.push_back(sample_standard_normal(rng, detail::latent_shape(p, x)));
  return envae_loss(p, x, cfg, noise);
}

/// Single-sample linearized objective. `eps` builds z* = mu + sigma * eps.
/// With `eps_uncertainty` set, the uncertainty term uses its own draw
/// z' = mu + sigma * eps_uncertainty in place of z*. Three decoder
/// evaluations per example, batched: g(z*), g(mu + sqrt2 (z* - mu)), g(mu).
inline LossTerms fenvae_loss(const BoundParams& p, Var x, const LossConfig& cfg, const NoiseDraw& eps,
                             const NoiseDraw* eps_uncertainty = nullptr) {
  cfg.validate();
  detail::check_batch(p, x);
  const std::size_t B = x.value().dim(0);
  const GaussianPosterior q = encoder_forward(p, x);
  Var z_star = reparameterize(q, eps);
  Var z_pert = eps_uncertainty ? reparameterize(q, *eps_uncertainty) : z_star;
  Var z_wide = add(q.mu, scale(sub(z_pert, q.mu), std::sqrt(2.0)));
  Var decoded = decoder_forward(p, concat_rows({z_star, z_wide, q.mu}));
  Var g_star = slice_rows(decoded, 0, B);
  Var g_wide = slice_rows(decoded, B, 2 * B);
  Var g_mean = slice_rows(decoded, 2 * B, 3 * B);
  Var recon = pow_norm(sub(g_star, x), cfg.beta);
  Var disp = scale(pow_norm(sub(g_wide, g_mean), cfg.beta), 0.5);
  return detail::assemble(recon, disp, kl_diag_gaussian(q), cfg.alpha, 3 * B);
}

inline LossTerms fenvae_loss(const BoundParams& p, Var x, const LossConfig& cfg, Rng& rng) {
  const NoiseDraw eps = sample_standard_normal(rng, detail::latent_shape(p, x));
  if (cfg.share_noise) return fenvae_loss(p, x, cfg, eps);
  const NoiseDraw eps2 = sample_standard_normal(rng, detail::latent_shape(p, x));
  return fenvae_loss(p, x, cfg, eps, &eps2);
}

/// Gaussian-likelihood negative ELBO up to constants: ||g(z) - x||^2 + alpha * KL.
inline LossTerms vanilla_elbo_loss(const BoundParams& p, Var x, const LossConfig& cfg, const NoiseDraw& eps) {
  cfg.validate();
  detail::check_batch(p, x);
  const GaussianPosterior q = encoder_forward(p, x);
  Var recon = pow_norm(sub(decoder_forward(p, reparameterize(q, eps)), x), 2.0);
  return detail::assemble(recon, std::nullopt, kl_diag_gaussian(q), cfg.alpha, x.value().dim(0));
}

inline LossTerms vanilla_elbo_loss(const BoundParams& p, Var x, const LossConfig& cfg, Rng& rng) {
  return vanilla_elbo_loss(p, x, cfg, sample_standard_normal(rng, detail::latent_shape(p, x)));
}

/// ||g(z) - x||_1 + alpha * KL.
inline LossTerms l1_loss(const BoundParams& p, Var x, const LossConfig& cfg, const NoiseDraw& eps) {
  cfg.validate();
  detail::check_batch(p, x);
  const GaussianPosterior q = encoder_forward(p, x);
  Var recon = sum_last(abs(sub(decoder_forward(p, reparameterize(q, eps)), x)));
  return detail::assemble(recon, std::nullopt, kl_diag_gaussian(q), cfg.alpha, x.value().dim(0));
}

inline LossTerms l1_loss(const BoundParams& p, Var x, const LossConfig& cfg, Rng& rng) {
  return l1_loss(p, x, cfg, sample_standard_normal(rng, detail::latent_shape(p, x)));
}

/// Dispatch on cfg.variant.
inline LossTerms compute_loss(const BoundParams& p, Var x, const LossConfig& cfg, Rng& rng) {
  switch (cfg.variant) {
    case LossVariant::vanilla: return vanilla_elbo_loss(p, x, cfg, rng);
    case LossVariant::l1: return l1_loss(p, x, cfg, rng);
    case LossVariant::envae: return envae_loss(p, x, cfg, rng);
    case LossVariant::fenvae: return fenvae_loss(p, x, cfg, rng);
  }
  throw ConfigError("unknown loss variant");
}

}  // namespace envae
