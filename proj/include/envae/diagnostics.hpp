#pragma once

// Model diagnostics: sample-set energy distance, posterior pushforward
// variance, residual histograms, Lipschitz estimates, posterior variance
// statistics, agreement between the single-sample uncertainty term and the
// multi-sample pairwise term, decoder Jacobians, radial spectra, latent walks.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "envae/autodiff.hpp"
#include "envae/errors.hpp"
#include "envae/losses.hpp"
#include "envae/nets.hpp"
#include "envae/random.hpp"
#include "envae/tensor.hpp"

namespace envae {

/// Named scalar and array results. Metrics that could not be computed are
/// listed in `skipped` instead of being silently absent.
struct MetricReport {
  std::map<std::string, double> scalars;
  std::map<std::string, std::vector<double>> arrays;
  std::set<std::string> skipped;
  std::map<std::string, std::string> notes;

  bool has(const std::string& key) const { return scalars.count(key) || arrays.count(key) || skipped.count(key); }

  void validate() const {
    for (const auto& [k, v] : scalars)
      if (!std::isfinite(v)) throw NumericError("metric '" + k + "' is not finite");
    for (const auto& [k, a] : arrays)
      for (double v : a)
        if (!std::isfinite(v)) throw NumericError("metric array '" + k + "' has a non-finite entry");
  }

  nlohmann::json scalars_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : scalars) j[k] = v;
    j["skipped"] = skipped;
    if (!notes.empty()) j["notes"] = notes;
    return j;
  }
};

// ---------------------------------------------------------------------------
// Energy distance

namespace detail {

inline double pair_pow(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j, double beta) {
  const std::size_t n = a.dim(1);
  return pow_from_sq(norm_sq(&a[i * n], &b[j * n], n), beta);
}

/// Mean of ||u_i - v_j||^beta over all (i, j), diagonal included.
inline double mean_cross(const Tensor& u, const Tensor& v, double beta) {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.dim(0); ++i)
    for (std::size_t j = 0; j < v.dim(0); ++j) acc += pair_pow(u, i, v, j, beta);
  return acc / (static_cast<double>(u.dim(0)) * static_cast<double>(v.dim(0)));
}

/// Same as mean_cross(u, u) using symmetry.
inline double mean_within(const Tensor& u, double beta) {
  double acc = 0.0;
  const std::size_t n = u.dim(0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) acc += pair_pow(u, i, u, j, beta);
  return 2.0 * acc / (static_cast<double>(n) * static_cast<double>(n));
}

}  // namespace detail

/// Two-sample energy distance between row sets a [Na x n] and b [Nb x n]:
///   2 E||A - B||^beta - E||A - A'||^beta - E||B - B'||^beta
/// with every expectation taken over all index pairs (V-statistic), so the
/// value is >= 0 and exactly 0 for identical sets. Operands are put in a
/// canonical order first, which makes the result exactly symmetric.
inline double energy_distance(const Tensor& a, const Tensor& b, double beta = 1.0) {
  check_beta(beta);
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) throw DimensionError("energy_distance: shape mismatch");
  if (a.dim(0) < 2 || b.dim(0) < 2) throw ConfigError("energy_distance needs at least 2 points per set");
  const bool swap = std::lexicographical_compare(b.data().begin(), b.data().end(), a.data().begin(), a.data().end());
  const Tensor& u = swap ? b : a;
  const Tensor& v = swap ? a : b;
  return 2.0 * detail::mean_cross(u, v, beta) - detail::mean_within(u, beta) - detail::mean_within(v, beta);
}

// ---------------------------------------------------------------------------
// Sampling helpers

/// Decode `count` draws from the N(0, I) prior.
inline Tensor generate(const Params& params, std::size_t count, Rng& rng) {
  return decode(params, sample_standard_normal(rng, Shape{count, params.arch.latent_dim}).eps);
}

/// One posterior draw per row of x, decoded.
inline Tensor reconstruct(const Params& params, const Tensor& x, Rng& rng) {
  const auto [mu, logvar] = encode(params, x);
  Tensor z = mu;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += std::exp(0.5 * logvar[i]) * rng.normal();
  return decode(params, z);
}

/// Decode k posterior draws of a single example x [n]: returns [k x n].
inline Tensor posterior_decodes(const Params& params, const Tensor& x, std::size_t k, Rng& rng) {
  if (x.rank() != 1) throw DimensionError("expected a single example [n]");
  const auto [mu, logvar] = encode(params, x.reshaped(Shape{1, x.size()}));
  const std::size_t m = mu.size();
  Tensor z(Shape{k, m});
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < m; ++j) z[i * m + j] = mu[j] + std::exp(0.5 * logvar[j]) * rng.normal();
  return decode(params, z);
}

// ---------------------------------------------------------------------------
// Variance and residuals

inline constexpr std::size_t kDefaultVarianceDraws = 50;

/// Per-coordinate unbiased variance across k decoded posterior draws of x.
inline Tensor variance_map(const Params& params, const Tensor& x, std::size_t k, Rng& rng) {
  if (k < 2) throw ConfigError("variance_map needs k >= 2");
  const Tensor d = posterior_decodes(params, x, k, rng);
  const std::size_t n = d.dim(1);
  Tensor var(Shape{n});
  for (std::size_t c = 0; c < n; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < k; ++i) mean += d[i * n + c];
    mean /= static_cast<double>(k);
    double ss = 0.0;
    for (std::size_t i = 0; i < k; ++i) ss += (d[i * n + c] - mean) * (d[i * n + c] - mean);
    var[c] = ss / static_cast<double>(k - 1);
  }
  return var;
}

struct ResidualHistogram {
  std::vector<double> edges;  ///< bins + 1 edges spanning [-1, 1]
  std::vector<std::size_t> counts;
  std::size_t total = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double central_fraction = 0.0;  ///< share of residuals in [-0.2, 0.2]
};

/// Histogram of residuals on [-1, 1] (values outside are clamped into the
/// end bins).
inline ResidualHistogram histogram_residuals(std::span<const double> residuals, std::size_t bins) {
  if (bins < 3) throw ConfigError("residual histogram needs at least 3 bins");
  ResidualHistogram h;
  h.counts.assign(bins, 0);
  for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(-1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(bins));
  double sum = 0.0, sum_sq = 0.0;
  std::size_t central = 0;
  for (double r : residuals) {
    const double c = std::clamp(r, -1.0, 1.0);
    auto bin = static_cast<std::size_t>(std::floor((c + 1.0) * 0.5 * static_cast<double>(bins)));
    h.counts[std::min(bin, bins - 1)]++;
    sum += c;
    sum_sq += c * c;
    if (c >= -0.2 && c <= 0.2) ++central;
  }
  h.total = residuals.size();
  if (h.total) {
    const double n = static_cast<double>(h.total);
    h.mean = sum / n;
    h.stddev = std::sqrt(std::max(0.0, sum_sq / n - h.mean * h.mean));
    h.central_fraction = static_cast<double>(central) / n;
  }
  return h;
}

/// Residuals g(z_i) - x over k posterior draws per example, pooled over
/// coordinates. x is one example [n] or a batch [N x n], already in [0, 1].
inline ResidualHistogram residual_distribution(const Params& params, const Tensor& x, std::size_t k, std::size_t bins,
                                               Rng& rng) {
  if (k < 1) throw ConfigError("residual_distribution needs k >= 1");
  const Tensor batch = x.rank() == 1 ? x.reshaped(Shape{1, x.size()}) : x;
  std::vector<double> residuals;
  residuals.reserve(batch.size() * k);
  for (std::size_t r = 0; r < batch.dim(0); ++r) {
    const Tensor row = batch.row(r);
    const Tensor d = posterior_decodes(params, row, k, rng);
    for (std::size_t i = 0; i < d.size(); ++i) residuals.push_back(d[i] - row[i % row.size()]);
  }
  return histogram_residuals(residuals, bins);
}

// ---------------------------------------------------------------------------
// Lipschitz estimate

/// Maps a batch of inputs [N x d] to a batch of outputs [N x k].
using BatchMap = std::function<Tensor(const Tensor&)>;

/// max ||f(x_i) - f(x_j)|| / ||x_i - x_j|| over `pairs` random distinct index
/// pairs; pairs closer than 1e-9 are skipped. Pair draws do not depend on
/// skipping, so more pairs under the same seed cover a superset.
inline double lipschitz_estimate(const BatchMap& f, const Tensor& points, std::size_t pairs, Rng& rng) {
  if (points.rank() != 2 || points.dim(0) < 2) throw ConfigError("lipschitz_estimate needs at least 2 points");
  if (pairs < 1) throw ConfigError("lipschitz_estimate needs at least one pair");
  const Tensor out = f(points);
  if (out.rank() != 2 || out.dim(0) != points.dim(0)) throw DimensionError("lipschitz map must return one row per point");
  const std::size_t N = points.dim(0), d = points.dim(1), k = out.dim(1);
  double best = 0.0;
  bool any = false;
  for (std::size_t p = 0; p < pairs; ++p) {
    const std::size_t i = rng.index(N);
    std::size_t j = rng.index(N - 1);
    if (j >= i) ++j;
    const double dx = std::sqrt(detail::norm_sq(&points[i * d], &points[j * d], d));
    if (dx < 1e-9) continue;
    const double dy = std::sqrt(detail::norm_sq(&out[i * k], &out[j * k], k));
    best = std::max(best, dy / dx);
    any = true;
  }
  if (!any) throw NumericError("lipschitz_estimate: every sampled pair was degenerate");
  return best;
}

inline BatchMap decoder_map(const Params& params) {
  return [&params](const Tensor& z) { return decode(params, z); };
}

/// Encoder mean map x -> mu.
inline BatchMap encoder_map(const Params& params) {
  return [&params](const Tensor& x) { return encode(params, x).first; };
}

/// Mean over examples and latent dimensions of the posterior variance exp(logvar).
inline double latent_variance_mean(const Params& params, const Tensor& x) {
  const Tensor logvar = encode(params, x).second;
  double acc = 0.0;
  for (double v : logvar.data()) acc += std::exp(v);
  return acc / static_cast<double>(logvar.size());
}

// ---------------------------------------------------------------------------
// Uncertainty-term correlation

/// Pearson correlation; throws when either series has zero variance.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ConfigError("pearson needs two equal series of length >= 2");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) throw NumericError("pearson: degenerate (constant) series");
  return sab / std::sqrt(saa * sbb);
}

struct CorrelationResult {
  double pearson_r = 0.0;
  double r_squared = 0.0;
  std::vector<double> reference;  ///< pairwise dispersion term with m_ref samples
  std::vector<double> surrogate;  ///< single-sample uncertainty term, averaged over draws
};

inline constexpr std::size_t kDefaultCorrelationReference = 100;
inline constexpr std::size_t kDefaultCorrelationDraws = 32;

/// Per point: reference = 1/(2 m(m-1)) sum_{i!=j} ||g(z_i) - g(z_j)||^beta
/// with m = m_ref posterior draws; surrogate = 1/2 ||g(mu + sqrt2 sigma eps)
/// - g(mu)||^beta averaged over `draws` draws of eps. Returns Pearson r of
/// surrogate against reference and R^2 = r^2.
inline CorrelationResult uncertainty_term_correlation(const Params& params, const Tensor& points, std::size_t m_ref,
                                                      Rng& rng, double beta = 1.0,
                                                      std::size_t draws = kDefaultCorrelationDraws) {
  if (m_ref < 2) throw ConfigError("uncertainty_term_correlation needs m_ref >= 2");
  if (draws < 1) throw ConfigError("uncertainty_term_correlation needs draws >= 1");
  check_beta(beta);
  const std::size_t N = points.dim(0);
  const std::size_t m = params.arch.latent_dim;
  const auto [mu, logvar] = encode(params, points);
  CorrelationResult res;
  res.reference.resize(N);
  res.surrogate.resize(N);

  // Reference: m_ref draws for every point, decoded as [m_ref * N x m].
  Tensor z(Shape{m_ref * N, m});
  for (std::size_t i = 0; i < m_ref; ++i)
    for (std::size_t b = 0; b < N; ++b)
      for (std::size_t k = 0; k < m; ++k)
        z[(i * N + b) * m + k] = mu[b * m + k] + std::exp(0.5 * logvar[b * m + k]) * rng.normal();
  {
    Tape tape;
    const Tensor dec = decode(params, z);
    const DecodedSamples ds{tape.constant(dec.reshaped(Shape{m_ref, N, params.arch.input_dim}))};
    const Tensor pair = mean_pairwise_distance(ds, beta).value();
    for (std::size_t b = 0; b < N; ++b) res.reference[b] = 0.5 * pair[b];
  }

  // Surrogate: g(mu) once, then `draws` widened draws.
  const Tensor g_mu = decode(params, mu);
  const std::size_t n = g_mu.dim(1);
  Tensor zw(Shape{draws * N, m});
  for (std::size_t t = 0; t < draws; ++t)
    for (std::size_t b = 0; b < N; ++b)
      for (std::size_t k = 0; k < m; ++k)
        zw[(t * N + b) * m + k] =
            mu[b * m + k] + std::sqrt(2.0) * std::exp(0.5 * logvar[b * m + k]) * rng.normal();
  const Tensor g_w = decode(params, zw);
  for (std::size_t b = 0; b < N; ++b) {
    double acc = 0.0;
    for (std::size_t t = 0; t < draws; ++t)
      acc += 0.5 * detail::pow_from_sq(detail::norm_sq(&g_w[(t * N + b) * n], &g_mu[b * n], n), beta);
    res.surrogate[b] = acc / static_cast<double>(draws);
  }
  res.pearson_r = pearson(res.reference, res.surrogate);
  res.r_squared = res.pearson_r * res.pearson_r;
  return res;
}

// ---------------------------------------------------------------------------
// Jacobian

/// d g / d z at a single latent point, [n x m].
struct JacobianMatrix {
  Tensor matrix;
};

/// Reverse mode: one forward pass, then one backward sweep per output coordinate.
inline JacobianMatrix decoder_jacobian(const Params& params, const Tensor& z) {
  const std::size_t m = params.arch.latent_dim;
  const std::size_t n = params.arch.input_dim;
  if (z.size() != m) throw DimensionError("decoder_jacobian: latent point must have " + std::to_string(m) + " entries");
  Tape tape;
  const BoundParams b = bind(tape, params, false);
  Var zv = tape.variable(z.reshaped(Shape{1, m}));
  Var out = decoder_forward(b, zv);
  JacobianMatrix J{Tensor(Shape{n, m})};
  for (std::size_t r = 0; r < n; ++r) {
    Tensor onehot(Shape{1, n}, 0.0);
    onehot[r] = 1.0;
    const Tensor row = backward(tape, sum(mul(out, tape.constant(onehot)))).wrt(zv);
    for (std::size_t c = 0; c < m; ++c) J.matrix[r * m + c] = row[c];
  }
  return J;
}

/// ||g(z + delta) - g(z) - J delta||.
inline double taylor_remainder(const Params& params, const Tensor& z, const Tensor& delta, const JacobianMatrix& J) {
  const std::size_t m = z.size();
  const std::size_t n = J.matrix.dim(0);
  Tensor zd = z;
  for (std::size_t i = 0; i < m; ++i) zd[i] += delta[i];
  const Tensor g0 = decode(params, z.reshaped(Shape{1, m}));
  const Tensor g1 = decode(params, zd.reshaped(Shape{1, m}));
  double sq = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double lin = 0.0;
    for (std::size_t c = 0; c < m; ++c) lin += J.matrix[r * m + c] * delta[c];
    const double e = g1[r] - g0[r] - lin;
    sq += e * e;
  }
  return std::sqrt(sq);
}

// ---------------------------------------------------------------------------
// Spectrum

/// Radially averaged log spectrum of square images: 2-D DFT magnitude with
/// zero frequency centered, log10(1 + |F|) averaged over rings of integer
/// radius 0..floor(h/2) and over all images.
inline std::vector<double> radial_spectrum(std::span<const Tensor> images) {
  if (images.empty()) throw ConfigError("radial_spectrum needs at least one image");
  const std::size_t h = images.front().rank() == 2 ? images.front().dim(0) : 0;
  for (const auto& img : images) {
    if (img.rank() != 2 || img.dim(0) != img.dim(1)) throw DimensionError("radial_spectrum needs square [h x h] images");
    if (img.dim(0) != h) throw DimensionError("radial_spectrum images differ in size");
  }
  if (h < 4) throw DimensionError("radial_spectrum needs images of at least 4x4");
  const std::size_t rings = h / 2 + 1;
  std::vector<double> sum(rings, 0.0);
  std::vector<std::size_t> count(rings, 0);

  using cd = std::complex<double>;
  std::vector<cd> twiddle(h);
  for (std::size_t k = 0; k < h; ++k) twiddle[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(h));

  std::vector<cd> rows(h * h), full(h * h);
  for (const auto& img : images) {
    // DFT along columns (x) for each row, then along rows (y).
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t u = 0; u < h; ++u) {
        cd acc = 0.0;
        for (std::size_t x = 0; x < h; ++x) acc += img[y * h + x] * twiddle[(u * x) % h];
        rows[y * h + u] = acc;
      }
    for (std::size_t v = 0; v < h; ++v)
      for (std::size_t u = 0; u < h; ++u) {
        cd acc = 0.0;
        for (std::size_t y = 0; y < h; ++y) acc += rows[y * h + u] * twiddle[(v * y) % h];
        full[v * h + u] = acc;
      }
    for (std::size_t v = 0; v < h; ++v)
      for (std::size_t u = 0; u < h; ++u) {
        const double fu = u <= h / 2 ? static_cast<double>(u) : static_cast<double>(u) - static_cast<double>(h);
        const double fv = v <= h / 2 ? static_cast<double>(v) : static_cast<double>(v) - static_cast<double>(h);
        const auto r = static_cast<std::size_t>(std::lround(std::sqrt(fu * fu + fv * fv)));
        if (r >= rings) continue;
        sum[r] += std::log10(1.0 + std::abs(full[v * h + u]));
        count[r]++;
      }
  }
  std::vector<double> curve(rings);
  for (std::size_t r = 0; r < rings; ++r) curve[r] = count[r] ? sum[r] / static_cast<double>(count[r]) : 0.0;
  return curve;
}

// ---------------------------------------------------------------------------
// Latent walk

/// Decode z(t) = z1 + t (z2 - z1) at t = i / (steps + 1), i = 0..steps+1.
/// Each point is decoded on its own so endpoints match a direct decode of
/// z1 and z2 bit for bit. Returns [(steps + 2) x n].
inline Tensor latent_walk(const Params& params, const Tensor& z1, const Tensor& z2, std::size_t steps) {
  const std::size_t m = params.arch.latent_dim;
  if (z1.size() != m || z2.size() != m) throw DimensionError("latent_walk: endpoints must have latent_dim entries");
  std::vector<Tensor> outs;
  for (std::size_t i = 0; i <= steps + 1; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(steps + 1);
    Tensor z(Shape{1, m});
    for (std::size_t k = 0; k < m; ++k) z[k] = i == steps + 1 ? z2[k] : z1[k] + t * (z2[k] - z1[k]);
    outs.push_back(decode(params, z).reshaped(Shape{params.arch.input_dim}));
  }
  return stack_rows(outs);
}

}  // namespace envae
