#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "envae/autodiff.hpp"
#include "envae/data.hpp"
#include "envae/errors.hpp"
#include "envae/losses.hpp"
#include "envae/nets.hpp"
#include "envae/random.hpp"

namespace envae {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("adam eps must be positive");
  }

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// First/second moment estimates per parameter plus the step counter.
struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::uint64_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update of every parameter in `params`.
inline void adam_step(Params& params, const std::map<std::string, Tensor>& grads, AdamState& state,
                      const AdamConfig& cfg) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : params.tensors) {
    auto g_it = grads.find(name);
    if (g_it == grads.end()) throw ContractError("adam_step: missing gradient for '" + name + "'");
    const Tensor& g = g_it->second;
    if (g.shape() != p.shape()) throw DimensionError("adam_step: gradient shape mismatch for '" + name + "'");
    auto& m = state.m.try_emplace(name, p.shape(), 0.0).first->second;
    auto& v = state.v.try_emplace(name, p.shape(), 0.0).first->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::size_t log_every = 1;
  bool log_timing = false;  ///< write wall-clock ms into the trace CSV
  LossConfig loss;
  ModelArch arch;

  void validate() const {
    if (epochs == 0 || batch_size == 0 || log_every == 0) throw ConfigError("epochs, batch_size, log_every must be positive");
    adam.validate();
    loss.validate();
    arch.validate();
  }
};

struct StepRecord {
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  double total = 0.0;
  double recon = 0.0;
  double dispersion = 0.0;
  double kl = 0.0;
  double ms = 0.0;
};

struct TrainTrace {
  std::vector<StepRecord> steps;
  std::vector<double> epoch_ms;  ///< wall-clock per epoch run in this call

  /// CSV with header step,epoch,total,recon,dispersion,kl,ms. Losses are
  /// printed with round-trip precision. Wall-clock is written only when
  /// `with_timing`; otherwise the ms column is 0 so the file is a pure
  /// function of (seed, config, data).
  void write_csv(std::ostream& os, bool with_timing) const {
    os << "step,epoch,total,recon,dispersion,kl,ms\n";
    char buf[512];
    for (const auto& r : steps) {
      std::snprintf(buf, sizeof buf, "%llu,%zu,%.17g,%.17g,%.17g,%.17g,%.6g\n",
                    static_cast<unsigned long long>(r.step), r.epoch, r.total, r.recon, r.dispersion, r.kl,
                    with_timing ? r.ms : 0.0);
      os << buf;
    }
  }

  /// Median wall-clock epoch time over this call's epochs (0 when none ran).
  double median_epoch_ms() const {
    if (epoch_ms.empty()) return 0.0;
    std::vector<double> t = epoch_ms;
    std::sort(t.begin(), t.end());
    const std::size_t n = t.size();
    return n % 2 ? t[n / 2] : 0.5 * (t[n / 2 - 1] + t[n / 2]);
  }
};

/// Everything needed to resume training bit-exactly.
struct Checkpoint {
  std::uint32_t version = 1;
  TrainConfig config;
  Params params;
  AdamState adam;
  std::uint64_t step = 0;
  std::size_t epoch = 0;  ///< completed epochs
  std::string rng_state;
  std::string metadata = "{}";  ///< free-form JSON object carried through save/load
};

/// Train from scratch, or continue from `resume` up to config.epochs total
/// epochs. Single-threaded unless ENVAE_THREADS is set; the parallel kernels
/// partition work per example, so results stay bitwise identical.
inline std::pair<Checkpoint, TrainTrace> train(const TrainConfig& cfg, const Dataset& data,
                                               const Checkpoint* resume = nullptr) {
  cfg.validate();
  if (data.dim() != cfg.arch.input_dim) {
    throw DimensionError("dataset dimension " + std::to_string(data.dim()) + " does not match arch input_dim " +
                         std::to_string(cfg.arch.input_dim));
  }
  Checkpoint ck;
  ck.config = cfg;
  Rng rng(cfg.seed);
  if (resume) {
    if (!(resume->params.arch == cfg.arch)) throw ConfigError("resume: architecture differs from config");
    ck.params = resume->params;
    ck.adam = resume->adam;
    ck.step = resume->step;
    ck.epoch = resume->epoch;
    ck.metadata = resume->metadata;
    rng = Rng::deserialize(resume->rng_state);
  } else {
    ck.params = init_params(cfg.arch, rng);
  }

  TrainTrace trace;
  const std::size_t n = data.size();
  const std::size_t dim = data.dim();
  std::vector<std::size_t> order(n);
  using Clock = std::chrono::steady_clock;
  for (; ck.epoch < cfg.epochs; ++ck.epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng.engine());
    const auto epoch_start = Clock::now();
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const auto t0 = Clock::now();
      const std::size_t bs = std::min(cfg.batch_size, n - start);
      Tensor batch(Shape{bs, dim});
      for (std::size_t r = 0; r < bs; ++r) {
        std::copy_n(&data.x[order[start + r] * dim], dim, &batch[r * dim]);
      }
      Tape tape;
      const BoundParams bound = bind(tape, ck.params);
      LossTerms terms;
      try {
        terms = compute_loss(bound, tape.constant(std::move(batch)), cfg.loss, rng);
      } catch (const NumericError& e) {
        throw NumericError("non-finite loss at step " + std::to_string(ck.step + 1) + " (epoch " +
                           std::to_string(ck.epoch) + "): " + e.what());
      }
      const auto grads = collect_grads(backward(tape, terms.total), bound);
      adam_step(ck.params, grads, ck.adam, cfg.adam);
      ++ck.step;
      if (ck.step % cfg.log_every == 0) {
        const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
        trace.steps.push_back({ck.step, ck.epoch, terms.total.item(), terms.recon, terms.dispersion, terms.kl, ms});
      }
    }
    trace.epoch_ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - epoch_start).count());
  }
  ck.rng_state = rng.serialize();
  return {std::move(ck), std::move(trace)};
}

}  // namespace envae
