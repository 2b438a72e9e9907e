#pragma once

// Command implementations behind the envae executable. Each command takes
// parsed options, writes into an output directory and returns the process
// exit code: 0 success, 2 usage or configuration error, 3 numeric failure,
// 1 anything else (I/O).

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "envae/checkpoint.hpp"
#include "envae/config_json.hpp"
#include "envae/data.hpp"
#include "envae/diagnostics.hpp"
#include "envae/errors.hpp"
#include "envae/train.hpp"

namespace envae::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kNumeric = 3 };

struct DataConfig {
  std::string kind = "gmm2d";  ///< gmm2d | bars | idx
  std::size_t components = 8;
  double spread = 2.0;
  std::size_t n_points = 0;  ///< 0: kind default (gmm2d 2000, bars 4000, idx all)
  std::size_t height = 8;
  std::size_t width = 8;
  std::string images_path;
  std::string labels_path;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
};

struct EvalConfig {
  std::size_t gen_samples = 1000;
  std::size_t variance_k = kDefaultVarianceDraws;
  std::size_t residual_points = 100;
  std::size_t residual_k = 10;
  std::size_t residual_bins = 41;
  std::size_t lipschitz_pairs = 1000;
  std::size_t lipschitz_points = 1000;
  std::string lipschitz_target = "decoder";  ///< decoder | encoder
  std::size_t corr_points = 200;
  std::size_t corr_m_ref = kDefaultCorrelationReference;
  std::uint64_t seed = 1;
};

struct RunConfig {
  DataConfig data;
  TrainConfig train;  ///< also carries arch and loss
  EvalConfig eval;
  bool input_dim_given = false;
  bool output_activation_given = false;
};

inline Json to_json(const DataConfig& d) {
  return Json{{"kind", d.kind},           {"components", d.components},   {"spread", d.spread},
              {"n_points", d.n_points},   {"height", d.height},           {"width", d.width},
              {"images_path", d.images_path}, {"labels_path", d.labels_path}, {"seed", d.seed},
              {"test_fraction", d.test_fraction}};
}

inline Json to_json(const EvalConfig& e) {
  return Json{{"gen_samples", e.gen_samples},
              {"variance_k", e.variance_k},
              {"residual_points", e.residual_points},
              {"residual_k", e.residual_k},
              {"residual_bins", e.residual_bins},
              {"lipschitz_pairs", e.lipschitz_pairs},
              {"lipschitz_points", e.lipschitz_points},
              {"lipschitz_target", e.lipschitz_target},
              {"corr_points", e.corr_points},
              {"corr_m_ref", e.corr_m_ref},
              {"seed", e.seed}};
}

inline Json to_json(const RunConfig& r) {
  return Json{{"data", to_json(r.data)},
              {"arch", to_json(r.train.arch)},
              {"loss", to_json(r.train.loss)},
              {"train", train_section_to_json(r.train)},
              {"eval", to_json(r.eval)}};
}

inline RunConfig run_config_from_json(const Json& j) {
  RunConfig r;
  StrictObject top(j, "config");
  if (const Json* d = top.sub("data")) {
    StrictObject o(*d, "data");
    o.get("kind", r.data.kind);
    o.get("components", r.data.components);
    o.get("spread", r.data.spread);
    o.get("n_points", r.data.n_points);
    o.get("height", r.data.height);
    o.get("width", r.data.width);
    o.get("images_path", r.data.images_path);
    o.get("labels_path", r.data.labels_path);
    o.get("seed", r.data.seed);
    o.get("test_fraction", r.data.test_fraction);
    o.finish();
    if (r.data.kind != "gmm2d" && r.data.kind != "bars" && r.data.kind != "idx") {
      throw ConfigError("data.kind must be gmm2d, bars or idx (got '" + r.data.kind + "')");
    }
  }
  if (const Json* a = top.sub("arch")) {
    r.train.arch = arch_from_json(*a);
    r.input_dim_given = a->contains("input_dim");
    r.output_activation_given = a->contains("output_activation");
  }
  if (const Json* l = top.sub("loss")) r.train.loss = loss_from_json(*l);
  if (const Json* t = top.sub("train")) {
    StrictObject o(*t, "train");
    train_section_from_json(o, r.train);
    o.finish();
  }
  if (const Json* e = top.sub("eval")) {
    StrictObject o(*e, "eval");
    o.get("gen_samples", r.eval.gen_samples);
    o.get("variance_k", r.eval.variance_k);
    o.get("residual_points", r.eval.residual_points);
    o.get("residual_k", r.eval.residual_k);
    o.get("residual_bins", r.eval.residual_bins);
    o.get("lipschitz_pairs", r.eval.lipschitz_pairs);
    o.get("lipschitz_points", r.eval.lipschitz_points);
    o.get("lipschitz_target", r.eval.lipschitz_target);
    o.get("corr_points", r.eval.corr_points);
    o.get("corr_m_ref", r.eval.corr_m_ref);
    o.get("seed", r.eval.seed);
    o.finish();
    if (r.eval.lipschitz_target != "decoder" && r.eval.lipschitz_target != "encoder") {
      throw ConfigError("eval.lipschitz_target must be decoder or encoder");
    }
    if (r.eval.gen_samples < 2) throw ConfigError("eval.gen_samples must be >= 2");
  }
  top.finish();
  return r;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
}

/// Build the dataset and fill data-dependent defaults (n_points, input_dim,
/// sigmoid output for images). Validates the final configuration.
inline Dataset load_data(RunConfig& r) {
  Dataset d;
  if (r.data.kind == "gmm2d") {
    if (r.data.n_points == 0) r.data.n_points = 2000;
    d = gen_gmm2d(r.data.components, r.data.spread, r.data.n_points, r.data.seed);
  } else if (r.data.kind == "bars") {
    if (r.data.n_points == 0) r.data.n_points = 4000;
    d = gen_bars(r.data.height, r.data.width, r.data.n_points, r.data.seed);
  } else {
    if (r.data.images_path.empty()) throw ConfigError("data.images_path is required for kind idx");
    std::optional<std::string> labels;
    if (!r.data.labels_path.empty()) labels = r.data.labels_path;
    try {
      d = load_idx(r.data.images_path, labels);
    } catch (const IdxError& e) {
      throw ConfigError(std::string("cannot load IDX data: ") + e.what());
    }
    if (r.data.n_points == 0 || r.data.n_points > d.size()) r.data.n_points = d.size();
    if (r.data.n_points < d.size()) {
      std::vector<std::size_t> idx(r.data.n_points);
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      d = d.subset(idx);
    }
    r.data.height = d.height;
    r.data.width = d.width;
  }
  if (!r.input_dim_given) r.train.arch.input_dim = d.dim();
  if (!r.output_activation_given && d.kind == DataKind::image) r.train.arch.output_activation = Activation::sigmoid;
  if (r.train.arch.input_dim != d.dim()) {
    throw ConfigError("arch.input_dim " + std::to_string(r.train.arch.input_dim) + " does not match data dimension " +
                      std::to_string(d.dim()));
  }
  r.train.validate();
  return d;
}

inline Json data_metadata(const Dataset& d, const RunConfig& r) {
  return Json{{"dataset", d.name},
              {"kind", d.kind == DataKind::image ? "image" : "vector"},
              {"height", d.height},
              {"width", d.width},
              {"channels", d.channels},
              {"norm_min", d.norm_min},
              {"norm_max", d.norm_max},
              {"run_config", to_json(r)}};
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Map exceptions onto the exit-code contract.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const DimensionError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

// ---------------------------------------------------------------------------
// train

struct TrainResult {
  Checkpoint checkpoint;
  TrainTrace trace;
};

inline TrainResult train_run(const RunConfig& r, const Dataset& train_set, const Json& metadata, const fs::path& out) {
  fs::create_directories(out);
  auto [ck, trace] = train(r.train, train_set);
  ck.metadata = metadata.dump();
  save_checkpoint(ck, (out / "checkpoint.bin").string());
  std::ostringstream csv;
  trace.write_csv(csv, r.train.log_timing);
  write_text(out / "trace.csv", csv.str());
  write_json(out / "resolved_config.json", to_json(r));
  return {std::move(ck), std::move(trace)};
}

struct TrainOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

inline int cmd_train(const TrainOptions& opt, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig r = run_config_from_json(read_json_file(opt.config));
    if (opt.seed) r.train.seed = *opt.seed;
    const Dataset d = load_data(r);
    const Split s = split(d, r.data.test_fraction, r.data.seed);
    train_run(r, s.train, data_metadata(d, r), opt.out);
    return int{kOk};
  });
}

// ---------------------------------------------------------------------------
// eval

struct EvalArtifacts {
  MetricReport report;
  Tensor variance;
  ResidualHistogram residuals;
  std::vector<double> spectrum_data, spectrum_gen, spectrum_recon;
};

inline std::vector<Tensor> as_images(const Tensor& rows, const Dataset& like) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < rows.dim(0); ++i) out.push_back(rows.row(i).reshaped(Shape{like.height, like.width}));
  return out;
}

inline Tensor clamp01(Tensor t) {
  for (double& v : t.data()) v = std::clamp(v, 0.0, 1.0);
  return t;
}

/// Every metric reported by `eval`, computed on the held-out split.
inline EvalArtifacts evaluate(const Params& params, const RunConfig& r, const Dataset& test) {
  EvalArtifacts a;
  MetricReport& rep = a.report;
  const EvalConfig& e = r.eval;
  Rng rng(e.seed);
  const double beta = r.train.loss.beta;

  const Tensor gen = generate(params, e.gen_samples, rng);
  const Tensor recon = reconstruct(params, test.x, rng);
  rep.scalars["energy_distance_gen"] = energy_distance(gen, test.x, beta);
  rep.scalars["energy_distance_recon"] = energy_distance(recon, test.x, beta);
  rep.notes["energy_distance"] =
      "sample-based energy distance to the held-out split, used in place of FID/IS; generated set decodes prior draws";
  rep.scalars["latent_var_mean"] = latent_variance_mean(params, test.x);

  const Tensor lip_points = e.lipschitz_target == "decoder"
                                ? sample_standard_normal(rng, Shape{e.lipschitz_points, params.arch.latent_dim}).eps
                                : test.x;
  const BatchMap lip_map = e.lipschitz_target == "decoder" ? decoder_map(params) : encoder_map(params);
  rep.scalars["lipschitz"] = lipschitz_estimate(lip_map, lip_points, e.lipschitz_pairs, rng);
  rep.notes["lipschitz"] = e.lipschitz_target + " map";

  const std::size_t n_corr = std::min(e.corr_points, test.size());
  std::vector<std::size_t> head(n_corr);
  for (std::size_t i = 0; i < n_corr; ++i) head[i] = i;
  try {
    const CorrelationResult c = uncertainty_term_correlation(params, test.subset(head).x, e.corr_m_ref, rng, beta);
    rep.scalars["pearson_r"] = c.pearson_r;
    rep.scalars["r_squared"] = c.r_squared;
    rep.notes["pearson_r"] = "single-sample uncertainty term averaged over " +
                             std::to_string(kDefaultCorrelationDraws) + " draws per point";
  } catch (const NumericError& ex) {
    rep.skipped.insert("pearson_r");
    rep.skipped.insert("r_squared");
    rep.notes["pearson_r"] = ex.what();
  }

  a.variance = variance_map(params, test.x.row(0), e.variance_k, rng);
  rep.arrays["variance_map"] = {a.variance.data().begin(), a.variance.data().end()};

  std::vector<std::size_t> res_idx(std::min(e.residual_points, test.size()));
  for (std::size_t i = 0; i < res_idx.size(); ++i) res_idx[i] = i;
  a.residuals = residual_distribution(params, test.subset(res_idx).x, e.residual_k, e.residual_bins, rng);
  rep.scalars["residual_mean"] = a.residuals.mean;
  rep.scalars["residual_std"] = a.residuals.stddev;
  rep.scalars["residual_central_fraction"] = a.residuals.central_fraction;
  rep.arrays["residual_histogram"] = {a.residuals.counts.begin(), a.residuals.counts.end()};

  if (test.kind == DataKind::image && test.channels == 1 && test.height == test.width) {
    a.spectrum_data = radial_spectrum(as_images(test.x, test));
    a.spectrum_gen = radial_spectrum(as_images(clamp01(gen), test));
    a.spectrum_recon = radial_spectrum(as_images(clamp01(recon), test));
    rep.arrays["spectrum_curve"] = a.spectrum_gen;
  } else {
    rep.skipped.insert("spectrum_curve");
    rep.notes["spectrum_curve"] = "needs square single-channel images";
  }
  rep.validate();
  return a;
}

inline void write_eval_outputs(const EvalArtifacts& a, const RunConfig& r, const fs::path& out) {
  fs::create_directories(out);
  write_json(out / "metrics.json", a.report.scalars_json());
  std::ostringstream var;
  var << "index,variance\n";
  for (std::size_t i = 0; i < a.variance.size(); ++i) var << i << "," << fmt(a.variance[i]) << "\n";
  write_text(out / "variance_map.csv", var.str());
  std::ostringstream res;
  res << "bin_lo,bin_hi,count\n";
  for (std::size_t i = 0; i < a.residuals.counts.size(); ++i) {
    res << fmt(a.residuals.edges[i]) << "," << fmt(a.residuals.edges[i + 1]) << "," << a.residuals.counts[i] << "\n";
  }
  write_text(out / "residuals.csv", res.str());
  std::ostringstream spec;
  spec << "radius,data,generated,reconstructed\n";
  for (std::size_t i = 0; i < a.spectrum_gen.size(); ++i) {
    spec << i << "," << fmt(a.spectrum_data[i]) << "," << fmt(a.spectrum_gen[i]) << "," << fmt(a.spectrum_recon[i])
         << "\n";
  }
  write_text(out / "spectrum.csv", spec.str());
  write_json(out / "resolved_config.json", to_json(r));
}

struct EvalOptions {
  std::string checkpoint;
  std::string config;
  std::string out;
};

inline int cmd_eval(const EvalOptions& opt, std::ostream& err) {
  return guarded(err, [&] {
    const Checkpoint ck = load_checkpoint(opt.checkpoint);
    RunConfig r = run_config_from_json(read_json_file(opt.config));
    const Dataset d = load_data(r);
    if (!(ck.params.arch == r.train.arch)) {
      throw ConfigError("checkpoint architecture " + to_json(ck.params.arch).dump() + " differs from config " +
                        to_json(r.train.arch).dump());
    }
    const Split s = split(d, r.data.test_fraction, r.data.seed);
    write_eval_outputs(evaluate(ck.params, r, s.test), r, opt.out);
    return int{kOk};
  });
}

// ---------------------------------------------------------------------------
// sample

struct SampleOptions {
  std::string checkpoint;
  std::string out;
  std::size_t n = 0;
  std::optional<std::pair<std::uint64_t, std::uint64_t>> walk;
  std::size_t steps = 10;
  std::uint64_t seed = 0;
};

inline std::string numbered(const std::string& stem, std::size_t i, const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%04zu.", i);
  return stem + buf + ext;
}

/// Image data goes to one raster per row; vector data to a single CSV.
inline void write_outputs(const Tensor& rows, const Json& meta, const std::string& stem, const fs::path& out) {
  const bool image = meta.value("kind", std::string("vector")) == "image";
  if (image) {
    const auto h = meta.at("height").get<std::size_t>();
    const auto w = meta.at("width").get<std::size_t>();
    const auto c = meta.at("channels").get<std::size_t>();
    for (std::size_t i = 0; i < rows.dim(0); ++i) {
      export_raster(as_image(clamp01(rows.row(i)), h, w, c), (out / numbered(stem, i, c == 3 ? "ppm" : "pgm")).string());
    }
    return;
  }
  std::ostringstream csv;
  for (std::size_t k = 0; k < rows.dim(1); ++k) csv << (k ? "," : "") << "x" << k;
  csv << "\n";
  for (std::size_t i = 0; i < rows.dim(0); ++i) {
    for (std::size_t k = 0; k < rows.dim(1); ++k) csv << (k ? "," : "") << fmt(rows.at(i, k));
    csv << "\n";
  }
  write_text(out / (stem + ".csv"), csv.str());
}

inline int cmd_sample(const SampleOptions& opt, std::ostream& err) {
  return guarded(err, [&] {
    if (opt.walk.has_value() == (opt.n > 0)) throw ConfigError("sample needs exactly one of --n or --walk");
    const Checkpoint ck = load_checkpoint(opt.checkpoint);
    const Json meta = Json::parse(ck.metadata);
    fs::create_directories(opt.out);
    const std::size_t m = ck.params.arch.latent_dim;
    Json echo{{"checkpoint", opt.checkpoint}, {"seed", opt.seed}};
    if (opt.walk) {
      Rng r1(opt.walk->first), r2(opt.walk->second);
      const Tensor z1 = sample_standard_normal(r1, Shape{m}).eps;
      const Tensor z2 = sample_standard_normal(r2, Shape{m}).eps;
      write_outputs(latent_walk(ck.params, z1, z2, opt.steps), meta, "walk", opt.out);
      echo["walk"] = {opt.walk->first, opt.walk->second};
      echo["steps"] = opt.steps;
    } else {
      Rng rng(opt.seed);
      write_outputs(generate(ck.params, opt.n, rng), meta, "sample", opt.out);
      echo["n"] = opt.n;
    }
    Json resolved = meta.contains("run_config") ? meta.at("run_config") : Json::object();
    resolved["sample"] = echo;
    write_json(fs::path(opt.out) / "resolved_config.json", resolved);
    return int{kOk};
  });
}

// ---------------------------------------------------------------------------
// sweep

inline const std::vector<std::string>& sweep_params() {
  static const std::vector<std::string> p{"loss.beta", "loss.m_samples", "arch.latent_dim"};
  return p;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

inline void apply_sweep_value(RunConfig& r, const std::string& param, const std::string& value) {
  try {
    std::size_t used = 0;
    if (param == "loss.beta") {
      r.train.loss.beta = std::stod(value, &used);
    } else {
      const long long v = std::stoll(value, &used);
      if (v <= 0) throw ConfigError(param + " values must be positive");
      (param == "loss.m_samples" ? r.train.loss.m_samples : r.train.arch.latent_dim) = static_cast<std::size_t>(v);
    }
    if (used != value.size()) throw ConfigError("cannot parse sweep value '" + value + "'");
  } catch (const std::logic_error&) {
    throw ConfigError("cannot parse sweep value '" + value + "'");
  }
}

struct SweepOptions {
  std::string config;
  std::string param;
  std::string values;
  std::string out;
};

struct SweepRow {
  std::string value;
  StepRecord last;
  double epoch_ms = 0.0;
  MetricReport metrics;
};

inline int cmd_sweep(const SweepOptions& opt, std::ostream& err, std::vector<SweepRow>* rows_out = nullptr) {
  return guarded(err, [&] {
    const auto& allowed = sweep_params();
    if (std::find(allowed.begin(), allowed.end(), opt.param) == allowed.end()) {
      throw ConfigError("sweep param must be one of loss.beta, loss.m_samples, arch.latent_dim (got '" + opt.param + "')");
    }
    const auto values = split_list(opt.values);
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    const RunConfig base = run_config_from_json(read_json_file(opt.config));
    std::vector<SweepRow> rows;
    for (const auto& v : values) {
      RunConfig r = base;
      apply_sweep_value(r, opt.param, v);
      const Dataset d = load_data(r);
      const Split s = split(d, r.data.test_fraction, r.data.seed);
      const fs::path dir = fs::path(opt.out) / (opt.param + "=" + v);
      const TrainResult tr = train_run(r, s.train, data_metadata(d, r), dir);
      const EvalArtifacts ev = evaluate(tr.checkpoint.params, r, s.test);
      write_eval_outputs(ev, r, dir);
      rows.push_back({v, tr.trace.steps.empty() ? StepRecord{} : tr.trace.steps.back(), tr.trace.median_epoch_ms(),
                      ev.report});
    }
    std::ostringstream csv;
    csv << "value,total,recon,dispersion,kl,energy_distance_gen,energy_distance_recon,latent_var_mean,lipschitz,epoch_ms\n";
    for (const auto& row : rows) {
      const auto& s = row.metrics.scalars;
      csv << row.value << "," << fmt(row.last.total) << "," << fmt(row.last.recon) << "," << fmt(row.last.dispersion)
          << "," << fmt(row.last.kl) << "," << fmt(s.at("energy_distance_gen")) << ","
          << fmt(s.at("energy_distance_recon")) << "," << fmt(s.at("latent_var_mean")) << "," << fmt(s.at("lipschitz"))
          << "," << fmt(row.epoch_ms) << "\n";
    }
    write_text(fs::path(opt.out) / "sweep_summary.csv", csv.str());
    Json resolved = to_json(base);
    resolved["sweep"] = {{"param", opt.param}, {"values", values}};
    write_json(fs::path(opt.out) / "resolved_config.json", resolved);
    if (rows_out) *rows_out = std::move(rows);
    return int{kOk};
  });
}

// ---------------------------------------------------------------------------
// bench

inline constexpr std::size_t kBenchEpochs = 3;

struct BenchRow {
  LossVariant variant;
  std::size_t m_samples;  ///< 0 for single-sample variants
  double median_epoch_ms;
};

/// Median wall-clock epoch time of `cfg` over kBenchEpochs epochs.
inline double time_epochs(TrainConfig cfg, const Dataset& data) {
  cfg.epochs = kBenchEpochs;
  return train(cfg, data).second.median_epoch_ms();
}

struct BenchOptions {
  std::string config;
  std::string out;
};

inline int cmd_bench(const BenchOptions& opt, std::ostream& err, std::vector<BenchRow>* rows_out = nullptr) {
  return guarded(err, [&] {
    RunConfig r = run_config_from_json(read_json_file(opt.config));
    const Dataset d = load_data(r);
    const Split s = split(d, r.data.test_fraction, r.data.seed);
    std::vector<BenchRow> rows;
    auto run = [&](LossVariant v, std::size_t m) {
      TrainConfig cfg = r.train;
      cfg.loss.variant = v;
      if (m) cfg.loss.m_samples = m;
      rows.push_back({v, m, time_epochs(cfg, s.train)});
    };
    run(LossVariant::vanilla, 0);
    run(LossVariant::fenvae, 0);
    for (std::size_t m : {10, 50, 100}) run(LossVariant::envae, m);
    fs::create_directories(opt.out);
    std::ostringstream csv;
    csv << "variant,m_samples,median_epoch_ms\n";
    for (const auto& row : rows) csv << to_string(row.variant) << "," << row.m_samples << "," << fmt(row.median_epoch_ms) << "\n";
    write_text(fs::path(opt.out) / "bench.csv", csv.str());
    Json resolved = to_json(r);
    resolved["bench"] = {{"epochs_per_run", kBenchEpochs}};
    write_json(fs::path(opt.out) / "resolved_config.json", resolved);
    if (rows_out) *rows_out = std::move(rows);
    return int{kOk};
  });
}

}  // namespace envae::cli
