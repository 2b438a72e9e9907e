#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "envae/autodiff.hpp"
#include "envae/errors.hpp"
#include "envae/random.hpp"
#include "envae/tensor.hpp"

namespace envae {

enum class Activation { tanh, relu, sigmoid, identity };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::identity: return "identity";
  }
  return "identity";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

inline Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::tanh: return tanh(x);
    case Activation::relu: return relu(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::identity: return x;
  }
  return x;
}

/// MLP encoder/decoder layout. The encoder is a shared trunk followed by
/// separate linear mean and log-variance heads; the decoder is a plain MLP.
struct ModelArch {
  std::size_t input_dim = 2;
  std::size_t latent_dim = 2;
  std::vector<std::size_t> encoder_hidden{128, 128};
  std::vector<std::size_t> decoder_hidden{128, 128};
  Activation hidden_activation = Activation::tanh;
  Activation output_activation = Activation::identity;

  void validate() const {
    if (input_dim == 0 || latent_dim == 0) throw ConfigError("input_dim and latent_dim must be >= 1");
    for (auto w : encoder_hidden)
      if (w == 0) throw ConfigError("encoder widths must be positive");
    for (auto w : decoder_hidden)
      if (w == 0) throw ConfigError("decoder widths must be positive");
    if (hidden_activation != Activation::tanh && hidden_activation != Activation::relu) {
      throw ConfigError("hidden activation must be tanh or relu");
    }
    if (output_activation != Activation::sigmoid && output_activation != Activation::identity) {
      throw ConfigError("output activation must be sigmoid or identity");
    }
  }

  friend bool operator==(const ModelArch&, const ModelArch&) = default;
};

/// Log-variance head output is clamped to this range.
inline constexpr double kLogvarMin = -20.0;
inline constexpr double kLogvarMax = 20.0;

/// One dense layer's parameter names and shape.
struct LayerSpec {
  std::string name;
  std::size_t fan_in;
  std::size_t fan_out;
};

/// Layer names are chosen so that std::map order matches network order.
inline std::vector<LayerSpec> encoder_layers(const ModelArch& arch) {
  std::vector<LayerSpec> out;
  std::size_t in = arch.input_dim;
  for (std::size_t i = 0; i < arch.encoder_hidden.size(); ++i) {
    out.push_back({"enc.h" + std::to_string(i), in, arch.encoder_hidden[i]});
    in = arch.encoder_hidden[i];
  }
  out.push_back({"enc.logvar", in, arch.latent_dim});
  out.push_back({"enc.mu", in, arch.latent_dim});
  return out;
}

inline std::vector<LayerSpec> decoder_layers(const ModelArch& arch) {
  std::vector<LayerSpec> out;
  std::size_t in = arch.latent_dim;
  for (std::size_t i = 0; i < arch.decoder_hidden.size(); ++i) {
    out.push_back({"dec.h" + std::to_string(i), in, arch.decoder_hidden[i]});
    in = arch.decoder_hidden[i];
  }
  out.push_back({"dec.out", in, arch.input_dim});
  return out;
}

/// Encoder (phi, names "enc.*") and decoder (theta, names "dec.*") weights.
/// Each layer `L` owns "L.w" [fan_in x fan_out] and "L.b" [fan_out]; a layer
/// computes x . w + b. Iteration is in sorted name order.
struct Params {
  ModelArch arch;
  std::map<std::string, Tensor> tensors;

  const Tensor& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ContractError("no parameter named '" + name + "'");
    return it->second;
  }
  Tensor& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ContractError("no parameter named '" + name + "'");
    return it->second;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors) n += t.size();
    return n;
  }

  static bool is_encoder(const std::string& name) { return name.rfind("enc.", 0) == 0; }

  friend bool operator==(const Params&, const Params&) = default;
};

/// Weights ~ N(0, 1/fan_in), biases zero.
inline Params init_params(const ModelArch& arch, Rng& rng) {
  arch.validate();
  Params p{arch, {}};
  auto add_layer = [&](const LayerSpec& l) {
    Tensor w(Shape{l.fan_in, l.fan_out});
    const double sd = 1.0 / std::sqrt(static_cast<double>(l.fan_in));
    for (double& v : w.data()) v = sd * rng.normal();
    p.tensors.emplace(l.name + ".w", std::move(w));
    p.tensors.emplace(l.name + ".b", Tensor(Shape{l.fan_out}, 0.0));
  };
  for (const auto& l : encoder_layers(arch)) add_layer(l);
  for (const auto& l : decoder_layers(arch)) add_layer(l);
  return p;
}

/// Params recorded as tape leaves for one forward/backward pass.
struct BoundParams {
  ModelArch arch;
  std::map<std::string, Var> vars;

  Var at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw ContractError("no bound parameter named '" + name + "'");
    return it->second;
  }
};

/// Record every parameter on `tape`; tracked when `trainable`.
inline BoundParams bind(Tape& tape, const Params& params, bool trainable = true) {
  BoundParams b{params.arch, {}};
  for (const auto& [name, t] : params.tensors) b.vars.emplace(name, trainable ? tape.variable(t) : tape.constant(t));
  return b;
}

/// Gradients for every bound parameter, keyed by name.
inline std::map<std::string, Tensor> collect_grads(const Gradients& g, const BoundParams& bound) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, v] : bound.vars) out.emplace(name, g.wrt(v));
  return out;
}

inline Var dense(const BoundParams& p, const std::string& layer, Var x) {
  return add(matmul(x, p.at(layer + ".w")), p.at(layer + ".b"));
}

namespace detail {
inline void check_input(Var x, std::size_t width, const char* what) {
  if (x.value().rank() != 2 || x.value().dim(1) != width) {
    throw DimensionError(std::string(what) + ": expected [B x " + std::to_string(width) + "], got " +
                         to_string(x.shape()));
  }
}
}  // namespace detail

inline GaussianPosterior encoder_forward(const BoundParams& p, Var x) {
  detail::check_input(x, p.arch.input_dim, "encoder_forward");
  Var h = x;
  for (std::size_t i = 0; i < p.arch.encoder_hidden.size(); ++i) {
    h = activate(dense(p, "enc.h" + std::to_string(i), h), p.arch.hidden_activation);
  }
  return GaussianPosterior{dense(p, "enc.mu", h), clamp(dense(p, "enc.logvar", h), kLogvarMin, kLogvarMax)};
}

/// g_theta(z). Deterministic: no sampling happens here.
inline Var decoder_forward(const BoundParams& p, Var z) {
  detail::check_input(z, p.arch.latent_dim, "decoder_forward");
  Var h = z;
  for (std::size_t i = 0; i < p.arch.decoder_hidden.size(); ++i) {
    h = activate(dense(p, "dec.h" + std::to_string(i), h), p.arch.hidden_activation);
  }
  return activate(dense(p, "dec.out", h), p.arch.output_activation);
}

/// Decode a batch of latents without recording gradients.
inline Tensor decode(const Params& params, const Tensor& z) {
  Tape tape;
  const BoundParams b = bind(tape, params, false);
  return decoder_forward(b, tape.constant(z)).value();
}

/// Posterior mean and log-variance of a batch, without gradients.
inline std::pair<Tensor, Tensor> encode(const Params& params, const Tensor& x) {
  Tape tape;
  const BoundParams b = bind(tape, params, false);
  const GaussianPosterior q = encoder_forward(b, tape.constant(x));
  return {q.mu.value(), q.logvar.value()};
}

}  // namespace envae
