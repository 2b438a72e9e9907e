#pragma once

// JSON mapping for ModelArch, LossConfig and TrainConfig. Readers are strict:
// unknown keys raise ConfigError, absent keys keep their defaults.

#include <set>
#include <string>
#include <utility>

#include "json.hpp"

#include "envae/errors.hpp"
#include "envae/losses.hpp"
#include "envae/nets.hpp"
#include "envae/train.hpp"

namespace envae {

using Json = nlohmann::json;

/// Reads fields of one JSON object, remembering which keys were used.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError("section '" + section_ + "' must be a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const Json::exception& e) {
      throw ConfigError(section_ + "." + key + ": " + e.what());
    }
  }

  const Json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  /// Throws on any key not requested so far.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + section_ + "." + it.key() + "'");
    }
  }

 private:
  const Json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

inline Json to_json(const ModelArch& a) {
  return Json{{"input_dim", a.input_dim},
              {"latent_dim", a.latent_dim},
              {"encoder_hidden", a.encoder_hidden},
              {"decoder_hidden", a.decoder_hidden},
              {"hidden_activation", to_string(a.hidden_activation)},
              {"output_activation", to_string(a.output_activation)}};
}

inline ModelArch arch_from_json(const Json& j, ModelArch a = {}) {
  StrictObject o(j, "arch");
  std::string hidden = to_string(a.hidden_activation);
  std::string output = to_string(a.output_activation);
  o.get("input_dim", a.input_dim);
  o.get("latent_dim", a.latent_dim);
  o.get("encoder_hidden", a.encoder_hidden);
  o.get("decoder_hidden", a.decoder_hidden);
  o.get("hidden_activation", hidden);
  o.get("output_activation", output);
  o.finish();
  a.hidden_activation = parse_activation(hidden);
  a.output_activation = parse_activation(output);
  return a;
}

inline Json to_json(const LossConfig& c) {
  return Json{{"variant", to_string(c.variant)},
              {"beta", c.beta},
              {"alpha", c.alpha},
              {"m_samples", c.m_samples},
              {"share_noise", c.share_noise}};
}

inline LossConfig loss_from_json(const Json& j, LossConfig c = {}) {
  StrictObject o(j, "loss");
  std::string variant = to_string(c.variant);
  o.get("variant", variant);
  o.get("beta", c.beta);
  o.get("alpha", c.alpha);
  o.get("m_samples", c.m_samples);
  o.get("share_noise", c.share_noise);
  o.finish();
  c.variant = parse_variant(variant);
  return c;
}

/// The "train" section: optimizer and loop settings (arch and loss live in
/// their own sections).
inline Json train_section_to_json(const TrainConfig& t) {
  return Json{{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"learning_rate", t.adam.learning_rate},
              {"adam_beta1", t.adam.beta1},
              {"adam_beta2", t.adam.beta2},
              {"adam_eps", t.adam.eps},
              {"seed", t.seed},
              {"log_every", t.log_every},
              {"log_timing", t.log_timing}};
}

inline void train_section_from_json(StrictObject& o, TrainConfig& t) {
  o.get("epochs", t.epochs);
  o.get("batch_size", t.batch_size);
  o.get("learning_rate", t.adam.learning_rate);
  o.get("adam_beta1", t.adam.beta1);
  o.get("adam_beta2", t.adam.beta2);
  o.get("adam_eps", t.adam.eps);
  o.get("seed", t.seed);
  o.get("log_every", t.log_every);
  o.get("log_timing", t.log_timing);
}

inline Json to_json(const TrainConfig& t) {
  Json j = train_section_to_json(t);
  j["arch"] = to_json(t.arch);
  j["loss"] = to_json(t.loss);
  return j;
}

inline TrainConfig train_config_from_json(const Json& j) {
  TrainConfig t;
  StrictObject o(j, "train");
  train_section_from_json(o, t);
  if (const Json* a = o.sub("arch")) t.arch = arch_from_json(*a);
  if (const Json* l = o.sub("loss")) t.loss = loss_from_json(*l);
  o.finish();
  return t;
}

}  // namespace envae
