// Copyright 2026 The adassl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "adassl/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "adassl/error.hpp"

namespace adassl {

using nlohmann::json;

const char* seed_policy_name(SeedPolicy p) {
  return p == SeedPolicy::kPerTrial ? "per_trial" : "shared";
}

namespace {

SeedPolicy parse_seed_policy(std::string_view name) {
  if (name == "per_trial") return SeedPolicy::kPerTrial;
  if (name == "shared") return SeedPolicy::kShared;
  fail(ErrorKind::kConfig, "unknown seed policy '" + std::string(name) + "'");
}

}  // namespace

const char* probe_regime_name(ProbeRegime r) {
  switch (r) {
    case ProbeRegime::kPz: return "pz";
    case ProbeRegime::kWide: return "wide";
    case ProbeRegime::kWideOod: return "wide_ood";
  }
  return "unknown";
}

ProbeRegime parse_probe_regime(std::string_view name) {
  for (ProbeRegime r : {ProbeRegime::kPz, ProbeRegime::kWide, ProbeRegime::kWideOod}) {
    if (name == probe_regime_name(r)) return r;
  }
  fail(ErrorKind::kConfig, "unknown probe regime '" + std::string(name) + "'");
}

namespace {

// One binding per config field; the same table drives serialisation,
// parsing and overrides so they cannot drift apart.
struct Field {
  std::function<json()> get;
  std::function<void(const json&)> set;
};

std::string json_type_error(const std::string& path, const json& v, const char* want) {
  return path + ": expected " + want + ", got " + v.dump();
}

template <typename T>
Field bind_unsigned(const std::string& path, T& ref) {
  return {[&ref] { return json(ref); },
          [&ref, path](const json& v) {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
              fail(ErrorKind::kConfig, json_type_error(path, v, "a non-negative integer"));
            }
            ref = v.get<T>();
          }};
}

Field bind_int(const std::string& path, int& ref) {
  return {[&ref] { return json(ref); },
          [&ref, path](const json& v) {
            if (!v.is_number_integer()) fail(ErrorKind::kConfig, json_type_error(path, v, "an integer"));
            ref = v.get<int>();
          }};
}

Field bind_double(const std::string& path, double& ref) {
  return {[&ref] { return json(ref); },
          [&ref, path](const json& v) {
            if (!v.is_number()) fail(ErrorKind::kConfig, json_type_error(path, v, "a number"));
            ref = v.get<double>();
          }};
}

Field bind_bool(const std::string& path, bool& ref) {
  return {[&ref] { return json(ref); },
          [&ref, path](const json& v) {
            if (!v.is_boolean()) fail(ErrorKind::kConfig, json_type_error(path, v, "true or false"));
            ref = v.get<bool>();
          }};
}

Field bind_string(const std::string& path, std::string& ref) {
  return {[&ref] { return json(ref); },
          [&ref, path](const json& v) {
            if (!v.is_string()) fail(ErrorKind::kConfig, json_type_error(path, v, "a string"));
            ref = v.get<std::string>();
          }};
}

template <typename E>
Field bind_enum(const std::string& path, E& ref, const char* (*to_name)(E),
                E (*parse)(std::string_view)) {
  return {[&ref, to_name] { return json(to_name(ref)); },
          [&ref, parse, path](const json& v) {
            if (!v.is_string()) fail(ErrorKind::kConfig, json_type_error(path, v, "a string"));
            try {
              ref = parse(v.get<std::string>());
            } catch (const Error& e) {
              fail(ErrorKind::kConfig, path + ": " + e.what());
            }
          }};
}

Field bind_regimes(const std::string& path, std::vector<ProbeRegime>& ref) {
  return {[&ref] {
            json arr = json::array();
            for (ProbeRegime r : ref) arr.push_back(probe_regime_name(r));
            return arr;
          },
          [&ref, path](const json& v) {
            if (!v.is_array()) fail(ErrorKind::kConfig, json_type_error(path, v, "a list of regimes"));
            std::vector<ProbeRegime> out;
            for (const auto& e : v) {
              if (!e.is_string()) fail(ErrorKind::kConfig, json_type_error(path, e, "a regime name"));
              try {
                out.push_back(parse_probe_regime(e.get<std::string>()));
              } catch (const Error& err) {
                fail(ErrorKind::kConfig, path + ": " + err.what());
              }
            }
            ref = std::move(out);
          }};
}

// Ordered so that the serialised file reads top-down like the schema.
std::vector<std::pair<std::string, Field>> fields(ExperimentConfig& c) {
  std::vector<std::pair<std::string, Field>> f;
  auto add = [&f](const std::string& path, Field field) { f.emplace_back(path, std::move(field)); };
  add("name", bind_string("name", c.name));

  add("dgp.n_c", bind_unsigned("dgp.n_c", c.dgp.n_c));
  add("dgp.n_s", bind_unsigned("dgp.n_s", c.dgp.n_s));
  add("dgp.regime", bind_enum("dgp.regime", c.dgp.regime, regime_name, parse_regime));
  add("dgp.weight_normalization",
      bind_enum("dgp.weight_normalization", c.dgp.weight_normalization,
                weight_normalization_name, parse_weight_normalization));
  add("dgp.mixing_candidates", bind_unsigned("dgp.mixing_candidates", c.dgp.mixing_candidates));
  add("dgp.seed_policy",
      bind_enum("dgp.seed_policy", c.dgp.seed_policy, seed_policy_name, parse_seed_policy));

  add("model.space", bind_enum("model.space", c.model.space, space_name, parse_space));
  add("model.encoder_hidden_layers",
      bind_unsigned("model.encoder_hidden_layers", c.model.encoder_hidden_layers));
  add("model.width_multiplier", bind_unsigned("model.width_multiplier", c.model.width_multiplier));
  add("model.encoder_slope", bind_double("model.encoder_slope", c.model.encoder_slope));
  add("model.head_width", bind_unsigned("model.head_width", c.model.head_width));
  add("model.head_hidden_layers",
      bind_unsigned("model.head_hidden_layers", c.model.head_hidden_layers));
  add("model.predictor_hidden_layers",
      bind_unsigned("model.predictor_hidden_layers", c.model.predictor_hidden_layers));
  add("model.d_r", bind_unsigned("model.d_r", c.model.d_r));
  add("model.editor", bind_string("model.editor", c.model.editor));
  add("model.modular_bias", bind_enum("model.modular_bias", c.model.modular_bias,
                                      modular_bias_name, parse_modular_bias));
  add("model.lambda", bind_string("model.lambda", c.model.lambda));
  add("model.hinfonce_predictor", bind_bool("model.hinfonce_predictor", c.model.hinfonce_predictor));
  add("model.gumbel_temperature", bind_double("model.gumbel_temperature", c.model.gumbel_temperature));
  add("model.logvar_clamp", bind_double("model.logvar_clamp", c.model.logvar_clamp));

  add("loss.objective",
      bind_enum("loss.objective", c.loss.objective, objective_name, parse_objective));
  add("loss.base", bind_enum("loss.base", c.loss.base, base_loss_name, parse_base_loss));
  add("loss.tau", bind_double("loss.tau", c.loss.tau));
  add("loss.beta.start", bind_double("loss.beta.start", c.loss.beta.start));
  add("loss.beta.end", bind_double("loss.beta.end", c.loss.beta.end));
  add("loss.beta.steps", bind_unsigned("loss.beta.steps", c.loss.beta.steps));
  add("loss.symmetric", bind_bool("loss.symmetric", c.loss.symmetric));
  add("loss.use_additional_view", bind_bool("loss.use_additional_view", c.loss.use_additional_view));
  add("loss.posterior_samples", bind_unsigned("loss.posterior_samples", c.loss.posterior_samples));

  add("train.steps", bind_unsigned("train.steps", c.train.steps));
  add("train.batch", bind_unsigned("train.batch", c.train.batch));
  add("train.lr", bind_double("train.lr", c.train.lr));
  add("train.weight_decay", bind_double("train.weight_decay", c.train.weight_decay));
  add("train.ema_momentum", bind_double("train.ema_momentum", c.train.ema_momentum));
  add("train.log_every", bind_unsigned("train.log_every", c.train.log_every));

  add("eval.probe_train", bind_unsigned("eval.probe_train", c.eval.probe_train));
  add("eval.probe_test", bind_unsigned("eval.probe_test", c.eval.probe_test));
  add("eval.regimes", bind_regimes("eval.regimes", c.eval.regimes));
  add("eval.ridge_eps", bind_double("eval.ridge_eps", c.eval.ridge_eps));
  add("eval.dci_lambda", bind_double("eval.dci_lambda", c.eval.dci_lambda));
  add("eval.dci_samples", bind_unsigned("eval.dci_samples", c.eval.dci_samples));
  add("eval.density_n", bind_unsigned("eval.density_n", c.eval.density_n));
  add("eval.hetero_samples", bind_unsigned("eval.hetero_samples", c.eval.hetero_samples));

  add("trials.n_seeds", bind_unsigned("trials.n_seeds", c.trials.n_seeds));
  add("trials.base_seed", bind_unsigned("trials.base_seed", c.trials.base_seed));

  add("io.output_dir", bind_string("io.output_dir", c.io.output_dir));
  add("io.float_width", bind_int("io.float_width", c.io.float_width));
  add("io.checkpoints", bind_bool("io.checkpoints", c.io.checkpoints));
  return f;
}

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : path) {
    if (ch == '.') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  return parts;
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    // The beta schedule is the only nested object below a section.
    if (it->is_object()) {
      flatten(*it, path, out);
    } else {
      out.emplace_back(path, *it);
    }
  }
}

bool is_known_editor(const std::string& e) {
  return e == "default" || e == "additive" || e == "linear" || e == "mlp" || e == "modular";
}

const char* natural_lambda(Objective o, BaseLoss base) {
  switch (o) {
    case Objective::kInfoNce: return "global_scalar";
    case Objective::kAnInfoNce: return "global_diag";
    case Objective::kHInfoNceAffine: return "conditional_affine";
    case Objective::kHInfoNceMlp: return "conditional_mlp";
    case Objective::kByol: return "none";
    case Objective::kAdasslV:
    case Objective::kAdasslS:
      return base == BaseLoss::kInfoNce ? "global_scalar" : "none";
  }
  return "none";
}

}  // namespace

void validate(const ExperimentConfig& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) fail(ErrorKind::kConfig, msg);
  };
  require(c.dgp.n_c >= 1, "dgp.n_c must be >= 1");
  require(c.dgp.n_c + c.dgp.n_s >= 2, "dgp.n_c + dgp.n_s must be >= 2");
  require(c.dgp.mixing_candidates >= 1, "dgp.mixing_candidates must be >= 1");
  require(c.model.width_multiplier >= 1, "model.width_multiplier must be >= 1");
  require(c.model.head_width >= 1, "model.head_width must be >= 1");
  require(c.model.d_r >= 1, "model.d_r must be >= 1");
  require(is_known_editor(c.model.editor),
          "model.editor must be one of default|additive|linear|mlp|modular");
  require(c.model.gumbel_temperature > 0.0, "model.gumbel_temperature must be > 0");
  require(c.model.logvar_clamp > 0.0, "model.logvar_clamp must be > 0");
  require(c.model.encoder_slope >= 0.0 && c.model.encoder_slope < 1.0,
          "model.encoder_slope must lie in [0, 1)");

  const bool adassl = c.loss.objective == Objective::kAdasslV ||
                      c.loss.objective == Objective::kAdasslS;
  require(c.model.lambda == "auto" ||
              c.model.lambda == natural_lambda(c.loss.objective, c.loss.base),
          std::string("model.lambda '") + c.model.lambda + "' does not match objective '" +
              objective_name(c.loss.objective) + "' (expected auto or " +
              natural_lambda(c.loss.objective, c.loss.base) + ")");
  require(adassl || c.model.editor == "default",
          "model.editor applies only to adassl_v / adassl_s");
  require(adassl || c.loss.base == BaseLoss::kInfoNce || c.loss.objective == Objective::kByol,
          "loss.base = byol applies only to adassl_v / adassl_s");
  require(c.loss.objective != Objective::kByol || c.loss.base == BaseLoss::kByol,
          "loss.objective = byol requires loss.base = byol");
  require(!c.model.hinfonce_predictor || c.loss.objective == Objective::kHInfoNceAffine ||
              c.loss.objective == Objective::kHInfoNceMlp,
          "model.hinfonce_predictor applies only to hinfonce_affine / hinfonce_mlp");
  require(!c.loss.use_additional_view || adassl,
          "loss.use_additional_view applies only to adassl_v / adassl_s");
  require(c.loss.posterior_samples == 1 || c.loss.objective == Objective::kAdasslV,
          "loss.posterior_samples applies only to adassl_v");
  try {
    validate(loss_config(c));
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, e.what());
  }

  require(c.train.batch >= 2, "train.batch must be >= 2 (BatchNorm and negatives need pairs)");
  require(c.train.lr >= 0.0, "train.lr must be >= 0");
  require(c.train.weight_decay >= 0.0, "train.weight_decay must be >= 0");
  require(c.train.ema_momentum >= 0.0 && c.train.ema_momentum <= 1.0,
          "train.ema_momentum must lie in [0, 1]");
  require(c.train.log_every >= 1, "train.log_every must be >= 1");

  const std::size_t df = c.model.space == ModelSpace::kHypersphere ? c.dgp.n_c + c.dgp.n_s + 1
                                                                   : c.dgp.n_c + c.dgp.n_s;
  require(c.eval.probe_train > df + 1, "eval.probe_train must exceed the embedding width + 1");
  require(c.eval.probe_test >= 1, "eval.probe_test must be >= 1");
  require(!c.eval.regimes.empty(), "eval.regimes must not be empty");
  require(c.eval.ridge_eps >= 0.0, "eval.ridge_eps must be >= 0");
  require(c.eval.dci_lambda >= 0.0, "eval.dci_lambda must be >= 0");
  require(c.eval.dci_samples >= 2, "eval.dci_samples must be >= 2");

  require(c.trials.n_seeds >= 1, "trials.n_seeds must be >= 1");
  require(c.io.float_width == 64 || c.io.float_width == 32, "io.float_width must be 64 or 32");
  require(!c.io.output_dir.empty(), "io.output_dir must not be empty");
}

ExperimentConfig with_objective_defaults(ExperimentConfig c) {
  const bool unimodal = c.dgp.regime != NoiseRegime::kComplex;
  c.loss.tau = (c.dgp.regime == NoiseRegime::kZero || !unimodal) ? 0.1 : 1.0;
  c.loss.symmetric = !unimodal && c.loss.base == BaseLoss::kInfoNce &&
                     c.loss.objective != Objective::kByol;
  if (c.loss.objective == Objective::kAdasslV) {
    c.loss.beta = BetaSchedule{0.0, 0.5, 1000};
  } else if (c.loss.objective == Objective::kAdasslS) {
    c.loss.beta = BetaSchedule{1.0, 1.0, 0};
  } else {
    c.loss.beta = BetaSchedule{};
  }
  return c;
}

std::string to_json(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  json j = json::object();
  for (auto& [path, field] : fields(copy)) {
    json* node = &j;
    const auto parts = split_path(path);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
    (*node)[parts.back()] = field.get();
  }
  return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::kConfig, "config must be a JSON object");
  std::vector<std::pair<std::string, json>> flat;
  flatten(j, "", flat);
  ExperimentConfig cfg;
  auto table = fields(cfg);
  for (const auto& [path, value] : flat) {
    auto it = std::find_if(table.begin(), table.end(),
                           [&](const auto& f) { return f.first == path; });
    if (it == table.end()) fail(ErrorKind::kConfig, "unknown config key '" + path + "'");
    it->second.set(value);
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::kIo, "cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return config_from_json(ss.str());
  } catch (const Error& e) {
    fail(e.kind(), path + ": " + e.what());
  }
}

void apply_override(ExperimentConfig& cfg, std::string_view path, std::string_view value) {
  auto table = fields(cfg);
  auto it = std::find_if(table.begin(), table.end(),
                         [&](const auto& f) { return f.first == path; });
  if (it == table.end()) fail(ErrorKind::kConfig, "unknown config key '" + std::string(path) + "'");
  json v = json::parse(value, nullptr, false);
  if (v.is_discarded()) v = json(std::string(value));
  it->second.set(v);
}

ModelConfig model_config(const ExperimentConfig& c) {
  ModelConfig m;
  m.space = c.model.space;
  m.input_dim = c.dgp.n_c + c.dgp.n_s;
  m.encoder_hidden_layers = c.model.encoder_hidden_layers;
  m.width_multiplier = c.model.width_multiplier;
  m.encoder_slope = c.model.encoder_slope;
  m.head_width = c.model.head_width;
  m.head_hidden_layers = c.model.head_hidden_layers;
  m.predictor_hidden_layers = c.model.predictor_hidden_layers;
  m.d_r = c.model.d_r;
  if (c.model.editor != "default") m.editor = parse_editor(c.model.editor);
  m.modular_bias = c.model.modular_bias;
  m.hinfonce_predictor = c.model.hinfonce_predictor;
  m.gumbel_temperature = c.model.gumbel_temperature;
  m.logvar_clamp = c.model.logvar_clamp;
  return m;
}

LossConfig loss_config(const ExperimentConfig& c) {
  LossConfig l;
  l.objective = c.loss.objective;
  l.base = c.loss.objective == Objective::kByol ? BaseLoss::kByol : c.loss.base;
  l.tau = c.loss.tau;
  l.beta = c.loss.beta;
  l.symmetric = c.loss.symmetric;
  l.use_additional_view = c.loss.use_additional_view;
  l.posterior_samples = c.loss.posterior_samples;
  return l;
}

DgpConfig dgp_config(const ExperimentConfig& c) {
  DgpConfig d;
  d.n_c = c.dgp.n_c;
  d.n_s = c.dgp.n_s;
  d.regime = c.dgp.regime;
  d.weight_normalization = c.dgp.weight_normalization;
  d.mixing_candidates = c.dgp.mixing_candidates;
  return d;
}

}  // namespace adassl
