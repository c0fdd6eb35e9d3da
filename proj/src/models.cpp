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

#include "adassl/models.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "adassl/error.hpp"

namespace adassl {

namespace {

template <typename E>
E parse_enum(std::string_view name, std::initializer_list<E> values, const char* (*to_name)(E),
             const char* what) {
  for (E v : values) {
    if (name == to_name(v)) return v;
  }
  fail(ErrorKind::kConfig, std::string("unknown ") + what + " '" + std::string(name) + "'");
}

const double kSoftplusOne = std::log(std::exp(1.0) - 1.0);

}  // namespace

const char* objective_name(Objective o) {
  switch (o) {
    case Objective::kInfoNce: return "infonce";
    case Objective::kAnInfoNce: return "aninfonce";
    case Objective::kHInfoNceAffine: return "hinfonce_affine";
    case Objective::kHInfoNceMlp: return "hinfonce_mlp";
    case Objective::kByol: return "byol";
    case Objective::kAdasslV: return "adassl_v";
    case Objective::kAdasslS: return "adassl_s";
  }
  return "unknown";
}

Objective parse_objective(std::string_view name) {
  return parse_enum(name,
                    {Objective::kInfoNce, Objective::kAnInfoNce, Objective::kHInfoNceAffine,
                     Objective::kHInfoNceMlp, Objective::kByol, Objective::kAdasslV,
                     Objective::kAdasslS},
                    objective_name, "objective");
}

const char* base_loss_name(BaseLoss b) { return b == BaseLoss::kInfoNce ? "infonce" : "byol"; }
BaseLoss parse_base_loss(std::string_view name) {
  return parse_enum(name, {BaseLoss::kInfoNce, BaseLoss::kByol}, base_loss_name, "base loss");
}

const char* space_name(ModelSpace s) {
  return s == ModelSpace::kUnbounded ? "unbounded" : "hypersphere";
}
ModelSpace parse_space(std::string_view name) {
  return parse_enum(name, {ModelSpace::kUnbounded, ModelSpace::kHypersphere}, space_name,
                    "model space");
}

const char* editor_name(EditorVariant e) {
  switch (e) {
    case EditorVariant::kAdditive: return "additive";
    case EditorVariant::kLinear: return "linear";
    case EditorVariant::kMlp: return "mlp";
    case EditorVariant::kModular: return "modular";
  }
  return "unknown";
}
EditorVariant parse_editor(std::string_view name) {
  return parse_enum(name,
                    {EditorVariant::kAdditive, EditorVariant::kLinear, EditorVariant::kMlp,
                     EditorVariant::kModular},
                    editor_name, "editor");
}

const char* modular_bias_name(ModularBias b) {
  return b == ModularBias::kVector ? "vector" : "scalar";
}
ModularBias parse_modular_bias(std::string_view name) {
  return parse_enum(name, {ModularBias::kVector, ModularBias::kScalar}, modular_bias_name,
                    "modular bias");
}

// ---- parameters ------------------------------------------------------------------

std::size_t ParameterStore::add(std::string name, Tensor value, bool decay) {
  params_.push_back(Parameter{std::move(name), std::move(value), decay});
  return params_.size() - 1;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Tensor gaussian_tensor(Shape shape, RngKey key) {
  Tensor t(std::move(shape));
  const std::size_t rows = t.rows(), cols = t.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    RngStream rng(derive_key(key, r));
    for (std::size_t c = 0; c < cols; ++c) t[r * cols + c] = rng.normal();
  }
  return t;
}

namespace {

class Builder {
 public:
  Builder(ParameterStore& store, RngKey key) : store_(store), key_(key) {}

  std::size_t uniform(const std::string& name, Shape shape, double bound, bool decay) {
    Tensor t(std::move(shape));
    RngStream rng(derive_key(key_, name));
    for (double& v : t.values()) v = (2.0 * rng.uniform() - 1.0) * bound;
    return store_.add(name, std::move(t), decay);
  }

  std::size_t constant(const std::string& name, Shape shape, double value, bool decay) {
    return store_.add(name, Tensor(std::move(shape), value), decay);
  }

  Linear linear(const std::string& name, std::size_t in, std::size_t out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Linear l;
    l.in = in;
    l.out = out;
    l.weight = uniform(name + ".weight", Shape{in, out}, bound, true);
    l.bias = uniform(name + ".bias", Shape{1, out}, bound, false);
    return l;
  }

  Mlp mlp(const std::string& name, std::size_t in, std::size_t width, std::size_t hidden_layers,
          std::size_t out, double slope, bool batch_norm) {
    Mlp net;
    net.slope = slope;
    net.batch_norm = batch_norm;
    std::size_t prev = in;
    for (std::size_t i = 0; i < hidden_layers; ++i) {
      const std::string prefix = name + "." + std::to_string(i);
      net.layers.push_back(linear(prefix, prev, width));
      if (batch_norm) {
        BatchNormLayer bn;
        bn.gamma = constant(prefix + ".bn.gamma", Shape{1, width}, 1.0, true);
        bn.beta = constant(prefix + ".bn.beta", Shape{1, width}, 0.0, false);
        bn.state = BatchNormState::make(width);
        net.norms.push_back(std::move(bn));
      }
      prev = width;
    }
    net.layers.push_back(linear(name + "." + std::to_string(hidden_layers), prev, out));
    return net;
  }

  ParameterStore& store() { return store_; }

 private:
  ParameterStore& store_;
  RngKey key_;
};

void set_output_bias(ParameterStore& store, const Mlp& net, double value) {
  store[net.layers.back().bias].value.fill(value);
}

}  // namespace

ModelBundle make_bundle(const ModelConfig& config, Objective objective, BaseLoss base,
                        RngKey init_key) {
  if (config.input_dim < 1) fail(ErrorKind::kConfig, "model input dimension must be >= 1");
  if (config.d_r < 1) fail(ErrorKind::kConfig, "d_r must be >= 1");
  ModelBundle b;
  b.config = config;
  b.objective = objective;
  b.base = base;
  Builder build(b.params, init_key);
  const std::size_t n = config.input_dim;
  const std::size_t df = config.embedding_dim();
  const std::size_t hw = config.hidden_width();
  const std::size_t dr = config.d_r;

  const std::size_t first = b.params.size();
  b.encoder = build.mlp("encoder", n, hw, config.encoder_hidden_layers, df,
                        config.encoder_slope, false);
  for (std::size_t i = first; i < b.params.size(); ++i) b.encoder_params.push_back(i);

  const bool adassl = objective == Objective::kAdasslV || objective == Objective::kAdasslS;
  const bool byol = objective == Objective::kByol || (adassl && base == BaseLoss::kByol);

  auto global_lambda = [&](LambdaVariant v, std::size_t width) {
    LambdaHead head;
    head.variant = v;
    head.raw = build.constant("lambda.raw", Shape{1, width}, kSoftplusOne, true);
    b.lambda = std::move(head);
  };

  switch (objective) {
    case Objective::kInfoNce:
      global_lambda(LambdaVariant::kGlobalScalar, 1);
      break;
    case Objective::kAnInfoNce:
      global_lambda(LambdaVariant::kGlobalDiag, df);
      break;
    case Objective::kHInfoNceAffine:
    case Objective::kHInfoNceMlp: {
      LambdaHead head;
      if (objective == Objective::kHInfoNceAffine) {
        head.variant = LambdaVariant::kConditionalAffine;
        head.net = build.mlp("lambda", df, 0, 0, df, config.head_slope, false);
      } else {
        head.variant = LambdaVariant::kConditionalMlp;
        head.net = build.mlp("lambda", df, hw, config.predictor_hidden_layers, df,
                             config.head_slope, true);
      }
      set_output_bias(b.params, *head.net, kSoftplusOne);
      b.lambda = std::move(head);
      if (config.hinfonce_predictor) {
        b.mean_predictor = build.mlp("predictor", df, hw, config.predictor_hidden_layers, df,
                                     config.head_slope, true);
      }
      break;
    }
    case Objective::kByol:
      break;
    case Objective::kAdasslV:
    case Objective::kAdasslS:
      if (base == BaseLoss::kInfoNce) global_lambda(LambdaVariant::kGlobalScalar, 1);
      break;
  }

  if (byol) {
    b.byol_predictor = build.mlp("eta", df, hw, 1, df, config.head_slope, true);
    ema_sync(b);
  }

  if (objective == Objective::kAdasslV) {
    b.q_phi = build.mlp("q_phi", 2 * df, config.head_width, config.head_hidden_layers, 2 * dr,
                        config.head_slope, true);
    b.p_theta = build.mlp("p_theta", df, config.head_width, config.head_hidden_layers, 2 * dr,
                          config.head_slope, true);
  }
  if (objective == Objective::kAdasslS) {
    b.sparse = build.mlp("sparse", 2 * df, config.head_width, config.head_hidden_layers, 2 * dr,
                         config.head_slope, true);
  }
  if (adassl) {
    Editor e;
    e.variant = config.editor.value_or(objective == Objective::kAdasslV ? EditorVariant::kLinear
                                                                        : EditorVariant::kModular);
    e.bias_mode = config.modular_bias;
    const double bound = 1.0 / std::sqrt(static_cast<double>(df));
    switch (e.variant) {
      case EditorVariant::kAdditive:
        e.w = build.uniform("editor.w", Shape{dr, df}, bound, true);
        break;
      case EditorVariant::kLinear: {
        e.linear = build.linear("editor.linear", df + dr, df);
        // Start as the identity on f(x) plus a random projection of r.
        Tensor& w = b.params[e.linear->weight].value;
        for (std::size_t i = 0; i < df; ++i) {
          for (std::size_t j = 0; j < df; ++j) w.at(i, j) = i == j ? 1.0 : 0.0;
        }
        b.params[e.linear->bias].value.fill(0.0);
        break;
      }
      case EditorVariant::kMlp:
        e.net = build.mlp("editor.mlp", df + dr, config.head_width, 1, df, config.head_slope,
                          true);
        break;
      case EditorVariant::kModular:
        e.a = build.uniform("editor.A", Shape{dr, df}, bound, true);
        e.b = build.uniform("editor.B", Shape{dr, df}, bound, true);
        if (e.bias_mode == ModularBias::kVector) {
          e.offset = build.uniform("editor.offset", Shape{dr, df}, bound, false);
        } else {
          e.offset = build.uniform("editor.offset", Shape{1, dr}, bound, false);
        }
        break;
    }
    b.editor = std::move(e);
  }
  return b;
}

// ---- forward ---------------------------------------------------------------------------

Forward::Forward(ModelBundle& bundle, Tape& tape, ForwardOptions options)
    : bundle_(bundle), tape_(tape), options_(options), bound_(bundle.params.size(), -1) {}

Var Forward::param(std::size_t index) {
  if (index >= bound_.size()) fail(ErrorKind::kDimension, "parameter index out of range");
  if (bound_[index] >= 0) return tape_.handle(bound_[index]);
  const Tensor& value = bundle_.params[index].value;
  Var v = options_.track_gradients ? tape_.leaf(value) : tape_.constant(value);
  bound_[index] = v.id();
  return v;
}

std::vector<Tensor> Forward::gradients() const {
  std::vector<Tensor> out;
  out.reserve(bound_.size());
  for (std::size_t i = 0; i < bound_.size(); ++i) {
    if (bound_[i] < 0 || tape_.grad(bound_[i]).empty()) {
      out.push_back(Tensor::zeros_like(bundle_.params[i].value));
    } else {
      out.push_back(tape_.grad(bound_[i]));
    }
  }
  return out;
}

Var linear(Forward& fw, const Linear& layer, const Var& x) {
  return add(matmul(x, fw.param(layer.weight)), fw.param(layer.bias));
}

namespace {

using ParamGetter = std::function<Var(std::size_t)>;

Var mlp_with(Forward& fw, Mlp& net, const Var& x, const ParamGetter& get) {
  Var h = x;
  const std::size_t hidden = net.layers.size() - 1;
  for (std::size_t i = 0; i <= hidden; ++i) {
    const Linear& l = net.layers[i];
    h = add(matmul(h, get(l.weight)), get(l.bias));
    if (i == hidden) break;
    if (net.batch_norm) {
      BatchNormLayer& bn = net.norms[i];
      h = batch_norm(h, get(bn.gamma), get(bn.beta), bn.state, fw.norm_mode());
    }
    h = leaky_relu(h, net.slope);
  }
  return h;
}

}  // namespace

Var mlp_forward(Forward& fw, Mlp& net, const Var& x) {
  return mlp_with(fw, net, x, [&fw](std::size_t i) { return fw.param(i); });
}

Embedding encode(Forward& fw, const Tensor& x, Branch branch) {
  if (!x.all_finite()) fail(ErrorKind::kNumeric, "encode: non-finite input");
  ModelBundle& b = fw.bundle();
  Var in = fw.constant(x);
  Var raw;
  if (branch == Branch::kOnline) {
    raw = mlp_forward(fw, b.encoder, in);
  } else {
    if (!b.uses_ema()) fail(ErrorKind::kConfig, "target branch requested without EMA shadow");
    std::vector<int> slot(b.params.size(), -1);
    for (std::size_t k = 0; k < b.encoder_params.size(); ++k) {
      slot[b.encoder_params[k]] = static_cast<int>(k);
    }
    raw = mlp_with(fw, b.encoder, in, [&](std::size_t i) {
      return fw.constant(b.ema_shadow.at(static_cast<std::size_t>(slot.at(i))));
    });
  }
  Embedding e;
  e.raw = raw;
  e.psi = b.config.space == ModelSpace::kHypersphere ? l2_normalize(raw) : raw;
  return e;
}

Var lambda_weights(Forward& fw, const Var& f_x) {
  ModelBundle& b = fw.bundle();
  if (!b.lambda) fail(ErrorKind::kConfig, "bundle has no similarity weights");
  LambdaHead& head = *b.lambda;
  switch (head.variant) {
    case LambdaVariant::kGlobalScalar:
    case LambdaVariant::kGlobalDiag:
      return softplus(fw.param(head.raw));
    case LambdaVariant::kConditionalAffine:
    case LambdaVariant::kConditionalMlp:
      return softplus(mlp_forward(fw, *head.net, f_x));
  }
  fail(ErrorKind::kConfig, "unknown lambda variant");
}

Var similarity(SimilarityVariant, const Var& psi_a, const Var& psi_b, const Var& weights) {
  // Every variant shares the weighted squared-distance form; they differ only
  // in where the weights come from and which embeddings are compared.
  return neg(sum(mul(weights, square(sub(psi_a, psi_b))), 1));
}

Var pairwise_similarity(const Var& psi_a, const Var& psi_b, const Var& weights) {
  const std::size_t d = psi_a.value().cols();
  if (psi_b.value().cols() != d) fail(ErrorKind::kDimension, "pairwise_similarity width mismatch");
  return neg_pairwise_sq_distance(psi_a, psi_b, weights);
}

Var edit(Forward& fw, const Editor& editor, const Var& f_x, const Var& r) {
  switch (editor.variant) {
    case EditorVariant::kAdditive:
      return add(f_x, matmul(r, fw.param(editor.w)));
    case EditorVariant::kLinear:
      return linear(fw, *editor.linear, concat_cols({f_x, r}));
    case EditorVariant::kMlp:
      return mlp_forward(fw, *fw.bundle().editor->net, concat_cols({f_x, r}));
    case EditorVariant::kModular: {
      // t = f + sum_i r_i (B_i A_i f + b_i)
      Var a = fw.param(editor.a);
      Var bm = fw.param(editor.b);
      Var coeff = mul(r, matmul(f_x, transpose(a)));  // r_i * (A_i f)
      Var delta = matmul(coeff, bm);
      Var offset = fw.param(editor.offset);
      if (editor.bias_mode == ModularBias::kVector) {
        delta = add(delta, matmul(r, offset));
      } else {
        delta = add(delta, matmul(r, transpose(offset)));
      }
      return add(f_x, delta);
    }
  }
  fail(ErrorKind::kConfig, "unknown editor variant");
}

VariationalSample sample_r_variational(Forward& fw, const Var& f_x, const Var& f_pair,
                                       RMode mode, RngKey key, bool use_mean) {
  ModelBundle& b = fw.bundle();
  if (!b.q_phi || !b.p_theta) fail(ErrorKind::kConfig, "bundle has no variational networks");
  const std::size_t dr = b.config.d_r;
  const double clip = b.config.logvar_clamp;
  VariationalSample out;
  Var hp = mlp_forward(fw, *b.p_theta, f_x);
  out.mu_p = slice_cols(hp, 0, dr);
  out.logvar_p = clamp(slice_cols(hp, dr, 2 * dr), -clip, clip);
  const std::size_t rows = f_x.value().rows();
  if (mode == RMode::kPosterior) {
    if (!f_pair.valid()) fail(ErrorKind::kConfig, "posterior sampling needs the paired view");
    Var hq = mlp_forward(fw, *b.q_phi, concat_cols({f_x, f_pair}));
    out.mu_q = slice_cols(hq, 0, dr);
    out.logvar_q = clamp(slice_cols(hq, dr, 2 * dr), -clip, clip);
    Var eps = fw.constant(gaussian_tensor(Shape{rows, dr}, key));
    out.r = add(out.mu_q, mul(exp(scale(out.logvar_q, 0.5)), eps));
  } else if (use_mean) {
    out.r = out.mu_p;
  } else {
    Var eps = fw.constant(gaussian_tensor(Shape{rows, dr}, key));
    out.r = add(out.mu_p, mul(exp(scale(out.logvar_p, 0.5)), eps));
  }
  return out;
}

SparseSample sample_r_sparse(Forward& fw, const Var& f_x, const Var& f_pair, bool train_mode,
                             RngKey key, const Tensor* frozen_mask) {
  ModelBundle& b = fw.bundle();
  if (!b.sparse) fail(ErrorKind::kConfig, "bundle has no sparse predictor");
  const double temperature = b.config.gumbel_temperature;
  if (!(temperature > 0.0)) fail(ErrorKind::kConfig, "gumbel temperature must be positive");
  const std::size_t dr = b.config.d_r;
  SparseSample out;
  Var h = mlp_forward(fw, *b.sparse, concat_cols({f_x, f_pair}));
  out.logits = slice_cols(h, 0, dr);
  Var values = tanh(slice_cols(h, dr, 2 * dr));
  out.pi = sigmoid(out.logits);
  const std::size_t rows = f_x.value().rows();
  Var mask;
  if (train_mode) {
    // Logistic noise log(u) - log(1 - u) turns sigmoid into a Bernoulli sampler.
    Tensor noise(Shape{rows, dr});
    for (std::size_t r = 0; r < rows; ++r) {
      RngStream rng(derive_key(key, r));
      for (std::size_t c = 0; c < dr; ++c) {
        const double u = rng.uniform();
        noise.at(r, c) = std::log(u) - std::log1p(-u);
      }
    }
    Var relaxed = sigmoid(scale(add(out.logits, fw.constant(std::move(noise))), 1.0 / temperature));
    out.relaxed = relaxed.value();
    Tensor hard(relaxed.value().shape());
    for (std::size_t i = 0; i < hard.size(); ++i) hard[i] = relaxed.value()[i] > 0.5 ? 1.0 : 0.0;
    mask = frozen_mask ? fw.constant(*frozen_mask) : straight_through(hard, relaxed);
  } else {
    out.relaxed = out.pi.value();
    Tensor hard(out.pi.value().shape());
    for (std::size_t i = 0; i < hard.size(); ++i) hard[i] = out.pi.value()[i] > 0.5 ? 1.0 : 0.0;
    mask = fw.constant(frozen_mask ? *frozen_mask : hard);
  }
  out.mask = mask.value();
  out.r = mul(mask, values);
  return out;
}

void ema_sync(ModelBundle& bundle) {
  bundle.ema_shadow.clear();
  for (std::size_t i : bundle.encoder_params) {
    bundle.ema_shadow.push_back(bundle.params[i].value);
  }
}

void ema_update(ModelBundle& bundle, double momentum) {
  if (!bundle.uses_ema()) return;
  for (std::size_t k = 0; k < bundle.encoder_params.size(); ++k) {
    Tensor& shadow = bundle.ema_shadow[k];
    const Tensor& online = bundle.params[bundle.encoder_params[k]].value;
    for (std::size_t i = 0; i < shadow.size(); ++i) {
      shadow[i] = momentum * shadow[i] + (1.0 - momentum) * online[i];
    }
  }
}

// ---- checkpoints -----------------------------------------------------------------------
//
// Text format, one record per tensor:
//   adassl-checkpoint <version> <record count>
//   <name> <rank> <extent>... \n <values, %.17g, space separated>
// Records cover parameters, BatchNorm running statistics ("<layer>.running_mean",
// "<layer>.running_var") and the EMA shadow ("ema.<parameter name>").

namespace {

void collect_norm_states(ModelBundle& b,
                         std::vector<std::pair<std::string, Tensor*>>& out) {
  auto add_net = [&](std::optional<Mlp>& net, const std::string& name) {
    if (!net) return;
    for (std::size_t i = 0; i < net->norms.size(); ++i) {
      const std::string prefix = name + "." + std::to_string(i) + ".bn";
      out.emplace_back(prefix + ".running_mean", &net->norms[i].state.running_mean);
      out.emplace_back(prefix + ".running_var", &net->norms[i].state.running_var);
    }
  };
  std::optional<Mlp> enc_ref;  // encoder carries no BatchNorm
  if (b.lambda && b.lambda->net) add_net(b.lambda->net, "lambda");
  add_net(b.mean_predictor, "predictor");
  add_net(b.byol_predictor, "eta");
  add_net(b.q_phi, "q_phi");
  add_net(b.p_theta, "p_theta");
  add_net(b.sparse, "sparse");
  if (b.editor && b.editor->net) add_net(b.editor->net, "editor.mlp");
}

std::vector<std::pair<std::string, Tensor*>> checkpoint_records(ModelBundle& b) {
  std::vector<std::pair<std::string, Tensor*>> recs;
  for (auto& p : b.params.all()) recs.emplace_back(p.name, &p.value);
  collect_norm_states(b, recs);
  for (std::size_t k = 0; k < b.ema_shadow.size(); ++k) {
    recs.emplace_back("ema." + b.params[b.encoder_params[k]].name, &b.ema_shadow[k]);
  }
  return recs;
}

}  // namespace

void save_checkpoint(const ModelBundle& bundle, const std::string& path) {
  auto& b = const_cast<ModelBundle&>(bundle);
  const auto recs = checkpoint_records(b);
  std::ofstream os(path);
  if (!os) fail(ErrorKind::kIo, "cannot open checkpoint '" + path + "' for writing");
  os << "adassl-checkpoint " << kCheckpointVersion << ' ' << recs.size() << '\n';
  char buf[32];
  for (const auto& [name, t] : recs) {
    os << name << ' ' << t->rank();
    for (std::size_t e : t->shape()) os << ' ' << e;
    os << '\n';
    for (std::size_t i = 0; i < t->size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", (*t)[i]);
      os << (i ? " " : "") << buf;
    }
    os << '\n';
  }
  if (!os) fail(ErrorKind::kIo, "failed writing checkpoint '" + path + "'");
}

void load_checkpoint(ModelBundle& bundle, const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::kIo, "cannot open checkpoint '" + path + "'");
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  is >> magic >> version >> count;
  if (magic != "adassl-checkpoint" || version != kCheckpointVersion) {
    fail(ErrorKind::kIo, "'" + path + "' is not a version " +
                             std::to_string(kCheckpointVersion) + " checkpoint");
  }
  std::map<std::string, Tensor*> slots;
  for (auto& [name, t] : checkpoint_records(bundle)) slots[name] = t;
  if (count != slots.size()) {
    fail(ErrorKind::kIo, "checkpoint record count does not match the model");
  }
  for (std::size_t k = 0; k < count; ++k) {
    std::string name;
    std::size_t rank = 0;
    is >> name >> rank;
    Shape shape(rank);
    for (auto& e : shape) is >> e;
    auto it = slots.find(name);
    if (!is || it == slots.end()) fail(ErrorKind::kIo, "unexpected checkpoint record '" + name + "'");
    if (it->second->shape() != shape) {
      fail(ErrorKind::kIo, "shape mismatch for '" + name + "': " + shape_string(shape));
    }
    for (double& v : it->second->values()) {
      std::string tok;
      is >> tok;
      v = std::strtod(tok.c_str(), nullptr);
    }
    if (!is) fail(ErrorKind::kIo, "truncated checkpoint '" + path + "'");
  }
}

}  // namespace adassl
