#include "dare/model/config.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dare/data/patching.hpp"
#include "dare/numerics/rng.hpp"

namespace dare::model {

namespace {

enum class Init { normal, zeros, ones, log_kappa };

struct Slot {
  std::string name;
  Shape shape;
  Init init;
};

using Layout = std::vector<Slot>;

void add_blocks(Layout& l, const ModelConfig& c, int layers) {
  const std::int64_t d = c.dim, h = c.dim * c.mlp_ratio;
  for (int i = 0; i < layers; ++i) {
    const std::string p = "block" + std::to_string(i) + "/";
    l.push_back({p + "ln1_g", {d}, Init::ones});
    l.push_back({p + "ln1_b", {d}, Init::zeros});
    l.push_back({p + "qkv_w", {d, 3 * d}, Init::normal});
    l.push_back({p + "qkv_b", {3 * d}, Init::zeros});
    l.push_back({p + "proj_w", {d, d}, Init::normal});
    l.push_back({p + "proj_b", {d}, Init::zeros});
    l.push_back({p + "ln2_g", {d}, Init::ones});
    l.push_back({p + "ln2_b", {d}, Init::zeros});
    l.push_back({p + "fc1_w", {d, h}, Init::normal});
    l.push_back({p + "fc1_b", {h}, Init::zeros});
    l.push_back({p + "fc2_w", {h, d}, Init::normal});
    l.push_back({p + "fc2_b", {d}, Init::zeros});
  }
  l.push_back({"norm_g", {d}, Init::ones});
  l.push_back({"norm_b", {d}, Init::zeros});
}

Layout encoder_layout(const ModelConfig& c) {
  Layout l;
  l.push_back({data::kPatchProjection, {c.patch_len, c.dim}, Init::normal});
  l.push_back({data::kChannelEmbedding, {c.channels, c.dim}, Init::normal});
  l.push_back({"glt", {c.glt, c.dim}, Init::normal});
  add_blocks(l, c, c.layers_enc);
  return l;
}

Layout predictor_layout(const ModelConfig& c) {
  Layout l;
  l.push_back({"mask_token", {c.dim}, Init::normal});
  add_blocks(l, c, c.layers_pred);
  return l;
}

Layout reconstructor_layout(const ModelConfig& c) {
  Layout l;
  l.push_back({"query_base", {c.dim}, Init::normal});
  add_blocks(l, c, c.layers_rec);
  // One output head per channel.
  l.push_back({"head_w", {c.channels, c.dim, c.reconstruction_width()}, Init::normal});
  l.push_back({"head_b", {c.channels, c.reconstruction_width()}, Init::zeros});
  return l;
}

Layout ma_head_layout(const ModelConfig& c) {
  return {{kProjection, {c.dim, c.projection_dim()}, Init::normal}, {kLogKappa, {1}, Init::log_kappa}};
}

std::int64_t count(const Layout& l) {
  std::int64_t n = 0;
  for (const auto& s : l) n += shape_numel(s.shape);
  return n;
}

ParameterStore materialize(const Layout& l, Rng& rng, std::uint64_t seed) {
  constexpr double kInitStd = 0.02;
  ParameterStore store(seed);
  for (const auto& s : l) {
    Tensor t(s.shape);
    switch (s.init) {
      case Init::normal:
        for (auto& v : t.values()) v = static_cast<Real>(rng.truncated_normal(kInitStd));
        break;
      case Init::zeros:
        break;
      case Init::ones:
        t.fill(Real(1));
        break;
      case Init::log_kappa:
        t.fill(static_cast<Real>(std::log(0.1)));
        break;
    }
    store.add(s.name, std::move(t));
  }
  return store;
}

}  // namespace

void ModelConfig::validate() const {
  if (dim <= 0 || heads <= 0) throw std::invalid_argument("dim and heads must be positive");
  if (dim % (2 * heads) != 0) throw std::invalid_argument("dim must be divisible by 2*heads");
  if (glt < 1) throw std::invalid_argument("need at least one global learnable token");
  if (layers_enc < 1 || layers_pred < 1 || layers_rec < 1) throw std::invalid_argument("each network needs a layer");
  if (patch_len < 1 || channels < 1 || patches < 1) throw std::invalid_argument("geometry must be positive");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in [0, 1]");
  if (!(rope_base > 1.0)) throw std::invalid_argument("rope_base must exceed 1");
  if (mlp_ratio < 1) throw std::invalid_argument("mlp_ratio must be >= 1");
}

ModelConfig preset(std::string_view name) {
  ModelConfig c;
  auto set = [&](std::int64_t d, int le, int lp, int lr, int h, std::int64_t s) {
    c.dim = d;
    c.layers_enc = le;
    c.layers_pred = lp;
    c.layers_rec = lr;
    c.heads = h;
    c.glt = s;
  };
  if (name == "nano") {
    set(64, 2, 2, 3, 4, 1);
  } else if (name == "light") {
    set(128, 6, 6, 6, 4, 1);
  } else if (name == "small") {
    set(256, 6, 6, 6, 4, 1);
  } else if (name == "base") {
    set(256, 8, 8, 8, 8, 4);
  } else if (name == "deep") {
    set(512, 8, 8, 8, 8, 4);
  } else {
    throw std::invalid_argument("unknown preset: " + std::string(name));
  }
  return c;
}

ParameterStore ModelParams::flatten() const {
  ParameterStore flat(encoder.seed());
  flat.merge(encoder, "encoder/");
  flat.merge(predictor, "predictor/");
  flat.merge(reconstructor, "reconstructor/");
  flat.merge(ma_head, "ma_head/");
  flat.merge(target, "target/");
  return flat;
}

ModelParams ModelParams::unflatten(const ParameterStore& flat) {
  ModelParams p;
  p.encoder = flat.extract("encoder/");
  p.predictor = flat.extract("predictor/");
  p.reconstructor = flat.extract("reconstructor/");
  p.ma_head = flat.extract("ma_head/");
  p.target = flat.extract("target/");
  if (p.encoder.empty()) throw std::invalid_argument("checkpoint has no encoder/ entries");
  return p;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ModelParams p;
  p.encoder = materialize(encoder_layout(config), rng, seed);
  p.predictor = materialize(predictor_layout(config), rng, seed);
  p.reconstructor = materialize(reconstructor_layout(config), rng, seed);
  p.ma_head = materialize(ma_head_layout(config), rng, seed);
  p.target = p.encoder;
  return p;
}

ParamCount count_params(const ModelConfig& config) {
  config.validate();
  ParamCount c;
  c.encoder = count(encoder_layout(config));
  c.predictor = count(predictor_layout(config));
  c.reconstructor = count(reconstructor_layout(config));
  c.ma_head = count(ma_head_layout(config));
  c.target = c.encoder;
  return c;
}

void check_encoder_layout(const ParameterStore& encoder, const ModelConfig& config) {
  config.validate();
  for (const auto& slot : encoder_layout(config)) {
    if (!encoder.contains(slot.name)) throw std::invalid_argument("encoder parameters lack " + slot.name);
    if (encoder.at(slot.name).shape() != slot.shape) {
      throw std::invalid_argument("encoder parameter " + slot.name + " has shape " +
                                  shape_string(encoder.at(slot.name).shape()) + ", expected " + shape_string(slot.shape));
    }
  }
}

}  // namespace dare::model
