#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace dare::cli {

const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = {
      {"seed", "0", "chosen", "master seed for initialization, batching and masks"},
      // model geometry; 0 takes the preset's value
      {"model.preset", "nano", "reported", "nano | light | small | base | deep"},
      {"model.dim", "0", "reported", "token width D (0 = preset)"},
      {"model.heads", "0", "reported", "attention heads (0 = preset)"},
      {"model.layers_enc", "0", "reported", "encoder blocks (0 = preset)"},
      {"model.layers_pred", "0", "reported", "predictor blocks (0 = preset)"},
      {"model.layers_rec", "0", "reported", "reconstructor blocks (0 = preset)"},
      {"model.glt", "0", "reported", "global learnable tokens per column (0 = preset)"},
      {"model.channels", "8", "chosen", "channels C of the pre-training montage"},
      {"model.patch_len", "64", "reported", "samples per patch p"},
      {"model.patches", "16", "reported", "patches per segment N"},
      {"model.tau", "0.99", "chosen", "momentum of the target encoder"},
      {"model.rope_base", "10000", "chosen", "rotary embedding base"},
      {"model.rotary", "true", "reported", "rotary positions by column (false: every token at position 0)"},
      {"model.mlp_ratio", "4", "chosen", "MLP hidden width / D"},
      {"model.proj_dim", "0", "chosen", "alignment projection width (0 = D)"},
      {"model.target_channel_embedding", "false", "chosen", "reconstruct channel-embedded patches instead of raw samples"},
      // masking
      {"mask.p_time_mask", "0.5", "reported", "probability a column is fully masked"},
      {"mask.p_chan_visible", "0.2", "reported", "fraction of channels visible in a visible column"},
      {"mask.overlap_low", "0.2", "reported", "lower bound on the mask-pair Jaccard overlap"},
      {"mask.overlap_high", "0.8", "reported", "upper bound on the mask-pair Jaccard overlap"},
      {"mask.max_retries", "1000", "chosen", "rejection-sampling budget"},
      {"mask.pair_redraw", "0.5", "chosen", "per-column redraw probability of the second mask proposal"},
      // objective
      {"loss.w_rc", "1", "reported", "reconstruction weight"},
      {"loss.w_aa", "1", "reported", "anchor-alignment weight"},
      {"loss.w_ma", "0.1", "reported", "mask-alignment weight"},
      {"train.use_aa", "true", "chosen", "false drops the anchor-alignment gradient (still measured)"},
      {"train.use_ma", "true", "chosen", "false drops the mask-alignment gradient (still measured)"},
      // optimization
      {"train.epochs", "30", "chosen", "pre-training epochs"},
      {"train.batch_size", "64", "reported", "pre-training batch size"},
      {"train.max_lr", "5e-4", "reported", "OneCycle peak learning rate"},
      {"train.div_factor", "24", "reported", "OneCycle initial division factor"},
      {"train.final_div_factor", "1e4", "chosen", "OneCycle final division factor"},
      {"train.warmup_fraction", "0.3", "chosen", "OneCycle warmup fraction"},
      {"train.weight_decay", "0.01", "chosen", "AdamW decoupled weight decay (matrices only)"},
      {"train.beta1", "0.9", "chosen", "AdamW beta1"},
      {"train.beta2", "0.999", "chosen", "AdamW beta2"},
      {"train.clip_norm", "1", "chosen", "global gradient-norm clip"},
      // synthetic data
      {"data.seed", "-1", "chosen", "generator seed (-1 = seed)"},
      {"data.classes", "2", "chosen", "number of classes"},
      {"data.per_class", "1000", "chosen", "segments per class"},
      {"data.channels", "0", "chosen", "generated channels (0 = model.channels)"},
      {"data.samples", "0", "chosen", "samples per segment (0 = patches * patch_len)"},
      {"data.sample_rate", "256", "reported", "sampling rate in Hz"},
      {"data.carrier_hz", "10,20", "chosen", "one carrier frequency per class"},
      {"data.noise_std", "0.1", "chosen", "additive Gaussian noise"},
      {"data.holdout_every", "10", "reported", "every n-th segment is held out (9:1 split); 0 disables"},
      // probing
      {"probe.epochs", "20", "chosen", "probe epochs"},
      {"probe.batch_size", "32", "chosen", "probe batch size"},
      {"probe.lr", "5e-4", "reported", "constant probe learning rate"},
      {"probe.weight_decay", "0.01", "chosen", "AdamW weight decay for the probe"},
      {"probe.kernel", "15", "reported", "temporal kernel length K"},
      {"probe.dropout_proj", "0.1", "reported", "dropout after the projection"},
      {"probe.dropout_head", "0.5", "reported", "dropout before the head"},
      {"probe.head_pool", "mean", "chosen", "mean | flatten"},
      {"probe.freeze_encoder", "true", "reported", "keep encoder weights fixed"},
      {"probe.c_target", "0", "chosen", "channels after the 1x1 map (0 = model.channels)"},
      // evaluation and analysis
      {"eval.mask_pairs", "4", "chosen", "mask pairs per segment for the mask-variance estimate"},
      {"eval.seed", "12345", "chosen", "mask seed for post-hoc evaluation"},
      {"mip.alpha", "0.5", "reported", "counterexample perturbation size"},
      {"mip.dim", "64", "chosen", "embedding width for the analytic checks"},
      {"mip.n_masks", "8", "chosen", "mask views in the counterexample"},
      {"mip.pairs", "1000", "chosen", "random unit pairs for the norm identity"},
      {"fit.direction", "accuracy", "reported", "accuracy | loss"},
  };
  return specs;
}

RunConfig::RunConfig() {
  for (const auto& s : key_specs()) values_[s.key] = s.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key: " + key);
  it->second = value;
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("expected key=value, got: " + assignment);
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      set_assignment(line);
    } catch (const UsageError& e) {
      throw UsageError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key: " + key);
  return it->second;
}

double RunConfig::real(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw UsageError(key + ": not a number: " + v);
}

std::int64_t RunConfig::integer(const std::string& key) const {
  const std::string& v = get(key);
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw UsageError(key + ": not an integer: " + v);
  return out;
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError(key + ": expected true or false, got " + v);
}

std::vector<double> RunConfig::reals(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw UsageError(key + ": not a number list: " + get(key));
    }
  }
  if (out.empty()) throw UsageError(key + ": empty list");
  return out;
}

std::string RunConfig::render() const {
  std::ostringstream out;
  for (const auto& s : key_specs()) out << s.key << '=' << values_.at(s.key) << "  # " << s.provenance << ": " << s.help << '\n';
  return out.str();
}

model::ModelConfig RunConfig::model() const {
  model::ModelConfig c;
  try {
    c = model::preset(get("model.preset"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  auto over = [&](const char* key, auto& field) {
    if (const auto v = integer(key); v != 0) field = static_cast<std::remove_reference_t<decltype(field)>>(v);
  };
  over("model.dim", c.dim);
  over("model.heads", c.heads);
  over("model.layers_enc", c.layers_enc);
  over("model.layers_pred", c.layers_pred);
  over("model.layers_rec", c.layers_rec);
  over("model.glt", c.glt);
  c.channels = integer("model.channels");
  c.patch_len = integer("model.patch_len");
  c.patches = integer("model.patches");
  c.tau = real("model.tau");
  c.rope_base = real("model.rope_base");
  c.rotary = flag("model.rotary");
  c.mlp_ratio = integer("model.mlp_ratio");
  c.proj_dim = integer("model.proj_dim");
  c.target_adds_channel_embedding = flag("model.target_channel_embedding");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("model: ") + e.what());
  }
  return c;
}

masking::MaskingConfig RunConfig::masking() const {
  masking::MaskingConfig m;
  m.p_time_mask = real("mask.p_time_mask");
  m.p_chan_visible = real("mask.p_chan_visible");
  m.overlap_low = real("mask.overlap_low");
  m.overlap_high = real("mask.overlap_high");
  m.max_retries = static_cast<int>(integer("mask.max_retries"));
  m.pair_redraw = real("mask.pair_redraw");
  return m;
}

harness::PretrainConfig RunConfig::pretrain() const {
  harness::PretrainConfig c;
  c.model = model();
  c.masking = masking();
  c.weights = {real("loss.w_rc"), real("loss.w_aa"), real("loss.w_ma")};
  c.use_aa = flag("train.use_aa");
  c.use_ma = flag("train.use_ma");
  c.epochs = static_cast<int>(integer("train.epochs"));
  c.batch_size = integer("train.batch_size");
  c.schedule.max_lr = real("train.max_lr");
  c.schedule.div_factor = real("train.div_factor");
  c.schedule.final_div_factor = real("train.final_div_factor");
  c.schedule.warmup_fraction = real("train.warmup_fraction");
  c.optimizer.weight_decay = real("train.weight_decay");
  c.optimizer.beta1 = real("train.beta1");
  c.optimizer.beta2 = real("train.beta2");
  c.clip_norm = real("train.clip_norm");
  c.seed = seed();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return c;
}

harness::ProbeConfig RunConfig::probe(std::int64_t c_in) const {
  const model::ModelConfig m = model();
  harness::ProbeConfig c;
  c.epochs = static_cast<int>(integer("probe.epochs"));
  c.batch_size = integer("probe.batch_size");
  c.lr = real("probe.lr");
  c.optimizer.weight_decay = real("probe.weight_decay");
  c.clip_norm = real("train.clip_norm");
  c.seed = seed();
  c.clp.c_in = c_in;
  c.clp.c_target = integer("probe.c_target") != 0 ? integer("probe.c_target") : m.channels;
  c.clp.temporal_kernel = integer("probe.kernel");
  c.clp.dropout_proj = real("probe.dropout_proj");
  c.clp.dropout_head = real("probe.dropout_head");
  c.clp.num_classes = static_cast<std::int32_t>(integer("data.classes"));
  c.clp.freeze_encoder = flag("probe.freeze_encoder");
  try {
    c.clp.head_pool = clp::parse_pool(get("probe.head_pool"));
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return c;
}

std::uint64_t RunConfig::data_seed() const {
  const auto s = integer("data.seed");
  return s < 0 ? seed() : static_cast<std::uint64_t>(s);
}

data::SyntheticConfig RunConfig::synthetic() const {
  const model::ModelConfig m = model();
  data::SyntheticConfig s;
  s.num_classes = static_cast<std::int32_t>(integer("data.classes"));
  s.channels = integer("data.channels") != 0 ? integer("data.channels") : m.channels;
  s.samples = integer("data.samples") != 0 ? integer("data.samples") : m.segment_samples();
  s.sample_rate = real("data.sample_rate");
  s.carrier_hz = reals("data.carrier_hz");
  s.noise_std = real("data.noise_std");
  s.seed = data_seed();
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("data: ") + e.what());
  }
  return s;
}

}  // namespace dare::cli
