// dare: synthetic data, pre-training, probing, evaluation and analysis.
#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dare/analysis/scaling.hpp"
#include "dare/mip_lab/mip_lab.hpp"
#include "dare/numerics/checkpoint.hpp"
#include "json.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dare;
using dare::cli::RunConfig;
using dare::cli::UsageError;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

// Options shared by every subcommand.
struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string run_dir;
  std::string runs_root = "runs";
  std::string preset;
  int epochs = -1;
  long long seed = -1;
  bool quiet = false;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_file, "key=value config file");
    app->add_option("-s,--set", overrides, "override, key=value (repeatable)");
    app->add_option("--run-dir", run_dir, "output directory (default: <runs-root>/<timestamp>-seed<seed>-<command>)");
    app->add_option("--runs-root", runs_root, "parent of generated run directories");
    app->add_option("--preset", preset, "shorthand for model.preset");
    app->add_option("--epochs", epochs, "shorthand for train.epochs");
    app->add_option("--seed", seed, "shorthand for seed");
    app->add_flag("-q,--quiet", quiet, "no progress output");
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_file.empty()) cfg.load_file(config_file);
    for (const auto& o : overrides) cfg.set_assignment(o);
    if (!preset.empty()) cfg.set("model.preset", preset);
    if (epochs >= 0) cfg.set("train.epochs", std::to_string(epochs));
    if (seed >= 0) cfg.set("seed", std::to_string(seed));
    cfg.model();  // surface malformed values before any work starts
    return cfg;
  }
};

// Run directory with the resolved config and a manifest written on close.
class Run {
 public:
  Run(const std::string& command, const Common& common, const RunConfig& cfg, int argc, char** argv)
      : command_(command), cfg_(cfg) {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", std::gmtime(&t));
    created_ = stamp;
    dir_ = common.run_dir.empty()
               ? fs::path(common.runs_root) / (std::string(stamp) + "-seed" + std::to_string(cfg.seed()) + "-" + command)
               : fs::path(common.run_dir);
    fs::create_directories(dir_);
    for (int i = 0; i < argc; ++i) argv_.emplace_back(argv[i]);
    if (!common.config_file.empty()) add_input(common.config_file);
    write("config.txt", cfg.render());
    quiet_ = common.quiet;
  }

  const fs::path& dir() const { return dir_; }
  bool quiet() const { return quiet_; }

  void add_input(const std::string& path) { inputs_[fs::absolute(path).string()] = sha256_hex(read_file(path)); }

  void write(const std::string& name, const std::string& text) {
    write_file(dir_ / name, text);
    outputs_[name] = sha256_hex(text);
  }

  // Hash a file already written into the run directory.
  void record(const std::string& name) { outputs_[name] = sha256_hex(read_file(dir_ / name)); }

  void finish() {
    json m;
    m["command"] = command_;
    m["argv"] = argv_;
    m["created_utc"] = created_;
    m["seed"] = cfg_.seed();
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    write_file(dir_ / "manifest.json", m.dump(2) + "\n");
    if (!quiet_) std::cerr << "run directory: " << dir_.string() << "\n";
  }

 private:
  std::string command_;
  const RunConfig& cfg_;
  fs::path dir_;
  std::string created_;
  std::vector<std::string> argv_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
  bool quiet_ = false;
};

data::SegmentBatch load_or_generate(const std::string& path, const RunConfig& cfg, Run& run) {
  if (!path.empty()) {
    run.add_input(path);
    return data::read_segments(path);
  }
  return data::generate_synthetic(cfg.synthetic(), cfg.integer("data.per_class"));
}

std::pair<data::SegmentBatch, data::SegmentBatch> split(const data::SegmentBatch& all, const RunConfig& cfg) {
  const auto every = cfg.integer("data.holdout_every");
  if (every <= 0) return {all, data::SegmentBatch{}};
  return data::split_holdout(all, every);
}

json losses_json(const losses::LossReport& r) {
  return {{"l_rc", r.l_rc}, {"l_aa", r.l_aa}, {"l_ma", r.l_ma}, {"l_total", r.l_total}};
}

model::ModelParams load_model(const std::string& path, const model::ModelConfig& m, Run& run) {
  run.add_input(path);
  model::ModelParams p = model::ModelParams::unflatten(load_checkpoint(path));
  model::check_encoder_layout(p.encoder, m);
  return p;
}

// ------------------------------------------------------------------ commands

int cmd_gen_data(const RunConfig& cfg, Run& run) {
  const auto all = data::generate_synthetic(cfg.synthetic(), cfg.integer("data.per_class"));
  data::write_segments((run.dir() / "segments.dseg").string(), all);
  data::write_labels_csv((run.dir() / "labels.csv").string(), all);
  run.record("segments.dseg");
  run.record("labels.csv");
  json j = {{"segments", all.size()}, {"channels", all.channels()}, {"samples", all.samples()},
            {"classes", all.num_classes}, {"sha256", sha256_hex(read_file(run.dir() / "segments.dseg"))}};
  run.write("data.json", j.dump(2) + "\n");
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_pretrain(const RunConfig& cfg, Run& run, const std::string& data_path) {
  const harness::PretrainConfig pc = cfg.pretrain();
  const auto [train, val] = split(load_or_generate(data_path, cfg, run), cfg);
  std::ofstream log(run.dir() / "train_log.csv");
  log << harness::kStepLogHeader << "\n";
  const auto started = std::chrono::steady_clock::now();
  std::int64_t steps_per_epoch = 0;
  {
    const auto n = train.size();
    steps_per_epoch = n / pc.batch_size + ((n % pc.batch_size) >= 2 ? 1 : 0);
  }
  const auto result = harness::pretrain(pc, train, [&](const harness::StepLog& s) {
    log << harness::format_step_log(s) << "\n";
    if (!run.quiet() && (s.step + 1) % steps_per_epoch == 0) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      std::fprintf(stderr, "epoch %lld  step %lld  l_total %.5f  (%.0fs)\n",
                   static_cast<long long>((s.step + 1) / steps_per_epoch), static_cast<long long>(s.step + 1),
                   s.losses.l_total, secs);
    }
  });
  log.close();
  const std::string ckpt = encode_checkpoint(result.params.flatten());
  run.write("checkpoint.bin", ckpt);
  run.record("train_log.csv");
  json summary = {{"steps", result.log.size()}, {"final_step", losses_json(result.log.back().losses)}};
  if (val.size() >= 2) summary["validation"] = losses_json(harness::evaluate_losses(result.params, val, pc, cfg.integer("eval.seed")));
  run.write("summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_probe(const RunConfig& cfg, Run& run, const std::string& checkpoint, bool random_encoder,
              const std::string& train_path, const std::string& test_path) {
  const model::ModelConfig m = cfg.model();
  const ParameterStore encoder =
      random_encoder ? model::init_params(m, cfg.seed()).encoder : load_model(checkpoint, m, run).encoder;
  data::SegmentBatch train, test;
  if (!train_path.empty() || !test_path.empty()) {
    if (train_path.empty() || test_path.empty()) throw UsageError("--train and --test go together");
    run.add_input(train_path);
    run.add_input(test_path);
    train = data::read_segments(train_path);
    test = data::read_segments(test_path);
  } else {
    std::tie(train, test) = split(load_or_generate("", cfg, run), cfg);
    if (test.size() == 0) throw UsageError("probe needs a held-out split: set data.holdout_every > 0 or pass --train/--test");
  }
  const harness::ProbeConfig pc = cfg.probe(train.channels());
  const auto result = harness::probe_train(pc, m, encoder, train, test);

  std::string csv = "epoch,train_loss,balanced_accuracy,cohen_kappa,weighted_f1\n";
  std::string jsonl;
  for (const auto& e : result.epochs) {
    char buf[256];
    const auto& c = e.eval->classification;
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.train_loss, c.balanced_accuracy, c.cohen_kappa,
                  c.weighted_f1);
    csv += buf;
    jsonl += e.to_json() + "\n";
    if (!run.quiet()) std::fprintf(stderr, "epoch %d  loss %.4f  bacc %.4f\n", e.epoch + 1, e.train_loss, c.balanced_accuracy);
  }
  run.write("probe_log.csv", csv);
  run.write("probe_report.jsonl", jsonl);
  ParameterStore out;
  out.merge(result.clp, clp::kPrefix);
  if (!pc.clp.freeze_encoder) out.merge(result.encoder, "encoder/");
  run.write("probe.bin", encode_checkpoint(out));
  json report = json::parse(result.report.to_json());
  report["encoder"] = random_encoder ? "random" : checkpoint;
  report["clp_params"] = clp::clp_param_count(pc.clp, m);
  run.write("report.json", report.dump(2) + "\n");
  std::cout << report.dump() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, Run& run, const std::string& checkpoint, const std::string& data_path) {
  const harness::PretrainConfig pc = cfg.pretrain();
  const model::ModelParams p = load_model(checkpoint, pc.model, run);
  const auto data = load_or_generate(data_path, cfg, run);
  Rng rng(static_cast<std::uint64_t>(cfg.integer("eval.seed")));
  const auto mv = mip::mask_variance(p.encoder, p.ma_head, pc.model, data, static_cast<int>(cfg.integer("eval.mask_pairs")),
                                     rng, pc.masking);
  json j = {{"losses", losses_json(harness::evaluate_losses(p, data, pc, cfg.integer("eval.seed")))},
            {"mask_variance", mv.variance},
            {"mean_view_similarity", mv.mean_similarity},
            {"mask_pairs", mv.pairs},
            {"kappa", std::exp(static_cast<double>(p.ma_head.at(model::kLogKappa)[0]))}};
  run.write("eval.json", j.dump(2) + "\n");
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_mip(const RunConfig& cfg, Run& run) {
  const double alpha = cfg.real("mip.alpha");
  const auto dim = cfg.integer("mip.dim");
  const auto n_masks = cfg.integer("mip.n_masks");
  Rng rng(cfg.seed());

  double worst = 0;
  for (std::int64_t i = 0; i < cfg.integer("mip.pairs"); ++i) {
    worst = std::max(worst, mip::norm_identity_check(mip::random_unit(dim, rng), mip::random_unit(dim, rng)));
  }
  if (!(alpha > 0)) throw UsageError("mip.alpha must be positive");
  Rng ce_rng(cfg.seed() + 1);
  const auto ce = mip::aa_counterexample(alpha, dim, n_masks, ce_rng);

  std::string sweep = "alpha,aa_similarity,mean_pairwise_mask_distance\n";
  for (int i = 1; i <= 10; ++i) {
    Rng r(cfg.seed() + 1);
    const auto s = mip::aa_counterexample(0.2 * i, dim, n_masks, r);
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.3f,%.17g,%.17g\n", s.alpha, s.aa_similarity, s.mean_pairwise_mask_distance);
    sweep += buf;
  }
  run.write("alpha_sweep.csv", sweep);

  json j;
  j["norm_identity"] = {{"pairs", cfg.integer("mip.pairs")}, {"dim", dim}, {"max_residual", worst}};
  j["counterexample"] = {{"alpha", alpha},
                         {"aa_similarity", ce.aa_similarity},
                         {"aa_similarity_closed_form", 1 / std::sqrt(1 + alpha * alpha)},
                         {"mean_pairwise_mask_distance", ce.mean_pairwise_mask_distance},
                         {"mean_pairwise_mask_distance_closed_form", alpha * std::sqrt(2.0) / std::sqrt(1 + alpha * alpha)},
                         {"n_masks", n_masks}};
  run.write("mip.json", j.dump(2) + "\n");
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_fit_scaling(const RunConfig& cfg, Run& run, const std::string& input) {
  run.add_input(input);
  std::vector<std::pair<double, double>> pts;
  std::istringstream in(read_file(input));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error(input + ": expected two comma-separated columns");
    try {
      pts.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
    } catch (const std::invalid_argument&) {
      if (!pts.empty()) throw std::runtime_error(input + ": malformed row: " + line);  // only a header may fail
    }
  }
  analysis::Direction dir{};
  try {
    dir = analysis::parse_direction(cfg.get("fit.direction"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto fit = analysis::fit_saturation(pts, dir);
  run.write("fit.json", fit.to_json() + "\n");
  std::cout << fit.to_json() << "\n";
  return 0;
}

int cmd_param_count(const RunConfig& cfg, Run& run) {
  const model::ModelConfig m = cfg.model();
  const auto c = model::count_params(m);
  json j = {{"preset", cfg.get("model.preset")},
            {"channels", m.channels},
            {"patches", m.patches},
            {"patch_len", m.patch_len},
            {"encoder", c.encoder},
            {"predictor", c.predictor},
            {"reconstructor", c.reconstructor},
            {"ma_head", c.ma_head},
            {"target", c.target},
            {"trainable", c.trainable()},
            {"trainable_millions", static_cast<double>(c.trainable()) / 1e6}};
  const auto synth = cfg.synthetic();
  auto probe = cfg.probe(synth.channels);
  j["clp"] = {{"c_in", probe.clp.c_in}, {"head_pool", clp::to_string(probe.clp.head_pool)},
              {"params", clp::clp_param_count(probe.clp, m)}};
  run.write("param_count.json", j.dump(2) + "\n");
  std::cout << j.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked pre-training and probing of multichannel time series"};
  app.require_subcommand(1);
  std::map<std::string, Common> common;
  std::string data_path, checkpoint, train_path, test_path, input;
  bool random_encoder = false;
  double alpha = -1;
  std::string direction;

  auto* gen = app.add_subcommand("gen-data", "write a synthetic labeled segment file");
  auto* pre = app.add_subcommand("pretrain", "pre-train a model (synthetic data unless --data is given)");
  pre->add_option("--data", data_path, "segment file");
  auto* probe = app.add_subcommand("probe", "conv-linear probe on a frozen encoder");
  probe->add_option("--checkpoint", checkpoint, "pre-training checkpoint");
  probe->add_flag("--random-encoder", random_encoder, "probe a randomly initialized encoder instead");
  probe->add_option("--train", train_path, "labeled training segments");
  probe->add_option("--test", test_path, "labeled held-out segments");
  auto* eval = app.add_subcommand("eval", "post-hoc losses and mask variance of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "pre-training checkpoint")->required();
  eval->add_option("--data", data_path, "segment file (synthetic unless given)");
  auto* mipc = app.add_subcommand("mip", "numerical checks of the mask-invariance analysis");
  mipc->add_option("--alpha", alpha, "shorthand for mip.alpha");
  auto* fit = app.add_subcommand("fit-scaling", "saturation fit of (params_in_M, value) rows");
  fit->add_option("--input", input, "two-column CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--direction", direction, "accuracy | loss");
  auto* count = app.add_subcommand("param-count", "parameter counts of the configured model and probe");

  for (auto* sub : {gen, pre, probe, eval, mipc, fit, count}) common[sub->get_name()].attach(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    RunConfig cfg = common[name].resolve();
    if (alpha >= 0) cfg.set("mip.alpha", std::to_string(alpha));
    if (!direction.empty()) cfg.set("fit.direction", direction);
    if (name == "probe" && checkpoint.empty() == !random_encoder) {
      throw UsageError("probe needs exactly one of --checkpoint or --random-encoder");
    }
    Run run(name, common[name], cfg, argc, argv);
    int rc = 0;
    if (name == "gen-data") rc = cmd_gen_data(cfg, run);
    else if (name == "pretrain") rc = cmd_pretrain(cfg, run, data_path);
    else if (name == "probe") rc = cmd_probe(cfg, run, checkpoint, random_encoder, train_path, test_path);
    else if (name == "eval") rc = cmd_eval(cfg, run, checkpoint, data_path);
    else if (name == "mip") rc = cmd_mip(cfg, run);
    else if (name == "fit-scaling") rc = cmd_fit_scaling(cfg, run, input);
    else if (name == "param-count") rc = cmd_param_count(cfg, run);
    run.finish();
    return rc;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 1;
  } catch (const harness::TrainingDiverged& e) {
    std::cerr << "training diverged at " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
