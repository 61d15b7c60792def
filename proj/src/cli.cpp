#include "qtw/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "qtw/baseline.hpp"
#include "qtw/digest.hpp"
#include "qtw/eval.hpp"
#include "qtw/heads.hpp"
#include "qtw/kvtext.hpp"
#include "qtw/sim.hpp"
#include "qtw/train.hpp"
#include "qtw/trajectory_io.hpp"

namespace qtw::cli {

namespace fs = std::filesystem;

namespace {

// Option precedence: defaults < config file < QTW_* environment < flags.
struct Resolver {
  kvtext::Document config;
  std::string section;

  template <typename T, typename Parse>
  void apply(const CLI::Option* opt, const char* key, T& value, Parse parse) const {
    if (opt && opt->count() > 0) return;  // flag wins
    std::string full = section + "." + key;
    if (config.has(full)) value = parse(config.get(full));
  }

  void apply_f64(const CLI::Option* o, const char* k, double& v) const {
    apply(o, k, v, [](const std::string& s) { return kvtext::parse_f64(s); });
  }
  void apply_u64(const CLI::Option* o, const char* k, uint64_t& v) const {
    apply(o, k, v, [](const std::string& s) { return std::stoull(s); });
  }
  void apply_int(const CLI::Option* o, const char* k, int& v) const {
    apply(o, k, v, [](const std::string& s) { return std::stoi(s); });
  }
  void apply_str(const CLI::Option* o, const char* k, std::string& v) const {
    apply(o, k, v, [](const std::string& s) { return s; });
  }
  void apply_bool(const CLI::Option* o, const char* k, bool& v) const {
    apply(o, k, v, [](const std::string& s) { return s == "1" || s == "true"; });
  }
};

std::optional<uint64_t> env_u64(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::strtoull(v, nullptr, 10);
}

struct RunManifest {
  std::string subcommand;
  kvtext::Document resolved;
  std::vector<std::pair<std::string, std::string>> inputs;   // path, digest
  std::vector<std::pair<std::string, std::string>> outputs;  // path, digest
  uint64_t seed = 0;
  double wall_seconds = 0.0;

  void write(const fs::path& path) const {
    kvtext::Document doc;
    doc.set("format", "qtw-run/1");
    doc.set("tool_version", kToolVersion);
    doc.set("subcommand", subcommand);
    doc.set_u64("seed", seed);
    doc.set_f64("wall_seconds", wall_seconds);  // non-deterministic by nature
    for (const auto& [k, v] : resolved.entries) doc.set("config." + k, v);
    for (const auto& [p, d] : inputs) {
      doc.set("input", p);
      doc.set("input_digest", d);
    }
    for (const auto& [p, d] : outputs) {
      doc.set("output", p);
      doc.set("output_digest", d);
    }
    kvtext::save(path, doc);
  }
};

void emit_path(const fs::path& p) { std::cout << p.string() << "\n"; }

train::Dataset load_dataset(const fs::path& file, const fs::path& stats_file) {
  train::Dataset d;
  d.trajs = sim::read_qtrj(file);
  d.digest = digest::file_digest(file);
  d.stats = sim::read_stats(stats_file);
  if (d.stats.source_digest != d.digest)
    throw DigestMismatchError("stats sidecar was computed from digest " + d.stats.source_digest +
                              " but " + file.string() + " has digest " + d.digest);
  return d;
}

// --- gen ---

int cmd_gen(CLI::App& app, const Resolver& res, uint64_t env_seed, bool env_seed_set,
            int workers) {
  auto t0 = std::chrono::steady_clock::now();
  sim::DatasetSpec spec;
  std::string out_dir;
  uint64_t seed = 0;
  bool seed_given = false;

  CLI::Option* o_out = app.get_option("--out");
  out_dir = app.get_option("--out")->as<std::string>();
  (void)o_out;

  spec.n_train = app.get_option("--train")->as<uint64_t>();
  spec.n_test = app.get_option("--test")->as<uint64_t>();
  spec.T = app.get_option("--T")->as<uint64_t>();
  spec.dt = app.get_option("--dt")->as<double>();
  spec.eta = app.get_option("--eta")->as<double>();
  spec.gamma_lo = app.get_option("--gamma-lo")->as<double>();
  spec.gamma_hi = app.get_option("--gamma-hi")->as<double>();
  spec.omega_lo = app.get_option("--omega-lo")->as<double>();
  spec.omega_hi = app.get_option("--omega-hi")->as<double>();
  spec.tau_lo = app.get_option("--tau-lo")->as<uint64_t>();
  spec.tau_hi = app.get_option("--tau-hi")->as<uint64_t>();
  spec.base_seed_train = app.get_option("--seed-train")->as<uint64_t>();
  spec.base_seed_test = app.get_option("--seed-test")->as<uint64_t>();
  spec.resample_gamma_at_switch = app.get_option("--resample-gamma")->as<bool>();
  seed = app.get_option("--seed")->as<uint64_t>();
  seed_given = app.get_option("--seed")->count() > 0;

  res.apply_u64(app.get_option("--train"), "train", spec.n_train);
  res.apply_u64(app.get_option("--test"), "test", spec.n_test);
  res.apply_u64(app.get_option("--T"), "T", spec.T);
  res.apply_f64(app.get_option("--dt"), "dt", spec.dt);
  res.apply_f64(app.get_option("--eta"), "eta", spec.eta);
  res.apply_f64(app.get_option("--gamma-lo"), "gamma_lo", spec.gamma_lo);
  res.apply_f64(app.get_option("--gamma-hi"), "gamma_hi", spec.gamma_hi);
  res.apply_f64(app.get_option("--omega-lo"), "omega_lo", spec.omega_lo);
  res.apply_f64(app.get_option("--omega-hi"), "omega_hi", spec.omega_hi);
  res.apply_u64(app.get_option("--tau-lo"), "tau_lo", spec.tau_lo);
  res.apply_u64(app.get_option("--tau-hi"), "tau_hi", spec.tau_hi);
  res.apply_u64(app.get_option("--seed-train"), "seed_train", spec.base_seed_train);
  res.apply_u64(app.get_option("--seed-test"), "seed_test", spec.base_seed_test);

  // tau defaults scale with T ([400, 1600] at T = 2000).
  bool tau_given = app.get_option("--tau-lo")->count() > 0 ||
                   app.get_option("--tau-hi")->count() > 0 || res.config.has("gen.tau_lo");
  if (!tau_given && spec.T != 2000) {
    spec.tau_lo = spec.T / 5;
    spec.tau_hi = 4 * spec.T / 5;
  }

  if (!seed_given && env_seed_set) {
    seed = env_seed;
    seed_given = true;
  }
  bool split_seeds_given = app.get_option("--seed-train")->count() > 0 ||
                           app.get_option("--seed-test")->count() > 0 ||
                           res.config.has("gen.seed_train");
  if (seed_given && !split_seeds_given) {
    spec.base_seed_train = rng::mix64(seed, 1);
    spec.base_seed_test = rng::mix64(seed, 2);
  }

  sim::DatasetManifest m = sim::generate_dataset(spec, out_dir, workers);

  RunManifest run;
  run.subcommand = "gen";
  run.seed = seed;
  run.outputs = {{m.train_file, m.train_digest},
                 {m.test_file, m.test_digest},
                 {m.stats_file, digest::file_digest(m.stats_file)}};
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  run.write(fs::path(out_dir) / "run-gen.txt");

  emit_path(m.train_file);
  emit_path(m.test_file);
  emit_path(m.stats_file);
  emit_path(fs::path(out_dir) / "manifest.txt");
  return 0;
}

// --- train ---

int cmd_train(CLI::App& app, const Resolver& res, uint64_t env_seed, bool env_seed_set,
              int workers) {
  auto t0 = std::chrono::steady_clock::now();

  std::string data_dir = app.get_option("--data")->as<std::string>();
  std::string out = app.get_option("--out")->as<std::string>();
  std::string model = app.get_option("--model")->as<std::string>();
  std::string head = app.get_option("--head")->as<std::string>();
  int hidden = app.get_option("--hidden")->as<int>();
  int layers = app.get_option("--layers")->as<int>();
  int epochs = app.get_option("--epochs")->as<int>();
  double lr = app.get_option("--lr")->as<double>();
  int batch = app.get_option("--batch")->as<int>();
  uint64_t seed = app.get_option("--seed")->as<uint64_t>();
  int tbptt = app.get_option("--tbptt")->as<int>();
  bool save_opt = app.get_option("--save-optimizer")->as<bool>();
  std::string log_path = app.get_option("--log")->as<std::string>();
  std::string grad_norms = app.get_option("--grad-norms")->as<std::string>();

  res.apply_str(app.get_option("--model"), "model", model);
  res.apply_str(app.get_option("--head"), "head", head);
  res.apply_int(app.get_option("--hidden"), "hidden", hidden);
  res.apply_int(app.get_option("--layers"), "layers", layers);
  res.apply_int(app.get_option("--epochs"), "epochs", epochs);
  res.apply_f64(app.get_option("--lr"), "lr", lr);
  res.apply_int(app.get_option("--batch"), "batch", batch);
  res.apply_int(app.get_option("--tbptt"), "tbptt", tbptt);
  if (app.get_option("--seed")->count() == 0) {
    if (env_seed_set)
      seed = env_seed;
    else if (res.config.has("train.seed"))
      seed = std::stoull(res.config.get("train.seed"));
  }

  // Validate the model description before touching the filesystem.
  heads::ModelSpec spec;
  spec.backbone.kind = backbones::kind_from_string(model);
  spec.backbone.hidden_dim = hidden;
  spec.backbone.layers = layers;
  spec.backbone.seed = seed;
  spec.head = heads::head_from_string(head);
  spec.backbone.validate();

  fs::path dir(data_dir);
  fs::path train_file = fs::is_directory(dir) ? dir / "train.qtrj" : dir;
  fs::path stats_file = fs::is_directory(dir) ? dir / "stats.txt"
                                              : train_file.parent_path() / "stats.txt";
  train::Dataset data = load_dataset(train_file, stats_file);

  train::TrainRunConfig run_cfg;
  run_cfg.epochs = epochs;
  run_cfg.batch = batch;
  run_cfg.lr = lr;
  run_cfg.seed = seed;
  run_cfg.tbptt_window = tbptt;
  run_cfg.workers = workers;
  run_cfg.save_optimizer = save_opt;

  train::FitResult fit = train::fit(run_cfg, spec, data);
  train::save_checkpoint(out, fit.best);
  if (log_path.empty()) log_path = out + ".epochs.txt";
  train::write_epoch_log(log_path, fit.log);

  if (!grad_norms.empty()) {
    heads::ModelParams params;
    params.layout = heads::model_layout(fit.best.spec);
    params.values = fit.best.params;
    std::vector<size_t> idx;
    for (size_t i = 0; i < std::min<size_t>(data.trajs.size(), 8); ++i) idx.push_back(i);
    kvtext::Document doc;
    doc.set("format", "qtw-gradnorms/1");
    for (const auto& gn : train::layerwise_grad_norms(fit.best.spec, params, data, idx))
      doc.set_f64(gn.name, gn.l2);
    kvtext::save(grad_norms, doc);
  }

  RunManifest run;
  run.subcommand = "train";
  run.seed = seed;
  run.inputs = {{train_file.string(), data.digest}};
  run.outputs = {{out, digest::file_digest(out)}, {log_path, digest::file_digest(log_path)}};
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  run.write(out + ".run.txt");

  emit_path(out);
  emit_path(log_path);
  if (!grad_norms.empty()) emit_path(grad_norms);
  if (fit.diverged) {
    std::cerr << "training diverged; last finite checkpoint written\n";
    return 4;
  }
  return 0;
}

// --- eval ---

int cmd_eval(CLI::App& app, int workers) {
  std::string ckpt_path = app.get_option("--ckpt")->as<std::string>();
  std::string data_path = app.get_option("--data")->as<std::string>();
  std::string out = app.get_option("--out")->as<std::string>();
  std::string csv = app.get_option("--csv")->as<std::string>();

  train::Checkpoint ckpt = train::load_checkpoint(ckpt_path);
  std::vector<sim::Trajectory> test = sim::read_qtrj(data_path);
  std::string test_digest = digest::file_digest(data_path);

  heads::ModelParams params;
  params.layout = heads::model_layout(ckpt.spec);
  params.values = ckpt.params;
  sim::StandardizationStats stats{ckpt.mu, ckpt.sigma, ckpt.train_digest};

  eval::Predictor predictor = [&](const sim::Trajectory& traj, size_t) {
    std::vector<double> rec = sim::standardize(traj.record, stats);
    heads::RolloutResult r =
        heads::rollout(ckpt.spec, params, rec, qcore::DensityMatrix::ground());
    return eval::PredictionSet{std::move(r.predictions), std::move(r.kraus)};
  };

  eval::EvalReport rep =
      eval::evaluate(backbones::to_string(ckpt.spec.backbone.kind), heads::to_string(ckpt.spec.head),
                     test, test_digest, ckpt.train_digest, predictor, workers);
  if (out.empty()) out = ckpt_path + ".report.txt";
  eval::write_report(out, rep);
  emit_path(out);
  if (!csv.empty()) {
    eval::write_csv(csv, {rep});
    emit_path(csv);
  }
  return 0;
}

// --- baseline ---

int cmd_baseline(CLI::App& app, int workers) {
  std::string data_path = app.get_option("--data")->as<std::string>();
  std::string mode = app.get_option("--mode")->as<std::string>();
  std::string out = app.get_option("--out")->as<std::string>();
  std::string csv = app.get_option("--csv")->as<std::string>();
  std::string events_path = app.get_option("--events")->as<std::string>();
  int window = app.get_option("--window")->as<int>();

  std::vector<sim::Trajectory> test = sim::read_qtrj(data_path);
  std::string test_digest = digest::file_digest(data_path);

  baseline::AdaptiveConfig cfg;
  cfg.fft_window = window;

  eval::EvalReport rep;
  std::vector<std::vector<baseline::FilterEvent>> all_events(test.size());
  if (mode == "known") {
    eval::Predictor predictor = [&](const sim::Trajectory& traj, size_t) {
      eval::PredictionSet ps;
      for (const auto& s : baseline::exact_filter(traj)) ps.predictions.push_back(s.mat());
      return ps;
    };
    rep = eval::evaluate("sme-exact", "physics", test, test_digest, "", predictor, workers);
    rep.policy = "known-parameter SME filter driven by the recorded increments";
  } else if (mode == "adaptive") {
    eval::Predictor predictor = [&](const sim::Trajectory& traj, size_t i) {
      baseline::AdaptiveResult r = baseline::adaptive_filter(traj, cfg);
      eval::PredictionSet ps;
      for (const auto& s : r.states) ps.predictions.push_back(s.mat());
      all_events[i] = std::move(r.events);
      return ps;
    };
    rep = eval::evaluate("sme-adaptive", "physics", test, test_digest, "", predictor, workers);
    rep.policy =
        "protocol knowledge: axis schedule sigma_x->sigma_y toggled on innovation detection, "
        "gamma constant, rho0 = ground, parameter ranges as priors; window " +
        std::to_string(window);
  } else {
    throw ConfigError("unknown baseline mode: " + mode + " (expected known|adaptive)");
  }

  if (out.empty()) out = data_path + "." + mode + ".report.txt";
  eval::write_report(out, rep);
  emit_path(out);
  if (!csv.empty()) {
    eval::write_csv(csv, {rep});
    emit_path(csv);
  }
  if (!events_path.empty() && mode == "adaptive") {
    kvtext::Document doc;
    doc.set("format", "qtw-events/1");
    for (size_t i = 0; i < all_events.size(); ++i)
      for (const auto& e : all_events[i]) {
        doc.set_u64("traj", i);
        doc.set_u64("step", e.step);
        doc.set_f64("omega_hat", e.omega_hat);
        doc.set_f64("gamma_hat", e.gamma_hat);
        doc.set_f64("ema", e.ema);
        doc.set_u64("detected", e.detected ? 1 : 0);
      }
    kvtext::save(events_path, doc);
    emit_path(events_path);
  }
  return 0;
}

// --- report ---

int cmd_report(CLI::App& app) {
  std::vector<std::string> inputs = app.get_option("--inputs")->as<std::vector<std::string>>();
  std::string format = app.get_option("--format")->as<std::string>();
  std::string out = app.get_option("--out")->as<std::string>();

  std::vector<eval::EvalReport> reps;
  for (const auto& p : inputs) reps.push_back(eval::read_report(p));

  // Pair kraus/direct rows of the same model for the ablation table.
  std::vector<eval::AblationDelta> deltas;
  for (const auto& k : reps) {
    if (k.head != "kraus") continue;
    for (const auto& b : reps) {
      if (b.head == "direct" && b.model == k.model) deltas.push_back(eval::ablation_delta(k, b));
    }
  }

  if (format == "csv") {
    eval::write_csv(out + ".rows.csv", reps);
    emit_path(out + ".rows.csv");
    std::ofstream f(out + ".delta.csv", std::ios::binary);
    if (!f) throw IoError("cannot write delta csv");
    f << "model,fid_baseline,fid_kraus,delta,fid_full_baseline,fid_full_kraus,delta_full\n";
    for (const auto& d : deltas)
      f << d.model << ',' << kvtext::format_f64(d.fid_baseline) << ','
        << kvtext::format_f64(d.fid_kraus) << ',' << kvtext::format_f64(d.delta) << ','
        << kvtext::format_f64(d.fid_full_baseline) << ',' << kvtext::format_f64(d.fid_full_kraus)
        << ',' << kvtext::format_f64(d.delta_full) << "\n";
    emit_path(out + ".delta.csv");
  } else if (format == "text") {
    kvtext::Document doc;
    doc.set("format", "qtw-merged/1");
    for (const auto& r : reps) {
      doc.set("model", r.model);
      doc.set("head", r.head);
      doc.set_f64("fid_proxy", r.aggregate.fid_proxy);
      doc.set_f64("fid_full", r.aggregate.fid_full);
      doc.set_f64("bures", r.aggregate.bures);
      doc.set_f64("fid_p1", r.aggregate.fid_p1);
      doc.set_f64("fid_p2", r.aggregate.fid_p2);
      doc.set_u64("physical", r.physical ? 1 : 0);
    }
    for (const auto& d : deltas) {
      doc.set("delta_model", d.model);
      doc.set_f64("delta", d.delta);
    }
    kvtext::save(out + ".merged.txt", doc);
    emit_path(out + ".merged.txt");
  } else {
    throw ConfigError("unknown report format: " + format);
  }
  return 0;
}

// --- check ---

int run_invariant_suite();

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"qtw: qubit trajectory workbench"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  std::string config_path;
  app.add_option("--config", config_path, "key = value config file with [gen]/[train] sections");

  // gen
  CLI::App* gen = app.add_subcommand("gen", "generate a switching-trajectory dataset");
  gen->fallthrough();
  std::string gen_out;
  sim::DatasetSpec def;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--train", def.n_train, "training trajectories");
  gen->add_option("--test", def.n_test, "test trajectories");
  gen->add_option("--T", def.T, "steps per trajectory");
  gen->add_option("--dt", def.dt, "time step");
  gen->add_option("--eta", def.eta, "detection efficiency");
  gen->add_option("--gamma-lo", def.gamma_lo, "");
  gen->add_option("--gamma-hi", def.gamma_hi, "");
  gen->add_option("--omega-lo", def.omega_lo, "");
  gen->add_option("--omega-hi", def.omega_hi, "");
  gen->add_option("--tau-lo", def.tau_lo, "");
  gen->add_option("--tau-hi", def.tau_hi, "");
  gen->add_option("--seed-train", def.base_seed_train, "");
  gen->add_option("--seed-test", def.base_seed_test, "");
  uint64_t gen_seed = 0;
  gen->add_option("--seed", gen_seed, "derives both split seeds via mix64");
  bool resample = false;
  gen->add_flag("--resample-gamma", resample, "resample gamma at the switch (qtrj v2)");

  // train
  CLI::App* tr = app.add_subcommand("train", "train a model");
  tr->fallthrough();
  std::string tr_data, tr_out, tr_model = "gru", tr_head = "kraus", tr_log, tr_gn;
  int tr_hidden = 32, tr_layers = 1, tr_epochs = 100, tr_batch = 16, tr_tbptt = 0;
  double tr_lr = 5e-4;
  uint64_t tr_seed = 1;
  bool tr_save_opt = false;
  tr->add_option("--data", tr_data, "dataset directory or train.qtrj path")->required();
  tr->add_option("--out", tr_out, "checkpoint output path")->required();
  tr->add_option("--model", tr_model, "rnn|gru|lstm|esn");
  tr->add_option("--head", tr_head, "kraus|direct");
  tr->add_option("--hidden", tr_hidden, "hidden dimension");
  tr->add_option("--layers", tr_layers, "1 or 2");
  tr->add_option("--epochs", tr_epochs, "");
  tr->add_option("--lr", tr_lr, "");
  tr->add_option("--batch", tr_batch, "");
  tr->add_option("--seed", tr_seed, "");
  tr->add_option("--tbptt", tr_tbptt, "truncation window (0 = full BPTT)");
  tr->add_option("--log", tr_log, "epoch log path");
  tr->add_option("--grad-norms", tr_gn, "write layer-wise gradient norms here");
  tr->add_flag("--save-optimizer", tr_save_opt, "persist optimizer state in the checkpoint");

  // eval
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a test set");
  ev->fallthrough();
  std::string ev_ckpt, ev_data, ev_out, ev_csv;
  ev->add_option("--ckpt", ev_ckpt, "")->required();
  ev->add_option("--data", ev_data, "")->required();
  ev->add_option("--out", ev_out, "report path");
  ev->add_option("--csv", ev_csv, "also write a csv row");

  // baseline
  CLI::App* bl = app.add_subcommand("baseline", "physics-based SME filters");
  bl->fallthrough();
  std::string bl_data, bl_mode = "adaptive", bl_out, bl_csv, bl_events;
  int bl_window = 100;
  bl->add_option("--data", bl_data, "")->required();
  bl->add_option("--mode", bl_mode, "known|adaptive");
  bl->add_option("--out", bl_out, "report path");
  bl->add_option("--csv", bl_csv, "");
  bl->add_option("--events", bl_events, "per-step estimate/event log (adaptive)");
  bl->add_option("--window", bl_window, "estimation window (100 reference, 400 recommended)");

  // report
  CLI::App* rp = app.add_subcommand("report", "merge eval reports into ablation tables");
  rp->fallthrough();
  std::vector<std::string> rp_inputs;
  std::string rp_format = "csv", rp_out;
  rp->add_option("--inputs", rp_inputs, "report files")->required()->expected(-1);
  rp->add_option("--format", rp_format, "csv|text");
  rp->add_option("--out", rp_out, "output prefix")->required();

  // check
  CLI::App* ck = app.add_subcommand("check", "run the quick invariant suite");
  ck->fallthrough();
  (void)ck;

  int workers = 1;
  app.add_option("--workers", workers, "parallel trajectory workers");

  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    Resolver res;
    if (!config_path.empty()) res.config = kvtext::load(config_path);

    bool env_seed_set = env_u64("QTW_SEED").has_value();
    uint64_t env_seed = env_seed_set ? *env_u64("QTW_SEED") : 0;
    if (app.get_option("--workers")->count() == 0) {
      if (auto w = env_u64("QTW_WORKERS")) workers = static_cast<int>(*w);
    }
    if (workers < 1) workers = 1;

    if (gen->parsed()) {
      res.section = "gen";
      return cmd_gen(*gen, res, env_seed, env_seed_set, workers);
    }
    if (tr->parsed()) {
      res.section = "train";
      return cmd_train(*tr, res, env_seed, env_seed_set, workers);
    }
    if (ev->parsed()) {
      res.section = "eval";
      return cmd_eval(*ev, workers);
    }
    if (bl->parsed()) {
      res.section = "baseline";
      return cmd_baseline(*bl, workers);
    }
    if (rp->parsed()) {
      res.section = "report";
      return cmd_report(*rp);
    }
    if (ck->parsed()) return run_invariant_suite();
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DigestMismatchError& e) {
    std::cerr << "digest mismatch: " << e.what() << "\n";
    return 5;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 4;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

namespace {

int run_invariant_suite() {
  int failures = 0;
  auto check = [&](const char* name, bool ok) {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << name << "\n";
    if (!ok) ++failures;
  };

  // Bloch round trip.
  {
    rng::SplitMix64 s{12345};
    bool ok = true;
    for (int i = 0; i < 10000 && ok; ++i) {
      qcore::BlochVector b{s.next_uniform(-1, 1), s.next_uniform(-1, 1), s.next_uniform(-1, 1)};
      if (b.norm2() > 1.0) continue;
      qcore::BlochVector r = qcore::rho_to_bloch(qcore::bloch_to_rho(b));
      ok = std::abs(r.rx - b.rx) < 1e-12 && std::abs(r.ry - b.ry) < 1e-12 &&
           std::abs(r.rz - b.rz) < 1e-12;
    }
    check("bloch round trip (1e4 states, 1e-12)", ok);
  }

  // Stiefel / CPTP sweep.
  {
    rng::SplitMix64 s{777};
    bool ok = true;
    for (int i = 0; i < 10000 && ok; ++i) {
      heads::CMat42 v;
      for (auto& z : v.e) z = qcore::Complex(s.next_uniform(-1, 1), s.next_uniform(-1, 1));
      qcore::KrausPair k = heads::kraus_from_q(heads::thin_qr(v));
      ok = qcore::kraus_completeness_error(k) <= 1e-12;
    }
    check("thin QR completeness (1e4 draws, 1e-12)", ok);
  }

  // Kraus update validity.
  {
    rng::SplitMix64 s{888};
    bool ok = true;
    for (int i = 0; i < 2000 && ok; ++i) {
      heads::CMat42 v;
      for (auto& z : v.e) z = qcore::Complex(s.next_uniform(-1, 1), s.next_uniform(-1, 1));
      qcore::KrausPair k = heads::kraus_from_q(heads::thin_qr(v));
      qcore::BlochVector b{s.next_uniform(-1, 1), s.next_uniform(-1, 1), s.next_uniform(-1, 1)};
      if (b.norm2() > 1.0) continue;
      qcore::DensityMatrix rho = heads::kraus_update(qcore::bloch_to_rho(b), k);
      auto [lmin, lmax] = qcore::eigvals_hermitian_2x2(rho.mat());
      (void)lmax;
      ok = lmin >= -1e-12 && std::abs(rho.mat().trace().real() - 1.0) <= 1e-12;
    }
    check("kraus update CPTP outputs (2e3 draws)", ok);
  }

  // AD quadratic gradient.
  {
    std::vector<double> p{0.3, -0.8, 1.7};
    auto f = [](const std::vector<double>& params, std::vector<double>* grad) {
      ad::Tape tape(&params);
      ad::Var x = tape.param(0, ad::vec(3));
      ad::Var loss = tape.scale(tape.sum(tape.mul(x, x)), 0.5);
      if (grad) tape.backward(loss, *grad);
      return tape.scalar_val(loss);
    };
    check("reverse-mode quadratic gradient (1e-9)", ad::grad_check(f, p) <= 1e-9);
  }

  // Euler step trace preservation.
  {
    rng::GaussianStream g(4242);
    qcore::DensityMatrix rho = qcore::DensityMatrix::ground();
    bool ok = true;
    for (int t = 0; t < 2000 && ok; ++t) {
      sim::GuardedStep st = sim::advance_guarded(rho, 2.0 * qcore::pauli_x(), 0.5, 1.0, 0.005,
                                                 std::sqrt(0.005) * g.next());
      rho = st.state;
      ok = std::abs(rho.mat().trace().real() - 1.0) <= 1e-14 &&
           (rho.mat() * rho.mat()).trace().real() <= 1.0 + 1e-9;
    }
    check("guarded SME step trace/purity (2e3 steps)", ok);
  }

  std::cout << (failures == 0 ? "all checks passed\n" : "FAILURES: " + std::to_string(failures) + "\n");
  return failures == 0 ? 0 : 1;
}

}  // namespace

}  // namespace qtw::cli
