#include "qtw/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "qtw/kvtext.hpp"
#include "qtw/parallel.hpp"

namespace qtw::train {

double frobenius_loss(const std::vector<CMat2>& pred, const std::vector<CMat2>& truth) {
  if (pred.size() != truth.size()) throw ContractError("frobenius_loss: length mismatch");
  if (pred.empty()) throw ContractError("frobenius_loss: empty sequences");
  double s = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    CMat2 d = pred[i] - truth[i];
    for (const auto& z : d.e) s += std::norm(z);
  }
  return s / static_cast<double>(pred.size());
}

void adamw_step(std::vector<double>& params, const std::vector<double>& grads,
                const backbones::ParamLayout& layout, OptimState& state) {
  if (params.size() != grads.size()) throw ContractError("adamw_step: size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  for (const auto& b : layout.blocks) {
    if (!b.trainable) continue;
    for (int i = b.offset; i < b.offset + b.len; ++i)
      if (!std::isfinite(grads[i]))
        throw DivergenceError("non-finite gradient in block " + b.name);
  }
  ++state.step;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (const auto& b : layout.blocks) {
    if (!b.trainable) continue;
    for (int i = b.offset; i < b.offset + b.len; ++i) {
      double g = grads[i];
      state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
      state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
      double mhat = state.m[i] / bc1;
      double vhat = state.v[i] / bc2;
      params[i] -= state.lr * (mhat / (std::sqrt(vhat) + state.eps) + state.weight_decay * params[i]);
    }
  }
}

bool plateau_step(SchedulerState& s, double epoch_loss, double& lr) {
  if (!s.seen || epoch_loss < s.best_loss * (1.0 - s.min_improve_rel)) {
    s.best_loss = epoch_loss;
    s.seen = true;
    s.epochs_since_improve = 0;
    return false;
  }
  ++s.epochs_since_improve;
  if (s.epochs_since_improve >= s.patience) {
    lr *= s.factor;
    s.epochs_since_improve = 0;
    return true;
  }
  return false;
}

// --- Checkpoint I/O ---

namespace {

constexpr char kCkptMagic[4] = {'Q', 'C', 'K', 'P'};

kvtext::Document checkpoint_header(const Checkpoint& c) {
  kvtext::Document doc;
  doc.set("format", "qtw-checkpoint/1");
  doc.set("model", backbones::to_string(c.spec.backbone.kind));
  doc.set_u64("hidden", static_cast<uint64_t>(c.spec.backbone.hidden_dim));
  doc.set_u64("layers", static_cast<uint64_t>(c.spec.backbone.layers));
  doc.set_u64("input_dim", static_cast<uint64_t>(c.spec.backbone.input_dim));
  doc.set_f64("esn_scaling", c.spec.backbone.esn_scaling);
  doc.set("head", heads::to_string(c.spec.head));
  doc.set_u64("seed", c.seed);
  doc.set_u64("epoch", static_cast<uint64_t>(c.epoch));
  doc.set_f64("metric", c.metric);
  doc.set_f64("mu", c.mu);
  doc.set_f64("sigma", c.sigma);
  doc.set("train_digest", c.train_digest);
  doc.set_u64("param_count", c.params.size());
  doc.set_u64("has_optimizer", c.has_optimizer ? 1 : 0);
  if (c.has_optimizer) {
    doc.set_u64("opt_step", static_cast<uint64_t>(c.optim.step));
    doc.set_f64("opt_lr", c.optim.lr);
  }
  return doc;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::string header = checkpoint_header(c).serialize();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(kCkptMagic, 4);
  uint32_t version = 1;
  f.write(reinterpret_cast<const char*>(&version), 4);
  uint64_t hlen = header.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  f.write(reinterpret_cast<const char*>(c.params.data()),
          static_cast<std::streamsize>(c.params.size() * sizeof(double)));
  if (c.has_optimizer) {
    f.write(reinterpret_cast<const char*>(c.optim.m.data()),
            static_cast<std::streamsize>(c.optim.m.size() * sizeof(double)));
    f.write(reinterpret_cast<const char*>(c.optim.v.data()),
            static_cast<std::streamsize>(c.optim.v.size() * sizeof(double)));
  }
  if (!f) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw IoError("not a QCKP file: " + path.string());
  uint32_t version = 0;
  f.read(reinterpret_cast<char*>(&version), 4);
  if (version != 1) throw IoError("unsupported checkpoint version");
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  std::string header(hlen, '\0');
  f.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw IoError("truncated checkpoint header");
  kvtext::Document doc = kvtext::parse(header);
  if (doc.get("format") != "qtw-checkpoint/1") throw IoError("unknown checkpoint format");

  Checkpoint c;
  c.spec.backbone.kind = backbones::kind_from_string(doc.get("model"));
  c.spec.backbone.hidden_dim = static_cast<int>(doc.get_u64("hidden"));
  c.spec.backbone.layers = static_cast<int>(doc.get_u64("layers"));
  c.spec.backbone.input_dim = static_cast<int>(doc.get_u64("input_dim"));
  c.spec.backbone.esn_scaling = doc.get_f64("esn_scaling");
  c.spec.head = heads::head_from_string(doc.get("head"));
  c.seed = doc.get_u64("seed");
  c.spec.backbone.seed = c.seed;
  c.epoch = static_cast<int>(doc.get_u64("epoch"));
  c.metric = doc.get_f64("metric");
  c.mu = doc.get_f64("mu");
  c.sigma = doc.get_f64("sigma");
  c.train_digest = doc.get("train_digest");
  uint64_t n = doc.get_u64("param_count");
  uint64_t expected = static_cast<uint64_t>(heads::model_layout(c.spec).total);
  if (n != expected)
    throw IoError("checkpoint parameter count " + std::to_string(n) +
                  " does not match the architecture formula " + std::to_string(expected));
  c.params.resize(n);
  f.read(reinterpret_cast<char*>(c.params.data()), static_cast<std::streamsize>(n * sizeof(double)));
  c.has_optimizer = doc.get_u64("has_optimizer") != 0;
  if (c.has_optimizer) {
    c.optim.step = doc.get_i64("opt_step");
    c.optim.lr = doc.get_f64("opt_lr");
    c.optim.m.resize(n);
    c.optim.v.resize(n);
    f.read(reinterpret_cast<char*>(c.optim.m.data()), static_cast<std::streamsize>(n * sizeof(double)));
    f.read(reinterpret_cast<char*>(c.optim.v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  }
  if (!f) throw IoError("truncated checkpoint blob");
  return c;
}

void write_epoch_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log) {
  kvtext::Document doc;
  doc.set("format", "qtw-epochs/1");
  for (const auto& r : log) {
    doc.set_u64("epoch", static_cast<uint64_t>(r.epoch));
    doc.set_f64("loss", r.loss);
    doc.set_f64("sel_bures", r.sel_bures);
    doc.set_f64("lr", r.lr);
  }
  kvtext::save(path, doc);
}

std::vector<EpochRecord> read_epoch_log(const std::filesystem::path& path) {
  kvtext::Document doc = kvtext::load(path);
  if (doc.get("format") != "qtw-epochs/1") throw IoError("unknown epoch log format");
  std::vector<EpochRecord> out;
  EpochRecord cur;
  for (const auto& [k, v] : doc.entries) {
    if (k == "epoch") {
      cur = EpochRecord{};
      cur.epoch = static_cast<int>(std::stoll(v));
    } else if (k == "loss") {
      cur.loss = kvtext::parse_f64(v);
    } else if (k == "sel_bures") {
      cur.sel_bures = kvtext::parse_f64(v);
    } else if (k == "lr") {
      cur.lr = kvtext::parse_f64(v);
      out.push_back(cur);
    }
  }
  return out;
}

// --- Training forward pass ---

ad::Var sequence_loss_tape(ad::Tape& tape, const heads::ModelSpec& spec,
                           const backbones::ParamLayout& layout,
                           const std::vector<double>& values, const sim::Trajectory& traj,
                           const sim::StandardizationStats& stats, int tbptt_window,
                           rng::GaussianStream* jitter, uint64_t* validity_checks,
                           uint64_t* validity_violations) {
  std::vector<double> record = sim::standardize(traj.record, stats);
  const size_t T = record.size();
  if (traj.states.size() != T) throw ContractError("trajectory states/record length mismatch");

  backbones::TapeParams tp = backbones::bind_params(tape, spec.backbone, layout, values);
  backbones::TapeState state = backbones::initial_state(tape, spec.backbone);

  auto head_var = [&](const char* name) {
    const backbones::ParamBlock& b = layout.find(name);
    for (size_t i = 0; i < layout.blocks.size(); ++i)
      if (layout.blocks[i].name == b.name) return tp.vars[i];
    throw ContractError("missing head block");
  };
  ad::Var w = head_var("head.W");
  ad::Var b = head_var("head.b");

  heads::CVar rho = heads::cmat_const(tape, qcore::DensityMatrix::ground().mat());
  ad::Var loss = tape.scalar(0.0);

  for (size_t t = 0; t < T; ++t) {
    if (tbptt_window > 0 && t > 0 && t % static_cast<size_t>(tbptt_window) == 0) {
      // Stop gradient flow at the window boundary: re-inject carried state as
      // constants.
      for (auto& h : state.h) h = tape.constant(tape.val(h), h.shape);
      for (auto& c : state.c) c = tape.constant(tape.val(c), c.shape);
      rho = {tape.constant(tape.val(rho.re), rho.re.shape),
             tape.constant(tape.val(rho.im), rho.im.shape)};
    }
    ad::Var x = tape.constant({record[t]}, ad::vec(1));
    ad::Var h = backbones::step_tape(tape, spec.backbone, layout, tp, state, x);

    heads::CVar pred;
    if (spec.head == heads::HeadKind::kraus) {
      heads::VVars v = heads::build_v_tape(tape, h, w, b, jitter);
      heads::QVars q = heads::thin_qr_tape(tape, v);
      heads::KrausVars k = heads::kraus_from_q_tape(tape, q);
      rho = heads::kraus_update_tape(tape, rho, k);
      pred = rho;
      if (validity_checks && t % 100 == 0) {
        ++*validity_checks;
        CMat2 m = heads::cmat_value(tape, pred);
        try {
          qcore::DensityMatrix check(m);
          (void)check;
        } catch (const DomainError&) {
          if (validity_violations) ++*validity_violations;
        }
      }
    } else {
      pred = heads::direct_predict_tape(tape, h, w, b, nullptr);
    }

    heads::CVar target = heads::cmat_const(tape, qcore::bloch_to_rho(traj.states[t]).mat());
    ad::Var dre = tape.sub(pred.re, target.re);
    ad::Var dim = tape.sub(pred.im, target.im);
    ad::Var step_loss = tape.add(tape.sum(tape.mul(dre, dre)), tape.sum(tape.mul(dim, dim)));
    loss = tape.add(loss, step_loss);
  }
  return tape.scale(loss, 1.0 / static_cast<double>(T));
}

// --- fit ---

namespace {

struct SelectionSplit {
  std::vector<size_t> train_idx;
  std::vector<size_t> sel_idx;
};

SelectionSplit make_split(size_t n) {
  SelectionSplit sp;
  if (n < 2) {
    sp.train_idx = {0};
    sp.sel_idx = {0};
    return sp;
  }
  size_t sel = std::max<size_t>(1, n / 10);
  for (size_t i = 0; i < n - sel; ++i) sp.train_idx.push_back(i);
  for (size_t i = n - sel; i < n; ++i) sp.sel_idx.push_back(i);
  return sp;
}

double selection_bures(const heads::ModelSpec& spec, const heads::ModelParams& params,
                       const Dataset& data, const std::vector<size_t>& sel_idx, int workers) {
  std::vector<double> per_traj(sel_idx.size(), 0.0);
  parallel::for_indexed(sel_idx.size(), workers, [&](size_t k) {
    const sim::Trajectory& traj = data.trajs[sel_idx[k]];
    std::vector<double> rec = sim::standardize(traj.record, data.stats);
    heads::RolloutResult r = heads::rollout(spec, params, rec, qcore::DensityMatrix::ground());
    double s = 0.0;
    for (size_t t = 0; t < r.predictions.size(); ++t) {
      qcore::DensityMatrix truth = qcore::bloch_to_rho(traj.states[t]);
      double f = qcore::fidelity_raw(r.predictions[t], truth).full;
      s += qcore::bures_from_fidelity(f);
    }
    per_traj[k] = s / static_cast<double>(r.predictions.size());
  });
  double total = 0.0;
  for (double v : per_traj) total += v;
  return total / static_cast<double>(per_traj.size());
}

}  // namespace

FitResult fit(const TrainRunConfig& run, const heads::ModelSpec& spec, const Dataset& data) {
  if (run.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (run.batch < 1) throw ConfigError("batch must be >= 1");
  if (data.trajs.empty()) throw ConfigError("empty training dataset");

  heads::ModelSpec local = spec;
  local.backbone.seed = run.seed;
  heads::ModelParams model = heads::init_model(local);

  SelectionSplit split = make_split(data.trajs.size());
  OptimState optim;
  optim.lr = run.lr;
  SchedulerState sched;

  FitResult result;
  result.best.spec = local;
  result.best.seed = run.seed;
  result.best.mu = data.stats.mu;
  result.best.sigma = data.stats.sigma;
  result.best.train_digest = data.digest;
  result.best.metric = std::numeric_limits<double>::infinity();
  result.best.params = model.values;

  std::vector<size_t> order = split.train_idx;
  std::vector<std::vector<double>> member_grads;
  std::vector<double> member_loss;
  std::vector<uint64_t> member_checks, member_violations;

  for (int epoch = 1; epoch <= run.epochs; ++epoch) {
    // Deterministic per-epoch shuffle.
    rng::SplitMix64 shuffle{rng::mix64(rng::mix64(run.seed, rng::kTagShuffle), epoch)};
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = shuffle.next_index(0, i);
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss_sum = 0.0;
    size_t epoch_count = 0;
    bool aborted = false;

    for (size_t start = 0; start < order.size() && !aborted; start += run.batch) {
      size_t bsize = std::min<size_t>(run.batch, order.size() - start);
      member_grads.assign(bsize, {});
      member_loss.assign(bsize, 0.0);
      member_checks.assign(bsize, 0);
      member_violations.assign(bsize, 0);

      parallel::for_indexed(bsize, run.workers, [&](size_t k) {
        const sim::Trajectory& traj = data.trajs[order[start + k]];
        rng::GaussianStream jitter(
            rng::mix64(rng::mix64(rng::mix64(run.seed, rng::kTagJitter), epoch), order[start + k]));
        ad::Tape tape(&model.values);
        ad::Var loss = sequence_loss_tape(tape, local, model.layout, model.values, traj,
                                          data.stats, run.tbptt_window,
                                          local.head == heads::HeadKind::kraus ? &jitter : nullptr,
                                          &member_checks[k], &member_violations[k]);
        member_loss[k] = tape.scalar_val(loss);
        if (std::isfinite(member_loss[k])) tape.backward(loss, member_grads[k]);
      });

      // Index-ordered reduction keeps results independent of worker count.
      double batch_loss = 0.0;
      std::vector<double> grad(model.values.size(), 0.0);
      for (size_t k = 0; k < bsize; ++k) {
        batch_loss += member_loss[k];
        result.sampled_rollout_checks += member_checks[k];
        result.sampled_rollout_violations += member_violations[k];
        if (!member_grads[k].empty())
          for (size_t i = 0; i < grad.size(); ++i) grad[i] += member_grads[k][i];
      }
      batch_loss /= static_cast<double>(bsize);
      if (!std::isfinite(batch_loss)) {
        result.diverged = true;
        aborted = true;
        break;
      }
      double inv = 1.0 / static_cast<double>(bsize);
      for (double& g : grad) g *= inv;

      if (run.clip_gradients) {
        double n2 = 0.0;
        for (const auto& blk : model.layout.blocks)
          if (blk.trainable)
            for (int i = blk.offset; i < blk.offset + blk.len; ++i) n2 += grad[i] * grad[i];
        double n = std::sqrt(n2);
        if (n > run.clip_norm) {
          double s = run.clip_norm / n;
          for (double& g : grad) g *= s;
        }
      }

      try {
        adamw_step(model.values, grad, model.layout, optim);
      } catch (const DivergenceError&) {
        result.diverged = true;
        aborted = true;
        break;
      }
      epoch_loss_sum += batch_loss * static_cast<double>(bsize);
      epoch_count += bsize;
    }

    if (result.diverged) {
      // Emit the last finite parameters (pre-divergence) as the checkpoint.
      if (!std::isfinite(result.best.metric)) {
        result.best.params = model.values;
        result.best.epoch = epoch;
      }
      break;
    }

    double epoch_loss = epoch_loss_sum / static_cast<double>(epoch_count);
    double sel = selection_bures(local, model, data, split.sel_idx, run.workers);

    EpochRecord rec{epoch, epoch_loss, sel, optim.lr};
    result.log.push_back(rec);

    if (sel < result.best.metric) {
      result.best.metric = sel;
      result.best.params = model.values;
      result.best.epoch = epoch;
    }
    plateau_step(sched, epoch_loss, optim.lr);
  }

  if (run.save_optimizer) {
    result.best.has_optimizer = true;
    result.best.optim = optim;
  }
  return result;
}

std::vector<GradNorm> layerwise_grad_norms(const heads::ModelSpec& spec,
                                           const heads::ModelParams& params, const Dataset& data,
                                           const std::vector<size_t>& batch_indices) {
  std::vector<double> grad(params.values.size(), 0.0);
  for (size_t idx : batch_indices) {
    ad::Tape tape(&params.values);
    ad::Var loss = sequence_loss_tape(tape, spec, params.layout, params.values, data.trajs[idx],
                                      data.stats, 0, nullptr);
    std::vector<double> g;
    tape.backward(loss, g);
    for (size_t i = 0; i < grad.size(); ++i) grad[i] += g[i] / static_cast<double>(batch_indices.size());
  }
  std::vector<GradNorm> out;
  for (const auto& b : params.layout.blocks) {
    double n2 = 0.0;
    for (int i = b.offset; i < b.offset + b.len; ++i) n2 += grad[i] * grad[i];
    out.push_back({b.name, std::sqrt(n2)});
  }
  return out;
}

}  // namespace qtw::train
