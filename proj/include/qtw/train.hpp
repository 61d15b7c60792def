#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "qtw/heads.hpp"
#include "qtw/sim.hpp"

namespace qtw::train {

using qcore::CMat2;

// Mean over timesteps of ||pred - truth||_F^2 with the complex difference
// treated as 8 reals. Plain metric version; the training loss is the same
// expression built on the tape.
double frobenius_loss(const std::vector<CMat2>& pred, const std::vector<CMat2>& truth);

struct OptimState {
  std::vector<double> m, v;
  int64_t step = 0;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled-weight-decay Adam on the trainable blocks only; frozen reservoir
// blocks are untouched. Throws DivergenceError on non-finite gradients.
void adamw_step(std::vector<double>& params, const std::vector<double>& grads,
                const backbones::ParamLayout& layout, OptimState& state);

struct SchedulerState {
  double best_loss = 0.0;
  bool seen = false;
  int epochs_since_improve = 0;
  double factor = 0.5;
  int patience = 3;
  double min_improve_rel = 1e-4;
};

// ReduceLROnPlateau on the training loss: halves lr after `patience`
// consecutive epochs without relative improvement > min_improve_rel.
// Returns true when a reduction happened.
bool plateau_step(SchedulerState& s, double epoch_loss, double& lr);

struct TrainRunConfig {
  int epochs = 100;
  int batch = 16;
  double lr = 5e-4;
  uint64_t seed = 1;
  int tbptt_window = 0;  // 0 = full-sequence BPTT
  int workers = 1;
  bool clip_gradients = false;  // off in acceptance runs
  double clip_norm = 1.0;
  bool save_optimizer = false;
};

struct Checkpoint {
  heads::ModelSpec spec;
  std::vector<double> params;
  uint64_t seed = 0;
  int epoch = 0;          // 1-based epoch the checkpoint was selected from
  double metric = 0.0;    // selection Bures distance
  double mu = 0.0;        // training standardization
  double sigma = 1.0;
  std::string train_digest;
  bool has_optimizer = false;
  OptimState optim;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double sel_bures = 0.0;
  double lr = 0.0;
};

void write_epoch_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log);
std::vector<EpochRecord> read_epoch_log(const std::filesystem::path& path);

struct Dataset {
  std::vector<sim::Trajectory> trajs;
  sim::StandardizationStats stats;
  std::string digest;  // of the source file; empty for in-memory sets
};

struct FitResult {
  Checkpoint best;
  std::vector<EpochRecord> log;
  bool diverged = false;
  uint64_t sampled_rollout_checks = 0;      // 1% Kraus-state validity sampling
  uint64_t sampled_rollout_violations = 0;  // stays 0 for a working Kraus head
};

// Trains on all but the selection slice (the last max(1, n/10) trajectories),
// evaluates mean Bures on that slice each epoch, and returns the checkpoint
// with the minimum selection Bures. Deterministic in (config, spec, data).
FitResult fit(const TrainRunConfig& run, const heads::ModelSpec& spec, const Dataset& data);

// Loss and gradient of one batch at fixed parameters (training-mode forward
// with jitter off so the result is reproducible).
struct GradNorm {
  std::string name;
  double l2 = 0.0;
};

std::vector<GradNorm> layerwise_grad_norms(const heads::ModelSpec& spec,
                                           const heads::ModelParams& params, const Dataset& data,
                                           const std::vector<size_t>& batch_indices);

// Training-mode forward pass for one trajectory: builds the tape, returns the
// scalar loss Var. Exposed for gradient checks.
ad::Var sequence_loss_tape(ad::Tape& tape, const heads::ModelSpec& spec,
                           const backbones::ParamLayout& layout,
                           const std::vector<double>& values, const sim::Trajectory& traj,
                           const sim::StandardizationStats& stats, int tbptt_window,
                           rng::GaussianStream* jitter, uint64_t* validity_checks = nullptr,
                           uint64_t* validity_violations = nullptr);

}  // namespace qtw::train
