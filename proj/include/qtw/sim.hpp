#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qtw/qcore.hpp"
#include "qtw/rng.hpp"

namespace qtw::sim {

using qcore::BlochVector;
using qcore::CMat2;
using qcore::DensityMatrix;

// Physical parameters of one simulated run. gamma2 equals gamma unless the
// resample-at-switch variant is enabled.
struct SimParams {
  double gamma = 0.5;    // measurement strength, phase 1
  double gamma2 = 0.5;   // measurement strength, phase 2
  double omega1 = 2.0;   // Rabi frequency, phase 1 (H = omega1 sigma_x)
  double omega2 = 2.0;   // Rabi frequency, phase 2 (H = omega2 sigma_y)
  uint64_t tau = 1000;   // switch step index, 0 < tau < T
  double eta = 1.0;      // detection efficiency, (0, 1]
  double dt = 0.005;
  uint64_t T = 2000;
  uint64_t seed = 0;

  void validate() const;
};

// One simulated run. record[t] is the raw homodyne increment over step t;
// states[t] is the conditional state after step t (the state at time (t+1)dt;
// the initial ground state is implicit and not stored).
struct Trajectory {
  SimParams params;
  std::vector<double> record;
  std::vector<BlochVector> states;
  uint64_t psd_projections = 0;  // steps with lambda_min < -1e-8 before projection
};

struct DatasetSpec {
  uint64_t n_train = 2000;
  uint64_t n_test = 300;
  double gamma_lo = 0.3, gamma_hi = 0.8;
  double omega_lo = 0.5, omega_hi = 4.0;
  uint64_t tau_lo = 400, tau_hi = 1600;  // tau sampled uniformly in [tau_lo, tau_hi]
  double dt = 0.005;
  uint64_t T = 2000;
  double eta = 1.0;
  uint64_t base_seed_train = 45;
  uint64_t base_seed_test = 9999;
  bool resample_gamma_at_switch = false;

  void validate() const;
};

struct StandardizationStats {
  double mu = 0.0;
  double sigma = 1.0;
  std::string source_digest;  // hex digest of the training trajectory file
};

struct DatasetManifest {
  std::string train_file, test_file, stats_file;
  std::string train_digest, test_digest;
  DatasetSpec spec;
  uint64_t train_psd_projections = 0;
  uint64_t test_psd_projections = 0;
};

// Lindblad dissipator D[L](rho) = L rho L^dag - 1/2 {L^dag L, rho}.
CMat2 dissipator(const CMat2& L, const CMat2& rho);

// Measurement back-action H[L](rho) = L rho + rho L^dag - Tr(L rho + rho L^dag) rho.
CMat2 backaction(const CMat2& L, const CMat2& rho);

// One Euler-Maruyama step of the diffusive SME for L = sigma_z, followed by
// Hermitization and trace renormalization. The record increment uses the
// pre-step state: dy = sqrt(gamma eta) Tr[(L + L^dag) rho] dt + dW.
// PSD is not enforced here; the trajectory loop applies the projection guard.
struct EmResult {
  CMat2 state;  // Hermitian, unit trace
  double dy = 0.0;
};

EmResult em_step(const CMat2& rho, const CMat2& hamiltonian, double gamma, double eta,
                 double dt, double dW);

// em_step plus the PSD projection guard: eigenvalues are clipped at zero and
// the state renormalized whenever lambda_min drops below the DensityMatrix
// tolerance; excursions past -1e-8 are counted separately for the manifest.
struct GuardedStep {
  DensityMatrix state = DensityMatrix::ground();
  double dy = 0.0;
  bool projected = false;
  bool excursion = false;
};

GuardedStep advance_guarded(const DensityMatrix& rho, const CMat2& hamiltonian,
                            double gamma, double eta, double dt, double dW);

// Full run from the ground state: H = omega1 sigma_x for t < tau, then
// omega2 sigma_y. Deterministic in params.seed.
Trajectory simulate_trajectory(const SimParams& p);

// Draws the per-trajectory parameters for index i of a split (seed stream
// mix64(base_seed, i)), without integrating. Exposed for tests.
SimParams draw_params(const DatasetSpec& spec, uint64_t base_seed, uint64_t index);

// Writes train.qtrj / test.qtrj / stats.txt / manifest.txt into out_dir.
// workers bounds parallel trajectory simulation; output is independent of it.
DatasetManifest generate_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir,
                                 int workers = 1);

std::vector<double> standardize(const std::vector<double>& record, const StandardizationStats& s);

StandardizationStats compute_stats(const std::vector<Trajectory>& train);

}  // namespace qtw::sim
