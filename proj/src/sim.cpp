#include "qtw/sim.hpp"

#include <cmath>
#include <string>

#include "qtw/digest.hpp"
#include "qtw/parallel.hpp"
#include "qtw/trajectory_io.hpp"

namespace qtw::sim {

void SimParams::validate() const {
  if (!(gamma > 0.0) || !(gamma2 > 0.0)) throw DomainError("gamma must be > 0");
  if (!(dt > 0.0)) throw DomainError("dt must be > 0");
  if (!(tau > 0 && tau < T)) throw DomainError("tau must satisfy 0 < tau < T");
  if (!(eta > 0.0 && eta <= 1.0)) throw DomainError("eta must be in (0, 1]");
}

void DatasetSpec::validate() const {
  if (n_train == 0 || n_test == 0) throw DomainError("empty split");
  if (base_seed_train == base_seed_test) throw DomainError("train and test base seeds must differ");
  if (!(gamma_lo > 0.0 && gamma_hi >= gamma_lo)) throw DomainError("bad gamma range");
  if (!(omega_hi >= omega_lo)) throw DomainError("bad omega range");
  if (!(tau_lo > 0 && tau_hi >= tau_lo && tau_hi < T)) throw DomainError("bad tau range");
  if (!(dt > 0.0) || T == 0) throw DomainError("bad dt/T");
  if (!(eta > 0.0 && eta <= 1.0)) throw DomainError("bad eta");
}

CMat2 dissipator(const CMat2& L, const CMat2& rho) {
  CMat2 ld = L.adjoint();
  return L * rho * ld - 0.5 * anticommutator(ld * L, rho);
}

CMat2 backaction(const CMat2& L, const CMat2& rho) {
  CMat2 s = L * rho + rho * L.adjoint();
  return s - s.trace().real() * rho;
}

EmResult em_step(const CMat2& rho, const CMat2& hamiltonian, double gamma, double eta,
                 double dt, double dW) {
  const CMat2 L = qcore::pauli_z();
  double root = std::sqrt(gamma * eta);

  // Record increment from the pre-step state: Tr[(L + L^dag) rho] = 2 <sigma_z>.
  double expect = ((L + L.adjoint()) * rho).trace().real();
  double dy = root * expect * dt + dW;

  CMat2 drift = qcore::Complex(0, -1) * commutator(hamiltonian, rho);
  CMat2 next = rho + dt * drift + (gamma * dt) * dissipator(L, rho) + (root * dW) * backaction(L, rho);

  next = next.hermitian_part();
  double tr = next.trace().real();
  if (std::abs(tr) <= 1e-12) throw IntegrationError("trace collapsed during Euler step");
  next = (1.0 / tr) * next;
  return {next, dy};
}

GuardedStep advance_guarded(const DensityMatrix& rho, const CMat2& hamiltonian, double gamma,
                            double eta, double dt, double dW) {
  EmResult em = em_step(rho.mat(), hamiltonian, gamma, eta, dt, dW);

  // For a unit-trace Hermitian 2x2, lambda_min < 0 iff the Bloch norm exceeds
  // one, and clipping eigenvalues at zero + renormalizing is exactly the
  // radial pull-back onto the unit sphere.
  BlochVector b = qcore::bloch_of(em.state);
  double n2 = b.norm2();
  double lmin = 0.5 * (1.0 - std::sqrt(n2));
  if (lmin < -qcore::kPsdTol) {
    double n = std::sqrt(n2);
    b.rx /= n;
    b.ry /= n;
    b.rz /= n;
    return {bloch_to_rho(b), em.dy, true, lmin < -1e-8};
  }
  return {DensityMatrix(em.state), em.dy, false, false};
}

Trajectory simulate_trajectory(const SimParams& p) {
  p.validate();
  Trajectory traj;
  traj.params = p;
  traj.record.resize(p.T);
  traj.states.reserve(p.T);

  rng::GaussianStream noise(p.seed);
  const CMat2 hx = p.omega1 * qcore::pauli_x();
  const CMat2 hy = p.omega2 * qcore::pauli_y();
  const double sqrt_dt = std::sqrt(p.dt);

  DensityMatrix rho = DensityMatrix::ground();
  for (uint64_t t = 0; t < p.T; ++t) {
    bool phase1 = t < p.tau;
    const CMat2& h = phase1 ? hx : hy;
    double gamma = phase1 ? p.gamma : p.gamma2;
    double dW = sqrt_dt * noise.next();
    GuardedStep step;
    try {
      step = advance_guarded(rho, h, gamma, p.eta, p.dt, dW);
    } catch (const Error& e) {
      throw IntegrationError("step " + std::to_string(t) + ": " + e.what());
    }
    rho = step.state;
    traj.record[t] = step.dy;
    traj.states.push_back(qcore::rho_to_bloch(rho));
    if (step.excursion) ++traj.psd_projections;
  }
  return traj;
}

SimParams draw_params(const DatasetSpec& spec, uint64_t base_seed, uint64_t index) {
  // Parameter draws come from the head of the per-trajectory stream; the
  // Wiener increments continue on the same stream inside simulate_trajectory.
  // Draw order is part of the format contract: gamma, omega1, omega2, tau
  // [, gamma2 when resampling].
  uint64_t stream_seed = rng::mix64(base_seed, rng::kTagTrajectory + index);
  rng::SplitMix64 s{stream_seed};
  SimParams p;
  p.gamma = s.next_uniform(spec.gamma_lo, spec.gamma_hi);
  p.omega1 = s.next_uniform(spec.omega_lo, spec.omega_hi);
  p.omega2 = s.next_uniform(spec.omega_lo, spec.omega_hi);
  p.tau = s.next_index(spec.tau_lo, spec.tau_hi + 1);
  p.gamma2 = spec.resample_gamma_at_switch ? s.next_uniform(spec.gamma_lo, spec.gamma_hi) : p.gamma;
  p.eta = spec.eta;
  p.dt = spec.dt;
  p.T = spec.T;
  p.seed = s.state;  // hand the advanced stream state to the integrator
  return p;
}

StandardizationStats compute_stats(const std::vector<Trajectory>& train) {
  double sum = 0.0;
  uint64_t n = 0;
  for (const auto& t : train) {
    for (double v : t.record) sum += v;
    n += t.record.size();
  }
  if (n == 0) throw DomainError("no records to standardize");
  double mu = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& t : train)
    for (double v : t.record) ss += (v - mu) * (v - mu);
  StandardizationStats s;
  s.mu = mu;
  s.sigma = std::sqrt(ss / static_cast<double>(n));
  if (!(s.sigma > 0.0)) throw DomainError("degenerate record: sigma = 0");
  return s;
}

std::vector<double> standardize(const std::vector<double>& record, const StandardizationStats& s) {
  std::vector<double> out(record.size());
  double inv = 1.0 / (s.sigma + 1e-8);
  for (size_t i = 0; i < record.size(); ++i) out[i] = (record[i] - s.mu) * inv;
  return out;
}

namespace {

std::vector<Trajectory> simulate_split(const DatasetSpec& spec, uint64_t base_seed, uint64_t count,
                                       int workers) {
  std::vector<Trajectory> out(count);
  parallel::for_indexed(count, workers, [&](size_t i) {
    out[i] = simulate_trajectory(draw_params(spec, base_seed, i));
  });
  return out;
}

uint64_t total_projections(const std::vector<Trajectory>& ts) {
  uint64_t n = 0;
  for (const auto& t : ts) n += t.psd_projections;
  return n;
}

}  // namespace

DatasetManifest generate_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir,
                                 int workers) {
  spec.validate();
  std::filesystem::create_directories(out_dir);

  std::vector<Trajectory> train = simulate_split(spec, spec.base_seed_train, spec.n_train, workers);
  std::vector<Trajectory> test = simulate_split(spec, spec.base_seed_test, spec.n_test, workers);

  uint32_t version = spec.resample_gamma_at_switch ? kQtrjVersionGamma2 : kQtrjVersion;
  DatasetManifest m;
  m.spec = spec;
  m.train_file = (out_dir / "train.qtrj").string();
  m.test_file = (out_dir / "test.qtrj").string();
  m.stats_file = (out_dir / "stats.txt").string();
  write_qtrj(m.train_file, train, version);
  write_qtrj(m.test_file, test, version);
  m.train_digest = digest::file_digest(m.train_file);
  m.test_digest = digest::file_digest(m.test_file);
  m.train_psd_projections = total_projections(train);
  m.test_psd_projections = total_projections(test);

  StandardizationStats stats = compute_stats(train);
  stats.source_digest = m.train_digest;
  write_stats(m.stats_file, stats);

  write_manifest(out_dir / "manifest.txt", m);
  return m;
}

}  // namespace qtw::sim
