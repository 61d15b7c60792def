#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "qtw/digest.hpp"
#include "qtw/sim.hpp"
#include "qtw/trajectory_io.hpp"

using namespace qtw;
using namespace qtw::sim;
using qcore::CMat2;
using qcore::Complex;
using qcore::DensityMatrix;

namespace {

DensityMatrix plus_state() { return qcore::bloch_to_rho({1, 0, 0}); }

double mat_dist(const CMat2& a, const CMat2& b) { return (a - b).frobenius_norm(); }

// Fourth-order deterministic integration of the Lindblad equation
// d rho = -i[H, rho] dt + gamma D[sigma_z](rho) dt, H frozen per step.
CMat2 lindblad_rk4(const CMat2& rho0, double omega1, double omega2, uint64_t tau, double gamma,
                   double dt, uint64_t steps) {
  CMat2 rho = rho0;
  CMat2 hx = omega1 * qcore::pauli_x();
  CMat2 hy = omega2 * qcore::pauli_y();
  auto rhs = [&](const CMat2& r, const CMat2& h) {
    return Complex(0, -1) * qcore::commutator(h, r) + gamma * dissipator(qcore::pauli_z(), r);
  };
  for (uint64_t t = 0; t < steps; ++t) {
    const CMat2& h = t < tau ? hx : hy;
    CMat2 k1 = rhs(rho, h);
    CMat2 k2 = rhs(rho + (0.5 * dt) * k1, h);
    CMat2 k3 = rhs(rho + (0.5 * dt) * k2, h);
    CMat2 k4 = rhs(rho + dt * k3, h);
    rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return rho;
}

}  // namespace

TEST_CASE("dissipator knowns") {
  CMat2 sz = qcore::pauli_z();
  CHECK(mat_dist(dissipator(sz, DensityMatrix::maximally_mixed().mat()), CMat2::zero()) < 1e-15);
  CHECK(mat_dist(dissipator(sz, DensityMatrix::ground().mat()), CMat2::zero()) < 1e-15);
  // D[sz](|+><+|) = -sigma_x (sz sx sz = -sx)
  CHECK(mat_dist(dissipator(sz, plus_state().mat()), Complex(-1.0) * qcore::pauli_x()) < 1e-15);

  // traceless for Hermitian L
  rng::SplitMix64 s{8};
  for (int i = 0; i < 100; ++i) {
    qcore::BlochVector b{s.next_uniform(-0.6, 0.6), s.next_uniform(-0.6, 0.6),
                         s.next_uniform(-0.6, 0.6)};
    CMat2 d = dissipator(sz, qcore::bloch_to_rho(b).mat());
    CHECK(std::abs(d.trace()) < 1e-13);
  }
}

TEST_CASE("backaction knowns") {
  CMat2 sz = qcore::pauli_z();
  CHECK(mat_dist(backaction(sz, DensityMatrix::ground().mat()), CMat2::zero()) < 1e-15);
  CHECK(mat_dist(backaction(sz, DensityMatrix::maximally_mixed().mat()), sz) < 1e-15);
  CHECK(mat_dist(backaction(sz, plus_state().mat()), sz) < 1e-15);

  rng::SplitMix64 s{9};
  for (int i = 0; i < 100; ++i) {
    qcore::BlochVector b{s.next_uniform(-0.6, 0.6), s.next_uniform(-0.6, 0.6),
                         s.next_uniform(-0.6, 0.6)};
    CMat2 h = backaction(sz, qcore::bloch_to_rho(b).mat());
    CHECK(std::abs(h.trace()) < 1e-13);
  }
}

TEST_CASE("em_step record convention and eigenstate fixed point") {
  // rho = |0><0|: back-action vanishes, dissipator vanishes, dy = 2 sqrt(g eta) dt + dW.
  double gamma = 0.5, eta = 1.0, dt = 0.005, dW = 0.0123;
  EmResult r = em_step(DensityMatrix::ground().mat(), CMat2::zero(), gamma, eta, dt, dW);
  CHECK(r.dy == doctest::Approx(2.0 * std::sqrt(gamma * eta) * dt + dW).epsilon(1e-14));
  CHECK(mat_dist(r.state, DensityMatrix::ground().mat()) < 1e-14);
}

TEST_CASE("em_step unitary Euler step") {
  // One gamma = 0, dW = 0 step equals the first-order Euler update, renormalized.
  double omega = 1.3, dt = 0.002;
  CMat2 h = omega * qcore::pauli_x();
  CMat2 rho0 = DensityMatrix::ground().mat();
  EmResult r = em_step(rho0, h, 0.0, 1.0, dt, 0.0);
  CMat2 euler = rho0 + dt * (Complex(0, -1) * qcore::commutator(h, rho0));
  CHECK(mat_dist(r.state, euler) < 1e-12);  // trace already 1, hermitization a no-op
}

TEST_CASE("unitary limit converges to the Rabi solution at first order") {
  // <sigma_z>(t) = cos(2 omega t) from the ground state.
  double omega = 1.0, total = 2.0;
  auto max_err = [&](double dt) {
    uint64_t steps = static_cast<uint64_t>(total / dt);
    CMat2 rho = DensityMatrix::ground().mat();
    CMat2 h = omega * qcore::pauli_x();
    double worst = 0.0;
    for (uint64_t t = 1; t <= steps; ++t) {
      rho = em_step(rho, h, 0.0, 1.0, dt, 0.0).state;
      double exact = std::cos(2.0 * omega * static_cast<double>(t) * dt);
      worst = std::max(worst, std::abs(qcore::bloch_of(rho).rz - exact));
    }
    return worst;
  };
  double e1 = max_err(0.004);
  double e2 = max_err(0.002);
  double e3 = max_err(0.001);
  CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.15));
  CHECK(e2 / e3 == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("guarded step keeps states physical at Table-1 parameters") {
  rng::GaussianStream noise(31);
  DensityMatrix rho = DensityMatrix::ground();
  CMat2 h = 2.0 * qcore::pauli_x();
  double dt = 0.005;
  for (int t = 0; t < 4000; ++t) {
    GuardedStep st = advance_guarded(rho, h, 0.5, 1.0, dt, std::sqrt(dt) * noise.next());
    rho = st.state;
    CHECK(std::abs(rho.mat().trace().real() - 1.0) <= 1e-14);
    CHECK((rho.mat() * rho.mat()).trace().real() <= 1.0 + 1e-9);
  }
}

TEST_CASE("record whiteness at a <sigma_z> = 0 pinned state") {
  // dy/sqrt(dt) must be standard normal; KS test at alpha = 0.01.
  const int n = 100000;
  double dt = 0.005, gamma = 0.5;
  DensityMatrix plus = plus_state();
  rng::GaussianStream noise(555);
  std::vector<double> samples(n);
  for (int i = 0; i < n; ++i) {
    EmResult r = em_step(plus.mat(), CMat2::zero(), gamma, 1.0, dt, std::sqrt(dt) * noise.next());
    samples[i] = r.dy / std::sqrt(dt);
  }
  std::sort(samples.begin(), samples.end());
  double d_stat = 0.0;
  for (int i = 0; i < n; ++i) {
    double cdf = 0.5 * std::erfc(-samples[i] / std::sqrt(2.0));
    double hi = (i + 1.0) / n - cdf;
    double lo = cdf - static_cast<double>(i) / n;
    d_stat = std::max({d_stat, hi, lo});
  }
  // Asymptotic critical value c(0.01) = sqrt(-0.5 ln(0.005)) / sqrt(n).
  double crit = std::sqrt(-0.5 * std::log(0.005)) / std::sqrt(static_cast<double>(n));
  CHECK(d_stat < crit);
}

TEST_CASE("simulate_trajectory determinism and structure") {
  SimParams p;
  p.gamma = p.gamma2 = 0.6;
  p.omega1 = 1.5;
  p.omega2 = 3.0;
  p.tau = 120;
  p.T = 300;
  p.dt = 0.005;
  p.seed = 77;
  Trajectory a = simulate_trajectory(p);
  Trajectory b = simulate_trajectory(p);
  CHECK(a.record == b.record);
  for (uint64_t t = 0; t < p.T; ++t) {
    CHECK(a.states[t].rx == b.states[t].rx);
    CHECK(a.states[t].ry == b.states[t].ry);
    CHECK(a.states[t].rz == b.states[t].rz);
  }
  // every stored state passes DensityMatrix validation
  for (const auto& s : a.states) CHECK_NOTHROW(qcore::bloch_to_rho(s));
}

TEST_CASE("near-unitary trajectory matches the Rabi oracle") {
  SimParams p;
  p.gamma = p.gamma2 = 1e-9;
  p.omega1 = p.omega2 = 2.0;
  p.tau = 200;  // omega identical; switch at the final step so phase 1 spans the whole check
  p.T = 200;
  p.dt = 0.001;
  p.seed = 3;
  p.tau = 199;
  Trajectory traj = simulate_trajectory(p);
  for (uint64_t t = 0; t < 199; ++t) {
    double exact = std::cos(2.0 * p.omega1 * static_cast<double>(t + 1) * p.dt);
    CHECK(std::abs(traj.states[t].rz - exact) < 5e-3);  // integration tolerance
  }
}

TEST_CASE("ensemble mean matches deterministic Lindblad RK4 (smoke scale)") {
  // Acceptance criterion 4 runs 2000 trajectories; this is the fast version.
  const int n_traj = 400;
  SimParams base;
  base.gamma = base.gamma2 = 0.5;
  base.omega1 = base.omega2 = 2.0;
  base.T = 200;
  base.tau = 199;
  base.dt = 0.005;

  std::vector<std::vector<double>> rz(n_traj);
  for (int k = 0; k < n_traj; ++k) {
    SimParams p = base;
    p.seed = rng::mix64(12345, k);
    Trajectory t = simulate_trajectory(p);
    rz[k].resize(p.T);
    for (uint64_t s = 0; s < p.T; ++s) rz[k][s] = t.states[s].rz;
  }

  CMat2 rho = DensityMatrix::ground().mat();
  for (uint64_t s = 10; s <= base.T; s += 10) {
    CMat2 oracle = lindblad_rk4(DensityMatrix::ground().mat(), base.omega1, base.omega2, base.tau,
                                base.gamma, base.dt, s);
    double mean = 0.0;
    for (int k = 0; k < n_traj; ++k) mean += rz[k][s - 1];
    mean /= n_traj;
    double var = 0.0;
    for (int k = 0; k < n_traj; ++k) var += (rz[k][s - 1] - mean) * (rz[k][s - 1] - mean);
    double se = std::sqrt(var / (n_traj - 1.0) / n_traj);
    double target = qcore::bloch_of(oracle).rz;
    // 4 SE at smoke scale (the acceptance suite runs the 3 SE criterion).
    CHECK(std::abs(mean - target) <= 4.0 * se + 1e-3);
  }
  (void)rho;
}

TEST_CASE("standardize examples") {
  StandardizationStats st{2.5, 1.0, ""};
  std::vector<double> r{2.5, 2.5, 2.5};
  auto out = standardize(r, st);
  for (double v : out) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));

  StandardizationStats unit{0.0, 1.0, ""};
  auto near = standardize({1.0}, unit);
  CHECK(near[0] == doctest::Approx(1.0 / (1.0 + 1e-8)).epsilon(1e-14));
}

TEST_CASE("dataset generation: structure, stats, determinism") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "qtw_test_gen";
  fs::remove_all(dir);

  DatasetSpec spec;
  spec.n_train = 6;
  spec.n_test = 2;
  spec.T = 120;
  spec.tau_lo = 30;
  spec.tau_hi = 90;
  spec.base_seed_train = 1;
  spec.base_seed_test = 2;

  DatasetManifest m = generate_dataset(spec, dir, 2);
  auto train = read_qtrj(m.train_file);
  auto test = read_qtrj(m.test_file);
  CHECK(train.size() == 6);
  CHECK(test.size() == 2);

  // parameters inside spec ranges
  for (const auto& t : train) {
    CHECK(t.params.gamma >= spec.gamma_lo);
    CHECK(t.params.gamma <= spec.gamma_hi);
    CHECK(t.params.omega1 >= spec.omega_lo);
    CHECK(t.params.omega1 <= spec.omega_hi);
    CHECK(t.params.tau >= spec.tau_lo);
    CHECK(t.params.tau <= spec.tau_hi);
    CHECK(t.params.gamma2 == t.params.gamma);
  }

  // stats computed from training records only
  StandardizationStats st = read_stats(m.stats_file);
  double sum = 0.0;
  uint64_t n = 0;
  for (const auto& t : train)
    for (double v : t.record) {
      sum += v;
      ++n;
    }
  CHECK(st.mu == doctest::Approx(sum / n).epsilon(1e-12));
  CHECK(st.source_digest == m.train_digest);

  // standardizing the training corpus gives mean ~ 0, std ~ 1
  double m2 = 0.0, mean2 = 0.0;
  for (const auto& t : train)
    for (double v : standardize(t.record, st)) {
      mean2 += v;
      m2 += v * v;
    }
  mean2 /= n;
  CHECK(std::abs(mean2) < 1e-6);
  CHECK(std::sqrt(m2 / n - mean2 * mean2) == doctest::Approx(1.0).epsilon(1e-6));

  // byte-identical regeneration, independent of worker count
  fs::path dir2 = fs::temp_directory_path() / "qtw_test_gen2";
  fs::remove_all(dir2);
  DatasetManifest m2nd = generate_dataset(spec, dir2, 1);
  CHECK(m2nd.train_digest == m.train_digest);
  CHECK(m2nd.test_digest == m.test_digest);

  // file round trip
  for (size_t i = 0; i < train.size(); ++i) {
    CHECK(train[i].record.size() == spec.T);
    CHECK(train[i].states.size() == spec.T);
  }
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("qtrj v2 carries gamma2 when resampling at the switch") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "qtw_test_gen_v2";
  fs::remove_all(dir);
  DatasetSpec spec;
  spec.n_train = 2;
  spec.n_test = 2;
  spec.T = 60;
  spec.tau_lo = 20;
  spec.tau_hi = 40;
  spec.base_seed_train = 5;
  spec.base_seed_test = 6;
  spec.resample_gamma_at_switch = true;
  DatasetManifest m = generate_dataset(spec, dir, 1);
  auto train = read_qtrj(m.train_file);
  bool any_differs = false;
  for (const auto& t : train) any_differs |= t.params.gamma2 != t.params.gamma;
  CHECK(any_differs);
  fs::remove_all(dir);
}

TEST_CASE("invalid specs and params are rejected") {
  SimParams p;
  p.tau = 0;
  CHECK_THROWS_AS(p.validate(), DomainError);
  DatasetSpec s;
  s.base_seed_test = s.base_seed_train;
  CHECK_THROWS_AS(s.validate(), DomainError);
}
