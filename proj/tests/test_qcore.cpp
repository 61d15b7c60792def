#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "qtw/qcore.hpp"
#include "qtw/rng.hpp"

using namespace qtw;
using namespace qtw::qcore;

namespace {

BlochVector random_physical_bloch(rng::SplitMix64& s) {
  // Uniform direction, radius biased toward the shell; any distribution over
  // the closed ball works for round-trip checks.
  for (;;) {
    BlochVector b{s.next_uniform(-1, 1), s.next_uniform(-1, 1), s.next_uniform(-1, 1)};
    if (b.norm2() <= 1.0) return b;
  }
}

CMat2 random_hermitian(rng::SplitMix64& s, double scale = 1.0) {
  double a = s.next_uniform(-scale, scale);
  double d = s.next_uniform(-scale, scale);
  double br = s.next_uniform(-scale, scale);
  double bi = s.next_uniform(-scale, scale);
  CMat2 m;
  m.e[0] = Complex(a);
  m.e[1] = Complex(br, bi);
  m.e[2] = Complex(br, -bi);
  m.e[3] = Complex(d);
  return m;
}

// Independent eigenvalue oracle: power iteration on the shifted matrix plus
// one deflation step. Convergence is gap-limited, so callers should skip
// near-degenerate draws (the closed form under test is used only to filter
// conditioning, not to produce the reference values).
std::pair<double, double> power_iteration_eigs(const CMat2& h) {
  double shift = h.frobenius_norm() + 1.0;
  CMat2 b = h + shift * CMat2::identity();  // PD, dominant eig = lambda_max + shift

  auto dominant = [](const CMat2& m, Complex v0, Complex v1) {
    double lambda = 0.0;
    for (int it = 0; it < 200000; ++it) {
      Complex w0 = m.e[0] * v0 + m.e[1] * v1;
      Complex w1 = m.e[2] * v0 + m.e[3] * v1;
      double n = std::sqrt(std::norm(w0) + std::norm(w1));
      w0 /= n;
      w1 /= n;
      // Rayleigh quotient and residual-based stop.
      Complex mv0 = m.e[0] * w0 + m.e[1] * w1;
      Complex mv1 = m.e[2] * w0 + m.e[3] * w1;
      lambda = (std::conj(w0) * mv0 + std::conj(w1) * mv1).real();
      double res = std::sqrt(std::norm(mv0 - lambda * w0) + std::norm(mv1 - lambda * w1));
      v0 = w0;
      v1 = w1;
      if (res < 1e-13) break;
    }
    return std::make_tuple(lambda, v0, v1);
  };

  auto [l1, v0, v1] = dominant(b, Complex(1.0, 0.3), Complex(0.7, -0.2));
  // Deflate: b2 = b - l1 v v^dag.
  CMat2 d = b;
  d.e[0] -= l1 * v0 * std::conj(v0);
  d.e[1] -= l1 * v0 * std::conj(v1);
  d.e[2] -= l1 * v1 * std::conj(v0);
  d.e[3] -= l1 * v1 * std::conj(v1);
  auto [l2, u0, u1] = dominant(d, Complex(0.4, -0.9), Complex(1.1, 0.5));
  double hi = l1 - shift;
  double lo = l2 - shift;
  if (lo > hi) std::swap(lo, hi);
  return {lo, hi};
}

}  // namespace

TEST_CASE("bloch_to_rho known states") {
  CMat2 mixed = bloch_to_rho({0, 0, 0}).mat();
  CHECK(std::abs(mixed.e[0] - Complex(0.5)) < 1e-15);
  CHECK(std::abs(mixed.e[3] - Complex(0.5)) < 1e-15);
  CHECK(std::abs(mixed.e[1]) < 1e-15);

  CMat2 north = bloch_to_rho({0, 0, 1}).mat();
  CHECK(std::abs(north.e[0] - Complex(1)) < 1e-15);
  CHECK(std::abs(north.e[3]) < 1e-15);

  CMat2 plus = bloch_to_rho({1, 0, 0}).mat();
  for (auto z : plus.e) CHECK(std::abs(z - Complex(0.5)) < 1e-15);

  CHECK_THROWS_AS(bloch_to_rho({1.1, 0, 0}), DomainError);
}

TEST_CASE("bloch round trip is the identity") {
  BlochVector b0 = rho_to_bloch(DensityMatrix::maximally_mixed());
  CHECK(std::abs(b0.rx) < 1e-15);
  CHECK(std::abs(b0.ry) < 1e-15);
  CHECK(std::abs(b0.rz) < 1e-15);

  BlochVector bn = rho_to_bloch(DensityMatrix::ground());
  CHECK(bn.rz == doctest::Approx(1.0).epsilon(1e-14));

  rng::SplitMix64 s{20260811};
  for (int i = 0; i < 10000; ++i) {
    BlochVector b = random_physical_bloch(s);
    BlochVector r = rho_to_bloch(bloch_to_rho(b));
    CHECK(std::abs(r.rx - b.rx) < 1e-12);
    CHECK(std::abs(r.ry - b.ry) < 1e-12);
    CHECK(std::abs(r.rz - b.rz) < 1e-12);
  }
}

TEST_CASE("fidelity closed forms") {
  DensityMatrix g = DensityMatrix::ground();
  DensityMatrix e = DensityMatrix::excited();
  DensityMatrix mm = DensityMatrix::maximally_mixed();

  CHECK(fidelity(g, g).full == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(fidelity(mm, mm).full == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(fidelity(g, e).proxy == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(fidelity(g, e).full == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(fidelity(g, mm).proxy == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(fidelity(g, mm).full == doctest::Approx(0.5).epsilon(1e-14));

  // Symmetry.
  rng::SplitMix64 s{7};
  for (int i = 0; i < 100; ++i) {
    DensityMatrix a = bloch_to_rho(random_physical_bloch(s));
    DensityMatrix b = bloch_to_rho(random_physical_bloch(s));
    Fidelity fab = fidelity(a, b);
    Fidelity fba = fidelity(b, a);
    CHECK(std::abs(fab.proxy - fba.proxy) < 1e-14);
    CHECK(std::abs(fab.full - fba.full) < 1e-14);
  }
}

TEST_CASE("proxy and full fidelity agree when either state is pure") {
  rng::SplitMix64 s{99};
  for (int i = 0; i < 2000; ++i) {
    BlochVector dir = random_physical_bloch(s);
    double n = std::sqrt(dir.norm2());
    if (n < 1e-6) continue;
    BlochVector pure{dir.rx / n, dir.ry / n, dir.rz / n};
    DensityMatrix p = bloch_to_rho(pure);
    DensityMatrix q = bloch_to_rho(random_physical_bloch(s));
    Fidelity f = fidelity(p, q);
    CHECK(std::abs(f.proxy - f.full) < 1e-12);
    Fidelity fr = fidelity(q, p);
    CHECK(std::abs(fr.proxy - fr.full) < 1e-12);
  }
}

TEST_CASE("bures distance") {
  DensityMatrix g = DensityMatrix::ground();
  DensityMatrix e = DensityMatrix::excited();
  DensityMatrix mm = DensityMatrix::maximally_mixed();
  CHECK(bures_distance(g, g) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(bures_distance(g, e) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(bures_distance(g, mm) == doctest::Approx(std::sqrt(2.0 * (1.0 - std::sqrt(0.5)))).epsilon(1e-12));
}

TEST_CASE("physicality metrics") {
  RawPrediction ok{DensityMatrix::maximally_mixed().mat()};
  PhysicalityMetrics v = physicality_metrics(ok);
  CHECK(v.v_tr < 1e-12);
  CHECK(v.v_psd < 1e-12);
  CHECK(v.v_herm < 1e-12);

  RawPrediction heavy{CMat2{{Complex(1.5), Complex(0), Complex(0), Complex(0)}}};
  v = physicality_metrics(heavy);
  CHECK(v.v_tr == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(v.v_psd == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(v.v_herm == doctest::Approx(0.0).epsilon(1e-14));

  RawPrediction neg{CMat2{{Complex(1.2), Complex(0), Complex(0), Complex(-0.2)}}};
  v = physicality_metrics(neg);
  CHECK(v.v_tr == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(v.v_psd == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(v.v_herm == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("hermitian eigenvalues: knowns and oracle sweep") {
  auto [l0, h0] = eigvals_hermitian_2x2(0.5 * CMat2::identity());
  CHECK(l0 == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(h0 == doctest::Approx(0.5).epsilon(1e-15));

  auto [lz, hz] = eigvals_hermitian_2x2(pauli_z());
  CHECK(lz == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(hz == doctest::Approx(1.0).epsilon(1e-15));

  rng::SplitMix64 s{31337};
  int tested = 0;
  while (tested < 10000) {
    CMat2 m = random_hermitian(s);
    auto [lo, hi] = eigvals_hermitian_2x2(m);
    if (hi - lo < 1e-2) continue;  // skip gap-limited draws for the iterative oracle
    auto [plo, phi] = power_iteration_eigs(m);
    CHECK(std::abs(lo - plo) < 1e-10);
    CHECK(std::abs(hi - phi) < 1e-10);
    // Trace identity.
    CHECK(std::abs((lo + hi) - m.trace().real()) < 1e-12);
    ++tested;
  }
}

TEST_CASE("kraus completeness error") {
  KrausPair id{CMat2::identity(), CMat2::zero()};
  CHECK(kraus_completeness_error(id) == doctest::Approx(0.0).epsilon(1e-15));

  double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  KrausPair split{inv_sqrt2 * CMat2::identity(), inv_sqrt2 * CMat2::identity()};
  CHECK(kraus_completeness_error(split) < 1e-15);

  KrausPair both{CMat2::identity(), CMat2::identity()};
  CHECK(kraus_completeness_error(both) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("density matrix validation rejects bad inputs") {
  CMat2 non_herm = CMat2::identity();
  non_herm.e[1] = Complex(0.3, 0.1);
  CHECK_THROWS_AS(DensityMatrix{non_herm}, DomainError);

  CMat2 bad_tr = 0.7 * CMat2::identity();
  CHECK_THROWS_AS(DensityMatrix{bad_tr}, DomainError);

  CMat2 neg{{Complex(1.2), Complex(0), Complex(0), Complex(-0.2)}};
  CHECK_THROWS_AS(DensityMatrix{neg}, DomainError);
}
