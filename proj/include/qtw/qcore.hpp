#pragma once

#include <array>
#include <complex>
#include <utility>

#include "qtw/errors.hpp"

namespace qtw::qcore {

using Complex = std::complex<double>;

// Validation tolerances for physical states.
inline constexpr double kHermTol = 1e-10;
inline constexpr double kTraceTol = 1e-10;
inline constexpr double kPsdTol = 1e-10;
inline constexpr double kBlochNormTol = 1e-9;  // on the squared norm

// General 2x2 complex matrix, row-major: e[0]=(0,0) e[1]=(0,1) e[2]=(1,0) e[3]=(1,1).
// No invariants; every operation is hand-unrolled for the fixed dimension.
struct CMat2 {
  std::array<Complex, 4> e{};

  Complex& operator()(int r, int c) { return e[2 * r + c]; }
  const Complex& operator()(int r, int c) const { return e[2 * r + c]; }

  static CMat2 zero() { return {}; }
  static CMat2 identity() { return {{Complex(1), Complex(0), Complex(0), Complex(1)}}; }

  CMat2 adjoint() const {
    return {{std::conj(e[0]), std::conj(e[2]), std::conj(e[1]), std::conj(e[3])}};
  }

  Complex trace() const { return e[0] + e[3]; }
  Complex det() const { return e[0] * e[3] - e[1] * e[2]; }

  double frobenius_norm() const;

  CMat2 hermitian_part() const;
};

CMat2 operator+(const CMat2& a, const CMat2& b);
CMat2 operator-(const CMat2& a, const CMat2& b);
CMat2 operator*(const CMat2& a, const CMat2& b);
CMat2 operator*(Complex s, const CMat2& a);
CMat2 operator*(double s, const CMat2& a);

CMat2 pauli_x();
CMat2 pauli_y();
CMat2 pauli_z();
CMat2 commutator(const CMat2& a, const CMat2& b);
CMat2 anticommutator(const CMat2& a, const CMat2& b);

// Smaller/larger eigenvalue of the Hermitian part, closed form.
std::pair<double, double> eigvals_hermitian_2x2(const CMat2& m);

struct BlochVector {
  double rx = 0.0, ry = 0.0, rz = 0.0;

  double norm2() const { return rx * rx + ry * ry + rz * rz; }
};

// Hermitian, unit-trace, PSD 2x2 state. Validates on construction.
class DensityMatrix {
 public:
  explicit DensityMatrix(const CMat2& m);

  const CMat2& mat() const { return m_; }

  static DensityMatrix ground();           // |0><0|
  static DensityMatrix excited();          // |1><1|
  static DensityMatrix maximally_mixed();  // I/2

 private:
  CMat2 m_;
};

// Unconstrained prediction: violations are measured downstream, never rejected.
struct RawPrediction {
  CMat2 mat;
};

DensityMatrix bloch_to_rho(const BlochVector& b);
BlochVector rho_to_bloch(const DensityMatrix& rho);

// Bloch components of an arbitrary matrix: r_k = Re Tr(sigma_k m).
// Agrees with rho_to_bloch on valid states; defined for raw predictions too.
BlochVector bloch_of(const CMat2& m);

struct Fidelity {
  double proxy = 0.0;  // Tr(rho sigma): exact when either state is pure
  double full = 0.0;   // Tr(rho sigma) + 2 sqrt(det rho * det sigma)
};

Fidelity fidelity(const DensityMatrix& rho, const DensityMatrix& sigma);

// Fidelity of a possibly unphysical prediction against a valid state.
// proxy = Re Tr(p sigma); full adds the determinant term computed on the
// Hermitian part of p with negative determinants clamped to zero.
Fidelity fidelity_raw(const CMat2& p, const DensityMatrix& sigma);

// sqrt(2 (1 - sqrt(F))) with the full-form fidelity, clamped into [0, 1].
double bures_distance(const DensityMatrix& rho, const DensityMatrix& sigma);
double bures_from_fidelity(double f);

struct PhysicalityMetrics {
  double v_tr = 0.0;    // |Tr - 1|
  double v_psd = 0.0;   // max(0, -lambda_min) of the Hermitian part
  double v_herm = 0.0;  // ||p - p^dagger||_F
};

PhysicalityMetrics physicality_metrics(const RawPrediction& p);

struct KrausPair {
  CMat2 k1, k2;
};

// ||K1^dagger K1 + K2^dagger K2 - I||_F
double kraus_completeness_error(const KrausPair& k);

}  // namespace qtw::qcore
