#include "qtw/qcore.hpp"

#include <algorithm>
#include <cmath>

namespace qtw::qcore {

double CMat2::frobenius_norm() const {
  double s = 0.0;
  for (const auto& z : e) s += std::norm(z);
  return std::sqrt(s);
}

CMat2 CMat2::hermitian_part() const {
  CMat2 a = adjoint();
  CMat2 out;
  for (int i = 0; i < 4; ++i) out.e[i] = 0.5 * (e[i] + a.e[i]);
  return out;
}

CMat2 operator+(const CMat2& a, const CMat2& b) {
  CMat2 out;
  for (int i = 0; i < 4; ++i) out.e[i] = a.e[i] + b.e[i];
  return out;
}

CMat2 operator-(const CMat2& a, const CMat2& b) {
  CMat2 out;
  for (int i = 0; i < 4; ++i) out.e[i] = a.e[i] - b.e[i];
  return out;
}

CMat2 operator*(const CMat2& a, const CMat2& b) {
  CMat2 out;
  out.e[0] = a.e[0] * b.e[0] + a.e[1] * b.e[2];
  out.e[1] = a.e[0] * b.e[1] + a.e[1] * b.e[3];
  out.e[2] = a.e[2] * b.e[0] + a.e[3] * b.e[2];
  out.e[3] = a.e[2] * b.e[1] + a.e[3] * b.e[3];
  return out;
}

CMat2 operator*(Complex s, const CMat2& a) {
  CMat2 out;
  for (int i = 0; i < 4; ++i) out.e[i] = s * a.e[i];
  return out;
}

CMat2 operator*(double s, const CMat2& a) { return Complex(s) * a; }

CMat2 pauli_x() { return {{Complex(0), Complex(1), Complex(1), Complex(0)}}; }
CMat2 pauli_y() { return {{Complex(0), Complex(0, -1), Complex(0, 1), Complex(0)}}; }
CMat2 pauli_z() { return {{Complex(1), Complex(0), Complex(0), Complex(-1)}}; }

CMat2 commutator(const CMat2& a, const CMat2& b) { return a * b - b * a; }
CMat2 anticommutator(const CMat2& a, const CMat2& b) { return a * b + b * a; }

std::pair<double, double> eigvals_hermitian_2x2(const CMat2& m) {
  CMat2 h = m.hermitian_part();
  double a = h.e[0].real();
  double d = h.e[3].real();
  double off = std::norm(h.e[1]);  // |b|^2
  double tr = a + d;
  double disc = std::sqrt((a - d) * (a - d) + 4.0 * off);
  return {0.5 * (tr - disc), 0.5 * (tr + disc)};
}

DensityMatrix::DensityMatrix(const CMat2& m) : m_(m) {
  double herm = (m - m.adjoint()).frobenius_norm();
  if (herm > kHermTol) throw DomainError("density matrix not Hermitian: ||m - m^dag||_F = " + std::to_string(herm));
  double tr_err = std::abs(m.trace() - Complex(1));
  if (tr_err > kTraceTol) throw DomainError("density matrix trace deviates from 1 by " + std::to_string(tr_err));
  double lmin = eigvals_hermitian_2x2(m).first;
  if (lmin < -kPsdTol) throw DomainError("density matrix not PSD: lambda_min = " + std::to_string(lmin));
}

DensityMatrix DensityMatrix::ground() {
  return DensityMatrix(CMat2{{Complex(1), Complex(0), Complex(0), Complex(0)}});
}

DensityMatrix DensityMatrix::excited() {
  return DensityMatrix(CMat2{{Complex(0), Complex(0), Complex(0), Complex(1)}});
}

DensityMatrix DensityMatrix::maximally_mixed() {
  return DensityMatrix(CMat2{{Complex(0.5), Complex(0), Complex(0), Complex(0.5)}});
}

DensityMatrix bloch_to_rho(const BlochVector& b) {
  double n2 = b.norm2();
  if (n2 > 1.0 + kBlochNormTol) throw DomainError("Bloch vector outside the unit ball: |r|^2 = " + std::to_string(n2));
  BlochVector r = b;
  if (n2 > 1.0) {
    // Boundary jitter within tolerance: pull back onto the sphere so the
    // constructed state passes the PSD check exactly.
    double n = std::sqrt(n2);
    r.rx /= n;
    r.ry /= n;
    r.rz /= n;
  }
  CMat2 m;
  m.e[0] = Complex(0.5 * (1.0 + r.rz));
  m.e[1] = Complex(0.5 * r.rx, -0.5 * r.ry);
  m.e[2] = Complex(0.5 * r.rx, 0.5 * r.ry);
  m.e[3] = Complex(0.5 * (1.0 - r.rz));
  return DensityMatrix(m);
}

BlochVector rho_to_bloch(const DensityMatrix& rho) { return bloch_of(rho.mat()); }

BlochVector bloch_of(const CMat2& m) {
  BlochVector b;
  b.rx = (pauli_x() * m).trace().real();
  b.ry = (pauli_y() * m).trace().real();
  b.rz = (pauli_z() * m).trace().real();
  return b;
}

namespace {

double det_clamped(const CMat2& m) {
  double d = m.det().real();
  if (d < -1e-12) throw DomainError("state determinant below tolerance: " + std::to_string(d));
  // Determinants inside floating-point noise count as exactly pure; otherwise
  // the sqrt amplifies ~1e-17 rounding residue into ~1e-9 fidelity error.
  if (d < 1e-15) d = 0.0;
  return d;
}

}  // namespace

Fidelity fidelity(const DensityMatrix& rho, const DensityMatrix& sigma) {
  Fidelity f;
  f.proxy = (rho.mat() * sigma.mat()).trace().real();
  f.full = f.proxy + 2.0 * std::sqrt(det_clamped(rho.mat()) * det_clamped(sigma.mat()));
  return f;
}

Fidelity fidelity_raw(const CMat2& p, const DensityMatrix& sigma) {
  Fidelity f;
  f.proxy = (p * sigma.mat()).trace().real();
  double dp = p.hermitian_part().det().real();
  f.full = f.proxy + 2.0 * std::sqrt(std::max(dp, 0.0) * det_clamped(sigma.mat()));
  return f;
}

double bures_from_fidelity(double f) {
  f = std::clamp(f, 0.0, 1.0);
  return std::sqrt(2.0 * (1.0 - std::sqrt(f)));
}

double bures_distance(const DensityMatrix& rho, const DensityMatrix& sigma) {
  return bures_from_fidelity(fidelity(rho, sigma).full);
}

PhysicalityMetrics physicality_metrics(const RawPrediction& p) {
  PhysicalityMetrics v;
  v.v_tr = std::abs(p.mat.trace() - Complex(1));
  v.v_psd = std::max(0.0, -eigvals_hermitian_2x2(p.mat).first);
  v.v_herm = (p.mat - p.mat.adjoint()).frobenius_norm();
  return v;
}

double kraus_completeness_error(const KrausPair& k) {
  CMat2 s = k.k1.adjoint() * k.k1 + k.k2.adjoint() * k.k2;
  return (s - CMat2::identity()).frobenius_norm();
}

}  // namespace qtw::qcore
