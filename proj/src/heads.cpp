#include "qtw/heads.hpp"

#include <cmath>

namespace qtw::heads {

HeadKind head_from_string(const std::string& s) {
  if (s == "kraus") return HeadKind::kraus;
  if (s == "direct") return HeadKind::direct;
  throw ConfigError("unknown head kind: " + s);
}

std::string to_string(HeadKind k) { return k == HeadKind::kraus ? "kraus" : "direct"; }

CMat42 build_v(const std::vector<double>& h, const double* w, const double* b, int hidden,
               rng::GaussianStream* jitter) {
  double out[16];
  for (int j = 0; j < 16; ++j) {
    double s = b[j];
    const double* row = w + j * hidden;
    for (int i = 0; i < hidden; ++i) s += row[i] * h[i];
    if (jitter) s += kJitterSigma * jitter->next();
    out[j] = s;
  }
  CMat42 v;
  for (int k = 0; k < 8; ++k) v.e[k] = Complex(out[k], out[8 + k]);
  return v;
}

namespace {

double col_norm(const CMat42& m, int c) {
  double s = 0.0;
  for (int r = 0; r < 4; ++r) s += std::norm(m(r, c));
  return std::sqrt(s);
}

// Snap tolerances that make re-projection of an already orthonormal frame a
// bitwise no-op: unit-rounding norms skip the division, noise-level
// projections skip the subtraction. Random inputs never hit these.
inline bool norm_is_unit(double r) { return std::abs(r - 1.0) <= 8e-16; }
inline bool proj_is_noise(double proj_abs, double col_norm) {
  return proj_abs <= 1e-14 * col_norm;
}

}  // namespace

CMat42 thin_qr(const CMat42& v) {
  CMat42 q = v;

  double r00 = col_norm(q, 0);
  if (r00 < kQrSingularTol) throw SingularityError("thin_qr: first column numerically zero");
  if (!norm_is_unit(r00))
    for (int r = 0; r < 4; ++r) q(r, 0) /= r00;

  double c1_norm = col_norm(q, 1);
  for (int pass = 0; pass < 2; ++pass) {
    Complex proj = 0.0;
    for (int r = 0; r < 4; ++r) proj += std::conj(q(r, 0)) * q(r, 1);
    if (proj_is_noise(std::abs(proj), c1_norm)) break;
    for (int r = 0; r < 4; ++r) q(r, 1) -= proj * q(r, 0);
  }
  double r11 = col_norm(q, 1);
  if (r11 < kQrSingularTol) throw SingularityError("thin_qr: columns numerically dependent");
  if (!norm_is_unit(r11))
    for (int r = 0; r < 4; ++r) q(r, 1) /= r11;
  return q;
}

KrausPair kraus_from_q(const CMat42& q) {
  KrausPair k;
  k.k1.e = {q.e[0], q.e[1], q.e[2], q.e[3]};
  k.k2.e = {q.e[4], q.e[5], q.e[6], q.e[7]};
  return k;
}

KrausUpdateDebug kraus_update_debug(const DensityMatrix& rho, const KrausPair& k,
                                    double denom_eps) {
  CMat2 num = k.k1 * rho.mat() * k.k1.adjoint() + k.k2 * rho.mat() * k.k2.adjoint();
  double tr = num.trace().real();
  CMat2 scaled = (1.0 / (tr + denom_eps)) * num;
  scaled = scaled.hermitian_part();
  double tr2 = scaled.trace().real();
  scaled = (1.0 / tr2) * scaled;
  return {DensityMatrix(scaled), tr};
}

DensityMatrix kraus_update(const DensityMatrix& rho, const KrausPair& k, double denom_eps) {
  return kraus_update_debug(rho, k, denom_eps).state;
}

DirectResult direct_predict(const std::vector<double>& h, const double* w, const double* b,
                            int hidden) {
  double out[8];
  for (int j = 0; j < 8; ++j) {
    double s = b[j];
    const double* row = w + j * hidden;
    for (int i = 0; i < hidden; ++i) s += row[i] * h[i];
    out[j] = s;
  }
  CMat2 m;
  for (int k = 0; k < 4; ++k) m.e[k] = Complex(out[k], out[4 + k]);
  Complex tr = m.trace();
  if (std::abs(tr) <= 1e-12) return {RawPrediction{DensityMatrix::maximally_mixed().mat()}, true};
  Complex denom = tr + Complex(tr.real() >= 0.0 ? 1e-8 : -1e-8);
  return {RawPrediction{(Complex(1.0) / denom) * m}, false};
}

backbones::ParamLayout model_layout(const ModelSpec& spec) {
  backbones::ParamLayout lay = backbones::backbone_layout(spec.backbone);
  int outs = spec.head_outputs();
  lay.add("head.W", outs * spec.backbone.hidden_dim);
  lay.add("head.b", outs);
  return lay;
}

ModelParams init_model(const ModelSpec& spec) {
  ModelParams p;
  p.layout = model_layout(spec);
  backbones::init_params(spec.backbone, p.layout, p.values);
  return p;
}

RolloutResult rollout(const ModelSpec& spec, const ModelParams& params,
                      const std::vector<double>& std_record, const DensityMatrix& rho0) {
  auto hs = backbones::encode_sequence(spec.backbone, params.layout, params.values, std_record);
  const double* w = params.values.data() + params.layout.find("head.W").offset;
  const double* b = params.values.data() + params.layout.find("head.b").offset;
  int hidden = spec.backbone.hidden_dim;

  RolloutResult out;
  out.predictions.reserve(hs.size());
  if (spec.head == HeadKind::kraus) {
    out.kraus.reserve(hs.size());
    DensityMatrix rho = rho0;
    for (const auto& h : hs) {
      CMat42 v = build_v(h, w, b, hidden, nullptr);
      KrausPair k = kraus_from_q(thin_qr(v));
      rho = kraus_update(rho, k);
      out.kraus.push_back(k);
      out.predictions.push_back(rho.mat());
    }
  } else {
    for (const auto& h : hs) {
      DirectResult r = direct_predict(h, w, b, hidden);
      if (r.fallback) ++out.fallback_steps;
      out.predictions.push_back(r.prediction.mat);
    }
  }
  return out;
}

// --- Tape path ---

namespace {

using ad::Tape;
using ad::Var;

// Complex inner product q^dag a of two 4-vectors, as (re, im) scalars.
std::pair<Var, Var> cdot(Tape& t, const CVar& q, const CVar& a) {
  Var re = t.add(t.sum(t.mul(q.re, a.re)), t.sum(t.mul(q.im, a.im)));
  Var im = t.sub(t.sum(t.mul(q.re, a.im)), t.sum(t.mul(q.im, a.re)));
  return {re, im};
}

CVar axpy_neg(Tape& t, const CVar& v, const CVar& q, Var cre, Var cim) {
  // v - (cre + i cim) * q
  Var re = t.sub(v.re, t.sub(t.mul_scalar(q.re, cre), t.mul_scalar(q.im, cim)));
  Var im = t.sub(v.im, t.add(t.mul_scalar(q.im, cre), t.mul_scalar(q.re, cim)));
  return {re, im};
}

Var col_norm_tape(Tape& t, const CVar& c) {
  return t.sqrt(t.add(t.sum(t.mul(c.re, c.re)), t.sum(t.mul(c.im, c.im))));
}

CVar cmatmul(Tape& t, const CVar& a, const CVar& b) {
  Var re = t.sub(t.matmul(a.re, b.re), t.matmul(a.im, b.im));
  Var im = t.add(t.matmul(a.re, b.im), t.matmul(a.im, b.re));
  return {re, im};
}

CVar cadjoint(Tape& t, const CVar& a) {
  static const std::vector<int> kT = {0, 2, 1, 3};
  return {t.gather(a.re, kT, {2, 2}), t.neg(t.gather(a.im, kT, {2, 2}))};
}

}  // namespace

VVars build_v_tape(Tape& t, Var h, Var w, Var b, rng::GaussianStream* jitter) {
  Var out = t.add(t.matmul(w, h), b);  // 16-vector
  if (jitter) {
    std::vector<double> noise(16);
    for (double& x : noise) x = kJitterSigma * jitter->next();
    out = t.add(out, t.constant(std::move(noise), ad::vec(16)));
  }
  VVars v;
  // Row-major 4x2: column c lives at flat indices {c, 2+c, 4+c, 6+c}; the
  // imaginary half is offset by 8.
  for (int c = 0; c < 2; ++c) {
    std::vector<int> re_idx = {c, 2 + c, 4 + c, 6 + c};
    std::vector<int> im_idx = {8 + c, 10 + c, 12 + c, 14 + c};
    v.col[c] = {t.gather(out, re_idx, ad::vec(4)), t.gather(out, im_idx, ad::vec(4))};
  }
  return v;
}

QVars thin_qr_tape(Tape& t, const VVars& v) {
  QVars q;

  // Branch structure mirrors the plain path exactly (same snap rules), so the
  // two implementations agree bitwise on identical inputs.
  Var r00 = col_norm_tape(t, v.col[0]);
  double r00_v = t.scalar_val(r00);
  if (r00_v < kQrSingularTol) throw SingularityError("thin_qr: first column numerically zero");
  if (std::abs(r00_v - 1.0) <= 8e-16) {
    q.col[0] = v.col[0];
  } else {
    Var inv0 = t.reciprocal(r00);
    q.col[0] = {t.mul_scalar(v.col[0].re, inv0), t.mul_scalar(v.col[0].im, inv0)};
  }

  CVar u = v.col[1];
  double c1_norm = t.scalar_val(col_norm_tape(t, v.col[1]));
  for (int pass = 0; pass < 2; ++pass) {
    auto [cre, cim] = cdot(t, q.col[0], u);
    double proj_abs = std::hypot(t.scalar_val(cre), t.scalar_val(cim));
    if (proj_abs <= 1e-14 * c1_norm) break;
    u = axpy_neg(t, u, q.col[0], cre, cim);
  }
  Var r11 = col_norm_tape(t, u);
  double r11_v = t.scalar_val(r11);
  if (r11_v < kQrSingularTol) throw SingularityError("thin_qr: columns numerically dependent");
  if (std::abs(r11_v - 1.0) <= 8e-16) {
    q.col[1] = u;
  } else {
    Var inv1 = t.reciprocal(r11);
    q.col[1] = {t.mul_scalar(u.re, inv1), t.mul_scalar(u.im, inv1)};
  }
  return q;
}

KrausVars kraus_from_q_tape(Tape& t, const QVars& q) {
  // Column storage -> row-major 2x2 blocks. Column c holds rows 0..3, so
  // K1(r, c) = col[c][r] for r in {0, 1} and K2(r, c) = col[c][r + 2].
  auto block = [&](int row0) {
    CVar k;
    // Interleave: [c0[row0], c1[row0], c0[row0+1], c1[row0+1]]
    Var re0 = t.gather(q.col[0].re, {row0, row0 + 1}, ad::vec(2));
    Var re1 = t.gather(q.col[1].re, {row0, row0 + 1}, ad::vec(2));
    Var im0 = t.gather(q.col[0].im, {row0, row0 + 1}, ad::vec(2));
    Var im1 = t.gather(q.col[1].im, {row0, row0 + 1}, ad::vec(2));
    Var re = t.gather(t.concat(re0, re1), {0, 2, 1, 3}, {2, 2});
    Var im = t.gather(t.concat(im0, im1), {0, 2, 1, 3}, {2, 2});
    k.re = re;
    k.im = im;
    return k;
  };
  return {block(0), block(2)};
}

CVar kraus_update_tape(Tape& t, const CVar& rho, const KrausVars& k, double denom_eps) {
  CVar n1 = cmatmul(t, cmatmul(t, k.k1, rho), cadjoint(t, k.k1));
  CVar n2 = cmatmul(t, cmatmul(t, k.k2, rho), cadjoint(t, k.k2));
  CVar num{t.add(n1.re, n2.re), t.add(n1.im, n2.im)};

  static const std::vector<int> kDiag = {0, 3};
  static const std::vector<int> kT = {0, 2, 1, 3};

  Var tr = t.sum(t.gather(num.re, kDiag, ad::vec(2)));
  Var inv = t.reciprocal(t.add_const(tr, denom_eps));
  CVar scaled{t.mul_scalar(num.re, inv), t.mul_scalar(num.im, inv)};

  CVar herm{t.scale(t.add(scaled.re, t.gather(scaled.re, kT, {2, 2})), 0.5),
            t.scale(t.sub(scaled.im, t.gather(scaled.im, kT, {2, 2})), 0.5)};

  Var tr2 = t.sum(t.gather(herm.re, kDiag, ad::vec(2)));
  Var inv2 = t.reciprocal(tr2);
  return {t.mul_scalar(herm.re, inv2), t.mul_scalar(herm.im, inv2)};
}

CVar direct_predict_tape(Tape& t, Var h, Var w, Var b, bool* fallback) {
  Var out = t.add(t.matmul(w, h), b);  // 8-vector
  CVar m{t.gather(out, {0, 1, 2, 3}, {2, 2}), t.gather(out, {4, 5, 6, 7}, {2, 2})};

  static const std::vector<int> kDiag = {0, 3};
  Var tre = t.sum(t.gather(m.re, kDiag, ad::vec(2)));
  Var tim = t.sum(t.gather(m.im, kDiag, ad::vec(2)));
  double re_v = t.scalar_val(tre);
  double im_v = t.scalar_val(tim);
  if (std::sqrt(re_v * re_v + im_v * im_v) <= 1e-12) {
    if (fallback) *fallback = true;
    return cmat_const(t, DensityMatrix::maximally_mixed().mat());
  }
  Var dre = t.add_const(tre, re_v >= 0.0 ? 1e-8 : -1e-8);
  Var inv_abs2 = t.reciprocal(t.add(t.mul(dre, dre), t.mul(tim, tim)));
  Var re = t.mul_scalar(t.add(t.mul_scalar(m.re, dre), t.mul_scalar(m.im, tim)), inv_abs2);
  Var im = t.mul_scalar(t.sub(t.mul_scalar(m.im, dre), t.mul_scalar(m.re, tim)), inv_abs2);
  return {re, im};
}

CVar cmat_const(Tape& t, const CMat2& m) {
  std::vector<double> re(4), im(4);
  for (int i = 0; i < 4; ++i) {
    re[i] = m.e[i].real();
    im[i] = m.e[i].imag();
  }
  return {t.constant(std::move(re), {2, 2}), t.constant(std::move(im), {2, 2})};
}

CMat2 cmat_value(const Tape& t, const CVar& v) {
  const auto& re = t.val(v.re);
  const auto& im = t.val(v.im);
  CMat2 m;
  for (int i = 0; i < 4; ++i) m.e[i] = Complex(re[i], im[i]);
  return m;
}

}  // namespace qtw::heads
