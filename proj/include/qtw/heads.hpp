#pragma once

#include <array>
#include <optional>
#include <vector>

#include "qtw/ad.hpp"
#include "qtw/backbones.hpp"
#include "qtw/qcore.hpp"
#include "qtw/rng.hpp"

namespace qtw::heads {

using qcore::CMat2;
using qcore::Complex;
using qcore::DensityMatrix;
using qcore::KrausPair;
using qcore::RawPrediction;

enum class HeadKind { kraus, direct };

HeadKind head_from_string(const std::string& s);
std::string to_string(HeadKind k);

// Stabilizer constants of the Kraus update (separate knob so tests can probe
// the exact-arithmetic trace-preservation claim with the epsilon at zero).
inline constexpr double kDenomEps = 1e-8;
inline constexpr double kJitterSigma = 1e-6;
inline constexpr double kQrSingularTol = 1e-14;

// 4x2 complex matrix, row-major.
struct CMat42 {
  std::array<Complex, 8> e{};

  Complex& operator()(int r, int c) { return e[2 * r + c]; }
  const Complex& operator()(int r, int c) const { return e[2 * r + c]; }
};

// Head projection: out = W h + b with W row-major (out_dim x hidden).
// Kraus head: 16 outputs, first 8 = Re(V) row-major, last 8 = Im(V).
// Direct head: 8 outputs, first 4 = Re(rho) row-major, last 4 = Im(rho).
CMat42 build_v(const std::vector<double>& h, const double* w, const double* b, int hidden,
               rng::GaussianStream* jitter);

// Thin QR via modified Gram-Schmidt with one re-orthogonalization pass.
// diag(R) is real positive by construction (columns are normalized by their
// real norms), which fixes the U(1) column-phase gauge. Throws
// SingularityError when a column norm falls below kQrSingularTol.
CMat42 thin_qr(const CMat42& v);

// K1 = rows 0..1 of Q, K2 = rows 2..3; with this row-block split
// K1^dag K1 + K2^dag K2 = Q^dag Q = I exactly.
KrausPair kraus_from_q(const CMat42& q);

// (K1 rho K1^dag + K2 rho K2^dag) / (Tr[...] + denom_eps), then Hermitized
// and trace-renormalized. Total for valid inputs.
DensityMatrix kraus_update(const DensityMatrix& rho, const KrausPair& k,
                           double denom_eps = kDenomEps);

// As above but returning the numerator trace before stabilization, for the
// exact-arithmetic trace-preservation check.
struct KrausUpdateDebug {
  DensityMatrix state;
  double pre_normalization_trace = 0.0;
};
KrausUpdateDebug kraus_update_debug(const DensityMatrix& rho, const KrausPair& k,
                                    double denom_eps = kDenomEps);

// Direct regression head: 8 outputs -> complex 2x2, divided by the complex
// trace with a sign-safe 1e-8 guard. Not Hermitized, not PSD-projected.
// A |trace| <= 1e-12 input yields the maximally mixed fallback and sets the
// flag.
struct DirectResult {
  RawPrediction prediction;
  bool fallback = false;
};
DirectResult direct_predict(const std::vector<double>& h, const double* w, const double* b,
                            int hidden);

// Full model = backbone + head blocks ("head.W", "head.b").
struct ModelSpec {
  backbones::ModelConfig backbone;
  HeadKind head = HeadKind::kraus;

  int head_outputs() const { return head == HeadKind::kraus ? 16 : 8; }
};

struct ModelParams {
  backbones::ParamLayout layout;
  std::vector<double> values;
};

backbones::ParamLayout model_layout(const ModelSpec& spec);
ModelParams init_model(const ModelSpec& spec);

// Inference rollout (plain path, deterministic: jitter off).
// Kraus mode evolves recursively from rho0; direct mode maps each h_t.
// predictions[t] estimates the post-step state states[t].
struct RolloutResult {
  std::vector<CMat2> predictions;
  std::vector<KrausPair> kraus;  // empty for the direct head
  uint64_t fallback_steps = 0;
};

RolloutResult rollout(const ModelSpec& spec, const ModelParams& params,
                      const std::vector<double>& std_record, const DensityMatrix& rho0);

// --- Tape builders (training path) ---

// Complex tensor on the tape as paired real parts.
struct CVar {
  ad::Var re, im;
};

// h -> V as two stacked column pairs; jitter (when a stream is supplied) adds
// N(0, kJitterSigma) to all 16 projections, training mode only.
struct VVars {
  CVar col[2];  // 4-vectors
};

VVars build_v_tape(ad::Tape& t, ad::Var h, ad::Var w, ad::Var b, rng::GaussianStream* jitter);

struct QVars {
  CVar col[2];
};

QVars thin_qr_tape(ad::Tape& t, const VVars& v);

struct KrausVars {
  CVar k1, k2;  // 2x2
};

KrausVars kraus_from_q_tape(ad::Tape& t, const QVars& q);

CVar kraus_update_tape(ad::Tape& t, const CVar& rho, const KrausVars& k,
                       double denom_eps = kDenomEps);

// Direct head on tape; the near-zero-trace fallback becomes a constant
// (gradient-free) maximally mixed state, mirroring the plain path.
CVar direct_predict_tape(ad::Tape& t, ad::Var h, ad::Var w, ad::Var b, bool* fallback);

// Constant complex 2x2 from a plain matrix.
CVar cmat_const(ad::Tape& t, const CMat2& m);

// Forward value of a tape complex 2x2.
CMat2 cmat_value(const ad::Tape& t, const CVar& v);

}  // namespace qtw::heads
