#pragma once

#include <complex>
#include <vector>

#include "qtw/qcore.hpp"
#include "qtw/sim.hpp"

namespace qtw::baseline {

using qcore::DensityMatrix;

// Knobs of the adaptive SME filter. Defaults follow the reference protocol
// (window 100); a 400-step window resolves the Rabi band much better and is
// the recommended setting for desk-scale runs.
struct AdaptiveConfig {
  int fft_window = 100;
  int fft_pad = 8;          // zero-pad to the next power of two >= pad * window
  int lowpass = 3;          // boxcar width applied before the FFT
  double band_omega_hi = 5.0;  // peak search restricted to omega <= this (protocol knowledge)
  double omega_clip_lo = 0.05;
  double gate_ratio = 2.0;  // peak must exceed gate_ratio * median of the band
  int block = 20;           // block length of the gamma excess-variance estimator
  double gamma_clip_lo = 0.1;
  double gamma_clip_hi = 2.0;
  double omega_init = 2.25;  // prior means of the sampling ranges
  double gamma_init = 0.55;
  double ema_decay = 0.98;
  double ema_threshold = 2.5;
  int dwell = 25;
  int refractory = 50;
  // Wiring-identity mode: inject the true (omega, gamma, axis) schedule and
  // skip the estimators, which must reduce the filter to exact_filter.
  bool bypass_estimators = false;
};

// Re-integrates the SME with the true parameters, driven by the recorded
// increments via dW = dy - sqrt(gamma eta) Tr[(L+L^dag) rho] dt. Applies the
// same guarded step as the simulator, so it reproduces the stored states up
// to integration rounding.
std::vector<DensityMatrix> exact_filter(const sim::Trajectory& traj);

// Variant with explicit (possibly wrong) parameters, for mismatch studies.
std::vector<DensityMatrix> exact_filter_with(const sim::Trajectory& traj, double gamma,
                                             double gamma2, double omega1, double omega2,
                                             uint64_t tau);

// Rabi frequency from the sliding window: quadratically interpolated peak of
// the zero-padded magnitude spectrum of the mean-removed, low-passed window,
// searched over the physically possible band; omega = pi * f_peak since
// <sigma_z> oscillates at angular frequency 2 omega. Returns prev_omega when
// the band has no peak above gate_ratio * median (flat spectrum).
double estimate_omega(const std::vector<double>& window, double dt, double prev_omega,
                      const AdaptiveConfig& cfg = {});

// Excess variance of non-overlapping block sums:
//   gamma = clip( max(0, Var(S) - W_b dt) / (4 W_b^2 dt^2 * 1/2), lo, hi )
// using E[<sigma_z>^2] ~ 1/2 for the Rabi signal.
double estimate_gamma(const std::vector<double>& window, double dt,
                      const AdaptiveConfig& cfg = {});

struct FilterState {
  DensityMatrix rho = DensityMatrix::ground();
  double omega_hat = 2.25;
  double gamma_hat = 0.55;
  int axis = 0;  // 0 = sigma_x, 1 = sigma_y
  std::vector<double> window;
  double innovation_ema = 1.0;
  int consec_above = 0;
  int steps_since_reset = 0;
};

// Innovation-based switch detector: EMA of nu^2; fires after `dwell`
// consecutive steps above threshold once past the refractory period. On
// detection the window and EMA reset and the axis toggles x -> y.
bool detect_switch(FilterState& st, double nu, const AdaptiveConfig& cfg = {});

struct FilterEvent {
  uint64_t step = 0;
  double omega_hat = 0.0;
  double gamma_hat = 0.0;
  double ema = 0.0;
  bool detected = false;
};

struct AdaptiveResult {
  std::vector<DensityMatrix> states;
  std::vector<FilterEvent> events;  // one per step
  std::vector<uint64_t> detections;
};

// Full adaptive pipeline on a raw (unstandardized) record: knows the protocol
// family (sigma_x then sigma_y, gamma constant, rho_0 = ground, eta) but not
// parameter values or tau.
AdaptiveResult adaptive_filter(const sim::Trajectory& traj, const AdaptiveConfig& cfg = {});

// Deterministic no-measurement reference: integrates only the Lindblad drift
// at the prior parameters. Comparative lower bar for the adaptive filter.
std::vector<DensityMatrix> lindblad_only_filter(const sim::Trajectory& traj,
                                                const AdaptiveConfig& cfg = {});

// Radix-2 magnitude spectrum helper (exposed for the DFT oracle test):
// returns |FFT(x zero-padded to n)| for bins 0..n/2, n a power of two.
std::vector<double> magnitude_spectrum_pow2(const std::vector<double>& x, size_t n);

}  // namespace qtw::baseline
