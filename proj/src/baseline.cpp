#include "qtw/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace qtw::baseline {

namespace {

using qcore::CMat2;

double clip(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

// In-place iterative radix-2 Cooley-Tukey.
void fft_pow2(std::vector<std::complex<double>>& a) {
  size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

}  // namespace

std::vector<double> magnitude_spectrum_pow2(const std::vector<double>& x, size_t n) {
  if (n == 0 || (n & (n - 1)) != 0) throw ContractError("spectrum length must be a power of two");
  std::vector<std::complex<double>> a(n, 0.0);
  for (size_t i = 0; i < x.size() && i < n; ++i) a[i] = x[i];
  fft_pow2(a);
  std::vector<double> mag(n / 2 + 1);
  for (size_t k = 0; k <= n / 2; ++k) mag[k] = std::abs(a[k]);
  return mag;
}

std::vector<DensityMatrix> exact_filter_with(const sim::Trajectory& traj, double gamma,
                                             double gamma2, double omega1, double omega2,
                                             uint64_t tau) {
  const sim::SimParams& p = traj.params;
  const CMat2 hx = omega1 * qcore::pauli_x();
  const CMat2 hy = omega2 * qcore::pauli_y();
  DensityMatrix rho = DensityMatrix::ground();
  std::vector<DensityMatrix> out;
  out.reserve(traj.record.size());
  for (uint64_t t = 0; t < traj.record.size(); ++t) {
    bool phase1 = t < tau;
    double g = phase1 ? gamma : gamma2;
    double expect = 2.0 * qcore::rho_to_bloch(rho).rz;  // Tr[(L+L^dag) rho]
    double dW = traj.record[t] - std::sqrt(g * p.eta) * expect * p.dt;
    sim::GuardedStep step = sim::advance_guarded(rho, phase1 ? hx : hy, g, p.eta, p.dt, dW);
    rho = step.state;
    out.push_back(rho);
  }
  return out;
}

std::vector<DensityMatrix> exact_filter(const sim::Trajectory& traj) {
  const sim::SimParams& p = traj.params;
  return exact_filter_with(traj, p.gamma, p.gamma2, p.omega1, p.omega2, p.tau);
}

double estimate_omega(const std::vector<double>& window, double dt, double prev_omega,
                      const AdaptiveConfig& cfg) {
  const size_t n = window.size();
  if (n < 4) return prev_omega;

  bool constant = true;
  for (double v : window)
    if (v != window.front()) {
      constant = false;
      break;
    }
  if (constant) return prev_omega;

  double mean = 0.0;
  for (double v : window) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i) x[i] = window[i] - mean;

  if (cfg.lowpass > 1) {
    // Boxcar with zero padding at the edges.
    std::vector<double> y(n, 0.0);
    int half = cfg.lowpass / 2;
    for (size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (int k = -half; k <= half; ++k) {
        long j = static_cast<long>(i) + k;
        if (j >= 0 && j < static_cast<long>(n)) s += x[j];
      }
      y[i] = s / static_cast<double>(cfg.lowpass);
    }
    x = std::move(y);
  }

  size_t nfft = 1;
  while (nfft < static_cast<size_t>(cfg.fft_pad) * n) nfft <<= 1;
  std::vector<double> mag = magnitude_spectrum_pow2(x, nfft);

  // Search the physically possible band only: f <= band_omega_hi / pi.
  double f_hi = cfg.band_omega_hi / std::numbers::pi;
  size_t k_hi = std::min<size_t>(static_cast<size_t>(f_hi * static_cast<double>(nfft) * dt),
                                 nfft / 2 - 1);
  if (k_hi < 2) return prev_omega;

  size_t k_peak = 1;
  for (size_t k = 2; k <= k_hi; ++k)
    if (mag[k] > mag[k_peak]) k_peak = k;

  std::vector<double> band(mag.begin() + 1, mag.begin() + k_hi + 1);
  std::nth_element(band.begin(), band.begin() + band.size() / 2, band.end());
  double med = band[band.size() / 2];
  if (!(med > 0.0) || mag[k_peak] < cfg.gate_ratio * med) return prev_omega;

  double a = mag[k_peak - 1], b = mag[k_peak], c = mag[k_peak + 1];
  double den = a - 2.0 * b + c;
  double delta = 0.0;
  if (std::abs(den) > 1e-30) delta = clip(0.5 * (a - c) / den, -0.5, 0.5);
  double f = (static_cast<double>(k_peak) + delta) / (static_cast<double>(nfft) * dt);
  return clip(std::numbers::pi * f, cfg.omega_clip_lo, cfg.band_omega_hi);
}

double estimate_gamma(const std::vector<double>& window, double dt, const AdaptiveConfig& cfg) {
  const int wb = cfg.block;
  const int nb = static_cast<int>(window.size()) / wb;
  if (nb < 2) return clip(cfg.gamma_init, cfg.gamma_clip_lo, cfg.gamma_clip_hi);
  std::vector<double> sums(nb, 0.0);
  for (int j = 0; j < nb; ++j)
    for (int i = 0; i < wb; ++i) sums[j] += window[j * wb + i];
  double mean = 0.0;
  for (double s : sums) mean += s;
  mean /= nb;
  double var = 0.0;
  for (double s : sums) var += (s - mean) * (s - mean);
  var /= (nb - 1);
  double noise = wb * dt;
  double excess = std::max(0.0, var - noise);
  double denom = 4.0 * wb * wb * dt * dt * 0.5;
  return clip(excess / denom, cfg.gamma_clip_lo, cfg.gamma_clip_hi);
}

bool detect_switch(FilterState& st, double nu, const AdaptiveConfig& cfg) {
  st.innovation_ema = cfg.ema_decay * st.innovation_ema + (1.0 - cfg.ema_decay) * nu * nu;
  ++st.steps_since_reset;
  if (st.innovation_ema > cfg.ema_threshold)
    ++st.consec_above;
  else
    st.consec_above = 0;
  if (st.consec_above >= cfg.dwell && st.steps_since_reset > cfg.refractory) {
    st.window.clear();
    st.innovation_ema = 1.0;
    st.consec_above = 0;
    st.steps_since_reset = 0;
    st.axis = 1;  // the protocol's switch is one-shot x -> y
    return true;
  }
  return false;
}

AdaptiveResult adaptive_filter(const sim::Trajectory& traj, const AdaptiveConfig& cfg) {
  const sim::SimParams& p = traj.params;
  const double sqrt_dt = std::sqrt(p.dt);

  FilterState st;
  st.omega_hat = cfg.omega_init;
  st.gamma_hat = cfg.gamma_init;
  st.window.reserve(cfg.fft_window);

  AdaptiveResult out;
  out.states.reserve(traj.record.size());
  out.events.reserve(traj.record.size());

  for (uint64_t t = 0; t < traj.record.size(); ++t) {
    double dy = traj.record[t];
    if (cfg.bypass_estimators) {
      bool phase1 = t < p.tau;
      st.omega_hat = phase1 ? p.omega1 : p.omega2;
      st.gamma_hat = phase1 ? p.gamma : p.gamma2;
      st.axis = phase1 ? 0 : 1;
    }
    double expect = 2.0 * qcore::rho_to_bloch(st.rho).rz;
    double drift = std::sqrt(st.gamma_hat * p.eta) * expect * p.dt;
    double nu = (dy - drift) / sqrt_dt;
    bool fired = cfg.bypass_estimators ? false : detect_switch(st, nu, cfg);
    if (fired) out.detections.push_back(t);

    st.window.push_back(dy);
    if (st.window.size() > static_cast<size_t>(cfg.fft_window))
      st.window.erase(st.window.begin());
    if (!cfg.bypass_estimators && st.window.size() == static_cast<size_t>(cfg.fft_window)) {
      st.omega_hat = estimate_omega(st.window, p.dt, st.omega_hat, cfg);
      st.gamma_hat = estimate_gamma(st.window, p.dt, cfg);
    }

    CMat2 h = st.omega_hat * (st.axis == 0 ? qcore::pauli_x() : qcore::pauli_y());
    double dW = dy - std::sqrt(st.gamma_hat * p.eta) * expect * p.dt;
    sim::GuardedStep step = sim::advance_guarded(st.rho, h, st.gamma_hat, p.eta, p.dt, dW);
    st.rho = step.state;
    out.states.push_back(st.rho);
    out.events.push_back({t, st.omega_hat, st.gamma_hat, st.innovation_ema, fired});
  }
  return out;
}

std::vector<DensityMatrix> lindblad_only_filter(const sim::Trajectory& traj,
                                                const AdaptiveConfig& cfg) {
  const sim::SimParams& p = traj.params;
  const CMat2 h = cfg.omega_init * qcore::pauli_x();
  DensityMatrix rho = DensityMatrix::ground();
  std::vector<DensityMatrix> out;
  out.reserve(traj.record.size());
  for (uint64_t t = 0; t < traj.record.size(); ++t) {
    sim::GuardedStep step = sim::advance_guarded(rho, h, cfg.gamma_init, p.eta, p.dt, 0.0);
    rho = step.state;
    out.push_back(rho);
  }
  return out;
}

}  // namespace qtw::baseline
