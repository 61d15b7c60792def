#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "qtw/qcore.hpp"
#include "qtw/sim.hpp"

namespace qtw::eval {

using qcore::CMat2;

// Physicality classification thresholds over the entire evaluated ensemble.
inline constexpr double kPhysicalTraceTol = 1e-4;
inline constexpr double kPhysicalPsdTol = 1e-6;

struct TrajStats {
  double fid_proxy = 0.0;
  double fid_full = 0.0;
  double bures = 0.0;
  double fid_p1 = 0.0;  // proxy fidelity over steps t < tau
  double fid_p2 = 0.0;  // proxy fidelity over steps t >= tau
  double vtr_mean = 0.0;
  double vtr_max = 0.0;
  double vpsd_mean = 0.0;
  double vpsd_max = 0.0;
  double vherm_mean = 0.0;
  double kraus_comp_max = 0.0;  // 0 when the predictor emits no Kraus pairs
  double bloch_err = 0.0;
  uint64_t steps = 0;
  uint64_t p1_steps = 0;
};

struct EvalReport {
  std::string model;
  std::string head;
  std::string test_digest;
  std::string policy;  // free-form provenance note (baseline protocol knowledge etc.)
  uint64_t n_traj = 0;
  TrajStats aggregate;  // means of per-trajectory means; *_max fields are maxima
  bool physical = false;
  std::vector<TrajStats> per_traj;
};

// Per-trajectory predictions; kraus may be empty (direct head, baselines).
struct PredictionSet {
  std::vector<CMat2> predictions;
  std::vector<qcore::KrausPair> kraus;
};

using Predictor = std::function<PredictionSet(const sim::Trajectory&, size_t index)>;

// Evaluates the predictor on every trajectory. Throws DigestMismatchError when
// train_digest is non-empty and equals test_digest (train/test overlap).
EvalReport evaluate(const std::string& model, const std::string& head,
                    const std::vector<sim::Trajectory>& test, const std::string& test_digest,
                    const std::string& train_digest, const Predictor& predictor, int workers = 1);

struct AblationDelta {
  std::string model;
  double fid_baseline = 0.0;
  double fid_kraus = 0.0;
  double delta = 0.0;  // proxy fidelity, Kraus minus baseline
  double fid_full_baseline = 0.0;
  double fid_full_kraus = 0.0;
  double delta_full = 0.0;
};

// Requires both reports to carry the same test digest.
AblationDelta ablation_delta(const EvalReport& kraus_report, const EvalReport& baseline_report);

void write_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& path);

// CSV rows in the documented column order, one line per report.
inline constexpr const char* kCsvHeader =
    "model,head,n_traj,fid_proxy,fid_full,bures,fid_p1,fid_p2,vtr_mean,vtr_max,vpsd_mean,"
    "vpsd_max,vherm_mean,kraus_comp_max,bloch_err,physical";

void write_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports);

}  // namespace qtw::eval
