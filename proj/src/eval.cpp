#include "qtw/eval.hpp"

#include <cmath>
#include <fstream>

#include "qtw/kvtext.hpp"
#include "qtw/parallel.hpp"

namespace qtw::eval {

namespace {

TrajStats score_trajectory(const sim::Trajectory& traj, const PredictionSet& pred) {
  if (pred.predictions.size() != traj.states.size())
    throw ContractError("prediction length does not match trajectory");
  if (!pred.kraus.empty() && pred.kraus.size() != pred.predictions.size())
    throw ContractError("kraus pair count does not match predictions");

  TrajStats s;
  s.steps = pred.predictions.size();
  double p1_sum = 0.0, p2_sum = 0.0;
  for (uint64_t t = 0; t < s.steps; ++t) {
    qcore::DensityMatrix truth = qcore::bloch_to_rho(traj.states[t]);
    const CMat2& p = pred.predictions[t];
    qcore::Fidelity f = qcore::fidelity_raw(p, truth);
    s.fid_proxy += f.proxy;
    s.fid_full += f.full;
    s.bures += qcore::bures_from_fidelity(f.full);

    qcore::PhysicalityMetrics v = qcore::physicality_metrics({p});
    s.vtr_mean += v.v_tr;
    s.vtr_max = std::max(s.vtr_max, v.v_tr);
    s.vpsd_mean += v.v_psd;
    s.vpsd_max = std::max(s.vpsd_max, v.v_psd);
    s.vherm_mean += v.v_herm;

    qcore::BlochVector bp = qcore::bloch_of(p);
    double dx = bp.rx - traj.states[t].rx;
    double dy = bp.ry - traj.states[t].ry;
    double dz = bp.rz - traj.states[t].rz;
    s.bloch_err += std::sqrt(dx * dx + dy * dy + dz * dz);

    if (!pred.kraus.empty())
      s.kraus_comp_max = std::max(s.kraus_comp_max, qcore::kraus_completeness_error(pred.kraus[t]));

    if (t < traj.params.tau)
      p1_sum += f.proxy;
    else
      p2_sum += f.proxy;
  }
  s.p1_steps = std::min<uint64_t>(traj.params.tau, s.steps);
  uint64_t p2_steps = s.steps - s.p1_steps;
  double n = static_cast<double>(s.steps);
  s.fid_proxy /= n;
  s.fid_full /= n;
  s.bures /= n;
  s.vtr_mean /= n;
  s.vpsd_mean /= n;
  s.vherm_mean /= n;
  s.bloch_err /= n;
  s.fid_p1 = s.p1_steps ? p1_sum / static_cast<double>(s.p1_steps) : 0.0;
  s.fid_p2 = p2_steps ? p2_sum / static_cast<double>(p2_steps) : 0.0;
  return s;
}

}  // namespace

EvalReport evaluate(const std::string& model, const std::string& head,
                    const std::vector<sim::Trajectory>& test, const std::string& test_digest,
                    const std::string& train_digest, const Predictor& predictor, int workers) {
  if (test.empty()) throw ContractError("empty test set");
  if (!train_digest.empty() && !test_digest.empty() && train_digest == test_digest)
    throw DigestMismatchError("train and test data share the digest " + test_digest);

  EvalReport rep;
  rep.model = model;
  rep.head = head;
  rep.test_digest = test_digest;
  rep.n_traj = test.size();
  rep.per_traj.resize(test.size());

  parallel::for_indexed(test.size(), workers, [&](size_t i) {
    rep.per_traj[i] = score_trajectory(test[i], predictor(test[i], i));
  });

  TrajStats& a = rep.aggregate;
  for (const TrajStats& s : rep.per_traj) {
    a.fid_proxy += s.fid_proxy;
    a.fid_full += s.fid_full;
    a.bures += s.bures;
    a.fid_p1 += s.fid_p1;
    a.fid_p2 += s.fid_p2;
    a.vtr_mean += s.vtr_mean;
    a.vpsd_mean += s.vpsd_mean;
    a.vherm_mean += s.vherm_mean;
    a.bloch_err += s.bloch_err;
    a.vtr_max = std::max(a.vtr_max, s.vtr_max);
    a.vpsd_max = std::max(a.vpsd_max, s.vpsd_max);
    a.kraus_comp_max = std::max(a.kraus_comp_max, s.kraus_comp_max);
    a.steps += s.steps;
    a.p1_steps += s.p1_steps;
  }
  double n = static_cast<double>(rep.per_traj.size());
  a.fid_proxy /= n;
  a.fid_full /= n;
  a.bures /= n;
  a.fid_p1 /= n;
  a.fid_p2 /= n;
  a.vtr_mean /= n;
  a.vpsd_mean /= n;
  a.vherm_mean /= n;
  a.bloch_err /= n;

  rep.physical = a.vtr_max < kPhysicalTraceTol && a.vpsd_max <= kPhysicalPsdTol;
  return rep;
}

AblationDelta ablation_delta(const EvalReport& kraus_report, const EvalReport& baseline_report) {
  if (kraus_report.test_digest != baseline_report.test_digest)
    throw DigestMismatchError("ablation operands evaluated on different test sets: " +
                              kraus_report.test_digest + " vs " + baseline_report.test_digest);
  AblationDelta d;
  d.model = kraus_report.model;
  d.fid_kraus = kraus_report.aggregate.fid_proxy;
  d.fid_baseline = baseline_report.aggregate.fid_proxy;
  d.delta = d.fid_kraus - d.fid_baseline;
  d.fid_full_kraus = kraus_report.aggregate.fid_full;
  d.fid_full_baseline = baseline_report.aggregate.fid_full;
  d.delta_full = d.fid_full_kraus - d.fid_full_baseline;
  return d;
}

namespace {

void put_stats(kvtext::Document& doc, const std::string& prefix, const TrajStats& s) {
  doc.set_f64(prefix + "fid_proxy", s.fid_proxy);
  doc.set_f64(prefix + "fid_full", s.fid_full);
  doc.set_f64(prefix + "bures", s.bures);
  doc.set_f64(prefix + "fid_p1", s.fid_p1);
  doc.set_f64(prefix + "fid_p2", s.fid_p2);
  doc.set_f64(prefix + "vtr_mean", s.vtr_mean);
  doc.set_f64(prefix + "vtr_max", s.vtr_max);
  doc.set_f64(prefix + "vpsd_mean", s.vpsd_mean);
  doc.set_f64(prefix + "vpsd_max", s.vpsd_max);
  doc.set_f64(prefix + "vherm_mean", s.vherm_mean);
  doc.set_f64(prefix + "kraus_comp_max", s.kraus_comp_max);
  doc.set_f64(prefix + "bloch_err", s.bloch_err);
  doc.set_u64(prefix + "steps", s.steps);
  doc.set_u64(prefix + "p1_steps", s.p1_steps);
}

TrajStats get_stats(const kvtext::Document& doc, const std::string& prefix) {
  TrajStats s;
  s.fid_proxy = doc.get_f64(prefix + "fid_proxy");
  s.fid_full = doc.get_f64(prefix + "fid_full");
  s.bures = doc.get_f64(prefix + "bures");
  s.fid_p1 = doc.get_f64(prefix + "fid_p1");
  s.fid_p2 = doc.get_f64(prefix + "fid_p2");
  s.vtr_mean = doc.get_f64(prefix + "vtr_mean");
  s.vtr_max = doc.get_f64(prefix + "vtr_max");
  s.vpsd_mean = doc.get_f64(prefix + "vpsd_mean");
  s.vpsd_max = doc.get_f64(prefix + "vpsd_max");
  s.vherm_mean = doc.get_f64(prefix + "vherm_mean");
  s.kraus_comp_max = doc.get_f64(prefix + "kraus_comp_max");
  s.bloch_err = doc.get_f64(prefix + "bloch_err");
  s.steps = doc.get_u64(prefix + "steps");
  s.p1_steps = doc.get_u64(prefix + "p1_steps");
  return s;
}

}  // namespace

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  kvtext::Document doc;
  doc.set("format", "qtw-report/1");
  doc.set("model", report.model);
  doc.set("head", report.head);
  doc.set("test_digest", report.test_digest);
  doc.set("policy", report.policy);
  doc.set_u64("n_traj", report.n_traj);
  doc.set_u64("physical", report.physical ? 1 : 0);
  put_stats(doc, "agg.", report.aggregate);
  for (size_t i = 0; i < report.per_traj.size(); ++i)
    put_stats(doc, "traj." + std::to_string(i) + ".", report.per_traj[i]);
  kvtext::save(path, doc);
}

EvalReport read_report(const std::filesystem::path& path) {
  kvtext::Document doc = kvtext::load(path);
  if (doc.get("format") != "qtw-report/1") throw IoError("unknown report format in " + path.string());
  EvalReport rep;
  rep.model = doc.get("model");
  rep.head = doc.get("head");
  rep.test_digest = doc.get("test_digest");
  rep.policy = doc.get("policy");
  rep.n_traj = doc.get_u64("n_traj");
  rep.physical = doc.get_u64("physical") != 0;
  rep.aggregate = get_stats(doc, "agg.");
  for (uint64_t i = 0; i < rep.n_traj; ++i)
    rep.per_traj.push_back(get_stats(doc, "traj." + std::to_string(i) + "."));
  return rep;
}

void write_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << kCsvHeader << "\n";
  for (const EvalReport& r : reports) {
    const TrajStats& a = r.aggregate;
    f << r.model << ',' << r.head << ',' << r.n_traj << ',' << kvtext::format_f64(a.fid_proxy)
      << ',' << kvtext::format_f64(a.fid_full) << ',' << kvtext::format_f64(a.bures) << ','
      << kvtext::format_f64(a.fid_p1) << ',' << kvtext::format_f64(a.fid_p2) << ','
      << kvtext::format_f64(a.vtr_mean) << ',' << kvtext::format_f64(a.vtr_max) << ','
      << kvtext::format_f64(a.vpsd_mean) << ',' << kvtext::format_f64(a.vpsd_max) << ','
      << kvtext::format_f64(a.vherm_mean) << ',' << kvtext::format_f64(a.kraus_comp_max) << ','
      << kvtext::format_f64(a.bloch_err) << ',' << (r.physical ? 1 : 0) << "\n";
  }
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace qtw::eval
