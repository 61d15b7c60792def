#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "qtw/eval.hpp"
#include "qtw/heads.hpp"

using namespace qtw;
using namespace qtw::eval;
using qcore::CMat2;
using qcore::Complex;
using qcore::DensityMatrix;

namespace {

std::vector<sim::Trajectory> small_test_set(int n, uint64_t T = 120) {
  sim::DatasetSpec spec;
  spec.T = T;
  spec.tau_lo = T / 5;
  spec.tau_hi = 4 * T / 5;
  std::vector<sim::Trajectory> out;
  for (int i = 0; i < n; ++i)
    out.push_back(sim::simulate_trajectory(sim::draw_params(spec, 4000, i)));
  return out;
}

Predictor ground_truth_predictor() {
  return [](const sim::Trajectory& traj, size_t) {
    PredictionSet ps;
    for (const auto& b : traj.states) ps.predictions.push_back(qcore::bloch_to_rho(b).mat());
    return ps;
  };
}

}  // namespace

TEST_CASE("ground truth against itself") {
  auto test = small_test_set(3);
  EvalReport rep = evaluate("oracle", "physics", test, "t1", "", ground_truth_predictor());
  CHECK(rep.aggregate.fid_full == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.aggregate.bures == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(rep.aggregate.vtr_max < 1e-13);
  CHECK(rep.aggregate.vpsd_max < 1e-13);
  CHECK(rep.aggregate.vherm_mean < 1e-13);
  CHECK(rep.physical);
}

TEST_CASE("constant maximally mixed predictor scores proxy ~ 0.5") {
  auto test = small_test_set(3);
  Predictor mixed = [](const sim::Trajectory& traj, size_t) {
    PredictionSet ps;
    ps.predictions.assign(traj.states.size(), DensityMatrix::maximally_mixed().mat());
    return ps;
  };
  EvalReport rep = evaluate("mixed", "constant", test, "t1", "", mixed);
  CHECK(rep.aggregate.fid_proxy == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(rep.physical);  // I/2 is a valid state
}

TEST_CASE("kraus and direct heads get the expected physicality classification") {
  auto test = small_test_set(2, 80);

  heads::ModelSpec kspec;
  kspec.backbone.kind = backbones::Kind::gru;
  kspec.backbone.hidden_dim = 6;
  kspec.backbone.seed = 5;
  kspec.head = heads::HeadKind::kraus;
  heads::ModelParams kparams = heads::init_model(kspec);
  sim::StandardizationStats stats{0.0, 1.0, ""};

  Predictor kraus = [&](const sim::Trajectory& traj, size_t) {
    auto rec = sim::standardize(traj.record, stats);
    heads::RolloutResult r = heads::rollout(kspec, kparams, rec, DensityMatrix::ground());
    return PredictionSet{std::move(r.predictions), std::move(r.kraus)};
  };
  EvalReport krep = evaluate("gru", "kraus", test, "t2", "", kraus);
  CHECK(krep.physical);
  CHECK(krep.aggregate.kraus_comp_max <= 1e-12);
  CHECK(krep.aggregate.vtr_max <= 1e-12);

  heads::ModelSpec dspec = kspec;
  dspec.head = heads::HeadKind::direct;
  heads::ModelParams dparams = heads::init_model(dspec);
  Predictor direct = [&](const sim::Trajectory& traj, size_t) {
    auto rec = sim::standardize(traj.record, stats);
    heads::RolloutResult r = heads::rollout(dspec, dparams, rec, DensityMatrix::ground());
    return PredictionSet{std::move(r.predictions), {}};
  };
  EvalReport drep = evaluate("gru", "direct", test, "t2", "", direct);
  CHECK(drep.aggregate.vherm_mean > 0.0);  // raw head violates Hermiticity
  CHECK(!drep.physical);
}

TEST_CASE("digest overlap between train and test is a hard error") {
  auto test = small_test_set(1);
  CHECK_THROWS_AS(
      evaluate("m", "h", test, "samedigest", "samedigest", ground_truth_predictor()),
      DigestMismatchError);
}

TEST_CASE("phase masks follow each trajectory's own tau") {
  auto test = small_test_set(4);
  EvalReport rep = evaluate("oracle", "physics", test, "t3", "", ground_truth_predictor());
  for (size_t i = 0; i < test.size(); ++i) {
    CHECK(rep.per_traj[i].p1_steps == test[i].params.tau);
    CHECK(rep.per_traj[i].steps == test[i].params.T);
  }
}

TEST_CASE("aggregates are exact means of per-trajectory rows") {
  auto test = small_test_set(5);
  Predictor noisy = [](const sim::Trajectory& traj, size_t idx) {
    PredictionSet ps;
    rng::SplitMix64 s{idx * 7 + 1};
    for (const auto& b : traj.states) {
      // wobble the truth a bit, staying inside the ball
      qcore::BlochVector w{b.rx * 0.9 + 0.05 * s.next_uniform(-1, 1),
                           b.ry * 0.9 + 0.05 * s.next_uniform(-1, 1),
                           b.rz * 0.9 + 0.05 * s.next_uniform(-1, 1)};
      ps.predictions.push_back(qcore::bloch_to_rho(w).mat());
    }
    return ps;
  };
  EvalReport rep = evaluate("wobble", "test", test, "t4", "", noisy, 2);
  double mean_fid = 0.0, mean_bures = 0.0, max_vtr = 0.0;
  for (const auto& s : rep.per_traj) {
    mean_fid += s.fid_proxy;
    mean_bures += s.bures;
    max_vtr = std::max(max_vtr, s.vtr_max);
  }
  mean_fid /= rep.per_traj.size();
  mean_bures /= rep.per_traj.size();
  CHECK(std::abs(rep.aggregate.fid_proxy - mean_fid) < 1e-12);
  CHECK(std::abs(rep.aggregate.bures - mean_bures) < 1e-12);
  CHECK(rep.aggregate.vtr_max == max_vtr);
}

TEST_CASE("report round trip is bit-exact") {
  namespace fs = std::filesystem;
  auto test = small_test_set(3);
  EvalReport rep = evaluate("oracle", "physics", test, "t-digest", "", ground_truth_predictor());
  rep.policy = "unit-test";
  fs::path path = fs::temp_directory_path() / "qtw_test_report.txt";
  write_report(path, rep);
  EvalReport back = read_report(path);
  CHECK(back.model == rep.model);
  CHECK(back.head == rep.head);
  CHECK(back.test_digest == rep.test_digest);
  CHECK(back.policy == rep.policy);
  CHECK(back.n_traj == rep.n_traj);
  CHECK(back.physical == rep.physical);
  CHECK(back.aggregate.fid_proxy == rep.aggregate.fid_proxy);
  CHECK(back.aggregate.fid_full == rep.aggregate.fid_full);
  CHECK(back.aggregate.bures == rep.aggregate.bures);
  CHECK(back.aggregate.kraus_comp_max == rep.aggregate.kraus_comp_max);
  REQUIRE(back.per_traj.size() == rep.per_traj.size());
  for (size_t i = 0; i < rep.per_traj.size(); ++i) {
    CHECK(back.per_traj[i].fid_proxy == rep.per_traj[i].fid_proxy);
    CHECK(back.per_traj[i].vtr_max == rep.per_traj[i].vtr_max);
    CHECK(back.per_traj[i].bloch_err == rep.per_traj[i].bloch_err);
  }
  // write-read-write gives identical bytes
  fs::path path2 = fs::temp_directory_path() / "qtw_test_report2.txt";
  write_report(path2, back);
  std::ifstream f1(path), f2(path2);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("csv columns match the documented header exactly") {
  namespace fs = std::filesystem;
  auto test = small_test_set(2);
  EvalReport rep = evaluate("gru", "kraus", test, "t5", "", ground_truth_predictor());
  fs::path path = fs::temp_directory_path() / "qtw_test_report.csv";
  write_csv(path, {rep});
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  CHECK(header ==
        "model,head,n_traj,fid_proxy,fid_full,bures,fid_p1,fid_p2,vtr_mean,vtr_max,vpsd_mean,"
        "vpsd_max,vherm_mean,kraus_comp_max,bloch_err,physical");
  std::string row;
  std::getline(f, row);
  CHECK(row.substr(0, 12) == "gru,kraus,2,");
  fs::remove(path);
}

TEST_CASE("ablation delta") {
  auto test = small_test_set(2);
  EvalReport a = evaluate("gru", "kraus", test, "t6", "", ground_truth_predictor());
  EvalReport b = a;
  b.head = "direct";
  AblationDelta d = ablation_delta(a, b);
  CHECK(d.delta == 0.0);
  CHECK(d.delta_full == 0.0);

  EvalReport c = a;
  c.test_digest = "other";
  CHECK_THROWS_AS(ablation_delta(a, c), DigestMismatchError);
}
