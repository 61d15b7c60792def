#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "qtw/digest.hpp"
#include "qtw/eval.hpp"
#include "qtw/kvtext.hpp"
#include "qtw/train.hpp"

namespace fs = std::filesystem;
using namespace qtw;

namespace {

const fs::path kWork = fs::temp_directory_path() / "qtw_cli_test";

int run_cli(const std::string& args, const std::string& env = "") {
  std::string cmd = env + " " + std::string(QTW_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string gen_args(const fs::path& dir, const std::string& extra = "") {
  return "gen --out " + dir.string() + " --train 10 --test 4 --T 150 " + extra;
}

}  // namespace

TEST_CASE("gen produces the documented files and is worker-independent") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);

  fs::path d1 = kWork / "data1";
  fs::path d2 = kWork / "data2";
  REQUIRE(run_cli(gen_args(d1, "--workers 1")) == 0);
  REQUIRE(run_cli(gen_args(d2, "--workers 2")) == 0);

  for (const char* f : {"train.qtrj", "test.qtrj", "stats.txt", "manifest.txt", "run-gen.txt"}) {
    CHECK(fs::exists(d1 / f));
  }
  CHECK(digest::file_digest(d1 / "train.qtrj") == digest::file_digest(d2 / "train.qtrj"));
  CHECK(digest::file_digest(d1 / "test.qtrj") == digest::file_digest(d2 / "test.qtrj"));
  CHECK(digest::file_digest(d1 / "stats.txt") == digest::file_digest(d2 / "stats.txt"));

  // tau range scaled with T: check manifest echo
  kvtext::Document m = kvtext::load(d1 / "manifest.txt");
  CHECK(m.get_u64("spec.tau_lo") == 30);
  CHECK(m.get_u64("spec.tau_hi") == 120);
}

TEST_CASE("seed precedence: flags beat environment") {
  fs::path da = kWork / "seed_flag";
  fs::path db = kWork / "seed_env";
  fs::path dc = kWork / "seed_both";
  REQUIRE(run_cli(gen_args(da, "--seed 777")) == 0);
  REQUIRE(run_cli(gen_args(db), "QTW_SEED=777") == 0);
  REQUIRE(run_cli(gen_args(dc, "--seed 777"), "QTW_SEED=42") == 0);
  CHECK(digest::file_digest(da / "train.qtrj") == digest::file_digest(db / "train.qtrj"));
  CHECK(digest::file_digest(da / "train.qtrj") == digest::file_digest(dc / "train.qtrj"));
}

TEST_CASE("config file feeds defaults, flags override") {
  fs::path cfg = kWork / "gen.cfg";
  {
    std::ofstream f(cfg);
    f << "[gen]\ntrain = 6\ntest = 3\nT = 100\n";
  }
  fs::path d = kWork / "cfg_data";
  REQUIRE(run_cli("gen --config " + cfg.string() + " --out " + d.string() + " --test 2") == 0);
  kvtext::Document m = kvtext::load(d / "manifest.txt");
  CHECK(m.get_u64("spec.n_train") == 6);  // from config
  CHECK(m.get_u64("spec.n_test") == 2);   // flag wins
  CHECK(m.get_u64("spec.T") == 100);
}

TEST_CASE("train + eval pipeline with digest guards") {
  fs::path data = kWork / "pipeline";
  REQUIRE(run_cli(gen_args(data, "--seed 9")) == 0);

  fs::path ckpt = kWork / "m.qckp";
  int rc = run_cli("train --data " + data.string() + " --out " + ckpt.string() +
                   " --model gru --head kraus --hidden 6 --epochs 2 --batch 4 --seed 3");
  REQUIRE(rc == 0);
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(kWork / "m.qckp.epochs.txt"));

  train::Checkpoint c = train::load_checkpoint(ckpt);
  CHECK(c.train_digest == digest::file_digest(data / "train.qtrj"));

  // eval on the test split works
  fs::path rep = kWork / "m.report.txt";
  REQUIRE(run_cli("eval --ckpt " + ckpt.string() + " --data " + (data / "test.qtrj").string() +
                  " --out " + rep.string()) == 0);
  eval::EvalReport r = eval::read_report(rep);
  CHECK(r.n_traj == 4);
  CHECK(r.model == "gru");
  CHECK(r.head == "kraus");
  CHECK(r.physical);

  // eval on the training file trips the digest guard (exit 5)
  CHECK(run_cli("eval --ckpt " + ckpt.string() + " --data " + (data / "train.qtrj").string()) == 5);
}

TEST_CASE("training determinism across worker counts at the CLI level") {
  fs::path data = kWork / "pipeline";  // reuse
  fs::path c1 = kWork / "w1.qckp";
  fs::path c2 = kWork / "w2.qckp";
  REQUIRE(run_cli("train --data " + data.string() + " --out " + c1.string() +
                  " --model rnn --head direct --hidden 5 --epochs 2 --batch 3 --seed 8 --workers 1") == 0);
  REQUIRE(run_cli("train --data " + data.string() + " --out " + c2.string() +
                  " --model rnn --head direct --hidden 5 --epochs 2 --batch 3 --seed 8 --workers 2") == 0);
  CHECK(digest::file_digest(c1) == digest::file_digest(c2));
  CHECK(digest::file_digest(kWork / "w1.qckp.epochs.txt") ==
        digest::file_digest(kWork / "w2.qckp.epochs.txt"));
}

TEST_CASE("baseline known mode reports the self-consistency oracle") {
  fs::path data = kWork / "pipeline";
  fs::path rep = kWork / "known.report.txt";
  REQUIRE(run_cli("baseline --data " + (data / "test.qtrj").string() + " --mode known --out " +
                  rep.string()) == 0);
  eval::EvalReport r = eval::read_report(rep);
  CHECK(r.model == "sme-exact");
  CHECK(r.aggregate.fid_full >= 0.999);
  CHECK(r.physical);
}

TEST_CASE("baseline adaptive mode emits an event log") {
  fs::path data = kWork / "pipeline";
  fs::path rep = kWork / "adaptive.report.txt";
  fs::path ev = kWork / "adaptive.events.txt";
  REQUIRE(run_cli("baseline --data " + (data / "test.qtrj").string() + " --mode adaptive --out " +
                  rep.string() + " --events " + ev.string()) == 0);
  eval::EvalReport r = eval::read_report(rep);
  CHECK(r.aggregate.fid_proxy > 0.0);
  CHECK(!r.policy.empty());
  CHECK(fs::exists(ev));
  kvtext::Document events = kvtext::load(ev);
  CHECK(events.get("format") == "qtw-events/1");
  CHECK(events.get_all("step").size() == 4 * 150);
}

TEST_CASE("report merges rows and computes deltas") {
  fs::path data = kWork / "pipeline";
  fs::path kr = kWork / "kr.report.txt";
  fs::path dr = kWork / "dr.report.txt";
  fs::path ck = kWork / "m.qckp";
  fs::path cd = kWork / "md.qckp";
  REQUIRE(run_cli("train --data " + data.string() + " --out " + cd.string() +
                  " --model gru --head direct --hidden 6 --epochs 2 --batch 4 --seed 3") == 0);
  REQUIRE(run_cli("eval --ckpt " + ck.string() + " --data " + (data / "test.qtrj").string() +
                  " --out " + kr.string()) == 0);
  REQUIRE(run_cli("eval --ckpt " + cd.string() + " --data " + (data / "test.qtrj").string() +
                  " --out " + dr.string()) == 0);

  fs::path out = kWork / "merged";
  REQUIRE(run_cli("report --inputs " + kr.string() + " " + dr.string() + " --format csv --out " +
                  out.string()) == 0);
  CHECK(fs::exists(kWork / "merged.rows.csv"));
  CHECK(fs::exists(kWork / "merged.delta.csv"));
  std::ifstream f(kWork / "merged.delta.csv");
  std::string header, row;
  std::getline(f, header);
  std::getline(f, row);
  CHECK(header == "model,fid_baseline,fid_kraus,delta,fid_full_baseline,fid_full_kraus,delta_full");
  CHECK(row.substr(0, 4) == "gru,");
}

TEST_CASE("exit codes: config errors are 2, io errors are 3") {
  CHECK(run_cli("train --data /nonexistent --out /tmp/x.qckp --model nosuch") == 2);
  CHECK(run_cli("eval --ckpt /nonexistent.qckp --data /nonexistent.qtrj") == 3);
  CHECK(run_cli("definitely-not-a-subcommand") == 2);
}

TEST_CASE("check subcommand passes") { CHECK(run_cli("check") == 0); }
