#include "qtw/trajectory_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "qtw/kvtext.hpp"

static_assert(std::endian::native == std::endian::little,
              "QTRJ/QCKP writers assume a little-endian host");

namespace qtw::sim {

namespace {

constexpr char kMagic[4] = {'Q', 'T', 'R', 'J'};

template <typename T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw IoError("truncated trajectory file");
  return v;
}

void put_f64s(std::ofstream& f, const double* p, size_t n) {
  f.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void take_f64s(std::ifstream& f, double* p, size_t n) {
  f.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (!f) throw IoError("truncated trajectory file");
}

}  // namespace

void write_qtrj(const std::filesystem::path& path, const std::vector<Trajectory>& trajs,
                uint32_t version) {
  if (trajs.empty()) throw IoError("refusing to write empty trajectory file");
  if (version != kQtrjVersion && version != kQtrjVersionGamma2)
    throw IoError("unsupported qtrj version " + std::to_string(version));
  const SimParams& head = trajs.front().params;

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(kMagic, 4);
  put<uint32_t>(f, version);
  put<uint32_t>(f, 2);  // d
  put<uint64_t>(f, head.T);
  put<double>(f, head.dt);
  put<double>(f, head.eta);
  put<uint64_t>(f, trajs.size());

  for (const auto& t : trajs) {
    const SimParams& p = t.params;
    if (p.T != head.T || p.dt != head.dt || p.eta != head.eta)
      throw IoError("trajectories in one file must share T, dt, eta");
    if (t.record.size() != p.T || t.states.size() != p.T)
      throw IoError("trajectory arrays inconsistent with T");
    if (version == kQtrjVersion && p.gamma2 != p.gamma)
      throw IoError("gamma2 != gamma requires qtrj version 2");
    put<double>(f, p.gamma);
    if (version == kQtrjVersionGamma2) put<double>(f, p.gamma2);
    put<double>(f, p.omega1);
    put<double>(f, p.omega2);
    put<uint64_t>(f, p.tau);
    put<uint64_t>(f, p.seed);
    put_f64s(f, t.record.data(), t.record.size());
    std::vector<double> bloch(3 * p.T);
    for (uint64_t i = 0; i < p.T; ++i) {
      bloch[3 * i] = t.states[i].rx;
      bloch[3 * i + 1] = t.states[i].ry;
      bloch[3 * i + 2] = t.states[i].rz;
    }
    put_f64s(f, bloch.data(), bloch.size());
  }
  if (!f) throw IoError("write failed: " + path.string());
}

std::vector<Trajectory> read_qtrj(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0) throw IoError("not a QTRJ file: " + path.string());
  uint32_t version = take<uint32_t>(f);
  if (version != kQtrjVersion && version != kQtrjVersionGamma2)
    throw IoError("unsupported qtrj version " + std::to_string(version));
  uint32_t d = take<uint32_t>(f);
  if (d != 2) throw IoError("unsupported dimension d = " + std::to_string(d));
  uint64_t T = take<uint64_t>(f);
  double dt = take<double>(f);
  double eta = take<double>(f);
  uint64_t count = take<uint64_t>(f);

  std::vector<Trajectory> out(count);
  std::vector<double> bloch(3 * T);
  for (uint64_t k = 0; k < count; ++k) {
    Trajectory& t = out[k];
    SimParams& p = t.params;
    p.T = T;
    p.dt = dt;
    p.eta = eta;
    p.gamma = take<double>(f);
    p.gamma2 = version == kQtrjVersionGamma2 ? take<double>(f) : p.gamma;
    p.omega1 = take<double>(f);
    p.omega2 = take<double>(f);
    p.tau = take<uint64_t>(f);
    p.seed = take<uint64_t>(f);
    t.record.resize(T);
    take_f64s(f, t.record.data(), T);
    take_f64s(f, bloch.data(), bloch.size());
    t.states.resize(T);
    for (uint64_t i = 0; i < T; ++i)
      t.states[i] = {bloch[3 * i], bloch[3 * i + 1], bloch[3 * i + 2]};
  }
  return out;
}

void write_stats(const std::filesystem::path& path, const StandardizationStats& s) {
  kvtext::Document doc;
  doc.set("format", "qtw-stats/1");
  doc.set_f64("mu", s.mu);
  doc.set_f64("sigma", s.sigma);
  doc.set("source_digest", s.source_digest);
  kvtext::save(path, doc);
}

StandardizationStats read_stats(const std::filesystem::path& path) {
  kvtext::Document doc = kvtext::load(path);
  if (doc.get("format") != "qtw-stats/1") throw IoError("unknown stats format in " + path.string());
  StandardizationStats s;
  s.mu = doc.get_f64("mu");
  s.sigma = doc.get_f64("sigma");
  s.source_digest = doc.get("source_digest");
  return s;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  kvtext::Document doc;
  doc.set("format", "qtw-manifest/1");
  doc.set("train_file", m.train_file);
  doc.set("test_file", m.test_file);
  doc.set("stats_file", m.stats_file);
  doc.set("train_digest", m.train_digest);
  doc.set("test_digest", m.test_digest);
  doc.set_u64("train_psd_projections", m.train_psd_projections);
  doc.set_u64("test_psd_projections", m.test_psd_projections);
  const DatasetSpec& s = m.spec;
  doc.set_u64("spec.n_train", s.n_train);
  doc.set_u64("spec.n_test", s.n_test);
  doc.set_f64("spec.gamma_lo", s.gamma_lo);
  doc.set_f64("spec.gamma_hi", s.gamma_hi);
  doc.set_f64("spec.omega_lo", s.omega_lo);
  doc.set_f64("spec.omega_hi", s.omega_hi);
  doc.set_u64("spec.tau_lo", s.tau_lo);
  doc.set_u64("spec.tau_hi", s.tau_hi);
  doc.set_f64("spec.dt", s.dt);
  doc.set_u64("spec.T", s.T);
  doc.set_f64("spec.eta", s.eta);
  doc.set_u64("spec.base_seed_train", s.base_seed_train);
  doc.set_u64("spec.base_seed_test", s.base_seed_test);
  doc.set_u64("spec.resample_gamma_at_switch", s.resample_gamma_at_switch ? 1 : 0);
  kvtext::save(path, doc);
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  kvtext::Document doc = kvtext::load(path);
  if (doc.get("format") != "qtw-manifest/1")
    throw IoError("unknown manifest format in " + path.string());
  DatasetManifest m;
  m.train_file = doc.get("train_file");
  m.test_file = doc.get("test_file");
  m.stats_file = doc.get("stats_file");
  m.train_digest = doc.get("train_digest");
  m.test_digest = doc.get("test_digest");
  m.train_psd_projections = doc.get_u64("train_psd_projections");
  m.test_psd_projections = doc.get_u64("test_psd_projections");
  DatasetSpec& s = m.spec;
  s.n_train = doc.get_u64("spec.n_train");
  s.n_test = doc.get_u64("spec.n_test");
  s.gamma_lo = doc.get_f64("spec.gamma_lo");
  s.gamma_hi = doc.get_f64("spec.gamma_hi");
  s.omega_lo = doc.get_f64("spec.omega_lo");
  s.omega_hi = doc.get_f64("spec.omega_hi");
  s.tau_lo = doc.get_u64("spec.tau_lo");
  s.tau_hi = doc.get_u64("spec.tau_hi");
  s.dt = doc.get_f64("spec.dt");
  s.T = doc.get_u64("spec.T");
  s.eta = doc.get_f64("spec.eta");
  s.base_seed_train = doc.get_u64("spec.base_seed_train");
  s.base_seed_test = doc.get_u64("spec.base_seed_test");
  s.resample_gamma_at_switch = doc.get_u64("spec.resample_gamma_at_switch") != 0;
  return m;
}

}  // namespace qtw::sim
