#pragma once

#include <filesystem>
#include <vector>

#include "qtw/sim.hpp"

namespace qtw::sim {

// QTRJ binary trajectory file, little endian.
//   magic "QTRJ", u32 version, u32 d = 2, u64 T, f64 dt, f64 eta, u64 count,
//   then per trajectory: f64 gamma, [v2 only: f64 gamma2], f64 omega1,
//   f64 omega2, u64 tau, u64 seed, f64 record[T], f64 bloch[3T] (rx,ry,rz).
// Version 1 is the default; version 2 adds gamma2 and is emitted only when a
// dataset was generated with resample_gamma_at_switch.
inline constexpr uint32_t kQtrjVersion = 1;
inline constexpr uint32_t kQtrjVersionGamma2 = 2;

void write_qtrj(const std::filesystem::path& path, const std::vector<Trajectory>& trajs,
                uint32_t version = kQtrjVersion);

std::vector<Trajectory> read_qtrj(const std::filesystem::path& path);

void write_stats(const std::filesystem::path& path, const StandardizationStats& s);
StandardizationStats read_stats(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& path);

}  // namespace qtw::sim
