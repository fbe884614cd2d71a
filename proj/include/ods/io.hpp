#pragma once

// File formats: tracklet and result JSON, truth/noise/config blocks, and the
// plot-ready CSV exports. Angles are degrees in files and radians in memory;
// epochs are ISO-8601 UTC strings anchored at the scenario time origin.

#include <string>
#include <vector>

#include "ods/orbitset.hpp"

namespace ods {

// Scenario t = 0 in Unix seconds (2026-01-01T00:00:00Z).
inline constexpr long long kScenarioUnixEpoch = 1767225600LL;

std::string iso8601_from_seconds(double t);
double seconds_from_iso8601(const std::string& iso);

// FNV-1a 64-bit digest of a file's bytes, as 16 hex characters.
std::string file_digest(const std::string& path);

void write_tracklet_json(const Tracklet& trk, const std::string& path);
Tracklet read_tracklet_json(const std::string& path);

void write_truth_json(const TruthOrbit& truth, const std::string& path);
TruthOrbit read_truth_json(const std::string& path);

// Missing keys keep the passed-in defaults, so partial files are overlays.
NoiseSpec read_noise_json(const std::string& path, NoiseSpec defaults = {});
IodConfig read_iod_config(const std::string& path, IodConfig defaults = {});

// Full result with the polynomial maps, so a stored run can be re-loaded
// for propagation, association, and exports. input_digests records the
// digests of the tracklet files the run consumed.
void write_iod_result_json(const IodResult& result, const std::string& path,
                           const std::vector<std::string>& input_digests = {});
IodResult read_iod_result_json(const std::string& path);

// Element bounds CSV: one row per element, columns lo, hi (km / degrees).
void write_bounds_csv(const ElementBounds& bounds, const std::string& path);

// Per-domain box geometry and status of a run.
void write_manifold_json(const IodResult& result, const std::string& path);

// Point cloud CSV: domain_id, t, rho_km, rhodot_kms.
void write_cloud_csv(const MeasurementSet& mset, const std::string& path);

}  // namespace ods
