#pragma once

// Orbit sets built from an IOD result: per-domain polynomial maps from
// measurement deviations to inertial state, with propagation (re-split when
// the Taylor error grows), projection into radar observables, sampling,
// Kepler element bounds, and association against a later tracklet.

#include <cstdint>
#include <vector>

#include "ods/iodcore.hpp"
#include "ods/tracklets.hpp"

namespace ods {

enum class Dynamics { Kepler, J2 };

struct OrbitSetDomain {
    int id = 0;
    std::vector<double> center;      // in the root measurement box coordinates
    std::vector<double> half_width;
    DomainStatus status = DomainStatus::Converged;
    double error_estimate = 0.0;
    double j_min = 0.0;
    MapSystem state_maps;            // local deltas in [-1,1]^v -> inertial state
    StateVector state;               // state at the domain center
};

struct OrbitSet {
    double t_ref = 0.0;              // epoch of every domain's state maps
    RadarSite site;
    EarthModel earth;
    int algorithm = 0;
    IodConfig config;                // provenance of the originating run
    std::vector<VarSpec> box;        // physical meaning of the root variables
    std::vector<OrbitSetDomain> domains;

    bool empty() const { return domains.empty(); }
};

// Only retained domains of the result are carried over.
OrbitSet make_orbit_set(const IodResult& result);

// Re-expands every domain's state map through the flow to t_target. Domains
// whose Taylor error exceeds settings.tol are re-split; propagator failures
// are kept with Failed status and no maps.
OrbitSet propagate_set(const OrbitSet& set, double t_target, Dynamics dynamics,
                       const AdsSettings& settings = {});

struct MeasurementSet {
    double epoch = 0.0;
    RadarSite site;
    EarthModel earth;

    struct DomainProjection {
        int id = 0;
        MapSystem maps;              // local deltas -> (rho, rhodot, az, el)
    };
    std::vector<DomainProjection> domains;

    struct CloudPoint {
        int domain_id = 0;
        double rho = 0.0;            // km
        double rhodot = 0.0;         // km/s
        double az = 0.0, el = 0.0;   // rad
    };
    std::vector<CloudPoint> cloud;

    bool empty() const { return domains.empty(); }
};

// Composes the radar observation of each domain at the given epoch and, when
// n_cloud > 0, draws that many uniform samples per domain through the maps.
MeasurementSet project_set(const OrbitSet& set, const RadarSite& site, double epoch,
                           int n_cloud = 0, std::uint64_t seed = 1);

struct SetSample {
    int domain_id = 0;
    std::vector<double> local;       // the drawn deltas in [-1,1]^v
    StateVector state;
};

// Uniform sampling over the retained boxes, volume proportional and
// deterministic under the seed.
std::vector<SetSample> sample_set(const OrbitSet& set, int n, std::uint64_t seed);

struct ElementBounds {
    Interval a;      // km
    Interval e;
    Interval inc;    // rad
    Interval raan;   // rad
    Interval argp;   // rad
};

// Per-domain bounds of the osculating elements, hulled over the set. The
// angle hulls pick the wrap representation with the smallest total width.
ElementBounds element_bounds(const OrbitSet& set);

struct AssociationVerdict {
    bool compatible = false;
    double score = 0.0;              // best normalized squared residual
    int domain_id = -1;
    double t_best = 0.0;             // tracklet sample time of the best match
};

// Minimum over tracklet samples and domains of the normalized squared
// (rho, rhodot) residual against the projected maps. Samples outside
// gate_seconds of the projection epoch are ignored; if none qualify the
// call throws.
AssociationVerdict associate(const MeasurementSet& mset, const Tracklet& tracklet,
                             double threshold = 9.21, double gate_seconds = 60.0);

}  // namespace ods
