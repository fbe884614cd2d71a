#pragma once

// The three orbit-set IOD algorithms over very-short-arc radar tracklets:
//  1. Lambert residual minimization over split domains (coarse angles).
//  2. Angular-rate solve by partial map inversion (accurate angles, one
//     tracklet).
//  3. Lambert expansion over two tracklets with range-rate pruning.

#include <array>
#include <limits>
#include <string>
#include <vector>

#include "ods/domainsplit.hpp"
#include "ods/orbitmech.hpp"
#include "ods/tracklets.hpp"

namespace ods {

struct MeasurementEpoch {
    double t = 0.0;              // scenario seconds
    double rho = 0.0;            // km, raw sample
    double rho_sigma = 0.0;
    double rhodot = 0.0;         // km/s, raw sample
    double rhodot_sigma = 0.0;
    bool has_angles = false;
    double az = 0.0, el = 0.0;   // rad, regressed at t
    double az_half = 0.0, el_half = 0.0;        // CI half-widths (alpha_rates)
    double az_search = 0.0, el_search = 0.0;    // search widths (alpha_angles)
    bool has_rates = false;
    double azdot = 0.0, eldot = 0.0;            // rad/s, regressed rates
    double azdot_half = 0.0, eldot_half = 0.0;  // rate CI half-widths
};

struct ObservationSet {
    RadarSite site;
    EarthModel earth;
    // Slots 0..2 are the first, middle, and last samples of tracklet 1;
    // slot 3, when present, is the midpoint of tracklet 2.
    std::vector<MeasurementEpoch> epochs;

    bool has_second_tracklet() const { return epochs.size() >= 4; }
    const MeasurementEpoch& at(int i) const { return epochs.at(i); }
};

// Regresses angle channels (degree 2) and their rates where available.
// alpha_angles scales the angle intervals (Algorithm 1 search widths),
// alpha_rates the rate intervals (Algorithm 2 initialization).
ObservationSet build_observations(const Tracklet& t1, const Tracklet* t2, const RadarSite& site,
                                  const EarthModel& em, double alpha_angles = 0.001,
                                  double alpha_rates = 0.01);

struct IodConfig {
    int order = 3;
    double tol = 1e-5;
    int max_splits = 15;
    long max_domains = 32768;
    double alpha_angles = 0.001;
    double alpha_rates = 0.01;
    // Retained-domain threshold for >6 measurements is the chi-squared
    // 0.99 quantile at (measurements - 6) dof; with exactly 6 this
    // fallback applies.
    double chi2_quantile = 0.99;
    double chi2_fallback = 9.21;
    int minimizer_max_iters = 200;
    bool normalized_residuals = true;
    bool use_j2 = false;           // dynamics across the tracklet pair
    int prograde = -1;             // -1 auto, 0 retrograde, 1 prograde
    bool parallel = true;
};

// Residuals for Algorithm 1. x = (rho(t1), Az(t1), El(t1), rho(t3),
// Az(t3), El(t3)); 6 entries, or 8 when a second-tracklet epoch exists.
template <class S>
std::vector<S> residual_alg1(const std::array<S, 6>& x, const ObservationSet& obs, bool prograde,
                             bool normalized = true);

// Residual-squares threshold matching the observation count.
double chi2_threshold(const IodConfig& config, int n_measurements);

// Lambert branch agreeing best with the measured range rate at epoch ia.
bool choose_prograde(const ObservationSet& obs, int ia, int ib);

struct MinimizeResult {
    std::vector<double> argmin;  // in [-1,1]^v
    double value = 0.0;
    int iterations = 0;
};

// Deterministic box-clipped quasi-Newton descent on the polynomial
// surrogate, started from the box center.
MinimizeResult minimize_on_domain(const TaylorMap& j_map, int max_iters = 200, int polish_passes = 3);

struct IodDomain {
    int id = 0;
    std::vector<double> center;      // in the root box coordinates
    std::vector<double> half_width;
    DomainStatus status = DomainStatus::Converged;
    double error_estimate = 0.0;
    double j_min = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> argmin;      // local deltas of the minimizer
    std::vector<double> meas_argmin; // physical measurement vector there
    StateVector state;               // inertial state at t_ref for argmin
    KeplerElements elements;         // elements of that state
    MapSystem state_maps;            // deltas -> inertial state at t_ref
    MapSystem residual_maps;         // deltas -> normalized residuals
};

struct IodResult {
    int algorithm = 0;
    double t_ref = 0.0;              // epoch of the state maps
    RadarSite site;
    EarthModel earth;
    IodConfig config;
    std::vector<std::string> var_names;
    std::vector<VarSpec> box;        // physical meaning of the root variables
    double threshold = 0.0;
    std::vector<IodDomain> domains;  // retained domains only
    AdsStats stats;
    int leaves_total = 0;
    int pruned = 0;
    int failed = 0;
    std::string diagnostics;

    bool empty() const { return domains.empty(); }
};

IodResult iod_alg1(const ObservationSet& obs, const IodConfig& config);
IodResult iod_alg2(const ObservationSet& obs, const IodConfig& config);
IodResult iod_alg3(const ObservationSet& obs, const IodConfig& config);

// Algorithm 2 center solve: the (azdot, eldot) pair at t1 zeroing the
// normalized (rho, rhodot) residuals at the second-tracklet epoch.
std::pair<double, double> alg2_center_solve(const ObservationSet& obs, const IodConfig& config,
                                            const std::array<double, 6>& meas);

}  // namespace ods
