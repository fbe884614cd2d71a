#pragma once

// Tracklet data model, weighted polynomial regression with confidence
// intervals, and the synthetic measurement generator used as a truth oracle.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ods/orbitmech.hpp"

namespace ods {

struct TrackletSample {
    double t = 0.0;              // seconds from the tracklet epoch
    double rho = 0.0;            // km
    double rho_sigma = 0.0;      // km
    double rhodot = 0.0;         // km/s
    double rhodot_sigma = 0.0;   // km/s
    std::optional<double> az;    // rad, from North toward East
    std::optional<double> el;    // rad
};

struct Tracklet {
    std::string site;
    double epoch = 0.0;          // scenario seconds of the first sample
    std::vector<TrackletSample> samples;

    double duration() const;
    double mid_offset() const;   // midpoint sample time, seconds from epoch
    bool has_angles() const;
    // Throws on unordered times, duration > 30 s, or non-positive sigmas.
    void validate() const;
};

enum class Channel { Rho, RhoDot, Az, El };
const char* to_string(Channel c);

struct RegressionModel {
    Channel channel = Channel::Rho;
    int degree = 0;
    double t_mid = 0.0;              // time origin of the fit, tracklet offset
    double t_min = 0.0, t_max = 0.0;
    std::vector<double> coeffs;      // degree+1 entries, powers of (t - t_mid)
    std::vector<double> cov;         // (degree+1)^2, row-major
    double residual_variance = 0.0;
    int n_samples = 0;
    double alpha = 0.05;
};

// Weighted least squares in time shifted to the tracklet midpoint. Range
// channels are weighted by their per-sample sigmas; angle channels have no
// per-sample sigma and use uniform weights.
RegressionModel regress(const Tracklet& trk, Channel channel, int degree, double alpha);

// Fitted value and the confidence-interval half-width at the model's alpha.
// The flag is set when t lies outside the fitted span.
std::pair<double, double> eval_regression(const RegressionModel& model, double t,
                                          bool* extrapolated = nullptr);

// Time derivative of the fitted polynomial with its own half-width.
std::pair<double, double> rate_estimate(const RegressionModel& model, double t);

struct NoiseSpec {
    double sigma_rho = 15.0e-3;       // km
    double sigma_rhodot = 0.05e-3;    // km/s
    double sigma_az = 0.1 * std::numbers::pi / 180.0;  // rad
    double sigma_el = 0.1 * std::numbers::pi / 180.0;  // rad
    std::uint64_t seed = 1;
    // Scales the injected noise only; the recorded sigmas are unchanged, so
    // zero-noise runs keep their normalization metadata.
    double inject_scale = 1.0;
};

struct TruthOrbit {
    KeplerElements kep;
    double epoch = 0.0;  // scenario seconds
};

State3<double> truth_state(const TruthOrbit& truth, double t, const EarthModel& em);

struct Pass {
    double t_rise = 0.0;
    double t_set = 0.0;
    double t_culmination = 0.0;
    double max_el = 0.0;
};

// Visibility passes (elevation above the mask) over [t_start, t_end],
// scanned with the given step and refined by bisection.
std::vector<Pass> find_passes(const TruthOrbit& truth, const RadarSite& site, double t_start,
                              double t_end, const EarthModel& em, double el_mask,
                              double scan_step = 10.0);

enum class AngleChannels { None, First, Second, Both };

struct SimulateOptions {
    double cadence_hz = 10.0;
    double tracklet_seconds = 5.0;
    double separation_seconds = 120.0;  // between tracklet midpoints
    double el_mask = 10.0 * std::numbers::pi / 180.0;
    AngleChannels angle_channels = AngleChannels::Second;
    double az_bias = 0.0;  // rad, added to emitted angles (bias study knob)
    double el_bias = 0.0;
};

// Two co-pass tracklets from a co-located radar, separated by the pass
// geometry. Deterministic under the NoiseSpec seed.
std::pair<Tracklet, Tracklet> simulate_pass(const TruthOrbit& truth, const RadarSite& site,
                                            double window_start, double window_end,
                                            const SimulateOptions& opt, const NoiseSpec& noise,
                                            const EarthModel& em);

// Single tracklet around the culmination of the given pass.
Tracklet simulate_tracklet(const TruthOrbit& truth, const RadarSite& site, double t_mid,
                           const SimulateOptions& opt, const NoiseSpec& noise,
                           const EarthModel& em, bool with_angles, std::uint64_t stream);

}  // namespace ods
