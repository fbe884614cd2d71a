#include "ods/tracklets.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

namespace ods {

double Tracklet::duration() const {
    return samples.empty() ? 0.0 : samples.back().t - samples.front().t;
}

double Tracklet::mid_offset() const {
    if (samples.empty()) return 0.0;
    return samples[samples.size() / 2].t;
}

bool Tracklet::has_angles() const {
    return !samples.empty() &&
           std::all_of(samples.begin(), samples.end(),
                       [](const TrackletSample& s) { return s.az && s.el; });
}

void Tracklet::validate() const {
    if (samples.empty()) throw std::invalid_argument("tracklet has no samples");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (i > 0 && s.t <= samples[i - 1].t)
            throw std::invalid_argument("tracklet times must be strictly increasing");
        if (s.rho_sigma <= 0.0 || s.rhodot_sigma <= 0.0)
            throw std::invalid_argument("tracklet sigmas must be positive");
    }
    if (duration() > 30.0) throw std::invalid_argument("tracklet exceeds 30 s");
}

const char* to_string(Channel c) {
    switch (c) {
        case Channel::Rho: return "rho";
        case Channel::RhoDot: return "rhodot";
        case Channel::Az: return "az";
        case Channel::El: return "el";
    }
    return "?";
}

namespace {

// Value and weight of one sample on the requested channel.
std::pair<double, double> channel_value(const TrackletSample& s, Channel c) {
    switch (c) {
        case Channel::Rho: return {s.rho, 1.0 / (s.rho_sigma * s.rho_sigma)};
        case Channel::RhoDot: return {s.rhodot, 1.0 / (s.rhodot_sigma * s.rhodot_sigma)};
        case Channel::Az:
            if (!s.az) throw std::invalid_argument("sample lacks azimuth");
            return {*s.az, 1.0};
        case Channel::El:
            if (!s.el) throw std::invalid_argument("sample lacks elevation");
            return {*s.el, 1.0};
    }
    throw std::logic_error("bad channel");
}

double t_quantile(double alpha, int dof) {
    if (dof < 1) return 0.0;
    boost::math::students_t dist(dof);
    return boost::math::quantile(dist, 1.0 - alpha / 2.0);
}

// x^T cov x for the basis row x.
double quad_form(const std::vector<double>& cov, const std::vector<double>& x) {
    const int p = static_cast<int>(x.size());
    double q = 0.0;
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) q += x[i] * cov[i * p + j] * x[j];
    return std::max(q, 0.0);
}

}  // namespace

RegressionModel regress(const Tracklet& trk, Channel channel, int degree, double alpha) {
    trk.validate();
    const int n = static_cast<int>(trk.samples.size());
    const int p = degree + 1;
    if (degree < 0) throw std::invalid_argument("regress: negative degree");
    if (n < degree + 2) throw std::invalid_argument("regress: too few samples for degree");

    RegressionModel model;
    model.channel = channel;
    model.degree = degree;
    model.t_mid = trk.mid_offset();
    model.t_min = trk.samples.front().t;
    model.t_max = trk.samples.back().t;
    model.n_samples = n;
    model.alpha = alpha;

    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n), w(n);
    for (int i = 0; i < n; ++i) {
        const auto [v, wi] = channel_value(trk.samples[i], channel);
        y(i) = v;
        w(i) = wi;
        const double tau = trk.samples[i].t - model.t_mid;
        double b = 1.0;
        for (int j = 0; j < p; ++j) {
            X(i, j) = b;
            b *= tau;
        }
    }

    const Eigen::MatrixXd xtw = X.transpose() * w.asDiagonal();
    const Eigen::MatrixXd normal = xtw * X;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(normal);
    if (!lu.isInvertible()) throw std::runtime_error("regress: rank-deficient design");
    const Eigen::VectorXd beta = lu.solve(xtw * y);
    const Eigen::MatrixXd ninv = lu.inverse();

    const Eigen::VectorXd resid = y - X * beta;
    double rss = 0.0;
    for (int i = 0; i < n; ++i) rss += w(i) * resid(i) * resid(i);
    model.residual_variance = rss / (n - p);
    if (model.residual_variance < 0.0) model.residual_variance = 0.0;

    model.coeffs.assign(beta.data(), beta.data() + p);
    model.cov.resize(p * p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) model.cov[i * p + j] = model.residual_variance * ninv(i, j);
    return model;
}

std::pair<double, double> eval_regression(const RegressionModel& model, double t,
                                          bool* extrapolated) {
    if (extrapolated) *extrapolated = (t < model.t_min || t > model.t_max);
    const int p = model.degree + 1;
    const double tau = t - model.t_mid;
    std::vector<double> x(p);
    double b = 1.0, value = 0.0;
    for (int j = 0; j < p; ++j) {
        x[j] = b;
        value += model.coeffs[j] * b;
        b *= tau;
    }
    const double q = t_quantile(model.alpha, model.n_samples - p);
    return {value, q * std::sqrt(quad_form(model.cov, x))};
}

std::pair<double, double> rate_estimate(const RegressionModel& model, double t) {
    if (model.degree < 1) throw std::invalid_argument("rate_estimate: degree must be >= 1");
    const int p = model.degree + 1;
    const double tau = t - model.t_mid;
    std::vector<double> x(p, 0.0);
    double rate = 0.0;
    double b = 1.0;  // tau^(j-1)
    for (int j = 1; j < p; ++j) {
        x[j] = j * b;
        rate += model.coeffs[j] * x[j];
        b *= tau;
    }
    const double q = t_quantile(model.alpha, model.n_samples - p);
    return {rate, q * std::sqrt(quad_form(model.cov, x))};
}

State3<double> truth_state(const TruthOrbit& truth, double t, const EarthModel& em) {
    const auto s0 = kep_to_cart(truth.kep, em.mu);
    return j2_propagate(s0, t - truth.epoch, em);
}

namespace {

double elevation_at(const TruthOrbit& truth, const RadarSite& site, double t,
                    const EarthModel& em) {
    return inertial_to_meas(truth_state(truth, t, em), site, t, em).el;
}

double bisect_crossing(const TruthOrbit& truth, const RadarSite& site, double lo, double hi,
                       double mask, const EarthModel& em) {
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        if ((elevation_at(truth, site, lo, em) - mask) * (elevation_at(truth, site, mid, em) -
                                                          mask) <= 0.0)
            hi = mid;
        else
            lo = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

std::vector<Pass> find_passes(const TruthOrbit& truth, const RadarSite& site, double t_start,
                              double t_end, const EarthModel& em, double el_mask,
                              double scan_step) {
    if (t_end <= t_start) throw std::invalid_argument("find_passes: empty window");
    std::vector<Pass> passes;
    bool up = elevation_at(truth, site, t_start, em) > el_mask;
    double rise = up ? t_start : 0.0;
    double prev = t_start;
    double best_el = up ? elevation_at(truth, site, t_start, em) : 0.0;
    double best_t = t_start;

    for (double t = t_start + scan_step; t <= t_end + scan_step * 0.5; t += scan_step) {
        const double tc = std::min(t, t_end);
        const double el = elevation_at(truth, site, tc, em);
        if (!up && el > el_mask) {
            up = true;
            rise = bisect_crossing(truth, site, prev, tc, el_mask, em);
            best_el = el;
            best_t = tc;
        } else if (up) {
            if (el > best_el) {
                best_el = el;
                best_t = tc;
            }
            if (el <= el_mask || tc >= t_end) {
                const double set =
                    el <= el_mask ? bisect_crossing(truth, site, prev, tc, el_mask, em) : t_end;
                passes.push_back({rise, set, best_t, best_el});
                up = false;
            }
        }
        prev = tc;
        if (tc >= t_end) break;
    }
    return passes;
}

Tracklet simulate_tracklet(const TruthOrbit& truth, const RadarSite& site, double t_mid,
                           const SimulateOptions& opt, const NoiseSpec& noise,
                           const EarthModel& em, bool with_angles, std::uint64_t stream) {
    const double dt = 1.0 / opt.cadence_hz;
    const int n = std::max(2, static_cast<int>(std::lround(opt.tracklet_seconds * opt.cadence_hz)) + 1);
    const double t0 = t_mid - 0.5 * (n - 1) * dt;

    std::mt19937_64 rng(noise.seed * 0x9e3779b97f4a7c15ull + stream);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Tracklet trk;
    trk.site = site.id;
    trk.epoch = t0;
    trk.samples.reserve(n);
    for (int i = 0; i < n; ++i) {
        const double t = t0 + i * dt;
        const auto m = inertial_to_meas(truth_state(truth, t, em), site, t, em);
        if (m.el < opt.el_mask)
            throw std::runtime_error("simulate_tracklet: object below the elevation mask");
        // Four draws per sample in fixed order, so shared channels are
        // byte-identical whichever angle setting is in force.
        const double n_rho = gauss(rng), n_rr = gauss(rng);
        const double n_az = gauss(rng), n_el = gauss(rng);
        TrackletSample s;
        s.t = t - t0;
        s.rho = m.rho + noise.inject_scale * noise.sigma_rho * n_rho;
        s.rho_sigma = noise.sigma_rho;
        s.rhodot = m.rhodot + noise.inject_scale * noise.sigma_rhodot * n_rr;
        s.rhodot_sigma = noise.sigma_rhodot;
        if (with_angles) {
            s.az = wrap_2pi(m.az + opt.az_bias + noise.inject_scale * noise.sigma_az * n_az);
            s.el = m.el + opt.el_bias + noise.inject_scale * noise.sigma_el * n_el;
        }
        trk.samples.push_back(s);
    }
    return trk;
}

std::pair<Tracklet, Tracklet> simulate_pass(const TruthOrbit& truth, const RadarSite& site,
                                            double window_start, double window_end,
                                            const SimulateOptions& opt, const NoiseSpec& noise,
                                            const EarthModel& em) {
    const auto passes = find_passes(truth, site, window_start, window_end, em, opt.el_mask);
    if (passes.empty()) throw std::runtime_error("simulate_pass: no visible pass in window");

    for (const auto& pass : passes) {
        const double usable = pass.t_set - pass.t_rise - opt.tracklet_seconds - 2.0;
        if (usable <= opt.tracklet_seconds) continue;
        const double sep = std::min(opt.separation_seconds, usable);
        const double mid1 = pass.t_culmination - 0.5 * sep;
        const double mid2 = pass.t_culmination + 0.5 * sep;
        if (mid1 - 0.5 * opt.tracklet_seconds < pass.t_rise ||
            mid2 + 0.5 * opt.tracklet_seconds > pass.t_set)
            continue;
        const bool ang1 = opt.angle_channels == AngleChannels::First ||
                          opt.angle_channels == AngleChannels::Both;
        const bool ang2 = opt.angle_channels == AngleChannels::Second ||
                          opt.angle_channels == AngleChannels::Both;
        return {simulate_tracklet(truth, site, mid1, opt, noise, em, ang1, 1),
                simulate_tracklet(truth, site, mid2, opt, noise, em, ang2, 2)};
    }
    throw std::runtime_error("simulate_pass: no pass long enough for two tracklets");
}

}  // namespace ods
