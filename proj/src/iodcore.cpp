#include "ods/iodcore.hpp"

#include <algorithm>
#include <cmath>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <stdexcept>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace ods {

namespace {

// Range and range rate of an inertial state as seen from the site.
template <class S>
std::pair<S, S> range_and_rate(const State3<S>& st, const RadarSite& site, double t,
                               const EarthModel& em) {
    const State3<double> ss = site_inertial_state(site, t, em);
    const Vec3<S> d{st.r.x - ss.r.x, st.r.y - ss.r.y, st.r.z - ss.r.z};
    const Vec3<S> dv{st.v.x - ss.v.x, st.v.y - ss.v.y, st.v.z - ss.v.z};
    const S rho = norm(d);
    return {rho, dot(d, dv) / rho};
}

// Prediction-style half-width: the fit CI plus the residual scatter, so the
// interval also covers polynomial lack of fit, not just coefficient noise.
double predict_half(const RegressionModel& m, double ci) {
    const int dof = m.n_samples - (m.degree + 1);
    if (dof < 1) return ci;
    boost::math::students_t dist(dof);
    const double q = boost::math::quantile(dist, 1.0 - m.alpha / 2.0);
    return std::sqrt(ci * ci + q * q * m.residual_variance);
}

void fill_epoch_angles(MeasurementEpoch& ep, const Tracklet& trk, double alpha_angles,
                       double alpha_rates, bool with_rates) {
    if (!trk.has_angles()) return;
    const int degree = static_cast<int>(trk.samples.size()) > 3 ? 2 : 1;
    const auto maz_w = regress(trk, Channel::Az, degree, alpha_angles);
    const auto mel_w = regress(trk, Channel::El, degree, alpha_angles);
    const auto maz = regress(trk, Channel::Az, degree, alpha_rates);
    const auto mel = regress(trk, Channel::El, degree, alpha_rates);
    const double tau = ep.t - trk.epoch;
    const auto [azv, azh] = eval_regression(maz, tau);
    const auto [elv, elh] = eval_regression(mel, tau);
    ep.az = wrap_2pi(azv);
    ep.el = elv;
    ep.az_half = predict_half(maz, azh);
    ep.el_half = predict_half(mel, elh);
    ep.az_search = predict_half(maz_w, eval_regression(maz_w, tau).second);
    ep.el_search = predict_half(mel_w, eval_regression(mel_w, tau).second);
    ep.has_angles = true;
    if (with_rates && degree >= 1) {
        const auto [adot, adoth] = rate_estimate(maz, tau);
        const auto [edot, edoth] = rate_estimate(mel, tau);
        ep.azdot = adot;
        ep.eldot = edot;
        ep.azdot_half = adoth;
        ep.eldot_half = edoth;
        ep.has_rates = true;
    }
}

MeasurementEpoch epoch_from_sample(const Tracklet& trk, std::size_t idx) {
    const auto& s = trk.samples[idx];
    MeasurementEpoch ep;
    ep.t = trk.epoch + s.t;
    ep.rho = s.rho;
    ep.rho_sigma = s.rho_sigma;
    ep.rhodot = s.rhodot;
    ep.rhodot_sigma = s.rhodot_sigma;
    return ep;
}

}  // namespace

ObservationSet build_observations(const Tracklet& t1, const Tracklet* t2, const RadarSite& site,
                                  const EarthModel& em, double alpha_angles, double alpha_rates) {
    t1.validate();
    if (t1.samples.size() < 3)
        throw std::invalid_argument("build_observations: tracklet 1 needs at least 3 samples");
    ObservationSet obs;
    obs.site = site;
    obs.earth = em;
    const std::size_t n = t1.samples.size();
    for (std::size_t idx : {std::size_t{0}, n / 2, n - 1}) {
        MeasurementEpoch ep = epoch_from_sample(t1, idx);
        fill_epoch_angles(ep, t1, alpha_angles, alpha_rates, idx == 0);
        obs.epochs.push_back(ep);
    }
    if (t2) {
        t2->validate();
        MeasurementEpoch ep = epoch_from_sample(*t2, t2->samples.size() / 2);
        fill_epoch_angles(ep, *t2, alpha_angles, alpha_rates, false);
        if (ep.t <= obs.epochs[2].t)
            throw std::invalid_argument("build_observations: tracklet 2 must follow tracklet 1");
        obs.epochs.push_back(ep);
    }
    return obs;
}

double chi2_threshold(const IodConfig& config, int n_measurements) {
    const int dof = n_measurements - 6;
    if (dof < 1) return config.chi2_fallback;
    boost::math::chi_squared dist(dof);
    return boost::math::quantile(dist, config.chi2_quantile);
}

namespace {

template <class S>
struct Alg1Output {
    std::vector<S> residuals;
    State3<S> state;  // at t1
};

template <class S>
Alg1Output<S> alg1_eval(const std::array<S, 6>& x, const ObservationSet& obs, bool prograde,
                        bool normalized, bool use_j2) {
    if (obs.epochs.size() < 3) throw std::invalid_argument("alg1: need three epochs");
    const auto& e1 = obs.at(0);
    const auto& e2 = obs.at(1);
    const auto& e3 = obs.at(2);
    if (!(e1.t < e2.t && e2.t < e3.t))
        throw std::invalid_argument("alg1: epochs must be strictly increasing");

    const auto& site = obs.site;
    const auto& em = obs.earth;
    const Vec3<S> r1 = topo_position(x[0], x[1], x[2], site, e1.t, em);
    const Vec3<S> r3 = topo_position(x[3], x[4], x[5], site, e3.t, em);
    const auto [v1, v3] = lambert_solve(r1, r3, e3.t - e1.t, em.mu, prograde);
    const State3<S> s1{r1, v1};
    const State3<S> s3{r3, v3};

    auto push = [&](std::vector<S>& out, const std::pair<S, S>& rr,
                    const MeasurementEpoch& ep) {
        const double ws = normalized ? ep.rho_sigma : 1.0;
        const double wr = normalized ? ep.rhodot_sigma : 1.0;
        out.push_back((rr.first - ep.rho) / ws);
        out.push_back((rr.second - ep.rhodot) / wr);
    };

    Alg1Output<S> out{{}, s1};
    out.residuals.reserve(8);
    push(out.residuals, range_and_rate(s1, site, e1.t, em), e1);
    push(out.residuals, range_and_rate(propagate(s1, e2.t - e1.t, em, use_j2), site, e2.t, em),
         e2);
    push(out.residuals, range_and_rate(s3, site, e3.t, em), e3);
    if (obs.has_second_tracklet()) {
        const auto& e4 = obs.at(3);
        push(out.residuals,
             range_and_rate(propagate(s1, e4.t - e1.t, em, use_j2), site, e4.t, em), e4);
    }
    return out;
}

}  // namespace

template <class S>
std::vector<S> residual_alg1(const std::array<S, 6>& x, const ObservationSet& obs, bool prograde,
                             bool normalized) {
    return alg1_eval(x, obs, prograde, normalized, false).residuals;
}

template std::vector<double> residual_alg1<double>(const std::array<double, 6>&,
                                                   const ObservationSet&, bool, bool);
template std::vector<TaylorMap> residual_alg1<TaylorMap>(const std::array<TaylorMap, 6>&,
                                                         const ObservationSet&, bool, bool);

bool choose_prograde(const ObservationSet& obs, int ia, int ib) {
    const auto& ea = obs.at(ia);
    const auto& eb = obs.at(ib);
    if (!ea.has_angles || !eb.has_angles)
        throw std::invalid_argument("choose_prograde: angle guesses required");
    const auto& em = obs.earth;
    const Vec3<double> ra = topo_position(ea.rho, ea.az, ea.el, obs.site, ea.t, em);
    const Vec3<double> rb = topo_position(eb.rho, eb.az, eb.el, obs.site, eb.t, em);

    double best_err = 0.0;
    int best = -1;
    for (int pg = 0; pg <= 1; ++pg) {
        try {
            const auto [va, vb] = lambert_solve(ra, rb, eb.t - ea.t, em.mu, pg == 1);
            const auto rr = range_and_rate(State3<double>{ra, va}, obs.site, ea.t, em);
            const double err = std::abs(rr.second - ea.rhodot);
            if (best < 0 || err < best_err) {
                best = pg;
                best_err = err;
            }
        } catch (const std::exception&) {
        }
    }
    if (best < 0) throw std::runtime_error("choose_prograde: Lambert failed on both branches");
    return best == 1;
}

namespace {

// Box-clipped BFGS over [-1,1]^v followed by a coordinate polish; works on
// any smooth objective, not just the polynomial surrogate.
MinimizeResult minimize_box(int v, const std::function<double(const Eigen::VectorXd&)>& value,
                            const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gradient,
                            Eigen::VectorXd x, int max_iters, int polish_passes) {
    auto clip = [&](Eigen::VectorXd p) {
        for (int i = 0; i < v; ++i) p(i) = std::clamp(p(i), -1.0, 1.0);
        return p;
    };
    // Gradient with components pointing out of the box zeroed.
    auto projected = [&](const Eigen::VectorXd& p, const Eigen::VectorXd& g) {
        Eigen::VectorXd pg = g;
        for (int i = 0; i < v; ++i) {
            if (p(i) <= -1.0 && g(i) > 0.0) pg(i) = 0.0;
            if (p(i) >= 1.0 && g(i) < 0.0) pg(i) = 0.0;
        }
        return pg;
    };

    x = clip(std::move(x));
    double fx = value(x);
    Eigen::VectorXd g = gradient(x);
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(v, v);

    MinimizeResult best;
    best.argmin.assign(x.data(), x.data() + v);
    best.value = fx;

    int it = 0;
    for (; it < max_iters; ++it) {
        if (projected(x, g).norm() < 1e-13) break;
        Eigen::VectorXd d = -(h * g);
        if (d.dot(g) >= 0.0) {
            h.setIdentity();
            d = -g;
        }
        double step = 1.0;
        Eigen::VectorXd xn = x;
        double fn = fx;
        while (step > 1e-14) {
            xn = clip(x + step * d);
            fn = value(xn);
            if (fn <= fx + 1e-4 * g.dot(xn - x)) break;
            step *= 0.5;
        }
        const Eigen::VectorXd s = xn - x;
        if (s.norm() < 1e-14) break;
        const Eigen::VectorXd gn = gradient(xn);
        const Eigen::VectorXd y = gn - g;
        const double sy = s.dot(y);
        if (sy > 1e-12) {
            const Eigen::VectorXd hy = h * y;
            h += ((sy + y.dot(hy)) / (sy * sy)) * (s * s.transpose()) -
                 (hy * s.transpose() + s * hy.transpose()) / sy;
        } else {
            h.setIdentity();
        }
        x = xn;
        fx = fn;
        g = gn;
        if (fx < best.value) {
            best.value = fx;
            best.argmin.assign(x.data(), x.data() + v);
        }
    }

    // Coordinate polish by golden-section line search; exact on separable
    // quadratics and cheap insurance against boundary zigzag.
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    Eigen::VectorXd p = Eigen::VectorXd::Map(best.argmin.data(), v);
    double fp = best.value;
    for (int pass = 0; pass < polish_passes; ++pass) {
        for (int i = 0; i < v; ++i) {
            double a = -1.0, b = 1.0;
            auto f1d = [&](double s) {
                Eigen::VectorXd q = p;
                q(i) = s;
                return value(q);
            };
            double c = b - gr * (b - a), d2 = a + gr * (b - a);
            double fc = f1d(c), fd = f1d(d2);
            for (int k = 0; k < 60; ++k) {
                if (fc < fd) {
                    b = d2;
                    d2 = c;
                    fd = fc;
                    c = b - gr * (b - a);
                    fc = f1d(c);
                } else {
                    a = c;
                    c = d2;
                    fc = fd;
                    d2 = a + gr * (b - a);
                    fd = f1d(d2);
                }
            }
            const double s = 0.5 * (a + b);
            const double fs = f1d(s);
            if (fs < fp) {
                p(i) = s;
                fp = fs;
            }
        }
    }
    if (fp < best.value) {
        best.value = fp;
        best.argmin.assign(p.data(), p.data() + v);
    }
    best.iterations = it;
    return best;
}

}  // namespace

MinimizeResult minimize_on_domain(const TaylorMap& j_map, int max_iters, int polish_passes) {
    const int v = j_map.n_vars();
    std::vector<TaylorMap> grads;
    grads.reserve(v);
    for (int i = 0; i < v; ++i) grads.push_back(j_map.derive(i));

    auto value = [&](const Eigen::VectorXd& p) {
        return j_map.eval(std::span<const double>(p.data(), v));
    };
    auto gradient = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd g(v);
        for (int i = 0; i < v; ++i)
            g(i) = grads[i].eval(std::span<const double>(p.data(), v));
        return g;
    };
    return minimize_box(v, value, gradient, Eigen::VectorXd::Zero(v), max_iters, polish_passes);
}

namespace {

// Box-clipped Levenberg-Marquardt on a residual vector over [-1,1]^v. The
// evaluator returns false where the model throws; such points are treated
// as uphill. Forward-difference Jacobian, stepping inward at the box edge.
MinimizeResult lm_box(int v, int m,
                      const std::function<bool(const Eigen::VectorXd&, Eigen::VectorXd&)>& resid,
                      Eigen::VectorXd x, int max_iters) {
    x = x.cwiseMax(-1.0).cwiseMin(1.0);
    MinimizeResult best;
    best.argmin.assign(x.data(), x.data() + v);
    best.value = 1e30;
    Eigen::VectorXd r(m);
    if (!resid(x, r)) return best;
    double f = r.squaredNorm();
    best.value = f;
    double lambda = 1e-3;
    const double h = 1e-7;
    int it = 0;
    for (; it < max_iters; ++it) {
        Eigen::MatrixXd jac(m, v);
        bool ok = true;
        Eigen::VectorXd rp(m);
        for (int i = 0; i < v && ok; ++i) {
            Eigen::VectorXd xp = x;
            xp(i) = x(i) + h <= 1.0 ? x(i) + h : x(i) - h;
            ok = resid(xp, rp);
            if (ok) jac.col(i) = (rp - r) / (xp(i) - x(i));
        }
        if (!ok) break;
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * r;
        bool accepted = false;
        for (int tries = 0; tries < 10; ++tries) {
            Eigen::MatrixXd a = jtj;
            for (int i = 0; i < v; ++i) a(i, i) += lambda * (jtj(i, i) + 1e-12);
            const Eigen::VectorXd xn =
                (x - a.ldlt().solve(g)).cwiseMax(-1.0).cwiseMin(1.0);
            Eigen::VectorXd rn(m);
            if (resid(xn, rn) && rn.squaredNorm() < f) {
                const double fn = rn.squaredNorm();
                accepted = true;
                if (f - fn < 1e-12 * (1.0 + f)) it = max_iters;  // converged
                x = xn;
                r = rn;
                f = fn;
                lambda = std::max(lambda / 3.0, 1e-12);
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted) break;
    }
    best.value = f;
    best.argmin.assign(x.data(), x.data() + v);
    best.iterations = it;
    return best;
}

AdsSettings ads_settings(const IodConfig& config, int error_outputs) {
    AdsSettings s;
    s.tol = config.tol;
    s.max_splits = config.max_splits;
    s.max_domains = config.max_domains;
    s.order = config.order;
    s.error_outputs = error_outputs;
    s.parallel = config.parallel;
    return s;
}

// Lower bound of the residual sum of squares over the box. The bound is of
// the polynomial surrogate, so each residual interval is widened by the
// domain's truncation-error estimate before use; coarse domains whose
// surrogate is still unreliable are then never pruned on its account.
double chi2_lower_bound(const MapSystem& maps, int n_res, double error_estimate) {
    const double margin = 3.0 * error_estimate;
    double lo = 0.0;
    for (int i = 0; i < n_res; ++i) {
        const Interval b = maps[i].bound();
        const double m = std::min(std::abs(b.lo), std::abs(b.hi)) - margin;
        if (!b.contains(0.0) && m > 0.0) lo += m * m;
    }
    return lo;
}

TaylorMap residual_squares(const MapSystem& maps, int n_res) {
    TaylorMap j = maps[0] * maps[0];
    for (int i = 1; i < n_res; ++i) j = j + maps[i] * maps[i];
    return j;
}

std::vector<double> physical_point(const std::vector<VarSpec>& box, const SubDomain& sub,
                                   const std::vector<double>& local) {
    std::vector<double> u(box.size());
    for (std::size_t i = 0; i < box.size(); ++i)
        u[i] = box[i].center +
               box[i].half_width * (sub.center[i] + sub.half_width[i] * local[i]);
    return u;
}

StateVector eval_state_maps(const MapSystem& maps, int offset, const std::vector<double>& d,
                            double epoch) {
    StateVector sv;
    sv.r = {maps[offset + 0].eval(d), maps[offset + 1].eval(d), maps[offset + 2].eval(d)};
    sv.v = {maps[offset + 3].eval(d), maps[offset + 4].eval(d), maps[offset + 5].eval(d)};
    sv.epoch = epoch;
    return sv;
}

void append_state(std::vector<TaylorMap>& out, const State3<TaylorMap>& st) {
    out.push_back(st.r.x);
    out.push_back(st.r.y);
    out.push_back(st.r.z);
    out.push_back(st.v.x);
    out.push_back(st.v.y);
    out.push_back(st.v.z);
}

DomainManifold run_ads(const IodConfig& config, const AdsPipeline& pipeline,
                       const std::vector<VarSpec>& box, const AdsSettings& settings,
                       const PruneHook& hook) {
    return config.parallel ? ads_run(pipeline, box, settings, hook)
                           : ads_run_serial(pipeline, box, settings, hook);
}

void fill_summary(IodResult& res, const DomainManifold& manifold) {
    res.stats = manifold.stats;
    res.leaves_total = static_cast<int>(manifold.subdomains.size());
    res.pruned = manifold.count(DomainStatus::Pruned);
    res.failed = manifold.count(DomainStatus::Failed);
    if (res.domains.empty())
        res.diagnostics = "no domain retained: " + std::to_string(res.pruned) + " pruned, " +
                          std::to_string(res.failed) + " failed of " +
                          std::to_string(res.leaves_total) + " leaves";
}

KeplerElements safe_elements(const StateVector& sv, double mu) {
    try {
        return cart_to_kep(State3<double>{sv.r, sv.v}, mu);
    } catch (const std::exception&) {
        return KeplerElements{0, 0, 0, 0, 0, 0};
    }
}

}  // namespace

IodResult iod_alg1(const ObservationSet& obs, const IodConfig& config) {
    if (obs.epochs.size() < 3) throw std::invalid_argument("iod_alg1: need three epochs");
    const auto& e1 = obs.at(0);
    const auto& e3 = obs.at(2);
    if (!e1.has_angles || !e3.has_angles)
        throw std::invalid_argument("iod_alg1: angle guesses required at t1 and t3");

    const bool prograde = config.prograde < 0 ? choose_prograde(obs, 0, 2) : config.prograde == 1;
    const int n_res = obs.has_second_tracklet() ? 8 : 6;
    const double threshold = chi2_threshold(config, n_res);

    IodResult res;
    res.algorithm = 1;
    res.t_ref = e1.t;
    res.site = obs.site;
    res.earth = obs.earth;
    res.config = config;
    res.threshold = threshold;
    res.var_names = {"rho_t1", "az_t1", "el_t1", "rho_t3", "az_t3", "el_t3"};
    res.box = {{e1.rho, 3.0 * e1.rho_sigma}, {e1.az, e1.az_search}, {e1.el, e1.el_search},
               {e3.rho, 3.0 * e3.rho_sigma}, {e3.az, e3.az_search}, {e3.el, e3.el_search}};

    AdsPipeline pipeline = [&obs, &config, prograde](const MapSystem& u) {
        const std::array<TaylorMap, 6> x{u[0], u[1], u[2], u[3], u[4], u[5]};
        auto out = alg1_eval(x, obs, prograde, config.normalized_residuals, config.use_j2);
        std::vector<TaylorMap> maps = std::move(out.residuals);
        append_state(maps, out.state);
        return MapSystem(std::move(maps));
    };
    PruneHook hook = [n_res, threshold](const SubDomain& sub) {
        return chi2_lower_bound(sub.maps, n_res, sub.error_estimate) > threshold;
    };

    const auto t_ads0 = std::chrono::steady_clock::now();
    const auto manifold = run_ads(config, pipeline, res.box, ads_settings(config, n_res), hook);
    const auto t_ads1 = std::chrono::steady_clock::now();

    if (const char* dbg = std::getenv("ODS_DEBUG_TRUTH")) {
        std::array<double, 6> tx{};
        std::sscanf(dbg, "%lf,%lf,%lf,%lf,%lf,%lf", &tx[0], &tx[1], &tx[2], &tx[3], &tx[4],
                    &tx[5]);
        for (const auto& sub : manifold.subdomains) {
            std::vector<double> local(6);
            bool inside = true;
            for (int i = 0; i < 6; ++i) {
                const double root = (tx[i] - res.box[i].center) / res.box[i].half_width;
                local[i] = sub.half_width[i] > 0 ? (root - sub.center[i]) / sub.half_width[i] : 0.0;
                if (std::abs(local[i]) > 1.0 + 1e-9) inside = false;
            }
            if (!inside) continue;
            auto exact = [&](const std::vector<double>& loc) {
                const auto u = physical_point(res.box, sub, loc);
                const std::array<double, 6> xu{u[0], u[1], u[2], u[3], u[4], u[5]};
                try {
                    double jv = 0.0;
                    for (double r :
                         alg1_eval(xu, obs, prograde, config.normalized_residuals, config.use_j2)
                             .residuals)
                        jv += r * r;
                    return jv;
                } catch (const std::exception&) { return 1e30; }
            };
            std::fprintf(stderr, "[truthleaf] id=%d status=%d err=%.3e j_truth_local=%.4f\n",
                         sub.id, static_cast<int>(sub.status), sub.error_estimate, exact(local));
            if (sub.status == DomainStatus::Converged || sub.status == DomainStatus::MaxDepth) {
                const TaylorMap j = residual_squares(sub.maps, n_res);
                auto min = minimize_on_domain(j, config.minimizer_max_iters);
                std::fprintf(stderr,
                             "[truthleaf] surmin=%.4f exact_at_argmin=%.4f exact_at_center=%.4f\n",
                             min.value, exact(min.argmin), exact(std::vector<double>(6, 0.0)));
                std::fprintf(stderr, "[truthleaf] lower_bound=%.4f\n",
                             chi2_lower_bound(sub.maps, n_res, sub.error_estimate));
            }
        }
    }

    for (const auto& sub : manifold.subdomains) {
        if (sub.status != DomainStatus::Converged && sub.status != DomainStatus::MaxDepth)
            continue;
        const TaylorMap j = residual_squares(sub.maps, n_res);
        // On capped leaves the surrogate only seeds the exact descent below,
        // so a short, lightly polished search is enough.
        const bool capped = sub.status == DomainStatus::MaxDepth;
        auto min = minimize_on_domain(j, capped ? 60 : config.minimizer_max_iters, capped ? 1 : 3);
        if (capped) {
            // A depth-capped leaf never met the truncation tolerance, so its
            // surrogate can misplace the minimum by orders of magnitude in
            // either direction. Settle retention by descending the exact
            // residual function over the leaf instead.
            auto resid = [&](const Eigen::VectorXd& p, Eigen::VectorXd& out) {
                const std::vector<double> local(p.data(), p.data() + 6);
                const auto u = physical_point(res.box, sub, local);
                const std::array<double, 6> xu{u[0], u[1], u[2], u[3], u[4], u[5]};
                try {
                    const auto rs =
                        alg1_eval(xu, obs, prograde, config.normalized_residuals, config.use_j2)
                            .residuals;
                    out = Eigen::VectorXd::Map(rs.data(), rs.size());
                    return true;
                } catch (const std::exception&) {
                    return false;
                }
            };
            auto value = [&](const Eigen::VectorXd& p) {
                Eigen::VectorXd r(n_res);
                return resid(p, r) ? r.squaredNorm() : 1e30;
            };
            const Eigen::VectorXd seed = Eigen::VectorXd::Map(min.argmin.data(), 6);
            const double at_seed = value(seed);
            const double at_center = value(Eigen::VectorXd::Zero(6));
            min.value = std::min(at_seed, at_center);
            min.argmin = at_seed <= at_center ? min.argmin : std::vector<double>(6, 0.0);
            // Descending every capped leaf is wasteful; leaves whose probes
            // sit far above the threshold cannot dip below it.
            if (min.value < 1000.0 * threshold) {
                auto ref = lm_box(6, n_res, resid, seed, 30);
                if (ref.value >= threshold) {
                    const auto alt = lm_box(6, n_res, resid, Eigen::VectorXd::Zero(6), 30);
                    if (alt.value < ref.value) ref = alt;
                }
                if (ref.value < min.value) min = ref;
            }
        }
        if (min.value >= threshold) continue;

        IodDomain d;
        d.id = sub.id;
        d.center = sub.center;
        d.half_width = sub.half_width;
        d.status = sub.status;
        d.error_estimate = sub.error_estimate;
        d.j_min = min.value;
        d.argmin = min.argmin;
        d.meas_argmin = physical_point(res.box, sub, min.argmin);
        d.state = eval_state_maps(sub.maps, n_res, min.argmin, res.t_ref);
        d.elements = safe_elements(d.state, obs.earth.mu);
        std::vector<TaylorMap> rmaps, smaps;
        for (int i = 0; i < n_res; ++i) rmaps.push_back(sub.maps[i]);
        for (int i = 0; i < 6; ++i) smaps.push_back(sub.maps[n_res + i]);
        d.residual_maps = MapSystem(std::move(rmaps));
        d.state_maps = MapSystem(std::move(smaps));
        res.domains.push_back(std::move(d));
    }
    if (std::getenv("ODS_DEBUG_TIME")) {
        const auto t_ret = std::chrono::steady_clock::now();
        std::fprintf(stderr, "[time] ads=%.1fs retention=%.1fs\n",
                     std::chrono::duration<double>(t_ads1 - t_ads0).count(),
                     std::chrono::duration<double>(t_ret - t_ads1).count());
    }
    fill_summary(res, manifold);
    return res;
}

IodResult iod_alg3(const ObservationSet& obs, const IodConfig& config) {
    if (!obs.has_second_tracklet())
        throw std::invalid_argument("iod_alg3: needs both tracklets");
    const auto& ea = obs.at(1);  // midpoint of tracklet 1
    const auto& eb = obs.at(3);  // midpoint of tracklet 2
    if (!ea.has_angles || !eb.has_angles)
        throw std::invalid_argument("iod_alg3: regressed angles required on both tracklets");

    const bool prograde = config.prograde < 0 ? choose_prograde(obs, 1, 3) : config.prograde == 1;
    const double threshold = chi2_threshold(config, 8);  // two rate residuals, 2 dof

    IodResult res;
    res.algorithm = 3;
    res.t_ref = ea.t;
    res.site = obs.site;
    res.earth = obs.earth;
    res.config = config;
    res.threshold = threshold;
    res.var_names = {"rho_ta", "az_ta", "el_ta", "rho_tb", "az_tb", "el_tb"};
    res.box = {{ea.rho, 3.0 * ea.rho_sigma}, {ea.az, ea.az_half}, {ea.el, ea.el_half},
               {eb.rho, 3.0 * eb.rho_sigma}, {eb.az, eb.az_half}, {eb.el, eb.el_half}};

    const auto& site = obs.site;
    const auto& em = obs.earth;
    AdsPipeline pipeline = [&, prograde](const MapSystem& u) {
        const Vec3<TaylorMap> ra = topo_position(u[0], u[1], u[2], site, ea.t, em);
        const Vec3<TaylorMap> rb = topo_position(u[3], u[4], u[5], site, eb.t, em);
        const auto [va, vb] = lambert_solve(ra, rb, eb.t - ea.t, em.mu, prograde);
        const State3<TaylorMap> sa{ra, va};
        const auto rra = range_and_rate(sa, site, ea.t, em);
        const auto rrb = range_and_rate(State3<TaylorMap>{rb, vb}, site, eb.t, em);
        const double wsa = config.normalized_residuals ? ea.rhodot_sigma : 1.0;
        const double wsb = config.normalized_residuals ? eb.rhodot_sigma : 1.0;
        std::vector<TaylorMap> maps;
        maps.reserve(8);
        maps.push_back((rra.second - ea.rhodot) / wsa);
        maps.push_back((rrb.second - eb.rhodot) / wsb);
        append_state(maps, sa);
        return MapSystem(std::move(maps));
    };
    PruneHook hook = [threshold](const SubDomain& sub) {
        return chi2_lower_bound(sub.maps, 2, sub.error_estimate) > threshold;
    };

    const auto manifold = run_ads(config, pipeline, res.box, ads_settings(config, -1), hook);

    for (const auto& sub : manifold.subdomains) {
        if (sub.status != DomainStatus::Converged && sub.status != DomainStatus::MaxDepth)
            continue;
        const TaylorMap j = residual_squares(sub.maps, 2);
        auto min = minimize_on_domain(j, config.minimizer_max_iters);

        IodDomain d;
        d.id = sub.id;
        d.center = sub.center;
        d.half_width = sub.half_width;
        d.status = sub.status;
        d.error_estimate = sub.error_estimate;
        d.j_min = min.value;
        d.argmin = min.argmin;
        d.meas_argmin = physical_point(res.box, sub, min.argmin);
        d.state = eval_state_maps(sub.maps, 2, min.argmin, res.t_ref);
        d.elements = safe_elements(d.state, obs.earth.mu);
        std::vector<TaylorMap> rmaps{sub.maps[0], sub.maps[1]};
        std::vector<TaylorMap> smaps;
        for (int i = 0; i < 6; ++i) smaps.push_back(sub.maps[2 + i]);
        d.residual_maps = MapSystem(std::move(rmaps));
        d.state_maps = MapSystem(std::move(smaps));
        res.domains.push_back(std::move(d));
    }
    fill_summary(res, manifold);
    return res;
}

namespace {

struct Alg2Center {
    double azdot;
    double eldot;
};

// Newton on the two rates, Jacobian from a first-order expansion.
Alg2Center alg2_solve_rates(const ObservationSet& obs, const IodConfig& config,
                            const std::array<double, 6>& meas, double azdot0, double eldot0) {
    const auto& e1 = obs.at(0);
    const auto& eb = obs.at(3);
    const auto& site = obs.site;
    const auto& em = obs.earth;
    if (eb.t - e1.t < 1e-9)
        throw std::invalid_argument("alg2: second epoch must follow the first");

    const double hs = 1e-6;  // rad/s scale of the Jacobian probe variables
    double adot = azdot0, edot = eldot0;
    const double ws = config.normalized_residuals ? eb.rho_sigma : 1.0;
    const double wr = config.normalized_residuals ? eb.rhodot_sigma : 1.0;

    auto eval = [&](double a, double e) {
        RadarMeas<TaylorMap> m{TaylorMap::constant(meas[0], 2, 1),
                               TaylorMap::constant(meas[1], 2, 1),
                               TaylorMap::constant(meas[2], 2, 1),
                               TaylorMap::constant(meas[3], 2, 1),
                               TaylorMap::variable(0, a, hs, 2, 1),
                               TaylorMap::variable(1, e, hs, 2, 1),
                               true};
        const auto st = topo_to_inertial(m, site, e1.t, em);
        const auto rr = range_and_rate(propagate(st, eb.t - e1.t, em, config.use_j2), site,
                                       eb.t, em);
        return std::pair{(rr.first - meas[4]) / ws, (rr.second - meas[5]) / wr};
    };

    // Newton runs to the arithmetic floor. With two-body dynamics the floor
    // is effectively zero (the simulator shares the propagation arithmetic
    // bit for bit); the secular-J2 path leaves ~1e-8 normalized from the
    // element round trips, so a stall at a small residual is also accepted.
    double best_f = std::numeric_limits<double>::infinity();
    double best_a = adot, best_e = edot;
    int stalled = 0;
    for (int it = 0; it < 60; ++it) {
        const auto [d0, d1] = eval(adot, edot);
        const double f0 = d0.constant_part(), f1 = d1.constant_part();
        const double fnorm = std::hypot(f0, f1);
        if (fnorm < best_f) {
            best_f = fnorm;
            best_a = adot;
            best_e = edot;
            stalled = 0;
        } else if (++stalled >= 3) {
            break;
        }
        if (fnorm < 1e-12) return {adot, edot};
        Eigen::Matrix2d jac;
        const std::vector<int> ex0{1, 0}, ex1{0, 1};
        jac(0, 0) = d0.coefficient(ex0) / hs;
        jac(0, 1) = d0.coefficient(ex1) / hs;
        jac(1, 0) = d1.coefficient(ex0) / hs;
        jac(1, 1) = d1.coefficient(ex1) / hs;
        if (std::abs(jac.determinant()) < 1e-14)
            throw std::runtime_error("alg2: singular rate Jacobian");
        const Eigen::Vector2d step = jac.partialPivLu().solve(Eigen::Vector2d(f0, f1));
        double damp = 1.0;
        for (int half = 0; half < 10; ++half) {
            const auto [t0, t1] = eval(adot - damp * step(0), edot - damp * step(1));
            if (std::hypot(t0.constant_part(), t1.constant_part()) < fnorm) break;
            damp *= 0.5;
        }
        adot -= damp * step(0);
        edot -= damp * step(1);
    }
    if (best_f < 1e-6) return {best_a, best_e};
    throw std::runtime_error("alg2: rate solve did not converge");
}

}  // namespace

std::pair<double, double> alg2_center_solve(const ObservationSet& obs, const IodConfig& config,
                                            const std::array<double, 6>& meas) {
    const auto& e1 = obs.at(0);
    if (!obs.has_second_tracklet())
        throw std::invalid_argument("alg2: needs a second tracklet");
    if (!e1.has_rates) throw std::invalid_argument("alg2: rate guesses required");
    const auto c = alg2_solve_rates(obs, config, meas, e1.azdot, e1.eldot);
    return {c.azdot, c.eldot};
}

IodResult iod_alg2(const ObservationSet& obs, const IodConfig& config) {
    if (!obs.has_second_tracklet())
        throw std::invalid_argument("iod_alg2: needs both tracklets");
    const auto& e1 = obs.at(0);
    const auto& eb = obs.at(3);
    if (!e1.has_angles || !e1.has_rates)
        throw std::invalid_argument("iod_alg2: regressed angles and rates required at t1");
    if (eb.t - e1.t < 1e-9) throw std::invalid_argument("iod_alg2: epochs coincide");

    IodResult res;
    res.algorithm = 2;
    res.t_ref = e1.t;
    res.site = obs.site;
    res.earth = obs.earth;
    res.config = config;
    res.threshold = chi2_threshold(config, 6);
    res.var_names = {"rho_t1", "rhodot_t1", "az_t1", "el_t1", "rho_t2", "rhodot_t2"};
    res.box = {{e1.rho, 3.0 * e1.rho_sigma}, {e1.rhodot, 3.0 * e1.rhodot_sigma},
               {e1.az, e1.az_half},          {e1.el, e1.el_half},
               {eb.rho, 3.0 * eb.rho_sigma}, {eb.rhodot, 3.0 * eb.rhodot_sigma}};

    const auto& site = obs.site;
    const auto& em = obs.earth;
    const int k = config.order;
    const double ws = config.normalized_residuals ? eb.rho_sigma : 1.0;
    const double wr = config.normalized_residuals ? eb.rhodot_sigma : 1.0;

    AdsPipeline pipeline = [&](const MapSystem& u) {
        std::array<double, 6> c{};
        std::array<double, 6> hw{};
        for (int i = 0; i < 6; ++i) {
            c[i] = u[i].constant_part();
            std::vector<int> e(6, 0);
            e[i] = 1;
            hw[i] = u[i].coefficient(e);
        }
        const auto center = alg2_solve_rates(obs, config, c, e1.azdot, e1.eldot);

        // Rate spread probe at a box corner sets the expansion widths.
        std::array<double, 6> corner = c;
        for (int i = 0; i < 6; ++i) corner[i] += hw[i];
        double h_adot = std::max({e1.azdot_half, 1e-6});
        double h_edot = std::max({e1.eldot_half, 1e-6});
        try {
            const auto probe =
                alg2_solve_rates(obs, config, corner, center.azdot, center.eldot);
            h_adot = std::max(h_adot, 4.0 * std::abs(probe.azdot - center.azdot));
            h_edot = std::max(h_edot, 4.0 * std::abs(probe.eldot - center.eldot));
        } catch (const std::exception&) {
        }

        // Eight-variable expansion: six measurements plus the two rates.
        auto var8 = [&](int i, double cc, double hh) {
            return TaylorMap::variable(i, cc, hh, 8, k);
        };
        RadarMeas<TaylorMap> m8{var8(0, c[0], hw[0]), var8(1, c[1], hw[1]),
                                var8(2, c[2], hw[2]), var8(3, c[3], hw[3]),
                                var8(6, center.azdot, h_adot), var8(7, center.eldot, h_edot),
                                true};
        const auto st8 = topo_to_inertial(m8, site, e1.t, em);
        const auto rr8 = range_and_rate(propagate(st8, eb.t - e1.t, em, config.use_j2), site,
                                        eb.t, em);
        const TaylorMap d0 = (rr8.first - var8(4, c[4], hw[4])) / ws;
        const TaylorMap d1 = (rr8.second - var8(5, c[5], hw[5])) / wr;

        std::vector<TaylorMap> sys;
        for (int i = 0; i < 6; ++i) sys.push_back(TaylorMap::variable(i, 0.0, 1.0, 8, k));
        sys.push_back(d0);
        sys.push_back(d1);
        const std::array<int, 2> slots{6, 7};
        const MapSystem inv = partial_invert(MapSystem(std::move(sys)), slots, slots);

        // Reduce to the six measurement deviations, pinning the residual
        // deviations at the values that zero the residuals.
        std::vector<TaylorMap> inner;
        for (int i = 0; i < 6; ++i) inner.push_back(TaylorMap::variable(i, 0.0, 1.0, 6, k));
        inner.push_back(TaylorMap::constant(-d0.constant_part(), 6, k));
        inner.push_back(TaylorMap::constant(-d1.constant_part(), 6, k));
        const MapSystem reduce(std::move(inner));
        const TaylorMap delta_adot = substitute(inv[6], reduce);
        const TaylorMap delta_edot = substitute(inv[7], reduce);
        const TaylorMap adot_map = center.azdot + h_adot * delta_adot;
        const TaylorMap edot_map = center.eldot + h_edot * delta_edot;

        const RadarMeas<TaylorMap> m6{u[0], u[1], u[2], u[3], adot_map, edot_map, true};
        const auto st = topo_to_inertial(m6, site, e1.t, em);
        const auto rr = range_and_rate(propagate(st, eb.t - e1.t, em, config.use_j2), site,
                                       eb.t, em);

        std::vector<TaylorMap> maps;
        maps.reserve(10);
        maps.push_back(delta_adot);
        maps.push_back(delta_edot);
        append_state(maps, st);
        maps.push_back((rr.first - u[4]) / ws);
        maps.push_back((rr.second - u[5]) / wr);
        return MapSystem(std::move(maps));
    };

    const auto manifold = run_ads(config, pipeline, res.box, ads_settings(config, 2), {});

    for (const auto& sub : manifold.subdomains) {
        if (sub.status != DomainStatus::Converged && sub.status != DomainStatus::MaxDepth)
            continue;
        IodDomain d;
        d.id = sub.id;
        d.center = sub.center;
        d.half_width = sub.half_width;
        d.status = sub.status;
        d.error_estimate = sub.error_estimate;
        const std::vector<double> zero(6, 0.0);
        d.argmin = zero;
        d.meas_argmin = physical_point(res.box, sub, zero);
        d.state = eval_state_maps(sub.maps, 2, zero, res.t_ref);
        d.elements = safe_elements(d.state, obs.earth.mu);
        const TaylorMap j = residual_squares(MapSystem({sub.maps[8], sub.maps[9]}), 2);
        d.j_min = minimize_on_domain(j, config.minimizer_max_iters).value;
        std::vector<TaylorMap> rmaps{sub.maps[8], sub.maps[9]};
        std::vector<TaylorMap> smaps;
        for (int i = 0; i < 6; ++i) smaps.push_back(sub.maps[2 + i]);
        d.residual_maps = MapSystem(std::move(rmaps));
        d.state_maps = MapSystem(std::move(smaps));
        res.domains.push_back(std::move(d));
    }
    fill_summary(res, manifold);
    return res;
}

}  // namespace ods
