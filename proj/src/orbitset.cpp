#include "ods/orbitset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace ods {

namespace {

StateVector state_at(const MapSystem& maps, const std::vector<double>& local, double epoch) {
    StateVector sv;
    sv.r = {maps[0].eval(local), maps[1].eval(local), maps[2].eval(local)};
    sv.v = {maps[3].eval(local), maps[4].eval(local), maps[5].eval(local)};
    sv.epoch = epoch;
    return sv;
}

State3<TaylorMap> state_maps_as_state(const MapSystem& m) {
    return {{m[0], m[1], m[2]}, {m[3], m[4], m[5]}};
}

bool usable(const OrbitSetDomain& d) {
    return d.status != DomainStatus::Failed && d.state_maps.size() >= 6;
}

// Each domain keeps its own generator so the draw does not depend on how
// many samples earlier domains consumed.
std::mt19937_64 domain_rng(std::uint64_t seed, int domain_id) {
    return std::mt19937_64(seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(domain_id) + 1)));
}

// Hull of angle intervals in the wrap representation with the least width:
// interval midpoints shifted by whole turns into [ref, ref + 2pi).
Interval angle_hull(const std::vector<Interval>& ivs) {
    auto shifted_hull = [&](double ref) {
        Interval h;
        bool first = true;
        for (Interval iv : ivs) {
            const double k = std::floor((iv.mid() - ref) / kTwoPi);
            iv.lo -= k * kTwoPi;
            iv.hi -= k * kTwoPi;
            h = first ? iv : h.hull(iv);
            first = false;
        }
        return h;
    };
    const Interval h0 = shifted_hull(0.0);
    const Interval h1 = shifted_hull(-std::numbers::pi);
    return h0.width() <= h1.width() ? h0 : h1;
}

// Cyclic golden-section line searches over [-1,1] in each coordinate.
template <typename F>
double golden_polish(const F& f, std::vector<double>& x) {
    constexpr double kInvPhi = 0.6180339887498949;
    double best = f(x);
    for (int pass = 0; pass < 4; ++pass) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            double a = -1.0, b = 1.0;
            const double keep = x[i];
            double c = b - kInvPhi * (b - a), d = a + kInvPhi * (b - a);
            x[i] = c;
            double fc = f(x);
            x[i] = d;
            double fd = f(x);
            for (int it = 0; it < 40; ++it) {
                if (fc < fd) {
                    b = d; d = c; fd = fc;
                    c = b - kInvPhi * (b - a);
                    x[i] = c;
                    fc = f(x);
                } else {
                    a = c; c = d; fc = fd;
                    d = a + kInvPhi * (b - a);
                    x[i] = d;
                    fd = f(x);
                }
            }
            x[i] = 0.5 * (a + b);
            const double fm = f(x);
            if (fm <= best && fm <= std::min(fc, fd)) {
                best = fm;
            } else {
                x[i] = keep;
            }
        }
    }
    return best;
}

}  // namespace

OrbitSet make_orbit_set(const IodResult& result) {
    OrbitSet set;
    set.t_ref = result.t_ref;
    set.site = result.site;
    set.earth = result.earth;
    set.algorithm = result.algorithm;
    set.config = result.config;
    set.box = result.box;
    for (const auto& d : result.domains) {
        OrbitSetDomain od;
        od.id = d.id;
        od.center = d.center;
        od.half_width = d.half_width;
        od.status = d.status;
        od.error_estimate = d.error_estimate;
        od.j_min = d.j_min;
        od.state_maps = d.state_maps;
        od.state = state_at(od.state_maps, std::vector<double>(d.center.size(), 0.0),
                            result.t_ref);
        set.domains.push_back(std::move(od));
    }
    return set;
}

OrbitSet propagate_set(const OrbitSet& set, double t_target, Dynamics dynamics,
                       const AdsSettings& settings) {
    if (!std::isfinite(t_target))
        throw std::invalid_argument("propagate_set: target epoch must be finite");
    OrbitSet out;
    out.t_ref = t_target;
    out.site = set.site;
    out.earth = set.earth;
    out.algorithm = set.algorithm;
    out.config = set.config;
    out.box = set.box;

    const double dt = t_target - set.t_ref;
    const bool use_j2 = dynamics == Dynamics::J2;
    int next_id = 0;

    for (const auto& d : set.domains) {
        if (!usable(d)) continue;
        const int v = static_cast<int>(d.center.size());
        std::vector<VarSpec> box(v);
        for (int i = 0; i < v; ++i) box[i] = {d.center[i], d.half_width[i]};

        AdsPipeline pipeline = [&](const MapSystem& u) {
            // u carries root-box coordinates over a sub-box of this domain;
            // the stored maps expect the domain-local deltas.
            std::vector<TaylorMap> loc;
            loc.reserve(v);
            for (int i = 0; i < v; ++i)
                loc.push_back(d.half_width[i] > 0.0
                                  ? (u[i] - d.center[i]) / d.half_width[i]
                                  : u[i] - d.center[i]);
            const MapSystem s0 = substitute(d.state_maps, MapSystem(std::move(loc)));
            const State3<TaylorMap> st = propagate(state_maps_as_state(s0), dt, set.earth, use_j2);
            return MapSystem({st.r.x, st.r.y, st.r.z, st.v.x, st.v.y, st.v.z});
        };

        AdsSettings s = settings;
        s.order = d.state_maps.order();
        const auto manifold =
            s.parallel ? ads_run(pipeline, box, s) : ads_run_serial(pipeline, box, s);

        for (const auto& sub : manifold.subdomains) {
            OrbitSetDomain nd;
            nd.id = next_id++;
            nd.center.resize(v);
            nd.half_width.resize(v);
            for (int i = 0; i < v; ++i) {
                nd.center[i] = box[i].center + box[i].half_width * sub.center[i];
                nd.half_width[i] = box[i].half_width * sub.half_width[i];
            }
            nd.status = sub.status;
            nd.error_estimate = sub.error_estimate;
            nd.j_min = d.j_min;
            if (sub.status != DomainStatus::Failed) {
                nd.state_maps = sub.maps;
                nd.state = state_at(nd.state_maps, std::vector<double>(v, 0.0), t_target);
            }
            out.domains.push_back(std::move(nd));
        }
    }
    return out;
}

MeasurementSet project_set(const OrbitSet& set, const RadarSite& site, double epoch, int n_cloud,
                           std::uint64_t seed) {
    MeasurementSet ms;
    ms.epoch = epoch;
    ms.site = site;
    ms.earth = set.earth;
    std::uniform_real_distribution<double> uni(-1.0, 1.0);

    for (const auto& d : set.domains) {
        if (!usable(d)) continue;
        const RadarMeas<TaylorMap> m =
            inertial_to_meas(state_maps_as_state(d.state_maps), site, epoch, set.earth);
        MeasurementSet::DomainProjection proj;
        proj.id = d.id;
        proj.maps = MapSystem({m.rho, m.rhodot, m.az, m.el});

        auto rng = domain_rng(seed, d.id);
        const int v = static_cast<int>(d.center.size());
        std::vector<double> local(v);
        for (int k = 0; k < n_cloud; ++k) {
            for (int i = 0; i < v; ++i) local[i] = uni(rng);
            MeasurementSet::CloudPoint p;
            p.domain_id = d.id;
            p.rho = proj.maps[0].eval(local);
            p.rhodot = proj.maps[1].eval(local);
            p.az = proj.maps[2].eval(local);
            p.el = proj.maps[3].eval(local);
            ms.cloud.push_back(p);
        }
        ms.domains.push_back(std::move(proj));
    }
    return ms;
}

std::vector<SetSample> sample_set(const OrbitSet& set, int n, std::uint64_t seed) {
    if (n < 0) throw std::invalid_argument("sample_set: n must be non-negative");
    std::vector<const OrbitSetDomain*> doms;
    for (const auto& d : set.domains)
        if (usable(d)) doms.push_back(&d);
    if (doms.empty()) throw std::invalid_argument("sample_set: empty orbit set");

    std::vector<double> weights;
    double total = 0.0;
    for (const auto* d : doms) {
        double vol = 1.0;
        for (double h : d->half_width) vol *= h;
        weights.push_back(vol);
        total += vol;
    }
    if (total <= 0.0) std::fill(weights.begin(), weights.end(), 1.0);

    std::mt19937_64 rng(seed);
    std::discrete_distribution<int> pick(weights.begin(), weights.end());
    std::uniform_real_distribution<double> uni(-1.0, 1.0);

    std::vector<SetSample> out;
    out.reserve(n);
    for (int k = 0; k < n; ++k) {
        const OrbitSetDomain* d = doms[pick(rng)];
        SetSample s;
        s.domain_id = d->id;
        s.local.resize(d->center.size());
        for (double& x : s.local) x = uni(rng);
        s.state = state_at(d->state_maps, s.local, set.t_ref);
        out.push_back(std::move(s));
    }
    return out;
}

ElementBounds element_bounds(const OrbitSet& set) {
    std::vector<Interval> a, e, inc, raan, argp;
    for (const auto& d : set.domains) {
        if (!usable(d)) continue;
        const int v = d.state_maps[0].n_vars();
        if (d.status == DomainStatus::Converged) {
            try {
                const KepElements<TaylorMap> kep =
                    cart_to_kep(state_maps_as_state(d.state_maps), set.earth.mu);
                a.push_back(kep.a.bound());
                e.push_back(kep.e.bound());
                inc.push_back(kep.inc.bound());
                raan.push_back(kep.raan.bound());
                argp.push_back(kep.argp.bound());
                continue;
            } catch (const std::exception&) {
                // Degenerate geometry in the Taylor arithmetic; fall through
                // to the sampled hull.
            }
        }
        // Depth-capped leaves never met the truncation tolerance, so the
        // coefficient-sum bound of their maps wildly overstates the spread;
        // hull the corner and center states instead.
        Interval da, de, di, dra, dar;
        bool first = true;
        for (int corner = 0; corner <= (1 << v); ++corner) {
            std::vector<double> local(v, 0.0);
            if (corner < (1 << v))
                for (int i = 0; i < v; ++i) local[i] = corner & (1 << i) ? 1.0 : -1.0;
            try {
                const KeplerElements kep = cart_to_kep(
                    State3<double>{{d.state_maps[0].eval(local), d.state_maps[1].eval(local),
                                    d.state_maps[2].eval(local)},
                                   {d.state_maps[3].eval(local), d.state_maps[4].eval(local),
                                    d.state_maps[5].eval(local)}},
                    set.earth.mu);
                const Interval pa{kep.a, kep.a}, pe{kep.e, kep.e}, pi{kep.inc, kep.inc};
                const Interval pr{kep.raan, kep.raan}, pp{kep.argp, kep.argp};
                da = first ? pa : da.hull(pa);
                de = first ? pe : de.hull(pe);
                di = first ? pi : di.hull(pi);
                dra = first ? pr : angle_hull({dra, pr});
                dar = first ? pp : angle_hull({dar, pp});
                first = false;
            } catch (const std::exception&) {
            }
        }
        if (first) continue;
        a.push_back(da);
        e.push_back(de);
        inc.push_back(di);
        raan.push_back(dra);
        argp.push_back(dar);
    }
    if (a.empty()) throw std::invalid_argument("element_bounds: empty orbit set");

    ElementBounds b;
    b.a = a[0];
    b.e = e[0];
    b.inc = inc[0];
    for (std::size_t i = 1; i < a.size(); ++i) {
        b.a = b.a.hull(a[i]);
        b.e = b.e.hull(e[i]);
        b.inc = b.inc.hull(inc[i]);
    }
    b.raan = angle_hull(raan);
    b.argp = angle_hull(argp);
    return b;
}

AssociationVerdict associate(const MeasurementSet& mset, const Tracklet& tracklet,
                             double threshold, double gate_seconds) {
    if (mset.empty()) throw std::invalid_argument("associate: empty measurement set");
    tracklet.validate();

    std::vector<const TrackletSample*> inside;
    for (const auto& s : tracklet.samples)
        if (std::abs(tracklet.epoch + s.t - mset.epoch) <= gate_seconds) inside.push_back(&s);
    if (inside.empty())
        throw std::invalid_argument("associate: tracklet outside the epoch gate");
    // Cap the time search; the samples are dense relative to the dynamics.
    const std::size_t stride = 1 + (inside.size() - 1) / 25;

    AssociationVerdict best;
    best.score = std::numeric_limits<double>::infinity();
    for (const auto& d : mset.domains) {
        for (std::size_t k = 0; k < inside.size(); k += stride) {
            const TrackletSample& s = *inside[k];
            const TaylorMap dr = (d.maps[0] - s.rho) / s.rho_sigma;
            const TaylorMap dd = (d.maps[1] - s.rhodot) / s.rhodot_sigma;
            // Cheap interval screen before the descent.
            const Interval br = dr.bound(), bd = dd.bound();
            double lo = 0.0;
            if (!br.contains(0.0)) lo += std::pow(std::min(std::abs(br.lo), std::abs(br.hi)), 2);
            if (!bd.contains(0.0)) lo += std::pow(std::min(std::abs(bd.lo), std::abs(bd.hi)), 2);
            if (lo >= best.score) continue;
            // The order-limited square of the residual maps can dip below
            // zero, so the surrogate descent only supplies a start point;
            // the score itself comes from exact map evaluations.
            const auto exact = [&](const std::vector<double>& p) {
                const double a = dr.eval(p), b = dd.eval(p);
                return a * a + b * b;
            };
            const auto sur = minimize_on_domain(dr * dr + dd * dd);
            std::vector<double> x = sur.argmin;
            if (exact(std::vector<double>(x.size(), 0.0)) < exact(x))
                x.assign(x.size(), 0.0);
            double val = golden_polish(exact, x);
            if (val < best.score) {
                best.score = val;
                best.domain_id = d.id;
                best.t_best = tracklet.epoch + s.t;
            }
        }
    }
    best.compatible = best.score <= threshold;
    return best;
}

}  // namespace ods
