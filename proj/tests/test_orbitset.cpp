#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "ods/orbitset.hpp"

using ods::AdsSettings;
using ods::Dynamics;
using ods::EarthModel;
using ods::IodConfig;
using ods::MapSystem;
using ods::MeasurementSet;
using ods::NoiseSpec;
using ods::OrbitSet;
using ods::OrbitSetDomain;
using ods::RadarSite;
using ods::SimulateOptions;
using ods::StateVector;
using ods::TaylorMap;
using ods::Tracklet;
using ods::TruthOrbit;
using ods::VarSpec;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

const RadarSite kSite{"cr-radar", 9.7489 * kDeg, -83.7534 * kDeg, 1.0};

TruthOrbit object2() {
    return {{6849.12, 0.00553, 97.6549 * kDeg, 98.4364 * kDeg, 118.156 * kDeg, 50.813 * kDeg},
            0.0};
}

EarthModel two_body_earth() {
    EarthModel em;
    em.j2 = 0.0;
    return em;
}

// Single zero-width domain wrapping one state: the smallest useful set.
OrbitSet point_set(const StateVector& sv, const EarthModel& em) {
    OrbitSet set;
    set.t_ref = sv.epoch;
    set.site = kSite;
    set.earth = em;
    set.box.assign(6, VarSpec{0.0, 0.0});
    OrbitSetDomain d;
    d.center.assign(6, 0.0);
    d.half_width.assign(6, 0.0);
    std::vector<TaylorMap> maps;
    for (double c : {sv.r.x, sv.r.y, sv.r.z, sv.v.x, sv.v.y, sv.v.z})
        maps.push_back(TaylorMap::constant(c, 6, 3));
    d.state_maps = MapSystem(std::move(maps));
    d.state = sv;
    set.domains.push_back(std::move(d));
    return set;
}

struct Scenario {
    Tracklet t1, t2;
    ods::ObservationSet obs;
    TruthOrbit truth;
    EarthModel em;
};

Scenario make_scenario(const TruthOrbit& truth, double inject_scale, std::uint64_t seed) {
    NoiseSpec noise;
    noise.inject_scale = inject_scale;
    noise.seed = seed;
    SimulateOptions opt;
    opt.angle_channels = ods::AngleChannels::Both;
    Scenario sc;
    sc.truth = truth;
    sc.em = two_body_earth();
    std::tie(sc.t1, sc.t2) = ods::simulate_pass(truth, kSite, 0.0, 86400.0, opt, noise, sc.em);
    sc.obs = ods::build_observations(sc.t1, &sc.t2, kSite, sc.em, 0.001, 0.01);
    return sc;
}

// The Algorithm-2 zero-noise run most orbit-set cases build on; computed once.
const Scenario& alg2_scenario() {
    static const Scenario sc = make_scenario(object2(), 0.0, 1);
    return sc;
}

const ods::IodResult& alg2_result() {
    static const ods::IodResult result = [] {
        IodConfig cfg;
        cfg.parallel = false;
        return ods::iod_alg2(alg2_scenario().obs, cfg);
    }();
    return result;
}

}  // namespace

TEST_CASE("a degenerate point set follows the flow exactly") {
    const EarthModel em = two_body_earth();
    const TruthOrbit truth = object2();
    const StateVector sv{ods::truth_state(truth, 1000.0, em).r,
                         ods::truth_state(truth, 1000.0, em).v, 1000.0};
    const OrbitSet set = point_set(sv, em);

    // Propagation to the set epoch is the identity.
    const OrbitSet same = propagate_set(set, 1000.0, Dynamics::Kepler);
    REQUIRE(same.domains.size() == 1);
    CHECK(norm(same.domains[0].state.r - sv.r) < 1e-12);
    CHECK(norm(same.domains[0].state.v - sv.v) < 1e-14);

    // Twelve hours forward matches both the oracle trajectory and a plain
    // double propagation of the center.
    const double t12 = 1000.0 + 12.0 * 3600.0;
    const OrbitSet fwd = propagate_set(set, t12, Dynamics::Kepler);
    REQUIRE(fwd.domains.size() == 1);
    CHECK(norm(fwd.domains[0].state.r - ods::truth_state(truth, t12, em).r) < 1e-6);
    const auto direct = ods::kepler_propagate(ods::State3<double>{sv.r, sv.v},
                                              t12 - 1000.0, em.mu);
    CHECK(norm(fwd.domains[0].state.r - direct.r) < 1e-9);

    EarthModel em_j2;
    const OrbitSet set_j2 = point_set(sv, em_j2);
    const OrbitSet fwd_j2 = propagate_set(set_j2, t12, Dynamics::J2);
    REQUIRE(fwd_j2.domains.size() == 1);
    const auto direct_j2 = ods::j2_propagate(ods::State3<double>{sv.r, sv.v},
                                             t12 - 1000.0, em_j2);
    CHECK(norm(fwd_j2.domains[0].state.r - direct_j2.r) < 1e-9);

    CHECK_THROWS(propagate_set(set, std::numeric_limits<double>::infinity(), Dynamics::Kepler));
}

TEST_CASE("projection reproduces the direct observation of the center") {
    const EarthModel em = two_body_earth();
    // A point straight above the site.
    ods::RadarMeas<double> zen{500.0, 0.0, 0.3, std::numbers::pi / 2.0, 0.0, 0.0, true};
    const auto st = ods::topo_to_inertial(zen, kSite, 0.0, em);
    const OrbitSet set = point_set(StateVector{st.r, st.v, 0.0}, em);

    const MeasurementSet ms = project_set(set, kSite, 0.0);
    REQUIRE(ms.domains.size() == 1);
    CHECK(ms.cloud.empty());
    const std::vector<double> zero(6, 0.0);
    CHECK(ms.domains[0].maps[0].eval(zero) == doctest::Approx(500.0).epsilon(1e-9));
    CHECK(ms.domains[0].maps[3].eval(zero) ==
          doctest::Approx(std::numbers::pi / 2.0).epsilon(1e-6));
}

TEST_CASE("sampling is volume proportional, bounded, and seeded") {
    // Two linear domains with a 64:1 volume ratio.
    OrbitSet set;
    set.t_ref = 0.0;
    set.earth = two_body_earth();
    set.box.assign(6, VarSpec{0.0, 1.0});
    for (int k = 0; k < 2; ++k) {
        OrbitSetDomain d;
        d.id = k;
        d.center.assign(6, k == 0 ? -0.5 : 0.75);
        d.half_width.assign(6, k == 0 ? 0.5 : 0.25);
        std::vector<TaylorMap> maps;
        for (int i = 0; i < 6; ++i)
            maps.push_back(TaylorMap::variable(i, 7000.0 + 10.0 * k, 2.0, 6, 3));
        d.state_maps = MapSystem(std::move(maps));
        set.domains.push_back(std::move(d));
    }

    CHECK(ods::sample_set(set, 0, 5).empty());
    CHECK_THROWS(ods::sample_set(OrbitSet{}, 10, 5));

    const auto samples = ods::sample_set(set, 6500, 5);
    REQUIRE(samples.size() == 6500);
    int big = 0;
    double mean_rx = 0.0;
    for (const auto& s : samples) {
        if (s.domain_id == 0) ++big;
        for (double x : s.local) CHECK(std::abs(x) <= 1.0);
        mean_rx += s.state.r.x;
    }
    // Volume weights 1 : 1/64; the large domain should absorb ~98.5%.
    CHECK(big > 6200);
    // Linear map: the sample mean stays within 3 standard errors of the
    // center value (sd per draw = 2/sqrt(3)).
    mean_rx /= samples.size();
    CHECK(std::abs(mean_rx - 7000.0 - 10.0 * (6500.0 - big) / 6500.0) <
          3.0 * 2.0 / std::sqrt(3.0 * 6500.0));

    const auto again = ods::sample_set(set, 6500, 5);
    CHECK(again[17].state.r.y == samples[17].state.r.y);
    const auto other = ods::sample_set(set, 6500, 6);
    CHECK(other[17].state.r.y != samples[17].state.r.y);
}

TEST_CASE("element bounds enclose the set and survive angle wrap-around") {
    const EarthModel em = two_body_earth();
    const TruthOrbit truth = object2();
    const auto st = ods::truth_state(truth, 500.0, em);
    const OrbitSet pt = point_set(StateVector{st.r, st.v, 500.0}, em);
    const auto b = ods::element_bounds(pt);
    CHECK(b.a.width() < 1e-6);
    CHECK(b.a.mid() == doctest::Approx(6849.12).epsilon(1e-6));
    CHECK(b.e.width() < 1e-9);
    CHECK(b.inc.mid() == doctest::Approx(97.6549 * kDeg).epsilon(1e-6));

    // Two domains straddling the zero-degree node: the hull must span the
    // short way around.
    auto with_raan = [&](double raan_deg) {
        TruthOrbit t = truth;
        t.kep.raan = raan_deg * kDeg;
        const auto s = ods::truth_state(t, 500.0, em);
        return point_set(StateVector{s.r, s.v, 500.0}, em).domains[0];
    };
    OrbitSet wrap = pt;
    wrap.domains = {with_raan(1.0), with_raan(359.0)};
    const auto bw = ods::element_bounds(wrap);
    CHECK(bw.raan.width() < 3.0 * kDeg);
    CHECK((bw.raan.contains(1.0 * kDeg) || bw.raan.contains(1.0 * kDeg + ods::kTwoPi) ||
           bw.raan.contains(1.0 * kDeg - ods::kTwoPi)));

    // Hull over disjoint domains is the min/max of the member intervals.
    OrbitSet two = pt;
    two.domains = {with_raan(40.0), with_raan(50.0)};
    const auto b2 = ods::element_bounds(two);
    CHECK(b2.raan.lo == doctest::Approx(40.0 * kDeg).epsilon(1e-9));
    CHECK(b2.raan.hi == doctest::Approx(50.0 * kDeg).epsilon(1e-9));

    CHECK_THROWS(ods::element_bounds(OrbitSet{}));

    // Enclosure: sampled states from a real IOD set stay inside the bounds.
    const OrbitSet set = ods::make_orbit_set(alg2_result());
    REQUIRE_FALSE(set.empty());
    const auto eb = ods::element_bounds(set);
    CHECK(eb.a.contains(6849.12));
    for (const auto& s : ods::sample_set(set, 10000, 3)) {
        const auto kep = ods::cart_to_kep(ods::State3<double>{s.state.r, s.state.v}, em.mu);
        CHECK(eb.a.contains(kep.a));
        CHECK(eb.e.contains(kep.e));
        CHECK(eb.inc.contains(kep.inc));
    }
}

TEST_CASE("the propagated set meets the next pass and associates with the truth") {
    const Scenario& sc = alg2_scenario();
    const EarthModel& em = sc.em;
    const OrbitSet set = ods::make_orbit_set(alg2_result());
    REQUIRE_FALSE(set.empty());

    // Next visibility pass roughly half a day on.
    const double t0 = set.t_ref;
    const auto passes = ods::find_passes(sc.truth, kSite, t0 + 3600.0, t0 + 16.0 * 3600.0, em,
                                         10.0 * kDeg);
    REQUIRE_FALSE(passes.empty());
    const double t_next = passes.back().t_culmination;
    CHECK(t_next - t0 > 6.0 * 3600.0);

    NoiseSpec noise;
    noise.inject_scale = 0.0;
    SimulateOptions opt;
    const Tracklet t3 = ods::simulate_tracklet(sc.truth, kSite, t_next, opt, noise, em, false, 7);

    const OrbitSet fwd = propagate_set(set, t_next, Dynamics::Kepler);
    REQUIRE_FALSE(fwd.empty());

    // Projection consistency at the center of every domain.
    const MeasurementSet ms = project_set(fwd, kSite, t_next, 200, 11);
    REQUIRE_FALSE(ms.domains.empty());
    const std::vector<double> zero(6, 0.0);
    for (std::size_t i = 0; i < ms.domains.size(); ++i) {
        const auto& d = fwd.domains[i];
        const auto direct = ods::inertial_to_meas(ods::State3<double>{d.state.r, d.state.v},
                                                  kSite, t_next, em);
        CHECK(ms.domains[i].maps[0].eval(zero) == doctest::Approx(direct.rho).epsilon(1e-10));
        CHECK(ms.domains[i].maps[1].eval(zero) == doctest::Approx(direct.rhodot).epsilon(1e-10));
    }

    // The projected cloud passes close to the truth measurement. After half
    // a day of propagation the set spans thousands of range-rate sigmas, so
    // 200 random draws only land within a few sigmas of any given point.
    const auto truth_meas =
        ods::inertial_to_meas(ods::truth_state(sc.truth, t_next, em), kSite, t_next, em);
    const auto& mid = t3.samples[t3.samples.size() / 2];
    double best = 1e30;
    for (const auto& p : ms.cloud)
        best = std::min(best, std::hypot((p.rho - truth_meas.rho) / mid.rho_sigma,
                                         (p.rhodot - truth_meas.rhodot) / mid.rhodot_sigma));
    CHECK(best < 15.0);

    // Association: the true next-pass tracklet is compatible.
    const auto verdict = ods::associate(ms, t3);
    CHECK(verdict.compatible);
    CHECK(verdict.score < 9.21);

    // Order independence of the verdict.
    MeasurementSet reversed = ms;
    std::reverse(reversed.domains.begin(), reversed.domains.end());
    const auto v2 = ods::associate(reversed, t3);
    CHECK(v2.compatible == verdict.compatible);
    CHECK(v2.score == doctest::Approx(verdict.score).epsilon(1e-12));

    // An orbit 50 km higher is rejected. It sits lower in the sky at this
    // epoch, so the mask is dropped to let the simulator observe it.
    TruthOrbit impostor = sc.truth;
    impostor.kep.a += 50.0;
    SimulateOptions unmasked = opt;
    unmasked.el_mask = -std::numbers::pi / 2;
    const Tracklet bad =
        ods::simulate_tracklet(impostor, kSite, t_next, unmasked, noise, em, false, 7);
    const auto v3 = ods::associate(ms, bad);
    CHECK_FALSE(v3.compatible);

    // Gate violation and empty sets are errors.
    Tracklet late = t3;
    late.epoch += 600.0;
    CHECK_THROWS(ods::associate(ms, late));
    CHECK_THROWS(ods::associate(MeasurementSet{}, t3));
}

TEST_CASE("samples re-evaluated through the residual maps stay compatible") {
    const auto& result = alg2_result();
    const OrbitSet set = ods::make_orbit_set(result);
    REQUIRE_FALSE(set.empty());
    const double tol = result.config.tol;
    for (const auto& s : ods::sample_set(set, 500, 21)) {
        for (const auto& d : result.domains) {
            if (d.id != s.domain_id) continue;
            for (int i = 0; i < d.residual_maps.size(); ++i) {
                const ods::Interval b = d.residual_maps[i].bound();
                const double r = d.residual_maps[i].eval(s.local);
                CHECK(r > b.lo - 10.0 * tol);
                CHECK(r < b.hi + 10.0 * tol);
            }
        }
    }
}
