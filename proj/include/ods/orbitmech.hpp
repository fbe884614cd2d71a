#pragma once

// Astrodynamics primitives generic over the scalar type: plain double or
// TaylorMap. Branch decisions and iteration counts are always taken from
// the constant (center) part so the DA control flow stays fixed.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

#include "ods/constants.hpp"
#include "ods/dapoly.hpp"

namespace ods {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Scalar shims so unqualified calls resolve for double operands too.
inline double sin(double x) { return std::sin(x); }
inline double cos(double x) { return std::cos(x); }
inline double tan(double x) { return std::tan(x); }
inline double asin(double x) { return std::asin(x); }
inline double acos(double x) { return std::acos(x); }
inline double atan(double x) { return std::atan(x); }
inline double atan2(double y, double x) { return std::atan2(y, x); }
inline double sqrt(double x) { return std::sqrt(x); }
inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }
inline double pow_i(double x, int n) { return std::pow(x, n); }

struct KeplerNonConvergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class S>
struct Vec3 {
    S x, y, z;
};

template <class S> Vec3<S> operator+(const Vec3<S>& a, const Vec3<S>& b) {
    return {a.x + b.x, a.y + b.y, a.z + b.z};
}
template <class S> Vec3<S> operator-(const Vec3<S>& a, const Vec3<S>& b) {
    return {a.x - b.x, a.y - b.y, a.z - b.z};
}
template <class S, class T> auto operator*(const Vec3<S>& a, const T& s) {
    using R = decltype(a.x * s);
    return Vec3<R>{a.x * s, a.y * s, a.z * s};
}
template <class S> Vec3<S> operator*(double s, const Vec3<S>& a) { return a * s; }
template <class S, class T> auto operator/(const Vec3<S>& a, const T& s) {
    using R = decltype(a.x / s);
    return Vec3<R>{a.x / s, a.y / s, a.z / s};
}
template <class S> Vec3<S> operator-(const Vec3<S>& a) { return {-a.x, -a.y, -a.z}; }

template <class S> S dot(const Vec3<S>& a, const Vec3<S>& b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}
template <class S> Vec3<S> cross(const Vec3<S>& a, const Vec3<S>& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
template <class S> S norm(const Vec3<S>& a) { return sqrt(dot(a, a)); }

inline Vec3<double> center(const Vec3<double>& v) { return v; }
inline Vec3<double> center(const Vec3<TaylorMap>& v) {
    return {v.x.constant_part(), v.y.constant_part(), v.z.constant_part()};
}

template <class S>
struct State3 {
    Vec3<S> r;  // km
    Vec3<S> v;  // km/s
};

inline State3<double> center(const State3<double>& s) { return s; }
inline State3<double> center(const State3<TaylorMap>& s) { return {center(s.r), center(s.v)}; }

// Plain-real state with its epoch, the I/O-level carrier.
struct StateVector {
    Vec3<double> r{0, 0, 0};
    Vec3<double> v{0, 0, 0};
    double epoch = 0.0;  // seconds, uniform scenario time scale
};

template <class S>
struct KepElements {
    S a;     // km
    S e;
    S inc;   // rad
    S raan;  // rad
    S argp;  // rad
    S ta;    // rad, true anomaly
};
using KeplerElements = KepElements<double>;

struct RadarSite {
    std::string id;
    double lat = 0.0;   // geodetic, rad
    double lon = 0.0;   // rad
    double alt = 0.0;   // km
};

template <class S>
struct RadarMeas {
    S rho;      // km
    S rhodot;   // km/s
    S az;       // rad, from North, clockwise (toward East)
    S el;       // rad
    S azdot;    // rad/s
    S eldot;    // rad/s
    bool visible = true;
};

struct Mat3 {
    double m[3][3];
};

inline Mat3 mat_mul(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) r.m[i][j] += a.m[i][k] * b.m[k][j];
    return r;
}

inline Mat3 transpose(const Mat3& a) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.m[i][j] = a.m[j][i];
    return r;
}

template <class S>
Vec3<S> mat_vec(const Mat3& a, const Vec3<S>& v) {
    return {a.m[0][0] * v.x + a.m[0][1] * v.y + a.m[0][2] * v.z,
            a.m[1][0] * v.x + a.m[1][1] * v.y + a.m[1][2] * v.z,
            a.m[2][0] * v.x + a.m[2][1] * v.y + a.m[2][2] * v.z};
}

inline Mat3 rot_z(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return Mat3{{{c, -s, 0.0}, {s, c, 0.0}, {0.0, 0.0, 1.0}}};
}

// Shift the constant part into [0, 2*pi); the polynomial part is untouched.
inline double wrap_2pi(double x) {
    double r = std::fmod(x, kTwoPi);
    if (r < 0.0) r += kTwoPi;
    return r;
}
inline TaylorMap wrap_2pi(const TaylorMap& x) {
    const double c = x.constant_part();
    return x - kTwoPi * std::floor(c / kTwoPi);
}

namespace da_detail {

template <class S>
int refine_iterations(const S& proto, int extra = 1) {
    if constexpr (is_taylor<S>::value) {
        int need = 0;
        while ((1 << need) < proto.order() + 1) ++need;
        return need + extra;
    } else {
        (void)proto;
        return 1;
    }
}

}  // namespace da_detail

// ---------------------------------------------------------------------------
// Site geometry and the topocentric (South-East-Zenith) frame.

inline Vec3<double> site_ecef(const RadarSite& site, const EarthModel& em) {
    const double e2 = em.flattening * (2.0 - em.flattening);
    const double sl = std::sin(site.lat), cl = std::cos(site.lat);
    const double n = em.re / std::sqrt(1.0 - e2 * sl * sl);
    return {(n + site.alt) * cl * std::cos(site.lon),
            (n + site.alt) * cl * std::sin(site.lon),
            (n * (1.0 - e2) + site.alt) * sl};
}

// Columns are the S, E, Z unit vectors expressed in ECEF.
inline Mat3 sez_to_ecef(const RadarSite& site) {
    const double sp = std::sin(site.lat), cp = std::cos(site.lat);
    const double sl = std::sin(site.lon), cl = std::cos(site.lon);
    return Mat3{{{sp * cl, -sl, cp * cl},
                 {sp * sl, cl, cp * sl},
                 {-cp, 0.0, sp}}};
}

inline Mat3 sez_to_inertial(const RadarSite& site, double t, const EarthModel& em) {
    return mat_mul(rot_z(em.theta0 + em.omega * t), sez_to_ecef(site));
}

inline State3<double> site_inertial_state(const RadarSite& site, double t, const EarthModel& em) {
    const Vec3<double> r = mat_vec(rot_z(em.theta0 + em.omega * t), site_ecef(site, em));
    const Vec3<double> w{0.0, 0.0, em.omega};
    return {r, cross(w, r)};
}

template <class S>
Vec3<S> topo_unit(const S& az, const S& el) {
    const S cel = cos(el);
    return {-cel * cos(az), cel * sin(az), sin(el)};
}

// Position only; needs no rate information.
template <class S>
Vec3<S> topo_position(const S& rho, const S& az, const S& el, const RadarSite& site, double t,
                      const EarthModel& em) {
    const Mat3 rot = sez_to_inertial(site, t, em);
    const Vec3<double> rs = site_inertial_state(site, t, em).r;
    const Vec3<S> rel = mat_vec(rot, topo_unit(az, el) * rho);
    return {rel.x + rs.x, rel.y + rs.y, rel.z + rs.z};
}

template <class S>
State3<S> topo_to_inertial(const RadarMeas<S>& meas, const RadarSite& site, double t,
                           const EarthModel& em) {
    const double el0 = constant_part(meas.el);
    if (el0 < -1e-9 || el0 > std::numbers::pi / 2.0 + 1e-9)
        throw std::invalid_argument("topo_to_inertial: elevation outside [0, pi/2]");

    const Mat3 rot = sez_to_inertial(site, t, em);
    const State3<double> st = site_inertial_state(site, t, em);

    const S cel = cos(meas.el), sel = sin(meas.el);
    const S caz = cos(meas.az), saz = sin(meas.az);
    const Vec3<S> u{-cel * caz, cel * saz, sel};
    const Vec3<S> du_daz{cel * saz, cel * caz, sel - sel};
    const Vec3<S> du_del{sel * caz, -sel * saz, cel};
    const Vec3<S> udot = du_daz * meas.azdot + du_del * meas.eldot;

    const Vec3<S> rel = mat_vec(rot, u * meas.rho);
    const Vec3<S> r{rel.x + st.r.x, rel.y + st.r.y, rel.z + st.r.z};
    const Vec3<S> vrel = mat_vec(rot, u * meas.rhodot + udot * meas.rho);
    // Transport term omega x rel, with omega along +z.
    return {r, {vrel.x - em.omega * rel.y + st.v.x, vrel.y + em.omega * rel.x + st.v.y,
                vrel.z + st.v.z}};
}

template <class S>
RadarMeas<S> inertial_to_meas(const State3<S>& state, const RadarSite& site, double t,
                              const EarthModel& em) {
    const Mat3 rot_t = transpose(sez_to_inertial(site, t, em));
    const State3<double> st = site_inertial_state(site, t, em);
    const Vec3<double> w{0.0, 0.0, em.omega};

    const Vec3<S> d{state.r.x - st.r.x, state.r.y - st.r.y, state.r.z - st.r.z};
    {
        const Vec3<double> dc = center(d);
        if (dot(dc, dc) == 0.0) throw std::domain_error("inertial_to_meas: zero range");
    }
    const Vec3<S> dsez = mat_vec(rot_t, d);
    const S rho = norm(d);

    // Relative velocity seen in the rotating topocentric frame.
    const Vec3<S> vrel_in{state.v.x - st.v.x - (w.y * d.z - w.z * d.y),
                          state.v.y - st.v.y - (w.z * d.x - w.x * d.z),
                          state.v.z - st.v.z - (w.x * d.y - w.y * d.x)};
    const Vec3<S> vsez = mat_vec(rot_t, vrel_in);

    const S rhodot = dot(dsez, vsez) / rho;
    const S horiz = sqrt(dsez.x * dsez.x + dsez.y * dsez.y);
    const S el = atan2(dsez.z, horiz);
    const S az = wrap_2pi(atan2(dsez.y, -dsez.x));

    // Angle rates from the topocentric components.
    const S h2 = dsez.x * dsez.x + dsez.y * dsez.y;
    const S azdot = (dsez.y * vsez.x - dsez.x * vsez.y) / h2;
    const S wdot = (dsez.x * vsez.x + dsez.y * vsez.y) / horiz;
    const S eldot = (horiz * vsez.z - dsez.z * wdot) / (rho * rho);

    RadarMeas<S> m{rho, rhodot, az, el, azdot, eldot, true};
    m.visible = constant_part(el) > 0.0;
    return m;
}

// ---------------------------------------------------------------------------
// Two-body propagation (universal variables) and the Lambert solver.

template <class S>
S stumpff_c(const S& z) {
    const double z0 = constant_part(z);
    if (z0 > 1.0) {
        const S sz = sqrt(z);
        return (1.0 - cos(sz)) / z;
    }
    if (z0 < -1.0) {
        const S sz = sqrt(-1.0 * z);
        const S ch = (exp(sz) + exp(-1.0 * sz)) * 0.5;
        return (ch - 1.0) / (-1.0 * z);
    }
    // Series: sum (-z)^i / (2i+2)!, Horner in (-z).
    static const int kTerms = 12;
    double coeff[kTerms];
    double f = 2.0;  // (2)!
    coeff[0] = 1.0 / f;
    for (int i = 1; i < kTerms; ++i) {
        f *= (2.0 * i + 1.0) * (2.0 * i + 2.0);
        coeff[i] = 1.0 / f;
    }
    S acc = make_like(z, coeff[kTerms - 1]);
    for (int i = kTerms - 2; i >= 0; --i) acc = acc * (-1.0 * z) + coeff[i];
    return acc;
}

template <class S>
S stumpff_s(const S& z) {
    const double z0 = constant_part(z);
    if (z0 > 1.0) {
        const S sz = sqrt(z);
        return (sz - sin(sz)) / (sz * z);
    }
    if (z0 < -1.0) {
        const S sz = sqrt(-1.0 * z);
        const S sh = (exp(sz) - exp(-1.0 * sz)) * 0.5;
        return (sh - sz) / (sz * (-1.0 * z));
    }
    static const int kTerms = 12;
    double coeff[kTerms];
    double f = 6.0;  // (3)!
    coeff[0] = 1.0 / f;
    for (int i = 1; i < kTerms; ++i) {
        f *= (2.0 * i + 2.0) * (2.0 * i + 3.0);
        coeff[i] = 1.0 / f;
    }
    S acc = make_like(z, coeff[kTerms - 1]);
    for (int i = kTerms - 2; i >= 0; --i) acc = acc * (-1.0 * z) + coeff[i];
    return acc;
}

template <class S>
State3<S> kepler_propagate(const State3<S>& s0, double dt, double mu) {
    if (dt == 0.0) return s0;
    const double sqmu = std::sqrt(mu);

    // Converge the universal anomaly at the center point first.
    const State3<double> c = center(s0);
    const double r0c = std::sqrt(dot(c.r, c.r));
    const double vr0c = dot(c.r, c.v) / r0c;
    const double alpha_c = 2.0 / r0c - dot(c.v, c.v) / mu;
    double chi = std::abs(alpha_c) > 1e-12 ? sqmu * std::abs(alpha_c) * dt : sqmu * dt / r0c;
    bool converged = false;
    for (int it = 0; it < 50; ++it) {
        const double z = alpha_c * chi * chi;
        const double cc = stumpff_c(z), ss = stumpff_s(z);
        const double F = r0c * vr0c / sqmu * chi * chi * cc +
                         (1.0 - alpha_c * r0c) * chi * chi * chi * ss + r0c * chi - sqmu * dt;
        const double dF = r0c * vr0c / sqmu * chi * (1.0 - z * ss) +
                          (1.0 - alpha_c * r0c) * chi * chi * cc + r0c;
        const double ratio = F / dF;
        chi -= ratio;
        if (std::abs(ratio) < 1e-13 * (1.0 + std::abs(chi))) {
            converged = true;
            break;
        }
    }
    if (!converged) throw KeplerNonConvergence("universal Kepler iteration did not converge");

    // Fixed Newton sweeps in the working scalar type.
    const S r0 = norm(s0.r);
    const S vr0 = dot(s0.r, s0.v) / r0;
    const S alpha = 2.0 / r0 - dot(s0.v, s0.v) / mu;
    S x = make_like(r0, chi);
    const int iters = da_detail::refine_iterations(r0);
    for (int i = 0; i < iters; ++i) {
        const S z = alpha * x * x;
        const S cc = stumpff_c(z), ss = stumpff_s(z);
        const S F = r0 * vr0 / sqmu * x * x * cc + (1.0 - alpha * r0) * x * x * x * ss + r0 * x -
                    sqmu * dt;
        const S dF = r0 * vr0 / sqmu * x * (1.0 - z * ss) + (1.0 - alpha * r0) * x * x * cc + r0;
        x = x - F / dF;
    }

    const S z = alpha * x * x;
    const S cc = stumpff_c(z), ss = stumpff_s(z);
    const S f = 1.0 - x * x * cc / r0;
    const S g = dt - x * x * x * ss / sqmu;
    const Vec3<S> rn = s0.r * f + s0.v * g;
    const S rnn = norm(rn);
    const S fdot = sqmu / (rnn * r0) * x * (z * ss - 1.0);
    const S gdot = 1.0 - x * x * cc / rnn;
    return {rn, s0.r * fdot + s0.v * gdot};
}

template <class S>
std::pair<Vec3<S>, Vec3<S>> lambert_solve(const Vec3<S>& r1, const Vec3<S>& r2, double tof,
                                          double mu, bool prograde = true) {
    if (tof <= 0.0) throw std::invalid_argument("lambert_solve: time of flight must be positive");
    const double sqmu = std::sqrt(mu);

    const Vec3<double> r1c = center(r1), r2c = center(r2);
    const double r1n_c = std::sqrt(dot(r1c, r1c));
    const double r2n_c = std::sqrt(dot(r2c, r2c));
    const Vec3<double> cp = cross(r1c, r2c);
    const double cpn = std::sqrt(dot(cp, cp));
    if (cpn < 1e-10 * r1n_c * r2n_c)
        throw std::invalid_argument("lambert_solve: collinear geometry");

    const bool long_way = prograde ? (cp.z < 0.0) : (cp.z >= 0.0);

    const S r1n = norm(r1);
    const S r2n = norm(r2);
    const Vec3<S> cv = cross(r1, r2);
    S theta = atan2(norm(cv), dot(r1, r2));
    if (long_way) theta = kTwoPi - theta;
    const S A = sin(theta) * sqrt(r1n * r2n / (1.0 - cos(theta)));
    const double a_c = constant_part(A);

    // y(z) and F(z) in plain doubles for the bracketed center solve. The
    // textbook form r1 + r2 + A(zS - 1)/sqrt(C) cancels catastrophically on
    // short arcs, where y is orders of magnitude below r1 + r2. Since
    // (1 - zS)/sqrt(2C) = cos(sqrt(z)/2) exactly, y can be rewritten with
    // only non-negative terms for z >= 0:
    //   y = (sqrt(r1) - sqrt(r2))^2
    //     + 2 sqrt(r1 r2) [sin^2((th - w)/4) + sin^2((th + w)/4)],  w = sqrt(z).
    const double th_c = constant_part(theta);
    const double sq_diff =
        (std::sqrt(r1n_c) - std::sqrt(r2n_c)) * (std::sqrt(r1n_c) - std::sqrt(r2n_c));
    const double two_sq = 2.0 * std::sqrt(r1n_c * r2n_c);
    auto y_of = [&](double z) {
        if (z >= 0.0) {
            const double w = std::sqrt(z);
            const double sa = std::sin(0.25 * (th_c - w)), sb = std::sin(0.25 * (th_c + w));
            return sq_diff + two_sq * (sa * sa + sb * sb);
        }
        const double vv = std::sqrt(-z);
        return sq_diff + two_sq * (1.0 - std::cos(0.5 * th_c) * std::cosh(0.5 * vv));
    };
    auto f_of = [&](double z) {
        const double cc = stumpff_c(z), ss = stumpff_s(z);
        const double y = y_of(z);
        return std::pow(y / cc, 1.5) * ss + a_c * std::sqrt(y) - sqmu * tof;
    };

    // Bracket: F is increasing in z on the single-revolution branch. For
    // A > 0, y(z) < 0 at very negative z; locate the y = 0 boundary, where
    // F approaches -sqrt(mu)*tof, and start just above it.
    double zlo = -4.0 * kTwoPi;
    const double zhi = kTwoPi * kTwoPi - 1e-9;
    if (a_c > 0.0 && y_of(zlo) < 0.0) {
        double lo = zlo, hi = zhi;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (y_of(mid) < 0.0 ? lo : hi) = mid;
        }
        zlo = hi;
    }
    double za = zlo, zb = zhi;
    double fa = f_of(za);
    double zc = 0.5 * (za + zb);
    for (int it = 0; it < 200; ++it) {
        zc = 0.5 * (za + zb);
        const double fc = f_of(zc);
        if (std::abs(fc) < 1e-10 * sqmu * tof) break;
        if ((fc < 0.0) == (fa < 0.0)) {
            za = zc;
            fa = fc;
        } else {
            zb = zc;
        }
    }
    // Newton polish at the center.
    for (int it = 0; it < 20; ++it) {
        const double cc = stumpff_c(zc), ss = stumpff_s(zc);
        const double y = y_of(zc);
        if (y <= 0.0) break;
        const double F = std::pow(y / cc, 1.5) * ss + a_c * std::sqrt(y) - sqmu * tof;
        double Fp;
        if (std::abs(zc) > 1e-6) {
            Fp = std::pow(y / cc, 1.5) *
                     (1.0 / (2.0 * zc) * (cc - 1.5 * ss / cc) + 0.75 * ss * ss / cc) +
                 a_c / 8.0 * (3.0 * ss / cc * std::sqrt(y) + a_c * std::sqrt(cc / y));
        } else {
            Fp = std::sqrt(2.0) / 40.0 * std::pow(y, 1.5) +
                 a_c / 8.0 * (std::sqrt(y) + a_c * std::sqrt(1.0 / (2.0 * y)));
        }
        const double step = F / Fp;
        zc -= step;
        if (std::abs(step) < 1e-14 * (1.0 + std::abs(zc))) break;
    }
    {
        const double yfin = y_of(zc);
        if (!(yfin > 0.0) || std::abs(f_of(zc)) > 1e-8 * sqmu * tof)
            throw KeplerNonConvergence("lambert_solve: center iteration failed");
    }

    // Entire-function y for the working scalar type (good Taylor structure),
    // with its constant term recentered on the stable double evaluation.
    auto y_gen = [&](const S& zz, const S& cc, const S& ss) -> S {
        const S y_raw = r1n + r2n + A * (zz * ss - 1.0) / sqrt(cc);
        return y_raw + (y_of(constant_part(zz)) - constant_part(y_raw));
    };

    // Fixed Newton sweeps in the working scalar type.
    S z = make_like(r1n, zc);
    const int iters = da_detail::refine_iterations(r1n, 3);
    for (int i = 0; i < iters; ++i) {
        const S cc = stumpff_c(z), ss = stumpff_s(z);
        const S y = y_gen(z, cc, ss);
        const S F = sqrt(y / cc) * (y / cc) * ss + A * sqrt(y) - sqmu * tof;
        S Fp = make_like(z, 1.0);
        if (std::abs(constant_part(z)) > 1e-6) {
            Fp = sqrt(y / cc) * (y / cc) *
                     (1.0 / (2.0 * z) * (cc - 1.5 * ss / cc) + 0.75 * ss * ss / cc) +
                 A * (1.0 / 8.0) * (3.0 * ss / cc * sqrt(y) + A * sqrt(cc / y));
        } else {
            Fp = std::sqrt(2.0) / 40.0 * sqrt(y) * y + A * (1.0 / 8.0) * (sqrt(y) + A * sqrt(0.5 / y));
        }
        z = z - F / Fp;
    }

    // Difference form of the f-and-g reconstruction: r2 - f*r1 loses most
    // of its digits on short arcs, (r2 - r1) + r1*(y/r1n) does not.
    const S ccf = stumpff_c(z), ssf = stumpff_s(z);
    const S y = y_gen(z, ccf, ssf);
    const S g = A * sqrt(y / mu);
    const Vec3<S> dr = r2 - r1;
    const Vec3<S> v1 = (dr + r1 * (y / r1n)) / g;
    const Vec3<S> v2 = (dr - r2 * (y / r2n)) / g;
    return {v1, v2};
}

// ---------------------------------------------------------------------------
// Element conversions and analytic J2 propagation.

template <class S>
KepElements<S> cart_to_kep(const State3<S>& st, double mu) {
    const S rn = norm(st.r);
    const S v2 = dot(st.v, st.v);
    const S energy_term = 2.0 / rn - v2 / mu;
    if (constant_part(energy_term) <= 0.0)
        throw std::domain_error("cart_to_kep: orbit is not elliptical");
    const S a = 1.0 / energy_term;

    const Vec3<S> h = cross(st.r, st.v);
    const S hn = norm(h);
    const Vec3<S> evec = cross(st.v, h) / mu - st.r / rn;
    const S e = norm(evec);

    const S hxy = sqrt(h.x * h.x + h.y * h.y);
    const S inc = atan2(hxy, h.z);

    KepElements<S> kep{a, e, inc, make_like(a, 0.0), make_like(a, 0.0), make_like(a, 0.0)};
    const double hxy0 = constant_part(hxy);
    const double e0 = constant_part(e);
    const double hn0 = constant_part(hn);

    if (hxy0 > 1e-11 * hn0) {
        // Node vector n = z_hat x h = (-h_y, h_x, 0).
        const Vec3<S> n{-h.y, h.x, h.z - h.z};
        kep.raan = wrap_2pi(atan2(n.y, n.x));
        if (e0 > 1e-11) {
            kep.argp = wrap_2pi(atan2(dot(cross(n, evec), h) / hn, dot(n, evec)));
            kep.ta = wrap_2pi(atan2(dot(cross(evec, st.r), h) / hn, dot(evec, st.r)));
        } else {
            // Circular: argument of latitude convention.
            kep.argp = make_like(a, 0.0);
            kep.ta = wrap_2pi(atan2(dot(cross(n, st.r), h) / hn, dot(n, st.r)));
        }
    } else {
        // Equatorial conventions.
        kep.raan = make_like(a, 0.0);
        if (e0 > 1e-11) {
            kep.argp = wrap_2pi(atan2(evec.y, evec.x));
            kep.ta = wrap_2pi(atan2(dot(cross(evec, st.r), h) / hn, dot(evec, st.r)));
        } else {
            kep.argp = make_like(a, 0.0);
            kep.ta = wrap_2pi(atan2(st.r.y, st.r.x));
        }
    }
    return kep;
}

template <class S>
State3<S> kep_to_cart(const KepElements<S>& kep, double mu) {
    if (constant_part(kep.e) >= 1.0)
        throw std::domain_error("kep_to_cart: eccentricity must be below 1");
    const S p = kep.a * (1.0 - kep.e * kep.e);
    const S cta = cos(kep.ta), sta = sin(kep.ta);
    const S rn = p / (1.0 + kep.e * cta);
    const S sp = sqrt(mu / p);

    // Perifocal components.
    const S rx = rn * cta, ry = rn * sta;
    const S vx = -sp * sta, vy = sp * (kep.e + cta);

    const S cO = cos(kep.raan), sO = sin(kep.raan);
    const S ci = cos(kep.inc), si = sin(kep.inc);
    const S cw = cos(kep.argp), sw = sin(kep.argp);

    // Rows of R3(-raan) R1(-inc) R3(-argp).
    const S r11 = cO * cw - sO * sw * ci, r12 = -cO * sw - sO * cw * ci;
    const S r21 = sO * cw + cO * sw * ci, r22 = -sO * sw + cO * cw * ci;
    const S r31 = sw * si, r32 = cw * si;

    return {{r11 * rx + r12 * ry, r21 * rx + r22 * ry, r31 * rx + r32 * ry},
            {r11 * vx + r12 * vy, r21 * vx + r22 * vy, r31 * vx + r32 * vy}};
}

// Solve Kepler's equation M = E - e sin E; fixed DA sweeps after the
// center converges.
template <class S>
S kepler_anomaly(const S& mean_anomaly, const S& e) {
    const double m0 = constant_part(mean_anomaly);
    const double e0 = constant_part(e);
    double ec = m0;
    bool converged = false;
    for (int it = 0; it < 50; ++it) {
        const double f = ec - e0 * std::sin(ec) - m0;
        const double step = f / (1.0 - e0 * std::cos(ec));
        ec -= step;
        if (std::abs(step) < 1e-14) {
            converged = true;
            break;
        }
    }
    if (!converged) throw KeplerNonConvergence("Kepler equation iteration did not converge");
    S big_e = make_like(e, ec);
    const int iters = da_detail::refine_iterations(e);
    for (int i = 0; i < iters; ++i)
        big_e = big_e - (big_e - e * sin(big_e) - mean_anomaly) / (1.0 - e * cos(big_e));
    return big_e;
}

template <class S>
State3<S> j2_propagate(const State3<S>& s0, double dt, const EarthModel& em) {
    KepElements<S> kep = cart_to_kep(s0, em.mu);
    if (constant_part(kep.e) > 0.99)
        throw std::domain_error("j2_propagate: near-parabolic orbit");

    const S n = sqrt(em.mu / (kep.a * kep.a * kep.a));
    const S p = kep.a * (1.0 - kep.e * kep.e);
    const S si = sin(kep.inc), ci = cos(kep.inc);
    const S re_p = em.re / p;
    const S fac = 1.5 * em.j2 * n * re_p * re_p;

    const S raan_dot = -1.0 * fac * ci;
    const S argp_dot = fac * (2.0 - 2.5 * si * si);
    const S sqrt1me2 = sqrt(1.0 - kep.e * kep.e);
    const S mdot_j2 = fac * sqrt1me2 * (1.0 - 1.5 * si * si);

    // Eccentric and mean anomaly at departure.
    const S e_anom0 = atan2(sqrt1me2 * sin(kep.ta), kep.e + cos(kep.ta));
    const S m0 = e_anom0 - kep.e * sin(e_anom0);

    const S m = m0 + (n + mdot_j2) * dt;
    const S e_anom = kepler_anomaly(wrap_2pi(m), kep.e);
    const S ta = atan2(sqrt1me2 * sin(e_anom), cos(e_anom) - kep.e);

    KepElements<S> out = kep;
    out.raan = wrap_2pi(kep.raan + raan_dot * dt);
    out.argp = wrap_2pi(kep.argp + argp_dot * dt);
    out.ta = wrap_2pi(ta);
    State3<S> st = kep_to_cart(out, em.mu);

    // The velocity must be the time derivative of the drifting-element
    // trajectory, not just the two-body term: scale the anomaly part by
    // the full mean rate and add the node and perigee rotations.
    const Vec3<S> h = cross(st.r, st.v);
    const S hn = norm(h);
    const Vec3<S> zxr{-1.0 * st.r.y, st.r.x, hn - hn};
    st.v = st.v * (1.0 + mdot_j2 / n) + zxr * raan_dot + cross(h, st.r) * (argp_dot / hn);
    return st;
}

// Secular RAAN rate, deg/day, for reporting and tests.
inline double raan_rate_deg_per_day(const KeplerElements& kep, const EarthModel& em) {
    const double n = std::sqrt(em.mu / (kep.a * kep.a * kep.a));
    const double p = kep.a * (1.0 - kep.e * kep.e);
    const double rate = -1.5 * em.j2 * n * (em.re / p) * (em.re / p) * std::cos(kep.inc);
    return rate * 86400.0 * 180.0 / std::numbers::pi;
}

template <class S>
State3<S> propagate(const State3<S>& s0, double dt, const EarthModel& em, bool use_j2) {
    return use_j2 ? j2_propagate(s0, dt, em) : kepler_propagate(s0, dt, em.mu);
}

}  // namespace ods
