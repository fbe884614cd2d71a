#include "ods/io.hpp"

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ods {

namespace {

using nlohmann::json;

constexpr double kDeg = std::numbers::pi / 180.0;

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& err) {
        throw std::runtime_error(path + ": " + err.what());
    }
}

void save_json(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

json map_to_json(const TaylorMap& m) {
    return json{{"n_vars", m.n_vars()},
                {"order", m.order()},
                {"coeffs", std::vector<double>(m.coefficients().begin(), m.coefficients().end())}};
}

TaylorMap map_from_json(const json& j) {
    const auto coeffs = j.at("coeffs").get<std::vector<double>>();
    return TaylorMap::from_coefficients(coeffs, j.at("n_vars").get<int>(),
                                        j.at("order").get<int>());
}

json system_to_json(const MapSystem& s) {
    json arr = json::array();
    for (int i = 0; i < s.size(); ++i) arr.push_back(map_to_json(s[i]));
    return arr;
}

MapSystem system_from_json(const json& j) {
    std::vector<TaylorMap> maps;
    for (const auto& m : j) maps.push_back(map_from_json(m));
    return MapSystem(std::move(maps));
}

json site_to_json(const RadarSite& s) {
    return json{{"id", s.id}, {"lat_deg", s.lat / kDeg}, {"lon_deg", s.lon / kDeg},
                {"alt_km", s.alt}};
}

RadarSite site_from_json(const json& j) {
    return {j.at("id").get<std::string>(), j.at("lat_deg").get<double>() * kDeg,
            j.at("lon_deg").get<double>() * kDeg, j.at("alt_km").get<double>()};
}

json earth_to_json(const EarthModel& em) {
    return json{{"mu", em.mu},       {"re", em.re},           {"j2", em.j2},
                {"omega", em.omega}, {"flattening", em.flattening}, {"theta0", em.theta0}};
}

EarthModel earth_from_json(const json& j) {
    EarthModel em;
    em.mu = j.value("mu", em.mu);
    em.re = j.value("re", em.re);
    em.j2 = j.value("j2", em.j2);
    em.omega = j.value("omega", em.omega);
    em.flattening = j.value("flattening", em.flattening);
    em.theta0 = j.value("theta0", em.theta0);
    return em;
}

json config_to_json(const IodConfig& c) {
    return json{{"order", c.order},
                {"tol", c.tol},
                {"max_splits", c.max_splits},
                {"max_domains", c.max_domains},
                {"alpha_angles", c.alpha_angles},
                {"alpha_rates", c.alpha_rates},
                {"chi2_quantile", c.chi2_quantile},
                {"chi2_fallback", c.chi2_fallback},
                {"minimizer_max_iters", c.minimizer_max_iters},
                {"normalized_residuals", c.normalized_residuals},
                {"use_j2", c.use_j2},
                {"prograde", c.prograde},
                {"parallel", c.parallel}};
}

IodConfig config_from_json(const json& j, IodConfig c) {
    c.order = j.value("order", c.order);
    c.tol = j.value("tol", c.tol);
    c.max_splits = j.value("max_splits", c.max_splits);
    c.max_domains = j.value("max_domains", c.max_domains);
    c.alpha_angles = j.value("alpha_angles", c.alpha_angles);
    c.alpha_rates = j.value("alpha_rates", c.alpha_rates);
    c.chi2_quantile = j.value("chi2_quantile", c.chi2_quantile);
    c.chi2_fallback = j.value("chi2_fallback", c.chi2_fallback);
    c.minimizer_max_iters = j.value("minimizer_max_iters", c.minimizer_max_iters);
    c.normalized_residuals = j.value("normalized_residuals", c.normalized_residuals);
    c.use_j2 = j.value("use_j2", c.use_j2);
    c.prograde = j.value("prograde", c.prograde);
    c.parallel = j.value("parallel", c.parallel);
    return c;
}

}  // namespace

std::string iso8601_from_seconds(double t) {
    const long long whole = static_cast<long long>(std::floor(t));
    const double frac = t - static_cast<double>(whole);
    const std::time_t unix_s = static_cast<std::time_t>(kScenarioUnixEpoch + whole);
    std::tm tm{};
    gmtime_r(&unix_s, &tm);
    char buf[40];
    if (frac > 0.0) {
        std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%09.6fZ", tm.tm_year + 1900,
                      tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec + frac);
    } else {
        std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                      tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    }
    return buf;
}

double seconds_from_iso8601(const std::string& iso) {
    std::tm tm{};
    double sec = 0.0;
    if (std::sscanf(iso.c_str(), "%d-%d-%dT%d:%d:%lf", &tm.tm_year, &tm.tm_mon, &tm.tm_mday,
                    &tm.tm_hour, &tm.tm_min, &sec) != 6)
        throw std::runtime_error("bad ISO-8601 epoch: " + iso);
    tm.tm_year -= 1900;
    tm.tm_mon -= 1;
    const std::time_t unix_s = timegm(&tm);
    return static_cast<double>(unix_s - kScenarioUnixEpoch) + sec;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::uint64_t h = 1469598103934665603ULL;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_tracklet_json(const Tracklet& trk, const std::string& path) {
    json samples = json::array();
    for (const auto& s : trk.samples) {
        json row{{"t", s.t},
                 {"rho_km", s.rho},
                 {"rho_sigma_km", s.rho_sigma},
                 {"rhodot_kms", s.rhodot},
                 {"rhodot_sigma_kms", s.rhodot_sigma},
                 {"az_deg", nullptr},
                 {"el_deg", nullptr}};
        if (s.az) row["az_deg"] = *s.az / kDeg;
        if (s.el) row["el_deg"] = *s.el / kDeg;
        samples.push_back(std::move(row));
    }
    save_json(json{{"site", trk.site},
                   {"epoch", iso8601_from_seconds(trk.epoch)},
                   {"samples", std::move(samples)}},
              path);
}

Tracklet read_tracklet_json(const std::string& path) {
    const json j = load_json(path);
    Tracklet trk;
    try {
        trk.site = j.at("site").get<std::string>();
        trk.epoch = seconds_from_iso8601(j.at("epoch").get<std::string>());
        for (const auto& row : j.at("samples")) {
            TrackletSample s;
            s.t = row.at("t").get<double>();
            s.rho = row.at("rho_km").get<double>();
            s.rho_sigma = row.at("rho_sigma_km").get<double>();
            s.rhodot = row.at("rhodot_kms").get<double>();
            s.rhodot_sigma = row.at("rhodot_sigma_kms").get<double>();
            if (row.contains("az_deg") && !row["az_deg"].is_null())
                s.az = row["az_deg"].get<double>() * kDeg;
            if (row.contains("el_deg") && !row["el_deg"].is_null())
                s.el = row["el_deg"].get<double>() * kDeg;
            trk.samples.push_back(s);
        }
    } catch (const json::exception& err) {
        throw std::runtime_error(path + ": " + err.what());
    }
    trk.validate();
    return trk;
}

void write_truth_json(const TruthOrbit& truth, const std::string& path) {
    save_json(json{{"epoch", iso8601_from_seconds(truth.epoch)},
                   {"a_km", truth.kep.a},
                   {"e", truth.kep.e},
                   {"inc_deg", truth.kep.inc / kDeg},
                   {"raan_deg", truth.kep.raan / kDeg},
                   {"argp_deg", truth.kep.argp / kDeg},
                   {"ta_deg", truth.kep.ta / kDeg}},
              path);
}

TruthOrbit read_truth_json(const std::string& path) {
    const json j = load_json(path);
    TruthOrbit t;
    try {
        t.epoch = j.contains("epoch") ? seconds_from_iso8601(j.at("epoch").get<std::string>())
                                      : 0.0;
        t.kep.a = j.at("a_km").get<double>();
        t.kep.e = j.at("e").get<double>();
        t.kep.inc = j.at("inc_deg").get<double>() * kDeg;
        t.kep.raan = j.at("raan_deg").get<double>() * kDeg;
        t.kep.argp = j.at("argp_deg").get<double>() * kDeg;
        t.kep.ta = j.at("ta_deg").get<double>() * kDeg;
    } catch (const json::exception& err) {
        throw std::runtime_error(path + ": " + err.what());
    }
    return t;
}

NoiseSpec read_noise_json(const std::string& path, NoiseSpec d) {
    const json j = load_json(path);
    d.sigma_rho = j.value("sigma_rho_km", d.sigma_rho);
    d.sigma_rhodot = j.value("sigma_rhodot_kms", d.sigma_rhodot);
    if (j.contains("sigma_az_deg")) d.sigma_az = j["sigma_az_deg"].get<double>() * kDeg;
    if (j.contains("sigma_el_deg")) d.sigma_el = j["sigma_el_deg"].get<double>() * kDeg;
    d.seed = j.value("seed", d.seed);
    d.inject_scale = j.value("inject_scale", d.inject_scale);
    return d;
}

IodConfig read_iod_config(const std::string& path, IodConfig defaults) {
    return config_from_json(load_json(path), defaults);
}

void write_iod_result_json(const IodResult& result, const std::string& path,
                           const std::vector<std::string>& input_digests) {
    json domains = json::array();
    for (const auto& d : result.domains) {
        domains.push_back(json{{"id", d.id},
                               {"center", d.center},
                               {"half_width", d.half_width},
                               {"status", to_string(d.status)},
                               {"error_estimate", d.error_estimate},
                               {"j_min", d.j_min},
                               {"argmin", d.argmin},
                               {"meas_argmin", d.meas_argmin},
                               {"state", {{"r", {d.state.r.x, d.state.r.y, d.state.r.z}},
                                          {"v", {d.state.v.x, d.state.v.y, d.state.v.z}},
                                          {"epoch", d.state.epoch}}},
                               {"elements", {{"a_km", d.elements.a},
                                             {"e", d.elements.e},
                                             {"inc_deg", d.elements.inc / kDeg},
                                             {"raan_deg", d.elements.raan / kDeg},
                                             {"argp_deg", d.elements.argp / kDeg},
                                             {"ta_deg", d.elements.ta / kDeg}}},
                               {"state_maps", system_to_json(d.state_maps)},
                               {"residual_maps", system_to_json(d.residual_maps)}});
    }
    json box = json::array();
    for (const auto& v : result.box) box.push_back(json{{"center", v.center},
                                                        {"half_width", v.half_width}});
    json j{{"algorithm", result.algorithm},
           {"t_ref", result.t_ref},
           {"site", site_to_json(result.site)},
           {"earth", earth_to_json(result.earth)},
           {"config", config_to_json(result.config)},
           {"input_digests", input_digests},
           {"var_names", result.var_names},
           {"box", std::move(box)},
           {"threshold", result.threshold},
           {"leaves_total", result.leaves_total},
           {"pruned", result.pruned},
           {"failed", result.failed},
           {"diagnostics", result.diagnostics},
           {"domains", std::move(domains)}};
    if (!result.domains.empty()) {
        const auto b = element_bounds(make_orbit_set(result));
        j["element_bounds"] = {{"a_km", {b.a.lo, b.a.hi}},
                               {"e", {b.e.lo, b.e.hi}},
                               {"inc_deg", {b.inc.lo / kDeg, b.inc.hi / kDeg}},
                               {"raan_deg", {b.raan.lo / kDeg, b.raan.hi / kDeg}},
                               {"argp_deg", {b.argp.lo / kDeg, b.argp.hi / kDeg}}};
    }
    save_json(j, path);
}

IodResult read_iod_result_json(const std::string& path) {
    const json j = load_json(path);
    IodResult r;
    try {
        r.algorithm = j.at("algorithm").get<int>();
        r.t_ref = j.at("t_ref").get<double>();
        r.site = site_from_json(j.at("site"));
        r.earth = earth_from_json(j.at("earth"));
        r.config = config_from_json(j.at("config"), IodConfig{});
        r.var_names = j.at("var_names").get<std::vector<std::string>>();
        for (const auto& v : j.at("box"))
            r.box.push_back({v.at("center").get<double>(), v.at("half_width").get<double>()});
        r.threshold = j.at("threshold").get<double>();
        r.leaves_total = j.value("leaves_total", 0);
        r.pruned = j.value("pruned", 0);
        r.failed = j.value("failed", 0);
        r.diagnostics = j.value("diagnostics", std::string{});
        for (const auto& dj : j.at("domains")) {
            IodDomain d;
            d.id = dj.at("id").get<int>();
            d.center = dj.at("center").get<std::vector<double>>();
            d.half_width = dj.at("half_width").get<std::vector<double>>();
            const std::string st = dj.at("status").get<std::string>();
            d.status = st == "max_depth" ? DomainStatus::MaxDepth : DomainStatus::Converged;
            d.error_estimate = dj.at("error_estimate").get<double>();
            d.j_min = dj.at("j_min").get<double>();
            d.argmin = dj.at("argmin").get<std::vector<double>>();
            d.meas_argmin = dj.at("meas_argmin").get<std::vector<double>>();
            const auto& sj = dj.at("state");
            d.state.r = {sj.at("r")[0].get<double>(), sj.at("r")[1].get<double>(),
                         sj.at("r")[2].get<double>()};
            d.state.v = {sj.at("v")[0].get<double>(), sj.at("v")[1].get<double>(),
                         sj.at("v")[2].get<double>()};
            d.state.epoch = sj.at("epoch").get<double>();
            const auto& ej = dj.at("elements");
            d.elements = {ej.at("a_km").get<double>(),        ej.at("e").get<double>(),
                          ej.at("inc_deg").get<double>() * kDeg,
                          ej.at("raan_deg").get<double>() * kDeg,
                          ej.at("argp_deg").get<double>() * kDeg,
                          ej.at("ta_deg").get<double>() * kDeg};
            d.state_maps = system_from_json(dj.at("state_maps"));
            d.residual_maps = system_from_json(dj.at("residual_maps"));
            r.domains.push_back(std::move(d));
        }
    } catch (const json::exception& err) {
        throw std::runtime_error(path + ": " + err.what());
    }
    return r;
}

void write_bounds_csv(const ElementBounds& b, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "element,lo,hi\n";
    char line[128];
    auto row = [&](const char* name, double lo, double hi) {
        std::snprintf(line, sizeof line, "%s,%.9f,%.9f\n", name, lo, hi);
        out << line;
    };
    row("a_km", b.a.lo, b.a.hi);
    row("e", b.e.lo, b.e.hi);
    row("inc_deg", b.inc.lo / kDeg, b.inc.hi / kDeg);
    row("raan_deg", b.raan.lo / kDeg, b.raan.hi / kDeg);
    row("argp_deg", b.argp.lo / kDeg, b.argp.hi / kDeg);
}

void write_manifold_json(const IodResult& result, const std::string& path) {
    json domains = json::array();
    for (const auto& d : result.domains)
        domains.push_back(json{{"id", d.id},
                               {"center", d.center},
                               {"half_width", d.half_width},
                               {"status", to_string(d.status)},
                               {"error_estimate", d.error_estimate},
                               {"j_min", d.j_min}});
    save_json(json{{"algorithm", result.algorithm},
                   {"threshold", result.threshold},
                   {"leaves_total", result.leaves_total},
                   {"pruned", result.pruned},
                   {"failed", result.failed},
                   {"domains", std::move(domains)}},
              path);
}

void write_cloud_csv(const MeasurementSet& mset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "domain_id,t,rho_km,rhodot_kms\n";
    char line[128];
    for (const auto& p : mset.cloud) {
        std::snprintf(line, sizeof line, "%d,%.6f,%.9f,%.9f\n", p.domain_id, mset.epoch, p.rho,
                      p.rhodot);
        out << line;
    }
}

}  // namespace ods
