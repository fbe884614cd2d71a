// Orbit-set IOD command line: simulate | iod | associate | export.
// Data goes to files, logs to stderr. Exit codes: 0 success, 2 empty
// result, 1 validation or I/O error.

#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ods/io.hpp"
#include "ods/orbitset.hpp"

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// The co-located array used for all synthetic scenarios.
const ods::RadarSite kSite{"cr-radar", 9.7489 * kDeg, -83.7534 * kDeg, 1.0};

ods::TruthOrbit builtin_truth(const std::string& name) {
    if (name == "builtin:10011")
        return {{7921.54, 0.06974, 65.9450 * kDeg, 147.613 * kDeg, 338.098 * kDeg,
                 186.836 * kDeg}, 0.0};
    if (name == "builtin:39027")
        return {{6849.12, 0.00553, 97.6549 * kDeg, 98.4364 * kDeg, 118.156 * kDeg,
                 50.813 * kDeg}, 0.0};
    return ods::read_truth_json(name);
}

std::string out_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

int cmd_simulate(const std::string& truth_arg, const std::string& noise_path,
                 std::uint64_t seed, const std::string& out_dir, bool two_body) {
    ods::EarthModel em;
    if (two_body) em.j2 = 0.0;
    const ods::TruthOrbit truth = builtin_truth(truth_arg);
    if (truth.kep.a < em.re) throw std::runtime_error("semi-major axis below Earth radius");

    ods::NoiseSpec noise;
    if (!noise_path.empty()) noise = ods::read_noise_json(noise_path, noise);
    noise.seed = seed;

    ods::SimulateOptions opt;
    opt.angle_channels = ods::AngleChannels::Both;
    auto [t1, t2] = ods::simulate_pass(truth, kSite, truth.epoch, truth.epoch + 86400.0, opt,
                                       noise, em);

    // A follow-up tracklet roughly half a day on, for association runs.
    const auto passes = ods::find_passes(truth, kSite, t1.epoch + 3600.0,
                                         t1.epoch + 16.0 * 3600.0, em, opt.el_mask);
    if (passes.empty()) throw std::runtime_error("no follow-up pass in the search window");
    const ods::Tracklet t3 = ods::simulate_tracklet(truth, kSite, passes.back().t_culmination,
                                                    opt, noise, em, false, 7);

    std::filesystem::create_directories(out_dir);
    ods::write_tracklet_json(t1, out_path(out_dir, "tracklet1.json"));
    ods::write_tracklet_json(t2, out_path(out_dir, "tracklet2.json"));
    ods::write_tracklet_json(t3, out_path(out_dir, "tracklet3.json"));
    ods::write_truth_json(truth, out_path(out_dir, "truth.json"));
    std::fprintf(stderr, "simulate: wrote 3 tracklets to %s (pass separation %.1f s)\n",
                 out_dir.c_str(), t2.epoch - t1.epoch);
    return 0;
}

int cmd_iod(int alg, const std::string& tracklets_arg, const std::string& config_path,
            const std::string& out_dir, bool two_body, int workers) {
    ods::EarthModel em;
    if (two_body) em.j2 = 0.0;
    ods::IodConfig cfg;
    if (!config_path.empty()) cfg = ods::read_iod_config(config_path, cfg);
    if (workers == 1) cfg.parallel = false;

    std::vector<std::string> paths;
    for (std::size_t pos = 0; pos < tracklets_arg.size();) {
        const auto comma = tracklets_arg.find(',', pos);
        paths.push_back(tracklets_arg.substr(pos, comma - pos));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (paths.empty() || paths.size() > 2)
        throw std::runtime_error("--tracklets expects one or two files");

    const ods::Tracklet t1 = ods::read_tracklet_json(paths[0]);
    ods::Tracklet t2;
    if (paths.size() == 2) t2 = ods::read_tracklet_json(paths[1]);
    const ods::ObservationSet obs = ods::build_observations(
        t1, paths.size() == 2 ? &t2 : nullptr, kSite, em, cfg.alpha_angles, cfg.alpha_rates);

    ods::IodResult result;
    switch (alg) {
        case 1: result = ods::iod_alg1(obs, cfg); break;
        case 2: result = ods::iod_alg2(obs, cfg); break;
        case 3: result = ods::iod_alg3(obs, cfg); break;
        default: throw std::runtime_error("--alg must be 1, 2, or 3");
    }

    std::vector<std::string> digests;
    for (const auto& p : paths) digests.push_back(ods::file_digest(p));

    std::filesystem::create_directories(out_dir);
    ods::write_iod_result_json(result, out_path(out_dir, "result.json"), digests);
    ods::write_manifold_json(result, out_path(out_dir, "manifold.json"));
    if (!result.empty())
        ods::write_bounds_csv(ods::element_bounds(ods::make_orbit_set(result)),
                              out_path(out_dir, "bounds.csv"));
    std::fprintf(stderr, "iod: alg %d retained %zu of %d leaves (%d pruned, %d failed)\n", alg,
                 result.domains.size(), result.leaves_total, result.pruned, result.failed);
    if (result.empty()) {
        std::fprintf(stderr, "iod: %s\n", result.diagnostics.c_str());
        return 2;
    }
    return 0;
}

int cmd_associate(const std::string& result_path, const std::string& tracklet_path,
                  const std::string& dynamics, const std::string& out_dir) {
    const ods::IodResult result = ods::read_iod_result_json(result_path);
    if (result.empty()) throw std::runtime_error("result has no retained domains");
    const ods::Tracklet trk = ods::read_tracklet_json(tracklet_path);
    const ods::Dynamics dyn =
        dynamics == "j2" ? ods::Dynamics::J2 : ods::Dynamics::Kepler;

    const double t_meet = trk.epoch + trk.mid_offset();
    const ods::OrbitSet set =
        propagate_set(ods::make_orbit_set(result), t_meet, dyn);
    const ods::MeasurementSet ms = project_set(set, result.site, t_meet, 200, 11);
    const auto verdict = ods::associate(ms, trk);

    std::filesystem::create_directories(out_dir);
    ods::write_cloud_csv(ms, out_path(out_dir, "projection.csv"));
    std::ofstream out(out_path(out_dir, "verdict.json"));
    out << "{\n  \"compatible\": " << (verdict.compatible ? "true" : "false")
        << ",\n  \"score\": " << verdict.score << ",\n  \"domain_id\": " << verdict.domain_id
        << ",\n  \"t_best\": " << verdict.t_best << "\n}\n";
    std::fprintf(stderr, "associate: %s (score %.3f, threshold 9.21)\n",
                 verdict.compatible ? "compatible" : "incompatible", verdict.score);
    return 0;
}

int cmd_export(const std::string& result_path, const std::string& what, int n,
               std::uint64_t seed, const std::string& out_file) {
    const ods::IodResult result = ods::read_iod_result_json(result_path);
    if (what == "manifold") {
        ods::write_manifold_json(result, out_file);
    } else if (what == "bounds") {
        if (result.empty()) throw std::runtime_error("result has no retained domains");
        ods::write_bounds_csv(ods::element_bounds(ods::make_orbit_set(result)), out_file);
    } else if (what == "heatmap") {
        if (result.empty()) throw std::runtime_error("result has no retained domains");
        const ods::OrbitSet set = ods::make_orbit_set(result);
        ods::MeasurementSet ms = project_set(set, result.site, result.t_ref);
        for (const auto& s : ods::sample_set(set, n, seed)) {
            for (const auto& d : ms.domains) {
                if (d.id != s.domain_id) continue;
                ods::MeasurementSet::CloudPoint p;
                p.domain_id = s.domain_id;
                p.rho = d.maps[0].eval(s.local);
                p.rhodot = d.maps[1].eval(s.local);
                ms.cloud.push_back(p);
            }
        }
        ods::write_cloud_csv(ms, out_file);
    } else {
        throw std::runtime_error("--what must be heatmap, bounds, or manifold");
    }
    std::fprintf(stderr, "export: wrote %s\n", out_file.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"orbit-set IOD toolkit"};
    app.require_subcommand(1);

    std::string truth = "builtin:39027", noise_file, out_dir = ".";
    std::uint64_t seed = 1;
    bool two_body = false;
    int workers = 0;

    auto* sim = app.add_subcommand("simulate", "generate synthetic tracklets");
    sim->add_option("--truth", truth, "truth file or builtin:{10011,39027}");
    sim->add_option("--noise", noise_file, "noise spec JSON");
    sim->add_option("--seed", seed, "noise seed");
    sim->add_option("--out", out_dir, "output directory");
    sim->add_flag("--two-body", two_body, "disable J2 in the simulation dynamics");

    int alg = 1;
    std::string tracklets, config_file;
    auto* iod = app.add_subcommand("iod", "run an IOD algorithm");
    iod->add_option("--alg", alg, "algorithm 1, 2, or 3")->required();
    iod->add_option("--tracklets", tracklets, "T1.json[,T2.json]")->required();
    iod->add_option("--config", config_file, "IodConfig JSON");
    iod->add_option("--out", out_dir, "output directory");
    iod->add_option("--workers", workers, "worker count (1 forces serial)");
    iod->add_flag("--two-body", two_body, "disable J2 in the observation model");

    std::string result_file, tracklet_file, dynamics = "j2";
    auto* assoc = app.add_subcommand("associate", "test a later tracklet against a result");
    assoc->add_option("--result", result_file, "IOD result JSON")->required();
    assoc->add_option("--tracklet", tracklet_file, "tracklet JSON")->required();
    assoc->add_option("--dynamics", dynamics, "kepler or j2");
    assoc->add_option("--out", out_dir, "output directory");

    std::string what = "bounds", out_file = "export.csv";
    int n = 1000;
    auto* exp = app.add_subcommand("export", "write plot-ready files from a result");
    exp->add_option("--result", result_file, "IOD result JSON")->required();
    exp->add_option("--what", what, "heatmap, bounds, or manifold");
    exp->add_option("--n", n, "heatmap sample count");
    exp->add_option("--seed", seed, "heatmap sample seed");
    exp->add_option("--out", out_file, "output file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(truth, noise_file, seed, out_dir, two_body);
        if (iod->parsed()) return cmd_iod(alg, tracklets, config_file, out_dir, two_body, workers);
        if (assoc->parsed()) return cmd_associate(result_file, tracklet_file, dynamics, out_dir);
        if (exp->parsed()) return cmd_export(result_file, what, n, seed, out_file);
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 1;
    }
    return 1;
}
