#include "ods/domainsplit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ods {

const char* to_string(DomainStatus s) {
    switch (s) {
        case DomainStatus::Active: return "active";
        case DomainStatus::Converged: return "converged";
        case DomainStatus::MaxDepth: return "max_depth";
        case DomainStatus::Pruned: return "pruned";
        case DomainStatus::Failed: return "failed";
    }
    return "?";
}

int SubDomain::depth() const {
    int d = 0;
    for (int x : depth_per_var) d += x;
    return d;
}

double SubDomain::volume() const {
    double v = 1.0;
    for (double h : half_width) v *= h;
    return v;
}

int DomainManifold::count(DomainStatus s) const {
    int n = 0;
    for (const auto& d : subdomains)
        if (d.status == s) ++n;
    return n;
}

std::pair<std::vector<double>, double> truncation_error_estimate(const MapSystem& maps,
                                                                 int error_outputs) {
    if (maps.size() == 0) throw std::invalid_argument("error estimate on empty system");
    const int k = maps.order();
    if (k < 2) throw std::invalid_argument("error estimate requires order >= 2");
    const int v = maps.n_vars();
    const int m = (error_outputs < 0) ? maps.size() : std::min(error_outputs, maps.size());

    std::vector<double> per_var(v, 0.0);
    double total = 0.0;
    const auto* tab = detail::table(v, k);

    for (int mi = 0; mi < m; ++mi) {
        const auto s = maps[mi].degree_norms();
        if (s[k] == 0.0) continue;

        // Least-squares fit of ln(S_d) over the populated degrees, then
        // extrapolate one degree past the truncation order.
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int n = 0;
        for (int d = 1; d <= k; ++d) {
            if (s[d] <= 0.0) continue;
            const double x = d, y = std::log(s[d]);
            sx += x; sy += y; sxx += x * x; sxy += x * y;
            ++n;
        }
        double est;
        if (n >= 2) {
            const double denom = n * sxx - sx * sx;
            const double b = (n * sxy - sx * sy) / denom;
            const double a = (sy - b * sx) / n;
            est = std::exp(a + b * (k + 1));
        } else {
            est = s[k];
        }

        // Attribute the estimate to variables by their share of the
        // top-degree coefficient mass.
        std::vector<double> w(v, 0.0);
        double wsum = 0.0;
        for (int idx = tab->degree_start[k]; idx < tab->degree_start[k + 1]; ++idx) {
            const double c = std::abs(maps[mi].coefficients()[idx]);
            if (c == 0.0) continue;
            for (int j = 0; j < v; ++j) {
                const double share = c * tab->exps[idx][j] / static_cast<double>(k);
                w[j] += share;
                wsum += share;
            }
        }
        total = std::max(total, est);
        if (wsum > 0.0)
            for (int j = 0; j < v; ++j)
                per_var[j] = std::max(per_var[j], est * w[j] / wsum);
    }
    return {per_var, total};
}

std::pair<SubDomain, SubDomain> split(const SubDomain& parent, int var) {
    const int v = static_cast<int>(parent.center.size());
    if (var < 0 || var >= v) throw std::invalid_argument("split: variable out of range");

    auto make_child = [&](double sign) {
        SubDomain c;
        c.parent = parent.id;
        c.center = parent.center;
        c.half_width = parent.half_width;
        c.center[var] += sign * 0.5 * parent.half_width[var];
        c.half_width[var] *= 0.5;
        c.depth_per_var = parent.depth_per_var;
        c.depth_per_var[var] += 1;
        c.status = DomainStatus::Active;
        return c;
    };
    SubDomain left = make_child(-1.0);
    SubDomain right = make_child(+1.0);

    if (parent.maps.size() > 0) {
        const int k = parent.maps.order();
        auto reparam = [&](double offset) {
            std::vector<TaylorMap> inner;
            inner.reserve(v);
            for (int i = 0; i < v; ++i)
                inner.push_back(i == var ? TaylorMap::variable(i, offset, 0.5, v, k)
                                         : TaylorMap::variable(i, 0.0, 1.0, v, k));
            return MapSystem(std::move(inner));
        };
        left.maps = substitute(parent.maps, reparam(-0.5));
        right.maps = substitute(parent.maps, reparam(+0.5));
    }
    return {std::move(left), std::move(right)};
}

namespace {

struct Runner {
    const AdsPipeline& pipeline;
    const std::vector<VarSpec>& box;
    const AdsSettings& settings;
    const PruneHook& prune;

    void evaluate(SubDomain& sub) const {
        const int v = static_cast<int>(box.size());
        std::vector<TaylorMap> inputs;
        inputs.reserve(v);
        for (int i = 0; i < v; ++i) {
            const double c = box[i].center + box[i].half_width * sub.center[i];
            const double h = box[i].half_width * sub.half_width[i];
            inputs.push_back(TaylorMap::variable(i, c, h, v, settings.order));
        }
        try {
            sub.maps = pipeline(MapSystem(std::move(inputs)));
            auto [per_var, total] = truncation_error_estimate(sub.maps, settings.error_outputs);
            sub.error_per_var = std::move(per_var);
            sub.error_estimate = total;
            if (prune && prune(sub)) {
                sub.status = DomainStatus::Pruned;
                sub.maps = MapSystem();  // pruned payloads are dropped
            } else if (total <= settings.tol) {
                sub.status = DomainStatus::Converged;
            } else {
                sub.status = DomainStatus::Active;
            }
        } catch (const std::exception& e) {
            sub.status = DomainStatus::Failed;
            sub.fail_reason = e.what();
            sub.maps = MapSystem();
        }
    }
};

SubDomain make_root(int n_vars) {
    SubDomain root;
    root.id = 0;
    root.center.assign(n_vars, 0.0);
    root.half_width.assign(n_vars, 1.0);
    root.depth_per_var.assign(n_vars, 0);
    return root;
}

int pick_split_var(const SubDomain& sub) {
    int var = 0;
    double best = -1.0;
    for (std::size_t j = 0; j < sub.error_per_var.size(); ++j) {
        if (sub.error_per_var[j] > best) {
            best = sub.error_per_var[j];
            var = static_cast<int>(j);
        }
    }
    return var;
}

DomainManifold finalize(std::vector<SubDomain> leaves, const AdsSettings& settings, int n_vars,
                        int splits) {
    DomainManifold m;
    m.tol = settings.tol;
    m.max_splits = settings.max_splits;
    m.n_vars = n_vars;
    std::sort(leaves.begin(), leaves.end(),
              [](const SubDomain& a, const SubDomain& b) { return a.id < b.id; });
    m.subdomains = std::move(leaves);
    m.stats.splits = splits;
    for (const auto& d : m.subdomains) {
        switch (d.status) {
            case DomainStatus::Pruned: ++m.stats.prunes; break;
            case DomainStatus::Converged: ++m.stats.converged; break;
            case DomainStatus::Failed: ++m.stats.failed; break;
            case DomainStatus::MaxDepth: ++m.stats.capped; break;
            default: break;
        }
    }
    return m;
}

void check_settings(const std::vector<VarSpec>& box, const AdsSettings& settings) {
    if (box.empty()) throw std::invalid_argument("ads_run: empty variable list");
    if (settings.tol <= 0.0) throw std::invalid_argument("ads_run: tol must be positive");
    if (settings.max_domains < 1) throw std::invalid_argument("ads_run: max_domains must be >= 1");
}

}  // namespace

DomainManifold ads_run(const AdsPipeline& pipeline, const std::vector<VarSpec>& initial_box,
                       const AdsSettings& settings, const PruneHook& prune_hook) {
    check_settings(initial_box, settings);
    const int v = static_cast<int>(initial_box.size());
    const Runner runner{pipeline, initial_box, settings, prune_hook};

    std::vector<SubDomain> done;   // classified, no further work
    std::vector<SubDomain> frontier;
    frontier.push_back(make_root(v));
    runner.evaluate(frontier[0]);

    long leaf_count = 1;
    int next_id = 1;
    int splits = 0;

    while (true) {
        // Split decisions in id order (the frontier is already id-sorted).
        std::vector<SubDomain> children;
        for (auto& sub : frontier) {
            if (sub.status != DomainStatus::Active) {
                done.push_back(std::move(sub));
                continue;
            }
            if (sub.depth() >= settings.max_splits || leaf_count + 1 > settings.max_domains) {
                sub.status = DomainStatus::MaxDepth;
                done.push_back(std::move(sub));
                continue;
            }
            sub.maps = MapSystem();  // children are re-expanded by the pipeline
            auto [left, right] = split(sub, pick_split_var(sub));
            left.id = next_id++;
            right.id = next_id++;
            children.push_back(std::move(left));
            children.push_back(std::move(right));
            ++leaf_count;
            ++splits;
        }
        if (children.empty()) break;

#ifdef _OPENMP
        if (settings.parallel) {
#pragma omp parallel for schedule(dynamic)
            for (std::size_t i = 0; i < children.size(); ++i) runner.evaluate(children[i]);
        } else
#endif
        {
            for (auto& c : children) runner.evaluate(c);
        }
        frontier = std::move(children);
    }
    return finalize(std::move(done), settings, v, splits);
}

DomainManifold ads_run_serial(const AdsPipeline& pipeline, const std::vector<VarSpec>& initial_box,
                              const AdsSettings& settings, const PruneHook& prune_hook) {
    check_settings(initial_box, settings);
    const int v = static_cast<int>(initial_box.size());
    const Runner runner{pipeline, initial_box, settings, prune_hook};

    // FIFO worklist in creation (id) order; children appended at the back.
    std::vector<SubDomain> all;
    all.push_back(make_root(v));
    long leaf_count = 1;
    int next_id = 1;
    int splits = 0;
    std::vector<SubDomain> leaves;

    for (std::size_t i = 0; i < all.size(); ++i) {
        SubDomain sub = std::move(all[i]);
        runner.evaluate(sub);
        if (sub.status == DomainStatus::Active) {
            if (sub.depth() >= settings.max_splits || leaf_count + 1 > settings.max_domains) {
                sub.status = DomainStatus::MaxDepth;
            } else {
                sub.maps = MapSystem();  // children are re-expanded by the pipeline
                auto [left, right] = split(sub, pick_split_var(sub));
                left.id = next_id++;
                right.id = next_id++;
                all.push_back(std::move(left));
                all.push_back(std::move(right));
                ++leaf_count;
                ++splits;
                continue;  // parent replaced by its children
            }
        }
        leaves.push_back(std::move(sub));
    }
    return finalize(std::move(leaves), settings, v, splits);
}

}  // namespace ods
