#pragma once

// Automatic domain splitting: evaluate a vector DA pipeline over an initial
// box, bisect subdomains whose estimated truncation error exceeds tolerance,
// and collect the manifold of re-expanded maps.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ods/dapoly.hpp"

namespace ods {

enum class DomainStatus { Active, Converged, MaxDepth, Pruned, Failed };

const char* to_string(DomainStatus s);

struct SubDomain {
    int id = 0;
    int parent = -1;
    // Box in the coordinates of the original unit box.
    std::vector<double> center;
    std::vector<double> half_width;
    std::vector<int> depth_per_var;
    MapSystem maps;
    DomainStatus status = DomainStatus::Active;
    double error_estimate = 0.0;
    std::vector<double> error_per_var;
    std::string fail_reason;

    int depth() const;
    double volume() const;  // fraction of the unit box
};

struct AdsStats {
    int splits = 0;
    int prunes = 0;
    int converged = 0;
    int failed = 0;
    int capped = 0;  // leaves stopped by max_splits or max_domains
};

struct DomainManifold {
    std::vector<SubDomain> subdomains;  // leaves only, ordered by id
    double tol = 0.0;
    int max_splits = 0;
    int n_vars = 0;
    AdsStats stats;

    int count(DomainStatus s) const;
};

struct AdsSettings {
    double tol = 1e-5;
    int max_splits = 15;
    long max_domains = 32768;
    int order = 3;
    // Only the first error_outputs pipeline outputs drive the error
    // estimate and split direction; -1 means all of them.
    int error_outputs = -1;
    bool parallel = true;
};

// The pipeline receives the physical input maps re-expanded about a
// subdomain center and must be a pure function of them.
using AdsPipeline = std::function<MapSystem(const MapSystem&)>;
// Return true to prune the subdomain (it will not be split further).
using PruneHook = std::function<bool(const SubDomain&)>;

// Per-variable truncation error estimate from the decay of the coefficient
// norms per total degree, extrapolated one degree past the truncation order.
std::pair<std::vector<double>, double> truncation_error_estimate(const MapSystem& maps,
                                                                 int error_outputs = -1);

// Bisect the parent box along one variable. Children maps are the parent
// maps composed with the affine reparameterization of that variable; this
// is exact for the polynomial but does not re-evaluate the pipeline.
std::pair<SubDomain, SubDomain> split(const SubDomain& parent, int var);

// Physical definition of one input variable: value = center + half_width * delta.
struct VarSpec {
    double center = 0.0;
    double half_width = 0.0;
};

DomainManifold ads_run(const AdsPipeline& pipeline, const std::vector<VarSpec>& initial_box,
                       const AdsSettings& settings, const PruneHook& prune_hook = {});

// Straightforward single-threaded worklist, kept as the reference the
// OpenMP path is checked against.
DomainManifold ads_run_serial(const AdsPipeline& pipeline, const std::vector<VarSpec>& initial_box,
                              const AdsSettings& settings, const PruneHook& prune_hook = {});

}  // namespace ods
