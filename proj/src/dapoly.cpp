#include "ods/dapoly.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace ods {
namespace detail {

namespace {

void enumerate_degree(int n_vars, int degree, int pos, std::array<std::uint8_t, kMaxVars>& work,
                      std::vector<std::array<std::uint8_t, kMaxVars>>& out) {
    if (pos == n_vars - 1) {
        work[pos] = static_cast<std::uint8_t>(degree);
        out.push_back(work);
        return;
    }
    for (int e = degree; e >= 0; --e) {
        work[pos] = static_cast<std::uint8_t>(e);
        enumerate_degree(n_vars, degree - e, pos + 1, work, out);
    }
}

// Dense product tables only for moderate monomial counts.
constexpr int kMaxDenseProduct = 2500;

}  // namespace

std::uint32_t MonomialTable::key(const std::array<std::uint8_t, kMaxVars>& e) {
    std::uint32_t k = 0;
    for (int i = 0; i < kMaxVars; ++i) k |= static_cast<std::uint32_t>(e[i] & 0xF) << (4 * i);
    return k;
}

int MonomialTable::degree_of(int idx) const {
    int d = 0;
    for (int i = 0; i < n_vars; ++i) d += exps[idx][i];
    return d;
}

int MonomialTable::index_of(const std::array<std::uint8_t, kMaxVars>& e) const {
    const std::uint32_t k = key(e);
    auto it = std::lower_bound(sorted_keys_.begin(), sorted_keys_.end(), k,
                               [](const auto& p, std::uint32_t v) { return p.first < v; });
    if (it == sorted_keys_.end() || it->first != k) return -1;
    return it->second;
}

int MonomialTable::product(int i, int j) const {
    if (!prod.empty()) return prod[static_cast<std::size_t>(i) * exps.size() + j];
    std::array<std::uint8_t, kMaxVars> e{};
    int total = 0;
    for (int m = 0; m < n_vars; ++m) {
        e[m] = static_cast<std::uint8_t>(exps[i][m] + exps[j][m]);
        total += e[m];
    }
    if (total > order) return -1;
    return index_of(e);
}

const MonomialTable* table(int n_vars, int order) {
    if (n_vars < 1 || n_vars > kMaxVars) throw std::invalid_argument("n_vars out of range");
    if (order < 1 || order > kMaxOrder) throw std::invalid_argument("order out of range");

    static std::mutex mtx;
    static std::map<std::pair<int, int>, std::unique_ptr<MonomialTable>> registry;
    std::lock_guard<std::mutex> lock(mtx);
    auto& slot = registry[{n_vars, order}];
    if (slot) return slot.get();

    auto tab = std::make_unique<MonomialTable>();
    tab->n_vars = n_vars;
    tab->order = order;
    std::array<std::uint8_t, kMaxVars> work{};
    for (int d = 0; d <= order; ++d) {
        tab->degree_start.push_back(tab->size());
        enumerate_degree(n_vars, d, 0, work, tab->exps);
    }
    tab->degree_start.push_back(tab->size());

    tab->sorted_keys_.reserve(tab->exps.size());
    for (int i = 0; i < tab->size(); ++i)
        tab->sorted_keys_.emplace_back(MonomialTable::key(tab->exps[i]), i);
    std::sort(tab->sorted_keys_.begin(), tab->sorted_keys_.end());

    const int n = tab->size();
    if (n <= kMaxDenseProduct) {
        tab->prod.assign(static_cast<std::size_t>(n) * n, -1);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                std::array<std::uint8_t, kMaxVars> e{};
                int total = 0;
                for (int m = 0; m < n_vars; ++m) {
                    e[m] = static_cast<std::uint8_t>(tab->exps[i][m] + tab->exps[j][m]);
                    total += e[m];
                }
                if (total <= order) tab->prod[static_cast<std::size_t>(i) * n + j] = tab->index_of(e);
            }
        }
    }
    slot = std::move(tab);
    return slot.get();
}

}  // namespace detail

TaylorMap TaylorMap::constant(double value, int n_vars, int order, int domain_id) {
    TaylorMap m(detail::table(n_vars, order), domain_id);
    m.c_[0] = value;
    return m;
}

TaylorMap TaylorMap::variable(int index, double center, double half_width,
                              int n_vars, int order, int domain_id) {
    if (index < 0 || index >= n_vars) throw std::invalid_argument("variable index out of range");
    if (half_width < 0.0) throw std::invalid_argument("negative half width");
    TaylorMap m(detail::table(n_vars, order), domain_id);
    m.c_[0] = center;
    // Linear monomials immediately follow the constant, in graded-lex order:
    // variable 0 comes first.
    std::array<std::uint8_t, kMaxVars> e{};
    e[index] = 1;
    m.c_[m.tab_->index_of(e)] = half_width;
    return m;
}

TaylorMap TaylorMap::from_coefficients(std::span<const double> coeffs, int n_vars, int order,
                                       int domain_id) {
    TaylorMap m(detail::table(n_vars, order), domain_id);
    if (coeffs.size() != m.c_.size())
        throw std::invalid_argument("from_coefficients: wrong coefficient count");
    std::copy(coeffs.begin(), coeffs.end(), m.c_.begin());
    return m;
}

void TaylorMap::check_compatible(const TaylorMap& other) const {
    if (!valid() || !other.valid()) throw std::invalid_argument("operation on empty TaylorMap");
    if (tab_ != other.tab_ || domain_id_ != other.domain_id_)
        throw std::invalid_argument("incompatible TaylorMaps (n_vars/order/domain mismatch)");
}

double TaylorMap::coefficient(std::span<const int> exponents) const {
    if (static_cast<int>(exponents.size()) != n_vars())
        throw std::invalid_argument("exponent tuple length mismatch");
    std::array<std::uint8_t, kMaxVars> e{};
    int total = 0;
    for (int i = 0; i < n_vars(); ++i) {
        if (exponents[i] < 0) throw std::invalid_argument("negative exponent");
        e[i] = static_cast<std::uint8_t>(exponents[i]);
        total += exponents[i];
    }
    if (total > order()) return 0.0;
    return c_[tab_->index_of(e)];
}

double TaylorMap::eval(std::span<const double> delta, bool* extrapolated) const {
    if (static_cast<int>(delta.size()) != n_vars())
        throw std::invalid_argument("delta length mismatch");
    if (extrapolated) {
        *extrapolated = false;
        for (double d : delta)
            if (std::abs(d) > 1.0 + 1e-12) *extrapolated = true;
    }
    // Per-variable power cache.
    double pw[kMaxVars][kMaxOrder + 1];
    for (int i = 0; i < n_vars(); ++i) {
        pw[i][0] = 1.0;
        for (int e = 1; e <= order(); ++e) pw[i][e] = pw[i][e - 1] * delta[i];
    }
    double sum = 0.0;
    for (int idx = 0; idx < tab_->size(); ++idx) {
        const double c = c_[idx];
        if (c == 0.0) continue;
        double term = c;
        const auto& e = tab_->exps[idx];
        for (int i = 0; i < n_vars(); ++i)
            if (e[i]) term *= pw[i][e[i]];
        sum += term;
    }
    return sum;
}

TaylorMap TaylorMap::derive(int var) const {
    if (!valid()) throw std::invalid_argument("derive on empty map");
    if (var < 0 || var >= n_vars()) throw std::invalid_argument("derive: variable out of range");
    TaylorMap r(tab_, domain_id_);
    for (int idx = 0; idx < tab_->size(); ++idx) {
        const double c = c_[idx];
        if (c == 0.0) continue;
        auto e = tab_->exps[idx];
        if (e[var] == 0) continue;
        const int ev = e[var];
        e[var] = static_cast<std::uint8_t>(ev - 1);
        r.c_[tab_->index_of(e)] += c * ev;
    }
    return r;
}

TaylorMap TaylorMap::integrate(int var) const {
    if (!valid()) throw std::invalid_argument("integrate on empty map");
    if (var < 0 || var >= n_vars()) throw std::invalid_argument("integrate: variable out of range");
    TaylorMap r(tab_, domain_id_);
    for (int idx = 0; idx < tab_->size(); ++idx) {
        const double c = c_[idx];
        if (c == 0.0) continue;
        auto e = tab_->exps[idx];
        if (tab_->degree_of(idx) + 1 > order()) continue;  // truncated
        const int ev = e[var];
        e[var] = static_cast<std::uint8_t>(ev + 1);
        r.c_[tab_->index_of(e)] += c / (ev + 1);
    }
    return r;
}

Interval TaylorMap::bound(BoundMethod method) const {
    if (!valid()) throw std::invalid_argument("bound on empty map");
    const double c0 = c_[0];
    if (method == BoundMethod::Triangle) {
        double s = 0.0;
        for (int idx = 1; idx < tab_->size(); ++idx) s += std::abs(c_[idx]);
        return {c0 - s, c0 + s};
    }
    // Even-aware: monomials with all-even exponents take values in [0, 1].
    double lo = c0, hi = c0;
    for (int idx = 1; idx < tab_->size(); ++idx) {
        const double c = c_[idx];
        if (c == 0.0) continue;
        bool all_even = true;
        for (int i = 0; i < n_vars(); ++i)
            if (tab_->exps[idx][i] % 2) { all_even = false; break; }
        if (all_even) {
            lo += std::min(0.0, c);
            hi += std::max(0.0, c);
        } else {
            lo -= std::abs(c);
            hi += std::abs(c);
        }
    }
    return {lo, hi};
}

TaylorMap TaylorMap::nilpotent() const {
    TaylorMap r = *this;
    r.c_[0] = 0.0;
    return r;
}

std::vector<double> TaylorMap::degree_norms() const {
    std::vector<double> s(order() + 1, 0.0);
    for (int idx = 0; idx < tab_->size(); ++idx)
        s[tab_->degree_of(idx)] += std::abs(c_[idx]);
    return s;
}

std::string TaylorMap::debug_string() const {
    std::ostringstream os;
    os << "DA v=" << n_vars() << " k=" << order() << "\n";
    os.precision(16);
    os << std::scientific;
    for (int idx = 0; idx < tab_->size(); ++idx) {
        if (c_[idx] == 0.0) continue;
        os << c_[idx];
        for (int i = 0; i < n_vars(); ++i) os << " " << static_cast<int>(tab_->exps[idx][i]);
        os << "\n";
    }
    return os.str();
}

TaylorMap operator+(const TaylorMap& a, const TaylorMap& b) {
    a.check_compatible(b);
    TaylorMap r = a;
    for (std::size_t i = 0; i < r.c_.size(); ++i) r.c_[i] += b.c_[i];
    return r;
}

TaylorMap operator-(const TaylorMap& a, const TaylorMap& b) {
    a.check_compatible(b);
    TaylorMap r = a;
    for (std::size_t i = 0; i < r.c_.size(); ++i) r.c_[i] -= b.c_[i];
    return r;
}

TaylorMap operator*(const TaylorMap& a, const TaylorMap& b) {
    a.check_compatible(b);
    TaylorMap r(a.tab_, a.domain_id_);
    const int n = a.tab_->size();
    const auto* tab = a.tab_;
    if (!tab->prod.empty()) {
        const std::int32_t* prod = tab->prod.data();
        for (int i = 0; i < n; ++i) {
            const double ai = a.c_[i];
            if (ai == 0.0) continue;
            const std::int32_t* row = prod + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                const double bj = b.c_[j];
                if (bj == 0.0) continue;
                const std::int32_t p = row[j];
                if (p >= 0) r.c_[p] += ai * bj;
            }
        }
    } else {
        for (int i = 0; i < n; ++i) {
            const double ai = a.c_[i];
            if (ai == 0.0) continue;
            for (int j = 0; j < n; ++j) {
                const double bj = b.c_[j];
                if (bj == 0.0) continue;
                const int p = tab->product(i, j);
                if (p >= 0) r.c_[p] += ai * bj;
            }
        }
    }
    return r;
}

TaylorMap operator+(const TaylorMap& a, double b) {
    TaylorMap r = a;
    r.c_[0] += b;
    return r;
}
TaylorMap operator+(double a, const TaylorMap& b) { return b + a; }
TaylorMap operator-(const TaylorMap& a, double b) { return a + (-b); }
TaylorMap operator-(double a, const TaylorMap& b) { return (-b) + a; }
TaylorMap operator*(const TaylorMap& a, double b) {
    TaylorMap r = a;
    for (double& c : r.c_) c *= b;
    return r;
}
TaylorMap operator*(double a, const TaylorMap& b) { return b * a; }
TaylorMap operator/(const TaylorMap& a, double b) {
    if (b == 0.0) throw std::domain_error("division by zero scalar");
    return a * (1.0 / b);
}
TaylorMap operator-(const TaylorMap& a) { return a * (-1.0); }

TaylorMap apply_series(const TaylorMap& x, std::span<const double> series) {
    const TaylorMap n = x.nilpotent();
    TaylorMap r = make_like(x, series[series.size() - 1]);
    for (int j = static_cast<int>(series.size()) - 2; j >= 0; --j) r = r * n + series[j];
    return r;
}

namespace {

TaylorMap reciprocal(const TaylorMap& x) {
    const double c = x.constant_part();
    if (c == 0.0) throw std::domain_error("reciprocal of map with zero constant term");
    std::vector<double> a(x.order() + 1);
    a[0] = 1.0 / c;
    for (int j = 1; j <= x.order(); ++j) a[j] = -a[j - 1] / c;
    return apply_series(x, a);
}

}  // namespace

TaylorMap operator/(const TaylorMap& a, const TaylorMap& b) {
    a.check_compatible(b);
    return a * reciprocal(b);
}
TaylorMap operator/(double a, const TaylorMap& b) { return reciprocal(b) * a; }

TaylorMap sin(const TaylorMap& x) {
    const double c = x.constant_part();
    std::vector<double> a(x.order() + 1);
    double fact = 1.0;
    const double cyc[4] = {std::sin(c), std::cos(c), -std::sin(c), -std::cos(c)};
    for (int j = 0; j <= x.order(); ++j) {
        if (j > 0) fact *= j;
        a[j] = cyc[j % 4] / fact;
    }
    return apply_series(x, a);
}

TaylorMap cos(const TaylorMap& x) {
    const double c = x.constant_part();
    std::vector<double> a(x.order() + 1);
    double fact = 1.0;
    const double cyc[4] = {std::cos(c), -std::sin(c), -std::cos(c), std::sin(c)};
    for (int j = 0; j <= x.order(); ++j) {
        if (j > 0) fact *= j;
        a[j] = cyc[j % 4] / fact;
    }
    return apply_series(x, a);
}

TaylorMap tan(const TaylorMap& x) { return sin(x) / cos(x); }

TaylorMap atan(const TaylorMap& x) {
    // Coefficients of atan(c + t) from (1 + (c+t)^2) A'(t) = 1.
    const double c = x.constant_part();
    const int k = x.order();
    std::vector<double> a(k + 1);
    a[0] = std::atan(c);
    const double q = 1.0 + c * c;
    if (k >= 1) a[1] = 1.0 / q;
    for (int m = 1; m < k; ++m)
        a[m + 1] = -(2.0 * c * m * a[m] + (m - 1) * a[m - 1]) / (q * (m + 1));
    return apply_series(x, a);
}

TaylorMap asin(const TaylorMap& x) {
    const double c = x.constant_part();
    if (std::abs(c) >= 1.0) throw std::domain_error("asin of map with |constant| >= 1");
    return atan(x / sqrt(1.0 - x * x));
}

TaylorMap acos(const TaylorMap& x) { return std::numbers::pi / 2.0 - asin(x); }

TaylorMap atan2(const TaylorMap& y, const TaylorMap& x) {
    const double yc = y.constant_part();
    const double xc = x.constant_part();
    if (yc == 0.0 && xc == 0.0) throw std::domain_error("atan2 at the origin");
    const TaylorMap u = (y * xc - x * yc) / (x * xc + y * yc);
    return atan(u) + std::atan2(yc, xc);
}

TaylorMap atan2(const TaylorMap& y, double x) { return atan2(y, make_like(y, x)); }
TaylorMap atan2(double y, const TaylorMap& x) { return atan2(make_like(x, y), x); }

TaylorMap sqrt(const TaylorMap& x) {
    const double c = x.constant_part();
    if (c <= 0.0) throw std::domain_error("sqrt of map with non-positive constant term");
    std::vector<double> a(x.order() + 1);
    a[0] = std::sqrt(c);
    for (int j = 1; j <= x.order(); ++j) a[j] = a[j - 1] * (0.5 - (j - 1)) / (j * c);
    return apply_series(x, a);
}

TaylorMap exp(const TaylorMap& x) {
    const double e0 = std::exp(x.constant_part());
    std::vector<double> a(x.order() + 1);
    double fact = 1.0;
    for (int j = 0; j <= x.order(); ++j) {
        if (j > 0) fact *= j;
        a[j] = e0 / fact;
    }
    return apply_series(x, a);
}

TaylorMap log(const TaylorMap& x) {
    const double c = x.constant_part();
    if (c <= 0.0) throw std::domain_error("log of map with non-positive constant term");
    std::vector<double> a(x.order() + 1);
    a[0] = std::log(c);
    double cp = c;
    for (int j = 1; j <= x.order(); ++j) {
        a[j] = ((j % 2) ? 1.0 : -1.0) / (j * cp);
        cp *= c;
    }
    return apply_series(x, a);
}

TaylorMap pow_i(const TaylorMap& x, int n) {
    if (n < 0) return reciprocal(pow_i(x, -n));
    TaylorMap r = make_like(x, 1.0);
    TaylorMap base = x;
    unsigned e = static_cast<unsigned>(n);
    while (e) {
        if (e & 1u) r = r * base;
        base = base * base;
        e >>= 1;
    }
    return r;
}

MapSystem::MapSystem(std::vector<TaylorMap> maps) : maps_(std::move(maps)) {
    for (std::size_t i = 1; i < maps_.size(); ++i) maps_[0].check_compatible(maps_[i]);
}

MapSystem MapSystem::identity(int n_vars, int order, int domain_id) {
    std::vector<TaylorMap> maps;
    maps.reserve(n_vars);
    for (int i = 0; i < n_vars; ++i)
        maps.push_back(TaylorMap::variable(i, 0.0, 1.0, n_vars, order, domain_id));
    return MapSystem(std::move(maps));
}

int MapSystem::n_vars() const {
    if (maps_.empty()) throw std::invalid_argument("empty MapSystem");
    return maps_[0].n_vars();
}

int MapSystem::order() const {
    if (maps_.empty()) throw std::invalid_argument("empty MapSystem");
    return maps_[0].order();
}

void MapSystem::push_back(TaylorMap m) {
    if (!maps_.empty()) maps_[0].check_compatible(m);
    maps_.push_back(std::move(m));
}

std::vector<double> MapSystem::eval(std::span<const double> delta) const {
    std::vector<double> out;
    out.reserve(maps_.size());
    for (const auto& m : maps_) out.push_back(m.eval(delta));
    return out;
}

namespace {

TaylorMap substitute_impl(const TaylorMap& outer, const MapSystem& inner, bool full_values) {
    if (inner.size() != outer.n_vars())
        throw std::invalid_argument("compose: inner system size must equal outer n_vars");
    const int k = outer.order();
    if (inner.order() != k) throw std::invalid_argument("compose: order mismatch");
    const int m = inner.size();
    // Cached powers of the substituted values.
    std::vector<std::vector<TaylorMap>> pw(m);
    for (int i = 0; i < m; ++i) {
        pw[i].reserve(k + 1);
        pw[i].push_back(make_like(inner[0], 1.0));
        const TaylorMap base = full_values ? inner[i] : inner[i].nilpotent();
        for (int e = 1; e <= k; ++e) pw[i].push_back(pw[i][e - 1] * base);
    }
    TaylorMap r = make_like(inner[0], 0.0);
    const auto* tab = detail::table(outer.n_vars(), k);
    const auto coeffs = outer.coefficients();
    for (int idx = 0; idx < tab->size(); ++idx) {
        const double c = coeffs[idx];
        if (c == 0.0) continue;
        TaylorMap term = make_like(inner[0], c);
        for (int i = 0; i < m; ++i) {
            const int e = tab->exps[idx][i];
            if (e) term = term * pw[i][e];
        }
        r = r + term;
    }
    return r;
}

}  // namespace

TaylorMap compose(const TaylorMap& outer, const MapSystem& inner) {
    return substitute_impl(outer, inner, false);
}

MapSystem compose(const MapSystem& outer, const MapSystem& inner) {
    std::vector<TaylorMap> maps;
    maps.reserve(outer.size());
    for (int i = 0; i < outer.size(); ++i) maps.push_back(compose(outer[i], inner));
    return MapSystem(std::move(maps));
}

TaylorMap substitute(const TaylorMap& outer, const MapSystem& inner) {
    return substitute_impl(outer, inner, true);
}

MapSystem substitute(const MapSystem& outer, const MapSystem& inner) {
    std::vector<TaylorMap> maps;
    maps.reserve(outer.size());
    for (int i = 0; i < outer.size(); ++i) maps.push_back(substitute(outer[i], inner));
    return MapSystem(std::move(maps));
}

MapSystem invert(const MapSystem& system) {
    const int v = system.size();
    if (v == 0) throw std::invalid_argument("invert: empty system");
    if (system.n_vars() != v) throw std::invalid_argument("invert: system must be square");
    const int k = system.order();

    for (int i = 0; i < v; ++i)
        if (std::abs(system[i].constant_part()) > 1e-9)
            throw std::invalid_argument("invert: system must have zero constant terms");

    // Linear part.
    Eigen::MatrixXd L(v, v);
    std::vector<int> exponents(v, 0);
    for (int i = 0; i < v; ++i) {
        for (int j = 0; j < v; ++j) {
            std::fill(exponents.begin(), exponents.end(), 0);
            exponents[j] = 1;
            L(i, j) = system[i].coefficient(exponents);
        }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(L);
    if (!lu.isInvertible()) throw std::domain_error("invert: singular Jacobian");
    const Eigen::MatrixXd Linv = lu.inverse();

    const int domain_id = system[0].domain_id();
    const MapSystem ident = MapSystem::identity(v, k, domain_id);

    // Nonlinear remainder N = F - L*delta (constant residue absorbed too).
    std::vector<TaylorMap> nl;
    nl.reserve(v);
    for (int i = 0; i < v; ++i) {
        TaylorMap ni = system[i];
        ni = ni - ni.constant_part();
        for (int j = 0; j < v; ++j) {
            std::fill(exponents.begin(), exponents.end(), 0);
            exponents[j] = 1;
            ni = ni - system[i].coefficient(exponents) * ident[j];
        }
        nl.push_back(std::move(ni));
    }
    const MapSystem N(std::move(nl));

    auto apply_linv = [&](const MapSystem& s) {
        std::vector<TaylorMap> out;
        out.reserve(v);
        for (int i = 0; i < v; ++i) {
            TaylorMap mi = make_like(s[0], 0.0);
            for (int j = 0; j < v; ++j)
                if (Linv(i, j) != 0.0) mi = mi + Linv(i, j) * s[j];
            out.push_back(std::move(mi));
        }
        return MapSystem(std::move(out));
    };

    // Fixed point H <- Linv (w - N(H(w))); gains one order per sweep.
    MapSystem h = apply_linv(ident);
    for (int it = 0; it < k; ++it) {
        const MapSystem nh = compose(N, h);
        std::vector<TaylorMap> rhs;
        rhs.reserve(v);
        for (int i = 0; i < v; ++i) rhs.push_back(ident[i] - nh[i]);
        h = apply_linv(MapSystem(std::move(rhs)));
    }
    return h;
}

MapSystem partial_invert(const MapSystem& system,
                         std::span<const int> invert_vars,
                         std::span<const int> target_outputs) {
    if (invert_vars.size() != target_outputs.size())
        throw std::invalid_argument("partial_invert: size mismatch");
    const int v = system.n_vars();
    const int k = system.order();
    const int domain_id = system[0].domain_id();

    std::vector<bool> inverted(v, false);
    for (int iv : invert_vars) {
        if (iv < 0 || iv >= v) throw std::invalid_argument("partial_invert: variable out of range");
        if (inverted[iv]) throw std::invalid_argument("partial_invert: duplicate variable");
        inverted[iv] = true;
    }

    // Augmented square system: targets occupy the inverted slots, identity
    // elsewhere.
    std::vector<TaylorMap> g;
    g.reserve(v);
    for (int i = 0; i < v; ++i) g.push_back(TaylorMap::variable(i, 0.0, 1.0, v, k, domain_id));
    for (std::size_t m = 0; m < invert_vars.size(); ++m) {
        const int out = target_outputs[m];
        if (out < 0 || out >= system.size())
            throw std::invalid_argument("partial_invert: output index out of range");
        g[invert_vars[m]] = system[out];
    }
    return invert(MapSystem(std::move(g)));
}

}  // namespace ods
