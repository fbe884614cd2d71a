#pragma once

// Truncated multivariate Taylor polynomial algebra (differential algebra).
// A TaylorMap stores the coefficients of a polynomial in v deviation
// variables, truncated at total degree k, over the normalized box [-1,1]^v.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ods {

inline constexpr int kMaxVars = 8;
inline constexpr int kMaxOrder = 8;

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double width() const { return hi - lo; }
    double mid() const { return 0.5 * (lo + hi); }
    bool contains(double x) const { return x >= lo && x <= hi; }
    Interval hull(const Interval& other) const {
        return {lo < other.lo ? lo : other.lo, hi > other.hi ? hi : other.hi};
    }
};

namespace detail {

// Shared per-(n_vars, order) monomial bookkeeping: graded-lex exponent
// list, reverse lookup, and (when small enough) a dense product table.
struct MonomialTable {
    int n_vars = 0;
    int order = 0;
    std::vector<std::array<std::uint8_t, kMaxVars>> exps;
    std::vector<int> degree_start;              // size order + 2
    std::vector<std::int32_t> prod;             // dense i*j -> index, or empty

    int size() const { return static_cast<int>(exps.size()); }
    int degree_of(int idx) const;

    static std::uint32_t key(const std::array<std::uint8_t, kMaxVars>& e);
    int index_of(const std::array<std::uint8_t, kMaxVars>& e) const;

    // Index of the product monomial, or -1 when the degree exceeds order.
    int product(int i, int j) const;

private:
    friend const MonomialTable* table(int n_vars, int order);
    std::vector<std::pair<std::uint32_t, int>> sorted_keys_;
};

const MonomialTable* table(int n_vars, int order);

}  // namespace detail

enum class BoundMethod { Triangle, EvenAware };

class TaylorMap {
public:
    TaylorMap() = default;

    static TaylorMap constant(double value, int n_vars, int order, int domain_id = 0);
    // The DA variable x = center + half_width * delta_index.
    static TaylorMap variable(int index, double center, double half_width,
                              int n_vars, int order, int domain_id = 0);
    // Rebuild from a stored graded-lex coefficient list.
    static TaylorMap from_coefficients(std::span<const double> coeffs, int n_vars, int order,
                                       int domain_id = 0);

    bool valid() const { return tab_ != nullptr; }
    int n_vars() const { return tab_->n_vars; }
    int order() const { return tab_->order; }
    int domain_id() const { return domain_id_; }
    void set_domain_id(int id) { domain_id_ = id; }

    double constant_part() const { return c_[0]; }
    std::span<const double> coefficients() const { return c_; }
    double coefficient(std::span<const int> exponents) const;

    double eval(std::span<const double> delta, bool* extrapolated = nullptr) const;

    TaylorMap derive(int var) const;
    TaylorMap integrate(int var) const;
    Interval bound(BoundMethod method = BoundMethod::Triangle) const;

    // Map minus its constant term.
    TaylorMap nilpotent() const;

    // Largest |coefficient| at each total degree, for error estimation.
    std::vector<double> degree_norms() const;  // size order+1, sum of |c| per degree

    std::string debug_string() const;

    friend TaylorMap operator+(const TaylorMap& a, const TaylorMap& b);
    friend TaylorMap operator-(const TaylorMap& a, const TaylorMap& b);
    friend TaylorMap operator*(const TaylorMap& a, const TaylorMap& b);
    friend TaylorMap operator/(const TaylorMap& a, const TaylorMap& b);
    friend TaylorMap operator+(const TaylorMap& a, double b);
    friend TaylorMap operator+(double a, const TaylorMap& b);
    friend TaylorMap operator-(const TaylorMap& a, double b);
    friend TaylorMap operator-(double a, const TaylorMap& b);
    friend TaylorMap operator*(const TaylorMap& a, double b);
    friend TaylorMap operator*(double a, const TaylorMap& b);
    friend TaylorMap operator/(const TaylorMap& a, double b);
    friend TaylorMap operator/(double a, const TaylorMap& b);
    friend TaylorMap operator-(const TaylorMap& a);

    friend TaylorMap apply_series(const TaylorMap& x, std::span<const double> series);
    friend class MapSystem;
    friend TaylorMap compose(const TaylorMap& outer, const class MapSystem& inner);

private:
    TaylorMap(const detail::MonomialTable* tab, int domain_id)
        : tab_(tab), c_(tab->size(), 0.0), domain_id_(domain_id) {}

    void check_compatible(const TaylorMap& other) const;

    const detail::MonomialTable* tab_ = nullptr;
    std::vector<double> c_;
    int domain_id_ = 0;
};

// Intrinsics, exact to the truncation order.
TaylorMap sin(const TaylorMap& x);
TaylorMap cos(const TaylorMap& x);
TaylorMap tan(const TaylorMap& x);
TaylorMap asin(const TaylorMap& x);
TaylorMap acos(const TaylorMap& x);
TaylorMap atan(const TaylorMap& x);
TaylorMap atan2(const TaylorMap& y, const TaylorMap& x);
TaylorMap atan2(const TaylorMap& y, double x);
TaylorMap atan2(double y, const TaylorMap& x);
TaylorMap sqrt(const TaylorMap& x);
TaylorMap exp(const TaylorMap& x);
TaylorMap log(const TaylorMap& x);
TaylorMap pow_i(const TaylorMap& x, int n);

inline double constant_part(double x) { return x; }
inline double constant_part(const TaylorMap& x) { return x.constant_part(); }

inline double make_like(double /*proto*/, double value) { return value; }
inline TaylorMap make_like(const TaylorMap& proto, double value) {
    return TaylorMap::constant(value, proto.n_vars(), proto.order(), proto.domain_id());
}

template <class S>
struct is_taylor : std::false_type {};
template <>
struct is_taylor<TaylorMap> : std::true_type {};

// Ordered list of maps sharing (n_vars, order, domain_id); a vector-valued map.
class MapSystem {
public:
    MapSystem() = default;
    explicit MapSystem(std::vector<TaylorMap> maps);

    // The identity system delta_i -> delta_i over v variables.
    static MapSystem identity(int n_vars, int order, int domain_id = 0);

    int size() const { return static_cast<int>(maps_.size()); }
    int n_vars() const;
    int order() const;
    const TaylorMap& operator[](int i) const { return maps_[i]; }
    TaylorMap& operator[](int i) { return maps_[i]; }
    const std::vector<TaylorMap>& maps() const { return maps_; }

    void push_back(TaylorMap m);
    std::vector<double> eval(std::span<const double> delta) const;

private:
    std::vector<TaylorMap> maps_;
};

// Substitute the inner maps' deviations into the outer map's variables.
// Each inner constant term is the expansion center of the matching outer
// variable, so only the inner nilpotent parts enter the substitution.
TaylorMap compose(const TaylorMap& outer, const MapSystem& inner);
MapSystem compose(const MapSystem& outer, const MapSystem& inner);

// Plain polynomial substitution: the full inner values (constants included)
// replace the outer variables. Exact for affine inner maps; used for
// re-centering a polynomial on a sub-box.
TaylorMap substitute(const TaylorMap& outer, const MapSystem& inner);
MapSystem substitute(const MapSystem& outer, const MapSystem& inner);

// Invert a square system with zero constant terms and nonsingular linear
// part, exact to the truncation order.
MapSystem invert(const MapSystem& system);

// Express the chosen input variables as polynomials of the chosen output
// deviations and the remaining input deviations. Returns the full square
// inverse; components at non-inverted slots are identities.
MapSystem partial_invert(const MapSystem& system,
                         std::span<const int> invert_vars,
                         std::span<const int> target_outputs);

}  // namespace ods
