#ifndef DYADIC_CERTIFY_HPP
#define DYADIC_CERTIFY_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "carleson.hpp"
#include "common.hpp"
#include "grid.hpp"
#include "haar.hpp"
#include "kernel.hpp"

namespace dyadic {

// parameter subsets as flag vectors; printed 1-based
inline std::vector<bool> subset_flags(int n, unsigned mask)
{
    std::vector<bool> f(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        f[static_cast<std::size_t>(i)] = (mask >> i) & 1u;
    return f;
}

inline std::string subset_name(const std::vector<bool>& f)
{
    std::string s = "{";
    bool first = true;
    for (std::size_t i = 0; i < f.size(); ++i)
        if (f[i]) {
            s += (first ? "" : ",") + std::to_string(i + 1);
            first = false;
        }
    return s + "}";
}

struct CertConfig {
    double delta = -1.0;                 // < 0: the space's delta
    std::size_t samples = 2000;          // size-Holder tuples before doubling
    int max_doublings = 4;
    std::uint64_t seed = 1;
    double threshold = 1e3;
    double min_separation = 0x1.0p-24;
    double refine_floor = 0x1.0p-40;
    std::vector<int> levels;             // empty: 1 .. L-1
    int grids = 2;
    int boxes_per_level = 2;
    int partial_pairs = 3;
    int norm_iters = 30;

    nlohmann::json to_json() const
    {
        return {{"delta", delta},          {"samples", samples},           {"max_doublings", max_doublings},
                {"seed", seed},            {"threshold", threshold},       {"min_separation", min_separation},
                {"refine_floor", refine_floor}, {"levels", levels},        {"grids", grids},
                {"boxes_per_level", boxes_per_level}, {"partial_pairs", partial_pairs}, {"norm_iters", norm_iters}};
    }
};

using PointKernel = std::function<double(const std::vector<double>&, const std::vector<double>&)>;

inline bool has_point_kernel(const KernelSpec& k)
{
    for (const auto& d : k.factors)
        if (d.dim != 1 || !d.pointwise())
            return false;
    return !k.factors.empty();
}

inline bool has_point_kernel(const OperatorHandle& op) { return op.is_tensor() && op.kernel() && has_point_kernel(*op.kernel()); }

// w * prod_i K_i, with x_i and y_i swapped where S is set
inline PointKernel spec_point_kernel(const KernelSpec& k, const std::vector<bool>& S, double weight = 1.0)
{
    require(has_point_kernel(k), "point kernel: needs pointwise one-dimensional factors");
    require(S.size() == k.factors.size(), "point kernel: one adjoint flag per parameter");
    return [k, S, weight](const std::vector<double>& x, const std::vector<double>& y) {
        double v = weight;
        for (std::size_t i = 0; i < k.factors.size(); ++i)
            v *= S[i] ? k.factors[i].evaluate(y[i], x[i]) : k.factors[i].evaluate(x[i], y[i]);
        return v;
    };
}

// K_S(x, y) of a tensor operator with pointwise one-dimensional kernels
inline PointKernel point_kernel(const OperatorHandle& op)
{
    require(has_point_kernel(op), "point kernel: needs a tensor operator with pointwise one-dimensional kernels");
    return spec_point_kernel(*op.kernel(), op.adjoint_flags(), op.terms()[0].weight);
}

inline double kernel_value(const OperatorHandle& op, const std::vector<double>& x, const std::vector<double>& y) { return point_kernel(op)(x, y); }

// sum over L subset of W of (-1)^{|L|} K(x^L, y), x^L taking x' on L
inline double alternating_sum(const PointKernel& K, const std::vector<double>& x, const std::vector<double>& xp,
                              const std::vector<double>& y, const std::vector<bool>& W)
{
    std::vector<int> idx;
    for (std::size_t i = 0; i < W.size(); ++i)
        if (W[i])
            idx.push_back(static_cast<int>(i));
    double acc = 0.0;
    std::vector<double> pt = x;
    for (unsigned lam = 0; lam < (1u << idx.size()); ++lam) {
        int sign = 1;
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const auto u = static_cast<std::size_t>(idx[j]);
            const bool on = (lam >> j) & 1u;
            pt[u] = on ? xp[u] : x[u];
            if (on)
                sign = -sign;
        }
        acc += sign * K(pt, y);
    }
    return acc;
}

struct SizeHolderPoint {
    std::vector<double> x, xp, y;
    double ratio = 0.0;

    nlohmann::json to_json() const
    {
        std::vector<double> sep, shift;
        for (std::size_t i = 0; i < x.size(); ++i) {
            sep.push_back(torus_abs(x[i] - y[i]));
            shift.push_back(torus_abs(xp[i] - x[i]));
        }
        return {{"x", x}, {"x_prime", xp}, {"y", y}, {"separation", sep}, {"shift", shift}, {"ratio", ratio}};
    }
};

struct SizeHolderFit {
    std::vector<bool> W;
    double constant = 0.0;        // sup over all sampled tuples
    double previous = 0.0;        // sup over the first half
    bool stable = true;
    std::size_t samples = 0;
    std::size_t resampled = 0;
    SizeHolderPoint witness;      // largest ratio seen, refinement included
    std::vector<std::pair<double, double>> refinement;   // (smallest separation, ratio)

    double worst() const { return witness.ratio; }

    nlohmann::json to_json() const
    {
        nlohmann::json ref = nlohmann::json::array();
        for (const auto& [s, r] : refinement)
            ref.push_back({{"separation", s}, {"ratio", r}});
        return {{"W", subset_name(W)}, {"constant", constant}, {"previous", previous}, {"stable", stable}, {"samples", samples},
                {"resampled", resampled}, {"witness", witness.to_json()}, {"refinement", ref}};
    }
};

namespace detail {

// ratio of the alternating sum to the displayed bound at one tuple; NaN when undefined
inline double size_holder_ratio(const PointKernel& K, const SizeHolderPoint& p, const std::vector<bool>& W, double delta)
{
    double bound = 1.0;
    for (std::size_t i = 0; i < W.size(); ++i) {
        const double t = torus_abs(p.x[i] - p.y[i]);
        if (W[i]) {
            const double rho = torus_abs(p.xp[i] - p.x[i]);
            if (rho > t / 2.0)
                return std::numeric_limits<double>::quiet_NaN();
            bound *= std::pow(rho, delta) / std::pow(t, 1.0 + delta);
        } else {
            bound /= t;
        }
    }
    const double v = std::abs(alternating_sum(K, p.x, p.xp, p.y, W)) / bound;
    return std::isfinite(v) ? v : std::numeric_limits<double>::quiet_NaN();
}

inline double wrap01(double u) { return u - std::floor(u); }

// log-uniform separation in [min_sep, 1/2], uniform position, x' within half the separation
inline SizeHolderPoint sample_tuple(Rng& rng, std::size_t n, const std::vector<bool>& W, double min_sep)
{
    SizeHolderPoint p;
    const double lo = std::log2(min_sep);
    for (std::size_t i = 0; i < n; ++i) {
        const double y = rng.uniform();
        const double t = std::exp2(rng.uniform(lo, -1.0));
        const double x = wrap01(y + rng.sign() * t);
        double xp = x;
        if (W[i])
            xp = wrap01(x + rng.sign() * t * std::exp2(rng.uniform(-20.0, -1.0)));
        p.x.push_back(x);
        p.xp.push_back(xp);
        p.y.push_back(y);
    }
    return p;
}

// every separation (and shift) scaled by 2^-k around y
inline SizeHolderPoint contract(const SizeHolderPoint& p, int k)
{
    SizeHolderPoint q = p;
    const double f = std::ldexp(1.0, -k);
    for (std::size_t i = 0; i < p.x.size(); ++i) {
        q.x[i] = wrap01(p.y[i] + wrap_difference(p.x[i] - p.y[i]) * f);
        q.xp[i] = wrap01(p.y[i] + wrap_difference(p.xp[i] - p.y[i]) * f);
    }
    return q;
}

inline double min_separation(const SizeHolderPoint& p)
{
    double m = 1.0;
    for (std::size_t i = 0; i < p.x.size(); ++i)
        m = std::min(m, torus_abs(p.x[i] - p.y[i]));
    return m;
}

} // namespace detail

//
// Sample supremum of |sum_L (-1)^|L| K(x^L, y)| over the mixed size-Holder bound.
// The sample count doubles until the supremum grows by less than 2x; the worst
// tuple is then contracted toward the diagonal down to the refinement floor.
//
inline SizeHolderFit fit_size_holder(const PointKernel& K, int n, const std::vector<bool>& W, double delta, const CertConfig& cfg)
{
    require(static_cast<int>(W.size()) == n, "fit_size_holder: one flag per parameter");
    require(delta > 0.0 && delta < 1.0, "fit_size_holder: delta must lie in (0,1)");
    require(cfg.samples >= 1 && cfg.min_separation > 0.0 && cfg.min_separation < 0.5, "fit_size_holder: bad sampling configuration");
    SizeHolderFit fit;
    fit.W = W;
    std::vector<double> ratios;
    std::vector<SizeHolderPoint> points;
    auto extend = [&](std::size_t upto) {
        for (std::size_t i = ratios.size(); i < upto; ++i) {
            for (std::uint64_t attempt = 0;; ++attempt) {
                require(attempt < 64, "fit_size_holder: kernel undefined at every resampled tuple");
                Rng rng(hash_combine(hash_combine(cfg.seed, i), attempt));
                SizeHolderPoint p = detail::sample_tuple(rng, static_cast<std::size_t>(n), W, cfg.min_separation);
                const double r = detail::size_holder_ratio(K, p, W, delta);
                if (std::isnan(r)) {
                    ++fit.resampled;
                    continue;
                }
                p.ratio = r;
                ratios.push_back(r);
                points.push_back(std::move(p));
                break;
            }
        }
    };
    auto sup = [&](std::size_t upto) {
        double s = 0.0;
        for (std::size_t i = 0; i < upto; ++i)
            s = std::max(s, ratios[i]);
        return s;
    };

    std::size_t N = cfg.samples;
    for (int d = 0;; ++d) {
        extend(2 * N);
        fit.previous = sup(N);
        fit.constant = sup(2 * N);
        fit.stable = fit.constant < 2.0 * fit.previous || fit.constant == 0.0;
        if (fit.stable || fit.constant >= cfg.threshold || d >= cfg.max_doublings)
            break;
        N *= 2;
    }
    fit.samples = ratios.size();

    std::size_t best = 0;
    for (std::size_t i = 1; i < ratios.size(); ++i)
        if (ratios[i] > ratios[best])
            best = i;
    fit.witness = points[best];
    const double start = detail::min_separation(points[best]);
    fit.refinement.emplace_back(start, fit.witness.ratio);
    for (int k = 1; start * std::ldexp(1.0, -k) >= cfg.refine_floor; ++k) {
        SizeHolderPoint q = detail::contract(points[best], k);
        const double r = detail::size_holder_ratio(K, q, W, delta);
        if (std::isnan(r))
            break;
        q.ratio = r;
        fit.refinement.emplace_back(detail::min_separation(q), r);
        if (r > fit.witness.ratio)
            fit.witness = std::move(q);
    }
    return fit;
}

inline SizeHolderFit check_size_holder(const OperatorHandle& op, const std::vector<bool>& W, const CertConfig& cfg)
{
    const double delta = cfg.delta > 0.0 ? cfg.delta : op.space().delta;
    return fit_size_holder(point_kernel(op), op.space().n, W, delta, cfg);
}

struct PartialKernelFit {
    std::vector<bool> V;
    double pairing = 0.0;               // <(x)_{i not in V} T_i f_i, g_i>
    std::vector<double> factor_constants;   // per i in V, the one-parameter size-Holder constant
    double constant = 0.0;

    nlohmann::json to_json() const
    {
        return {{"V", subset_name(V)}, {"pairing", pairing}, {"factor_constants", factor_constants}, {"constant", constant}};
    }
};

// max over W in {{}, {i}} of the one-parameter constants of factor i
inline double factor_size_holder(const KernelSpec& k, int i, bool adjoint, double delta, const CertConfig& cfg)
{
    const PointKernel K = spec_point_kernel(KernelSpec{k.name, {k.factors[static_cast<std::size_t>(i)]}}, {adjoint});
    double c = 0.0;
    for (bool w : {false, true})
        c = std::max(c, fit_size_holder(K, 1, {w}, delta, cfg).worst());
    return c;
}

inline double factor_size_holder(const OperatorHandle& op, int i, const CertConfig& cfg)
{
    require(has_point_kernel(op), "factor_size_holder: needs a tensor operator with pointwise kernels");
    return factor_size_holder(*op.kernel(), i, op.adjoint_flag(i), cfg.delta > 0.0 ? cfg.delta : op.space().delta, cfg);
}

//
// For a tensor operator K^V = (x)_{i in V} K_i * <(x)_{i not in V} T_i f_i, g_i>, so
// C^V is the pairing magnitude times the product of the factor constants.
// f and g hold cell vectors for the parameters outside V (others ignored).
//
inline PartialKernelFit check_partial_kernel(const OperatorHandle& op, const std::vector<bool>& V, const std::vector<std::vector<double>>& f,
                                             const std::vector<std::vector<double>>& g, const CertConfig& cfg,
                                             const std::vector<double>& factor_constants = {})
{
    const int n = op.space().n;
    if (!op.is_tensor())
        throw ConfigError("check_partial_kernel: partial kernels are only certified for tensor operators");
    require(static_cast<int>(V.size()) == n, "check_partial_kernel: one flag per parameter");
    int in_v = 0;
    for (bool b : V)
        in_v += b ? 1 : 0;
    require(in_v > 0 && in_v < n, "check_partial_kernel: V must be a proper nonempty subset");
    require(static_cast<int>(f.size()) == n && static_cast<int>(g.size()) == n, "check_partial_kernel: one test factor slot per parameter");

    PartialKernelFit fit;
    fit.V = V;
    double p = op.terms()[0].weight;
    for (int i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (V[u])
            continue;
        const std::size_t m = op.space().axis_cells(i);
        require(f[u].size() == m && g[u].size() == m, "check_partial_kernel: test factor length mismatch");
        double s = 0.0;
        for (std::size_t a = 0; a < m; ++a) {
            if (g[u][a] == 0.0)
                continue;
            double row = 0.0;
            for (std::size_t b = 0; b < m; ++b)
                row += op.entry(0, i, a, b) * f[u][b];
            s += g[u][a] * row;
        }
        p *= s;
    }
    fit.pairing = p;
    fit.constant = std::abs(p);
    std::size_t j = 0;
    for (int i = 0; i < n; ++i) {
        if (!V[static_cast<std::size_t>(i)])
            continue;
        const double c = j < factor_constants.size() ? factor_constants[j] : factor_size_holder(op, i, cfg);
        ++j;
        fit.factor_constants.push_back(c);
        fit.constant *= c;
    }
    return fit;
}

struct BmoWbpRow {
    int grid = 0;
    int level = 0;
    std::vector<std::size_t> positions;     // one per parameter in W
    double value = 0.0;
    double ratio = 0.0;

    nlohmann::json to_json() const { return {{"grid", grid}, {"level", level}, {"positions", positions}, {"value", value}, {"ratio", ratio}}; }
};

struct BmoWbpTable {
    std::vector<bool> W;
    std::vector<BmoWbpRow> rows;
    double max_ratio = 0.0;
    double min_ratio = 0.0;
    std::string family;

    // max/min over the table; NaN when the minimum vanishes
    double spread() const { return min_ratio > 0.0 ? max_ratio / min_ratio : std::numeric_limits<double>::quiet_NaN(); }

    const BmoWbpRow* witness() const
    {
        const BmoWbpRow* w = nullptr;
        for (const auto& r : rows)
            if (!w || r.ratio > w->ratio)
                w = &r;
        return w;
    }

    nlohmann::json to_json() const
    {
        nlohmann::json j{{"W", subset_name(W)}, {"max_ratio", max_ratio}, {"min_ratio", min_ratio}, {"family", family}};
        const double s = spread();
        j["spread"] = std::isnan(s) ? nlohmann::json(nullptr) : nlohmann::json(s);
        j["witness"] = witness() ? witness()->to_json() : nlohmann::json(nullptr);
        j["rows"] = rows.size();
        return j;
    }
};

//
// For cubes I_i (i in W) of a common level: the function of x_{W^c}
//   <T((x)chi_{I_i} (x) 1), (x)chi_{I_i} (x) .>,
// its Carleson estimate, over prod |I_i|. W = all parameters is the plain WBP ratio.
//
inline BmoWbpTable check_bmo_wbp(const OperatorHandle& op, const std::vector<bool>& W, const std::vector<int>& levels,
                                 const std::vector<GridShift>& grids, int boxes_per_level, std::uint64_t seed)
{
    const TorusSpace& s = op.space();
    const int n = s.n;
    require(static_cast<int>(W.size()) == n, "check_bmo_wbp: one flag per parameter");
    require(!grids.empty() && boxes_per_level >= 1, "check_bmo_wbp: needs grids and boxes");
    int in_w = 0;
    for (bool b : W)
        in_w += b ? 1 : 0;
    BmoWbpTable tab;
    tab.W = W;
    tab.family = in_w == n ? "wbp" : "single-rectangle";

    const std::vector<int> lv = in_w == 0 ? std::vector<int>{0} : levels;
    for (int l : lv)
        require(l >= 0 && l <= s.depth, "check_bmo_wbp: level out of range");
    Rng rng(mix64(seed ^ 0xb0b0ULL));
    for (std::size_t gi = 0; gi < grids.size(); ++gi) {
        const GridShift& grid = grids[gi];
        require(grid.compatible(s), "check_bmo_wbp: grid does not match the space");
        const GridAxes axes(s, grid);
        GridShift rest = grid;
        rest.omega.clear();
        rest.dims.clear();
        for (int i = 0; i < n; ++i)
            if (!W[static_cast<std::size_t>(i)]) {
                rest.omega.push_back(grid.omega[static_cast<std::size_t>(i)]);
                rest.dims.push_back(grid.dims[static_cast<std::size_t>(i)]);
            }
        for (int level : lv) {
            const int reps = in_w == 0 ? 1 : boxes_per_level;
            for (int b = 0; b < reps; ++b) {
                BmoWbpRow row;
                row.grid = static_cast<int>(gi);
                row.level = level;
                std::vector<std::vector<double>> chi(static_cast<std::size_t>(n));
                std::vector<std::vector<double>> fac(static_cast<std::size_t>(n));
                double vol = 1.0;
                for (int i = 0; i < n; ++i) {
                    const auto u = static_cast<std::size_t>(i);
                    chi[u].assign(s.axis_cells(i), W[u] ? 0.0 : 1.0);
                    if (!W[u])
                        continue;
                    const std::size_t p = rng.below(axes[i].cubes_at(level));
                    row.positions.push_back(p);
                    for (std::size_t c : axes[i].cube_cells(level, p))
                        chi[u][c] = 1.0;
                    fac[u] = chi[u];
                    vol *= std::ldexp(1.0, -level * s.dim(i));
                }
                const MultiFunction F = MultiFunction::tensor(s, chi);
                const MultiFunction TF = apply(op, F);
                if (in_w == n)
                    row.value = std::abs(inner(TF, F));
                else if (in_w == 0)
                    row.value = carleson_rect(TF, grid).value;
                else
                    row.value = carleson_rect(partial_pair(TF, fac), rest).value;
                row.ratio = row.value / vol;
                tab.rows.push_back(std::move(row));
            }
        }
    }
    tab.max_ratio = 0.0;
    tab.min_ratio = std::numeric_limits<double>::infinity();
    for (const auto& r : tab.rows) {
        tab.max_ratio = std::max(tab.max_ratio, r.ratio);
        tab.min_ratio = std::min(tab.min_ratio, r.ratio);
    }
    return tab;
}

struct Condition {
    std::string kind;        // size-holder | partial-kernel | bmo-wbp
    std::vector<bool> S;
    std::vector<bool> set;   // W or V
    double constant = 0.0;
    bool pass = true;
    bool skipped = false;
    std::string note;
    nlohmann::json witness;

    nlohmann::json to_json() const
    {
        nlohmann::json j{{"kind", kind}, {"S", subset_name(S)}, {"set", subset_name(set)}, {"constant", constant},
                         {"verdict", skipped ? "skipped" : (pass ? "pass" : "fail")}};
        if (!note.empty())
            j["note"] = note;
        if (!witness.is_null())
            j["witness"] = witness;
        return j;
    }
};

struct CertReport {
    std::string operator_name;
    std::vector<Condition> conditions;
    bool pass = true;
    double operator_norm = 0.0;
    double max_constant = 0.0;
    double delta = 0.0;
    CertConfig config;
    std::string surrogate_gap =
        "product BMO is estimated by single dyadic rectangles on the sampled grids; the supremum over open sets is not attained";

    std::size_t failures() const
    {
        std::size_t f = 0;
        for (const auto& c : conditions)
            f += (!c.skipped && !c.pass) ? 1 : 0;
        return f;
    }

    nlohmann::json to_json() const
    {
        nlohmann::json cs = nlohmann::json::array();
        for (const auto& c : conditions)
            cs.push_back(c.to_json());
        return {{"operator", operator_name}, {"verdict", pass ? "pass" : "fail"}, {"operator_norm", operator_norm},
                {"max_constant", max_constant}, {"delta", delta}, {"config", config.to_json()},
                {"surrogate_gap", surrogate_gap}, {"conditions", cs}};
    }

    void print_summary(std::ostream& os) const
    {
        std::size_t skipped = 0;
        for (const auto& c : conditions)
            skipped += c.skipped ? 1 : 0;
        os << "operator " << operator_name << ": " << (pass ? "PASS" : "FAIL") << "  conditions=" << conditions.size()
           << " failed=" << failures() << " skipped=" << skipped << "  max constant=" << max_constant << "  operator norm=" << operator_norm
           << "\n";
        std::size_t shown = 0;
        for (const auto& c : conditions)
            if (!c.skipped && !c.pass && shown++ < 8)
                os << "  fail " << c.kind << " S=" << subset_name(c.S) << " set=" << subset_name(c.set) << " constant=" << c.constant << "\n";
        if (shown > 8)
            os << "  ... " << shown - 8 << " more failures in the JSON report\n";
        os << "  note: " << surrogate_gap << "\n";
    }
};

namespace detail {

// op may be null when the kernel has no operator matrix; matrix-based conditions are then skipped
inline CertReport certify_impl(const TorusSpace& s, const std::string& name, const KernelSpec* spec, const OperatorHandle* op, const CertConfig& cfg)
{
    const int n = s.n;
    require(n >= 1 && n <= 8, "certify: parameter count out of range");
    CertReport rep;
    rep.operator_name = name;
    rep.config = cfg;
    rep.delta = cfg.delta > 0.0 ? cfg.delta : s.delta;

    std::vector<int> levels = cfg.levels;
    if (levels.empty())
        for (int k = 1; k < s.depth; ++k)
            levels.push_back(k);
    if (levels.empty())
        levels.push_back(0);
    std::vector<GridShift> grids;
    for (int g = 0; g < std::max(1, cfg.grids); ++g)
        grids.push_back(g == 0 ? GridShift::zero(s) : sample_grid(s, hash_combine(cfg.seed, static_cast<std::uint64_t>(g))));

    const bool tensor = op ? op->is_tensor() : true;
    const bool pointwise = spec && has_point_kernel(*spec) && tensor;
    const double weight = op ? op->terms()[0].weight : 1.0;
    std::vector<bool> base(static_cast<std::size_t>(n), false);
    if (op)
        base = op->adjoint_flags();
    const unsigned all = 1u << n;
    auto finish = [&](Condition& c, double worst) {
        c.pass = std::isfinite(c.constant) && std::isfinite(worst) && worst < cfg.threshold;
        rep.conditions.push_back(std::move(c));
    };
    auto skip = [&](Condition& c, const std::string& why) {
        c.skipped = true;
        c.note = why;
        rep.conditions.push_back(std::move(c));
    };

    for (unsigned sm = 0; sm < all; ++sm) {
        const std::vector<bool> S = subset_flags(n, sm);
        std::vector<bool> flags = base;
        for (int i = 0; i < n; ++i)
            flags[static_cast<std::size_t>(i)] = flags[static_cast<std::size_t>(i)] != S[static_cast<std::size_t>(i)];

        for (unsigned wm = 0; wm < all; ++wm) {
            Condition c{"size-holder", S, subset_flags(n, wm), 0.0, true, false, {}, {}};
            if (!pointwise) {
                skip(c, tensor ? "no pointwise kernel" : "non-tensor operator");
                continue;
            }
            CertConfig local = cfg;
            local.seed = hash_combine(cfg.seed, 0x5100 + wm);
            const SizeHolderFit f = fit_size_holder(spec_point_kernel(*spec, flags, weight), n, c.set, rep.delta, local);
            c.constant = f.constant;
            c.witness = f.to_json();
            if (!f.stable)
                c.note = "supremum still growing after sample doubling";
            finish(c, f.worst());
        }

        std::vector<double> factor_c(static_cast<std::size_t>(n), 0.0);
        if (pointwise && op)
            for (int i = 0; i < n; ++i) {
                CertConfig local = cfg;
                local.seed = hash_combine(cfg.seed, 0xfac0 + static_cast<unsigned>(i));
                factor_c[static_cast<std::size_t>(i)] = factor_size_holder(*spec, i, flags[static_cast<std::size_t>(i)], rep.delta, local);
            }
        for (unsigned vm = 1; vm + 1 < all; ++vm) {
            Condition c{"partial-kernel", S, subset_flags(n, vm), 0.0, true, false, {}, {}};
            if (!op) {
                skip(c, "kernel has no operator matrix");
                continue;
            }
            if (!pointwise) {
                skip(c, tensor ? "no pointwise kernel" : "non-tensor operator");
                continue;
            }
            const OperatorHandle opS = op->partial_adjoint(S);
            std::vector<double> fc;
            for (int i = 0; i < n; ++i)
                if (c.set[static_cast<std::size_t>(i)])
                    fc.push_back(factor_c[static_cast<std::size_t>(i)]);
            // unit-norm Haar test functions in the parameters outside V
            const GridAxes axes(s, grids[0]);
            Rng rng(hash_combine(cfg.seed, 0xa700 + vm + 64 * sm));
            PartialKernelFit worst;
            for (int t = 0; t < std::max(1, cfg.partial_pairs); ++t) {
                std::vector<std::vector<double>> f(static_cast<std::size_t>(n)), g(static_cast<std::size_t>(n));
                for (int i = 0; i < n; ++i) {
                    const auto u = static_cast<std::size_t>(i);
                    if (c.set[u])
                        continue;
                    const std::size_t cells = axes[i].cells();
                    f[u] = axes[i].haar_function(1 + rng.below(cells - 1));
                    g[u] = t == 0 ? f[u] : axes[i].haar_function(1 + rng.below(cells - 1));
                }
                const PartialKernelFit p = check_partial_kernel(opS, c.set, f, g, cfg, fc);
                if (t == 0 || p.constant > worst.constant)
                    worst = p;
            }
            c.constant = worst.constant;
            c.witness = worst.to_json();
            finish(c, c.constant);
        }

        for (unsigned wm = 0; wm < all; ++wm) {
            Condition c{"bmo-wbp", S, subset_flags(n, wm), 0.0, true, false, {}, {}};
            if (!op) {
                skip(c, "kernel has no operator matrix");
                continue;
            }
            const BmoWbpTable t =
                check_bmo_wbp(op->partial_adjoint(S), c.set, levels, grids, cfg.boxes_per_level, hash_combine(cfg.seed, 0xb300 + wm + 64 * sm));
            c.constant = t.max_ratio;
            c.witness = t.to_json();
            finish(c, c.constant);
        }
    }

    for (const auto& c : rep.conditions)
        if (!c.skipped) {
            rep.max_constant = std::max(rep.max_constant, c.constant);
            rep.pass = rep.pass && c.pass;
        }
    rep.operator_norm = op ? operator_norm(*op, cfg.norm_iters, cfg.seed) : std::numeric_limits<double>::infinity();
    if (!std::isfinite(rep.operator_norm))
        rep.pass = false;
    return rep;
}

} // namespace detail

//
// All three families of conditions for every partial adjoint T_S. Pass iff every
// fitted constant is finite and below the threshold.
//
inline CertReport certify_all(const OperatorHandle& op, const CertConfig& cfg)
{
    const KernelSpec* spec = op.kernel() ? &*op.kernel() : nullptr;
    return detail::certify_impl(op.space(), op.name(), spec, &op, cfg);
}

// Certification straight from a kernel; a kernel that is not locally integrable
// gets the pointwise conditions only and an infinite operator norm.
inline CertReport certify_kernel(const TorusSpace& s, const KernelSpec& k, const CertConfig& cfg, QuadratureOptions opt = {})
{
    std::optional<OperatorHandle> op;
    try {
        op = OperatorHandle::from_kernel(s, k, opt);
    } catch (const NumericalError&) {
        if (!has_point_kernel(k))
            throw;
    }
    return detail::certify_impl(s, k.name, &k, op ? &*op : nullptr, cfg);
}

} // namespace dyadic

#endif // DYADIC_CERTIFY_HPP
