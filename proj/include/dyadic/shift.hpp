#ifndef DYADIC_SHIFT_HPP
#define DYADIC_SHIFT_HPP

#include <functional>
#include <ostream>
#include <vector>

#include "common.hpp"
#include "grid.hpp"
#include "haar.hpp"
#include "kernel.hpp"

namespace dyadic {

// One parameter's cube triple: K at `level`, I at level + i_s, J at level + j_s.
struct ShiftIndex {
    int level = 0;
    std::size_t K = 0, I = 0, J = 0;
};

using ShiftTuple = std::vector<ShiftIndex>;
using CoefficientProvider = std::function<double(const ShiftTuple&)>;

//
// S f = sum over K-tuples and admissible (I, J)-tuples of
// a(K, I, J) <f, (x) h_{I_s}> (x) h_{J_s}. Pattern 0 selects the
// noncancellative |I|^{-1/2} chi_I, any other pattern a cancellative Haar.
//
struct ShiftSpec {
    TorusSpace space;
    GridShift grid;
    std::vector<int> i, j;
    std::vector<std::size_t> pattern_i, pattern_j;
    CoefficientProvider provider;

    static ShiftSpec make(const TorusSpace& space, const GridShift& grid, std::vector<int> i, std::vector<int> j, CoefficientProvider provider = {})
    {
        ShiftSpec s;
        s.space = space;
        s.grid = grid;
        s.i = std::move(i);
        s.j = std::move(j);
        s.pattern_i.assign(static_cast<std::size_t>(space.n), 1);
        s.pattern_j.assign(static_cast<std::size_t>(space.n), 1);
        s.provider = std::move(provider);
        return s;
    }

    bool cancellative() const
    {
        for (std::size_t s = 0; s < pattern_i.size(); ++s)
            if (pattern_i[s] == 0 || pattern_j[s] == 0)
                return false;
        return true;
    }

    // highest admissible level of K in parameter s
    int max_k_level(int s) const
    {
        const auto u = static_cast<std::size_t>(s);
        const int top_i = pattern_i[u] ? space.depth - 1 : space.depth;
        const int top_j = pattern_j[u] ? space.depth - 1 : space.depth;
        return std::min(top_i - i[u], top_j - j[u]);
    }

    void validate() const
    {
        space.validate();
        require(grid.compatible(space), "shift: grid does not match space");
        const auto n = static_cast<std::size_t>(space.n);
        require(i.size() == n && j.size() == n && pattern_i.size() == n && pattern_j.size() == n, "shift: one complexity pair and pattern pair per parameter");
        require(static_cast<bool>(provider), "shift: missing coefficient provider");
        bool has_zero_pair = false;
        for (int s = 0; s < space.n; ++s) {
            const auto u = static_cast<std::size_t>(s);
            require(i[u] >= 0 && j[u] >= 0, "shift: complexities must be nonnegative");
            require(pattern_i[u] < (std::size_t{1} << space.dim(s)) && pattern_j[u] < (std::size_t{1} << space.dim(s)), "shift: Haar pattern out of range");
            require(max_k_level(s) >= 0, "shift: complexity exceeds depth");
            has_zero_pair = has_zero_pair || (i[u] == 0 && j[u] == 0);
        }
        require(cancellative() || has_zero_pair, "shift: noncancellative Haar functions need some (i_s, j_s) = (0, 0)");
    }

    // prod_s sqrt(|I_s||J_s|)/|K_s|; depends only on the complexities
    double bound() const
    {
        double b = 1.0;
        for (int s = 0; s < space.n; ++s) {
            const auto u = static_cast<std::size_t>(s);
            b *= std::pow(2.0, -0.5 * (i[u] + j[u]) * space.dim(s));
        }
        return b;
    }

    ShiftSpec adjoint() const
    {
        ShiftSpec a = *this;
        std::swap(a.i, a.j);
        std::swap(a.pattern_i, a.pattern_j);
        a.provider = [p = provider](const ShiftTuple& t) {
            ShiftTuple swapped = t;
            for (auto& e : swapped)
                std::swap(e.I, e.J);
            return p(swapped);
        };
        return a;
    }
};

// a = +-bound with a sign hashed from the tuple (pure, saturates the bound).
inline CoefficientProvider saturated_sign_provider(const ShiftSpec& spec, std::uint64_t seed)
{
    const double b = spec.bound();
    return [b, seed](const ShiftTuple& t) {
        std::uint64_t h = seed;
        for (const auto& e : t) {
            h = hash_combine(h, static_cast<std::uint64_t>(e.level));
            h = hash_combine(h, e.K);
            h = hash_combine(h, e.I);
            h = hash_combine(h, e.J);
        }
        return (mix64(h) >> 63) ? b : -b;
    };
}

inline CoefficientProvider constant_provider(double a)
{
    return [a](const ShiftTuple&) { return a; };
}

namespace detail {

// transform along one axis: Haar slots (pattern != 0) or boxes (pattern 0)
inline std::vector<double> analyze_axis(const std::vector<double>& data, Shape& shape, int axis, const HaarAxis& ax, bool boxes)
{
    return map_axis(data, shape, static_cast<std::size_t>(axis), boxes ? ax.box_count() : ax.cells(), [&](const double* in, double* out) {
        if (boxes)
            ax.analyze_box(in, out);
        else
            ax.analyze_haar(in, out);
    });
}

inline std::vector<double> synthesize_axis(const std::vector<double>& data, Shape& shape, int axis, const HaarAxis& ax, bool boxes)
{
    return map_axis(data, shape, static_cast<std::size_t>(axis), ax.cells(), [&](const double* in, double* out) {
        if (boxes)
            ax.synthesize_box(in, out);
        else
            ax.synthesize_haar(in, out);
    });
}

struct ShiftOutput {
    ShiftIndex index;
    std::size_t out_slot = 0;
    std::vector<std::pair<std::size_t, std::size_t>> inputs; // (I position, input slot)
};

inline std::vector<ShiftOutput> shift_plan(const ShiftSpec& spec, const HaarAxis& ax, int s)
{
    const auto u = static_cast<std::size_t>(s);
    const int gi = spec.i[u], gj = spec.j[u];
    const std::size_t pi = spec.pattern_i[u], pj = spec.pattern_j[u];
    std::vector<ShiftOutput> plan;
    for (int k = 0; k <= spec.max_k_level(s); ++k)
        for (std::size_t K = 0; K < ax.cubes_at(k); ++K) {
            const auto Is = ax.descendants(k, K, gi);
            for (std::size_t J : ax.descendants(k, K, gj)) {
                ShiftOutput o;
                o.index = ShiftIndex{k, K, 0, J};
                o.out_slot = pj ? ax.slot(k + gj, J, pj) : ax.box_index(k + gj, J);
                for (std::size_t I : Is)
                    o.inputs.emplace_back(I, pi ? ax.slot(k + gi, I, pi) : ax.box_index(k + gi, I));
                plan.push_back(std::move(o));
            }
        }
    return plan;
}

} // namespace detail

inline MultiFunction shift_apply(const ShiftSpec& spec, const MultiFunction& f, int workers = 0)
{
    spec.validate();
    require(spec.space.same_shape(f.space), "shift_apply: space mismatch");
    const int n = spec.space.n;
    const GridAxes axes(spec.space, spec.grid);

    Shape shape{spec.space.shape()};
    std::vector<double> coeffs = f.values;
    for (int s = 0; s < n; ++s)
        coeffs = detail::analyze_axis(coeffs, shape, s, axes[s], spec.pattern_i[static_cast<std::size_t>(s)] == 0);
    const Shape in_shape = shape;

    std::vector<std::vector<detail::ShiftOutput>> plans;
    Shape out_shape{{}};
    for (int s = 0; s < n; ++s) {
        plans.push_back(detail::shift_plan(spec, axes[s], s));
        out_shape.extents.push_back(spec.pattern_j[static_cast<std::size_t>(s)] == 0 ? axes[s].box_count() : axes[s].cells());
    }
    std::vector<double> out(out_shape.size(), 0.0);
    const double bound = spec.bound() * (1.0 + 1e-12);

    parallel_for(plans[0].size(), resolve_workers(workers), [&](std::size_t first) {
        ShiftTuple tuple(static_cast<std::size_t>(n));
        std::vector<std::size_t> pick(static_cast<std::size_t>(n), 0);
        pick[0] = first;
        // iterate the remaining parameters' outputs
        std::function<void(int, std::size_t)> over_outputs = [&](int s, std::size_t out_idx) {
            if (s == n) {
                double acc = 0.0;
                std::function<void(int, std::size_t)> over_inputs = [&](int t, std::size_t in_idx) {
                    if (t == n) {
                        const double a = spec.provider(tuple);
                        if (!(std::abs(a) <= bound))
                            throw ConfigError("shift coefficient exceeds the bound prod sqrt(|I||J|)/|K|");
                        acc += a * coeffs[in_idx];
                        return;
                    }
                    const auto& o = plans[static_cast<std::size_t>(t)][pick[static_cast<std::size_t>(t)]];
                    for (const auto& [I, slot] : o.inputs) {
                        tuple[static_cast<std::size_t>(t)].I = I;
                        over_inputs(t + 1, in_idx * in_shape.extents[static_cast<std::size_t>(t)] + slot);
                    }
                };
                over_inputs(0, 0);
                out[out_idx] += acc;
                return;
            }
            const auto& plan = plans[static_cast<std::size_t>(s)];
            const std::size_t lo = s == 0 ? first : 0, hi = s == 0 ? first + 1 : plan.size();
            for (std::size_t p = lo; p < hi; ++p) {
                pick[static_cast<std::size_t>(s)] = p;
                tuple[static_cast<std::size_t>(s)] = plan[p].index;
                over_outputs(s + 1, out_idx * out_shape.extents[static_cast<std::size_t>(s)] + plan[p].out_slot);
            }
        };
        over_outputs(0, 0);
    });

    for (int s = 0; s < n; ++s)
        out = detail::synthesize_axis(out, out_shape, s, axes[s], spec.pattern_j[static_cast<std::size_t>(s)] == 0);
    return {spec.space, std::move(out)};
}

inline NormEstimate shift_norm_check(const ShiftSpec& spec, int iters, std::uint64_t seed)
{
    const ShiftSpec adj = spec.adjoint();
    const TorusSpace& s = spec.space;
    auto fwd = [&](const std::vector<double>& v) { return shift_apply(spec, MultiFunction{s, v}).values; };
    auto bwd = [&](const std::vector<double>& v) { return shift_apply(adj, MultiFunction{s, v}).values; };
    return power_norm(fwd, bwd, s.total_cells(), iters, seed);
}

// CSV: one row per coefficient, per parameter level,K,I,J then the value.
inline void dump_shift_coefficients(const ShiftSpec& spec, std::ostream& os)
{
    spec.validate();
    const int n = spec.space.n;
    const GridAxes axes(spec.space, spec.grid);
    std::vector<std::vector<detail::ShiftOutput>> plans;
    for (int s = 0; s < n; ++s)
        plans.push_back(detail::shift_plan(spec, axes[s], s));
    for (int s = 0; s < n; ++s)
        os << "level" << s + 1 << ",K" << s + 1 << ",I" << s + 1 << ",J" << s + 1 << ',';
    os << "value\n";
    ShiftTuple tuple(static_cast<std::size_t>(n));
    std::function<void(int)> rec = [&](int s) {
        if (s == n) {
            for (const auto& e : tuple)
                os << e.level << ',' << e.K << ',' << e.I << ',' << e.J << ',';
            os << spec.provider(tuple) << '\n';
            return;
        }
        for (const auto& o : plans[static_cast<std::size_t>(s)])
            for (const auto& in : o.inputs) {
                tuple[static_cast<std::size_t>(s)] = o.index;
                tuple[static_cast<std::size_t>(s)].I = in.first;
                rec(s + 1);
            }
    };
    rec(0);
}

} // namespace dyadic

#endif // DYADIC_SHIFT_HPP
