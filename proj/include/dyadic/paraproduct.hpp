#ifndef DYADIC_PARAPRODUCT_HPP
#define DYADIC_PARAPRODUCT_HPP

#include <vector>

#include "carleson.hpp"
#include "common.hpp"
#include "grid.hpp"
#include "haar.hpp"
#include "kernel.hpp"
#include "shift.hpp"

namespace dyadic {

//
// Pi_b f = sum over cancellative cube tuples (V_1, ..., V_m) of
//   <b, (x) h_{V_s}> <f, h_{V_1} (x) ... (x) h_{V_{m-1}} (x) h1_{V_m}>
//   h1_{V_1} (x) ... (x) h1_{V_{m-1}} (x) h_{V_m} prod |V_s|^{-1/2}
// with h1_V = |V|^{-1/2} chi_V. Both b and f live on the acting parameters.
//
struct ParaproductSpec {
    MultiFunction b;
    GridShift grid;
    bool adjoint = false;

    int parameters() const { return b.space.n; }

    ParaproductSpec adjoint_spec() const
    {
        ParaproductSpec a = *this;
        a.adjoint = !adjoint;
        return a;
    }

    void validate() const
    {
        b.space.validate();
        require(grid.compatible(b.space), "paraproduct: grid does not match the symbol");
        require(b.space.n >= 1 && b.space.n <= 3, "paraproduct: one to three acting parameters");
    }
};

namespace detail {

// the unnormalized action; transpose = true swaps the roles of input and output slots
inline MultiFunction para_run(const ParaproductSpec& spec, const MultiFunction& f, bool transpose)
{
    spec.validate();
    require(spec.b.space.same_shape(f.space), "paraproduct: space mismatch");
    const int n = spec.b.space.n;
    const GridAxes axes(spec.b.space, spec.grid);
    const std::vector<double> bh = haar_forward_values(spec.b.values, axes);

    // f-side slot kind: Haar before the last parameter, box in the last one;
    // output side is the opposite. Transposition swaps the two sides.
    auto in_box = [&](int s) { return transpose ? s != n - 1 : s == n - 1; };
    Shape shape{spec.b.space.shape()};
    std::vector<double> coeffs = f.values;
    for (int s = 0; s < n; ++s)
        coeffs = analyze_axis(coeffs, shape, s, axes[s], in_box(s));
    const Shape in_shape = shape;
    Shape out_shape{{}};
    for (int s = 0; s < n; ++s)
        out_shape.extents.push_back(in_box(s) ? axes[s].cells() : axes[s].box_count());
    std::vector<double> out(out_shape.size(), 0.0);

    std::vector<std::size_t> slot(static_cast<std::size_t>(n), 1);
    const Shape b_shape{spec.b.space.shape()};
    while (true) {
        std::size_t bi = 0, ii = 0, oi = 0;
        double w = 1.0;
        for (int s = 0; s < n; ++s) {
            const auto u = static_cast<std::size_t>(s);
            const HaarAxis& ax = axes[s];
            const std::size_t sl = slot[u];
            const std::size_t box = ax.box_index(ax.slot_level(sl), ax.slot_pos(sl));
            bi = bi * b_shape.extents[u] + sl;
            ii = ii * in_shape.extents[u] + (in_box(s) ? box : sl);
            oi = oi * out_shape.extents[u] + (in_box(s) ? sl : box);
            w /= std::sqrt(ax.slot_volume(sl));
        }
        const double c = bh[bi];
        if (c != 0.0)
            out[oi] += c * w * coeffs[ii];
        int a = n - 1;
        while (a >= 0 && ++slot[static_cast<std::size_t>(a)] == axes[a].cells())
            slot[static_cast<std::size_t>(a--)] = 1;
        if (a < 0)
            break;
    }

    Shape os = out_shape;
    for (int s = 0; s < n; ++s)
        out = synthesize_axis(out, os, s, axes[s], !in_box(s));
    return {spec.b.space, std::move(out)};
}

} // namespace detail

inline MultiFunction para_apply(const ParaproductSpec& spec, const MultiFunction& f)
{
    return detail::para_run(spec, f, spec.adjoint);
}

inline MultiFunction para_adjoint_apply(const ParaproductSpec& spec, const MultiFunction& f)
{
    return detail::para_run(spec, f, !spec.adjoint);
}

struct ParaNormReport {
    double op_norm = 0.0;
    double bmo = 0.0;
    double ratio = 0.0;
    std::string family;
};

// operator norm by power iteration over the best of `trials` starts, over the Carleson estimate of b
inline ParaNormReport para_norm_vs_bmo(const ParaproductSpec& spec, int trials, std::uint64_t seed, int iters = 60)
{
    spec.validate();
    require(trials >= 1, "para_norm_vs_bmo: trials >= 1");
    const TorusSpace& s = spec.b.space;
    auto fwd = [&](const std::vector<double>& v) { return para_apply(spec, MultiFunction{s, v}).values; };
    auto bwd = [&](const std::vector<double>& v) { return para_adjoint_apply(spec, MultiFunction{s, v}).values; };
    ParaNormReport rep;
    for (int t = 0; t < trials; ++t)
        rep.op_norm = std::max(rep.op_norm, power_norm(fwd, bwd, s.total_cells(), iters, hash_combine(seed, static_cast<std::uint64_t>(t))).norm);
    const CarlesonReport c = carleson_rect(spec.b, spec.grid);
    rep.bmo = c.value;
    rep.family = c.family;
    const double scale = std::max(1.0, norm2(spec.b));
    if (rep.bmo <= 1e-14 * scale) {
        if (rep.op_norm > 1e-10 * scale)
            throw NumericalError("para_norm_vs_bmo: zero BMO estimate with a nonzero operator norm");
        rep.ratio = 0.0;
        return rep;
    }
    rep.ratio = rep.op_norm / rep.bmo;
    return rep;
}

// T^*(1) on the full operator, the term VIII symbol
inline MultiFunction adjoint_of_one(const OperatorHandle& op)
{
    return apply(op.adjoint(), MultiFunction::constant(op.space(), 1.0));
}

} // namespace dyadic

#endif // DYADIC_PARAPRODUCT_HPP
