#ifndef DYADIC_KERNEL_HPP
#define DYADIC_KERNEL_HPP

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "grid.hpp"
#include "haar.hpp"

namespace dyadic {

enum class KernelKind { PeriodicHilbert, Modulated, RoughPower, Tabulated };

// a(x) = sum_k cos_k cos(2 pi k x) + sin_k sin(2 pi k x), k = 0, 1, ...
struct FourierSeries {
    std::vector<double> cos_terms{1.0};
    std::vector<double> sin_terms;

    double operator()(double x) const
    {
        double s = 0.0;
        for (std::size_t k = 0; k < cos_terms.size(); ++k)
            s += cos_terms[k] * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) * x);
        for (std::size_t k = 0; k < sin_terms.size(); ++k)
            s += sin_terms[k] * std::sin(2.0 * std::numbers::pi * static_cast<double>(k) * x);
        return s;
    }
    double derivative(double x) const
    {
        double s = 0.0;
        const double w = 2.0 * std::numbers::pi;
        for (std::size_t k = 0; k < cos_terms.size(); ++k)
            s -= cos_terms[k] * w * static_cast<double>(k) * std::sin(w * static_cast<double>(k) * x);
        for (std::size_t k = 0; k < sin_terms.size(); ++k)
            s += sin_terms[k] * w * static_cast<double>(k) * std::cos(w * static_cast<double>(k) * x);
        return s;
    }
    double sup_bound() const
    {
        double s = 0.0;
        for (double c : cos_terms)
            s += std::abs(c);
        for (double c : sin_terms)
            s += std::abs(c);
        return s;
    }
};

// Shortest signed representative of x - y on the unit circle, in (-1/2, 1/2].
inline double wrap_difference(double u)
{
    u = u - std::floor(u + 0.5);
    return u == -0.5 ? 0.5 : u;
}

inline double torus_abs(double u) { return std::abs(wrap_difference(u)); }

//
// One-parameter kernel descriptor.
//
struct KernelDescriptor {
    KernelKind kind = KernelKind::PeriodicHilbert;
    double scale = 1.0;
    FourierSeries a, b;          // modulated
    double beta = 0.5;           // rough-power exponent
    std::vector<double> table;   // tabulated cell matrix, row-major
    int dim = 1;

    static KernelDescriptor hilbert(double scale = 1.0)
    {
        KernelDescriptor k;
        k.scale = scale;
        return k;
    }
    static KernelDescriptor modulated(FourierSeries a, FourierSeries b, double scale = 1.0)
    {
        KernelDescriptor k;
        k.kind = KernelKind::Modulated;
        k.a = std::move(a);
        k.b = std::move(b);
        k.scale = scale;
        return k;
    }
    static KernelDescriptor rough(double beta, double scale = 1.0)
    {
        KernelDescriptor k;
        k.kind = KernelKind::RoughPower;
        k.beta = beta;
        k.scale = scale;
        return k;
    }
    static KernelDescriptor tabulated(std::vector<double> table, int dim = 1)
    {
        KernelDescriptor k;
        k.kind = KernelKind::Tabulated;
        k.table = std::move(table);
        k.dim = dim;
        return k;
    }
    // M = h * identity: the identity operator
    static KernelDescriptor identity(int depth, int dim = 1)
    {
        const std::size_t m = std::size_t{1} << (depth * dim);
        std::vector<double> t(m * m, 0.0);
        const double h = std::ldexp(1.0, -depth * dim);
        for (std::size_t i = 0; i < m; ++i)
            t[i * m + i] = h;
        return tabulated(std::move(t), dim);
    }
    static KernelDescriptor zero(int depth, int dim = 1)
    {
        const std::size_t m = std::size_t{1} << (depth * dim);
        return tabulated(std::vector<double>(m * m, 0.0), dim);
    }

    bool antisymmetric() const { return kind == KernelKind::PeriodicHilbert; }
    bool pointwise() const { return kind != KernelKind::Tabulated; }
    // the diagonal is handled as a principal value (true) or as an honest integral
    bool principal_value() const { return kind == KernelKind::PeriodicHilbert || kind == KernelKind::Modulated; }

    // K(x, y) off the diagonal
    double evaluate(double x, double y) const
    {
        switch (kind) {
        case KernelKind::PeriodicHilbert:
            return scale / std::tan(std::numbers::pi * (x - y));
        case KernelKind::Modulated:
            return scale * a(x) * b(y) / std::tan(std::numbers::pi * (x - y));
        case KernelKind::RoughPower:
            return scale * std::pow(torus_abs(x - y), -beta);
        case KernelKind::Tabulated:
            break;
        }
        throw ConfigError("tabulated kernels have no pointwise evaluation");
    }

    std::string name() const
    {
        switch (kind) {
        case KernelKind::PeriodicHilbert:
            return "periodic-hilbert";
        case KernelKind::Modulated:
            return "modulated";
        case KernelKind::RoughPower:
            return "rough-power";
        case KernelKind::Tabulated:
            return "tabulated";
        }
        return "?";
    }
};

// Tensor kernel K(x, y) = prod_i K_i(x_i, y_i).
struct KernelSpec {
    std::string name;
    std::vector<KernelDescriptor> factors;
};

//
// M[c][c'] ~ int_c int_c' K(x, y) dy dx. <T u, v> = v^T M u for cell vectors u, v.
//
struct PairingMatrix {
    std::size_t size = 0;
    double cell_volume = 0.0;
    bool antisymmetric = false;
    std::vector<double> m;

    double operator()(std::size_t r, std::size_t c) const { return m[r * size + c]; }
};

struct QuadratureOptions {
    int order = 4;
    int halvings = 6;
};

namespace detail {

// cot(pi u) - 1/(pi u), analytic on (-1, 1)
inline double cot_smooth(double u)
{
    const double z = std::numbers::pi * u;
    if (std::abs(z) < 0.1) {
        const double z2 = z * z;
        return -z * (1.0 / 3.0 + z2 * (1.0 / 45.0 + z2 * (2.0 / 945.0 + z2 * (1.0 / 4725.0))));
    }
    return 1.0 / std::tan(z) - 1.0 / z;
}

// second antiderivative of 1/u
inline double phi_log(double u) { return u == 0.0 ? 0.0 : u * std::log(std::abs(u)) - u; }

// int_{[a,a+h]} int_{[b,b+h]} 1/(x - y) dy dx with D = a - b (principal value when D = 0)
inline double inverse_second_difference(double D, double h) { return phi_log(D + h) - 2.0 * phi_log(D) + phi_log(D - h); }

inline double phi_power(double u, double beta) { return std::pow(std::abs(u), 2.0 - beta) / ((1.0 - beta) * (2.0 - beta)); }

// integral of fn over [lo, hi] with Gauss rule, graded toward the listed endpoints
template <class Fn>
double graded_integral(Fn&& fn, double lo, double hi, const GaussRule& rule, int halvings, bool grade_lo, bool grade_hi)
{
    auto gauss = [&](double a, double b) {
        const double c = 0.5 * (a + b), r = 0.5 * (b - a);
        double s = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i)
            s += rule.weights[i] * fn(c + r * rule.nodes[i]);
        return s * r;
    };
    if (!grade_lo && !grade_hi)
        return gauss(lo, hi);
    if (grade_lo && grade_hi) {
        const double mid = 0.5 * (lo + hi);
        return graded_integral(fn, lo, mid, rule, halvings, true, false) + graded_integral(fn, mid, hi, rule, halvings, false, true);
    }
    double s = 0.0;
    double len = hi - lo;
    if (grade_lo) {
        double a = lo + len * std::ldexp(1.0, -halvings);
        s += gauss(lo, a);
        for (int k = halvings; k >= 1; --k) {
            const double b = lo + len * std::ldexp(1.0, -(k - 1));
            s += gauss(a, b);
            a = b;
        }
    } else {
        double b = hi - len * std::ldexp(1.0, -halvings);
        s += gauss(b, hi);
        for (int k = halvings; k >= 1; --k) {
            const double a = hi - len * std::ldexp(1.0, -(k - 1));
            s += gauss(a, b);
            b = a;
        }
    }
    return s;
}

// int_{x0}^{x0+h} w(x) ln|sin(pi (x - y))| dx. A log singularity sitting on a
// cell endpoint is removed analytically; the t ln t remainder is graded.
template <class Fn>
double log_sine_moment(Fn&& w, double x0, double h, double y, const GaussRule& rule, int halvings)
{
    const double xs = y + std::round(x0 + 0.5 * h - y);
    const double pi = std::numbers::pi;
    const bool at_lo = std::abs(xs - x0) < 0.25 * h, at_hi = std::abs(xs - x0 - h) < 0.25 * h;
    if (!at_lo && !at_hi) {
        auto f = [&](double x) { return w(x) * std::log(std::abs(std::sin(pi * (x - y)))); };
        const double gap_lo = std::abs(wrap_difference(x0 - y)), gap_hi = std::abs(wrap_difference(x0 + h - y));
        const bool close = std::min(gap_lo, gap_hi) < 1.5 * h;
        return graded_integral(f, x0, x0 + h, rule, close ? halvings : 0, close && gap_lo < gap_hi, close && gap_hi <= gap_lo);
    }
    const double ws = w(xs);
    auto rest = [&](double x) {
        const double u = x - xs;
        const double z = pi * u;
        const double sinc = std::abs(z) < 1e-6 ? 1.0 - z * z / 6.0 : std::sin(z) / z;
        return w(x) * (std::log(sinc) + std::log(pi)) + (w(x) - ws) * std::log(std::abs(u));
    };
    auto phi1 = [](double t) { return t == 0.0 ? 0.0 : t * std::log(std::abs(t)) - t; };
    return graded_integral(rest, x0, x0 + h, rule, halvings, at_lo, at_hi) + ws * (phi1(x0 + h - xs) - phi1(x0 - xs));
}

} // namespace detail

inline PairingMatrix build_pairing_matrix(const KernelDescriptor& k, int depth, QuadratureOptions opt = {})
{
    require(depth >= 1 && depth <= 16, "build_pairing_matrix: depth out of range");
    PairingMatrix pm;
    pm.size = std::size_t{1} << (depth * k.dim);
    pm.cell_volume = std::ldexp(1.0, -depth * k.dim);
    pm.antisymmetric = k.antisymmetric();
    const std::size_t M = pm.size;

    if (k.kind == KernelKind::Tabulated) {
        require(k.table.size() == M * M, "tabulated kernel: table size does not match depth");
        pm.m = k.table;
        return pm;
    }
    require(k.dim == 1, "analytic kernels are one-dimensional");
    require(M * M <= (std::size_t{1} << 26), "pairing matrix too large");
    const double h = pm.cell_volume;
    const GaussRule rule = gauss_legendre(opt.order);
    pm.m.assign(M * M, 0.0);

    if (k.kind == KernelKind::PeriodicHilbert) {
        // circulant: entry depends on (c - c') mod M only
        std::vector<double> F(M, 0.0);
        for (std::size_t d = 1; d < M / 2; ++d) {
            const double D = static_cast<double>(d) * h;
            double smooth = 0.0;
            for (std::size_t a = 0; a < rule.nodes.size(); ++a)
                for (std::size_t b = 0; b < rule.nodes.size(); ++b)
                    smooth += rule.weights[a] * rule.weights[b] * detail::cot_smooth(D + 0.5 * h * (rule.nodes[a] - rule.nodes[b]));
            smooth *= 0.25 * h * h;
            F[d] = k.scale * (detail::inverse_second_difference(D, h) / std::numbers::pi + smooth);
            F[M - d] = -F[d];
        }
        for (std::size_t r = 0; r < M; ++r)
            for (std::size_t c = 0; c < M; ++c)
                pm.m[r * M + c] = F[(r + M - c) % M];
        return pm;
    }

    if (k.kind == KernelKind::RoughPower) {
        if (k.beta >= 1.0)
            throw NumericalError("rough-power kernel with beta >= 1 is not integrable on the diagonal; matrix not produced");
        const double beta = k.beta;
        auto phi = [&](double u) { return std::pow(torus_abs(u), -beta); };
        std::vector<double> F(M, 0.0);
        for (std::size_t d = 0; d <= M / 2; ++d) {
            const double D = static_cast<double>(d) * h;
            double val;
            if (D <= h) {
                val = detail::phi_power(D + h, beta) - 2.0 * detail::phi_power(D, beta) + detail::phi_power(D - h, beta);
            } else {
                // int phi(D + v) (h - |v|) dv, split at v = 0 and at the fold |D + v| = 1/2
                auto tri = [&](double v) { return phi(D + v) * (h - std::abs(v)); };
                double s = 0.0;
                std::vector<double> cuts{-h, 0.0, h};
                if (0.5 - D > -h && 0.5 - D < h)
                    cuts.push_back(0.5 - D);
                std::sort(cuts.begin(), cuts.end());
                const bool close = D < 3.0 * h;
                for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
                    if (cuts[i + 1] > cuts[i])
                        s += detail::graded_integral(tri, cuts[i], cuts[i + 1], rule, close ? opt.halvings : 0, close && cuts[i] == -h, false);
                val = s;
            }
            F[d] = k.scale * val;
            F[(M - d) % M] = F[d];
        }
        for (std::size_t r = 0; r < M; ++r)
            for (std::size_t c = 0; c < M; ++c)
                pm.m[r * M + c] = F[(r + M - c) % M];
        return pm;
    }

    // modulated: a(x)(b(y) - b(x)) cot(pi(x-y)) is smooth; the a(x)b(x) cot part
    // is integrated in y exactly and in x with endpoint grading.
    auto smooth_part = [&](double x, double y) {
        const double u = wrap_difference(x - y);
        if (std::abs(u) < 1e-13)
            return -k.a(x) * k.b.derivative(x) / std::numbers::pi;
        return k.a(x) * (k.b(y) - k.b(x)) / std::tan(std::numbers::pi * u);
    };
    for (std::size_t r = 0; r < M; ++r) {
        const double x0 = static_cast<double>(r) * h;
        for (std::size_t c = 0; c < M; ++c) {
            const double y0 = static_cast<double>(c) * h;
            double s = 0.0;
            for (std::size_t ia = 0; ia < rule.nodes.size(); ++ia)
                for (std::size_t ib = 0; ib < rule.nodes.size(); ++ib) {
                    const double x = x0 + 0.5 * h * (1.0 + rule.nodes[ia]);
                    const double y = y0 + 0.5 * h * (1.0 + rule.nodes[ib]);
                    s += rule.weights[ia] * rule.weights[ib] * smooth_part(x, y);
                }
            s *= 0.25 * h * h;
            auto w = [&](double x) { return k.a(x) * k.b(x) / std::numbers::pi; };
            s += detail::log_sine_moment(w, x0, h, y0, rule, opt.halvings) - detail::log_sine_moment(w, x0, h, y0 + h, rule, opt.halvings);
            pm.m[r * M + c] = k.scale * s;
        }
    }
    return pm;
}

//
// Operator given as a finite sum of tensor terms sum_r w_r (x)_i T_{r,i},
// with per-parameter adjoint flags realizing the partial adjoints T_S.
//
struct TensorTerm {
    double weight = 1.0;
    std::vector<std::shared_ptr<const PairingMatrix>> factors;
};

class OperatorHandle {
public:
    OperatorHandle() = default;
    OperatorHandle(TorusSpace space, std::vector<TensorTerm> terms, std::string name = {})
        : space_(std::move(space)), terms_(std::move(terms)), adjoint_(static_cast<std::size_t>(space_.n), false), name_(std::move(name))
    {
        require(!terms_.empty(), "operator needs at least one term");
        for (const auto& t : terms_) {
            require(static_cast<int>(t.factors.size()) == space_.n, "operator term needs one factor per parameter");
            for (int i = 0; i < space_.n; ++i)
                require(t.factors[static_cast<std::size_t>(i)] && t.factors[static_cast<std::size_t>(i)]->size == space_.axis_cells(i),
                        "operator factor size does not match the space");
        }
    }

    static OperatorHandle from_kernel(const TorusSpace& space, const KernelSpec& spec, QuadratureOptions opt = {})
    {
        require(static_cast<int>(spec.factors.size()) == space.n, "kernel spec needs one descriptor per parameter");
        TensorTerm term;
        for (int i = 0; i < space.n; ++i) {
            const auto& d = spec.factors[static_cast<std::size_t>(i)];
            require(d.dim == space.dim(i), "kernel descriptor dimension mismatch");
            term.factors.push_back(std::make_shared<PairingMatrix>(build_pairing_matrix(d, space.depth, opt)));
        }
        OperatorHandle op(space, {term}, spec.name);
        op.kernel_ = spec;
        return op;
    }

    // T_S: flips the adjoint flag of every parameter in S
    OperatorHandle partial_adjoint(const std::vector<bool>& S) const
    {
        require(static_cast<int>(S.size()) == space_.n, "partial_adjoint: one flag per parameter");
        OperatorHandle out = *this;
        for (std::size_t i = 0; i < S.size(); ++i)
            if (S[i])
                out.adjoint_[i] = !out.adjoint_[i];
        return out;
    }
    OperatorHandle adjoint() const { return partial_adjoint(std::vector<bool>(static_cast<std::size_t>(space_.n), true)); }

    OperatorHandle scaled(double c) const
    {
        OperatorHandle out = *this;
        for (auto& t : out.terms_)
            t.weight *= c;
        return out;
    }

    // sum of two operators with identical adjoint flags
    friend OperatorHandle operator+(const OperatorHandle& a, const OperatorHandle& b)
    {
        require(a.space_.same_shape(b.space_) && a.adjoint_ == b.adjoint_, "operator sum: incompatible operands");
        OperatorHandle out = a;
        out.terms_.insert(out.terms_.end(), b.terms_.begin(), b.terms_.end());
        out.kernel_.reset();
        out.name_ = a.name_ + "+" + b.name_;
        return out;
    }

    const TorusSpace& space() const { return space_; }
    const std::vector<TensorTerm>& terms() const { return terms_; }
    const std::vector<bool>& adjoint_flags() const { return adjoint_; }
    bool adjoint_flag(int i) const { return adjoint_[static_cast<std::size_t>(i)]; }
    bool is_tensor() const { return terms_.size() == 1; }
    const std::optional<KernelSpec>& kernel() const { return kernel_; }
    const std::string& name() const { return name_; }

    // effective entry of factor i of term r (transposed when flagged)
    double entry(std::size_t r, int i, std::size_t row, std::size_t col) const
    {
        const PairingMatrix& m = *terms_[r].factors[static_cast<std::size_t>(i)];
        return adjoint_[static_cast<std::size_t>(i)] ? m(col, row) : m(row, col);
    }

    // effective matrix of factor i of term r, row-major
    std::vector<double> effective(std::size_t r, int i) const
    {
        const PairingMatrix& m = *terms_[r].factors[static_cast<std::size_t>(i)];
        if (!adjoint_[static_cast<std::size_t>(i)])
            return m.m;
        std::vector<double> t(m.m.size());
        for (std::size_t a = 0; a < m.size; ++a)
            for (std::size_t b = 0; b < m.size; ++b)
                t[b * m.size + a] = m.m[a * m.size + b];
        return t;
    }

private:
    TorusSpace space_;
    std::vector<TensorTerm> terms_;
    std::vector<bool> adjoint_;
    std::optional<KernelSpec> kernel_;
    std::string name_;
};

// Cell values of T f: (M_i / h_i) contracted along every axis, summed over terms.
inline MultiFunction apply(const OperatorHandle& op, const MultiFunction& f)
{
    require(op.space().same_shape(f.space), "apply: dimension mismatch");
    const TorusSpace& s = f.space;
    std::vector<double> acc(f.values.size(), 0.0);
    for (std::size_t r = 0; r < op.terms().size(); ++r) {
        Shape shape{s.shape()};
        std::vector<double> cur = f.values;
        for (int i = 0; i < s.n; ++i) {
            const PairingMatrix& m = *op.terms()[r].factors[static_cast<std::size_t>(i)];
            cur = contract_axis(cur, shape, static_cast<std::size_t>(i), m.m, m.size, m.size, op.adjoint_flag(i));
            const double inv_h = 1.0 / m.cell_volume;
            for (double& x : cur)
                x *= inv_h;
        }
        const double w = op.terms()[r].weight;
        for (std::size_t k = 0; k < acc.size(); ++k)
            acc[k] += w * cur[k];
    }
    return {s, std::move(acc)};
}

// <T (u_1 (x) ... (x) u_n), v_1 (x) ... (x) v_n> for cell vectors u_i, v_i
inline double pair_tensor(const OperatorHandle& op, const std::vector<std::vector<double>>& u, const std::vector<std::vector<double>>& v)
{
    const int n = op.space().n;
    require(static_cast<int>(u.size()) == n && static_cast<int>(v.size()) == n, "pair_tensor: one factor per parameter");
    double total = 0.0;
    for (std::size_t r = 0; r < op.terms().size(); ++r) {
        double prod = op.terms()[r].weight;
        for (int i = 0; i < n && prod != 0.0; ++i) {
            const PairingMatrix& m = *op.terms()[r].factors[static_cast<std::size_t>(i)];
            const auto& ui = u[static_cast<std::size_t>(i)];
            const auto& vi = v[static_cast<std::size_t>(i)];
            const bool adj = op.adjoint_flag(i);
            double s = 0.0;
            for (std::size_t a = 0; a < m.size; ++a) {
                if (vi[a] == 0.0)
                    continue;
                double row = 0.0;
                for (std::size_t b = 0; b < m.size; ++b)
                    row += (adj ? m(b, a) : m(a, b)) * ui[b];
                s += vi[a] * row;
            }
            prod *= s;
        }
        total += prod;
    }
    return total;
}

//
// Haar-domain matrices B_{r,i}[J][I] = <T_{r,i} h_I, h_J> on one grid.
//
class HaarPairing {
public:
    HaarPairing(const OperatorHandle& op, const GridAxes& axes) : n_(op.space().n)
    {
        require(op.space().same_shape(axes.space()), "HaarPairing: space mismatch");
        for (std::size_t r = 0; r < op.terms().size(); ++r) {
            weights_.push_back(op.terms()[r].weight);
            std::vector<std::vector<double>> per;
            for (int i = 0; i < n_; ++i) {
                const HaarAxis& ax = axes[i];
                const std::size_t M = ax.cells();
                const double inv_h = 1.0 / ax.cell_volume();
                Shape sh{{M, M}};
                std::vector<double> cur = op.effective(r, i);
                for (std::size_t a = 0; a < 2; ++a)
                    cur = map_axis(cur, sh, a, M, [&](const double* in, double* out) {
                        ax.analyze_haar(in, out);
                        for (std::size_t k = 0; k < M; ++k)
                            out[k] *= inv_h;
                    });
                per.push_back(std::move(cur));
            }
            mats_.push_back(std::move(per));
        }
        for (int i = 0; i < n_; ++i)
            sizes_.push_back(axes[i].cells());
    }

    std::size_t terms() const { return mats_.size(); }
    double weight(std::size_t r) const { return weights_[r]; }
    const std::vector<double>& matrix(std::size_t r, int i) const { return mats_[r][static_cast<std::size_t>(i)]; }
    std::size_t size(int i) const { return sizes_[static_cast<std::size_t>(i)]; }

    double one_d(std::size_t r, int i, std::size_t J, std::size_t I) const { return mats_[r][static_cast<std::size_t>(i)][J * sizes_[static_cast<std::size_t>(i)] + I]; }

    // <T (x)h_{I_i}, (x)h_{J_i}>
    double pair(const std::vector<std::size_t>& I, const std::vector<std::size_t>& J) const
    {
        double total = 0.0;
        for (std::size_t r = 0; r < mats_.size(); ++r) {
            double p = weights_[r];
            for (int i = 0; i < n_; ++i)
                p *= one_d(r, i, J[static_cast<std::size_t>(i)], I[static_cast<std::size_t>(i)]);
            total += p;
        }
        return total;
    }

private:
    int n_;
    std::vector<double> weights_;
    std::vector<std::vector<std::vector<double>>> mats_;
    std::vector<std::size_t> sizes_;
};

inline double pair_haar(const OperatorHandle& op, const GridAxes& axes, const std::vector<std::size_t>& hf, const std::vector<std::size_t>& hg)
{
    return HaarPairing(op, axes).pair(hf, hg);
}

// General path: build the Haar tensors as functions, apply, pair.
inline double pair_haar_direct(const OperatorHandle& op, const GridAxes& axes, const std::vector<std::size_t>& hf, const std::vector<std::size_t>& hg)
{
    const TorusSpace& s = op.space();
    std::vector<std::vector<double>> u, v;
    for (int i = 0; i < s.n; ++i) {
        u.push_back(axes[i].haar_function(hf[static_cast<std::size_t>(i)]));
        v.push_back(axes[i].haar_function(hg[static_cast<std::size_t>(i)]));
    }
    return inner(apply(op, MultiFunction::tensor(s, u)), MultiFunction::tensor(s, v));
}

//
// Power iteration on A^* A for a linear map on weighted l^2 (weight = cell
// volume). Returns the running max of sqrt(Rayleigh quotient).
//
struct NormEstimate {
    double norm = 0.0;
    std::vector<double> history;
};

inline NormEstimate power_norm(const std::function<std::vector<double>(const std::vector<double>&)>& forward,
                               const std::function<std::vector<double>(const std::vector<double>&)>& adjoint, std::size_t dim, int iters,
                               std::uint64_t seed)
{
    require(iters >= 1, "power iteration needs iters >= 1");
    Rng rng(mix64(seed ^ 0x9011ULL));
    std::vector<double> v(dim);
    for (double& x : v)
        x = rng.normal();
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> p(a.size());
        for (std::size_t i = 0; i < a.size(); ++i)
            p[i] = a[i] * b[i];
        return tree_sum(p);
    };
    NormEstimate est;
    double vv = dot(v, v);
    for (int it = 0; it < iters; ++it) {
        const std::vector<double> z = adjoint(forward(v));
        const double lambda = dot(z, v) / vv;
        est.norm = std::max(est.norm, std::sqrt(std::max(lambda, 0.0)));
        est.history.push_back(est.norm);
        const double zz = dot(z, z);
        if (zz == 0.0)
            break;
        const double inv = 1.0 / std::sqrt(zz);
        for (std::size_t i = 0; i < dim; ++i)
            v[i] = z[i] * inv;
        vv = 1.0;
    }
    return est;
}

inline double operator_norm(const OperatorHandle& op, int iters, std::uint64_t seed)
{
    const TorusSpace& s = op.space();
    const OperatorHandle adj = op.adjoint();
    auto fwd = [&](const std::vector<double>& v) { return apply(op, MultiFunction{s, v}).values; };
    auto bwd = [&](const std::vector<double>& v) { return apply(adj, MultiFunction{s, v}).values; };
    return power_norm(fwd, bwd, s.total_cells(), iters, seed).norm;
}

} // namespace dyadic

#endif // DYADIC_KERNEL_HPP
