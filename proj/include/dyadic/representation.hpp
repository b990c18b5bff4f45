#ifndef DYADIC_REPRESENTATION_HPP
#define DYADIC_REPRESENTATION_HPP

#include <array>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "carleson.hpp"
#include "common.hpp"
#include "grid.hpp"
#include "haar.hpp"
#include "kernel.hpp"

namespace dyadic {

enum class CaseTag { Separated, Inside, Equal, Near };

inline const char* case_name(CaseTag t)
{
    switch (t) {
    case CaseTag::Separated:
        return "separated";
    case CaseTag::Inside:
        return "inside";
    case CaseTag::Equal:
        return "equal";
    case CaseTag::Near:
        return "near";
    }
    return "?";
}

// Seven buckets per parameter: tag x orientation, equal only with l(I) = l(J).
constexpr int kBuckets = 7;

inline int bucket_of(CaseTag t, bool i_side)
{
    switch (t) {
    case CaseTag::Separated:
        return i_side ? 0 : 1;
    case CaseTag::Inside:
        return i_side ? 2 : 3;
    case CaseTag::Equal:
        return 4;
    case CaseTag::Near:
        return i_side ? 5 : 6;
    }
    return 4;
}

inline std::string bucket_name(int b)
{
    static const char* names[kBuckets] = {"separated<=", "separated>", "inside<=", "inside>", "equal", "near<=", "near>"};
    return names[b];
}

struct CasePair {
    int param = 0;
    DyadicCube I, J;
    CaseTag tag = CaseTag::Equal;
    bool i_side = true; // l(I) <= l(J)

    int bucket() const { return bucket_of(tag, i_side); }
};

namespace detail {

// Per-slot geometry of one axis; slot 0 stands for the whole torus.
class SlotGeometry {
public:
    SlotGeometry(const TorusSpace& space, const HaarAxis& ax) : ax_(&ax), gamma_(space.gamma(ax.param()))
    {
        const std::size_t M = ax.cells();
        level_.resize(M);
        pos_.resize(M);
        box_.resize(M);
        for (std::size_t s = 0; s < M; ++s) {
            level_[s] = ax.slot_level(s);
            pos_[s] = ax.slot_pos(s);
            box_[s] = box(level_[s], pos_[s]);
        }
    }

    TorusBox box(int level, std::size_t plin) const
    {
        TorusBox b;
        b.side = std::ldexp(1.0, -level);
        for (int t = 0; t < ax_->dim(); ++t)
            b.left.push_back(std::ldexp(static_cast<double>(ax_->left_cells(level, plin, t)), -ax_->depth()));
        return b;
    }

    int level(std::size_t s) const { return level_[s]; }
    std::size_t pos(std::size_t s) const { return pos_[s]; }

    CaseTag tag(int li, std::size_t pi, int lj, std::size_t pj) const { return tag(li, pi, lj, pj, box(li, pi), box(lj, pj)); }

    CaseTag tag(int li, std::size_t pi, int lj, std::size_t pj, const TorusBox& bi, const TorusBox& bj) const
    {
        if (li == lj && pi == pj)
            return CaseTag::Equal;
        if (li > lj && ax_->ancestor(li, pi, lj) == pj)
            return CaseTag::Inside;
        if (lj > li && ax_->ancestor(lj, pj, li) == pi)
            return CaseTag::Inside;
        const double small = std::ldexp(1.0, -std::max(li, lj));
        const double big = std::ldexp(1.0, -std::min(li, lj));
        const double dist = torus_distance(bi, bj);
        return dist > std::pow(small, gamma_) * std::pow(big, 1.0 - gamma_) ? CaseTag::Separated : CaseTag::Near;
    }

    int bucket(std::size_t sI, std::size_t sJ) const
    {
        const int li = level_[sI], lj = level_[sJ];
        return bucket_of(tag(li, pos_[sI], lj, pos_[sJ], box_[sI], box_[sJ]), li >= lj);
    }

    // max(i, j) with i, j the level gaps to the smallest common ancestor
    int complexity(std::size_t sI, std::size_t sJ) const
    {
        int li = level_[sI], lj = level_[sJ];
        std::size_t pi = pos_[sI], pj = pos_[sJ];
        const int top = std::max(li, lj);
        while (li > lj)
            pi = ax_->parent(li--, pi);
        while (lj > li)
            pj = ax_->parent(lj--, pj);
        while (pi != pj) {
            pi = ax_->parent(li--, pi);
            pj = ax_->parent(lj--, pj);
        }
        return top - li;
    }

    int common_level(std::size_t sI, std::size_t sJ) const { return std::max(level_[sI], level_[sJ]) - complexity(sI, sJ); }

private:
    const HaarAxis* ax_;
    double gamma_;
    std::vector<int> level_;
    std::vector<std::size_t> pos_;
    std::vector<TorusBox> box_;
};

//
// out[c_1..c_n] = sum_r w_r sum_{I,J} fc[I] gc[J] prod_i (B_{r,i} o W_{i,c_i})[J_i][I_i]
// for per-parameter families of elementwise weight matrices W_{i,c}.
//
inline std::vector<double> weighted_pairings(const HaarPairing& P, const std::vector<double>& fc, const std::vector<double>& gc,
                                             const std::vector<std::vector<std::vector<double>>>& weights)
{
    const int n = static_cast<int>(weights.size());
    std::size_t total = 1;
    for (const auto& w : weights)
        total *= w.size();
    std::vector<double> out(total, 0.0);
    Shape base{{}};
    for (int i = 0; i < n; ++i)
        base.extents.push_back(P.size(i));

    for (std::size_t r = 0; r < P.terms(); ++r) {
        std::vector<std::vector<std::vector<double>>> masked(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const auto& B = P.matrix(r, i);
            for (const auto& W : weights[static_cast<std::size_t>(i)]) {
                std::vector<double> m(B.size());
                for (std::size_t e = 0; e < B.size(); ++e)
                    m[e] = B[e] * W[e];
                masked[static_cast<std::size_t>(i)].push_back(std::move(m));
            }
        }
        std::function<void(int, const std::vector<double>&, std::size_t)> rec = [&](int i, const std::vector<double>& x, std::size_t idx) {
            if (i == n) {
                double s = 0.0;
                for (std::size_t e = 0; e < x.size(); ++e)
                    s += x[e] * gc[e];
                out[idx] += P.weight(r) * s;
                return;
            }
            const auto& fam = masked[static_cast<std::size_t>(i)];
            const std::size_t M = P.size(i);
            for (std::size_t c = 0; c < fam.size(); ++c) {
                Shape sh = base;
                const std::vector<double> y = contract_axis(x, sh, static_cast<std::size_t>(i), fam[c], M, M);
                rec(i + 1, y, idx * fam.size() + c);
            }
        };
        rec(0, fc, 0);
    }
    return out;
}

inline std::vector<std::vector<double>> bucket_masks(const SlotGeometry& geo, std::size_t M)
{
    std::vector<std::vector<double>> masks(kBuckets, std::vector<double>(M * M, 0.0));
    for (std::size_t J = 0; J < M; ++J)
        for (std::size_t I = 0; I < M; ++I)
            masks[static_cast<std::size_t>(geo.bucket(I, J))][J * M + I] = 1.0;
    return masks;
}

} // namespace detail

inline CasePair classify_pair(const TorusSpace& space, const GridShift& grid, const DyadicCube& I, const DyadicCube& J)
{
    require(I.param == J.param, "classify_pair: cubes from different parameters");
    require(I.param >= 0 && I.param < space.n, "classify_pair: parameter out of range");
    require(I.level >= 0 && I.level <= space.depth && J.level >= 0 && J.level <= space.depth, "classify_pair: level out of range");
    const HaarAxis ax(space, I.param, grid);
    const detail::SlotGeometry geo(space, ax);
    CasePair c;
    c.param = I.param;
    c.I = I;
    c.J = J;
    c.tag = geo.tag(I.level, ax.linear(I.pos, I.level), J.level, ax.linear(J.pos, J.level));
    c.i_side = I.level >= J.level;
    return c;
}

//
// s = chi_{Q^c} (h_big - <h_big>_Q), Q the child of `big` containing `small`.
//
struct SFunction {
    DyadicCube small, big, Q;
    std::size_t pattern = 1;
    double q_average = 0.0;
    std::vector<double> values;
    std::vector<double> h_big;
};

inline SFunction make_s(const TorusSpace& space, const GridShift& grid, const DyadicCube& small, const DyadicCube& big, std::size_t pattern = 1)
{
    require(small.param == big.param, "make_s: cubes from different parameters");
    const HaarAxis ax(space, small.param, grid);
    require(pattern >= 1 && pattern < ax.patterns(), "make_s: pattern must be cancellative");
    require(big.level < space.depth && small.level <= space.depth, "make_s: level out of range");
    const std::size_t ps = ax.linear(small.pos, small.level), pb = ax.linear(big.pos, big.level);
    require(small.level > big.level && ax.ancestor(small.level, ps, big.level) == pb, "make_s: small cube must be strictly inside big cube");
    SFunction s;
    s.small = small;
    s.big = big;
    s.pattern = pattern;
    const std::size_t pq = ax.ancestor(small.level, ps, big.level + 1);
    s.Q = ax.cube(big.level + 1, pq);
    s.h_big = ax.haar_function(ax.slot(big.level, pb, pattern));
    const auto qcells = ax.cube_cells(big.level + 1, pq);
    s.q_average = s.h_big[qcells[0]];
    std::vector<char> inQ(ax.cells(), 0);
    for (std::size_t c : qcells)
        inQ[c] = 1;
    s.values.assign(ax.cells(), 0.0);
    for (std::size_t c = 0; c < ax.cells(); ++c)
        if (!inQ[c])
            s.values[c] = s.h_big[c] - s.q_average;
    return s;
}

struct EightTerms {
    std::array<double, 8> terms{};
    double direct = 0.0;
    double residual = 0.0;

    double sum() const
    {
        double s = 0.0;
        for (double t : terms)
            s += t;
        return s;
    }
};

//
// <T(h_I1 (x) h_I2 (x) h_I3), h_J1 (x) h_J2 (x) h_J3> split by
// h_J1 = s_{I1J1} + <h_J1>_{I1}, h_J2 = s_{I2J2} + <h_J2>_{I2},
// h_I3 = s_{J3I3} + <h_I3>_{J3}, for I1 < J1, I2 < J2, J3 < I3.
//
inline EightTerms eight_term_split(const OperatorHandle& op, const GridShift& grid, const std::array<DyadicCube, 3>& I, const std::array<DyadicCube, 3>& J,
                                   const std::array<std::size_t, 3>& pi = {1, 1, 1}, const std::array<std::size_t, 3>& pj = {1, 1, 1})
{
    const TorusSpace& space = op.space();
    require(space.n == 3, "eight_term_split: needs a three-parameter operator");
    auto nested = [&](const DyadicCube& a, const DyadicCube& b) {
        if (a.level <= b.level)
            return false;
        const HaarAxis ax(space, a.param, grid);
        return ax.ancestor(a.level, ax.linear(a.pos, a.level), b.level) == ax.linear(b.pos, b.level);
    };
    for (int p = 0; p < 3; ++p) {
        const auto u = static_cast<std::size_t>(p);
        require(I[u].param == p && J[u].param == p, "eight_term_split: cube parameters out of order");
        require(I[u].level < space.depth && J[u].level < space.depth, "eight_term_split: cubes must carry cancellative Haar functions");
    }
    require(nested(I[0], J[0]) && nested(I[1], J[1]) && nested(J[2], I[2]), "eight_term_split: orientation must be I1 < J1, I2 < J2, J3 < I3");

    const SFunction s1 = make_s(space, grid, I[0], J[0], pj[0]);
    const SFunction s2 = make_s(space, grid, I[1], J[1], pj[1]);
    const SFunction s3 = make_s(space, grid, J[2], I[2], pi[2]);

    std::array<std::vector<double>, 3> hI, hJ;
    for (int p = 0; p < 3; ++p) {
        const auto u = static_cast<std::size_t>(p);
        const HaarAxis ax(space, p, grid);
        hI[u] = ax.haar_function(ax.slot(I[u].level, ax.linear(I[u].pos, I[u].level), pi[u]));
        hJ[u] = ax.haar_function(ax.slot(J[u].level, ax.linear(J[u].pos, J[u].level), pj[u]));
    }
    auto one = [&](int p) { return std::vector<double>(space.axis_cells(p), 1.0); };

    EightTerms out;
    const double a1 = s1.q_average, a2 = s2.q_average, a3 = s3.q_average;
    // bit 0: parameter-1 average part, bit 1: parameter-2, bit 2: parameter-3
    static constexpr int order[8] = {0, 4, 2, 6, 1, 5, 3, 7};
    for (int t = 0; t < 8; ++t) {
        const int m = order[t];
        const bool b1 = m & 1, b2 = m & 2, b3 = m & 4;
        const std::vector<std::vector<double>> u{hI[0], hI[1], b3 ? one(2) : s3.values};
        const std::vector<std::vector<double>> v{b1 ? one(0) : s1.values, b2 ? one(1) : s2.values, hJ[2]};
        double c = 1.0;
        if (b1)
            c *= a1;
        if (b2)
            c *= a2;
        if (b3)
            c *= a3;
        out.terms[static_cast<std::size_t>(t)] = c == 0.0 ? 0.0 : c * pair_tensor(op, u, v);
    }
    const MultiFunction fin = MultiFunction::tensor(space, {hI[0], hI[1], hI[2]});
    const MultiFunction gout = MultiFunction::tensor(space, {hJ[0], hJ[1], hJ[2]});
    out.direct = inner(apply(op, fin), gout);
    out.residual = out.sum() - out.direct;
    return out;
}

struct ReconstructionReport {
    double direct = 0.0;
    double reconstructed = 0.0;
    std::vector<std::string> bucket_names;
    std::vector<double> buckets;
    int complexity_cap = -1;
    std::size_t samples = 0;
    double stderr_ = 0.0;
    double tail_bound = 0.0;
    std::string sm;

    double relative_error() const { return std::abs(reconstructed - direct) / std::max(std::abs(direct), 1e-300); }

    nlohmann::json to_json() const
    {
        nlohmann::json j{{"direct", direct}, {"reconstructed", reconstructed}, {"relative_error", relative_error()}};
        if (!buckets.empty()) {
            nlohmann::json b = nlohmann::json::object();
            for (std::size_t i = 0; i < buckets.size(); ++i)
                b[bucket_names[i]] = buckets[i];
            j["buckets"] = b;
        }
        if (complexity_cap >= 0) {
            j["complexity_cap"] = complexity_cap;
            j["tail_bound"] = tail_bound;
        }
        if (samples > 0) {
            j["samples"] = samples;
            j["stderr"] = stderr_;
            j["sm"] = sm;
        }
        return j;
    }

    void write_bucket_csv(std::ostream& os) const
    {
        os << "bucket,value\n";
        os.precision(17);
        for (std::size_t i = 0; i < buckets.size(); ++i)
            os << bucket_names[i] << ',' << buckets[i] << '\n';
    }
};

inline double direct_pairing(const OperatorHandle& op, const MultiFunction& f, const MultiFunction& g)
{
    return inner(apply(op, f), g);
}

// Complete-basis expansion on one grid, regrouped into 7^n case buckets.
inline ReconstructionReport fixed_grid_reconstruct(const OperatorHandle& op, const MultiFunction& f, const MultiFunction& g, const GridShift& grid)
{
    const TorusSpace& space = op.space();
    require(space.same_shape(f.space) && space.same_shape(g.space), "fixed_grid_reconstruct: space mismatch");
    const GridAxes axes(space, grid);
    const HaarPairing P(op, axes);
    std::vector<std::vector<std::vector<double>>> masks;
    for (int i = 0; i < space.n; ++i)
        masks.push_back(detail::bucket_masks(detail::SlotGeometry(space, axes[i]), axes[i].cells()));
    const auto fc = haar_forward_values(f.values, axes), gc = haar_forward_values(g.values, axes);

    ReconstructionReport rep;
    rep.direct = direct_pairing(op, f, g);
    rep.buckets = detail::weighted_pairings(P, fc, gc, masks);
    rep.reconstructed = tree_sum(rep.buckets);
    for (std::size_t b = 0; b < rep.buckets.size(); ++b) {
        std::string name;
        std::size_t rest = b;
        std::vector<int> digits(static_cast<std::size_t>(space.n));
        for (int i = space.n - 1; i >= 0; --i) {
            digits[static_cast<std::size_t>(i)] = static_cast<int>(rest % kBuckets);
            rest /= kBuckets;
        }
        for (int i = 0; i < space.n; ++i)
            name += (i ? "|" : "") + bucket_name(digits[static_cast<std::size_t>(i)]);
        rep.bucket_names.push_back(name);
    }
    return rep;
}

// Which cube of a pair must be good: the smaller one (ties to I), or always I.
enum class SmConvention { Smaller, FSide };

inline const char* sm_name(SmConvention c) { return c == SmConvention::Smaller ? "smaller" : "f-side"; }

// per-level probability of goodness, rejecting configurations where some level is never good
inline std::vector<std::vector<double>> pi_good_table(const TorusSpace& space)
{
    std::vector<std::vector<double>> pi;
    for (int i = 0; i < space.n; ++i) {
        std::vector<double> row;
        for (int k = 0; k < space.depth; ++k) {
            const double p = exact_pi_good(space, i, k);
            if (!(p > 0.0))
                throw ConfigError("mc_reconstruct: pi_good = 0 at parameter " + std::to_string(i + 1) + ", level " + std::to_string(k) +
                                  " (increase r, or use r >= L for vacuous goodness)");
            row.push_back(p);
        }
        pi.push_back(std::move(row));
    }
    return pi;
}

// One sample of the averaging-formula estimator on a given grid.
inline double good_weighted_pairing(const OperatorHandle& op, const std::vector<double>& fv, const std::vector<double>& gv, const GridShift& grid,
                                    SmConvention sm, const std::vector<std::vector<double>>& pi)
{
    const TorusSpace& space = op.space();
    const GridAxes axes(space, grid);
    const HaarPairing P(op, axes);
    std::vector<std::vector<std::vector<double>>> masks;
    for (int i = 0; i < space.n; ++i) {
        const HaarAxis& ax = axes[i];
        const std::size_t M = ax.cells();
        std::vector<double> weight(M);
        std::vector<std::uint32_t> cells(static_cast<std::size_t>(ax.dim()));
        for (std::size_t s = 0; s < M; ++s) {
            const int k = ax.slot_level(s);
            for (int t = 0; t < ax.dim(); ++t)
                cells[static_cast<std::size_t>(t)] = ax.left_cells(k, ax.slot_pos(s), t);
            const bool good = is_good_cells(space, grid, i, k, cells.data());
            weight[s] = good ? 1.0 / pi[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] : 0.0;
        }
        std::vector<double> m(M * M);
        for (std::size_t J = 0; J < M; ++J)
            for (std::size_t I = 0; I < M; ++I) {
                const bool use_i = sm == SmConvention::FSide || ax.slot_level(I) >= ax.slot_level(J);
                m[J * M + I] = weight[use_i ? I : J];
            }
        masks.push_back({std::move(m)});
    }
    const auto fc = haar_forward_values(fv, axes), gc = haar_forward_values(gv, axes);
    return detail::weighted_pairings(P, fc, gc, masks)[0];
}

//
// Average over N random grids of the good-restricted expansion, each cube
// weighted by 1/pi_good at its level.
//
inline ReconstructionReport mc_reconstruct(const OperatorHandle& op, const MultiFunction& f, const MultiFunction& g, std::size_t samples, std::uint64_t seed,
                                           SmConvention sm = SmConvention::Smaller, int workers = 0)
{
    const TorusSpace& space = op.space();
    require(samples >= 1, "mc_reconstruct: needs at least one sample");
    require(space.same_shape(f.space) && space.same_shape(g.space), "mc_reconstruct: space mismatch");
    const auto pi = pi_good_table(space);
    std::vector<double> values(samples);
    parallel_for(samples, resolve_workers(workers), [&](std::size_t s) {
        values[s] = good_weighted_pairing(op, f.values, g.values, sample_grid(space, hash_combine(seed, s)), sm, pi);
    });
    const MeanStderr ms = mean_stderr(values);
    ReconstructionReport rep;
    rep.direct = direct_pairing(op, f, g);
    rep.reconstructed = ms.mean;
    rep.stderr_ = ms.stderr_;
    rep.samples = samples;
    rep.sm = sm_name(sm);
    return rep;
}

struct ShiftCoefficientReport {
    std::vector<double> per_param; // max over terms of the per-parameter normalized sup
    double max_ratio = 0.0;        // sum_r |w_r| prod_i sup_{r,i}
    std::size_t count = 0;

    nlohmann::json to_json() const { return {{"per_param", per_param}, {"max_ratio", max_ratio}, {"count", count}}; }
};

//
// Separated pairs: |<T h_I, h_J>|; inside pairs: the cancellative part
// |<T h_I, s_{IJ}>| (or |<T s_{JI}, h_J>|). Each divided by
// sqrt(|I||J|)/|K| and 2^{-max(i,j) delta/2}, K the common ancestor.
//
inline ShiftCoefficientReport extract_shift_coefficients(const OperatorHandle& op, const GridShift& grid, bool good_only = false)
{
    const TorusSpace& space = op.space();
    const GridAxes axes(space, grid);
    const HaarPairing P(op, axes);
    ShiftCoefficientReport rep;
    rep.per_param.assign(static_cast<std::size_t>(space.n), 0.0);
    std::vector<std::vector<double>> sup(P.terms(), std::vector<double>(static_cast<std::size_t>(space.n), 0.0));
    for (int i = 0; i < space.n; ++i) {
        const HaarAxis& ax = axes[i];
        const detail::SlotGeometry geo(space, ax);
        const std::size_t M = ax.cells();
        const int d = ax.dim();
        std::vector<std::vector<double>> hf(M);
        for (std::size_t s = 1; s < M; ++s)
            hf[s] = ax.haar_function(s);
        std::vector<char> good(M, 1);
        if (good_only) {
            std::vector<std::uint32_t> cells(static_cast<std::size_t>(d));
            for (std::size_t s = 1; s < M; ++s) {
                for (int t = 0; t < d; ++t)
                    cells[static_cast<std::size_t>(t)] = ax.left_cells(ax.slot_level(s), ax.slot_pos(s), t);
                good[s] = is_good_cells(space, grid, i, ax.slot_level(s), cells.data()) ? 1 : 0;
            }
        }
        for (std::size_t J = 1; J < M; ++J)
            for (std::size_t I = 1; I < M; ++I) {
                const int b = geo.bucket(I, J);
                if (b > 3)
                    continue;
                const int li = geo.level(I), lj = geo.level(J);
                if (good_only && !good[li >= lj ? I : J])
                    continue;
                const int lk = geo.common_level(I, J);
                const double size = std::pow(2.0, (2 * lk - li - lj) * d / 2.0);
                const double decay = std::pow(2.0, -std::max(li - lk, lj - lk) * space.delta / 2.0);
                ++rep.count;
                for (std::size_t r = 0; r < P.terms(); ++r) {
                    double c = P.one_d(r, i, J, I);
                    if (b == 2) // I inside J: subtract <h_J>_Q <T h_I, 1>
                        c -= hf[J][ax.cube_cells(li, geo.pos(I))[0]] * P.one_d(r, i, 0, I);
                    else if (b == 3) // J inside I
                        c -= hf[I][ax.cube_cells(lj, geo.pos(J))[0]] * P.one_d(r, i, J, 0);
                    double& m = sup[r][static_cast<std::size_t>(i)];
                    m = std::max(m, std::abs(c) / (size * decay));
                }
            }
    }
    for (std::size_t r = 0; r < P.terms(); ++r) {
        double prod = std::abs(P.weight(r));
        for (int i = 0; i < space.n; ++i) {
            prod *= sup[r][static_cast<std::size_t>(i)];
            rep.per_param[static_cast<std::size_t>(i)] = std::max(rep.per_param[static_cast<std::size_t>(i)], sup[r][static_cast<std::size_t>(i)]);
        }
        rep.max_ratio += prod;
    }
    return rep;
}

// Expansion restricted to per-parameter complexity <= i_max, with the geometric tail estimate.
inline ReconstructionReport truncated_representation(const OperatorHandle& op, const MultiFunction& f, const MultiFunction& g, const GridShift& grid, int i_max,
                                                     double coefficient_bound = -1.0)
{
    require(i_max >= 0, "truncated_representation: i_max >= 0");
    const TorusSpace& space = op.space();
    require(space.same_shape(f.space) && space.same_shape(g.space), "truncated_representation: space mismatch");
    const GridAxes axes(space, grid);
    const HaarPairing P(op, axes);
    std::vector<std::vector<std::vector<double>>> masks;
    for (int i = 0; i < space.n; ++i) {
        const detail::SlotGeometry geo(space, axes[i]);
        const std::size_t M = axes[i].cells();
        std::vector<double> m(M * M);
        for (std::size_t J = 0; J < M; ++J)
            for (std::size_t I = 0; I < M; ++I)
                m[J * M + I] = geo.complexity(I, J) <= i_max ? 1.0 : 0.0;
        masks.push_back({std::move(m)});
    }
    const auto fc = haar_forward_values(f.values, axes), gc = haar_forward_values(g.values, axes);
    ReconstructionReport rep;
    rep.direct = direct_pairing(op, f, g);
    rep.reconstructed = detail::weighted_pairings(P, fc, gc, masks)[0];
    rep.complexity_cap = i_max;
    const double C = coefficient_bound >= 0.0 ? coefficient_bound : extract_shift_coefficients(op, grid).max_ratio;
    double tail = 0.0;
    for (int i = i_max + 1; i < space.depth; ++i)
        tail += std::pow(2.0, -i * space.delta / 2.0);
    rep.tail_bound = C * tail * norm2(f) * norm2(g);
    return rep;
}

struct BmoLemmaRow {
    DyadicCube I1, J1;
    double carleson = 0.0;
    double ratio = 0.0;
};

struct BmoLemmaReport {
    std::vector<BmoLemmaRow> rows;
    double max_ratio = 0.0;

    nlohmann::json to_json() const
    {
        nlohmann::json r = nlohmann::json::array();
        for (const auto& row : rows)
            r.push_back({{"I1", {{"level", row.I1.level}, {"pos", row.I1.pos}}},
                         {"J1", {{"level", row.J1.level}, {"pos", row.J1.pos}}},
                         {"carleson", row.carleson},
                         {"ratio", row.ratio}});
        return {{"rows", r}, {"max_ratio", max_ratio}};
    }
};

// b_{I1J1} = <T_2(h_I1 (x) 1 (x) 1), s_{I1J1}>_1 as a function of parameters 2 and 3
inline MultiFunction lemma_symbol(const OperatorHandle& op, const GridShift& grid, const DyadicCube& I1, const DyadicCube& J1)
{
    const TorusSpace& space = op.space();
    const HaarAxis ax(space, 0, grid);
    const SFunction s = make_s(space, grid, I1, J1);
    const auto h = ax.haar_function(ax.slot(I1.level, ax.linear(I1.pos, I1.level), 1));
    const OperatorHandle T2 = op.partial_adjoint({false, true, false});
    const MultiFunction u = MultiFunction::tensor(space, {h, std::vector<double>(space.axis_cells(1), 1.0), std::vector<double>(space.axis_cells(2), 1.0)});
    return partial_pair(apply(T2, u), {s.values, {}, {}});
}

//
// Sampled pairs I1 < J1 in parameter 1 (I1 good when goodness is not
// vacuous): carleson_rect(b_{I1J1}) / (sqrt(|I1|/|J1|) 2^{-i1 delta/2}).
//
inline BmoLemmaReport bmo_lemma_check(const OperatorHandle& op, const GridShift& grid, std::size_t pairs, std::uint64_t seed)
{
    const TorusSpace& space = op.space();
    require(space.n == 3, "bmo_lemma_check: needs a three-parameter operator");
    require(op.is_tensor(), "bmo_lemma_check: needs a tensor-kernel operator");
    require(space.depth >= 2, "bmo_lemma_check: depth must be at least 2");
    const HaarAxis ax(space, 0, grid);
    const int d = ax.dim();
    const TorusSpace rest = complement_space(space, {true, false, false});
    GridShift rest_grid = grid;
    rest_grid.omega.erase(rest_grid.omega.begin());
    rest_grid.dims.erase(rest_grid.dims.begin());

    Rng rng(mix64(seed ^ 0xb30ULL));
    BmoLemmaReport rep;
    std::size_t attempts = 0;
    while (rep.rows.size() < pairs) {
        require(++attempts <= 1000 * pairs, "bmo_lemma_check: no good cubes found (goodness degenerate for this r)");
        const int kj = static_cast<int>(rng.below(static_cast<std::uint64_t>(space.depth - 1)));
        const int ki = kj + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(space.depth - 1 - kj)));
        const std::size_t pj = rng.below(ax.cubes_at(kj));
        const auto desc = ax.descendants(kj, pj, ki - kj);
        const std::size_t pi = desc[rng.below(desc.size())];
        std::vector<std::uint32_t> cells(static_cast<std::size_t>(d));
        for (int t = 0; t < d; ++t)
            cells[static_cast<std::size_t>(t)] = ax.left_cells(ki, pi, t);
        if (!is_good_cells(space, grid, 0, ki, cells.data()))
            continue;
        BmoLemmaRow row;
        row.I1 = ax.cube(ki, pi);
        row.J1 = ax.cube(kj, pj);
        MultiFunction b = lemma_symbol(op, grid, row.I1, row.J1);
        b.space = rest;
        row.carleson = carleson_rect(b, rest_grid).value;
        const double scale = std::sqrt(std::ldexp(1.0, -(ki - kj) * d)) * std::pow(2.0, -(ki - kj) * space.delta / 2.0);
        row.ratio = row.carleson / scale;
        rep.max_ratio = std::max(rep.max_ratio, row.ratio);
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

} // namespace dyadic

#endif // DYADIC_REPRESENTATION_HPP
