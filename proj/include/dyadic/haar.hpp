#ifndef DYADIC_HAAR_HPP
#define DYADIC_HAAR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "grid.hpp"

namespace dyadic {

//
// Dense row-major tensor helpers. Axis 0 varies slowest ("parameter-major").
//
struct Shape {
    std::vector<std::size_t> extents;

    std::size_t size() const
    {
        return std::accumulate(extents.begin(), extents.end(), std::size_t{1}, std::multiplies<>());
    }
    std::size_t outer(std::size_t axis) const
    {
        std::size_t o = 1;
        for (std::size_t a = 0; a < axis; ++a)
            o *= extents[a];
        return o;
    }
    std::size_t inner(std::size_t axis) const
    {
        std::size_t o = 1;
        for (std::size_t a = axis + 1; a < extents.size(); ++a)
            o *= extents[a];
        return o;
    }
};

//
// out = fn applied to every fiber along `axis`. fn(in, out) reads a fiber of
// length extents[axis] and writes one of length out_len.
//
template <class Fn>
std::vector<double> map_axis(const std::vector<double>& data, Shape& shape, std::size_t axis, std::size_t out_len, Fn&& fn)
{
    const std::size_t len = shape.extents[axis];
    const std::size_t outer = shape.outer(axis);
    const std::size_t inner = shape.inner(axis);
    std::vector<double> out(outer * out_len * inner);
    if (inner == 1) {
        for (std::size_t o = 0; o < outer; ++o)
            fn(data.data() + o * len, out.data() + o * out_len);
    } else {
        // fibers are gathered in tiles so the strided reads stay contiguous
        const std::size_t tile = std::min<std::size_t>(inner, 32);
        std::vector<double> a(len * tile), b(out_len * tile);
        for (std::size_t o = 0; o < outer; ++o) {
            const double* src = data.data() + o * len * inner;
            double* dst = out.data() + o * out_len * inner;
            for (std::size_t i0 = 0; i0 < inner; i0 += tile) {
                const std::size_t w = std::min(tile, inner - i0);
                for (std::size_t k = 0; k < len; ++k)
                    for (std::size_t i = 0; i < w; ++i)
                        a[i * len + k] = src[k * inner + i0 + i];
                for (std::size_t i = 0; i < w; ++i)
                    fn(a.data() + i * len, b.data() + i * out_len);
                for (std::size_t k = 0; k < out_len; ++k)
                    for (std::size_t i = 0; i < w; ++i)
                        dst[k * inner + i0 + i] = b[i * out_len + k];
            }
        }
    }
    shape.extents[axis] = out_len;
    return out;
}

// Dense contraction along an axis: out[..c..] = sum_c' A[c*cols + c'] in[..c'..].
inline std::vector<double> contract_axis(const std::vector<double>& data, Shape& shape, std::size_t axis, const std::vector<double>& A,
                                         std::size_t rows, std::size_t cols, bool transpose = false)
{
    require(shape.extents[axis] == cols, "contract_axis: extent mismatch");
    if (!transpose) {
        return map_axis(data, shape, axis, rows, [&](const double* in, double* out) {
            for (std::size_t r = 0; r < rows; ++r) {
                const double* row = A.data() + r * cols;
                double s = 0.0;
                for (std::size_t c = 0; c < cols; ++c)
                    s += row[c] * in[c];
                out[r] = s;
            }
        });
    }
    // out[c'] = sum_c A[c*cols... ] with A stored rows x cols, transposed use: (A^T)[c'][c] = A[c][c'];
    // here A is (cols x rows) and we apply its transpose.
    return map_axis(data, shape, axis, rows, [&](const double* in, double* out) {
        std::fill(out, out + rows, 0.0);
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = in[c];
            if (v == 0.0)
                continue;
            const double* row = A.data() + c * rows;
            for (std::size_t r = 0; r < rows; ++r)
                out[r] += row[r] * v;
        }
    });
}

//
// One parameter's Haar system on a shifted grid.
//
// Coefficient ("slot") layout, level-major: slot 0 is the global average
// (the constant function 1, treated as the noncancellative function of the
// level-0 cube); level k occupies [2^{kd}, 2^{(k+1)d}) with index
// 2^{kd} + p*(2^d - 1) + (eps - 1), p the linearized cube position,
// eps in [1, 2^d) the pattern.
//
// Box layout (noncancellative |V|^{-1/2} chi_V for every cube of levels
// 0..L): level k starts at (2^{kd} - 1)/(2^d - 1).
//
// Sign convention: pattern bit t set means the function flips sign across
// the midpoint in coordinate t, positive on the lower half.
//
class HaarAxis {
public:
    HaarAxis(const TorusSpace& space, int param, const GridShift& grid)
        : param_(param), depth_(space.depth), dim_(space.dim(param)), grid_(grid)
    {
        require(grid.compatible(space), "grid does not match space");
        cells_ = std::size_t{1} << (depth_ * dim_);
        patterns_ = std::size_t{1} << dim_;
        boxes_ = box_offset(depth_ + 1);
        h_ = std::ldexp(1.0, -depth_ * dim_);
        sqrt_h_ = std::sqrt(h_);
        child_scale_ = 1.0 / std::sqrt(static_cast<double>(patterns_));

        // level shifts m_k = sum_{j<=k} 2^{k-j} omega^j per coordinate
        relabel_.resize(static_cast<std::size_t>(depth_) + 1);
        unlabel_.resize(static_cast<std::size_t>(depth_) + 1);
        for (int k = 0; k <= depth_; ++k) {
            const std::size_t count = std::size_t{1} << (k * dim_);
            std::vector<std::uint32_t> m(static_cast<std::size_t>(dim_), 0u);
            for (int t = 0; t < dim_; ++t)
                for (int j = 1; j <= k; ++j)
                    m[static_cast<std::size_t>(t)] += grid.bit(param, j, t) << (k - j);
            relabel_[static_cast<std::size_t>(k)].resize(count);
            unlabel_[static_cast<std::size_t>(k)].resize(count);
            for (std::size_t q = 0; q < count; ++q) {
                std::size_t plin = 0;
                for (int t = 0; t < dim_; ++t) {
                    std::uint32_t c = 0;
                    for (int b = 0; b < k; ++b)
                        c |= static_cast<std::uint32_t>((q >> (b * dim_ + t)) & 1u) << b;
                    const std::uint32_t p = (c + m[static_cast<std::size_t>(t)]) & ((1u << k) - 1u);
                    plin |= static_cast<std::size_t>(p) << (k * t);
                }
                relabel_[static_cast<std::size_t>(k)][q] = static_cast<std::uint32_t>(plin);
                unlabel_[static_cast<std::size_t>(k)][plin] = static_cast<std::uint32_t>(q);
            }
        }
        // finest level: realized position == cell coordinates
        perm_ = relabel_[static_cast<std::size_t>(depth_)];

        slot_level_.resize(cells_);
        slot_pos_.resize(cells_);
        slot_pattern_.resize(cells_);
        slot_level_[0] = 0;
        slot_pos_[0] = 0;
        slot_pattern_[0] = 0;
        for (int k = 0; k < depth_; ++k) {
            const std::size_t count = std::size_t{1} << (k * dim_);
            for (std::size_t p = 0; p < count; ++p)
                for (std::size_t e = 1; e < patterns_; ++e) {
                    const std::size_t s = slot(k, p, e);
                    slot_level_[s] = k;
                    slot_pos_[s] = static_cast<std::uint32_t>(p);
                    slot_pattern_[s] = static_cast<std::uint32_t>(e);
                }
        }
        buf_.resize(cells_);
    }

    HaarAxis(const HaarAxis& o) = default;
    HaarAxis& operator=(const HaarAxis&) = default;

    int param() const { return param_; }
    int depth() const { return depth_; }
    int dim() const { return dim_; }
    std::size_t cells() const { return cells_; }
    std::size_t patterns() const { return patterns_; }
    std::size_t box_count() const { return boxes_; }
    double cell_volume() const { return h_; }
    const GridShift& grid() const { return grid_; }

    std::size_t cubes_at(int level) const { return std::size_t{1} << (level * dim_); }
    std::size_t haar_offset(int level) const { return std::size_t{1} << (level * dim_); }
    std::size_t slot(int level, std::size_t plin, std::size_t eps) const
    {
        return haar_offset(level) + plin * (patterns_ - 1) + (eps - 1);
    }
    std::size_t box_offset(int level) const { return ((std::size_t{1} << (level * dim_)) - 1) / (patterns_ - 1); }
    std::size_t box_index(int level, std::size_t plin) const { return box_offset(level) + plin; }

    int slot_level(std::size_t s) const { return slot_level_[s]; }
    std::size_t slot_pos(std::size_t s) const { return slot_pos_[s]; }
    std::size_t slot_pattern(std::size_t s) const { return slot_pattern_[s]; }
    bool slot_cancellative(std::size_t s) const { return slot_pattern_[s] != 0; }
    double slot_volume(std::size_t s) const { return std::ldexp(1.0, -slot_level_[s] * dim_); }

    std::vector<std::uint32_t> position(int level, std::size_t plin) const
    {
        std::vector<std::uint32_t> p(static_cast<std::size_t>(dim_));
        for (int t = 0; t < dim_; ++t)
            p[static_cast<std::size_t>(t)] = static_cast<std::uint32_t>((plin >> (level * t)) & ((std::size_t{1} << level) - 1));
        return p;
    }
    std::size_t linear(const std::vector<std::uint32_t>& p, int level) const
    {
        std::size_t plin = 0;
        for (int t = 0; t < dim_; ++t)
            plin |= static_cast<std::size_t>(p[static_cast<std::size_t>(t)]) << (level * t);
        return plin;
    }
    DyadicCube cube(int level, std::size_t plin) const { return DyadicCube{param_, level, position(level, plin)}; }

    // left corner in finest-cell units, coordinate t
    std::uint32_t left_cells(int level, std::size_t plin, int t) const
    {
        const std::uint32_t p = static_cast<std::uint32_t>((plin >> (level * t)) & ((std::size_t{1} << level) - 1));
        return ((p << (depth_ - level)) + grid_.offset_cells(param_, level, t)) & ((1u << depth_) - 1u);
    }

    // position of the level-(k-1) parent
    std::size_t parent(int level, std::size_t plin) const
    {
        std::size_t out = 0;
        for (int t = 0; t < dim_; ++t) {
            const std::uint32_t p = static_cast<std::uint32_t>((plin >> (level * t)) & ((std::size_t{1} << level) - 1));
            const std::uint32_t w = grid_.bit(param_, level, t);
            const std::uint32_t q = ((p + (1u << level) - w) & ((1u << level) - 1u)) >> 1;
            out |= static_cast<std::size_t>(q) << ((level - 1) * t);
        }
        return out;
    }
    std::size_t ancestor(int level, std::size_t plin, int target) const
    {
        while (level > target) {
            plin = parent(level, plin);
            --level;
        }
        return plin;
    }
    // positions of the level-(k+gap) cubes inside (k, plin)
    std::vector<std::size_t> descendants(int level, std::size_t plin, int gap) const
    {
        std::vector<std::size_t> cur{plin};
        for (int g = 0; g < gap; ++g) {
            const int k = level + g;
            std::vector<std::size_t> next;
            next.reserve(cur.size() * patterns_);
            for (std::size_t q : cur)
                for (std::size_t b = 0; b < patterns_; ++b) {
                    std::size_t out = 0;
                    for (int t = 0; t < dim_; ++t) {
                        const std::uint32_t qt = static_cast<std::uint32_t>((q >> (k * t)) & ((std::size_t{1} << k) - 1));
                        const std::uint32_t w = grid_.bit(param_, k + 1, t);
                        const std::uint32_t p = ((2u * qt) + static_cast<std::uint32_t>((b >> t) & 1u) + w) & ((1u << (k + 1)) - 1u);
                        out |= static_cast<std::size_t>(p) << ((k + 1) * t);
                    }
                    next.push_back(out);
                }
            cur = std::move(next);
        }
        return cur;
    }

    // big (kb, pb) contains small (ks, ps), non-strict
    bool contains(int kb, std::size_t pb, int ks, std::size_t ps) const { return ks >= kb && ancestor(ks, ps, kb) == pb; }

    std::vector<std::size_t> cube_cells(int level, std::size_t plin) const
    {
        const std::uint32_t span = 1u << (depth_ - level);
        const std::uint32_t mask = (1u << depth_) - 1u;
        std::vector<std::size_t> out;
        out.reserve(std::size_t{1} << ((depth_ - level) * dim_));
        const std::size_t total = std::size_t{1} << ((depth_ - level) * dim_);
        for (std::size_t idx = 0; idx < total; ++idx) {
            std::size_t lin = 0;
            for (int t = 0; t < dim_; ++t) {
                const std::uint32_t local = static_cast<std::uint32_t>((idx >> ((depth_ - level) * t)) & (span - 1u));
                const std::uint32_t x = (left_cells(level, plin, t) + local) & mask;
                lin |= static_cast<std::size_t>(x) << (depth_ * t);
            }
            out.push_back(lin);
        }
        return out;
    }

    //
    // Transforms. All include the cell measure, i.e. analyze_haar returns
    // <f, h_slot> and synthesize_haar returns sum_slot c_slot h_slot.
    //
    void analyze_haar(const double* cells, double* coeffs) const
    {
        double* u = buf_.data();
        for (std::size_t m = 0; m < cells_; ++m)
            u[m] = cells[perm_[m]] * sqrt_h_;
        const std::size_t B = patterns_;
        if (B == 2) {
            for (int k = depth_ - 1; k >= 0; --k) {
                const std::size_t parents = cubes_at(k);
                const std::uint32_t* rl = relabel_[static_cast<std::size_t>(k)].data();
                double* dst = coeffs + haar_offset(k);
                for (std::size_t q = 0; q < parents; ++q) {
                    const double a = u[2 * q], b = u[2 * q + 1];
                    dst[rl[q]] = (a - b) * child_scale_;
                    u[q] = (a + b) * child_scale_;
                }
            }
            coeffs[0] = u[0];
            return;
        }
        for (int k = depth_ - 1; k >= 0; --k) {
            const std::size_t parents = cubes_at(k);
            const auto& rl = relabel_[static_cast<std::size_t>(k)];
            for (std::size_t q = 0; q < parents; ++q) {
                double* blk = u + q * B;
                wht(blk);
                double* dst = coeffs + slot(k, rl[q], 1);
                for (std::size_t e = 1; e < B; ++e)
                    dst[e - 1] = blk[e];
                u[q] = blk[0];
            }
        }
        coeffs[0] = u[0];
    }

    void synthesize_haar(const double* coeffs, double* cells) const
    {
        double* u = buf_.data();
        u[0] = coeffs[0];
        const std::size_t B = patterns_;
        if (B == 2) {
            for (int k = 0; k < depth_; ++k) {
                const std::size_t parents = cubes_at(k);
                const std::uint32_t* rl = relabel_[static_cast<std::size_t>(k)].data();
                const double* src = coeffs + haar_offset(k);
                for (std::size_t qq = parents; qq-- > 0;) {
                    const double avg = u[qq], c = src[rl[qq]];
                    u[2 * qq] = (avg + c) * child_scale_;
                    u[2 * qq + 1] = (avg - c) * child_scale_;
                }
            }
            for (std::size_t m = 0; m < cells_; ++m)
                cells[perm_[m]] = u[m] / sqrt_h_;
            return;
        }
        for (int k = 0; k < depth_; ++k) {
            const std::size_t parents = cubes_at(k);
            const auto& rl = relabel_[static_cast<std::size_t>(k)];
            for (std::size_t qq = parents; qq-- > 0;) {
                const double avg = u[qq];
                double* blk = u + qq * B;
                const double* src = coeffs + slot(k, rl[qq], 1);
                for (std::size_t e = 1; e < B; ++e)
                    blk[e] = src[e - 1];
                blk[0] = avg;
                wht(blk);
            }
        }
        for (std::size_t m = 0; m < cells_; ++m)
            cells[perm_[m]] = u[m] / sqrt_h_;
    }

    // <f, |V|^{-1/2} chi_V> for every cube V of levels 0..L
    void analyze_box(const double* cells, double* boxes) const
    {
        double* u = buf_.data();
        for (std::size_t m = 0; m < cells_; ++m)
            u[m] = cells[perm_[m]] * sqrt_h_;
        const std::size_t B = patterns_;
        {
            const auto& rl = relabel_[static_cast<std::size_t>(depth_)];
            double* dst = boxes + box_offset(depth_);
            for (std::size_t m = 0; m < cells_; ++m)
                dst[rl[m]] = u[m];
        }
        for (int k = depth_ - 1; k >= 0; --k) {
            const std::size_t parents = cubes_at(k);
            const auto& rl = relabel_[static_cast<std::size_t>(k)];
            double* dst = boxes + box_offset(k);
            for (std::size_t q = 0; q < parents; ++q) {
                double s = 0.0;
                for (std::size_t c = 0; c < B; ++c)
                    s += u[q * B + c];
                u[q] = s * child_scale_;
                dst[rl[q]] = u[q];
            }
        }
    }

    // sum_V c_V |V|^{-1/2} chi_V
    void synthesize_box(const double* boxes, double* cells) const
    {
        double* u = buf_.data();
        u[0] = boxes[box_offset(0)];
        const std::size_t B = patterns_;
        for (int k = 1; k <= depth_; ++k) {
            const std::size_t count = cubes_at(k);
            const auto& rl = relabel_[static_cast<std::size_t>(k)];
            const double* src = boxes + box_offset(k);
            for (std::size_t q = count; q-- > 0;)
                u[q] = u[q / B] * child_scale_ + src[rl[q]];
        }
        for (std::size_t m = 0; m < cells_; ++m)
            cells[perm_[m]] = u[m] / sqrt_h_;
    }

    std::vector<double> haar_function(std::size_t s) const
    {
        std::vector<double> c(cells_, 0.0), v(cells_);
        c[s] = 1.0;
        synthesize_haar(c.data(), v.data());
        return v;
    }

    // |V|^{-1/2} chi_V (the noncancellative Haar function of V)
    std::vector<double> box_function(int level, std::size_t plin) const
    {
        std::vector<double> v(cells_, 0.0);
        const double val = std::sqrt(std::ldexp(1.0, level * dim_));
        for (std::size_t c : cube_cells(level, plin))
            v[c] = val;
        return v;
    }

    std::vector<double> indicator(int level, std::size_t plin) const
    {
        std::vector<double> v(cells_, 0.0);
        for (std::size_t c : cube_cells(level, plin))
            v[c] = 1.0;
        return v;
    }

private:
    // scaled Walsh-Hadamard on one block of 2^d values (orthogonal, self-inverse)
    void wht(double* blk) const
    {
        const std::size_t B = patterns_;
        for (std::size_t len = 1; len < B; len <<= 1)
            for (std::size_t i = 0; i < B; i += 2 * len)
                for (std::size_t j = i; j < i + len; ++j) {
                    const double a = blk[j], b = blk[j + len];
                    blk[j] = a + b;
                    blk[j + len] = a - b;
                }
        for (std::size_t i = 0; i < B; ++i)
            blk[i] *= child_scale_;
    }

    int param_;
    int depth_;
    int dim_;
    GridShift grid_;
    std::size_t cells_ = 0;
    std::size_t patterns_ = 0;
    std::size_t boxes_ = 0;
    double h_ = 0.0;
    double sqrt_h_ = 0.0;
    double child_scale_ = 0.0;
    std::vector<std::uint32_t> perm_;
    std::vector<std::vector<std::uint32_t>> relabel_;
    std::vector<std::vector<std::uint32_t>> unlabel_;
    std::vector<int> slot_level_;
    std::vector<std::uint32_t> slot_pos_;
    std::vector<std::uint32_t> slot_pattern_;
    mutable std::vector<double> buf_;
};

// One HaarAxis per parameter.
class GridAxes {
public:
    GridAxes(const TorusSpace& space, const GridShift& grid) : space_(space), grid_(grid)
    {
        require(grid.compatible(space), "grid does not match space");
        for (int i = 0; i < space.n; ++i)
            axes_.emplace_back(space, i, grid);
    }
    const HaarAxis& operator[](int i) const { return axes_[static_cast<std::size_t>(i)]; }
    const TorusSpace& space() const { return space_; }
    const GridShift& grid() const { return grid_; }
    int n() const { return space_.n; }

private:
    TorusSpace space_;
    GridShift grid_;
    std::vector<HaarAxis> axes_;
};

//
// A real function on the n-parameter torus, piecewise constant on finest cells.
//
struct MultiFunction {
    TorusSpace space;
    std::vector<double> values;

    static MultiFunction zeros(const TorusSpace& s) { return {s, std::vector<double>(s.total_cells(), 0.0)}; }
    static MultiFunction constant(const TorusSpace& s, double c) { return {s, std::vector<double>(s.total_cells(), c)}; }

    // u_1 (x) u_2 (x) ... with one cell vector per parameter
    static MultiFunction tensor(const TorusSpace& s, const std::vector<std::vector<double>>& factors)
    {
        require(static_cast<int>(factors.size()) == s.n, "tensor: one factor per parameter required");
        std::vector<double> v{1.0};
        for (int i = 0; i < s.n; ++i) {
            const auto& u = factors[static_cast<std::size_t>(i)];
            require(u.size() == s.axis_cells(i), "tensor: factor length mismatch");
            std::vector<double> next(v.size() * u.size());
            for (std::size_t a = 0; a < v.size(); ++a)
                for (std::size_t b = 0; b < u.size(); ++b)
                    next[a * u.size() + b] = v[a] * u[b];
            v = std::move(next);
        }
        return {s, std::move(v)};
    }

    static MultiFunction random(const TorusSpace& s, std::uint64_t seed)
    {
        MultiFunction f = zeros(s);
        Rng rng(mix64(seed));
        for (double& x : f.values)
            x = rng.uniform(-1.0, 1.0);
        return f;
    }

    Shape shape() const { return Shape{space.shape()}; }
};

inline double inner(const MultiFunction& f, const MultiFunction& g)
{
    require(f.space.same_shape(g.space) && f.values.size() == g.values.size(), "inner: space mismatch");
    std::vector<double> prod(f.values.size());
    for (std::size_t i = 0; i < prod.size(); ++i)
        prod[i] = f.values[i] * g.values[i];
    return tree_sum(prod) * f.space.total_cell_volume();
}

inline double norm2(const MultiFunction& f) { return std::sqrt(inner(f, f)); }

//
// Haar coefficients <f, h_{I_1} (x) ... (x) h_{I_n}> over the complete
// finite-depth basis of a grid; slot layout per axis as in HaarAxis.
//
struct HaarCoeffs {
    TorusSpace space;
    GridShift grid;
    std::vector<double> values;

    std::size_t index(const std::vector<std::size_t>& slots) const
    {
        std::size_t idx = 0;
        for (int i = 0; i < space.n; ++i)
            idx = idx * space.axis_cells(i) + slots[static_cast<std::size_t>(i)];
        return idx;
    }
    double at(const std::vector<std::size_t>& slots) const { return values[index(slots)]; }
};

inline std::vector<double> haar_forward_values(const std::vector<double>& values, const GridAxes& axes)
{
    Shape shape{axes.space().shape()};
    std::vector<double> cur = values;
    for (int i = 0; i < axes.n(); ++i) {
        const HaarAxis& ax = axes[i];
        cur = map_axis(cur, shape, static_cast<std::size_t>(i), ax.cells(), [&](const double* in, double* out) { ax.analyze_haar(in, out); });
    }
    return cur;
}

inline std::vector<double> haar_inverse_values(const std::vector<double>& coeffs, const GridAxes& axes)
{
    Shape shape{axes.space().shape()};
    std::vector<double> cur = coeffs;
    for (int i = 0; i < axes.n(); ++i) {
        const HaarAxis& ax = axes[i];
        cur = map_axis(cur, shape, static_cast<std::size_t>(i), ax.cells(), [&](const double* in, double* out) { ax.synthesize_haar(in, out); });
    }
    return cur;
}

inline HaarCoeffs haar_forward(const MultiFunction& f, const GridAxes& axes)
{
    require(f.space.same_shape(axes.space()), "haar_forward: grid depth/shape mismatch");
    return {f.space, axes.grid(), haar_forward_values(f.values, axes)};
}

inline HaarCoeffs haar_forward(const MultiFunction& f, const GridShift& grid)
{
    require(grid.compatible(f.space), "haar_forward: grid depth mismatch");
    return haar_forward(f, GridAxes(f.space, grid));
}

inline MultiFunction haar_inverse(const HaarCoeffs& c)
{
    const GridAxes axes(c.space, c.grid);
    return {c.space, haar_inverse_values(c.values, axes)};
}

//
// Orthogonal projection onto span{h_I : I subset J, l(I) = 2^{-gap} l(J)}
// in parameter `param` (all cancellative patterns), identity elsewhere.
//
inline MultiFunction level_project(const MultiFunction& f, const GridShift& grid, const DyadicCube& J, int gap)
{
    const TorusSpace& s = f.space;
    require(J.param >= 0 && J.param < s.n, "level_project: parameter out of range");
    require(gap >= 0 && J.level + gap <= s.depth, "level_project: level overflow");
    const HaarAxis ax(s, J.param, grid);
    const std::size_t jpos = ax.linear(J.pos, J.level);
    const int target = J.level + gap;
    std::vector<char> keep(ax.cells(), 0);
    for (std::size_t sl = 1; sl < ax.cells(); ++sl)
        keep[sl] = (ax.slot_level(sl) == target && ax.contains(J.level, jpos, target, ax.slot_pos(sl))) ? 1 : 0;
    Shape shape{s.shape()};
    std::vector<double> tmp(ax.cells());
    auto out = map_axis(f.values, shape, static_cast<std::size_t>(J.param), ax.cells(), [&](const double* in, double* o) {
        ax.analyze_haar(in, tmp.data());
        for (std::size_t sl = 0; sl < ax.cells(); ++sl)
            if (!keep[sl])
                tmp[sl] = 0.0;
        ax.synthesize_haar(tmp.data(), o);
    });
    return {s, std::move(out)};
}

// The space of the parameters not in `paired` (order preserved).
inline TorusSpace complement_space(const TorusSpace& s, const std::vector<bool>& paired)
{
    std::vector<int> dims;
    for (int i = 0; i < s.n; ++i)
        if (!paired[static_cast<std::size_t>(i)])
            dims.push_back(s.dim(i));
    TorusSpace out;
    out.n = static_cast<int>(dims.size());
    out.dims = dims;
    out.depth = s.depth;
    out.delta = s.delta;
    out.r = s.r;
    return out;
}

//
// Integrates f against u_i in every parameter i with a nonempty factor;
// the result is a function of the remaining parameters. At least one
// parameter must remain.
//
inline MultiFunction partial_pair(const MultiFunction& f, const std::vector<std::vector<double>>& factors)
{
    const TorusSpace& s = f.space;
    require(static_cast<int>(factors.size()) == s.n, "partial_pair: one (possibly empty) factor per parameter");
    std::vector<bool> paired(static_cast<std::size_t>(s.n));
    int count = 0;
    for (int i = 0; i < s.n; ++i) {
        paired[static_cast<std::size_t>(i)] = !factors[static_cast<std::size_t>(i)].empty();
        count += paired[static_cast<std::size_t>(i)] ? 1 : 0;
    }
    require(count > 0 && count < s.n, "partial_pair: paired set must be a nonempty proper subset");
    Shape shape{s.shape()};
    std::vector<double> cur = f.values;
    for (int i = 0; i < s.n; ++i) {
        if (!paired[static_cast<std::size_t>(i)])
            continue;
        const auto& u = factors[static_cast<std::size_t>(i)];
        require(u.size() == s.axis_cells(i), "partial_pair: factor length mismatch");
        const double h = s.cell_volume(i);
        cur = map_axis(cur, shape, static_cast<std::size_t>(i), 1, [&](const double* in, double* out) {
            double acc = 0.0;
            for (std::size_t c = 0; c < u.size(); ++c)
                acc += in[c] * u[c];
            out[0] = acc * h;
        });
    }
    return {complement_space(s, paired), std::move(cur)};
}

//
// Flat little-endian float64 array + JSON sidecar (<path>.json).
//
inline void write_f64(const std::string& path, const std::vector<double>& values)
{
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), "cannot open for writing: " + path);
    for (double v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        char bytes[8];
        for (int b = 0; b < 8; ++b)
            bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
        os.write(bytes, 8);
    }
}

inline std::vector<double> read_f64(const std::string& path, std::size_t expected)
{
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), "cannot open for reading: " + path);
    std::vector<double> out;
    out.reserve(expected);
    char bytes[8];
    while (is.read(bytes, 8)) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[b])) << (8 * b);
        double v;
        std::memcpy(&v, &bits, sizeof v);
        out.push_back(v);
    }
    require(out.size() == expected, "file " + path + ": expected " + std::to_string(expected) + " values, found " + std::to_string(out.size()));
    return out;
}

inline void write_function(const std::string& path, const MultiFunction& f)
{
    write_f64(path, f.values);
    std::ofstream js(path + ".json");
    require(static_cast<bool>(js), "cannot write sidecar for " + path);
    js << nlohmann::json{{"n", f.space.n}, {"dims", f.space.dims}, {"L", f.space.depth}, {"order", "parameter-major"}}.dump(2) << '\n';
}

inline MultiFunction read_function(const std::string& path)
{
    std::ifstream js(path + ".json");
    require(static_cast<bool>(js), "missing sidecar " + path + ".json");
    nlohmann::json meta;
    try {
        js >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad sidecar: ") + e.what());
    }
    require(meta.value("order", std::string{}) == "parameter-major", "sidecar order must be parameter-major");
    TorusSpace s(meta.at("dims").get<std::vector<int>>(), meta.at("L").get<int>());
    require(s.n == meta.at("n").get<int>(), "sidecar n/dims mismatch");
    return {s, read_f64(path, s.total_cells())};
}

} // namespace dyadic

#endif // DYADIC_HAAR_HPP
