#ifndef DYADIC_CARLESON_HPP
#define DYADIC_CARLESON_HPP

#include <algorithm>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "grid.hpp"
#include "haar.hpp"

namespace dyadic {

// A dyadic rectangle: one cube per parameter.
struct Rectangle {
    std::vector<int> levels;
    std::vector<std::size_t> positions;
};

struct CarlesonReport {
    double value = 0.0;
    std::vector<Rectangle> witnesses;
    std::string family;

    nlohmann::json to_json() const
    {
        nlohmann::json w = nlohmann::json::array();
        for (const auto& r : witnesses)
            w.push_back({{"levels", r.levels}, {"positions", r.positions}});
        return {{"value", value}, {"witnesses", w}, {"family", family}};
    }
};

//
// Squared cancellative Haar mass of b gathered per cube tuple, and its sums
// over all sub-rectangles: D[R] = sum_{R' subset R} sum_patterns <b, h_R'>^2.
// Both live on the per-axis box layout (every cube of levels 0..L).
//
class CarlesonTable {
public:
    CarlesonTable(const MultiFunction& b, const GridShift& grid) : axes_(b.space, grid)
    {
        const TorusSpace& s = b.space;
        std::vector<double> sq = haar_forward_values(b.values, axes_);
        for (double& x : sq)
            x *= x;
        Shape shape{s.shape()};
        for (int i = 0; i < s.n; ++i) {
            const HaarAxis& ax = axes_[i];
            sq = map_axis(sq, shape, static_cast<std::size_t>(i), ax.box_count(), [&](const double* in, double* out) {
                std::fill(out, out + ax.box_count(), 0.0);
                for (std::size_t sl = 1; sl < ax.cells(); ++sl)
                    out[ax.box_index(ax.slot_level(sl), ax.slot_pos(sl))] += in[sl];
            });
        }
        mass_ = sq;
        shape_ = shape;
        std::vector<double> d = sq;
        for (int i = 0; i < s.n; ++i) {
            const HaarAxis& ax = axes_[i];
            Shape sh = shape_;
            d = map_axis(d, sh, static_cast<std::size_t>(i), ax.box_count(), [&](const double* in, double* out) {
                std::copy(in, in + ax.box_count(), out);
                for (int k = s.depth; k >= 1; --k)
                    for (std::size_t p = 0; p < ax.cubes_at(k); ++p)
                        out[ax.box_index(k - 1, ax.parent(k, p))] += out[ax.box_index(k, p)];
            });
        }
        sums_ = std::move(d);
        for (int i = 0; i < s.n; ++i) {
            const HaarAxis& ax = axes_[i];
            std::vector<int> lv(ax.box_count());
            std::vector<std::size_t> ps(ax.box_count());
            for (int k = 0; k <= s.depth; ++k)
                for (std::size_t p = 0; p < ax.cubes_at(k); ++p) {
                    lv[ax.box_index(k, p)] = k;
                    ps[ax.box_index(k, p)] = p;
                }
            box_level_.push_back(std::move(lv));
            box_pos_.push_back(std::move(ps));
        }
    }

    const GridAxes& axes() const { return axes_; }
    std::size_t size() const { return sums_.size(); }
    double mass(std::size_t idx) const { return mass_[idx]; }
    double sum(std::size_t idx) const { return sums_[idx]; }

    Rectangle rectangle(std::size_t idx) const
    {
        const int n = axes_.n();
        Rectangle r;
        r.levels.resize(static_cast<std::size_t>(n));
        r.positions.resize(static_cast<std::size_t>(n));
        for (int i = n - 1; i >= 0; --i) {
            const std::size_t e = shape_.extents[static_cast<std::size_t>(i)];
            const std::size_t b = idx % e;
            idx /= e;
            r.levels[static_cast<std::size_t>(i)] = box_level_[static_cast<std::size_t>(i)][b];
            r.positions[static_cast<std::size_t>(i)] = box_pos_[static_cast<std::size_t>(i)][b];
        }
        return r;
    }

    double volume(std::size_t idx) const
    {
        double v = 1.0;
        const Rectangle r = rectangle(idx);
        for (int i = 0; i < axes_.n(); ++i)
            v *= std::ldexp(1.0, -r.levels[static_cast<std::size_t>(i)] * axes_[i].dim());
        return v;
    }

    std::size_t index(const Rectangle& r) const
    {
        std::size_t idx = 0;
        for (int i = 0; i < axes_.n(); ++i)
            idx = idx * shape_.extents[static_cast<std::size_t>(i)] + axes_[i].box_index(r.levels[static_cast<std::size_t>(i)], r.positions[static_cast<std::size_t>(i)]);
        return idx;
    }

    // indicator on the box layout of rectangles fully covered by a union
    std::vector<char> covered(const std::vector<Rectangle>& rects) const
    {
        const TorusSpace& s = axes_.space();
        std::vector<double> bitmap(s.total_cells(), 0.0);
        for (const auto& r : rects) {
            std::vector<std::vector<std::size_t>> cells;
            for (int i = 0; i < s.n; ++i)
                cells.push_back(axes_[i].cube_cells(r.levels[static_cast<std::size_t>(i)], r.positions[static_cast<std::size_t>(i)]));
            std::vector<std::size_t> pick(cells.size(), 0);
            while (true) {
                std::size_t idx = 0;
                for (int i = 0; i < s.n; ++i)
                    idx = idx * s.axis_cells(i) + cells[static_cast<std::size_t>(i)][pick[static_cast<std::size_t>(i)]];
                bitmap[idx] = 1.0;
                int a = s.n - 1;
                while (a >= 0 && ++pick[static_cast<std::size_t>(a)] == cells[static_cast<std::size_t>(a)].size())
                    pick[static_cast<std::size_t>(a--)] = 0;
                if (a < 0)
                    break;
            }
        }
        Shape shape{s.shape()};
        for (int i = 0; i < s.n; ++i) {
            const HaarAxis& ax = axes_[i];
            bitmap = map_axis(bitmap, shape, static_cast<std::size_t>(i), ax.box_count(), [&](const double* in, double* out) {
                for (std::size_t p = 0; p < ax.cubes_at(s.depth); ++p)
                    out[ax.box_index(s.depth, p)] = in[ax.cube_cells(s.depth, p)[0]];
                for (int k = s.depth - 1; k >= 0; --k)
                    for (std::size_t p = 0; p < ax.cubes_at(k); ++p)
                        out[ax.box_index(k, p)] = 1.0;
                for (int k = s.depth; k >= 1; --k)
                    for (std::size_t p = 0; p < ax.cubes_at(k); ++p) {
                        double& par = out[ax.box_index(k - 1, ax.parent(k, p))];
                        par = std::min(par, out[ax.box_index(k, p)]);
                    }
            });
        }
        std::vector<char> out(bitmap.size());
        for (std::size_t i = 0; i < bitmap.size(); ++i)
            out[i] = bitmap[i] > 0.5 ? 1 : 0;
        return out;
    }

    // union measure from the rasterized cells
    double union_measure(const std::vector<Rectangle>& rects) const
    {
        const TorusSpace& s = axes_.space();
        std::vector<char> bitmap(s.total_cells(), 0);
        std::size_t count = 0;
        for (const auto& r : rects) {
            std::vector<std::vector<std::size_t>> cells;
            for (int i = 0; i < s.n; ++i)
                cells.push_back(axes_[i].cube_cells(r.levels[static_cast<std::size_t>(i)], r.positions[static_cast<std::size_t>(i)]));
            std::vector<std::size_t> pick(cells.size(), 0);
            while (true) {
                std::size_t idx = 0;
                for (int i = 0; i < s.n; ++i)
                    idx = idx * s.axis_cells(i) + cells[static_cast<std::size_t>(i)][pick[static_cast<std::size_t>(i)]];
                count += bitmap[idx] ? 0 : 1;
                bitmap[idx] = 1;
                int a = s.n - 1;
                while (a >= 0 && ++pick[static_cast<std::size_t>(a)] == cells[static_cast<std::size_t>(a)].size())
                    pick[static_cast<std::size_t>(a--)] = 0;
                if (a < 0)
                    break;
            }
        }
        return static_cast<double>(count) * s.total_cell_volume();
    }

private:
    GridAxes axes_;
    Shape shape_;
    std::vector<double> mass_, sums_;
    std::vector<std::vector<int>> box_level_;
    std::vector<std::vector<std::size_t>> box_pos_;
};

// sup over single dyadic rectangles R of (S(R)/|R|)^{1/2}; exact at finite depth
inline CarlesonReport carleson_rect(const MultiFunction& b, const GridShift& grid)
{
    const CarlesonTable t(b, grid);
    CarlesonReport rep;
    rep.family = "single-rectangle";
    double best = 0.0;
    std::size_t arg = 0;
    for (std::size_t idx = 0; idx < t.size(); ++idx) {
        const double r = t.sum(idx) / t.volume(idx);
        if (r > best) {
            best = r;
            arg = idx;
        }
    }
    rep.value = std::sqrt(best);
    if (best > 0.0)
        rep.witnesses.push_back(t.rectangle(arg));
    return rep;
}

// one-parameter dyadic BMO: the rectangle search with a single parameter
inline double bmo_dyadic_1p(const MultiFunction& b, const GridShift& grid)
{
    require(b.space.n == 1, "bmo_dyadic_1p needs a one-parameter function");
    return carleson_rect(b, grid).value;
}

//
// Greedy lower bound for the open-set supremum: grow a union of at most m
// rectangles, each step adding the candidate that maximizes
// (mass of rectangles inside the union) / |union|. Candidates are the
// highest-ratio single rectangles.
//
inline CarlesonReport carleson_openset(const MultiFunction& b, const GridShift& grid, int m, std::size_t candidates = 64)
{
    require(m >= 1, "carleson_openset needs m >= 1");
    const CarlesonTable t(b, grid);
    CarlesonReport rep = carleson_rect(b, grid);
    rep.family = "greedy-union-" + std::to_string(m);
    if (m == 1 || rep.witnesses.empty())
        return rep;

    std::vector<std::size_t> order;
    for (std::size_t idx = 0; idx < t.size(); ++idx)
        if (t.sum(idx) > 0.0)
            order.push_back(idx);
    auto ratio = [&](std::size_t idx) { return t.sum(idx) / t.volume(idx); };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return ratio(a) > ratio(c); });
    if (order.size() > candidates)
        order.resize(candidates);

    auto score = [&](const std::vector<Rectangle>& rects) {
        const auto cov = t.covered(rects);
        std::vector<double> terms(cov.size(), 0.0);
        for (std::size_t i = 0; i < cov.size(); ++i)
            if (cov[i])
                terms[i] = t.mass(i);
        return tree_sum(terms) / t.union_measure(rects);
    };

    std::vector<Rectangle> current = rep.witnesses;
    double best = rep.value * rep.value;
    for (int step = 1; step < m; ++step) {
        double step_best = -1.0;
        std::vector<Rectangle> step_union;
        for (std::size_t idx : order) {
            std::vector<Rectangle> trial = current;
            trial.push_back(t.rectangle(idx));
            const double v = score(trial);
            if (v > step_best) {
                step_best = v;
                step_union = std::move(trial);
            }
        }
        if (step_best <= best)
            break;
        best = step_best;
        current = std::move(step_union);
    }
    rep.value = std::sqrt(best);
    rep.witnesses = current;
    return rep;
}

} // namespace dyadic

#endif // DYADIC_CARLESON_HPP
