#ifndef DYADIC_GRID_HPP
#define DYADIC_GRID_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"

namespace dyadic {

//
// The n-parameter torus [0,1)^{d_1} x ... x [0,1)^{d_n}, discretized at
// depth L (finest cells have side 2^{-L}).
//
struct TorusSpace {
    int n = 1;
    std::vector<int> dims{1};
    int depth = 4;
    double delta = 0.5;
    int r = 1;

    TorusSpace() = default;
    TorusSpace(int n_, int depth_, double delta_ = 0.5, int r_ = 1)
        : n(n_), dims(static_cast<std::size_t>(n_), 1), depth(depth_), delta(delta_), r(r_)
    {
        validate();
    }
    TorusSpace(std::vector<int> dims_, int depth_, double delta_ = 0.5, int r_ = 1)
        : n(static_cast<int>(dims_.size())), dims(std::move(dims_)), depth(depth_), delta(delta_), r(r_)
    {
        validate();
    }

    void validate() const
    {
        require(n >= 1, "parameter count must be >= 1");
        require(static_cast<int>(dims.size()) == n, "dims must have one entry per parameter");
        for (int d : dims)
            require(d >= 1 && d <= 4, "per-parameter dimension must be in [1,4]");
        require(depth >= 2 && depth <= 16, "depth must be in [2,16]");
        require(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
        require(r >= 1, "goodness exponent r must be >= 1");
        int log_cells = 0;
        for (int d : dims)
            log_cells += d * depth;
        require(log_cells <= 28, "total cell count exceeds 2^28");
    }

    double gamma(int i) const { return delta / (2.0 * dims[static_cast<std::size_t>(i)] + 2.0 * delta); }
    int dim(int i) const { return dims[static_cast<std::size_t>(i)]; }

    // cells per parameter axis: 2^{L d_i}
    std::size_t axis_cells(int i) const { return std::size_t{1} << (depth * dim(i)); }
    double cell_volume(int i) const { return std::ldexp(1.0, -depth * dim(i)); }
    double total_cell_volume() const
    {
        double v = 1.0;
        for (int i = 0; i < n; ++i)
            v *= cell_volume(i);
        return v;
    }
    std::size_t total_cells() const
    {
        std::size_t c = 1;
        for (int i = 0; i < n; ++i)
            c *= axis_cells(i);
        return c;
    }
    std::vector<std::size_t> shape() const
    {
        std::vector<std::size_t> s(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            s[static_cast<std::size_t>(i)] = axis_cells(i);
        return s;
    }

    bool same_shape(const TorusSpace& o) const { return n == o.n && dims == o.dims && depth == o.depth; }
};

//
// Random shift: omega[i][j-1] is the d_i-bit pattern omega_i^j, j = 1..L.
//
struct GridShift {
    std::uint64_t seed = 0;
    int depth = 0;
    std::vector<int> dims;
    std::vector<std::vector<std::uint32_t>> omega;

    static GridShift zero(const TorusSpace& space)
    {
        GridShift g;
        g.depth = space.depth;
        g.dims = space.dims;
        g.omega.assign(static_cast<std::size_t>(space.n), std::vector<std::uint32_t>(static_cast<std::size_t>(space.depth), 0u));
        return g;
    }

    int n() const { return static_cast<int>(omega.size()); }

    std::uint32_t bit(int param, int j, int coord) const
    {
        return (omega[static_cast<std::size_t>(param)][static_cast<std::size_t>(j - 1)] >> coord) & 1u;
    }

    // Shift of level-k cubes in coordinate t, in finest-cell units:
    // sum_{j = k+1}^{L} 2^{L-j} omega^j_t.
    std::uint32_t offset_cells(int param, int level, int coord) const
    {
        std::uint32_t s = 0;
        for (int j = level + 1; j <= depth; ++j)
            s += bit(param, j, coord) << (depth - j);
        return s;
    }

    bool compatible(const TorusSpace& space) const { return depth == space.depth && dims == space.dims; }

    bool operator==(const GridShift& o) const { return depth == o.depth && dims == o.dims && omega == o.omega; }
};

// Each omega_i^j drawn uniformly from {0,1}^{d_i}; deterministic in the seed.
inline GridShift sample_grid(const TorusSpace& space, std::uint64_t seed)
{
    GridShift g = GridShift::zero(space);
    g.seed = seed;
    Rng rng(mix64(seed ^ 0x5eedULL));
    for (int i = 0; i < space.n; ++i)
        for (int j = 0; j < space.depth; ++j)
            g.omega[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = rng.bits(space.dim(i));
    return g;
}

inline nlohmann::json grid_to_json(const GridShift& g)
{
    nlohmann::json bits = nlohmann::json::array();
    for (std::size_t i = 0; i < g.omega.size(); ++i) {
        const int width = (g.dims[i] + 3) / 4;
        std::ostringstream os;
        os << std::hex;
        for (std::uint32_t w : g.omega[i])
            os << std::setw(width) << std::setfill('0') << w;
        bits.push_back(os.str());
    }
    return {{"seed", g.seed}, {"n", g.omega.size()}, {"L", g.depth}, {"dims", g.dims}, {"bits", bits}};
}

inline GridShift grid_from_json(const nlohmann::json& j)
{
    GridShift g;
    g.seed = j.at("seed").get<std::uint64_t>();
    g.depth = j.at("L").get<int>();
    const auto n = j.at("n").get<std::size_t>();
    g.dims = j.contains("dims") ? j.at("dims").get<std::vector<int>>() : std::vector<int>(n, 1);
    require(g.dims.size() == n, "grid json: dims/n mismatch");
    const auto& bits = j.at("bits");
    require(bits.size() == n, "grid json: bits/n mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = bits[i].get<std::string>();
        const std::size_t width = static_cast<std::size_t>((g.dims[i] + 3) / 4);
        require(s.size() == width * static_cast<std::size_t>(g.depth), "grid json: wrong bit string length");
        std::vector<std::uint32_t> w(static_cast<std::size_t>(g.depth));
        for (int k = 0; k < g.depth; ++k)
            w[static_cast<std::size_t>(k)] = static_cast<std::uint32_t>(std::stoul(s.substr(static_cast<std::size_t>(k) * width, width), nullptr, 16));
        g.omega.push_back(std::move(w));
    }
    return g;
}

//
// A dyadic cube of one parameter: level k, integer position p in [0,2^k)^d
// (before shifting). The realized cube is the standard one translated by the
// grid's level-k offset, modulo 1.
//
struct DyadicCube {
    int param = 0;
    int level = 0;
    std::vector<std::uint32_t> pos;

    int dim() const { return static_cast<int>(pos.size()); }
    double side() const { return std::ldexp(1.0, -level); }
    double volume() const { return std::ldexp(1.0, -level * dim()); }
    bool operator==(const DyadicCube& o) const { return param == o.param && level == o.level && pos == o.pos; }
};

// Box on the torus in one parameter: per coordinate left endpoint in [0,1), common side.
struct TorusBox {
    std::vector<double> left;
    double side = 0.0;
};

inline TorusBox realize_cube(const DyadicCube& cube, const GridShift& grid)
{
    const int L = grid.depth;
    require(cube.level >= 0 && cube.level <= L, "cube level out of range");
    require(cube.param >= 0 && cube.param < grid.n(), "cube parameter out of range");
    require(cube.dim() == grid.dims[static_cast<std::size_t>(cube.param)], "cube dimension mismatch");
    TorusBox box;
    box.side = cube.side();
    const std::uint32_t mask = (L == 32) ? ~0u : ((1u << L) - 1u);
    for (int t = 0; t < cube.dim(); ++t) {
        require(cube.pos[static_cast<std::size_t>(t)] < (1u << cube.level), "cube position out of range");
        const std::uint32_t cells = ((cube.pos[static_cast<std::size_t>(t)] << (L - cube.level)) + grid.offset_cells(cube.param, cube.level, t)) & mask;
        box.left.push_back(std::ldexp(static_cast<double>(cells), -L));
    }
    return box;
}

// Wrapped gap between [a, a+la) and [b, b+lb) on the unit circle; 0 if they meet.
inline double circle_gap(double a, double la, double b, double lb)
{
    auto mod1 = [](double x) {
        x = std::fmod(x, 1.0);
        return x < 0.0 ? x + 1.0 : x;
    };
    if (mod1(b - a) < la || mod1(a - b) < lb)
        return 0.0;
    return std::min(mod1(b - a - la), mod1(a - b - lb));
}

// l-infinity torus distance between two boxes of the same parameter.
inline double torus_distance(const TorusBox& a, const TorusBox& b)
{
    require(a.left.size() == b.left.size(), "torus_distance: dimension mismatch");
    double d = 0.0;
    for (std::size_t t = 0; t < a.left.size(); ++t)
        d = std::max(d, circle_gap(a.left[t], a.side, b.left[t], b.side));
    return d;
}

//
// Goodness of a realized cube given in cell units: left[t] (cells), level k.
// Bad iff some level 1 <= k' <= k - r has its cube boundary within
// 2 l(I)^gamma l(I~)^{1-gamma}. The level-0 cube is the whole torus and
// has no boundary.
//
inline bool is_good_cells(const TorusSpace& space, const GridShift& grid, int param, int level, const std::uint32_t* left_cells)
{
    const int L = space.depth;
    const int d = space.dim(param);
    const double gamma = space.gamma(param);
    const double side = std::ldexp(1.0, -level);
    const std::uint32_t len = 1u << (L - level);
    for (int kb = 1; kb <= level - space.r; ++kb) {
        const std::uint32_t big = 1u << (L - kb);
        const double thr = 2.0 * std::pow(side, gamma) * std::pow(std::ldexp(1.0, -kb), 1.0 - gamma);
        std::uint32_t dmin = big;
        for (int t = 0; t < d; ++t) {
            const std::uint32_t off = grid.offset_cells(param, kb, t);
            const std::uint32_t o = (left_cells[t] + (1u << L) - off) & (big - 1u);
            const std::uint32_t dist = std::min(o, big - o - len);
            dmin = std::min(dmin, dist);
        }
        if (std::ldexp(static_cast<double>(dmin), -L) <= thr)
            return false;
    }
    return true;
}

inline bool is_good(const TorusSpace& space, const GridShift& grid, const DyadicCube& cube)
{
    require(grid.compatible(space), "grid does not match space");
    const TorusBox box = realize_cube(cube, grid);
    std::vector<std::uint32_t> cells(box.left.size());
    for (std::size_t t = 0; t < cells.size(); ++t)
        cells[t] = static_cast<std::uint32_t>(std::ldexp(box.left[t], space.depth));
    return is_good_cells(space, grid, cube.param, cube.level, cells.data());
}

struct ProbabilityEstimate {
    double p = 0.0;
    double stderr_ = 0.0;
    std::size_t samples = 0;
};

// Monte Carlo over grid shifts for a fixed standard position.
inline ProbabilityEstimate estimate_pi_good(const TorusSpace& space, int param, int level, std::size_t samples, std::uint64_t seed,
                                            std::vector<std::uint32_t> position = {})
{
    require(samples >= 1, "estimate_pi_good needs at least one sample");
    require(level >= 0 && level <= space.depth, "level out of range");
    DyadicCube cube{param, level, position.empty() ? std::vector<std::uint32_t>(static_cast<std::size_t>(space.dim(param)), 0u) : std::move(position)};
    std::size_t good = 0;
    for (std::size_t s = 0; s < samples; ++s) {
        const GridShift g = sample_grid(space, hash_combine(seed, s));
        good += is_good(space, g, cube) ? 1 : 0;
    }
    ProbabilityEstimate e;
    e.samples = samples;
    e.p = static_cast<double>(good) / static_cast<double>(samples);
    e.stderr_ = std::sqrt(e.p * (1.0 - e.p) / static_cast<double>(samples));
    return e;
}

//
// Exact goodness probability at a level. The relative offset of a random
// level-k cube against all coarser skeletons is uniform over the 2^k slots
// of each coordinate, and coordinates are independent, so
// pi = (fraction of good 1-d slots)^d.
//
inline double exact_pi_good(const TorusSpace& space, int param, int level)
{
    require(level >= 0 && level <= space.depth, "level out of range");
    if (level - space.r < 1)
        return 1.0;
    const int L = space.depth;
    const double gamma = space.gamma(param);
    const double side = std::ldexp(1.0, -level);
    const std::uint32_t len = 1u << (L - level);
    std::size_t good = 0;
    const std::uint32_t slots = 1u << level;
    for (std::uint32_t p = 0; p < slots; ++p) {
        const std::uint32_t left = p * len;
        bool ok = true;
        for (int kb = 1; kb <= level - space.r && ok; ++kb) {
            const std::uint32_t big = 1u << (L - kb);
            const std::uint32_t o = left & (big - 1u);
            const std::uint32_t dist = std::min(o, big - o - len);
            const double thr = 2.0 * std::pow(side, gamma) * std::pow(std::ldexp(1.0, -kb), 1.0 - gamma);
            ok = std::ldexp(static_cast<double>(dist), -L) > thr;
        }
        good += ok ? 1 : 0;
    }
    return std::pow(static_cast<double>(good) / static_cast<double>(slots), space.dim(param));
}

} // namespace dyadic

#endif // DYADIC_GRID_HPP
