#ifndef DYADIC_EXPERIMENT_HPP
#define DYADIC_EXPERIMENT_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "certify.hpp"
#include "paraproduct.hpp"
#include "representation.hpp"
#include "shift.hpp"

namespace dyadic {

enum ExitCode { kExitOk = 0, kExitConditionFail = 1, kExitConfig = 2, kExitTolerance = 3 };

struct ExperimentConfig {
    // space
    int n = 2;
    std::vector<int> dims;        // empty: all ones
    int L = 4;
    double delta = 0.5;
    int r = -1;                   // < 1: r = L, goodness vacuous
    // kernel
    std::string kernel;           // empty: hilbert<n>
    double beta = 1.5;
    std::string kernel_file;
    std::uint64_t seed = 1;
    int workers = 0;
    // reconstruct
    bool fixed = false, mc = false, truncated = false;
    std::size_t N = 100;
    int i_max = -1;
    std::string sm = "both";
    int pairs = 1;
    double tolerance = 1e-10;
    double sigmas = 3.0;
    // certify
    std::size_t cert_samples = 2000;
    double threshold = 1e3;
    int grids = 2;
    int boxes_per_level = 2;
    int partial_pairs = 3;
    // bench
    int L_min = 6, L_max = 10;
    int repeats = 3;
    std::vector<std::string> operations{"haar_forward", "apply", "shift_apply", "mc_reconstruct"};
    // outputs
    std::string out;
    std::string csv;

    std::string kernel_name() const { return kernel.empty() ? "hilbert" + std::to_string(n) : kernel; }

    TorusSpace space() const
    {
        const int rr = r >= 1 ? r : L;
        if (dims.empty())
            return TorusSpace(n, L, delta, rr);
        require(static_cast<int>(dims.size()) == n, "config: dims needs one entry per parameter");
        return TorusSpace(dims, L, delta, rr);
    }

    nlohmann::json to_json() const
    {
        return {{"n", n},
                {"dims", dims},
                {"L", L},
                {"delta", delta},
                {"r", r},
                {"kernel", kernel_name()},
                {"beta", beta},
                {"kernel_file", kernel_file},
                {"seed", seed},
                {"workers", workers},
                {"fixed", fixed},
                {"mc", mc},
                {"truncated", truncated},
                {"N", N},
                {"i_max", i_max},
                {"sm", sm},
                {"pairs", pairs},
                {"tolerance", tolerance},
                {"sigmas", sigmas},
                {"cert_samples", cert_samples},
                {"threshold", threshold},
                {"grids", grids},
                {"boxes_per_level", boxes_per_level},
                {"partial_pairs", partial_pairs},
                {"L_min", L_min},
                {"L_max", L_max},
                {"repeats", repeats},
                {"operations", operations},
                {"out", out},
                {"csv", csv}};
    }

    static ExperimentConfig from_json(const nlohmann::json& j)
    {
        require(j.is_object(), "config: expected a JSON object");
        ExperimentConfig c;
        const nlohmann::json known = c.to_json();
        for (const auto& [k, v] : j.items())
            require(known.contains(k), "config: unknown key '" + k + "'");
        try {
            c.n = j.value("n", c.n);
            c.dims = j.value("dims", c.dims);
            c.L = j.value("L", c.L);
            c.delta = j.value("delta", c.delta);
            c.r = j.value("r", c.r);
            c.kernel = j.value("kernel", c.kernel);
            c.beta = j.value("beta", c.beta);
            c.kernel_file = j.value("kernel_file", c.kernel_file);
            c.seed = j.value("seed", c.seed);
            c.workers = j.value("workers", c.workers);
            c.fixed = j.value("fixed", c.fixed);
            c.mc = j.value("mc", c.mc);
            c.truncated = j.value("truncated", c.truncated);
            c.N = j.value("N", c.N);
            c.i_max = j.value("i_max", c.i_max);
            c.sm = j.value("sm", c.sm);
            c.pairs = j.value("pairs", c.pairs);
            c.tolerance = j.value("tolerance", c.tolerance);
            c.sigmas = j.value("sigmas", c.sigmas);
            c.cert_samples = j.value("cert_samples", c.cert_samples);
            c.threshold = j.value("threshold", c.threshold);
            c.grids = j.value("grids", c.grids);
            c.boxes_per_level = j.value("boxes_per_level", c.boxes_per_level);
            c.partial_pairs = j.value("partial_pairs", c.partial_pairs);
            c.L_min = j.value("L_min", c.L_min);
            c.L_max = j.value("L_max", c.L_max);
            c.repeats = j.value("repeats", c.repeats);
            c.operations = j.value("operations", c.operations);
            c.out = j.value("out", c.out);
            c.csv = j.value("csv", c.csv);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        return c;
    }

    static ExperimentConfig load(const std::string& path)
    {
        std::ifstream is(path);
        if (!is)
            throw ConfigError("config file not found: " + path);
        try {
            return from_json(nlohmann::json::parse(is));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }

    // hash of the numerically relevant fields (outputs excluded)
    std::string hash() const
    {
        nlohmann::json j = to_json();
        j.erase("out");
        j.erase("csv");
        std::uint64_t h = 0x6479616469636c62ULL;
        for (char ch : j.dump())
            h = hash_combine(h, static_cast<unsigned char>(ch));
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }
};

//
// Kernel registry: hilbert<k>, modulated<k> (k = n), rough (beta in the first
// parameter, hilbert elsewhere), identity, zero, tabulated (kernel_file).
//
inline FourierSeries modulation_a()
{
    FourierSeries a;
    a.cos_terms = {1.0, 0.3};
    a.sin_terms = {0.2};
    return a;
}

inline FourierSeries modulation_b()
{
    FourierSeries b;
    b.cos_terms = {0.5, 0.0, 0.25};
    b.sin_terms = {0.4};
    return b;
}

inline KernelSpec registry_kernel(const ExperimentConfig& c)
{
    const std::string name = c.kernel_name();
    const int n = c.n;
    KernelSpec k{name, {}};
    auto arity = [&](const std::string& stem) {
        if (name == stem)
            return;
        const std::string digits = name.substr(stem.size());
        require(digits == std::to_string(n), "kernel '" + name + "' does not match n = " + std::to_string(n));
    };
    const int depth = c.L;
    if (name.rfind("hilbert", 0) == 0) {
        arity("hilbert");
        for (int i = 0; i < n; ++i)
            k.factors.push_back(KernelDescriptor::hilbert());
    } else if (name.rfind("modulated", 0) == 0) {
        arity("modulated");
        for (int i = 0; i < n; ++i)
            k.factors.push_back(KernelDescriptor::modulated(modulation_a(), modulation_b()));
    } else if (name == "rough") {
        k.factors.push_back(KernelDescriptor::rough(c.beta));
        for (int i = 1; i < n; ++i)
            k.factors.push_back(KernelDescriptor::hilbert());
    } else if (name == "identity" || name == "zero") {
        for (int i = 0; i < n; ++i) {
            const int d = c.dims.empty() ? 1 : c.dims[static_cast<std::size_t>(i)];
            k.factors.push_back(name == "zero" ? KernelDescriptor::zero(depth, d) : KernelDescriptor::identity(depth, d));
        }
    } else if (name == "tabulated") {
        require(!c.kernel_file.empty(), "kernel 'tabulated' needs kernel_file");
        if (!std::filesystem::exists(c.kernel_file))
            throw ConfigError("kernel file not found: " + c.kernel_file);
        const std::size_t m = std::size_t{1} << depth;
        const std::vector<double> t = read_f64(c.kernel_file, m * m);
        for (int i = 0; i < n; ++i)
            k.factors.push_back(KernelDescriptor::tabulated(t));
    } else {
        throw ConfigError("unknown kernel '" + name + "' (hilbert<n>, modulated<n>, rough, identity, zero, tabulated)");
    }
    return k;
}

inline OperatorHandle registry_operator(const ExperimentConfig& c)
{
    const TorusSpace s = c.space();
    try {
        return OperatorHandle::from_kernel(s, registry_kernel(c));
    } catch (const NumericalError& e) {
        throw ConfigError(std::string("kernel has no operator matrix: ") + e.what());
    }
}

inline void emit_json(const nlohmann::json& j, const std::string& path, std::ostream& fallback)
{
    if (path.empty()) {
        fallback << j.dump(2) << "\n";
        return;
    }
    std::ofstream os(path);
    require(static_cast<bool>(os), "cannot open for writing: " + path);
    os << j.dump(2) << "\n";
}

inline nlohmann::json report_header(const ExperimentConfig& c, const std::string& command)
{
    return {{"command", command}, {"config", c.to_json()}, {"config_hash", c.hash()}};
}

//
// reconstruct: fixed grid, Monte Carlo over grids, truncated expansion.
// Writes the JSON report (and the fixed-grid bucket CSV); returns the exit code.
//
inline int cmd_reconstruct(const ExperimentConfig& c, std::ostream& log = std::cerr, std::ostream& out = std::cout)
{
    nlohmann::json rep = report_header(c, "reconstruct");
    bool ok = true;
    try {
        const OperatorHandle op = registry_operator(c);
        const TorusSpace& s = op.space();
        require(c.pairs >= 1, "config: pairs >= 1");
        require(c.sm == "smaller" || c.sm == "f-side" || c.sm == "both", "config: sm must be smaller, f-side or both");
        const bool any = c.fixed || c.mc || c.truncated;
        const bool fixed = c.fixed || !any;
        const GridShift grid = sample_grid(s, hash_combine(c.seed, 0x6d));
        std::vector<SmConvention> conventions;
        if (c.sm != "f-side")
            conventions.push_back(SmConvention::Smaller);
        if (c.sm != "smaller")
            conventions.push_back(SmConvention::FSide);
        if (c.mc)
            pi_good_table(s);
        if (c.truncated)
            require(c.i_max >= 0, "config: truncated needs i_max >= 0");

        nlohmann::json runs = nlohmann::json::array();
        std::optional<ReconstructionReport> first_fixed;
        for (int p = 0; p < c.pairs; ++p) {
            const MultiFunction f = MultiFunction::random(s, hash_combine(c.seed, 2 * static_cast<std::uint64_t>(p) + 1));
            const MultiFunction g = MultiFunction::random(s, hash_combine(c.seed, 2 * static_cast<std::uint64_t>(p) + 2));
            nlohmann::json run{{"pair", p}};
            if (fixed) {
                const ReconstructionReport r = fixed_grid_reconstruct(op, f, g, grid);
                const bool pass = r.relative_error() <= c.tolerance;
                ok = ok && pass;
                run["fixed"] = r.to_json();
                run["fixed"]["pass"] = pass;
                if (!first_fixed)
                    first_fixed = r;
            }
            if (c.mc) {
                nlohmann::json mcs = nlohmann::json::array();
                for (SmConvention sm : conventions) {
                    const ReconstructionReport r = mc_reconstruct(op, f, g, c.N, hash_combine(c.seed, 0x3c + static_cast<std::uint64_t>(p)), sm, c.workers);
                    const double dev = std::abs(r.reconstructed - r.direct);
                    // the floor absorbs rounding when every grid reproduces the pairing exactly
                    const bool pass = dev <= c.sigmas * r.stderr_ + c.tolerance * std::max(1.0, std::abs(r.direct));
                    ok = ok && pass;
                    nlohmann::json j = r.to_json();
                    j["deviation_in_stderr"] = r.stderr_ > 0.0 ? dev / r.stderr_ : 0.0;
                    j["pass"] = pass;
                    mcs.push_back(j);
                }
                run["mc"] = mcs;
            }
            if (c.truncated) {
                const ReconstructionReport r = truncated_representation(op, f, g, grid, c.i_max);
                const double err = std::abs(r.reconstructed - r.direct);
                const bool pass = err <= r.tail_bound + c.tolerance * std::max(1.0, std::abs(r.direct));
                ok = ok && pass;
                run["truncated"] = r.to_json();
                run["truncated"]["error"] = err;
                run["truncated"]["pass"] = pass;
            }
            runs.push_back(run);
        }
        rep["grid"] = grid_to_json(grid);
        rep["runs"] = runs;
        rep["pass"] = ok;
        if (!c.csv.empty() && first_fixed) {
            std::ofstream os(c.csv);
            require(static_cast<bool>(os), "cannot open for writing: " + c.csv);
            first_fixed->write_bucket_csv(os);
        }
        emit_json(rep, c.out, out);
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalError& e) {
        log << "numerical failure: " << e.what() << "\n";
        return kExitTolerance;
    }
    if (!ok)
        log << "reconstruction outside tolerance\n";
    return ok ? kExitOk : kExitTolerance;
}

inline CertConfig cert_config(const ExperimentConfig& c)
{
    CertConfig cc;
    cc.delta = c.delta;
    cc.samples = c.cert_samples;
    cc.seed = c.seed;
    cc.threshold = c.threshold;
    cc.grids = c.grids;
    cc.boxes_per_level = c.boxes_per_level;
    cc.partial_pairs = c.partial_pairs;
    return cc;
}

// certify: pass -> 0, fail -> 1 with the witnesses in the report
inline int cmd_certify(const ExperimentConfig& c, std::ostream& log = std::cerr, std::ostream& out = std::cout)
{
    try {
        const TorusSpace s = c.space();
        const KernelSpec k = registry_kernel(c);
        const CertReport r = certify_kernel(s, k, cert_config(c));
        nlohmann::json rep = report_header(c, "certify");
        rep["report"] = r.to_json();
        if (c.out.empty())
            r.print_summary(log);
        else
            r.print_summary(out);
        emit_json(rep, c.out, out);
        return r.pass ? kExitOk : kExitConditionFail;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalError& e) {
        log << "numerical failure: " << e.what() << "\n";
        return kExitTolerance;
    }
}

struct BenchRow {
    std::string operation;
    int n = 0;
    int L = 0;
    std::size_t cells = 0;
    double seconds = 0.0;
    double checksum = 0.0;

    double rate() const { return seconds > 0.0 ? static_cast<double>(cells) / seconds : 0.0; }
};

inline double checksum(const std::vector<double>& v)
{
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += v[i] * static_cast<double>(1 + i % 7);
    return s;
}

// best of `repeats` wall times; fn returns a checksum of its numeric output
template <class Fn>
BenchRow time_op(const std::string& name, int n, int L, std::size_t cells, int repeats, Fn&& fn)
{
    BenchRow row{name, n, L, cells, std::numeric_limits<double>::infinity(), 0.0};
    for (int k = 0; k < std::max(1, repeats); ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        row.checksum = fn();
        const auto t1 = std::chrono::steady_clock::now();
        row.seconds = std::min(row.seconds, std::chrono::duration<double>(t1 - t0).count());
    }
    return row;
}

// log-log least-squares slope of seconds against cells
inline double loglog_slope(const std::vector<BenchRow>& rows, const std::string& op)
{
    std::vector<double> x, y;
    for (const auto& r : rows)
        if (r.operation == op && r.seconds > 0.0) {
            x.push_back(std::log2(static_cast<double>(r.cells)));
            y.push_back(std::log2(r.seconds));
        }
    if (x.size() < 2)
        return std::numeric_limits<double>::quiet_NaN();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

inline std::vector<BenchRow> run_bench(const ExperimentConfig& c, std::ostream& log)
{
    require(c.L_min >= 2 && c.L_max >= c.L_min, "config: need 2 <= L_min <= L_max");
    std::vector<BenchRow> rows;
    auto wants = [&](const std::string& op) { return std::find(c.operations.begin(), c.operations.end(), op) != c.operations.end(); };
    for (const auto& op : c.operations)
        require(op == "haar_forward" || op == "apply" || op == "shift_apply" || op == "mc_reconstruct", "config: unknown bench operation '" + op + "'");
    for (int L = c.L_min; L <= c.L_max; ++L) {
        ExperimentConfig lc = c;
        lc.L = L;
        const TorusSpace s = lc.space();
        const std::size_t cells = s.total_cells();
        const MultiFunction f = MultiFunction::random(s, hash_combine(c.seed, 11));
        const GridShift grid = sample_grid(s, hash_combine(c.seed, 12));
        if (wants("haar_forward")) {
            const GridAxes axes(s, grid);
            rows.push_back(time_op("haar_forward", s.n, L, cells, c.repeats, [&] { return checksum(haar_forward_values(f.values, axes)); }));
        }
        // dense operator action and Monte Carlo stay at desk sizes
        const bool dense_ok = cells * s.axis_cells(0) <= (std::size_t{1} << 31);
        if (wants("apply") && dense_ok) {
            const OperatorHandle op = registry_operator(lc);
            rows.push_back(time_op("apply", s.n, L, cells, c.repeats, [&] { return checksum(apply(op, f).values); }));
        }
        if (wants("shift_apply")) {
            ShiftSpec spec = ShiftSpec::make(s, grid, std::vector<int>(static_cast<std::size_t>(s.n), 1), std::vector<int>(static_cast<std::size_t>(s.n), 1));
            spec.provider = saturated_sign_provider(spec, c.seed);
            rows.push_back(time_op("shift_apply", s.n, L, cells, c.repeats, [&] { return checksum(shift_apply(spec, f, c.workers).values); }));
        }
        if (wants("mc_reconstruct") && cells <= (std::size_t{1} << 12)) {
            const OperatorHandle op = registry_operator(lc);
            const MultiFunction g = MultiFunction::random(s, hash_combine(c.seed, 13));
            const std::size_t N = std::min<std::size_t>(c.N, 8);
            rows.push_back(time_op("mc_reconstruct", s.n, L, cells * N, 1, [&] { return mc_reconstruct(op, f, g, N, c.seed, SmConvention::Smaller, c.workers).reconstructed; }));
        }
        log << "bench L=" << L << " done\n";
    }
    return rows;
}

inline void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& os)
{
    os << "operation,n,L,cells,seconds,cells_per_sec\n";
    for (const auto& r : rows) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%zu,%.6e,%.6e\n", r.operation.c_str(), r.n, r.L, r.cells, r.seconds, r.rate());
        os << buf;
    }
}

// bench: CSV timings; the JSON report carries checksums (identical across runs) and fitted slopes
inline int cmd_bench(const ExperimentConfig& c, std::ostream& log = std::cerr, std::ostream& out = std::cout)
{
    try {
        const std::vector<BenchRow> rows = run_bench(c, log);
        if (c.csv.empty()) {
            write_bench_csv(rows, out);
        } else {
            std::ofstream os(c.csv);
            require(static_cast<bool>(os), "cannot open for writing: " + c.csv);
            write_bench_csv(rows, os);
        }
        if (!c.out.empty()) {
            nlohmann::json rep = report_header(c, "bench");
            nlohmann::json rs = nlohmann::json::array();
            for (const auto& r : rows)
                rs.push_back({{"operation", r.operation}, {"n", r.n}, {"L", r.L}, {"cells", r.cells}, {"seconds", r.seconds},
                              {"cells_per_sec", r.rate()}, {"checksum", r.checksum}});
            rep["rows"] = rs;
            const double slope = loglog_slope(rows, "haar_forward");
            rep["haar_forward_loglog_slope"] = std::isnan(slope) ? nlohmann::json(nullptr) : nlohmann::json(slope);
            emit_json(rep, c.out, out);
        }
        return kExitOk;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalError& e) {
        log << "numerical failure: " << e.what() << "\n";
        return kExitTolerance;
    }
}

} // namespace dyadic

#endif // DYADIC_EXPERIMENT_HPP
