#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <dyadic/experiment.hpp>

using namespace dyadic;

namespace {

// flags shared by every subcommand; values land in a JSON overlay applied after --config
struct Common {
    std::string config;
    nlohmann::json overlay = nlohmann::json::object();
};

template <class T>
void flag(CLI::App* app, Common& c, const std::string& name, const std::string& key, const std::string& help)
{
    app->add_option_function<T>(name, [&c, key](const T& v) { c.overlay[key] = v; }, help);
}

void add_common(CLI::App* app, Common& c)
{
    app->add_option("--config", c.config, "JSON experiment config");
    flag<int>(app, c, "--n", "n", "number of parameters");
    flag<std::vector<int>>(app, c, "--dims", "dims", "per-parameter dimensions");
    flag<int>(app, c, "--L", "L", "depth");
    flag<double>(app, c, "--delta", "delta", "kernel regularity in (0,1)");
    flag<int>(app, c, "--r", "r", "goodness exponent (default L)");
    flag<std::string>(app, c, "--kernel", "kernel", "hilbert<n>, modulated<n>, rough, identity, zero, tabulated");
    flag<double>(app, c, "--beta", "beta", "rough-power exponent");
    flag<std::string>(app, c, "--kernel-file", "kernel_file", "cell matrix for the tabulated kernel");
    flag<std::uint64_t>(app, c, "--seed", "seed", "seed");
    flag<int>(app, c, "--workers", "workers", "worker threads (default DYADIC_WORKERS or 1)");
    flag<std::string>(app, c, "--out", "out", "JSON report path (default stdout)");
    flag<std::string>(app, c, "--csv", "csv", "CSV output path");
}

ExperimentConfig resolve(const Common& c)
{
    nlohmann::json base = c.config.empty() ? nlohmann::json::object() : ExperimentConfig::load(c.config).to_json();
    if (!c.config.empty()) {
        // keep "kernel" unset when the file left it unset
        std::ifstream is(c.config);
        const nlohmann::json raw = nlohmann::json::parse(is);
        if (!raw.contains("kernel"))
            base.erase("kernel");
    }
    for (const auto& [k, v] : c.overlay.items())
        base[k] = v;
    return ExperimentConfig::from_json(base);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"dyadic representation lab"};
    app.require_subcommand(1);

    Common rc, cc, bc;
    CLI::App* rec = app.add_subcommand("reconstruct", "expand <Tf,g> over dyadic shifts");
    add_common(rec, rc);
    rec->add_flag_function("--fixed", [&](std::int64_t) { rc.overlay["fixed"] = true; }, "fixed-grid expansion");
    rec->add_flag_function("--mc", [&](std::int64_t) { rc.overlay["mc"] = true; }, "average over random grids");
    rec->add_flag_function("--truncated", [&](std::int64_t) { rc.overlay["truncated"] = true; }, "complexity-truncated expansion");
    flag<std::size_t>(rec, rc, "--N", "N", "Monte Carlo grid samples");
    flag<int>(rec, rc, "--i-max", "i_max", "complexity cap for --truncated");
    flag<std::string>(rec, rc, "--sm", "sm", "smaller | f-side | both");
    flag<int>(rec, rc, "--pairs", "pairs", "random (f,g) pairs");
    flag<double>(rec, rc, "--tolerance", "tolerance", "relative tolerance of the fixed-grid identity");

    CLI::App* cer = app.add_subcommand("certify", "check the kernel, partial kernel and BMO/WBP conditions");
    add_common(cer, cc);
    flag<std::size_t>(cer, cc, "--samples", "cert_samples", "size-Holder tuples");
    flag<double>(cer, cc, "--threshold", "threshold", "divergence threshold");
    flag<int>(cer, cc, "--grids", "grids", "grids for the BMO/WBP tables");

    CLI::App* ben = app.add_subcommand("bench", "timing sweep over L");
    add_common(ben, bc);
    flag<int>(ben, bc, "--L-min", "L_min", "first depth");
    flag<int>(ben, bc, "--L-max", "L_max", "last depth");
    flag<int>(ben, bc, "--repeats", "repeats", "timing repeats (best kept)");
    flag<std::vector<std::string>>(ben, bc, "--ops", "operations", "haar_forward apply shift_apply mc_reconstruct");
    flag<std::size_t>(ben, bc, "--N", "N", "Monte Carlo samples (capped at 8)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (rec->parsed())
            return cmd_reconstruct(resolve(rc));
        if (cer->parsed())
            return cmd_certify(resolve(cc));
        return cmd_bench(resolve(bc));
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
}
