// starkmap: command-line front end of the stray-field mapping pipeline.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "starkmap/acceptance.hpp"
#include "starkmap/error.hpp"
#include "starkmap/pipeline.hpp"

namespace fs = std::filesystem;
using namespace starkmap;

namespace {

enum Exit { kOk = 0, kFailedChecks = 1, kConfig = 2, kConvergence = 3, kIo = 4 };

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
    std::string input;
};

void add_common(CLI::App* cmd, Common& c, const char* input_help) {
    cmd->add_option("--config", c.config, "pipeline config file")->required();
    cmd->add_option("--out", c.out, "output directory (default: [output] dir of the config)");
    cmd->add_option("--seed", c.seed, "seed overriding every seed in the config");
    cmd->add_option("--threads", c.threads, "worker threads; results do not depend on it")
        ->check(CLI::Range(1u, 1024u));
    if (input_help) cmd->add_option("--in", c.input, input_help);
}

RunContext context(const Common& c) {
    RunContext ctx;
    ctx.cfg = load_config(c.config, c.seed);
    ctx.out = c.out.empty() ? ctx.cfg.output_dir : fs::path(c.out);
    ctx.threads = c.threads;
    return ctx;
}

std::optional<fs::path> input(const Common& c) {
    if (c.input.empty()) return std::nullopt;
    return fs::path(c.input);
}

int report(const char* kind, const std::exception& e, int code) {
    std::cerr << "error: " << kind << ": " << e.what() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stray-field mapping from Rydberg Stark spectroscopy"};
    app.require_subcommand(1);
    Common c;

    auto* solve = app.add_subcommand("solve-basis", "compute or load the unit-response basis");
    add_common(solve, c, nullptr);
    auto* synth = app.add_subcommand("synth-campaign", "synthetic spectrum stacks and ground truth per potential set");
    add_common(synth, c, nullptr);
    auto* fit = app.add_subcommand("fit-spectra", "per-pixel line fits, shift/width/field maps");
    add_common(fit, c, "one stack file (default: every stack of the campaign)");
    auto* recon = app.add_subcommand("reconstruct-stray", "stray-field vectors from the measurement sets");
    add_common(recon, c, "campaign manifest (default: <out>/campaign/manifest.txt)");
    auto* charges = app.add_subcommand("fit-charges", "surface charge densities from one field map");
    add_common(charges, c, "field map (default: first measurement set)");
    auto* comp = app.add_subcommand("compensate", "compensation potentials for the stray map");
    add_common(comp, c, "stray map (default: <out>/stray/stray.csv)");
    auto* mw = app.add_subcommand("mw-map", "microwave amplitude map from the Rabi campaign");
    add_common(mw, c, "Rabi stack (default: <out>/campaign/rabi.csv)");
    auto* validate = app.add_subcommand("validate", "full acceptance run with a pass/fail report");
    add_common(validate, c, nullptr);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        const RunContext ctx = context(c);
        if (solve->parsed()) cmd_solve_basis(ctx);
        else if (synth->parsed()) cmd_synth_campaign(ctx);
        else if (fit->parsed()) cmd_fit_spectra(ctx, input(c));
        else if (recon->parsed()) cmd_reconstruct_stray(ctx, input(c));
        else if (charges->parsed()) cmd_fit_charges(ctx, input(c));
        else if (comp->parsed()) cmd_compensate(ctx, input(c));
        else if (mw->parsed()) cmd_mw_map(ctx, input(c));
        else if (validate->parsed()) {
            const auto results = run_acceptance(ctx, &std::cout);
            write_acceptance_report(results, ctx);
            return all_passed(results) ? kOk : kFailedChecks;
        }
    } catch (const ConvergenceError& e) {
        return report("convergence", e, kConvergence);
    } catch (const ConfigError& e) {
        return report("config", e, kConfig);
    } catch (const DomainError& e) {
        return report("config", e, kConfig);
    } catch (const IoError& e) {
        return report("io", e, kIo);
    } catch (const std::filesystem::filesystem_error& e) {
        return report("io", e, kIo);
    }
    return kOk;
}
