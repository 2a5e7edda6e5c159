#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "starkmap/config.hpp"
#include "starkmap/electrostatics.hpp"
#include "starkmap/grid.hpp"

namespace starkmap {

/// One invocation: validated config, output root and worker count. Results
/// never depend on `threads`.
struct RunContext {
    PipelineConfig cfg;
    std::filesystem::path out;
    unsigned threads = 1;
};

/// Header lines carried by every output: command, config hash, constants.
HeaderLines provenance(const PipelineConfig& cfg, std::string_view command);

// Output layout below the run root.
namespace layout {
inline std::filesystem::path basis(const std::filesystem::path& out) { return out / "basis"; }
inline std::filesystem::path campaign(const std::filesystem::path& out) { return out / "campaign"; }
inline std::filesystem::path manifest(const std::filesystem::path& out) { return out / "campaign" / "manifest.txt"; }
inline std::filesystem::path fit(const std::filesystem::path& out) { return out / "fit"; }
inline std::filesystem::path stray(const std::filesystem::path& out) { return out / "stray"; }
inline std::filesystem::path charges(const std::filesystem::path& out) { return out / "charges"; }
inline std::filesystem::path compensation(const std::filesystem::path& out) { return out / "compensate"; }
inline std::filesystem::path microwave(const std::filesystem::path& out) { return out / "mw"; }
inline std::filesystem::path validation(const std::filesystem::path& out) { return out / "validate"; }
}  // namespace layout

/// Cells of the solver grid covered by the bounding box of the beam polygon.
Window analysis_window(const PipelineConfig& cfg);

/// Unit responses on the full solver grid, loaded from `<out>/basis` when
/// the cached hash matches and computed (and cached) otherwise.
BasisFields load_or_solve_basis(const RunContext& ctx);

/// Unit responses on the analysis window, block-averaged by `binning`.
BasisFields analysis_basis(const BasisFields& full, const PipelineConfig& cfg, int binning = 1);

/// Beam cross-section mask; with `region` only the compensation target.
Mask beam_mask(const PipelineConfig& cfg, const GridSpec& spec, bool region = false);

enum class SetRole { Measurement, HeldOut, Compensated, Extra };
std::string_view role_name(SetRole r) noexcept;

struct ManifestEntry {
    std::string label;
    SetRole role = SetRole::Extra;
    PotentialSet pots;
    std::string stack;  // file name relative to the manifest
    std::string truth;  // ground-truth total field, relative to the manifest
};

struct CampaignManifest {
    std::vector<ManifestEntry> entries;
    std::string rabi;         // Rabi stack file, relative
    std::string truth_stray;  // charge field, relative
    std::string truth_mw;     // microwave amplitude, relative

    const ManifestEntry& find(const std::string& label) const;
};

void write_manifest(const CampaignManifest& m, const std::filesystem::path& path, const HeaderLines& header);
CampaignManifest read_manifest(const std::filesystem::path& path);

// Commands. Each reads its inputs from the standard layout under ctx.out
// unless an explicit input path is given, and writes below ctx.out.
void cmd_solve_basis(const RunContext& ctx);
void cmd_synth_campaign(const RunContext& ctx);
void cmd_fit_spectra(const RunContext& ctx, const std::optional<std::filesystem::path>& stack = std::nullopt);
void cmd_reconstruct_stray(const RunContext& ctx, const std::optional<std::filesystem::path>& manifest = std::nullopt);
void cmd_fit_charges(const RunContext& ctx, const std::optional<std::filesystem::path>& field_map = std::nullopt);
void cmd_compensate(const RunContext& ctx, const std::optional<std::filesystem::path>& stray = std::nullopt);
void cmd_mw_map(const RunContext& ctx, const std::optional<std::filesystem::path>& rabi = std::nullopt);

/// solve-basis through mw-map in order.
void run_all(const RunContext& ctx);

/// Field normal to the cross-section used to turn shifts into in-plane
/// magnitudes: the configured value, or the estimate from the compensated
/// set's shift map (fitted first when needed).
double resolve_fz(const RunContext& ctx);

}  // namespace starkmap
