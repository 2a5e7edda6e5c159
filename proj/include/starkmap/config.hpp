#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "starkmap/electrostatics.hpp"
#include "starkmap/reconstruction.hpp"
#include "starkmap/spectroscopy.hpp"

namespace starkmap {

/// Electrode potentials of one campaign set. With `relative` the values are
/// offsets added to the compensation set of the generating charges.
struct PotentialEntry {
    PotentialSet pots;
    bool relative = false;
};

struct BeamConfig {
    Polygon polygon{{-1250, 1250, 1250, -1250}, {1500, 1500, 3500, 3500}};  // imaged beam, um
    double region_y_min = 2000;  // lower edge of the compensation target, um
};

struct CampaignConfig {
    std::vector<std::string> measurements;  // sets used for reconstruction
    std::string held_out;                   // validation set, may be empty
    std::string compensated;                // set whose shift minimum gives fz, may be empty
    double fz = 0.043;                      // V/cm, field normal to the cross-section
};

struct SpectroscopyConfig {
    double detuning_min = -5.0;  // MHz
    double detuning_max = 45.0;
    double detuning_step = 0.25;
    double pulse_ns = 200.0;
    double depth = 0.8;
    LineShape shape = LineShape::Gaussian;
    double noise_sigma = 0.0;
    std::optional<std::uint64_t> seed;
    int binning = 1;
    BinMode bin_mode = BinMode::Mean;

    std::vector<double> detunings() const;
};

struct ReconstructionConfig {
    ReconMethod method = ReconMethod::ClosedForm;
    std::optional<SearchBox> bounds;  // empty: per-pixel automatic box
    int budget = 2000;
    std::optional<std::uint64_t> seed;
    double max_condition = 1e6;
    std::optional<double> fz;  // empty: estimated from the compensated set
};

struct CompensationConfig {
    VoltageBounds bounds{{-100.0, -100.0, -100.0, -100.0}, {100.0, 100.0, 100.0, 100.0}};
    double rcond = 1e-8;
};

struct MicrowaveConfig {
    std::vector<double> theta;   // V, ascending
    double theta_max = 560e-6;   // V, amplitude at which F^mu is reported
    double pulse_ns = 400.0;
    double tau_ns = 2000.0;
    double f_mw = 27966.77;      // MHz
    double amplitude = 9.0;      // mV/cm, peak of the synthetic mode over the window
    double mode_a = 1.0;         // coplanar weight
    double mode_b = -0.1;        // slotline weight
    double noise_sigma = 0.0;
    std::optional<std::uint64_t> seed;
};

struct PipelineConfig {
    DeviceGeometry geometry = DeviceGeometry::cpw();
    double dx = 23.0;
    double dy = 23.0;
    SolverOptions solver;
    ChargeDensities charges{-23.6e-6, -2.10e-6};
    BeamConfig beam;
    std::map<std::string, PotentialEntry> potentials;
    CampaignConfig campaign;
    SpectroscopyConfig spectroscopy;
    ReconstructionConfig reconstruction;
    CompensationConfig compensation;
    MicrowaveConfig microwave;
    std::filesystem::path output_dir = "out";
    bool heatmaps = true;

    /// Throws ConfigError on undefined labels, missing seeds and bad ranges.
    void validate() const;

    /// Every value in a fixed order and exact text; the hash input.
    std::string canonical() const;
    std::uint64_t hash() const { return fnv1a(canonical()); }

    /// Replaces every seed (spectroscopy, reconstruction, microwave).
    void override_seed(std::uint64_t seed);
};

/// Sectioned key = value text. `#` and `;` start comments, lists are
/// whitespace or comma separated. Unknown sections and keys are errors.
PipelineConfig parse_config(const std::string& text);

/// Reads, applies the seed override, then validates. IoError when the file
/// cannot be read, ConfigError for content problems.
PipelineConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed = std::nullopt);

}  // namespace starkmap
