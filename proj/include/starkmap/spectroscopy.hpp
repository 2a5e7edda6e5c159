#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "starkmap/grid.hpp"

namespace starkmap {

enum class LineShape { Gaussian, Sinc2 };
std::string_view line_shape_name(LineShape s) noexcept;
LineShape parse_line_shape(std::string_view s);

enum class BinMode { Mean, Sum };

/// Acquisition metadata carried with a stack.
struct Acquisition {
    double pulse_ns = 200.0;
    std::string amplitude_tag = "default";
    int binning = 1;
    double noise_sigma = 0.0;
    std::uint64_t noise_seed = 0;
};

/// Relative 34s population per pixel and detuning (MHz from nu0).
struct SpectrumStack {
    GridSpec spec;
    std::vector<double> detunings;
    std::vector<double> intensities;  // pixel-major: [pixel * detunings.size() + k]
    Mask mask;
    Acquisition acq;

    SpectrumStack() = default;
    SpectrumStack(const GridSpec& s, std::vector<double> det);

    std::size_t depth() const noexcept { return detunings.size(); }
    std::span<double> pixel(std::size_t i) { return {intensities.data() + i * depth(), depth()}; }
    std::span<const double> pixel(std::size_t i) const { return {intensities.data() + i * depth(), depth()}; }

    /// ConfigError when detunings are not strictly increasing or sizes disagree.
    void validate() const;
};

struct SynthOptions {
    double depth = 0.8;
    double baseline = 1.0;
    LineShape shape = LineShape::Gaussian;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

/// Per-pixel dip centered at stark_shift(|(fx, fy, fz)|) with FWHM from
/// broadened_fwhm(|F|, dF, fourier_fwhm(pulse_ns)); dF is half the largest
/// field-magnitude difference to the unmasked 4-neighbors. Noise is additive
/// Gaussian drawn from a per-pixel stream, so results do not depend on
/// `threads`.
SpectrumStack synth_stack(const VectorGrid& f_tot, double fz, const std::vector<double>& detunings, double pulse_ns,
                          const SynthOptions& opt = {}, unsigned threads = 1);

enum class FitStatus { Ok, NoConvergence, NoDip, BelowNoise, OutOfRange, TooFewPoints, MaskedInput };
std::string_view fit_status_name(FitStatus s) noexcept;

struct LineFit {
    double center = 0.0;    // MHz
    double fwhm = 0.0;      // MHz
    double depth = 0.0;
    double baseline = 0.0;
    std::array<double, 4> stderr_{};  // center, fwhm, depth, baseline
    bool converged = false;
    double residual_norm = 0.0;
    int iterations = 0;
    FitStatus status = FitStatus::MaskedInput;

    bool ok() const noexcept { return status == FitStatus::Ok; }
};

struct FitOptions {
    double fwhm0 = 4.4295;  // MHz, initial width (the Fourier limit of the pulse)
    int max_iter = 200;
};

/// Gaussian-dip fit I = baseline - depth * exp(-4 ln2 (d - center)^2 / fwhm^2)
/// by Levenberg-Marquardt. `init` overrides the automatic start (baseline =
/// median, center = argmin, depth = baseline - min, fwhm = fwhm0).
LineFit fit_pixel(std::span<const double> intensities, std::span<const double> detunings,
                  const std::optional<LineFit>& init = std::nullopt, const FitOptions& opt = {});

struct FitMaps {
    ScalarGrid shift;  // MHz
    ScalarGrid width;  // MHz
    ScalarGrid depth;
    std::vector<FitStatus> status;
    std::size_t failed = 0;
};

/// k x k binning of the stack (mean or sum of unmasked pixels).
SpectrumStack bin_stack(const SpectrumStack& s, int k, BinMode mode = BinMode::Mean);

/// Fits every unmasked (binned) pixel; failed fits are masked.
FitMaps fit_stack(const SpectrumStack& stack, int k = 1, BinMode mode = BinMode::Mean, const FitOptions& opt = {},
                  unsigned threads = 1);

struct FieldMap {
    ScalarGrid field;  // in-plane |F|, V/cm
    Mask clamped;      // 1 where the shift was below 0.5 delta_alpha fz^2
    std::size_t clamped_count = 0;
    std::size_t rejected_count = 0;  // shifts below -0.5 MHz, masked
};

/// In-plane magnitude sqrt(max(0, 2 shift / delta_alpha - fz^2)).
FieldMap field_map_from_shifts(const ScalarGrid& shift_map, double fz);

/// Stack file: `# ...` header then `ix,iy,detuning_MHz,intensity` rows for
/// unmasked pixels. Pixels absent from the file are masked on read.
void write_stack(const SpectrumStack& s, const std::filesystem::path& path, const HeaderLines& extra = {});
SpectrumStack read_stack(const std::filesystem::path& path);

}  // namespace starkmap
