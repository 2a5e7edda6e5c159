#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "starkmap/electrostatics.hpp"
#include "starkmap/grid.hpp"

namespace starkmap {

/// One applied-field configuration and its measured in-plane field magnitude.
struct Measurement {
    std::string label;
    PotentialSet pots;
    VectorGrid applied;    // electrode contribution only, V/cm
    ScalarGrid magnitude;  // in-plane |F_tot|, V/cm
};

/// Applied field and measured magnitude at a single pixel.
struct PixelSample {
    double fx;
    double fy;
    double m;
};

struct PixelSolution {
    double fx = 0.0;
    double fy = 0.0;
    double fz = 0.0;            // 3D variant only
    double residual = 0.0;      // RMS over samples of ||F_i + S| - m_i|
    double condition = 0.0;     // of the pairwise-difference system
    bool ok = false;
    bool at_boundary = false;   // random search ended on the bounds
};

/// RMS over samples of ||F_i + (sx, sy)| - m_i|.
double pixel_residual(std::span<const PixelSample> s, double sx, double sy);

/// Pairwise subtraction against sample 0 eliminates |S|^2 and leaves the
/// linear system 2 (F_0 - F_i) . S = m_0^2 - m_i^2 - |F_0|^2 + |F_i|^2,
/// solved exactly for 3 samples and in least squares for more. Not ok when
/// fewer than 3 samples or condition number >= max_condition.
PixelSolution reconstruct_pixel_closed(std::span<const PixelSample> s, double max_condition = 1e6);

/// 3D counterpart: applied fields (fx, fy, fz), total magnitudes m; needs 4
/// samples whose differences span three directions.
struct PixelSample3 {
    double fx;
    double fy;
    double fz;
    double m;
};
PixelSolution reconstruct_point_3d(std::span<const PixelSample3> s, double max_condition = 1e6);

struct SearchBox {
    double x_lo, x_hi, y_lo, y_hi;
};

/// Intersection of the boxes around -F_i with half-width m_i, padded by
/// `margin` (V/cm). Falls back to the union when noise empties it.
SearchBox auto_bounds(std::span<const PixelSample> s, double margin);

struct SearchOptions {
    int budget = 2000;        // residual evaluations per pixel
    int window = 10;          // evaluations between radius updates
    double step_factor = 1.5; // radius grows by this above a 1/5 success rate, shrinks below
    double explore = 0.2;     // fraction of the budget sampled over the whole box
    int starts = 4;           // local shrink-to-best runs sharing the rest
    double margin = 0.01;     // V/cm, padding for automatic bounds
};

/// Seeded random search minimizing sum_i (|F_i + S| - m_i)^2 inside `box`:
/// uniform sampling over the box, then shrink-to-best runs from the best
/// few well-separated samples. The evaluation count is fixed by the budget.
PixelSolution reconstruct_pixel_search(std::span<const PixelSample> s, const SearchBox& box,
                                       const SearchOptions& opt, std::uint64_t seed);

enum class ReconMethod { ClosedForm, RandomSearch };
std::string_view method_name(ReconMethod m) noexcept;
ReconMethod parse_method(std::string_view s);

struct StrayFieldResult {
    VectorGrid stray;
    double fz = 0.0;
    ScalarGrid residual;    // V/cm
    ScalarGrid condition;   // closed-form condition number (0 for search)
    ReconMethod method = ReconMethod::ClosedForm;
    std::uint64_t seed = 0;
    std::size_t ill_conditioned = 0;
    std::size_t at_boundary = 0;
};

struct ReconOptions {
    ReconMethod method = ReconMethod::ClosedForm;
    double max_condition = 1e6;
    SearchOptions search;
    std::optional<SearchBox> bounds;  // automatic per pixel when empty
    std::uint64_t seed = 0;
};

/// Per-pixel reconstruction over a shared grid. A pixel uses the
/// measurements unmasked there and is masked with fewer than 3 of them, when
/// ill-conditioned, or when the search ends on its bounds. `fz` is recorded.
StrayFieldResult reconstruct_stray(const std::vector<Measurement>& meas, double fz, const ReconOptions& opt = {},
                                   unsigned threads = 1);

/// Homogeneous out-of-plane component from the smallest unmasked shift of
/// a (compensated) shift map, in V/cm.
double estimate_fz(const ScalarGrid& shift_map);

/// Optional 3x3 neighbor average of unmasked stray vectors. Not part of the
/// per-pixel inversion; it smooths across pixels.
VectorGrid neighbor_average(const VectorGrid& g);

struct ChargeFit {
    ChargeDensities q;
    std::array<double, 2> stderr_{};  // C/m^2
    int iterations = 0;
    bool converged = false;
    double rms_residual = 0.0;  // V/cm
    std::size_t pixels = 0;
};

/// Least-squares fit of (sigma_g, sigma_s) to a magnitude map:
/// minimize sum (sqrt(|A + sigma_g B_g + sigma_s B_s|^2 + fz^2) - m)^2 with
/// A the applied field of `pots`. Starts from zero charge.
ChargeFit fit_charge_densities(const ScalarGrid& magnitude, const PotentialSet& pots, const BasisFields& basis,
                               double fz = 0.0);

struct Deviation {
    ScalarGrid deviation;  // predicted - measured, V/cm
    double max_abs = 0.0;
    double rms = 0.0;
    std::size_t pixels = 0;
};

/// Compares |superpose(basis, pots) + stray| with a measured in-plane map.
Deviation validate_superposition(const StrayFieldResult& stray, const PotentialSet& pots, const BasisFields& basis,
                                 const ScalarGrid& measured);

struct VoltageBounds {
    std::array<double, 4> lo{-10.0, -10.0, -10.0, -10.0};
    std::array<double, 4> hi{10.0, 10.0, 10.0, 10.0};
};

struct Compensation {
    PotentialSet pots;
    VectorGrid residual;        // predicted in-plane residual field
    double max_residual = 0.0;  // over the region, V/cm
    double rms_residual = 0.0;
    double max_uncompensated = 0.0;
    double reduction = 0.0;     // max_uncompensated / max_residual
    std::array<int, 4> active{};  // -1 at lower bound, +1 at upper, 0 free
};

/// Potentials minimizing sum over the region of |sum_e V_e B_e + stray|^2.
/// The normal matrix is rank-deficient (equal potentials on every electrode
/// give no field), so the unconstrained problem is solved for the
/// minimum-norm solution. Bounds are enforced by trying every active set.
Compensation compensate(const VectorGrid& stray, const BasisFields& basis, const Mask& region,
                        const VoltageBounds& bounds = {}, double rcond = 1e-8);

}  // namespace starkmap
