#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "starkmap/grid.hpp"

namespace starkmap {

enum class Electrode { Center = 0, LeftGround = 1, RightGround = 2, Shield = 3 };
inline constexpr std::array<Electrode, 4> kElectrodes = {Electrode::Center, Electrode::LeftGround,
                                                         Electrode::RightGround, Electrode::Shield};
std::string_view electrode_name(Electrode e) noexcept;

enum class ChargeSpecies { Gap = 0, Surface = 1 };
inline constexpr std::array<ChargeSpecies, 2> kSpecies = {ChargeSpecies::Gap, ChargeSpecies::Surface};
std::string_view species_name(ChargeSpecies s) noexcept;

/// Thin conductor on the chip row y = 0, spanning [x_begin, x_end] um.
struct ChipConductor {
    double x_begin;
    double x_end;
    Electrode electrode;
};

/// Fixed surface-charge sheet in the cell row directly above the chip.
struct ChargeStrip {
    double x_begin;
    double x_end;
    ChargeSpecies species;
};

enum class SideWalls {
    Shield,  // side walls are part of the shield (Dirichlet V_s)
    Open     // zero normal derivative; used for idealized test geometries
};

/// Cross-section of the CPW chip inside the shield box. Chip positions not
/// covered by a conductor are bare insulator: zero normal field there.
struct DeviceGeometry {
    double center_width = 180.0;
    double gap_width = 80.0;
    double shield_width = 6000.0;
    double shield_height = 4000.0;
    SideWalls side_walls = SideWalls::Shield;
    /// Height of the charge sheets above the chip. Sheets between raster
    /// rows are split linearly onto the two bracketing rows.
    double sheet_height = 23.0;
    std::vector<ChipConductor> conductors;
    std::vector<ChargeStrip> strips;

    /// Standard CPW: center conductor, two gaps, ground planes reaching
    /// `ground_extent` um past each gap (to the side walls when empty).
    /// Gap strips cover the gaps, surface strips every conductor.
    static DeviceGeometry cpw(double center_width = 180.0, double gap_width = 80.0,
                              std::optional<double> ground_extent = std::nullopt, double shield_width = 6000.0,
                              double shield_height = 4000.0);

    /// Throws ConfigError on overlaps, empty segments or segments outside the box.
    void validate() const;

    /// Stable text used for hashing and provenance.
    std::string canonical() const;
};

struct PotentialSet {
    std::string label;
    double v_c = 0.0;
    double v_l = 0.0;
    double v_r = 0.0;
    double v_s = 0.0;

    double of(Electrode e) const noexcept;
    double& of(Electrode e) noexcept;
};

struct ChargeDensities {
    double sigma_g = 0.0;  // C/m^2, gap strips
    double sigma_s = 0.0;  // C/m^2, insulating layer atop the superconductor

    double of(ChargeSpecies s) const noexcept { return s == ChargeSpecies::Gap ? sigma_g : sigma_s; }
};

struct SolverOptions {
    double omega = 1.9;  // <= 0 selects the Jacobi-optimal value for the grid
    double tol = 1e-8;  // V, max normalized residual on free nodes
    long max_iter = 200000;
};

struct SolveReport {
    long iterations = 0;
    double residual = 0.0;
    std::vector<double> history;  // max residual, sampled every 100 sweeps
};

/// 2 / (1 + sqrt(1 - rho_J^2)) for the Dirichlet box of this size.
double optimal_omega(const GridSpec& spec);

/// Grid whose outer frame coincides with the shield box of `geom`.
GridSpec solver_grid(const DeviceGeometry& geom, double dx, double dy);

/// Finite-difference Poisson solve (5-point stencil, SOR, lexicographic
/// sweeps) over the shield interior. Electrodes and shield are Dirichlet,
/// bare chip positions are zero-flux, and charge strips act as sheets at
/// `sheet_height` with source sigma/(eps0*dy) per row of weight. Throws ConvergenceError
/// (with residual history) if the iteration cap is reached.
ScalarGrid solve_potential(const DeviceGeometry& geom, const PotentialSet& pots, const ChargeDensities& q,
                           const GridSpec& spec, const SolverOptions& opts = {}, SolveReport* report = nullptr);

/// Max normalized residual (volts) of `phi` against the discrete problem;
/// the quantity the solver drives below tol.
double poisson_residual(const DeviceGeometry& geom, const PotentialSet& pots, const ChargeDensities& q,
                        const ScalarGrid& phi);

/// E = -grad(phi) in V/cm. Central differences inside, second-order
/// one-sided differences on the frame.
VectorGrid field_from_potential(const ScalarGrid& phi);

/// Unit-response fields: 1 V on one electrode (others 0, no charge) and
/// 1 C/m^2 on one strip species (all electrodes 0).
struct BasisFields {
    GridSpec spec;
    std::array<VectorGrid, 4> electrode;
    std::array<VectorGrid, 2> charge;
    std::uint64_t geometry_hash = 0;

    const VectorGrid& of(Electrode e) const { return electrode[static_cast<int>(e)]; }
    const VectorGrid& of(ChargeSpecies s) const { return charge[static_cast<int>(s)]; }
};

/// The same unit responses restricted to a window of the solver grid.
BasisFields crop(const BasisFields& b, const Window& w);

/// Hash of everything that determines a basis: geometry, grid and solver.
std::uint64_t geometry_hash(const DeviceGeometry& geom, const GridSpec& spec, const SolverOptions& opts);

/// Six independent solves; up to `threads` run concurrently.
BasisFields compute_basis(const DeviceGeometry& geom, const GridSpec& spec, const SolverOptions& opts = {},
                          unsigned threads = 1);

/// sum_e V_e B_e + sigma_g B_g + sigma_s B_s, elementwise.
VectorGrid superpose(const BasisFields& basis, const PotentialSet& pots, const ChargeDensities& q = {});

/// Field error scale implied by the solver tolerance: the amplitude of the
/// slowest error mode that leaves a residual of `tol`, differenced over one
/// cell. Used as the comparison unit for linearity checks.
double tolerance_field(const GridSpec& spec, const SolverOptions& opts);

// Basis cache: one grid file per entry plus `manifest.txt` with the hash.
void save_basis(const BasisFields& basis, const std::filesystem::path& dir, const HeaderLines& extra = {});
/// Returns nullopt when the directory holds no basis or one with another hash.
std::optional<BasisFields> load_basis(const std::filesystem::path& dir, std::uint64_t expected_hash);

/// FNV-1a, used for geometry and config hashes.
std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept;
std::string hex64(std::uint64_t v);

}  // namespace starkmap
