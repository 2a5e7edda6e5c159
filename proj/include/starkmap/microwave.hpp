#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "starkmap/electrostatics.hpp"
#include "starkmap/grid.hpp"

namespace starkmap {

/// 34s population after a square pulse of length t_ns:
/// 1 - (Omega_R/Omega_eff)^2 sin^2(Omega_eff t/2) exp(-t/(2 tau)),
/// with Omega_R = s * theta and Omega_eff^2 = (2 pi detuning)^2 + Omega_R^2.
/// Pass tau_ns = infinity for no decay.
double transfer_probability(double theta_v, double s, double detuning_mhz, double t_ns, double tau_ns);

/// Drive curve of one pixel: populations at ascending amplitudes.
struct RabiCurve {
    std::vector<double> theta;        // V, nonnegative, strictly ascending
    std::vector<double> population;   // 34s population
    double pulse_ns = 400.0;
    double detuning_mhz = 0.0;
    double tau_ns = 2000.0;
};

enum class RabiStatus { Ok, NoExtremum, NoConvergence, MaskedInput };
std::string_view rabi_status_name(RabiStatus s) noexcept;

struct RabiFit {
    double s = 0.0;         // (rad/ns)/V
    double stderr_ = 0.0;
    int iterations = 0;
    double rms = 0.0;
    RabiStatus status = RabiStatus::MaskedInput;
    bool ok() const noexcept { return status == RabiStatus::Ok; }
};

/// Index of the first population minimum: the 3-point smoothed curve dips
/// below 0.9 and recovers by at least 0.1 afterwards. -1 when absent.
int first_minimum(std::span<const double> theta, std::span<const double> population);

/// One-parameter damped least squares for s. The start is the best of a
/// log-spaced scan around pi/(t theta_min), theta_min the first minimum.
/// Masked (NoExtremum) when the curve has no minimum.
RabiFit fit_s(const RabiCurve& c);

/// Rabi curves on a grid sharing one amplitude list.
struct RabiStack {
    GridSpec spec;
    std::vector<double> theta;
    std::vector<double> population;  // pixel-major
    Mask mask;
    double pulse_ns = 400.0;
    double tau_ns = 2000.0;

    RabiStack() = default;
    RabiStack(const GridSpec& s, std::vector<double> th);
    std::size_t depth() const noexcept { return theta.size(); }
    std::span<double> pixel(std::size_t i) { return {population.data() + i * depth(), depth()}; }
    std::span<const double> pixel(std::size_t i) const { return {population.data() + i * depth(), depth()}; }
    void validate() const;
};

void write_rabi_stack(const RabiStack& s, const std::filesystem::path& path, const HeaderLines& extra = {});
RabiStack read_rabi_stack(const std::filesystem::path& path);

/// Microwave detuning f_mw - (nu0 + shift) in MHz from a shift map.
ScalarGrid detuning_from_shift(const ScalarGrid& shift_map, double f_mw_mhz);

/// Synthetic campaign: F^mu at theta_max per pixel (mV/cm) sets
/// s = rabi_rate(F^mu)/theta_max. Additive Gaussian noise per pixel stream.
RabiStack synth_rabi_stack(const ScalarGrid& f_mu_mv_cm, const ScalarGrid& detuning_mhz,
                           const std::vector<double>& theta, double theta_max, double pulse_ns, double tau_ns,
                           double noise_sigma, std::uint64_t seed, unsigned threads = 1);

struct MwFieldMap {
    ScalarGrid field;   // mV/cm at theta_max
    ScalarGrid s;       // (rad/ns)/V
    ScalarGrid s_stderr;
    std::size_t failed = 0;
};

/// Per-pixel fit_s, then F^mu = field_from_rabi_rate(s * theta_max).
/// Pixels with masked detuning or failed fits are masked.
MwFieldMap map_microwave(const RabiStack& stack, const ScalarGrid& detuning_mhz, double theta_max,
                         unsigned threads = 1);

/// a * E_cpw + b * E_slot, E_cpw the center-conductor unit response and
/// E_slot = (E_left - E_right)/2, scaled so the largest magnitude is 1.
VectorGrid mode_field(const BasisFields& basis, double a, double b);

/// x (um) of the magnitude maximum along the row nearest y among cells with
/// x_min <= x <= x_max, refined by a parabola through the three cells around
/// the discrete peak.
double peak_x(const ScalarGrid& magnitude, double y_um, double x_min = -HUGE_VAL, double x_max = HUGE_VAL);

struct ModeFit {
    double a = 0.0;     // normalized so a^2 + b^2 = 1, a >= 0
    double b = 0.0;
    double scale = 0.0; // target ~ scale * |a E_cpw + b E_slot|
    double rms = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Least-squares fit of |alpha E_cpw + beta E_slot| to a magnitude map.
ModeFit fit_mode_weights(const ScalarGrid& target, const BasisFields& basis);

/// Odd weight b (with a = 1) placing the magnitude peak on row y_um, searched
/// within |x| <= half_window_um, at x = target_x_um. Bisection after
/// bracketing; DomainError when no |b| <= b_max does.
double odd_weight_for_peak(const BasisFields& basis, double y_um, double target_x_um, double half_window_um,
                           double b_max = 100.0);

}  // namespace starkmap
