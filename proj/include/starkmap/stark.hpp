#pragma once

#include <string>
#include <vector>

namespace starkmap {

// CODATA 2018 exact / recommended values.
namespace codata {
inline constexpr double e = 1.602176634e-19;        // C
inline constexpr double a0 = 5.29177210903e-11;     // m
inline constexpr double hbar = 1.054571817e-34;     // J s
inline constexpr double epsilon0 = 8.8541878128e-12;  // F/m
}  // namespace codata

/// Constants of the 34s -> 34p transition.
struct StarkConstants {
    double delta_alpha = 1078.03;    // MHz / (V/cm)^2
    double nu0 = 27965.773;          // MHz
    double dipole_ea0 = 917.0;       // transition dipole in units of e*a0
    double tau_34p = 2000.0;         // ns, upper bound on the 34p lifetime

    /// Transition dipole in C*m.
    double dipole() const noexcept { return dipole_ea0 * codata::e * codata::a0; }

    /// Angular Rabi rate per field, (rad/ns) per (mV/cm).
    double rabi_per_mv_cm() const noexcept { return dipole() * 0.1 / codata::hbar * 1e-9; }
};

inline constexpr StarkConstants kStark{};

/// Half of delta_alpha times |F|^2, in MHz. `f` in V/cm.
double stark_shift(double f) noexcept;
double stark_shift(double fx, double fy, double fz = 0.0) noexcept;

/// Inverse of stark_shift; DomainError for a negative or non-finite shift.
double field_magnitude_from_shift(double shift_mhz);

/// FWHM (MHz) of the sinc^2 power spectrum of a square pulse of `pulse_ns`.
double fourier_fwhm(double pulse_ns);

/// Quadrature sum of `fwhm0` and the inhomogeneous term delta_alpha*F*dF.
double broadened_fwhm(double f, double df, double fwhm0);

/// Omega_R = d F / hbar in rad/ns for a microwave amplitude in mV/cm.
double rabi_rate(double f_mu_mv_cm);

/// sqrt((2 pi Delta)^2 + Omega_R^2) in rad/ns; Delta in MHz.
double effective_rate(double detuning_mhz, double f_mu_mv_cm);

/// Microwave amplitude (mV/cm) that produces Rabi rate `omega` (rad/ns).
double field_from_rabi_rate(double omega);

/// `# const ...` lines echoed into output headers.
std::vector<std::string> constants_header();

}  // namespace starkmap
