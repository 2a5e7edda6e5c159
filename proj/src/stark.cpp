#include "starkmap/stark.hpp"

#include <cmath>
#include <numbers>

#include "starkmap/error.hpp"
#include "starkmap/grid.hpp"

namespace starkmap {

namespace {

// FWHM of sinc^2(pi f T) is 0.8859 / T; in MHz for T in ns.
constexpr double kSincFwhmTimesT = 885.9;

}  // namespace

double stark_shift(double f) noexcept { return 0.5 * kStark.delta_alpha * f * f; }

double stark_shift(double fx, double fy, double fz) noexcept {
    return 0.5 * kStark.delta_alpha * (fx * fx + fy * fy + fz * fz);
}

double field_magnitude_from_shift(double shift_mhz) {
    if (!(shift_mhz >= 0.0) || !std::isfinite(shift_mhz))
        throw DomainError("Stark shift must be finite and >= 0, got " + format_double(shift_mhz) + " MHz");
    return std::sqrt(2.0 * shift_mhz / kStark.delta_alpha);
}

double fourier_fwhm(double pulse_ns) {
    if (!(pulse_ns > 0.0) || !std::isfinite(pulse_ns)) throw DomainError("pulse length must be > 0 ns");
    return kSincFwhmTimesT / pulse_ns;
}

double broadened_fwhm(double f, double df, double fwhm0) {
    if (!(f >= 0.0) || !(df >= 0.0)) throw DomainError("field and field spread must be >= 0");
    return std::hypot(fwhm0, kStark.delta_alpha * f * df);
}

double rabi_rate(double f_mu_mv_cm) {
    if (!(f_mu_mv_cm >= 0.0)) throw DomainError("microwave amplitude must be >= 0");
    return kStark.rabi_per_mv_cm() * f_mu_mv_cm;
}

double effective_rate(double detuning_mhz, double f_mu_mv_cm) {
    const double delta = 2.0 * std::numbers::pi * detuning_mhz * 1e-3;  // rad/ns
    return std::hypot(delta, rabi_rate(f_mu_mv_cm));
}

double field_from_rabi_rate(double omega) { return omega / kStark.rabi_per_mv_cm(); }

std::vector<std::string> constants_header() {
    return {"const delta_alpha_MHz_per_Vcm2 " + format_double(kStark.delta_alpha),
            "const nu0_MHz " + format_double(kStark.nu0),
            "const dipole_ea0 " + format_double(kStark.dipole_ea0),
            "const rabi_rad_per_ns_per_mVcm " + format_double(kStark.rabi_per_mv_cm()),
            "const tau_34p_ns " + format_double(kStark.tau_34p)};
}

}  // namespace starkmap
