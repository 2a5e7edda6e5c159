#include "starkmap/spectroscopy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "starkmap/error.hpp"
#include "starkmap/lsq.hpp"
#include "starkmap/parallel.hpp"
#include "starkmap/rng.hpp"
#include "starkmap/stark.hpp"

namespace starkmap {

namespace {

constexpr double kFourLn2 = 4.0 * std::numbers::ln2;
// sinc^2(u) = 1/2 at u = 1.39156; maps FWHM onto the sinc argument.
constexpr double kSincHalfWidth = 1.3915573463859810;

double dip(LineShape shape, double d, double center, double fwhm) {
    const double u = d - center;
    if (shape == LineShape::Gaussian) return std::exp(-kFourLn2 * u * u / (fwhm * fwhm));
    const double z = 2.0 * kSincHalfWidth * u / fwhm;
    if (std::abs(z) < 1e-8) return 1.0;
    const double s = std::sin(z) / z;
    return s * s;
}

double median(std::vector<double> v) {
    const std::size_t n = v.size();
    std::nth_element(v.begin(), v.begin() + n / 2, v.end());
    const double hi = v[n / 2];
    if (n % 2) return hi;
    return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + n / 2));
}

}  // namespace

std::string_view line_shape_name(LineShape s) noexcept { return s == LineShape::Gaussian ? "gaussian" : "sinc2"; }

LineShape parse_line_shape(std::string_view s) {
    if (s == "gaussian") return LineShape::Gaussian;
    if (s == "sinc2") return LineShape::Sinc2;
    throw ConfigError("unknown line shape '" + std::string(s) + "' (gaussian, sinc2)");
}

std::string_view fit_status_name(FitStatus s) noexcept {
    switch (s) {
        case FitStatus::Ok: return "ok";
        case FitStatus::NoConvergence: return "no_convergence";
        case FitStatus::NoDip: return "no_dip";
        case FitStatus::BelowNoise: return "below_noise";
        case FitStatus::OutOfRange: return "out_of_range";
        case FitStatus::TooFewPoints: return "too_few_points";
        case FitStatus::MaskedInput: return "masked_input";
    }
    return "?";
}

SpectrumStack::SpectrumStack(const GridSpec& s, std::vector<double> det)
    : spec(s), detunings(std::move(det)), intensities(s.size() * detunings.size(), 0.0), mask(s.size(), 0) {}

void SpectrumStack::validate() const {
    spec.validate();
    if (detunings.empty()) throw ConfigError("spectrum stack has no detunings");
    for (std::size_t k = 1; k < detunings.size(); ++k)
        if (!(detunings[k] > detunings[k - 1])) throw ConfigError("detunings must be strictly increasing");
    if (intensities.size() != spec.size() * detunings.size() || mask.size() != spec.size())
        throw ConfigError("spectrum stack dimensions disagree with its grid");
}

SpectrumStack synth_stack(const VectorGrid& f_tot, double fz, const std::vector<double>& detunings, double pulse_ns,
                          const SynthOptions& opt, unsigned threads) {
    if (detunings.empty()) throw ConfigError("synth_stack needs at least one detuning");
    if (!(opt.noise_sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
    SpectrumStack s(f_tot.spec, detunings);
    s.mask = f_tot.mask;
    s.acq.pulse_ns = pulse_ns;
    s.acq.noise_sigma = opt.noise_sigma;
    s.acq.noise_seed = opt.seed;
    s.validate();
    const GridSpec& g = f_tot.spec;
    const double fwhm0 = fourier_fwhm(pulse_ns);

    std::vector<double> mag(g.size());
    for (std::size_t i = 0; i < mag.size(); ++i)
        mag[i] = std::sqrt(f_tot.fx[i] * f_tot.fx[i] + f_tot.fy[i] * f_tot.fy[i] + fz * fz);

    parallel_for(static_cast<std::size_t>(g.ny), threads, [&](std::size_t row) {
        const int iy = static_cast<int>(row);
        for (int ix = 0; ix < g.nx; ++ix) {
            const auto i = g.index(ix, iy);
            auto out = s.pixel(i);
            if (s.mask[i]) {
                std::fill(out.begin(), out.end(), 0.0);
                continue;
            }
            double spread = 0.0;
            const int nb[4][2] = {{ix + 1, iy}, {ix - 1, iy}, {ix, iy + 1}, {ix, iy - 1}};
            for (const auto& n : nb)
                if (g.contains(n[0], n[1]) && !f_tot.mask[g.index(n[0], n[1])])
                    spread = std::max(spread, std::abs(mag[g.index(n[0], n[1])] - mag[i]));
            const double center = stark_shift(mag[i]);
            const double fwhm = broadened_fwhm(mag[i], 0.5 * spread, fwhm0);
            std::mt19937_64 eng(pixel_seed(opt.seed, ix, iy));
            std::normal_distribution<double> noise(0.0, 1.0);
            for (std::size_t k = 0; k < detunings.size(); ++k) {
                double v = opt.baseline - opt.depth * dip(opt.shape, detunings[k], center, fwhm);
                if (opt.noise_sigma > 0.0) v += opt.noise_sigma * noise(eng);
                out[k] = v;
            }
        }
    });
    return s;
}

LineFit fit_pixel(std::span<const double> y, std::span<const double> d, const std::optional<LineFit>& init,
                  const FitOptions& opt) {
    LineFit fit;
    const std::size_t m = y.size();
    if (d.size() != m) throw ConfigError("fit_pixel: intensities and detunings differ in length");
    if (m < 5) {
        fit.status = FitStatus::TooFewPoints;
        return fit;
    }
    for (std::size_t k = 0; k < m; ++k)
        if (!std::isfinite(y[k]) || !std::isfinite(d[k])) {
            fit.status = FitStatus::MaskedInput;
            return fit;
        }

    Eigen::VectorXd p(4);
    if (init) {
        p << init->center, init->fwhm, init->depth, init->baseline;
    } else {
        const auto kmin = static_cast<std::size_t>(std::min_element(y.begin(), y.end()) - y.begin());
        const double base = median(std::vector<double>(y.begin(), y.end()));
        p << d[kmin], opt.fwhm0, base - y[kmin], base;
    }
    const double span = d[m - 1] - d[0];
    const double ymax = *std::max_element(y.begin(), y.end()), ymin = *std::min_element(y.begin(), y.end());
    if (!(p(2) > 0.0) || !(ymax - ymin > 1e-12 * std::max(1.0, std::abs(ymax)))) {
        fit.status = FitStatus::NoDip;
        return fit;
    }

    auto model = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
        const double c = x(0), w = x(1), a = x(2), b = x(3);
        for (std::size_t k = 0; k < m; ++k) {
            const double u = d[k] - c;
            const double e = std::exp(-kFourLn2 * u * u / (w * w));
            const auto row = static_cast<Eigen::Index>(k);
            r(row) = b - a * e - y[k];
            J(row, 0) = -a * e * 2.0 * kFourLn2 * u / (w * w);
            J(row, 1) = -a * e * 2.0 * kFourLn2 * u * u / (w * w * w);
            J(row, 2) = -e;
            J(row, 3) = 1.0;
        }
    };
    LmOptions lm;
    lm.max_iter = opt.max_iter;
    const LmResult res = levenberg_marquardt(model, p, static_cast<int>(m), lm);

    fit.center = res.x(0);
    fit.fwhm = std::abs(res.x(1));
    fit.depth = res.x(2);
    fit.baseline = res.x(3);
    fit.iterations = res.iterations;
    fit.converged = res.converged;
    fit.residual_norm = res.residual.norm();
    const Eigen::VectorXd se = standard_errors(res.jacobian, res.residual);
    for (int j = 0; j < 4; ++j) fit.stderr_[j] = se(j);

    const double sigma_hat = fit.residual_norm / std::sqrt(static_cast<double>(m - 4));
    if (!res.converged || !res.x.allFinite())
        fit.status = FitStatus::NoConvergence;
    else if (!(fit.depth > 0.0) || !(fit.fwhm > 0.0) || fit.fwhm > 10.0 * span)
        fit.status = FitStatus::NoDip;
    else if (fit.depth < 3.0 * sigma_hat)
        fit.status = FitStatus::BelowNoise;
    else if (fit.center < d[0] - 2.0 * fit.fwhm || fit.center > d[m - 1] + 2.0 * fit.fwhm)
        fit.status = FitStatus::OutOfRange;
    else if (std::count_if(d.begin(), d.end(), [&](double v) { return std::abs(v - fit.center) <= fit.fwhm; }) < 5)
        fit.status = FitStatus::NoDip;  // not resolved by the scan
    else
        fit.status = FitStatus::Ok;
    return fit;
}

SpectrumStack bin_stack(const SpectrumStack& s, int k, BinMode mode) {
    s.validate();
    if (k == 1) return s;
    SpectrumStack out(s.spec.binned(k), s.detunings);
    out.acq = s.acq;
    out.acq.binning = s.acq.binning * k;
    const std::size_t nd = s.depth();
    std::vector<int> count(out.spec.size(), 0);
    for (int by = 0; by < out.spec.ny; ++by)
        for (int bx = 0; bx < out.spec.nx; ++bx) {
            const auto c = out.spec.index(bx, by);
            auto acc = out.pixel(c);
            for (int j = 0; j < k; ++j)
                for (int i = 0; i < k; ++i) {
                    const auto f = s.spec.index(bx * k + i, by * k + j);
                    if (s.mask[f]) continue;
                    const auto src = s.pixel(f);
                    for (std::size_t q = 0; q < nd; ++q) acc[q] += src[q];
                    ++count[c];
                }
            if (count[c] == 0)
                out.mask[c] = 1;
            else if (mode == BinMode::Mean)
                for (auto& v : acc) v /= count[c];
        }
    return out;
}

FitMaps fit_stack(const SpectrumStack& stack, int k, BinMode mode, const FitOptions& opt, unsigned threads) {
    const SpectrumStack s = bin_stack(stack, k, mode);
    FitMaps out{ScalarGrid(s.spec, Unit::MHz), ScalarGrid(s.spec, Unit::MHz), ScalarGrid(s.spec, Unit::Dimensionless),
                std::vector<FitStatus>(s.spec.size(), FitStatus::MaskedInput), 0};
    parallel_for(s.spec.size(), threads, [&](std::size_t i) {
        if (s.mask[i]) return;
        const LineFit f = fit_pixel(s.pixel(i), s.detunings, std::nullopt, opt);
        out.status[i] = f.status;
        out.shift.values[i] = f.center;
        out.width.values[i] = f.fwhm;
        out.depth.values[i] = f.depth;
    });
    for (std::size_t i = 0; i < s.spec.size(); ++i) {
        if (out.status[i] == FitStatus::Ok) continue;
        if (!s.mask[i]) ++out.failed;
        out.shift.mask[i] = out.width.mask[i] = out.depth.mask[i] = 1;
        out.shift.values[i] = out.width.values[i] = out.depth.values[i] = 0.0;
    }
    return out;
}

FieldMap field_map_from_shifts(const ScalarGrid& shift_map, double fz) {
    if (shift_map.unit != Unit::MHz) throw ConfigError("field_map_from_shifts expects a shift map in MHz");
    if (!(fz >= 0.0) || !std::isfinite(fz)) throw ConfigError("fz must be finite and >= 0");
    FieldMap out{ScalarGrid(shift_map.spec, Unit::VPerCm), Mask(shift_map.spec.size(), 0), 0, 0};
    out.field.mask = shift_map.mask;
    const double fz2 = fz * fz;
    for (std::size_t i = 0; i < shift_map.values.size(); ++i) {
        if (shift_map.mask[i]) continue;
        const double s = shift_map.values[i];
        if (!(s >= -0.5)) {
            out.field.mask[i] = 1;
            ++out.rejected_count;
            continue;
        }
        const double f2 = 2.0 * s / kStark.delta_alpha - fz2;
        if (f2 < 0.0) {
            out.clamped[i] = 1;
            ++out.clamped_count;
        } else {
            out.field.values[i] = std::sqrt(f2);
        }
    }
    return out;
}

}  // namespace starkmap
