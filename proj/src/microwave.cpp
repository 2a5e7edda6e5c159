#include "starkmap/microwave.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

#include "starkmap/error.hpp"
#include "starkmap/lsq.hpp"
#include "starkmap/parallel.hpp"
#include "starkmap/rng.hpp"
#include "starkmap/stark.hpp"
#include "starkmap/textio.hpp"

namespace starkmap {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double angular_detuning(double detuning_mhz) { return kTwoPi * detuning_mhz * 1e-3; }  // rad/ns

/// Transferred population and its derivative with respect to Omega_R.
std::pair<double, double> transferred(double w, double d, double t, double tau) {
    const double decay = std::isinf(tau) ? 1.0 : std::exp(-t / (2.0 * tau));
    const double W2 = w * w + d * d;
    if (W2 == 0.0) return {0.0, 0.0};
    const double W = std::sqrt(W2);
    const double sn = std::sin(0.5 * W * t);
    const double p = decay * (w * w / W2) * sn * sn;
    const double dp = decay * (2.0 * w * d * d / (W2 * W2) * sn * sn + (w * w / W2) * 0.5 * t * std::sin(W * t) * (w / W));
    return {p, dp};
}

void check_curve(std::span<const double> theta, double t_ns, double tau_ns) {
    if (!(t_ns > 0.0) || !(tau_ns > 0.0)) throw ConfigError("pulse length and decay time must be positive");
    for (std::size_t k = 0; k < theta.size(); ++k) {
        if (!(theta[k] >= 0.0)) throw ConfigError("drive amplitudes must be nonnegative");
        if (k > 0 && !(theta[k] > theta[k - 1])) throw ConfigError("drive amplitudes must be strictly ascending");
    }
}

}  // namespace

double transfer_probability(double theta_v, double s, double detuning_mhz, double t_ns, double tau_ns) {
    if (!(t_ns > 0.0) || !(tau_ns > 0.0)) throw DomainError("pulse length and decay time must be positive");
    return 1.0 - transferred(s * theta_v, angular_detuning(detuning_mhz), t_ns, tau_ns).first;
}

std::string_view rabi_status_name(RabiStatus s) noexcept {
    switch (s) {
        case RabiStatus::Ok: return "ok";
        case RabiStatus::NoExtremum: return "no_extremum";
        case RabiStatus::NoConvergence: return "no_convergence";
        case RabiStatus::MaskedInput: return "masked_input";
    }
    return "?";
}

int first_minimum(std::span<const double> theta, std::span<const double> y) {
    const std::size_t n = y.size();
    if (n < 3 || theta.size() != n) return -1;
    std::vector<double> sm(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t lo = k == 0 ? 0 : k - 1, hi = std::min(n - 1, k + 1);
        double acc = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) acc += y[j];
        sm[k] = acc / static_cast<double>(hi - lo + 1);
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < n; ++k) {
        if (sm[k] < sm[best]) best = k;
        else if (sm[k] - sm[best] >= 0.1)
            return best > 0 && sm[best] < 0.9 ? static_cast<int>(best) : -1;
    }
    return -1;
}

RabiFit fit_s(const RabiCurve& c) {
    if (c.theta.size() != c.population.size()) throw ConfigError("amplitude and population lists differ in length");
    check_curve(c.theta, c.pulse_ns, c.tau_ns);
    RabiFit out;
    const int k = first_minimum(c.theta, c.population);
    if (k < 0 || !(c.theta[static_cast<std::size_t>(k)] > 0.0)) {
        out.status = RabiStatus::NoExtremum;
        return out;
    }
    const double d = angular_detuning(c.detuning_mhz);
    const double th = c.theta[static_cast<std::size_t>(k)];
    // The first minimum sits near Omega_eff t = pi only for small detuning,
    // so scan s over [1/4, 4] times pi/(t theta_min) and start from the best.
    const double s_naive = std::numbers::pi / (c.pulse_ns * th);
    auto sse = [&](double s) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c.theta.size(); ++j) {
            const double r = 1.0 - transferred(s * c.theta[j], d, c.pulse_ns, c.tau_ns).first - c.population[j];
            acc += r * r;
        }
        return acc;
    };
    double s0 = s_naive, best = HUGE_VAL;
    for (int q = 0; q <= 400; ++q) {
        const double cand = s_naive * std::pow(16.0, q / 400.0) / 4.0;
        const double v = sse(cand);
        if (v < best) {
            best = v;
            s0 = cand;
        }
    }

    // Parameter is s / s0 so the problem is well scaled.
    const auto m = static_cast<int>(c.theta.size());
    auto model = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
        const double s = x(0) * s0;
        for (int j = 0; j < m; ++j) {
            const double t = c.theta[static_cast<std::size_t>(j)];
            const auto [p, dp] = transferred(s * t, d, c.pulse_ns, c.tau_ns);
            r(j) = 1.0 - p - c.population[static_cast<std::size_t>(j)];
            J(j, 0) = -dp * t * s0;
        }
    };
    const LmResult res = levenberg_marquardt(model, Eigen::VectorXd::Constant(1, 1.0), m);
    out.s = res.x(0) * s0;
    out.stderr_ = standard_errors(res.jacobian, res.residual)(0) * s0;
    out.iterations = res.iterations;
    out.rms = res.residual.norm() / std::sqrt(static_cast<double>(m));
    if (!res.converged || !std::isfinite(out.s))
        out.status = RabiStatus::NoConvergence;
    else if (!(out.s > 0.0))
        out.status = RabiStatus::NoExtremum;
    else
        out.status = RabiStatus::Ok;
    return out;
}

RabiStack::RabiStack(const GridSpec& s, std::vector<double> th)
    : spec(s), theta(std::move(th)), population(s.size() * theta.size(), 0.0), mask(s.size(), 0) {}

void RabiStack::validate() const {
    spec.validate();
    if (theta.empty()) throw ConfigError("Rabi stack has no drive amplitudes");
    check_curve(theta, pulse_ns, tau_ns);
    if (population.size() != spec.size() * theta.size() || mask.size() != spec.size())
        throw ConfigError("Rabi stack storage does not match its grid");
}

void write_rabi_stack(const RabiStack& s, const std::filesystem::path& path, const HeaderLines& extra) {
    s.validate();
    auto os = open_out(path);
    const GridSpec& g = s.spec;
    os << "# gridspec " << g.nx << ' ' << g.ny << ' ' << format_double(g.dx) << ' ' << format_double(g.dy) << ' '
       << format_double(g.x0) << ' ' << format_double(g.y0) << '\n';
    os << "# kind rabi_stack\n# thetas";
    for (double t : s.theta) os << ' ' << format_double(t);
    os << "\n# pulse_ns " << format_double(s.pulse_ns) << "\n# tau_ns " << format_double(s.tau_ns) << '\n';
    for (const auto& line : extra) os << "# " << line << '\n';
    os << "ix,iy,theta_V,population\n";
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix) {
            const auto i = g.index(ix, iy);
            if (s.mask[i]) continue;
            const auto px = s.pixel(i);
            for (std::size_t k = 0; k < s.depth(); ++k)
                os << ix << ',' << iy << ',' << format_double(s.theta[k]) << ',' << format_double(px[k]) << '\n';
        }
    finish(os, path);
}

RabiStack read_rabi_stack(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    std::optional<GridSpec> spec;
    std::vector<double> theta;
    double pulse = 400.0, tau = 2000.0;
    bool kind_ok = false, started = false;
    RabiStack s;
    std::vector<std::size_t> seen;
    std::string text;
    int line = 0;
    auto start = [&] {
        if (!spec || !kind_ok || theta.empty()) throw ParseError("incomplete Rabi stack header", line);
        s = RabiStack(*spec, theta);
        s.pulse_ns = pulse;
        s.tau_ns = tau;
        std::fill(s.mask.begin(), s.mask.end(), 1);
        seen.assign(spec->size(), 0);
        try {
            s.validate();
        } catch (const ConfigError& e) {
            throw ParseError(e.what(), line);
        }
        started = true;
    };
    while (std::getline(is, text)) {
        ++line;
        std::string_view v = trim(text);
        if (v.empty()) continue;
        if (v.front() == '#') {
            if (started) throw ParseError("header line after data rows", line);
            std::istringstream hs{std::string(v.substr(1))};
            std::string key, tok;
            hs >> key;
            if (key == "gridspec") {
                GridSpec g;
                if (!(hs >> g.nx >> g.ny >> g.dx >> g.dy >> g.x0 >> g.y0)) throw ParseError("malformed gridspec", line);
                spec = g;
            } else if (key == "kind") {
                hs >> tok;
                if (tok != "rabi_stack") throw ParseError("not a Rabi stack (kind '" + tok + "')", line);
                kind_ok = true;
            } else if (key == "thetas") {
                while (hs >> tok) theta.push_back(parse_number(tok, line));
            } else if (key == "pulse_ns") {
                if (hs >> tok) pulse = parse_number(tok, line);
            } else if (key == "tau_ns") {
                if (hs >> tok) tau = parse_number(tok, line);
            }
            continue;
        }
        if (!started) {
            start();
            if (v.substr(0, 3) == "ix,") continue;
        }
        const auto f = split(v, ',');
        if (f.size() != 4) throw ParseError("expected 4 fields ix,iy,theta_V,population", line);
        const int ix = parse_int(trim(f[0]), line), iy = parse_int(trim(f[1]), line);
        if (!spec->contains(ix, iy)) throw ParseError("pixel outside the grid", line);
        const auto i = spec->index(ix, iy);
        const std::size_t k = seen[i];
        if (k >= theta.size()) throw ParseError("too many amplitudes for pixel", line);
        if (parse_number(trim(f[2]), line) != theta[k]) throw ParseError("amplitude does not match header list", line);
        s.pixel(i)[k] = parse_number(trim(f[3]), line);
        ++seen[i];
    }
    if (!started) start();
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (seen[i] == 0) continue;
        if (seen[i] != theta.size()) throw ParseError("pixel with incomplete Rabi curve", line);
        s.mask[i] = 0;
    }
    return s;
}

ScalarGrid detuning_from_shift(const ScalarGrid& shift_map, double f_mw_mhz) {
    if (shift_map.unit != Unit::MHz) throw ConfigError("detuning needs a shift map in MHz");
    ScalarGrid out(shift_map.spec, Unit::MHz);
    out.mask = shift_map.mask;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = f_mw_mhz - (kStark.nu0 + shift_map.values[i]);
    return out;
}

RabiStack synth_rabi_stack(const ScalarGrid& f_mu, const ScalarGrid& detuning, const std::vector<double>& theta,
                           double theta_max, double pulse_ns, double tau_ns, double noise_sigma, std::uint64_t seed,
                           unsigned threads) {
    if (!(f_mu.spec == detuning.spec)) throw ConfigError("microwave field and detuning maps are on different grids");
    if (!(theta_max > 0.0)) throw ConfigError("theta_max must be positive");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be nonnegative");
    RabiStack st(f_mu.spec, theta);
    st.pulse_ns = pulse_ns;
    st.tau_ns = tau_ns;
    st.validate();
    const GridSpec& g = f_mu.spec;
    parallel_for(static_cast<std::size_t>(g.ny), threads, [&](std::size_t row) {
        const int iy = static_cast<int>(row);
        for (int ix = 0; ix < g.nx; ++ix) {
            const auto i = g.index(ix, iy);
            if (f_mu.mask[i] || detuning.mask[i]) {
                st.mask[i] = 1;
                continue;
            }
            if (f_mu.values[i] < 0.0) throw DomainError("microwave field amplitude must be nonnegative");
            const double s = rabi_rate(f_mu.values[i]) / theta_max;
            std::mt19937_64 eng(pixel_seed(seed, ix, iy));
            std::normal_distribution<double> noise(0.0, noise_sigma);
            auto px = st.pixel(i);
            for (std::size_t k = 0; k < theta.size(); ++k) {
                px[k] = transfer_probability(theta[k], s, detuning.values[i], pulse_ns, tau_ns);
                if (noise_sigma > 0.0) px[k] += noise(eng);
            }
        }
    });
    return st;
}

MwFieldMap map_microwave(const RabiStack& stack, const ScalarGrid& detuning, double theta_max, unsigned threads) {
    stack.validate();
    if (!(stack.spec == detuning.spec)) throw ConfigError("Rabi stack and detuning map are on different grids");
    if (!(theta_max > 0.0)) throw ConfigError("theta_max must be positive");
    const GridSpec& g = stack.spec;
    MwFieldMap out{ScalarGrid(g, Unit::MilliVPerCm), ScalarGrid(g, Unit::RadPerNsPerVolt),
                   ScalarGrid(g, Unit::RadPerNsPerVolt), 0};
    std::vector<std::uint8_t> failed(g.size(), 0);
    parallel_for(static_cast<std::size_t>(g.ny), threads, [&](std::size_t row) {
        const int iy = static_cast<int>(row);
        RabiCurve c;
        c.theta = stack.theta;
        c.pulse_ns = stack.pulse_ns;
        c.tau_ns = stack.tau_ns;
        for (int ix = 0; ix < g.nx; ++ix) {
            const auto i = g.index(ix, iy);
            auto mask_px = [&] { out.field.mask[i] = out.s.mask[i] = out.s_stderr.mask[i] = 1; };
            if (stack.mask[i] || detuning.mask[i]) {
                mask_px();
                continue;
            }
            const auto px = stack.pixel(i);
            c.population.assign(px.begin(), px.end());
            c.detuning_mhz = detuning.values[i];
            const RabiFit f = fit_s(c);
            if (!f.ok()) {
                mask_px();
                failed[i] = 1;
                continue;
            }
            out.s.values[i] = f.s;
            out.s_stderr.values[i] = f.stderr_;
            out.field.values[i] = field_from_rabi_rate(f.s * theta_max);
        }
    });
    for (auto f : failed) out.failed += f;
    return out;
}

VectorGrid mode_field(const BasisFields& basis, double a, double b) {
    const VectorGrid& c = basis.of(Electrode::Center);
    const VectorGrid& l = basis.of(Electrode::LeftGround);
    const VectorGrid& r = basis.of(Electrode::RightGround);
    VectorGrid out(basis.spec);
    double peak = 0.0;
    for (std::size_t i = 0; i < out.fx.size(); ++i) {
        out.mask[i] = c.mask[i] | l.mask[i] | r.mask[i];
        out.fx[i] = a * c.fx[i] + 0.5 * b * (l.fx[i] - r.fx[i]);
        out.fy[i] = a * c.fy[i] + 0.5 * b * (l.fy[i] - r.fy[i]);
        if (!out.mask[i]) peak = std::max(peak, std::hypot(out.fx[i], out.fy[i]));
    }
    if (!(peak > 0.0)) throw DomainError("mode field vanishes everywhere");
    for (std::size_t i = 0; i < out.fx.size(); ++i) {
        out.fx[i] /= peak;
        out.fy[i] /= peak;
    }
    return out;
}

double peak_x(const ScalarGrid& m, double y_um, double x_min, double x_max) {
    const GridSpec& g = m.spec;
    const int iy = std::clamp(static_cast<int>(std::lround((y_um - g.y0) / g.dy)), 0, g.ny - 1);
    int best = -1;
    for (int ix = 0; ix < g.nx; ++ix)
        if (!m.masked(ix, iy) && g.x(ix) >= x_min && g.x(ix) <= x_max && (best < 0 || m.at(ix, iy) > m.at(best, iy)))
            best = ix;
    if (best < 0) throw DomainError("no unmasked cell on the requested row segment");
    double x = g.x(best);
    if (best > 0 && best < g.nx - 1 && !m.masked(best - 1, iy) && !m.masked(best + 1, iy)) {
        const double l = m.at(best - 1, iy), c = m.at(best, iy), r = m.at(best + 1, iy);
        const double den = l - 2.0 * c + r;
        if (den < 0.0) x += 0.5 * (l - r) / den * g.dx;
    }
    return x;
}

ModeFit fit_mode_weights(const ScalarGrid& target, const BasisFields& basis) {
    if (!(target.spec == basis.spec)) throw ConfigError("target map and basis are on different grids");
    const VectorGrid& c = basis.of(Electrode::Center);
    const VectorGrid& l = basis.of(Electrode::LeftGround);
    const VectorGrid& r = basis.of(Electrode::RightGround);
    std::vector<std::size_t> px;
    for (std::size_t i = 0; i < target.values.size(); ++i)
        if (!target.mask[i] && !c.mask[i] && !l.mask[i] && !r.mask[i]) px.push_back(i);
    if (px.size() < 3) throw ConfigError("mode fit needs at least 3 unmasked pixels");
    const auto m = static_cast<int>(px.size());
    auto model = [&](const Eigen::VectorXd& x, Eigen::VectorXd& res, Eigen::MatrixXd& J) {
        for (int k = 0; k < m; ++k) {
            const auto i = px[static_cast<std::size_t>(k)];
            const double sx = 0.5 * (l.fx[i] - r.fx[i]), sy = 0.5 * (l.fy[i] - r.fy[i]);
            const double vx = x(0) * c.fx[i] + x(1) * sx, vy = x(0) * c.fy[i] + x(1) * sy;
            const double n = std::hypot(vx, vy);
            res(k) = n - target.values[i];
            J(k, 0) = n > 0.0 ? (vx * c.fx[i] + vy * c.fy[i]) / n : 0.0;
            J(k, 1) = n > 0.0 ? (vx * sx + vy * sy) / n : 0.0;
        }
    };
    double num = 0.0, den = 0.0;
    for (auto i : px) {
        const double e = std::hypot(c.fx[i], c.fy[i]);
        num += e * target.values[i];
        den += e * e;
    }
    if (!(den > 0.0)) throw DomainError("center-conductor response vanishes on the target pixels");
    Eigen::VectorXd x0(2);
    x0 << num / den, 0.0;
    LmResult res = levenberg_marquardt(model, x0, m);
    // |a E_c + b E_s| and |a E_c - b E_s| are mirror images; try the other side.
    Eigen::VectorXd xm = res.x;
    xm(1) = -xm(1);
    if (xm(1) != 0.0) {
        LmResult mirrored = levenberg_marquardt(model, xm, m);
        if (mirrored.cost < res.cost) res = std::move(mirrored);
    }
    ModeFit out;
    const double n = std::hypot(res.x(0), res.x(1));
    const double sign = res.x(0) < 0.0 ? -1.0 : 1.0;
    out.scale = n;
    out.a = n > 0.0 ? sign * res.x(0) / n : 0.0;
    out.b = n > 0.0 ? sign * res.x(1) / n : 0.0;
    out.rms = res.residual.norm() / std::sqrt(static_cast<double>(m));
    out.iterations = res.iterations;
    out.converged = res.converged;
    return out;
}

double odd_weight_for_peak(const BasisFields& basis, double y_um, double target_x_um, double half_window_um,
                           double b_max) {
    auto peak = [&](double b) {
        return peak_x(mode_field(basis, 1.0, b).magnitude(), y_um, -half_window_um, half_window_um) - target_x_um;
    };
    const double p0 = peak(0.0);
    if (p0 == 0.0) return 0.0;
    // Pick the sign of b that moves the peak toward the target, then expand.
    const double step = 0.01;
    const double sign = std::abs(peak(step)) < std::abs(peak(-step)) ? 1.0 : -1.0;
    double lo = 0.0, hi = sign * step, plo = p0, phi = peak(hi);
    while ((plo > 0.0) == (phi > 0.0)) {
        lo = hi;
        plo = phi;
        hi *= 2.0;
        if (std::abs(hi) > b_max) throw DomainError("no odd-mode weight within range places the peak there");
        phi = peak(hi);
    }
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double pm = peak(mid);
        if ((pm > 0.0) == (plo > 0.0)) {
            lo = mid;
            plo = pm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace starkmap
