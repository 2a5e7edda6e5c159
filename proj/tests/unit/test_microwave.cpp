#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "starkmap/error.hpp"
#include "starkmap/microwave.hpp"
#include "starkmap/stark.hpp"

using namespace starkmap;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) v[static_cast<std::size_t>(k)] = a + (b - a) * k / (n - 1);
    return v;
}

RabiCurve synthetic_curve(double s, double detuning, double theta_hi, int n = 41) {
    RabiCurve c;
    c.theta = linspace(0.0, theta_hi, n);
    c.detuning_mhz = detuning;
    for (double t : c.theta) c.population.push_back(transfer_probability(t, s, detuning, c.pulse_ns, c.tau_ns));
    return c;
}

const BasisFields& basis() {
    static const BasisFields b = [] {
        const auto geom = DeviceGeometry::cpw(180.0, 80.0, std::nullopt, 2000.0, 1000.0);
        SolverOptions o;
        o.omega = 0.0;
        o.tol = 1e-10;
        return compute_basis(geom, solver_grid(geom, 20.0, 20.0), o);
    }();
    return b;
}

}  // namespace

TEST_CASE("transfer probability limits") {
    CHECK(transfer_probability(0.0, 13.2, 0.5, 400.0, 2000.0) == 1.0);
    const double s = 10.0, t = 400.0;
    CHECK(std::abs(transfer_probability(kPi / (s * t), s, 0.0, t, kInf)) < 1e-15);
    CHECK(std::abs(transfer_probability(2 * kPi / (s * t), s, 0.0, t, kInf) - 1.0) < 1e-15);
    // Decay envelope on the transferred population.
    CHECK(transfer_probability(kPi / (s * t), s, 0.0, t, 2000.0) == doctest::Approx(1.0 - std::exp(-0.1)));
    CHECK_THROWS_AS(transfer_probability(1e-4, s, 0.0, 0.0, 2000.0), DomainError);
}

TEST_CASE("transfer probability is periodic in t and bounded") {
    std::mt19937_64 eng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 1000; ++k) {
        const double s = 1.0 + 30.0 * u(eng), th = 1e-3 * u(eng), t = 50.0 + 800.0 * u(eng);
        if (th == 0.0) continue;
        const double period = 2.0 * kPi / (s * th);
        CHECK(transfer_probability(th, s, 0.0, t + period, kInf) ==
              doctest::Approx(transfer_probability(th, s, 0.0, t, kInf)).epsilon(1e-9).scale(1.0));
        const double p = transfer_probability(th, s, 5.0 * (u(eng) - 0.5), t, 100.0 + 5000.0 * u(eng));
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
}

TEST_CASE("effective rate obeys the quadrature identity") {
    std::mt19937_64 eng(8);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int k = 0; k < 1000; ++k) {
        const double d = u(eng), f = std::abs(u(eng));
        const double w = effective_rate(d, f);
        const double expect = std::pow(2 * kPi * d * 1e-3, 2) + std::pow(rabi_rate(f), 2);
        CHECK(w * w == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("fit_s recovers s from noiseless curves") {
    for (double det : {0.0, 0.3, -0.5}) {
        const auto c = synthetic_curve(13.2, det, 1.2e-3);
        const auto f = fit_s(c);
        REQUIRE(f.ok());
        CHECK(f.s == doctest::Approx(13.2).epsilon(1e-6));
    }
}

TEST_CASE("fit_s masks curves without a minimum") {
    // pi-pulse amplitude for s = 13.2 at 400 ns.
    const double pi_theta = kPi / (13.2 * 400.0);
    const auto f = fit_s(synthetic_curve(13.2, 0.0, 0.3 * pi_theta));
    CHECK(f.status == RabiStatus::NoExtremum);
    CHECK_FALSE(f.ok());
    RabiCurve bad = synthetic_curve(13.2, 0.0, 1e-3);
    bad.theta[3] = bad.theta[2];
    CHECK_THROWS_AS(fit_s(bad), ConfigError);
}

TEST_CASE("fit_s on noisy curves: coverage of the 3-stderr interval") {
    std::mt19937_64 eng(21);
    std::normal_distribution<double> n(0.0, 0.03);
    int inside = 0, fitted = 0;
    const int trials = 300;
    for (int t = 0; t < trials; ++t) {
        auto c = synthetic_curve(13.2, 0.2, 1.2e-3);
        for (auto& p : c.population) p += n(eng);
        const auto f = fit_s(c);
        if (!f.ok()) continue;
        ++fitted;
        if (std::abs(f.s - 13.2) < 3 * f.stderr_) ++inside;
    }
    CHECK(fitted == trials);
    CHECK(inside >= 0.95 * trials);
}

TEST_CASE("fit_s is scale consistent") {
    const double theta_max = 1.2e-3;
    const auto a = fit_s(synthetic_curve(13.2, 0.2, theta_max));
    const auto b = fit_s(synthetic_curve(6.6, 0.2, 2 * theta_max));
    REQUIRE(a.ok());
    REQUIRE(b.ok());
    CHECK(a.s * theta_max == doctest::Approx(b.s * 2 * theta_max).epsilon(1e-9));
}

TEST_CASE("first minimum ignores noise wiggles before the dip") {
    const auto th = linspace(0, 1, 9);
    const std::vector<double> y{1.0, 0.8, 0.6, 0.62, 0.3, 0.1, 0.3, 0.7, 0.9};
    CHECK(first_minimum(th, y) == 5);
    const std::vector<double> falling{1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2};
    CHECK(first_minimum(th, falling) == -1);
}

TEST_CASE("Rabi stack round trip") {
    RabiStack s(GridSpec{3, 2, 10, 10, 0, 0}, linspace(0, 5e-4, 6));
    for (std::size_t i = 0; i < s.population.size(); ++i) s.population[i] = 0.1 * static_cast<double>(i % 7);
    s.mask[4] = 1;
    s.tau_ns = kInf;
    const auto p = fs::temp_directory_path() / "starkmap_rabi_stack.csv";
    write_rabi_stack(s, p);
    const auto back = read_rabi_stack(p);
    CHECK(back.theta == s.theta);
    CHECK(back.mask == s.mask);
    CHECK(std::isinf(back.tau_ns));
    for (std::size_t i = 0; i < s.spec.size(); ++i)
        if (!s.mask[i]) CHECK(std::equal(s.pixel(i).begin(), s.pixel(i).end(), back.pixel(i).begin()));
    CHECK_THROWS_AS(read_rabi_stack(fs::temp_directory_path() / "no_such_rabi.csv"), IoError);
}

TEST_CASE("map_microwave closes on a synthetic mode field") {
    GridSpec g{12, 9, 23, 23, -126.5, 0};
    ScalarGrid fmu(g, Unit::MilliVPerCm), shift(g, Unit::MHz);
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix) {
            fmu.at(ix, iy) = 1.5 * std::exp(-std::pow((g.x(ix) + 40.0) / 150.0, 2)) + 1.6;
            shift.at(ix, iy) = 0.5 + 0.01 * ix * iy;
        }
    shift.mask[g.index(3, 3)] = 1;
    const auto det = detuning_from_shift(shift, kStark.nu0 + 0.2);
    CHECK(det.at(0, 0) == doctest::Approx(-0.3));
    const auto theta = linspace(0, 560e-6, 51);
    const auto stack = synth_rabi_stack(fmu, det, theta, 560e-6, 400.0, 2000.0, 0.0, 1);
    const auto map = map_microwave(stack, det, 560e-6);
    CHECK(map.field.mask[g.index(3, 3)] == 1);
    std::size_t unmasked = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (map.field.mask[i]) continue;
        ++unmasked;
        CHECK(map.field.values[i] == doctest::Approx(fmu.values[i]).epsilon(1e-6));
    }
    CHECK(unmasked + 1 + map.failed == g.size());
    CHECK(map.failed == 0);

    const auto noisy = synth_rabi_stack(fmu, det, theta, 560e-6, 400.0, 2000.0, 0.03, 9);
    const auto m1 = map_microwave(noisy, det, 560e-6, 1);
    const auto m3 = map_microwave(noisy, det, 560e-6, 3);
    CHECK(identical(m1.field, m3.field));
    CHECK(synth_rabi_stack(fmu, det, theta, 560e-6, 400.0, 2000.0, 0.03, 9, 4).population == noisy.population);
}

TEST_CASE("uniform microwave field maps to a uniform map") {
    GridSpec g{5, 4, 23, 23, 0, 0};
    ScalarGrid fmu(g, Unit::MilliVPerCm), det(g, Unit::MHz);
    std::fill(fmu.values.begin(), fmu.values.end(), 1.7);
    const auto theta = linspace(0, 560e-6, 41);
    const auto map = map_microwave(synth_rabi_stack(fmu, det, theta, 560e-6, 400.0, 2000.0, 0.0, 0), det, 560e-6);
    for (std::size_t i = 0; i < g.size(); ++i) {
        REQUIRE(map.field.mask[i] == 0);
        CHECK(map.field.values[i] == map.field.values[0]);
    }
    CHECK(map.field.values[0] == doctest::Approx(1.7).epsilon(1e-6));
}

TEST_CASE("mode shapes: symmetric even mode, odd mode with Ey = 0 on the axis") {
    const auto& b = basis();
    const auto even = mode_field(b, 1.0, 0.0).magnitude();
    double peak = 0.0;
    for (double v : even.values) peak = std::max(peak, v);
    CHECK(peak == doctest::Approx(1.0));
    const double y = 300.0;
    CHECK(std::abs(peak_x(even, y)) < 1e-6);

    const auto odd = mode_field(b, 0.0, 1.0);
    const auto& g = odd.spec;
    const int mid = g.nx / 2;
    REQUIRE(std::abs(g.x(mid)) < 1e-9);
    for (int iy = 1; iy < g.ny - 1; ++iy) CHECK(std::abs(odd.fy[g.index(mid, iy)]) < 1e-6);
    const auto om = odd.magnitude();
    // Close to the chip the odd mode has a local minimum on the axis between the gaps.
    const int near = 2;
    CHECK(om.at(mid, near) < om.at(mid - 5, near));
    CHECK(om.at(mid, near) < om.at(mid + 5, near));
    for (int iy = 1; iy < g.ny - 1; ++iy)
        for (int ix = 0; ix < mid; ++ix)
            CHECK(om.at(ix, iy) == doctest::Approx(om.at(g.nx - 1 - ix, iy)).epsilon(1e-6).scale(1e-6));
    CHECK_THROWS_AS(mode_field(b, 0.0, 0.0), DomainError);
}

TEST_CASE("odd weight places the peak 250 um left and the mode fit recovers the weights") {
    const auto& b = basis();
    const double y = 600.0;
    const double w = odd_weight_for_peak(b, y, -250.0, 800.0);
    const auto mag = mode_field(b, 1.0, w).magnitude();
    CHECK(std::abs(peak_x(mag, y, -800.0, 800.0) + 250.0) < 0.5);
    CHECK_THROWS_AS(odd_weight_for_peak(b, y, -700.0, 800.0, 5.0), DomainError);

    ScalarGrid target = mag;
    for (auto& v : target.values) v *= 3.0;
    const auto fit = fit_mode_weights(target, b);
    REQUIRE(fit.converged);
    const double n = std::hypot(1.0, w);
    CHECK(fit.a == doctest::Approx(1.0 / n).epsilon(1e-6));
    CHECK(fit.b == doctest::Approx(w / n).epsilon(1e-6));
    CHECK(fit.rms < 1e-8);
}
