#include <cmath>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "starkmap/electrostatics.hpp"
#include "starkmap/error.hpp"

using namespace starkmap;
namespace fs = std::filesystem;

namespace {

constexpr double kEps0 = 8.8541878128e-12;

SolverOptions fast() {
    SolverOptions o;
    o.omega = 0.0;  // optimal for the grid
    return o;
}

DeviceGeometry small_cpw() { return DeviceGeometry::cpw(180.0, 80.0, std::nullopt, 2000.0, 1000.0); }

/// Field (V/cm) of a uniformly charged strip [-a, a] at height yq, density
/// sigma (C/m^2), between grounded planes y = 0 and y = H, repeated every W
/// in x (the images of zero-flux side walls). Image-charge summation.
std::array<double, 2> strip_oracle(double x, double y, double a, double yq, double sigma, double H, double W) {
    const double k = sigma / (2.0 * std::numbers::pi * kEps0) / 100.0;
    double ex = 0.0, ey = 0.0;
    auto add = [&](double xc, double yc, double sign) {
        const double u = x - xc, d = y - yc;
        ex += sign * 0.5 * std::log(((u + a) * (u + a) + d * d) / ((u - a) * (u - a) + d * d));
        ey += sign * (std::atan((u + a) / d) - std::atan((u - a) / d));
    };
    for (int m = -2; m <= 2; ++m)
        for (int n = -20000; n <= 20000; ++n) {
            add(m * W, 2.0 * n * H + yq, 1.0);
            add(m * W, 2.0 * n * H - yq, -1.0);
        }
    return {k * ex, k * ey};
}

}  // namespace

TEST_CASE("parallel plates give the analytic uniform field") {
    DeviceGeometry g;
    g.shield_width = 1000.0;
    g.shield_height = 500.0;
    g.side_walls = SideWalls::Open;
    g.conductors = {{-500.0, 500.0, Electrode::Center}};
    const auto spec = solver_grid(g, 25.0, 25.0);
    PotentialSet p;
    p.v_c = 2.0;
    const auto f = field_from_potential(solve_potential(g, p, {}, spec, fast()));
    const double expected = 2.0 / (500.0 * 1e-4);  // V/cm
    double worst = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        worst = std::max(worst, std::abs(f.fy[i] - expected) / expected);
        worst = std::max(worst, std::abs(f.fx[i]) / expected);
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("charged strip matches the image-charge sum in the far field") {
    const double H = 1000.0, W = 4000.0, a = 100.0, h = 40.0, sigma = 1e-6;
    DeviceGeometry g;
    g.shield_width = W;
    g.shield_height = H;
    g.side_walls = SideWalls::Open;
    g.sheet_height = h;
    g.conductors = {{-W / 2, W / 2, Electrode::Center}};
    g.strips = {{-a, a, ChargeSpecies::Surface}};
    const auto spec = solver_grid(g, 10.0, 10.0);
    ChargeDensities q;
    q.sigma_s = sigma;
    const auto f = field_from_potential(solve_potential(g, {}, q, spec, fast()));
    const double probes[][2] = {{0, 300}, {0, 500}, {400, 400}, {-600, 250}, {800, 600}, {-300, 700}};
    for (const auto& pr : probes) {
        const int ix = static_cast<int>(std::lround((pr[0] - spec.x0) / spec.dx));
        const int iy = static_cast<int>(std::lround((pr[1] - spec.y0) / spec.dy));
        const auto i = spec.index(ix, iy);
        const auto e = strip_oracle(spec.x(ix), spec.y(iy), a, h, sigma, H, W);
        const double err = std::hypot(f.fx[i] - e[0], f.fy[i] - e[1]) / std::hypot(e[0], e[1]);
        INFO("probe " << pr[0] << "," << pr[1] << " rel err " << err);
        CHECK(err < 0.02);
    }
}

TEST_CASE("equal potentials everywhere give zero field") {
    const auto g = small_cpw();
    const auto spec = solver_grid(g, 20.0, 20.0);
    PotentialSet p{"flat", 1.5, 1.5, 1.5, 1.5};
    const auto f = field_from_potential(solve_potential(g, p, {}, spec, fast()));
    double worst = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i) worst = std::max({worst, std::abs(f.fx[i]), std::abs(f.fy[i])});
    CHECK(worst < 1e-4);
}

TEST_CASE("solution satisfies the discrete problem to the tolerance") {
    const auto g = small_cpw();
    const auto spec = solver_grid(g, 20.0, 20.0);
    PotentialSet p{"a", 1.0, -0.3, 0.2, 0.1};
    ChargeDensities q{-2e-6, 1e-6};
    SolveReport rep;
    const auto phi = solve_potential(g, p, q, spec, fast(), &rep);
    CHECK(rep.residual < 1e-8);
    CHECK(poisson_residual(g, p, q, phi) < 1e-8);
    CHECK(rep.iterations > 0);
}

TEST_CASE("symmetric drive gives mirror-symmetric field") {
    const auto g = small_cpw();
    const auto spec = solver_grid(g, 20.0, 20.0);
    PotentialSet p{"c", 1.0, 0.0, 0.0, 0.0};
    const auto f = field_from_potential(solve_potential(g, p, {}, spec, fast()));
    const double scale = tolerance_field(spec, fast());
    double worst = 0.0;
    for (int iy = 0; iy < spec.ny; ++iy)
        for (int ix = 0; ix < spec.nx; ++ix) {
            const auto i = spec.index(ix, iy), j = spec.index(spec.nx - 1 - ix, iy);
            worst = std::max({worst, std::abs(f.fx[i] + f.fx[j]), std::abs(f.fy[i] - f.fy[j])});
        }
    CHECK(worst < 10.0 * scale);
}

TEST_CASE("superposition of unit responses equals a direct solve") {
    const auto g = small_cpw();
    const auto spec = solver_grid(g, 20.0, 20.0);
    const auto basis = compute_basis(g, spec, fast());
    PotentialSet p{"mix", 1.0, 2.0, -0.5, 0.3};
    ChargeDensities q{1e-6, -2e-6};
    const auto direct = field_from_potential(solve_potential(g, p, q, spec, fast()));
    const auto sum = superpose(basis, p, q);
    double worst = 0.0, peak = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        worst = std::max({worst, std::abs(direct.fx[i] - sum.fx[i]), std::abs(direct.fy[i] - sum.fy[i])});
        peak = std::max(peak, std::hypot(direct.fx[i], direct.fy[i]));
    }
    INFO("worst " << worst << " peak " << peak << " tol field " << tolerance_field(spec, fast()));
    CHECK(worst < 10.0 * tolerance_field(spec, fast()));
}

TEST_CASE("basis does not depend on the thread count") {
    const auto g = small_cpw();
    const auto spec = solver_grid(g, 40.0, 40.0);
    const auto a = compute_basis(g, spec, fast(), 1);
    const auto b = compute_basis(g, spec, fast(), 4);
    for (int k = 0; k < 4; ++k) CHECK(identical(a.electrode[k], b.electrode[k]));
    for (int k = 0; k < 2; ++k) CHECK(identical(a.charge[k], b.charge[k]));
}

TEST_CASE("basis cache round trip and hash check") {
    const auto g = small_cpw();
    const auto spec = solver_grid(g, 40.0, 40.0);
    const auto basis = compute_basis(g, spec, fast());
    const auto dir = fs::temp_directory_path() / "starkmap_test_basis";
    fs::remove_all(dir);
    save_basis(basis, dir);
    const auto back = load_basis(dir, basis.geometry_hash);
    REQUIRE(back.has_value());
    CHECK(back->spec == spec);
    for (int k = 0; k < 4; ++k) CHECK(identical(back->electrode[k], basis.electrode[k]));
    for (int k = 0; k < 2; ++k) CHECK(identical(back->charge[k], basis.charge[k]));
    CHECK_FALSE(load_basis(dir, basis.geometry_hash ^ 1).has_value());

    auto g2 = g;
    g2.gap_width = 81.0;
    g2 = DeviceGeometry::cpw(180.0, 81.0, std::nullopt, 2000.0, 1000.0);
    CHECK(geometry_hash(g2, spec, fast()) != basis.geometry_hash);
}

TEST_CASE("iteration cap raises a convergence error with history") {
    const auto g = small_cpw();
    const auto spec = solver_grid(g, 20.0, 20.0);
    SolverOptions o;
    o.max_iter = 250;
    o.tol = 1e-14;
    try {
        solve_potential(g, PotentialSet{"c", 1, 0, 0, 0}, {}, spec, o);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.history().size() >= 2);
    }
}

TEST_CASE("invalid geometry and grids are rejected") {
    auto g = small_cpw();
    g.conductors.push_back({-50.0, 50.0, Electrode::LeftGround});
    CHECK_THROWS_AS(g.validate(), ConfigError);

    g = small_cpw();
    g.conductors.push_back({900.0, 1100.0, Electrode::LeftGround});
    CHECK_THROWS_AS(g.validate(), ConfigError);

    g = small_cpw();
    g.conductors[0].electrode = Electrode::Shield;
    CHECK_THROWS_AS(g.validate(), ConfigError);

    g = small_cpw();
    g.sheet_height = 1000.0;
    CHECK_THROWS_AS(g.validate(), ConfigError);

    g = small_cpw();
    CHECK_THROWS_AS(solve_potential(g, {}, {}, GridSpec{10, 10, 20.0, 20.0, -90.0, 0.0}), ConfigError);
    SolverOptions bad;
    bad.omega = 2.0;
    CHECK_THROWS_AS(solve_potential(g, {}, {}, solver_grid(g, 50, 50), bad), ConfigError);
}

TEST_CASE("optimal omega lies in (1, 2) and grows with grid size") {
    const auto a = optimal_omega(GridSpec::centered_box(1000, 1000, 50, 50));
    const auto b = optimal_omega(GridSpec::centered_box(1000, 1000, 10, 10));
    CHECK(a > 1.0);
    CHECK(b < 2.0);
    CHECK(b > a);
}
