#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "starkmap/error.hpp"
#include "starkmap/reconstruction.hpp"
#include "starkmap/stark.hpp"

using namespace starkmap;

namespace {

std::vector<PixelSample> noiseless(const std::vector<std::array<double, 2>>& f, double sx, double sy) {
    std::vector<PixelSample> s;
    for (const auto& a : f) s.push_back({a[0], a[1], std::hypot(a[0] + sx, a[1] + sy)});
    return s;
}

std::vector<std::array<double, 2>> random_fields(std::mt19937_64& eng, int n, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<std::array<double, 2>> f(static_cast<std::size_t>(n));
    for (auto& a : f) a = {u(eng), u(eng)};
    return f;
}

/// Condition number of the pairwise-difference matrix, computed directly.
double difference_condition(std::span<const PixelSample> s) {
    Eigen::MatrixXd A(static_cast<Eigen::Index>(s.size() - 1), 2);
    for (std::size_t i = 1; i < s.size(); ++i) {
        A(static_cast<Eigen::Index>(i - 1), 0) = s[0].fx - s[i].fx;
        A(static_cast<Eigen::Index>(i - 1), 1) = s[0].fy - s[i].fy;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
    return svd.singularValues()(0) / svd.singularValues()(1);
}

/// Condition number of the Jacobian of the magnitudes |F_i + S| at S.
double magnitude_condition(std::span<const PixelSample> s, double sx, double sy) {
    Eigen::MatrixXd J(static_cast<Eigen::Index>(s.size()), 2);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double ax = s[i].fx + sx, ay = s[i].fy + sy, n = std::hypot(ax, ay);
        J(static_cast<Eigen::Index>(i), 0) = ax / n;
        J(static_cast<Eigen::Index>(i), 1) = ay / n;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
    return svd.singularValues()(0) / svd.singularValues()(1);
}

struct SmallDevice {
    DeviceGeometry geom = DeviceGeometry::cpw(180.0, 80.0, std::nullopt, 2000.0, 1000.0);
    BasisFields basis;
    BasisFields window;
    SmallDevice() {
        SolverOptions o;
        o.omega = 0.0;
        o.tol = 1e-10;
        basis = compute_basis(geom, solver_grid(geom, 20.0, 20.0), o);
        window = crop(basis, window_for(basis.spec, -600.0, 600.0, 200.0, 900.0));
    }
};

const SmallDevice& device() {
    static const SmallDevice d;
    return d;
}

const ChargeDensities kCharges{-23.6e-6, -2.10e-6};

ScalarGrid in_plane_magnitude(const VectorGrid& v) {
    ScalarGrid m(v.spec, Unit::VPerCm);
    for (std::size_t i = 0; i < v.fx.size(); ++i) m.values[i] = std::hypot(v.fx[i], v.fy[i]);
    m.mask = v.mask;
    return m;
}

VectorGrid charge_field(const BasisFields& b, const ChargeDensities& q) { return superpose(b, {}, q); }

}  // namespace

TEST_CASE("closed form returns zero for a zero stray field") {
    std::mt19937_64 eng(1);
    for (int k = 0; k < 100; ++k) {
        const auto s = noiseless(random_fields(eng, 3, 1.0), 0.0, 0.0);
        const auto sol = reconstruct_pixel_closed(s);
        REQUIRE(sol.ok);
        CHECK(std::abs(sol.fx) < 1e-12);
        CHECK(std::abs(sol.fy) < 1e-12);
    }
}

TEST_CASE("closed form recovers a noiseless stray vector and matches a residual scan") {
    const std::vector<std::array<double, 2>> f{{0.21, -0.05}, {-0.12, 0.17}, {0.03, 0.26}};
    const double sx = 0.030, sy = -0.040;
    const auto s = noiseless(f, sx, sy);
    const auto sol = reconstruct_pixel_closed(s);
    REQUIRE(sol.ok);
    CHECK(std::abs(sol.fx - sx) < 1e-9);
    CHECK(std::abs(sol.fy - sy) < 1e-9);
    CHECK(sol.residual < 1e-12);

    // Brute-force scan of the residual over a box around the origin.
    const double step = 2.5e-4;
    double best = HUGE_VAL, bx = 0, by = 0;
    for (int i = -400; i <= 400; ++i)
        for (int j = -400; j <= 400; ++j) {
            const double r = pixel_residual(s, i * step, j * step);
            if (r < best) {
                best = r;
                bx = i * step;
                by = j * step;
            }
        }
    CHECK(std::abs(bx - sol.fx) <= step);
    CHECK(std::abs(by - sol.fy) <= step);
    CHECK(sol.residual <= best + 1e-15);
}

TEST_CASE("collinear applied-field differences are rejected") {
    const std::vector<std::array<double, 2>> f{{0.1, 0.1}, {0.2, 0.2}, {0.4, 0.4}};
    const auto sol = reconstruct_pixel_closed(noiseless(f, 0.01, 0.02));
    CHECK_FALSE(sol.ok);
    CHECK(sol.condition >= 1e6);
    CHECK_FALSE(reconstruct_pixel_closed(noiseless({{0.1, 0.0}, {0.0, 0.1}}, 0, 0)).ok);
}

TEST_CASE("random search agrees with the closed form on 10^4 noiseless pixels") {
    std::mt19937_64 eng(2024);
    std::uniform_real_distribution<double> us(-0.2, 0.2);
    int tested = 0;
    double worst = 0.0;
    while (tested < 10000) {
        const auto f = random_fields(eng, 3, 1.0);
        const double sx = us(eng), sy = us(eng);
        const auto s = noiseless(f, sx, sy);
        // Well-conditioned: both the difference system and the magnitude
        // Jacobian at the solution.
        if (difference_condition(s) > 20.0 || magnitude_condition(s, sx, sy) > 20.0) continue;
        const auto closed = reconstruct_pixel_closed(s);
        REQUIRE(closed.ok);
        const auto search = reconstruct_pixel_search(s, auto_bounds(s, 0.01), {}, 1000 + tested);
        REQUIRE(search.ok);
        worst = std::max(worst, std::hypot(search.fx - closed.fx, search.fy - closed.fy));
        ++tested;
    }
    INFO("worst disagreement " << worst);
    CHECK(worst < 1e-3);
}

TEST_CASE("random search is deterministic for a seed and flags optima outside the bounds") {
    const auto s = noiseless({{0.21, -0.05}, {-0.12, 0.17}, {0.03, 0.26}}, 0.03, -0.04);
    const auto a = reconstruct_pixel_search(s, {-0.1, 0.1, -0.1, 0.1}, {}, 7);
    const auto b = reconstruct_pixel_search(s, {-0.1, 0.1, -0.1, 0.1}, {}, 7);
    CHECK(a.fx == b.fx);
    CHECK(a.fy == b.fy);
    const auto out = reconstruct_pixel_search(s, {0.05, 0.1, -0.1, 0.1}, {}, 7);
    CHECK(out.at_boundary);
    CHECK_FALSE(out.ok);
    CHECK_THROWS_AS(reconstruct_pixel_search(s, {0.1, 0.1, -0.1, 0.1}, {}, 7), ConfigError);
}

TEST_CASE("a single measurement yields a point on its circle") {
    const auto s = noiseless({{0.2, 0.1}}, 0.05, 0.0);
    const auto sol = reconstruct_pixel_search(s, {-0.5, 0.5, -0.5, 0.5}, {}, 3);
    CHECK(sol.residual < 1e-6);
    CHECK(std::abs(std::hypot(0.2 + sol.fx, 0.1 + sol.fy) - s[0].m) < 1e-6);
}

TEST_CASE("noisy magnitudes: search estimates lie within 3 sigma in at least 95% of trials") {
    std::mt19937_64 eng(99);
    std::normal_distribution<double> noise(0.0, 0.002);
    const std::vector<std::array<double, 2>> f{{0.25, 0.0}, {-0.15, 0.2}, {0.0, -0.25}, {-0.2, -0.1}, {0.15, 0.22}};
    const double sx = 0.03, sy = -0.04;
    // Linearized covariance: rows are unit vectors along F_i + S.
    Eigen::MatrixXd J(5, 2);
    for (int i = 0; i < 5; ++i) {
        const double ax = f[i][0] + sx, ay = f[i][1] + sy, n = std::hypot(ax, ay);
        J(i, 0) = ax / n;
        J(i, 1) = ay / n;
    }
    const Eigen::Matrix2d cov = 0.002 * 0.002 * (J.transpose() * J).inverse();
    int inside = 0, residual_ok = 0;
    const int trials = 400;
    for (int t = 0; t < trials; ++t) {
        auto s = noiseless(f, sx, sy);
        for (auto& p : s) p.m += noise(eng);
        const auto sol = reconstruct_pixel_search(s, auto_bounds(s, 0.01), {}, static_cast<std::uint64_t>(t));
        if (std::abs(sol.fx - sx) < 3 * std::sqrt(cov(0, 0)) && std::abs(sol.fy - sy) < 3 * std::sqrt(cov(1, 1)))
            ++inside;
        if (sol.residual < 3 * 0.002) ++residual_ok;
    }
    CHECK(inside >= 0.95 * trials);
    CHECK(residual_ok >= 0.95 * trials);
}

TEST_CASE("reconstruction is gauge invariant") {
    std::mt19937_64 eng(5);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (int k = 0; k < 1000; ++k) {
        const auto f = random_fields(eng, 4, 1.0);
        const double sx = u(eng), sy = u(eng), cx = u(eng), cy = u(eng);
        auto s = noiseless(f, sx, sy);
        for (auto& p : s) p.m += 1e-3 * u(eng);
        auto shifted = s;
        for (auto& p : shifted) {
            p.fx += cx;
            p.fy += cy;
        }
        const double tx = u(eng), ty = u(eng);
        CHECK(pixel_residual(shifted, tx - cx, ty - cy) == doctest::Approx(pixel_residual(s, tx, ty)).epsilon(1e-9));
        const auto a = reconstruct_pixel_closed(s), b = reconstruct_pixel_closed(shifted);
        if (!a.ok) continue;
        CHECK(b.fx == doctest::Approx(a.fx - cx).epsilon(1e-8).scale(1.0));
        CHECK(b.fy == doctest::Approx(a.fy - cy).epsilon(1e-8).scale(1.0));
    }
}

TEST_CASE("3D reconstruction recovers random stray vectors and rejects coplanar configurations") {
    std::mt19937_64 eng(31);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 1000; ++k) {
        const double s[3] = {0.2 * u(eng), 0.2 * u(eng), 0.2 * u(eng)};
        std::vector<PixelSample3> m;
        for (int i = 0; i < 4; ++i) {
            const double f[3] = {u(eng), u(eng), u(eng)};
            m.push_back({f[0], f[1], f[2], std::sqrt(std::pow(f[0] + s[0], 2) + std::pow(f[1] + s[1], 2) +
                                                     std::pow(f[2] + s[2], 2))});
        }
        const auto sol = reconstruct_point_3d(m);
        if (!sol.ok) continue;
        CHECK(std::abs(sol.fx - s[0]) < 1e-9 * std::max(1.0, sol.condition / 100));
        CHECK(std::abs(sol.fy - s[1]) < 1e-9 * std::max(1.0, sol.condition / 100));
        CHECK(std::abs(sol.fz - s[2]) < 1e-9 * std::max(1.0, sol.condition / 100));
    }
    // Generic fixed configuration: exact recovery and a unique minimum of a 3D residual scan.
    const std::vector<std::array<double, 3>> f{{0.3, 0.0, 0.1}, {0.0, 0.3, -0.1}, {-0.2, -0.1, 0.3}, {0.1, -0.3, -0.2}};
    const double s[3] = {0.02, -0.03, 0.01};
    std::vector<PixelSample3> m;
    for (const auto& a : f)
        m.push_back({a[0], a[1], a[2], std::sqrt(std::pow(a[0] + s[0], 2) + std::pow(a[1] + s[1], 2) +
                                                 std::pow(a[2] + s[2], 2))});
    const auto sol = reconstruct_point_3d(m);
    REQUIRE(sol.ok);
    CHECK(std::abs(sol.fx - s[0]) < 1e-9);
    CHECK(std::abs(sol.fy - s[1]) < 1e-9);
    CHECK(std::abs(sol.fz - s[2]) < 1e-9);
    const double step = 2e-3;
    double best = HUGE_VAL;
    int bi = 0, bj = 0, bk = 0, near_best = 0;
    std::vector<double> vals;
    for (int i = -50; i <= 50; ++i)
        for (int j = -50; j <= 50; ++j)
            for (int k = -50; k <= 50; ++k) {
                double acc = 0.0;
                for (const auto& p : m) {
                    const double d = std::sqrt(std::pow(p.fx + i * step, 2) + std::pow(p.fy + j * step, 2) +
                                               std::pow(p.fz + k * step, 2)) -
                                     p.m;
                    acc += d * d;
                }
                if (acc < best) {
                    best = acc;
                    bi = i;
                    bj = j;
                    bk = k;
                }
                if (acc < 1e-8) ++near_best;
            }
    CHECK(std::abs(bi * step - s[0]) <= step);
    CHECK(std::abs(bj * step - s[1]) <= step);
    CHECK(std::abs(bk * step - s[2]) <= step);
    CHECK(near_best <= 8);  // only the cells around one minimum

    std::vector<PixelSample3> flat;
    for (const auto& a : f) flat.push_back({a[0], a[1], 0.0, std::hypot(a[0], a[1])});
    CHECK_FALSE(reconstruct_point_3d(flat).ok);
}

TEST_CASE("method names round trip") {
    CHECK(parse_method(method_name(ReconMethod::ClosedForm)) == ReconMethod::ClosedForm);
    CHECK(parse_method(method_name(ReconMethod::RandomSearch)) == ReconMethod::RandomSearch);
    CHECK_THROWS_AS(parse_method("simplex"), ConfigError);
}

TEST_CASE("reconstruct_stray closes on a synthetic charge campaign") {
    const auto& b = device().window;
    const VectorGrid truth = charge_field(b, kCharges);
    const std::vector<PotentialSet> sets{{"A", 0.3, 0, 0, 0}, {"B", 0, 0.3, 0, 0}, {"C", 0, 0, 0.3, 0}};
    std::vector<Measurement> meas;
    for (const auto& p : sets) {
        Measurement m{p.label, p, superpose(b, p), ScalarGrid(b.spec, Unit::VPerCm)};
        m.magnitude = in_plane_magnitude(superpose(b, p, kCharges));
        meas.push_back(std::move(m));
    }
    meas[1].magnitude.mask[5] = 1;  // still three measurements elsewhere, only two here
    const auto res = reconstruct_stray(meas, 0.1);
    CHECK(res.fz == 0.1);
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < truth.fx.size(); ++i) {
        if (res.stray.mask[i]) continue;
        acc += std::pow(res.stray.fx[i] - truth.fx[i], 2) + std::pow(res.stray.fy[i] - truth.fy[i], 2);
        ++n;
        CHECK(res.residual.values[i] >= 0.0);
    }
    CHECK(res.stray.mask[5] == 1);
    CHECK(n + 1 + res.ill_conditioned == truth.fx.size());
    CHECK(std::sqrt(acc / n) < 5e-3);

    auto dup = meas;
    dup[2].label = "A";
    CHECK_THROWS_AS(reconstruct_stray(dup, 0.0), ConfigError);
    dup.pop_back();
    CHECK_THROWS_AS(reconstruct_stray(dup, 0.0), ConfigError);
}

TEST_CASE("zero stray campaign reconstructs to zero, and search is thread independent") {
    const auto& b = device().window;
    const std::vector<PotentialSet> sets{{"A", 0.3, 0, 0, 0}, {"B", 0, 0.3, 0, 0}, {"C", 0, 0, 0.3, 0}};
    std::vector<Measurement> meas;
    for (const auto& p : sets)
        meas.push_back({p.label, p, superpose(b, p), in_plane_magnitude(superpose(b, p))});
    const auto res = reconstruct_stray(meas, 0.0);
    for (std::size_t i = 0; i < res.stray.fx.size(); ++i)
        if (!res.stray.mask[i]) CHECK(std::hypot(res.stray.fx[i], res.stray.fy[i]) < 1e-3);
    ReconOptions o;
    o.method = ReconMethod::RandomSearch;
    o.seed = 17;
    o.search.budget = 400;
    const auto one = reconstruct_stray(meas, 0.0, o, 1);
    const auto four = reconstruct_stray(meas, 0.0, o, 4);
    CHECK(identical(one.stray, four.stray));
    CHECK(identical(one.residual, four.residual));
}

TEST_CASE("estimate_fz inverts the smallest shift") {
    ScalarGrid s(GridSpec{3, 2, 1, 1, 0, 0}, Unit::MHz);
    std::fill(s.values.begin(), s.values.end(), 5.0);
    s.values[2] = stark_shift(0.05);
    s.values[3] = -1.0;
    s.mask[3] = 1;
    CHECK(estimate_fz(s) == doctest::Approx(0.05).epsilon(1e-12));
    s.values[2] = -0.2;
    CHECK(estimate_fz(s) == 0.0);
    std::fill(s.mask.begin(), s.mask.end(), 1);
    CHECK_THROWS_AS(estimate_fz(s), DomainError);
}

TEST_CASE("neighbor average preserves uniform fields and skips masked pixels") {
    VectorGrid v(GridSpec{4, 4, 1, 1, 0, 0});
    std::fill(v.fx.begin(), v.fx.end(), 0.2);
    std::fill(v.fy.begin(), v.fy.end(), -0.1);
    v.mask[5] = 1;
    v.fx[5] = 1e9;
    const auto a = neighbor_average(v);
    for (std::size_t i = 0; i < a.fx.size(); ++i) {
        if (a.mask[i]) continue;
        CHECK(a.fx[i] == doctest::Approx(0.2));
        CHECK(a.fy[i] == doctest::Approx(-0.1));
    }
    CHECK(a.mask[5] == 1);
}

TEST_CASE("charge densities are recovered from magnitude maps") {
    const auto& b = device().window;
    const PotentialSet pots{"fit", 0.2, 0.0, 0.0, 0.0};
    const auto fit = fit_charge_densities(in_plane_magnitude(superpose(b, pots, kCharges)), pots, b);
    REQUIRE(fit.converged);
    CHECK(fit.q.sigma_g == doctest::Approx(kCharges.sigma_g).epsilon(1e-6));
    CHECK(fit.q.sigma_s == doctest::Approx(kCharges.sigma_s).epsilon(1e-6));

    // With an out-of-plane component folded into the magnitude.
    auto with_fz = in_plane_magnitude(superpose(b, pots, kCharges));
    for (auto& m : with_fz.values) m = std::hypot(m, 0.3);
    const auto fz = fit_charge_densities(with_fz, pots, b, 0.3);
    CHECK(fz.q.sigma_g == doctest::Approx(kCharges.sigma_g).epsilon(1e-6));
    CHECK(fz.q.sigma_s == doctest::Approx(kCharges.sigma_s).epsilon(1e-6));
}

TEST_CASE("charge fit on noisy data: absent species is consistent with zero") {
    const auto& b = device().window;
    const PotentialSet pots{"fit", 0.2, 0.0, 0.0, 0.0};
    std::mt19937_64 eng(12);
    std::normal_distribution<double> n(0.0, 0.02);
    auto noisy = [&](const ChargeDensities& q) {
        auto m = in_plane_magnitude(superpose(b, pots, q));
        for (auto& v : m.values) v += n(eng);
        return m;
    };
    const auto only_g = fit_charge_densities(noisy({kCharges.sigma_g, 0.0}), pots, b);
    REQUIRE(only_g.converged);
    CHECK(std::abs(only_g.q.sigma_s) < 3 * only_g.stderr_[1]);
    CHECK(std::abs(only_g.q.sigma_g - kCharges.sigma_g) < 3 * only_g.stderr_[0]);
    const auto zero = fit_charge_densities(noisy({}), pots, b);
    CHECK(std::abs(zero.q.sigma_g) < 3 * zero.stderr_[0] + 1e-12);
    CHECK(std::abs(zero.q.sigma_s) < 3 * zero.stderr_[1] + 1e-12);
}

TEST_CASE("superposition validation: closure and the zero-stray sanity direction") {
    const auto& b = device().window;
    const PotentialSet held{"D", 0.0, 0.2, 0.2, 0.0};
    const auto measured = in_plane_magnitude(superpose(b, held, kCharges));
    StrayFieldResult s{charge_field(b, kCharges), 0.0, ScalarGrid(b.spec, Unit::VPerCm),
                       ScalarGrid(b.spec, Unit::Dimensionless)};
    const auto d = validate_superposition(s, held, b, measured);
    CHECK(d.max_abs < 1e-9);
    CHECK(d.pixels == b.spec.size());

    StrayFieldResult zero{VectorGrid(b.spec), 0.0, ScalarGrid(b.spec, Unit::VPerCm),
                          ScalarGrid(b.spec, Unit::Dimensionless)};
    const auto z = validate_superposition(zero, held, b, measured);
    double max_stray = 0.0;
    for (std::size_t i = 0; i < s.stray.fx.size(); ++i)
        max_stray = std::max(max_stray, std::hypot(s.stray.fx[i], s.stray.fy[i]));
    // |A + S| - |A| can reach at most |S|; it does so where A is small against S.
    CHECK(z.max_abs > 0.9 * max_stray);
}

TEST_CASE("compensation cancels the charge field and never makes things worse") {
    const auto& b = device().window;
    const VectorGrid stray = charge_field(b, kCharges);
    Mask region(b.spec.size(), 1);
    for (int iy = 0; iy < b.spec.ny; ++iy)
        for (int ix = 0; ix < b.spec.nx; ++ix)
            if (std::abs(b.spec.x(ix)) <= 300.0 && b.spec.y(iy) >= 500.0) region[b.spec.index(ix, iy)] = 0;
    const auto c = compensate(stray, b, region);
    CHECK(c.max_residual <= c.max_uncompensated);
    double before = 0.0, after = 0.0;
    for (std::size_t i = 0; i < region.size(); ++i) {
        if (region[i]) continue;
        before += stray.fx[i] * stray.fx[i] + stray.fy[i] * stray.fy[i];
        after += c.residual.fx[i] * c.residual.fx[i] + c.residual.fy[i] * c.residual.fy[i];
    }
    CHECK(after <= before);
    CHECK(c.reduction > 1.0);

    const auto none = compensate(VectorGrid(b.spec), b, region);
    CHECK(std::abs(none.pots.v_c) < 1e-12);
    CHECK(std::abs(none.pots.v_l) < 1e-12);
    CHECK(std::abs(none.pots.v_r) < 1e-12);
    CHECK(std::abs(none.pots.v_s) < 1e-12);

    Mask one(b.spec.size(), 1);
    const auto pix = b.spec.index(b.spec.nx / 2 + 3, b.spec.ny / 2);
    one[pix] = 0;
    VoltageBounds wide;
    wide.lo.fill(-1e6);
    wide.hi.fill(1e6);
    const auto single = compensate(stray, b, one, wide);
    CHECK(std::hypot(single.residual.fx[pix], single.residual.fy[pix]) <
          1e-9 * std::hypot(stray.fx[pix], stray.fy[pix]));

    Mask empty(b.spec.size(), 1);
    CHECK_THROWS_AS(compensate(stray, b, empty), ConfigError);
}

TEST_CASE("bounded compensation beats a brute-force scan of feasible potentials") {
    const auto& b = device().window;
    const VectorGrid stray = charge_field(b, kCharges);
    Mask region(b.spec.size(), 1);
    for (int iy = 0; iy < b.spec.ny; ++iy)
        for (int ix = 0; ix < b.spec.nx; ++ix)
            if (std::abs(b.spec.x(ix)) <= 300.0 && b.spec.y(iy) >= 500.0) region[b.spec.index(ix, iy)] = 0;
    VoltageBounds vb;
    vb.lo = {-0.5, -0.5, -0.5, -0.5};
    vb.hi = {0.5, 0.5, 0.5, 0.5};
    const auto c = compensate(stray, b, region, vb);
    const double v[4] = {c.pots.v_c, c.pots.v_l, c.pots.v_r, c.pots.v_s};
    for (int e = 0; e < 4; ++e) {
        CHECK(v[e] >= vb.lo[e]);
        CHECK(v[e] <= vb.hi[e]);
    }
    // Quadratic objective assembled independently: sum |sum_e V_e B_e + S|^2.
    Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();
    Eigen::Vector4d g = Eigen::Vector4d::Zero();
    double c0 = 0.0;
    for (std::size_t i = 0; i < region.size(); ++i) {
        if (region[i]) continue;
        Eigen::Vector4d bx, by;
        for (int e = 0; e < 4; ++e) {
            bx(e) = b.electrode[e].fx[i];
            by(e) = b.electrode[e].fy[i];
        }
        Q += bx * bx.transpose() + by * by.transpose();
        g += bx * stray.fx[i] + by * stray.fy[i];
        c0 += stray.fx[i] * stray.fx[i] + stray.fy[i] * stray.fy[i];
    }
    auto obj = [&](const Eigen::Vector4d& x) { return x.dot(Q * x) + 2 * g.dot(x) + c0; };
    const double solved = obj(Eigen::Vector4d(v[0], v[1], v[2], v[3]));
    double scan = HUGE_VAL;
    const int n = 20;
    for (int a = 0; a <= n; ++a)
        for (int bb = 0; bb <= n; ++bb)
            for (int cc = 0; cc <= n; ++cc)
                for (int d = 0; d <= n; ++d) {
                    const Eigen::Vector4d x(-0.5 + a * 1.0 / n, -0.5 + bb * 1.0 / n, -0.5 + cc * 1.0 / n,
                                            -0.5 + d * 1.0 / n);
                    scan = std::min(scan, obj(x));
                }
    CHECK(solved <= scan * (1 + 1e-12));
}
