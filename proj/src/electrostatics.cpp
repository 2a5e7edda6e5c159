#include "starkmap/electrostatics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <thread>

#include "starkmap/error.hpp"
#include "starkmap/parallel.hpp"

namespace starkmap {

namespace {

constexpr double kEpsilon0 = 8.8541878128e-12;  // F/m
constexpr double kUmPerCm = 1e4;
// Charge bases are solved at 1 uC/m^2 (potentials of order volts, where the
// absolute tolerance is meaningful) and rescaled to 1 C/m^2.
constexpr double kReferenceSigma = 1e-6;

}  // namespace

std::string_view electrode_name(Electrode e) noexcept {
    switch (e) {
        case Electrode::Center: return "center";
        case Electrode::LeftGround: return "left";
        case Electrode::RightGround: return "right";
        case Electrode::Shield: return "shield";
    }
    return "?";
}

std::string_view species_name(ChargeSpecies s) noexcept { return s == ChargeSpecies::Gap ? "gap" : "surface"; }

double PotentialSet::of(Electrode e) const noexcept {
    switch (e) {
        case Electrode::Center: return v_c;
        case Electrode::LeftGround: return v_l;
        case Electrode::RightGround: return v_r;
        case Electrode::Shield: return v_s;
    }
    return 0.0;
}

double& PotentialSet::of(Electrode e) noexcept {
    switch (e) {
        case Electrode::Center: return v_c;
        case Electrode::LeftGround: return v_l;
        case Electrode::RightGround: return v_r;
        case Electrode::Shield: break;
    }
    return v_s;
}

DeviceGeometry DeviceGeometry::cpw(double center_width, double gap_width, std::optional<double> ground_extent,
                                   double shield_width, double shield_height) {
    DeviceGeometry g;
    g.center_width = center_width;
    g.gap_width = gap_width;
    g.shield_width = shield_width;
    g.shield_height = shield_height;
    const double c = 0.5 * center_width;
    const double e = c + gap_width;
    const double outer = ground_extent ? std::min(e + *ground_extent, 0.5 * shield_width) : 0.5 * shield_width;
    g.conductors = {{-outer, -e, Electrode::LeftGround}, {-c, c, Electrode::Center}, {e, outer, Electrode::RightGround}};
    g.strips = {{-outer, -e, ChargeSpecies::Surface},
                {-e, -c, ChargeSpecies::Gap},
                {-c, c, ChargeSpecies::Surface},
                {c, e, ChargeSpecies::Gap},
                {e, outer, ChargeSpecies::Surface}};
    g.validate();
    return g;
}

void DeviceGeometry::validate() const {
    if (!(shield_width > 0.0) || !(shield_height > 0.0)) throw ConfigError("shield box must have positive size");
    if (!(sheet_height > 0.0) || !(sheet_height < shield_height))
        throw ConfigError("charge sheet height must lie inside the box");
    const double half = 0.5 * shield_width;
    auto check = [&](double b, double e, const char* what) {
        if (!(e > b)) throw ConfigError(std::string(what) + " segment has non-positive width");
        if (b < -half - 1e-9 || e > half + 1e-9) throw ConfigError(std::string(what) + " segment leaves the shield box");
    };
    auto sorted_conductors = conductors;
    std::sort(sorted_conductors.begin(), sorted_conductors.end(),
              [](const auto& a, const auto& b) { return a.x_begin < b.x_begin; });
    for (std::size_t i = 0; i < sorted_conductors.size(); ++i) {
        check(sorted_conductors[i].x_begin, sorted_conductors[i].x_end, "conductor");
        if (sorted_conductors[i].electrode == Electrode::Shield)
            throw ConfigError("the shield is the box frame, not a chip conductor");
        if (i > 0 && !(sorted_conductors[i].x_begin > sorted_conductors[i - 1].x_end))
            throw ConfigError("chip conductors overlap or touch");
    }
    auto sorted_strips = strips;
    std::sort(sorted_strips.begin(), sorted_strips.end(),
              [](const auto& a, const auto& b) { return a.x_begin < b.x_begin; });
    for (std::size_t i = 0; i < sorted_strips.size(); ++i) {
        check(sorted_strips[i].x_begin, sorted_strips[i].x_end, "charge strip");
        if (i > 0 && sorted_strips[i].x_begin < sorted_strips[i - 1].x_end - 1e-9)
            throw ConfigError("charge strips overlap");
    }
}

std::string DeviceGeometry::canonical() const {
    std::ostringstream os;
    os.precision(17);
    os << "box " << shield_width << ' ' << shield_height << " walls "
       << (side_walls == SideWalls::Shield ? "shield" : "open") << " sheet " << sheet_height;
    for (const auto& c : conductors) os << " c " << electrode_name(c.electrode) << ' ' << c.x_begin << ' ' << c.x_end;
    for (const auto& s : strips) os << " q " << species_name(s.species) << ' ' << s.x_begin << ' ' << s.x_end;
    return os.str();
}

GridSpec solver_grid(const DeviceGeometry& geom, double dx, double dy) {
    geom.validate();
    return GridSpec::centered_box(geom.shield_width, geom.shield_height, dx, dy);
}

// -- discrete problem ---------------------------------------------------------

namespace {

struct Stencil {
    // Free nodes in sweep order with mirrored neighbor indices.
    std::vector<std::size_t> node, east, west, north, south;
    std::vector<double> source;  // rho/eps0 in V/um^2
    double wx = 0.0, wy = 0.0, inv_diag = 0.0;
};

void check_domain(const DeviceGeometry& geom, const GridSpec& spec) {
    spec.validate();
    geom.validate();
    const double width = (spec.nx - 1) * spec.dx;
    const double height = (spec.ny - 1) * spec.dy;
    const double mid = spec.x0 + 0.5 * width;
    if (std::abs(width - geom.shield_width) > spec.dx || std::abs(height - geom.shield_height) > spec.dy ||
        std::abs(mid) > 0.5 * spec.dx || std::abs(spec.y0) > 1e-9)
        throw ConfigError("grid " + describe(spec) + " does not span the shield box");
    if (spec.nx < 3 || spec.ny < 3) throw ConfigError("solver grid needs at least 3x3 nodes");
}

/// Potential at each node (NaN on free nodes) from the boundary conditions.
std::vector<double> dirichlet_values(const DeviceGeometry& geom, const PotentialSet& pots, const GridSpec& spec) {
    std::vector<double> fixed(spec.size(), std::nan(""));
    for (int ix = 0; ix < spec.nx; ++ix) fixed[spec.index(ix, spec.ny - 1)] = pots.v_s;
    if (geom.side_walls == SideWalls::Shield)
        for (int iy = 0; iy < spec.ny; ++iy) {
            fixed[spec.index(0, iy)] = pots.v_s;
            fixed[spec.index(spec.nx - 1, iy)] = pots.v_s;
        }
    const double eps = 1e-9 * spec.dx;
    for (int ix = 0; ix < spec.nx; ++ix) {
        const auto i = spec.index(ix, 0);
        if (!std::isnan(fixed[i])) continue;
        const double x = spec.x(ix);
        for (const auto& c : geom.conductors)
            if (x >= c.x_begin - eps && x <= c.x_end + eps) fixed[i] = pots.of(c.electrode);
    }
    return fixed;
}

/// Charge weight of each species at the node above-chip column `ix`; a node
/// on a shared strip boundary counts half for each side.
double strip_sigma(const DeviceGeometry& geom, const ChargeDensities& q, double x, double dx) {
    const double eps = 1e-9 * dx;
    double s = 0.0;
    for (const auto& st : geom.strips) {
        if (x > st.x_begin + eps && x < st.x_end - eps)
            s += q.of(st.species);
        else if (std::abs(x - st.x_begin) <= eps || std::abs(x - st.x_end) <= eps)
            s += 0.5 * q.of(st.species);
    }
    return s;
}

Stencil build_stencil(const DeviceGeometry& geom, const ChargeDensities& q, const GridSpec& spec,
                      const std::vector<double>& fixed) {
    Stencil st;
    st.wx = 1.0 / (spec.dx * spec.dx);
    st.wy = 1.0 / (spec.dy * spec.dy);
    st.inv_diag = 1.0 / (2.0 * st.wx + 2.0 * st.wy);
    const double sheet = 1e-6 / (kEpsilon0 * spec.dy);  // (V/um^2) per (C/m^2)
    const double rows = geom.sheet_height / spec.dy;
    const int lower = static_cast<int>(std::floor(rows + 1e-9));
    const double upper_weight = std::max(0.0, rows - lower);
    auto row_weight = [&](int iy) {
        // Row 0 free nodes carry half a cell, hence the doubled source.
        const double w = iy == lower ? 1.0 - upper_weight : (iy == lower + 1 ? upper_weight : 0.0);
        return iy == 0 ? 2.0 * w : w;
    };
    for (int iy = 0; iy < spec.ny; ++iy)
        for (int ix = 0; ix < spec.nx; ++ix) {
            const auto i = spec.index(ix, iy);
            if (!std::isnan(fixed[i])) continue;
            // Missing neighbors on open walls and the bare chip mirror the interior one.
            const int ex = ix + 1 < spec.nx ? ix + 1 : ix - 1;
            const int wx = ix > 0 ? ix - 1 : ix + 1;
            const int sy = iy > 0 ? iy - 1 : iy + 1;
            st.node.push_back(i);
            st.east.push_back(spec.index(ex, iy));
            st.west.push_back(spec.index(wx, iy));
            st.north.push_back(spec.index(ix, iy + 1));
            st.south.push_back(spec.index(ix, sy));
            const double w = row_weight(iy);
            st.source.push_back(w != 0.0 ? w * sheet * strip_sigma(geom, q, spec.x(ix), spec.dx) : 0.0);
        }
    return st;
}

inline double target(const Stencil& st, const std::vector<double>& phi, std::size_t k) {
    return (st.wx * (phi[st.east[k]] + phi[st.west[k]]) + st.wy * (phi[st.north[k]] + phi[st.south[k]]) +
            st.source[k]) *
           st.inv_diag;
}

double max_residual(const Stencil& st, const std::vector<double>& phi) {
    double r = 0.0;
    for (std::size_t k = 0; k < st.node.size(); ++k) r = std::max(r, std::abs(target(st, phi, k) - phi[st.node[k]]));
    return r;
}

}  // namespace

ScalarGrid solve_potential(const DeviceGeometry& geom, const PotentialSet& pots, const ChargeDensities& q,
                           const GridSpec& spec, const SolverOptions& opts, SolveReport* report) {
    check_domain(geom, spec);
    if (!(opts.tol > 0.0)) throw ConfigError("solver tolerance must be > 0");
    if (!(opts.omega < 2.0)) throw ConfigError("SOR omega must be < 2 (<= 0 for automatic)");
    const double omega = opts.omega > 0.0 ? opts.omega : optimal_omega(spec);
    for (double v : {pots.v_c, pots.v_l, pots.v_r, pots.v_s, q.sigma_g, q.sigma_s})
        if (!std::isfinite(v)) throw ConfigError("potentials and charge densities must be finite");

    const auto fixed = dirichlet_values(geom, pots, spec);
    const Stencil st = build_stencil(geom, q, spec, fixed);

    ScalarGrid phi(spec, Unit::Volt);
    for (std::size_t i = 0; i < fixed.size(); ++i)
        if (!std::isnan(fixed[i])) phi.values[i] = fixed[i];
    auto& v = phi.values;

    std::vector<double> history;
    long it = 0;
    double res = HUGE_VAL;
    while (true) {
        double sweep_max = 0.0;
        for (std::size_t k = 0; k < st.node.size(); ++k) {
            const std::size_t i = st.node[k];
            const double r = target(st, v, k) - v[i];
            sweep_max = std::max(sweep_max, std::abs(r));
            v[i] += omega * r;
        }
        ++it;
        if (it % 100 == 0) history.push_back(sweep_max);
        if (sweep_max < opts.tol) {
            res = max_residual(st, v);
            if (res < opts.tol) break;
        }
        if (it >= opts.max_iter) {
            history.push_back(sweep_max);
            throw ConvergenceError("SOR did not reach tol " + format_double(opts.tol) + " V in " +
                                       std::to_string(opts.max_iter) + " sweeps (residual " +
                                       format_double(sweep_max) + " V)",
                                   std::move(history));
        }
    }
    if (report) {
        report->iterations = it;
        report->residual = res;
        report->history = std::move(history);
    }
    return phi;
}

double poisson_residual(const DeviceGeometry& geom, const PotentialSet& pots, const ChargeDensities& q,
                        const ScalarGrid& phi) {
    check_domain(geom, phi.spec);
    const auto fixed = dirichlet_values(geom, pots, phi.spec);
    double worst = 0.0;
    for (std::size_t i = 0; i < fixed.size(); ++i)
        if (!std::isnan(fixed[i])) worst = std::max(worst, std::abs(phi.values[i] - fixed[i]));
    return std::max(worst, max_residual(build_stencil(geom, q, phi.spec, fixed), phi.values));
}

VectorGrid field_from_potential(const ScalarGrid& phi) {
    const GridSpec& s = phi.spec;
    s.validate();
    VectorGrid f(s);
    f.mask = phi.mask;
    auto d = [](const std::vector<double>& v, auto idx, int i, int n, double h) {
        if (n == 2) return (v[idx(1)] - v[idx(0)]) / h;
        if (i == 0) return (-3.0 * v[idx(0)] + 4.0 * v[idx(1)] - v[idx(2)]) / (2.0 * h);
        if (i == n - 1) return (3.0 * v[idx(n - 1)] - 4.0 * v[idx(n - 2)] + v[idx(n - 3)]) / (2.0 * h);
        return (v[idx(i + 1)] - v[idx(i - 1)]) / (2.0 * h);
    };
    for (int iy = 0; iy < s.ny; ++iy)
        for (int ix = 0; ix < s.nx; ++ix) {
            const auto i = s.index(ix, iy);
            const double gx = d(phi.values, [&](int k) { return s.index(k, iy); }, ix, s.nx, s.dx);
            const double gy = d(phi.values, [&](int k) { return s.index(ix, k); }, iy, s.ny, s.dy);
            f.fx[i] = -gx * kUmPerCm;
            f.fy[i] = -gy * kUmPerCm;
        }
    return f;
}

// -- basis ----------------------------------------------------------------------

std::uint64_t fnv1a(std::string_view s, std::uint64_t h) noexcept {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t geometry_hash(const DeviceGeometry& geom, const GridSpec& spec, const SolverOptions& opts) {
    std::ostringstream os;
    os.precision(17);
    os << geom.canonical() << " | grid " << spec.nx << ' ' << spec.ny << ' ' << spec.dx << ' ' << spec.dy << ' '
       << spec.x0 << ' ' << spec.y0 << " | sor " << opts.omega << ' ' << opts.tol << ' ' << opts.max_iter;
    return fnv1a(os.str());
}

BasisFields compute_basis(const DeviceGeometry& geom, const GridSpec& spec, const SolverOptions& opts,
                          unsigned threads) {
    check_domain(geom, spec);
    BasisFields b;
    b.spec = spec;
    b.geometry_hash = geometry_hash(geom, spec, opts);
    parallel_for(6, threads, [&](std::size_t job) {
        PotentialSet pots;
        ChargeDensities q;
        if (job < 4) {
            pots.of(kElectrodes[job]) = 1.0;
            b.electrode[job] = field_from_potential(solve_potential(geom, pots, q, spec, opts));
        } else {
            const auto species = kSpecies[job - 4];
            (species == ChargeSpecies::Gap ? q.sigma_g : q.sigma_s) = kReferenceSigma;
            VectorGrid f = field_from_potential(solve_potential(geom, pots, q, spec, opts));
            for (auto& v : f.fx) v /= kReferenceSigma;
            for (auto& v : f.fy) v /= kReferenceSigma;
            b.charge[job - 4] = std::move(f);
        }
    });
    return b;
}

BasisFields crop(const BasisFields& b, const Window& w) {
    BasisFields out;
    out.spec = crop(b.spec, w);
    out.geometry_hash = b.geometry_hash;
    for (int k = 0; k < 4; ++k) out.electrode[k] = crop(b.electrode[k], w);
    for (int k = 0; k < 2; ++k) out.charge[k] = crop(b.charge[k], w);
    return out;
}

VectorGrid superpose(const BasisFields& basis, const PotentialSet& pots, const ChargeDensities& q) {
    VectorGrid out(basis.spec);
    auto add = [&](const VectorGrid& g, double c) {
        if (c == 0.0) return;
        for (std::size_t i = 0; i < out.fx.size(); ++i) {
            out.fx[i] += c * g.fx[i];
            out.fy[i] += c * g.fy[i];
        }
    };
    for (auto e : kElectrodes) add(basis.of(e), pots.of(e));
    for (auto s : kSpecies) add(basis.of(s), q.of(s));
    return out;
}

namespace {

double jacobi_radius(const GridSpec& spec) {
    const double wx = 1.0 / (spec.dx * spec.dx), wy = 1.0 / (spec.dy * spec.dy);
    return (wx * std::cos(std::numbers::pi / (spec.nx - 1)) + wy * std::cos(std::numbers::pi / (spec.ny - 1))) /
           (wx + wy);
}

}  // namespace

double optimal_omega(const GridSpec& spec) {
    const double rho = jacobi_radius(spec);
    return 2.0 / (1.0 + std::sqrt(1.0 - rho * rho));
}

double tolerance_field(const GridSpec& spec, const SolverOptions& opts) {
    return opts.tol / (1.0 - jacobi_radius(spec)) / std::min(spec.dx, spec.dy) * kUmPerCm;
}

}  // namespace starkmap
