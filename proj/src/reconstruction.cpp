#include "starkmap/reconstruction.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "starkmap/error.hpp"
#include "starkmap/lsq.hpp"
#include "starkmap/parallel.hpp"
#include "starkmap/rng.hpp"
#include "starkmap/stark.hpp"

namespace starkmap {

namespace {

double sum_sq(std::span<const PixelSample> s, double sx, double sy) {
    double acc = 0.0;
    for (const auto& p : s) {
        const double d = std::hypot(p.fx + sx, p.fy + sy) - p.m;
        acc += d * d;
    }
    return acc;
}

/// Least squares via SVD; returns the condition number.
double svd_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, Eigen::VectorXd& x) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    x = svd.solve(b);
    return smin > 0.0 ? sv(0) / smin : HUGE_VAL;
}

}  // namespace

double pixel_residual(std::span<const PixelSample> s, double sx, double sy) {
    if (s.empty()) return 0.0;
    return std::sqrt(sum_sq(s, sx, sy) / static_cast<double>(s.size()));
}

PixelSolution reconstruct_pixel_closed(std::span<const PixelSample> s, double max_condition) {
    PixelSolution out;
    if (s.size() < 3) return out;
    const auto rows = static_cast<Eigen::Index>(s.size() - 1);
    Eigen::MatrixXd A(rows, 2);
    Eigen::VectorXd b(rows);
    const auto& r = s[0];
    const double n0 = r.fx * r.fx + r.fy * r.fy;
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& p = s[static_cast<std::size_t>(i) + 1];
        A(i, 0) = 2.0 * (r.fx - p.fx);
        A(i, 1) = 2.0 * (r.fy - p.fy);
        b(i) = r.m * r.m - p.m * p.m - n0 + (p.fx * p.fx + p.fy * p.fy);
    }
    Eigen::VectorXd x;
    out.condition = svd_solve(A, b, x);
    if (!(out.condition < max_condition) || !x.allFinite()) return out;
    out.fx = x(0);
    out.fy = x(1);
    out.residual = pixel_residual(s, out.fx, out.fy);
    out.ok = true;
    return out;
}

PixelSolution reconstruct_point_3d(std::span<const PixelSample3> s, double max_condition) {
    PixelSolution out;
    if (s.size() < 4) return out;
    const auto rows = static_cast<Eigen::Index>(s.size() - 1);
    Eigen::MatrixXd A(rows, 3);
    Eigen::VectorXd b(rows);
    const auto& r = s[0];
    const double n0 = r.fx * r.fx + r.fy * r.fy + r.fz * r.fz;
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& p = s[static_cast<std::size_t>(i) + 1];
        A(i, 0) = 2.0 * (r.fx - p.fx);
        A(i, 1) = 2.0 * (r.fy - p.fy);
        A(i, 2) = 2.0 * (r.fz - p.fz);
        b(i) = r.m * r.m - p.m * p.m - n0 + (p.fx * p.fx + p.fy * p.fy + p.fz * p.fz);
    }
    Eigen::VectorXd x;
    out.condition = svd_solve(A, b, x);
    if (!(out.condition < max_condition) || !x.allFinite()) return out;
    out.fx = x(0);
    out.fy = x(1);
    out.fz = x(2);
    double acc = 0.0;
    for (const auto& p : s) {
        const double d = std::sqrt(std::pow(p.fx + x(0), 2) + std::pow(p.fy + x(1), 2) + std::pow(p.fz + x(2), 2)) - p.m;
        acc += d * d;
    }
    out.residual = std::sqrt(acc / static_cast<double>(s.size()));
    out.ok = true;
    return out;
}

SearchBox auto_bounds(std::span<const PixelSample> s, double margin) {
    if (s.empty()) throw ConfigError("auto_bounds needs at least one sample");
    SearchBox in{-HUGE_VAL, HUGE_VAL, -HUGE_VAL, HUGE_VAL}, un{HUGE_VAL, -HUGE_VAL, HUGE_VAL, -HUGE_VAL};
    for (const auto& p : s) {
        const double m = std::abs(p.m);
        in.x_lo = std::max(in.x_lo, -p.fx - m);
        in.x_hi = std::min(in.x_hi, -p.fx + m);
        in.y_lo = std::max(in.y_lo, -p.fy - m);
        in.y_hi = std::min(in.y_hi, -p.fy + m);
        un.x_lo = std::min(un.x_lo, -p.fx - m);
        un.x_hi = std::max(un.x_hi, -p.fx + m);
        un.y_lo = std::min(un.y_lo, -p.fy - m);
        un.y_hi = std::max(un.y_hi, -p.fy + m);
    }
    if (in.x_lo > in.x_hi) {
        in.x_lo = un.x_lo;
        in.x_hi = un.x_hi;
    }
    if (in.y_lo > in.y_hi) {
        in.y_lo = un.y_lo;
        in.y_hi = un.y_hi;
    }
    return {in.x_lo - margin, in.x_hi + margin, in.y_lo - margin, in.y_hi + margin};
}

PixelSolution reconstruct_pixel_search(std::span<const PixelSample> s, const SearchBox& box, const SearchOptions& opt,
                                       std::uint64_t seed) {
    if (!(box.x_hi > box.x_lo) || !(box.y_hi > box.y_lo)) throw ConfigError("search bounds must have positive size");
    if (opt.budget < 2 || opt.window < 1 || !(opt.step_factor > 1.0) || opt.starts < 1)
        throw ConfigError("invalid search options");
    PixelSolution out;
    if (s.empty()) return out;
    std::mt19937_64 eng(seed);
    const double wx = box.x_hi - box.x_lo, wy = box.y_hi - box.y_lo;

    struct Point {
        double f, x, y;
    };
    std::vector<Point> pts{{sum_sq(s, box.x_lo + 0.5 * wx, box.y_lo + 0.5 * wy), box.x_lo + 0.5 * wx,
                            box.y_lo + 0.5 * wy}};
    const int explore = std::clamp(static_cast<int>(opt.explore * opt.budget), 0, opt.budget - 1);
    for (int k = 0; k < explore; ++k) {
        const double x = box.x_lo + wx * uniform01(eng), y = box.y_lo + wy * uniform01(eng);
        pts.push_back({sum_sq(s, x, y), x, y});
    }
    // Local starts: the best exploration points, mutually a quarter box apart.
    std::stable_sort(pts.begin(), pts.end(), [](const Point& l, const Point& r) { return l.f < r.f; });
    std::vector<Point> starts;
    for (const auto& p : pts) {
        if (static_cast<int>(starts.size()) == opt.starts) break;
        bool distinct = true;
        for (const auto& q : starts)
            if (std::abs(p.x - q.x) < 0.25 * wx && std::abs(p.y - q.y) < 0.25 * wy) distinct = false;
        if (distinct) starts.push_back(p);
    }

    // Each start gets a short screening run; the winner keeps its radius and
    // spends the rest of the budget.
    // Isotropic steps: the residual has no preferred axis, the box may.
    const double r_max = 0.5 * std::max(wx, wy);
    struct Run {
        Point p;
        double r;
        int successes = 0, tried = 0;
        double dx = 0.0, dy = 0.0;
    };
    // After an accepted random step the same displacement is retried, doubling
    // while it keeps improving, so runs can follow narrow valleys.
    auto advance = [&](Run& run, int evals) {
        for (int e = 0; e < evals; ++e) {
            const bool pattern = run.dx != 0.0 || run.dy != 0.0;
            const double x = std::clamp(pattern ? run.p.x + run.dx : run.p.x + run.r * (2.0 * uniform01(eng) - 1.0),
                                        box.x_lo, box.x_hi);
            const double y = std::clamp(pattern ? run.p.y + run.dy : run.p.y + run.r * (2.0 * uniform01(eng) - 1.0),
                                        box.y_lo, box.y_hi);
            const double f = sum_sq(s, x, y);
            if (f < run.p.f) {
                run.dx = pattern ? 2.0 * (x - run.p.x) : x - run.p.x;
                run.dy = pattern ? 2.0 * (y - run.p.y) : y - run.p.y;
                run.p = {f, x, y};
                ++run.successes;
            } else {
                run.dx = run.dy = 0.0;
            }
            if (pattern) continue;
            if (++run.tried == opt.window) {
                const double k = run.successes * 5 > run.tried ? opt.step_factor : 1.0 / opt.step_factor;
                run.r = std::min(run.r * k, r_max);
                run.successes = run.tried = 0;
            }
        }
    };
    int remaining = opt.budget - 1 - explore;
    const int screen = starts.size() > 1 ? remaining / (2 * static_cast<int>(starts.size())) : 0;
    std::vector<Run> runs;
    for (const auto& p : starts) {
        runs.push_back({p, 0.5 * r_max, 0, 0, 0.0, 0.0});
        advance(runs.back(), screen);
        remaining -= screen;
    }
    Run& lead = *std::min_element(runs.begin(), runs.end(), [](const Run& l, const Run& r) { return l.p.f < r.p.f; });
    advance(lead, remaining);
    const Point best = lead.p;
    out.fx = best.x;
    out.fy = best.y;
    out.residual = std::sqrt(best.f / static_cast<double>(s.size()));
    const double ex = 1e-6 * wx, ey = 1e-6 * wy;
    out.at_boundary = best.x - box.x_lo < ex || box.x_hi - best.x < ex || best.y - box.y_lo < ey || box.y_hi - best.y < ey;
    out.ok = !out.at_boundary;
    return out;
}

std::string_view method_name(ReconMethod m) noexcept {
    return m == ReconMethod::ClosedForm ? "closed-form" : "random-search";
}

ReconMethod parse_method(std::string_view s) {
    if (s == "closed-form" || s == "closed_form") return ReconMethod::ClosedForm;
    if (s == "random-search" || s == "random_search") return ReconMethod::RandomSearch;
    throw ConfigError("unknown reconstruction method '" + std::string(s) + "' (closed-form, random-search)");
}

StrayFieldResult reconstruct_stray(const std::vector<Measurement>& meas, double fz, const ReconOptions& opt,
                                   unsigned threads) {
    if (meas.size() < 3) throw ConfigError("stray reconstruction needs at least 3 measurements");
    const GridSpec spec = meas.front().applied.spec;
    for (std::size_t a = 0; a < meas.size(); ++a) {
        const auto& m = meas[a];
        if (!(m.applied.spec == spec) || !(m.magnitude.spec == spec))
            throw ConfigError("measurement '" + m.label + "' is not on the shared grid " + describe(spec));
        for (std::size_t b = 0; b < a; ++b)
            if (meas[b].label == m.label) throw ConfigError("duplicate measurement label '" + m.label + "'");
    }
    StrayFieldResult out{VectorGrid(spec), fz, ScalarGrid(spec, Unit::VPerCm), ScalarGrid(spec, Unit::Dimensionless),
                         opt.method, opt.seed, 0, 0};
    std::vector<std::uint8_t> ill(spec.size(), 0), edge(spec.size(), 0);
    parallel_for(static_cast<std::size_t>(spec.ny), threads, [&](std::size_t row) {
        const int iy = static_cast<int>(row);
        std::vector<PixelSample> samples;
        for (int ix = 0; ix < spec.nx; ++ix) {
            const auto i = spec.index(ix, iy);
            samples.clear();
            for (const auto& m : meas)
                if (!m.applied.mask[i] && !m.magnitude.mask[i])
                    samples.push_back({m.applied.fx[i], m.applied.fy[i], m.magnitude.values[i]});
            PixelSolution sol;
            if (samples.size() >= 3) {
                if (opt.method == ReconMethod::ClosedForm) {
                    sol = reconstruct_pixel_closed(samples, opt.max_condition);
                    if (!sol.ok) ill[i] = 1;
                } else {
                    const SearchBox box = opt.bounds ? *opt.bounds : auto_bounds(samples, opt.search.margin);
                    sol = reconstruct_pixel_search(samples, box, opt.search, pixel_seed(opt.seed, ix, iy));
                    if (sol.at_boundary) edge[i] = 1;
                }
            }
            if (!sol.ok) {
                out.stray.mask[i] = out.residual.mask[i] = out.condition.mask[i] = 1;
                continue;
            }
            out.stray.fx[i] = sol.fx;
            out.stray.fy[i] = sol.fy;
            out.residual.values[i] = sol.residual;
            out.condition.values[i] = sol.condition;
        }
    });
    for (std::size_t i = 0; i < spec.size(); ++i) {
        out.ill_conditioned += ill[i];
        out.at_boundary += edge[i];
    }
    return out;
}

double estimate_fz(const ScalarGrid& shift_map) {
    if (shift_map.unit != Unit::MHz) throw ConfigError("estimate_fz expects a shift map in MHz");
    double lo = HUGE_VAL;
    for (std::size_t i = 0; i < shift_map.values.size(); ++i)
        if (!shift_map.mask[i]) lo = std::min(lo, shift_map.values[i]);
    if (!std::isfinite(lo)) throw DomainError("cannot estimate fz: every shift pixel is masked");
    return field_magnitude_from_shift(std::max(0.0, lo));
}

VectorGrid neighbor_average(const VectorGrid& g) {
    VectorGrid out(g.spec);
    out.mask = g.mask;
    for (int iy = 0; iy < g.spec.ny; ++iy)
        for (int ix = 0; ix < g.spec.nx; ++ix) {
            const auto i = g.spec.index(ix, iy);
            if (g.mask[i]) continue;
            double sx = 0.0, sy = 0.0;
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (!g.spec.contains(ix + dx, iy + dy)) continue;
                    const auto j = g.spec.index(ix + dx, iy + dy);
                    if (g.mask[j]) continue;
                    sx += g.fx[j];
                    sy += g.fy[j];
                    ++n;
                }
            out.fx[i] = sx / n;
            out.fy[i] = sy / n;
        }
    return out;
}

ChargeFit fit_charge_densities(const ScalarGrid& magnitude, const PotentialSet& pots, const BasisFields& basis,
                               double fz) {
    if (!(magnitude.spec == basis.spec)) throw ConfigError("magnitude map and basis are on different grids");
    if (magnitude.unit != Unit::VPerCm) throw ConfigError("charge fit expects a field magnitude map in V/cm");
    const VectorGrid applied = superpose(basis, pots);
    const VectorGrid& g = basis.of(ChargeSpecies::Gap);
    const VectorGrid& h = basis.of(ChargeSpecies::Surface);
    std::vector<std::size_t> px;
    for (std::size_t i = 0; i < magnitude.values.size(); ++i)
        if (!magnitude.mask[i] && !applied.mask[i] && !g.mask[i] && !h.mask[i]) px.push_back(i);
    if (px.size() < 3) throw ConfigError("charge fit needs at least 3 unmasked pixels");

    constexpr double kScale = 1e-6;  // parameters in uC/m^2
    const double fz2 = fz * fz;
    auto model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
        for (std::size_t k = 0; k < px.size(); ++k) {
            const auto i = px[k];
            const double vx = applied.fx[i] + kScale * (p(0) * g.fx[i] + p(1) * h.fx[i]);
            const double vy = applied.fy[i] + kScale * (p(0) * g.fy[i] + p(1) * h.fy[i]);
            const double n = std::sqrt(vx * vx + vy * vy + fz2);
            const auto row = static_cast<Eigen::Index>(k);
            r(row) = n - magnitude.values[i];
            const double inv = n > 0.0 ? kScale / n : 0.0;
            J(row, 0) = (vx * g.fx[i] + vy * g.fy[i]) * inv;
            J(row, 1) = (vx * h.fx[i] + vy * h.fy[i]) * inv;
        }
    };
    // |A + sigma B| is nearly even in sigma where the charge field dominates,
    // so the zero start can land on the mirrored minimum. Restart from -q and
    // keep the lower cost.
    const auto m = static_cast<int>(px.size());
    LmResult res = levenberg_marquardt(model, Eigen::VectorXd::Zero(2), m);
    if (res.x.norm() > 0.0) {
        LmResult mirrored = levenberg_marquardt(model, Eigen::VectorXd(-res.x), m);
        mirrored.iterations += res.iterations;
        if (mirrored.cost < res.cost) res = std::move(mirrored);
        else res.iterations = mirrored.iterations;
    }
    const Eigen::VectorXd se = standard_errors(res.jacobian, res.residual);
    ChargeFit out;
    out.q = {res.x(0) * kScale, res.x(1) * kScale};
    out.stderr_ = {se(0) * kScale, se(1) * kScale};
    out.iterations = res.iterations;
    out.converged = res.converged;
    out.rms_residual = res.residual.norm() / std::sqrt(static_cast<double>(px.size()));
    out.pixels = px.size();
    return out;
}

Deviation validate_superposition(const StrayFieldResult& stray, const PotentialSet& pots, const BasisFields& basis,
                                 const ScalarGrid& measured) {
    if (!(stray.stray.spec == basis.spec) || !(measured.spec == basis.spec))
        throw ConfigError("stray map, basis and measurement are on different grids");
    const VectorGrid applied = superpose(basis, pots);
    Deviation d{ScalarGrid(basis.spec, Unit::VPerCm), 0.0, 0.0, 0};
    double acc = 0.0;
    for (std::size_t i = 0; i < measured.values.size(); ++i) {
        if (stray.stray.mask[i] || measured.mask[i]) {
            d.deviation.mask[i] = 1;
            continue;
        }
        const double pred = std::hypot(applied.fx[i] + stray.stray.fx[i], applied.fy[i] + stray.stray.fy[i]);
        const double dev = pred - measured.values[i];
        d.deviation.values[i] = dev;
        d.max_abs = std::max(d.max_abs, std::abs(dev));
        acc += dev * dev;
        ++d.pixels;
    }
    if (d.pixels) d.rms = std::sqrt(acc / static_cast<double>(d.pixels));
    return d;
}

Compensation compensate(const VectorGrid& stray, const BasisFields& basis, const Mask& region,
                        const VoltageBounds& bounds, double rcond) {
    if (!(stray.spec == basis.spec) || region.size() != basis.spec.size())
        throw ConfigError("stray map, basis and region are on different grids");
    for (int e = 0; e < 4; ++e)
        if (!(bounds.lo[e] <= bounds.hi[e])) throw ConfigError("voltage bounds must satisfy lo <= hi");
    std::vector<std::size_t> px;
    for (std::size_t i = 0; i < region.size(); ++i)
        if (!region[i] && !stray.mask[i]) px.push_back(i);
    if (px.empty()) throw ConfigError("compensation region is empty");

    const auto rows = static_cast<Eigen::Index>(2 * px.size());
    Eigen::MatrixXd M(rows, 4);
    Eigen::VectorXd rhs(rows);
    for (std::size_t k = 0; k < px.size(); ++k) {
        const auto i = px[k];
        for (int e = 0; e < 4; ++e) {
            M(2 * k, e) = basis.electrode[e].fx[i];
            M(2 * k + 1, e) = basis.electrode[e].fy[i];
        }
        rhs(2 * k) = -stray.fx[i];
        rhs(2 * k + 1) = -stray.fy[i];
    }
    // Equal potentials on every electrode give no field. Removing the
    // numerical remainder of the summed responses makes that direction an
    // exact null space, so the common offset is chosen by norm, not by noise.
    const Eigen::VectorXd common = M.rowwise().mean();
    M.colwise() -= common;

    auto min_norm = [&](const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
        svd.setThreshold(rcond);
        return Eigen::VectorXd(svd.solve(b));
    };

    // Enumerate active sets: state 0 free, 1 at lower bound, 2 at upper bound.
    Eigen::VectorXd best_v = Eigen::VectorXd::Zero(4);
    double best_obj = HUGE_VAL;
    for (int code = 0; code < 81; ++code) {
        std::array<int, 4> state{};
        for (int e = 0, c = code; e < 4; ++e, c /= 3) state[e] = c % 3;
        std::vector<int> free;
        Eigen::VectorXd v = Eigen::VectorXd::Zero(4);
        for (int e = 0; e < 4; ++e) {
            if (state[e] == 0)
                free.push_back(e);
            else
                v(e) = state[e] == 1 ? bounds.lo[e] : bounds.hi[e];
        }
        Eigen::VectorXd b = rhs - M * v;
        if (!free.empty()) {
            Eigen::MatrixXd A(rows, static_cast<Eigen::Index>(free.size()));
            for (std::size_t j = 0; j < free.size(); ++j) A.col(static_cast<Eigen::Index>(j)) = M.col(free[j]);
            const Eigen::VectorXd x = min_norm(A, b);
            bool feasible = true;
            for (std::size_t j = 0; j < free.size(); ++j) {
                const double val = x(static_cast<Eigen::Index>(j));
                const int e = free[j];
                const double tol = 1e-12 * std::max(1.0, std::abs(bounds.hi[e] - bounds.lo[e]));
                if (val < bounds.lo[e] - tol || val > bounds.hi[e] + tol) feasible = false;
                v(e) = std::clamp(val, bounds.lo[e], bounds.hi[e]);
            }
            if (!feasible) continue;
        }
        const double obj = (M * v - rhs).squaredNorm();
        if (obj < best_obj * (1.0 - 1e-12) - 1e-300) {
            best_obj = obj;
            best_v = v;
        }
    }

    // Smallest-norm common offset that keeps every potential inside its bounds.
    double c_lo = -HUGE_VAL, c_hi = HUGE_VAL;
    for (int e = 0; e < 4; ++e) {
        c_lo = std::max(c_lo, bounds.lo[e] - best_v(e));
        c_hi = std::min(c_hi, bounds.hi[e] - best_v(e));
    }
    if (c_lo <= c_hi) best_v.array() += std::clamp(-best_v.mean(), c_lo, c_hi);

    Compensation out;
    out.pots = {"compensation", best_v(0), best_v(1), best_v(2), best_v(3)};
    for (int e = 0; e < 4; ++e) {
        const double tol = 1e-12 * std::max(1.0, std::abs(bounds.hi[e] - bounds.lo[e]));
        out.active[e] = best_v(e) <= bounds.lo[e] + tol ? -1 : (best_v(e) >= bounds.hi[e] - tol ? 1 : 0);
    }
    out.residual = superpose(basis, out.pots);
    out.residual.mask = stray.mask;
    for (std::size_t i = 0; i < stray.fx.size(); ++i) {
        out.residual.fx[i] += stray.fx[i];
        out.residual.fy[i] += stray.fy[i];
    }
    double acc = 0.0;
    for (auto i : px) {
        const double r = std::hypot(out.residual.fx[i], out.residual.fy[i]);
        out.max_residual = std::max(out.max_residual, r);
        out.max_uncompensated = std::max(out.max_uncompensated, std::hypot(stray.fx[i], stray.fy[i]));
        acc += r * r;
    }
    out.rms_residual = std::sqrt(acc / static_cast<double>(px.size()));
    out.reduction = out.max_residual > 0.0 ? out.max_uncompensated / out.max_residual : HUGE_VAL;
    return out;
}

}  // namespace starkmap
