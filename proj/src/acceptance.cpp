#include "starkmap/acceptance.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"
#include "starkmap/error.hpp"
#include "starkmap/microwave.hpp"
#include "starkmap/reconstruction.hpp"
#include "starkmap/spectroscopy.hpp"
#include "starkmap/stark.hpp"
#include "starkmap/textio.hpp"

namespace starkmap {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

struct Check {
    CriterionResult r;
    Check(int id, std::string name) {
        r.id = id;
        r.name = std::move(name);
        r.pass = true;
    }
    /// Records `what = got` against `limit`; fails the criterion when !ok.
    void expect(bool ok, const std::string& what) {
        r.details.push_back(std::string(ok ? "" : "FAILED ") + what);
        r.pass = r.pass && ok;
    }
    void info(const std::string& what) { r.details.push_back("info " + what); }
};

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

/// Scratch run sharing the basis of the main run.
RunContext scratch(const RunContext& ctx, const std::string& name, unsigned threads) {
    RunContext s = ctx;
    s.out = layout::validation(ctx.out) / name;
    s.threads = threads;
    fs::remove_all(s.out);
    fs::create_directories(s.out);
    fs::copy(layout::basis(ctx.out), layout::basis(s.out), fs::copy_options::recursive);
    return s;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// -- 1 ---------------------------------------------------------------------

CriterionResult stark_constants() {
    Check c(1, "Stark shift constants");
    const double shift = stark_shift(0.200);
    const double field = field_magnitude_from_shift(22.0);
    // Direct evaluation of 1/2 * 1078.03 MHz/(V/cm)^2 * F^2 as the oracle.
    const double oracle_shift = 0.5 * 1078.03 * 0.2 * 0.2;
    const double oracle_field = std::sqrt(2.0 * 22.0 / 1078.03);
    c.expect(rel(shift, oracle_shift) < 1e-12, "stark_shift(0.2 V/cm) = " + num(shift) + " MHz, direct " +
                                                   num(oracle_shift));
    c.expect(rel(field, oracle_field) < 1e-12, "field(22 MHz) = " + num(field) + " V/cm, direct " + num(oracle_field));
    c.expect(rel(shift, 21.56) < 0.05, "stark_shift(0.2 V/cm) vs 21.56 MHz: rel " + num(rel(shift, 21.56)) + " < 0.05");
    c.expect(rel(field, 0.202) < 0.05, "field(22 MHz) vs 0.202 V/cm: rel " + num(rel(field, 0.202)) + " < 0.05");
    const double f01 = field_magnitude_from_shift(0.1);
    c.expect(f01 <= 0.016, "field(0.1 MHz) = " + num(1e3 * f01) + " mV/cm <= 16 mV/cm");
    return c.r;
}

// -- 2 ---------------------------------------------------------------------

CriterionResult fourier_limit(const PipelineConfig& cfg, unsigned threads) {
    Check c(2, "Fourier-limited linewidth");
    const double w = fourier_fwhm(200.0);
    c.expect(rel(w, 4.4) < 0.02, "fourier_fwhm(200 ns) = " + num(w) + " MHz vs 4.4: rel " + num(rel(w, 4.4)) + " < 0.02");

    // Homogeneous region: uniform in-plane field, so no inhomogeneous broadening.
    GridSpec spec{24, 24, 23.0, 23.0, 0.0, 0.0};
    VectorGrid f(spec);
    for (auto& v : f.fx) v = 0.1;
    auto det = cfg.spectroscopy.detunings();
    for (double noise : {0.0, 0.02}) {
        SynthOptions so;
        so.depth = cfg.spectroscopy.depth;
        so.noise_sigma = noise;
        so.seed = 77;
        const auto stack = synth_stack(f, cfg.campaign.fz, det, 200.0, so, threads);
        FitOptions fo;
        fo.fwhm0 = w;
        const auto maps = fit_stack(stack, 1, BinMode::Mean, fo, threads);
        std::vector<double> widths;
        double worst = 0.0;
        for (std::size_t i = 0; i < spec.size(); ++i) {
            if (maps.width.mask[i]) continue;
            widths.push_back(maps.width.values[i]);
            worst = std::max(worst, rel(maps.width.values[i], w));
        }
        std::nth_element(widths.begin(), widths.begin() + static_cast<long>(widths.size() / 2), widths.end());
        const double median = widths.empty() ? 0.0 : widths[widths.size() / 2];
        if (noise == 0.0) {
            c.expect(!widths.empty() && worst < 0.10,
                     "noiseless fitted widths: worst rel " + num(worst) + " < 0.10 over " + std::to_string(widths.size()) +
                         " pixels");
        } else {
            c.expect(widths.size() > spec.size() / 2 && rel(median, w) < 0.10,
                     "sigma 0.02 fitted widths: median " + num(median) + " MHz, rel " + num(rel(median, w)) + " < 0.10");
        }
    }
    return c.r;
}

// -- 3 ---------------------------------------------------------------------

CriterionResult spectro_closure(const PipelineConfig& cfg, const BasisFields& b, unsigned threads) {
    Check c(3, "spectroscopy closure");
    const auto& label = cfg.campaign.measurements.front();
    const auto& e = cfg.potentials.at(label);
    // Compensation set of the generating charges, as in the campaign.
    VectorGrid truth = superpose(b, PotentialSet{}, cfg.charges);
    const Mask beam = beam_mask(cfg, b.spec);
    truth.mask = beam;
    PotentialSet pots = e.pots;
    if (e.relative) {
        const auto comp = compensate(truth, b, beam_mask(cfg, b.spec, true), cfg.compensation.bounds,
                                     cfg.compensation.rcond);
        for (auto el : kElectrodes) pots.of(el) += comp.pots.of(el);
    }
    VectorGrid total = superpose(b, pots, cfg.charges);
    total.mask = beam;
    const double fz = cfg.campaign.fz;
    FitOptions fo;
    fo.fwhm0 = fourier_fwhm(cfg.spectroscopy.pulse_ns);
    for (double noise : {0.0, 0.02}) {
        SynthOptions so;
        so.depth = cfg.spectroscopy.depth;
        so.shape = cfg.spectroscopy.shape;
        so.noise_sigma = noise;
        so.seed = 4242;
        const auto stack = synth_stack(total, fz, cfg.spectroscopy.detunings(), cfg.spectroscopy.pulse_ns, so, threads);
        const auto maps = fit_stack(stack, 1, BinMode::Mean, fo, threads);
        double worst = 0.0, ss = 0.0;
        std::size_t n = 0, input = 0;
        for (std::size_t i = 0; i < total.fx.size(); ++i) {
            if (beam[i]) continue;
            ++input;
            if (maps.shift.mask[i]) continue;
            const double want = 0.5 * kStark.delta_alpha * (total.fx[i] * total.fx[i] + total.fy[i] * total.fy[i] + fz * fz);
            const double d = maps.shift.values[i] - want;
            worst = std::max(worst, std::abs(d));
            ss += d * d;
            ++n;
        }
        const double rms = n ? std::sqrt(ss / static_cast<double>(n)) : HUGE_VAL;
        const std::string counts = std::to_string(n) + "/" + std::to_string(input) + " pixels fitted";
        if (noise == 0.0)
            c.expect(n > 0 && worst < 0.05, "noiseless: max |shift error| " + num(worst) + " MHz < 0.05, " + counts);
        else
            c.expect(n > 0 && rms < 0.3, "sigma 0.02: rms shift error " + num(rms) + " MHz < 0.3, " + counts);
    }
    return c.r;
}

// -- 4 ---------------------------------------------------------------------

double condition_of(const Eigen::MatrixXd& a) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    return svd.singularValues()(0) / svd.singularValues()(svd.singularValues().size() - 1);
}

CriterionResult oracle_equivalence() {
    Check c(4, "random search vs closed form");
    std::mt19937_64 eng(20240611);
    std::uniform_real_distribution<double> uf(-1.0, 1.0), us(-0.2, 0.2);
    int tested = 0, drawn = 0, search_failed = 0;
    double worst = 0.0;
    while (tested < 10000) {
        ++drawn;
        std::vector<PixelSample> s;
        const double sx = us(eng), sy = us(eng);
        for (int i = 0; i < 3; ++i) {
            const double fx = uf(eng), fy = uf(eng);
            s.push_back({fx, fy, std::hypot(fx + sx, fy + sy)});
        }
        // Well-conditioned: difference system and magnitude Jacobian.
        Eigen::MatrixXd d(2, 2), j(3, 2);
        for (int i = 0; i < 2; ++i) {
            d(i, 0) = s[0].fx - s[i + 1].fx;
            d(i, 1) = s[0].fy - s[i + 1].fy;
        }
        for (int i = 0; i < 3; ++i) {
            j(i, 0) = (s[i].fx + sx) / s[i].m;
            j(i, 1) = (s[i].fy + sy) / s[i].m;
        }
        if (condition_of(d) > 20.0 || condition_of(j) > 20.0) continue;
        const auto closed = reconstruct_pixel_closed(s);
        const auto search = reconstruct_pixel_search(s, auto_bounds(s, 0.01), {}, 9000 + static_cast<std::uint64_t>(tested));
        if (!closed.ok || !search.ok) {
            ++search_failed;
            worst = HUGE_VAL;
        } else {
            worst = std::max(worst, std::hypot(search.fx - closed.fx, search.fy - closed.fy));
        }
        ++tested;
    }
    c.expect(search_failed == 0 && worst < 1e-3, "2D: worst |search - closed| " + num(worst) + " V/cm < 1e-3 over " +
                                                     std::to_string(tested) + " instances (" +
                                                     std::to_string(drawn) + " drawn)");

    int n3 = 0, skipped = 0;
    double worst3 = 0.0;
    while (n3 < 1000) {
        double s[3] = {0.2 * uf(eng), 0.2 * uf(eng), 0.2 * uf(eng)};
        std::vector<PixelSample3> m;
        for (int i = 0; i < 4; ++i) {
            const double f[3] = {uf(eng), uf(eng), uf(eng)};
            m.push_back({f[0], f[1], f[2],
                         std::sqrt((f[0] + s[0]) * (f[0] + s[0]) + (f[1] + s[1]) * (f[1] + s[1]) + (f[2] + s[2]) * (f[2] + s[2]))});
        }
        const auto sol = reconstruct_point_3d(m);
        if (!sol.ok || sol.condition > 100.0) {
            ++skipped;
            continue;
        }
        worst3 = std::max({worst3, std::abs(sol.fx - s[0]), std::abs(sol.fy - s[1]), std::abs(sol.fz - s[2])});
        ++n3;
    }
    c.expect(worst3 < 1e-9, "3D: worst component error " + num(worst3) + " V/cm < 1e-9 over " + std::to_string(n3) +
                                " instances with difference condition <= 100");
    return c.r;
}

// -- pipeline-based criteria -------------------------------------------------

struct RunOutputs {
    VectorGrid stray;
    VectorGrid truth;
    CampaignManifest manifest;
};

RunOutputs outputs(const RunContext& r) {
    RunOutputs o;
    o.stray = read_vector_grid(layout::stray(r.out) / "stray.csv");
    o.manifest = read_manifest(layout::manifest(r.out));
    o.truth = read_vector_grid(layout::campaign(r.out) / o.manifest.truth_stray);
    return o;
}

std::map<std::string, double> report_values(const fs::path& p) {
    std::map<std::string, double> v;
    std::ifstream is(p);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string k;
        double x;
        if (ls >> k >> x) v[k] = x;
    }
    return v;
}

CriterionResult stray_closure(const RunOutputs& o) {
    Check c(5, "end-to-end stray-field closure");
    double ss = 0.0, worst = 0.0;
    std::size_t n = 0, toward = 0, down = 0;
    for (std::size_t i = 0; i < o.stray.fx.size(); ++i) {
        if (o.stray.mask[i]) continue;
        const double dx = o.stray.fx[i] - o.truth.fx[i], dy = o.stray.fy[i] - o.truth.fy[i];
        ss += dx * dx + dy * dy;
        worst = std::max(worst, std::hypot(dx, dy));
        ++n;
        const int ix = static_cast<int>(i % static_cast<std::size_t>(o.stray.spec.nx));
        const int iy = static_cast<int>(i / static_cast<std::size_t>(o.stray.spec.nx));
        // Direction to the CPW axis on the chip, (0, 0).
        const double px = o.stray.spec.x(ix), py = o.stray.spec.y(iy);
        if (-px * o.stray.fx[i] - py * o.stray.fy[i] > 0.0) ++toward;
        if (o.stray.fy[i] < 0.0) ++down;
    }
    const double rms = n ? std::sqrt(ss / static_cast<double>(n)) : HUGE_VAL;
    c.expect(n > 0 && rms < 5e-3, "rms |reconstructed - generating| " + num(1e3 * rms) + " mV/cm < 5 over " +
                                      std::to_string(n) + " pixels (max " + num(1e3 * worst) + " mV/cm)");
    c.expect(n > 0 && toward == n, "vectors pointing toward the CPW: " + std::to_string(toward) + "/" + std::to_string(n));
    c.info("vectors pointing down to the chip: " + std::to_string(down) + "/" + std::to_string(n));
    return c.r;
}

CriterionResult charge_fit(const RunContext& r) {
    Check c(6, "charge-density fit");
    auto v = report_values(layout::charges(r.out) / "report.txt");
    const double eg = rel(v["sigma_g_C_per_m2"], r.cfg.charges.sigma_g);
    const double es = rel(v["sigma_s_C_per_m2"], r.cfg.charges.sigma_s);
    c.expect(eg < 0.01, "sigma_g " + num(v["sigma_g_C_per_m2"]) + " C/m^2, rel error " + num(eg) + " < 0.01");
    c.expect(es < 0.01, "sigma_s " + num(v["sigma_s_C_per_m2"]) + " C/m^2, rel error " + num(es) + " < 0.01");
    c.info("stderr sigma_g " + num(v["sigma_g_stderr"]) + ", sigma_s " + num(v["sigma_s_stderr"]));
    return c.r;
}

Deviation held_out_deviation(const RunContext& r, const RunOutputs& o) {
    const auto& label = r.cfg.campaign.held_out;
    const auto& e = o.manifest.find(label);
    const auto b = analysis_basis(load_or_solve_basis(r), r.cfg, r.cfg.spectroscopy.binning);
    StrayFieldResult s;
    s.stray = o.stray;
    const auto measured = read_scalar_grid(layout::fit(r.out) / ("field_" + label + ".csv"));
    return validate_superposition(s, e.pots, b, measured);
}

CriterionResult superposition(const RunContext& clean, const RunOutputs& oc, const RunContext& noisy,
                              const RunOutputs& on) {
    Check c(7, "validation by superposition");
    if (clean.cfg.campaign.held_out.empty()) {
        c.expect(false, "campaign.held_out is not configured");
        return c.r;
    }
    const auto d0 = held_out_deviation(clean, oc);
    c.expect(d0.pixels > 0 && d0.max_abs < 5e-3, "noiseless: max deviation " + num(1e3 * d0.max_abs) +
                                                     " mV/cm < 5 over " + std::to_string(d0.pixels) + " pixels");
    const auto d1 = held_out_deviation(noisy, on);
    c.expect(d1.pixels > 0 && d1.max_abs < 50e-3, "sigma 0.02: max deviation " + num(1e3 * d1.max_abs) +
                                                      " mV/cm < 50 over " + std::to_string(d1.pixels) +
                                                      " pixels (rms " + num(1e3 * d1.rms) + ")");
    return c.r;
}

CriterionResult compensation(const RunContext& r) {
    Check c(8, "compensation");
    auto v = report_values(layout::compensation(r.out) / "potentials.txt");
    const double actual = v["actual_max_residual_Vcm"], reduction = v["actual_reduction"];
    c.expect(v.count("actual_max_residual_Vcm") && actual <= 0.030,
             "max residual with the generating charges " + num(1e3 * actual) + " mV/cm <= 30");
    c.expect(reduction > 50.0, "reduction factor " + num(reduction) + " > 50");
    c.info("predicted from the reconstructed map: max residual " + num(1e3 * v["predicted_max_residual_Vcm"]) +
           " mV/cm, reduction " + num(v["reduction"]));
    c.info("potentials V: " + num(v["v_c"]) + " " + num(v["v_l"]) + " " + num(v["v_r"]) + " " + num(v["v_s"]));
    return c.r;
}

CriterionResult microwave(const RunContext& r) {
    Check c(9, "microwave amplitude");
    const double omega = rabi_rate(1.0);
    const double t_pi = std::numbers::pi / omega;
    // Oracle: d F / hbar from CODATA values, F = 1 mV/cm = 0.1 V/m.
    const double oracle = 917.0 * 1.602176634e-19 * 5.29177210903e-11 * 0.1 / 1.054571817e-34 * 1e-9;
    c.expect(rel(omega, oracle) < 1e-12, "rabi_rate(1 mV/cm) = " + num(omega) + " rad/ns, direct " + num(oracle));
    c.expect(rel(t_pi, 400.0) < 0.10, "pi pulse at 1 mV/cm " + num(t_pi) + " ns vs 400: rel " + num(rel(t_pi, 400.0)) +
                                          " < 0.10");
    const auto got = read_scalar_grid(layout::microwave(r.out) / "field.csv");
    const auto m = read_manifest(layout::manifest(r.out));
    const auto want = read_scalar_grid(layout::campaign(r.out) / m.truth_mw);
    double worst = 0.0;
    std::size_t n = 0, input = 0;
    for (std::size_t i = 0; i < want.values.size(); ++i) {
        if (want.mask[i]) continue;
        ++input;
        if (got.mask[i]) continue;
        worst = std::max(worst, rel(got.values[i], want.values[i]));
        ++n;
    }
    c.expect(n > 0 && worst < 0.02, "map closure: worst rel error " + num(worst) + " < 0.02 over " + std::to_string(n) +
                                        "/" + std::to_string(input) + " pixels");
    c.expect(n >= input * 9 / 10, "fitted pixels " + std::to_string(n) + " >= 90% of " + std::to_string(input));
    return c.r;
}

// -- 10 --------------------------------------------------------------------

constexpr double kEps0 = 8.8541878128e-12;

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

std::size_t nearest(const GridSpec& s, double x, double y) {
    const int ix = static_cast<int>(std::lround((x - s.x0) / s.dx));
    const int iy = static_cast<int>(std::lround((y - s.y0) / s.dy));
    return s.index(std::clamp(ix, 0, s.nx - 1), std::clamp(iy, 0, s.ny - 1));
}

CriterionResult solver_verification(const PipelineConfig& cfg, const BasisFields& coarse, unsigned threads) {
    Check c(10, "solver verification");
    SolverOptions fast = cfg.solver;
    fast.omega = 0.0;
    {
        DeviceGeometry g;
        g.shield_width = 1000.0;
        g.shield_height = 500.0;
        g.side_walls = SideWalls::Open;
        g.conductors = {{-500.0, 500.0, Electrode::Center}};
        const auto spec = solver_grid(g, 25.0, 25.0);
        PotentialSet p;
        p.v_c = 2.0;
        const auto f = field_from_potential(solve_potential(g, p, {}, spec, fast));
        const double expected = 2.0 / (500.0 * 1e-4);
        double worst = 0.0;
        for (std::size_t i = 0; i < spec.size(); ++i)
            worst = std::max({worst, std::abs(f.fy[i] - expected) / expected, std::abs(f.fx[i]) / expected});
        c.expect(worst < 1e-3, "parallel plates: worst rel field error " + num(worst) + " < 1e-3");
    }
    {
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
        const auto f = field_from_potential(solve_potential(g, {}, q, spec, fast));
        double worst = 0.0;
        for (const auto& pr : {std::array<double, 2>{0, 300}, {0, 500}, {400, 400}, {-600, 250}, {800, 600}, {-300, 700}}) {
            const auto i = nearest(spec, pr[0], pr[1]);
            const int ix = static_cast<int>(i % static_cast<std::size_t>(spec.nx));
            const int iy = static_cast<int>(i / static_cast<std::size_t>(spec.nx));
            const auto e = strip_oracle(spec.x(ix), spec.y(iy), a, h, sigma, H, W);
            worst = std::max(worst, std::hypot(f.fx[i] - e[0], f.fy[i] - e[1]) / std::hypot(e[0], e[1]));
        }
        c.expect(worst < 0.02, "charged strip vs image charges: worst rel error " + num(worst) + " < 0.02");
    }
    {
        // Halve the configured cell size; coarse nodes are a subset of fine nodes.
        const auto spec = solver_grid(cfg.geometry, cfg.dx / 2, cfg.dy / 2);
        SolverOptions o = cfg.solver;
        o.omega = 0.0;
        const auto fine = compute_basis(cfg.geometry, spec, o, threads);
        const auto& p = cfg.beam.polygon;
        const double x0 = *std::min_element(p.x.begin(), p.x.end()), x1 = *std::max_element(p.x.begin(), p.x.end());
        const double y0 = *std::min_element(p.y.begin(), p.y.end()), y1 = *std::max_element(p.y.begin(), p.y.end());
        std::vector<std::array<double, 2>> probes;
        for (double fx : {0.1, 0.5, 0.9})
            for (double fy : {0.1, 0.5, 0.9}) probes.push_back({x0 + fx * (x1 - x0), y0 + fy * (y1 - y0)});
        double worst_e = 0.0, worst_q = 0.0;
        for (const auto& pr : probes) {
            const auto ic = nearest(coarse.spec, pr[0], pr[1]);
            const int ix = static_cast<int>(ic % static_cast<std::size_t>(coarse.spec.nx));
            const int iy = static_cast<int>(ic / static_cast<std::size_t>(coarse.spec.nx));
            const auto jf = nearest(spec, coarse.spec.x(ix), coarse.spec.y(iy));
            auto change = [&](const VectorGrid& a, const VectorGrid& b) {
                return std::hypot(a.fx[ic] - b.fx[jf], a.fy[ic] - b.fy[jf]) / std::hypot(a.fx[ic], a.fy[ic]);
            };
            for (int e = 0; e < 4; ++e) worst_e = std::max(worst_e, change(coarse.electrode[e], fine.electrode[e]));
            for (int s = 0; s < 2; ++s) worst_q = std::max(worst_q, change(coarse.charge[s], fine.charge[s]));
        }
        c.expect(worst_e < 0.01, "grid refinement " + num(cfg.dx) + " -> " + num(cfg.dx / 2) +
                                     " um, electrode responses at 9 beam probes: worst change " + num(worst_e) + " < 0.01");
        c.info("charge responses at the same probes change by up to " + num(worst_q));
    }
    return c.r;
}

// -- 11 --------------------------------------------------------------------

CriterionResult determinism(const RunContext& a, const RunContext& b) {
    Check c(11, "determinism across thread counts");
    std::size_t files = 0, differ = 0;
    std::string first;
    for (const auto& entry : fs::recursive_directory_iterator(a.out)) {
        if (!entry.is_regular_file()) continue;
        const auto relp = fs::relative(entry.path(), a.out);
        ++files;
        const auto other = b.out / relp;
        if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
            ++differ;
            if (first.empty()) first = relp.string();
        }
    }
    std::size_t files_b = 0;
    for (const auto& entry : fs::recursive_directory_iterator(b.out))
        if (entry.is_regular_file()) ++files_b;
    c.expect(files > 0 && differ == 0 && files == files_b,
             std::to_string(files) + " output files, " + std::to_string(differ) + " differ between --threads " +
                 std::to_string(a.threads) + " and " + std::to_string(b.threads) +
                 (first.empty() ? "" : " (first: " + first + ")"));
    c.info("runs use noise sigma 0.02 and random-search reconstruction");
    return c.r;
}

}  // namespace

std::vector<CriterionResult> run_acceptance(const RunContext& ctx, std::ostream* log) {
    using clock = std::chrono::steady_clock;
    std::vector<CriterionResult> out;
    auto start = clock::now();
    auto note = [&](const std::string& s) {
        if (!log) return;
        const double t = std::chrono::duration<double>(clock::now() - start).count();
        *log << "[" << num(t) << " s] " << s << std::endl;
    };
    auto emit = [&](CriterionResult r) {
        if (log) {
            *log << "criterion " << r.id << ' ' << (r.pass ? "PASS" : "FAIL") << "  " << r.name << '\n';
            for (const auto& d : r.details) *log << "    " << d << '\n';
            log->flush();
        }
        out.push_back(std::move(r));
    };

    note("basis");
    const auto full = load_or_solve_basis(ctx);
    const auto window = analysis_basis(full, ctx.cfg);

    emit(stark_constants());
    emit(fourier_limit(ctx.cfg, ctx.threads));
    emit(spectro_closure(ctx.cfg, window, ctx.threads));
    note("oracle equivalence");
    emit(oracle_equivalence());

    note("noiseless campaign");
    auto clean = scratch(ctx, "noiseless", ctx.threads);
    clean.cfg.spectroscopy.noise_sigma = 0.0;
    clean.cfg.microwave.noise_sigma = 0.0;
    run_all(clean);
    const auto oc = outputs(clean);
    emit(stray_closure(oc));
    emit(charge_fit(clean));

    note("noisy campaign");
    auto noisy = scratch(ctx, "noisy", ctx.threads);
    noisy.cfg.spectroscopy.noise_sigma = 0.02;
    if (!noisy.cfg.spectroscopy.seed) noisy.cfg.spectroscopy.seed = 1;
    cmd_synth_campaign(noisy);
    cmd_fit_spectra(noisy);
    cmd_reconstruct_stray(noisy);
    const auto on = outputs(noisy);
    emit(superposition(clean, oc, noisy, on));
    emit(compensation(clean));
    emit(microwave(clean));

    note("solver verification");
    emit(solver_verification(ctx.cfg, full, ctx.threads));

    note("determinism runs");
    auto det = [&](const std::string& name, unsigned threads) {
        auto r = scratch(ctx, name, threads);
        r.cfg.spectroscopy.noise_sigma = 0.02;
        r.cfg.microwave.noise_sigma = 0.02;
        r.cfg.reconstruction.method = ReconMethod::RandomSearch;
        r.cfg.override_seed(ctx.cfg.spectroscopy.seed.value_or(7));
        run_all(r);
        return r;
    };
    const auto d1 = det("threads_1", 1);
    const auto d4 = det("threads_4", 4);
    emit(determinism(d1, d4));
    note("done");
    return out;
}

bool all_passed(const std::vector<CriterionResult>& r) {
    return !r.empty() && std::all_of(r.begin(), r.end(), [](const auto& c) { return c.pass; });
}

void write_acceptance_report(const std::vector<CriterionResult>& r, const RunContext& ctx) {
    const auto dir = layout::validation(ctx.out);
    nlohmann::json j;
    j["config_hash"] = hex64(ctx.cfg.hash());
    j["constants"] = constants_header();
    j["passed"] = all_passed(r);
    for (const auto& c : r)
        j["criteria"].push_back({{"id", c.id}, {"name", c.name}, {"pass", c.pass}, {"details", c.details}});
    {
        auto os = open_out(dir / "report.json");
        os << j.dump(2) << '\n';
        finish(os, dir / "report.json");
    }
    auto os = open_out(dir / "report.txt");
    for (const auto& h : provenance(ctx.cfg, "validate")) os << "# " << h << '\n';
    for (const auto& c : r) {
        os << "criterion " << c.id << ' ' << (c.pass ? "PASS" : "FAIL") << ' ' << c.name << '\n';
        for (const auto& d : c.details) os << "    " << d << '\n';
    }
    finish(os, dir / "report.txt");
}

}  // namespace starkmap
