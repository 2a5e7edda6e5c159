#include "starkmap/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "starkmap/error.hpp"
#include "starkmap/microwave.hpp"
#include "starkmap/reconstruction.hpp"
#include "starkmap/rng.hpp"
#include "starkmap/spectroscopy.hpp"
#include "starkmap/stark.hpp"
#include "starkmap/textio.hpp"

namespace starkmap {

namespace fs = std::filesystem;

namespace {

HeaderLines with(HeaderLines h, std::initializer_list<std::string> more) {
    h.insert(h.end(), more.begin(), more.end());
    return h;
}

std::uint64_t stream_seed(std::optional<std::uint64_t> seed, std::string_view tag) {
    return mix64(seed.value_or(0) ^ fnv1a(tag));
}

/// Value of a `# key value` header line, if present.
std::optional<std::string> header_value(const fs::path& path, std::string_view key) {
    for (const auto& line : read_header_lines(path)) {
        if (line.size() > key.size() && line.compare(0, key.size(), key) == 0 && line[key.size()] == ' ')
            return line.substr(key.size() + 1);
    }
    return std::nullopt;
}

std::string label_of(const fs::path& path, std::string_view prefix) {
    if (auto l = header_value(path, "label")) return *l;
    std::string stem = path.stem().string();
    if (stem.rfind(prefix, 0) == 0) stem = stem.substr(prefix.size());
    return stem;
}

void require(const fs::path& path, std::string_view producer) {
    if (!fs::exists(path))
        throw IoError("missing input '" + path.string() + "' (run " + std::string(producer) + " first)");
}

GridSpec analysis_spec(const PipelineConfig& cfg) {
    return crop(solver_grid(cfg.geometry, cfg.dx, cfg.dy), analysis_window(cfg));
}

void check_grid(const GridSpec& got, const GridSpec& want, std::string_view what) {
    if (!(got == want))
        throw ConfigError(std::string(what) + " grid " + describe(got) + " does not match the configured grid " +
                          describe(want));
}

void heatmap(const RunContext& ctx, const ScalarGrid& g, const fs::path& path) {
    if (!ctx.cfg.heatmaps || g.unmasked_count() == 0) return;
    render_heatmap(g, path);
}

void write_text(const fs::path& path, const HeaderLines& header, const std::vector<std::string>& body) {
    auto os = open_out(path);
    for (const auto& h : header) os << "# " << h << '\n';
    for (const auto& b : body) os << b << '\n';
    finish(os, path);
}

std::string pots_text(const PotentialSet& p) {
    return format_double(p.v_c) + ' ' + format_double(p.v_l) + ' ' + format_double(p.v_r) + ' ' + format_double(p.v_s);
}

PotentialSet add(const PotentialSet& a, const PotentialSet& b) {
    PotentialSet r = b;
    for (auto e : kElectrodes) r.of(e) = a.of(e) + b.of(e);
    return r;
}

SetRole role_of(const PipelineConfig& cfg, const std::string& label) {
    const auto& c = cfg.campaign;
    if (std::find(c.measurements.begin(), c.measurements.end(), label) != c.measurements.end())
        return SetRole::Measurement;
    if (label == c.held_out) return SetRole::HeldOut;
    if (label == c.compensated) return SetRole::Compensated;
    return SetRole::Extra;
}

void fit_one(const RunContext& ctx, const fs::path& stack_path, const std::string& label) {
    const auto& cfg = ctx.cfg;
    const auto stack = read_stack(stack_path);
    check_grid(stack.spec, analysis_spec(cfg), "stack '" + stack_path.string() + "'");
    FitOptions fo;
    fo.fwhm0 = fourier_fwhm(stack.acq.pulse_ns);
    const auto maps = fit_stack(stack, cfg.spectroscopy.binning, cfg.spectroscopy.bin_mode, fo, ctx.threads);
    const auto dir = layout::fit(ctx.out);
    const auto prov = with(provenance(cfg, "fit-spectra"),
                           {"label " + label, "binning " + std::to_string(cfg.spectroscopy.binning),
                            "failed_fits " + std::to_string(maps.failed)});
    write_grid(maps.shift, dir / ("shift_" + label + ".csv"), with(prov, {"quantity line_center"}));
    write_grid(maps.width, dir / ("width_" + label + ".csv"), with(prov, {"quantity fwhm"}));
    write_grid(maps.depth, dir / ("depth_" + label + ".csv"), with(prov, {"quantity dip_depth"}));
    heatmap(ctx, maps.shift, dir / ("shift_" + label + ".ppm"));

    const double fz = resolve_fz(ctx);
    const auto fm = field_map_from_shifts(maps.shift, fz);
    write_grid(fm.field, dir / ("field_" + label + ".csv"),
               with(prov, {"quantity in_plane_field", "fz_Vcm " + format_double(fz),
                           "clamped " + std::to_string(fm.clamped_count),
                           "rejected " + std::to_string(fm.rejected_count)}));
    heatmap(ctx, fm.field, dir / ("field_" + label + ".ppm"));
}

}  // namespace

HeaderLines provenance(const PipelineConfig& cfg, std::string_view command) {
    HeaderLines h{"command " + std::string(command), "config_hash " + hex64(cfg.hash())};
    for (auto& c : constants_header()) h.push_back(std::move(c));
    return h;
}

Window analysis_window(const PipelineConfig& cfg) {
    const auto& p = cfg.beam.polygon;
    const auto [x0, x1] = std::minmax_element(p.x.begin(), p.x.end());
    const auto [y0, y1] = std::minmax_element(p.y.begin(), p.y.end());
    return window_for(solver_grid(cfg.geometry, cfg.dx, cfg.dy), *x0, *x1, *y0, *y1);
}

BasisFields load_or_solve_basis(const RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    const auto spec = solver_grid(cfg.geometry, cfg.dx, cfg.dy);
    const auto hash = geometry_hash(cfg.geometry, spec, cfg.solver);
    if (auto cached = load_basis(layout::basis(ctx.out), hash)) return *cached;
    auto basis = compute_basis(cfg.geometry, spec, cfg.solver, ctx.threads);
    save_basis(basis, layout::basis(ctx.out), provenance(cfg, "solve-basis"));
    return basis;
}

BasisFields analysis_basis(const BasisFields& full, const PipelineConfig& cfg, int binning) {
    auto b = crop(full, analysis_window(cfg));
    if (binning > 1) {
        for (auto& g : b.electrode) g = bin_grid(g, binning);
        for (auto& g : b.charge) g = bin_grid(g, binning);
        b.spec = b.electrode[0].spec;
    }
    return b;
}

Mask beam_mask(const PipelineConfig& cfg, const GridSpec& spec, bool region) {
    return region_mask(spec, cfg.beam.polygon, region ? std::optional<double>(cfg.beam.region_y_min) : std::nullopt);
}

std::string_view role_name(SetRole r) noexcept {
    switch (r) {
        case SetRole::Measurement: return "measurement";
        case SetRole::HeldOut: return "held_out";
        case SetRole::Compensated: return "compensated";
        case SetRole::Extra: return "extra";
    }
    return "?";
}

const ManifestEntry& CampaignManifest::find(const std::string& label) const {
    for (const auto& e : entries)
        if (e.label == label) return e;
    throw ConfigError("campaign manifest has no potential set '" + label + "'");
}

void write_manifest(const CampaignManifest& m, const fs::path& path, const HeaderLines& header) {
    std::vector<std::string> body;
    body.push_back("rabi," + m.rabi);
    body.push_back("truth_stray," + m.truth_stray);
    body.push_back("truth_mw," + m.truth_mw);
    body.push_back("label,role,v_c,v_l,v_r,v_s,stack,truth");
    for (const auto& e : m.entries) {
        body.push_back(e.label + ',' + std::string(role_name(e.role)) + ',' + format_double(e.pots.v_c) + ',' +
                       format_double(e.pots.v_l) + ',' + format_double(e.pots.v_r) + ',' + format_double(e.pots.v_s) +
                       ',' + e.stack + ',' + e.truth);
    }
    write_text(path, header, body);
}

CampaignManifest read_manifest(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read campaign manifest '" + path.string() + "'");
    CampaignManifest m;
    std::string raw;
    int line = 0;
    bool table = false;
    while (std::getline(is, raw)) {
        ++line;
        if (raw.empty() || raw[0] == '#') continue;
        auto f = split(raw, ',');
        if (!table) {
            if (f.size() == 2 && f[0] == "rabi") m.rabi = std::string(f[1]);
            else if (f.size() == 2 && f[0] == "truth_stray") m.truth_stray = std::string(f[1]);
            else if (f.size() == 2 && f[0] == "truth_mw") m.truth_mw = std::string(f[1]);
            else if (f.size() == 8 && f[0] == "label") table = true;
            else throw ParseError("unexpected manifest line", line);
            continue;
        }
        if (f.size() != 8) throw ParseError("manifest rows need 8 fields", line);
        ManifestEntry e;
        e.label = std::string(f[0]);
        if (f[1] == "measurement") e.role = SetRole::Measurement;
        else if (f[1] == "held_out") e.role = SetRole::HeldOut;
        else if (f[1] == "compensated") e.role = SetRole::Compensated;
        else if (f[1] == "extra") e.role = SetRole::Extra;
        else throw ParseError("unknown role '" + std::string(f[1]) + "'", line);
        e.pots.label = e.label;
        e.pots.v_c = parse_number(f[2], line);
        e.pots.v_l = parse_number(f[3], line);
        e.pots.v_r = parse_number(f[4], line);
        e.pots.v_s = parse_number(f[5], line);
        e.stack = std::string(f[6]);
        e.truth = std::string(f[7]);
        m.entries.push_back(std::move(e));
    }
    if (!table) throw ParseError("campaign manifest '" + path.string() + "' has no potential table", 0);
    return m;
}

void cmd_solve_basis(const RunContext& ctx) { (void)load_or_solve_basis(ctx); }

void cmd_synth_campaign(const RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    const auto b = analysis_basis(load_or_solve_basis(ctx), cfg);
    const auto dir = layout::campaign(ctx.out);
    const auto prov = provenance(cfg, "synth-campaign");
    const Mask beam = beam_mask(cfg, b.spec);
    const Mask region = beam_mask(cfg, b.spec, true);

    VectorGrid truth = superpose(b, PotentialSet{}, cfg.charges);
    truth.mask = beam;
    const auto comp = compensate(truth, b, region, cfg.compensation.bounds, cfg.compensation.rcond);

    CampaignManifest m;
    m.truth_stray = "truth_stray.csv";
    write_grid(truth, dir / m.truth_stray,
               with(prov, {"quantity charge_field", "sigma_g " + format_double(cfg.charges.sigma_g),
                           "sigma_s " + format_double(cfg.charges.sigma_s)}));

    const auto detunings = cfg.spectroscopy.detunings();
    std::optional<VectorGrid> compensated_total;
    for (const auto& [label, entry] : cfg.potentials) {
        ManifestEntry e;
        e.label = label;
        e.role = role_of(cfg, label);
        e.pots = entry.relative ? add(comp.pots, entry.pots) : entry.pots;
        e.pots.label = label;
        e.stack = "stack_" + label + ".csv";
        e.truth = "truth_total_" + label + ".csv";

        VectorGrid total = superpose(b, e.pots, cfg.charges);
        total.mask = beam;
        if (e.role == SetRole::Compensated) compensated_total = total;
        SynthOptions so;
        so.depth = cfg.spectroscopy.depth;
        so.shape = cfg.spectroscopy.shape;
        so.noise_sigma = cfg.spectroscopy.noise_sigma;
        so.seed = stream_seed(cfg.spectroscopy.seed, "stack:" + label);
        const auto stack = synth_stack(total, cfg.campaign.fz, detunings, cfg.spectroscopy.pulse_ns, so, ctx.threads);
        const auto set_prov = with(prov, {"label " + label, "role " + std::string(role_name(e.role)),
                                          "potentials_V " + pots_text(e.pots),
                                          "fz_Vcm " + format_double(cfg.campaign.fz)});
        write_stack(stack, dir / e.stack, set_prov);
        write_grid(total, dir / e.truth, with(set_prov, {"quantity total_in_plane_field"}));
        m.entries.push_back(std::move(e));
    }

    // Rabi campaign: a mode shape of the configured weights, probed at the
    // transition frequency of the compensated set.
    const auto mode = mode_field(b, cfg.microwave.mode_a, cfg.microwave.mode_b).magnitude();
    ScalarGrid fmu(b.spec, Unit::MilliVPerCm);
    fmu.mask = beam;
    for (std::size_t i = 0; i < fmu.values.size(); ++i) fmu.values[i] = cfg.microwave.amplitude * mode.values[i];
    ScalarGrid shift(b.spec, Unit::MHz, stark_shift(0.0, 0.0, cfg.campaign.fz));
    shift.mask = beam;
    if (compensated_total) {
        for (std::size_t i = 0; i < shift.values.size(); ++i)
            shift.values[i] = stark_shift(compensated_total->fx[i], compensated_total->fy[i], cfg.campaign.fz);
    }
    const auto det = detuning_from_shift(shift, cfg.microwave.f_mw);
    const auto rabi = synth_rabi_stack(fmu, det, cfg.microwave.theta, cfg.microwave.theta_max, cfg.microwave.pulse_ns,
                                       cfg.microwave.tau_ns, cfg.microwave.noise_sigma,
                                       stream_seed(cfg.microwave.seed, "rabi"), ctx.threads);
    m.rabi = "rabi.csv";
    m.truth_mw = "truth_mw.csv";
    write_rabi_stack(rabi, dir / m.rabi,
                     with(prov, {"theta_max_V " + format_double(cfg.microwave.theta_max),
                                 "f_mw_MHz " + format_double(cfg.microwave.f_mw)}));
    write_grid(fmu, dir / m.truth_mw, with(prov, {"quantity microwave_amplitude_at_theta_max"}));

    write_manifest(m, layout::manifest(ctx.out),
                   with(prov, {"truth_compensation_V " + pots_text(comp.pots),
                               "truth_compensation_max_residual_Vcm " + format_double(comp.max_residual)}));
}

double resolve_fz(const RunContext& ctx) {
    const auto& cfg = ctx.cfg;
    if (cfg.reconstruction.fz) return *cfg.reconstruction.fz;
    const auto path = layout::fit(ctx.out) / ("shift_" + cfg.campaign.compensated + ".csv");
    require(path, "fit-spectra on the compensated set");
    return estimate_fz(read_scalar_grid(path));
}

void cmd_fit_spectra(const RunContext& ctx, const std::optional<fs::path>& stack) {
    if (stack) {
        require(*stack, "synth-campaign");
        fit_one(ctx, *stack, label_of(*stack, "stack_"));
        return;
    }
    const auto mpath = layout::manifest(ctx.out);
    require(mpath, "synth-campaign");
    const auto m = read_manifest(mpath);
    const auto dir = mpath.parent_path();
    // The compensated set goes first: its shift minimum fixes fz for the rest.
    std::vector<const ManifestEntry*> order;
    for (const auto& e : m.entries)
        if (e.role == SetRole::Compensated) order.push_back(&e);
    for (const auto& e : m.entries)
        if (e.role != SetRole::Compensated) order.push_back(&e);
    for (const auto* e : order) fit_one(ctx, dir / e->stack, e->label);
}

void cmd_reconstruct_stray(const RunContext& ctx, const std::optional<fs::path>& manifest) {
    const auto& cfg = ctx.cfg;
    const auto mpath = manifest.value_or(layout::manifest(ctx.out));
    require(mpath, "synth-campaign");
    const auto m = read_manifest(mpath);
    const double fz = resolve_fz(ctx);
    const auto b = analysis_basis(load_or_solve_basis(ctx), cfg, cfg.spectroscopy.binning);

    std::vector<Measurement> meas;
    for (const auto& label : cfg.campaign.measurements) {
        const auto& e = m.find(label);
        const auto fpath = layout::fit(ctx.out) / ("field_" + label + ".csv");
        require(fpath, "fit-spectra");
        Measurement x;
        x.label = label;
        x.pots = e.pots;
        x.magnitude = read_scalar_grid(fpath);
        check_grid(x.magnitude.spec, b.spec, "field map '" + fpath.string() + "'");
        x.applied = superpose(b, e.pots);
        meas.push_back(std::move(x));
    }

    ReconOptions ro;
    ro.method = cfg.reconstruction.method;
    ro.max_condition = cfg.reconstruction.max_condition;
    ro.search.budget = cfg.reconstruction.budget;
    ro.bounds = cfg.reconstruction.bounds;
    ro.seed = stream_seed(cfg.reconstruction.seed, "reconstruction");
    const auto r = reconstruct_stray(meas, fz, ro, ctx.threads);
    if (r.stray.unmasked_count() == 0) throw ConvergenceError("no pixel could be reconstructed", {});

    const auto dir = layout::stray(ctx.out);
    const auto prov = with(provenance(cfg, "reconstruct-stray"),
                           {"method " + std::string(method_name(r.method)), "seed " + std::to_string(r.seed),
                            "fz_Vcm " + format_double(r.fz), "ill_conditioned " + std::to_string(r.ill_conditioned),
                            "at_boundary " + std::to_string(r.at_boundary)});
    write_grid(r.stray, dir / "stray.csv", with(prov, {"quantity stray_field"}));
    write_grid(r.residual, dir / "residual.csv", with(prov, {"quantity rms_magnitude_residual"}));
    write_grid(r.condition, dir / "condition.csv", with(prov, {"quantity difference_condition_number"}));
    if (cfg.heatmaps) {
        render_vector_overlay(r.stray, dir / "stray_overlay.ppm");
        heatmap(ctx, r.stray.magnitude(), dir / "stray_magnitude.ppm");
    }
}

void cmd_fit_charges(const RunContext& ctx, const std::optional<fs::path>& field_map) {
    const auto& cfg = ctx.cfg;
    const auto mpath = layout::manifest(ctx.out);
    require(mpath, "synth-campaign");
    const auto m = read_manifest(mpath);
    const auto fpath =
        field_map.value_or(layout::fit(ctx.out) / ("field_" + cfg.campaign.measurements.front() + ".csv"));
    require(fpath, "fit-spectra");
    const auto label = label_of(fpath, "field_");
    const auto& e = m.find(label);
    const auto magnitude = read_scalar_grid(fpath);
    const auto b = analysis_basis(load_or_solve_basis(ctx), cfg, cfg.spectroscopy.binning);
    check_grid(magnitude.spec, b.spec, "field map '" + fpath.string() + "'");

    // The map already holds in-plane magnitudes.
    const auto fit = fit_charge_densities(magnitude, e.pots, b, 0.0);
    if (!fit.converged) throw ConvergenceError("charge-density fit did not converge", {});
    const auto rel = [](double got, double want) {
        return want == 0.0 ? std::string("n/a") : format_double((got - want) / want);
    };
    write_text(layout::charges(ctx.out) / "report.txt",
               with(provenance(cfg, "fit-charges"), {"label " + label}),
               {"sigma_g_C_per_m2 " + format_double(fit.q.sigma_g),
                "sigma_g_stderr " + format_double(fit.stderr_[0]),
                "sigma_s_C_per_m2 " + format_double(fit.q.sigma_s),
                "sigma_s_stderr " + format_double(fit.stderr_[1]),
                "rms_residual_Vcm " + format_double(fit.rms_residual), "pixels " + std::to_string(fit.pixels),
                "iterations " + std::to_string(fit.iterations),
                "generating_sigma_g " + format_double(cfg.charges.sigma_g),
                "generating_sigma_s " + format_double(cfg.charges.sigma_s),
                "relative_error_sigma_g " + rel(fit.q.sigma_g, cfg.charges.sigma_g),
                "relative_error_sigma_s " + rel(fit.q.sigma_s, cfg.charges.sigma_s)});
}

void cmd_compensate(const RunContext& ctx, const std::optional<fs::path>& stray_path) {
    const auto& cfg = ctx.cfg;
    const auto spath = stray_path.value_or(layout::stray(ctx.out) / "stray.csv");
    require(spath, "reconstruct-stray");
    const auto stray = read_vector_grid(spath);
    const auto b = analysis_basis(load_or_solve_basis(ctx), cfg, cfg.spectroscopy.binning);
    check_grid(stray.spec, b.spec, "stray map '" + spath.string() + "'");
    const Mask region = beam_mask(cfg, b.spec, true);
    const auto c = compensate(stray, b, region, cfg.compensation.bounds, cfg.compensation.rcond);

    const auto dir = layout::compensation(ctx.out);
    const auto prov = provenance(cfg, "compensate");
    std::vector<std::string> body = {
        "v_c " + format_double(c.pots.v_c), "v_l " + format_double(c.pots.v_l), "v_r " + format_double(c.pots.v_r),
        "v_s " + format_double(c.pots.v_s),
        "active " + std::to_string(c.active[0]) + ' ' + std::to_string(c.active[1]) + ' ' +
            std::to_string(c.active[2]) + ' ' + std::to_string(c.active[3]),
        "predicted_max_residual_Vcm " + format_double(c.max_residual),
        "predicted_rms_residual_Vcm " + format_double(c.rms_residual),
        "max_uncompensated_Vcm " + format_double(c.max_uncompensated),
        "reduction " + format_double(c.reduction)};

    // With a synthetic campaign at hand, also apply the potentials to the
    // generating charge field.
    const auto truth_path = layout::campaign(ctx.out) / "truth_stray.csv";
    if (fs::exists(truth_path)) {
        const auto truth = read_vector_grid(truth_path);
        if (truth.spec == b.spec) {
            VectorGrid actual = superpose(b, c.pots);
            double worst = 0.0, before = 0.0;
            for (std::size_t i = 0; i < actual.fx.size(); ++i) {
                actual.fx[i] += truth.fx[i];
                actual.fy[i] += truth.fy[i];
                if (region[i]) continue;
                worst = std::max(worst, std::hypot(actual.fx[i], actual.fy[i]));
                before = std::max(before, std::hypot(truth.fx[i], truth.fy[i]));
            }
            actual.mask = region;
            write_grid(actual, dir / "actual_residual.csv", with(prov, {"quantity residual_with_generating_charges"}));
            body.push_back("actual_max_residual_Vcm " + format_double(worst));
            body.push_back("actual_reduction " + format_double(worst > 0 ? before / worst : HUGE_VAL));
        }
    }
    write_text(dir / "potentials.txt", prov, body);
    VectorGrid residual = c.residual;
    write_grid(residual, dir / "residual.csv", with(prov, {"quantity predicted_residual"}));
    auto mag = residual.magnitude();
    mag.mask = mask_union(mag.mask, region);
    heatmap(ctx, mag, dir / "residual_magnitude.ppm");
}

void cmd_mw_map(const RunContext& ctx, const std::optional<fs::path>& rabi_path) {
    const auto& cfg = ctx.cfg;
    const auto rpath = rabi_path.value_or(layout::campaign(ctx.out) / "rabi.csv");
    require(rpath, "synth-campaign");
    const auto stack = read_rabi_stack(rpath);
    const auto spec = analysis_spec(cfg);
    check_grid(stack.spec, spec, "Rabi stack '" + rpath.string() + "'");

    ScalarGrid shift(spec, Unit::MHz, stark_shift(0.0, 0.0, resolve_fz(ctx)));
    if (!cfg.campaign.compensated.empty()) {
        const auto p = layout::fit(ctx.out) / ("shift_" + cfg.campaign.compensated + ".csv");
        require(p, "fit-spectra");
        shift = read_scalar_grid(p);
        check_grid(shift.spec, spec, "shift map '" + p.string() + "' (mw-map needs unbinned spectra)");
    }
    const auto det = detuning_from_shift(shift, cfg.microwave.f_mw);
    const auto mw = map_microwave(stack, det, cfg.microwave.theta_max, ctx.threads);
    if (mw.field.unmasked_count() == 0) throw ConvergenceError("no Rabi curve could be fitted", {});

    const auto b = analysis_basis(load_or_solve_basis(ctx), cfg);
    const auto mode = fit_mode_weights(mw.field, b);
    const auto dir = layout::microwave(ctx.out);
    const auto prov = with(provenance(cfg, "mw-map"),
                           {"theta_max_V " + format_double(cfg.microwave.theta_max),
                            "failed_fits " + std::to_string(mw.failed)});
    write_grid(mw.field, dir / "field.csv", with(prov, {"quantity microwave_amplitude_at_theta_max"}));
    write_grid(mw.s, dir / "s.csv", with(prov, {"quantity rabi_rate_per_volt"}));
    write_grid(mw.s_stderr, dir / "s_stderr.csv", with(prov, {"quantity rabi_rate_per_volt_stderr"}));
    heatmap(ctx, mw.field, dir / "field.ppm");
    write_text(dir / "mode.txt", prov,
               {"mode_a " + format_double(mode.a), "mode_b " + format_double(mode.b),
                "scale_mVcm " + format_double(mode.scale), "rms_mVcm " + format_double(mode.rms),
                "converged " + std::string(mode.converged ? "true" : "false")});
}

void run_all(const RunContext& ctx) {
    cmd_solve_basis(ctx);
    cmd_synth_campaign(ctx);
    cmd_fit_spectra(ctx);
    cmd_reconstruct_stray(ctx);
    cmd_fit_charges(ctx);
    cmd_compensate(ctx);
    cmd_mw_map(ctx);
}

}  // namespace starkmap
