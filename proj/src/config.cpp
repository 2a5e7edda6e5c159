#include "starkmap/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "starkmap/error.hpp"
#include "starkmap/textio.hpp"

namespace starkmap {

namespace {

struct Entry {
    std::string value;
    int line = 0;
    bool used = false;
};

using Section = std::map<std::string, Entry>;

[[noreturn]] void fail(const std::string& what, int line) {
    throw ConfigError(line > 0 ? "config line " + std::to_string(line) + ": " + what : "config: " + what);
}

std::vector<std::string> tokens(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',' || c == ' ' || c == '\t') {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

class Reader {
public:
    Reader(Section& s, std::string name) : s_(s), name_(std::move(name)) {}

    const Entry* find(const std::string& key) {
        auto it = s_.find(key);
        if (it == s_.end()) return nullptr;
        it->second.used = true;
        return &it->second;
    }

    void num(const std::string& key, double& out) {
        if (auto* e = find(key)) out = number(*e, key);
    }
    void integer(const std::string& key, int& out) {
        if (auto* e = find(key)) {
            double v = number(*e, key);
            if (v != std::floor(v) || std::fabs(v) > 2e9) fail(name_ + "." + key + " must be an integer", e->line);
            out = static_cast<int>(v);
        }
    }
    void integer(const std::string& key, long& out) {
        int v = static_cast<int>(out);
        integer(key, v);
        out = v;
    }
    void seed(const std::string& key, std::optional<std::uint64_t>& out) {
        if (auto* e = find(key)) {
            std::uint64_t v = 0;
            const auto* b = e->value.data();
            const auto* end = b + e->value.size();
            auto [p, ec] = std::from_chars(b, end, v);
            if (ec != std::errc{} || p != end) fail(name_ + "." + key + " must be an unsigned 64-bit integer", e->line);
            out = v;
        }
    }
    void boolean(const std::string& key, bool& out) {
        if (auto* e = find(key)) {
            if (e->value == "true" || e->value == "yes" || e->value == "1") out = true;
            else if (e->value == "false" || e->value == "no" || e->value == "0") out = false;
            else fail(name_ + "." + key + " must be true or false", e->line);
        }
    }
    std::optional<std::string> text(const std::string& key) {
        if (auto* e = find(key)) return e->value;
        return std::nullopt;
    }
    std::vector<double> list(const std::string& key) {
        std::vector<double> out;
        if (auto* e = find(key)) {
            for (const auto& t : tokens(e->value)) out.push_back(parse(t, key, e->line));
        }
        return out;
    }
    int line(const std::string& key) const {
        auto it = s_.find(key);
        return it == s_.end() ? 0 : it->second.line;
    }

    void finish() const {
        for (const auto& [k, e] : s_)
            if (!e.used) fail("unknown key '" + k + "' in [" + name_ + "]", e.line);
    }

private:
    double number(const Entry& e, const std::string& key) { return parse(e.value, key, e.line); }
    double parse(const std::string& t, const std::string& key, int line) {
        try {
            double v = parse_number(t, line);
            if (!std::isfinite(v)) fail(name_ + "." + key + " must be finite", line);
            return v;
        } catch (const ParseError&) {
            fail(name_ + "." + key + ": '" + t + "' is not a number", line);
        }
    }

    Section& s_;
    std::string name_;
};

void put(std::ostringstream& os, const std::string& key, double v) { os << key << '=' << format_double(v) << '\n'; }

void put_seed(std::ostringstream& os, const std::string& key, const std::optional<std::uint64_t>& s) {
    os << key << '=' << (s ? std::to_string(*s) : "none") << '\n';
}

}  // namespace

std::vector<double> SpectroscopyConfig::detunings() const {
    std::vector<double> d;
    const long n = std::lround(std::floor((detuning_max - detuning_min) / detuning_step + 1e-9)) + 1;
    for (long k = 0; k < n; ++k) d.push_back(detuning_min + static_cast<double>(k) * detuning_step);
    return d;
}

PipelineConfig parse_config(const std::string& text) {
    std::map<std::string, Section> sections;
    std::vector<std::string> order;
    std::map<std::string, int> header_line;
    std::string current;
    std::istringstream is(text);
    std::string raw;
    int line = 0;
    while (std::getline(is, raw)) {
        ++line;
        std::string_view sv = raw;
        if (auto c = sv.find_first_of("#;"); c != std::string_view::npos) sv = sv.substr(0, c);
        sv = trim(sv);
        if (sv.empty()) continue;
        if (sv.front() == '[') {
            if (sv.back() != ']') fail("unterminated section header", line);
            current = std::string(trim(sv.substr(1, sv.size() - 2)));
            if (current.empty()) fail("empty section name", line);
            if (sections.count(current)) fail("duplicate section [" + current + "]", line);
            sections[current];
            header_line[current] = line;
            order.push_back(current);
            continue;
        }
        auto eq = sv.find('=');
        if (eq == std::string_view::npos) fail("expected key = value", line);
        if (current.empty()) fail("key outside of any section", line);
        std::string key(trim(sv.substr(0, eq)));
        std::string value(trim(sv.substr(eq + 1)));
        if (key.empty()) fail("empty key", line);
        if (value.empty()) fail("empty value for '" + key + "'", line);
        auto& sec = sections[current];
        if (sec.count(key)) fail("duplicate key '" + key + "' in [" + current + "]", line);
        sec[key] = Entry{value, line, false};
    }

    PipelineConfig cfg;

    static const std::set<std::string> known = {"geometry",   "grid",         "solver",        "charges",
                                                "beam",       "campaign",     "spectroscopy",  "reconstruction",
                                                "compensation", "microwave",  "output"};
    for (const auto& name : order) {
        if (known.count(name) || name.rfind("potentials.", 0) == 0) continue;
        fail("unknown section [" + name + "]", header_line[name]);
    }

    auto section = [&](const std::string& name) -> Section& { return sections[name]; };

    {
        Reader r(section("geometry"), "geometry");
        double cw = 180, gw = 80, sw = 6000, sh = 4000;
        std::optional<double> ground;
        r.num("center_width", cw);
        r.num("gap_width", gw);
        r.num("shield_width", sw);
        r.num("shield_height", sh);
        if (auto g = r.text("ground_extent"); g && *g != "walls") {
            double v = 0;
            r.num("ground_extent", v);
            ground = v;
        }
        double sheet = 23.0;
        r.num("sheet_height", sheet);
        std::string walls = r.text("side_walls").value_or("shield");
        if (walls != "shield" && walls != "open") fail("geometry.side_walls must be shield or open", r.line("side_walls"));
        r.finish();
        if (cw <= 0 || gw <= 0 || sw <= 0 || sh <= 0) fail("geometry widths and heights must be positive", 0);
        if (ground && *ground <= 0) fail("geometry.ground_extent must be positive", 0);
        if (cw + 2 * gw >= sw) fail("the CPW does not fit inside the shield", 0);
        cfg.geometry = DeviceGeometry::cpw(cw, gw, ground, sw, sh);
        cfg.geometry.sheet_height = sheet;
        cfg.geometry.side_walls = walls == "open" ? SideWalls::Open : SideWalls::Shield;
    }
    {
        Reader r(section("grid"), "grid");
        r.num("dx", cfg.dx);
        r.num("dy", cfg.dy);
        r.finish();
    }
    {
        Reader r(section("solver"), "solver");
        r.num("omega", cfg.solver.omega);
        r.num("tol", cfg.solver.tol);
        r.integer("max_iter", cfg.solver.max_iter);
        r.finish();
    }
    {
        Reader r(section("charges"), "charges");
        r.num("sigma_g", cfg.charges.sigma_g);
        r.num("sigma_s", cfg.charges.sigma_s);
        r.finish();
    }
    {
        Reader r(section("beam"), "beam");
        if (r.line("x") || r.line("y")) {
            int l = r.line("x") ? r.line("x") : r.line("y");
            cfg.beam.polygon.x = r.list("x");
            cfg.beam.polygon.y = r.list("y");
            if (cfg.beam.polygon.x.size() != cfg.beam.polygon.y.size() || cfg.beam.polygon.x.size() < 3)
                fail("beam.x and beam.y must list the same number (>= 3) of vertices", l);
        }
        r.num("region_y_min", cfg.beam.region_y_min);
        r.finish();
    }
    for (const auto& name : order) {
        if (name.rfind("potentials.", 0) != 0) continue;
        std::string label = name.substr(11);
        if (label.empty() || label.find_first_of(" \t,/\\") != std::string::npos)
            fail("invalid potential label '" + label + "'", header_line[name]);
        Reader r(sections[name], name);
        PotentialEntry e;
        e.pots.label = label;
        r.num("v_c", e.pots.v_c);
        r.num("v_l", e.pots.v_l);
        r.num("v_r", e.pots.v_r);
        r.num("v_s", e.pots.v_s);
        std::string base = r.text("base").value_or("zero");
        if (base != "zero" && base != "compensation") fail(name + ".base must be zero or compensation", r.line("base"));
        e.relative = base == "compensation";
        r.finish();
        cfg.potentials[label] = e;
    }
    {
        Reader r(section("campaign"), "campaign");
        if (auto m = r.text("measurements")) cfg.campaign.measurements = tokens(*m);
        cfg.campaign.held_out = r.text("held_out").value_or("");
        cfg.campaign.compensated = r.text("compensated").value_or("");
        r.num("fz", cfg.campaign.fz);
        r.finish();
    }
    {
        Reader r(section("spectroscopy"), "spectroscopy");
        auto& s = cfg.spectroscopy;
        r.num("detuning_min", s.detuning_min);
        r.num("detuning_max", s.detuning_max);
        r.num("detuning_step", s.detuning_step);
        r.num("pulse_ns", s.pulse_ns);
        r.num("depth", s.depth);
        if (auto v = r.text("shape")) {
            try {
                s.shape = parse_line_shape(*v);
            } catch (const Error&) {
                fail("spectroscopy.shape must be gaussian or sinc2", r.line("shape"));
            }
        }
        r.num("noise_sigma", s.noise_sigma);
        r.seed("seed", s.seed);
        r.integer("binning", s.binning);
        if (auto v = r.text("bin_mode")) {
            if (*v == "mean") s.bin_mode = BinMode::Mean;
            else if (*v == "sum") s.bin_mode = BinMode::Sum;
            else fail("spectroscopy.bin_mode must be mean or sum", r.line("bin_mode"));
        }
        r.finish();
    }
    {
        Reader r(section("reconstruction"), "reconstruction");
        auto& c = cfg.reconstruction;
        if (auto v = r.text("method")) {
            try {
                c.method = parse_method(*v);
            } catch (const Error&) {
                fail("reconstruction.method must be closed-form or random-search", r.line("method"));
            }
        }
        if (auto v = r.text("bounds"); v && *v != "auto") {
            int l = r.line("bounds");
            auto b = r.list("bounds");
            if (b.size() != 4 || !(b[0] < b[1]) || !(b[2] < b[3]))
                fail("reconstruction.bounds must be auto or x_lo x_hi y_lo y_hi with lo < hi", l);
            c.bounds = SearchBox{b[0], b[1], b[2], b[3]};
        }
        r.integer("budget", c.budget);
        r.seed("seed", c.seed);
        r.num("max_condition", c.max_condition);
        if (auto v = r.text("fz"); v && *v != "auto") {
            double f = 0;
            r.num("fz", f);
            c.fz = f;
        }
        r.finish();
    }
    {
        Reader r(section("compensation"), "compensation");
        double lo = cfg.compensation.bounds.lo[0], hi = cfg.compensation.bounds.hi[0];
        r.num("v_min", lo);
        r.num("v_max", hi);
        cfg.compensation.bounds.lo.fill(lo);
        cfg.compensation.bounds.hi.fill(hi);
        r.num("rcond", cfg.compensation.rcond);
        r.finish();
    }
    {
        Reader r(section("microwave"), "microwave");
        auto& m = cfg.microwave;
        r.num("theta_max", m.theta_max);
        if (r.line("theta")) {
            if (r.line("theta_count")) fail("give either microwave.theta or microwave.theta_count", r.line("theta_count"));
            m.theta = r.list("theta");
        } else {
            int n = 81;
            r.integer("theta_count", n);
            if (n < 5) fail("microwave.theta_count must be at least 5", r.line("theta_count"));
            for (int k = 0; k < n; ++k) m.theta.push_back(m.theta_max * k / (n - 1));
        }
        r.num("pulse_ns", m.pulse_ns);
        if (auto v = r.text("tau_ns"); v && *v == "inf") m.tau_ns = HUGE_VAL;
        else r.num("tau_ns", m.tau_ns);
        r.num("f_mw", m.f_mw);
        r.num("amplitude", m.amplitude);
        r.num("mode_a", m.mode_a);
        r.num("mode_b", m.mode_b);
        r.num("noise_sigma", m.noise_sigma);
        r.seed("seed", m.seed);
        r.finish();
    }
    {
        Reader r(section("output"), "output");
        if (auto v = r.text("dir")) cfg.output_dir = *v;
        r.boolean("heatmaps", cfg.heatmaps);
        r.finish();
    }
    return cfg;
}

void PipelineConfig::validate() const {
    geometry.validate();
    if (!(dx > 0) || !(dy > 0)) fail("grid.dx and grid.dy must be positive", 0);
    if (!(solver.tol > 0) || solver.max_iter < 1 || solver.omega >= 2.0)
        fail("solver needs tol > 0, max_iter >= 1 and omega < 2", 0);
    if (beam.polygon.x.size() < 3 || beam.polygon.x.size() != beam.polygon.y.size())
        fail("beam polygon needs at least 3 vertices", 0);

    auto defined = [&](const std::string& label, const std::string& where) {
        if (!potentials.count(label)) fail(where + " refers to undefined potential set '" + label + "'", 0);
    };
    if (campaign.measurements.size() < 3) fail("campaign.measurements must list at least 3 potential sets", 0);
    std::set<std::string> seen;
    for (const auto& l : campaign.measurements) {
        defined(l, "campaign.measurements");
        if (!seen.insert(l).second) fail("campaign.measurements lists '" + l + "' twice", 0);
    }
    if (!campaign.held_out.empty()) {
        defined(campaign.held_out, "campaign.held_out");
        if (seen.count(campaign.held_out)) fail("campaign.held_out must not be a measurement set", 0);
    }
    if (!campaign.compensated.empty()) defined(campaign.compensated, "campaign.compensated");
    if (!(campaign.fz >= 0)) fail("campaign.fz must be >= 0", 0);
    if (!reconstruction.fz && campaign.compensated.empty())
        fail("reconstruction.fz = auto needs campaign.compensated", 0);

    const auto& s = spectroscopy;
    if (!(s.detuning_step > 0) || !(s.detuning_max > s.detuning_min)) fail("spectroscopy detuning range is empty", 0);
    if (s.detunings().size() < 5) fail("spectroscopy needs at least 5 detunings", 0);
    if (!(s.pulse_ns > 0)) fail("spectroscopy.pulse_ns must be positive", 0);
    if (!(s.depth > 0)) fail("spectroscopy.depth must be positive", 0);
    if (!(s.noise_sigma >= 0)) fail("spectroscopy.noise_sigma must be >= 0", 0);
    if (s.noise_sigma > 0 && !s.seed) fail("spectroscopy.seed is required when noise_sigma > 0", 0);
    if (s.binning < 1) fail("spectroscopy.binning must be >= 1", 0);

    const auto& r = reconstruction;
    if (r.method == ReconMethod::RandomSearch && !r.seed) fail("reconstruction.seed is required for random-search", 0);
    if (r.budget < 100) fail("reconstruction.budget must be >= 100", 0);
    if (!(r.max_condition > 1)) fail("reconstruction.max_condition must exceed 1", 0);
    if (r.fz && !(*r.fz >= 0)) fail("reconstruction.fz must be >= 0", 0);

    for (int e = 0; e < 4; ++e)
        if (!(compensation.bounds.lo[e] <= compensation.bounds.hi[e])) fail("compensation.v_min exceeds v_max", 0);
    if (!(compensation.rcond > 0)) fail("compensation.rcond must be positive", 0);

    const auto& m = microwave;
    if (m.theta.size() < 5) fail("microwave needs at least 5 amplitudes", 0);
    for (std::size_t k = 0; k < m.theta.size(); ++k)
        if (m.theta[k] < 0 || (k > 0 && !(m.theta[k] > m.theta[k - 1])))
            fail("microwave.theta must be nonnegative and strictly ascending", 0);
    if (!(m.theta_max > 0) || !(m.pulse_ns > 0) || !(m.tau_ns > 0) || !(m.amplitude > 0))
        fail("microwave theta_max, pulse_ns, tau_ns and amplitude must be positive", 0);
    if (m.mode_a == 0 && m.mode_b == 0) fail("microwave mode weights are both zero", 0);
    if (!(m.noise_sigma >= 0)) fail("microwave.noise_sigma must be >= 0", 0);
    if (m.noise_sigma > 0 && !m.seed) fail("microwave.seed is required when noise_sigma > 0", 0);
}

std::string PipelineConfig::canonical() const {
    std::ostringstream os;
    os << geometry.canonical() << '\n';
    put(os, "grid.dx", dx);
    put(os, "grid.dy", dy);
    put(os, "solver.omega", solver.omega);
    put(os, "solver.tol", solver.tol);
    os << "solver.max_iter=" << solver.max_iter << '\n';
    put(os, "charges.sigma_g", charges.sigma_g);
    put(os, "charges.sigma_s", charges.sigma_s);
    for (std::size_t k = 0; k < beam.polygon.x.size(); ++k)
        os << "beam.vertex=" << format_double(beam.polygon.x[k]) << ',' << format_double(beam.polygon.y[k]) << '\n';
    put(os, "beam.region_y_min", beam.region_y_min);
    for (const auto& [label, e] : potentials) {
        os << "potentials." << label << '=' << format_double(e.pots.v_c) << ',' << format_double(e.pots.v_l) << ','
           << format_double(e.pots.v_r) << ',' << format_double(e.pots.v_s) << ','
           << (e.relative ? "compensation" : "zero") << '\n';
    }
    os << "campaign.measurements=";
    for (const auto& l : campaign.measurements) os << l << ';';
    os << "\ncampaign.held_out=" << campaign.held_out << "\ncampaign.compensated=" << campaign.compensated << '\n';
    put(os, "campaign.fz", campaign.fz);
    const auto& s = spectroscopy;
    put(os, "spectroscopy.detuning_min", s.detuning_min);
    put(os, "spectroscopy.detuning_max", s.detuning_max);
    put(os, "spectroscopy.detuning_step", s.detuning_step);
    put(os, "spectroscopy.pulse_ns", s.pulse_ns);
    put(os, "spectroscopy.depth", s.depth);
    os << "spectroscopy.shape=" << line_shape_name(s.shape) << '\n';
    put(os, "spectroscopy.noise_sigma", s.noise_sigma);
    put_seed(os, "spectroscopy.seed", s.seed);
    os << "spectroscopy.binning=" << s.binning << "\nspectroscopy.bin_mode="
       << (s.bin_mode == BinMode::Mean ? "mean" : "sum") << '\n';
    const auto& r = reconstruction;
    os << "reconstruction.method=" << method_name(r.method) << '\n';
    if (r.bounds)
        os << "reconstruction.bounds=" << format_double(r.bounds->x_lo) << ',' << format_double(r.bounds->x_hi) << ','
           << format_double(r.bounds->y_lo) << ',' << format_double(r.bounds->y_hi) << '\n';
    else
        os << "reconstruction.bounds=auto\n";
    os << "reconstruction.budget=" << r.budget << '\n';
    put_seed(os, "reconstruction.seed", r.seed);
    put(os, "reconstruction.max_condition", r.max_condition);
    os << "reconstruction.fz=" << (r.fz ? format_double(*r.fz) : "auto") << '\n';
    for (int e = 0; e < 4; ++e)
        os << "compensation.bounds=" << format_double(compensation.bounds.lo[e]) << ','
           << format_double(compensation.bounds.hi[e]) << '\n';
    put(os, "compensation.rcond", compensation.rcond);
    const auto& m = microwave;
    os << "microwave.theta=";
    for (double t : m.theta) os << format_double(t) << ';';
    os << '\n';
    put(os, "microwave.theta_max", m.theta_max);
    put(os, "microwave.pulse_ns", m.pulse_ns);
    put(os, "microwave.tau_ns", m.tau_ns);
    put(os, "microwave.f_mw", m.f_mw);
    put(os, "microwave.amplitude", m.amplitude);
    put(os, "microwave.mode_a", m.mode_a);
    put(os, "microwave.mode_b", m.mode_b);
    put(os, "microwave.noise_sigma", m.noise_sigma);
    put_seed(os, "microwave.seed", m.seed);
    // The output directory and heatmap switch do not change any result.
    return os.str();
}

void PipelineConfig::override_seed(std::uint64_t seed) {
    spectroscopy.seed = seed;
    reconstruction.seed = seed;
    microwave.seed = seed;
}

PipelineConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read config '" + path.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    if (is.bad()) throw IoError("error reading config '" + path.string() + "'");
    PipelineConfig cfg = parse_config(ss.str());
    if (seed) cfg.override_seed(*seed);
    cfg.validate();
    return cfg;
}

}  // namespace starkmap
