#include <sstream>

#include "starkmap/error.hpp"
#include "starkmap/spectroscopy.hpp"
#include "starkmap/textio.hpp"

namespace starkmap {

void write_stack(const SpectrumStack& s, const std::filesystem::path& path, const HeaderLines& extra) {
    s.validate();
    auto os = open_out(path);
    const GridSpec& g = s.spec;
    os << "# gridspec " << g.nx << ' ' << g.ny << ' ' << format_double(g.dx) << ' ' << format_double(g.dy) << ' '
       << format_double(g.x0) << ' ' << format_double(g.y0) << '\n';
    os << "# kind spectrum_stack\n# detunings";
    for (double d : s.detunings) os << ' ' << format_double(d);
    os << "\n# pulse_ns " << format_double(s.acq.pulse_ns) << "\n# amplitude_tag " << s.acq.amplitude_tag
       << "\n# binning " << s.acq.binning << "\n# noise_sigma " << format_double(s.acq.noise_sigma)
       << "\n# noise_seed " << s.acq.noise_seed << '\n';
    for (const auto& line : extra) os << "# " << line << '\n';
    os << "ix,iy,detuning_MHz,intensity\n";
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix) {
            const auto i = g.index(ix, iy);
            if (s.mask[i]) continue;
            const auto px = s.pixel(i);
            for (std::size_t k = 0; k < s.depth(); ++k)
                os << ix << ',' << iy << ',' << format_double(s.detunings[k]) << ',' << format_double(px[k]) << '\n';
        }
    finish(os, path);
}

SpectrumStack read_stack(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    std::optional<GridSpec> spec;
    std::vector<double> det;
    Acquisition acq;
    bool kind_ok = false;
    SpectrumStack s;
    std::vector<std::size_t> seen;  // detunings filled per pixel
    bool started = false;
    std::string text;
    int line = 0;
    while (std::getline(is, text)) {
        ++line;
        std::string_view v = trim(text);
        if (v.empty()) continue;
        if (v.front() == '#') {
            if (started) throw ParseError("header line after data rows", line);
            std::istringstream hs{std::string(v.substr(1))};
            std::string key;
            hs >> key;
            if (key == "gridspec") {
                GridSpec g;
                if (!(hs >> g.nx >> g.ny >> g.dx >> g.dy >> g.x0 >> g.y0)) throw ParseError("malformed gridspec", line);
                try {
                    g.validate();
                } catch (const ConfigError& e) {
                    throw ParseError(e.what(), line);
                }
                spec = g;
            } else if (key == "kind") {
                std::string k;
                hs >> k;
                if (k != "spectrum_stack") throw ParseError("not a spectrum stack (kind '" + k + "')", line);
                kind_ok = true;
            } else if (key == "detunings") {
                std::string tok;
                while (hs >> tok) det.push_back(parse_number(tok, line));
            } else if (key == "pulse_ns") {
                hs >> acq.pulse_ns;
            } else if (key == "amplitude_tag") {
                hs >> acq.amplitude_tag;
            } else if (key == "binning") {
                hs >> acq.binning;
            } else if (key == "noise_sigma") {
                hs >> acq.noise_sigma;
            } else if (key == "noise_seed") {
                hs >> acq.noise_seed;
            }
            continue;
        }
        if (!started) {
            if (!spec || !kind_ok || det.empty()) throw ParseError("data before complete stack header", line);
            s = SpectrumStack(*spec, det);
            s.acq = acq;
            std::fill(s.mask.begin(), s.mask.end(), 1);
            seen.assign(spec->size(), 0);
            try {
                s.validate();
            } catch (const ConfigError& e) {
                throw ParseError(e.what(), line);
            }
            started = true;
            if (v.substr(0, 3) == "ix,") continue;
        }
        const auto tok = split(v, ',');
        if (tok.size() != 4) throw ParseError("expected 4 fields ix,iy,detuning_MHz,intensity", line);
        const int ix = parse_int(trim(tok[0]), line), iy = parse_int(trim(tok[1]), line);
        if (!spec->contains(ix, iy)) throw ParseError("pixel outside the grid", line);
        const auto i = spec->index(ix, iy);
        const std::size_t k = seen[i];
        if (k >= det.size()) throw ParseError("too many detunings for pixel", line);
        if (parse_number(trim(tok[2]), line) != det[k]) throw ParseError("detuning does not match header list", line);
        s.pixel(i)[k] = parse_number(trim(tok[3]), line);
        ++seen[i];
    }
    if (!started) {
        if (!spec || !kind_ok || det.empty()) throw ParseError("missing stack header", 0);
        s = SpectrumStack(*spec, det);
        s.acq = acq;
        std::fill(s.mask.begin(), s.mask.end(), 1);
        return s;
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (seen[i] == 0) continue;
        if (seen[i] != det.size()) throw ParseError("pixel with incomplete spectrum", line);
        s.mask[i] = 0;
    }
    return s;
}

}  // namespace starkmap
