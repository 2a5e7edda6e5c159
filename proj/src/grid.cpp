#include "starkmap/grid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "starkmap/error.hpp"
#include "starkmap/textio.hpp"

namespace starkmap {

std::string_view unit_name(Unit u) noexcept {
    switch (u) {
        case Unit::MHz: return "MHz";
        case Unit::VPerCm: return "V/cm";
        case Unit::MilliVPerCm: return "mV/cm";
        case Unit::Volt: return "V";
        case Unit::Dimensionless: return "1";
        case Unit::RadPerNsPerVolt: return "rad/ns/V";
    }
    return "1";
}

Unit parse_unit(std::string_view s) {
    for (Unit u : {Unit::MHz, Unit::VPerCm, Unit::MilliVPerCm, Unit::Volt, Unit::Dimensionless,
                   Unit::RadPerNsPerVolt})
        if (unit_name(u) == s) return u;
    throw ConfigError("unknown unit '" + std::string(s) + "'");
}

void GridSpec::validate() const {
    if (nx < 2 || ny < 2) throw ConfigError("grid needs nx, ny >= 2, got " + describe(*this));
    if (!(dx > 0.0) || !(dy > 0.0)) throw ConfigError("grid needs dx, dy > 0, got " + describe(*this));
    if (!std::isfinite(x0) || !std::isfinite(y0)) throw ConfigError("grid origin must be finite");
}

GridSpec GridSpec::centered_box(double width, double height, double dx, double dy) {
    if (!(width > 0.0) || !(height > 0.0) || !(dx > 0.0) || !(dy > 0.0))
        throw ConfigError("centered_box needs positive extents and spacings");
    GridSpec g;
    g.dx = dx;
    g.dy = dy;
    g.nx = static_cast<int>(std::lround(width / dx)) + 1;
    g.ny = static_cast<int>(std::lround(height / dy)) + 1;
    g.x0 = -0.5 * (g.nx - 1) * dx;
    g.y0 = 0.0;
    g.validate();
    return g;
}

GridSpec GridSpec::binned(int k) const {
    if (k < 1) throw ConfigError("binning factor must be >= 1");
    if (k == 1) return *this;
    GridSpec g;
    g.nx = nx / k;
    g.ny = ny / k;
    g.dx = dx * k;
    g.dy = dy * k;
    g.x0 = x0 + 0.5 * (k - 1) * dx;
    g.y0 = y0 + 0.5 * (k - 1) * dy;
    g.validate();
    return g;
}

std::string describe(const GridSpec& g) {
    std::ostringstream os;
    os << g.nx << "x" << g.ny << " cells, d=(" << g.dx << "," << g.dy << ") um, origin=(" << g.x0 << "," << g.y0
       << ") um";
    return os.str();
}

std::size_t ScalarGrid::unmasked_count() const {
    std::size_t n = 0;
    for (auto m : mask) n += (m == 0);
    return n;
}

std::size_t VectorGrid::unmasked_count() const {
    std::size_t n = 0;
    for (auto m : mask) n += (m == 0);
    return n;
}

ScalarGrid VectorGrid::magnitude() const {
    ScalarGrid out(spec, Unit::VPerCm);
    for (std::size_t i = 0; i < fx.size(); ++i) out.values[i] = std::hypot(fx[i], fy[i]);
    out.mask = mask;
    return out;
}

namespace {

bool same_bits(double a, double b) {
    if (std::isnan(a) && std::isnan(b)) return true;
    return std::memcmp(&a, &b, sizeof(double)) == 0;
}

bool same_values(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!same_bits(a[i], b[i])) return false;
    return true;
}

}  // namespace

bool identical(const ScalarGrid& a, const ScalarGrid& b) {
    return a.spec == b.spec && a.unit == b.unit && a.mask == b.mask && same_values(a.values, b.values);
}

bool identical(const VectorGrid& a, const VectorGrid& b) {
    return a.spec == b.spec && a.mask == b.mask && same_values(a.fx, b.fx) && same_values(a.fy, b.fy);
}

Mask mask_union(const Mask& a, const Mask& b) {
    if (a.size() != b.size()) throw ConfigError("mask size mismatch");
    Mask out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] || b[i]) ? 1 : 0;
    return out;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

// -- CSV grid I/O -------------------------------------------------------------

namespace {

void write_header(std::ostream& os, const GridSpec& s, std::string_view kind, Unit u, const HeaderLines& extra) {
    os << "# gridspec " << s.nx << ' ' << s.ny << ' ' << format_double(s.dx) << ' ' << format_double(s.dy) << ' '
       << format_double(s.x0) << ' ' << format_double(s.y0) << '\n';
    os << "# kind " << kind << '\n';
    os << "# unit " << unit_name(u) << '\n';
    for (const auto& line : extra) os << "# " << line << '\n';
}

}  // namespace

void write_grid(const ScalarGrid& g, const std::filesystem::path& path, const HeaderLines& extra) {
    auto os = open_out(path);
    write_header(os, g.spec, "scalar", g.unit, extra);
    for (int iy = 0; iy < g.spec.ny; ++iy)
        for (int ix = 0; ix < g.spec.nx; ++ix) {
            const auto i = g.spec.index(ix, iy);
            os << ix << ',' << iy << ',' << format_double(g.values[i]);
            if (g.mask[i]) os << ",m";
            os << '\n';
        }
    finish(os, path);
}

void write_grid(const VectorGrid& g, const std::filesystem::path& path, const HeaderLines& extra) {
    auto os = open_out(path);
    write_header(os, g.spec, "vector", Unit::VPerCm, extra);
    for (int iy = 0; iy < g.spec.ny; ++iy)
        for (int ix = 0; ix < g.spec.nx; ++ix) {
            const auto i = g.spec.index(ix, iy);
            os << ix << ',' << iy << ',' << format_double(g.fx[i]) << ',' << format_double(g.fy[i]);
            if (g.mask[i]) os << ",m";
            os << '\n';
        }
    finish(os, path);
}

AnyGrid read_grid(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "'");

    std::optional<GridSpec> spec;
    std::optional<bool> vector;
    Unit unit = Unit::Dimensionless;
    bool have_unit = false;

    std::vector<double> a, b;
    Mask mask;
    std::size_t row = 0;
    std::string text;
    int line = 0;
    while (std::getline(is, text)) {
        ++line;
        std::string_view s = trim(text);
        if (s.empty()) continue;
        if (s.front() == '#') {
            if (row > 0) throw ParseError("header line after data rows", line);
            std::istringstream hs{std::string(s.substr(1))};
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
                if (k == "scalar")
                    vector = false;
                else if (k == "vector")
                    vector = true;
                else
                    throw ParseError("unknown grid kind '" + k + "'", line);
            } else if (key == "unit") {
                std::string u;
                hs >> u;
                try {
                    unit = parse_unit(u);
                } catch (const ConfigError& e) {
                    throw ParseError(e.what(), line);
                }
                have_unit = true;
            }
            continue;
        }
        if (!spec || !vector || !have_unit) throw ParseError("data before complete header", line);
        if (row == 0) {
            a.assign(spec->size(), 0.0);
            if (*vector) b.assign(spec->size(), 0.0);
            mask.assign(spec->size(), 0);
        }
        if (row >= spec->size())
            throw ParseError("more rows than gridspec " + std::to_string(spec->nx) + "x" + std::to_string(spec->ny) +
                                 " allows",
                             line);
        auto tok = split(s, ',');
        const std::size_t nval = *vector ? 2 : 1;
        bool masked = false;
        if (tok.size() == 3 + nval && trim(tok.back()) == "m") {
            masked = true;
            tok.pop_back();
        }
        if (tok.size() != 2 + nval) throw ParseError("expected " + std::to_string(2 + nval) + " fields", line);
        const int ix = parse_int(trim(tok[0]), line);
        const int iy = parse_int(trim(tok[1]), line);
        const int ex = static_cast<int>(row % spec->nx);
        const int ey = static_cast<int>(row / spec->nx);
        if (ix != ex || iy != ey)
            throw ParseError("cell (" + std::to_string(ix) + "," + std::to_string(iy) + ") out of row-major order", line);
        const double v0 = parse_number(trim(tok[2]), line);
        const double v1 = *vector ? parse_number(trim(tok[3]), line) : 0.0;
        if (!masked && (!std::isfinite(v0) || !std::isfinite(v1)))
            throw ParseError("non-finite value without mask flag", line);
        a[row] = v0;
        if (*vector) b[row] = v1;
        mask[row] = masked ? 1 : 0;
        ++row;
    }
    if (!spec || !vector || !have_unit) throw ParseError("missing gridspec/kind/unit header", 0);
    if (row != spec->size())
        throw ParseError("expected " + std::to_string(spec->size()) + " rows, found " + std::to_string(row), line);

    if (*vector) {
        VectorGrid g(*spec);
        g.fx = std::move(a);
        g.fy = std::move(b);
        g.mask = std::move(mask);
        return g;
    }
    ScalarGrid g(*spec, unit);
    g.values = std::move(a);
    g.mask = std::move(mask);
    return g;
}

ScalarGrid read_scalar_grid(const std::filesystem::path& path) {
    auto g = read_grid(path);
    if (auto* s = std::get_if<ScalarGrid>(&g)) return std::move(*s);
    throw ParseError("'" + path.string() + "' holds a vector grid, scalar expected", 0);
}

VectorGrid read_vector_grid(const std::filesystem::path& path) {
    auto g = read_grid(path);
    if (auto* v = std::get_if<VectorGrid>(&g)) return std::move(*v);
    throw ParseError("'" + path.string() + "' holds a scalar grid, vector expected", 0);
}

// -- binning and regions ------------------------------------------------------

namespace {

template <class Accum>
void for_each_block(const GridSpec& fine, int k, Accum&& accum) {
    const GridSpec coarse = fine.binned(k);
    for (int by = 0; by < coarse.ny; ++by)
        for (int bx = 0; bx < coarse.nx; ++bx)
            for (int j = 0; j < k; ++j)
                for (int i = 0; i < k; ++i)
                    accum(coarse.index(bx, by), fine.index(bx * k + i, by * k + j));
}

}  // namespace

ScalarGrid bin_grid(const ScalarGrid& g, int k) {
    if (k == 1) return g;
    ScalarGrid out(g.spec.binned(k), g.unit);
    std::vector<int> count(out.spec.size(), 0);
    for_each_block(g.spec, k, [&](std::size_t c, std::size_t f) {
        if (g.mask[f]) return;
        out.values[c] += g.values[f];
        ++count[c];
    });
    for (std::size_t c = 0; c < out.values.size(); ++c) {
        if (count[c] == 0)
            out.mask[c] = 1;
        else
            out.values[c] /= count[c];
    }
    return out;
}

VectorGrid bin_grid(const VectorGrid& g, int k) {
    if (k == 1) return g;
    VectorGrid out(g.spec.binned(k));
    std::vector<int> count(out.spec.size(), 0);
    for_each_block(g.spec, k, [&](std::size_t c, std::size_t f) {
        if (g.mask[f]) return;
        out.fx[c] += g.fx[f];
        out.fy[c] += g.fy[f];
        ++count[c];
    });
    for (std::size_t c = 0; c < out.fx.size(); ++c) {
        if (count[c] == 0) {
            out.mask[c] = 1;
        } else {
            out.fx[c] /= count[c];
            out.fy[c] /= count[c];
        }
    }
    return out;
}

Window window_for(const GridSpec& s, double x_min, double x_max, double y_min, double y_max) {
    s.validate();
    const int ix0 = std::max(0, static_cast<int>(std::ceil((x_min - s.x0) / s.dx - 1e-9)));
    const int ix1 = std::min(s.nx - 1, static_cast<int>(std::floor((x_max - s.x0) / s.dx + 1e-9)));
    const int iy0 = std::max(0, static_cast<int>(std::ceil((y_min - s.y0) / s.dy - 1e-9)));
    const int iy1 = std::min(s.ny - 1, static_cast<int>(std::floor((y_max - s.y0) / s.dy + 1e-9)));
    Window w{ix0, iy0, ix1 - ix0 + 1, iy1 - iy0 + 1};
    if (w.nx < 2 || w.ny < 2) throw ConfigError("analysis window covers fewer than 2x2 cells of " + describe(s));
    return w;
}

GridSpec crop(const GridSpec& s, const Window& w) {
    if (w.ix0 < 0 || w.iy0 < 0 || w.nx < 2 || w.ny < 2 || w.ix0 + w.nx > s.nx || w.iy0 + w.ny > s.ny)
        throw ConfigError("window does not fit inside " + describe(s));
    GridSpec g = s;
    g.nx = w.nx;
    g.ny = w.ny;
    g.x0 = s.x(w.ix0);
    g.y0 = s.y(w.iy0);
    return g;
}

ScalarGrid crop(const ScalarGrid& g, const Window& w) {
    ScalarGrid out(crop(g.spec, w), g.unit);
    for (int iy = 0; iy < w.ny; ++iy)
        for (int ix = 0; ix < w.nx; ++ix) {
            const auto src = g.spec.index(ix + w.ix0, iy + w.iy0), dst = out.spec.index(ix, iy);
            out.values[dst] = g.values[src];
            out.mask[dst] = g.mask[src];
        }
    return out;
}

VectorGrid crop(const VectorGrid& g, const Window& w) {
    VectorGrid out(crop(g.spec, w));
    for (int iy = 0; iy < w.ny; ++iy)
        for (int ix = 0; ix < w.nx; ++ix) {
            const auto src = g.spec.index(ix + w.ix0, iy + w.iy0), dst = out.spec.index(ix, iy);
            out.fx[dst] = g.fx[src];
            out.fy[dst] = g.fy[src];
            out.mask[dst] = g.mask[src];
        }
    return out;
}

bool Polygon::contains(double px, double py) const {
    bool inside = false;
    const std::size_t n = x.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        if (((y[i] > py) != (y[j] > py)) && (px < (x[j] - x[i]) * (py - y[i]) / (y[j] - y[i]) + x[i]))
            inside = !inside;
    }
    return inside;
}

Mask region_mask(const GridSpec& spec, const Polygon& region, std::optional<double> y_min) {
    if (region.x.size() != region.y.size() || region.x.size() < 3)
        throw ConfigError("region polygon needs >= 3 vertices");
    Mask m(spec.size(), 1);
    for (int iy = 0; iy < spec.ny; ++iy)
        for (int ix = 0; ix < spec.nx; ++ix) {
            const double px = spec.x(ix), py = spec.y(iy);
            if (y_min && py < *y_min) continue;
            if (region.contains(px, py)) m[spec.index(ix, iy)] = 0;
        }
    return m;
}

}  // namespace starkmap
