#include <algorithm>
#include <cmath>
#include <fstream>

#include "starkmap/error.hpp"
#include "starkmap/grid.hpp"

namespace starkmap {

namespace {

// Dark blue -> brick red -> pale yellow; luminance rises on both legs.
constexpr double kStops[3][3] = {{30, 30, 120}, {200, 60, 60}, {255, 240, 150}};

struct Image {
    int w = 0, h = 0;
    std::vector<std::uint8_t> px;
    Image(int w_, int h_) : w(w_), h(h_), px(static_cast<std::size_t>(w_) * h_ * 3, 0) {}
    void set(int x, int y, Rgb c) {
        if (x < 0 || y < 0 || x >= w || y >= h) return;
        auto* p = &px[(static_cast<std::size_t>(y) * w + x) * 3];
        p[0] = c.r;
        p[1] = c.g;
        p[2] = c.b;
    }
};

void write_ppm(const Image& img, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << "P6\n" << img.w << ' ' << img.h << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
    if (!os) throw IoError("write to '" + path.string() + "' failed");
}

void write_scale(const ColorScale& sc, Unit u, const std::filesystem::path& path) {
    auto side = path;
    side += ".scale.txt";
    std::ofstream os(side);
    if (!os) throw IoError("cannot open '" + side.string() + "' for writing");
    os << "min " << format_double(sc.min) << "\nmax " << format_double(sc.max) << "\nunit " << unit_name(u) << '\n';
}

ColorScale auto_scale(const std::vector<double>& v, const Mask& m) {
    ColorScale sc{HUGE_VAL, -HUGE_VAL};
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (m[i] || !std::isfinite(v[i])) continue;
        sc.min = std::min(sc.min, v[i]);
        sc.max = std::max(sc.max, v[i]);
    }
    if (sc.min > sc.max) throw DomainError("cannot render heatmap: every pixel is masked");
    return sc;
}

Rgb color_for(double v, const ColorScale& sc) {
    const double span = sc.max - sc.min;
    const double t = span > 0.0 ? (v - sc.min) / span : 0.5;
    return ramp_color(t);
}

}  // namespace

Rgb ramp_color(double t) noexcept {
    t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
    const int leg = t < 0.5 ? 0 : 1;
    const double u = t < 0.5 ? 2.0 * t : 2.0 * t - 1.0;
    auto mix = [&](int c) {
        return static_cast<std::uint8_t>(std::lround(kStops[leg][c] + u * (kStops[leg + 1][c] - kStops[leg][c])));
    };
    return {mix(0), mix(1), mix(2)};
}

ColorScale render_heatmap(const ScalarGrid& g, const std::filesystem::path& path, std::optional<ColorScale> scale) {
    if (g.unmasked_count() == 0) throw DomainError("cannot render heatmap: every pixel is masked");
    const ColorScale sc = scale ? *scale : auto_scale(g.values, g.mask);
    Image img(g.spec.nx, g.spec.ny);
    for (int iy = 0; iy < g.spec.ny; ++iy)
        for (int ix = 0; ix < g.spec.nx; ++ix) {
            const auto i = g.spec.index(ix, iy);
            if (g.mask[i]) continue;
            img.set(ix, g.spec.ny - 1 - iy, color_for(g.values[i], sc));
        }
    write_ppm(img, path);
    write_scale(sc, g.unit, path);
    return sc;
}

ColorScale render_vector_overlay(const VectorGrid& g, const std::filesystem::path& path, int zoom, int stride) {
    zoom = std::max(zoom, 1);
    stride = std::max(stride, 1);
    const ScalarGrid mag = g.magnitude();
    const ColorScale sc = auto_scale(mag.values, mag.mask);
    const int ny = g.spec.ny;
    Image img(g.spec.nx * zoom, ny * zoom);
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < g.spec.nx; ++ix) {
            const auto i = g.spec.index(ix, iy);
            if (g.mask[i]) continue;
            const Rgb c = color_for(mag.values[i], sc);
            for (int a = 0; a < zoom; ++a)
                for (int b = 0; b < zoom; ++b) img.set(ix * zoom + a, (ny - 1 - iy) * zoom + b, c);
        }
    const double len = 0.45 * stride * zoom;
    const Rgb white{255, 255, 255};
    for (int iy = stride / 2; iy < ny; iy += stride)
        for (int ix = stride / 2; ix < g.spec.nx; ix += stride) {
            const auto i = g.spec.index(ix, iy);
            if (g.mask[i] || !(mag.values[i] > 0.0)) continue;
            const double ux = g.fx[i] / mag.values[i], uy = -g.fy[i] / mag.values[i];  // image y points down
            const double cx = (ix + 0.5) * zoom, cy = (ny - 1 - iy + 0.5) * zoom;
            const int steps = static_cast<int>(std::ceil(len)) * 2;
            for (int s = 0; s <= steps; ++s) {
                const double f = -0.5 + static_cast<double>(s) / steps;
                img.set(static_cast<int>(cx + f * len * ux), static_cast<int>(cy + f * len * uy), white);
            }
            // arrow head: a short block at the tip
            const int tx = static_cast<int>(cx + 0.5 * len * ux), ty = static_cast<int>(cy + 0.5 * len * uy);
            for (int a = -1; a <= 1; ++a)
                for (int b = -1; b <= 1; ++b) img.set(tx + a, ty + b, white);
        }
    write_ppm(img, path);
    write_scale(sc, Unit::VPerCm, path);
    return sc;
}

}  // namespace starkmap
