#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace starkmap {

// Canonical units: um (length), V (potential), V/cm (field), MHz (frequency),
// C/m^2 (charge density), ns (time). Conversion only happens at I/O.

enum class Unit { MHz, VPerCm, MilliVPerCm, Volt, Dimensionless, RadPerNsPerVolt };

std::string_view unit_name(Unit u) noexcept;
Unit parse_unit(std::string_view s);

/// Uniform raster over the (x, y) cross-section. x is measured from the CPW
/// center-conductor axis, y from the chip surface; (x0, y0) is the center of
/// cell (0, 0).
struct GridSpec {
    int nx = 2;
    int ny = 2;
    double dx = 23.0;
    double dy = 23.0;
    double x0 = 0.0;
    double y0 = 0.0;

    double x(int ix) const noexcept { return x0 + ix * dx; }
    double y(int iy) const noexcept { return y0 + iy * dy; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
    std::size_t index(int ix, int iy) const noexcept {
        return static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(ix);
    }
    bool contains(int ix, int iy) const noexcept { return ix >= 0 && iy >= 0 && ix < nx && iy < ny; }

    /// Throws ConfigError unless nx, ny >= 2 and dx, dy > 0.
    void validate() const;

    /// Grid spanning [-width/2, width/2] x [0, height], symmetric about x = 0.
    /// The extent is rounded to a whole number of cells.
    static GridSpec centered_box(double width, double height, double dx, double dy);

    /// Grid of k x k blocks; cell centers are block centroids. Trailing
    /// rows/columns that do not fill a block are dropped.
    GridSpec binned(int k) const;

    bool operator==(const GridSpec&) const = default;
};

std::string describe(const GridSpec& g);

/// 1 marks a masked pixel (outside the beam, failed fit, ...).
using Mask = std::vector<std::uint8_t>;

struct ScalarGrid {
    GridSpec spec;
    Unit unit = Unit::Dimensionless;
    std::vector<double> values;
    Mask mask;

    ScalarGrid() = default;
    ScalarGrid(const GridSpec& s, Unit u, double fill = 0.0)
        : spec(s), unit(u), values(s.size(), fill), mask(s.size(), 0) {}

    double& at(int ix, int iy) { return values[spec.index(ix, iy)]; }
    double at(int ix, int iy) const { return values[spec.index(ix, iy)]; }
    bool masked(int ix, int iy) const { return mask[spec.index(ix, iy)] != 0; }
    std::size_t unmasked_count() const;
};

struct VectorGrid {
    GridSpec spec;
    std::vector<double> fx;  // V/cm
    std::vector<double> fy;  // V/cm
    Mask mask;

    VectorGrid() = default;
    explicit VectorGrid(const GridSpec& s) : spec(s), fx(s.size(), 0.0), fy(s.size(), 0.0), mask(s.size(), 0) {}

    bool masked(int ix, int iy) const { return mask[spec.index(ix, iy)] != 0; }
    std::size_t unmasked_count() const;

    /// sqrt(fx^2 + fy^2) elementwise, in V/cm, carrying this grid's mask.
    ScalarGrid magnitude() const;
};

using AnyGrid = std::variant<ScalarGrid, VectorGrid>;

/// Equality used by round-trip checks: same spec/unit/mask, bit-identical
/// values (NaN compares equal to NaN).
bool identical(const ScalarGrid& a, const ScalarGrid& b);
bool identical(const VectorGrid& a, const VectorGrid& b);

/// Union of masks (masked if masked in either).
Mask mask_union(const Mask& a, const Mask& b);

/// Extra `# key value` header lines written after the mandatory header.
using HeaderLines = std::vector<std::string>;

void write_grid(const ScalarGrid& g, const std::filesystem::path& path, const HeaderLines& extra = {});
void write_grid(const VectorGrid& g, const std::filesystem::path& path, const HeaderLines& extra = {});
AnyGrid read_grid(const std::filesystem::path& path);
ScalarGrid read_scalar_grid(const std::filesystem::path& path);
VectorGrid read_vector_grid(const std::filesystem::path& path);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// Block-average of unmasked pixels; a block is masked when all its pixels are.
ScalarGrid bin_grid(const ScalarGrid& g, int k);
VectorGrid bin_grid(const VectorGrid& g, int k);

/// Cells [ix0, ix0 + nx) x [iy0, iy0 + ny) of a larger grid.
struct Window {
    int ix0 = 0;
    int iy0 = 0;
    int nx = 0;
    int ny = 0;
};

/// Cells whose centers lie in [x_min, x_max] x [y_min, y_max]; ConfigError
/// when fewer than 2 x 2 cells qualify.
Window window_for(const GridSpec& s, double x_min, double x_max, double y_min, double y_max);
GridSpec crop(const GridSpec& s, const Window& w);
ScalarGrid crop(const ScalarGrid& g, const Window& w);
VectorGrid crop(const VectorGrid& g, const Window& w);

/// Polygon in um; pixels whose centers lie inside are unmasked.
struct Polygon {
    std::vector<double> x;
    std::vector<double> y;
    bool contains(double px, double py) const;
};

/// Mask that hides everything outside `region` (and, if `y_min` is given,
/// below that height).
Mask region_mask(const GridSpec& spec, const Polygon& region, std::optional<double> y_min = std::nullopt);

// -- heatmaps ---------------------------------------------------------------

struct ColorScale {
    double min = 0.0;
    double max = 1.0;
};

/// Writes a binary P6 image (masked pixels black, y up) plus
/// `<path>.scale.txt` with the scale actually used. Auto scale spans the
/// unmasked values. Throws DomainError on an all-masked grid.
ColorScale render_heatmap(const ScalarGrid& g, const std::filesystem::path& path,
                          std::optional<ColorScale> scale = std::nullopt);

/// Magnitude heatmap upsampled by `zoom`, with a white arrow every `stride`
/// pixels showing the in-plane direction.
ColorScale render_vector_overlay(const VectorGrid& g, const std::filesystem::path& path, int zoom = 4,
                                 int stride = 6);

/// Linear color ramp with monotone luminance; t in [0, 1].
struct Rgb {
    std::uint8_t r, g, b;
};
Rgb ramp_color(double t) noexcept;

}  // namespace starkmap
