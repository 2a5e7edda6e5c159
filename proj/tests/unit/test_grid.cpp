#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "starkmap/error.hpp"
#include "starkmap/grid.hpp"
#include "starkmap/textio.hpp"

using namespace starkmap;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "starkmap_test_grid";
    fs::create_directories(dir);
    return dir / name;
}

ScalarGrid ramp_grid() {
    GridSpec s{5, 4, 23.0, 23.0, -46.0, 0.0};
    ScalarGrid g(s, Unit::MHz);
    for (int iy = 0; iy < s.ny; ++iy)
        for (int ix = 0; ix < s.nx; ++ix) g.at(ix, iy) = 0.1 * ix + 1.0 / 3.0 * iy;
    return g;
}

double luminance(Rgb c) { return 0.2126 * c.r + 0.7152 * c.g + 0.0722 * c.b; }

}  // namespace

TEST_CASE("centered box is symmetric about x = 0") {
    const auto g = GridSpec::centered_box(6000.0, 4000.0, 23.0, 23.0);
    CHECK(g.nx == 262);
    CHECK(g.ny == 175);
    CHECK(g.x(0) == doctest::Approx(-g.x(g.nx - 1)));
    CHECK(g.y(0) == 0.0);
}

TEST_CASE("grid validation rejects degenerate specs") {
    CHECK_THROWS_AS((GridSpec{1, 5, 1.0, 1.0, 0, 0}.validate()), ConfigError);
    CHECK_THROWS_AS((GridSpec{5, 5, 0.0, 1.0, 0, 0}.validate()), ConfigError);
    CHECK_THROWS_AS((GridSpec{5, 5, 1.0, -1.0, 0, 0}.validate()), ConfigError);
    CHECK_NOTHROW((GridSpec{2, 2, 1.0, 1.0, 0, 0}.validate()));
}

TEST_CASE("binned spec places cells at block centroids") {
    GridSpec s{10, 7, 2.0, 3.0, 1.0, 5.0};
    const auto b = s.binned(3);
    CHECK(b.nx == 3);
    CHECK(b.ny == 2);
    CHECK(b.dx == 6.0);
    CHECK(b.x(0) == doctest::Approx((s.x(0) + s.x(1) + s.x(2)) / 3.0));
    CHECK(b.y(1) == doctest::Approx((s.y(3) + s.y(4) + s.y(5)) / 3.0));
    CHECK(s.binned(1) == s);
    CHECK_THROWS_AS(s.binned(0), ConfigError);
}

TEST_CASE("scalar grid file round trip is bit exact, masks included") {
    auto g = ramp_grid();
    g.mask[3] = 1;
    g.values[3] = std::nan("");
    g.values[7] = 1e-300;
    g.values[8] = -0.1 - 0.2;
    const auto p = scratch("scalar.csv");
    write_grid(g, p, {"note test"});
    const auto back = read_scalar_grid(p);
    CHECK(identical(g, back));
    const auto header = read_header_lines(p);
    CHECK(std::find(header.begin(), header.end(), "note test") != header.end());
}

TEST_CASE("vector grid file round trip is bit exact") {
    GridSpec s{3, 3, 1.5, 2.5, -1.5, 0.25};
    VectorGrid v(s);
    std::mt19937_64 eng(7);
    std::normal_distribution<double> n;
    for (std::size_t i = 0; i < s.size(); ++i) {
        v.fx[i] = n(eng);
        v.fy[i] = n(eng) * 1e-7;
    }
    v.mask[4] = 1;
    const auto p = scratch("vector.csv");
    write_grid(v, p);
    CHECK(identical(v, read_vector_grid(p)));
    CHECK_THROWS_AS(read_scalar_grid(p), ParseError);
}

TEST_CASE("format_double round trips random doubles") {
    std::mt19937_64 eng(11);
    for (int k = 0; k < 10000; ++k) {
        std::uint64_t bits = eng();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        if (!std::isfinite(v)) continue;
        CHECK(parse_number(format_double(v), 0) == v);
    }
}

TEST_CASE("malformed grid files report the offending line") {
    const auto p = scratch("bad.csv");
    {
        std::ofstream os(p);
        os << "# gridspec 2 2 1 1 0 0\n# kind scalar\n# unit MHz\n0,0,1\n1,0,2\n0,1,x\n1,1,4\n";
    }
    try {
        read_scalar_grid(p);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 6);
    }
    {
        std::ofstream os(p);
        os << "# gridspec 2 2 1 1 0 0\n# kind scalar\n# unit MHz\n0,0,1\n1,0,2\n";
    }
    CHECK_THROWS_AS(read_scalar_grid(p), ParseError);
    {
        std::ofstream os(p);
        os << "# gridspec 2 2 1 1 0 0\n# kind scalar\n# unit furlongs\n";
    }
    CHECK_THROWS_AS(read_scalar_grid(p), ParseError);
    {
        std::ofstream os(p);
        os << "# gridspec 2 2 1 1 0 0\n# kind scalar\n# unit MHz\n1,0,1\n0,0,2\n0,1,3\n1,1,4\n";
    }
    CHECK_THROWS_AS(read_scalar_grid(p), ParseError);
    CHECK_THROWS_AS(read_scalar_grid(scratch("does_not_exist.csv")), IoError);
}

TEST_CASE("bin_grid averages unmasked pixels and masks empty blocks") {
    GridSpec s{4, 4, 1.0, 1.0, 0.0, 0.0};
    ScalarGrid g(s, Unit::MHz);
    for (std::size_t i = 0; i < s.size(); ++i) g.values[i] = static_cast<double>(i);
    g.mask[s.index(0, 0)] = 1;
    g.mask[s.index(2, 0)] = g.mask[s.index(3, 0)] = g.mask[s.index(2, 1)] = g.mask[s.index(3, 1)] = 1;
    const auto b = bin_grid(g, 2);
    CHECK(b.spec.nx == 2);
    CHECK(b.values[0] == doctest::Approx((1.0 + 4.0 + 5.0) / 3.0));
    CHECK(b.values[2] == doctest::Approx((8.0 + 9.0 + 12.0 + 13.0) / 4.0));
    CHECK(b.mask[1] == 1);
    CHECK(identical(bin_grid(g, 1), g));
}

TEST_CASE("region mask keeps pixels inside the polygon and above y_min") {
    GridSpec s{11, 11, 100.0, 100.0, -500.0, 0.0};
    Polygon square{{-250, 250, 250, -250}, {250, 250, 750, 750}};
    const auto m = region_mask(s, square);
    CHECK(m[s.index(5, 5)] == 0);
    CHECK(m[s.index(0, 0)] == 1);
    CHECK(m[s.index(5, 1)] == 1);
    const auto m2 = region_mask(s, square, 600.0);
    CHECK(m2[s.index(5, 5)] == 1);
    CHECK(m2[s.index(5, 7)] == 0);
}

TEST_CASE("color ramp luminance is monotone") {
    double prev = -1.0;
    for (int k = 0; k <= 1000; ++k) {
        const double l = luminance(ramp_color(k / 1000.0));
        CHECK(l >= prev - 0.75);  // 8-bit rounding
        prev = l;
    }
    CHECK(luminance(ramp_color(1.0)) > luminance(ramp_color(0.5)));
    CHECK(luminance(ramp_color(0.5)) > luminance(ramp_color(0.0)));
}

TEST_CASE("heatmap writes a PPM, a scale sidecar and black masked pixels") {
    auto g = ramp_grid();
    g.mask[g.spec.index(0, g.spec.ny - 1)] = 1;  // top-left in the image
    const auto p = scratch("heat.ppm");
    const auto sc = render_heatmap(g, p);
    CHECK(sc.min == doctest::Approx(0.0));
    std::ifstream is(p, std::ios::binary);
    std::string magic;
    int w, h, maxv;
    is >> magic >> w >> h >> maxv;
    is.get();
    CHECK(magic == "P6");
    CHECK(w == g.spec.nx);
    CHECK(h == g.spec.ny);
    unsigned char px[3];
    is.read(reinterpret_cast<char*>(px), 3);
    CHECK(px[0] == 0);
    CHECK(px[1] == 0);
    CHECK(px[2] == 0);
    auto side = p;
    side += ".scale.txt";
    CHECK(fs::exists(side));

    auto all = ramp_grid();
    std::fill(all.mask.begin(), all.mask.end(), 1);
    CHECK_THROWS_AS(render_heatmap(all, p), DomainError);
}
