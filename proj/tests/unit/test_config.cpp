#include <filesystem>
#include <cmath>
#include <fstream>
#include <string>

#include "doctest.h"
#include "starkmap/config.hpp"
#include "starkmap/error.hpp"

using namespace starkmap;

namespace {

const std::string kMinimal = R"(
[potentials.A]
v_c = 1
[potentials.B]
v_l = 1
[potentials.C]
v_r = 1
[potentials.comp]
base = compensation
[campaign]
measurements = A, B, C
compensated = comp
)";

std::string error_of(const std::string& text) {
    try {
        parse_config(text).validate();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("minimal config keeps defaults") {
    const auto cfg = parse_config(kMinimal);
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.dx == 23.0);
    CHECK(cfg.campaign.measurements == std::vector<std::string>{"A", "B", "C"});
    CHECK(cfg.potentials.at("A").pots.v_c == 1.0);
    CHECK_FALSE(cfg.potentials.at("A").relative);
    CHECK(cfg.spectroscopy.detunings().front() == -5.0);
    CHECK(cfg.spectroscopy.detunings().back() == doctest::Approx(45.0));
}

TEST_CASE("values, lists and relative sets are parsed") {
    const auto cfg = parse_config(kMinimal + R"(
[grid]
dx = 10   ; trailing comment
dy = 12
[potentials.E]
base = compensation
v_s = -0.5
[beam]
x = -1 1 1 -1
y = 0,0,2,2
[microwave]
tau_ns = inf
theta_count = 5
)");
    CHECK(cfg.dx == 10.0);
    CHECK(cfg.dy == 12.0);
    CHECK(cfg.potentials.at("E").relative);
    CHECK(cfg.potentials.at("E").pots.v_s == -0.5);
    CHECK(cfg.beam.polygon.y == std::vector<double>{0, 0, 2, 2});
    CHECK(std::isinf(cfg.microwave.tau_ns));
    REQUIRE(cfg.microwave.theta.size() == 5);
    CHECK(cfg.microwave.theta.back() == doctest::Approx(cfg.microwave.theta_max));
}

TEST_CASE("errors carry the line number") {
    CHECK(error_of("[grid]\ndx = 1\n\nbogus = 2\n").find("line 4") != std::string::npos);
    CHECK(error_of("[nowhere]\n").find("line 1") != std::string::npos);
    CHECK(error_of(kMinimal + "[grid]\ndx = abc\n").find("dx") != std::string::npos);
    CHECK_FALSE(error_of("[grid]\ndx = 1\ndx = 2\n").empty());
    CHECK_FALSE(error_of("[grid]\n[grid]\n").empty());
    CHECK_FALSE(error_of("dx = 1\n").empty());
}

TEST_CASE("validation rejects inconsistent campaigns") {
    CHECK(error_of(kMinimal).empty());
    CHECK_FALSE(error_of(kMinimal + "[grid]\ndx = 0\n").empty());
    CHECK_FALSE(error_of("[potentials.A]\n[potentials.B]\n[campaign]\nmeasurements = A B\n").empty());
    CHECK(error_of(R"([potentials.A]
[potentials.B]
[campaign]
measurements = A B Z
)").find("Z") != std::string::npos);
    CHECK_FALSE(error_of(kMinimal + "[spectroscopy]\nnoise_sigma = 0.1\n").empty());
    CHECK(error_of(kMinimal + "[spectroscopy]\nnoise_sigma = 0.1\nseed = 4\n").empty());
    CHECK_FALSE(error_of(kMinimal + "[reconstruction]\nmethod = random-search\n").empty());
    CHECK_FALSE(error_of("[potentials.A]\n[potentials.B]\n[potentials.C]\n[campaign]\nmeasurements = A B C\n").empty());
    CHECK(error_of("[potentials.A]\n[potentials.B]\n[potentials.C]\n[campaign]\nmeasurements = A B C\n"
                   "[reconstruction]\nfz = 0.04\n").empty());
    CHECK_FALSE(error_of(kMinimal + "[microwave]\ntheta = 1e-6\ntheta_count = 3\n").empty());
}

TEST_CASE("hash ignores formatting, comments and the output location") {
    const auto a = parse_config(kMinimal);
    const auto b = parse_config("# leading comment\n" + kMinimal + "\n[output]\ndir = elsewhere\nheatmaps = false\n");
    CHECK(a.hash() == b.hash());
    const auto c = parse_config(kMinimal + "[grid]\ndx = 22\n");
    CHECK(a.hash() != c.hash());
    const auto d = parse_config(kMinimal + "[grid]\ndx = 23.0\n");
    CHECK(a.hash() == d.hash());
}

TEST_CASE("seed override reaches every stream and changes the hash") {
    auto cfg = parse_config(kMinimal + "[spectroscopy]\nnoise_sigma = 0.1\nseed = 1\n");
    const auto h = cfg.hash();
    cfg.override_seed(99);
    CHECK(cfg.spectroscopy.seed == 99u);
    CHECK(cfg.reconstruction.seed == 99u);
    CHECK(cfg.microwave.seed == 99u);
    CHECK(cfg.hash() != h);
}

TEST_CASE("load_config separates I/O from content errors") {
    const auto dir = std::filesystem::temp_directory_path() / "starkmap_test_config";
    std::filesystem::create_directories(dir);
    CHECK_THROWS_AS(load_config(dir / "absent.cfg"), IoError);

    {
        std::ofstream(dir / "noisy.cfg") << kMinimal << "[spectroscopy]\nnoise_sigma = 0.1\n";
    }
    CHECK_THROWS_AS(load_config(dir / "noisy.cfg"), ConfigError);
    const auto cfg = load_config(dir / "noisy.cfg", 7);
    CHECK(cfg.spectroscopy.seed == 7u);
    std::filesystem::remove_all(dir);
}

TEST_CASE("shipped default config is valid") {
    const auto cfg = load_config(STARKMAP_DEFAULT_CONFIG);
    CHECK(cfg.campaign.measurements.size() >= 3);
    CHECK_FALSE(cfg.campaign.held_out.empty());
}
