#include <fstream>
#include <sstream>

#include "starkmap/electrostatics.hpp"
#include "starkmap/error.hpp"

namespace starkmap {

namespace {

std::filesystem::path entry_path(const std::filesystem::path& dir, std::string_view kind, std::string_view name) {
    return dir / (std::string(kind) + "_" + std::string(name) + ".csv");
}

}  // namespace

void save_basis(const BasisFields& basis, const std::filesystem::path& dir, const HeaderLines& extra) {
    std::filesystem::create_directories(dir);
    HeaderLines lines = extra;
    lines.push_back("geometry_hash " + hex64(basis.geometry_hash));
    for (auto e : kElectrodes) {
        auto l = lines;
        l.push_back("basis electrode " + std::string(electrode_name(e)) + " per_volt");
        write_grid(basis.of(e), entry_path(dir, "electrode", electrode_name(e)), l);
    }
    for (auto s : kSpecies) {
        auto l = lines;
        l.push_back("basis charge " + std::string(species_name(s)) + " per_C_per_m2");
        write_grid(basis.of(s), entry_path(dir, "charge", species_name(s)), l);
    }
    std::ofstream os(dir / "manifest.txt");
    if (!os) throw IoError("cannot write basis manifest in '" + dir.string() + "'");
    os << "geometry_hash " << hex64(basis.geometry_hash) << '\n';
    for (auto e : kElectrodes) os << "electrode " << electrode_name(e) << ' ' << entry_path(dir, "electrode", electrode_name(e)).filename().string() << '\n';
    for (auto s : kSpecies) os << "charge " << species_name(s) << ' ' << entry_path(dir, "charge", species_name(s)).filename().string() << '\n';
    if (!os) throw IoError("cannot write basis manifest in '" + dir.string() + "'");
}

std::optional<BasisFields> load_basis(const std::filesystem::path& dir, std::uint64_t expected_hash) {
    std::ifstream is(dir / "manifest.txt");
    if (!is) return std::nullopt;
    std::string key, value;
    is >> key >> value;
    if (key != "geometry_hash" || value != hex64(expected_hash)) return std::nullopt;
    BasisFields b;
    b.geometry_hash = expected_hash;
    for (auto e : kElectrodes) b.electrode[static_cast<int>(e)] = read_vector_grid(entry_path(dir, "electrode", electrode_name(e)));
    for (auto s : kSpecies) b.charge[static_cast<int>(s)] = read_vector_grid(entry_path(dir, "charge", species_name(s)));
    b.spec = b.electrode[0].spec;
    for (const auto& g : b.electrode)
        if (!(g.spec == b.spec)) throw ParseError("basis cache entries disagree on grid", 0);
    for (const auto& g : b.charge)
        if (!(g.spec == b.spec)) throw ParseError("basis cache entries disagree on grid", 0);
    return b;
}

}  // namespace starkmap
