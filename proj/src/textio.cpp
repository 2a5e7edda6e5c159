#include "starkmap/textio.hpp"

#include <charconv>
#include <cmath>

#include "starkmap/error.hpp"

namespace starkmap {

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    return os;
}

void finish(std::ofstream& os, const std::filesystem::path& path) {
    os.flush();
    if (!os) throw IoError("write to '" + path.string() + "' failed");
}

double parse_number(std::string_view tok, int line) {
    double v = 0.0;
    if (tok == "nan" || tok == "NaN") return std::nan("");
    if (tok == "inf") return HUGE_VAL;
    if (tok == "-inf") return -HUGE_VAL;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw ParseError("bad number '" + std::string(tok) + "'", line);
    return v;
}

int parse_int(std::string_view tok, int line) {
    int v = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw ParseError("bad integer '" + std::string(tok) + "'", line);
    return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string> read_header_lines(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    std::vector<std::string> out;
    std::string text;
    while (std::getline(is, text)) {
        std::string_view s = trim(text);
        if (s.empty()) continue;
        if (s.front() != '#') break;
        out.emplace_back(trim(s.substr(1)));
    }
    return out;
}

}  // namespace starkmap
