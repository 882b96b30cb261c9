#pragma once

#include <complex>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "sparsemp/errors.hpp"

namespace sparsemp::io {

/// Round-trip decimal representation; identical bytes for identical doubles.
inline std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline nlohmann::json complex_json(std::complex<double> c) {
    return nlohmann::json{{"re", c.real()}, {"im", c.imag()}};
}

/// Non-finite values become null so every report stays valid JSON.
inline nlohmann::json number_or_null(double x) {
    return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    return os;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    auto os = open_output(path);
    os << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ParameterError("cannot read config '" + path.string() + "'");
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParameterError("malformed JSON in '" + path.string() + "': " + e.what());
    }
}

/// Minimal CSV row writer: numbers use fmt(), strings are written verbatim.
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& os) : os_(os) {}

    CsvWriter& field(double x) { return raw(fmt(x)); }
    CsvWriter& field(std::size_t x) { return raw(std::to_string(x)); }
    CsvWriter& field(int x) { return raw(std::to_string(x)); }
    CsvWriter& field(std::string_view s) { return raw(s); }

    void end_row() {
        os_ << '\n';
        first_ = true;
    }

    template <class... Ts>
    void row(const Ts&... xs) {
        (field(xs), ...);
        end_row();
    }

private:
    CsvWriter& raw(std::string_view s) {
        if (!first_) os_ << ',';
        os_ << s;
        first_ = false;
        return *this;
    }
    std::ostream& os_;
    bool first_ = true;
};

}  // namespace sparsemp::io
