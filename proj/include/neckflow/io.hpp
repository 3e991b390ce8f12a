#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "neckflow/errors.hpp"
#include "neckflow/modes.hpp"

namespace neckflow {

using json = nlohmann::json;

// One run of the command-line tool: the command, its config file, the output
// directory, and the seed for randomized sweeps.
struct RunConfig {
    std::string command;
    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 1;
    json params;
};

inline json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw usage_error("config parse failure in " + path + ": " + e.what());
    }
    if (!j.is_object()) throw usage_error("config root must be an object: " + path);
    return j;
}

// A flat record file: "key = value" lines with keys emitted in sorted order,
// doubles printed with 17 significant digits. Repeat runs are byte-identical.
class Report {
  public:
    void set(const std::string& key, double v) { kv_[key] = detail::fmt17(v); }
    void set(const std::string& key, int v) { kv_[key] = std::to_string(v); }
    void set(const std::string& key, std::size_t v) { kv_[key] = std::to_string(v); }
    void set(const std::string& key, const std::string& v) { kv_[key] = v; }
    void set(const std::string& key, cplx v) {
        kv_[key] = detail::fmt17(v.real()) + " " + detail::fmt17(v.imag());
    }

    std::string str() const {
        std::ostringstream os;
        for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
        return os.str();
    }

    void write(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw io_error("cannot write output file: " + path.string());
        out << str();
        if (!out) throw io_error("write failure on " + path.string());
    }

  private:
    std::map<std::string, std::string> kv_;
};

// Zero-padded sort-stable tag for signed indices: -2 -> "m2", 3 -> "p3".
inline std::string index_tag(int v) {
    return (v < 0 ? "m" : "p") + std::to_string(std::abs(v));
}

inline std::filesystem::path ensure_out_dir(const std::string& dir) {
    std::filesystem::path p(dir);
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec) throw io_error("cannot create output directory: " + dir);
    return p;
}

// Two-column "x value" text input for trajectory-like data.
inline std::pair<std::vector<double>, std::vector<double>> load_columns(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open input file: " + path);
    std::vector<double> x, y;
    double a, b;
    while (in >> a >> b) {
        x.push_back(a);
        y.push_back(b);
    }
    if (x.empty()) throw usage_error("no samples in input file: " + path);
    return {x, y};
}

}  // namespace neckflow
