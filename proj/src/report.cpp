#include "sdsmlab/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sdsmlab/core.hpp"

namespace sdsmlab {

bool RunReport::all_pass() const {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

std::string RunReport::to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["seed"] = seed;
    char hex[32];
    std::snprintf(hex, sizeof hex, "0x%016llx",
                  static_cast<unsigned long long>(config_hash));
    j["config_hash"] = hex;
    j["threads"] = threads;
    j["wall_seconds"] = wall_seconds;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& c : checks) {
        nlohmann::ordered_json cj;
        cj["name"] = c.name;
        cj["pass"] = c.pass;
        auto vals = nlohmann::ordered_json::object();
        for (const auto& [k, v] : c.values) vals[k] = v;
        cj["values"] = std::move(vals);
        if (!c.note.empty()) cj["note"] = c.note;
        arr.push_back(std::move(cj));
    }
    j["checks"] = std::move(arr);
    j["pass"] = all_pass();
    return j.dump(2) + "\n";
}

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_row(std::span<const double> values) {
    std::string row;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) row += ',';
        row += g17(values[i]);
    }
    row += '\n';
    return row;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << content;
    if (!out) throw ConfigError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace sdsmlab
