#include "oma/project_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace oma {

namespace {
std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}
}  // namespace

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_record_csv(const std::string& path, const TimeHistory& record) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write record: " + path);
    out << "# dt=" << format_double(record.dt) << " q=" << record.response_order
        << " channels=" << record.channels() << "\n";
    for (Eigen::Index j = 0; j < record.steps(); ++j) {
        for (Eigen::Index c = 0; c < record.channels(); ++c) {
            if (c) out << ',';
            out << format_double(record.samples(c, j));
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failure on record: " + path);
}

TimeHistory read_record_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read record: " + path);
    std::string header;
    if (!std::getline(in, header) || header.rfind("# ", 0) != 0)
        throw std::runtime_error("record missing '# dt=... q=... channels=...' header: " + path);

    double dt = 0.0;
    int q = -1;
    long channels = 0;
    std::istringstream hs(header.substr(2));
    std::string token;
    while (hs >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = token.substr(0, eq);
        const std::string value = token.substr(eq + 1);
        if (key == "dt") dt = std::stod(value);
        else if (key == "q") q = std::stoi(value);
        else if (key == "channels") channels = std::stol(value);
    }
    if (!(dt > 0.0) || q < 0 || q > 2 || channels < 1)
        throw std::runtime_error("record header invalid: " + path);

    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            try {
                row.push_back(std::stod(trim(cell)));
            } catch (const std::exception&) {
                throw std::runtime_error("record has a non-numeric cell: " + path);
            }
        }
        if (static_cast<long>(row.size()) != channels)
            throw std::runtime_error("record row width does not match channel count: " + path);
        rows.push_back(std::move(row));
    }
    if (rows.size() < 2) throw std::runtime_error("record too short: " + path);

    Eigen::MatrixXd samples(channels, static_cast<Eigen::Index>(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j)
        for (long c = 0; c < channels; ++c)
            samples(c, static_cast<Eigen::Index>(j)) = rows[j][static_cast<std::size_t>(c)];
    return TimeHistory(std::move(samples), dt, q);
}

ConfigFile ConfigFile::parse_text(const std::string& text) {
    ConfigFile cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            if (cfg.values_.find(section) == cfg.values_.end())
                cfg.section_order_.push_back(section);
            cfg.values_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line is not 'key = value': " + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::runtime_error("config line with empty key: " + line);
        cfg.values_[section][key] = value;
    }
    return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    const auto s = values_.find(section);
    return s != values_.end() && s->second.find(key) != s->second.end();
}

std::string ConfigFile::get(const std::string& section, const std::string& key) const {
    const auto s = values_.find(section);
    if (s != values_.end()) {
        const auto k = s->second.find(key);
        if (k != s->second.end()) return k->second;
    }
    throw std::runtime_error("config missing [" + section + "] " + key);
}

std::string ConfigFile::get_or(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
    return has(section, key) ? get(section, key) : fallback;
}

double ConfigFile::get_double(const std::string& section, const std::string& key) const {
    return std::stod(get(section, key));
}

double ConfigFile::get_double_or(const std::string& section, const std::string& key,
                                 double fallback) const {
    return has(section, key) ? get_double(section, key) : fallback;
}

long ConfigFile::get_int(const std::string& section, const std::string& key) const {
    return std::stol(get(section, key));
}

long ConfigFile::get_int_or(const std::string& section, const std::string& key,
                            long fallback) const {
    return has(section, key) ? get_int(section, key) : fallback;
}

bool ConfigFile::get_flag_or(const std::string& section, const std::string& key,
                             bool fallback) const {
    if (!has(section, key)) return fallback;
    std::string v = get(section, key);
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "on" || v == "true" || v == "yes" || v == "1") return true;
    if (v == "off" || v == "false" || v == "no" || v == "0") return false;
    throw std::runtime_error("config flag [" + section + "] " + key + " must be on/off");
}

std::vector<std::string> ConfigFile::get_list(const std::string& section,
                                              const std::string& key) const {
    std::string raw = get(section, key);
    std::replace(raw.begin(), raw.end(), ',', ' ');
    std::istringstream in(raw);
    std::vector<std::string> out;
    std::string token;
    while (in >> token) out.push_back(token);
    return out;
}

std::vector<double> ConfigFile::get_doubles(const std::string& section,
                                            const std::string& key) const {
    std::vector<double> out;
    for (const auto& token : get_list(section, key)) out.push_back(std::stod(token));
    return out;
}

std::vector<std::string> ConfigFile::sections_matching(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& name : section_order_)
        if (name.rfind(prefix, 0) == 0) out.push_back(name);
    return out;
}

}  // namespace oma
