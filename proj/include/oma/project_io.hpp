#pragma once

#include <map>
#include <string>
#include <vector>

#include "oma/spectral.hpp"

namespace oma {

/// Record CSV: header line `# dt=<seconds> q=<0|1|2> channels=<n>`, then one
/// comma-separated row of channel values per time step. Numbers round-trip
/// bit-exactly (shortest 17-significant-digit form).
void write_record_csv(const std::string& path, const TimeHistory& record);
TimeHistory read_record_csv(const std::string& path);

/// Flat key/value configuration with `[section]` headers. Later duplicate
/// keys override earlier ones; `#` starts a comment; values keep internal
/// whitespace. Section names repeat verbatim (e.g. `[band.2]`).
class ConfigFile {
public:
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_text(const std::string& text);

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key) const;
    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key) const;
    double get_double_or(const std::string& section, const std::string& key,
                         double fallback) const;
    long get_int(const std::string& section, const std::string& key) const;
    long get_int_or(const std::string& section, const std::string& key, long fallback) const;
    bool get_flag_or(const std::string& section, const std::string& key, bool fallback) const;
    /// Whitespace- or comma-separated list.
    std::vector<std::string> get_list(const std::string& section, const std::string& key) const;
    std::vector<double> get_doubles(const std::string& section, const std::string& key) const;
    std::vector<std::string> sections_matching(const std::string& prefix) const;

private:
    std::map<std::string, std::map<std::string, std::string>> values_;
    std::vector<std::string> section_order_;
};

std::string format_double(double v);  // shortest round-trip text

}  // namespace oma
