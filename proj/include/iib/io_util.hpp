#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

namespace iib {

// Shortest decimal form that round-trips a double exactly.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == x) {
        // Try trimming to fewer digits while the value survives.
        for (int prec = 1; prec < 17; ++prec) {
            char tight[40];
            std::snprintf(tight, sizeof(tight), "%.*g", prec, x);
            std::sscanf(tight, "%lf", &back);
            if (back == x) return tight;
        }
    }
    return buf;
}

double parse_double(const std::string& s);
long long parse_int(const std::string& s);
// For full-range 64-bit values such as FNV-1a digests.
std::uint64_t parse_u64(const std::string& s);

std::vector<std::string> split_csv_line(const std::string& line);

// "key=value" per line; '#' starts a comment line. Keys must be unique.
using KvMap = std::map<std::string, std::string>;
void save_kv(const KvMap& kv, const std::string& path);
KvMap load_kv(const std::string& path);
const std::string& kv_get(const KvMap& kv, const std::string& key, const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// FNV-1a of a string, used to stamp result files with a config digest.
std::uint64_t fnv1a(const std::string& s);

}  // namespace iib
