#include "iib/io_util.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "iib/errors.hpp"

namespace iib {

double parse_double(const std::string& s) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0' || errno == ERANGE)
        throw IoError("not a number: '" + s + "'");
    return v;
}

long long parse_int(const std::string& s) {
    errno = 0;
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0' || errno == ERANGE)
        throw IoError("not an integer: '" + s + "'");
    return v;
}

std::uint64_t parse_u64(const std::string& s) {
    if (s.empty() || s[0] == '-') throw IoError("not an unsigned integer: '" + s + "'");
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0' || errno == ERANGE)
        throw IoError("not an unsigned integer: '" + s + "'");
    return static_cast<std::uint64_t>(v);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

void save_kv(const KvMap& kv, const std::string& path) {
    std::ostringstream out;
    for (const auto& [key, value] : kv) out << key << '=' << value << '\n';
    write_text_file(path, out.str());
}

KvMap load_kv(const std::string& path) {
    std::istringstream in(read_text_file(path));
    KvMap kv;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError(path + ": malformed line '" + line + "'");
        const std::string key = line.substr(0, eq);
        if (kv.count(key)) throw IoError(path + ": duplicate key '" + key + "'");
        kv[key] = line.substr(eq + 1);
    }
    return kv;
}

const std::string& kv_get(const KvMap& kv, const std::string& key, const std::string& path) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw IoError(path + ": missing key '" + key + "'");
    return it->second;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("read failed on " + path);
    return buf.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed on " + path);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char ch : s) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace iib
