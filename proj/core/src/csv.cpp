#include "deepmaps/csv.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <sstream>

#include "deepmaps/grid.hpp"

namespace deepmaps::csv {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

Reader::Reader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw IoError("cannot open file: " + path);
    std::string line;
    while (std::getline(in_, line)) {
        if (line.empty() || line[0] == '#') continue;
        header_ = split(line);
        return;
    }
    throw SchemaError("missing header line: " + path);
}

int Reader::column(const std::string& name) const {
    for (std::size_t i = 0; i < header_.size(); ++i)
        if (header_[i] == name) return static_cast<int>(i);
    return -1;
}

void Reader::require_header(const std::vector<std::string>& names) const {
    if (header_ != names) {
        std::ostringstream msg;
        msg << path_ << ": expected header";
        for (const auto& n : names) msg << ' ' << n;
        throw SchemaError(msg.str());
    }
}

bool Reader::next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
        if (line.empty() || line[0] == '#') continue;
        fields = split(line);
        ++rows_seen_;
        return true;
    }
    return false;
}

std::string fmt(double v) {
    char buf[40];
    if (v == std::floor(v) && std::fabs(v) < 1e15) {
        std::snprintf(buf, sizeof buf, "%.0f", v);  // integral: no exponent form
        if (std::strtod(buf, nullptr) == v) return buf;
    }
    // shortest representation that round-trips
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        double back = std::strtod(buf, nullptr);
        if (back == v) return buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_short(double v, int digits) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    errno = 0;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return errno == 0 && end == s.c_str() + s.size();
}

bool parse_int(const std::string& s, std::int64_t& out) {
    if (s.empty()) return false;
    errno = 0;
    char* end = nullptr;
    out = std::strtoll(s.c_str(), &end, 10);
    return errno == 0 && end == s.c_str() + s.size();
}

namespace {

// Howard Hinnant's days-from-civil algorithm.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097LL + static_cast<std::int64_t>(doe) - 719468;
}

}  // namespace

bool parse_timestamp(const std::string& s, std::int64_t& out) {
    int y, mo, d, h, mi;
    double sec;
    char sep;
    if (std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%lf", &y, &mo, &d, &sep, &h, &mi, &sec) == 7 &&
        (sep == 'T' || sep == ' ')) {
        if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 ||
            sec < 0 || sec >= 61)
            return false;
        out = days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 +
              static_cast<std::int64_t>(sec);
        return true;
    }
    double epoch;
    if (parse_double(s, epoch)) {
        out = static_cast<std::int64_t>(epoch);
        return true;
    }
    return false;
}

}  // namespace deepmaps::csv
