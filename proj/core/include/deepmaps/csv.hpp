#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace deepmaps::csv {

/// Split one CSV line on commas. The project's file formats are plain
/// numeric/id columns; quoting is not part of any schema.
std::vector<std::string> split(const std::string& line);

/// Header-indexed CSV reader. Lines starting with '#' are skipped so that
/// emitted artifacts can carry a config-hash comment line.
class Reader {
public:
    explicit Reader(const std::string& path);

    const std::vector<std::string>& header() const { return header_; }
    /// Column position for `name`, -1 when absent.
    int column(const std::string& name) const;
    /// Require the header to be exactly `names` (order-sensitive).
    void require_header(const std::vector<std::string>& names) const;

    /// Read the next data row into `fields`; false at EOF. Blank and
    /// comment lines are skipped and do not count as data rows.
    bool next(std::vector<std::string>& fields);

    std::size_t data_rows_seen() const { return rows_seen_; }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ifstream in_;
    std::vector<std::string> header_;
    std::size_t rows_seen_ = 0;
};

/// Shortest-round-trip double formatting ("%.17g" trimmed) used for every
/// numeric artifact so that re-reading a file reproduces the value exactly.
std::string fmt(double v);

/// Fixed low-precision formatting for human-facing tables.
std::string fmt_short(double v, int digits = 4);

bool parse_double(const std::string& s, double& out);
bool parse_int(const std::string& s, std::int64_t& out);

/// Epoch seconds from "YYYY-MM-DD HH:MM:SS", "YYYY-MM-DDTHH:MM:SS[Z]",
/// or a plain epoch-seconds number. Returns false on anything else.
bool parse_timestamp(const std::string& s, std::int64_t& out);

}  // namespace deepmaps::csv
