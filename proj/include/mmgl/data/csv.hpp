#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mmgl::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Index of a header column or -1.
    long column(const std::string& name) const;
};

// Reads a comma-separated file with a header row. Double-quoted fields may
// contain commas and escaped quotes (""). Throws ParseError on ragged rows.
Table read(const std::filesystem::path& path);

// Quotes a field when it contains a comma, quote or newline.
std::string escape(const std::string& field);

// Writes `contents` to `path` via a temporary file and rename.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace mmgl::csv
