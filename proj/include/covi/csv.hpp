#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace covi {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column_index(const std::string& name) const;
};

// Plain comma-separated text without quoting; every row must match the header width.
CsvTable read_csv(const std::filesystem::path& path);

std::string format_fixed(double value, int decimals = 6);

} // namespace covi
