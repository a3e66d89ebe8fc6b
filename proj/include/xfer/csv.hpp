// Minimal RFC-4180 writer with locale-independent, round-trippable numbers.
#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace xfer {

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);
/// Empty cell for std::nullopt.
std::string format_optional(const std::optional<double>& v);

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}
    void row(const std::vector<std::string>& cells);

private:
    std::ostream& out_;
};

std::string csv_escape(const std::string& cell);

/// Writes the whole table at once, creating parent directories.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace xfer
