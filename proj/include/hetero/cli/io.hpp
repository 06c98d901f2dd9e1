#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hetero/optimizers.hpp"

namespace hetero::cli {

/// Shortest decimal string that parses back to the same double.
/// NaN and infinities print as "nan", "inf", "-inf".
std::string format_double(double x);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t x);

/// CSV with header step,loss,grad_l1,grad_l2,grad_linf,lr,block:<name>_l2,...
/// The lr cell is empty on the final logged point.
std::string trajectory_csv(const TrajectoryRecord& record);

struct CsvTable {
  std::vector<std::string> comments;  // lines that started with '#', without it
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws std::runtime_error if absent.
  std::size_t column(const std::string& name) const;
};

/// Minimal reader for the files this tool writes (no quoting).
CsvTable parse_csv(const std::string& text);

std::string read_file(const std::filesystem::path& path);
/// Writes bytes verbatim (binary mode, LF line endings preserved).
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace hetero::cli
