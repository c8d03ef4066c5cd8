#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace metaview {

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);

/// Strict, locale-independent parse of a finite decimal number. Surrounding
/// whitespace is allowed.
std::optional<double> parse_double(std::string_view text);

/// Writes `content` to a sibling temp file, then renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// Runs fn(0..count-1) on at most `workers` threads. Jobs must not share
/// mutable state; the first exception thrown by any job is rethrown.
void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

}  // namespace metaview
