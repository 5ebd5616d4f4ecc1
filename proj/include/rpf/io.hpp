#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rpf::io {

/// 64-bit FNV-1a; stable across platforms and runs, used for fingerprints.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/// Shortest text that parses back to the identical double.
std::string format_real(double value);
double parse_real(std::string_view token);

std::string join_reals(std::span<double const> values, char sep = ',');
std::vector<std::string> split(std::string_view line, char sep);

std::string read_file(std::string const& path);
void write_file(std::string const& path, std::string_view contents);

}  // namespace rpf::io
