#pragma once

#include <charconv>
#include <filesystem>
#include <string>

#include "netadapt/errors.hpp"

namespace netadapt::detail {

// Exact text encodings for doubles. hex_double round-trips every finite
// value bit-for-bit; dec_double is the shortest decimal that round-trips.
std::string hex_double(double v);
double parse_hex_double(const std::string& s);
std::string dec_double(double v);
double parse_dec_double(const std::string& s);

std::string read_file(const std::filesystem::path& path);
// temp file in the same directory + rename
void atomic_write_file(const std::filesystem::path& path,
                       const std::string& content);

std::string host_descriptor();
std::string timestamp_utc();

}  // namespace netadapt::detail
