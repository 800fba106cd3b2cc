// Small text helpers shared by the file formats: exact double formatting, field splitting and
// strict number parsing.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace adagemm::text {

// Shortest decimal that parses back to the identical double.
std::string format_double(double value);

// Like format_double but always carries a decimal point or exponent ("192" -> "192.0").
std::string format_real_literal(double value);

double parse_double(std::string_view text);
std::int64_t parse_int(std::string_view text);
std::uint64_t parse_u64(std::string_view text);

std::vector<std::string_view> split(std::string_view line, char separator);
std::vector<std::string_view> split_whitespace(std::string_view line);
std::string_view trim(std::string_view text);

// 64-bit FNV-1a, rendered as 16 hex digits.
std::uint64_t fnv1a(std::string_view data);
std::string hex64(std::uint64_t value);

}  // namespace adagemm::text
