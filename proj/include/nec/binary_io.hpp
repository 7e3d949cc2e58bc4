#pragma once

// Little-endian primitives and shortest round-trip number formatting shared by
// the snapshot, checkpoint and CSV writers.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nec::io {

void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, double v);
void write_f64s(std::ostream& os, std::span<const double> values);
void write_bytes(std::ostream& os, std::string_view bytes);
void write_magic(std::ostream& os, std::string_view magic);

std::uint64_t read_u64(std::istream& is);
double read_f64(std::istream& is);
std::vector<double> read_f64s(std::istream& is, std::size_t n);
std::string read_bytes(std::istream& is, std::size_t n);
/// Throws IoError if the next bytes are not `magic`.
void expect_magic(std::istream& is, std::string_view magic);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);
/// Strict parse; throws InputError on trailing garbage.
double parse_double(std::string_view text);
std::int64_t parse_int(std::string_view text);
std::uint64_t parse_uint(std::string_view text);

}  // namespace nec::io
