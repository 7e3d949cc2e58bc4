#include "nec/binary_io.hpp"

#include "nec/error.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>

namespace nec::io {

void write_u64(std::ostream& os, std::uint64_t v) {
    std::array<char, 8> buf{};
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(buf.data(), buf.size());
}

void write_f64(std::ostream& os, double v) { write_u64(os, std::bit_cast<std::uint64_t>(v)); }

void write_f64s(std::ostream& os, std::span<const double> values) {
    for (double v : values) write_f64(os, v);
}

void write_bytes(std::ostream& os, std::string_view bytes) {
    write_u64(os, bytes.size());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_magic(std::ostream& os, std::string_view magic) {
    os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

std::uint64_t read_u64(std::istream& is) {
    std::array<unsigned char, 8> buf{};
    is.read(reinterpret_cast<char*>(buf.data()), buf.size());
    if (!is) throw IoError("unexpected end of binary stream");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

std::vector<double> read_f64s(std::istream& is, std::size_t n) {
    std::vector<double> out(n);
    for (auto& v : out) v = read_f64(is);
    return out;
}

std::string read_bytes(std::istream& is, std::size_t n) {
    std::string out(n, '\0');
    is.read(out.data(), static_cast<std::streamsize>(n));
    if (!is) throw IoError("unexpected end of binary stream");
    return out;
}

void expect_magic(std::istream& is, std::string_view magic) {
    std::string got(magic.size(), '\0');
    is.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (!is || got != magic) throw IoError("bad magic, expected '" + std::string(magic) + "'");
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) throw InternalError("to_chars failed");
    return std::string(buf.data(), end);
}

double parse_double(std::string_view text) {
    if (text == "nan") return std::nan("");
    if (text == "inf") return INFINITY;
    if (text == "-inf") return -INFINITY;
    double v = 0.0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || end != text.data() + text.size())
        throw InputError("not a number: '" + std::string(text) + "'");
    return v;
}

std::int64_t parse_int(std::string_view text) {
    std::int64_t v = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || end != text.data() + text.size())
        throw InputError("not an integer: '" + std::string(text) + "'");
    return v;
}

std::uint64_t parse_uint(std::string_view text) {
    std::uint64_t v = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || end != text.data() + text.size())
        throw InputError("not a non-negative integer: '" + std::string(text) + "'");
    return v;
}

}  // namespace nec::io
