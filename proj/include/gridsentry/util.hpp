#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gridsentry {

// 128-bit unsigned word used for security-state bit vectors; caps the
// model at 128 devices.
using u128 = unsigned __int128;

int popcount128(u128 v);
std::string u128_to_string(u128 v);
std::optional<u128> u128_from_string(std::string_view s);

struct U128Hash {
    size_t operator()(u128 v) const {
        auto lo = static_cast<uint64_t>(v);
        auto hi = static_cast<uint64_t>(v >> 64);
        uint64_t x = lo ^ (hi * 0x9e3779b97f4a7c15ULL);
        x ^= x >> 33;
        x *= 0xff51afd7ed558ccdULL;
        x ^= x >> 33;
        return static_cast<size_t>(x);
    }
};

/// Shortest round-trippable decimal rendering of a double. Used for all
/// report and wire values so repeated runs are byte-identical.
std::string fmt_double(double v);

/// Splits a line into whitespace-separated tokens. A single-quote opens a
/// quoted span in which whitespace is literal: a token like
/// 'Capital City$BRK$4647' comes back as one token without the quotes.
/// Throws std::invalid_argument on an unterminated quote.
std::vector<std::string> split_tokens(std::string_view line);

/// Strips a trailing '#'-comment (outside quotes) and surrounding whitespace.
std::string_view strip_comment(std::string_view line);

double parse_double(std::string_view token);  // throws std::invalid_argument
long parse_long(std::string_view token);      // throws std::invalid_argument

uint64_t fnv1a64(std::string_view bytes, uint64_t seed = 0xcbf29ce484222325ULL);

std::string read_file(const std::string& path);  // throws std::runtime_error

}  // namespace gridsentry
