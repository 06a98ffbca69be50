#include "gridsentry/util.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gridsentry {

int popcount128(u128 v) {
    return __builtin_popcountll(static_cast<uint64_t>(v)) +
           __builtin_popcountll(static_cast<uint64_t>(v >> 64));
}

std::string u128_to_string(u128 v) {
    if (v == 0) return "0";
    std::string out;
    while (v != 0) {
        out.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
        v /= 10;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::optional<u128> u128_from_string(std::string_view s) {
    if (s.empty()) return std::nullopt;
    u128 v = 0;
    constexpr u128 kMax = ~static_cast<u128>(0);
    for (char c : s) {
        if (c < '0' || c > '9') return std::nullopt;
        unsigned d = static_cast<unsigned>(c - '0');
        if (v > (kMax - d) / 10) return std::nullopt;
        v = v * 10 + d;
    }
    return v;
}

std::string fmt_double(double v) {
    char buf[64];
    // %.17g is exact but noisy; try increasing precision until round-trip.
    for (int prec = 6; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == v) break;
    }
    return buf;
}

std::vector<std::string> split_tokens(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool in_token = false;
    bool in_quote = false;
    for (char c : line) {
        if (in_quote) {
            if (c == '\'')
                in_quote = false;
            else
                cur.push_back(c);
        } else if (c == '\'') {
            in_quote = true;
            in_token = true;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            if (in_token) {
                out.push_back(std::move(cur));
                cur.clear();
                in_token = false;
            }
        } else {
            cur.push_back(c);
            in_token = true;
        }
    }
    if (in_quote) throw std::invalid_argument("unterminated quote");
    if (in_token) out.push_back(std::move(cur));
    return out;
}

std::string_view strip_comment(std::string_view line) {
    bool in_quote = false;
    size_t cut = line.size();
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (c == '\'') in_quote = !in_quote;
        if (c == '#' && !in_quote) {
            cut = i;
            break;
        }
    }
    std::string_view s = line.substr(0, cut);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

double parse_double(std::string_view token) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size())
        throw std::invalid_argument("not a number: '" + std::string(token) + "'");
    return v;
}

long parse_long(std::string_view token) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size())
        throw std::invalid_argument("not an integer: '" + std::string(token) + "'");
    return v;
}

uint64_t fnv1a64(std::string_view bytes, uint64_t seed) {
    uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace gridsentry
