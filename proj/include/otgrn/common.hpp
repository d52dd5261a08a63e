#pragma once

#include <charconv>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace otgrn {

// Error hierarchy. The CLI maps each category to its exit code
// (config 2, numeric 3, io 4).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

// splitmix64, used to derive independent RNG streams from a master seed.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Stable stream derivation: hash of (seed, tag, index). Streams for
// distinct (tag, index) pairs are independent of iteration order, which
// keeps parallel work bitwise reproducible.
inline uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t index = 0) {
    uint64_t h = splitmix64(master);
    for (char c : tag) h = splitmix64(h ^ static_cast<uint64_t>(static_cast<unsigned char>(c)));
    return splitmix64(h ^ index);
}

// Locale-independent double formatting with exact round-trip.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw IoError("invalid numeric value: '" + std::string(s) + "'");
    return v;
}

// Number of worker threads for parallel sections. OTGRN_THREADS caps it;
// 1 disables parallelism.
int max_threads();

// Runs fn(i) for i in [0, n). Each index must write only to its own
// output slot; results are then independent of the thread count.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace otgrn
