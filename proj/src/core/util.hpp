#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hamlet {

// ConfigError maps to CLI exit 1 (usage), DataError and plain runtime_error to 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int num_threads();
void set_num_threads(int n);

// Runs fn over [0,n) split into one contiguous chunk per worker. Each index is
// owned by exactly one worker, so results never depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

inline std::uint64_t fnv1a(const void* bytes, std::size_t len, std::uint64_t h = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) {
    return fnv1a(s.data(), s.size(), h);
}

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);
std::uint64_t file_digest(const std::string& path);
std::string hex64(std::uint64_t v);

}  // namespace hamlet
