#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace geoforge::util {

// Collapses whitespace runs to single spaces and trims the ends.
std::string normalize_ws(std::string_view text);

// Removes every whitespace byte; used for "equal up to whitespace" checks.
std::string strip_ws(std::string_view text);

bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);

// Thousands-separated decimal rendering, e.g. 38501681 -> "38,501,681".
std::string with_commas(std::uint64_t value);

std::string read_file(const std::filesystem::path& path);

// Writes via a sibling temp file and rename so readers never observe
// partial content.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// SHA-256 over a byte string, lowercase hex output.
std::string sha256_hex(std::string_view data);

// splitmix64: tiny deterministic generator used everywhere seeding or
// shuffling must be bit-stable across platforms and standard libraries.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next();

    // Uniform draw in [0, n) via rejection sampling; n must be > 0.
    std::uint64_t bounded(std::uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

// Stable mixing for deriving per-item seeds from a master seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);
std::uint64_t hash_string(std::string_view s);

}  // namespace geoforge::util
