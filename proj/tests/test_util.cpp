#include "doctest.h"

#include <algorithm>
#include <filesystem>

#include "geoforge/util.hpp"

using namespace geoforge;

TEST_CASE("normalize_ws collapses runs and trims") {
    CHECK(util::normalize_ws("  a\t b\n\nc  ") == "a b c");
    CHECK(util::normalize_ws("") == "");
    CHECK(util::normalize_ws(" \n\t ") == "");
    CHECK(util::normalize_ws("plain") == "plain");
}

TEST_CASE("strip_ws removes every whitespace byte") {
    CHECK(util::strip_ws("a b\tc\nd") == "abcd");
    CHECK(util::strip_ws("   ") == "");
}

TEST_CASE("with_commas") {
    CHECK(util::with_commas(0) == "0");
    CHECK(util::with_commas(999) == "999");
    CHECK(util::with_commas(1000) == "1,000");
    CHECK(util::with_commas(38501681) == "38,501,681");
    CHECK(util::with_commas(78851432232ULL) == "78,851,432,232");
}

// FIPS 180-2 test vectors.
TEST_CASE("sha256 standard vectors") {
    CHECK(util::sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(util::sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(util::sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
    std::string million(1000000, 'a');
    CHECK(util::sha256_hex(million) ==
          "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}

TEST_CASE("splitmix64 is deterministic and shuffle is a permutation") {
    util::SplitMix64 a(42);
    util::SplitMix64 b(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next() == b.next());
    }

    std::vector<int> v(100);
    for (int i = 0; i < 100; ++i) {
        v[static_cast<std::size_t>(i)] = i;
    }
    std::vector<int> w = v;
    util::SplitMix64 r1(7);
    util::SplitMix64 r2(7);
    r1.shuffle(v);
    r2.shuffle(w);
    CHECK(v == w);
    std::sort(w.begin(), w.end());
    for (int i = 0; i < 100; ++i) {
        CHECK(w[static_cast<std::size_t>(i)] == i);
    }
}

TEST_CASE("bounded draws stay in range and cover values") {
    util::SplitMix64 rng(123);
    std::vector<int> seen(10, 0);
    for (int i = 0; i < 1000; ++i) {
        auto x = rng.bounded(10);
        REQUIRE(x < 10);
        ++seen[static_cast<std::size_t>(x)];
    }
    for (int count : seen) {
        CHECK(count > 0);
    }
}

TEST_CASE("atomic write leaves no temp file behind") {
    auto dir = std::filesystem::temp_directory_path() / "geoforge_util_test";
    std::filesystem::create_directories(dir);
    auto path = dir / "x.txt";
    util::write_file_atomic(path, "hello");
    CHECK(util::read_file(path) == "hello");
    CHECK(!std::filesystem::exists(dir / "x.txt.tmp"));
    std::filesystem::remove_all(dir);
}
