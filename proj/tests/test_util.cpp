// Copyright 2026-present the mmrag project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <vector>

#include "testutil.hpp"
#include "util.hpp"

using namespace mmrag;

TEST_CASE("trim strips ascii whitespace from both ends") {
    CHECK(trim("  abc  ") == "abc");
    CHECK(trim("\t\r\n x \n") == "x");
    CHECK(trim("") == "");
    CHECK(trim("   ") == "");
    CHECK(trim("abc") == "abc");
}

TEST_CASE("split_words tokenizes on whitespace runs") {
    auto words = split_words("  one two\tthree\nfour ");
    REQUIRE(words.size() == 4);
    CHECK(words[0] == "one");
    CHECK(words[3] == "four");
    CHECK(split_words("").empty());
    CHECK(split_words(" \t\n").empty());
}

TEST_CASE("join concatenates with separator") {
    CHECK(join({"a", "b", "c"}, ", ") == "a, b, c");
    CHECK(join({}, ",") == "");
    CHECK(join({"solo"}, ",") == "solo");
}

TEST_CASE("base64 round-trips arbitrary bytes") {
    CHECK(base64_encode("light work.") == "bGlnaHQgd29yay4=");
    CHECK(base64_encode("light wor") == "bGlnaHQgd29y");
    CHECK(base64_decode("bGlnaHQgd29yay4=") == "light work.");

    std::string bytes;
    for (int i = 0; i < 256; i++) bytes.push_back(static_cast<char>(i));
    CHECK(base64_decode(base64_encode(bytes)) == bytes);

    CHECK_THROWS_AS(base64_decode("not base64!!"), Error);
}

TEST_CASE("sha256 matches published vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("splitmix64 matches the reference sequence") {
    CHECK(splitmix64(0) == 16294208416658607535ULL);
    CHECK(splitmix64(1) == 10451216379200822465ULL);
    CHECK(splitmix64(42) == 13679457532755275413ULL);
}

TEST_CASE("fnv1a64 matches the reference constants") {
    CHECK(fnv1a64("") == 14695981039346656037ULL);
    CHECK(fnv1a64("a") == 12638187200555641996ULL);
    CHECK(fnv1a64("hello") == 11831194018420276491ULL);
}

TEST_CASE("file helpers round-trip and create parent directories") {
    test::TempDir tmp;
    auto path = tmp.file("deep/nested/file.txt");
    write_file(path, "hello\n");
    CHECK(read_file(path) == "hello\n");

    append_line(tmp.file("other/log.jsonl"), "{\"a\":1}");
    append_line(tmp.file("other/log.jsonl"), "{\"a\":2}");
    CHECK(read_file(tmp.file("other/log.jsonl")) == "{\"a\":1}\n{\"a\":2}\n");

    CHECK_THROWS_AS(read_file(tmp.file("missing.txt")), Error);
}

TEST_CASE("for_each_line numbers lines from 1 and skips blanks") {
    test::TempDir tmp;
    auto path = tmp.file("lines.txt");
    write_file(path, "first\r\n\n  \nsecond\nthird");

    std::vector<std::pair<size_t, std::string>> seen;
    for_each_line(path, [&](size_t n, std::string_view line) {
        seen.emplace_back(n, std::string(line));
    });
    REQUIRE(seen.size() == 3);
    CHECK(seen[0] == std::pair<size_t, std::string>{1, "first"});
    CHECK(seen[1] == std::pair<size_t, std::string>{4, "second"});
    CHECK(seen[2] == std::pair<size_t, std::string>{5, "third"});
}

TEST_CASE("format_double uses fixed decimals") {
    CHECK(format_double(0.75, 2) == "0.75");
    CHECK(format_double(1.0, 2) == "1.00");
    CHECK(format_double(0.2450, 4) == "0.2450");
    CHECK(format_double(0.0, 2) == "0.00");
}

TEST_CASE("split_template_file separates system text at the --- marker") {
    SUBCASE("marker present") {
        auto parts = split_template_file("system line one\nsystem line two\n---\nscaffold {q}\n");
        REQUIRE(parts.system_text.has_value());
        CHECK(*parts.system_text == "system line one\nsystem line two");
        CHECK(parts.user_scaffold == "scaffold {q}");
    }
    SUBCASE("no marker: whole file is the scaffold") {
        auto parts = split_template_file("just a scaffold {q}\n");
        CHECK_FALSE(parts.system_text.has_value());
        CHECK(parts.user_scaffold == "just a scaffold {q}");
    }
    SUBCASE("marker with surrounding spaces still splits") {
        auto parts = split_template_file("sys\n --- \nbody");
        REQUIRE(parts.system_text.has_value());
        CHECK(*parts.system_text == "sys");
        CHECK(parts.user_scaffold == "body");
    }
}

TEST_CASE("Error carries its code") {
    Error e(ErrorCode::NotFound, "nope");
    CHECK(e.code() == ErrorCode::NotFound);
    CHECK(std::string(e.what()) == "nope");
    CHECK(std::string(error_code_name(ErrorCode::Parse)) == "parse");
}

TEST_CASE("starts_with and to_lower basics") {
    CHECK(starts_with("https://x", "https://"));
    CHECK_FALSE(starts_with("http", "https"));
    CHECK(to_lower("AbC1") == "abc1");
}
