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

#include <set>
#include <sstream>
#include <string>

#include "corpus.hpp"
#include "testutil.hpp"
#include "util.hpp"

using namespace mmrag;

namespace {

std::string words(int count, const std::string& prefix = "w") {
    std::string out;
    for (int i = 1; i <= count; i++) {
        if (i > 1) out += ' ';
        out += prefix + std::to_string(i);
    }
    return out;
}

}  // namespace

TEST_CASE("load_corpus on an empty file yields an empty corpus") {
    test::TempDir tmp;
    write_file(tmp.file("corpus.jsonl"), "");
    Corpus corpus = load_corpus(tmp.file("corpus.jsonl"));
    CHECK(corpus.pages.empty());
    CHECK(corpus.chunks.empty());
    CHECK(corpus.images.empty());
}

TEST_CASE("load_corpus loads a minimal record without an image") {
    test::TempDir tmp;
    write_file(tmp.file("corpus.jsonl"),
               R"({"doc_id":"d1","page_no":3,"page_text":"abc","image":null})"
               "\n");
    Corpus corpus = load_corpus(tmp.file("corpus.jsonl"));
    REQUIRE(corpus.pages.size() == 1);
    CHECK(corpus.pages[0].doc_id == "d1");
    CHECK(corpus.pages[0].page_no == 3);
    CHECK(corpus.pages[0].page_text == "abc");
    CHECK_FALSE(corpus.pages[0].image.has_value());
    CHECK(corpus.images.empty());
    REQUIRE(corpus.chunks.size() == 1);
    CHECK(corpus.chunks[0].text == "abc");
}

TEST_CASE("one page with several images becomes several records sharing page_text") {
    test::TempDir tmp;
    std::string b64 = base64_encode("img-bytes");
    std::ostringstream file;
    file << R"({"doc_id":"d1","page_no":3,"page_text":"shared page text","image":{"image_id":"i1","media_type":"image/png","base64":")"
         << b64 << "\"}}\n";
    file << R"({"doc_id":"d1","page_no":3,"page_text":"shared page text","image":{"image_id":"i2","media_type":"image/png","base64":")"
         << b64 << "\"}}\n";
    write_file(tmp.file("corpus.jsonl"), file.str());

    Corpus corpus = load_corpus(tmp.file("corpus.jsonl"));
    REQUIRE(corpus.pages.size() == 2);
    CHECK(corpus.pages[0].page_text == corpus.pages[1].page_text);
    CHECK(corpus.images.size() == 2);
    CHECK(corpus.images[0].image_id == "i1");
    CHECK(corpus.images[1].image_id == "i2");
    // Duplicated page text must not duplicate chunks.
    CHECK(corpus.chunks.size() == 1);
}

TEST_CASE("duplicate (doc_id, page_no, image_id) is rejected with the line number") {
    test::TempDir tmp;
    std::string b64 = base64_encode("x");
    std::string line =
        R"({"doc_id":"d1","page_no":1,"page_text":"t","image":{"image_id":"i1","media_type":"image/png","base64":")" +
        b64 + "\"}}\n";
    write_file(tmp.file("corpus.jsonl"), line + line);
    try {
        load_corpus(tmp.file("corpus.jsonl"));
        FAIL("expected duplicate error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Parse);
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
        CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
    }
}

TEST_CASE("malformed line reports its line number") {
    test::TempDir tmp;
    write_file(tmp.file("corpus.jsonl"),
               R"({"doc_id":"d1","page_no":1,"page_text":"ok"})"
               "\nnot json\n");
    try {
        load_corpus(tmp.file("corpus.jsonl"));
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
}

TEST_CASE("missing or invalid fields are reported by name") {
    test::TempDir tmp;
    write_file(tmp.file("c1.jsonl"), R"({"page_no":1,"page_text":"t"})"
               "\n");
    CHECK_THROWS_WITH_AS(load_corpus(tmp.file("c1.jsonl")),
                         doctest::Contains("doc_id"), Error);

    write_file(tmp.file("c2.jsonl"), R"({"doc_id":"d","page_no":0,"page_text":"t"})"
               "\n");
    CHECK_THROWS_WITH_AS(load_corpus(tmp.file("c2.jsonl")),
                         doctest::Contains("page_no"), Error);

    write_file(tmp.file("c3.jsonl"),
               R"({"doc_id":"d","page_no":1,"page_text":"t","image":{"image_id":"i","media_type":"image/svg+xml","base64":"YQ=="}})"
               "\n");
    CHECK_THROWS_WITH_AS(load_corpus(tmp.file("c3.jsonl")),
                         doctest::Contains("media_type"), Error);
}

TEST_CASE("image bytes load from a relative image_ref") {
    test::TempDir tmp;
    write_file(tmp.file("assets/pic.png"), "raw-png-bytes");
    write_file(tmp.file("corpus.jsonl"),
               R"({"doc_id":"d1","page_no":1,"page_text":"t","image":{"image_id":"i1","media_type":"image/png","image_ref":"assets/pic.png"}})"
               "\n");
    Corpus corpus = load_corpus(tmp.file("corpus.jsonl"));
    REQUIRE(corpus.images.size() == 1);
    CHECK(corpus.images[0].bytes == "raw-png-bytes");
}

TEST_CASE("empty image payload is rejected") {
    test::TempDir tmp;
    write_file(tmp.file("corpus.jsonl"),
               R"({"doc_id":"d1","page_no":1,"page_text":"t","image":{"image_id":"i1","media_type":"image/png","base64":""}})"
               "\n");
    CHECK_THROWS_AS(load_corpus(tmp.file("corpus.jsonl")), Error);
}

TEST_CASE("chunk_text on an empty page yields no chunks") {
    CHECK(chunk_text("", ChunkConfig{4, 3}).empty());
    CHECK(chunk_text("   \t\n ", ChunkConfig{4, 3}).empty());
}

TEST_CASE("chunk_text windows 10 words as [1..4],[4..7],[7..10]") {
    auto chunks = chunk_text(words(10), ChunkConfig{4, 3}, PageRef{"d", 2});
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0].text == "w1 w2 w3 w4");
    CHECK(chunks[1].text == "w4 w5 w6 w7");
    CHECK(chunks[2].text == "w7 w8 w9 w10");
    for (const auto& chunk : chunks) {
        CHECK(chunk.source == PageRef{"d", 2});
        CHECK(chunk.word_count == split_words(chunk.text).size());
        CHECK(chunk.word_count <= 4);
    }
}

TEST_CASE("default chunking of a 500-word page matches a reference windowing oracle") {
    const size_t total = 500;
    ChunkConfig cfg;  // window 225, stride 180
    auto chunks = chunk_text(words(static_cast<int>(total)), cfg, PageRef{"d", 1});

    // Reference oracle: windows start at 0, stride, 2*stride, ... and the
    // window that reaches the end is the last one.
    std::vector<std::pair<size_t, size_t>> expected;  // [start, end)
    for (size_t start = 0;; start += cfg.stride) {
        size_t end = std::min(start + cfg.window, total);
        expected.emplace_back(start, end);
        if (end == total) break;
    }
    REQUIRE(expected.size() == 3);
    REQUIRE(chunks.size() == expected.size());
    for (size_t i = 0; i < chunks.size(); i++) {
        auto tokens = split_words(chunks[i].text);
        CHECK(tokens.size() == expected[i].second - expected[i].first);
        CHECK(tokens.front() == "w" + std::to_string(expected[i].first + 1));
        CHECK(tokens.back() == "w" + std::to_string(expected[i].second));
    }
}

TEST_CASE("chunk coverage reproduces the page's word sequence") {
    ChunkConfig cfg{7, 5};
    std::string page = words(53, "tok");
    auto chunks = chunk_text(page, cfg);
    // Strip each chunk's overlap with the words already covered, then
    // concatenate; chunk i starts at word index i*stride.
    std::vector<std::string> rebuilt;
    for (size_t i = 0; i < chunks.size(); i++) {
        auto tokens = split_words(chunks[i].text);
        size_t start = i * cfg.stride;
        REQUIRE(rebuilt.size() >= start);
        size_t skip = rebuilt.size() - start;
        for (size_t t = skip; t < tokens.size(); t++) rebuilt.emplace_back(tokens[t]);
    }
    auto original = split_words(page);
    REQUIRE(rebuilt.size() == original.size());
    for (size_t i = 0; i < original.size(); i++) CHECK(rebuilt[i] == original[i]);
}

TEST_CASE("chunk_text rejects invalid configs") {
    CHECK_THROWS_AS(chunk_text("a b c", ChunkConfig{4, 0}), Error);
    CHECK_THROWS_AS(chunk_text("a b c", ChunkConfig{4, 5}), Error);
    CHECK_THROWS_AS(chunk_text("a b c", ChunkConfig{0, 1}), Error);
}

TEST_CASE("corpus save/load round-trips exactly") {
    test::TempDir tmp;
    Corpus corpus = test::make_topic_corpus(5, {"valve", "pump", "gauge"});
    save_corpus(corpus, tmp.file("roundtrip.jsonl"));
    Corpus loaded = load_corpus(tmp.file("roundtrip.jsonl"), ChunkConfig{8, 8});
    CHECK(loaded == corpus);
}

TEST_CASE("load_testset loads one valid line") {
    test::TempDir tmp;
    write_file(tmp.file("test.jsonl"),
               R"({"qid":"q1","question":"How?","reference_answer":"Thus.","gold_text":"ctx","gold_image":null,"doc_id":"d1","page_no":2})"
               "\n");
    auto quads = load_testset(tmp.file("test.jsonl"));
    REQUIRE(quads.size() == 1);
    CHECK(quads[0].qid == "q1");
    CHECK(quads[0].question == "How?");
    CHECK(quads[0].reference_answer == "Thus.");
    CHECK(quads[0].gold_text == "ctx");
    CHECK_FALSE(quads[0].gold_image.has_value());
    CHECK(quads[0].source_page == PageRef{"d1", 2});
}

TEST_CASE("load_testset rejects a line missing reference_answer by name") {
    test::TempDir tmp;
    write_file(tmp.file("test.jsonl"),
               R"({"qid":"q1","question":"How?","gold_text":"","doc_id":"d","page_no":1})"
               "\n");
    CHECK_THROWS_WITH_AS(load_testset(tmp.file("test.jsonl")),
                         doctest::Contains("reference_answer"), Error);
}

TEST_CASE("a 20-question synthetic testset round-trips") {
    test::TempDir tmp;
    std::vector<QAQuadruple> quads;
    for (int i = 0; i < 20; i++) {
        QAQuadruple q;
        q.qid = "q" + std::to_string(i);
        q.question = "What is part " + std::to_string(i) + "?";
        q.reference_answer = "Part " + std::to_string(i) + ".";
        q.gold_text = i % 3 == 0 ? "" : "gold text " + std::to_string(i);
        if (i % 2 == 0) {
            q.gold_image = test::make_tagged_image("gi" + std::to_string(i), "tag" +
                                                   std::to_string(i), "doc", i + 1);
        }
        q.source_page = PageRef{"doc", i + 1};
        quads.push_back(q);
    }
    save_testset(quads, tmp.file("test.jsonl"));
    auto loaded = load_testset(tmp.file("test.jsonl"));
    CHECK(loaded == quads);
}

TEST_CASE("every chunk and image references an existing page") {
    Corpus corpus = test::make_topic_corpus(6, {"alpha", "beta"});
    std::set<PageRef> pages;
    for (const auto& page : corpus.pages) pages.insert(page.ref());
    for (const auto& chunk : corpus.chunks) CHECK(pages.count(chunk.source) == 1);
    for (const auto& image : corpus.images) CHECK(pages.count(image.source) == 1);
}
