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

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "testutil.hpp"
#include "vectorstore.hpp"

using namespace mmrag;

namespace {

// Independent exhaustive-scan oracle, written against the public contract.
std::vector<SearchHit> brute_force_oracle(const std::vector<std::pair<std::string, Vector>>& data,
                                          const Vector& query, size_t k) {
    std::vector<SearchHit> hits;
    for (const auto& [id, v] : data) {
        double acc = 0.0;
        for (size_t i = 0; i < v.size(); i++) acc += (v[i] - query[i]) * (v[i] - query[i]);
        hits.push_back({id, std::sqrt(acc)});
    }
    std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

}  // namespace

TEST_CASE("l2_distance known values") {
    CHECK(l2_distance({0, 0, 0}, {0, 0, 0}) == 0.0);
    CHECK(l2_distance({1, 2, 2}, {0, 0, 0}) == doctest::Approx(3.0).epsilon(1e-15));
    CHECK_THROWS_AS(l2_distance({1, 2}, {1, 2, 3}), Error);
}

TEST_CASE("l2_distance matches a scalar-loop oracle on 100 random pairs") {
    auto gen = test::rng(99);
    for (int trial = 0; trial < 100; trial++) {
        auto a = test::random_vector(gen, 16);
        auto b = test::random_vector(gen, 16);
        double acc = 0.0;
        for (size_t i = 0; i < a.size(); i++) acc += (a[i] - b[i]) * (a[i] - b[i]);
        CHECK(l2_distance(a, b) == doctest::Approx(std::sqrt(acc)).epsilon(1e-12));
        CHECK(l2_distance(a, b) == doctest::Approx(l2_distance(b, a)).epsilon(1e-15));
    }
}

TEST_CASE("insert and search a single entry") {
    HnswIndex index(4);
    index.insert("e", {1, 2, 3, 4});
    CHECK(index.size() == 1);
    index.seal();
    auto hits = index.search({1, 2, 3, 4}, 3);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].id == "e");
    CHECK(hits[0].distance == 0.0);
}

TEST_CASE("contract errors: duplicates, dimensions, seal discipline") {
    HnswIndex index(3);
    index.insert("a", {1, 0, 0});
    CHECK_THROWS_AS(index.insert("a", {0, 1, 0}), Error);
    CHECK_THROWS_AS(index.insert("b", {1, 0}), Error);
    CHECK_THROWS_AS(index.search({1, 0, 0}, 1), Error);  // not sealed yet
    index.seal();
    CHECK_THROWS_AS(index.insert("c", {0, 0, 1}), Error);  // sealed
    CHECK_THROWS_AS(index.search({1, 0}, 1), Error);       // dim mismatch
    CHECK_THROWS_AS(HnswIndex(0), Error);
}

TEST_CASE("empty index searches to an empty list") {
    HnswIndex index(2);
    index.seal();
    CHECK(index.search({0, 0}, 4).empty());
}

TEST_CASE("k larger than size returns everything sorted") {
    HnswIndex index(2);
    index.insert("far", {10, 0});
    index.insert("near", {1, 0});
    index.insert("mid", {5, 0});
    index.seal();
    auto hits = index.search({0, 0}, 10);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].id == "near");
    CHECK(hits[1].id == "mid");
    CHECK(hits[2].id == "far");
}

TEST_CASE("equal distances break ties by id ascending") {
    HnswIndex index(2);
    index.insert("zeta", {1, 1});
    index.insert("alpha", {1, 1});
    index.insert("mike", {1, 1});
    index.seal();
    auto hits = index.search({0, 0}, 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].id == "alpha");
    CHECK(hits[1].id == "mike");
    CHECK(hits[2].id == "zeta");
}

TEST_CASE("small indexes search exactly like brute force") {
    auto gen = test::rng(4242);
    for (int trial = 0; trial < 20; trial++) {
        std::uniform_int_distribution<size_t> size_dist(1, 64);  // <= default ef_search
        size_t n = size_dist(gen);
        HnswIndex index(8, {}, trial);
        std::vector<std::pair<std::string, Vector>> data;
        for (size_t i = 0; i < n; i++) {
            auto v = test::random_vector(gen, 8);
            std::string id = "v" + std::to_string(i);
            index.insert(id, v);
            data.emplace_back(id, v);
        }
        index.seal();
        auto query = test::random_vector(gen, 8);
        auto expected = brute_force_oracle(data, query, 5);
        auto got = index.search(query, 5);
        REQUIRE(got.size() == expected.size());
        for (size_t i = 0; i < got.size(); i++) {
            CHECK(got[i].id == expected[i].id);
            CHECK(got[i].distance == doctest::Approx(expected[i].distance).epsilon(1e-12));
        }
    }
}

TEST_CASE("hits(k) is a prefix of hits(k+1)") {
    auto gen = test::rng(17);
    HnswIndex index(8, {}, 3);
    for (int i = 0; i < 300; i++) {
        index.insert("n" + std::to_string(i), test::random_vector(gen, 8));
    }
    index.seal();
    auto query = test::random_vector(gen, 8);
    for (size_t k = 1; k <= 10; k++) {
        auto small = index.search(query, k);
        auto large = index.search(query, k + 1);
        REQUIRE(small.size() == k);
        for (size_t i = 0; i < k; i++) CHECK(small[i].id == large[i].id);
    }
}

TEST_CASE("graph degrees stay within M bounds after 1000 inserts") {
    HnswParams params;  // M=16
    HnswIndex index(8, params, 11);
    auto gen = test::rng(11);
    for (int i = 0; i < 1000; i++) {
        index.insert("n" + std::to_string(i), test::random_vector(gen, 8));
    }
    index.seal();
    for (size_t node = 0; node < index.size(); node++) {
        int top = index.node_level(node);
        REQUIRE(top >= 0);
        for (int layer = 0; layer <= top; layer++) {
            size_t cap = layer == 0 ? 2 * params.M : params.M;
            CHECK(index.neighbors(node, layer).size() <= cap);
        }
    }
}

TEST_CASE("identical seed and insert order produce identical graphs and results") {
    auto build = [] {
        HnswIndex index(8, {}, 77);
        auto gen = test::rng(55);
        for (int i = 0; i < 200; i++) {
            index.insert("n" + std::to_string(i), test::random_vector(gen, 8));
        }
        index.seal();
        return index;
    };
    HnswIndex a = build();
    HnswIndex b = build();
    for (size_t node = 0; node < a.size(); node++) {
        REQUIRE(a.node_level(node) == b.node_level(node));
        for (int layer = 0; layer <= a.node_level(node); layer++) {
            CHECK(a.neighbors(node, layer) == b.neighbors(node, layer));
        }
    }
    auto gen = test::rng(1);
    for (int probe = 0; probe < 10; probe++) {
        auto q = test::random_vector(gen, 8);
        CHECK(a.search(q, 5) == b.search(q, 5));
    }
}

TEST_CASE("search_count counts served searches") {
    HnswIndex index(2);
    index.insert("a", {0, 0});
    index.seal();
    CHECK(index.search_count() == 0);
    index.search({0, 0}, 1);
    index.search({1, 1}, 1);
    CHECK(index.search_count() == 2);
}

TEST_CASE("docstore stores and returns exact payloads") {
    DocStore store;
    store.put("t1", TextDoc{"some text", {"d", 1}});
    ImageAsset img = test::make_image("i1", std::string("\x89PNG\x00raw", 8));
    store.put("i1", ImageDoc{img, std::nullopt});

    CHECK(std::get<TextDoc>(store.get("t1")).text == "some text");
    CHECK(std::get<ImageDoc>(store.get("i1")).asset.bytes == img.bytes);
    CHECK_THROWS_AS(store.put("t1", TextDoc{"dup", {"d", 1}}), Error);
    CHECK_THROWS_AS(store.get("missing"), Error);
}

TEST_CASE("docstore behaves like a plain map over 1000 random operations") {
    DocStore store;
    std::map<std::string, std::string> oracle;
    auto gen = test::rng(31337);
    std::uniform_int_distribution<int> key_dist(0, 199);
    for (int op = 0; op < 1000; op++) {
        std::string key = "k" + std::to_string(key_dist(gen));
        if (oracle.count(key) == 0) {
            std::string value = "payload-" + std::to_string(op);
            store.put(key, TextDoc{value, {"d", 1}});
            oracle[key] = value;
        } else {
            CHECK(std::get<TextDoc>(store.get(key)).text == oracle[key]);
        }
    }
    CHECK(store.size() == oracle.size());
    for (const auto& [key, value] : oracle) {
        CHECK(std::get<TextDoc>(store.get(key)).text == value);
    }
}

TEST_CASE("save/load round-trips search behavior") {
    test::TempDir tmp;
    HnswIndex index(8, {}, 5);
    DocStore docs;
    auto gen = test::rng(2024);
    for (int i = 0; i < 150; i++) {
        std::string id = "n" + std::to_string(i);
        index.insert(id, test::random_vector(gen, 8));
        if (i % 3 == 0) {
            docs.put(id, ImageDoc{test::make_image("img" + std::to_string(i), "bytes" +
                                                   std::to_string(i)), "summary"});
        } else {
            docs.put(id, TextDoc{"text" + std::to_string(i), {"d", i}});
        }
    }
    index.seal();
    save_store(index, docs, tmp.file("store.idx"));
    VectorStore loaded = load_store(tmp.file("store.idx"));

    CHECK(loaded.index.size() == index.size());
    CHECK(loaded.index.dim() == index.dim());
    CHECK(loaded.index.seed() == index.seed());
    CHECK(loaded.docs.size() == docs.size());
    CHECK(std::get<TextDoc>(loaded.docs.get("n1")).text == "text1");
    CHECK(std::get<ImageDoc>(loaded.docs.get("n3")).asset.bytes == "bytes3");
    CHECK(*std::get<ImageDoc>(loaded.docs.get("n3")).summary == "summary");

    for (int probe = 0; probe < 50; probe++) {
        auto q = test::random_vector(gen, 8);
        CHECK(loaded.index.search(q, 4) == index.search(q, 4));
    }
}

TEST_CASE("empty index round-trips") {
    test::TempDir tmp;
    HnswIndex index(4, {}, 1);
    index.seal();
    save_store(index, DocStore{}, tmp.file("empty.idx"));
    VectorStore loaded = load_store(tmp.file("empty.idx"));
    CHECK(loaded.index.size() == 0);
    CHECK(loaded.index.search({0, 0, 0, 0}, 4).empty());
}

TEST_CASE("truncated store files are rejected") {
    test::TempDir tmp;
    HnswIndex index(4, {}, 1);
    index.insert("a", {1, 2, 3, 4});
    index.seal();
    save_store(index, DocStore{}, tmp.file("full.idx"));

    std::string bytes = read_file(tmp.file("full.idx"));
    write_file(tmp.file("cut.idx"), bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_store(tmp.file("cut.idx")), Error);

    write_file(tmp.file("garbage.idx"), "MMRX not a store");
    CHECK_THROWS_AS(load_store(tmp.file("garbage.idx")), Error);
}

TEST_CASE("recall at 4 stays above 0.95 on a 1000-vector index") {
    auto gen = test::rng(606);
    std::vector<std::pair<std::string, Vector>> data;
    HnswIndex index(16, {}, 606);
    for (int i = 0; i < 1000; i++) {
        auto v = test::random_vector(gen, 16);
        std::string id = "n" + std::to_string(i);
        index.insert(id, v);
        data.emplace_back(id, v);
    }
    index.seal();

    size_t found = 0, wanted = 0;
    for (int probe = 0; probe < 50; probe++) {
        auto q = test::random_vector(gen, 16);
        auto expected = brute_force_oracle(data, q, 4);
        auto got = index.search(q, 4);
        wanted += expected.size();
        for (const auto& hit : got) {
            for (const auto& want : expected) {
                if (hit.id == want.id) {
                    found++;
                    break;
                }
            }
        }
    }
    double recall = static_cast<double>(found) / static_cast<double>(wanted);
    CHECK(recall >= 0.95);
}
