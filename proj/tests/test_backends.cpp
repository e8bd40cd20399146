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

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "backends.hpp"
#include "jsonutil.hpp"
#include "testutil.hpp"
#include "util.hpp"

using namespace mmrag;

namespace {

double norm(const Vector& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

// Local HTTP server for exercising the wire protocol without a network.
struct TestServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;

    void start() {
        port = server.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~TestServer() {
        server.stop();
        if (thread.joinable()) thread.join();
    }

    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port); }
};

json embedding_payload(const std::vector<Vector>& vectors) {
    json data = json::array();
    for (size_t i = 0; i < vectors.size(); i++) {
        data.push_back({{"index", i}, {"embedding", vectors[i]}});
    }
    return {{"data", data}};
}

}  // namespace

TEST_CASE("generation params validate their ranges") {
    GenerationParams params;
    params.validate();  // defaults are fine

    params.temperature = -0.1;
    CHECK_THROWS_AS(params.validate(), Error);
    params.temperature = 0.7;

    params.top_p = 0.0;
    CHECK_THROWS_AS(params.validate(), Error);
    params.top_p = 1.5;
    CHECK_THROWS_AS(params.validate(), Error);
    params.top_p = 1.0;
    params.validate();

    params.max_tokens = 0;
    CHECK_THROWS_AS(params.validate(), Error);
}

TEST_CASE("backend profiles validate their fields") {
    BackendProfile profile = test::mock_chat_profile();
    profile.validate();

    SUBCASE("empty name") {
        profile.name = "  ";
        CHECK_THROWS_AS(profile.validate(), Error);
    }
    SUBCASE("empty model") {
        profile.model_id = "";
        CHECK_THROWS_AS(profile.validate(), Error);
    }
    SUBCASE("chat image cap") {
        profile.max_images_per_prompt = 0;
        CHECK_THROWS_AS(profile.validate(), Error);
    }
    SUBCASE("embedder dim") {
        BackendProfile embed = test::mock_text_embed_profile();
        embed.dim = 0;
        CHECK_THROWS_AS(embed.validate(), Error);
    }
    SUBCASE("timeout and concurrency") {
        profile.timeout_ms = 0;
        CHECK_THROWS_AS(profile.validate(), Error);
        profile.timeout_ms = 1000;
        profile.max_in_flight = 0;
        CHECK_THROWS_AS(profile.validate(), Error);
    }
}

TEST_CASE("chat message helpers") {
    auto sys = ChatMessage::system("be brief");
    CHECK(sys.role == Role::System);
    CHECK(sys.joined_text() == "be brief");
    CHECK(sys.image_count() == 0);

    ChatMessage user = ChatMessage::user("look at this");
    user.parts.push_back(ImagePart{test::make_image("i1", "bytes")});
    user.parts.push_back(TextPart{"and this"});
    CHECK(user.image_count() == 1);
    CHECK(user.joined_text() == "look at this\nand this");
    CHECK(count_images({sys, user}) == 1);
}

TEST_CASE("validate_messages rejects malformed requests") {
    CHECK_THROWS_AS(validate_messages({}), Error);

    ChatMessage empty;
    CHECK_THROWS_AS(validate_messages({empty}), Error);

    ChatMessage sys = ChatMessage::system("s");
    sys.parts.push_back(ImagePart{test::make_image("i1", "bytes")});
    CHECK_THROWS_AS(validate_messages({sys}), Error);

    ChatMessage user = ChatMessage::user("q");
    user.parts.push_back(ImagePart{test::make_image("i2", "")});
    CHECK_THROWS_AS(validate_messages({user}), Error);

    validate_messages({ChatMessage::system("s"), ChatMessage::user("q")});
}

TEST_CASE("extract_image_tags reads leading TAG groups only") {
    CHECK(extract_image_tags("").empty());
    CHECK(extract_image_tags("\x89PNG") == std::vector<std::string>{});
    CHECK(extract_image_tags("TAG[a]") == std::vector<std::string>{"a"});
    CHECK(extract_image_tags("TAG[a]TAG[b]rest") == std::vector<std::string>{"a", "b"});
    CHECK(extract_image_tags("xTAG[a]") == std::vector<std::string>{});
    CHECK(extract_image_tags("TAG[unclosed") == std::vector<std::string>{});
    CHECK(extract_image_tags("TAG[a]xTAG[b]") == std::vector<std::string>{"a"});
}

TEST_CASE("unit_direction is deterministic and normalized") {
    auto a = unit_direction(42, 64);
    auto b = unit_direction(42, 64);
    auto c = unit_direction(43, 64);
    CHECK(a == b);
    CHECK(a != c);
    CHECK(norm(a) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(unit_direction(7, 1).size() == 1);
}

TEST_CASE("mock text embedder")  {
    auto embedder = make_text_embedder(test::mock_text_embed_profile());
    CHECK(embedder->name() == "text-embed-test");
    CHECK(embedder->dim() == 64);

    SUBCASE("identical texts embed identically, different texts differ") {
        auto out = embedder->embed_texts({"pressure valve", "pressure valve", "other words"});
        REQUIRE(out.size() == 3);
        CHECK(out[0] == out[1]);
        CHECK(out[0] != out[2]);
    }
    SUBCASE("embeddings are unit vectors of the profile dimension") {
        auto out = embedder->embed_texts({"a", "some longer sentence about pumps"});
        for (const auto& v : out) {
            CHECK(v.size() == 64);
            CHECK(norm(v) == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
    SUBCASE("batch output preserves input order") {
        std::vector<std::string> texts = {"one", "two", "three"};
        auto batch = embedder->embed_texts(texts);
        for (size_t i = 0; i < texts.size(); i++) {
            CHECK(batch[i] == embedder->embed_texts({texts[i]})[0]);
        }
    }
    SUBCASE("a fresh instance with the same profile agrees") {
        auto other = make_text_embedder(test::mock_text_embed_profile());
        CHECK(embedder->embed_texts({"agree"}) == other->embed_texts({"agree"}));
        auto reseeded = make_text_embedder(test::mock_text_embed_profile(/*seed=*/8));
        CHECK(embedder->embed_texts({"agree"}) != reseeded->embed_texts({"agree"}));
    }
    SUBCASE("rejects empty batches and blank texts") {
        CHECK_THROWS_AS(embedder->embed_texts({}), Error);
        CHECK_THROWS_WITH_AS(embedder->embed_texts({"ok", "  "}), doctest::Contains("index 1"),
                             Error);
    }
}

TEST_CASE("mock multimodal embedder") {
    auto embedder = make_multimodal_embedder(test::mock_clip_profile());
    CHECK(embedder->dim() == 64);

    SUBCASE("image embeddings are deterministic and byte-sensitive") {
        auto img = test::make_image("i1", "TAG[rotor]payload");
        auto tweaked = test::make_image("i1", "TAG[rotor]payloae");
        CHECK(embedder->embed_image(img) == embedder->embed_image(img));
        CHECK(embedder->embed_image(img) != embedder->embed_image(tweaked));
        CHECK(norm(embedder->embed_image(img)) == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("query embeddings share the image space") {
        auto q = embedder->embed_query("rotor");
        CHECK(q.size() == embedder->dim());
        CHECK(norm(q) == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("a tagged image sits nearer its own tag's query") {
        auto alpha = embedder->embed_image(test::make_tagged_image("i1", "alpha"));
        auto beta = embedder->embed_image(test::make_tagged_image("i2", "beta"));
        auto q = embedder->embed_query("alpha");
        CHECK(l2_distance(q, alpha) < l2_distance(q, beta));

        // Tokens are case-insensitive and punctuation at the edges is ignored.
        auto messy = embedder->embed_query("What does the Alpha? show");
        CHECK(l2_distance(messy, alpha) < l2_distance(messy, beta));
    }
    SUBCASE("rejects empty payloads and blank queries") {
        CHECK_THROWS_AS(embedder->embed_image(test::make_image("i1", "")), Error);
        CHECK_THROWS_AS(embedder->embed_query("   "), Error);
    }
}

TEST_CASE("echo chat backend") {
    auto chat = make_chat_backend(test::mock_chat_profile());

    SUBCASE("echoes CTX markers from the prompt") {
        auto reply = chat->complete({ChatMessage::user("Context:\nCTX[valve spec]\nAnswer.")});
        CHECK(reply == "ANSWER: valve spec");
        CHECK(chat->call_count() == 1);
    }
    SUBCASE("echoes several markers in order") {
        auto reply = chat->complete({ChatMessage::user("CTX[a] filler CTX[b]")});
        CHECK(reply == "ANSWER: a b");
    }
    SUBCASE("labels tagged images by tag and raw images by content hash") {
        ChatMessage msg = ChatMessage::user("describe");
        msg.parts.push_back(ImagePart{test::make_tagged_image("i1", "gauge")});
        msg.parts.push_back(ImagePart{test::make_image("i2", "rawbytes")});
        auto reply = chat->complete({msg});
        CHECK(reply.find("IMG[gauge]") != std::string::npos);
        CHECK(reply.find("IMG[#" + sha256_hex("rawbytes").substr(0, 8) + "]") !=
              std::string::npos);
    }
    SUBCASE("refuses when no context is present") {
        CHECK(chat->complete({ChatMessage::user("what is the flow rate?")}) == "I do not know.");
    }
    SUBCASE("enforces the per-prompt image cap before counting the call") {
        auto single = make_chat_backend(
            test::mock_chat_profile("single", /*max_images=*/1, ImageMode::Single));
        ChatMessage msg = ChatMessage::user("q");
        msg.parts.push_back(ImagePart{test::make_image("i1", "b1")});
        msg.parts.push_back(ImagePart{test::make_image("i2", "b2")});
        CHECK_THROWS_WITH_AS(single->complete({msg}), doctest::Contains("at most 1"), Error);
        CHECK(single->call_count() == 0);
    }
}

TEST_CASE("rule judge backend grades by containment") {
    auto judge = make_chat_backend(test::mock_judge_profile());
    auto grade_of = [&](const std::string& prompt) {
        json reply = parse_json(judge->complete({ChatMessage::user(prompt)}), "judge reply");
        REQUIRE(reply.contains("grade"));
        REQUIRE(reply.contains("reason"));
        CHECK_FALSE(reply["reason"].get<std::string>().empty());
        return reply["grade"].get<int>();
    };

    CHECK(grade_of("### Generated Answer\nthe answer is 42 exactly\n"
                   "### Reference Answer\n42\n") == 1);
    CHECK(grade_of("### Generated Answer\nno idea\n### Reference Answer\n42\n") == 0);
    CHECK(grade_of("### Generated Answer\nsubstantive reply\n") == 1);
    CHECK(grade_of("### Generated Answer\nI do not know.\n") == 0);
    CHECK(grade_of("### Text Context\nsome retrieved text\n") == 1);
    CHECK(grade_of("### Text Context\n\n") == 0);

    ChatMessage with_image = ChatMessage::user("### Question\nq\n");
    with_image.parts.push_back(ImagePart{test::make_image("i1", "bytes")});
    json reply = parse_json(judge->complete({with_image}), "judge reply");
    CHECK(reply["grade"].get<int>() == 1);
}

TEST_CASE("backend factories reject mismatched profiles") {
    BackendProfile profile = test::mock_chat_profile();
    CHECK_THROWS_AS(make_text_embedder(profile), Error);

    profile = test::mock_text_embed_profile();
    profile.endpoint = "ftp://example.com";
    CHECK_THROWS_AS(make_text_embedder(profile), Error);

    profile = test::mock_text_embed_profile();
    profile.model_id = "mock-unknown";
    CHECK_THROWS_AS(make_text_embedder(profile), Error);

    profile = test::mock_clip_profile();
    CHECK_THROWS_AS(make_chat_backend(profile), Error);
}

TEST_CASE("http embeddings speak the documented wire protocol") {
    TestServer ts;
    std::mutex mu;
    json seen_body;
    std::string seen_auth;
    ts.server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard<std::mutex> lock(mu);
        seen_body = json::parse(req.body);
        seen_auth = req.get_header_value("Authorization");
        size_t count = seen_body["input"].size();
        std::vector<Vector> vectors;
        for (size_t i = 0; i < count; i++) vectors.push_back(Vector(8, double(i)));
        res.set_content(embedding_payload(vectors).dump(), "application/json");
    });
    ts.start();

    BackendProfile profile = test::mock_text_embed_profile(0, /*dim=*/8);
    profile.endpoint = ts.endpoint() + "/v1";
    profile.model_id = "text-embedding-3-small";
    profile.api_key_env = "MMRAG_TEST_KEY";
    setenv("MMRAG_TEST_KEY", "sekrit", 1);
    auto embedder = make_text_embedder(profile);

    auto out = embedder->embed_texts({"first", "second"});
    REQUIRE(out.size() == 2);
    CHECK(out[0] == Vector(8, 0.0));
    CHECK(out[1] == Vector(8, 1.0));
    {
        std::lock_guard<std::mutex> lock(mu);
        CHECK(seen_body["model"] == "text-embedding-3-small");
        CHECK(seen_body["input"] == json({"first", "second"}));
        CHECK(seen_auth == "Bearer sekrit");
    }

    SUBCASE("no Authorization header without the key in the environment") {
        unsetenv("MMRAG_TEST_KEY");
        embedder->embed_texts({"again"});
        std::lock_guard<std::mutex> lock(mu);
        CHECK(seen_auth.empty());
    }
    unsetenv("MMRAG_TEST_KEY");
}

TEST_CASE("http embeddings honor explicit index fields") {
    TestServer ts;
    ts.server.Post("/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        json body = json::parse(req.body);
        REQUIRE(body["input"].size() == 2);
        // Entries deliberately out of order; index decides placement.
        json data = json::array();
        data.push_back({{"index", 1}, {"embedding", Vector(4, 1.0)}});
        data.push_back({{"index", 0}, {"embedding", Vector(4, 0.5)}});
        res.set_content(json({{"data", data}}).dump(), "application/json");
    });
    ts.start();

    BackendProfile profile = test::mock_text_embed_profile(0, /*dim=*/4);
    profile.endpoint = ts.endpoint();
    auto embedder = make_text_embedder(profile);
    auto out = embedder->embed_texts({"a", "b"});
    CHECK(out[0] == Vector(4, 0.5));
    CHECK(out[1] == Vector(4, 1.0));
}

TEST_CASE("http embeddings reject dimension mismatches") {
    TestServer ts;
    ts.server.Post("/embeddings", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(embedding_payload({Vector(3, 0.0)}).dump(), "application/json");
    });
    ts.start();

    BackendProfile profile = test::mock_text_embed_profile(0, /*dim=*/8);
    profile.endpoint = ts.endpoint();
    auto embedder = make_text_embedder(profile);
    CHECK_THROWS_WITH_AS(embedder->embed_texts({"a"}), doctest::Contains("dimension mismatch"),
                         Error);
}

TEST_CASE("http multimodal embedder sends images as base64 data URLs") {
    TestServer ts;
    std::mutex mu;
    std::string seen_input;
    ts.server.Post("/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        {
            std::lock_guard<std::mutex> lock(mu);
            seen_input = json::parse(req.body)["input"][0].get<std::string>();
        }
        res.set_content(embedding_payload({Vector(4, 0.25)}).dump(), "application/json");
    });
    ts.start();

    BackendProfile profile = test::mock_clip_profile(0, /*dim=*/4);
    profile.endpoint = ts.endpoint();
    auto embedder = make_multimodal_embedder(profile);

    auto v = embedder->embed_image(test::make_image("i1", "raw-bytes"));
    CHECK(v == Vector(4, 0.25));
    {
        std::lock_guard<std::mutex> lock(mu);
        CHECK(seen_input == "data:image/png;base64," + base64_encode("raw-bytes"));
    }

    embedder->embed_query("what is shown?");
    std::lock_guard<std::mutex> lock(mu);
    CHECK(seen_input == "what is shown?");
}

TEST_CASE("http retries recover from transient failures") {
    TestServer ts;
    std::atomic<int> hits{0};
    ts.server.Post("/embeddings", [&](const httplib::Request&, httplib::Response& res) {
        int n = ++hits;
        if (n < 3) {
            res.status = 503;
            res.set_content("overloaded", "text/plain");
            return;
        }
        res.set_content(embedding_payload({Vector(4, 1.0)}).dump(), "application/json");
    });
    ts.start();

    BackendProfile profile = test::mock_text_embed_profile(0, /*dim=*/4);
    profile.endpoint = ts.endpoint();
    profile.retry_backoff_ms = 1;
    auto embedder = make_text_embedder(profile);
    CHECK(embedder->embed_texts({"a"})[0] == Vector(4, 1.0));
    CHECK(hits.load() == 3);
}

TEST_CASE("http gives up after three attempts on persistent 5xx") {
    TestServer ts;
    std::atomic<int> hits{0};
    ts.server.Post("/embeddings", [&](const httplib::Request&, httplib::Response& res) {
        hits++;
        res.status = 500;
        res.set_content("boom", "text/plain");
    });
    ts.start();

    BackendProfile profile = test::mock_text_embed_profile(0, /*dim=*/4);
    profile.endpoint = ts.endpoint();
    profile.retry_backoff_ms = 1;
    auto embedder = make_text_embedder(profile);
    CHECK_THROWS_WITH_AS(embedder->embed_texts({"a"}), doctest::Contains("after 3 attempts"),
                         Error);
    CHECK(hits.load() == 3);
}

TEST_CASE("http client errors fail fast without retries") {
    TestServer ts;
    std::atomic<int> hits{0};
    ts.server.Post("/embeddings", [&](const httplib::Request&, httplib::Response& res) {
        hits++;
        res.status = 400;
        res.set_content("{\"error\": \"bad input\"}", "application/json");
    });
    ts.start();

    BackendProfile profile = test::mock_text_embed_profile(0, /*dim=*/4);
    profile.endpoint = ts.endpoint();
    profile.retry_backoff_ms = 1;
    auto embedder = make_text_embedder(profile);
    CHECK_THROWS_WITH_AS(embedder->embed_texts({"a"}), doctest::Contains("HTTP 400"), Error);
    CHECK(hits.load() == 1);
}

TEST_CASE("http chat forwards sampling parameters and images") {
    TestServer ts;
    std::mutex mu;
    json seen_body;
    ts.server.Post("/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        {
            std::lock_guard<std::mutex> lock(mu);
            seen_body = json::parse(req.body);
        }
        json reply = {{"choices", json::array({{{"message", {{"content", "fine answer"}}}}})}};
        res.set_content(reply.dump(), "application/json");
    });
    ts.start();

    BackendProfile profile = test::mock_chat_profile();
    profile.endpoint = ts.endpoint();
    profile.model_id = "gpt-4-vision-preview";
    auto chat = make_chat_backend(profile);

    ChatMessage user = ChatMessage::user("what does the gauge read?");
    user.parts.push_back(ImagePart{test::make_image("i1", "img-bytes")});
    auto reply = chat->complete({ChatMessage::system("answer briefly"), user});
    CHECK(reply == "fine answer");
    CHECK(chat->call_count() == 1);

    std::lock_guard<std::mutex> lock(mu);
    CHECK(seen_body["model"] == "gpt-4-vision-preview");
    CHECK(seen_body["temperature"].get<double>() == doctest::Approx(0.7));
    CHECK(seen_body["top_p"].get<double>() == doctest::Approx(0.95));
    CHECK(seen_body["max_tokens"].get<int>() == 300);
    REQUIRE(seen_body["messages"].size() == 2);
    CHECK(seen_body["messages"][0]["role"] == "system");
    CHECK(seen_body["messages"][0]["content"] == "answer briefly");
    const auto& parts = seen_body["messages"][1]["content"];
    REQUIRE(parts.is_array());
    REQUIRE(parts.size() == 2);
    CHECK(parts[0]["type"] == "text");
    CHECK(parts[1]["type"] == "image_url");
    CHECK(parts[1]["image_url"]["url"] ==
          "data:image/png;base64," + base64_encode("img-bytes"));
}

TEST_CASE("http chat accepts content as a text-part array") {
    TestServer ts;
    ts.server.Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        json content = json::array({{{"type", "text"}, {"text", "two "}},
                                    {{"type", "text"}, {"text", "parts"}}});
        json reply = {{"choices", json::array({{{"message", {{"content", content}}}}})}};
        res.set_content(reply.dump(), "application/json");
    });
    ts.start();

    BackendProfile profile = test::mock_chat_profile();
    profile.endpoint = ts.endpoint();
    auto chat = make_chat_backend(profile);
    CHECK(chat->complete({ChatMessage::user("q")}) == "two parts");
}

TEST_CASE("http chat rejects empty or malformed completions") {
    TestServer ts;
    std::mutex mu;
    std::string payload = "{}";
    ts.server.Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        std::lock_guard<std::mutex> lock(mu);
        res.set_content(payload, "application/json");
    });
    ts.start();

    BackendProfile profile = test::mock_chat_profile();
    profile.endpoint = ts.endpoint();
    auto chat = make_chat_backend(profile);

    {
        std::lock_guard<std::mutex> lock(mu);
        payload = "{}";
    }
    CHECK_THROWS_WITH_AS(chat->complete({ChatMessage::user("q")}),
                         doctest::Contains("no choices"), Error);
    {
        std::lock_guard<std::mutex> lock(mu);
        payload = json({{"choices", json::array({{{"message", {{"content", "  "}}}}})}}).dump();
    }
    CHECK_THROWS_WITH_AS(chat->complete({ChatMessage::user("q")}),
                         doctest::Contains("content is empty"), Error);
    {
        std::lock_guard<std::mutex> lock(mu);
        payload = "not json";
    }
    CHECK_THROWS_WITH_AS(chat->complete({ChatMessage::user("q")}),
                         doctest::Contains("invalid JSON"), Error);
}
