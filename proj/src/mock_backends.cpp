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

// Deterministic in-process stand-ins for the remote model backends. They keep
// the full pipeline runnable offline: embeddings are seeded hashes, the chat
// model echoes whatever context it is shown, and the judge applies a fixed
// containment rule. None of them talk to the network.

#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <thread>

#include "backends_detail.hpp"
#include "jsonutil.hpp"
#include "util.hpp"

namespace mmrag::detail {

namespace {

void maybe_sleep(const BackendProfile& profile) {
    if (profile.mock_latency_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(profile.mock_latency_ms));
    }
}

// Lowercases and strips non-alphanumeric edges so that "Zephyr07?" and
// "zephyr07" land on the same mock basis direction.
std::string normalize_token(std::string_view token) {
    size_t begin = 0;
    size_t end = token.size();
    auto alnum = [](char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
    };
    while (begin < end && !alnum(token[begin])) begin++;
    while (end > begin && !alnum(token[end - 1])) end--;
    return to_lower(token.substr(begin, end - begin));
}

void normalize_in_place(Vector& v, uint64_t fallback_key) {
    double norm_sq = 0.0;
    for (double x : v) norm_sq += x * x;
    if (norm_sq <= 1e-24) {
        v = unit_direction(fallback_key, v.size());
        return;
    }
    double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& x : v) x *= inv;
}

class MockTextEmbedder final : public TextEmbedder {
  public:
    explicit MockTextEmbedder(const BackendProfile& profile) : profile_(profile) {}

    std::vector<Vector> embed_texts(const std::vector<std::string>& texts) override {
        if (texts.empty()) {
            throw Error(ErrorCode::InvalidArgument, "embed_texts: batch is empty");
        }
        maybe_sleep(profile_);
        std::vector<Vector> out;
        out.reserve(texts.size());
        for (size_t i = 0; i < texts.size(); i++) {
            if (trim(texts[i]).empty()) {
                throw Error(ErrorCode::InvalidArgument,
                            "embed_texts: text at index " + std::to_string(i) + " is empty");
            }
            out.push_back(embed_one(texts[i]));
        }
        return out;
    }

    const std::string& name() const override { return profile_.name; }
    size_t dim() const override { return profile_.dim; }

  private:
    // Character trigrams hashed into signed buckets. Texts sharing rare words
    // share buckets, which is enough structure for retrieval tests.
    Vector embed_one(const std::string& text) const {
        Vector v(profile_.dim, 0.0);
        for (size_t i = 0; i < text.size(); i++) {
            std::string gram = text.substr(i, 3);
            uint64_t h = splitmix64(profile_.seed ^ fnv1a64(gram));
            size_t idx = static_cast<size_t>(h % profile_.dim);
            v[idx] += ((h >> 32) & 1) ? 1.0 : -1.0;
        }
        normalize_in_place(v, splitmix64(profile_.seed ^ fnv1a64(text)));
        return v;
    }

    BackendProfile profile_;
};

class MockMultimodalEmbedder final : public MultimodalEmbedder {
  public:
    explicit MockMultimodalEmbedder(const BackendProfile& profile) : profile_(profile) {}

    Vector embed_image(const ImageAsset& asset) override {
        if (asset.bytes.empty()) {
            throw Error(ErrorCode::InvalidArgument,
                        "embed_image: image '" + asset.key() + "' has no payload");
        }
        maybe_sleep(profile_);
        Vector v(profile_.dim, 0.0);
        for (const auto& tag : extract_image_tags(asset.bytes)) {
            add_scaled(v, token_direction(normalize_token(tag)), 1.0);
        }
        add_scaled(v, unit_direction(splitmix64(profile_.seed ^ fnv1a64(asset.bytes)), profile_.dim),
                   0.15);
        normalize_in_place(v, splitmix64(profile_.seed ^ fnv1a64(asset.bytes)));
        return v;
    }

    Vector embed_query(const std::string& question) override {
        if (trim(question).empty()) {
            throw Error(ErrorCode::InvalidArgument, "embed_query: question is empty");
        }
        maybe_sleep(profile_);
        Vector v(profile_.dim, 0.0);
        for (const auto& word : split_words(question)) {
            std::string token = normalize_token(word);
            if (!token.empty()) add_scaled(v, token_direction(token), 1.0);
        }
        add_scaled(v, unit_direction(splitmix64(profile_.seed ^ fnv1a64(question)), profile_.dim),
                   0.15);
        normalize_in_place(v, splitmix64(profile_.seed ^ fnv1a64(question)));
        return v;
    }

    const std::string& name() const override { return profile_.name; }
    size_t dim() const override { return profile_.dim; }

  private:
    // Images and query words that carry the same token share one direction,
    // which plants the cross-modal correlation the retrieval tests rely on.
    Vector token_direction(const std::string& token) const {
        return unit_direction(splitmix64(profile_.seed ^ fnv1a64("tag:" + token)), profile_.dim);
    }

    static void add_scaled(Vector& acc, const Vector& dir, double scale) {
        for (size_t i = 0; i < acc.size(); i++) acc[i] += scale * dir[i];
    }

    BackendProfile profile_;
};

// Echoes every CTX[...] marker and image tag it is shown. Questions with no
// usable context come back as a refusal, which keeps un-grounded settings at
// a zero score under the containment judge.
class EchoChatBackend final : public ChatBackend {
  public:
    explicit EchoChatBackend(const BackendProfile& profile) : profile_(profile) {}

    std::string complete(const std::vector<ChatMessage>& messages) override {
        validate_messages(messages);
        size_t images = count_images(messages);
        if (images > static_cast<size_t>(profile_.max_images_per_prompt)) {
            throw Error(ErrorCode::InvalidArgument,
                        "chat request carries " + std::to_string(images) +
                            " images but profile '" + profile_.name + "' allows at most " +
                            std::to_string(profile_.max_images_per_prompt));
        }
        calls_.fetch_add(1);
        maybe_sleep(profile_);

        std::vector<std::string> ctx_values;
        std::vector<std::string> image_labels;
        for (const auto& msg : messages) {
            for (const auto& part : msg.parts) {
                if (const auto* text = std::get_if<TextPart>(&part)) {
                    collect_ctx(text->text, ctx_values);
                } else if (const auto* image = std::get_if<ImagePart>(&part)) {
                    auto tags = extract_image_tags(image->image.bytes);
                    if (tags.empty()) {
                        image_labels.push_back("#" + sha256_hex(image->image.bytes).substr(0, 8));
                    } else {
                        for (const auto& tag : tags) image_labels.push_back(tag);
                    }
                }
            }
        }

        if (ctx_values.empty() && image_labels.empty()) return "I do not know.";
        std::string reply = "ANSWER:";
        for (const auto& value : ctx_values) reply += " " + value;
        for (const auto& label : image_labels) reply += " IMG[" + label + "]";
        return reply;
    }

    const std::string& name() const override { return profile_.name; }
    const BackendProfile& profile() const override { return profile_; }
    size_t call_count() const override { return calls_.load(); }

  private:
    static void collect_ctx(const std::string& text, std::vector<std::string>& out) {
        size_t pos = 0;
        while ((pos = text.find("CTX[", pos)) != std::string::npos) {
            size_t close = text.find(']', pos + 4);
            if (close == std::string::npos) break;
            out.push_back(text.substr(pos + 4, close - pos - 4));
            pos = close + 1;
        }
    }

    BackendProfile profile_;
    std::atomic<size_t> calls_{0};
};

// Grades with one fixed rule: the generated answer must contain the reference
// answer verbatim. Prompts without a reference answer are graded on having
// non-refusal content, so every metric stays exercisable offline.
class RuleJudgeBackend final : public ChatBackend {
  public:
    explicit RuleJudgeBackend(const BackendProfile& profile) : profile_(profile) {}

    std::string complete(const std::vector<ChatMessage>& messages) override {
        validate_messages(messages);
        size_t images = count_images(messages);
        if (images > static_cast<size_t>(profile_.max_images_per_prompt)) {
            throw Error(ErrorCode::InvalidArgument,
                        "judge request carries " + std::to_string(images) +
                            " images but profile '" + profile_.name + "' allows at most " +
                            std::to_string(profile_.max_images_per_prompt));
        }
        calls_.fetch_add(1);
        maybe_sleep(profile_);

        std::string text;
        for (const auto& msg : messages) {
            std::string t = msg.joined_text();
            if (!t.empty()) {
                if (!text.empty()) text += "\n";
                text += t;
            }
        }
        auto sections = parse_sections(text);

        int grade = 0;
        std::string reason;
        auto generated = sections.find("Generated Answer");
        auto reference = sections.find("Reference Answer");
        auto text_ctx = sections.find("Text Context");
        if (generated != sections.end() && reference != sections.end()) {
            std::string ref(trim(reference->second));
            grade = (!ref.empty() && generated->second.find(ref) != std::string::npos) ? 1 : 0;
            reason = grade ? "generated answer contains the reference answer"
                           : "generated answer does not contain the reference answer";
        } else if (generated != sections.end()) {
            std::string answer(trim(generated->second));
            grade = (!answer.empty() && answer != "I do not know.") ? 1 : 0;
            reason = grade ? "generated answer is substantive" : "generated answer is a refusal";
        } else if (text_ctx != sections.end()) {
            grade = trim(text_ctx->second).empty() ? 0 : 1;
            reason = grade ? "text context is non-empty" : "text context is empty";
        } else if (images > 0) {
            grade = 1;
            reason = "image context is present";
        } else {
            grade = 0;
            reason = "no gradable content found";
        }

        json reply = {{"grade", grade}, {"reason", reason}};
        return reply.dump();
    }

    const std::string& name() const override { return profile_.name; }
    const BackendProfile& profile() const override { return profile_; }
    size_t call_count() const override { return calls_.load(); }

  private:
    // Splits "### Heading\nbody" blocks. Bodies run until the next heading.
    static std::map<std::string, std::string> parse_sections(const std::string& text) {
        std::map<std::string, std::string> sections;
        size_t pos = 0;
        while ((pos = text.find("### ", pos)) != std::string::npos) {
            if (pos != 0 && text[pos - 1] != '\n') {
                pos += 4;
                continue;
            }
            size_t eol = text.find('\n', pos);
            if (eol == std::string::npos) break;
            std::string heading(trim(text.substr(pos + 4, eol - pos - 4)));
            size_t next = text.find("\n### ", eol);
            size_t body_end = (next == std::string::npos) ? text.size() : next;
            sections[heading] = std::string(trim(text.substr(eol + 1, body_end - eol - 1)));
            pos = body_end;
        }
        return sections;
    }

    BackendProfile profile_;
    std::atomic<size_t> calls_{0};
};

}  // namespace

std::unique_ptr<TextEmbedder> make_mock_text_embedder(const BackendProfile& profile) {
    if (profile.model_id == "mock-embed") {
        return std::make_unique<MockTextEmbedder>(profile);
    }
    throw Error(ErrorCode::Config, "backend profile '" + profile.name + "': unknown mock model '" +
                                       profile.model_id + "' (expected \"mock-embed\")");
}

std::unique_ptr<MultimodalEmbedder> make_mock_multimodal_embedder(const BackendProfile& profile) {
    if (profile.model_id == "mock-clip") {
        return std::make_unique<MockMultimodalEmbedder>(profile);
    }
    throw Error(ErrorCode::Config, "backend profile '" + profile.name + "': unknown mock model '" +
                                       profile.model_id + "' (expected \"mock-clip\")");
}

std::unique_ptr<ChatBackend> make_mock_chat(const BackendProfile& profile) {
    if (profile.model_id == "mock-chat-echo") {
        return std::make_unique<EchoChatBackend>(profile);
    }
    if (profile.model_id == "mock-judge-contains") {
        return std::make_unique<RuleJudgeBackend>(profile);
    }
    throw Error(ErrorCode::Config,
                "backend profile '" + profile.name + "': unknown mock model '" + profile.model_id +
                    "' (expected \"mock-chat-echo\" or \"mock-judge-contains\")");
}

}  // namespace mmrag::detail
