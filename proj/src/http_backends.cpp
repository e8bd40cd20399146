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

// Clients for OpenAI-compatible embedding and chat-completion endpoints.
// Images travel inline as base64 data URLs. Transport failures, 429 and 5xx
// responses are retried with exponential backoff; other statuses fail fast.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "backends_detail.hpp"
#include "jsonutil.hpp"
#include "log.hpp"
#include "util.hpp"

namespace mmrag::detail {

namespace {

constexpr int kMaxAttempts = 3;

class Semaphore {
  public:
    explicit Semaphore(int slots) : slots_(slots) {}

    void acquire() {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_.wait(lock, [&] { return slots_ > 0; });
        slots_--;
    }

    void release() {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            slots_++;
        }
        cv_.notify_one();
    }

  private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int slots_;
};

struct SlotGuard {
    explicit SlotGuard(Semaphore& sem) : sem_(sem) { sem_.acquire(); }
    ~SlotGuard() { sem_.release(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;
    Semaphore& sem_;
};

struct ParsedEndpoint {
    std::string scheme_host_port;
    std::string base_path;
};

ParsedEndpoint parse_endpoint(const std::string& endpoint) {
    size_t scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorCode::Config, "endpoint '" + endpoint + "' is not an http(s) URL");
    }
    size_t path_start = endpoint.find('/', scheme_end + 3);
    ParsedEndpoint parsed;
    if (path_start == std::string::npos) {
        parsed.scheme_host_port = endpoint;
    } else {
        parsed.scheme_host_port = endpoint.substr(0, path_start);
        parsed.base_path = endpoint.substr(path_start);
    }
    while (!parsed.base_path.empty() && parsed.base_path.back() == '/') {
        parsed.base_path.pop_back();
    }
    return parsed;
}

std::string body_snippet(const std::string& body) {
    std::string snippet(trim(body).substr(0, 200));
    for (auto& c : snippet) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return snippet;
}

std::string data_url(const ImageAsset& asset) {
    return "data:" + asset.media_type + ";base64," + base64_encode(asset.bytes);
}

class HttpCore {
  public:
    explicit HttpCore(const BackendProfile& profile)
        : profile_(profile),
          endpoint_(parse_endpoint(profile.endpoint)),
          slots_(profile.max_in_flight) {}

    json post_json(const std::string& path, const json& body) {
        SlotGuard guard(slots_);
        std::string payload = body.dump();
        std::string url_path = endpoint_.base_path + path;

        httplib::Headers headers;
        if (const char* key = std::getenv(profile_.api_key_env.c_str());
            key != nullptr && key[0] != '\0') {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }

        std::string last_failure;
        for (int attempt = 1; attempt <= kMaxAttempts; attempt++) {
            httplib::Client client(endpoint_.scheme_host_port);
            client.set_connection_timeout(0, profile_.timeout_ms * 1000LL);
            client.set_read_timeout(profile_.timeout_ms / 1000, (profile_.timeout_ms % 1000) * 1000);
            client.set_write_timeout(profile_.timeout_ms / 1000,
                                     (profile_.timeout_ms % 1000) * 1000);

            auto res = client.Post(url_path, headers, payload, "application/json");
            if (res) {
                if (res->status >= 200 && res->status < 300) {
                    try {
                        return json::parse(res->body);
                    } catch (const json::parse_error& e) {
                        throw Error(ErrorCode::Backend,
                                    "backend '" + profile_.name + "': invalid JSON response: " +
                                        body_snippet(res->body));
                    }
                }
                last_failure = "HTTP " + std::to_string(res->status) + ": " +
                               body_snippet(res->body);
                bool retryable = res->status == 429 || res->status >= 500;
                if (!retryable) {
                    throw Error(ErrorCode::Backend,
                                "backend '" + profile_.name + "' " + url_path + " failed: " +
                                    last_failure);
                }
            } else {
                last_failure = "transport error: " + httplib::to_string(res.error());
            }
            if (attempt < kMaxAttempts) {
                int64_t delay = profile_.retry_backoff_ms << (attempt - 1);
                log::warn("backend '" + profile_.name + "' " + url_path + " attempt " +
                          std::to_string(attempt) + " failed (" + last_failure + "), retrying in " +
                          std::to_string(delay) + "ms");
                std::this_thread::sleep_for(std::chrono::milliseconds(delay));
            }
        }
        throw Error(ErrorCode::Backend, "backend '" + profile_.name + "' " + url_path +
                                            " failed after " + std::to_string(kMaxAttempts) +
                                            " attempts; last: " + last_failure);
    }

    const BackendProfile& profile() const { return profile_; }

  private:
    BackendProfile profile_;
    ParsedEndpoint endpoint_;
    Semaphore slots_;
};

Vector parse_embedding(const json& entry, size_t expected_dim, const std::string& backend) {
    if (!entry.is_array()) {
        throw Error(ErrorCode::Backend, "backend '" + backend + "': embedding is not an array");
    }
    Vector v;
    v.reserve(entry.size());
    for (const auto& item : entry) {
        if (!item.is_number()) {
            throw Error(ErrorCode::Backend,
                        "backend '" + backend + "': embedding holds a non-numeric component");
        }
        double x = item.get<double>();
        if (!std::isfinite(x)) {
            throw Error(ErrorCode::Backend,
                        "backend '" + backend + "': embedding holds a non-finite component");
        }
        v.push_back(x);
    }
    if (v.size() != expected_dim) {
        throw Error(ErrorCode::Backend, "backend '" + backend + "': embedding dimension mismatch: "
                                            "expected " +
                                            std::to_string(expected_dim) + ", got " +
                                            std::to_string(v.size()));
    }
    return v;
}

std::vector<Vector> parse_embedding_response(const json& resp, size_t count, size_t expected_dim,
                                             const std::string& backend) {
    if (!resp.contains("data") || !resp["data"].is_array()) {
        throw Error(ErrorCode::Backend,
                    "backend '" + backend + "': response is missing the data array");
    }
    const auto& data = resp["data"];
    if (data.size() != count) {
        throw Error(ErrorCode::Backend, "backend '" + backend + "': expected " +
                                            std::to_string(count) + " embeddings, got " +
                                            std::to_string(data.size()));
    }
    std::vector<Vector> out(count);
    std::vector<bool> seen(count, false);
    for (size_t slot = 0; slot < data.size(); slot++) {
        const auto& entry = data[slot];
        size_t index = slot;
        if (entry.contains("index") && entry["index"].is_number_integer()) {
            int64_t idx = entry["index"].get<int64_t>();
            if (idx < 0 || static_cast<size_t>(idx) >= count) {
                throw Error(ErrorCode::Backend,
                            "backend '" + backend + "': embedding index out of range");
            }
            index = static_cast<size_t>(idx);
        }
        if (seen[index]) {
            throw Error(ErrorCode::Backend, "backend '" + backend + "': duplicate embedding index");
        }
        if (!entry.contains("embedding")) {
            throw Error(ErrorCode::Backend,
                        "backend '" + backend + "': response entry is missing the embedding");
        }
        out[index] = parse_embedding(entry["embedding"], expected_dim, backend);
        seen[index] = true;
    }
    return out;
}

class HttpTextEmbedder final : public TextEmbedder {
  public:
    explicit HttpTextEmbedder(const BackendProfile& profile) : core_(profile) {}

    std::vector<Vector> embed_texts(const std::vector<std::string>& texts) override {
        if (texts.empty()) {
            throw Error(ErrorCode::InvalidArgument, "embed_texts: batch is empty");
        }
        for (size_t i = 0; i < texts.size(); i++) {
            if (trim(texts[i]).empty()) {
                throw Error(ErrorCode::InvalidArgument,
                            "embed_texts: text at index " + std::to_string(i) + " is empty");
            }
        }
        json body = {{"model", core_.profile().model_id}, {"input", texts}};
        json resp = core_.post_json("/embeddings", body);
        return parse_embedding_response(resp, texts.size(), core_.profile().dim,
                                        core_.profile().name);
    }

    const std::string& name() const override { return core_.profile().name; }
    size_t dim() const override { return core_.profile().dim; }

  private:
    HttpCore core_;
};

class HttpMultimodalEmbedder final : public MultimodalEmbedder {
  public:
    explicit HttpMultimodalEmbedder(const BackendProfile& profile) : core_(profile) {}

    Vector embed_image(const ImageAsset& asset) override {
        if (asset.bytes.empty()) {
            throw Error(ErrorCode::InvalidArgument,
                        "embed_image: image '" + asset.key() + "' has no payload");
        }
        json body = {{"model", core_.profile().model_id},
                     {"input", json::array({data_url(asset)})}};
        json resp = core_.post_json("/embeddings", body);
        return parse_embedding_response(resp, 1, core_.profile().dim, core_.profile().name)[0];
    }

    Vector embed_query(const std::string& question) override {
        if (trim(question).empty()) {
            throw Error(ErrorCode::InvalidArgument, "embed_query: question is empty");
        }
        json body = {{"model", core_.profile().model_id}, {"input", json::array({question})}};
        json resp = core_.post_json("/embeddings", body);
        return parse_embedding_response(resp, 1, core_.profile().dim, core_.profile().name)[0];
    }

    const std::string& name() const override { return core_.profile().name; }
    size_t dim() const override { return core_.profile().dim; }

  private:
    HttpCore core_;
};

class HttpChatBackend final : public ChatBackend {
  public:
    explicit HttpChatBackend(const BackendProfile& profile) : core_(profile) {}

    std::string complete(const std::vector<ChatMessage>& messages) override {
        validate_messages(messages);
        size_t images = count_images(messages);
        if (images > static_cast<size_t>(core_.profile().max_images_per_prompt)) {
            throw Error(ErrorCode::InvalidArgument,
                        "chat request carries " + std::to_string(images) +
                            " images but profile '" + core_.profile().name + "' allows at most " +
                            std::to_string(core_.profile().max_images_per_prompt));
        }
        calls_.fetch_add(1);

        const auto& params = core_.profile().params;
        json body = {{"model", core_.profile().model_id},
                     {"temperature", params.temperature},
                     {"top_p", params.top_p},
                     {"max_tokens", params.max_tokens},
                     {"messages", render_messages(messages)}};
        json resp = core_.post_json("/chat/completions", body);
        return extract_content(resp);
    }

    const std::string& name() const override { return core_.profile().name; }
    const BackendProfile& profile() const override { return core_.profile(); }
    size_t call_count() const override { return calls_.load(); }

  private:
    static const char* role_name(Role role) {
        switch (role) {
            case Role::System: return "system";
            case Role::User: return "user";
            case Role::Assistant: return "assistant";
        }
        return "user";
    }

    static json render_messages(const std::vector<ChatMessage>& messages) {
        json out = json::array();
        for (const auto& msg : messages) {
            json entry = {{"role", role_name(msg.role)}};
            if (msg.parts.size() == 1 && std::holds_alternative<TextPart>(msg.parts[0])) {
                entry["content"] = std::get<TextPart>(msg.parts[0]).text;
            } else {
                json parts = json::array();
                for (const auto& part : msg.parts) {
                    if (const auto* text = std::get_if<TextPart>(&part)) {
                        parts.push_back({{"type", "text"}, {"text", text->text}});
                    } else if (const auto* image = std::get_if<ImagePart>(&part)) {
                        parts.push_back({{"type", "image_url"},
                                         {"image_url", {{"url", data_url(image->image)}}}});
                    }
                }
                entry["content"] = std::move(parts);
            }
            out.push_back(std::move(entry));
        }
        return out;
    }

    std::string extract_content(const json& resp) const {
        if (!resp.contains("choices") || !resp["choices"].is_array() || resp["choices"].empty()) {
            throw Error(ErrorCode::Backend,
                        "backend '" + core_.profile().name + "': response has no choices");
        }
        const auto& message = resp["choices"][0].value("message", json::object());
        if (!message.contains("content")) {
            throw Error(ErrorCode::Backend,
                        "backend '" + core_.profile().name + "': completion is missing content");
        }
        const auto& content = message["content"];
        std::string text;
        if (content.is_string()) {
            text = content.get<std::string>();
        } else if (content.is_array()) {
            for (const auto& part : content) {
                if (part.is_object() && part.value("type", "") == "text") {
                    text += part.value("text", "");
                }
            }
        }
        if (trim(text).empty()) {
            throw Error(ErrorCode::Backend,
                        "backend '" + core_.profile().name + "': completion content is empty");
        }
        return text;
    }

    HttpCore core_;
    std::atomic<size_t> calls_{0};
};

}  // namespace

std::unique_ptr<TextEmbedder> make_http_text_embedder(const BackendProfile& profile) {
    return std::make_unique<HttpTextEmbedder>(profile);
}

std::unique_ptr<MultimodalEmbedder> make_http_multimodal_embedder(const BackendProfile& profile) {
    return std::make_unique<HttpMultimodalEmbedder>(profile);
}

std::unique_ptr<ChatBackend> make_http_chat(const BackendProfile& profile) {
    return std::make_unique<HttpChatBackend>(profile);
}

}  // namespace mmrag::detail
