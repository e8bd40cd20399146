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

#include "backends.hpp"

#include <cmath>
#include <sstream>

#include "backends_detail.hpp"
#include "util.hpp"

namespace mmrag {

void GenerationParams::validate() const {
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
        throw Error(ErrorCode::Config, "generation params: temperature must be >= 0");
    }
    if (!(top_p > 0.0) || top_p > 1.0) {
        throw Error(ErrorCode::Config, "generation params: top_p must be in (0, 1]");
    }
    if (max_tokens < 1) {
        throw Error(ErrorCode::Config, "generation params: max_tokens must be >= 1");
    }
}

ChatMessage ChatMessage::system(std::string text) {
    ChatMessage msg;
    msg.role = Role::System;
    msg.parts.push_back(TextPart{std::move(text)});
    return msg;
}

ChatMessage ChatMessage::user(std::string text) {
    ChatMessage msg;
    msg.role = Role::User;
    msg.parts.push_back(TextPart{std::move(text)});
    return msg;
}

std::string ChatMessage::joined_text() const {
    std::string out;
    for (const auto& part : parts) {
        if (const auto* text = std::get_if<TextPart>(&part)) {
            if (!out.empty()) out += "\n";
            out += text->text;
        }
    }
    return out;
}

size_t ChatMessage::image_count() const {
    size_t n = 0;
    for (const auto& part : parts) {
        if (std::holds_alternative<ImagePart>(part)) n++;
    }
    return n;
}

size_t count_images(const std::vector<ChatMessage>& messages) {
    size_t n = 0;
    for (const auto& msg : messages) n += msg.image_count();
    return n;
}

void validate_messages(const std::vector<ChatMessage>& messages) {
    if (messages.empty()) {
        throw Error(ErrorCode::InvalidArgument, "chat request has no messages");
    }
    for (size_t i = 0; i < messages.size(); i++) {
        const auto& msg = messages[i];
        if (msg.parts.empty()) {
            throw Error(ErrorCode::InvalidArgument,
                        "chat message " + std::to_string(i) + " has no content parts");
        }
        for (const auto& part : msg.parts) {
            if (std::holds_alternative<ImagePart>(part) && msg.role != Role::User) {
                throw Error(ErrorCode::InvalidArgument,
                            "chat message " + std::to_string(i) +
                                ": image parts are only allowed in user messages");
            }
            if (const auto* image = std::get_if<ImagePart>(&part)) {
                if (image->image.bytes.empty()) {
                    throw Error(ErrorCode::InvalidArgument,
                                "chat message " + std::to_string(i) + ": image payload is empty");
                }
            }
        }
    }
}

void BackendProfile::validate() const {
    if (trim(name).empty()) {
        throw Error(ErrorCode::Config, "backend profile: name must be non-empty");
    }
    if (trim(endpoint).empty()) {
        throw Error(ErrorCode::Config, "backend profile '" + name + "': endpoint must be non-empty");
    }
    if (trim(model_id).empty()) {
        throw Error(ErrorCode::Config, "backend profile '" + name + "': model_id must be non-empty");
    }
    if (kind == BackendKind::Chat) {
        params.validate();
        if (max_images_per_prompt < 1) {
            throw Error(ErrorCode::Config,
                        "backend profile '" + name + "': max_images_per_prompt must be >= 1");
        }
    } else {
        if (dim < 1) {
            throw Error(ErrorCode::Config,
                        "backend profile '" + name + "': embedding dim must be >= 1");
        }
    }
    if (timeout_ms < 1) {
        throw Error(ErrorCode::Config, "backend profile '" + name + "': timeout_ms must be >= 1");
    }
    if (retry_backoff_ms < 0) {
        throw Error(ErrorCode::Config,
                    "backend profile '" + name + "': retry_backoff_ms must be >= 0");
    }
    if (max_in_flight < 1) {
        throw Error(ErrorCode::Config,
                    "backend profile '" + name + "': max_in_flight must be >= 1");
    }
}

std::vector<std::string> extract_image_tags(std::string_view bytes) {
    std::vector<std::string> tags;
    size_t pos = 0;
    while (pos + 4 <= bytes.size() && bytes.substr(pos, 4) == "TAG[") {
        size_t close = bytes.find(']', pos + 4);
        if (close == std::string_view::npos) break;
        tags.emplace_back(bytes.substr(pos + 4, close - pos - 4));
        pos = close + 1;
    }
    return tags;
}

Vector unit_direction(uint64_t key, size_t dim) {
    Vector v(dim, 0.0);
    double norm_sq = 0.0;
    for (size_t i = 0; i < dim; i++) {
        uint64_t h = splitmix64(key ^ splitmix64(static_cast<uint64_t>(i) + 1));
        // Top 53 bits give a uniform double in [0, 1); spread to [-1, 1).
        double u = static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
        v[i] = 2.0 * u - 1.0;
        norm_sq += v[i] * v[i];
    }
    if (norm_sq <= 0.0) {
        v[0] = 1.0;
        return v;
    }
    double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& x : v) x *= inv;
    return v;
}

namespace {

bool is_http_endpoint(const std::string& endpoint) {
    return starts_with(endpoint, "http://") || starts_with(endpoint, "https://");
}

[[noreturn]] void throw_unknown_endpoint(const BackendProfile& profile) {
    throw Error(ErrorCode::Config, "backend profile '" + profile.name + "': endpoint '" +
                                       profile.endpoint +
                                       "' is not \"mock\" and not an http(s) URL");
}

void require_kind(const BackendProfile& profile, BackendKind kind, const char* what) {
    if (profile.kind != kind) {
        throw Error(ErrorCode::Config,
                    "backend profile '" + profile.name + "' is not a " + std::string(what) +
                        " profile");
    }
}

}  // namespace

std::unique_ptr<TextEmbedder> make_text_embedder(const BackendProfile& profile) {
    profile.validate();
    require_kind(profile, BackendKind::TextEmbed, "text embedding");
    if (profile.endpoint == "mock") return detail::make_mock_text_embedder(profile);
    if (is_http_endpoint(profile.endpoint)) return detail::make_http_text_embedder(profile);
    throw_unknown_endpoint(profile);
}

std::unique_ptr<MultimodalEmbedder> make_multimodal_embedder(const BackendProfile& profile) {
    profile.validate();
    require_kind(profile, BackendKind::MultimodalEmbed, "multimodal embedding");
    if (profile.endpoint == "mock") return detail::make_mock_multimodal_embedder(profile);
    if (is_http_endpoint(profile.endpoint)) return detail::make_http_multimodal_embedder(profile);
    throw_unknown_endpoint(profile);
}

std::unique_ptr<ChatBackend> make_chat_backend(const BackendProfile& profile) {
    profile.validate();
    require_kind(profile, BackendKind::Chat, "chat");
    if (profile.endpoint == "mock") return detail::make_mock_chat(profile);
    if (is_http_endpoint(profile.endpoint)) return detail::make_http_chat(profile);
    throw_unknown_endpoint(profile);
}

}  // namespace mmrag
