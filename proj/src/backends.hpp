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

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "corpus.hpp"
#include "vectorstore.hpp"

namespace mmrag {

struct GenerationParams {
    double temperature = 0.7;
    double top_p = 0.95;
    int max_tokens = 300;

    void validate() const;
};

enum class Role { System, User, Assistant };

struct TextPart {
    std::string text;
};

struct ImagePart {
    ImageAsset image;
};

using Part = std::variant<TextPart, ImagePart>;

struct ChatMessage {
    Role role = Role::User;
    std::vector<Part> parts;

    static ChatMessage system(std::string text);
    static ChatMessage user(std::string text);

    /// All text parts concatenated, in order.
    std::string joined_text() const;
    size_t image_count() const;
};

size_t count_images(const std::vector<ChatMessage>& messages);

/// Validates structural rules: at least one part per message, image parts
/// only in user messages.
void validate_messages(const std::vector<ChatMessage>& messages);

enum class BackendKind { TextEmbed, MultimodalEmbed, Chat };

enum class ImageMode { Single, Multi };

struct BackendProfile {
    std::string name;
    BackendKind kind = BackendKind::Chat;
    std::string endpoint = "mock";  // "mock" or a base URL
    std::string model_id;
    GenerationParams params;               // chat only
    size_t max_images_per_prompt = 4;      // chat: prompt-time cap
    ImageMode image_mode = ImageMode::Multi;
    size_t dim = 64;                       // mock embedders
    uint64_t seed = 0;                     // mock determinism
    int timeout_ms = 60000;
    int retry_backoff_ms = 200;
    size_t max_in_flight = 4;
    std::string api_key_env = "MMRAG_API_KEY";
    int mock_latency_ms = 0;

    void validate() const;
};

class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual std::vector<Vector> embed_texts(const std::vector<std::string>& texts) = 0;
    virtual const std::string& name() const = 0;
    virtual size_t dim() const = 0;
};

class MultimodalEmbedder {
public:
    virtual ~MultimodalEmbedder() = default;
    virtual Vector embed_image(const ImageAsset& image) = 0;
    virtual Vector embed_query(const std::string& question) = 0;
    virtual const std::string& name() const = 0;
    virtual size_t dim() const = 0;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
    virtual const std::string& name() const = 0;
    virtual const BackendProfile& profile() const = 0;

    /// Total calls served; retrieval caching tests count these.
    virtual uint64_t call_count() const = 0;
};

std::unique_ptr<TextEmbedder> make_text_embedder(const BackendProfile& profile);
std::unique_ptr<MultimodalEmbedder> make_multimodal_embedder(const BackendProfile& profile);
std::unique_ptr<ChatBackend> make_chat_backend(const BackendProfile& profile);

// ---------------------------------------------------------------------------
// Mock helpers shared with tests.

/// Leading byte pattern that plants a retrievable tag in an image payload:
/// one or more "TAG[...]" groups at the start of the bytes.
std::vector<std::string> extract_image_tags(std::string_view bytes);

/// Deterministic unit vector from a 64-bit key.
Vector unit_direction(uint64_t key, size_t dim);

}  // namespace mmrag
