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

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "backends.hpp"
#include "corpus.hpp"
#include "util.hpp"

namespace mmrag::test {

// Unique scratch directory under the system temp root, removed on scope exit.
class TempDir {
  public:
    TempDir() {
        static std::atomic<uint64_t> counter{0};
        auto stamp = std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1));
        path_ = std::filesystem::temp_directory_path() / ("mmrag-test-" + stamp);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }

    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path file(const std::string& name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

inline ImageAsset make_image(const std::string& image_id, const std::string& bytes,
                             const std::string& doc_id = "d1", int64_t page_no = 1) {
    ImageAsset asset;
    asset.image_id = image_id;
    asset.bytes = bytes;
    asset.media_type = "image/png";
    asset.source = PageRef{doc_id, page_no};
    return asset;
}

// An image whose mock embedding is dominated by the tag's basis direction.
inline ImageAsset make_tagged_image(const std::string& image_id, const std::string& tag,
                                    const std::string& doc_id = "d1", int64_t page_no = 1) {
    return make_image(image_id, "TAG[" + tag + "]payload-" + image_id, doc_id, page_no);
}

// Builds a corpus of `pages` pages under one document. Page text repeats a
// per-page topic word so the trigram mock embeds related text nearby, and
// every page carries one image tagged with the same topic.
inline Corpus make_topic_corpus(size_t pages, const std::vector<std::string>& topics,
                                const ChunkConfig& cfg = {8, 8}) {
    Corpus corpus;
    for (size_t i = 0; i < pages; i++) {
        const std::string& topic = topics[i % topics.size()];
        PageRecord page;
        page.doc_id = "doc";
        page.page_no = static_cast<int64_t>(i + 1);
        std::string text;
        for (int w = 0; w < 8; w++) text += topic + std::to_string(i) + " ";
        page.page_text = text;
        page.image = make_tagged_image("img" + std::to_string(i), topic, "doc", page.page_no);
        corpus.images.push_back(*page.image);
        corpus.pages.push_back(page);
        auto chunks = chunk_text(page.page_text, cfg, PageRef{"doc", page.page_no});
        for (auto& chunk : chunks) corpus.chunks.push_back(std::move(chunk));
    }
    return corpus;
}

inline BackendProfile mock_text_embed_profile(uint64_t seed = 7, size_t dim = 64) {
    BackendProfile profile;
    profile.name = "text-embed-test";
    profile.kind = BackendKind::TextEmbed;
    profile.endpoint = "mock";
    profile.model_id = "mock-embed";
    profile.dim = dim;
    profile.seed = seed;
    return profile;
}

inline BackendProfile mock_clip_profile(uint64_t seed = 7, size_t dim = 64) {
    BackendProfile profile;
    profile.name = "clip-test";
    profile.kind = BackendKind::MultimodalEmbed;
    profile.endpoint = "mock";
    profile.model_id = "mock-clip";
    profile.dim = dim;
    profile.seed = seed;
    return profile;
}

inline BackendProfile mock_chat_profile(const std::string& name = "chat-test",
                                        size_t max_images = 4,
                                        ImageMode mode = ImageMode::Multi) {
    BackendProfile profile;
    profile.name = name;
    profile.kind = BackendKind::Chat;
    profile.endpoint = "mock";
    profile.model_id = "mock-chat-echo";
    profile.max_images_per_prompt = max_images;
    profile.image_mode = mode;
    return profile;
}

inline BackendProfile mock_judge_profile(const std::string& name = "judge-test",
                                         size_t max_images = 4,
                                         ImageMode mode = ImageMode::Multi) {
    BackendProfile profile = mock_chat_profile(name, max_images, mode);
    profile.model_id = "mock-judge-contains";
    return profile;
}

// Chat backend that replays a fixed script of responses and records every
// request, for driving parse/retry paths the real mocks never produce.
class ScriptedChat : public ChatBackend {
  public:
    ScriptedChat(BackendProfile profile, std::vector<std::string> script)
        : profile_(std::move(profile)), script_(std::move(script)) {}

    std::string complete(const std::vector<ChatMessage>& messages) override {
        validate_messages(messages);
        seen.push_back(messages);
        size_t i = calls_++;
        if (i >= script_.size()) {
            throw Error(ErrorCode::Backend, "scripted chat ran out of responses");
        }
        return script_[i];
    }

    const std::string& name() const override { return profile_.name; }
    const BackendProfile& profile() const override { return profile_; }
    uint64_t call_count() const override { return calls_; }

    std::vector<std::vector<ChatMessage>> seen;

  private:
    BackendProfile profile_;
    std::vector<std::string> script_;
    uint64_t calls_ = 0;
};

inline std::mt19937_64 rng(uint64_t seed = 1234) { return std::mt19937_64(seed); }

inline std::vector<double> random_vector(std::mt19937_64& gen, size_t dim) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(dim);
    for (auto& x : v) x = dist(gen);
    return v;
}

}  // namespace mmrag::test
