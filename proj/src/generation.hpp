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

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "backends.hpp"
#include "retrieval.hpp"

namespace mmrag {

// Prompt templates carry a fixed system text plus a user scaffold whose
// placeholders are substituted per question. The "qa" template must use
// {question} and {text_context} exactly once each; the "image_summary"
// template takes no placeholders.
struct PromptTemplate {
    std::string name;
    std::string system_text;
    std::string user_scaffold;

    void validate() const;
};

PromptTemplate default_qa_template();
PromptTemplate default_summary_template();

// Plain-text template file. An optional "---" line splits a custom system
// text (above) from the user scaffold (below); without it the whole file is
// the scaffold and the default system text is kept.
PromptTemplate load_template(const std::filesystem::path& path, const std::string& name);

struct RagAnswer {
    std::string qid;
    std::string setting;
    std::string generator;
    std::string answer_text;
    ContextBundle bundle;
    int images_sent = 0;
};

// Default character budget for the {text_context} block; over-budget items
// are dropped whole, highest distance first.
constexpr size_t kDefaultContextCharBudget = 12000;

std::vector<ChatMessage> build_qa_prompt(const PromptTemplate& tmpl, const std::string& question,
                                         const ContextBundle& bundle, ImageMode image_mode,
                                         int max_images,
                                         size_t context_char_budget = kDefaultContextCharBudget);

// The rendered text-context block exactly as the QA prompt embeds it, so
// judges grade against the same text the generator was shown.
std::string bundle_text_block(const ContextBundle& bundle,
                              size_t context_char_budget = kDefaultContextCharBudget);

// The no-retrieval baseline sends the bare question and nothing else.
std::vector<ChatMessage> build_baseline_prompt(const std::string& question);

std::string summarize_image(ChatBackend& backend, const PromptTemplate& tmpl,
                            const ImageAsset& image);

std::string synthesize_answer(ChatBackend& backend, const std::vector<ChatMessage>& messages);

// Disk-backed summary cache keyed by (image content hash, model id), stored
// as JSON lines so repeated runs append rather than rewrite.
class SummaryCache {
  public:
    SummaryCache() = default;
    explicit SummaryCache(std::filesystem::path path);

    std::optional<std::string> get(const std::string& image_sha256,
                                   const std::string& model_id) const;
    void put(const std::string& image_sha256, const std::string& model_id,
             const std::string& summary_text);
    size_t size() const;

  private:
    mutable std::mutex mutex_;
    std::map<std::pair<std::string, std::string>, std::string> entries_;
    std::filesystem::path path_;
};

// Wraps a chat backend and template into the callback the index builders
// take, consulting the cache before issuing any call.
SummaryFn cached_summarizer(ChatBackend& backend, const PromptTemplate& tmpl, SummaryCache& cache);

}  // namespace mmrag
