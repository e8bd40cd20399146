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

#include "generation.hpp"

#include <algorithm>

#include "jsonutil.hpp"
#include "util.hpp"

namespace mmrag {

namespace {

size_t count_placeholder(const std::string& text, const std::string& placeholder) {
    size_t count = 0;
    size_t pos = 0;
    while ((pos = text.find(placeholder, pos)) != std::string::npos) {
        count++;
        pos += placeholder.size();
    }
    return count;
}

void replace_once(std::string& text, const std::string& placeholder, const std::string& value) {
    size_t pos = text.find(placeholder);
    if (pos == std::string::npos) {
        throw Error(ErrorCode::Internal, "template is missing placeholder " + placeholder);
    }
    text.replace(pos, placeholder.size(), value);
}

// Formats the kept text items into the {text_context} block. Each item is
// prefixed with its page source so answers can be traced back.
std::string render_text_context(const std::vector<const ContextItem*>& items) {
    std::string block;
    for (const auto* item : items) {
        if (!block.empty()) block += "\n\n";
        block += "[source " + item->source.to_string() + "]\n" + item->text;
    }
    return block;
}

// Keeps text items in ascending-distance order until the character budget is
// hit; a later (worse) item never displaces an earlier one.
std::vector<const ContextItem*> select_text_items(const ContextBundle& bundle,
                                                  size_t context_char_budget) {
    std::vector<const ContextItem*> text_items;
    size_t used = 0;
    for (const auto& item : bundle.items) {
        if (item.kind != ContextKind::Text) continue;
        if (used + item.text.size() > context_char_budget) continue;
        used += item.text.size();
        text_items.push_back(&item);
    }
    return text_items;
}

}  // namespace

void PromptTemplate::validate() const {
    if (name != "qa" && name != "image_summary") {
        throw Error(ErrorCode::Config,
                    "prompt template name must be \"qa\" or \"image_summary\", got '" + name + "'");
    }
    if (trim(user_scaffold).empty()) {
        throw Error(ErrorCode::Config, "prompt template '" + name + "': user scaffold is empty");
    }
    size_t question_count = count_placeholder(user_scaffold, "{question}");
    size_t context_count = count_placeholder(user_scaffold, "{text_context}");
    if (name == "qa") {
        if (question_count != 1 || context_count != 1) {
            throw Error(ErrorCode::Config,
                        "prompt template 'qa' must contain {question} and {text_context} exactly "
                        "once each");
        }
    } else {
        if (question_count != 0 || context_count != 0) {
            throw Error(ErrorCode::Config,
                        "prompt template 'image_summary' takes no placeholders");
        }
    }
}

PromptTemplate default_qa_template() {
    PromptTemplate tmpl;
    tmpl.name = "qa";
    tmpl.system_text =
        "You are a technical assistant for industrial machine documentation. Answer the question "
        "using only the provided context. If the context does not contain the answer, reply "
        "exactly: I do not know.";
    tmpl.user_scaffold =
        "### Context\n"
        "{text_context}\n"
        "\n"
        "### Question\n"
        "{question}";
    return tmpl;
}

PromptTemplate default_summary_template() {
    PromptTemplate tmpl;
    tmpl.name = "image_summary";
    tmpl.system_text = "You describe figures from industrial machine manuals.";
    tmpl.user_scaffold =
        "Describe this image factually so it can be matched to questions later. Name the "
        "component or screen it shows, transcribe any visible labels, captions, and error codes, "
        "and state what the figure illustrates. Reply with one short paragraph.";
    return tmpl;
}

PromptTemplate load_template(const std::filesystem::path& path, const std::string& name) {
    PromptTemplate tmpl = name == "qa" ? default_qa_template() : default_summary_template();
    tmpl.name = name;

    TemplateFileParts parts = split_template_file(read_file(path));
    if (parts.system_text) tmpl.system_text = *parts.system_text;
    tmpl.user_scaffold = parts.user_scaffold;
    tmpl.validate();
    return tmpl;
}

std::vector<ChatMessage> build_qa_prompt(const PromptTemplate& tmpl, const std::string& question,
                                         const ContextBundle& bundle, ImageMode image_mode,
                                         int max_images, size_t context_char_budget) {
    tmpl.validate();
    if (tmpl.name != "qa") {
        throw Error(ErrorCode::InvalidArgument, "build_qa_prompt needs the 'qa' template");
    }
    if (max_images < 0) {
        throw Error(ErrorCode::InvalidArgument, "build_qa_prompt: max_images must be >= 0");
    }

    std::vector<const ContextItem*> text_items = select_text_items(bundle, context_char_budget);

    std::vector<const ContextItem*> image_items;
    for (const auto& item : bundle.items) {
        if (item.kind == ContextKind::Image) image_items.push_back(&item);
    }
    std::stable_sort(image_items.begin(), image_items.end(),
                     [](const ContextItem* a, const ContextItem* b) { return a->score < b->score; });
    size_t image_limit = image_mode == ImageMode::Single
                             ? std::min<size_t>(1, static_cast<size_t>(max_images))
                             : static_cast<size_t>(max_images);
    if (image_items.size() > image_limit) image_items.resize(image_limit);

    std::string user_text = tmpl.user_scaffold;
    replace_once(user_text, "{text_context}", render_text_context(text_items));
    replace_once(user_text, "{question}", question);
    if (user_text.find("{question}") != std::string::npos ||
        user_text.find("{text_context}") != std::string::npos) {
        throw Error(ErrorCode::Internal, "qa template left a placeholder unresolved");
    }

    std::vector<ChatMessage> messages;
    messages.push_back(ChatMessage::system(tmpl.system_text));
    ChatMessage user = ChatMessage::user(std::move(user_text));
    for (const auto* item : image_items) {
        user.parts.push_back(ImagePart{*item->image});
    }
    messages.push_back(std::move(user));
    return messages;
}

std::string bundle_text_block(const ContextBundle& bundle, size_t context_char_budget) {
    return render_text_context(select_text_items(bundle, context_char_budget));
}

std::vector<ChatMessage> build_baseline_prompt(const std::string& question) {
    if (trim(question).empty()) {
        throw Error(ErrorCode::InvalidArgument, "baseline prompt: question is empty");
    }
    return {ChatMessage::user(question)};
}

std::string summarize_image(ChatBackend& backend, const PromptTemplate& tmpl,
                            const ImageAsset& image) {
    tmpl.validate();
    if (tmpl.name != "image_summary") {
        throw Error(ErrorCode::InvalidArgument, "summarize_image needs the 'image_summary' template");
    }
    std::vector<ChatMessage> messages;
    messages.push_back(ChatMessage::system(tmpl.system_text));
    ChatMessage user = ChatMessage::user(tmpl.user_scaffold);
    user.parts.push_back(ImagePart{image});
    messages.push_back(std::move(user));

    std::string summary = backend.complete(messages);
    if (trim(summary).empty()) {
        throw Error(ErrorCode::Backend,
                    "backend '" + backend.name() + "' returned an empty summary for image '" +
                        image.key() + "'");
    }
    return summary;
}

std::string synthesize_answer(ChatBackend& backend, const std::vector<ChatMessage>& messages) {
    std::string answer = backend.complete(messages);
    if (trim(answer).empty()) {
        throw Error(ErrorCode::Backend, "backend '" + backend.name() + "' returned an empty answer");
    }
    return answer;
}

SummaryCache::SummaryCache(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) return;
    for_each_line(path_, [&](size_t line_no, std::string_view line) {
        std::string ctx = path_.string() + ":" + std::to_string(line_no);
        json record = parse_json(line, ctx);
        std::string sha = require_nonempty_string(record, "image_sha256", ctx);
        std::string model = require_nonempty_string(record, "model_id", ctx);
        std::string summary = require_string(record, "summary_text", ctx);
        entries_[{sha, model}] = summary;
    });
}

std::optional<std::string> SummaryCache::get(const std::string& image_sha256,
                                             const std::string& model_id) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = entries_.find({image_sha256, model_id});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void SummaryCache::put(const std::string& image_sha256, const std::string& model_id,
                       const std::string& summary_text) {
    std::lock_guard<std::mutex> lock(mutex_);
    entries_[{image_sha256, model_id}] = summary_text;
    if (!path_.empty()) {
        json record = {{"image_sha256", image_sha256},
                       {"model_id", model_id},
                       {"summary_text", summary_text}};
        append_line(path_, record.dump());
    }
}

size_t SummaryCache::size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_.size();
}

SummaryFn cached_summarizer(ChatBackend& backend, const PromptTemplate& tmpl, SummaryCache& cache) {
    return [&backend, tmpl, &cache](const ImageAsset& image) {
        std::string sha = sha256_hex(image.bytes);
        const std::string& model = backend.profile().model_id;
        if (auto hit = cache.get(sha, model)) return *hit;
        std::string summary = summarize_image(backend, tmpl, image);
        cache.put(sha, model, summary);
        return summary;
    };
}

}  // namespace mmrag
