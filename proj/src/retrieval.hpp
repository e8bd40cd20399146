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

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "backends.hpp"
#include "corpus.hpp"
#include "vectorstore.hpp"

namespace mmrag {

enum class RetrievalStrategy {
    TextOnly,
    ImageClip,
    ImageSummary,
    MultimodalSeparate,
    MultimodalCombined,
};

const char* strategy_name(RetrievalStrategy strategy);

struct RetrievalConfig {
    int k_total = 4;
    int k_text = 2;
    int k_image = 2;
    RetrievalStrategy strategy = RetrievalStrategy::TextOnly;

    void validate() const;
};

enum class ContextKind { Text, Image };

// One retrieved unit of context. Image items that were matched through a
// textual summary still carry the original image payload; the summary text
// that matched is kept alongside for reporting.
struct ContextItem {
    ContextKind kind = ContextKind::Text;
    std::string text;                        // set when kind == Text
    std::optional<ImageAsset> image;         // set when kind == Image
    PageRef source;
    double score = 0.0;
    std::optional<std::string> via_summary;  // set when matched via a summary

    bool operator==(const ContextItem&) const = default;
};

struct ContextBundle {
    std::string question;
    std::vector<ContextItem> items;

    size_t text_count() const;
    size_t image_count() const;

    bool operator==(const ContextBundle&) const = default;
};

// Produces a summary for one image; throwing marks that image as failed.
using SummaryFn = std::function<std::string(const ImageAsset&)>;

struct SummaryBuildStats {
    size_t summarized = 0;
    size_t skipped = 0;
    std::vector<std::string> failures;  // "image_key: message" per skipped image
};

VectorStore build_text_index(const Corpus& corpus, TextEmbedder& embedder,
                             const HnswParams& params, uint64_t seed);

VectorStore build_clip_image_index(const Corpus& corpus, MultimodalEmbedder& embedder,
                                   const HnswParams& params, uint64_t seed);

VectorStore build_summary_image_index(const Corpus& corpus, const SummaryFn& summarize,
                                      TextEmbedder& embedder, const HnswParams& params,
                                      uint64_t seed, SummaryBuildStats* stats = nullptr);

// Text chunks and image summaries embedded into one shared text-space store.
VectorStore build_combined_index(const Corpus& corpus, const SummaryFn& summarize,
                                 TextEmbedder& embedder, const HnswParams& params, uint64_t seed,
                                 SummaryBuildStats* stats = nullptr);

// Stores a strategy may touch. Only the ones the strategy needs must be set.
struct IndexSet {
    const VectorStore* text = nullptr;
    const VectorStore* image_clip = nullptr;
    const VectorStore* image_summary = nullptr;
    const VectorStore* combined = nullptr;
};

struct RetrievalBackends {
    TextEmbedder* text = nullptr;
    MultimodalEmbedder* multimodal = nullptr;
};

ContextBundle retrieve(const RetrievalConfig& cfg, const std::string& question,
                       const IndexSet& indexes, const RetrievalBackends& backends);

enum class GscMode { TextGsc, ImageGsc, MultimodalGsc };

const char* gsc_mode_name(GscMode mode);

// Bypasses retrieval entirely: the bundle holds the annotated gold context.
ContextBundle gold_context(const QAQuadruple& q, GscMode mode);

}  // namespace mmrag
