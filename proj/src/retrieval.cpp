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

#include "retrieval.hpp"

#include <algorithm>

#include "log.hpp"
#include "util.hpp"

namespace mmrag {

namespace {

// Embedding requests are batched so remote backends see bounded payloads.
constexpr size_t kEmbedBatch = 64;

std::vector<Vector> embed_in_batches(TextEmbedder& embedder, const std::vector<std::string>& texts) {
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (size_t start = 0; start < texts.size(); start += kEmbedBatch) {
        size_t end = std::min(texts.size(), start + kEmbedBatch);
        std::vector<std::string> batch(texts.begin() + start, texts.begin() + end);
        auto vectors = embedder.embed_texts(batch);
        for (auto& v : vectors) out.push_back(std::move(v));
    }
    return out;
}

struct SummaryEntry {
    const ImageAsset* asset;
    std::string summary;
};

// Runs the summarizer over every corpus image, skipping failures. The build
// only aborts when images exist and none of them could be summarized.
std::vector<SummaryEntry> collect_summaries(const Corpus& corpus, const SummaryFn& summarize,
                                            SummaryBuildStats* stats) {
    std::vector<SummaryEntry> entries;
    SummaryBuildStats local;
    for (const auto& asset : corpus.images) {
        try {
            std::string summary = summarize(asset);
            if (trim(summary).empty()) {
                throw Error(ErrorCode::Backend, "summarizer returned an empty summary");
            }
            entries.push_back({&asset, std::move(summary)});
            local.summarized++;
        } catch (const std::exception& e) {
            local.skipped++;
            local.failures.push_back(asset.key() + ": " + e.what());
            log::warn("skipping image '" + asset.key() + "': " + e.what());
        }
    }
    if (!corpus.images.empty() && entries.empty()) {
        throw Error(ErrorCode::Backend,
                    "summarization failed for all " + std::to_string(corpus.images.size()) +
                        " images; first failure: " + local.failures.front());
    }
    if (stats != nullptr) *stats = std::move(local);
    return entries;
}

ContextItem text_item(const TextDoc& doc, double score) {
    ContextItem item;
    item.kind = ContextKind::Text;
    item.text = doc.text;
    item.source = doc.source;
    item.score = score;
    return item;
}

ContextItem image_item(const ImageDoc& doc, double score) {
    ContextItem item;
    item.kind = ContextKind::Image;
    item.image = doc.asset;
    item.source = doc.asset.source;
    item.score = score;
    item.via_summary = doc.summary;
    return item;
}

std::vector<ContextItem> hits_to_items(const VectorStore& store,
                                       const std::vector<SearchHit>& hits) {
    std::vector<ContextItem> items;
    items.reserve(hits.size());
    for (const auto& hit : hits) {
        const DocPayload& payload = store.docs.get(hit.id);
        if (const auto* doc = std::get_if<TextDoc>(&payload)) {
            items.push_back(text_item(*doc, hit.distance));
        } else {
            items.push_back(image_item(std::get<ImageDoc>(payload), hit.distance));
        }
    }
    return items;
}

const VectorStore& require_store(const VectorStore* store, RetrievalStrategy strategy,
                                 const char* which) {
    if (store == nullptr) {
        throw Error(ErrorCode::State, std::string("strategy ") + strategy_name(strategy) +
                                          " requires the " + which + " index, which is not loaded");
    }
    if (!store->index.sealed()) {
        throw Error(ErrorCode::State, std::string("strategy ") + strategy_name(strategy) +
                                          ": the " + which + " index is not sealed");
    }
    return *store;
}

TextEmbedder& require_text_backend(const RetrievalBackends& backends, RetrievalStrategy strategy) {
    if (backends.text == nullptr) {
        throw Error(ErrorCode::State, std::string("strategy ") + strategy_name(strategy) +
                                          " requires a text embedding backend");
    }
    return *backends.text;
}

MultimodalEmbedder& require_multimodal_backend(const RetrievalBackends& backends,
                                               RetrievalStrategy strategy) {
    if (backends.multimodal == nullptr) {
        throw Error(ErrorCode::State, std::string("strategy ") + strategy_name(strategy) +
                                          " requires a multimodal embedding backend");
    }
    return *backends.multimodal;
}

// Prompt order contract: text items first, then images, each ascending by
// distance. std::stable_sort keeps the (distance, id) order from search.
void order_bundle(std::vector<ContextItem>& items) {
    std::stable_sort(items.begin(), items.end(), [](const ContextItem& a, const ContextItem& b) {
        if (a.kind != b.kind) return a.kind == ContextKind::Text;
        return a.score < b.score;
    });
}

}  // namespace

const char* strategy_name(RetrievalStrategy strategy) {
    switch (strategy) {
        case RetrievalStrategy::TextOnly: return "TextOnly";
        case RetrievalStrategy::ImageClip: return "ImageClip";
        case RetrievalStrategy::ImageSummary: return "ImageSummary";
        case RetrievalStrategy::MultimodalSeparate: return "MultimodalSeparate";
        case RetrievalStrategy::MultimodalCombined: return "MultimodalCombined";
    }
    return "unknown";
}

void RetrievalConfig::validate() const {
    if (k_total < 1) {
        throw Error(ErrorCode::Config, "retrieval config: k_total must be >= 1");
    }
    if (k_text < 0 || k_image < 0) {
        throw Error(ErrorCode::Config, "retrieval config: k_text and k_image must be >= 0");
    }
    if (k_text > k_total || k_image > k_total) {
        throw Error(ErrorCode::Config, "retrieval config: per-modality k must not exceed k_total");
    }
    if (strategy == RetrievalStrategy::MultimodalSeparate && k_text + k_image != k_total) {
        throw Error(ErrorCode::Config,
                    "retrieval config: MultimodalSeparate requires k_text + k_image == k_total");
    }
}

size_t ContextBundle::text_count() const {
    size_t n = 0;
    for (const auto& item : items) {
        if (item.kind == ContextKind::Text) n++;
    }
    return n;
}

size_t ContextBundle::image_count() const { return items.size() - text_count(); }

VectorStore build_text_index(const Corpus& corpus, TextEmbedder& embedder,
                             const HnswParams& params, uint64_t seed) {
    if (corpus.chunks.empty()) {
        throw Error(ErrorCode::InvalidArgument, "corpus has no text chunks to index");
    }
    std::vector<std::string> texts;
    texts.reserve(corpus.chunks.size());
    for (const auto& chunk : corpus.chunks) texts.push_back(chunk.text);
    auto vectors = embed_in_batches(embedder, texts);

    VectorStore store(embedder.dim(), params, seed);
    for (size_t i = 0; i < corpus.chunks.size(); i++) {
        const auto& chunk = corpus.chunks[i];
        store.index.insert(chunk.chunk_id, vectors[i]);
        store.docs.put(chunk.chunk_id, TextDoc{chunk.text, chunk.source});
    }
    store.index.seal();
    return store;
}

VectorStore build_clip_image_index(const Corpus& corpus, MultimodalEmbedder& embedder,
                                   const HnswParams& params, uint64_t seed) {
    VectorStore store(embedder.dim(), params, seed);
    for (const auto& asset : corpus.images) {
        Vector v = embedder.embed_image(asset);
        store.index.insert(asset.key(), v);
        store.docs.put(asset.key(), ImageDoc{asset, std::nullopt});
    }
    store.index.seal();
    return store;
}

VectorStore build_summary_image_index(const Corpus& corpus, const SummaryFn& summarize,
                                      TextEmbedder& embedder, const HnswParams& params,
                                      uint64_t seed, SummaryBuildStats* stats) {
    auto entries = collect_summaries(corpus, summarize, stats);

    VectorStore store(embedder.dim(), params, seed);
    if (!entries.empty()) {
        std::vector<std::string> summaries;
        summaries.reserve(entries.size());
        for (const auto& entry : entries) summaries.push_back(entry.summary);
        auto vectors = embed_in_batches(embedder, summaries);
        for (size_t i = 0; i < entries.size(); i++) {
            std::string id = "sum:" + entries[i].asset->key();
            store.index.insert(id, vectors[i]);
            store.docs.put(id, ImageDoc{*entries[i].asset, entries[i].summary});
        }
    }
    store.index.seal();
    return store;
}

VectorStore build_combined_index(const Corpus& corpus, const SummaryFn& summarize,
                                 TextEmbedder& embedder, const HnswParams& params, uint64_t seed,
                                 SummaryBuildStats* stats) {
    if (corpus.chunks.empty()) {
        throw Error(ErrorCode::InvalidArgument, "corpus has no text chunks to index");
    }
    auto entries = collect_summaries(corpus, summarize, stats);

    std::vector<std::string> texts;
    texts.reserve(corpus.chunks.size() + entries.size());
    for (const auto& chunk : corpus.chunks) texts.push_back(chunk.text);
    for (const auto& entry : entries) texts.push_back(entry.summary);
    auto vectors = embed_in_batches(embedder, texts);

    VectorStore store(embedder.dim(), params, seed);
    for (size_t i = 0; i < corpus.chunks.size(); i++) {
        const auto& chunk = corpus.chunks[i];
        store.index.insert(chunk.chunk_id, vectors[i]);
        store.docs.put(chunk.chunk_id, TextDoc{chunk.text, chunk.source});
    }
    for (size_t i = 0; i < entries.size(); i++) {
        std::string id = "sum:" + entries[i].asset->key();
        store.index.insert(id, vectors[corpus.chunks.size() + i]);
        store.docs.put(id, ImageDoc{*entries[i].asset, entries[i].summary});
    }
    store.index.seal();
    return store;
}

ContextBundle retrieve(const RetrievalConfig& cfg, const std::string& question,
                       const IndexSet& indexes, const RetrievalBackends& backends) {
    cfg.validate();
    if (trim(question).empty()) {
        throw Error(ErrorCode::InvalidArgument, "retrieve: question is empty");
    }

    ContextBundle bundle;
    bundle.question = question;

    switch (cfg.strategy) {
        case RetrievalStrategy::TextOnly: {
            const auto& store = require_store(indexes.text, cfg.strategy, "text");
            auto& embedder = require_text_backend(backends, cfg.strategy);
            Vector qv = embedder.embed_texts({question})[0];
            bundle.items = hits_to_items(store, store.index.search(qv, cfg.k_total));
            break;
        }
        case RetrievalStrategy::ImageClip: {
            const auto& store = require_store(indexes.image_clip, cfg.strategy, "clip image");
            auto& embedder = require_multimodal_backend(backends, cfg.strategy);
            Vector qv = embedder.embed_query(question);
            bundle.items = hits_to_items(store, store.index.search(qv, cfg.k_total));
            break;
        }
        case RetrievalStrategy::ImageSummary: {
            // Summaries live in text embedding space, so the query does too.
            const auto& store = require_store(indexes.image_summary, cfg.strategy, "summary image");
            auto& embedder = require_text_backend(backends, cfg.strategy);
            Vector qv = embedder.embed_texts({question})[0];
            bundle.items = hits_to_items(store, store.index.search(qv, cfg.k_total));
            break;
        }
        case RetrievalStrategy::MultimodalSeparate: {
            // The question is embedded once per modality and each store is
            // searched independently, so images can never be crowded out.
            const auto& text_store = require_store(indexes.text, cfg.strategy, "text");
            const auto& image_store = require_store(indexes.image_clip, cfg.strategy, "clip image");
            auto& text_embedder = require_text_backend(backends, cfg.strategy);
            auto& mm_embedder = require_multimodal_backend(backends, cfg.strategy);
            if (cfg.k_text > 0) {
                Vector qv = text_embedder.embed_texts({question})[0];
                bundle.items = hits_to_items(text_store, text_store.index.search(qv, cfg.k_text));
            }
            if (cfg.k_image > 0) {
                Vector qv = mm_embedder.embed_query(question);
                auto image_items =
                    hits_to_items(image_store, image_store.index.search(qv, cfg.k_image));
                bundle.items.insert(bundle.items.end(), image_items.begin(), image_items.end());
            }
            break;
        }
        case RetrievalStrategy::MultimodalCombined: {
            const auto& store = require_store(indexes.combined, cfg.strategy, "combined");
            auto& embedder = require_text_backend(backends, cfg.strategy);
            Vector qv = embedder.embed_texts({question})[0];
            bundle.items = hits_to_items(store, store.index.search(qv, cfg.k_total));
            break;
        }
    }

    order_bundle(bundle.items);
    return bundle;
}

const char* gsc_mode_name(GscMode mode) {
    switch (mode) {
        case GscMode::TextGsc: return "TextGsc";
        case GscMode::ImageGsc: return "ImageGsc";
        case GscMode::MultimodalGsc: return "MultimodalGsc";
    }
    return "unknown";
}

ContextBundle gold_context(const QAQuadruple& q, GscMode mode) {
    bool want_text = mode == GscMode::TextGsc || mode == GscMode::MultimodalGsc;
    bool want_image = mode == GscMode::ImageGsc || mode == GscMode::MultimodalGsc;

    if (want_text && trim(q.gold_text).empty()) {
        throw Error(ErrorCode::InvalidArgument,
                    "question '" + q.qid + "' has no gold text for " + gsc_mode_name(mode));
    }
    if (want_image && !q.gold_image.has_value()) {
        throw Error(ErrorCode::InvalidArgument,
                    "question '" + q.qid + "' has no gold image for " + gsc_mode_name(mode));
    }

    ContextBundle bundle;
    bundle.question = q.question;
    if (want_text) {
        ContextItem item;
        item.kind = ContextKind::Text;
        item.text = q.gold_text;
        item.source = q.source_page;
        item.score = 0.0;
        bundle.items.push_back(std::move(item));
    }
    if (want_image) {
        ContextItem item;
        item.kind = ContextKind::Image;
        item.image = q.gold_image;
        item.source = q.source_page;
        item.score = 0.0;
        bundle.items.push_back(std::move(item));
    }
    return bundle;
}

}  // namespace mmrag
