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

#include "corpus.hpp"

#include <map>
#include <set>
#include <sstream>

#include "jsonutil.hpp"
#include "util.hpp"

namespace mmrag {

namespace {

bool is_raster_media_type(std::string_view media_type) {
    if (!starts_with(media_type, "image/")) return false;
    return media_type != "image/svg+xml";
}

ImageAsset parse_image(const json& node, const std::string& ctx,
                       const std::filesystem::path& base_dir, const PageRef& source) {
    ImageAsset asset;
    asset.image_id = require_nonempty_string(node, "image_id", ctx);
    asset.media_type = require_nonempty_string(node, "media_type", ctx);
    if (!is_raster_media_type(asset.media_type)) {
        throw Error(ErrorCode::Parse,
                    ctx + ": field 'media_type' must be a raster image type, got '" +
                        asset.media_type + "'");
    }
    const bool has_b64 = node.contains("base64");
    const bool has_ref = node.contains("image_ref");
    if (has_b64 == has_ref) {
        throw Error(ErrorCode::Parse,
                    ctx + ": image needs exactly one of 'base64' or 'image_ref'");
    }
    if (has_b64) {
        std::string encoded = require_string(node, "base64", ctx);
        try {
            asset.bytes = base64_decode(encoded);
        } catch (const Error& e) {
            throw Error(ErrorCode::Parse, ctx + ": field 'base64': " + e.what());
        }
    } else {
        std::string ref = require_nonempty_string(node, "image_ref", ctx);
        std::filesystem::path p(ref);
        if (p.is_relative()) p = base_dir / p;
        try {
            asset.bytes = read_file(p);
        } catch (const Error& e) {
            throw Error(ErrorCode::Io, ctx + ": field 'image_ref': " + e.what());
        }
    }
    if (asset.bytes.empty()) {
        throw Error(ErrorCode::Parse, ctx + ": image payload must be non-empty");
    }
    asset.source = source;
    return asset;
}

json image_to_json(const ImageAsset& asset) {
    return json{{"image_id", asset.image_id},
                {"media_type", asset.media_type},
                {"base64", base64_encode(asset.bytes)}};
}

}  // namespace

std::vector<TextChunk> chunk_text(std::string_view page_text, const ChunkConfig& cfg,
                                  const PageRef& source) {
    if (cfg.window < 1) {
        throw Error(ErrorCode::InvalidArgument, "chunk config: window must be >= 1");
    }
    if (cfg.stride < 1 || cfg.stride > cfg.window) {
        throw Error(ErrorCode::InvalidArgument,
                    "chunk config: stride must be in [1, window], got stride=" +
                        std::to_string(cfg.stride) + " window=" + std::to_string(cfg.window));
    }
    const std::vector<std::string_view> words = split_words(page_text);
    std::vector<TextChunk> chunks;
    if (words.empty()) return chunks;

    size_t start = 0;
    size_t ordinal = 0;
    while (true) {
        const size_t end = std::min(start + cfg.window, words.size());
        TextChunk chunk;
        chunk.chunk_id = source.doc_id + ":p" + std::to_string(source.page_no) + ":c" +
                         std::to_string(ordinal);
        chunk.source = source;
        chunk.word_count = end - start;
        std::string text;
        for (size_t i = start; i < end; ++i) {
            if (i > start) text.push_back(' ');
            text.append(words[i]);
        }
        chunk.text = std::move(text);
        chunks.push_back(std::move(chunk));
        ++ordinal;
        if (start + cfg.window >= words.size()) break;
        start += cfg.stride;
    }
    return chunks;
}

Corpus load_corpus(const std::filesystem::path& path, const ChunkConfig& cfg) {
    Corpus corpus;
    const std::filesystem::path base_dir =
        path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");

    // (doc_id, page_no, image_id) must be unique; records without an image
    // use an empty image id slot.
    std::set<std::tuple<std::string, int64_t, std::string>> seen;
    std::map<PageRef, std::string> page_text_by_ref;
    std::vector<PageRef> page_order;

    for_each_line(path, [&](size_t lineno, std::string_view line) {
        const std::string ctx = path.filename().string() + ":" + std::to_string(lineno);
        json j = parse_json(line, ctx);
        if (!j.is_object()) throw Error(ErrorCode::Parse, ctx + ": record must be a JSON object");

        PageRecord rec;
        rec.doc_id = require_nonempty_string(j, "doc_id", ctx);
        rec.page_no = require_positive_int(j, "page_no", ctx);
        rec.page_text = require_string(j, "page_text", ctx);

        std::string image_slot;
        if (j.contains("image") && !j.at("image").is_null()) {
            rec.image = parse_image(j.at("image"), ctx, base_dir, rec.ref());
            image_slot = rec.image->image_id;
        }

        if (!seen.insert({rec.doc_id, rec.page_no, image_slot}).second) {
            throw Error(ErrorCode::Parse,
                        ctx + ": duplicate (doc_id, page_no, image_id) = (" + rec.doc_id + ", " +
                            std::to_string(rec.page_no) + ", " +
                            (image_slot.empty() ? "<none>" : image_slot) + ")");
        }

        const PageRef ref = rec.ref();
        auto it = page_text_by_ref.find(ref);
        if (it == page_text_by_ref.end()) {
            page_text_by_ref.emplace(ref, rec.page_text);
            page_order.push_back(ref);
        } else if (it->second != rec.page_text) {
            throw Error(ErrorCode::Parse,
                        ctx + ": records of page " + ref.to_string() +
                            " carry different 'page_text'");
        }

        if (rec.image) corpus.images.push_back(*rec.image);
        corpus.pages.push_back(std::move(rec));
    });

    // One chunk pass per page, not per record: duplicated page text on
    // multi-image pages must not produce duplicated chunks.
    for (const PageRef& ref : page_order) {
        auto page_chunks = chunk_text(page_text_by_ref.at(ref), cfg, ref);
        corpus.chunks.insert(corpus.chunks.end(), page_chunks.begin(), page_chunks.end());
    }
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ostringstream out;
    for (const PageRecord& rec : corpus.pages) {
        json j{{"doc_id", rec.doc_id}, {"page_no", rec.page_no}, {"page_text", rec.page_text}};
        j["image"] = rec.image ? image_to_json(*rec.image) : json(nullptr);
        out << j.dump() << '\n';
    }
    write_file(path, out.str());
}

std::vector<QAQuadruple> load_testset(const std::filesystem::path& path) {
    std::vector<QAQuadruple> testset;
    const std::filesystem::path base_dir =
        path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    std::set<std::string> seen_qids;

    for_each_line(path, [&](size_t lineno, std::string_view line) {
        const std::string ctx = path.filename().string() + ":" + std::to_string(lineno);
        json j = parse_json(line, ctx);
        if (!j.is_object()) throw Error(ErrorCode::Parse, ctx + ": record must be a JSON object");

        QAQuadruple q;
        q.qid = require_nonempty_string(j, "qid", ctx);
        if (!seen_qids.insert(q.qid).second) {
            throw Error(ErrorCode::Parse, ctx + ": duplicate qid '" + q.qid + "'");
        }
        q.question = require_nonempty_string(j, "question", ctx);
        q.reference_answer = require_nonempty_string(j, "reference_answer", ctx);
        q.gold_text = require_string(j, "gold_text", ctx);
        q.source_page.doc_id = require_nonempty_string(j, "doc_id", ctx);
        q.source_page.page_no = require_positive_int(j, "page_no", ctx);
        if (j.contains("gold_image") && !j.at("gold_image").is_null()) {
            q.gold_image = parse_image(j.at("gold_image"), ctx, base_dir, q.source_page);
        }
        testset.push_back(std::move(q));
    });
    return testset;
}

void save_testset(const std::vector<QAQuadruple>& testset, const std::filesystem::path& path) {
    std::ostringstream out;
    for (const QAQuadruple& q : testset) {
        json j{{"qid", q.qid},
               {"question", q.question},
               {"reference_answer", q.reference_answer},
               {"gold_text", q.gold_text},
               {"doc_id", q.source_page.doc_id},
               {"page_no", q.source_page.page_no}};
        j["gold_image"] = q.gold_image ? image_to_json(*q.gold_image) : json(nullptr);
        out << j.dump() << '\n';
    }
    write_file(path, out.str());
}

}  // namespace mmrag
