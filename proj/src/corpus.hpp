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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mmrag {

/// Location of a unit inside the source document collection.
struct PageRef {
    std::string doc_id;
    int64_t page_no = 0;

    bool operator==(const PageRef&) const = default;
    bool operator<(const PageRef& o) const {
        return doc_id != o.doc_id ? doc_id < o.doc_id : page_no < o.page_no;
    }

    std::string to_string() const { return doc_id + ":p" + std::to_string(page_no); }
};

struct ImageAsset {
    std::string image_id;
    std::string bytes;       // raw image payload
    std::string media_type;  // e.g. image/png
    PageRef source;

    bool operator==(const ImageAsset&) const = default;

    /// Corpus-unique key; image_id alone is only unique per page.
    std::string key() const {
        return source.doc_id + ":p" + std::to_string(source.page_no) + ":" + image_id;
    }
};

/// One corpus line: a page, optionally paired with one of its images.
/// Pages with several images appear as several records sharing page_text.
struct PageRecord {
    std::string doc_id;
    int64_t page_no = 0;
    std::string page_text;
    std::optional<ImageAsset> image;

    bool operator==(const PageRecord&) const = default;
    PageRef ref() const { return PageRef{doc_id, page_no}; }
};

struct TextChunk {
    std::string chunk_id;
    std::string text;
    PageRef source;
    size_t word_count = 0;

    bool operator==(const TextChunk&) const = default;
};

struct QAQuadruple {
    std::string qid;
    std::string question;
    std::string reference_answer;
    std::string gold_text;
    std::optional<ImageAsset> gold_image;
    PageRef source_page;

    bool operator==(const QAQuadruple&) const = default;
};

struct ChunkConfig {
    size_t window = 225;  // words per chunk
    size_t stride = 180;  // words between chunk starts
};

struct Corpus {
    std::vector<PageRecord> pages;
    std::vector<TextChunk> chunks;
    std::vector<ImageAsset> images;

    bool operator==(const Corpus&) const = default;
};

/// Fixed-size word windows at offsets 0, stride, 2*stride, ...; the chunk
/// that reaches the end of the page is the last one. Tokens are whitespace
/// words; chunk text re-joins them with single spaces.
std::vector<TextChunk> chunk_text(std::string_view page_text, const ChunkConfig& cfg,
                                  const PageRef& source = {});

/// Loads a JSON-lines corpus file and derives chunks per page.
/// Image payloads come either inline (base64) or from a relative path
/// (image_ref), resolved against the corpus file's directory.
Corpus load_corpus(const std::filesystem::path& path, const ChunkConfig& cfg = {});

/// Writes the corpus back as JSON-lines with inline base64 payloads.
/// load_corpus(save_corpus(c)) == c for any valid corpus and equal ChunkConfig.
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

std::vector<QAQuadruple> load_testset(const std::filesystem::path& path);
void save_testset(const std::vector<QAQuadruple>& testset, const std::filesystem::path& path);

}  // namespace mmrag
