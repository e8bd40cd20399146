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
#include <optional>
#include <string>
#include <vector>

#include "backends.hpp"
#include "corpus.hpp"
#include "jsonutil.hpp"
#include "retrieval.hpp"
#include "vectorstore.hpp"

namespace mmrag {

// The nine experimental settings, in canonical report order.
std::vector<std::string> all_setting_names();
bool is_setting_name(const std::string& name);

struct TemplateConfig {
    std::optional<std::filesystem::path> qa;
    std::optional<std::filesystem::path> image_summary;
    // Keyed by metric name, e.g. "answer_correctness".
    std::map<std::string, std::filesystem::path> judge;
};

struct RunConfig {
    uint64_t seed = 42;
    std::filesystem::path outdir = "out";
    std::filesystem::path corpus_path;
    std::filesystem::path testset_path;
    ChunkConfig chunking;
    RetrievalConfig retrieval;  // base k budget; per-setting strategy applied later
    HnswParams hnsw;
    int concurrency = 4;
    int64_t per_question_timeout_ms = 120000;
    double error_row_threshold = 0.10;
    size_t context_char_budget = 12000;
    TemplateConfig templates;
    BackendProfile text_embed;
    BackendProfile multimodal_embed;
    std::vector<BackendProfile> generators;
    std::vector<BackendProfile> judges;
    std::vector<std::string> settings;  // defaults to all nine

    void validate() const;
};

// Parses a config document. Relative paths resolve against `base_dir`; all
// mock seeds default to the run seed so one value fixes every random choice.
RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// Fully offline configuration wired to the mock backends; paths left empty.
RunConfig default_mock_config(uint64_t seed = 42);

}  // namespace mmrag
