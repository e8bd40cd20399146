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

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "evaluation.hpp"
#include "generation.hpp"
#include "retrieval.hpp"

namespace mmrag {

// How one experimental setting maps onto the machinery: a retrieval strategy,
// a gold-context mode, or (Baseline) neither.
struct SettingPlan {
    std::string id;
    std::optional<RetrievalConfig> retrieval;
    std::optional<GscMode> gsc;
    ImageMode image_mode = ImageMode::Multi;
};

SettingPlan setting_plan(const std::string& id, const RetrievalConfig& base);

// One line of answers.jsonl: either a generated answer or a per-question
// failure that the batch recorded and moved past.
struct AnswerRecord {
    std::string qid;
    std::string setting;
    std::string generator;
    bool ok = true;
    RagAnswer answer;   // valid when ok
    std::string error;  // set when !ok
};

// Image payloads are persisted by reference (key + content hash), so loading
// needs the corpus images and the per-question gold images to resolve them.
json answer_record_to_json(const AnswerRecord& rec);
AnswerRecord answer_record_from_json(const json& doc, const std::string& ctx,
                                     const std::map<std::string, const ImageAsset*>& corpus_images,
                                     const std::map<std::string, const ImageAsset*>& gold_images);

class Engine {
  public:
    explicit Engine(RunConfig config);
    ~Engine();

    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    const RunConfig& config() const { return config_; }
    const Corpus& corpus();
    const std::vector<QAQuadruple>& testset();

    // Direct injection for callers that build corpora in memory.
    void set_corpus(Corpus corpus);
    void set_testset(std::vector<QAQuadruple> testset);

    // Validates, chunks, and persists a normalized corpus; returns counts.
    json ingest(const std::filesystem::path& corpus_file);

    // Builds (or with force, rebuilds) every index the setting needs, for all
    // configured generators where the index is generator-specific.
    json build_indexes(const std::string& setting_id, bool force);

    // Fills the summary cache for every configured generator.
    json summarize_all();

    RagAnswer ask(const std::string& question, const std::string& setting_id,
                  const std::string& generator_name = "");

    std::vector<AnswerRecord> run_setting(const SettingPlan& plan, const BackendProfile& generator);

    void run_batch();
    void run_eval();
    ScoreTable run_report();
    ScoreTable run_experiment();

    json dry_run_plan();

    // Audit hooks.
    size_t total_index_searches() const;
    size_t chat_call_count(const std::string& profile_name) const;

    struct Impl;

  private:
    std::unique_ptr<Impl> impl_;
    RunConfig config_;
};

}  // namespace mmrag
