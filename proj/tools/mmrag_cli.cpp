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

// Thin single-threaded driver over the C API. All experiment concurrency
// lives behind the engine handle; this binary parses flags, forwards one
// command, and maps the returned status onto its exit code.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmrag/mmrag.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOptions {
    std::string config_path;
    std::optional<int64_t> seed;
    std::string outdir;
    bool dry_run = false;
};

int fail(mmr_status status) {
    std::cerr << "error: " << mmr_last_error() << "\n";
    return static_cast<int>(status);
}

// Assembles the effective config document: file (or empty object), then
// flag overrides. Paths given on the command line resolve against the
// current directory, not the config file location.
json effective_config(const GlobalOptions& opts, std::string& base_dir) {
    json doc = json::object();
    base_dir.clear();
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path, std::ios::binary);
        if (!in) {
            throw std::runtime_error("cannot open config file: " + opts.config_path);
        }
        std::ostringstream buf;
        buf << in.rdbuf();
        doc = json::parse(buf.str(), nullptr, false);
        if (doc.is_discarded()) {
            throw std::runtime_error("config file is not valid JSON: " + opts.config_path);
        }
        base_dir = fs::path(opts.config_path).parent_path().string();
    }
    if (opts.seed) doc["seed"] = *opts.seed;
    if (!opts.outdir.empty()) doc["outdir"] = fs::absolute(opts.outdir).string();
    return doc;
}

class EngineHandle {
  public:
    explicit EngineHandle(const GlobalOptions& opts) {
        std::string base_dir;
        json doc = effective_config(opts, base_dir);
        std::string text = doc.dump();
        mmr_status status = mmr_engine_open_json(
            text.c_str(), base_dir.empty() ? nullptr : base_dir.c_str(), &engine_);
        if (status != MMR_OK) {
            throw std::runtime_error(mmr_last_error());
        }
    }
    ~EngineHandle() { mmr_engine_close(engine_); }

    EngineHandle(const EngineHandle&) = delete;
    EngineHandle& operator=(const EngineHandle&) = delete;

    mmr_engine* get() const { return engine_; }

  private:
    mmr_engine* engine_ = nullptr;
};

json take_json(char* raw) {
    json doc = json::parse(raw);
    mmr_string_free(raw);
    return doc;
}

int print_dry_run(mmr_engine* engine) {
    char* out = nullptr;
    mmr_status status = mmr_dry_run(engine, &out);
    if (status != MMR_OK) return fail(status);
    std::cout << take_json(out).dump(2) << "\n";
    return 0;
}

int cmd_ingest(mmr_engine* engine, const std::string& corpus_file) {
    char* out = nullptr;
    mmr_status status = mmr_ingest(engine, corpus_file.c_str(), &out);
    if (status != MMR_OK) return fail(status);
    json stats = take_json(out);
    std::cout << "ingested " << stats["pages"] << " pages, " << stats["chunks"] << " chunks, "
              << stats["images"] << " images\n";
    if (stats.contains("normalized_path")) {
        std::cout << "normalized corpus: " << stats["normalized_path"].get<std::string>() << "\n";
    }
    return 0;
}

int cmd_index(mmr_engine* engine, const std::string& setting, bool force) {
    char* out = nullptr;
    mmr_status status = mmr_build_index(engine, setting.c_str(), force ? 1 : 0, &out);
    if (status != MMR_OK) return fail(status);
    json built = take_json(out);
    if (built["indexes"].empty()) {
        std::cout << "setting " << setting << " needs no indexes\n";
        return 0;
    }
    for (const auto& idx : built["indexes"]) {
        std::cout << "index " << idx["name"].get<std::string>() << ": " << idx["entries"]
                  << " entries\n";
    }
    return 0;
}

int cmd_summarize(mmr_engine* engine) {
    char* out = nullptr;
    mmr_status status = mmr_summarize(engine, &out);
    if (status != MMR_OK) return fail(status);
    json stats = take_json(out);
    for (const auto& gen : stats["generators"]) {
        std::cout << gen["generator"].get<std::string>() << ": " << gen["summarized"]
                  << " summarized, " << gen["failed"] << " failed, " << gen["chat_calls"]
                  << " chat calls\n";
    }
    return 0;
}

int cmd_ask(mmr_engine* engine, const std::string& question, const std::string& setting,
            const std::string& generator) {
    char* out = nullptr;
    mmr_status status = mmr_ask(engine, question.c_str(), setting.c_str(),
                                generator.empty() ? nullptr : generator.c_str(), &out);
    if (status != MMR_OK) return fail(status);
    json answer = take_json(out);
    std::cout << answer["answer_text"].get<std::string>() << "\n";
    const json& items = answer["bundle"]["items"];
    if (!items.empty()) {
        std::cout << "\nsources:\n";
        for (const auto& item : items) {
            std::cout << "  [" << item["kind"].get<std::string>() << "] "
                      << item["doc_id"].get<std::string>() << ":p" << item["page_no"]
                      << " (distance " << item["score"] << ")\n";
        }
    }
    return 0;
}

int finish_report(json envelope) {
    double fraction = envelope["error_row_fraction"].get<double>();
    double threshold = envelope["threshold"].get<double>();
    std::printf("error rows: %.4f of judgments (threshold %.4f)\n", fraction, threshold);
    if (envelope["threshold_exceeded"].get<bool>()) {
        std::cerr << "error: error-row fraction exceeds the configured threshold\n";
        return static_cast<int>(MMR_ERR_THRESHOLD);
    }
    return 0;
}

int cmd_report(mmr_engine* engine, const std::string& outdir) {
    char* out = nullptr;
    mmr_status status = mmr_run_report(engine, &out);
    if (status != MMR_OK) return fail(status);
    json envelope = take_json(out);
    std::cout << "reports written under " << outdir << "\n";
    return finish_report(std::move(envelope));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multimodal RAG engine and evaluation harness"};
    app.require_subcommand(1);

    GlobalOptions opts;
    app.add_option("--config", opts.config_path, "JSON config file")
        ->check(CLI::ExistingFile);
    int64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "override the run seed");
    app.add_option("--outdir", opts.outdir, "override the output directory");
    app.add_flag("--dry-run", opts.dry_run,
                 "validate the full configuration and print the plan; no backend calls");

    std::string corpus_file;
    auto* ingest = app.add_subcommand("ingest", "validate, chunk, and persist a corpus file");
    ingest->add_option("corpus", corpus_file, "corpus JSONL file")
        ->required()
        ->check(CLI::ExistingFile);

    std::string index_setting;
    bool index_force = false;
    auto* index = app.add_subcommand("index", "build the indexes a setting needs");
    index->add_option("setting", index_setting, "setting name")->required();
    index->add_flag("--force", index_force, "rebuild even if cached indexes exist");

    auto* summarize =
        app.add_subcommand("summarize", "summarize corpus images into the summary cache");

    std::string ask_question;
    std::string ask_setting = "TextOnlyRAG";
    std::string ask_generator;
    auto* ask = app.add_subcommand("ask", "answer one question and cite sources");
    ask->add_option("question", ask_question, "the question")->required();
    ask->add_option("--setting", ask_setting, "retrieval setting (default TextOnlyRAG)");
    ask->add_option("--generator", ask_generator, "generator profile name");

    auto* batch = app.add_subcommand("batch", "generate answers for every setting and generator");
    auto* eval = app.add_subcommand("eval", "judge persisted answers");
    auto* report = app.add_subcommand("report", "aggregate judgments into reports");

    CLI11_PARSE(app, argc, argv);
    if (seed_opt->count() > 0) opts.seed = seed_value;

    try {
        EngineHandle handle(opts);
        mmr_engine* engine = handle.get();

        if (opts.dry_run) return print_dry_run(engine);

        if (ingest->parsed()) return cmd_ingest(engine, corpus_file);
        if (index->parsed()) return cmd_index(engine, index_setting, index_force);
        if (summarize->parsed()) return cmd_summarize(engine);
        if (ask->parsed()) return cmd_ask(engine, ask_question, ask_setting, ask_generator);
        if (batch->parsed()) {
            mmr_status status = mmr_run_batch(engine);
            if (status != MMR_OK) return fail(status);
            std::cout << "batch complete\n";
            return 0;
        }
        if (eval->parsed()) {
            mmr_status status = mmr_run_eval(engine);
            if (status != MMR_OK) return fail(status);
            std::cout << "eval complete\n";
            return 0;
        }
        if (report->parsed()) {
            char* out = nullptr;
            mmr_status status = mmr_dry_run(engine, &out);
            if (status != MMR_OK) return fail(status);
            json plan = take_json(out);
            return cmd_report(engine, plan["outdir"].get<std::string>());
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(MMR_ERR_CONFIG);
    }
    return 0;
}
