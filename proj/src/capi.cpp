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

#include "mmrag/mmrag.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "config.hpp"
#include "pipeline.hpp"
#include "util.hpp"

using namespace mmrag;

struct mmr_engine {
    Engine engine;
};

namespace {

thread_local std::string t_last_error;

mmr_status set_error(mmr_status status, const std::string& message) {
    t_last_error = message;
    return status;
}

mmr_status status_from(const Error& e) {
    return set_error(static_cast<mmr_status>(static_cast<int>(e.code())), e.what());
}

// Runs the body and funnels every failure into (status, last_error).
template <typename Fn>
mmr_status guarded(const Fn& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        return status_from(e);
    } catch (const std::exception& e) {
        return set_error(MMR_ERR_INTERNAL, e.what());
    } catch (...) {
        return set_error(MMR_ERR_INTERNAL, "unknown failure");
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

mmr_status require(bool ok, const char* message) {
    return ok ? MMR_OK : set_error(MMR_ERR_INVALID_ARGUMENT, message);
}

json report_envelope(Engine& engine, const ScoreTable& table) {
    double fraction = error_row_fraction(table);
    double threshold = engine.config().error_row_threshold;
    return {{"report", json::parse(render_report(table, ReportFormat::Json))},
            {"error_row_fraction", fraction},
            {"threshold", threshold},
            {"threshold_exceeded", fraction > threshold}};
}

}  // namespace

extern "C" {

const char* mmr_version(void) { return "0.1.0"; }

const char* mmr_last_error(void) { return t_last_error.c_str(); }

void mmr_string_free(char* s) { std::free(s); }

mmr_status mmr_engine_open(const char* config_path, mmr_engine** out_engine) {
    if (mmr_status s = require(config_path && out_engine, "config_path and out_engine required"))
        return s;
    return guarded([&] {
        RunConfig config = load_run_config(config_path);
        *out_engine = new mmr_engine{Engine(std::move(config))};
        return MMR_OK;
    });
}

mmr_status mmr_engine_open_json(const char* config_json, const char* base_dir,
                                mmr_engine** out_engine) {
    if (mmr_status s = require(config_json && out_engine, "config_json and out_engine required"))
        return s;
    return guarded([&] {
        json doc = parse_json(config_json, "config");
        RunConfig config = parse_run_config(doc, base_dir ? base_dir : "");
        *out_engine = new mmr_engine{Engine(std::move(config))};
        return MMR_OK;
    });
}

void mmr_engine_close(mmr_engine* engine) { delete engine; }

mmr_status mmr_ingest(mmr_engine* engine, const char* corpus_path, char** out_json) {
    if (mmr_status s = require(engine && corpus_path, "engine and corpus_path required")) return s;
    return guarded([&] {
        json stats = engine->engine.ingest(corpus_path);
        if (out_json) *out_json = dup_string(stats.dump());
        return MMR_OK;
    });
}

mmr_status mmr_build_index(mmr_engine* engine, const char* setting, int force, char** out_json) {
    if (mmr_status s = require(engine && setting, "engine and setting required")) return s;
    return guarded([&] {
        json built = engine->engine.build_indexes(setting, force != 0);
        if (out_json) *out_json = dup_string(built.dump());
        return MMR_OK;
    });
}

mmr_status mmr_summarize(mmr_engine* engine, char** out_json) {
    if (mmr_status s = require(engine != nullptr, "engine required")) return s;
    return guarded([&] {
        json stats = engine->engine.summarize_all();
        if (out_json) *out_json = dup_string(stats.dump());
        return MMR_OK;
    });
}

mmr_status mmr_ask(mmr_engine* engine, const char* question, const char* setting,
                   const char* generator, char** out_json) {
    if (mmr_status s = require(engine && question && setting,
                               "engine, question, and setting required"))
        return s;
    return guarded([&] {
        RagAnswer answer =
            engine->engine.ask(question, setting, generator ? generator : "");
        AnswerRecord rec;
        rec.qid = "adhoc";
        rec.setting = answer.setting;
        rec.generator = answer.generator;
        rec.answer = answer;
        rec.answer.qid = "adhoc";
        if (out_json) *out_json = dup_string(answer_record_to_json(rec).dump());
        return MMR_OK;
    });
}

mmr_status mmr_run_batch(mmr_engine* engine) {
    if (mmr_status s = require(engine != nullptr, "engine required")) return s;
    return guarded([&] {
        engine->engine.run_batch();
        return MMR_OK;
    });
}

mmr_status mmr_run_eval(mmr_engine* engine) {
    if (mmr_status s = require(engine != nullptr, "engine required")) return s;
    return guarded([&] {
        engine->engine.run_eval();
        return MMR_OK;
    });
}

mmr_status mmr_run_report(mmr_engine* engine, char** out_json) {
    if (mmr_status s = require(engine != nullptr, "engine required")) return s;
    return guarded([&] {
        ScoreTable table = engine->engine.run_report();
        if (out_json) *out_json = dup_string(report_envelope(engine->engine, table).dump());
        return MMR_OK;
    });
}

mmr_status mmr_run_experiment(mmr_engine* engine, char** out_json) {
    if (mmr_status s = require(engine != nullptr, "engine required")) return s;
    return guarded([&] {
        ScoreTable table = engine->engine.run_experiment();
        if (out_json) *out_json = dup_string(report_envelope(engine->engine, table).dump());
        return MMR_OK;
    });
}

mmr_status mmr_dry_run(mmr_engine* engine, char** out_json) {
    if (mmr_status s = require(engine != nullptr, "engine required")) return s;
    return guarded([&] {
        json plan = engine->engine.dry_run_plan();
        if (out_json) *out_json = dup_string(plan.dump());
        return MMR_OK;
    });
}

}  // extern "C"
