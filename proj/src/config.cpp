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

#include "config.hpp"

#include <algorithm>
#include <set>

#include "evaluation.hpp"
#include "util.hpp"

namespace mmrag {

namespace {

const std::vector<std::string> kSettingNames = {
    "Baseline",         "TextOnlyRAG",    "ImageOnlyClip",
    "ImageOnlySummary", "MultimodalClip", "MultimodalSummary",
    "TextGSC",          "ImageGSC",       "MultimodalGSC",
};

bool valid_component_name(const std::string& name) {
    if (name.empty()) return false;
    for (char c : name) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                  c == '.' || c == '_' || c == '-';
        if (!ok) return false;
    }
    return true;
}

std::filesystem::path resolve(const std::filesystem::path& base_dir,
                              const std::filesystem::path& p) {
    if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
    return base_dir / p;
}

GenerationParams parse_params(const json& obj, const std::string& ctx) {
    GenerationParams params;
    if (obj.contains("temperature")) {
        if (!obj["temperature"].is_number()) {
            throw Error(ErrorCode::Config, ctx + ": temperature must be a number");
        }
        params.temperature = obj["temperature"].get<double>();
    }
    if (obj.contains("top_p")) {
        if (!obj["top_p"].is_number()) {
            throw Error(ErrorCode::Config, ctx + ": top_p must be a number");
        }
        params.top_p = obj["top_p"].get<double>();
    }
    if (obj.contains("max_tokens")) {
        params.max_tokens = static_cast<int>(require_positive_int(obj, "max_tokens", ctx));
    }
    return params;
}

BackendProfile parse_profile(const json& obj, BackendKind kind, uint64_t default_seed,
                             const std::string& ctx) {
    if (!obj.is_object()) {
        throw Error(ErrorCode::Config, ctx + ": backend profile must be a JSON object");
    }
    BackendProfile profile;
    profile.kind = kind;
    profile.name = require_nonempty_string(obj, "name", ctx);
    profile.model_id = require_nonempty_string(obj, "model_id", ctx);
    profile.endpoint = obj.value("endpoint", std::string("mock"));
    if (obj.contains("params")) {
        profile.params = parse_params(obj["params"], ctx + " profile '" + profile.name + "'");
    }
    if (obj.contains("max_images_per_prompt")) {
        profile.max_images_per_prompt =
            static_cast<int>(require_positive_int(obj, "max_images_per_prompt", ctx));
    }
    if (obj.contains("image_mode")) {
        std::string mode = require_nonempty_string(obj, "image_mode", ctx);
        if (mode == "single") {
            profile.image_mode = ImageMode::Single;
        } else if (mode == "multi") {
            profile.image_mode = ImageMode::Multi;
        } else {
            throw Error(ErrorCode::Config,
                        ctx + ": image_mode must be \"single\" or \"multi\", got '" + mode + "'");
        }
    }
    if (obj.contains("dim")) {
        profile.dim = static_cast<size_t>(require_positive_int(obj, "dim", ctx));
    }
    profile.seed = default_seed;
    if (obj.contains("seed")) {
        if (!obj["seed"].is_number_integer()) {
            throw Error(ErrorCode::Config, ctx + ": seed must be an integer");
        }
        profile.seed = obj["seed"].get<uint64_t>();
    }
    if (obj.contains("timeout_ms")) {
        profile.timeout_ms = require_positive_int(obj, "timeout_ms", ctx);
    }
    if (obj.contains("retry_backoff_ms")) {
        if (!obj["retry_backoff_ms"].is_number_integer() ||
            obj["retry_backoff_ms"].get<int64_t>() < 0) {
            throw Error(ErrorCode::Config, ctx + ": retry_backoff_ms must be >= 0");
        }
        profile.retry_backoff_ms = obj["retry_backoff_ms"].get<int64_t>();
    }
    if (obj.contains("max_in_flight")) {
        profile.max_in_flight = static_cast<int>(require_positive_int(obj, "max_in_flight", ctx));
    }
    if (obj.contains("api_key_env")) {
        profile.api_key_env = require_nonempty_string(obj, "api_key_env", ctx);
    }
    if (obj.contains("mock_latency_ms")) {
        if (!obj["mock_latency_ms"].is_number_integer() ||
            obj["mock_latency_ms"].get<int64_t>() < 0) {
            throw Error(ErrorCode::Config, ctx + ": mock_latency_ms must be >= 0");
        }
        profile.mock_latency_ms = obj["mock_latency_ms"].get<int64_t>();
    }
    profile.validate();
    return profile;
}

void require_file_exists(const std::filesystem::path& p, const std::string& what) {
    if (!std::filesystem::exists(p)) {
        throw Error(ErrorCode::Config, what + " file does not exist: " + p.string());
    }
}

}  // namespace

std::vector<std::string> all_setting_names() { return kSettingNames; }

bool is_setting_name(const std::string& name) {
    return std::find(kSettingNames.begin(), kSettingNames.end(), name) != kSettingNames.end();
}

void RunConfig::validate() const {
    if (chunking.window < 1) {
        throw Error(ErrorCode::Config, "chunking.window must be >= 1");
    }
    if (chunking.stride < 1 || chunking.stride > chunking.window) {
        throw Error(ErrorCode::Config, "chunking.stride must be in [1, window]");
    }
    if (retrieval.k_total < 1 || retrieval.k_text < 0 || retrieval.k_image < 0) {
        throw Error(ErrorCode::Config, "retrieval k values must be non-negative, k_total >= 1");
    }
    if (retrieval.k_text + retrieval.k_image != retrieval.k_total) {
        throw Error(ErrorCode::Config, "retrieval requires k_text + k_image == k_total");
    }
    if (hnsw.M < 2) {
        throw Error(ErrorCode::Config, "hnsw.M must be >= 2");
    }
    if (hnsw.ef_construction < 1 || hnsw.ef_search < 1) {
        throw Error(ErrorCode::Config, "hnsw ef parameters must be >= 1");
    }
    if (concurrency < 1) {
        throw Error(ErrorCode::Config, "concurrency must be >= 1");
    }
    if (per_question_timeout_ms < 1) {
        throw Error(ErrorCode::Config, "per_question_timeout_ms must be >= 1");
    }
    if (error_row_threshold < 0.0 || error_row_threshold > 1.0) {
        throw Error(ErrorCode::Config, "error_row_threshold must be in [0, 1]");
    }
    if (context_char_budget < 1) {
        throw Error(ErrorCode::Config, "context_char_budget must be >= 1");
    }
    if (generators.empty()) {
        throw Error(ErrorCode::Config, "at least one generator profile is required");
    }
    if (judges.empty()) {
        throw Error(ErrorCode::Config, "at least one judge profile is required");
    }

    text_embed.validate();
    multimodal_embed.validate();
    std::set<std::string> names;
    for (const auto* group : {&generators, &judges}) {
        for (const auto& profile : *group) {
            profile.validate();
            if (profile.kind != BackendKind::Chat) {
                throw Error(ErrorCode::Config,
                            "profile '" + profile.name + "' must be a chat profile");
            }
            if (!valid_component_name(profile.name)) {
                throw Error(ErrorCode::Config, "profile name '" + profile.name +
                                                   "' may only use letters, digits, '.', '_', '-'");
            }
            if (!names.insert(profile.name).second) {
                throw Error(ErrorCode::Config,
                            "generator/judge profile name '" + profile.name + "' is not unique");
            }
        }
    }

    if (settings.empty()) {
        throw Error(ErrorCode::Config, "settings list is empty");
    }
    std::set<std::string> seen_settings;
    for (const auto& name : settings) {
        if (!is_setting_name(name)) {
            throw Error(ErrorCode::Config, "unknown setting '" + name + "'");
        }
        if (!seen_settings.insert(name).second) {
            throw Error(ErrorCode::Config, "setting '" + name + "' listed twice");
        }
    }

    if (!corpus_path.empty()) require_file_exists(corpus_path, "corpus");
    if (!testset_path.empty()) require_file_exists(testset_path, "testset");
    if (templates.qa) require_file_exists(*templates.qa, "qa template");
    if (templates.image_summary) require_file_exists(*templates.image_summary, "summary template");
    for (const auto& [metric, path] : templates.judge) {
        metric_from_name(metric);  // rejects unknown metric keys
        require_file_exists(path, "judge template for " + metric);
    }
}

namespace {

RunConfig parse_fields(const json& doc, const std::filesystem::path& base_dir) {
    RunConfig cfg = default_mock_config();
    const std::string ctx = "config";

    if (doc.contains("seed")) {
        if (!doc["seed"].is_number_integer()) {
            throw Error(ErrorCode::Config, "config: seed must be an integer");
        }
        cfg.seed = doc["seed"].get<uint64_t>();
    }
    if (doc.contains("outdir")) {
        cfg.outdir = resolve(base_dir, require_nonempty_string(doc, "outdir", ctx));
    }
    if (doc.contains("corpus")) {
        cfg.corpus_path = resolve(base_dir, require_nonempty_string(doc, "corpus", ctx));
    }
    if (doc.contains("testset")) {
        cfg.testset_path = resolve(base_dir, require_nonempty_string(doc, "testset", ctx));
    }
    if (doc.contains("chunking")) {
        const json& chunk = doc["chunking"];
        if (chunk.contains("window")) {
            cfg.chunking.window = static_cast<int>(require_positive_int(chunk, "window", ctx));
        }
        if (chunk.contains("stride")) {
            cfg.chunking.stride = static_cast<int>(require_positive_int(chunk, "stride", ctx));
        }
    }
    if (doc.contains("retrieval")) {
        const json& ret = doc["retrieval"];
        if (ret.contains("k_total")) {
            cfg.retrieval.k_total = static_cast<int>(require_positive_int(ret, "k_total", ctx));
        }
        if (ret.contains("k_text")) {
            if (!ret["k_text"].is_number_integer() || ret["k_text"].get<int64_t>() < 0) {
                throw Error(ErrorCode::Config, "config: k_text must be >= 0");
            }
            cfg.retrieval.k_text = static_cast<int>(ret["k_text"].get<int64_t>());
        }
        if (ret.contains("k_image")) {
            if (!ret["k_image"].is_number_integer() || ret["k_image"].get<int64_t>() < 0) {
                throw Error(ErrorCode::Config, "config: k_image must be >= 0");
            }
            cfg.retrieval.k_image = static_cast<int>(ret["k_image"].get<int64_t>());
        }
    }
    if (doc.contains("hnsw")) {
        const json& hnsw = doc["hnsw"];
        if (hnsw.contains("M")) {
            cfg.hnsw.M = static_cast<int>(require_positive_int(hnsw, "M", ctx));
        }
        if (hnsw.contains("ef_construction")) {
            cfg.hnsw.ef_construction =
                static_cast<int>(require_positive_int(hnsw, "ef_construction", ctx));
        }
        if (hnsw.contains("ef_search")) {
            cfg.hnsw.ef_search = static_cast<int>(require_positive_int(hnsw, "ef_search", ctx));
        }
    }
    if (doc.contains("concurrency")) {
        cfg.concurrency = static_cast<int>(require_positive_int(doc, "concurrency", ctx));
    }
    if (doc.contains("per_question_timeout_ms")) {
        cfg.per_question_timeout_ms = require_positive_int(doc, "per_question_timeout_ms", ctx);
    }
    if (doc.contains("error_row_threshold")) {
        if (!doc["error_row_threshold"].is_number()) {
            throw Error(ErrorCode::Config, "config: error_row_threshold must be a number");
        }
        cfg.error_row_threshold = doc["error_row_threshold"].get<double>();
    }
    if (doc.contains("context_char_budget")) {
        cfg.context_char_budget =
            static_cast<size_t>(require_positive_int(doc, "context_char_budget", ctx));
    }
    if (doc.contains("templates")) {
        const json& tmpl = doc["templates"];
        if (!tmpl.is_object()) {
            throw Error(ErrorCode::Config, "config: templates must be an object");
        }
        for (const auto& [key, value] : tmpl.items()) {
            if (!value.is_string() || value.get<std::string>().empty()) {
                throw Error(ErrorCode::Config,
                            "config: template path for '" + key + "' must be a non-empty string");
            }
            std::filesystem::path path = resolve(base_dir, value.get<std::string>());
            if (key == "qa") {
                cfg.templates.qa = path;
            } else if (key == "image_summary") {
                cfg.templates.image_summary = path;
            } else if (starts_with(key, "judge.")) {
                cfg.templates.judge[key.substr(6)] = path;
            } else {
                throw Error(ErrorCode::Config, "config: unknown template key '" + key + "'");
            }
        }
    }
    if (doc.contains("backends")) {
        const json& backends = doc["backends"];
        if (!backends.is_object()) {
            throw Error(ErrorCode::Config, "config: backends must be an object");
        }
        if (backends.contains("text_embed")) {
            cfg.text_embed = parse_profile(backends["text_embed"], BackendKind::TextEmbed,
                                           cfg.seed, "config backends.text_embed");
        }
        if (backends.contains("multimodal_embed")) {
            cfg.multimodal_embed =
                parse_profile(backends["multimodal_embed"], BackendKind::MultimodalEmbed, cfg.seed,
                              "config backends.multimodal_embed");
        }
        if (backends.contains("generators")) {
            if (!backends["generators"].is_array()) {
                throw Error(ErrorCode::Config, "config: backends.generators must be an array");
            }
            cfg.generators.clear();
            for (const auto& entry : backends["generators"]) {
                cfg.generators.push_back(
                    parse_profile(entry, BackendKind::Chat, cfg.seed, "config backends.generators"));
            }
        }
        if (backends.contains("judges")) {
            if (!backends["judges"].is_array()) {
                throw Error(ErrorCode::Config, "config: backends.judges must be an array");
            }
            cfg.judges.clear();
            for (const auto& entry : backends["judges"]) {
                cfg.judges.push_back(
                    parse_profile(entry, BackendKind::Chat, cfg.seed, "config backends.judges"));
            }
        }
    }
    // Profiles that kept their defaults still follow the configured seed.
    if (!doc.contains("backends") || !doc["backends"].contains("text_embed")) {
        cfg.text_embed.seed = cfg.seed;
    }
    if (!doc.contains("backends") || !doc["backends"].contains("multimodal_embed")) {
        cfg.multimodal_embed.seed = cfg.seed;
    }
    if (doc.contains("settings")) {
        if (!doc["settings"].is_array()) {
            throw Error(ErrorCode::Config, "config: settings must be an array of names");
        }
        cfg.settings.clear();
        for (const auto& entry : doc["settings"]) {
            if (!entry.is_string()) {
                throw Error(ErrorCode::Config, "config: settings entries must be strings");
            }
            cfg.settings.push_back(entry.get<std::string>());
        }
    }

    cfg.validate();
    return cfg;
}

}  // namespace

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
    if (!doc.is_object()) {
        throw Error(ErrorCode::Config, "config root must be a JSON object");
    }
    try {
        return parse_fields(doc, base_dir);
    } catch (const Error& e) {
        // The schema accessors report Parse; a field of the wrong shape inside
        // a config document is a configuration mistake, not a corrupt file.
        if (e.code() == ErrorCode::Parse) throw Error(ErrorCode::Config, e.what());
        throw;
    }
}

RunConfig load_run_config(const std::filesystem::path& path) {
    json doc = parse_json(read_file(path), path.string());
    return parse_run_config(doc, path.parent_path());
}

RunConfig default_mock_config(uint64_t seed) {
    RunConfig cfg;
    cfg.seed = seed;

    cfg.text_embed.name = "text-embed-mock";
    cfg.text_embed.kind = BackendKind::TextEmbed;
    cfg.text_embed.endpoint = "mock";
    cfg.text_embed.model_id = "mock-embed";
    cfg.text_embed.dim = 64;
    cfg.text_embed.seed = seed;

    cfg.multimodal_embed.name = "clip-mock";
    cfg.multimodal_embed.kind = BackendKind::MultimodalEmbed;
    cfg.multimodal_embed.endpoint = "mock";
    cfg.multimodal_embed.model_id = "mock-clip";
    cfg.multimodal_embed.dim = 64;
    cfg.multimodal_embed.seed = seed;

    BackendProfile gpt4v;
    gpt4v.name = "gpt4v-mock";
    gpt4v.kind = BackendKind::Chat;
    gpt4v.endpoint = "mock";
    gpt4v.model_id = "mock-chat-echo";
    gpt4v.params = {0.7, 0.95, 300};
    gpt4v.max_images_per_prompt = 4;
    gpt4v.image_mode = ImageMode::Multi;
    gpt4v.seed = seed;

    BackendProfile llava;
    llava.name = "llava-mock";
    llava.kind = BackendKind::Chat;
    llava.endpoint = "mock";
    llava.model_id = "mock-chat-echo";
    llava.params = {1.0, 1.0, 300};
    llava.max_images_per_prompt = 1;
    llava.image_mode = ImageMode::Single;
    llava.seed = seed;

    cfg.generators = {gpt4v, llava};

    BackendProfile judge_a;
    judge_a.name = "judge-gpt4v-mock";
    judge_a.kind = BackendKind::Chat;
    judge_a.endpoint = "mock";
    judge_a.model_id = "mock-judge-contains";
    judge_a.params = {0.0, 1.0, 300};
    judge_a.max_images_per_prompt = 4;
    judge_a.image_mode = ImageMode::Multi;
    judge_a.seed = seed;

    BackendProfile judge_b = judge_a;
    judge_b.name = "judge-llava-mock";
    judge_b.max_images_per_prompt = 1;
    judge_b.image_mode = ImageMode::Single;

    cfg.judges = {judge_a, judge_b};
    cfg.settings = all_setting_names();
    return cfg;
}

}  // namespace mmrag
