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

// The engine wires corpus, indexes, backends, and the evaluation harness into
// the nine experimental settings. Generation and evaluation are separate
// phases with persisted intermediates: answers.jsonl roots every later stage,
// so re-judging never repeats generation, and completed cells are skipped on
// resume.

#include "pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <mutex>
#include <set>
#include <thread>

#include "log.hpp"
#include "util.hpp"

namespace fs = std::filesystem;

namespace mmrag {

namespace {

// Runs fn(0..n-1) over `workers` threads; the first exception wins and is
// rethrown after all workers drain.
void parallel_for(size_t n, int workers, const std::function<void(size_t)>& fn) {
    if (n == 0) return;
    size_t thread_count = std::min(static_cast<size_t>(std::max(workers, 1)), n);
    if (thread_count <= 1) {
        for (size_t i = 0; i < n; i++) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        while (true) {
            size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(thread_count);
    for (size_t t = 0; t < thread_count; t++) threads.emplace_back(worker);
    for (auto& thread : threads) thread.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::vector<MetricId> applicable_metrics(const AnswerRecord& rec) {
    bool has_text = rec.answer.bundle.text_count() > 0;
    bool has_image = rec.answer.bundle.image_count() > 0;
    std::vector<MetricId> metrics;
    for (MetricId metric : kAllMetrics) {
        RequiredInputs req = required_inputs(metric);
        if (req.text_context && !has_text) continue;
        if (req.image_context && !has_image) continue;
        metrics.push_back(metric);
    }
    return metrics;
}

JudgeTemplate load_judge_template_file(const fs::path& path, MetricId metric) {
    JudgeTemplate tmpl = default_judge_template(metric);
    TemplateFileParts parts = split_template_file(read_file(path));
    if (parts.system_text && !parts.system_text->empty()) tmpl.system_text = *parts.system_text;
    if (parts.user_scaffold.empty()) {
        throw Error(ErrorCode::Config,
                    "judge template file " + path.string() + " has an empty scaffold");
    }
    tmpl.user_scaffold = parts.user_scaffold;
    validate_judge_template(metric, tmpl);
    return tmpl;
}

}  // namespace

SettingPlan setting_plan(const std::string& id, const RetrievalConfig& base) {
    SettingPlan plan;
    plan.id = id;
    RetrievalConfig rc = base;
    if (id == "Baseline") {
        // No retrieval, no gold context.
    } else if (id == "TextOnlyRAG") {
        rc.strategy = RetrievalStrategy::TextOnly;
        plan.retrieval = rc;
    } else if (id == "ImageOnlyClip") {
        rc.strategy = RetrievalStrategy::ImageClip;
        plan.retrieval = rc;
    } else if (id == "ImageOnlySummary") {
        rc.strategy = RetrievalStrategy::ImageSummary;
        plan.retrieval = rc;
    } else if (id == "MultimodalClip") {
        rc.strategy = RetrievalStrategy::MultimodalSeparate;
        plan.retrieval = rc;
    } else if (id == "MultimodalSummary") {
        rc.strategy = RetrievalStrategy::MultimodalCombined;
        plan.retrieval = rc;
    } else if (id == "TextGSC") {
        plan.gsc = GscMode::TextGsc;
    } else if (id == "ImageGSC") {
        plan.gsc = GscMode::ImageGsc;
    } else if (id == "MultimodalGSC") {
        plan.gsc = GscMode::MultimodalGsc;
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown setting '" + id + "'");
    }
    if (plan.retrieval) plan.retrieval->validate();
    return plan;
}

json answer_record_to_json(const AnswerRecord& rec) {
    json doc = {{"qid", rec.qid},
                {"setting", rec.setting},
                {"generator", rec.generator},
                {"ok", rec.ok}};
    if (!rec.ok) {
        doc["error"] = rec.error;
        return doc;
    }
    doc["answer_text"] = rec.answer.answer_text;
    doc["images_sent"] = rec.answer.images_sent;
    json items = json::array();
    for (const auto& item : rec.answer.bundle.items) {
        json entry = {{"doc_id", item.source.doc_id},
                      {"page_no", item.source.page_no},
                      {"score", item.score}};
        if (item.kind == ContextKind::Text) {
            entry["kind"] = "text";
            entry["text"] = item.text;
        } else {
            entry["kind"] = "image";
            entry["image_key"] = item.image->key();
            entry["sha256"] = sha256_hex(item.image->bytes);
            if (item.via_summary) entry["via_summary"] = *item.via_summary;
        }
        items.push_back(std::move(entry));
    }
    doc["bundle"] = {{"question", rec.answer.bundle.question}, {"items", std::move(items)}};
    return doc;
}

AnswerRecord answer_record_from_json(const json& doc, const std::string& ctx,
                                     const std::map<std::string, const ImageAsset*>& corpus_images,
                                     const std::map<std::string, const ImageAsset*>& gold_images) {
    AnswerRecord rec;
    rec.qid = require_nonempty_string(doc, "qid", ctx);
    rec.setting = require_nonempty_string(doc, "setting", ctx);
    rec.generator = require_nonempty_string(doc, "generator", ctx);
    if (!doc.contains("ok") || !doc["ok"].is_boolean()) {
        throw Error(ErrorCode::Parse, ctx + ": field \"ok\" must be a boolean");
    }
    rec.ok = doc["ok"].get<bool>();
    if (!rec.ok) {
        rec.error = require_nonempty_string(doc, "error", ctx);
        return rec;
    }

    rec.answer.qid = rec.qid;
    rec.answer.setting = rec.setting;
    rec.answer.generator = rec.generator;
    rec.answer.answer_text = require_nonempty_string(doc, "answer_text", ctx);
    const json& images_sent = require_field(doc, "images_sent", ctx);
    if (!images_sent.is_number_integer() || images_sent.get<int64_t>() < 0) {
        throw Error(ErrorCode::Parse, ctx + ": images_sent must be a non-negative integer");
    }
    rec.answer.images_sent = static_cast<int>(images_sent.get<int64_t>());

    const json& bundle = require_field(doc, "bundle", ctx);
    rec.answer.bundle.question = require_nonempty_string(bundle, "question", ctx);
    const json& items = require_field(bundle, "items", ctx);
    if (!items.is_array()) {
        throw Error(ErrorCode::Parse, ctx + ": bundle.items must be an array");
    }

    // GSC bundles reference per-question gold images; everything else
    // references corpus images by composite key.
    bool gold = setting_plan(rec.setting, RetrievalConfig{}).gsc.has_value();
    for (const auto& entry : items) {
        ContextItem item;
        item.source.doc_id = require_nonempty_string(entry, "doc_id", ctx);
        const json& page_no = require_field(entry, "page_no", ctx);
        if (!page_no.is_number_integer() || page_no.get<int64_t>() < 1) {
            throw Error(ErrorCode::Parse, ctx + ": page_no must be a positive integer");
        }
        item.source.page_no = page_no.get<int64_t>();
        const json& score = require_field(entry, "score", ctx);
        if (!score.is_number()) {
            throw Error(ErrorCode::Parse, ctx + ": score must be a number");
        }
        item.score = score.get<double>();

        std::string kind = require_nonempty_string(entry, "kind", ctx);
        if (kind == "text") {
            item.kind = ContextKind::Text;
            item.text = require_string(entry, "text", ctx);
        } else if (kind == "image") {
            item.kind = ContextKind::Image;
            std::string sha = require_nonempty_string(entry, "sha256", ctx);
            const ImageAsset* asset = nullptr;
            if (gold) {
                auto it = gold_images.find(rec.qid);
                if (it == gold_images.end()) {
                    throw Error(ErrorCode::State, ctx + ": question '" + rec.qid +
                                                      "' has no gold image in the current testset");
                }
                asset = it->second;
            } else {
                std::string key = require_nonempty_string(entry, "image_key", ctx);
                auto it = corpus_images.find(key);
                if (it == corpus_images.end()) {
                    throw Error(ErrorCode::State, ctx + ": image '" + key +
                                                      "' is not in the current corpus");
                }
                asset = it->second;
            }
            if (sha256_hex(asset->bytes) != sha) {
                throw Error(ErrorCode::State,
                            ctx + ": image content hash mismatch; the corpus or testset changed "
                                  "since the answers were generated");
            }
            item.image = *asset;
            if (entry.contains("via_summary")) {
                item.via_summary = require_string(entry, "via_summary", ctx);
            }
        } else {
            throw Error(ErrorCode::Parse, ctx + ": item kind must be \"text\" or \"image\"");
        }
        rec.answer.bundle.items.push_back(std::move(item));
    }
    return rec;
}

struct Engine::Impl {
    std::unique_ptr<TextEmbedder> text_embedder;
    std::unique_ptr<MultimodalEmbedder> mm_embedder;
    std::map<std::string, std::unique_ptr<ChatBackend>> chats;

    std::optional<Corpus> corpus;
    std::optional<std::vector<QAQuadruple>> testset;
    std::map<std::string, const QAQuadruple*> testset_by_qid;

    std::optional<VectorStore> text_store;
    std::optional<VectorStore> clip_store;
    std::map<std::string, VectorStore> summary_stores;   // by generator name
    std::map<std::string, VectorStore> combined_stores;  // by generator name

    std::unique_ptr<SummaryCache> summary_cache;
    PromptTemplate qa_tmpl;
    PromptTemplate summary_tmpl;
    std::map<MetricId, JudgeTemplate> judge_tmpls;
};

Engine::Engine(RunConfig config) : impl_(std::make_unique<Impl>()), config_(std::move(config)) {
    config_.validate();

    impl_->text_embedder = make_text_embedder(config_.text_embed);
    impl_->mm_embedder = make_multimodal_embedder(config_.multimodal_embed);
    for (const auto& profile : config_.generators) {
        impl_->chats[profile.name] = make_chat_backend(profile);
    }
    for (const auto& profile : config_.judges) {
        impl_->chats[profile.name] = make_chat_backend(profile);
    }

    impl_->qa_tmpl = config_.templates.qa ? load_template(*config_.templates.qa, "qa")
                                          : default_qa_template();
    impl_->summary_tmpl = config_.templates.image_summary
                              ? load_template(*config_.templates.image_summary, "image_summary")
                              : default_summary_template();
    for (MetricId metric : kAllMetrics) {
        auto it = config_.templates.judge.find(metric_name(metric));
        impl_->judge_tmpls[metric] = it != config_.templates.judge.end()
                                         ? load_judge_template_file(it->second, metric)
                                         : default_judge_template(metric);
    }

    if (!config_.outdir.empty()) {
        fs::path cache_path = config_.outdir / "cache" / "summaries.jsonl";
        fs::create_directories(cache_path.parent_path());
        impl_->summary_cache = std::make_unique<SummaryCache>(cache_path);
    } else {
        impl_->summary_cache = std::make_unique<SummaryCache>();
    }
}

Engine::~Engine() = default;

const Corpus& Engine::corpus() {
    if (!impl_->corpus) {
        if (config_.corpus_path.empty()) {
            throw Error(ErrorCode::State, "no corpus configured and none loaded");
        }
        impl_->corpus = load_corpus(config_.corpus_path, config_.chunking);
    }
    return *impl_->corpus;
}

const std::vector<QAQuadruple>& Engine::testset() {
    if (!impl_->testset) {
        if (config_.testset_path.empty()) {
            throw Error(ErrorCode::State, "no testset configured and none loaded");
        }
        set_testset(load_testset(config_.testset_path));
    }
    return *impl_->testset;
}

void Engine::set_corpus(Corpus corpus) {
    impl_->corpus = std::move(corpus);
    impl_->text_store.reset();
    impl_->clip_store.reset();
    impl_->summary_stores.clear();
    impl_->combined_stores.clear();
}

void Engine::set_testset(std::vector<QAQuadruple> testset) {
    impl_->testset = std::move(testset);
    impl_->testset_by_qid.clear();
    for (const auto& q : *impl_->testset) {
        impl_->testset_by_qid[q.qid] = &q;
    }
}

namespace {

fs::path index_file(const RunConfig& cfg, const std::string& name) {
    if (cfg.outdir.empty()) return {};
    return cfg.outdir / "indexes" / (name + ".idx");
}

// A cached index is only reused when it matches the current configuration;
// anything stale is rebuilt in place.
bool store_matches(const VectorStore& store, const RunConfig& cfg, size_t dim) {
    return store.index.dim() == dim && store.index.seed() == cfg.seed &&
           store.index.params().M == cfg.hnsw.M &&
           store.index.params().ef_construction == cfg.hnsw.ef_construction &&
           store.index.params().ef_search == cfg.hnsw.ef_search;
}

}  // namespace

namespace detail_pipeline {

// Builds or loads one named store through the generic recipe.
template <typename BuildFn>
const VectorStore& ensure_store(std::optional<VectorStore>& slot, const RunConfig& cfg,
                                const std::string& name, size_t dim, const BuildFn& build) {
    if (slot) return *slot;
    fs::path path = index_file(cfg, name);
    if (!path.empty() && fs::exists(path)) {
        VectorStore loaded = load_store(path);
        if (store_matches(loaded, cfg, dim)) {
            slot = std::move(loaded);
            return *slot;
        }
        log::warn("index " + path.string() + " does not match the current config; rebuilding");
    }
    slot = build();
    if (!path.empty()) save_store(slot->index, slot->docs, path);
    return *slot;
}

template <typename BuildFn>
const VectorStore& ensure_store(std::map<std::string, VectorStore>& slots, const RunConfig& cfg,
                                const std::string& key, const std::string& name, size_t dim,
                                const BuildFn& build) {
    auto it = slots.find(key);
    if (it != slots.end()) return it->second;
    fs::path path = index_file(cfg, name);
    if (!path.empty() && fs::exists(path)) {
        VectorStore loaded = load_store(path);
        if (store_matches(loaded, cfg, dim)) {
            return slots.emplace(key, std::move(loaded)).first->second;
        }
        log::warn("index " + path.string() + " does not match the current config; rebuilding");
    }
    VectorStore built = build();
    if (!path.empty()) save_store(built.index, built.docs, path);
    return slots.emplace(key, std::move(built)).first->second;
}

}  // namespace detail_pipeline

// Private engine plumbing shared by the public operations. Kept out of the
// header; defined as members of a friend-like accessor on Impl data.
namespace {

struct EngineOps {
    Engine& engine;
    Engine::Impl& impl;
    const RunConfig& cfg;

    ChatBackend& chat(const std::string& name) {
        auto it = impl.chats.find(name);
        if (it == impl.chats.end()) {
            throw Error(ErrorCode::NotFound, "no chat backend named '" + name + "'");
        }
        return *it->second;
    }

    const BackendProfile& generator_profile(const std::string& name) {
        if (name.empty()) return cfg.generators.front();
        for (const auto& profile : cfg.generators) {
            if (profile.name == name) return profile;
        }
        throw Error(ErrorCode::NotFound, "no generator named '" + name + "'");
    }

    const QAQuadruple& question_by_qid(const std::string& qid) {
        auto it = impl.testset_by_qid.find(qid);
        if (it == impl.testset_by_qid.end()) {
            throw Error(ErrorCode::NotFound,
                        "qid '" + qid + "' from the answer log is not in the testset");
        }
        return *it->second;
    }

    const VectorStore& ensure_text_store() {
        return detail_pipeline::ensure_store(
            impl.text_store, cfg, "text", impl.text_embedder->dim(), [&] {
                return build_text_index(engine.corpus(), *impl.text_embedder, cfg.hnsw, cfg.seed);
            });
    }

    const VectorStore& ensure_clip_store() {
        return detail_pipeline::ensure_store(
            impl.clip_store, cfg, "clip", impl.mm_embedder->dim(), [&] {
                return build_clip_image_index(engine.corpus(), *impl.mm_embedder, cfg.hnsw,
                                              cfg.seed);
            });
    }

    SummaryFn summarizer_for(const std::string& generator) {
        return cached_summarizer(chat(generator), impl.summary_tmpl, *impl.summary_cache);
    }

    const VectorStore& ensure_summary_store(const std::string& generator) {
        return detail_pipeline::ensure_store(
            impl.summary_stores, cfg, generator, "summary." + generator,
            impl.text_embedder->dim(), [&] {
                SummaryBuildStats stats;
                VectorStore store =
                    build_summary_image_index(engine.corpus(), summarizer_for(generator),
                                              *impl.text_embedder, cfg.hnsw, cfg.seed, &stats);
                if (stats.skipped > 0) {
                    log::warn("summary index for '" + generator + "': skipped " +
                              std::to_string(stats.skipped) + " images");
                }
                return store;
            });
    }

    const VectorStore& ensure_combined_store(const std::string& generator) {
        return detail_pipeline::ensure_store(
            impl.combined_stores, cfg, generator, "combined." + generator,
            impl.text_embedder->dim(), [&] {
                SummaryBuildStats stats;
                VectorStore store =
                    build_combined_index(engine.corpus(), summarizer_for(generator),
                                         *impl.text_embedder, cfg.hnsw, cfg.seed, &stats);
                if (stats.skipped > 0) {
                    log::warn("combined index for '" + generator + "': skipped " +
                              std::to_string(stats.skipped) + " images");
                }
                return store;
            });
    }

    IndexSet prepare_indexes(const SettingPlan& plan, const std::string& generator) {
        IndexSet indexes;
        if (!plan.retrieval) return indexes;
        switch (plan.retrieval->strategy) {
            case RetrievalStrategy::TextOnly:
                indexes.text = &ensure_text_store();
                break;
            case RetrievalStrategy::ImageClip:
                indexes.image_clip = &ensure_clip_store();
                break;
            case RetrievalStrategy::ImageSummary:
                indexes.image_summary = &ensure_summary_store(generator);
                break;
            case RetrievalStrategy::MultimodalSeparate:
                indexes.text = &ensure_text_store();
                indexes.image_clip = &ensure_clip_store();
                break;
            case RetrievalStrategy::MultimodalCombined:
                indexes.combined = &ensure_combined_store(generator);
                break;
        }
        return indexes;
    }

    RetrievalBackends retrieval_backends() {
        return {impl.text_embedder.get(), impl.mm_embedder.get()};
    }

    ImageMode effective_mode(const SettingPlan& plan, const BackendProfile& profile) {
        if (plan.image_mode == ImageMode::Single || profile.image_mode == ImageMode::Single) {
            return ImageMode::Single;
        }
        return ImageMode::Multi;
    }

    AnswerRecord answer_one(const SettingPlan& plan, const BackendProfile& profile,
                            const IndexSet& indexes, const QAQuadruple& q) {
        AnswerRecord rec;
        rec.qid = q.qid;
        rec.setting = plan.id;
        rec.generator = profile.name;
        auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::milliseconds(cfg.per_question_timeout_ms);
        auto timed_out = [&] { return std::chrono::steady_clock::now() > deadline; };
        try {
            ContextBundle bundle;
            if (plan.gsc) {
                bundle = gold_context(q, *plan.gsc);
            } else if (plan.retrieval) {
                bundle = retrieve(*plan.retrieval, q.question, indexes, retrieval_backends());
            } else {
                bundle.question = q.question;
            }
            if (timed_out()) {
                throw Error(ErrorCode::Backend,
                            "question timed out after " +
                                std::to_string(cfg.per_question_timeout_ms) + "ms (retrieval)");
            }
            std::vector<ChatMessage> messages =
                (plan.gsc || plan.retrieval)
                    ? build_qa_prompt(impl.qa_tmpl, q.question, bundle,
                                      effective_mode(plan, profile), profile.max_images_per_prompt,
                                      cfg.context_char_budget)
                    : build_baseline_prompt(q.question);
            std::string answer = synthesize_answer(chat(profile.name), messages);
            if (timed_out()) {
                throw Error(ErrorCode::Backend,
                            "question timed out after " +
                                std::to_string(cfg.per_question_timeout_ms) + "ms (generation)");
            }
            rec.answer = RagAnswer{q.qid,  plan.id, profile.name,
                                   answer, bundle,  static_cast<int>(count_images(messages))};
        } catch (const std::exception& e) {
            rec.ok = false;
            rec.error = e.what();
        }
        return rec;
    }

    fs::path cell_dir(const std::string& setting, const std::string& generator) {
        if (cfg.outdir.empty()) {
            throw Error(ErrorCode::State, "no output directory configured");
        }
        return cfg.outdir / setting / generator;
    }

    fs::path answers_path(const std::string& setting, const std::string& generator) {
        return cell_dir(setting, generator) / "answers.jsonl";
    }

    fs::path judgments_path(const std::string& setting, const std::string& generator) {
        return cell_dir(setting, generator) / "judgments.jsonl";
    }

    std::map<std::string, const ImageAsset*> corpus_image_map() {
        std::map<std::string, const ImageAsset*> map;
        for (const auto& asset : engine.corpus().images) {
            map[asset.key()] = &asset;
        }
        return map;
    }

    std::map<std::string, const ImageAsset*> gold_image_map() {
        std::map<std::string, const ImageAsset*> map;
        for (const auto& q : engine.testset()) {
            if (q.gold_image) map[q.qid] = &*q.gold_image;
        }
        return map;
    }

    // True when the persisted answers cover exactly the current testset.
    bool answers_complete(const fs::path& path) {
        if (!fs::exists(path)) return false;
        std::set<std::string> want;
        for (const auto& q : engine.testset()) want.insert(q.qid);
        std::set<std::string> have;
        bool ok = true;
        try {
            for_each_line(path, [&](size_t line_no, std::string_view line) {
                json doc = parse_json(line, path.string() + ":" + std::to_string(line_no));
                std::string qid = require_nonempty_string(doc, "qid", path.string());
                if (!have.insert(qid).second) ok = false;
            });
        } catch (const std::exception&) {
            return false;
        }
        return ok && have == want;
    }

    void write_answers(const fs::path& path, const std::vector<AnswerRecord>& records) {
        std::string content;
        for (const auto& rec : records) {
            content += answer_record_to_json(rec).dump();
            content += "\n";
        }
        write_file(path, content);
    }

    std::vector<AnswerRecord> load_answers(const std::string& setting,
                                           const std::string& generator) {
        fs::path path = answers_path(setting, generator);
        if (!fs::exists(path)) {
            throw Error(ErrorCode::State, "no answers at " + path.string() + "; run batch first");
        }
        auto corpus_images = corpus_image_map();
        auto gold_images = gold_image_map();
        std::vector<AnswerRecord> records;
        for_each_line(path, [&](size_t line_no, std::string_view line) {
            std::string ctx = path.string() + ":" + std::to_string(line_no);
            records.push_back(
                answer_record_from_json(parse_json(line, ctx), ctx, corpus_images, gold_images));
        });
        return records;
    }

    JudgeInputs judge_inputs(const AnswerRecord& rec, const QAQuadruple& q, MetricId metric) {
        JudgeInputs inputs;
        RequiredInputs req = required_inputs(metric);
        if (req.question) inputs.question = q.question;
        if (req.generated_answer) inputs.generated_answer = rec.answer.answer_text;
        if (req.reference_answer) inputs.reference_answer = q.reference_answer;
        if (req.text_context) {
            inputs.text_context = bundle_text_block(rec.answer.bundle, cfg.context_char_budget);
        }
        if (req.image_context) {
            for (const auto& item : rec.answer.bundle.items) {
                if (item.kind == ContextKind::Image) inputs.image_context.push_back(*item.image);
            }
        }
        return inputs;
    }

    using JudgmentKey = std::tuple<std::string, MetricId, std::string>;  // qid, metric, judge

    std::set<JudgmentKey> expected_judgment_keys(const std::vector<AnswerRecord>& records) {
        std::set<JudgmentKey> keys;
        for (const auto& rec : records) {
            if (!rec.ok) continue;
            for (MetricId metric : applicable_metrics(rec)) {
                for (const auto& judge : cfg.judges) {
                    keys.insert({rec.qid, metric, judge.name});
                }
            }
        }
        return keys;
    }

    bool judgments_complete(const fs::path& path, const std::set<JudgmentKey>& expected) {
        if (!fs::exists(path)) return false;
        std::set<JudgmentKey> have;
        bool ok = true;
        try {
            for_each_line(path, [&](size_t line_no, std::string_view line) {
                std::string ctx = path.string() + ":" + std::to_string(line_no);
                Judgment j = judgment_from_json(parse_json(line, ctx), ctx);
                if (!have.insert({j.qid, j.metric, j.judge}).second) ok = false;
            });
        } catch (const std::exception&) {
            return false;
        }
        return ok && have == expected;
    }

    // Judges one persisted cell. Backend failures become error rows so a
    // flaky judge degrades the error column instead of killing the run.
    void eval_cell(const SettingPlan& plan, const BackendProfile& generator) {
        std::vector<AnswerRecord> records = load_answers(plan.id, generator.name);
        fs::path path = judgments_path(plan.id, generator.name);
        auto expected = expected_judgment_keys(records);
        if (judgments_complete(path, expected)) {
            log::info("judgments for " + plan.id + "/" + generator.name + " are complete; skipping");
            return;
        }

        std::vector<std::vector<Judgment>> slots(records.size());
        parallel_for(records.size(), cfg.concurrency, [&](size_t i) {
            const AnswerRecord& rec = records[i];
            if (!rec.ok) return;
            const QAQuadruple& q = question_by_qid(rec.qid);
            for (MetricId metric : applicable_metrics(rec)) {
                for (const auto& judge_profile : cfg.judges) {
                    Judgment j;
                    try {
                        j = evaluate(chat(judge_profile.name), metric, judge_inputs(rec, q, metric),
                                     judge_profile.image_mode, impl.judge_tmpls.at(metric));
                    } catch (const std::exception& e) {
                        j.metric = metric;
                        j.judge = judge_profile.name;
                        j.error = true;
                        j.reason = std::string("judge backend failure: ") + e.what();
                    }
                    j.qid = rec.qid;
                    j.setting = plan.id;
                    j.generator = generator.name;
                    slots[i].push_back(std::move(j));
                }
            }
        });

        std::string content;
        for (const auto& slot : slots) {
            for (const auto& j : slot) {
                content += judgment_to_json(j).dump();
                content += "\n";
            }
        }
        write_file(path, content);
    }

    std::vector<Judgment> load_judgments(const fs::path& path) {
        std::vector<Judgment> judgments;
        for_each_line(path, [&](size_t line_no, std::string_view line) {
            std::string ctx = path.string() + ":" + std::to_string(line_no);
            judgments.push_back(judgment_from_json(parse_json(line, ctx), ctx));
        });
        return judgments;
    }

    void write_reports(const fs::path& dir, const ScoreTable& table) {
        write_file(dir / "report.md", render_report(table, ReportFormat::Markdown));
        write_file(dir / "report.csv", render_report(table, ReportFormat::Csv));
        write_file(dir / "report.json", render_report(table, ReportFormat::Json));
    }
};

}  // namespace

json Engine::ingest(const fs::path& corpus_file) {
    Corpus corpus = load_corpus(corpus_file, config_.chunking);
    json stats = {{"pages", corpus.pages.size()},
                  {"chunks", corpus.chunks.size()},
                  {"images", corpus.images.size()}};
    if (!config_.outdir.empty()) {
        fs::path out = config_.outdir / "corpus.normalized.jsonl";
        save_corpus(corpus, out);
        stats["normalized_path"] = out.string();
    }
    set_corpus(std::move(corpus));
    return stats;
}

json Engine::build_indexes(const std::string& setting_id, bool force) {
    EngineOps ops{*this, *impl_, config_};
    SettingPlan plan = setting_plan(setting_id, config_.retrieval);
    json built = json::array();
    if (!plan.retrieval) {
        return {{"setting", setting_id}, {"indexes", built}};
    }

    auto drop = [&](std::optional<VectorStore>& slot, const std::string& name) {
        slot.reset();
        fs::path path = index_file(config_, name);
        if (!path.empty() && fs::exists(path)) fs::remove(path);
    };
    auto drop_keyed = [&](std::map<std::string, VectorStore>& slots, const std::string& key,
                          const std::string& name) {
        slots.erase(key);
        fs::path path = index_file(config_, name);
        if (!path.empty() && fs::exists(path)) fs::remove(path);
    };

    auto note = [&](const std::string& name, const VectorStore& store) {
        built.push_back({{"name", name}, {"entries", store.index.size()}});
    };

    switch (plan.retrieval->strategy) {
        case RetrievalStrategy::TextOnly:
            if (force) drop(impl_->text_store, "text");
            note("text", ops.ensure_text_store());
            break;
        case RetrievalStrategy::ImageClip:
            if (force) drop(impl_->clip_store, "clip");
            note("clip", ops.ensure_clip_store());
            break;
        case RetrievalStrategy::ImageSummary:
            for (const auto& gen : config_.generators) {
                if (force) drop_keyed(impl_->summary_stores, gen.name, "summary." + gen.name);
                note("summary." + gen.name, ops.ensure_summary_store(gen.name));
            }
            break;
        case RetrievalStrategy::MultimodalSeparate:
            if (force) {
                drop(impl_->text_store, "text");
                drop(impl_->clip_store, "clip");
            }
            note("text", ops.ensure_text_store());
            note("clip", ops.ensure_clip_store());
            break;
        case RetrievalStrategy::MultimodalCombined:
            for (const auto& gen : config_.generators) {
                if (force) drop_keyed(impl_->combined_stores, gen.name, "combined." + gen.name);
                note("combined." + gen.name, ops.ensure_combined_store(gen.name));
            }
            break;
    }
    return {{"setting", setting_id}, {"indexes", built}};
}

json Engine::summarize_all() {
    EngineOps ops{*this, *impl_, config_};
    const Corpus& c = corpus();
    json per_generator = json::array();
    for (const auto& gen : config_.generators) {
        SummaryFn summarize = ops.summarizer_for(gen.name);
        size_t calls_before = ops.chat(gen.name).call_count();
        size_t done = 0;
        size_t failed = 0;
        for (const auto& asset : c.images) {
            try {
                summarize(asset);
                done++;
            } catch (const std::exception& e) {
                failed++;
                log::warn("summarize " + asset.key() + " with '" + gen.name + "': " + e.what());
            }
        }
        per_generator.push_back({{"generator", gen.name},
                                 {"summarized", done},
                                 {"failed", failed},
                                 {"chat_calls", ops.chat(gen.name).call_count() - calls_before}});
    }
    return {{"images", c.images.size()}, {"generators", per_generator}};
}

RagAnswer Engine::ask(const std::string& question, const std::string& setting_id,
                      const std::string& generator_name) {
    EngineOps ops{*this, *impl_, config_};
    SettingPlan plan = setting_plan(setting_id, config_.retrieval);
    if (plan.gsc) {
        throw Error(ErrorCode::InvalidArgument,
                    "setting '" + setting_id +
                        "' uses annotated gold context; it needs a testset, not a free question");
    }
    const BackendProfile& profile = ops.generator_profile(generator_name);

    ContextBundle bundle;
    if (plan.retrieval) {
        IndexSet indexes = ops.prepare_indexes(plan, profile.name);
        bundle = retrieve(*plan.retrieval, question, indexes, ops.retrieval_backends());
    } else {
        bundle.question = question;
    }
    std::vector<ChatMessage> messages =
        plan.retrieval ? build_qa_prompt(impl_->qa_tmpl, question, bundle,
                                         ops.effective_mode(plan, profile),
                                         profile.max_images_per_prompt,
                                         config_.context_char_budget)
                       : build_baseline_prompt(question);
    std::string answer = synthesize_answer(ops.chat(profile.name), messages);
    return RagAnswer{"",     plan.id, profile.name,
                     answer, bundle,  static_cast<int>(count_images(messages))};
}

std::vector<AnswerRecord> Engine::run_setting(const SettingPlan& plan,
                                              const BackendProfile& generator) {
    EngineOps ops{*this, *impl_, config_};
    const auto& tests = testset();
    // Indexes are built up front: builds are exclusive, searches are the only
    // concurrent index operations afterwards.
    IndexSet indexes = ops.prepare_indexes(plan, generator.name);

    std::vector<AnswerRecord> records(tests.size());
    parallel_for(tests.size(), config_.concurrency,
                 [&](size_t i) { records[i] = ops.answer_one(plan, generator, indexes, tests[i]); });
    return records;
}

void Engine::run_batch() {
    EngineOps ops{*this, *impl_, config_};
    for (const auto& setting_id : config_.settings) {
        SettingPlan plan = setting_plan(setting_id, config_.retrieval);
        for (const auto& gen : config_.generators) {
            fs::path path = ops.answers_path(setting_id, gen.name);
            if (ops.answers_complete(path)) {
                log::info("answers for " + setting_id + "/" + gen.name + " are complete; skipping");
                continue;
            }
            std::vector<AnswerRecord> records = run_setting(plan, gen);
            ops.write_answers(path, records);
        }
    }
}

void Engine::run_eval() {
    EngineOps ops{*this, *impl_, config_};
    for (const auto& setting_id : config_.settings) {
        SettingPlan plan = setting_plan(setting_id, config_.retrieval);
        for (const auto& gen : config_.generators) {
            ops.eval_cell(plan, gen);
        }
    }
}

ScoreTable Engine::run_report() {
    EngineOps ops{*this, *impl_, config_};
    std::vector<Judgment> all;
    size_t cells = 0;
    for (const auto& setting_id : config_.settings) {
        for (const auto& gen : config_.generators) {
            fs::path path = ops.judgments_path(setting_id, gen.name);
            if (!fs::exists(path)) continue;
            std::vector<Judgment> cell = ops.load_judgments(path);
            if (cell.empty()) continue;
            cells++;
            ScoreTable cell_table = aggregate(cell);
            ops.write_reports(ops.cell_dir(setting_id, gen.name), cell_table);
            all.insert(all.end(), cell.begin(), cell.end());
        }
    }
    if (cells == 0) {
        throw Error(ErrorCode::State, "no judgments found under " + config_.outdir.string() +
                                          "; run eval first");
    }
    ScoreTable table = aggregate(all);
    ops.write_reports(config_.outdir, table);
    return table;
}

ScoreTable Engine::run_experiment() {
    run_batch();
    run_eval();
    return run_report();
}

json Engine::dry_run_plan() {
    json plan;
    plan["seed"] = config_.seed;
    plan["outdir"] = config_.outdir.string();
    plan["concurrency"] = config_.concurrency;
    plan["settings"] = config_.settings;

    auto profile_json = [](const BackendProfile& p) {
        return json{{"name", p.name}, {"endpoint", p.endpoint}, {"model_id", p.model_id}};
    };
    plan["text_embed"] = profile_json(config_.text_embed);
    plan["multimodal_embed"] = profile_json(config_.multimodal_embed);
    plan["generators"] = json::array();
    for (const auto& gen : config_.generators) plan["generators"].push_back(profile_json(gen));
    plan["judges"] = json::array();
    for (const auto& judge : config_.judges) plan["judges"].push_back(profile_json(judge));

    if (!config_.corpus_path.empty()) {
        const Corpus& c = corpus();
        plan["corpus"] = {{"path", config_.corpus_path.string()},
                          {"pages", c.pages.size()},
                          {"chunks", c.chunks.size()},
                          {"images", c.images.size()}};
    }
    if (!config_.testset_path.empty()) {
        plan["testset"] = {{"path", config_.testset_path.string()},
                           {"questions", testset().size()}};
    }
    return plan;
}

size_t Engine::total_index_searches() const {
    size_t total = 0;
    if (impl_->text_store) total += impl_->text_store->index.search_count();
    if (impl_->clip_store) total += impl_->clip_store->index.search_count();
    for (const auto& [name, store] : impl_->summary_stores) total += store.index.search_count();
    for (const auto& [name, store] : impl_->combined_stores) total += store.index.search_count();
    return total;
}

size_t Engine::chat_call_count(const std::string& profile_name) const {
    auto it = impl_->chats.find(profile_name);
    if (it == impl_->chats.end()) {
        throw Error(ErrorCode::NotFound, "no chat backend named '" + profile_name + "'");
    }
    return it->second->call_count();
}

}  // namespace mmrag
