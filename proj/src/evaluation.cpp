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

#include "evaluation.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <tuple>

#include "util.hpp"

namespace mmrag {

namespace {

constexpr const char* kFormatReminder =
    "Your previous reply could not be parsed. Reply with exactly one JSON object of the form "
    "{\"grade\": 0, \"reason\": \"...\"} where grade is 0 or 1, and nothing else.";

constexpr const char* kJsonInstruction =
    " Reply with exactly one JSON object {\"grade\": 0, \"reason\": \"...\"} where grade is 1 for "
    "pass and 0 for fail, and nothing else.";

// The nine canonical approaches, in report order. Unknown settings sort after
// these, alphabetically.
constexpr std::array<const char*, 9> kSettingOrder = {
    "Baseline",       "TextOnlyRAG",       "ImageOnlyClip",
    "ImageOnlySummary", "MultimodalClip",  "MultimodalSummary",
    "TextGSC",        "ImageGSC",          "MultimodalGSC",
};

size_t setting_rank(const std::string& setting) {
    for (size_t i = 0; i < kSettingOrder.size(); i++) {
        if (setting == kSettingOrder[i]) return i;
    }
    return kSettingOrder.size();
}

std::string replace_placeholder(std::string text, const std::string& placeholder,
                                const std::string& value) {
    size_t pos = text.find(placeholder);
    if (pos == std::string::npos) {
        throw Error(ErrorCode::Config, "judge template is missing placeholder " + placeholder);
    }
    text.replace(pos, placeholder.size(), value);
    if (text.find(placeholder) != std::string::npos) {
        throw Error(ErrorCode::Config,
                    "judge template repeats placeholder " + placeholder);
    }
    return text;
}

void check_no_placeholder(const std::string& text, const std::string& placeholder) {
    if (text.find(placeholder) != std::string::npos) {
        throw Error(ErrorCode::Config,
                    "judge template uses " + placeholder + ", which this metric does not take");
    }
}

// Finds the index just past the balanced closing brace for the '{' at
// `start`, honoring JSON string literals and escapes.
size_t balanced_object_end(const std::string& text, size_t start) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (size_t i = start; i < text.size(); i++) {
        char c = text[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            depth++;
        } else if (c == '}') {
            depth--;
            if (depth == 0) return i + 1;
        }
    }
    return std::string::npos;
}

ParsedJudgment check_judgment_domain(const json& obj) {
    if (!obj.contains("grade")) {
        throw Error(ErrorCode::Parse, "judge reply is missing \"grade\"");
    }
    const auto& grade = obj["grade"];
    if (!grade.is_number_integer()) {
        throw Error(ErrorCode::Parse, "judge reply grade must be the integer 0 or 1");
    }
    int64_t value = grade.get<int64_t>();
    if (value != 0 && value != 1) {
        throw Error(ErrorCode::Parse,
                    "judge reply grade must be 0 or 1, got " + std::to_string(value));
    }
    if (!obj.contains("reason") || !obj["reason"].is_string()) {
        throw Error(ErrorCode::Parse, "judge reply is missing a string \"reason\"");
    }
    std::string reason = obj["reason"].get<std::string>();
    if (trim(reason).empty()) {
        throw Error(ErrorCode::Parse, "judge reply reason is empty");
    }
    return {static_cast<int>(value), reason};
}

struct InputPresence {
    bool question;
    bool generated_answer;
    bool reference_answer;
    bool text_context;
    bool image_context;
};

InputPresence presence_of(const JudgeInputs& inputs) {
    return {inputs.question.has_value(), inputs.generated_answer.has_value(),
            inputs.reference_answer.has_value(), inputs.text_context.has_value(),
            !inputs.image_context.empty()};
}

void check_one(bool required, bool present, MetricId metric, const char* label) {
    if (required && !present) {
        throw Error(ErrorCode::InvalidArgument, std::string("metric ") + metric_name(metric) +
                                                    " requires " + label);
    }
    if (!required && present) {
        throw Error(ErrorCode::InvalidArgument, std::string("metric ") + metric_name(metric) +
                                                    " does not take " + label);
    }
}

void validate_inputs(MetricId metric, const JudgeInputs& inputs) {
    RequiredInputs req = required_inputs(metric);
    InputPresence has = presence_of(inputs);
    check_one(req.question, has.question, metric, "the question");
    check_one(req.generated_answer, has.generated_answer, metric, "the generated answer");
    check_one(req.reference_answer, has.reference_answer, metric, "the reference answer");
    check_one(req.text_context, has.text_context, metric, "text context");
    check_one(req.image_context, has.image_context, metric, "image context");
}

std::string render_judge_user_text(MetricId metric, const JudgeTemplate& tmpl,
                                   const JudgeInputs& inputs) {
    RequiredInputs req = required_inputs(metric);
    std::string text = tmpl.user_scaffold;
    if (req.question) {
        text = replace_placeholder(text, "{question}", *inputs.question);
    } else {
        check_no_placeholder(text, "{question}");
    }
    if (req.generated_answer) {
        text = replace_placeholder(text, "{generated_answer}", *inputs.generated_answer);
    } else {
        check_no_placeholder(text, "{generated_answer}");
    }
    if (req.reference_answer) {
        text = replace_placeholder(text, "{reference_answer}", *inputs.reference_answer);
    } else {
        check_no_placeholder(text, "{reference_answer}");
    }
    if (req.text_context) {
        text = replace_placeholder(text, "{text_context}", *inputs.text_context);
    } else {
        check_no_placeholder(text, "{text_context}");
    }
    return text;
}

// One judge call with an optional parse-failure re-ask carrying a format
// reminder. Returns the parse error message instead of a grade on failure.
struct CallOutcome {
    bool ok = false;
    int grade = 0;
    std::string reason;
};

CallOutcome call_judge_once(ChatBackend& judge, const std::string& system_text,
                            const std::string& user_text,
                            const std::vector<const ImageAsset*>& images) {
    std::vector<ChatMessage> messages;
    messages.push_back(ChatMessage::system(system_text));
    ChatMessage user = ChatMessage::user(user_text);
    for (const auto* image : images) user.parts.push_back(ImagePart{*image});
    messages.push_back(user);

    std::string raw = judge.complete(messages);
    try {
        ParsedJudgment parsed = parse_judgment(raw);
        return {true, parsed.grade, parsed.reason};
    } catch (const Error& first) {
        if (first.code() != ErrorCode::Parse) throw;
        ChatMessage reply;
        reply.role = Role::Assistant;
        reply.parts.push_back(TextPart{raw});
        messages.push_back(std::move(reply));
        messages.push_back(ChatMessage::user(kFormatReminder));
        std::string retry = judge.complete(messages);
        try {
            ParsedJudgment parsed = parse_judgment(retry);
            return {true, parsed.grade, parsed.reason};
        } catch (const Error& second) {
            if (second.code() != ErrorCode::Parse) throw;
            return {false, 0, std::string("unparseable after re-ask: ") + second.what()};
        }
    }
}

}  // namespace

const char* metric_name(MetricId metric) {
    switch (metric) {
        case MetricId::AnswerCorrectness: return "answer_correctness";
        case MetricId::AnswerRelevancy: return "answer_relevancy";
        case MetricId::TextFaithfulness: return "text_faithfulness";
        case MetricId::ImageFaithfulness: return "image_faithfulness";
        case MetricId::TextContextRelevancy: return "text_context_relevancy";
        case MetricId::ImageContextRelevancy: return "image_context_relevancy";
    }
    return "unknown";
}

const char* metric_display_name(MetricId metric) {
    switch (metric) {
        case MetricId::AnswerCorrectness: return "Ans. Corr.";
        case MetricId::AnswerRelevancy: return "Ans. Rel.";
        case MetricId::TextFaithfulness: return "Text Faith.";
        case MetricId::ImageFaithfulness: return "Img. Faith.";
        case MetricId::TextContextRelevancy: return "Text Ctx. Rel.";
        case MetricId::ImageContextRelevancy: return "Img. Ctx. Rel.";
    }
    return "unknown";
}

MetricId metric_from_name(const std::string& name) {
    for (MetricId metric : kAllMetrics) {
        if (name == metric_name(metric)) return metric;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown metric '" + name + "'");
}

RequiredInputs required_inputs(MetricId metric) {
    switch (metric) {
        case MetricId::AnswerCorrectness: return {true, true, true, false, false};
        case MetricId::AnswerRelevancy: return {true, true, false, false, false};
        case MetricId::TextFaithfulness: return {false, true, false, true, false};
        case MetricId::ImageFaithfulness: return {false, true, false, false, true};
        case MetricId::TextContextRelevancy: return {true, false, false, true, false};
        case MetricId::ImageContextRelevancy: return {true, false, false, false, true};
    }
    throw Error(ErrorCode::Internal, "unhandled metric");
}

json judgment_to_json(const Judgment& j) {
    return {{"qid", j.qid},       {"setting", j.setting}, {"generator", j.generator},
            {"metric", metric_name(j.metric)},            {"judge", j.judge},
            {"grade", j.grade},   {"reason", j.reason},   {"error", j.error}};
}

Judgment judgment_from_json(const json& record, const std::string& ctx) {
    Judgment j;
    j.qid = require_nonempty_string(record, "qid", ctx);
    j.setting = require_nonempty_string(record, "setting", ctx);
    j.generator = require_nonempty_string(record, "generator", ctx);
    j.metric = metric_from_name(require_nonempty_string(record, "metric", ctx));
    j.judge = require_nonempty_string(record, "judge", ctx);
    j.reason = require_nonempty_string(record, "reason", ctx);
    j.error = record.value("error", false);
    if (j.error) {
        j.grade = 0;
    } else {
        const json& grade = require_field(record, "grade", ctx);
        if (!grade.is_number_integer() ||
            (grade.get<int64_t>() != 0 && grade.get<int64_t>() != 1)) {
            throw Error(ErrorCode::Parse, ctx + ": grade must be 0 or 1");
        }
        j.grade = static_cast<int>(grade.get<int64_t>());
    }
    return j;
}

ParsedJudgment parse_judgment(const std::string& raw) {
    size_t pos = 0;
    while ((pos = raw.find('{', pos)) != std::string::npos) {
        size_t end = balanced_object_end(raw, pos);
        if (end != std::string::npos) {
            json obj = json::parse(raw.substr(pos, end - pos), nullptr, false);
            if (!obj.is_discarded() && obj.is_object()) {
                return check_judgment_domain(obj);
            }
        }
        pos++;
    }
    throw Error(ErrorCode::Parse, "no JSON object found in judge reply");
}

JudgeTemplate default_judge_template(MetricId metric) {
    JudgeTemplate tmpl;
    switch (metric) {
        case MetricId::AnswerCorrectness:
            tmpl.system_text =
                "You grade answer correctness for a question-answering system over industrial "
                "machine documentation. Compare the generated answer against the reference "
                "answer: grade 1 if it conveys the facts of the reference answer, 0 otherwise.";
            tmpl.user_scaffold =
                "### Question\n{question}\n\n### Reference Answer\n{reference_answer}\n\n"
                "### Generated Answer\n{generated_answer}";
            break;
        case MetricId::AnswerRelevancy:
            tmpl.system_text =
                "You grade answer relevancy. Grade 1 if the generated answer actually addresses "
                "the question asked, 0 if it is off-topic or not an answer.";
            tmpl.user_scaffold = "### Question\n{question}\n\n### Generated Answer\n{generated_answer}";
            break;
        case MetricId::TextFaithfulness:
            tmpl.system_text =
                "You grade text faithfulness. Grade 1 if every claim in the generated answer is "
                "consistent with the provided text context, 0 if any claim contradicts it or has "
                "no support in it.";
            tmpl.user_scaffold =
                "### Generated Answer\n{generated_answer}\n\n### Text Context\n{text_context}";
            break;
        case MetricId::ImageFaithfulness:
            tmpl.system_text =
                "You grade image faithfulness. Grade 1 if the generated answer is consistent "
                "with what the attached image(s) show, 0 if it contradicts them.";
            tmpl.user_scaffold = "### Generated Answer\n{generated_answer}";
            break;
        case MetricId::TextContextRelevancy:
            tmpl.system_text =
                "You grade text context relevancy. Grade 1 if the provided text context is "
                "pertinent to answering the question, 0 otherwise.";
            tmpl.user_scaffold = "### Question\n{question}\n\n### Text Context\n{text_context}";
            break;
        case MetricId::ImageContextRelevancy:
            tmpl.system_text =
                "You grade image context relevancy. Grade 1 if the attached image(s) are "
                "pertinent to answering the question, 0 otherwise.";
            tmpl.user_scaffold = "### Question\n{question}";
            break;
    }
    tmpl.system_text += kJsonInstruction;
    return tmpl;
}

void validate_judge_template(MetricId metric, const JudgeTemplate& tmpl) {
    RequiredInputs req = required_inputs(metric);
    JudgeInputs dummy;
    if (req.question) dummy.question = "q";
    if (req.generated_answer) dummy.generated_answer = "ga";
    if (req.reference_answer) dummy.reference_answer = "ra";
    if (req.text_context) dummy.text_context = "ctx";
    render_judge_user_text(metric, tmpl, dummy);
}

Judgment evaluate(ChatBackend& judge, MetricId metric, const JudgeInputs& inputs,
                  ImageMode image_mode) {
    return evaluate(judge, metric, inputs, image_mode, default_judge_template(metric));
}

Judgment evaluate(ChatBackend& judge, MetricId metric, const JudgeInputs& inputs,
                  ImageMode image_mode, const JudgeTemplate& tmpl) {
    validate_inputs(metric, inputs);
    std::string user_text = render_judge_user_text(metric, tmpl, inputs);

    size_t cap = static_cast<size_t>(judge.profile().max_images_per_prompt);
    if (image_mode == ImageMode::Single) cap = std::min<size_t>(cap, 1);

    // Batches of images per judge call: everything at once when it fits,
    // otherwise one image per call with grades combined afterwards.
    std::vector<std::vector<const ImageAsset*>> batches;
    if (inputs.image_context.empty()) {
        batches.push_back({});
    } else if (inputs.image_context.size() <= cap) {
        std::vector<const ImageAsset*> all;
        for (const auto& image : inputs.image_context) all.push_back(&image);
        batches.push_back(std::move(all));
    } else {
        for (const auto& image : inputs.image_context) batches.push_back({&image});
    }

    Judgment out;
    out.metric = metric;
    out.judge = judge.name();

    // Relevancy over several images combines by OR (any relevant image is
    // enough); faithfulness combines by AND (the answer must not contradict
    // any image shown).
    bool combine_or = metric == MetricId::ImageContextRelevancy;
    std::optional<CallOutcome> decisive;
    for (const auto& batch : batches) {
        CallOutcome outcome = call_judge_once(judge, tmpl.system_text, user_text, batch);
        if (!outcome.ok) {
            out.error = true;
            out.reason = outcome.reason;
            return out;
        }
        decisive = outcome;
        if (batches.size() > 1) {
            if (combine_or && outcome.grade == 1) break;
            if (!combine_or && outcome.grade == 0) break;
        }
    }
    out.grade = decisive->grade;
    out.reason = decisive->reason;
    return out;
}

ScoreTable aggregate(const std::vector<Judgment>& judgments) {
    if (judgments.empty()) {
        throw Error(ErrorCode::InvalidArgument, "no judgments to aggregate");
    }

    std::set<std::tuple<std::string, std::string, std::string, std::string, MetricId>> seen;
    struct Tally {
        size_t sum = 0;
        size_t count = 0;
        size_t errors = 0;
    };
    std::map<std::tuple<std::string, std::string, std::string>, std::map<MetricId, Tally>> groups;

    for (const auto& j : judgments) {
        auto key = std::make_tuple(j.qid, j.setting, j.generator, j.judge, j.metric);
        if (!seen.insert(key).second) {
            throw Error(ErrorCode::InvalidArgument,
                        "duplicate judgment for qid '" + j.qid + "', setting '" + j.setting +
                            "', judge '" + j.judge + "', metric " + metric_name(j.metric));
        }
        if (!j.error && j.grade != 0 && j.grade != 1) {
            throw Error(ErrorCode::InvalidArgument,
                        "judgment for qid '" + j.qid + "' has grade outside {0,1}");
        }
        Tally& tally = groups[{j.setting, j.generator, j.judge}][j.metric];
        if (j.error) {
            tally.errors++;
        } else {
            tally.sum += static_cast<size_t>(j.grade);
            tally.count++;
        }
    }

    ScoreTable table;
    for (const auto& [key, metrics] : groups) {
        ScoreRow row;
        row.setting = std::get<0>(key);
        row.generator = std::get<1>(key);
        row.judge = std::get<2>(key);
        for (MetricId metric : kAllMetrics) {
            MetricCell cell;
            auto it = metrics.find(metric);
            if (it != metrics.end()) {
                cell.applicable = true;
                cell.count = it->second.count;
                cell.errors = it->second.errors;
                if (cell.count > 0) {
                    cell.mean = static_cast<double>(it->second.sum) /
                                static_cast<double>(cell.count);
                }
            }
            row.cells[metric] = cell;
        }
        table.rows.push_back(std::move(row));
    }

    std::sort(table.rows.begin(), table.rows.end(), [](const ScoreRow& a, const ScoreRow& b) {
        return std::make_tuple(setting_rank(a.setting), a.setting, a.generator, a.judge) <
               std::make_tuple(setting_rank(b.setting), b.setting, b.generator, b.judge);
    });

    // Combined view: for each metric, the unweighted mean over the per-judge
    // means, so both judges carry equal weight regardless of error counts.
    std::map<std::pair<std::string, std::string>, std::vector<const ScoreRow*>> by_pair;
    for (const auto& row : table.rows) {
        by_pair[{row.setting, row.generator}].push_back(&row);
    }
    for (const auto& [pair_key, rows] : by_pair) {
        CombinedRow combined;
        combined.setting = pair_key.first;
        combined.generator = pair_key.second;
        for (MetricId metric : kAllMetrics) {
            MetricCell cell;
            double mean_sum = 0.0;
            size_t mean_count = 0;
            for (const auto* row : rows) {
                const MetricCell& judge_cell = row->cells.at(metric);
                if (!judge_cell.applicable) continue;
                cell.applicable = true;
                cell.count += judge_cell.count;
                cell.errors += judge_cell.errors;
                if (judge_cell.count > 0) {
                    mean_sum += judge_cell.mean;
                    mean_count++;
                }
            }
            if (mean_count > 0) cell.mean = mean_sum / static_cast<double>(mean_count);
            combined.cells[metric] = cell;
        }
        table.combined.push_back(std::move(combined));
    }
    std::sort(table.combined.begin(), table.combined.end(),
              [](const CombinedRow& a, const CombinedRow& b) {
                  return std::make_tuple(setting_rank(a.setting), a.setting, a.generator) <
                         std::make_tuple(setting_rank(b.setting), b.setting, b.generator);
              });
    return table;
}

namespace {

std::string md_cell(const MetricCell& cell) {
    if (!cell.applicable || cell.count == 0) return "--";
    return format_double(cell.mean, 2) + " (" + std::to_string(cell.count) + ")";
}

size_t row_errors(const std::map<MetricId, MetricCell>& cells) {
    size_t total = 0;
    for (const auto& [metric, cell] : cells) total += cell.errors;
    return total;
}

std::string render_markdown(const ScoreTable& table) {
    std::ostringstream out;
    out << "| Approach | Generator | Evaluator |";
    for (MetricId metric : kReportColumns) out << " " << metric_display_name(metric) << " |";
    out << " Error Rows |\n";
    out << "|---|---|---|";
    for (size_t i = 0; i < kReportColumns.size(); i++) out << "---|";
    out << "---|\n";

    auto emit = [&](const std::string& setting, const std::string& generator,
                    const std::string& evaluator, const std::map<MetricId, MetricCell>& cells) {
        out << "| " << setting << " | " << generator << " | " << evaluator << " |";
        for (MetricId metric : kReportColumns) out << " " << md_cell(cells.at(metric)) << " |";
        out << " " << row_errors(cells) << " |\n";
    };

    // Judge rows grouped per (setting, generator), each group closed by its
    // combined row; both lists are already in report order.
    size_t combined_idx = 0;
    for (size_t i = 0; i < table.rows.size(); i++) {
        const auto& row = table.rows[i];
        emit(row.setting, row.generator, row.judge, row.cells);
        bool group_end = i + 1 == table.rows.size() ||
                         table.rows[i + 1].setting != row.setting ||
                         table.rows[i + 1].generator != row.generator;
        if (group_end && combined_idx < table.combined.size()) {
            const auto& combined = table.combined[combined_idx++];
            emit(combined.setting, combined.generator, "combined", combined.cells);
        }
    }
    return out.str();
}

std::string csv_header() {
    std::string header = "approach,generator,evaluator";
    for (MetricId metric : kReportColumns) {
        std::string name = metric_name(metric);
        header += "," + name + "," + name + "_n," + name + "_err";
    }
    return header;
}

void check_csv_field(const std::string& field) {
    if (field.find_first_of(",\"\n\r") != std::string::npos) {
        throw Error(ErrorCode::InvalidArgument,
                    "value '" + field + "' cannot be written to CSV unescaped");
    }
}

void append_csv_row(std::ostringstream& out, const std::string& setting,
                    const std::string& generator, const std::string& evaluator,
                    const std::map<MetricId, MetricCell>& cells) {
    check_csv_field(setting);
    check_csv_field(generator);
    check_csv_field(evaluator);
    out << setting << "," << generator << "," << evaluator;
    for (MetricId metric : kReportColumns) {
        const MetricCell& cell = cells.at(metric);
        if (!cell.applicable || cell.count == 0) {
            out << ",--";
        } else {
            out << "," << format_double(cell.mean, 4);
        }
        out << "," << cell.count << "," << cell.errors;
    }
    out << "\n";
}

std::string render_csv(const ScoreTable& table) {
    std::ostringstream out;
    out << csv_header() << "\n";
    for (const auto& row : table.rows) {
        append_csv_row(out, row.setting, row.generator, row.judge, row.cells);
    }
    for (const auto& combined : table.combined) {
        append_csv_row(out, combined.setting, combined.generator, "combined", combined.cells);
    }
    return out.str();
}

json cells_to_json(const std::map<MetricId, MetricCell>& cells) {
    json metrics = json::object();
    for (MetricId metric : kReportColumns) {
        const MetricCell& cell = cells.at(metric);
        json entry = {{"applicable", cell.applicable},
                      {"count", cell.count},
                      {"errors", cell.errors}};
        if (cell.applicable && cell.count > 0) entry["mean"] = cell.mean;
        metrics[metric_name(metric)] = std::move(entry);
    }
    return metrics;
}

std::string render_json(const ScoreTable& table) {
    json doc;
    doc["rows"] = json::array();
    for (const auto& row : table.rows) {
        doc["rows"].push_back({{"setting", row.setting},
                               {"generator", row.generator},
                               {"judge", row.judge},
                               {"metrics", cells_to_json(row.cells)}});
    }
    doc["combined"] = json::array();
    for (const auto& combined : table.combined) {
        doc["combined"].push_back({{"setting", combined.setting},
                                   {"generator", combined.generator},
                                   {"metrics", cells_to_json(combined.cells)}});
    }
    return doc.dump(2) + "\n";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
        size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

}  // namespace

std::string render_report(const ScoreTable& table, ReportFormat format) {
    switch (format) {
        case ReportFormat::Markdown: return render_markdown(table);
        case ReportFormat::Csv: return render_csv(table);
        case ReportFormat::Json: return render_json(table);
    }
    throw Error(ErrorCode::Internal, "unhandled report format");
}

ScoreTable parse_score_csv(const std::string& text) {
    std::vector<std::string> lines;
    size_t start = 0;
    while (start < text.size()) {
        size_t eol = text.find('\n', start);
        std::string line = text.substr(start, eol == std::string::npos ? eol : eol - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
        if (eol == std::string::npos) break;
        start = eol + 1;
    }
    if (lines.empty()) {
        throw Error(ErrorCode::Parse, "score CSV is empty");
    }
    if (lines[0] != csv_header()) {
        throw Error(ErrorCode::Parse, "score CSV header does not match the expected schema");
    }

    ScoreTable table;
    for (size_t i = 1; i < lines.size(); i++) {
        auto fields = split_csv_line(lines[i]);
        if (fields.size() != 3 + kReportColumns.size() * 3) {
            throw Error(ErrorCode::Parse,
                        "score CSV line " + std::to_string(i + 1) + " has the wrong field count");
        }
        std::map<MetricId, MetricCell> cells;
        for (size_t m = 0; m < kReportColumns.size(); m++) {
            MetricCell cell;
            const std::string& mean = fields[3 + m * 3];
            cell.count = static_cast<size_t>(std::stoull(fields[3 + m * 3 + 1]));
            cell.errors = static_cast<size_t>(std::stoull(fields[3 + m * 3 + 2]));
            if (mean == "--") {
                cell.applicable = cell.errors > 0;
            } else {
                cell.applicable = true;
                cell.mean = std::stod(mean);
            }
            cells[kReportColumns[m]] = cell;
        }
        if (fields[2] == "combined") {
            CombinedRow row;
            row.setting = fields[0];
            row.generator = fields[1];
            row.cells = std::move(cells);
            table.combined.push_back(std::move(row));
        } else {
            ScoreRow row;
            row.setting = fields[0];
            row.generator = fields[1];
            row.judge = fields[2];
            row.cells = std::move(cells);
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

double error_row_fraction(const ScoreTable& table) {
    size_t graded = 0;
    size_t errors = 0;
    for (const auto& row : table.rows) {
        for (const auto& [metric, cell] : row.cells) {
            graded += cell.count;
            errors += cell.errors;
        }
    }
    if (graded + errors == 0) return 0.0;
    return static_cast<double>(errors) / static_cast<double>(graded + errors);
}

}  // namespace mmrag
