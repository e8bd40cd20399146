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

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "backends.hpp"
#include "jsonutil.hpp"

namespace mmrag {

enum class MetricId {
    AnswerCorrectness,
    AnswerRelevancy,
    TextFaithfulness,
    ImageFaithfulness,
    TextContextRelevancy,
    ImageContextRelevancy,
};

constexpr std::array<MetricId, 6> kAllMetrics = {
    MetricId::AnswerCorrectness,    MetricId::AnswerRelevancy,
    MetricId::TextFaithfulness,     MetricId::ImageFaithfulness,
    MetricId::TextContextRelevancy, MetricId::ImageContextRelevancy,
};

// Report column order: answer metrics, then text metrics, then image metrics.
constexpr std::array<MetricId, 6> kReportColumns = {
    MetricId::AnswerCorrectness,  MetricId::AnswerRelevancy,
    MetricId::TextFaithfulness,   MetricId::TextContextRelevancy,
    MetricId::ImageFaithfulness,  MetricId::ImageContextRelevancy,
};

const char* metric_name(MetricId metric);          // e.g. "answer_correctness"
const char* metric_display_name(MetricId metric);  // e.g. "Ans. Corr."
MetricId metric_from_name(const std::string& name);

// Which of the five possible inputs a metric consumes. Each metric requires
// its inputs exactly: extras are rejected as firmly as omissions.
struct RequiredInputs {
    bool question = false;
    bool generated_answer = false;
    bool reference_answer = false;
    bool text_context = false;
    bool image_context = false;
};

RequiredInputs required_inputs(MetricId metric);

struct JudgeInputs {
    std::optional<std::string> question;
    std::optional<std::string> generated_answer;
    std::optional<std::string> reference_answer;
    std::optional<std::string> text_context;
    std::vector<ImageAsset> image_context;
};

// One graded (or failed) evaluation of one answer under one metric. Error
// rows keep their parse failure in `reason` and are excluded from means.
struct Judgment {
    std::string qid;
    std::string setting;
    std::string generator;
    MetricId metric = MetricId::AnswerCorrectness;
    std::string judge;
    int grade = 0;
    std::string reason;
    bool error = false;
};

json judgment_to_json(const Judgment& j);
Judgment judgment_from_json(const json& record, const std::string& ctx);

struct ParsedJudgment {
    int grade = 0;
    std::string reason;
};

// Extracts the first well-formed JSON object from the raw reply and checks
// the grade/reason contract. Surrounding prose and code fences are ignored.
ParsedJudgment parse_judgment(const std::string& raw);

struct JudgeTemplate {
    std::string system_text;
    std::string user_scaffold;
};

JudgeTemplate default_judge_template(MetricId metric);

// Checks that the scaffold uses exactly the placeholders the metric's
// required inputs call for; throws Error(Config) otherwise.
void validate_judge_template(MetricId metric, const JudgeTemplate& tmpl);

Judgment evaluate(ChatBackend& judge, MetricId metric, const JudgeInputs& inputs,
                  ImageMode image_mode);
Judgment evaluate(ChatBackend& judge, MetricId metric, const JudgeInputs& inputs,
                  ImageMode image_mode, const JudgeTemplate& tmpl);

struct MetricCell {
    bool applicable = false;
    double mean = 0.0;   // meaningful only when count > 0
    size_t count = 0;    // graded judgments contributing to the mean
    size_t errors = 0;   // error rows, excluded from the mean
};

struct ScoreRow {
    std::string setting;
    std::string generator;
    std::string judge;
    std::map<MetricId, MetricCell> cells;
};

struct CombinedRow {
    std::string setting;
    std::string generator;
    std::map<MetricId, MetricCell> cells;
};

struct ScoreTable {
    std::vector<ScoreRow> rows;          // one per (setting, generator, judge)
    std::vector<CombinedRow> combined;   // per-metric mean of the judge means
};

ScoreTable aggregate(const std::vector<Judgment>& judgments);

enum class ReportFormat { Markdown, Csv, Json };

std::string render_report(const ScoreTable& table, ReportFormat format);

// Inverse of the CSV rendering; render(parse(csv)) is byte-identical.
ScoreTable parse_score_csv(const std::string& text);

// Fraction of error rows across all cells; drives the CLI failure threshold.
double error_row_fraction(const ScoreTable& table);

}  // namespace mmrag
