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
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mmrag {

enum class ErrorCode {
    Io = 1,
    Parse = 2,
    Config = 3,
    InvalidArgument = 4,
    Backend = 5,
    NotFound = 6,
    State = 7,
    Threshold = 8,
    Internal = 9,
};

/// All failures inside the engine surface as Error; the C API maps the
/// code onto mmr_status values.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string message)
        : std::runtime_error(std::move(message)), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

const char* error_code_name(ErrorCode code) noexcept;

// ---------------------------------------------------------------------------
// strings

std::string_view trim(std::string_view s);

/// Whitespace tokenization; views point into the argument.
std::vector<std::string_view> split_words(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string to_lower(std::string_view s);

bool starts_with(std::string_view s, std::string_view prefix);

// ---------------------------------------------------------------------------
// encoding / hashing

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);  // throws Error(Parse) on bad input

std::string sha256_hex(std::string_view bytes);

uint64_t splitmix64(uint64_t x) noexcept;
uint64_t fnv1a64(std::string_view s) noexcept;

// ---------------------------------------------------------------------------
// files

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);
void append_line(const std::filesystem::path& path, std::string_view line);

/// Calls fn(line_number, line) for every line; line numbers start at 1.
/// Blank lines are skipped. Throws Error(Io) if the file cannot be read.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(size_t, std::string_view)>& fn);

// ---------------------------------------------------------------------------
// formatting

std::string format_double(double v, int decimals);

// Splits template file content at the first line that is exactly "---":
// text above it (if any) is the system text, text below is the scaffold.
struct TemplateFileParts {
    std::optional<std::string> system_text;
    std::string user_scaffold;
};
TemplateFileParts split_template_file(const std::string& raw);

}  // namespace mmrag
