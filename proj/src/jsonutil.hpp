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

#include <json.hpp>

#include <cstdint>
#include <string>

#include "util.hpp"

namespace mmrag {

using json = nlohmann::json;

/// Schema helpers: every accessor names the offending field in its error,
/// prefixed with `ctx` (typically "file:line").
inline json parse_json(std::string_view text, const std::string& ctx) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::Parse, ctx + ": invalid JSON");
    return j;
}

inline const json& require_field(const json& obj, const char* key, const std::string& ctx) {
    if (!obj.is_object() || !obj.contains(key)) {
        throw Error(ErrorCode::Parse, ctx + ": missing field '" + key + "'");
    }
    return obj.at(key);
}

inline std::string require_string(const json& obj, const char* key, const std::string& ctx) {
    const json& v = require_field(obj, key, ctx);
    if (!v.is_string()) throw Error(ErrorCode::Parse, ctx + ": field '" + key + "' must be a string");
    return v.get<std::string>();
}

inline std::string require_nonempty_string(const json& obj, const char* key,
                                           const std::string& ctx) {
    std::string s = require_string(obj, key, ctx);
    if (trim(s).empty()) {
        throw Error(ErrorCode::Parse, ctx + ": field '" + key + "' must be non-empty");
    }
    return s;
}

inline int64_t require_positive_int(const json& obj, const char* key, const std::string& ctx) {
    const json& v = require_field(obj, key, ctx);
    if (!v.is_number_integer() || v.get<int64_t>() <= 0) {
        throw Error(ErrorCode::Parse, ctx + ": field '" + key + "' must be a positive integer");
    }
    return v.get<int64_t>();
}

inline std::string opt_string(const json& obj, const char* key, const std::string& fallback) {
    if (obj.is_object() && obj.contains(key) && obj.at(key).is_string()) {
        return obj.at(key).get<std::string>();
    }
    return fallback;
}

}  // namespace mmrag
