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

#include <memory>

#include "backends.hpp"

namespace mmrag::detail {

std::unique_ptr<TextEmbedder> make_mock_text_embedder(const BackendProfile& profile);
std::unique_ptr<MultimodalEmbedder> make_mock_multimodal_embedder(const BackendProfile& profile);
std::unique_ptr<ChatBackend> make_mock_chat(const BackendProfile& profile);

std::unique_ptr<TextEmbedder> make_http_text_embedder(const BackendProfile& profile);
std::unique_ptr<MultimodalEmbedder> make_http_multimodal_embedder(const BackendProfile& profile);
std::unique_ptr<ChatBackend> make_http_chat(const BackendProfile& profile);

}  // namespace mmrag::detail
