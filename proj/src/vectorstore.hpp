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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "corpus.hpp"
#include "util.hpp"

namespace mmrag {

using Vector = std::vector<double>;

double l2_distance(const Vector& a, const Vector& b);

struct HnswParams {
    size_t M = 16;
    size_t ef_construction = 200;
    size_t ef_search = 64;
};

struct SearchHit {
    std::string id;
    double distance = 0.0;  // plain L2

    bool operator==(const SearchHit&) const = default;
};

/// Layered proximity-graph ANN index over L2.
///
/// Build phase is exclusive: insert everything, then seal(). Searching an
/// unsealed index or inserting into a sealed one is a state error. Sealed
/// indexes are safe for concurrent search. Construction is deterministic
/// for a fixed (seed, insert order).
///
/// Indexes with at most ef_search entries are scanned exhaustively, so
/// small-scale search is exact.
class HnswIndex {
public:
    HnswIndex(size_t dim, HnswParams params = {}, uint64_t seed = 0);

    // Moves are spelled out because the search counter is atomic.
    HnswIndex(HnswIndex&& other) noexcept;
    HnswIndex& operator=(HnswIndex&& other) noexcept;

    void insert(const std::string& id, const Vector& v);
    void seal();
    bool sealed() const noexcept { return sealed_; }

    std::vector<SearchHit> search(const Vector& query, size_t k) const;

    size_t size() const noexcept { return ids_.size(); }
    size_t dim() const noexcept { return dim_; }
    const HnswParams& params() const noexcept { return params_; }
    uint64_t seed() const noexcept { return seed_; }
    bool contains(const std::string& id) const { return id_to_node_.count(id) > 0; }

    /// Number of search() calls served; used by pipeline audits.
    uint64_t search_count() const noexcept { return search_count_.load(); }

    /// Structural audit hooks (tests): per-layer neighbor lists of a node.
    int node_level(size_t node) const { return static_cast<int>(graph_[node].size()) - 1; }
    const std::vector<uint32_t>& neighbors(size_t node, int layer) const {
        return graph_[node][static_cast<size_t>(layer)];
    }

private:
    friend struct IndexSerde;

    double dist_sq(const Vector& a, const Vector& b) const;
    double dist_sq_to(size_t node, const Vector& q) const;
    int draw_level();
    size_t greedy_descend(const Vector& q, size_t entry, int from_layer, int to_layer) const;
    // Beam search on one layer; returns (dist_sq, node) ascending.
    std::vector<std::pair<double, size_t>> search_layer(const Vector& q, size_t entry,
                                                        size_t ef, int layer) const;
    std::vector<size_t> select_neighbors(const Vector& q,
                                         std::vector<std::pair<double, size_t>> candidates,
                                         size_t m) const;
    void shrink_neighbors(size_t node, int layer);
    void refine_base_layer();
    size_t max_degree(int layer) const {
        return layer == 0 ? 2 * params_.M : params_.M;
    }
    std::vector<SearchHit> brute_force(const Vector& query, size_t k) const;

    size_t dim_;
    HnswParams params_;
    uint64_t seed_;
    double level_mult_;
    std::mt19937_64 level_rng_;

    std::vector<std::string> ids_;
    std::map<std::string, size_t> id_to_node_;
    std::vector<Vector> vectors_;
    // graph_[node][layer] = neighbor node indices; node exists on layers 0..L.
    std::vector<std::vector<std::vector<uint32_t>>> graph_;
    size_t entry_point_ = 0;
    int max_level_ = -1;
    bool sealed_ = false;

    mutable std::atomic<uint64_t> search_count_{0};
};

// ---------------------------------------------------------------------------

/// Side store resolving index ids to generation-time payloads. For the
/// multi-vector pattern the indexed vector belongs to a summary while the
/// payload is the original image.
struct TextDoc {
    std::string text;
    PageRef source;

    bool operator==(const TextDoc&) const = default;
};

struct ImageDoc {
    ImageAsset asset;
    std::optional<std::string> summary;  // retrieval surrogate, if any

    bool operator==(const ImageDoc&) const = default;
};

using DocPayload = std::variant<TextDoc, ImageDoc>;

class DocStore {
public:
    void put(const std::string& id, DocPayload payload);
    const DocPayload& get(const std::string& id) const;
    bool contains(const std::string& id) const { return docs_.count(id) > 0; }
    size_t size() const noexcept { return docs_.size(); }
    const std::map<std::string, DocPayload>& all() const noexcept { return docs_; }

private:
    std::map<std::string, DocPayload> docs_;
};

/// An index and its payload store travel together.
struct VectorStore {
    HnswIndex index;
    DocStore docs;

    explicit VectorStore(size_t dim, HnswParams params = {}, uint64_t seed = 0)
        : index(dim, params, seed) {}
    VectorStore(HnswIndex index, DocStore docs)
        : index(std::move(index)), docs(std::move(docs)) {}
};

void save_store(const HnswIndex& index, const DocStore& docs,
                const std::filesystem::path& path);
VectorStore load_store(const std::filesystem::path& path);

}  // namespace mmrag
