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

#include "vectorstore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>

namespace mmrag {

double l2_distance(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::InvalidArgument,
                    "l2_distance: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
    }
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

HnswIndex::HnswIndex(size_t dim, HnswParams params, uint64_t seed)
    : dim_(dim), params_(params), seed_(seed), level_rng_(seed) {
    if (dim_ == 0) throw Error(ErrorCode::InvalidArgument, "hnsw: dim must be positive");
    if (params_.M < 2) throw Error(ErrorCode::InvalidArgument, "hnsw: M must be >= 2");
    if (params_.ef_construction < 1 || params_.ef_search < 1) {
        throw Error(ErrorCode::InvalidArgument, "hnsw: ef parameters must be >= 1");
    }
    level_mult_ = 1.0 / std::log(static_cast<double>(params_.M));
}

HnswIndex::HnswIndex(HnswIndex&& other) noexcept
    : dim_(other.dim_),
      params_(other.params_),
      seed_(other.seed_),
      level_mult_(other.level_mult_),
      level_rng_(std::move(other.level_rng_)),
      ids_(std::move(other.ids_)),
      id_to_node_(std::move(other.id_to_node_)),
      vectors_(std::move(other.vectors_)),
      graph_(std::move(other.graph_)),
      entry_point_(other.entry_point_),
      max_level_(other.max_level_),
      sealed_(other.sealed_),
      search_count_(other.search_count_.load()) {}

HnswIndex& HnswIndex::operator=(HnswIndex&& other) noexcept {
    if (this == &other) return *this;
    dim_ = other.dim_;
    params_ = other.params_;
    seed_ = other.seed_;
    level_mult_ = other.level_mult_;
    level_rng_ = std::move(other.level_rng_);
    ids_ = std::move(other.ids_);
    id_to_node_ = std::move(other.id_to_node_);
    vectors_ = std::move(other.vectors_);
    graph_ = std::move(other.graph_);
    entry_point_ = other.entry_point_;
    max_level_ = other.max_level_;
    sealed_ = other.sealed_;
    search_count_.store(other.search_count_.load());
    return *this;
}

double HnswIndex::dist_sq(const Vector& a, const Vector& b) const {
    double acc = 0.0;
    for (size_t i = 0; i < dim_; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

double HnswIndex::dist_sq_to(size_t node, const Vector& q) const {
    return dist_sq(vectors_[node], q);
}

int HnswIndex::draw_level() {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    double u = uni(level_rng_);
    if (u <= 0.0) u = std::numeric_limits<double>::min();
    return static_cast<int>(-std::log(u) * level_mult_);
}

void HnswIndex::insert(const std::string& id, const Vector& v) {
    if (sealed_) throw Error(ErrorCode::State, "hnsw: insert into sealed index");
    if (v.size() != dim_) {
        throw Error(ErrorCode::InvalidArgument,
                    "hnsw: vector dimension " + std::to_string(v.size()) + " != index dim " +
                        std::to_string(dim_));
    }
    if (id_to_node_.count(id)) {
        throw Error(ErrorCode::InvalidArgument, "hnsw: duplicate id '" + id + "'");
    }

    const size_t node = ids_.size();
    const int level = draw_level();
    ids_.push_back(id);
    id_to_node_.emplace(id, node);
    vectors_.push_back(v);
    graph_.emplace_back(static_cast<size_t>(level) + 1);

    if (node == 0) {
        entry_point_ = 0;
        max_level_ = level;
        return;
    }

    size_t ep = entry_point_;
    if (level < max_level_) {
        ep = greedy_descend(v, ep, max_level_, level + 1);
    }

    for (int layer = std::min(level, max_level_); layer >= 0; --layer) {
        auto candidates = search_layer(v, ep, params_.ef_construction, layer);
        auto selected = select_neighbors(v, candidates, params_.M);
        for (size_t peer : selected) {
            graph_[node][static_cast<size_t>(layer)].push_back(static_cast<uint32_t>(peer));
            graph_[peer][static_cast<size_t>(layer)].push_back(static_cast<uint32_t>(node));
            if (graph_[peer][static_cast<size_t>(layer)].size() > max_degree(layer)) {
                shrink_neighbors(peer, layer);
            }
        }
        if (!candidates.empty()) ep = candidates.front().second;
    }

    if (level > max_level_) {
        max_level_ = level;
        entry_point_ = node;
    }
}

size_t HnswIndex::greedy_descend(const Vector& q, size_t entry, int from_layer,
                                 int to_layer) const {
    size_t current = entry;
    double current_dist = dist_sq_to(current, q);
    for (int layer = from_layer; layer >= to_layer; --layer) {
        bool improved = true;
        while (improved) {
            improved = false;
            for (uint32_t peer : graph_[current][static_cast<size_t>(layer)]) {
                const double d = dist_sq_to(peer, q);
                if (d < current_dist) {
                    current_dist = d;
                    current = peer;
                    improved = true;
                }
            }
        }
    }
    return current;
}

std::vector<std::pair<double, size_t>> HnswIndex::search_layer(const Vector& q, size_t entry,
                                                               size_t ef, int layer) const {
    using Entry = std::pair<double, size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> candidates;  // nearest first
    std::priority_queue<Entry> results;                                         // farthest first
    std::vector<char> visited(ids_.size(), 0);

    const double d0 = dist_sq_to(entry, q);
    candidates.emplace(d0, entry);
    results.emplace(d0, entry);
    visited[entry] = 1;

    while (!candidates.empty()) {
        const auto [dist, node] = candidates.top();
        candidates.pop();
        if (dist > results.top().first && results.size() >= ef) break;
        for (uint32_t peer : graph_[node][static_cast<size_t>(layer)]) {
            if (visited[peer]) continue;
            visited[peer] = 1;
            const double d = dist_sq_to(peer, q);
            if (results.size() < ef || d < results.top().first) {
                candidates.emplace(d, peer);
                results.emplace(d, peer);
                if (results.size() > ef) results.pop();
            }
        }
    }

    std::vector<Entry> out;
    out.reserve(results.size());
    while (!results.empty()) {
        out.push_back(results.top());
        results.pop();
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<size_t> HnswIndex::select_neighbors(const Vector& q,
                                                std::vector<std::pair<double, size_t>> candidates,
                                                size_t m) const {
    std::sort(candidates.begin(), candidates.end());
    std::vector<size_t> selected;
    std::vector<std::pair<double, size_t>> pruned;
    for (const auto& [dist, node] : candidates) {
        if (selected.size() >= m) break;
        // Keep a candidate only if no already-selected neighbor is closer to
        // it than the query point is; spreads edges across directions.
        bool keep = true;
        for (size_t s : selected) {
            if (dist_sq(vectors_[node], vectors_[s]) < dist) {
                keep = false;
                break;
            }
        }
        if (keep) {
            selected.push_back(node);
        } else {
            pruned.emplace_back(dist, node);
        }
    }
    for (const auto& [dist, node] : pruned) {
        if (selected.size() >= m) break;
        selected.push_back(node);
    }
    return selected;
}

void HnswIndex::shrink_neighbors(size_t node, int layer) {
    auto& links = graph_[node][static_cast<size_t>(layer)];
    std::vector<std::pair<double, size_t>> candidates;
    candidates.reserve(links.size());
    for (uint32_t peer : links) {
        candidates.emplace_back(dist_sq_to(peer, vectors_[node]), peer);
    }
    auto selected = select_neighbors(vectors_[node], std::move(candidates), max_degree(layer));
    links.clear();
    for (size_t peer : selected) links.push_back(static_cast<uint32_t>(peer));
}

void HnswIndex::seal() {
    if (!sealed_) {
        refine_base_layer();
        sealed_ = true;
    }
}

// One neighborhood-propagation round over the base layer: every node
// re-selects its links from its current neighbors and their neighbors.
// Incremental insertion never offers early nodes the points that arrive
// after them, and that shows up as lost recall near the top of the result
// list; a single propagation pass closes most of those gaps. Cost is
// O(n * deg^2) distance evaluations, acceptable for corpus-scale stores.
void HnswIndex::refine_base_layer() {
    const size_t deg = max_degree(0);
    std::vector<std::vector<uint32_t>> next(ids_.size());
    std::vector<size_t> cand;
    for (size_t node = 0; node < ids_.size(); ++node) {
        cand.clear();
        for (uint32_t peer : graph_[node][0]) {
            cand.push_back(peer);
            for (uint32_t second : graph_[peer][0]) {
                if (second != node) cand.push_back(second);
            }
        }
        std::sort(cand.begin(), cand.end());
        cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
        std::vector<std::pair<double, size_t>> scored;
        scored.reserve(cand.size());
        for (size_t peer : cand) {
            scored.emplace_back(dist_sq_to(peer, vectors_[node]), peer);
        }
        auto selected = select_neighbors(vectors_[node], std::move(scored), deg);
        next[node].assign(selected.begin(), selected.end());
    }
    for (size_t node = 0; node < ids_.size(); ++node) {
        graph_[node][0] = std::move(next[node]);
    }
}

std::vector<SearchHit> HnswIndex::brute_force(const Vector& query, size_t k) const {
    std::vector<SearchHit> hits;
    hits.reserve(ids_.size());
    for (size_t i = 0; i < ids_.size(); ++i) {
        hits.push_back({ids_[i], std::sqrt(dist_sq_to(i, query))});
    }
    std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

std::vector<SearchHit> HnswIndex::search(const Vector& query, size_t k) const {
    if (!sealed_) throw Error(ErrorCode::State, "hnsw: search on unsealed index");
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "hnsw: k must be >= 1");
    if (query.size() != dim_) {
        throw Error(ErrorCode::InvalidArgument,
                    "hnsw: query dimension " + std::to_string(query.size()) + " != index dim " +
                        std::to_string(dim_));
    }
    search_count_.fetch_add(1, std::memory_order_relaxed);
    if (ids_.empty()) return {};
    if (ids_.size() <= params_.ef_search) return brute_force(query, k);

    size_t ep = entry_point_;
    if (max_level_ > 0) ep = greedy_descend(query, ep, max_level_, 1);
    auto found = search_layer(query, ep, std::max(params_.ef_search, k), 0);

    std::vector<SearchHit> hits;
    hits.reserve(found.size());
    for (const auto& [dist, node] : found) {
        hits.push_back({ids_[node], std::sqrt(dist)});
    }
    std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

// ---------------------------------------------------------------------------

void DocStore::put(const std::string& id, DocPayload payload) {
    if (docs_.count(id)) {
        throw Error(ErrorCode::InvalidArgument, "docstore: duplicate id '" + id + "'");
    }
    docs_.emplace(id, std::move(payload));
}

const DocPayload& DocStore::get(const std::string& id) const {
    auto it = docs_.find(id);
    if (it == docs_.end()) {
        throw Error(ErrorCode::NotFound, "docstore: unknown id '" + id + "'");
    }
    return it->second;
}

// ---------------------------------------------------------------------------
// On-disk format: magic, version, then length-prefixed sections. Host byte
// order; the file is a local cache, not an interchange format.

namespace {

constexpr char kMagic[4] = {'M', 'M', 'R', 'G'};
constexpr uint32_t kVersion = 1;

class Writer {
public:
    explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
        if (!out_) throw Error(ErrorCode::Io, "cannot open for writing: " + path.string());
    }
    void raw(const void* p, size_t n) { out_.write(static_cast<const char*>(p), n); }
    void u8(uint8_t v) { raw(&v, 1); }
    void u32(uint32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void i64(int64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }
    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }
    void finish(const std::filesystem::path& path) {
        out_.flush();
        if (!out_) throw Error(ErrorCode::Io, "write failed: " + path.string());
    }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
        if (!in_) throw Error(ErrorCode::Io, "cannot open: " + path.string());
    }
    void raw(void* p, size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) {
            throw Error(ErrorCode::Parse, "index file truncated or corrupt");
        }
    }
    uint8_t u8() { uint8_t v; raw(&v, 1); return v; }
    uint32_t u32() { uint32_t v; raw(&v, 4); return v; }
    uint64_t u64() { uint64_t v; raw(&v, 8); return v; }
    int64_t i64() { int64_t v; raw(&v, 8); return v; }
    double f64() { double v; raw(&v, 8); return v; }
    std::string str() {
        const uint64_t n = u64();
        if (n > (1ULL << 32)) throw Error(ErrorCode::Parse, "index file truncated or corrupt");
        std::string s(n, '\0');
        if (n > 0) raw(s.data(), n);
        return s;
    }

private:
    std::ifstream in_;
};

void write_payload(Writer& w, const DocPayload& payload) {
    if (std::holds_alternative<TextDoc>(payload)) {
        const auto& doc = std::get<TextDoc>(payload);
        w.u8(0);
        w.str(doc.text);
        w.str(doc.source.doc_id);
        w.i64(doc.source.page_no);
    } else {
        const auto& doc = std::get<ImageDoc>(payload);
        w.u8(1);
        w.str(doc.asset.image_id);
        w.str(doc.asset.media_type);
        w.str(doc.asset.source.doc_id);
        w.i64(doc.asset.source.page_no);
        w.u8(doc.summary.has_value() ? 1 : 0);
        if (doc.summary) w.str(*doc.summary);
        w.str(doc.asset.bytes);
    }
}

DocPayload read_payload(Reader& r) {
    const uint8_t tag = r.u8();
    if (tag == 0) {
        TextDoc doc;
        doc.text = r.str();
        doc.source.doc_id = r.str();
        doc.source.page_no = r.i64();
        return doc;
    }
    if (tag == 1) {
        ImageDoc doc;
        doc.asset.image_id = r.str();
        doc.asset.media_type = r.str();
        doc.asset.source.doc_id = r.str();
        doc.asset.source.page_no = r.i64();
        if (r.u8()) doc.summary = r.str();
        doc.asset.bytes = r.str();
        return doc;
    }
    throw Error(ErrorCode::Parse, "index file: unknown payload tag");
}

}  // namespace

struct IndexSerde {
    static void save(const HnswIndex& index, const DocStore& docs,
                     const std::filesystem::path& path) {
        if (!index.sealed_) {
            throw Error(ErrorCode::State, "save_store: index must be sealed");
        }
        if (path.has_parent_path()) {
            std::error_code ec;
            std::filesystem::create_directories(path.parent_path(), ec);
        }
        Writer w(path);
        w.raw(kMagic, 4);
        w.u32(kVersion);
        w.u64(index.dim_);
        w.u64(index.params_.M);
        w.u64(index.params_.ef_construction);
        w.u64(index.params_.ef_search);
        w.u64(index.seed_);
        w.u64(index.ids_.size());
        for (size_t i = 0; i < index.ids_.size(); ++i) {
            w.str(index.ids_[i]);
            for (double v : index.vectors_[i]) w.f64(v);
            w.u32(static_cast<uint32_t>(index.graph_[i].size() - 1));
            for (const auto& layer : index.graph_[i]) {
                w.u32(static_cast<uint32_t>(layer.size()));
                for (uint32_t peer : layer) w.u32(peer);
            }
        }
        w.u64(index.entry_point_);
        w.i64(index.max_level_);
        w.u64(docs.size());
        for (const auto& [id, payload] : docs.all()) {
            w.str(id);
            write_payload(w, payload);
        }
        w.finish(path);
    }

    static VectorStore load(const std::filesystem::path& path) {
        Reader r(path);
        char magic[4];
        r.raw(magic, 4);
        if (std::memcmp(magic, kMagic, 4) != 0) {
            throw Error(ErrorCode::Parse, "not an index file: " + path.string());
        }
        const uint32_t version = r.u32();
        if (version != kVersion) {
            throw Error(ErrorCode::Parse,
                        "index file version " + std::to_string(version) + " unsupported");
        }
        const size_t dim = r.u64();
        HnswParams params;
        params.M = r.u64();
        params.ef_construction = r.u64();
        params.ef_search = r.u64();
        const uint64_t seed = r.u64();

        HnswIndex index(dim, params, seed);
        const uint64_t count = r.u64();
        index.ids_.reserve(count);
        index.vectors_.reserve(count);
        index.graph_.reserve(count);
        for (uint64_t i = 0; i < count; ++i) {
            std::string id = r.str();
            Vector v(dim);
            for (size_t d = 0; d < dim; ++d) v[d] = r.f64();
            const uint32_t level = r.u32();
            std::vector<std::vector<uint32_t>> layers(level + 1);
            for (auto& layer : layers) {
                const uint32_t n = r.u32();
                layer.resize(n);
                for (uint32_t j = 0; j < n; ++j) {
                    layer[j] = r.u32();
                    if (layer[j] >= count) {
                        throw Error(ErrorCode::Parse, "index file truncated or corrupt");
                    }
                }
            }
            index.id_to_node_.emplace(id, index.ids_.size());
            index.ids_.push_back(std::move(id));
            index.vectors_.push_back(std::move(v));
            index.graph_.push_back(std::move(layers));
        }
        index.entry_point_ = r.u64();
        index.max_level_ = static_cast<int>(r.i64());
        if (count > 0 && index.entry_point_ >= count) {
            throw Error(ErrorCode::Parse, "index file truncated or corrupt");
        }
        index.sealed_ = true;

        DocStore docs;
        const uint64_t doc_count = r.u64();
        for (uint64_t i = 0; i < doc_count; ++i) {
            std::string id = r.str();
            docs.put(id, read_payload(r));
        }
        return VectorStore{std::move(index), std::move(docs)};
    }
};

void save_store(const HnswIndex& index, const DocStore& docs,
                const std::filesystem::path& path) {
    IndexSerde::save(index, docs, path);
}

VectorStore load_store(const std::filesystem::path& path) { return IndexSerde::load(path); }

}  // namespace mmrag
