#include "hymirec/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "hymirec/io.hpp"
#include "hymirec/kernels.hpp"
#include "hymirec/numerics.hpp"
#include "hymirec/threadpool.hpp"

namespace hymirec {
namespace {

// Strict total order on candidates: higher score first, lower id on ties.
inline bool better(float score_a, std::uint64_t id_a, float score_b, std::uint64_t id_b) {
    if (score_a != score_b) return score_a > score_b;
    return id_a < id_b;
}

}  // namespace

RetrievalIndex RetrievalIndex::build(const std::vector<std::uint64_t>& ids,
                                     const EmbeddingArray& embs) {
    if (ids.size() != embs.size()) throw data_error("index build: id/embedding mismatch");
    RetrievalIndex index;
    index.dim_ = embs.dim;
    index.ids_ = ids;
    index.vecs_.resize(ids.size() * static_cast<std::size_t>(embs.dim));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const double n = norm2(embs[i]);
        if (n == 0.0)
            throw data_error("index build: zero-norm embedding for id " + std::to_string(ids[i]));
        const double inv = 1.0 / n;
        for (int t = 0; t < embs.dim; ++t)
            index.vecs_[i * static_cast<std::size_t>(embs.dim) + t] =
                static_cast<float>(embs.ptr(i)[t] * inv);
    }
    index.index_ids();
    return index;
}

RetrievalIndex RetrievalIndex::load(const std::string& path) {
    RetrievalIndex index;
    read_index(path, index.ids_, index.vecs_, index.dim_);
    for (std::size_t i = 0; i < index.ids_.size(); ++i) {
        const float* v = index.vec(i);
        const float n2 = kern::dot(v, v, static_cast<std::size_t>(index.dim_));
        if (std::abs(n2 - 1.0f) > 2e-6f)
            throw data_error(path + ": stored vector is not unit-norm");
    }
    index.index_ids();
    return index;
}

void RetrievalIndex::index_ids() {
    pos_of_.clear();
    pos_of_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i)
        if (!pos_of_.emplace(ids_[i], i).second)
            throw data_error("index: duplicate item id " + std::to_string(ids_[i]));
}

std::size_t RetrievalIndex::position_of(std::uint64_t id) const {
    const auto it = pos_of_.find(id);
    if (it == pos_of_.end()) throw data_error("index: unknown item id " + std::to_string(id));
    return it->second;
}

void RetrievalIndex::save(const std::string& path) const { write_index(path, ids_, vecs_, dim_); }

InterestSet InterestSet::make(std::uint64_t user_id, const Mat& interests, std::uint64_t version) {
    if (interests.rows < 1) throw data_error("interest set: empty");
    InterestSet set;
    set.user_id = user_id;
    set.interests = interests;
    set.version = version;
    for (int j = 0; j < interests.rows; ++j) {
        const double n = norm2(set.interests.row_view(j));
        if (n == 0.0) throw numeric_error("interest set: zero-norm interest");
        kern::scale(set.interests.row(j), 1.0 / n, static_cast<std::size_t>(interests.cols));
    }
    set.flat.resize(static_cast<std::size_t>(interests.rows) * interests.cols);
    for (int j = 0; j < interests.rows; ++j)
        for (int t = 0; t < interests.cols; ++t)
            set.flat[static_cast<std::size_t>(j) * interests.cols + t] =
                static_cast<float>(set.interests.at(j, t));
    return set;
}

double score(VecView item, const InterestSet& interests) {
    if (interests.interests.rows < 1) throw data_error("score: empty interest set");
    if (static_cast<int>(item.size()) != interests.interests.cols)
        throw data_error("score: dimension mismatch");
    double best = -2.0;
    for (int j = 0; j < interests.interests.rows; ++j)
        best = std::max(best, cosine_similarity(item, interests.interests.row_view(j)));
    return best;
}

namespace {

// Fixed-capacity worst-on-top heap under the (score desc, id asc) order.
class TopkHeap {
  public:
    explicit TopkHeap(std::size_t k) : k_(k) {}

    void offer(std::uint64_t id, float s) {
        if (heap_.size() < k_) {
            heap_.push_back({id, s});
            std::push_heap(heap_.begin(), heap_.end(), cmp);
        } else if (better(s, id, heap_.front().score, heap_.front().id)) {
            std::pop_heap(heap_.begin(), heap_.end(), cmp);
            heap_.back() = {id, s};
            std::push_heap(heap_.begin(), heap_.end(), cmp);
        }
    }

    std::vector<ScoredItem> sorted() && {
        std::sort(heap_.begin(), heap_.end(), [](const ScoredItem& a, const ScoredItem& b) {
            return better(a.score, a.id, b.score, b.id);
        });
        return std::move(heap_);
    }

  private:
    // "a compares before b" = a is better; heap keeps the worst on top
    static bool cmp(const ScoredItem& a, const ScoredItem& b) {
        return better(a.score, a.id, b.score, b.id);
    }
    std::size_t k_;
    std::vector<ScoredItem> heap_;
};

float max_score_f32(const RetrievalIndex& index, const InterestSet& interests, std::size_t i) {
    const int d = index.dim();
    const int s = interests.interests.rows;
    float best = -2.0f;
    for (int j = 0; j < s; ++j) {
        const float sc = kern::dot(index.vec(i), interests.flat.data() + static_cast<std::size_t>(j) * d,
                                   static_cast<std::size_t>(d));
        if (sc > best) best = sc;
    }
    return best;
}

}  // namespace

std::vector<ScoredItem> retrieve_topk(const RetrievalIndex& index, const InterestSet& interests,
                                      int k) {
    if (k <= 0) throw config_error("retrieve_topk: K must be positive");
    if (static_cast<std::size_t>(k) > index.size())
        throw data_error("retrieve_topk: K exceeds index size");
    if (interests.interests.cols != index.dim()) throw data_error("retrieve_topk: dim mismatch");

    const int s = interests.interests.rows;
    const int d = index.dim();
    const std::size_t n = index.size();

    // Per-query exact top-K. Chunked scans with per-chunk heaps merged in
    // chunk order keep the result independent of the thread count.
    const std::size_t grain = 4096;
    const std::size_t chunks = chunk_count(n, grain);
    std::vector<std::vector<ScoredItem>> partial(chunks * s);
    parallel_for(n, grain, [&](std::size_t lo, std::size_t hi) {
        const std::size_t c = lo / grain;
        for (int j = 0; j < s; ++j) {
            TopkHeap heap(static_cast<std::size_t>(k));
            const float* q = interests.flat.data() + static_cast<std::size_t>(j) * d;
            for (std::size_t i = lo; i < hi; ++i)
                heap.offer(index.ids()[i], kern::dot(index.vec(i), q, static_cast<std::size_t>(d)));
            partial[c * s + j] = std::move(heap).sorted();
        }
    });

    std::unordered_set<std::uint64_t> dedup;
    std::vector<std::size_t> candidates;  // index positions, insertion-ordered

    for (int j = 0; j < s; ++j) {
        TopkHeap heap(static_cast<std::size_t>(k));
        for (std::size_t c = 0; c < chunks; ++c)
            for (const ScoredItem& it : partial[c * s + j]) heap.offer(it.id, it.score);
        for (const ScoredItem& it : std::move(heap).sorted())
            if (dedup.insert(it.id).second) candidates.push_back(index.position_of(it.id));
    }

    // Deduplicated union rescored with the max-over-queries rule.
    TopkHeap final_heap(static_cast<std::size_t>(k));
    for (const std::size_t pos : candidates)
        final_heap.offer(index.ids()[pos], max_score_f32(index, interests, pos));
    return std::move(final_heap).sorted();
}

std::vector<SessionLogEntry> serve_session(
    const std::vector<std::uint64_t>& events,
    const std::function<Mat(std::span<const std::uint64_t>)>& recompute_interests,
    const RetrievalIndex& index, int refresh_period, int k) {
    if (refresh_period < 1) throw config_error("serve_session: refresh period must be >= 1");
    if (k < 1) throw config_error("serve_session: K must be >= 1");

    std::vector<SessionLogEntry> log;
    std::vector<std::uint64_t> history;
    std::unordered_set<std::uint64_t> interacted;
    InterestSet current;

    for (std::size_t e = 0; e < events.size(); ++e) {
        if (e % static_cast<std::size_t>(refresh_period) == 0) {
            const Mat interests =
                recompute_interests(std::span<const std::uint64_t>(history.data(), history.size()));
            current = InterestSet::make(0, interests, e);
        }

        // Over-fetch so the exclusion filter still leaves K items.
        const int fetch = static_cast<int>(
            std::min<std::size_t>(index.size(), static_cast<std::size_t>(k) + interacted.size()));
        std::vector<ScoredItem> ranked = retrieve_topk(index, current, fetch);
        SessionLogEntry entry;
        entry.event_index = e;
        entry.version = current.version;
        for (const ScoredItem& it : ranked) {
            if (interacted.count(it.id)) continue;
            entry.items.push_back(it);
            if (static_cast<int>(entry.items.size()) == k) break;
        }
        log.push_back(std::move(entry));

        history.push_back(events[e]);
        interacted.insert(events[e]);
    }
    return log;
}

}  // namespace hymirec
