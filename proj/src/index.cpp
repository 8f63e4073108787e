#include "gidx/index.hpp"

#include <algorithm>
#include <cmath>

#include "gidx/error.hpp"

namespace gidx {

const char* to_string(Granularity g) {
    switch (g) {
        case Granularity::phrase: return "phrase";
        case Granularity::passage: return "passage";
        case Granularity::document: return "document";
    }
    return "?";
}

Granularity granularity_from_string(std::string_view s) {
    if (s == "phrase") return Granularity::phrase;
    if (s == "passage") return Granularity::passage;
    if (s == "document") return Granularity::document;
    throw ValidationError("unknown granularity \"" + std::string(s) + "\"");
}

PhraseIndex PhraseIndex::build(std::vector<Phrase> phrases, std::vector<float> vectors,
                               std::uint32_t dim, float tau) {
    if (dim == 0) {
        throw ValidationError("index dim must be positive");
    }
    if (vectors.size() != phrases.size() * static_cast<std::size_t>(dim)) {
        throw ValidationError("vector row count (" + std::to_string(vectors.size() / dim) +
                              ") does not match phrase count (" + std::to_string(phrases.size()) +
                              ")");
    }
    auto store = std::make_shared<Store>();
    store->dim = dim;
    store->vectors = std::move(vectors);
    store->meta = std::move(phrases);
    std::unordered_map<std::string, bool> seen_doc;
    for (std::size_t r = 0; r < store->meta.size(); ++r) {
        const auto& ph = store->meta[r];
        if (!store->row_by_phrase_id.emplace(ph.phrase_id, r).second) {
            throw ValidationError("duplicate phrase id " + std::to_string(ph.phrase_id));
        }
        auto [it, fresh] = store->rows_by_passage.try_emplace(ph.passage_id);
        if (fresh) {
            store->passages.push_back(ph.passage_id);
        }
        it->second.push_back(r);
        if (seen_doc.emplace(ph.doc_id, true).second) {
            store->documents.push_back(ph.doc_id);
        }
    }
    PhraseIndex idx;
    idx.store_ = std::move(store);
    idx.tau_ = tau;
    idx.active_.resize(idx.store_->meta.size());
    idx.num_active_ = 0;
    for (std::size_t r = 0; r < idx.active_.size(); ++r) {
        idx.active_[r] = idx.store_->meta[r].filter_score >= tau ? 1 : 0;
        idx.num_active_ += idx.active_[r];
    }
    return idx;
}

PhraseIndex PhraseIndex::with_tau(float tau) const {
    PhraseIndex view = *this;
    view.tau_ = tau;
    view.num_active_ = 0;
    for (std::size_t r = 0; r < view.active_.size(); ++r) {
        view.active_[r] = store_->meta[r].filter_score >= tau ? 1 : 0;
        view.num_active_ += view.active_[r];
    }
    return view;
}

PhraseIndex PhraseIndex::compacted() const {
    std::vector<Phrase> phrases;
    std::vector<float> vectors;
    std::vector<std::uint16_t> codes;
    phrases.reserve(num_active_);
    vectors.reserve(num_active_ * store_->dim);
    for (std::size_t r = 0; r < store_->meta.size(); ++r) {
        if (!active_[r]) {
            continue;
        }
        phrases.push_back(store_->meta[r]);
        const auto v = vector_at(r);
        vectors.insert(vectors.end(), v.begin(), v.end());
        if (quantizer_) {
            const auto c = codes_at(r);
            codes.insert(codes.end(), c.begin(), c.end());
        }
    }
    PhraseIndex out = build(std::move(phrases), std::move(vectors), store_->dim, tau_);
    if (quantizer_) {
        out.attach_quantizer(*quantizer_, std::move(codes));
    }
    return out;
}

void PhraseIndex::attach_quantizer(QuantizerModel model) {
    if (!model.trained()) {
        throw StateError("cannot attach an untrained quantizer");
    }
    std::vector<std::uint16_t> codes;
    codes.reserve(num_rows() * model.num_subspaces());
    for (std::size_t r = 0; r < num_rows(); ++r) {
        const auto c = model.encode(vector_at(r));
        codes.insert(codes.end(), c.begin(), c.end());
    }
    attach_quantizer(std::move(model), std::move(codes));
}

void PhraseIndex::attach_quantizer(QuantizerModel model, std::vector<std::uint16_t> codes) {
    if (!model.trained()) {
        throw StateError("cannot attach an untrained quantizer");
    }
    if (model.dim() != dim()) {
        throw ValidationError("quantizer dim does not match index dim");
    }
    if (codes.size() != num_rows() * static_cast<std::size_t>(model.num_subspaces())) {
        throw ValidationError("code row count does not match index row count");
    }
    quantizer_ = std::make_shared<QuantizerModel>(std::move(model));
    codes_ = std::make_shared<std::vector<std::uint16_t>>(std::move(codes));
}

std::uint32_t PhraseIndex::dim() const {
    return store_ ? store_->dim : 0;
}

std::size_t PhraseIndex::num_rows() const {
    return store_ ? store_->meta.size() : 0;
}

std::size_t PhraseIndex::num_active() const {
    return num_active_;
}

const Phrase& PhraseIndex::phrase_at(std::size_t row) const {
    return store_->meta[row];
}

std::span<const float> PhraseIndex::vector_at(std::size_t row) const {
    return {store_->vectors.data() + row * store_->dim, store_->dim};
}

std::span<const std::uint16_t> PhraseIndex::codes_at(std::size_t row) const {
    if (!quantizer_) {
        throw StateError("index has no attached quantizer");
    }
    const std::size_t m = quantizer_->num_subspaces();
    return {codes_->data() + row * m, m};
}

std::optional<std::size_t> PhraseIndex::row_of(std::int64_t phrase_id) const {
    auto it = store_->row_by_phrase_id.find(phrase_id);
    if (it == store_->row_by_phrase_id.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::span<const std::size_t> PhraseIndex::rows_of_passage(const std::string& passage_id) const {
    auto it = store_->rows_by_passage.find(passage_id);
    if (it == store_->rows_by_passage.end()) {
        return {};
    }
    return it->second;
}

const std::vector<std::string>& PhraseIndex::distinct_passages() const {
    return store_->passages;
}

const std::vector<std::string>& PhraseIndex::distinct_documents() const {
    return store_->documents;
}

std::vector<float> PhraseIndex::scoring_vector(std::size_t row, ScoreMode mode) const {
    if (mode == ScoreMode::exact) {
        const auto v = vector_at(row);
        return {v.begin(), v.end()};
    }
    return quantizer_->reconstruct(codes_at(row));
}

std::vector<PhraseIndex::ScoredRow> PhraseIndex::scan(std::span<const float> query,
                                                      ScoreMode mode) const {
    if (!store_) {
        throw StateError("search on an empty index");
    }
    if (query.size() != store_->dim) {
        throw ValidationError("query dim (" + std::to_string(query.size()) +
                              ") does not match index dim (" + std::to_string(store_->dim) + ")");
    }
    if (mode == ScoreMode::quantized && !quantizer_) {
        throw StateError("quantized search requested but no quantizer attached");
    }
    std::vector<ScoredRow> scored;
    scored.reserve(num_active_);
    if (mode == ScoreMode::exact) {
        for (std::size_t r = 0; r < store_->meta.size(); ++r) {
            if (!active_[r]) {
                continue;
            }
            const float* v = store_->vectors.data() + r * store_->dim;
            double s = 0.0;
            for (std::uint32_t j = 0; j < store_->dim; ++j) {
                s += static_cast<double>(v[j]) * query[j];
            }
            scored.push_back({s, r});
        }
    } else {
        const AdcTable table = quantizer_->adc_table(query);
        for (std::size_t r = 0; r < store_->meta.size(); ++r) {
            if (!active_[r]) {
                continue;
            }
            scored.push_back({table.score(codes_at(r)), r});
        }
    }
    return scored;
}

std::vector<std::pair<double, std::size_t>> PhraseIndex::top_active_rows(
    std::span<const float> query, std::size_t k, ScoreMode mode) const {
    if (k < 1) {
        throw ValidationError("k must be >= 1");
    }
    auto scored = scan(query, mode);
    const std::size_t take = std::min(k, scored.size());
    auto better = [this](const ScoredRow& a, const ScoredRow& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return store_->meta[a.row].phrase_id < store_->meta[b.row].phrase_id;
    };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                      scored.end(), better);
    std::vector<std::pair<double, std::size_t>> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.emplace_back(scored[i].score, scored[i].row);
    }
    return out;
}

RetrievalResult PhraseIndex::search_phrases(std::span<const float> query, std::size_t k,
                                            ScoreMode mode, std::string query_id) const {
    if (k < 1) {
        throw ValidationError("k must be >= 1");
    }
    auto scored = scan(query, mode);
    const std::size_t take = std::min(k, scored.size());
    auto better = [this](const ScoredRow& a, const ScoredRow& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return store_->meta[a.row].phrase_id < store_->meta[b.row].phrase_id;
    };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                      scored.end(), better);
    RetrievalResult res;
    res.granularity = Granularity::phrase;
    res.query_id = std::move(query_id);
    res.hits.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        res.hits.push_back({std::to_string(store_->meta[scored[i].row].phrase_id),
                            static_cast<float>(scored[i].score)});
    }
    return res;
}

RetrievalResult PhraseIndex::aggregate_search(std::span<const float> query, std::size_t k,
                                              ScoreMode mode, std::string query_id,
                                              Granularity granularity) const {
    if (k < 1) {
        throw ValidationError("k must be >= 1");
    }
    auto scored = scan(query, mode);
    auto better = [this](const ScoredRow& a, const ScoredRow& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return store_->meta[a.row].phrase_id < store_->meta[b.row].phrase_id;
    };
    auto unit_of = [&](std::size_t row) -> const std::string& {
        return granularity == Granularity::passage ? store_->meta[row].passage_id
                                                   : store_->meta[row].doc_id;
    };

    // Retrieve 2k phrases, deduplicate by unit keeping the max, and double
    // the candidate count until k unique units are found or the active rows
    // are exhausted. The ranked phrase stream visits each unit first at its
    // max-scoring phrase, so first occurrences already carry Eq.-3 scores.
    RetrievalResult res;
    res.granularity = granularity;
    res.query_id = std::move(query_id);
    for (std::size_t m = 2 * k;; m *= 2) {
        const std::size_t take = std::min(m, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                          scored.end(), better);
        res.hits.clear();
        std::unordered_map<std::string, bool> seen;
        for (std::size_t i = 0; i < take && res.hits.size() < k; ++i) {
            const auto& unit = unit_of(scored[i].row);
            if (seen.emplace(unit, true).second) {
                res.hits.push_back({unit, static_cast<float>(scored[i].score)});
            }
        }
        if (res.hits.size() >= k || take == scored.size()) {
            return res;
        }
    }
}

RetrievalResult PhraseIndex::search_passages(std::span<const float> query, std::size_t k,
                                             ScoreMode mode, std::string query_id) const {
    return aggregate_search(query, k, mode, std::move(query_id), Granularity::passage);
}

RetrievalResult PhraseIndex::search_documents(std::span<const float> query, std::size_t k,
                                              ScoreMode mode, std::string query_id) const {
    return aggregate_search(query, k, mode, std::move(query_id), Granularity::document);
}

IndexStats PhraseIndex::stats() const {
    IndexStats s;
    s.num_active = num_active_;
    const std::size_t num_passages = store_ ? store_->passages.size() : 0;
    s.vec_per_passage = num_passages == 0
                            ? 0.0
                            : static_cast<double>(num_active_) / static_cast<double>(num_passages);
    if (quantizer_) {
        s.bytes = quantizer_->memory_footprint(num_active_);
    } else {
        s.bytes = num_active_ * static_cast<std::size_t>(dim()) * 4;
    }
    return s;
}

} // namespace gidx
