#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gidx/corpus.hpp"
#include "gidx/quantizer.hpp"

namespace gidx {

enum class Granularity { phrase, passage, document };
enum class ScoreMode { exact, quantized };

const char* to_string(Granularity g);
Granularity granularity_from_string(std::string_view s);

struct Hit {
    std::string unit_id;
    float score = 0.0f;
};

struct RetrievalResult {
    Granularity granularity = Granularity::phrase;
    std::string query_id;
    std::vector<Hit> hits; // scores non-increasing, unit ids unique
};

struct IndexStats {
    std::size_t num_active = 0;
    double vec_per_passage = 0.0;
    std::size_t bytes = 0;
};

/// Flat phrase-vector index. Search ranks phrases by inner product; passage
/// and document rankings aggregate phrase scores by max. Rows whose filter
/// score falls below tau are inactive: never returned, never aggregated.
///
/// The row store is immutable and shared; tau changes produce a new logical
/// view over the same store. Concurrent searches are safe.
class PhraseIndex {
public:
    PhraseIndex() = default;

    static PhraseIndex build(std::vector<Phrase> phrases, std::vector<float> vectors,
                             std::uint32_t dim, float tau = 0.0f);

    /// New view over the same rows with a different filter threshold.
    PhraseIndex with_tau(float tau) const;

    /// Copy with inactive rows dropped (codes and row maps rebuilt).
    PhraseIndex compacted() const;

    /// Encodes every row with the model and enables quantized search.
    void attach_quantizer(QuantizerModel model);
    /// Attaches a model with precomputed codes (row-major num_rows x M).
    void attach_quantizer(QuantizerModel model, std::vector<std::uint16_t> codes);

    RetrievalResult search_phrases(std::span<const float> query, std::size_t k,
                                   ScoreMode mode = ScoreMode::exact,
                                   std::string query_id = {}) const;
    RetrievalResult search_passages(std::span<const float> query, std::size_t k,
                                    ScoreMode mode = ScoreMode::exact,
                                    std::string query_id = {}) const;
    RetrievalResult search_documents(std::span<const float> query, std::size_t k,
                                     ScoreMode mode = ScoreMode::exact,
                                     std::string query_id = {}) const;

    IndexStats stats() const;

    std::uint32_t dim() const;
    std::size_t num_rows() const;
    std::size_t num_active() const;
    float tau() const { return tau_; }
    bool quantized() const { return quantizer_ != nullptr; }
    const QuantizerModel* quantizer() const { return quantizer_.get(); }

    const Phrase& phrase_at(std::size_t row) const;
    std::span<const float> vector_at(std::size_t row) const;
    std::span<const std::uint16_t> codes_at(std::size_t row) const;
    bool active(std::size_t row) const { return active_[row] != 0; }

    /// Row index for a phrase id, if present.
    std::optional<std::size_t> row_of(std::int64_t phrase_id) const;
    /// All rows of one passage, in row order.
    std::span<const std::size_t> rows_of_passage(const std::string& passage_id) const;
    /// Distinct passage ids across all rows, in first-seen row order.
    const std::vector<std::string>& distinct_passages() const;
    const std::vector<std::string>& distinct_documents() const;

    /// Vector used for scoring under the given mode: the raw row, or its
    /// quantizer reconstruction.
    std::vector<float> scoring_vector(std::size_t row, ScoreMode mode) const;

    /// Top-k active rows by score, (score desc, phrase_id asc). The row-level
    /// counterpart of search_phrases, for callers that need provenance.
    std::vector<std::pair<double, std::size_t>> top_active_rows(std::span<const float> query,
                                                                std::size_t k,
                                                                ScoreMode mode) const;

private:
    struct Store {
        std::uint32_t dim = 0;
        std::vector<float> vectors;
        std::vector<Phrase> meta;
        std::unordered_map<std::int64_t, std::size_t> row_by_phrase_id;
        std::unordered_map<std::string, std::vector<std::size_t>> rows_by_passage;
        std::vector<std::string> passages; // first-seen order
        std::vector<std::string> documents;
    };

    struct ScoredRow {
        double score;
        std::size_t row;
    };

    std::vector<ScoredRow> scan(std::span<const float> query, ScoreMode mode) const;
    RetrievalResult aggregate_search(std::span<const float> query, std::size_t k, ScoreMode mode,
                                     std::string query_id, Granularity granularity) const;

    std::shared_ptr<const Store> store_;
    float tau_ = 0.0f;
    std::vector<std::uint8_t> active_;
    std::size_t num_active_ = 0;
    std::shared_ptr<const QuantizerModel> quantizer_;
    std::shared_ptr<const std::vector<std::uint16_t>> codes_;
};

} // namespace gidx
