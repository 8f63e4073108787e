#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gidx/corpus.hpp"

namespace gidx {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// Inverted index over passages with Lucene-style smoothed idf
/// (ln(1 + (N - df + 0.5)/(df + 0.5)), always non-negative).
/// Terms are normalized word tokens. Immutable after build.
class Bm25Index {
public:
    static Bm25Index build(const std::vector<Passage>& passages, Bm25Params params = {});

    double score(std::span<const std::string> query_terms, const std::string& passage_id) const;

    /// All passages with positive score against the query, ordered by
    /// (score desc, passage_id asc), truncated to n (0 = no limit).
    std::vector<std::pair<std::string, double>> rank(std::string_view query,
                                                     std::size_t n = 0) const;

    double idf(const std::string& term) const;
    double avgdl() const { return avgdl_; }
    std::size_t num_passages() const { return passage_ids_.size(); }
    const Bm25Params& params() const { return params_; }

    /// Normalized terms of a free-text query.
    static std::vector<std::string> query_terms(std::string_view query);

private:
    std::size_t passage_index(const std::string& passage_id) const;

    Bm25Params params_;
    std::vector<std::string> passage_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    double avgdl_ = 0.0;
    std::unordered_map<std::string, std::size_t> id_to_index_;
    // term -> (passage index, term frequency), passage indices ascending
    std::unordered_map<std::string, std::vector<std::pair<std::uint32_t, std::uint32_t>>> postings_;
};

/// Top-n passages by BM25 against the question whose text does not contain
/// any answer (normalized substring check). May return fewer than n.
std::vector<std::string> mine_bm25_negatives(const Bm25Index& index, const Corpus& corpus,
                                             std::string_view question,
                                             std::span<const std::string> answers, std::size_t n);

/// Up to n passages other than the gold one that contain the answer string,
/// in corpus order.
std::vector<std::string> mine_same_phrase_negatives(const Corpus& corpus, std::string_view answer,
                                                    const std::string& gold_passage_id,
                                                    std::size_t n);

} // namespace gidx
