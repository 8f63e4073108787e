#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gidx/index.hpp"

namespace gidx {

struct Judgment {
    std::string query_id;
    std::vector<std::string> answers;   // answer-containment relevance
    std::vector<std::string> gold_docs; // R-precision relevance
};

/// Resolves a unit id of a result list to the text relevance is judged on
/// (phrase surface, passage text, or document text).
using UnitTextFn = std::function<std::string(Granularity, const std::string&)>;

/// Per-query relevance marks for the hits of each result, by normalized
/// answer containment. Results and judgments are matched by query_id; a
/// missing judgment is a validation error.
std::vector<std::vector<char>> relevance_by_answer(const std::vector<RetrievalResult>& results,
                                                   const std::vector<Judgment>& judgments,
                                                   const UnitTextFn& unit_text);

/// Fraction of queries with at least one relevant hit in the top k.
double top_k_accuracy(const std::vector<std::vector<char>>& relevance, std::size_t k);
/// Mean reciprocal rank of the first relevant hit within the top k (0 when none).
double mrr_at_k(const std::vector<std::vector<char>>& relevance, std::size_t k);
/// Mean proportion of relevant hits in the top k; short lists count as
/// irrelevant padding (the denominator stays k).
double precision_at_k(const std::vector<std::vector<char>>& relevance, std::size_t k);

/// Convenience overloads that judge relevance by answer containment first.
double top_k_accuracy(const std::vector<RetrievalResult>& results,
                      const std::vector<Judgment>& judgments, std::size_t k,
                      const UnitTextFn& unit_text);
double mrr_at_k(const std::vector<RetrievalResult>& results,
                const std::vector<Judgment>& judgments, std::size_t k,
                const UnitTextFn& unit_text);
double precision_at_k(const std::vector<RetrievalResult>& results,
                      const std::vector<Judgment>& judgments, std::size_t k,
                      const UnitTextFn& unit_text);

/// Mean over queries of |top-R hits ∩ gold_docs| / R with R = |gold_docs|,
/// over document-granularity results. Empty gold_docs is a validation error.
double r_precision(const std::vector<RetrievalResult>& doc_results,
                   const std::vector<Judgment>& judgments);

} // namespace gidx
