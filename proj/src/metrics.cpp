#include "gidx/metrics.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "gidx/error.hpp"
#include "gidx/text.hpp"

namespace gidx {

namespace {

std::unordered_map<std::string, const Judgment*> judgment_map(
    const std::vector<Judgment>& judgments) {
    std::unordered_map<std::string, const Judgment*> m;
    for (const auto& j : judgments) {
        m[j.query_id] = &j;
    }
    return m;
}

const Judgment& judgment_for(const std::unordered_map<std::string, const Judgment*>& m,
                             const RetrievalResult& r) {
    auto it = m.find(r.query_id);
    if (it == m.end()) {
        throw ValidationError("no judgment for query \"" + r.query_id + "\"");
    }
    return *it->second;
}

void check_k(std::size_t k) {
    if (k < 1) {
        throw ValidationError("k must be >= 1");
    }
}

} // namespace

std::vector<std::vector<char>> relevance_by_answer(const std::vector<RetrievalResult>& results,
                                                   const std::vector<Judgment>& judgments,
                                                   const UnitTextFn& unit_text) {
    const auto m = judgment_map(judgments);
    std::vector<std::vector<char>> rel;
    rel.reserve(results.size());
    for (const auto& r : results) {
        const auto& j = judgment_for(m, r);
        std::vector<char> marks;
        marks.reserve(r.hits.size());
        for (const auto& hit : r.hits) {
            const std::string unit = unit_text(r.granularity, hit.unit_id);
            const bool relevant =
                std::any_of(j.answers.begin(), j.answers.end(), [&](const std::string& a) {
                    return text::contains_normalized(unit, a);
                });
            marks.push_back(relevant ? 1 : 0);
        }
        rel.push_back(std::move(marks));
    }
    return rel;
}

double top_k_accuracy(const std::vector<std::vector<char>>& relevance, std::size_t k) {
    check_k(k);
    if (relevance.empty()) {
        throw ValidationError("no queries to evaluate");
    }
    std::size_t hits = 0;
    for (const auto& marks : relevance) {
        const std::size_t upto = std::min(k, marks.size());
        for (std::size_t i = 0; i < upto; ++i) {
            if (marks[i]) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(relevance.size());
}

double mrr_at_k(const std::vector<std::vector<char>>& relevance, std::size_t k) {
    check_k(k);
    if (relevance.empty()) {
        throw ValidationError("no queries to evaluate");
    }
    double total = 0.0;
    for (const auto& marks : relevance) {
        const std::size_t upto = std::min(k, marks.size());
        for (std::size_t i = 0; i < upto; ++i) {
            if (marks[i]) {
                total += 1.0 / static_cast<double>(i + 1);
                break;
            }
        }
    }
    return total / static_cast<double>(relevance.size());
}

double precision_at_k(const std::vector<std::vector<char>>& relevance, std::size_t k) {
    check_k(k);
    if (relevance.empty()) {
        throw ValidationError("no queries to evaluate");
    }
    double total = 0.0;
    for (const auto& marks : relevance) {
        const std::size_t upto = std::min(k, marks.size());
        std::size_t rel = 0;
        for (std::size_t i = 0; i < upto; ++i) {
            rel += marks[i] ? 1 : 0;
        }
        total += static_cast<double>(rel) / static_cast<double>(k);
    }
    return total / static_cast<double>(relevance.size());
}

double top_k_accuracy(const std::vector<RetrievalResult>& results,
                      const std::vector<Judgment>& judgments, std::size_t k,
                      const UnitTextFn& unit_text) {
    return top_k_accuracy(relevance_by_answer(results, judgments, unit_text), k);
}

double mrr_at_k(const std::vector<RetrievalResult>& results,
                const std::vector<Judgment>& judgments, std::size_t k,
                const UnitTextFn& unit_text) {
    return mrr_at_k(relevance_by_answer(results, judgments, unit_text), k);
}

double precision_at_k(const std::vector<RetrievalResult>& results,
                      const std::vector<Judgment>& judgments, std::size_t k,
                      const UnitTextFn& unit_text) {
    return precision_at_k(relevance_by_answer(results, judgments, unit_text), k);
}

double r_precision(const std::vector<RetrievalResult>& doc_results,
                   const std::vector<Judgment>& judgments) {
    if (doc_results.empty()) {
        throw ValidationError("no queries to evaluate");
    }
    const auto m = judgment_map(judgments);
    double total = 0.0;
    for (const auto& r : doc_results) {
        const auto& j = judgment_for(m, r);
        const std::set<std::string> gold(j.gold_docs.begin(), j.gold_docs.end());
        if (gold.empty()) {
            throw ValidationError("r_precision: query \"" + r.query_id + "\" has no gold docs");
        }
        const std::size_t rr = gold.size();
        std::size_t found = 0;
        for (std::size_t i = 0; i < std::min(rr, r.hits.size()); ++i) {
            if (gold.contains(r.hits[i].unit_id)) {
                ++found;
            }
        }
        total += static_cast<double>(found) / static_cast<double>(rr);
    }
    return total / static_cast<double>(doc_results.size());
}

} // namespace gidx
