#include "gidx/bm25.hpp"

#include <algorithm>
#include <cmath>

#include "gidx/error.hpp"
#include "gidx/text.hpp"

namespace gidx {

std::vector<std::string> Bm25Index::query_terms(std::string_view query) {
    std::vector<std::string> terms;
    for (const auto& w : text::words(query)) {
        auto t = text::normalize(w);
        if (!t.empty()) {
            terms.push_back(std::move(t));
        }
    }
    return terms;
}

Bm25Index Bm25Index::build(const std::vector<Passage>& passages, Bm25Params params) {
    if (passages.empty()) {
        throw ValidationError("BM25 index requires a nonempty passage list");
    }
    if (params.k1 <= 0.0 || params.b < 0.0 || params.b > 1.0) {
        throw ValidationError("BM25 parameters require k1 > 0 and 0 <= b <= 1");
    }
    Bm25Index idx;
    idx.params_ = params;
    idx.passage_ids_.reserve(passages.size());
    idx.doc_lengths_.reserve(passages.size());
    std::uint64_t total_len = 0;
    for (std::uint32_t i = 0; i < passages.size(); ++i) {
        const auto& p = passages[i];
        if (!idx.id_to_index_.emplace(p.passage_id, i).second) {
            throw ValidationError("duplicate passage id \"" + p.passage_id + "\"");
        }
        idx.passage_ids_.push_back(p.passage_id);
        idx.doc_lengths_.push_back(static_cast<std::uint32_t>(p.word_tokens.size()));
        total_len += p.word_tokens.size();

        std::unordered_map<std::string, std::uint32_t> tf;
        for (const auto& w : p.word_tokens) {
            auto t = text::normalize(w);
            if (!t.empty()) {
                ++tf[t];
            }
        }
        for (auto& [term, count] : tf) {
            idx.postings_[term].emplace_back(i, count);
        }
    }
    for (auto& [term, plist] : idx.postings_) {
        std::sort(plist.begin(), plist.end());
    }
    idx.avgdl_ = static_cast<double>(total_len) / static_cast<double>(passages.size());
    return idx;
}

double Bm25Index::idf(const std::string& term) const {
    auto it = postings_.find(term);
    const double df = it == postings_.end() ? 0.0 : static_cast<double>(it->second.size());
    const double n = static_cast<double>(passage_ids_.size());
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

std::size_t Bm25Index::passage_index(const std::string& passage_id) const {
    auto it = id_to_index_.find(passage_id);
    if (it == id_to_index_.end()) {
        throw ValidationError("unknown passage id \"" + passage_id + "\"");
    }
    return it->second;
}

double Bm25Index::score(std::span<const std::string> query_terms,
                        const std::string& passage_id) const {
    const std::size_t p = passage_index(passage_id);
    const double len = static_cast<double>(doc_lengths_[p]);
    const double norm = params_.k1 * (1.0 - params_.b + params_.b * len / avgdl_);
    double s = 0.0;
    for (const auto& term : query_terms) {
        auto it = postings_.find(term);
        if (it == postings_.end()) {
            continue;
        }
        const auto& plist = it->second;
        auto pos = std::lower_bound(plist.begin(), plist.end(),
                                    std::make_pair(static_cast<std::uint32_t>(p), 0u));
        if (pos == plist.end() || pos->first != p) {
            continue;
        }
        const double tf = static_cast<double>(pos->second);
        s += idf(term) * tf * (params_.k1 + 1.0) / (tf + norm);
    }
    return s;
}

std::vector<std::pair<std::string, double>> Bm25Index::rank(std::string_view query,
                                                            std::size_t n) const {
    const auto terms = query_terms(query);
    std::unordered_map<std::uint32_t, double> acc;
    for (const auto& term : terms) {
        auto it = postings_.find(term);
        if (it == postings_.end()) {
            continue;
        }
        const double term_idf = idf(term);
        for (const auto& [p, tf_u] : it->second) {
            const double len = static_cast<double>(doc_lengths_[p]);
            const double norm = params_.k1 * (1.0 - params_.b + params_.b * len / avgdl_);
            const double tf = static_cast<double>(tf_u);
            acc[p] += term_idf * tf * (params_.k1 + 1.0) / (tf + norm);
        }
    }
    std::vector<std::pair<std::string, double>> out;
    out.reserve(acc.size());
    for (const auto& [p, s] : acc) {
        if (s > 0.0) {
            out.emplace_back(passage_ids_[p], s);
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    if (n > 0 && out.size() > n) {
        out.resize(n);
    }
    return out;
}

std::vector<std::string> mine_bm25_negatives(const Bm25Index& index, const Corpus& corpus,
                                             std::string_view question,
                                             std::span<const std::string> answers, std::size_t n) {
    std::vector<std::string> negatives;
    if (n == 0) {
        return negatives;
    }
    for (const auto& [pid, score] : index.rank(question)) {
        const Passage* p = corpus.find_passage(pid);
        if (!p) {
            continue;
        }
        const std::string passage_text = p->text();
        const bool has_answer = std::any_of(answers.begin(), answers.end(), [&](const auto& a) {
            return text::contains_normalized(passage_text, a);
        });
        if (has_answer) {
            continue;
        }
        negatives.push_back(pid);
        if (negatives.size() == n) {
            break;
        }
    }
    return negatives;
}

std::vector<std::string> mine_same_phrase_negatives(const Corpus& corpus, std::string_view answer,
                                                    const std::string& gold_passage_id,
                                                    std::size_t n) {
    std::vector<std::string> out;
    if (n == 0) {
        return out;
    }
    for (const auto& p : corpus.passages()) {
        if (p.passage_id == gold_passage_id) {
            continue;
        }
        if (text::contains_normalized(p.text(), answer)) {
            out.push_back(p.passage_id);
            if (out.size() == n) {
                break;
            }
        }
    }
    return out;
}

} // namespace gidx
