#include "gidx/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <tuple>

#include <nlohmann/json.hpp>

#include "gidx/error.hpp"
#include "gidx/text.hpp"

namespace gidx {

using nlohmann::json;

std::string Passage::text() const {
    std::string out;
    for (std::size_t i = 0; i < word_tokens.size(); ++i) {
        if (i > 0) {
            out.push_back(' ');
        }
        out += word_tokens[i];
    }
    return out;
}

void FeaturizerConfig::validate() const {
    if (dim < 8) {
        throw ValidationError("featurizer dim must be >= 8, got " + std::to_string(dim));
    }
    if (ngram_min < 1 || ngram_min > ngram_max) {
        throw ValidationError("featurizer ngram_range requires 1 <= min <= max");
    }
}

std::vector<float> featurize(std::string_view text_in, const FeaturizerConfig& cfg) {
    cfg.validate();
    std::vector<float> v(cfg.dim, 0.0f);
    if (text_in.empty()) {
        return v;
    }
    const std::string s = text::lower(text_in);
    std::vector<double> acc(cfg.dim, 0.0);
    for (std::uint32_t n = cfg.ngram_min; n <= cfg.ngram_max; ++n) {
        if (s.size() < n) {
            break;
        }
        // Mix the n-gram length into the seed so equal substrings of
        // different lengths land in decorrelated buckets.
        const std::uint64_t seed_n = cfg.seed ^ (0x9E3779B97F4A7C15ULL * n);
        for (std::size_t i = 0; i + n <= s.size(); ++i) {
            std::uint64_t h = text::hash64(std::string_view(s).substr(i, n), seed_n);
            std::size_t bucket = static_cast<std::size_t>(h % cfg.dim);
            acc[bucket] += (h >> 63) ? -1.0 : 1.0;
        }
    }
    double norm2 = 0.0;
    for (double x : acc) {
        norm2 += x * x;
    }
    if (norm2 == 0.0) {
        // All n-grams cancelled (or the text is shorter than ngram_min):
        // fall back to a single deterministic bucket so nonempty text is
        // always unit-norm.
        acc[text::hash64(s, cfg.seed) % cfg.dim] = 1.0;
        norm2 = 1.0;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::uint32_t i = 0; i < cfg.dim; ++i) {
        v[i] = static_cast<float>(acc[i] * inv);
    }
    return v;
}

std::vector<Passage> segment_document(const Document& doc, std::uint32_t block_words) {
    if (block_words < 1) {
        throw ValidationError("block_words must be >= 1");
    }
    std::vector<Passage> out;
    const auto tokens = text::tokenize(doc.text);
    for (std::size_t start = 0; start < tokens.size(); start += block_words) {
        Passage p;
        p.passage_id = doc.doc_id + "#" + std::to_string(out.size());
        p.doc_id = doc.doc_id;
        p.char_offset = tokens[start].offset;
        const std::size_t end = std::min(tokens.size(), start + block_words);
        p.word_tokens.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) {
            p.word_tokens.push_back(tokens[i].word);
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::int64_t phrase_count(std::int64_t n, std::int64_t max_len) {
    const std::int64_t l = std::min(max_len, n);
    return n * l - l * (l - 1) / 2;
}

std::vector<Phrase> enumerate_phrases(const Passage& passage, std::uint32_t max_len,
                                      std::int64_t first_id) {
    if (max_len < 1) {
        throw ValidationError("max_len must be >= 1");
    }
    const std::size_t n = passage.word_tokens.size();
    std::vector<Phrase> out;
    out.reserve(static_cast<std::size_t>(phrase_count(static_cast<std::int64_t>(n), max_len)));
    std::int64_t id = first_id;
    for (std::size_t start = 0; start < n; ++start) {
        const std::size_t max_here = std::min<std::size_t>(max_len, n - start);
        std::string surface;
        for (std::size_t len = 1; len <= max_here; ++len) {
            if (len > 1) {
                surface.push_back(' ');
            }
            surface += passage.word_tokens[start + len - 1];
            Phrase ph;
            ph.phrase_id = id++;
            ph.passage_id = passage.passage_id;
            ph.doc_id = passage.doc_id;
            ph.start_word = static_cast<std::uint32_t>(start);
            ph.end_word = static_cast<std::uint32_t>(start + len - 1);
            ph.surface = surface;
            out.push_back(std::move(ph));
        }
    }
    return out;
}

Corpus Corpus::load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open corpus file: " + path);
    }
    Corpus corpus;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j.contains("text")) {
            throw ParseError(path + ":" + std::to_string(lineno) +
                             ": document object requires fields \"id\" and \"text\"");
        }
        Document doc;
        doc.doc_id = j.at("id").get<std::string>();
        doc.title = j.value("title", std::string{});
        doc.text = j.at("text").get<std::string>();
        corpus.add_document(std::move(doc));
    }
    return corpus;
}

void Corpus::add_document(Document doc) {
    if (doc_pos_.contains(doc.doc_id)) {
        throw ValidationError("duplicate document id \"" + doc.doc_id + "\"");
    }
    doc_pos_.emplace(doc.doc_id, documents_.size());
    documents_.push_back(std::move(doc));
}

void Corpus::index_passage(std::size_t pos) {
    const auto& p = passages_[pos];
    if (!passage_pos_.emplace(p.passage_id, pos).second) {
        throw ValidationError("duplicate passage id \"" + p.passage_id + "\"");
    }
}

void Corpus::segment_all(std::uint32_t block_words) {
    passages_.clear();
    passage_pos_.clear();
    phrases_.clear();
    for (auto& doc : documents_) {
        doc.passage_ids.clear();
        auto blocks = segment_document(doc, block_words);
        for (auto& p : blocks) {
            doc.passage_ids.push_back(p.passage_id);
            passages_.push_back(std::move(p));
            index_passage(passages_.size() - 1);
        }
    }
}

void Corpus::enumerate_all(std::uint32_t max_phrase_len) {
    phrases_.clear();
    std::int64_t next_id = 0;
    for (const auto& p : passages_) {
        auto span = enumerate_phrases(p, max_phrase_len, next_id);
        next_id += static_cast<std::int64_t>(span.size());
        phrases_.insert(phrases_.end(), std::make_move_iterator(span.begin()),
                        std::make_move_iterator(span.end()));
    }
}

std::vector<float> Corpus::featurize_all(const FeaturizerConfig& cfg) const {
    cfg.validate();
    std::vector<float> rows;
    rows.reserve(phrases_.size() * cfg.dim);
    for (const auto& ph : phrases_) {
        auto v = featurize(ph.surface, cfg);
        rows.insert(rows.end(), v.begin(), v.end());
    }
    return rows;
}

void Corpus::apply_filter_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open filter-score sidecar: " + path);
    }
    std::map<std::tuple<std::string, std::uint32_t, std::uint32_t>, std::size_t> by_span;
    for (std::size_t i = 0; i < phrases_.size(); ++i) {
        const auto& ph = phrases_[i];
        by_span.emplace(std::make_tuple(ph.passage_id, ph.start_word, ph.end_word), i);
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
        }
        const auto pid = j.at("passage_id").get<std::string>();
        const auto span = j.at("span");
        if (!span.is_array() || span.size() != 2) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": span must be [start,end]");
        }
        const auto key = std::make_tuple(pid, span[0].get<std::uint32_t>(),
                                         span[1].get<std::uint32_t>());
        auto it = by_span.find(key);
        if (it == by_span.end()) {
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": no enumerated phrase for passage \"" + pid + "\" span [" +
                                  std::to_string(std::get<1>(key)) + "," +
                                  std::to_string(std::get<2>(key)) + "]");
        }
        const float score = j.at("filter_score").get<float>();
        if (score < 0.0f || score > 1.0f) {
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": filter_score must be in [0,1]");
        }
        phrases_[it->second].filter_score = score;
    }
}

const Document* Corpus::find_document(std::string_view doc_id) const {
    auto it = doc_pos_.find(std::string(doc_id));
    return it == doc_pos_.end() ? nullptr : &documents_[it->second];
}

const Passage* Corpus::find_passage(std::string_view passage_id) const {
    auto it = passage_pos_.find(std::string(passage_id));
    return it == passage_pos_.end() ? nullptr : &passages_[it->second];
}

} // namespace gidx
