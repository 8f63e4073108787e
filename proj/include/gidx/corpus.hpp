#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gidx {

struct Document {
    std::string doc_id;
    std::string title;
    std::string text;
    std::vector<std::string> passage_ids;
};

struct Passage {
    std::string passage_id;
    std::string doc_id;
    std::vector<std::string> word_tokens;
    std::size_t char_offset = 0;

    std::string text() const; // words joined by single spaces
};

/// A contiguous word span inside one passage. span = [start_word, end_word],
/// both inclusive.
struct Phrase {
    std::int64_t phrase_id = 0;
    std::string passage_id;
    std::string doc_id;
    std::uint32_t start_word = 0;
    std::uint32_t end_word = 0;
    std::string surface;
    float filter_score = 1.0f;
};

struct FeaturizerConfig {
    std::uint32_t dim = 64;
    std::uint32_t ngram_min = 2;
    std::uint32_t ngram_max = 4;
    std::uint64_t seed = 42;

    void validate() const; // throws ValidationError
};

/// Hashed character-n-gram embedding: deterministic given (text, cfg),
/// L2-normalized for nonempty text, all-zeros for empty text.
std::vector<float> featurize(std::string_view text_in, const FeaturizerConfig& cfg);

/// Splits a document into consecutive blocks of exactly block_words words;
/// the final block may be shorter. Empty documents yield no passages.
std::vector<Passage> segment_document(const Document& doc, std::uint32_t block_words);

/// All word spans of length 1..max_len in (start, length) lexicographic
/// order. Phrase ids are assigned sequentially starting at first_id.
std::vector<Phrase> enumerate_phrases(const Passage& passage, std::uint32_t max_len,
                                      std::int64_t first_id = 0);

/// Number of spans enumerate_phrases produces for a passage of n words.
std::int64_t phrase_count(std::int64_t n, std::int64_t max_len);

class Corpus {
public:
    /// Loads documents from a JSONL file ({"id","title","text"} per line).
    /// Duplicate ids and malformed lines are rejected.
    static Corpus load_jsonl(const std::string& path);

    void add_document(Document doc);

    /// Segments every document into passages of block_words words.
    void segment_all(std::uint32_t block_words);

    /// Enumerates phrases of every passage with global sequential ids.
    void enumerate_all(std::uint32_t max_phrase_len);

    /// Featurizes every phrase surface; returns row-major num_phrases x dim.
    std::vector<float> featurize_all(const FeaturizerConfig& cfg) const;

    /// Applies per-phrase filter scores from a sidecar JSONL file
    /// ({"passage_id", "span":[s,e], "filter_score"} per line).
    void apply_filter_scores(const std::string& path);

    const std::vector<Document>& documents() const { return documents_; }
    const std::vector<Passage>& passages() const { return passages_; }
    const std::vector<Phrase>& phrases() const { return phrases_; }
    std::vector<Phrase>& mutable_phrases() { return phrases_; }

    const Document* find_document(std::string_view doc_id) const;
    const Passage* find_passage(std::string_view passage_id) const;

    bool empty() const { return documents_.empty(); }
    std::size_t size() const { return documents_.size(); }

private:
    void index_passage(std::size_t pos);

    std::vector<Document> documents_;
    std::vector<Passage> passages_;
    std::vector<Phrase> phrases_;
    std::unordered_map<std::string, std::size_t> doc_pos_;
    std::unordered_map<std::string, std::size_t> passage_pos_;
};

} // namespace gidx
