#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace gidx::text {

/// A word token together with its byte offset in the source string.
struct Token {
    std::string word;
    std::size_t offset = 0;
};

/// Splits on Unicode whitespace (ASCII whitespace plus the common Unicode
/// space codepoints). Surface forms are preserved; offsets are byte offsets.
std::vector<Token> tokenize(std::string_view s);

/// Tokenize and keep only the words.
std::vector<std::string> words(std::string_view s);

/// ASCII lowercasing; bytes outside [A-Z] pass through untouched.
std::string lower(std::string_view s);

/// Canonical form for answer matching: lowercase, strip ASCII punctuation,
/// collapse whitespace runs to single spaces, trim.
std::string normalize(std::string_view s);

/// True when normalize(needle) occurs as a substring of normalize(haystack).
/// An empty normalized needle never matches.
bool contains_normalized(std::string_view haystack, std::string_view needle);

/// Split on terminal punctuation (. ! ?) followed by whitespace or end of
/// string. Each sentence keeps its terminal punctuation.
std::vector<std::string> split_sentences(std::string_view s);

/// Seeded 64-bit hash of a byte string (stable across platforms and runs).
std::uint64_t hash64(std::string_view s, std::uint64_t seed);

} // namespace gidx::text
