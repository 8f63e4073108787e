#include "gidx/text.hpp"

#include <algorithm>
#include <cctype>

namespace gidx::text {

namespace {

// Decodes one UTF-8 codepoint starting at s[i]. Advances i past the
// sequence. Invalid bytes are consumed one at a time and returned as-is so
// that malformed input degrades gracefully instead of failing.
std::uint32_t decode_utf8(std::string_view s, std::size_t& i) {
    const auto byte = [&](std::size_t j) { return static_cast<unsigned char>(s[j]); };
    unsigned char c = byte(i);
    if (c < 0x80) {
        ++i;
        return c;
    }
    int len = 0;
    std::uint32_t cp = 0;
    if ((c >> 5) == 0x6) {
        len = 2;
        cp = c & 0x1Fu;
    } else if ((c >> 4) == 0xE) {
        len = 3;
        cp = c & 0x0Fu;
    } else if ((c >> 3) == 0x1E) {
        len = 4;
        cp = c & 0x07u;
    } else {
        ++i;
        return c;
    }
    if (i + static_cast<std::size_t>(len) > s.size()) {
        ++i;
        return c;
    }
    for (int k = 1; k < len; ++k) {
        unsigned char cc = byte(i + static_cast<std::size_t>(k));
        if ((cc & 0xC0) != 0x80) {
            ++i;
            return c;
        }
        cp = (cp << 6) | (cc & 0x3Fu);
    }
    i += static_cast<std::size_t>(len);
    return cp;
}

bool is_space_cp(std::uint32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680:
        case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

bool is_ascii_punct(unsigned char c) {
    return std::ispunct(c) != 0;
}

} // namespace

std::vector<Token> tokenize(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    std::size_t word_start = 0;
    bool in_word = false;
    while (i < s.size()) {
        std::size_t at = i;
        std::uint32_t cp = decode_utf8(s, i);
        if (is_space_cp(cp)) {
            if (in_word) {
                out.push_back({std::string(s.substr(word_start, at - word_start)), word_start});
                in_word = false;
            }
        } else if (!in_word) {
            word_start = at;
            in_word = true;
        }
    }
    if (in_word) {
        out.push_back({std::string(s.substr(word_start)), word_start});
    }
    return out;
}

std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    for (auto& tok : tokenize(s)) {
        out.push_back(std::move(tok.word));
    }
    return out;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
        return static_cast<char>(std::tolower(c));
    });
    return out;
}

std::string normalize(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t at = i;
        std::uint32_t cp = decode_utf8(s, i);
        if (is_space_cp(cp)) {
            pending_space = true;
            continue;
        }
        if (cp < 0x80 && is_ascii_punct(static_cast<unsigned char>(cp))) {
            continue;
        }
        if (pending_space && !out.empty()) {
            out.push_back(' ');
        }
        pending_space = false;
        for (std::size_t j = at; j < i; ++j) {
            char c = s[j];
            if (static_cast<unsigned char>(c) < 0x80) {
                c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            }
            out.push_back(c);
        }
    }
    return out;
}

bool contains_normalized(std::string_view haystack, std::string_view needle) {
    std::string n = normalize(needle);
    if (n.empty()) {
        return false;
    }
    return normalize(haystack).find(n) != std::string::npos;
}

std::vector<std::string> split_sentences(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c != '.' && c != '!' && c != '?') {
            continue;
        }
        // Consume a run of terminal punctuation ("?!", "...").
        std::size_t end = i + 1;
        while (end < s.size() && (s[end] == '.' || s[end] == '!' || s[end] == '?')) {
            ++end;
        }
        if (end < s.size()) {
            std::size_t probe = end;
            std::uint32_t cp = decode_utf8(s, probe);
            if (!is_space_cp(cp)) {
                i = end - 1;
                continue;
            }
        }
        std::string_view sentence = s.substr(start, end - start);
        std::size_t first = sentence.find_first_not_of(" \t\r\n");
        if (first != std::string_view::npos) {
            out.emplace_back(sentence.substr(first));
        }
        start = end;
        i = end - 1;
    }
    if (start < s.size()) {
        std::string_view rest = s.substr(start);
        std::size_t first = rest.find_first_not_of(" \t\r\n");
        if (first != std::string_view::npos) {
            out.emplace_back(rest.substr(first));
        }
    }
    return out;
}

std::uint64_t hash64(std::string_view s, std::uint64_t seed) {
    // splitmix64 of the seed, then FNV-1a over the bytes.
    std::uint64_t h = seed + 0x9E3779B97F4A7C15ULL;
    h = (h ^ (h >> 30)) * 0xBF58476D1CE4E5B9ULL;
    h = (h ^ (h >> 27)) * 0x94D049BB133111EBULL;
    h ^= h >> 31;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    // Final avalanche so low bits are usable for bucketing.
    h ^= h >> 33;
    h *= 0xFF51AFD7ED558CCDULL;
    h ^= h >> 33;
    return h;
}

} // namespace gidx::text
