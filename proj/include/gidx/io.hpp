#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gidx/corpus.hpp"

namespace gidx::io {

struct VectorFile {
    std::uint32_t dim = 0;
    std::uint64_t count = 0;
    std::vector<float> data; // row-major, count x dim
};

/// Binary phrase-vector file: magic "GIDX1", u32 dim, u64 count, then
/// row-major little-endian f32.
void write_vectors(const std::string& path, std::uint32_t dim, const std::vector<float>& rows);
VectorFile read_vectors(const std::string& path);

/// Phrase metadata sidecar, one JSON object per vector row, in row order.
void write_phrase_meta(const std::string& path, const std::vector<Phrase>& phrases);
std::vector<Phrase> read_phrase_meta(const std::string& path);

/// Per-row PQ codes: magic "GCOD1", u32 num_subspaces, u64 count, then
/// count x num_subspaces little-endian u16.
void write_codes(const std::string& path, std::uint32_t num_subspaces,
                 const std::vector<std::uint16_t>& codes);
struct CodeFile {
    std::uint32_t num_subspaces = 0;
    std::uint64_t count = 0;
    std::vector<std::uint16_t> codes;
};
CodeFile read_codes(const std::string& path);

} // namespace gidx::io
