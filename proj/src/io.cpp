#include "gidx/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "gidx/error.hpp"

namespace gidx::io {

using nlohmann::json;

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) {
        b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    }
    out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    }
    out.write(b, 8);
}

void put_u16(std::ostream& out, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
    out.write(b, 2);
}

void put_f32(std::ostream& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
        v = (v << 8) | b[i];
    }
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | b[i];
    }
    return v;
}

std::uint16_t get_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

float get_f32(std::istream& in) {
    return std::bit_cast<float>(get_u32(in));
}

void expect_magic(std::istream& in, const char* magic, const std::string& path) {
    char buf[8] = {};
    const std::size_t len = std::strlen(magic);
    in.read(buf, static_cast<std::streamsize>(len));
    if (!in || std::memcmp(buf, magic, len) != 0) {
        throw IoError(path + ": bad magic, expected \"" + magic + "\"");
    }
}

} // namespace

void write_vectors(const std::string& path, std::uint32_t dim, const std::vector<float>& rows) {
    if (dim == 0 || rows.size() % dim != 0) {
        throw ValidationError("vector data size is not a multiple of dim");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write vector file: " + path);
    }
    out.write("GIDX1", 5);
    put_u32(out, dim);
    put_u64(out, rows.size() / dim);
    for (float v : rows) {
        put_f32(out, v);
    }
    if (!out) {
        throw IoError("short write to vector file: " + path);
    }
}

VectorFile read_vectors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open vector file: " + path);
    }
    expect_magic(in, "GIDX1", path);
    VectorFile f;
    f.dim = get_u32(in);
    f.count = get_u64(in);
    if (!in || f.dim == 0) {
        throw IoError(path + ": truncated or invalid header");
    }
    f.data.resize(static_cast<std::size_t>(f.count) * f.dim);
    for (auto& v : f.data) {
        v = get_f32(in);
    }
    if (!in) {
        throw IoError(path + ": truncated vector data");
    }
    return f;
}

void write_phrase_meta(const std::string& path, const std::vector<Phrase>& phrases) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write phrase metadata: " + path);
    }
    for (const auto& ph : phrases) {
        json j{{"phrase_id", ph.phrase_id},
               {"passage_id", ph.passage_id},
               {"doc_id", ph.doc_id},
               {"span", {ph.start_word, ph.end_word}},
               {"surface", ph.surface},
               {"filter_score", ph.filter_score}};
        out << j.dump() << '\n';
    }
    if (!out) {
        throw IoError("short write to phrase metadata: " + path);
    }
}

std::vector<Phrase> read_phrase_meta(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open phrase metadata: " + path);
    }
    std::vector<Phrase> out;
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
        Phrase ph;
        ph.phrase_id = j.at("phrase_id").get<std::int64_t>();
        ph.passage_id = j.at("passage_id").get<std::string>();
        ph.doc_id = j.at("doc_id").get<std::string>();
        ph.start_word = j.at("span").at(0).get<std::uint32_t>();
        ph.end_word = j.at("span").at(1).get<std::uint32_t>();
        ph.surface = j.value("surface", std::string{});
        ph.filter_score = j.value("filter_score", 1.0f);
        out.push_back(std::move(ph));
    }
    return out;
}

void write_codes(const std::string& path, std::uint32_t num_subspaces,
                 const std::vector<std::uint16_t>& codes) {
    if (num_subspaces == 0 || codes.size() % num_subspaces != 0) {
        throw ValidationError("code data size is not a multiple of num_subspaces");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write code file: " + path);
    }
    out.write("GCOD1", 5);
    put_u32(out, num_subspaces);
    put_u64(out, codes.size() / num_subspaces);
    for (std::uint16_t c : codes) {
        put_u16(out, c);
    }
    if (!out) {
        throw IoError("short write to code file: " + path);
    }
}

CodeFile read_codes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open code file: " + path);
    }
    expect_magic(in, "GCOD1", path);
    CodeFile f;
    f.num_subspaces = get_u32(in);
    f.count = get_u64(in);
    if (!in || f.num_subspaces == 0) {
        throw IoError(path + ": truncated or invalid header");
    }
    f.codes.resize(static_cast<std::size_t>(f.count) * f.num_subspaces);
    for (auto& c : f.codes) {
        c = get_u16(in);
    }
    if (!in) {
        throw IoError(path + ": truncated code data");
    }
    return f;
}

} // namespace gidx::io
