#include "gidx/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "gidx/error.hpp"
#include "gidx/kmeans.hpp"
#include "gidx/text.hpp"

namespace gidx {

using nlohmann::json;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double dot_fd(std::span<const float> v, std::span<const double> q) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        s += static_cast<double>(v[i]) * q[i];
    }
    return s;
}

double logsumexp(std::span<const double> xs) {
    double m = kNegInf;
    for (double x : xs) {
        m = std::max(m, x);
    }
    if (!std::isfinite(m)) {
        return m;
    }
    double s = 0.0;
    for (double x : xs) {
        s += std::exp(x - m);
    }
    return m + std::log(s);
}

// Eq.-3 aggregation: max inner product over the passage's active rows.
double passage_score(const PhraseIndex& idx, const std::string& passage_id,
                     std::span<const double> q) {
    double best = kNegInf;
    for (std::size_t row : idx.rows_of_passage(passage_id)) {
        if (!idx.active(row)) {
            continue;
        }
        best = std::max(best, dot_fd(idx.vector_at(row), q));
    }
    return best;
}

void shuffle_indices(std::vector<std::size_t>& order, Rng& rng) {
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }
}

std::vector<float> to_float(std::span<const double> v) {
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = static_cast<float>(v[i]);
    }
    return out;
}

struct LdocEval {
    bool usable = false;
    double loss = 0.0;
    std::vector<std::size_t> rows;
    std::vector<double> scores;
    std::vector<char> gold;
};

LdocEval eval_ldoc(const PhraseIndex& idx, std::span<const double> q,
                   const std::set<std::string>& gold_docs, std::size_t top_k, ScoreMode mode) {
    LdocEval ev;
    const auto top = idx.top_active_rows(to_float(q), top_k, mode);
    ev.rows.reserve(top.size());
    ev.scores.reserve(top.size());
    ev.gold.reserve(top.size());
    std::vector<double> gold_scores;
    for (const auto& [unused_score, row] : top) {
        const auto v = idx.scoring_vector(row, mode);
        const double s = dot_fd(v, q);
        const bool is_gold = gold_docs.contains(idx.phrase_at(row).doc_id);
        ev.rows.push_back(row);
        ev.scores.push_back(s);
        ev.gold.push_back(is_gold ? 1 : 0);
        if (is_gold) {
            gold_scores.push_back(s);
        }
    }
    if (gold_scores.empty() || ev.scores.empty()) {
        return ev;
    }
    ev.usable = true;
    ev.loss = logsumexp(ev.scores) - logsumexp(gold_scores);
    return ev;
}

// d(loss)/d(W) for one example: softmax-weighted phrase vectors, outer
// product with the query features. coeff_i = p_i - p_i|gold.
void accumulate_ldoc_grad(const PhraseIndex& idx, const LdocEval& ev, std::span<const float> phi,
                          ScoreMode mode, std::vector<double>& grad, std::size_t dim_out,
                          std::size_t dim_in) {
    const double lse_all = logsumexp(ev.scores);
    std::vector<double> gold_scores;
    for (std::size_t i = 0; i < ev.scores.size(); ++i) {
        if (ev.gold[i]) {
            gold_scores.push_back(ev.scores[i]);
        }
    }
    const double lse_gold = logsumexp(gold_scores);
    std::vector<double> u(dim_out, 0.0);
    for (std::size_t i = 0; i < ev.rows.size(); ++i) {
        const double p = std::exp(ev.scores[i] - lse_all);
        const double g = ev.gold[i] ? std::exp(ev.scores[i] - lse_gold) : 0.0;
        const double coeff = p - g;
        if (coeff == 0.0) {
            continue;
        }
        const auto v = idx.scoring_vector(ev.rows[i], mode);
        for (std::size_t a = 0; a < dim_out; ++a) {
            u[a] += coeff * static_cast<double>(v[a]);
        }
    }
    for (std::size_t a = 0; a < dim_out; ++a) {
        if (u[a] == 0.0) {
            continue;
        }
        for (std::size_t b = 0; b < dim_in; ++b) {
            grad[a * dim_in + b] += u[a] * static_cast<double>(phi[b]);
        }
    }
}

void require_context(const TrainContext& ctx, bool need_corpus) {
    if (!ctx.index) {
        throw StateError("training context has no index");
    }
    if (need_corpus && !ctx.corpus) {
        throw StateError("training context has no corpus");
    }
}

std::vector<float> embed_query_checked(const TrainContext& ctx, std::string_view query,
                                       const QueryEncoder& encoder) {
    if (!ctx.embed_query) {
        throw StateError("training context has no query embedder");
    }
    auto phi = ctx.embed_query(query);
    if (phi.size() != encoder.dim_in) {
        throw ValidationError("query feature dim (" + std::to_string(phi.size()) +
                              ") does not match encoder dim_in (" +
                              std::to_string(encoder.dim_in) + ")");
    }
    return phi;
}

} // namespace

QueryEncoder QueryEncoder::identity(std::size_t dim) {
    QueryEncoder enc;
    enc.dim_in = dim;
    enc.dim_out = dim;
    enc.weight.assign(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
        enc.weight[i * dim + i] = 1.0;
    }
    return enc;
}

QueryEncoder QueryEncoder::zeros(std::size_t dim_out, std::size_t dim_in) {
    QueryEncoder enc;
    enc.dim_in = dim_in;
    enc.dim_out = dim_out;
    enc.weight.assign(dim_out * dim_in, 0.0);
    return enc;
}

void QueryEncoder::validate() const {
    if (dim_in == 0 || dim_out == 0 || weight.size() != dim_in * dim_out) {
        throw ValidationError("encoder weight shape mismatch");
    }
    for (double w : weight) {
        if (!std::isfinite(w)) {
            throw ValidationError("encoder weight contains non-finite entries");
        }
    }
}

std::vector<double> QueryEncoder::apply(std::span<const float> features) const {
    if (features.size() != dim_in) {
        throw ValidationError("feature dim (" + std::to_string(features.size()) +
                              ") does not match encoder dim_in (" + std::to_string(dim_in) + ")");
    }
    std::vector<double> out(dim_out, 0.0);
    for (std::size_t a = 0; a < dim_out; ++a) {
        const double* row = weight.data() + a * dim_in;
        double s = 0.0;
        for (std::size_t b = 0; b < dim_in; ++b) {
            s += row[b] * static_cast<double>(features[b]);
        }
        out[a] = s;
    }
    return out;
}

std::vector<float> QueryEncoder::apply_f(std::span<const float> features) const {
    return to_float(apply(features));
}

void QueryEncoder::save(const std::string& path) const {
    validate();
    json rows = json::array();
    for (std::size_t a = 0; a < dim_out; ++a) {
        json row = json::array();
        for (std::size_t b = 0; b < dim_in; ++b) {
            row.push_back(weight[a * dim_in + b]);
        }
        rows.push_back(std::move(row));
    }
    json j{{"dim_in", dim_in}, {"dim_out", dim_out}, {"weight", std::move(rows)}};
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write encoder: " + path);
    }
    out << j.dump(2) << '\n';
}

QueryEncoder QueryEncoder::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open encoder: " + path);
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(path + ": malformed encoder JSON: " + std::string(e.what()));
    }
    QueryEncoder enc;
    enc.dim_in = j.at("dim_in").get<std::size_t>();
    enc.dim_out = j.at("dim_out").get<std::size_t>();
    enc.weight.reserve(enc.dim_in * enc.dim_out);
    for (const auto& row : j.at("weight")) {
        for (const auto& v : row) {
            enc.weight.push_back(v.get<double>());
        }
    }
    enc.validate();
    return enc;
}

std::vector<TrainingExample> load_training_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open training data: " + path);
    }
    std::vector<TrainingExample> out;
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
        TrainingExample ex;
        ex.query_text = j.at("query").get<std::string>();
        for (const auto& a : j.value("answers", json::array())) {
            ex.answers.push_back(a.get<std::string>());
        }
        if (j.contains("gold_passage_id") && !j.at("gold_passage_id").is_null()) {
            ex.gold_passage_id = j.at("gold_passage_id").get<std::string>();
        }
        for (const auto& d : j.value("gold_docs", json::array())) {
            ex.gold_docs.push_back(d.get<std::string>());
        }
        if (j.contains("negatives")) {
            for (const auto& [scheme, ids] : j.at("negatives").items()) {
                auto& list = ex.negatives[scheme];
                for (const auto& id : ids) {
                    list.push_back(id.get<std::string>());
                }
            }
        }
        out.push_back(std::move(ex));
    }
    return out;
}

void save_training_jsonl(const std::string& path, const std::vector<TrainingExample>& examples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write training data: " + path);
    }
    for (const auto& ex : examples) {
        json negatives = json::object();
        for (const auto& [scheme, ids] : ex.negatives) {
            negatives[scheme] = ids;
        }
        json j{{"query", ex.query_text},
               {"answers", ex.answers},
               {"gold_passage_id",
                ex.gold_passage_id.empty() ? json(nullptr) : json(ex.gold_passage_id)},
               {"gold_docs", ex.gold_docs},
               {"negatives", std::move(negatives)}};
        out << j.dump() << '\n';
    }
    if (!out) {
        throw IoError("short write to training data: " + path);
    }
}

const char* to_string(NegativeScheme s) {
    switch (s) {
        case NegativeScheme::in_batch: return "in_batch";
        case NegativeScheme::bm25_hard: return "bm25_hard";
        case NegativeScheme::in_passage: return "in_passage";
        case NegativeScheme::same_phrase: return "same_phrase";
    }
    return "?";
}

NegativeScheme negative_scheme_from_string(std::string_view s) {
    if (s == "in_batch") return NegativeScheme::in_batch;
    if (s == "bm25_hard" || s == "bm25") return NegativeScheme::bm25_hard;
    if (s == "in_passage") return NegativeScheme::in_passage;
    if (s == "same_phrase") return NegativeScheme::same_phrase;
    throw ValidationError("unknown negative scheme \"" + std::string(s) + "\"");
}

double nll_loss(double pos_score, std::span<const double> neg_scores) {
    if (neg_scores.empty()) {
        return 0.0;
    }
    double m = pos_score;
    for (double s : neg_scores) {
        m = std::max(m, s);
    }
    double sum = std::exp(pos_score - m);
    for (double s : neg_scores) {
        sum += std::exp(s - m);
    }
    return m + std::log(sum) - pos_score;
}

TrainContext make_context(const PhraseIndex& index, const Corpus& corpus,
                          const FeaturizerConfig& cfg, std::uint32_t max_phrase_len,
                          const Bm25Index* bm25) {
    TrainContext ctx;
    ctx.index = &index;
    ctx.corpus = &corpus;
    ctx.bm25 = bm25;
    ctx.embed_query = [cfg](std::string_view s) { return featurize(s, cfg); };
    ctx.embed_phrase = ctx.embed_query;
    ctx.max_phrase_len = max_phrase_len;
    return ctx;
}

std::optional<std::int64_t> resolve_positive_phrase(const PhraseIndex& index,
                                                    const TrainingExample& example) {
    if (example.gold_passage_id.empty()) {
        return std::nullopt;
    }
    std::vector<std::string> normalized;
    normalized.reserve(example.answers.size());
    for (const auto& a : example.answers) {
        normalized.push_back(text::normalize(a));
    }
    std::optional<std::int64_t> best;
    for (std::size_t row : index.rows_of_passage(example.gold_passage_id)) {
        const auto& ph = index.phrase_at(row);
        const auto surf = text::normalize(ph.surface);
        if (surf.empty()) {
            continue;
        }
        if (std::find(normalized.begin(), normalized.end(), surf) == normalized.end()) {
            continue;
        }
        if (!best || ph.phrase_id < *best) {
            best = ph.phrase_id;
        }
    }
    return best;
}

std::vector<std::vector<std::int64_t>> build_negative_sets(
    const std::vector<TrainingExample>& batch,
    const std::vector<std::optional<std::int64_t>>& positives,
    const std::vector<NegativeScheme>& schemes, const TrainContext& ctx) {
    require_context(ctx, false);
    if (positives.size() != batch.size()) {
        throw ValidationError("positives must align with the batch");
    }
    const bool want_in_batch =
        std::find(schemes.begin(), schemes.end(), NegativeScheme::in_batch) != schemes.end();
    if (want_in_batch && batch.size() < 2) {
        throw ValidationError("in_batch negatives require a batch of at least 2 examples");
    }
    const PhraseIndex& index = *ctx.index;

    auto phrases_of_passage = [&](const std::string& pid, std::set<std::int64_t>& out) {
        for (std::size_t row : index.rows_of_passage(pid)) {
            out.insert(index.phrase_at(row).phrase_id);
        }
    };

    std::vector<std::vector<std::int64_t>> result(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& ex = batch[i];
        std::set<std::int64_t> negs;
        for (NegativeScheme scheme : schemes) {
            switch (scheme) {
                case NegativeScheme::in_batch: {
                    for (std::size_t j = 0; j < batch.size(); ++j) {
                        if (j != i && positives[j]) {
                            negs.insert(*positives[j]);
                        }
                    }
                    break;
                }
                case NegativeScheme::in_passage: {
                    if (!positives[i]) {
                        break;
                    }
                    const auto row = index.row_of(*positives[i]);
                    if (!row) {
                        break;
                    }
                    const std::string& pid = index.phrase_at(*row).passage_id;
                    std::vector<std::string> normalized;
                    for (const auto& a : ex.answers) {
                        normalized.push_back(text::normalize(a));
                    }
                    for (std::size_t r : index.rows_of_passage(pid)) {
                        const auto& ph = index.phrase_at(r);
                        const auto surf = text::normalize(ph.surface);
                        if (std::find(normalized.begin(), normalized.end(), surf) !=
                            normalized.end()) {
                            continue; // expresses the answer
                        }
                        negs.insert(ph.phrase_id);
                    }
                    break;
                }
                case NegativeScheme::bm25_hard: {
                    auto it = ex.negatives.find("bm25");
                    if (it == ex.negatives.end()) {
                        it = ex.negatives.find("bm25_hard");
                    }
                    if (it != ex.negatives.end()) {
                        for (const auto& pid : it->second) {
                            phrases_of_passage(pid, negs);
                        }
                    } else if (ctx.bm25 && ctx.corpus) {
                        for (const auto& pid :
                             mine_bm25_negatives(*ctx.bm25, *ctx.corpus, ex.query_text, ex.answers,
                                                 ctx.mined_negatives_per_query)) {
                            phrases_of_passage(pid, negs);
                        }
                    }
                    break;
                }
                case NegativeScheme::same_phrase: {
                    auto it = ex.negatives.find("same_phrase");
                    if (it != ex.negatives.end()) {
                        for (const auto& pid : it->second) {
                            phrases_of_passage(pid, negs);
                        }
                    } else if (ctx.corpus && !ex.answers.empty() && !ex.gold_passage_id.empty()) {
                        for (const auto& pid : mine_same_phrase_negatives(
                                 *ctx.corpus, ex.answers.front(), ex.gold_passage_id,
                                 ctx.mined_negatives_per_query)) {
                            phrases_of_passage(pid, negs);
                        }
                    }
                    break;
                }
            }
        }
        if (positives[i]) {
            negs.erase(*positives[i]);
        }
        result[i].assign(negs.begin(), negs.end());
    }
    return result;
}

DiagnosticsResult l_topic(const QueryEncoder& encoder, const TrainContext& ctx,
                          const std::vector<TrainingExample>& dev, std::size_t num_random,
                          std::uint64_t seed) {
    require_context(ctx, false);
    encoder.validate();
    const PhraseIndex& index = *ctx.index;
    if (num_random < 1) {
        throw ValidationError("l_topic requires num_random >= 1");
    }
    if (index.distinct_passages().size() < num_random + 1) {
        throw ValidationError("corpus has only " +
                              std::to_string(index.distinct_passages().size()) +
                              " passages; l_topic needs at least " +
                              std::to_string(num_random + 1));
    }
    Rng rng(seed);
    DiagnosticsResult res;
    double total = 0.0;
    for (const auto& ex : dev) {
        if (ex.gold_passage_id.empty()) {
            ++res.skipped;
            continue;
        }
        const auto phi = embed_query_checked(ctx, ex.query_text, encoder);
        const auto q = encoder.apply(phi);
        const double pos = passage_score(index, ex.gold_passage_id, q);
        if (!std::isfinite(pos)) {
            ++res.skipped; // gold passage absent from index or fully filtered
            continue;
        }
        std::vector<std::size_t> candidates;
        candidates.reserve(index.distinct_passages().size());
        for (std::size_t p = 0; p < index.distinct_passages().size(); ++p) {
            if (index.distinct_passages()[p] != ex.gold_passage_id) {
                candidates.push_back(p);
            }
        }
        if (candidates.size() < num_random) {
            throw ValidationError("not enough non-gold passages to sample from");
        }
        // Partial Fisher-Yates: the first num_random entries become the sample.
        for (std::size_t i = 0; i < num_random; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
            std::swap(candidates[i], candidates[j]);
        }
        std::vector<double> negs;
        negs.reserve(num_random);
        for (std::size_t i = 0; i < num_random; ++i) {
            const double s = passage_score(index, index.distinct_passages()[candidates[i]], q);
            if (std::isfinite(s)) {
                negs.push_back(s);
            }
        }
        total += nll_loss(pos, negs);
        ++res.used;
    }
    if (res.used == 0) {
        throw ValidationError("l_topic: no usable dev examples");
    }
    res.mean_loss = total / static_cast<double>(res.used);
    return res;
}

DiagnosticsResult l_hard(const QueryEncoder& encoder, const TrainContext& ctx,
                         const std::vector<TrainingExample>& dev) {
    require_context(ctx, true);
    encoder.validate();
    if (!ctx.embed_phrase) {
        throw StateError("training context has no phrase embedder");
    }
    const PhraseIndex& index = *ctx.index;
    DiagnosticsResult res;
    double total = 0.0;
    for (const auto& ex : dev) {
        const Passage* gold = ex.gold_passage_id.empty()
                                  ? nullptr
                                  : ctx.corpus->find_passage(ex.gold_passage_id);
        if (!gold) {
            ++res.skipped;
            continue;
        }
        const std::string gold_text = gold->text();
        const auto sentences = text::split_sentences(gold_text);
        if (sentences.size() < 2) {
            ++res.skipped;
            continue;
        }
        std::size_t answer_sentence = sentences.size();
        for (std::size_t s = 0; s < sentences.size() && answer_sentence == sentences.size(); ++s) {
            for (const auto& a : ex.answers) {
                if (text::contains_normalized(sentences[s], a)) {
                    answer_sentence = s;
                    break;
                }
            }
        }
        if (answer_sentence == sentences.size()) {
            ++res.skipped;
            continue;
        }
        std::string negative_text;
        for (std::size_t s = 0; s < sentences.size(); ++s) {
            if (s == answer_sentence) {
                continue;
            }
            if (!negative_text.empty()) {
                negative_text.push_back(' ');
            }
            negative_text += sentences[s];
        }
        Passage neg_passage;
        neg_passage.passage_id = ex.gold_passage_id + "#hard";
        neg_passage.doc_id = gold->doc_id;
        neg_passage.word_tokens = text::words(negative_text);
        if (neg_passage.word_tokens.empty()) {
            ++res.skipped;
            continue;
        }
        const auto phi = embed_query_checked(ctx, ex.query_text, encoder);
        const auto q = encoder.apply(phi);
        const double pos = passage_score(index, ex.gold_passage_id, q);
        if (!std::isfinite(pos)) {
            ++res.skipped;
            continue;
        }
        double neg = kNegInf;
        for (const auto& ph : enumerate_phrases(neg_passage, ctx.max_phrase_len)) {
            const auto v = ctx.embed_phrase(ph.surface);
            neg = std::max(neg, dot_fd(v, q));
        }
        if (!std::isfinite(neg)) {
            ++res.skipped;
            continue;
        }
        const double negs[1] = {neg};
        total += nll_loss(pos, negs);
        ++res.used;
    }
    if (res.used == 0) {
        throw ValidationError("l_hard: no usable dev examples");
    }
    res.mean_loss = total / static_cast<double>(res.used);
    return res;
}

std::optional<double> ldoc_loss(const QueryEncoder& encoder, const TrainContext& ctx,
                                std::string_view query_text,
                                const std::set<std::string>& gold_docs, std::size_t top_k,
                                ScoreMode mode) {
    require_context(ctx, false);
    encoder.validate();
    if (top_k < 1) {
        throw ValidationError("ldoc_loss requires top_k >= 1");
    }
    const auto phi = embed_query_checked(ctx, query_text, encoder);
    const auto q = encoder.apply(phi);
    const auto ev = eval_ldoc(*ctx.index, q, gold_docs, top_k, mode);
    if (!ev.usable) {
        return std::nullopt;
    }
    return ev.loss;
}

FinetuneResult query_side_finetune(QueryEncoder encoder, const TrainContext& ctx,
                                   const std::vector<TrainingExample>& data,
                                   const TrainConfig& cfg) {
    require_context(ctx, false);
    encoder.validate();
    if (cfg.epochs < 1) {
        throw ValidationError("finetune requires epochs >= 1");
    }
    if (cfg.top_k < 1) {
        throw ValidationError("finetune requires top_k >= 1");
    }
    if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
        throw ValidationError("learning_rate must be finite and >= 0");
    }
    if (cfg.quantization_aware && !ctx.index->quantized()) {
        throw ValidationError("quantization-aware training requires an attached quantizer");
    }
    if (data.empty()) {
        throw ValidationError("finetune: no training examples");
    }
    for (const auto& ex : data) {
        if (ex.gold_docs.empty()) {
            throw ValidationError("finetune: example with empty gold_docs (query \"" +
                                  ex.query_text + "\")");
        }
    }
    const ScoreMode mode = cfg.quantization_aware ? ScoreMode::quantized : ScoreMode::exact;
    const std::size_t batch = cfg.batch_size == 0 ? data.size() : cfg.batch_size;

    std::vector<std::set<std::string>> gold_sets;
    gold_sets.reserve(data.size());
    for (const auto& ex : data) {
        gold_sets.emplace_back(ex.gold_docs.begin(), ex.gold_docs.end());
    }

    FinetuneResult out;
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_indices(order, rng);
        double epoch_loss = 0.0;
        std::size_t epoch_used = 0;
        std::size_t epoch_skipped = 0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            std::vector<double> grad(encoder.weight.size(), 0.0);
            std::size_t used = 0;
            for (std::size_t i = start; i < end; ++i) {
                const auto& ex = data[order[i]];
                const auto phi = embed_query_checked(ctx, ex.query_text, encoder);
                const auto q = encoder.apply(phi);
                const auto ev = eval_ldoc(*ctx.index, q, gold_sets[order[i]], cfg.top_k, mode);
                if (!ev.usable) {
                    ++epoch_skipped;
                    continue;
                }
                epoch_loss += ev.loss;
                ++used;
                accumulate_ldoc_grad(*ctx.index, ev, phi, mode, grad, encoder.dim_out,
                                     encoder.dim_in);
            }
            if (used > 0 && cfg.learning_rate > 0.0) {
                const double scale = cfg.learning_rate / static_cast<double>(used);
                for (std::size_t w = 0; w < grad.size(); ++w) {
                    encoder.weight[w] -= scale * grad[w];
                }
            }
            epoch_used += used;
        }
        if (epoch_used == 0) {
            throw ValidationError("finetune: every example was skipped (no gold docs retrieved)");
        }
        out.epoch_losses.push_back(epoch_loss / static_cast<double>(epoch_used));
        out.epoch_skipped.push_back(epoch_skipped);
    }
    out.encoder = std::move(encoder);
    return out;
}

FinetuneResult train_contrastive(QueryEncoder encoder, const TrainContext& ctx,
                                 const std::vector<TrainingExample>& data,
                                 const TrainConfig& cfg) {
    require_context(ctx, false);
    encoder.validate();
    if (cfg.epochs < 1) {
        throw ValidationError("training requires epochs >= 1");
    }
    if (cfg.negative_schemes.empty()) {
        throw ValidationError("contrastive training requires at least one negative scheme");
    }
    if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
        throw ValidationError("learning_rate must be finite and >= 0");
    }
    if (data.empty()) {
        throw ValidationError("contrastive training: no training examples");
    }
    const PhraseIndex& index = *ctx.index;
    const std::size_t batch = cfg.batch_size == 0 ? data.size() : cfg.batch_size;
    const bool in_batch = std::find(cfg.negative_schemes.begin(), cfg.negative_schemes.end(),
                                    NegativeScheme::in_batch) != cfg.negative_schemes.end();
    if (in_batch && (batch < 2 || data.size() < 2)) {
        throw ValidationError("in_batch negatives require batch size >= 2");
    }

    std::vector<std::optional<std::int64_t>> positives;
    positives.reserve(data.size());
    for (const auto& ex : data) {
        positives.push_back(resolve_positive_phrase(index, ex));
    }

    FinetuneResult out;
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_indices(order, rng);
        // Batch boundaries; a trailing singleton is folded into the previous
        // batch when in-batch negatives are in play.
        std::vector<std::pair<std::size_t, std::size_t>> ranges;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            ranges.emplace_back(start, std::min(order.size(), start + batch));
        }
        if (in_batch && ranges.size() > 1 && ranges.back().second - ranges.back().first < 2) {
            ranges[ranges.size() - 2].second = ranges.back().second;
            ranges.pop_back();
        }
        double epoch_loss = 0.0;
        std::size_t epoch_used = 0;
        std::size_t epoch_skipped = 0;
        for (const auto& [start, end] : ranges) {
            std::vector<TrainingExample> batch_examples;
            std::vector<std::optional<std::int64_t>> batch_positives;
            batch_examples.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                batch_examples.push_back(data[order[i]]);
                batch_positives.push_back(positives[order[i]]);
            }
            const auto neg_sets =
                build_negative_sets(batch_examples, batch_positives, cfg.negative_schemes, ctx);
            std::vector<double> grad(encoder.weight.size(), 0.0);
            std::size_t used = 0;
            for (std::size_t bi = 0; bi < batch_examples.size(); ++bi) {
                if (!batch_positives[bi]) {
                    ++epoch_skipped;
                    continue;
                }
                const auto pos_row = index.row_of(*batch_positives[bi]);
                if (!pos_row) {
                    ++epoch_skipped;
                    continue;
                }
                const auto phi =
                    embed_query_checked(ctx, batch_examples[bi].query_text, encoder);
                const auto q = encoder.apply(phi);
                std::vector<std::size_t> rows{*pos_row};
                for (std::int64_t nid : neg_sets[bi]) {
                    if (auto r = index.row_of(nid)) {
                        rows.push_back(*r);
                    }
                }
                std::vector<double> scores(rows.size());
                for (std::size_t u = 0; u < rows.size(); ++u) {
                    scores[u] = dot_fd(index.vector_at(rows[u]), q);
                }
                epoch_loss +=
                    nll_loss(scores[0], std::span<const double>(scores).subspan(1));
                ++used;
                const double lse = logsumexp(scores);
                std::vector<double> u_vec(encoder.dim_out, 0.0);
                for (std::size_t u = 0; u < rows.size(); ++u) {
                    const double coeff = std::exp(scores[u] - lse) - (u == 0 ? 1.0 : 0.0);
                    if (coeff == 0.0) {
                        continue;
                    }
                    const auto v = index.vector_at(rows[u]);
                    for (std::size_t a = 0; a < encoder.dim_out; ++a) {
                        u_vec[a] += coeff * static_cast<double>(v[a]);
                    }
                }
                for (std::size_t a = 0; a < encoder.dim_out; ++a) {
                    if (u_vec[a] == 0.0) {
                        continue;
                    }
                    for (std::size_t b = 0; b < encoder.dim_in; ++b) {
                        grad[a * encoder.dim_in + b] +=
                            u_vec[a] * static_cast<double>(phi[b]);
                    }
                }
            }
            if (used > 0 && cfg.learning_rate > 0.0) {
                const double scale = cfg.learning_rate / static_cast<double>(used);
                for (std::size_t w = 0; w < grad.size(); ++w) {
                    encoder.weight[w] -= scale * grad[w];
                }
            }
            epoch_used += used;
        }
        if (epoch_used == 0) {
            throw ValidationError("contrastive training: no example has a resolvable positive");
        }
        out.epoch_losses.push_back(epoch_loss / static_cast<double>(epoch_used));
        out.epoch_skipped.push_back(epoch_skipped);
    }
    out.encoder = std::move(encoder);
    return out;
}

GradCheckReport grad_check(const std::function<double(std::span<const double>)>& loss_fn,
                           std::span<const double> params, std::span<const double> analytic_grad,
                           double h, std::size_t max_coords, std::uint64_t seed) {
    if (params.size() != analytic_grad.size()) {
        throw ValidationError("grad_check: gradient shape mismatch");
    }
    if (!(h > 0.0)) {
        throw ValidationError("grad_check: h must be positive");
    }
    std::vector<std::size_t> coords(params.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords > 0 && coords.size() > max_coords) {
        Rng rng(seed);
        for (std::size_t i = 0; i < max_coords; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(coords.size() - i));
            std::swap(coords[i], coords[j]);
        }
        coords.resize(max_coords);
        std::sort(coords.begin(), coords.end());
    }
    std::vector<double> theta(params.begin(), params.end());
    GradCheckReport report;
    for (std::size_t c : coords) {
        const double orig = theta[c];
        theta[c] = orig + h;
        const double fp = loss_fn(theta);
        theta[c] = orig - h;
        const double fm = loss_fn(theta);
        theta[c] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            report.all_finite = false;
            report.nonfinite_coord = c;
            continue;
        }
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic_grad[c];
        const double denom = std::max(std::abs(a), std::abs(numeric));
        const double err = denom < 1e-10 ? 0.0 : std::abs(a - numeric) / denom;
        if (err > report.max_rel_err) {
            report.max_rel_err = err;
            report.worst_coord = c;
        }
    }
    return report;
}

} // namespace gidx
