#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gidx/bm25.hpp"
#include "gidx/corpus.hpp"
#include "gidx/index.hpp"

namespace gidx {

/// The only trainable component: a linear map from query features to the
/// phrase-index space. Phrase vectors stay frozen.
struct QueryEncoder {
    std::size_t dim_in = 0;
    std::size_t dim_out = 0;
    std::vector<double> weight; // row-major dim_out x dim_in

    static QueryEncoder identity(std::size_t dim);
    static QueryEncoder zeros(std::size_t dim_out, std::size_t dim_in);

    /// W * features, in double precision.
    std::vector<double> apply(std::span<const float> features) const;
    std::vector<float> apply_f(std::span<const float> features) const;

    void validate() const;
    void save(const std::string& path) const;
    static QueryEncoder load(const std::string& path);
};

struct TrainingExample {
    std::string query_text;
    std::vector<std::string> answers;
    std::string gold_passage_id;                             // empty = none
    std::vector<std::string> gold_docs;                      // D*
    std::map<std::string, std::vector<std::string>> negatives; // scheme -> passage ids
};

std::vector<TrainingExample> load_training_jsonl(const std::string& path);
void save_training_jsonl(const std::string& path, const std::vector<TrainingExample>& examples);

enum class NegativeScheme { in_batch, bm25_hard, in_passage, same_phrase };
const char* to_string(NegativeScheme s);
NegativeScheme negative_scheme_from_string(std::string_view s);

struct TrainConfig {
    std::size_t batch_size = 0; // 0 = full batch
    double learning_rate = 0.1;
    std::uint32_t epochs = 10;
    std::uint64_t seed = 42;
    std::size_t top_k = 100; // |S~(q)| for the document-supervised loss
    bool quantization_aware = false;
    std::vector<NegativeScheme> negative_schemes; // contrastive training only
};

/// -log(e^pos / (e^pos + sum e^neg)), max-subtracted for stability.
/// Empty negatives give exactly 0.
double nll_loss(double pos_score, std::span<const double> neg_scores);

/// Everything loss evaluation needs besides the encoder: the frozen index,
/// the corpus it was built from, and the embedding functions of the same
/// pipeline (defaults: the hashed n-gram featurizer).
struct TrainContext {
    const PhraseIndex* index = nullptr;
    const Corpus* corpus = nullptr;
    const Bm25Index* bm25 = nullptr; // optional, for on-the-fly hard-negative mining
    std::function<std::vector<float>(std::string_view)> embed_query;
    std::function<std::vector<float>(std::string_view)> embed_phrase;
    std::uint32_t max_phrase_len = 20;
    std::size_t mined_negatives_per_query = 1;
};

TrainContext make_context(const PhraseIndex& index, const Corpus& corpus,
                          const FeaturizerConfig& cfg, std::uint32_t max_phrase_len = 20,
                          const Bm25Index* bm25 = nullptr);

/// First phrase of the gold passage whose normalized surface equals one of
/// the answers, by ascending phrase id.
std::optional<std::int64_t> resolve_positive_phrase(const PhraseIndex& index,
                                                    const TrainingExample& example);

/// Per-example negative phrase ids under the union of the given schemes.
/// Deduplicated, sorted by phrase id, never containing the positive.
std::vector<std::vector<std::int64_t>> build_negative_sets(
    const std::vector<TrainingExample>& batch,
    const std::vector<std::optional<std::int64_t>>& positives,
    const std::vector<NegativeScheme>& schemes, const TrainContext& ctx);

struct DiagnosticsResult {
    double mean_loss = 0.0;
    std::size_t used = 0;
    std::size_t skipped = 0;
};

/// Mean Eq.-4 loss with uniformly sampled passages as topical negatives.
/// Passage scores aggregate active phrases by max.
DiagnosticsResult l_topic(const QueryEncoder& encoder, const TrainContext& ctx,
                          const std::vector<TrainingExample>& dev, std::size_t num_random,
                          std::uint64_t seed);

/// Mean Eq.-4 loss against one constructed hard negative per example: the
/// gold passage with the answer-bearing sentence removed, re-embedded with
/// the same pipeline. Single-sentence golds are skipped and counted.
DiagnosticsResult l_hard(const QueryEncoder& encoder, const TrainContext& ctx,
                         const std::vector<TrainingExample>& dev);

/// Document-supervised loss over the retrieved top-k phrases. Returns
/// nullopt when no retrieved phrase comes from a gold document.
std::optional<double> ldoc_loss(const QueryEncoder& encoder, const TrainContext& ctx,
                                std::string_view query_text,
                                const std::set<std::string>& gold_docs, std::size_t top_k,
                                ScoreMode mode = ScoreMode::exact);

struct FinetuneResult {
    QueryEncoder encoder;
    std::vector<double> epoch_losses;        // mean usable-example loss per epoch
    std::vector<std::size_t> epoch_skipped;  // examples skipped per epoch
};

/// Gradient descent on the mean document-supervised loss. The retrieved set
/// is recomputed with the current weights at every step; scoring uses raw
/// vectors, or quantizer reconstructions when cfg.quantization_aware.
FinetuneResult query_side_finetune(QueryEncoder encoder, const TrainContext& ctx,
                                   const std::vector<TrainingExample>& data,
                                   const TrainConfig& cfg);

/// Gradient descent on the mean Eq.-4 loss with negatives drawn from
/// cfg.negative_schemes. Examples whose positive phrase cannot be resolved
/// are skipped and counted.
FinetuneResult train_contrastive(QueryEncoder encoder, const TrainContext& ctx,
                                 const std::vector<TrainingExample>& data,
                                 const TrainConfig& cfg);

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t worst_coord = 0;
    bool all_finite = true;
    std::size_t nonfinite_coord = 0;
};

/// Central-difference check of an analytic gradient. Checks every
/// coordinate, or a seeded random subset of max_coords when given.
GradCheckReport grad_check(const std::function<double(std::span<const double>)>& loss_fn,
                           std::span<const double> params, std::span<const double> analytic_grad,
                           double h, std::size_t max_coords = 0, std::uint64_t seed = 0);

} // namespace gidx
