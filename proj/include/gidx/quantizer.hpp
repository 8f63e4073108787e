#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gidx {

/// Per-query lookup table for asymmetric distance computation: one inner
/// product per (subspace, centroid) pair against the rotated query.
struct AdcTable {
    std::uint32_t num_subspaces = 0;
    std::uint32_t num_centroids = 0;
    std::vector<double> table; // num_subspaces x num_centroids

    double score(std::span<const std::uint16_t> codes) const;
};

/// Product quantizer with an optional learned orthogonal rotation (OPQ).
/// Codebooks are trained per subspace; encoding rotates the input and picks
/// the nearest centroid in each subspace.
class QuantizerModel {
public:
    QuantizerModel() = default;

    std::uint32_t dim() const { return dim_; }
    std::uint32_t num_subspaces() const { return num_subspaces_; }
    std::uint32_t num_centroids() const { return num_centroids_; }
    std::uint32_t subspace_dim() const { return dim_ / num_subspaces_; }
    bool trained() const { return trained_; }
    bool has_rotation() const { return !rotation_.empty(); }

    /// Codebook of one subspace, num_centroids x subspace_dim row-major.
    std::span<const float> codebook(std::uint32_t m) const;
    /// Row-major dim x dim rotation; empty means identity.
    std::span<const float> rotation() const { return rotation_; }

    /// Max absolute entry of R^T R - I (0 for the identity rotation).
    double rotation_orthogonality_error() const;

    std::vector<std::uint16_t> encode(std::span<const float> vec) const;
    std::vector<float> reconstruct(std::span<const std::uint16_t> codes) const;

    AdcTable adc_table(std::span<const float> query) const;
    /// Equals the inner product of `query` with reconstruct(codes).
    double adc_score(std::span<const float> query, std::span<const std::uint16_t> codes) const;

    /// Bytes for codebooks, rotation (when present), and num_vectors codes
    /// at M*log2(K) bits each, rounded up to whole bytes per vector.
    std::size_t memory_footprint(std::size_t num_vectors) const;

    void save(const std::string& path) const;
    static QuantizerModel load(const std::string& path);

private:
    friend QuantizerModel train_pq(std::span<const float>, std::size_t, std::uint32_t,
                                   std::uint32_t, std::uint32_t, std::uint32_t, std::uint64_t,
                                   struct QuantizerTrainReport*);
    friend QuantizerModel train_opq(std::span<const float>, std::size_t, std::uint32_t,
                                    std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t,
                                    std::uint64_t, struct QuantizerTrainReport*);

    std::vector<double> rotate(std::span<const float> vec) const;

    std::uint32_t dim_ = 0;
    std::uint32_t num_subspaces_ = 0;
    std::uint32_t num_centroids_ = 0;
    std::vector<float> codebooks_; // num_subspaces x num_centroids x subspace_dim
    std::vector<float> rotation_;  // dim x dim, empty = identity
    bool trained_ = false;
};

struct QuantizerTrainReport {
    /// Total squared reconstruction error, recorded after initialization,
    /// after every Lloyd iteration (summed across subspaces), and — for OPQ —
    /// after every rotation update. Non-increasing within a run.
    std::vector<double> objective_history;
    double final_objective = 0.0;
};

/// Plain product quantization: independent per-subspace k-means, identity
/// rotation. Requires dim % num_subspaces == 0, power-of-two num_centroids,
/// and at least num_centroids training rows.
QuantizerModel train_pq(std::span<const float> vectors, std::size_t n, std::uint32_t dim,
                        std::uint32_t num_subspaces, std::uint32_t num_centroids,
                        std::uint32_t iters, std::uint64_t seed,
                        QuantizerTrainReport* report = nullptr);

/// Optimized product quantization: alternates per-subspace k-means in the
/// rotated space with an orthogonal Procrustes update of the rotation. The
/// first outer iteration reproduces train_pq exactly (same seed), so the
/// final objective never exceeds plain PQ's.
QuantizerModel train_opq(std::span<const float> vectors, std::size_t n, std::uint32_t dim,
                         std::uint32_t num_subspaces, std::uint32_t num_centroids,
                         std::uint32_t outer_iters, std::uint32_t kmeans_iters,
                         std::uint64_t seed, QuantizerTrainReport* report = nullptr);

} // namespace gidx
