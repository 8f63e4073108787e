#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gidx {

/// Deterministic splitmix64 stream. Used everywhere randomness is needed so
/// results are identical across platforms and standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) {
        return bound == 0 ? 0 : next() % bound;
    }

    /// Standard normal via Box-Muller.
    double gaussian();

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

struct KmeansResult {
    std::vector<double> centroids;            // k x dim, row-major
    std::vector<std::uint32_t> assignment;    // size n
    /// objective_history[0] is the sum of squared distances right after
    /// initialization; one more entry per Lloyd iteration. Non-increasing.
    std::vector<double> objective_history;
};

/// Lloyd's algorithm with k-means++ seeding. Runs exactly `iters`
/// iterations; empty clusters are re-seeded to the point farthest from its
/// current centroid. Requires k <= n and iters >= 1.
KmeansResult kmeans(std::span<const double> data, std::size_t n, std::size_t dim,
                    std::uint32_t k, std::uint32_t iters, std::uint64_t seed);

/// Same as kmeans() but warm-started from the given centroids (k x dim).
KmeansResult kmeans_warm(std::span<const double> data, std::size_t n, std::size_t dim,
                         std::uint32_t k, std::uint32_t iters,
                         std::span<const double> initial_centroids);

} // namespace gidx
