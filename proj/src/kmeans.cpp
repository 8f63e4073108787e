#include "gidx/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gidx/error.hpp"

namespace gidx {

double Rng::gaussian() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

namespace {

double dist2(const double* a, const double* b, std::size_t dim) {
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// Nearest centroid, ties broken by lowest index.
std::uint32_t nearest(const double* x, const std::vector<double>& centroids, std::uint32_t k,
                      std::size_t dim, double* best_out = nullptr) {
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::uint32_t c = 0; c < k; ++c) {
        const double d = dist2(x, centroids.data() + static_cast<std::size_t>(c) * dim, dim);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    if (best_out) {
        *best_out = best_d;
    }
    return best;
}

std::vector<double> plus_plus_init(std::span<const double> data, std::size_t n, std::size_t dim,
                                   std::uint32_t k, Rng& rng) {
    std::vector<double> centroids(static_cast<std::size_t>(k) * dim);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());

    auto set_centroid = [&](std::uint32_t c, std::size_t point) {
        std::copy_n(data.data() + point * dim, dim, centroids.data() + static_cast<std::size_t>(c) * dim);
    };

    set_centroid(0, static_cast<std::size_t>(rng.below(n)));
    for (std::uint32_t c = 1; c < k; ++c) {
        const double* prev = centroids.data() + static_cast<std::size_t>(c - 1) * dim;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], dist2(data.data() + i * dim, prev, dim));
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double cum = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                cum += d2[i];
                if (cum > r) {
                    pick = i;
                    break;
                }
            }
        } else {
            // All remaining mass is zero (duplicated data); any point works.
            pick = static_cast<std::size_t>(rng.below(n));
        }
        set_centroid(c, pick);
    }
    return centroids;
}

KmeansResult lloyd(std::span<const double> data, std::size_t n, std::size_t dim, std::uint32_t k,
                   std::uint32_t iters, std::vector<double> centroids) {
    KmeansResult res;
    res.assignment.assign(n, 0);
    std::vector<std::size_t> counts(k, 0);

    auto assign_all = [&]() {
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            res.assignment[i] = nearest(data.data() + i * dim, centroids, k, dim);
            ++counts[res.assignment[i]];
        }
    };

    auto objective = [&]() {
        double j = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            j += dist2(data.data() + i * dim,
                       centroids.data() + static_cast<std::size_t>(res.assignment[i]) * dim, dim);
        }
        return j;
    };

    // Reassign the farthest point of any populated cluster to each empty
    // cluster; the donor must keep at least one point.
    auto fix_empty = [&]() {
        for (std::uint32_t c = 0; c < k; ++c) {
            if (counts[c] != 0) {
                continue;
            }
            std::size_t far_i = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[res.assignment[i]] < 2) {
                    continue;
                }
                const double d = dist2(
                    data.data() + i * dim,
                    centroids.data() + static_cast<std::size_t>(res.assignment[i]) * dim, dim);
                if (d > far_d) {
                    far_d = d;
                    far_i = i;
                }
            }
            if (far_i == n) {
                continue; // n < k was rejected earlier; every cluster is a singleton
            }
            --counts[res.assignment[far_i]];
            res.assignment[far_i] = c;
            counts[c] = 1;
            std::copy_n(data.data() + far_i * dim, dim,
                        centroids.data() + static_cast<std::size_t>(c) * dim);
        }
    };

    auto update_means = [&]() {
        std::vector<double> sums(static_cast<std::size_t>(k) * dim, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double* dst = sums.data() + static_cast<std::size_t>(res.assignment[i]) * dim;
            const double* src = data.data() + i * dim;
            for (std::size_t j = 0; j < dim; ++j) {
                dst[j] += src[j];
            }
        }
        for (std::uint32_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                continue; // keep previous centroid
            }
            const double inv = 1.0 / static_cast<double>(counts[c]);
            double* dst = centroids.data() + static_cast<std::size_t>(c) * dim;
            for (std::size_t j = 0; j < dim; ++j) {
                dst[j] = sums[static_cast<std::size_t>(c) * dim + j] * inv;
            }
        }
    };

    assign_all();
    res.objective_history.push_back(objective());
    for (std::uint32_t it = 0; it < iters; ++it) {
        assign_all();
        fix_empty();
        update_means();
        res.objective_history.push_back(objective());
    }
    res.centroids = std::move(centroids);
    return res;
}

void check_args(std::size_t n, std::size_t dim, std::uint32_t k, std::uint32_t iters) {
    if (n == 0 || dim == 0) {
        throw ValidationError("kmeans requires nonempty data");
    }
    if (k == 0 || static_cast<std::size_t>(k) > n) {
        throw ValidationError("kmeans requires 1 <= k <= n, got k=" + std::to_string(k) +
                              " n=" + std::to_string(n));
    }
    if (iters < 1) {
        throw ValidationError("kmeans requires iters >= 1");
    }
}

} // namespace

KmeansResult kmeans(std::span<const double> data, std::size_t n, std::size_t dim, std::uint32_t k,
                    std::uint32_t iters, std::uint64_t seed) {
    check_args(n, dim, k, iters);
    Rng rng(seed);
    return lloyd(data, n, dim, k, iters, plus_plus_init(data, n, dim, k, rng));
}

KmeansResult kmeans_warm(std::span<const double> data, std::size_t n, std::size_t dim,
                         std::uint32_t k, std::uint32_t iters,
                         std::span<const double> initial_centroids) {
    check_args(n, dim, k, iters);
    if (initial_centroids.size() != static_cast<std::size_t>(k) * dim) {
        throw ValidationError("kmeans_warm: initial centroid shape mismatch");
    }
    return lloyd(data, n, dim, k, iters,
                 std::vector<double>(initial_centroids.begin(), initial_centroids.end()));
}

} // namespace gidx
