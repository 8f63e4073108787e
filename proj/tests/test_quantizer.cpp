#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <vector>

#include "gidx/error.hpp"
#include "gidx/kmeans.hpp"
#include "gidx/quantizer.hpp"

using namespace gidx;

namespace {

std::vector<float> gaussian_data(Rng& rng, std::size_t n, std::uint32_t dim, double scale = 1.0) {
    std::vector<float> x(n * dim);
    for (auto& v : x) {
        v = static_cast<float>(rng.gaussian() * scale);
    }
    return x;
}

// Data whose subspaces each take one of `centers` distinct values: plain PQ
// can reach zero reconstruction error.
std::vector<float> separable_data(Rng& rng, std::size_t n, std::uint32_t dim, std::uint32_t m,
                                  std::uint32_t centers) {
    const std::uint32_t dsub = dim / m;
    std::vector<std::vector<float>> pool;
    for (std::uint32_t c = 0; c < centers * m; ++c) {
        std::vector<float> v(dsub);
        for (auto& x : v) {
            x = static_cast<float>(rng.gaussian());
        }
        pool.push_back(std::move(v));
    }
    std::vector<float> data(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::uint32_t s = 0; s < m; ++s) {
            const auto& v = pool[s * centers + rng.below(centers)];
            std::copy(v.begin(), v.end(), data.begin() + i * dim + s * dsub);
        }
    }
    return data;
}

bool non_increasing(const std::vector<double>& xs, double slack = 1e-9) {
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (xs[i] > xs[i - 1] + slack) {
            return false;
        }
    }
    return true;
}

double reconstruction_error(const QuantizerModel& model, const std::vector<float>& data,
                            std::size_t n, std::uint32_t dim) {
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::span<const float> v(data.data() + i * dim, dim);
        const auto rec = model.reconstruct(model.encode(v));
        for (std::uint32_t j = 0; j < dim; ++j) {
            const double d = static_cast<double>(v[j]) - rec[j];
            err += d * d;
        }
    }
    return err;
}

} // namespace

TEST_CASE("kmeans recovers k distinct repeated points exactly") {
    std::vector<double> data;
    const std::vector<std::vector<double>> points = {{0.0, 0.0}, {5.0, 5.0}, {-3.0, 4.0}};
    for (int rep = 0; rep < 7; ++rep) {
        for (const auto& p : points) {
            data.insert(data.end(), p.begin(), p.end());
        }
    }
    auto res = kmeans(data, 21, 2, 3, 10, 42);
    CHECK(res.objective_history.back() == doctest::Approx(0.0).epsilon(1e-12));
    std::set<std::pair<double, double>> got;
    for (int c = 0; c < 3; ++c) {
        got.emplace(res.centroids[c * 2], res.centroids[c * 2 + 1]);
    }
    CHECK(got.count({0.0, 0.0}) == 1);
    CHECK(got.count({5.0, 5.0}) == 1);
    CHECK(got.count({-3.0, 4.0}) == 1);
}

TEST_CASE("kmeans with one cluster converges to the mean") {
    std::vector<double> data = {1.0, 2.0, 3.0, 6.0};
    auto res = kmeans(data, 4, 1, 1, 5, 1);
    CHECK(res.centroids[0] == doctest::Approx(3.0));
}

TEST_CASE("kmeans objective is non-increasing") {
    Rng rng(77);
    std::vector<double> data(300 * 4);
    for (auto& v : data) {
        v = rng.gaussian();
    }
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        auto res = kmeans(data, 300, 4, 8, 25, seed);
        CHECK(non_increasing(res.objective_history, 0.0));
        CHECK(res.objective_history.size() == 26);
    }
}

TEST_CASE("kmeans fills empty clusters from duplicates") {
    std::vector<double> data = {0.0, 0.0, 1.0, 1.0};
    auto res = kmeans(data, 4, 1, 3, 5, 9);
    std::set<std::uint32_t> used(res.assignment.begin(), res.assignment.end());
    CHECK(used.size() == 3);
    CHECK(non_increasing(res.objective_history, 0.0));
}

TEST_CASE("kmeans validates arguments") {
    std::vector<double> data = {1.0, 2.0};
    CHECK_THROWS_AS(kmeans(data, 2, 1, 3, 5, 0), ValidationError);
    CHECK_THROWS_AS(kmeans(data, 2, 1, 1, 0, 0), ValidationError);
    CHECK_NOTHROW(kmeans(data, 2, 1, 2, 1, 0));
}

TEST_CASE("train_pq reaches zero error on k distinct repeated points") {
    Rng rng(5);
    const std::uint32_t dim = 8, m = 2, k = 4;
    auto base = gaussian_data(rng, k, dim);
    std::vector<float> data;
    for (int rep = 0; rep < 6; ++rep) {
        data.insert(data.end(), base.begin(), base.end());
    }
    QuantizerTrainReport report;
    auto model = train_pq(data, 6 * k, dim, m, k, 10, 3, &report);
    CHECK(report.final_objective == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(reconstruction_error(model, data, 6 * k, dim) < 1e-10);
}

TEST_CASE("train_pq with M=d K=1 stores per-dimension means") {
    std::vector<float> data = {1.0f, 10.0f, 3.0f, 20.0f};
    auto model = train_pq(data, 2, 2, 2, 1, 3, 0);
    CHECK(model.codebook(0)[0] == doctest::Approx(2.0));
    CHECK(model.codebook(1)[0] == doctest::Approx(15.0));
}

TEST_CASE("train_pq objective history is non-increasing on gaussian data") {
    Rng rng(11);
    auto data = gaussian_data(rng, 400, 16);
    QuantizerTrainReport report;
    train_pq(data, 400, 16, 4, 8, 15, 123, &report);
    CHECK(report.objective_history.size() == 16);
    CHECK(non_increasing(report.objective_history, 0.0));
}

TEST_CASE("train_pq validates parameters") {
    Rng rng(1);
    auto data = gaussian_data(rng, 10, 8);
    CHECK_THROWS_AS(train_pq(data, 10, 8, 3, 4, 5, 0), ValidationError);  // M does not divide d
    CHECK_THROWS_AS(train_pq(data, 10, 8, 2, 3, 5, 0), ValidationError);  // K not a power of two
    CHECK_THROWS_AS(train_pq(data, 10, 8, 2, 16, 5, 0), ValidationError); // K > rows
}

TEST_CASE("OPQ equals PQ on already-separable data") {
    Rng rng(21);
    const std::uint32_t dim = 8, m = 2, k = 4;
    auto data = separable_data(rng, 64, dim, m, k);
    QuantizerTrainReport pq_rep, opq_rep;
    train_pq(data, 64, dim, m, k, 10, 7, &pq_rep);
    auto opq = train_opq(data, 64, dim, m, k, 4, 10, 7, &opq_rep);
    CHECK(std::abs(opq_rep.final_objective - pq_rep.final_objective) < 1e-6);
    CHECK(opq.rotation_orthogonality_error() < 1e-5);
}

TEST_CASE("OPQ beats or matches PQ on rotated separable data") {
    Rng rng(31);
    const std::uint32_t dim = 8, m = 2, k = 4;
    for (int trial = 0; trial < 6; ++trial) {
        auto data = separable_data(rng, 96, dim, m, k);
        // random rotation via Gram-Schmidt of a gaussian matrix
        std::vector<double> g(dim * dim);
        for (auto& v : g) {
            v = rng.gaussian();
        }
        std::vector<double> q(dim * dim, 0.0);
        for (std::uint32_t c = 0; c < dim; ++c) {
            std::vector<double> col(dim);
            for (std::uint32_t r = 0; r < dim; ++r) {
                col[r] = g[r * dim + c];
            }
            for (std::uint32_t prev = 0; prev < c; ++prev) {
                double dot = 0.0;
                for (std::uint32_t r = 0; r < dim; ++r) {
                    dot += q[r * dim + prev] * col[r];
                }
                for (std::uint32_t r = 0; r < dim; ++r) {
                    col[r] -= dot * q[r * dim + prev];
                }
            }
            double norm = 0.0;
            for (double v : col) {
                norm += v * v;
            }
            norm = std::sqrt(norm);
            for (std::uint32_t r = 0; r < dim; ++r) {
                q[r * dim + c] = col[r] / norm;
            }
        }
        std::vector<float> rotated(data.size());
        for (std::size_t i = 0; i < 96; ++i) {
            for (std::uint32_t r = 0; r < dim; ++r) {
                double s = 0.0;
                for (std::uint32_t cdim = 0; cdim < dim; ++cdim) {
                    s += q[r * dim + cdim] * static_cast<double>(data[i * dim + cdim]);
                }
                rotated[i * dim + r] = static_cast<float>(s);
            }
        }
        QuantizerTrainReport pq_rep, opq_rep;
        train_pq(rotated, 96, dim, m, k, 10, 100 + trial, &pq_rep);
        auto opq = train_opq(rotated, 96, dim, m, k, 8, 10, 100 + trial, &opq_rep);
        CHECK(opq_rep.final_objective <= pq_rep.final_objective + 1e-9);
        CHECK(non_increasing(opq_rep.objective_history, 1e-9));
        CHECK(opq.rotation_orthogonality_error() < 1e-5);
    }
}

TEST_CASE("encode matches a brute-force nearest-centroid scan") {
    Rng rng(41);
    auto data = gaussian_data(rng, 200, 16);
    auto model = train_pq(data, 200, 16, 4, 8, 10, 17);
    const std::uint32_t dsub = model.subspace_dim();
    for (int t = 0; t < 50; ++t) {
        std::vector<float> v(16);
        for (auto& x : v) {
            x = static_cast<float>(rng.gaussian());
        }
        const auto codes = model.encode(v);
        for (std::uint32_t m = 0; m < model.num_subspaces(); ++m) {
            const auto cb = model.codebook(m);
            double best = 1e300;
            std::uint16_t best_c = 0;
            for (std::uint16_t c = 0; c < model.num_centroids(); ++c) {
                double d = 0.0;
                for (std::uint32_t j = 0; j < dsub; ++j) {
                    const double diff = static_cast<double>(v[m * dsub + j]) -
                                        static_cast<double>(cb[c * dsub + j]);
                    d += diff * diff;
                }
                if (d < best) {
                    best = d;
                    best_c = c;
                }
            }
            CHECK(codes[m] == best_c);
        }
    }
}

TEST_CASE("encode with K=1 yields all-zero codes") {
    Rng rng(51);
    auto data = gaussian_data(rng, 20, 8);
    auto model = train_pq(data, 20, 8, 4, 1, 3, 0);
    std::vector<float> v(8, 0.5f);
    for (auto c : model.encode(v)) {
        CHECK(c == 0);
    }
}

TEST_CASE("encode on an untrained model is a state error") {
    QuantizerModel model;
    std::vector<float> v(8, 0.0f);
    CHECK_THROWS_AS(model.encode(v), StateError);
}

TEST_CASE("reconstruct round-trips exactly when K covers the data") {
    Rng rng(61);
    const std::uint32_t dim = 8, m = 2, k = 8;
    auto base = gaussian_data(rng, k, dim);
    std::vector<float> data;
    for (int rep = 0; rep < 4; ++rep) {
        data.insert(data.end(), base.begin(), base.end());
    }
    auto model = train_pq(data, 4 * k, dim, m, k, 10, 5);
    for (std::uint32_t i = 0; i < k; ++i) {
        const std::span<const float> v(base.data() + i * dim, dim);
        const auto rec = model.reconstruct(model.encode(v));
        for (std::uint32_t j = 0; j < dim; ++j) {
            CHECK(std::abs(rec[j] - v[j]) < 1e-5);
        }
    }
}

TEST_CASE("reconstruct rejects out-of-range codes") {
    Rng rng(71);
    auto data = gaussian_data(rng, 32, 8);
    auto model = train_pq(data, 32, 8, 2, 4, 5, 0);
    std::vector<std::uint16_t> codes = {0, 7};
    CHECK_THROWS_AS(model.reconstruct(codes), ValidationError);
}

TEST_CASE("reconstruction error shrinks as K grows") {
    Rng rng(81);
    auto data = gaussian_data(rng, 300, 8);
    double prev = 1e300;
    for (std::uint32_t k : {2u, 16u, 256u}) {
        auto model = train_pq(data, 300, 8, 2, k, 12, 99);
        const double err = reconstruction_error(model, data, 300, 8);
        CHECK(err < prev);
        prev = err;
    }
}

TEST_CASE("adc score equals inner product with the reconstruction") {
    Rng rng(91);
    auto data = gaussian_data(rng, 200, 32);
    for (bool opq : {false, true}) {
        auto model = opq ? train_opq(data, 200, 32, 8, 16, 3, 8, 7)
                         : train_pq(data, 200, 32, 8, 16, 8, 7);
        std::vector<float> zero(32, 0.0f);
        std::vector<float> probe(32);
        for (auto& x : probe) {
            x = static_cast<float>(rng.gaussian());
        }
        const auto codes = model.encode(probe);
        CHECK(model.adc_score(zero, codes) == doctest::Approx(0.0).epsilon(1e-12));

        double worst = 0.0;
        for (int t = 0; t < 40; ++t) {
            std::vector<float> q(32);
            for (auto& x : q) {
                x = static_cast<float>(rng.gaussian());
            }
            const auto table = model.adc_table(q);
            for (int u = 0; u < 25; ++u) {
                std::vector<float> v(32);
                for (auto& x : v) {
                    x = static_cast<float>(rng.gaussian());
                }
                const auto c = model.encode(v);
                const auto rec = model.reconstruct(c);
                double exact = 0.0;
                for (int j = 0; j < 32; ++j) {
                    exact += static_cast<double>(q[j]) * rec[j];
                }
                worst = std::max(worst, std::abs(table.score(c) - exact));
            }
        }
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("memory footprint formula") {
    Rng rng(101);
    auto data = gaussian_data(rng, 1000, 64);
    auto pq = train_pq(data, 1000, 64, 8, 256, 4, 3);
    CHECK(pq.memory_footprint(1000) == 65536 + 8000);
    auto opq = train_opq(data, 1000, 64, 8, 256, 2, 4, 3);
    CHECK(opq.memory_footprint(1000) == 65536 + 16384 + 8000);

    // K=2, M=1: one bit per vector, 8 vectors pack into one byte of codes.
    auto tiny = train_pq(data, 1000, 64, 1, 2, 4, 3);
    const std::size_t codebook_bytes = 2u * 64u * 4u;
    CHECK(tiny.memory_footprint(8) == codebook_bytes + 1); CHECK(tiny.memory_footprint(9) == codebook_bytes + 2);
}

TEST_CASE("quantized recall on clustered data") {
    // 1000 vectors in 8 clusters (d=32, M=8, K=16). Queries aim at small
    // clusters so the exact top-10 is cluster-determined; recall@10 then
    // measures whether quantization keeps retrieval inside the right cluster.
    Rng rng(111);
    const std::uint32_t dim = 32;
    const std::size_t n = 1000;
    std::vector<double> g(8 * dim);
    for (auto& v : g) {
        v = rng.gaussian();
    }
    // Gram-Schmidt the centers, norm 4 each.
    std::vector<double> centers(8 * dim, 0.0);
    for (int c = 0; c < 8; ++c) {
        std::vector<double> row(g.begin() + c * dim, g.begin() + (c + 1) * dim);
        for (int p = 0; p < c; ++p) {
            double d = 0.0;
            for (std::uint32_t j = 0; j < dim; ++j) {
                d += centers[p * dim + j] * row[j];
            }
            d /= 16.0;
            for (std::uint32_t j = 0; j < dim; ++j) {
                row[j] -= d * centers[p * dim + j];
            }
        }
        double norm = 0.0;
        for (double v : row) {
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (std::uint32_t j = 0; j < dim; ++j) {
            centers[c * dim + j] = row[j] / norm * 4.0;
        }
    }
    const std::vector<int> sizes = {12, 12, 12, 12, 238, 238, 238, 238};
    std::vector<float> data;
    data.reserve(n * dim);
    for (int c = 0; c < 8; ++c) {
        for (int i = 0; i < sizes[c]; ++i) {
            for (std::uint32_t j = 0; j < dim; ++j) {
                data.push_back(
                    static_cast<float>(centers[c * dim + j] + rng.gaussian() * 0.2));
            }
        }
    }
    auto model = train_opq(data, n, dim, 8, 16, 3, 10, 2024);
    std::vector<std::vector<std::uint16_t>> codes(n);
    for (std::size_t i = 0; i < n; ++i) {
        codes[i] = model.encode(std::span<const float>(data.data() + i * dim, dim));
    }

    double recall_sum = 0.0;
    const int queries = 20;
    for (int t = 0; t < queries; ++t) {
        const int c = t % 4;
        std::vector<float> q(dim);
        for (std::uint32_t j = 0; j < dim; ++j) {
            q[j] = static_cast<float>(centers[c * dim + j] + rng.gaussian() * 0.1);
        }
        std::vector<std::pair<double, std::size_t>> exact;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::uint32_t j = 0; j < dim; ++j) {
                s += static_cast<double>(q[j]) * data[i * dim + j];
            }
            exact.emplace_back(s, i);
        }
        std::partial_sort(exact.begin(), exact.begin() + 10, exact.end(),
                          [](auto& a, auto& b) { return a.first > b.first; });
        const auto table = model.adc_table(q);
        std::vector<std::pair<double, std::size_t>> approx;
        for (std::size_t i = 0; i < n; ++i) {
            approx.emplace_back(table.score(codes[i]), i);
        }
        std::partial_sort(approx.begin(), approx.begin() + 10, approx.end(),
                          [](auto& a, auto& b) { return a.first > b.first; });
        std::set<std::size_t> truth;
        for (int i = 0; i < 10; ++i) {
            truth.insert(exact[i].second);
        }
        int hit = 0;
        for (int i = 0; i < 10; ++i) {
            hit += truth.count(approx[i].second) ? 1 : 0;
        }
        recall_sum += hit / 10.0;
    }
    CHECK(recall_sum / queries >= 0.8);
}

TEST_CASE("model file round-trip") {
    Rng rng(121);
    auto data = gaussian_data(rng, 100, 16);
    const auto path = (std::filesystem::temp_directory_path() / "gidx_model.gopq").string();
    for (bool opq : {false, true}) {
        auto model = opq ? train_opq(data, 100, 16, 4, 8, 2, 5, 77)
                         : train_pq(data, 100, 16, 4, 8, 5, 77);
        model.save(path);
        auto loaded = QuantizerModel::load(path);
        CHECK(loaded.dim() == model.dim());
        CHECK(loaded.num_subspaces() == model.num_subspaces());
        CHECK(loaded.num_centroids() == model.num_centroids());
        CHECK(loaded.has_rotation() == model.has_rotation());
        std::vector<float> v(16);
        for (auto& x : v) {
            x = static_cast<float>(rng.gaussian());
        }
        CHECK(loaded.encode(v) == model.encode(v));
        const auto a = model.reconstruct(model.encode(v));
        const auto b = loaded.reconstruct(loaded.encode(v));
        CHECK(a == b);
    }
    std::remove(path.c_str());
}
