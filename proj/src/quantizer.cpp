#include "gidx/quantizer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <Eigen/Dense>

#include "gidx/error.hpp"
#include "gidx/kmeans.hpp"

namespace gidx {

namespace {

std::uint64_t subspace_seed(std::uint64_t seed, std::uint32_t m) {
    // One splitmix step keeps per-subspace streams independent.
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (m + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void check_train_args(std::size_t n, std::uint32_t dim, std::uint32_t m, std::uint32_t k,
                      std::uint32_t iters) {
    if (n == 0 || dim == 0) {
        throw ValidationError("quantizer training requires nonempty data");
    }
    if (m == 0 || dim % m != 0) {
        throw ValidationError("num_subspaces must divide dim (dim=" + std::to_string(dim) +
                              ", M=" + std::to_string(m) + ")");
    }
    if (k == 0 || !std::has_single_bit(k)) {
        throw ValidationError("num_centroids must be a power of two, got " + std::to_string(k));
    }
    if (k > 65536) {
        throw ValidationError("num_centroids must be <= 65536");
    }
    if (static_cast<std::size_t>(k) > n) {
        throw ValidationError("num_centroids (" + std::to_string(k) +
                              ") exceeds training row count (" + std::to_string(n) + ")");
    }
    if (iters < 1) {
        throw ValidationError("training requires iters >= 1");
    }
}

// Extracts subspace m of a row-major n x dim double matrix.
std::vector<double> subspace_of(const std::vector<double>& x, std::size_t n, std::uint32_t dim,
                                std::uint32_t dsub, std::uint32_t m) {
    std::vector<double> out(n * dsub);
    for (std::size_t i = 0; i < n; ++i) {
        const double* src = x.data() + i * dim + static_cast<std::size_t>(m) * dsub;
        std::copy_n(src, dsub, out.data() + i * dsub);
    }
    return out;
}

struct SubspaceFit {
    std::vector<std::vector<double>> centroids;   // per subspace, k x dsub
    std::vector<std::vector<std::uint32_t>> assignment;
    std::vector<double> summed_history;
};

// Runs k-means independently in every subspace of `x` and sums the
// per-iteration objectives so the combined history stays comparable.
SubspaceFit fit_subspaces(const std::vector<double>& x, std::size_t n, std::uint32_t dim,
                          std::uint32_t m, std::uint32_t k, std::uint32_t iters,
                          std::uint64_t seed, const SubspaceFit* warm) {
    const std::uint32_t dsub = dim / m;
    SubspaceFit fit;
    fit.centroids.resize(m);
    fit.assignment.resize(m);
    fit.summed_history.assign(static_cast<std::size_t>(iters) + 1, 0.0);
    for (std::uint32_t s = 0; s < m; ++s) {
        const auto sub = subspace_of(x, n, dim, dsub, s);
        KmeansResult r = warm ? kmeans_warm(sub, n, dsub, k, iters, warm->centroids[s])
                              : kmeans(sub, n, dsub, k, iters, subspace_seed(seed, s));
        for (std::size_t t = 0; t < r.objective_history.size(); ++t) {
            fit.summed_history[t] += r.objective_history[t];
        }
        fit.centroids[s] = std::move(r.centroids);
        fit.assignment[s] = std::move(r.assignment);
    }
    return fit;
}

std::vector<double> to_double(std::span<const float> v) {
    return {v.begin(), v.end()};
}

// Reconstruction matrix (n x dim) in the rotated space.
std::vector<double> reconstructions(const SubspaceFit& fit, std::size_t n, std::uint32_t dim,
                                    std::uint32_t m) {
    const std::uint32_t dsub = dim / m;
    std::vector<double> y(n * dim);
    for (std::uint32_t s = 0; s < m; ++s) {
        for (std::size_t i = 0; i < n; ++i) {
            const double* c = fit.centroids[s].data() +
                              static_cast<std::size_t>(fit.assignment[s][i]) * dsub;
            std::copy_n(c, dsub, y.data() + i * dim + static_cast<std::size_t>(s) * dsub);
        }
    }
    return y;
}

void store_codebooks(const SubspaceFit& fit, std::uint32_t m, std::uint32_t k,
                     std::uint32_t dsub, std::vector<float>& out) {
    out.resize(static_cast<std::size_t>(m) * k * dsub);
    for (std::uint32_t s = 0; s < m; ++s) {
        for (std::size_t j = 0; j < static_cast<std::size_t>(k) * dsub; ++j) {
            out[static_cast<std::size_t>(s) * k * dsub + j] =
                static_cast<float>(fit.centroids[s][j]);
        }
    }
}

} // namespace

double AdcTable::score(std::span<const std::uint16_t> codes) const {
    if (codes.size() != num_subspaces) {
        throw ValidationError("adc: code length mismatch");
    }
    double s = 0.0;
    for (std::uint32_t m = 0; m < num_subspaces; ++m) {
        const std::uint16_t c = codes[m];
        if (c >= num_centroids) {
            throw ValidationError("adc: code out of range");
        }
        s += table[static_cast<std::size_t>(m) * num_centroids + c];
    }
    return s;
}

std::span<const float> QuantizerModel::codebook(std::uint32_t m) const {
    const std::size_t per = static_cast<std::size_t>(num_centroids_) * subspace_dim();
    return {codebooks_.data() + m * per, per};
}

double QuantizerModel::rotation_orthogonality_error() const {
    if (!has_rotation()) {
        return 0.0;
    }
    const std::uint32_t d = dim_;
    double worst = 0.0;
    for (std::uint32_t i = 0; i < d; ++i) {
        for (std::uint32_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::uint32_t r = 0; r < d; ++r) {
                s += static_cast<double>(rotation_[r * d + i]) * rotation_[r * d + j];
            }
            worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

std::vector<double> QuantizerModel::rotate(std::span<const float> vec) const {
    std::vector<double> out(dim_);
    if (!has_rotation()) {
        std::copy(vec.begin(), vec.end(), out.begin());
        return out;
    }
    for (std::uint32_t i = 0; i < dim_; ++i) {
        double s = 0.0;
        const float* row = rotation_.data() + static_cast<std::size_t>(i) * dim_;
        for (std::uint32_t j = 0; j < dim_; ++j) {
            s += static_cast<double>(row[j]) * vec[j];
        }
        out[i] = s;
    }
    return out;
}

std::vector<std::uint16_t> QuantizerModel::encode(std::span<const float> vec) const {
    if (!trained_) {
        throw StateError("encode called on untrained quantizer");
    }
    if (vec.size() != dim_) {
        throw ValidationError("encode: vector dim mismatch");
    }
    const auto x = rotate(vec);
    const std::uint32_t dsub = subspace_dim();
    std::vector<std::uint16_t> codes(num_subspaces_);
    for (std::uint32_t m = 0; m < num_subspaces_; ++m) {
        const auto cb = codebook(m);
        const double* xm = x.data() + static_cast<std::size_t>(m) * dsub;
        std::uint32_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::uint32_t c = 0; c < num_centroids_; ++c) {
            const float* cent = cb.data() + static_cast<std::size_t>(c) * dsub;
            double d = 0.0;
            for (std::uint32_t j = 0; j < dsub; ++j) {
                const double t = xm[j] - static_cast<double>(cent[j]);
                d += t * t;
            }
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        codes[m] = static_cast<std::uint16_t>(best);
    }
    return codes;
}

std::vector<float> QuantizerModel::reconstruct(std::span<const std::uint16_t> codes) const {
    if (!trained_) {
        throw StateError("reconstruct called on untrained quantizer");
    }
    if (codes.size() != num_subspaces_) {
        throw ValidationError("reconstruct: code length mismatch");
    }
    const std::uint32_t dsub = subspace_dim();
    std::vector<double> y(dim_);
    for (std::uint32_t m = 0; m < num_subspaces_; ++m) {
        if (codes[m] >= num_centroids_) {
            throw ValidationError("reconstruct: code " + std::to_string(codes[m]) +
                                  " out of range [0," + std::to_string(num_centroids_) + ")");
        }
        const auto cb = codebook(m);
        const float* cent = cb.data() + static_cast<std::size_t>(codes[m]) * dsub;
        for (std::uint32_t j = 0; j < dsub; ++j) {
            y[static_cast<std::size_t>(m) * dsub + j] = cent[j];
        }
    }
    std::vector<float> out(dim_);
    if (!has_rotation()) {
        for (std::uint32_t i = 0; i < dim_; ++i) {
            out[i] = static_cast<float>(y[i]);
        }
        return out;
    }
    // x = R^T y (rotation rows are applied transposed on the way back).
    for (std::uint32_t i = 0; i < dim_; ++i) {
        double s = 0.0;
        for (std::uint32_t r = 0; r < dim_; ++r) {
            s += static_cast<double>(rotation_[static_cast<std::size_t>(r) * dim_ + i]) * y[r];
        }
        out[i] = static_cast<float>(s);
    }
    return out;
}

AdcTable QuantizerModel::adc_table(std::span<const float> query) const {
    if (!trained_) {
        throw StateError("adc_table called on untrained quantizer");
    }
    if (query.size() != dim_) {
        throw ValidationError("adc_table: query dim mismatch");
    }
    const auto q = rotate(query);
    const std::uint32_t dsub = subspace_dim();
    AdcTable t;
    t.num_subspaces = num_subspaces_;
    t.num_centroids = num_centroids_;
    t.table.resize(static_cast<std::size_t>(num_subspaces_) * num_centroids_);
    for (std::uint32_t m = 0; m < num_subspaces_; ++m) {
        const auto cb = codebook(m);
        const double* qm = q.data() + static_cast<std::size_t>(m) * dsub;
        for (std::uint32_t c = 0; c < num_centroids_; ++c) {
            const float* cent = cb.data() + static_cast<std::size_t>(c) * dsub;
            double s = 0.0;
            for (std::uint32_t j = 0; j < dsub; ++j) {
                s += qm[j] * static_cast<double>(cent[j]);
            }
            t.table[static_cast<std::size_t>(m) * num_centroids_ + c] = s;
        }
    }
    return t;
}

double QuantizerModel::adc_score(std::span<const float> query,
                                 std::span<const std::uint16_t> codes) const {
    return adc_table(query).score(codes);
}

std::size_t QuantizerModel::memory_footprint(std::size_t num_vectors) const {
    if (!trained_) {
        throw StateError("memory_footprint called on untrained quantizer");
    }
    const std::size_t codebook_bytes = static_cast<std::size_t>(num_centroids_) * dim_ * 4;
    const std::size_t rotation_bytes = has_rotation() ? static_cast<std::size_t>(dim_) * dim_ * 4 : 0;
    const std::uint32_t bits_per_code = static_cast<std::uint32_t>(std::bit_width(num_centroids_) - 1);
    const std::size_t total_bits = num_vectors * static_cast<std::size_t>(num_subspaces_) * bits_per_code;
    return codebook_bytes + rotation_bytes + (total_bits + 7) / 8;
}

void QuantizerModel::save(const std::string& path) const {
    if (!trained_) {
        throw StateError("save called on untrained quantizer");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write quantizer model: " + path);
    }
    auto put_u32 = [&](std::uint32_t v) {
        char b[4];
        for (int i = 0; i < 4; ++i) {
            b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        }
        out.write(b, 4);
    };
    out.write("GOPQ1", 5);
    put_u32(dim_);
    put_u32(num_subspaces_);
    put_u32(num_centroids_);
    const char flag = has_rotation() ? 1 : 0;
    out.write(&flag, 1);
    for (float v : codebooks_) {
        put_u32(std::bit_cast<std::uint32_t>(v));
    }
    for (float v : rotation_) {
        put_u32(std::bit_cast<std::uint32_t>(v));
    }
    if (!out) {
        throw IoError("short write to quantizer model: " + path);
    }
}

QuantizerModel QuantizerModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open quantizer model: " + path);
    }
    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, "GOPQ1", 5) != 0) {
        throw IoError(path + ": bad magic, expected \"GOPQ1\"");
    }
    auto get_u32 = [&]() {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) {
            v = (v << 8) | b[i];
        }
        return v;
    };
    QuantizerModel model;
    model.dim_ = get_u32();
    model.num_subspaces_ = get_u32();
    model.num_centroids_ = get_u32();
    char flag = 0;
    in.read(&flag, 1);
    if (!in || model.dim_ == 0 || model.num_subspaces_ == 0 ||
        model.dim_ % model.num_subspaces_ != 0) {
        throw IoError(path + ": invalid quantizer header");
    }
    model.codebooks_.resize(static_cast<std::size_t>(model.num_centroids_) * model.dim_);
    for (auto& v : model.codebooks_) {
        v = std::bit_cast<float>(get_u32());
    }
    if (flag) {
        model.rotation_.resize(static_cast<std::size_t>(model.dim_) * model.dim_);
        for (auto& v : model.rotation_) {
            v = std::bit_cast<float>(get_u32());
        }
    }
    if (!in) {
        throw IoError(path + ": truncated quantizer model");
    }
    model.trained_ = true;
    return model;
}

QuantizerModel train_pq(std::span<const float> vectors, std::size_t n, std::uint32_t dim,
                        std::uint32_t num_subspaces, std::uint32_t num_centroids,
                        std::uint32_t iters, std::uint64_t seed, QuantizerTrainReport* report) {
    check_train_args(n, dim, num_subspaces, num_centroids, iters);
    if (vectors.size() != n * static_cast<std::size_t>(dim)) {
        throw ValidationError("train_pq: vector data shape mismatch");
    }
    const auto x = to_double(vectors);
    const auto fit = fit_subspaces(x, n, dim, num_subspaces, num_centroids, iters, seed, nullptr);

    QuantizerModel model;
    model.dim_ = dim;
    model.num_subspaces_ = num_subspaces;
    model.num_centroids_ = num_centroids;
    store_codebooks(fit, num_subspaces, num_centroids, dim / num_subspaces, model.codebooks_);
    model.trained_ = true;
    if (report) {
        report->objective_history = fit.summed_history;
        report->final_objective = fit.summed_history.back();
    }
    return model;
}

QuantizerModel train_opq(std::span<const float> vectors, std::size_t n, std::uint32_t dim,
                         std::uint32_t num_subspaces, std::uint32_t num_centroids,
                         std::uint32_t outer_iters, std::uint32_t kmeans_iters,
                         std::uint64_t seed, QuantizerTrainReport* report) {
    check_train_args(n, dim, num_subspaces, num_centroids, kmeans_iters);
    if (outer_iters < 1) {
        throw ValidationError("train_opq requires outer_iters >= 1");
    }
    if (vectors.size() != n * static_cast<std::size_t>(dim)) {
        throw ValidationError("train_opq: vector data shape mismatch");
    }
    const auto x = to_double(vectors);

    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> xm(x.data(), static_cast<Eigen::Index>(n), dim);
    Mat rot = Mat::Identity(dim, dim); // row convention: x_rot = R x

    std::vector<double> history;
    SubspaceFit fit;
    for (std::uint32_t outer = 0; outer < outer_iters; ++outer) {
        // (a) k-means in the rotated space; the first pass seeds exactly like
        // plain PQ so OPQ strictly generalizes it.
        Mat xr = xm * rot.transpose();
        std::vector<double> xr_flat(xr.data(), xr.data() + xr.size());
        fit = fit_subspaces(xr_flat, n, dim, num_subspaces, num_centroids, kmeans_iters, seed,
                            outer == 0 ? nullptr : &fit);
        history.insert(history.end(), fit.summed_history.begin(), fit.summed_history.end());

        // (b) orthogonal Procrustes: minimize ||X R^T - Y||_F over R.
        const auto y = reconstructions(fit, n, dim, num_subspaces);
        Eigen::Map<const Mat> ym(y.data(), static_cast<Eigen::Index>(n), dim);
        Mat cross = xm.transpose() * ym;
        Eigen::JacobiSVD<Mat> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
        rot = svd.matrixV() * svd.matrixU().transpose();
        history.push_back((xm * rot.transpose() - ym).squaredNorm());
    }

    QuantizerModel model;
    model.dim_ = dim;
    model.num_subspaces_ = num_subspaces;
    model.num_centroids_ = num_centroids;
    store_codebooks(fit, num_subspaces, num_centroids, dim / num_subspaces, model.codebooks_);
    model.rotation_.resize(static_cast<std::size_t>(dim) * dim);
    for (std::uint32_t i = 0; i < dim; ++i) {
        for (std::uint32_t j = 0; j < dim; ++j) {
            model.rotation_[static_cast<std::size_t>(i) * dim + j] = static_cast<float>(rot(i, j));
        }
    }
    model.trained_ = true;
    if (report) {
        report->objective_history = std::move(history);
        report->final_objective = report->objective_history.back();
    }
    return model;
}

} // namespace gidx
