#ifndef ZSXM_TESTS_SUPPORT_HPP
#define ZSXM_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "zsxm/core.hpp"
#include "zsxm/net.hpp"
#include "zsxm/retrieval.hpp"
#include "zsxm/trainer.hpp"

namespace zsxm::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::string templ = (std::filesystem::temp_directory_path() / "zsxm-XXXXXX").string();
        if (!mkdtemp(templ.data())) throw std::runtime_error("mkdtemp failed");
        path_ = templ;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write(const std::filesystem::path& p, const std::string& text) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    f << text;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

inline Vector random_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
    return v;
}

/// Norm-wise relative error between two gradient tensors. Both essentially zero counts as agreement.
inline double relative_error(const double* a, const double* b, Eigen::Index n) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::max(std::sqrt(na), std::sqrt(nb));
    if (denom < 1e-9) return std::sqrt(diff);
    return std::sqrt(diff) / denom;
}

inline double relative_error(const Matrix& a, const Matrix& b) { return relative_error(a.data(), b.data(), a.size()); }

/// Central difference of f with respect to every entry of [data, data+n).
template <class F>
std::vector<double> numeric_gradient(double* data, Eigen::Index n, F&& f, double h = 1e-5) {
    std::vector<double> g(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double keep = data[i];
        data[i] = keep + h;
        const double up = f();
        data[i] = keep - h;
        const double down = f();
        data[i] = keep;
        g[static_cast<std::size_t>(i)] = (up - down) / (2.0 * h);
    }
    return g;
}

inline double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }

/// Scalar-loop encoder forward. Train mode normalizes with biased batch statistics.
inline Matrix naive_forward(const EncoderParams& p, const Matrix& x, bool train) {
    std::vector<std::vector<double>> act(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c) act[static_cast<std::size_t>(r)].push_back(x(r, c));
    const std::size_t n = act.size();
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto& L = p.layers[l];
        std::vector<std::vector<double>> z(n, std::vector<double>(L.out_dim()));
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t o = 0; o < L.out_dim(); ++o) {
                double s = L.bias[static_cast<Eigen::Index>(o)];
                for (std::size_t i = 0; i < L.in_dim(); ++i)
                    s += L.weight(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i)) * act[r][i];
                z[r][o] = s;
            }
        if (l < p.norms.size()) {
            const auto& bn = p.norms[l];
            for (std::size_t o = 0; o < L.out_dim(); ++o) {
                const auto oi = static_cast<Eigen::Index>(o);
                double mean = bn.running_mean[oi], var = bn.running_var[oi];
                if (train) {
                    mean = 0.0;
                    for (std::size_t r = 0; r < n; ++r) mean += z[r][o];
                    mean /= static_cast<double>(n);
                    var = 0.0;
                    for (std::size_t r = 0; r < n; ++r) var += (z[r][o] - mean) * (z[r][o] - mean);
                    var /= static_cast<double>(n);
                }
                for (std::size_t r = 0; r < n; ++r) {
                    const double y = bn.gamma[oi] * (z[r][o] - mean) / std::sqrt(var + p.bn_eps) + bn.beta[oi];
                    z[r][o] = leaky(y, p.leaky_slope);
                }
            }
        }
        act = std::move(z);
    }
    Matrix out(x.rows(), static_cast<Eigen::Index>(p.out_dim()));
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < p.out_dim(); ++o) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(o)) = act[r][o];
    return out;
}

/// AP by enumerating relevant pairs: for each relevant item, count relevant items ranked at or above it.
inline double oracle_ap(const std::vector<bool>& rel) {
    std::vector<std::size_t> ranks;
    for (std::size_t i = 0; i < rel.size(); ++i)
        if (rel[i]) ranks.push_back(i + 1);
    if (ranks.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t a : ranks) {
        std::size_t above = 0;
        for (std::size_t b : ranks) above += b <= a;
        total += static_cast<double>(above) / static_cast<double>(a);
    }
    return total / static_cast<double>(ranks.size());
}

inline double oracle_precision(const std::vector<bool>& rel, std::size_t k) {
    std::size_t n = std::min(k, rel.size()), hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += rel[i];
    return n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
}

/// Full sort of every gallery item by (scalar-loop squared distance, id).
inline std::vector<Neighbor> oracle_knn(const EmbeddingIndex& index, const Vector& q, std::size_t k,
                                        std::optional<Modality> modality, std::optional<std::string> exclude) {
    std::vector<Neighbor> all;
    for (const auto& e : index.entries()) {
        if (modality && e.modality != *modality) continue;
        if (exclude && e.id == *exclude) continue;
        double d = 0.0;
        for (Eigen::Index j = 0; j < q.size(); ++j) d += (e.embedding[j] - q[j]) * (e.embedding[j] - q[j]);
        all.push_back({e.id, e.label, d});
    }
    std::stable_sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
        return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
    });
    if (all.size() > k) all.resize(k);
    return all;
}

/// Brute-force mAP and mean P@K over an index, recomputing every ranking with the oracles above.
inline std::pair<double, double> oracle_eval(const EmbeddingIndex& index, Direction d, std::size_t k) {
    double ap = 0.0, pk = 0.0;
    std::size_t nq = 0;
    for (const auto& q : index.entries()) {
        if (q.modality != query_modality(d)) continue;
        std::optional<std::string> excl;
        if (is_unimodal(d)) excl = q.id;
        const auto ranked = oracle_knn(index, q.embedding, index.size(), gallery_modality(d), excl);
        std::vector<bool> rel;
        for (const auto& n : ranked) rel.push_back(n.label == q.label);
        ap += oracle_ap(rel);
        pk += oracle_precision(rel, k);
        ++nq;
    }
    return {ap / static_cast<double>(nq), pk / static_cast<double>(nq)};
}

/// Every parameter, buffer and header field that a checkpoint carries, compared bitwise.
inline bool models_identical(const TrainedModel& a, const TrainedModel& b) {
    TrainedModel ca = a, cb = b;
    auto pa = trainable_blocks(ca), pb = trainable_blocks(cb);
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (pa[i].name != pb[i].name || pa[i].size() != pb[i].size()) return false;
        if (std::memcmp(pa[i].data, pb[i].data, static_cast<std::size_t>(pa[i].size()) * sizeof(double)) != 0) return false;
    }
    for (std::size_t l = 0; l < a.encoder_s.norms.size(); ++l) {
        for (const auto* pair : {&a.encoder_s, &a.encoder_i}) {
            const auto& other = pair == &a.encoder_s ? b.encoder_s : b.encoder_i;
            if (pair->norms[l].running_mean != other.norms[l].running_mean) return false;
            if (pair->norms[l].running_var != other.norms[l].running_var) return false;
        }
    }
    return a.semantics == b.semantics && a.seen_classes == b.seen_classes && a.featurizer_hash == b.featurizer_hash &&
           a.epochs_run == b.epochs_run && a.fingerprint() == b.fingerprint();
}

}  // namespace zsxm::test

#endif  // ZSXM_TESTS_SUPPORT_HPP
