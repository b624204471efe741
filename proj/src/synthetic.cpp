#include "zsxm/synthetic.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include "zsxm/featurizer.hpp"

namespace zsxm {

namespace {

/// Rows of a random matrix made orthonormal by Gram-Schmidt.
Matrix orthonormal_rows(std::size_t n, std::size_t dim, Rng& rng) {
    if (n > dim) throw Error(Errc::invalid_argument, "cannot fit that many orthonormal vectors");
    Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index q = 0; q < r; ++q) m.row(r) -= m.row(r).dot(m.row(q)) * m.row(q);
        m.row(r).normalize();
    }
    return m;
}

std::string class_name(std::size_t c) { return "class" + std::to_string(c); }

}  // namespace

SyntheticData make_synthetic(const SyntheticConfig& opts) {
    if (opts.n_unseen == 0 || opts.n_unseen + 2 > opts.n_classes)
        throw Error(Errc::invalid_argument, "need at least two seen and one unseen class");
    const std::size_t rank = opts.rank ? opts.rank : opts.n_classes - opts.n_unseen - 1;
    if (rank > opts.dim) throw Error(Errc::invalid_argument, "rank must not exceed dim");
    Rng rng(opts.seed);
    const auto d = static_cast<Eigen::Index>(opts.dim);

    const Matrix basis = orthonormal_rows(rank, opts.dim, rng);  // rank x dim
    std::vector<Eigen::RowVectorXd> means;
    for (std::size_t c = 0; c < opts.n_classes; ++c) {
        Eigen::RowVectorXd z(static_cast<Eigen::Index>(rank));
        for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = opts.class_spread * rng.normal();
        means.push_back(z * basis);
    }
    Eigen::RowVectorXd offset[2] = {Eigen::RowVectorXd(d), Eigen::RowVectorXd(d)};
    for (auto& o : offset) {
        for (Eigen::Index j = 0; j < d; ++j) o[j] = rng.normal();
        o *= opts.modality_offset / o.norm();
    }

    std::vector<Instance> instances;
    std::vector<std::string> classes;
    for (std::size_t c = 0; c < opts.n_classes; ++c) {
        classes.push_back(class_name(c));
        for (const Modality m : {Modality::Sketch, Modality::Image}) {
            const auto& o = offset[m == Modality::Sketch ? 0 : 1];
            for (std::size_t k = 0; k < opts.per_class; ++k) {
                Instance inst;
                inst.id = std::string(to_string(m)) + "/" + class_name(c) + "/" + std::to_string(k);
                inst.modality = m;
                inst.label = class_name(c);
                inst.features.resize(opts.dim);
                for (Eigen::Index j = 0; j < d; ++j)
                    inst.features[static_cast<std::size_t>(j)] = means[c][j] + o[j] + opts.noise * rng.normal();
                instances.push_back(std::move(inst));
            }
        }
    }

    const Matrix sem = orthonormal_rows(opts.n_classes, opts.semantic_dim, rng);
    std::map<std::string, std::vector<double>> vectors;
    for (std::size_t c = 0; c < opts.n_classes; ++c) {
        const auto row = sem.row(static_cast<Eigen::Index>(c));
        vectors.emplace(class_name(c), std::vector<double>(row.begin(), row.end()));
    }
    std::set<std::string> unseen;
    for (std::size_t c = opts.n_classes - opts.n_unseen; c < opts.n_classes; ++c) unseen.insert(class_name(c));

    return {FeatureStore(std::move(instances), std::move(classes), opts.dim),
            SemanticTable(opts.semantic_dim, std::move(vectors)), std::move(unseen)};
}

void write_synthetic_image_tree(const std::filesystem::path& root, std::size_t n_classes, std::size_t per_class,
                                std::size_t size, std::size_t semantic_dim, std::uint64_t seed) {
    Rng rng(seed);
    const double n = static_cast<double>(size);
    for (std::size_t c = 0; c < n_classes; ++c) {
        const double theta = std::numbers::pi * static_cast<double>(c) / static_cast<double>(n_classes);
        for (const Modality m : {Modality::Sketch, Modality::Image}) {
            const auto dir = root / (m == Modality::Sketch ? "sketches" : "images") / class_name(c);
            std::filesystem::create_directories(dir);
            for (std::size_t k = 0; k < per_class; ++k) {
                const double jitter = 0.08 * (rng.uniform() - 0.5);
                const double ux = std::cos(theta + jitter), uy = std::sin(theta + jitter);
                const double cx = n / 2 + 0.1 * n * (rng.uniform() - 0.5);
                const double cy = n / 2 + 0.1 * n * (rng.uniform() - 0.5);
                const double half_len = 0.35 * n, half_w = 0.08 * n;
                std::vector<double> px(size * size);
                for (std::size_t y = 0; y < size; ++y) {
                    for (std::size_t x = 0; x < size; ++x) {
                        const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
                        const double along = dx * ux + dy * uy, across = -dx * uy + dy * ux;
                        const bool inside = std::abs(along) <= half_len && std::abs(across) <= half_w;
                        double v;
                        if (m == Modality::Sketch) {
                            const bool edge = inside && (std::abs(across) > half_w - 1.5 || std::abs(along) > half_len - 1.5);
                            v = edge ? 0.0 : 1.0;
                        } else {
                            v = inside ? 0.2 + 0.3 * (along / half_len + 1.0) / 2.0 : 0.85;
                            v += 0.03 * rng.normal();
                        }
                        px[y * size + x] = v;
                    }
                }
                write_pgm(dir / (std::to_string(k) + ".pgm"), PixelImage(size, size, std::move(px)));
            }
        }
    }
    const Matrix sem = orthonormal_rows(n_classes, semantic_dim, rng);
    std::map<std::string, std::vector<double>> vectors;
    for (std::size_t c = 0; c < n_classes; ++c) {
        const auto row = sem.row(static_cast<Eigen::Index>(c));
        vectors.emplace(class_name(c), std::vector<double>(row.begin(), row.end()));
    }
    save_word_vectors(root / "words.txt", SemanticTable(semantic_dim, std::move(vectors)));
}

}  // namespace zsxm
