#ifndef ZSXM_SEMANTICS_HPP
#define ZSXM_SEMANTICS_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "zsxm/core.hpp"

namespace zsxm {

/// Class name -> semantic prototype, all of one dimension.
class SemanticTable {
public:
    SemanticTable() = default;
    SemanticTable(std::size_t dim, std::map<std::string, std::vector<double>> vectors);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return vectors_.size(); }
    bool contains(const std::string& name) const { return vectors_.contains(name); }
    /// Throws Errc::missing_class.
    const std::vector<double>& at(const std::string& name) const;
    const std::map<std::string, std::vector<double>>& vectors() const { return vectors_; }

    /// Rows in the order of `names`.
    Matrix rows(const std::vector<std::string>& names) const;

    bool operator==(const SemanticTable&) const = default;

private:
    std::size_t dim_ = 0;
    std::map<std::string, std::vector<double>> vectors_;
};

/**
 * Reads `class v1 ... vd` lines. Class names match after mapping spaces to
 * underscores, so "Storage tanks" finds `Storage_tanks`. Lines for classes not
 * in `class_names` are ignored. `expected_dim` of 0 accepts any consistent dim.
 */
SemanticTable load_word_vectors(const std::filesystem::path& path, const std::vector<std::string>& class_names,
                                std::size_t expected_dim = 0, bool normalize = false);

void save_word_vectors(const std::filesystem::path& path, const SemanticTable& table);

struct AffineLayer {
    Matrix weight;  ///< out x in
    Vector bias;    ///< out

    std::size_t in_dim() const { return static_cast<std::size_t>(weight.cols()); }
    std::size_t out_dim() const { return static_cast<std::size_t>(weight.rows()); }
};

/**
 * Learned map from fixed word vectors into the latent semantic space.
 *
 * One affine layer by default; with a hidden layer the two affine maps are
 * joined by a leaky-ReLU (slope 0.01), otherwise they would collapse into one.
 */
class SemanticProjection {
public:
    SemanticProjection() = default;
    explicit SemanticProjection(std::vector<AffineLayer> layers);

    /// Glorot-uniform weights, zero bias. `hidden_dim` of 0 means a single layer.
    static SemanticProjection init(std::size_t in_dim, std::size_t out_dim, std::size_t hidden_dim, std::uint64_t seed);

    std::size_t in_dim() const { return layers_.front().in_dim(); }
    std::size_t out_dim() const { return layers_.back().out_dim(); }
    bool empty() const { return layers_.empty(); }

    std::vector<AffineLayer>& layers() { return layers_; }
    const std::vector<AffineLayer>& layers() const { return layers_; }

    struct Cache {
        Matrix input;
        Matrix hidden_pre;  ///< only with a hidden layer
    };

    /// Maps each row of `input` (n x in_dim).
    Matrix forward(const Matrix& input, Cache* cache = nullptr) const;

    /// Parameter gradients for an upstream gradient on the forward output.
    std::vector<AffineLayer> backward(const Cache& cache, const Matrix& grad_out) const;

private:
    std::vector<AffineLayer> layers_;
};

/// Applies the projection to every class vector.
SemanticTable project(const SemanticTable& table, const SemanticProjection& proj);

}  // namespace zsxm

#endif  // ZSXM_SEMANTICS_HPP
