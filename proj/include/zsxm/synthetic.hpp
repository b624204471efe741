#ifndef ZSXM_SYNTHETIC_HPP
#define ZSXM_SYNTHETIC_HPP

#include <filesystem>
#include <set>
#include <string>

#include "zsxm/feature_store.hpp"
#include "zsxm/semantics.hpp"

namespace zsxm {

/**
 * Gaussian-cluster dataset for end-to-end checks.
 *
 * Class means lie in a random `rank`-dimensional subspace of the feature
 * space. With the default rank of n_seen - 1 the seen means affinely span that
 * subspace, so every unseen mean is an affine combination of seen ones. Each
 * modality adds its own fixed offset; every instance adds isotropic noise.
 * Semantic vectors are orthonormal.
 */
struct SyntheticConfig {
    std::size_t n_classes = 8;
    std::size_t n_unseen = 2;
    std::size_t dim = 32;
    std::size_t per_class = 50;
    std::size_t semantic_dim = 300;
    /// 0 means n_classes - n_unseen - 1.
    std::size_t rank = 0;
    double class_spread = 3.0;
    double modality_offset = 2.0;
    double noise = 0.5;
    std::uint64_t seed = 42;
};

struct SyntheticData {
    FeatureStore store;
    SemanticTable semantics;
    /// The last n_unseen classes.
    std::set<std::string> unseen;
};

SyntheticData make_synthetic(const SyntheticConfig& opts);

/**
 * Writes `<root>/sketches/<class>/<k>.pgm`, `<root>/images/<class>/<k>.pgm` and
 * `<root>/words.txt`. Each class is a bar at its own orientation: sketches are
 * thin outlines on white, images are filled and shaded.
 */
void write_synthetic_image_tree(const std::filesystem::path& root, std::size_t n_classes, std::size_t per_class,
                                std::size_t size, std::size_t semantic_dim, std::uint64_t seed);

}  // namespace zsxm

#endif  // ZSXM_SYNTHETIC_HPP
