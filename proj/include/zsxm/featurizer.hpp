#ifndef ZSXM_FEATURIZER_HPP
#define ZSXM_FEATURIZER_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "zsxm/core.hpp"
#include "zsxm/feature_store.hpp"

namespace zsxm {

/// Grayscale raster, row-major, intensities clamped to [0, 1].
class PixelImage {
public:
    PixelImage(std::size_t width, std::size_t height, std::vector<double> pixels);

    /// 8-bit grayscale bytes mapped to [0, 1] by /255.
    static PixelImage from_bytes(std::size_t width, std::size_t height, const std::vector<unsigned char>& bytes);

    std::size_t width() const { return width_; }
    std::size_t height() const { return height_; }
    double at(std::size_t x, std::size_t y) const { return pixels_[y * width_ + x]; }
    const std::vector<double>& pixels() const { return pixels_; }

private:
    std::size_t width_;
    std::size_t height_;
    std::vector<double> pixels_;
};

struct FeaturizerConfig {
    std::size_t cell_size = 8;
    std::size_t n_bins = 9;
    std::size_t grid = 4;
    /// Threshold intensities at 0.5 before computing gradients.
    bool binarize = false;

    std::size_t output_dim() const { return grid * grid * n_bins; }
    void validate() const;
    /// Stable hash of the fields that affect the descriptor.
    std::string hash() const;
};

/**
 * Gradient-orientation histogram descriptor.
 *
 * The image is resampled (bilinear, pixel-centre aligned) to a square of
 * grid*cell_size pixels, Sobel gradients are taken with replicated borders,
 * and each cell accumulates gradient magnitude into unsigned orientation bins
 * over [0, pi). The concatenated histogram is L2-normalized; an image with no
 * gradient yields the zero vector.
 */
std::vector<double> extract(const PixelImage& image, const FeaturizerConfig& cfg);

/// Binary PGM (P5, maxval <= 255).
PixelImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const PixelImage& image);
/// Any PNG; colour is reduced to luminance by libpng.
PixelImage read_png(const std::filesystem::path& path);
/// Dispatches on extension (.pgm / .png).
PixelImage read_image(const std::filesystem::path& path);

struct FeaturizeWarning {
    std::filesystem::path path;
    std::string message;
};

struct FeaturizeResult {
    std::vector<Instance> instances;
    std::vector<std::string> classes;
    std::vector<FeaturizeWarning> warnings;
};

/**
 * Walks `<dir>/<class>/<file>` in sorted path order and featurizes every
 * .png/.pgm file. Ids are `<modality>/<class>/<file stem>`. Unreadable files
 * are skipped and reported in `warnings`.
 */
FeaturizeResult featurize_directory(const std::filesystem::path& dir, const FeaturizerConfig& cfg, Modality modality);

/// Combines per-modality results into one store stamped with the config hash.
FeatureStore make_featurized_store(std::vector<FeaturizeResult> parts, const FeaturizerConfig& cfg);

}  // namespace zsxm

#endif  // ZSXM_FEATURIZER_HPP
