#ifndef ZSXM_CORE_HPP
#define ZSXM_CORE_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace zsxm {

/// Row-major so that one sample (one row) is contiguous in memory.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Modality { Sketch, Image };

std::string_view to_string(Modality m);

/// Accepts "sketch"/"image" in any letter case.
Modality parse_modality(std::string_view tag);

inline Modality other(Modality m) {
    return m == Modality::Sketch ? Modality::Image : Modality::Sketch;
}

enum class Errc {
    missing_file,
    dimension_mismatch,
    unknown_modality,
    non_finite,
    empty_store,
    unknown_class,
    invalid_split,
    parse_error,
    missing_class,
    duplicate_class,
    invalid_argument,
    corrupt_checkpoint,
    variant_mismatch,
    diverged,
    empty_gallery,
    io_error,
};

std::string_view to_string(Errc code);

/// Every failure raised by the library carries a distinct code next to the message.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

/// 64-bit FNV-1a; used for featurizer-config hashes and model fingerprints.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/**
 * Seeded generator with portable uniform draws.
 *
 * The standard distributions are implementation-defined, so the draws here are
 * derived directly from the 64-bit engine output to keep checkpoints and
 * triplet lists reproducible across standard libraries.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next();
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n); n > 0.
    std::size_t index(std::size_t n);
    /// Standard normal via Box-Muller.
    double normal();

private:
    std::uint64_t state_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Mixes a base seed with a stream id so that sub-generators are decorrelated.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace zsxm

#endif  // ZSXM_CORE_HPP
