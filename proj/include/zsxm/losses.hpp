#ifndef ZSXM_LOSSES_HPP
#define ZSXM_LOSSES_HPP

#include <array>
#include <optional>
#include <set>
#include <span>
#include <string>

#include "zsxm/core.hpp"
#include "zsxm/net.hpp"
#include "zsxm/semantics.hpp"

namespace zsxm {

/// Classification, cross-triplet, cross-decoder and semantic-projection terms.
enum class LossTerm { ce = 0, iii = 1, dl = 2, cpl = 3 };

inline constexpr std::array<LossTerm, 4> kAllTerms = {LossTerm::ce, LossTerm::iii, LossTerm::dl, LossTerm::cpl};

std::string_view to_string(LossTerm t);
LossTerm parse_loss_term(std::string_view name);

struct LossConfig {
    double margin = 1.0;
    std::set<LossTerm> enabled = {kAllTerms.begin(), kAllTerms.end()};
    std::array<double, 4> weights = {1.0, 1.0, 1.0, 1.0};

    bool is_enabled(LossTerm t) const { return enabled.contains(t); }
    double weight(LossTerm t) const { return weights[static_cast<std::size_t>(t)]; }
    void validate() const;
};

struct LossReport {
    double ce = 0.0;
    double iii = 0.0;
    double dl = 0.0;
    double cpl = 0.0;
    double total = 0.0;

    double& term(LossTerm t);
    double term(LossTerm t) const;
    /// `{"step":n,"ce":...,"iii":...,"dl":...,"cpl":...,"total":...}`
    std::string json_line(std::size_t step) const;
};

struct LossAndGrad {
    double value = 0.0;
    Matrix grad;
};

/// Mean softmax cross-entropy; grad = (softmax - onehot) / B.
LossAndGrad ce_loss(const Matrix& logits, std::span<const std::size_t> labels);

struct TripletLoss {
    double value = 0.0;
    Vector grad_anchor;
    Vector grad_positive;
    Vector grad_negative;
};

/// max(|a-p|^2 - |a-n|^2 + margin, 0); at the hinge point the term is inactive.
TripletLoss cross_triplet_loss(const Vector& anchor, const Vector& positive, const Vector& negative, double margin);

/// Rows into the sketch/image embedding matrices. Positive and negative rows
/// live in the modality opposite to the anchor.
struct TripletRows {
    Modality anchor_modality = Modality::Sketch;
    Eigen::Index anchor = 0;
    Eigen::Index positive = 0;
    Eigen::Index negative = 0;
};

struct BatchTripletLoss {
    double value = 0.0;           ///< sketch_anchored + image_anchored
    double sketch_anchored = 0.0;  ///< mean over sketch-anchored triplets
    double image_anchored = 0.0;   ///< mean over image-anchored triplets
    Matrix grad_sketch;
    Matrix grad_image;
};

BatchTripletLoss batch_triplet_loss(const Matrix& sketch, const Matrix& image, std::span<const TripletRows> triplets,
                                    double margin);

struct DecoderLoss {
    double value = 0.0;
    Matrix grad_sketch;
    Matrix grad_image;
    AffineLayer grad_dec_i;  ///< sketch -> image decoder
    AffineLayer grad_dec_s;  ///< image -> sketch decoder
};

/// mean_r |dec_i(V_s[r]) - V_i[r]|^2 + mean_r |dec_s(V_i[r]) - V_s[r]|^2 over class-aligned rows.
DecoderLoss decoder_loss(const Matrix& sketch, const Matrix& image, const DecoderParams& dec_i,
                         const DecoderParams& dec_s);

struct ProjectionLoss {
    double value = 0.0;
    Matrix grad_embeddings;
    Matrix grad_targets;
};

/// mean_r |v_r - t_r|^2 where t_r is the semantic prototype of row r's class.
ProjectionLoss projection_loss(const Matrix& embeddings, const Matrix& targets);
ProjectionLoss projection_loss(const Matrix& embeddings, std::span<const std::string> labels,
                               const SemanticTable& semantics);

/**
 * Everything the full objective needs for one batch.
 *
 * Rows [0, paired_rows) of `sketch` and `image` are class-aligned pairs; the
 * decoder and projection terms use those rows and `targets` holds the
 * prototype of each pair's class.
 */
struct LossInputs {
    const Matrix* sketch = nullptr;
    const Matrix* image = nullptr;
    std::span<const std::size_t> sketch_labels;
    std::span<const std::size_t> image_labels;
    std::span<const TripletRows> triplets;
    Eigen::Index paired_rows = 0;
    const ClassifierHead* head = nullptr;
    const DecoderParams* dec_i = nullptr;
    const DecoderParams* dec_s = nullptr;
    const Matrix* targets = nullptr;
};

struct LossGrads {
    Matrix sketch;
    Matrix image;
    AffineLayer head;
    AffineLayer dec_i;
    AffineLayer dec_s;
    Matrix targets;
};

struct TotalLoss {
    LossReport report;
    LossGrads grads;
};

/**
 * Weighted sum of the enabled terms. Disabled terms report 0 and contribute
 * no gradient. With `grad_term` set, every enabled term is still evaluated for
 * the report but only that term's gradient is returned.
 */
TotalLoss total_loss(const LossConfig& cfg, const LossInputs& in, std::optional<LossTerm> grad_term = std::nullopt);

}  // namespace zsxm

#endif  // ZSXM_LOSSES_HPP
