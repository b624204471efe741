#ifndef ZSXM_TRAINER_HPP
#define ZSXM_TRAINER_HPP

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "zsxm/feature_store.hpp"
#include "zsxm/losses.hpp"
#include "zsxm/net.hpp"
#include "zsxm/semantics.hpp"

namespace zsxm {

/// Positive and negative come from the modality opposite to the anchor.
struct Triplet {
    std::size_t anchor = 0;
    std::size_t positive = 0;
    std::size_t negative = 0;
    Modality anchor_modality = Modality::Sketch;

    bool operator==(const Triplet&) const = default;
};

/// Fixed: embeddings live in the word-vector space. Latent: a learned projection maps word vectors down.
enum class Variant { Fixed, Latent };
/// Joint: one step on the summed gradient. RoundRobin: one term per batch, cpl -> iii -> ce -> dl.
/// RoundRobinEpoch: the same cycle, one term per epoch.
enum class Schedule { Joint, RoundRobin, RoundRobinEpoch };

std::string_view to_string(Variant v);
std::string_view to_string(Schedule s);

struct TrainConfig {
    std::size_t triplets_per_anchor_type = 14000;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    std::size_t max_epochs = 200;
    /// Stop once the relative epoch-over-epoch drop of the mean total loss falls below this.
    double epsilon = 1e-4;
    std::uint64_t seed = 42;
    Variant variant = Variant::Fixed;
    std::size_t latent_dim = 128;
    /// Hidden width of an optional second projection layer (0 = single affine layer).
    std::size_t latent_hidden = 0;
    std::vector<std::size_t> hidden = kDefaultHidden;
    LossConfig loss;
    Schedule schedule = Schedule::RoundRobin;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);

struct TrainedModel {
    EncoderParams encoder_s;
    EncoderParams encoder_i;
    DecoderParams dec_s;  ///< image embedding -> sketch embedding
    DecoderParams dec_i;  ///< sketch embedding -> image embedding
    ClassifierHead classifier;
    SemanticProjection projection;  ///< latent variant only
    SemanticTable semantics;        ///< word vectors of the seen classes
    std::vector<std::string> seen_classes;
    std::string featurizer_hash;
    TrainConfig config;
    LossReport final_report;
    std::size_t epochs_run = 0;

    std::size_t input_dim() const { return encoder_s.in_dim(); }
    std::size_t embedding_dim() const { return encoder_s.out_dim(); }
    const EncoderParams& encoder(Modality m) const { return m == Modality::Sketch ? encoder_s : encoder_i; }
    /// Hash over every serialized parameter block.
    std::string fingerprint() const;
    /// Class prototypes in the embedding space (projected in the latent variant).
    SemanticTable prototypes() const;
};

std::vector<Triplet> build_triplets(const SplitView& split, const FeatureStore& store, std::size_t n_per_type,
                                    std::uint64_t seed);

/**
 * Shuffles each anchor family with `seed` and deals batches holding
 * batch_size/2 of each; the trailing partial batch is dropped. Each batch
 * lists its sketch-anchored triplets first.
 */
std::vector<std::vector<std::size_t>> make_batches(const std::vector<Triplet>& triplets, std::size_t batch_size,
                                                   std::uint64_t seed);

struct TrainHooks {
    std::function<void(std::size_t step, const LossReport&)> on_step;
    /// Called after each epoch with the model as it stands.
    std::function<void(std::size_t epoch, double mean_total, const TrainedModel&)> on_epoch;
};

/// Fresh parameters for `cfg`, as training would start from them.
TrainedModel init_model(const FeatureStore& store, const SplitView& split, const SemanticTable& semantics,
                        const TrainConfig& cfg);

/// Mini-batch gradient descent; throws Errc::diverged on a non-finite loss.
TrainedModel train(const FeatureStore& store, const SplitView& split, const SemanticTable& semantics,
                   const TrainConfig& cfg, const TrainHooks& hooks = {});

/**
 * One batch laid out for the loss: with h triplets per anchor family,
 * sketch rows are [T_s anchors | T_i positives | T_i negatives] and image rows
 * are [T_s positives | T_i anchors | T_s negatives], so rows [0, 2h) of both
 * are class-aligned pairs.
 */
struct BatchData {
    Matrix sketch;
    Matrix image;
    std::vector<std::size_t> sketch_labels;  ///< seen-class indices
    std::vector<std::size_t> image_labels;
    std::vector<TripletRows> triplets;
    Eigen::Index paired_rows = 0;
    std::vector<std::string> pair_labels;  ///< class of each paired row
};

/// Reads the batch's instances through FeatureStore::at().
BatchData gather_batch(const FeatureStore& store, const SplitView& split, const std::vector<Triplet>& triplets,
                       const std::vector<std::size_t>& batch);

/// Gradients for every trainable parameter, laid out like the model.
struct ModelGrads {
    EncoderParams encoder_s;
    EncoderParams encoder_i;
    AffineLayer dec_s;
    AffineLayer dec_i;
    AffineLayer classifier;
    std::vector<AffineLayer> projection;
};

struct StepResult {
    LossReport report;
    ModelGrads grads;
};

/// Train-mode forward (running statistics update) and full backward; `grad_term` restricts the gradient.
StepResult model_gradients(TrainedModel& model, const BatchData& batch, std::optional<LossTerm> grad_term);

/// Trainable blocks in a fixed order: encoders, decoders, classifier, projection.
std::vector<ParamBlock> trainable_blocks(TrainedModel& model);
std::vector<ParamBlock> trainable_blocks(ModelGrads& grads);

/// p -= lr * g over every trainable block.
void apply_sgd(TrainedModel& model, ModelGrads& grads, double lr);

/// One optimizer step on one batch; returns the loss report before the update.
/// A non-finite loss leaves the parameters untouched.
LossReport train_step(TrainedModel& model, const FeatureStore& store, const SplitView& split,
                      const std::vector<Triplet>& triplets, const std::vector<std::size_t>& batch,
                      std::optional<LossTerm> grad_term);

void save_model(const TrainedModel& model, const std::filesystem::path& path);
/// Validates magic, version and block sizes; `expected` rejects a checkpoint of the other variant.
TrainedModel load_model(const std::filesystem::path& path, std::optional<Variant> expected = std::nullopt);
/// Throws unless the model's input dimension matches the store.
void check_compatible(const TrainedModel& model, const FeatureStore& store);

}  // namespace zsxm

#endif  // ZSXM_TRAINER_HPP
