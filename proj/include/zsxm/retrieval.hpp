#ifndef ZSXM_RETRIEVAL_HPP
#define ZSXM_RETRIEVAL_HPP

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "zsxm/feature_store.hpp"
#include "zsxm/trainer.hpp"

namespace zsxm {

struct IndexEntry {
    std::string id;
    Modality modality = Modality::Sketch;
    std::string label;
    Vector embedding;
};

/// Immutable set of embedded instances tagged with the fingerprint of the model that produced them.
class EmbeddingIndex {
public:
    EmbeddingIndex() = default;
    EmbeddingIndex(std::vector<IndexEntry> entries, std::size_t dim, std::string model_fingerprint);

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t dim() const { return dim_; }
    const std::string& model_fingerprint() const { return fingerprint_; }
    const std::vector<IndexEntry>& entries() const { return entries_; }
    const IndexEntry* find(const std::string& id) const;

private:
    std::vector<IndexEntry> entries_;
    std::size_t dim_ = 0;
    std::string fingerprint_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

/// Sketches go through the sketch encoder, images through the image encoder; eval-mode forward.
EmbeddingIndex embed_all(const TrainedModel& model, std::span<const Instance> instances);

/// Embeds one feature vector with the encoder of `modality`.
Vector embed_query(const TrainedModel& model, std::span<const double> features, Modality modality);

enum class Direction { sketch2image, image2sketch, sketch2sketch, image2image };

std::string_view to_string(Direction d);
Direction parse_direction(std::string_view name);
Modality query_modality(Direction d);
Modality gallery_modality(Direction d);
inline bool is_unimodal(Direction d) { return query_modality(d) == gallery_modality(d); }

struct Neighbor {
    std::string id;
    std::string label;
    double distance = 0.0;  ///< squared Euclidean
};

struct RetrievalResult {
    std::string query_id;
    Modality query_modality = Modality::Sketch;
    std::vector<Neighbor> neighbors;
};

struct KnnFilter {
    std::optional<Modality> modality;
    std::optional<std::string> exclude_id;
};

/// Exact squared-Euclidean kNN; ties go to the smaller id. Throws Errc::empty_gallery.
std::vector<Neighbor> knn(const EmbeddingIndex& index, const Vector& query, std::size_t k, const KnnFilter& filter = {});

struct AveragePrecision {
    double value = 0.0;
    /// Set when nothing in the ranking is relevant; value is then 0.
    bool no_relevant = false;
};

/// Mean over relevant ranks r of precision at r.
AveragePrecision average_precision(const std::vector<bool>& ranked_relevance);

/// Precision over the top min(k, size) ranks.
double precision_at_k(const std::vector<bool>& ranked_relevance, std::size_t k);

struct ClassAP {
    std::string label;
    double ap = 0.0;
    std::size_t queries = 0;
};

struct EvalReport {
    Direction direction = Direction::sketch2image;
    std::size_t k = 100;
    double map = 0.0;
    double precision_at_k = 0.0;
    std::size_t queries = 0;
    std::size_t gallery = 0;
    /// Gallery smaller than k: precision was taken over the whole gallery.
    bool k_exceeds_gallery = false;
    std::size_t queries_without_relevant = 0;
    bool query_excluded = false;
    std::vector<ClassAP> per_class;

    nlohmann::json to_json() const;
};

/// Every entry of the query modality ranks the full gallery of the target modality.
EvalReport evaluate(const EmbeddingIndex& index, Direction direction, std::size_t k = 100);

/// Embeds `instances` of `store` (bulk, unrecorded) and evaluates them.
EvalReport evaluate(const TrainedModel& model, const FeatureStore& store, std::span<const std::size_t> instances,
                    Direction direction, std::size_t k = 100);

/// Zero-shot protocol: the split's test instances only.
EvalReport evaluate(const TrainedModel& model, const FeatureStore& store, const SplitView& split,
                    Direction direction, std::size_t k = 100);

/// `id,modality,label,v1..vd`
void export_embeddings(const EmbeddingIndex& index, const std::filesystem::path& path);

}  // namespace zsxm

#endif  // ZSXM_RETRIEVAL_HPP
