#ifndef ZSXM_FEATURE_STORE_HPP
#define ZSXM_FEATURE_STORE_HPP

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "zsxm/core.hpp"

namespace zsxm {

struct Instance {
    std::string id;
    Modality modality = Modality::Sketch;
    std::string label;
    std::vector<double> features;
};

/// Counts per-instance reads made through FeatureStore::at().
class AccessLog {
public:
    explicit AccessLog(std::size_t n) : counts_(n, 0) {}

    void record(std::size_t index);
    std::size_t count(std::size_t index) const;
    void reset();

private:
    mutable std::mutex mutex_;
    std::vector<std::size_t> counts_;
};

/**
 * Validated, immutable collection of feature vectors for both modalities.
 *
 * The class list fixes label indices; it comes from the sidecar when one is
 * present, otherwise from first appearance in the manifest.
 */
class FeatureStore {
public:
    FeatureStore(std::vector<Instance> instances, std::vector<std::string> classes,
                 std::size_t dim, std::string featurizer_hash = {});

    std::size_t size() const { return instances_.size(); }
    std::size_t dim() const { return dim_; }
    const std::vector<std::string>& classes() const { return classes_; }
    /// Hash of the built-in featurizer config that produced the payload; empty for external features.
    const std::string& featurizer_hash() const { return featurizer_hash_; }

    std::optional<std::size_t> class_index(const std::string& label) const;

    /// Element access; counted when an access log is attached.
    const Instance& at(std::size_t index) const;

    /// Bulk read-only view used for partitioning and indexing; not counted.
    std::span<const Instance> instances() const { return instances_; }

    void attach_access_log(std::shared_ptr<AccessLog> log) { access_log_ = std::move(log); }

    /// Throws unless every class has at least one instance of each modality.
    void require_complete() const;

private:
    std::vector<Instance> instances_;
    std::vector<std::string> classes_;
    std::size_t dim_;
    std::string featurizer_hash_;
    std::shared_ptr<AccessLog> access_log_;
};

/// Seen/unseen partition. Class lists keep store order.
struct SplitView {
    std::vector<std::string> seen_classes;
    std::vector<std::string> unseen_classes;
    std::vector<std::size_t> train_instances;
    std::vector<std::size_t> test_instances;

    bool is_seen(const std::string& label) const;
    std::optional<std::size_t> seen_index(const std::string& label) const;
};

/// Manifest CSV `id,modality,label,features_path,offset,count` plus optional `<stem>.json` sidecar.
FeatureStore load_store(const std::filesystem::path& manifest);

/// Writes manifest, sidecar and a shortest-round-trip CSV payload `<stem>.features.csv`.
void save_store(const FeatureStore& store, const std::filesystem::path& manifest);

SplitView make_split(const FeatureStore& store, const std::set<std::string>& unseen);

}  // namespace zsxm

#endif  // ZSXM_FEATURE_STORE_HPP
