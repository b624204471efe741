#include "zsxm/feature_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <unordered_set>

#include "json.hpp"
#include "text_util.hpp"

namespace zsxm {

namespace fs = std::filesystem;
using nlohmann::json;

void AccessLog::record(std::size_t index) {
    std::lock_guard lock(mutex_);
    if (index < counts_.size()) ++counts_[index];
}

std::size_t AccessLog::count(std::size_t index) const {
    std::lock_guard lock(mutex_);
    return index < counts_.size() ? counts_[index] : 0;
}

void AccessLog::reset() {
    std::lock_guard lock(mutex_);
    std::fill(counts_.begin(), counts_.end(), 0);
}

FeatureStore::FeatureStore(std::vector<Instance> instances, std::vector<std::string> classes,
                           std::size_t dim, std::string featurizer_hash)
    : instances_(std::move(instances)),
      classes_(std::move(classes)),
      dim_(dim),
      featurizer_hash_(std::move(featurizer_hash)) {
    if (instances_.empty()) throw Error(Errc::empty_store, "empty store");
    if (dim_ == 0) throw Error(Errc::dimension_mismatch, "feature dimension must be positive");

    std::unordered_set<std::string> class_set(classes_.begin(), classes_.end());
    if (class_set.size() != classes_.size())
        throw Error(Errc::duplicate_class, "duplicate class name in class list");
    std::unordered_set<std::string> ids;
    for (const auto& inst : instances_) {
        if (!ids.insert(inst.id).second)
            throw Error(Errc::invalid_argument, "duplicate instance id '" + inst.id + "'");
        if (!class_set.contains(inst.label))
            throw Error(Errc::unknown_class, "instance '" + inst.id + "' has unknown label '" + inst.label + "'");
        if (inst.features.size() != dim_)
            throw Error(Errc::dimension_mismatch,
                        "instance '" + inst.id + "' has " + std::to_string(inst.features.size()) +
                            " features, store dim is " + std::to_string(dim_));
        for (double v : inst.features)
            if (!std::isfinite(v))
                throw Error(Errc::non_finite, "instance '" + inst.id + "' has a non-finite feature");
    }
}

std::optional<std::size_t> FeatureStore::class_index(const std::string& label) const {
    const auto it = std::find(classes_.begin(), classes_.end(), label);
    if (it == classes_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - classes_.begin());
}

const Instance& FeatureStore::at(std::size_t index) const {
    if (index >= instances_.size())
        throw Error(Errc::invalid_argument, "instance index out of range");
    if (access_log_) access_log_->record(index);
    return instances_[index];
}

void FeatureStore::require_complete() const {
    std::map<std::string, std::pair<std::size_t, std::size_t>> per_class;
    for (const auto& inst : instances_) {
        auto& c = per_class[inst.label];
        (inst.modality == Modality::Sketch ? c.first : c.second)++;
    }
    for (const auto& name : classes_) {
        const auto c = per_class[name];
        if (c.first == 0 || c.second == 0)
            throw Error(Errc::missing_class, "class '" + name + "' lacks instances of one modality");
    }
}

bool SplitView::is_seen(const std::string& label) const {
    return std::find(seen_classes.begin(), seen_classes.end(), label) != seen_classes.end();
}

std::optional<std::size_t> SplitView::seen_index(const std::string& label) const {
    const auto it = std::find(seen_classes.begin(), seen_classes.end(), label);
    if (it == seen_classes.end()) return std::nullopt;
    return static_cast<std::size_t>(it - seen_classes.begin());
}

namespace {

constexpr std::string_view kManifestHeader = "id,modality,label,features_path,offset,count";

fs::path sidecar_path(const fs::path& manifest) {
    auto p = manifest;
    p.replace_extension(".json");
    return p;
}

bool is_binary_payload(const fs::path& p) {
    const auto ext = p.extension().string();
    return ext == ".bin" || ext == ".f32" || ext == ".raw";
}

bool is_text_payload(const fs::path& p) {
    const auto ext = p.extension().string();
    return ext == ".csv" || ext == ".txt";
}

struct PayloadCache {
    std::map<fs::path, std::string> raw;
    std::map<fs::path, std::vector<std::string_view>> rows;

    const std::string& bytes(const fs::path& p) {
        auto it = raw.find(p);
        if (it == raw.end()) {
            if (!fs::exists(p)) throw Error(Errc::missing_file, "feature payload '" + p.string() + "' not found");
            it = raw.emplace(p, detail::read_file(p)).first;
        }
        return it->second;
    }

    const std::vector<std::string_view>& text_rows(const fs::path& p) {
        auto it = rows.find(p);
        if (it == rows.end()) it = rows.emplace(p, detail::lines(bytes(p))).first;
        return it->second;
    }
};

std::vector<double> read_features(PayloadCache& cache, const fs::path& payload, std::size_t offset,
                                  std::size_t count, const std::string& id) {
    std::vector<double> out;
    out.reserve(count);
    if (is_binary_payload(payload)) {
        const auto& bytes = cache.bytes(payload);
        if ((offset + count) * 4 > bytes.size())
            throw Error(Errc::parse_error, "instance '" + id + "' addresses past the end of '" + payload.string() + "'");
        for (std::size_t i = 0; i < count; ++i) {
            const auto* b = reinterpret_cast<const unsigned char*>(bytes.data() + (offset + i) * 4);
            const std::uint32_t bits = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
                                       (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
            out.push_back(static_cast<double>(std::bit_cast<float>(bits)));
        }
    } else if (is_text_payload(payload)) {
        const auto& rows = cache.text_rows(payload);
        if (offset >= rows.size())
            throw Error(Errc::parse_error, "instance '" + id + "' row " + std::to_string(offset) + " missing in '" +
                                               payload.string() + "'");
        const auto fields = detail::split(rows[offset], ',');
        if (fields.size() != count)
            throw Error(Errc::dimension_mismatch, "instance '" + id + "' payload row has " +
                                                      std::to_string(fields.size()) + " values, expected " +
                                                      std::to_string(count));
        for (auto f : fields) {
            const auto v = detail::parse_double(f);
            if (!v) throw Error(Errc::parse_error, "instance '" + id + "' has malformed value '" + std::string(f) + "'");
            out.push_back(*v);
        }
    } else {
        throw Error(Errc::parse_error, "unsupported payload format '" + payload.string() + "'");
    }
    for (double v : out)
        if (!std::isfinite(v)) throw Error(Errc::non_finite, "instance '" + id + "' has a non-finite feature");
    return out;
}

}  // namespace

FeatureStore load_store(const fs::path& manifest) {
    if (!fs::exists(manifest)) throw Error(Errc::missing_file, "manifest '" + manifest.string() + "' not found");

    std::optional<std::size_t> dim;
    std::vector<std::string> classes;
    bool classes_fixed = false;
    std::string featurizer_hash;
    if (const auto side = sidecar_path(manifest); fs::exists(side)) {
        json meta;
        try {
            meta = json::parse(detail::read_file(side));
            if (meta.contains("dim")) dim = meta.at("dim").get<std::size_t>();
            if (meta.contains("classes")) {
                classes = meta.at("classes").get<std::vector<std::string>>();
                classes_fixed = true;
            }
            if (meta.contains("featurizer")) featurizer_hash = meta.at("featurizer").get<std::string>();
        } catch (const json::exception& e) {
            throw Error(Errc::parse_error, "bad sidecar '" + side.string() + "': " + e.what());
        }
    }

    const std::string text = detail::read_file(manifest);
    const auto rows = detail::lines(text);
    if (rows.empty() || detail::trim(rows.front()) != kManifestHeader)
        throw Error(Errc::parse_error, "manifest header must be '" + std::string(kManifestHeader) + "'");

    const auto base = manifest.parent_path();
    PayloadCache cache;
    std::vector<Instance> instances;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (detail::trim(rows[r]).empty()) continue;
        const auto f = detail::split(rows[r], ',');
        const std::string where = "manifest line " + std::to_string(r + 1);
        if (f.size() != 6) throw Error(Errc::parse_error, where + ": expected 6 fields");
        Instance inst;
        inst.id = std::string(detail::trim(f[0]));
        inst.modality = parse_modality(detail::trim(f[1]));
        inst.label = std::string(detail::trim(f[2]));
        const auto offset = detail::parse_size(f[4]);
        const auto count = detail::parse_size(f[5]);
        if (!offset || !count) throw Error(Errc::parse_error, where + ": bad offset/count");
        if (!dim) dim = *count;
        if (*count != *dim)
            throw Error(Errc::dimension_mismatch, where + ": count " + std::to_string(*count) + " != dim " +
                                                      std::to_string(*dim));
        if (!classes_fixed && std::find(classes.begin(), classes.end(), inst.label) == classes.end())
            classes.push_back(inst.label);
        inst.features = read_features(cache, base / std::string(detail::trim(f[3])), *offset, *count, inst.id);
        instances.push_back(std::move(inst));
    }
    if (instances.empty()) throw Error(Errc::empty_store, "empty store");
    return FeatureStore(std::move(instances), std::move(classes), *dim, std::move(featurizer_hash));
}

void save_store(const FeatureStore& store, const fs::path& manifest) {
    auto payload = manifest;
    payload.replace_extension(".features.csv");

    std::string man(kManifestHeader);
    man += '\n';
    std::string pay;
    std::size_t row = 0;
    for (const auto& inst : store.instances()) {
        man += inst.id + "," + std::string(to_string(inst.modality)) + "," + inst.label + "," +
               payload.filename().string() + "," + std::to_string(row++) + "," + std::to_string(store.dim()) + "\n";
        for (std::size_t j = 0; j < inst.features.size(); ++j) {
            if (j) pay += ',';
            detail::append_double(pay, inst.features[j]);
        }
        pay += '\n';
    }
    json meta = {{"dim", store.dim()}, {"classes", store.classes()}};
    if (!store.featurizer_hash().empty()) meta["featurizer"] = store.featurizer_hash();

    detail::write_file(payload, pay);
    detail::write_file(sidecar_path(manifest), meta.dump(2) + "\n");
    detail::write_file(manifest, man);
}

SplitView make_split(const FeatureStore& store, const std::set<std::string>& unseen) {
    if (unseen.empty()) throw Error(Errc::invalid_split, "unseen class set is empty");
    for (const auto& name : unseen)
        if (!store.class_index(name)) throw Error(Errc::unknown_class, "unseen class '" + name + "' not in store");
    if (unseen.size() >= store.classes().size())
        throw Error(Errc::invalid_split, "unseen classes cover every class; nothing left to train on");

    SplitView split;
    for (const auto& name : store.classes())
        (unseen.contains(name) ? split.unseen_classes : split.seen_classes).push_back(name);
    const auto insts = store.instances();
    for (std::size_t i = 0; i < insts.size(); ++i)
        (unseen.contains(insts[i].label) ? split.test_instances : split.train_instances).push_back(i);
    return split;
}

}  // namespace zsxm
