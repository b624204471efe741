#include "zsxm/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "text_util.hpp"

namespace zsxm {

EmbeddingIndex::EmbeddingIndex(std::vector<IndexEntry> entries, std::size_t dim, std::string model_fingerprint)
    : entries_(std::move(entries)), dim_(dim), fingerprint_(std::move(model_fingerprint)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (static_cast<std::size_t>(e.embedding.size()) != dim_)
            throw Error(Errc::dimension_mismatch, "embedding of '" + e.id + "' has the wrong dimension");
        if (!e.embedding.allFinite()) throw Error(Errc::non_finite, "embedding of '" + e.id + "' is not finite");
        if (!by_id_.emplace(e.id, i).second) throw Error(Errc::invalid_argument, "duplicate index id '" + e.id + "'");
    }
}

const IndexEntry* EmbeddingIndex::find(const std::string& id) const {
    const auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &entries_[it->second];
}

EmbeddingIndex embed_all(const TrainedModel& model, std::span<const Instance> instances) {
    const auto d_in = static_cast<Eigen::Index>(model.input_dim());
    std::vector<IndexEntry> entries(instances.size());
    for (const Modality m : {Modality::Sketch, Modality::Image}) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < instances.size(); ++i)
            if (instances[i].modality == m) rows.push_back(i);
        if (rows.empty()) continue;
        Matrix x(static_cast<Eigen::Index>(rows.size()), d_in);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto& inst = instances[rows[r]];
            if (static_cast<Eigen::Index>(inst.features.size()) != d_in)
                throw Error(Errc::dimension_mismatch, "instance '" + inst.id + "' has " +
                                                          std::to_string(inst.features.size()) +
                                                          " features, model expects " + std::to_string(d_in));
            x.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const Eigen::RowVectorXd>(inst.features.data(), d_in);
        }
        const Matrix emb = forward_eval(model.encoder(m), x);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto& inst = instances[rows[r]];
            entries[rows[r]] = {inst.id, inst.modality, inst.label, emb.row(static_cast<Eigen::Index>(r)).transpose()};
        }
    }
    return EmbeddingIndex(std::move(entries), model.embedding_dim(), model.fingerprint());
}

Vector embed_query(const TrainedModel& model, std::span<const double> features, Modality modality) {
    if (features.size() != model.input_dim())
        throw Error(Errc::dimension_mismatch, "query has " + std::to_string(features.size()) +
                                                  " features, model expects " + std::to_string(model.input_dim()));
    const auto d = static_cast<Eigen::Index>(features.size());
    const Matrix x = Eigen::Map<const Eigen::RowVectorXd>(features.data(), d);
    return forward_eval(model.encoder(modality), x).row(0).transpose();
}

std::string_view to_string(Direction d) {
    switch (d) {
        case Direction::sketch2image: return "sketch2image";
        case Direction::image2sketch: return "image2sketch";
        case Direction::sketch2sketch: return "sketch2sketch";
        case Direction::image2image: return "image2image";
    }
    return "?";
}

Direction parse_direction(std::string_view name) {
    for (auto d : {Direction::sketch2image, Direction::image2sketch, Direction::sketch2sketch, Direction::image2image})
        if (name == to_string(d)) return d;
    throw Error(Errc::invalid_argument, "unknown direction '" + std::string(name) +
                                            "' (sketch2image, image2sketch, sketch2sketch, image2image)");
}

Modality query_modality(Direction d) {
    return d == Direction::sketch2image || d == Direction::sketch2sketch ? Modality::Sketch : Modality::Image;
}

Modality gallery_modality(Direction d) {
    return d == Direction::sketch2image || d == Direction::image2image ? Modality::Image : Modality::Sketch;
}

namespace {

bool ranks_before(const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.id < b.id;
}

}  // namespace

std::vector<Neighbor> knn(const EmbeddingIndex& index, const Vector& query, std::size_t k, const KnnFilter& filter) {
    if (k == 0) throw Error(Errc::invalid_argument, "k must be at least 1");
    if (static_cast<std::size_t>(query.size()) != index.dim())
        throw Error(Errc::dimension_mismatch, "query embedding has dimension " + std::to_string(query.size()) +
                                                  ", index has " + std::to_string(index.dim()));
    std::vector<Neighbor> all;
    all.reserve(index.size());
    for (const auto& e : index.entries()) {
        if (filter.modality && e.modality != *filter.modality) continue;
        if (filter.exclude_id && e.id == *filter.exclude_id) continue;
        all.push_back({e.id, e.label, (e.embedding - query).squaredNorm()});
    }
    if (all.empty()) throw Error(Errc::empty_gallery, "no gallery items left after filtering");
    const std::size_t n = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), ranks_before);
    all.resize(n);
    return all;
}

AveragePrecision average_precision(const std::vector<bool>& ranked_relevance) {
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < ranked_relevance.size(); ++r) {
        if (!ranked_relevance[r]) continue;
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    if (hits == 0) return {0.0, true};
    return {sum / static_cast<double>(hits), false};
}

double precision_at_k(const std::vector<bool>& ranked_relevance, std::size_t k) {
    const std::size_t n = std::min(k, ranked_relevance.size());
    if (n == 0) return 0.0;
    const auto hits = std::count(ranked_relevance.begin(), ranked_relevance.begin() + static_cast<std::ptrdiff_t>(n), true);
    return static_cast<double>(hits) / static_cast<double>(n);
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& c : per_class) classes.push_back({{"label", c.label}, {"ap", c.ap}, {"queries", c.queries}});
    return {{"direction", std::string(to_string(direction))},
            {"k", k},
            {"mAP", map},
            {"P@" + std::to_string(k), precision_at_k},
            {"queries", queries},
            {"gallery", gallery},
            {"k_exceeds_gallery", k_exceeds_gallery},
            {"queries_without_relevant", queries_without_relevant},
            {"query_excluded_from_gallery", query_excluded},
            {"per_class", classes}};
}

EvalReport evaluate(const EmbeddingIndex& index, Direction direction, std::size_t k) {
    if (k == 0) throw Error(Errc::invalid_argument, "k must be at least 1");
    const Modality qm = query_modality(direction);
    const Modality gm = gallery_modality(direction);
    std::vector<const IndexEntry*> queries, gallery;
    for (const auto& e : index.entries()) {
        if (e.modality == qm) queries.push_back(&e);
        if (e.modality == gm) gallery.push_back(&e);
    }
    if (queries.empty())
        throw Error(Errc::empty_gallery, std::string("no ") + std::string(to_string(qm)) + " queries to evaluate");
    const bool unimodal = is_unimodal(direction);
    if (gallery.size() < (unimodal ? 2u : 1u))
        throw Error(Errc::empty_gallery, std::string("no ") + std::string(to_string(gm)) + " gallery to search");

    EvalReport rep;
    rep.direction = direction;
    rep.k = k;
    rep.queries = queries.size();
    rep.gallery = unimodal ? gallery.size() - 1 : gallery.size();
    rep.k_exceeds_gallery = rep.gallery < k;
    rep.query_excluded = unimodal;

    std::map<std::string, std::pair<double, std::size_t>> by_class;
    double ap_sum = 0.0, p_sum = 0.0;
    std::vector<Neighbor> ranked;
    std::vector<bool> relevant;
    for (const IndexEntry* q : queries) {
        ranked.clear();
        for (const IndexEntry* g : gallery)
            if (!(unimodal && g->id == q->id)) ranked.push_back({g->id, g->label, (g->embedding - q->embedding).squaredNorm()});
        std::sort(ranked.begin(), ranked.end(), ranks_before);
        relevant.assign(ranked.size(), false);
        for (std::size_t r = 0; r < ranked.size(); ++r) relevant[r] = ranked[r].label == q->label;
        const auto ap = average_precision(relevant);
        if (ap.no_relevant) ++rep.queries_without_relevant;
        ap_sum += ap.value;
        p_sum += precision_at_k(relevant, k);
        auto& c = by_class[q->label];
        c.first += ap.value;
        ++c.second;
    }
    rep.map = ap_sum / static_cast<double>(queries.size());
    rep.precision_at_k = p_sum / static_cast<double>(queries.size());
    for (const auto& [label, acc] : by_class)
        rep.per_class.push_back({label, acc.first / static_cast<double>(acc.second), acc.second});
    return rep;
}

EvalReport evaluate(const TrainedModel& model, const FeatureStore& store, std::span<const std::size_t> instances,
                    Direction direction, std::size_t k) {
    check_compatible(model, store);
    const auto all = store.instances();
    std::vector<Instance> subset;
    subset.reserve(instances.size());
    for (std::size_t i : instances) {
        if (i >= all.size()) throw Error(Errc::invalid_argument, "instance index out of range");
        subset.push_back(all[i]);
    }
    return evaluate(embed_all(model, subset), direction, k);
}

EvalReport evaluate(const TrainedModel& model, const FeatureStore& store, const SplitView& split,
                    Direction direction, std::size_t k) {
    return evaluate(model, store, split.test_instances, direction, k);
}

void export_embeddings(const EmbeddingIndex& index, const std::filesystem::path& path) {
    std::string out = "id,modality,label";
    for (std::size_t j = 0; j < index.dim(); ++j) out += ",v" + std::to_string(j + 1);
    out += '\n';
    for (const auto& e : index.entries()) {
        out += e.id;
        out += ',';
        out += to_string(e.modality);
        out += ',';
        out += e.label;
        for (Eigen::Index j = 0; j < e.embedding.size(); ++j) {
            out += ',';
            detail::append_double(out, e.embedding[j]);
        }
        out += '\n';
    }
    detail::write_file(path, out);
}

}  // namespace zsxm
