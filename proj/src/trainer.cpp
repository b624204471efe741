#include "zsxm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "text_util.hpp"

namespace zsxm {

using nlohmann::json;

std::string_view to_string(Variant v) { return v == Variant::Fixed ? "fixed" : "latent"; }
std::string_view to_string(Schedule s) {
    switch (s) {
        case Schedule::Joint: return "joint";
        case Schedule::RoundRobin: return "round_robin";
        case Schedule::RoundRobinEpoch: return "round_robin_epoch";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (batch_size == 0 || batch_size % 2 != 0)
        throw Error(Errc::invalid_argument, "batch_size must be even and positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw Error(Errc::invalid_argument, "learning_rate must be finite and >= 0");
    if (!(epsilon > 0.0)) throw Error(Errc::invalid_argument, "epsilon must be > 0");
    if (triplets_per_anchor_type == 0) throw Error(Errc::invalid_argument, "triplets_per_anchor_type must be > 0");
    if (variant == Variant::Latent && latent_dim == 0) throw Error(Errc::invalid_argument, "latent_dim must be > 0");
    loss.validate();
}

json to_json(const TrainConfig& cfg) {
    json enabled = json::array();
    for (auto t : kAllTerms)
        if (cfg.loss.is_enabled(t)) enabled.push_back(std::string(to_string(t)));
    json weights = json::object();
    for (auto t : kAllTerms) weights[std::string(to_string(t))] = cfg.loss.weight(t);
    return json{{"triplets_per_anchor_type", cfg.triplets_per_anchor_type},
                {"batch_size", cfg.batch_size},
                {"learning_rate", cfg.learning_rate},
                {"max_epochs", cfg.max_epochs},
                {"epsilon", cfg.epsilon},
                {"seed", cfg.seed},
                {"variant", std::string(to_string(cfg.variant))},
                {"latent_dim", cfg.latent_dim},
                {"latent_hidden", cfg.latent_hidden},
                {"hidden", cfg.hidden},
                {"margin", cfg.loss.margin},
                {"losses", enabled},
                {"loss_weights", weights},
                {"schedule", std::string(to_string(cfg.schedule))}};
}

TrainConfig train_config_from_json(const json& j) {
    if (!j.is_object()) throw Error(Errc::parse_error, "train config must be a JSON object");
    TrainConfig cfg;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "triplets_per_anchor_type") cfg.triplets_per_anchor_type = value.get<std::size_t>();
            else if (key == "batch_size") cfg.batch_size = value.get<std::size_t>();
            else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
            else if (key == "max_epochs") cfg.max_epochs = value.get<std::size_t>();
            else if (key == "epsilon") cfg.epsilon = value.get<double>();
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else if (key == "variant") {
                const auto v = value.get<std::string>();
                if (v == "fixed") cfg.variant = Variant::Fixed;
                else if (v == "latent") cfg.variant = Variant::Latent;
                else throw Error(Errc::parse_error, "variant must be 'fixed' or 'latent'");
            } else if (key == "latent_dim") cfg.latent_dim = value.get<std::size_t>();
            else if (key == "latent_hidden") cfg.latent_hidden = value.get<std::size_t>();
            else if (key == "hidden") cfg.hidden = value.get<std::vector<std::size_t>>();
            else if (key == "margin") cfg.loss.margin = value.get<double>();
            else if (key == "losses") {
                cfg.loss.enabled.clear();
                for (const auto& name : value) cfg.loss.enabled.insert(parse_loss_term(name.get<std::string>()));
            } else if (key == "loss_weights") {
                for (const auto& [term, w] : value.items())
                    cfg.loss.weights[static_cast<std::size_t>(parse_loss_term(term))] = w.get<double>();
            } else if (key == "schedule") {
                const auto s = value.get<std::string>();
                if (s == "joint") cfg.schedule = Schedule::Joint;
                else if (s == "round_robin") cfg.schedule = Schedule::RoundRobin;
                else if (s == "round_robin_epoch") cfg.schedule = Schedule::RoundRobinEpoch;
                else throw Error(Errc::parse_error, "schedule must be 'joint', 'round_robin' or 'round_robin_epoch'");
            } else {
                throw Error(Errc::parse_error, "unknown train config key '" + key + "'");
            }
        }
    } catch (const json::exception& e) {
        throw Error(Errc::parse_error, std::string("bad train config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(Errc::missing_file, "config '" + path.string() + "' not found");
    json j;
    try {
        j = json::parse(detail::read_file(path));
    } catch (const json::exception& e) {
        throw Error(Errc::parse_error, "config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return train_config_from_json(j);
}

SemanticTable TrainedModel::prototypes() const {
    return config.variant == Variant::Latent ? project(semantics, projection) : semantics;
}

std::vector<Triplet> build_triplets(const SplitView& split, const FeatureStore& store, std::size_t n_per_type,
                                    std::uint64_t seed) {
    const std::size_t n_classes = split.seen_classes.size();
    if (n_classes < 2) throw Error(Errc::invalid_split, "triplets need at least two seen classes");

    // by_class[modality][class] -> instance indices; pool[modality] -> (index, class)
    std::vector<std::vector<std::size_t>> by_class[2] = {std::vector<std::vector<std::size_t>>(n_classes),
                                                         std::vector<std::vector<std::size_t>>(n_classes)};
    std::vector<std::pair<std::size_t, std::size_t>> pool[2];
    for (std::size_t idx : split.train_instances) {
        const auto& inst = store.at(idx);
        const auto c = split.seen_index(inst.label);
        if (!c) throw Error(Errc::invalid_split, "train instance '" + inst.id + "' has an unseen label");
        const int m = inst.modality == Modality::Sketch ? 0 : 1;
        by_class[m][*c].push_back(idx);
        pool[m].emplace_back(idx, *c);
    }
    for (std::size_t c = 0; c < n_classes; ++c)
        for (int m = 0; m < 2; ++m)
            if (by_class[m][c].empty())
                throw Error(Errc::missing_class, "seen class '" + split.seen_classes[c] + "' has no " +
                                                     (m == 0 ? "sketch" : "image") + " instances");

    Rng rng(seed);
    std::vector<Triplet> out;
    out.reserve(2 * n_per_type);
    for (const Modality anchor_mod : {Modality::Sketch, Modality::Image}) {
        const int am = anchor_mod == Modality::Sketch ? 0 : 1;
        const int om = 1 - am;
        for (std::size_t k = 0; k < n_per_type; ++k) {
            const auto [anchor, c] = pool[am][rng.index(pool[am].size())];
            const auto& same = by_class[om][c];
            const std::size_t positive = same[rng.index(same.size())];
            // Rejection keeps the negative uniform over other-class instances.
            std::pair<std::size_t, std::size_t> neg;
            do {
                neg = pool[om][rng.index(pool[om].size())];
            } while (neg.second == c);
            out.push_back({anchor, positive, neg.first, anchor_mod});
        }
    }
    return out;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<Triplet>& triplets, std::size_t batch_size,
                                                   std::uint64_t seed) {
    if (batch_size == 0 || batch_size % 2 != 0)
        throw Error(Errc::invalid_argument, "batch_size must be even and positive");
    const std::size_t half = batch_size / 2;
    std::vector<std::size_t> fam[2];
    for (std::size_t i = 0; i < triplets.size(); ++i)
        fam[triplets[i].anchor_modality == Modality::Sketch ? 0 : 1].push_back(i);
    if (fam[0].size() < half || fam[1].size() < half)
        throw Error(Errc::invalid_argument, "fewer triplets of one anchor type than half a batch");

    Rng rng(seed);
    for (auto& f : fam)
        for (std::size_t i = f.size(); i > 1; --i) std::swap(f[i - 1], f[rng.index(i)]);

    const std::size_t n_batches = std::min(fam[0].size(), fam[1].size()) / half;
    std::vector<std::vector<std::size_t>> batches(n_batches);
    for (std::size_t b = 0; b < n_batches; ++b) {
        batches[b].reserve(batch_size);
        for (int f = 0; f < 2; ++f)
            batches[b].insert(batches[b].end(), fam[f].begin() + static_cast<std::ptrdiff_t>(b * half),
                              fam[f].begin() + static_cast<std::ptrdiff_t>((b + 1) * half));
    }
    return batches;
}

namespace {

enum SeedStream : std::uint64_t {
    kEncoderS = 1,
    kEncoderI,
    kDecoderS,
    kDecoderI,
    kClassifier,
    kProjection,
    kTriplets,
    kBatches,
};

std::vector<LossTerm> round_robin_order(const LossConfig& cfg) {
    std::vector<LossTerm> order;
    for (auto t : {LossTerm::cpl, LossTerm::iii, LossTerm::ce, LossTerm::dl})
        if (cfg.is_enabled(t)) order.push_back(t);
    return order;
}

}  // namespace

TrainedModel init_model(const FeatureStore& store, const SplitView& split, const SemanticTable& semantics,
                        const TrainConfig& cfg) {
    cfg.validate();
    if (split.seen_classes.size() < 2) throw Error(Errc::invalid_split, "training needs at least two seen classes");

    TrainedModel m;
    m.config = cfg;
    m.seen_classes = split.seen_classes;
    m.featurizer_hash = store.featurizer_hash();

    std::map<std::string, std::vector<double>> snap;
    for (const auto& c : split.seen_classes) snap.emplace(c, semantics.at(c));
    m.semantics = SemanticTable(semantics.dim(), std::move(snap));

    std::size_t d_out = semantics.dim();
    if (cfg.variant == Variant::Latent) {
        d_out = cfg.latent_dim;
        m.projection = SemanticProjection::init(semantics.dim(), d_out, cfg.latent_hidden,
                                                derive_seed(cfg.seed, kProjection));
    }
    m.encoder_s = init_encoder(store.dim(), d_out, derive_seed(cfg.seed, kEncoderS), cfg.hidden);
    m.encoder_i = init_encoder(store.dim(), d_out, derive_seed(cfg.seed, kEncoderI), cfg.hidden);
    Rng ds(derive_seed(cfg.seed, kDecoderS));
    Rng di(derive_seed(cfg.seed, kDecoderI));
    Rng dc(derive_seed(cfg.seed, kClassifier));
    m.dec_s = init_affine(d_out, d_out, ds);
    m.dec_i = init_affine(d_out, d_out, di);
    m.classifier = init_affine(d_out, split.seen_classes.size(), dc);
    return m;
}

BatchData gather_batch(const FeatureStore& store, const SplitView& split, const std::vector<Triplet>& triplets,
                       const std::vector<std::size_t>& batch) {
    const std::size_t half = batch.size() / 2;
    if (half == 0 || batch.size() % 2 != 0) throw Error(Errc::invalid_argument, "batch must hold an even count");
    const auto h = static_cast<Eigen::Index>(half);
    const auto d_in = static_cast<Eigen::Index>(store.dim());

    BatchData out;
    out.sketch.resize(3 * h, d_in);
    out.image.resize(3 * h, d_in);
    out.sketch_labels.resize(3 * half);
    out.image_labels.resize(3 * half);
    out.pair_labels.resize(2 * half);
    out.paired_rows = 2 * h;
    auto put = [&](Matrix& x, std::vector<std::size_t>& y, Eigen::Index row, std::size_t idx) -> const std::string& {
        const auto& inst = store.at(idx);
        x.row(row) = Eigen::Map<const Eigen::RowVectorXd>(inst.features.data(), d_in);
        const auto c = split.seen_index(inst.label);
        if (!c) throw Error(Errc::invalid_split, "instance '" + inst.id + "' is not from a seen class");
        y[static_cast<std::size_t>(row)] = *c;
        return inst.label;
    };
    out.triplets.reserve(batch.size());
    for (Eigen::Index k = 0; k < h; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        const auto& ts = triplets.at(batch[uk]);
        const auto& ti = triplets.at(batch[half + uk]);
        if (ts.anchor_modality != Modality::Sketch || ti.anchor_modality != Modality::Image)
            throw Error(Errc::invalid_argument, "batch is not sketch-anchored first, image-anchored second");
        out.pair_labels[uk] = put(out.sketch, out.sketch_labels, k, ts.anchor);
        put(out.image, out.image_labels, k, ts.positive);
        put(out.image, out.image_labels, 2 * h + k, ts.negative);
        out.pair_labels[half + uk] = put(out.image, out.image_labels, h + k, ti.anchor);
        put(out.sketch, out.sketch_labels, h + k, ti.positive);
        put(out.sketch, out.sketch_labels, 2 * h + k, ti.negative);
        out.triplets.push_back({Modality::Sketch, k, k, 2 * h + k});
        out.triplets.push_back({Modality::Image, h + k, h + k, 2 * h + k});
    }
    return out;
}

StepResult model_gradients(TrainedModel& model, const BatchData& batch, std::optional<LossTerm> grad_term) {
    ForwardCache cs, ci;
    const Matrix vs = forward_train(model.encoder_s, batch.sketch, cs);
    const Matrix vi = forward_train(model.encoder_i, batch.image, ci);

    const bool latent = model.config.variant == Variant::Latent;
    const Matrix words = model.semantics.rows(batch.pair_labels);
    SemanticProjection::Cache pcache;
    const Matrix targets = latent ? model.projection.forward(words, &pcache) : words;

    LossInputs in;
    in.sketch = &vs;
    in.image = &vi;
    in.sketch_labels = batch.sketch_labels;
    in.image_labels = batch.image_labels;
    in.triplets = batch.triplets;
    in.paired_rows = batch.paired_rows;
    in.head = &model.classifier;
    in.dec_i = &model.dec_i;
    in.dec_s = &model.dec_s;
    in.targets = &targets;
    auto loss = total_loss(model.config.loss, in, grad_term);

    StepResult out;
    out.report = loss.report;
    out.grads.encoder_s = backward(model.encoder_s, cs, loss.grads.sketch).grads;
    out.grads.encoder_i = backward(model.encoder_i, ci, loss.grads.image).grads;
    out.grads.dec_s = std::move(loss.grads.dec_s);
    out.grads.dec_i = std::move(loss.grads.dec_i);
    out.grads.classifier = std::move(loss.grads.head);
    if (latent) out.grads.projection = model.projection.backward(pcache, loss.grads.targets);
    return out;
}

namespace {

template <class Encoder, class Affine, class Projection>
std::vector<ParamBlock> blocks_of(Encoder& enc_s, Encoder& enc_i, Affine& dec_s, Affine& dec_i, Affine& head,
                                  Projection& projection) {
    std::vector<ParamBlock> out;
    auto add = [&out](std::vector<ParamBlock> b) { out.insert(out.end(), b.begin(), b.end()); };
    add(param_blocks(enc_s, "enc_s", false));
    add(param_blocks(enc_i, "enc_i", false));
    add(param_blocks(dec_s, "dec_s"));
    add(param_blocks(dec_i, "dec_i"));
    add(param_blocks(head, "classifier"));
    for (std::size_t l = 0; l < projection.size(); ++l)
        add(param_blocks(projection[l], "projection.l" + std::to_string(l)));
    return out;
}

}  // namespace

std::vector<ParamBlock> trainable_blocks(TrainedModel& model) {
    return blocks_of(model.encoder_s, model.encoder_i, model.dec_s, model.dec_i, model.classifier,
                     model.projection.layers());
}

std::vector<ParamBlock> trainable_blocks(ModelGrads& grads) {
    return blocks_of(grads.encoder_s, grads.encoder_i, grads.dec_s, grads.dec_i, grads.classifier, grads.projection);
}

void apply_sgd(TrainedModel& model, ModelGrads& grads, double lr) {
    const auto params = trainable_blocks(model);
    const auto g = trainable_blocks(grads);
    if (params.size() != g.size()) throw Error(Errc::dimension_mismatch, "gradient layout does not match the model");
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (params[b].size() != g[b].size())
            throw Error(Errc::dimension_mismatch, "gradient block '" + g[b].name + "' has the wrong size");
        for (Eigen::Index i = 0; i < params[b].size(); ++i) params[b].data[i] -= lr * g[b].data[i];
    }
}

LossReport train_step(TrainedModel& model, const FeatureStore& store, const SplitView& split,
                      const std::vector<Triplet>& triplets, const std::vector<std::size_t>& batch,
                      std::optional<LossTerm> grad_term) {
    const auto data = gather_batch(store, split, triplets, batch);
    auto step = model_gradients(model, data, grad_term);
    if (std::isfinite(step.report.total)) apply_sgd(model, step.grads, model.config.learning_rate);
    return step.report;
}

TrainedModel train(const FeatureStore& store, const SplitView& split, const SemanticTable& semantics,
                   const TrainConfig& cfg, const TrainHooks& hooks) {
    TrainedModel model = init_model(store, split, semantics, cfg);
    const auto triplets = build_triplets(split, store, cfg.triplets_per_anchor_type, derive_seed(cfg.seed, kTriplets));
    const auto order = round_robin_order(cfg.loss);

    std::size_t step = 0;
    std::optional<LossReport> last_finite;
    std::optional<double> prev_epoch;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto batches = make_batches(triplets, cfg.batch_size, derive_seed(cfg.seed, kBatches + epoch));
        double sum = 0.0;
        for (const auto& batch : batches) {
            std::optional<LossTerm> term;
            if (cfg.schedule == Schedule::RoundRobin) term = order[step % order.size()];
            else if (cfg.schedule == Schedule::RoundRobinEpoch) term = order[epoch % order.size()];
            const auto report = train_step(model, store, split, triplets, batch, term);
            if (!std::isfinite(report.total)) {
                std::string msg = "training diverged at step " + std::to_string(step);
                msg += last_finite ? "; last finite report " + last_finite->json_line(step - 1) : "; no finite report";
                throw Error(Errc::diverged, msg);
            }
            last_finite = report;
            if (hooks.on_step) hooks.on_step(step, report);
            sum += report.total;
            ++step;
        }
        const double mean = sum / static_cast<double>(batches.size());
        model.epochs_run = epoch + 1;
        if (hooks.on_epoch) hooks.on_epoch(epoch, mean, model);
        if (prev_epoch) {
            const double improvement = (*prev_epoch - mean) / std::max(std::abs(*prev_epoch), 1e-300);
            if (improvement < cfg.epsilon) break;
        }
        prev_epoch = mean;
    }
    if (last_finite) model.final_report = *last_finite;
    return model;
}

}  // namespace zsxm
