#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "zsxm/featurizer.hpp"
#include "zsxm/feature_store.hpp"
#include "zsxm/retrieval.hpp"
#include "zsxm/semantics.hpp"
#include "zsxm/service.hpp"
#include "zsxm/trainer.hpp"

using namespace zsxm;

namespace {

std::set<std::string> split_list(const std::string& text) {
    std::set<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.insert(item);
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(Errc::io_error, "cannot write '" + path + "'");
    f << text;
}

/// Store instances whose class the model never saw, or every instance with `all`.
std::vector<std::size_t> eval_instances(const TrainedModel& model, const FeatureStore& store, const std::string& which) {
    const std::set<std::string> seen(model.seen_classes.begin(), model.seen_classes.end());
    std::vector<std::size_t> out;
    const auto all = store.instances();
    for (std::size_t i = 0; i < all.size(); ++i) {
        const bool is_seen = seen.contains(all[i].label);
        if (which == "all" || (which == "seen") == is_seen) out.push_back(i);
    }
    if (out.empty()) throw Error(Errc::empty_gallery, "no " + which + "-class instances in the store");
    return out;
}

struct Args {
    std::string store, config, model, out, semantics, unseen, sketches, images, metrics, query, thumbs;
    std::string direction = "sketch2image";
    std::string classes = "unseen";
    std::string host = "127.0.0.1";
    std::size_t k = 100;
    int port = 8080;
    std::optional<std::uint64_t> seed;
    FeaturizerConfig featurizer;
};

int run_featurize(const Args& a) {
    std::vector<FeaturizeResult> parts;
    if (!a.sketches.empty()) parts.push_back(featurize_directory(a.sketches, a.featurizer, Modality::Sketch));
    if (!a.images.empty()) parts.push_back(featurize_directory(a.images, a.featurizer, Modality::Image));
    std::size_t warnings = 0;
    for (const auto& p : parts)
        for (const auto& w : p.warnings) {
            std::cerr << "warning: skipped " << w.path.string() << ": " << w.message << "\n";
            ++warnings;
        }
    const auto store = make_featurized_store(std::move(parts), a.featurizer);
    save_store(store, a.out);
    std::cout << "featurized " << store.size() << " instances, " << store.classes().size() << " classes, dim "
              << store.dim() << " (" << warnings << " skipped) -> " << a.out << "\n";
    return 0;
}

int run_train(const Args& a) {
    TrainConfig cfg = a.config.empty() ? TrainConfig{} : load_train_config(a.config);
    if (a.seed) cfg.seed = *a.seed;
    cfg.validate();
    const auto store = load_store(a.store);
    const auto split = make_split(store, split_list(a.unseen));
    const auto semantics = load_word_vectors(a.semantics, store.classes());

    std::ofstream metrics;
    if (!a.metrics.empty()) {
        metrics.open(a.metrics, std::ios::binary);
        if (!metrics) throw Error(Errc::io_error, "cannot write '" + a.metrics + "'");
    }
    TrainHooks hooks;
    hooks.on_step = [&](std::size_t step, const LossReport& r) {
        if (metrics) metrics << r.json_line(step) << '\n';
    };
    hooks.on_epoch = [](std::size_t epoch, double mean, const TrainedModel&) {
        std::cout << "epoch " << epoch + 1 << " mean loss " << mean << "\n";
    };
    const auto model = train(store, split, semantics, cfg, hooks);
    save_model(model, a.out);
    std::cout << "trained " << model.epochs_run << " epochs on " << split.seen_classes.size()
              << " seen classes; final loss " << model.final_report.total << "; fingerprint " << model.fingerprint()
              << " -> " << a.out << "\n";
    return 0;
}

int run_eval(const Args& a) {
    const auto store = load_store(a.store);
    const auto model = load_model(a.model);
    const auto report =
        evaluate(model, store, eval_instances(model, store, a.classes), parse_direction(a.direction), a.k);
    const std::string text = report.to_json().dump(2) + "\n";
    if (!a.out.empty()) write_text(a.out, text);
    else std::cout << text;
    std::cout << a.direction << " on " << a.classes << " classes: mAP " << report.map << ", P@" << report.k << " "
              << report.precision_at_k << " (" << report.queries << " queries, gallery " << report.gallery << ")\n";
    return 0;
}

int run_retrieve(const Args& a) {
    const auto store = load_store(a.store);
    const auto model = load_model(a.model);
    check_compatible(model, store);
    const Direction dir = parse_direction(a.direction);
    const Instance* query = nullptr;
    for (const auto& inst : store.instances())
        if (inst.id == a.query) query = &inst;
    if (!query) throw Error(Errc::invalid_argument, "query id '" + a.query + "' is not in the store");
    if (query->modality != query_modality(dir))
        throw Error(Errc::invalid_argument, "query '" + a.query + "' is a " + std::string(to_string(query->modality)) +
                                                " but direction " + a.direction + " needs a " +
                                                std::string(to_string(query_modality(dir))));

    const auto index = embed_all(model, store.instances());
    const Vector q = embed_query(model, query->features, query->modality);
    KnnFilter filter{gallery_modality(dir), std::nullopt};
    if (is_unimodal(dir)) filter.exclude_id = query->id;
    const auto hits = knn(index, q, a.k, filter);

    nlohmann::json results = nlohmann::json::array();
    for (std::size_t r = 0; r < hits.size(); ++r)
        results.push_back({{"rank", r + 1}, {"id", hits[r].id}, {"label", hits[r].label}, {"distance", hits[r].distance}});
    const nlohmann::json out{{"query_id", query->id}, {"query_label", query->label}, {"direction", a.direction},
                             {"results", results}};
    if (!a.out.empty()) write_text(a.out, out.dump(2) + "\n");
    else std::cout << out.dump(2) << "\n";
    std::size_t same = 0;
    for (const auto& h : hits) same += h.label == query->label;
    std::cout << hits.size() << " results for " << query->id << ", " << same << " share its label\n";
    return 0;
}

int run_export(const Args& a) {
    const auto store = load_store(a.store);
    const auto model = load_model(a.model);
    check_compatible(model, store);
    const auto index = embed_all(model, store.instances());
    export_embeddings(index, a.out);
    std::cout << "exported " << index.size() << " embeddings of dim " << index.dim() << " -> " << a.out << "\n";
    return 0;
}

int run_serve(const Args& a) {
    const auto store = load_store(a.store);
    auto model = load_model(a.model);
    std::optional<std::filesystem::path> thumbs;
    if (!a.thumbs.empty()) thumbs = a.thumbs;
    Service service(make_service_state(std::move(model), store, a.featurizer, thumbs));
    const auto s = service.snapshot();
    std::cout << "serving " << s->index.size() << " items, model " << s->model_fingerprint << ", pixel queries "
              << (s->featurizer ? "on" : "off") << ", http://" << a.host << ":" << a.port << "\n"
              << std::flush;
    if (!service.listen(a.host, a.port)) throw Error(Errc::io_error, "cannot listen on " + a.host + ":" + std::to_string(a.port));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Zero-shot sketch/image retrieval: featurize, train, evaluate, retrieve and serve"};
    app.require_subcommand(1);
    Args a;
    const std::vector<std::string> directions = {"sketch2image", "image2sketch", "sketch2sketch", "image2image"};

    auto* feat = app.add_subcommand("featurize", "Gradient-histogram features for <class>/<file> image trees");
    feat->add_option("--sketches", a.sketches, "Sketch directory")->check(CLI::ExistingDirectory);
    feat->add_option("--images", a.images, "Image directory")->check(CLI::ExistingDirectory);
    feat->add_option("--out", a.out, "Output manifest (.csv)")->required();
    feat->add_option("--cell-size", a.featurizer.cell_size, "Pixels per cell side")->capture_default_str();
    feat->add_option("--bins", a.featurizer.n_bins, "Orientation bins")->capture_default_str();
    feat->add_option("--grid", a.featurizer.grid, "Cells per side")->capture_default_str();
    feat->add_flag("--binarize", a.featurizer.binarize, "Threshold intensities at 0.5 first");

    auto* tr = app.add_subcommand("train", "Train encoders on the seen classes");
    tr->add_option("--store", a.store, "Feature manifest")->required()->check(CLI::ExistingFile);
    tr->add_option("--semantics", a.semantics, "Word-vector file")->required()->check(CLI::ExistingFile);
    tr->add_option("--unseen", a.unseen, "Comma-separated held-out classes")->required();
    tr->add_option("--config", a.config, "Training config (JSON)")->check(CLI::ExistingFile);
    tr->add_option("--out", a.out, "Checkpoint path")->required();
    tr->add_option("--metrics", a.metrics, "Per-step loss log (JSON lines)");
    tr->add_option("--seed", a.seed, "Override the config seed");

    auto* ev = app.add_subcommand("eval", "mAP and P@K for one retrieval direction");
    ev->add_option("--store", a.store, "Feature manifest")->required()->check(CLI::ExistingFile);
    ev->add_option("--model", a.model, "Checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("--direction", a.direction, "Query and gallery modality")
        ->check(CLI::IsMember(directions))
        ->capture_default_str();
    ev->add_option("--k", a.k, "Cut-off for precision at K")->check(CLI::PositiveNumber)->capture_default_str();
    ev->add_option("--classes", a.classes, "Which store classes to evaluate")
        ->check(CLI::IsMember({"unseen", "seen", "all"}))
        ->capture_default_str();
    ev->add_option("--out", a.out, "Report path (JSON); stdout if omitted");

    auto* rt = app.add_subcommand("retrieve", "Nearest neighbours of one stored instance");
    rt->add_option("--store", a.store, "Feature manifest")->required()->check(CLI::ExistingFile);
    rt->add_option("--model", a.model, "Checkpoint")->required()->check(CLI::ExistingFile);
    rt->add_option("--query", a.query, "Instance id")->required();
    rt->add_option("--direction", a.direction, "Query and gallery modality")
        ->check(CLI::IsMember(directions))
        ->capture_default_str();
    rt->add_option("--k", a.k, "Number of results")->check(CLI::PositiveNumber)->capture_default_str();
    rt->add_option("--out", a.out, "Result path (JSON); stdout if omitted");

    auto* ex = app.add_subcommand("export-embeddings", "Write id,modality,label,v1..vd CSV");
    ex->add_option("--store", a.store, "Feature manifest")->required()->check(CLI::ExistingFile);
    ex->add_option("--model", a.model, "Checkpoint")->required()->check(CLI::ExistingFile);
    ex->add_option("--out", a.out, "CSV path")->required();

    auto* sv = app.add_subcommand("serve", "HTTP retrieval service");
    sv->add_option("--store", a.store, "Gallery manifest")->required()->check(CLI::ExistingFile);
    sv->add_option("--model", a.model, "Checkpoint")->required()->check(CLI::ExistingFile);
    sv->add_option("--port", a.port, "TCP port")->check(CLI::Range(1, 65535))->capture_default_str();
    sv->add_option("--host", a.host, "Bind address")->capture_default_str();
    sv->add_option("--thumbs", a.thumbs, "Directory of <id>.png thumbnails")->check(CLI::ExistingDirectory);
    sv->add_option("--cell-size", a.featurizer.cell_size, "Featurizer cell size for pixel queries");
    sv->add_option("--bins", a.featurizer.n_bins, "Featurizer orientation bins for pixel queries");
    sv->add_option("--grid", a.featurizer.grid, "Featurizer cells per side for pixel queries");
    sv->add_flag("--binarize", a.featurizer.binarize, "Featurizer binarization for pixel queries");

    try {
        app.parse(argc, argv);
        if (feat->parsed() && a.sketches.empty() && a.images.empty())
            throw CLI::ValidationError("featurize needs --sketches and/or --images");
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        a.featurizer.validate();
        if (feat->parsed()) return run_featurize(a);
        if (tr->parsed()) return run_train(a);
        if (ev->parsed()) return run_eval(a);
        if (rt->parsed()) return run_retrieve(a);
        if (ex->parsed()) return run_export(a);
        if (sv->parsed()) return run_serve(a);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
