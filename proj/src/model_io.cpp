#include <bit>
#include <map>

#include "text_util.hpp"
#include "zsxm/trainer.hpp"

namespace zsxm {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "ZSXM1\n";
constexpr int kFormatVersion = 1;

std::vector<ParamBlock> model_blocks(TrainedModel& m, Matrix& semantics) {
    std::vector<ParamBlock> out;
    auto add = [&out](std::vector<ParamBlock> blocks) { out.insert(out.end(), blocks.begin(), blocks.end()); };
    add(param_blocks(m.encoder_s, "enc_s", true));
    add(param_blocks(m.encoder_i, "enc_i", true));
    add(param_blocks(m.dec_s, "dec_s"));
    add(param_blocks(m.dec_i, "dec_i"));
    add(param_blocks(m.classifier, "classifier"));
    if (m.config.variant == Variant::Latent)
        for (std::size_t l = 0; l < m.projection.layers().size(); ++l)
            add(param_blocks(m.projection.layers()[l], "projection.l" + std::to_string(l)));
    out.push_back({"semantics", semantics.data(), semantics.rows(), semantics.cols()});
    return out;
}

void put_f64(std::string& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

double get_f64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
    return std::bit_cast<double>(bits);
}

json report_json(const LossReport& r) {
    return json{{"ce", r.ce}, {"iii", r.iii}, {"dl", r.dl}, {"cpl", r.cpl}, {"total", r.total}};
}

[[noreturn]] void corrupt(const std::string& why) { throw Error(Errc::corrupt_checkpoint, "corrupt checkpoint: " + why); }

}  // namespace

std::string TrainedModel::fingerprint() const {
    TrainedModel copy = *this;
    Matrix sem = copy.semantics.rows(copy.seen_classes);
    std::uint64_t h = fnv1a(nullptr, 0);
    for (const auto& b : model_blocks(copy, sem)) {
        h = fnv1a(b.name.data(), b.name.size(), h);
        h = fnv1a(b.data, static_cast<std::size_t>(b.size()) * sizeof(double), h);
    }
    return hex64(h);
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
    TrainedModel copy = model;
    Matrix sem = copy.semantics.rows(copy.seen_classes);
    const auto blocks = model_blocks(copy, sem);

    json header;
    header["version"] = kFormatVersion;
    header["variant"] = std::string(to_string(model.config.variant));
    header["dims"] = {{"input", model.input_dim()},
                      {"embedding", model.embedding_dim()},
                      {"semantic", model.semantics.dim()},
                      {"classes", model.seen_classes.size()}};
    header["hidden"] = model.encoder_s.hidden_dims();
    header["projection_hidden"] =
        model.config.variant == Variant::Latent && model.projection.layers().size() == 2
            ? model.projection.layers()[0].out_dim()
            : 0;
    header["seen_classes"] = model.seen_classes;
    header["featurizer_hash"] = model.featurizer_hash;
    header["config"] = to_json(model.config);
    header["final_report"] = report_json(model.final_report);
    header["epochs_run"] = model.epochs_run;
    json jb = json::array();
    for (const auto& b : blocks) jb.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
    header["blocks"] = jb;

    const std::string text = header.dump();
    std::string out(kMagic);
    const auto len = static_cast<std::uint64_t>(text.size());
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((len >> (8 * b)) & 0xffu));
    out += text;
    for (const auto& b : blocks)
        for (Eigen::Index i = 0; i < b.size(); ++i) put_f64(out, b.data[i]);
    detail::write_file(path, out);
}

TrainedModel load_model(const std::filesystem::path& path, std::optional<Variant> expected) {
    if (!std::filesystem::exists(path)) throw Error(Errc::missing_file, "model '" + path.string() + "' not found");
    const std::string raw = detail::read_file(path);
    if (raw.size() < kMagic.size() + 8 || raw.compare(0, kMagic.size(), kMagic) != 0) corrupt("bad magic");
    const auto* bytes = reinterpret_cast<const unsigned char*>(raw.data());
    std::uint64_t len = 0;
    for (int b = 0; b < 8; ++b) len |= static_cast<std::uint64_t>(bytes[kMagic.size() + b]) << (8 * b);
    const std::size_t body = kMagic.size() + 8;
    if (len > raw.size() - body) corrupt("header truncated");

    json header;
    TrainedModel m;
    std::size_t proj_hidden = 0;
    std::vector<std::size_t> hidden;
    std::size_t d_in = 0, d_emb = 0, d_sem = 0, n_cls = 0;
    try {
        header = json::parse(raw.substr(body, len));
        if (header.at("version").get<int>() != kFormatVersion)
            corrupt("unsupported version " + header.at("version").dump());
        m.config = train_config_from_json(header.at("config"));
        const auto& dims = header.at("dims");
        d_in = dims.at("input").get<std::size_t>();
        d_emb = dims.at("embedding").get<std::size_t>();
        d_sem = dims.at("semantic").get<std::size_t>();
        n_cls = dims.at("classes").get<std::size_t>();
        hidden = header.at("hidden").get<std::vector<std::size_t>>();
        proj_hidden = header.at("projection_hidden").get<std::size_t>();
        m.seen_classes = header.at("seen_classes").get<std::vector<std::string>>();
        m.featurizer_hash = header.at("featurizer_hash").get<std::string>();
        m.epochs_run = header.at("epochs_run").get<std::size_t>();
        const auto& r = header.at("final_report");
        m.final_report = {r.at("ce").get<double>(), r.at("iii").get<double>(), r.at("dl").get<double>(),
                          r.at("cpl").get<double>(), r.at("total").get<double>()};
    } catch (const json::exception& e) {
        corrupt(std::string("bad header: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::corrupt_checkpoint) throw;
        corrupt(e.what());
    }

    const std::string variant = header["variant"].is_string() ? header["variant"].get<std::string>() : "";
    if (variant != to_string(m.config.variant)) corrupt("variant field disagrees with config");
    if (expected && *expected != m.config.variant)
        throw Error(Errc::variant_mismatch, "variant mismatch: checkpoint is " + variant + ", pipeline expects " +
                                                std::string(to_string(*expected)));
    if (n_cls != m.seen_classes.size()) corrupt("class count disagrees with class list");
    if (d_in == 0 || d_emb == 0 || d_sem == 0 || n_cls < 2) corrupt("degenerate dimensions");
    if (m.config.variant == Variant::Fixed && d_emb != d_sem) corrupt("fixed variant needs embedding dim = semantic dim");

    // Rebuild the shapes, then fill them from the payload.
    m.encoder_s = init_encoder(d_in, d_emb, 0, hidden);
    m.encoder_i = init_encoder(d_in, d_emb, 0, hidden);
    Rng dummy(0);
    m.dec_s = init_affine(d_emb, d_emb, dummy);
    m.dec_i = init_affine(d_emb, d_emb, dummy);
    m.classifier = init_affine(d_emb, n_cls, dummy);
    if (m.config.variant == Variant::Latent) m.projection = SemanticProjection::init(d_sem, d_emb, proj_hidden, 0);
    Matrix sem(static_cast<Eigen::Index>(n_cls), static_cast<Eigen::Index>(d_sem));

    const auto blocks = model_blocks(m, sem);
    const auto& jb = header["blocks"];
    if (!jb.is_array() || jb.size() != blocks.size()) corrupt("block table does not match the architecture");
    std::size_t pos = body + len;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& b = blocks[i];
        if (jb[i].value("name", "") != b.name || jb[i].value("rows", Eigen::Index{-1}) != b.rows ||
            jb[i].value("cols", Eigen::Index{-1}) != b.cols)
            corrupt("block '" + b.name + "' has unexpected name or shape");
        const auto need = static_cast<std::size_t>(b.size()) * 8;
        if (raw.size() - pos < need) corrupt("payload truncated in block '" + b.name + "'");
        for (Eigen::Index k = 0; k < b.size(); ++k) b.data[k] = get_f64(bytes + pos + static_cast<std::size_t>(k) * 8);
        pos += need;
    }
    if (pos != raw.size()) corrupt("trailing bytes after the last block");

    std::map<std::string, std::vector<double>> vecs;
    for (std::size_t c = 0; c < n_cls; ++c) {
        const auto row = sem.row(static_cast<Eigen::Index>(c));
        vecs.emplace(m.seen_classes[c], std::vector<double>(row.begin(), row.end()));
    }
    if (vecs.size() != n_cls) corrupt("duplicate class in class list");
    m.semantics = SemanticTable(d_sem, std::move(vecs));
    return m;
}

void check_compatible(const TrainedModel& model, const FeatureStore& store) {
    if (model.input_dim() != store.dim())
        throw Error(Errc::dimension_mismatch, "model expects " + std::to_string(model.input_dim()) +
                                                  "-d features, store has " + std::to_string(store.dim()));
}

}  // namespace zsxm
