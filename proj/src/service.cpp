#include "zsxm/service.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include "httplib.h"
#include "text_util.hpp"

namespace zsxm {

using nlohmann::json;

namespace {

HttpResponse json_response(int status, const json& body) { return {status, "application/json", body.dump()}; }

HttpResponse error_response(int status, const std::string& message) {
    return json_response(status, json{{"error", message}});
}

}  // namespace

std::shared_ptr<const ServiceState> make_service_state(TrainedModel model, const FeatureStore& gallery,
                                                       std::optional<FeaturizerConfig> featurizer,
                                                       std::optional<std::filesystem::path> thumbnail_dir) {
    check_compatible(model, gallery);
    if (featurizer && gallery.featurizer_hash() != featurizer->hash()) featurizer.reset();
    auto index = embed_all(model, gallery.instances());
    return make_service_state(std::move(model), std::move(index), gallery.classes(), featurizer,
                              std::move(thumbnail_dir));
}

std::shared_ptr<const ServiceState> make_service_state(TrainedModel model, EmbeddingIndex index,
                                                       std::vector<std::string> classes,
                                                       std::optional<FeaturizerConfig> featurizer,
                                                       std::optional<std::filesystem::path> thumbnail_dir) {
    auto state = std::make_shared<ServiceState>();
    state->model_fingerprint = model.fingerprint();
    if (index.model_fingerprint() != state->model_fingerprint)
        throw Error(Errc::invalid_argument, "index was built from model " + index.model_fingerprint() +
                                                ", loaded model is " + state->model_fingerprint);
    if (featurizer && (model.featurizer_hash.empty() || featurizer->hash() != model.featurizer_hash)) featurizer.reset();
    state->model = std::make_shared<const TrainedModel>(std::move(model));
    state->index = std::move(index);
    state->classes = std::move(classes);
    state->featurizer = featurizer;
    state->thumbnail_dir = std::move(thumbnail_dir);
    return state;
}

std::vector<unsigned char> base64_decode(std::string_view text) {
    static constexpr auto table = [] {
        std::array<int, 256> t{};
        t.fill(-1);
        constexpr std::string_view alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
        for (std::size_t i = 0; i < alphabet.size(); ++i) t[static_cast<unsigned char>(alphabet[i])] = static_cast<int>(i);
        return t;
    }();
    std::string clean;
    clean.reserve(text.size());
    for (char ch : text)
        if (!std::isspace(static_cast<unsigned char>(ch))) clean.push_back(ch);
    if (clean.size() % 4 != 0) throw Error(Errc::parse_error, "base64 length is not a multiple of 4");

    std::vector<unsigned char> out;
    out.reserve(clean.size() / 4 * 3);
    for (std::size_t i = 0; i < clean.size(); i += 4) {
        int v[4];
        int pad = 0;
        for (int j = 0; j < 4; ++j) {
            const char ch = clean[i + static_cast<std::size_t>(j)];
            if (ch == '=') {
                if (i + 4 != clean.size() || j < 2) throw Error(Errc::parse_error, "misplaced base64 padding");
                v[j] = 0;
                ++pad;
            } else {
                if (pad > 0) throw Error(Errc::parse_error, "misplaced base64 padding");
                v[j] = table[static_cast<unsigned char>(ch)];
                if (v[j] < 0) throw Error(Errc::parse_error, "invalid base64 character");
            }
        }
        const std::uint32_t triple = (static_cast<std::uint32_t>(v[0]) << 18) | (static_cast<std::uint32_t>(v[1]) << 12) |
                                     (static_cast<std::uint32_t>(v[2]) << 6) | static_cast<std::uint32_t>(v[3]);
        out.push_back(static_cast<unsigned char>(triple >> 16));
        if (pad < 2) out.push_back(static_cast<unsigned char>((triple >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<unsigned char>(triple & 0xff));
    }
    return out;
}

std::string base64_encode(const std::vector<unsigned char>& bytes) {
    static constexpr std::string_view alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        const std::size_t n = std::min<std::size_t>(3, bytes.size() - i);
        std::uint32_t triple = static_cast<std::uint32_t>(bytes[i]) << 16;
        if (n > 1) triple |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
        if (n > 2) triple |= bytes[i + 2];
        out.push_back(alphabet[(triple >> 18) & 63]);
        out.push_back(alphabet[(triple >> 12) & 63]);
        out.push_back(n > 1 ? alphabet[(triple >> 6) & 63] : '=');
        out.push_back(n > 2 ? alphabet[triple & 63] : '=');
    }
    return out;
}

RetrieveRequest parse_retrieve_request(const json& body) {
    if (!body.is_object()) throw Error(Errc::parse_error, "request body must be a JSON object");
    static const std::set<std::string> known = {"features", "pixels", "query_modality", "target_modality", "k"};
    for (const auto& [key, _] : body.items())
        if (!known.contains(key)) throw Error(Errc::invalid_argument, "unknown request field '" + key + "'");

    RetrieveRequest req;
    const bool has_features = body.contains("features");
    const bool has_pixels = body.contains("pixels");
    if (has_features == has_pixels)
        throw Error(Errc::invalid_argument, "exactly one of 'features' or 'pixels' is required");
    try {
        if (has_features) {
            req.features = body.at("features").get<std::vector<double>>();
            if (req.features->empty()) throw Error(Errc::invalid_argument, "'features' is empty");
            for (double v : *req.features)
                if (!std::isfinite(v)) throw Error(Errc::non_finite, "'features' holds a non-finite value");
        } else {
            const auto& p = body.at("pixels");
            PixelPayload px;
            px.width = p.at("width").get<std::size_t>();
            px.height = p.at("height").get<std::size_t>();
            px.bytes = base64_decode(p.at("data").get<std::string>());
            if (px.width == 0 || px.height == 0) throw Error(Errc::invalid_argument, "pixel grid must be nonempty");
            if (px.bytes.size() != px.width * px.height)
                throw Error(Errc::invalid_argument, "pixel data holds " + std::to_string(px.bytes.size()) +
                                                        " bytes, expected width*height = " +
                                                        std::to_string(px.width * px.height));
            req.pixels = std::move(px);
        }
        req.query_modality = parse_modality(body.value("query_modality", std::string("sketch")));
        req.target_modality = parse_modality(body.value("target_modality", std::string("image")));
        const auto k = body.value("k", static_cast<long long>(10));
        if (k < 1 || k > static_cast<long long>(kMaxK))
            throw Error(Errc::invalid_argument, "k must be in [1, " + std::to_string(kMaxK) + "]");
        req.k = static_cast<std::size_t>(k);
    } catch (const json::exception& e) {
        throw Error(Errc::parse_error, std::string("malformed request: ") + e.what());
    }
    return req;
}

Service::Service() = default;
Service::Service(std::shared_ptr<const ServiceState> state) : state_(std::move(state)) {}
Service::~Service() { stop(); }

void Service::swap_state(std::shared_ptr<const ServiceState> state) {
    std::lock_guard lock(mutex_);
    state_ = std::move(state);
}

std::shared_ptr<const ServiceState> Service::snapshot() const {
    std::lock_guard lock(mutex_);
    return state_;
}

HttpResponse Service::health() const {
    const auto s = snapshot();
    if (!s) return json_response(503, json{{"status", "no model loaded"}, {"model_fingerprint", nullptr}});
    return json_response(200, json{{"status", "ok"},
                                   {"model_fingerprint", s->model_fingerprint},
                                   {"index_size", s->index.size()},
                                   {"pixel_queries", s->featurizer.has_value()}});
}

HttpResponse Service::classes() const {
    const auto s = snapshot();
    if (!s) return error_response(503, "no model loaded");
    json list = json::array();
    for (const auto& c : s->classes) {
        const bool seen = std::find(s->model->seen_classes.begin(), s->model->seen_classes.end(), c) !=
                          s->model->seen_classes.end();
        list.push_back({{"name", c}, {"seen", seen}});
    }
    return json_response(200, json{{"classes", list}});
}

HttpResponse Service::retrieve(const std::string& body) const {
    const auto s = snapshot();
    if (!s) return error_response(503, "no model loaded");
    RetrieveRequest req;
    try {
        req = parse_retrieve_request(json::parse(body));
    } catch (const json::exception& e) {
        return error_response(400, std::string("body is not valid JSON: ") + e.what());
    } catch (const Error& e) {
        return error_response(400, e.what());
    }

    std::vector<double> features;
    if (req.pixels) {
        if (!s->featurizer)
            return error_response(409, "this model does not accept pixel queries: the gallery was not built with "
                                       "the featurizer configuration recorded in the model");
        const auto image = PixelImage::from_bytes(req.pixels->width, req.pixels->height, req.pixels->bytes);
        features = extract(image, *s->featurizer);
    } else {
        features = std::move(*req.features);
    }

    std::vector<Neighbor> hits;
    try {
        const Vector q = embed_query(*s->model, features, req.query_modality);
        hits = knn(s->index, q, req.k, {req.target_modality, std::nullopt});
    } catch (const Error& e) {
        if (e.code() == Errc::empty_gallery) return error_response(404, e.what());
        return error_response(400, e.what());
    }

    json results = json::array();
    for (std::size_t r = 0; r < hits.size(); ++r) {
        json item{{"rank", r + 1}, {"id", hits[r].id}, {"label", hits[r].label}, {"distance", hits[r].distance}};
        if (s->thumbnail_dir) item["thumbnail_url"] = "/item/" + hits[r].id + "/thumb";
        results.push_back(std::move(item));
    }
    return json_response(200, json{{"query_modality", std::string(to_string(req.query_modality))},
                                   {"target_modality", std::string(to_string(req.target_modality))},
                                   {"k", req.k},
                                   {"model_fingerprint", s->model_fingerprint},
                                   {"results", results}});
}

HttpResponse Service::thumbnail(const std::string& id) const {
    const auto s = snapshot();
    if (!s) return error_response(503, "no model loaded");
    if (!s->thumbnail_dir) return error_response(404, "no thumbnail directory configured");
    if (!s->index.find(id)) return error_response(404, "unknown item '" + id + "'");
    const auto path = *s->thumbnail_dir / (id + ".png");
    if (!std::filesystem::is_regular_file(path)) return error_response(404, "no thumbnail for '" + id + "'");
    return {200, "image/png", detail::read_file(path)};
}

void Service::bind_routes() {
    server_ = std::make_unique<httplib::Server>();
    auto send = [](httplib::Response& res, const HttpResponse& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    server_->Get("/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
    server_->Get("/classes", [this, send](const httplib::Request&, httplib::Response& res) { send(res, classes()); });
    server_->Post("/retrieve",
                  [this, send](const httplib::Request& req, httplib::Response& res) { send(res, retrieve(req.body)); });
    server_->Get(R"(/item/(.+)/thumb)", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, thumbnail(req.matches[1].str()));
    });
}

bool Service::listen(const std::string& host, int port) {
    bind_routes();
    return server_->listen(host, port);
}

int Service::start_background(const std::string& host) {
    bind_routes();
    const int port = server_->bind_to_any_port(host);
    if (port < 0) throw Error(Errc::io_error, "could not bind a port on " + host);
    thread_ = std::make_unique<std::jthread>([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port;
}

void Service::stop() {
    if (server_) server_->stop();
    thread_.reset();
}

}  // namespace zsxm
