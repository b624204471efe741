#ifndef ZSXM_SERVICE_HPP
#define ZSXM_SERVICE_HPP

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "zsxm/featurizer.hpp"
#include "zsxm/retrieval.hpp"
#include "zsxm/trainer.hpp"

namespace httplib {
class Server;
}

namespace zsxm {

/// Immutable once built; requests share it through a shared_ptr.
struct ServiceState {
    std::shared_ptr<const TrainedModel> model;
    std::string model_fingerprint;
    EmbeddingIndex index;
    std::vector<std::string> classes;
    /// Present only when the gallery was made by the built-in featurizer with the model's config.
    std::optional<FeaturizerConfig> featurizer;
    std::optional<std::filesystem::path> thumbnail_dir;
};

/**
 * Embeds `gallery` with `model`. Raw-pixel queries are enabled when `featurizer`
 * is given and its hash matches both the model header and the store.
 */
std::shared_ptr<const ServiceState> make_service_state(TrainedModel model, const FeatureStore& gallery,
                                                       std::optional<FeaturizerConfig> featurizer = std::nullopt,
                                                       std::optional<std::filesystem::path> thumbnail_dir = std::nullopt);

/// Uses a prebuilt index; refuses one built from a different model.
std::shared_ptr<const ServiceState> make_service_state(TrainedModel model, EmbeddingIndex index,
                                                       std::vector<std::string> classes,
                                                       std::optional<FeaturizerConfig> featurizer = std::nullopt,
                                                       std::optional<std::filesystem::path> thumbnail_dir = std::nullopt);

struct PixelPayload {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<unsigned char> bytes;
};

struct RetrieveRequest {
    std::optional<std::vector<double>> features;
    std::optional<PixelPayload> pixels;
    Modality query_modality = Modality::Sketch;
    Modality target_modality = Modality::Image;
    std::size_t k = 10;
};

inline constexpr std::size_t kMaxK = 1000;

/**
 * `{"features":[...]}` or `{"pixels":{"width":w,"height":h,"data":"<base64>"}}`
 * plus `query_modality`, `target_modality` and `k`. Throws Errc::invalid_argument
 * or Errc::parse_error on a malformed request.
 */
RetrieveRequest parse_retrieve_request(const nlohmann::json& body);

/// Standard alphabet with padding; whitespace is ignored. Throws Errc::parse_error.
std::vector<unsigned char> base64_decode(std::string_view text);
std::string base64_encode(const std::vector<unsigned char>& bytes);

struct HttpResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

/**
 * Request handlers over a swappable state snapshot. Each handler takes the
 * current snapshot once, so a swap between requests never mixes models.
 */
class Service {
public:
    Service();
    explicit Service(std::shared_ptr<const ServiceState> state);
    ~Service();

    void swap_state(std::shared_ptr<const ServiceState> state);
    std::shared_ptr<const ServiceState> snapshot() const;

    HttpResponse health() const;
    HttpResponse classes() const;
    HttpResponse retrieve(const std::string& body) const;
    HttpResponse thumbnail(const std::string& id) const;

    /// Binds the routes and blocks serving on host:port. Returns false if binding failed.
    bool listen(const std::string& host, int port);
    /// Binds to a free port and serves on a background thread; returns the port.
    int start_background(const std::string& host);
    void stop();

private:
    void bind_routes();

    mutable std::mutex mutex_;
    std::shared_ptr<const ServiceState> state_;
    std::unique_ptr<httplib::Server> server_;
    std::unique_ptr<std::jthread> thread_;
};

}  // namespace zsxm

#endif  // ZSXM_SERVICE_HPP
