#include "zsxm/featurizer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <set>

#include <png.h>

#include "text_util.hpp"

namespace zsxm {

namespace fs = std::filesystem;

PixelImage::PixelImage(std::size_t width, std::size_t height, std::vector<double> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width_ == 0 || height_ == 0) throw Error(Errc::invalid_argument, "image must be nonempty");
    if (pixels_.size() != width_ * height_)
        throw Error(Errc::dimension_mismatch, "pixel count does not match width*height");
    for (auto& p : pixels_) {
        if (!std::isfinite(p)) throw Error(Errc::non_finite, "non-finite pixel value");
        p = std::clamp(p, 0.0, 1.0);
    }
}

PixelImage PixelImage::from_bytes(std::size_t width, std::size_t height, const std::vector<unsigned char>& bytes) {
    std::vector<double> px(bytes.size());
    std::transform(bytes.begin(), bytes.end(), px.begin(), [](unsigned char b) { return b / 255.0; });
    return PixelImage(width, height, std::move(px));
}

void FeaturizerConfig::validate() const {
    if (cell_size == 0 || n_bins == 0 || grid == 0)
        throw Error(Errc::invalid_argument, "featurizer cell_size, n_bins and grid must be positive");
    if (output_dim() < 8) throw Error(Errc::invalid_argument, "featurizer output dimension must be at least 8");
}

std::string FeaturizerConfig::hash() const {
    const std::string canon = "hog-v1;cell=" + std::to_string(cell_size) + ";bins=" + std::to_string(n_bins) +
                              ";grid=" + std::to_string(grid) + ";binarize=" + (binarize ? "1" : "0");
    return hex64(fnv1a(canon.data(), canon.size()));
}

namespace {

std::vector<double> resample(const PixelImage& img, std::size_t side, bool binarize) {
    auto src = [&](std::size_t x, std::size_t y) {
        const double v = img.at(x, y);
        return binarize ? (v >= 0.5 ? 1.0 : 0.0) : v;
    };
    const double sx_scale = static_cast<double>(img.width()) / static_cast<double>(side);
    const double sy_scale = static_cast<double>(img.height()) / static_cast<double>(side);
    const double max_x = static_cast<double>(img.width() - 1);
    const double max_y = static_cast<double>(img.height() - 1);
    std::vector<double> out(side * side);
    for (std::size_t y = 0; y < side; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy_scale - 0.5, 0.0, max_y);
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
        const double ty = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < side; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx_scale - 0.5, 0.0, max_x);
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
            const double tx = fx - static_cast<double>(x0);
            double v = src(x0, y0);
            if (tx > 0.0 || ty > 0.0) {
                const double top = (1.0 - tx) * src(x0, y0) + tx * src(x1, y0);
                const double bottom = (1.0 - tx) * src(x0, y1) + tx * src(x1, y1);
                v = (1.0 - ty) * top + ty * bottom;
            }
            out[y * side + x] = v;
        }
    }
    return out;
}

// Below this magnitude a gradient is rounding noise (e.g. after an intensity offset).
constexpr double kMinMagnitude = 1e-9;

}  // namespace

std::vector<double> extract(const PixelImage& image, const FeaturizerConfig& cfg) {
    cfg.validate();
    const std::size_t side = cfg.grid * cfg.cell_size;
    const auto px = resample(image, side, cfg.binarize);
    auto at = [&](std::ptrdiff_t x, std::ptrdiff_t y) {
        const auto n = static_cast<std::ptrdiff_t>(side);
        x = std::clamp<std::ptrdiff_t>(x, 0, n - 1);
        y = std::clamp<std::ptrdiff_t>(y, 0, n - 1);
        return px[static_cast<std::size_t>(y) * side + static_cast<std::size_t>(x)];
    };

    std::vector<double> hist(cfg.output_dim(), 0.0);
    const double bin_width = std::numbers::pi / static_cast<double>(cfg.n_bins);
    for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
            const auto ix = static_cast<std::ptrdiff_t>(x);
            const auto iy = static_cast<std::ptrdiff_t>(y);
            const double gx = (at(ix + 1, iy - 1) + 2.0 * at(ix + 1, iy) + at(ix + 1, iy + 1)) -
                              (at(ix - 1, iy - 1) + 2.0 * at(ix - 1, iy) + at(ix - 1, iy + 1));
            const double gy = (at(ix - 1, iy + 1) + 2.0 * at(ix, iy + 1) + at(ix + 1, iy + 1)) -
                              (at(ix - 1, iy - 1) + 2.0 * at(ix, iy - 1) + at(ix + 1, iy - 1));
            const double mag = std::hypot(gx, gy);
            if (mag < kMinMagnitude) continue;
            double angle = std::atan2(gy, gx);
            if (angle < 0.0) angle += std::numbers::pi;
            auto bin = static_cast<std::size_t>(angle / bin_width);
            // Angles within rounding of pi are the same unsigned orientation as 0.
            if (bin >= cfg.n_bins || std::numbers::pi - angle < 1e-9) bin = 0;
            const std::size_t cell = (y / cfg.cell_size) * cfg.grid + (x / cfg.cell_size);
            hist[cell * cfg.n_bins + bin] += mag;
        }
    }

    double norm = 0.0;
    for (double h : hist) norm += h * h;
    norm = std::sqrt(norm);
    if (norm > 0.0)
        for (auto& h : hist) h /= norm;
    return hist;
}

PixelImage read_pgm(const fs::path& path) {
    const std::string data = detail::read_file(path);
    std::size_t pos = 0;
    auto skip_space = [&] {
        for (;;) {
            while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
            if (pos < data.size() && data[pos] == '#') {
                while (pos < data.size() && data[pos] != '\n') ++pos;
                continue;
            }
            return;
        }
    };
    auto read_int = [&]() -> std::size_t {
        skip_space();
        const std::size_t start = pos;
        while (pos < data.size() && std::isdigit(static_cast<unsigned char>(data[pos]))) ++pos;
        const auto v = detail::parse_size(std::string_view(data).substr(start, pos - start));
        if (!v) throw Error(Errc::parse_error, "bad PGM header in '" + path.string() + "'");
        return *v;
    };
    if (data.size() < 2 || data[0] != 'P' || data[1] != '5')
        throw Error(Errc::parse_error, "'" + path.string() + "' is not a binary PGM");
    pos = 2;
    const std::size_t w = read_int();
    const std::size_t h = read_int();
    const std::size_t maxval = read_int();
    if (w == 0 || h == 0 || maxval == 0 || maxval > 255)
        throw Error(Errc::parse_error, "unsupported PGM geometry in '" + path.string() + "'");
    ++pos;  // single whitespace before raster
    if (data.size() < pos + w * h) throw Error(Errc::parse_error, "truncated PGM '" + path.string() + "'");
    std::vector<double> px(w * h);
    for (std::size_t i = 0; i < w * h; ++i)
        px[i] = static_cast<unsigned char>(data[pos + i]) / static_cast<double>(maxval);
    return PixelImage(w, h, std::move(px));
}

void write_pgm(const fs::path& path, const PixelImage& image) {
    std::string out = "P5\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
    for (double p : image.pixels()) out += static_cast<char>(static_cast<unsigned char>(std::lround(p * 255.0)));
    detail::write_file(path, out);
}

PixelImage read_png(const fs::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.string().c_str()))
        throw Error(Errc::parse_error, "cannot decode PNG '" + path.string() + "': " + png.message);
    png.format = PNG_FORMAT_GRAY;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&png);
        throw Error(Errc::parse_error, "cannot decode PNG '" + path.string() + "': " + png.message);
    }
    return PixelImage::from_bytes(png.width, png.height, buf);
}

PixelImage read_image(const fs::path& path) {
    std::string ext = path.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".pgm") return read_pgm(path);
    if (ext == ".png") return read_png(path);
    throw Error(Errc::parse_error, "unsupported image format '" + path.string() + "'");
}

namespace {

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext == ".pgm" || ext == ".png";
}

template <typename Pred>
std::vector<fs::path> sorted_entries(const fs::path& dir, Pred keep) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (keep(e)) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

FeaturizeResult featurize_directory(const fs::path& dir, const FeaturizerConfig& cfg, Modality modality) {
    cfg.validate();
    if (!fs::is_directory(dir)) throw Error(Errc::missing_file, "directory '" + dir.string() + "' not found");

    FeaturizeResult result;
    const auto class_dirs = sorted_entries(dir, [](const fs::directory_entry& e) { return e.is_directory(); });
    for (const auto& class_dir : class_dirs) {
        const std::string label = class_dir.filename().string();
        const auto files = sorted_entries(class_dir, [](const fs::directory_entry& e) {
            return e.is_regular_file() && is_image_file(e.path());
        });
        bool any = false;
        for (const auto& file : files) {
            try {
                Instance inst;
                inst.id = std::string(to_string(modality)) + "/" + label + "/" + file.stem().string();
                inst.modality = modality;
                inst.label = label;
                inst.features = extract(read_image(file), cfg);
                result.instances.push_back(std::move(inst));
                any = true;
            } catch (const Error& e) {
                result.warnings.push_back({file, e.what()});
            }
        }
        if (any) result.classes.push_back(label);
    }
    if (result.instances.empty())
        throw Error(Errc::empty_store, "no readable images under '" + dir.string() + "'");
    return result;
}

FeatureStore make_featurized_store(std::vector<FeaturizeResult> parts, const FeaturizerConfig& cfg) {
    std::set<std::string> class_set;
    std::vector<Instance> all;
    for (auto& part : parts) {
        class_set.insert(part.classes.begin(), part.classes.end());
        for (auto& inst : part.instances) all.push_back(std::move(inst));
    }
    return FeatureStore(std::move(all), std::vector<std::string>(class_set.begin(), class_set.end()),
                        cfg.output_dim(), cfg.hash());
}

}  // namespace zsxm
