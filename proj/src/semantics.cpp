#include "zsxm/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "text_util.hpp"

namespace zsxm {

namespace {

constexpr double kLeakySlope = 0.01;

std::string underscored(std::string s) {
    std::replace(s.begin(), s.end(), ' ', '_');
    return s;
}

}  // namespace

SemanticTable::SemanticTable(std::size_t dim, std::map<std::string, std::vector<double>> vectors)
    : dim_(dim), vectors_(std::move(vectors)) {
    for (const auto& [name, v] : vectors_) {
        if (v.size() != dim_)
            throw Error(Errc::dimension_mismatch, "semantic vector for '" + name + "' has dimension " +
                                                      std::to_string(v.size()) + ", expected " + std::to_string(dim_));
        for (double x : v)
            if (!std::isfinite(x)) throw Error(Errc::non_finite, "semantic vector for '" + name + "' is not finite");
    }
}

const std::vector<double>& SemanticTable::at(const std::string& name) const {
    const auto it = vectors_.find(name);
    if (it == vectors_.end()) throw Error(Errc::missing_class, "no semantic vector for class '" + name + "'");
    return it->second;
}

Matrix SemanticTable::rows(const std::vector<std::string>& names) const {
    Matrix out(static_cast<Eigen::Index>(names.size()), static_cast<Eigen::Index>(dim_));
    for (std::size_t r = 0; r < names.size(); ++r) {
        const auto& v = at(names[r]);
        for (std::size_t c = 0; c < dim_; ++c) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[c];
    }
    return out;
}

SemanticTable load_word_vectors(const std::filesystem::path& path, const std::vector<std::string>& class_names,
                                std::size_t expected_dim, bool normalize) {
    const std::string text = detail::read_file(path);
    std::map<std::string, std::string> wanted;  // file token -> class name
    for (const auto& name : class_names) wanted.emplace(underscored(name), name);

    std::size_t dim = expected_dim;
    std::map<std::string, std::vector<double>> found;
    std::set<std::string> seen_tokens;
    std::size_t line_no = 0;
    for (auto line : detail::lines(text)) {
        ++line_no;
        const auto tokens = detail::split_ws(line);
        if (tokens.empty()) continue;
        const std::string token(tokens.front());
        if (!seen_tokens.insert(token).second)
            throw Error(Errc::duplicate_class, "class '" + token + "' appears twice in '" + path.string() + "'");
        const std::size_t n = tokens.size() - 1;
        if (dim == 0) dim = n;
        if (n != dim)
            throw Error(Errc::dimension_mismatch, "line " + std::to_string(line_no) + " of '" + path.string() +
                                                      "' has " + std::to_string(n) + " values, expected " +
                                                      std::to_string(dim));
        const auto it = wanted.find(token);
        if (it == wanted.end()) continue;
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto x = detail::parse_double(tokens[i + 1]);
            if (!x) throw Error(Errc::parse_error, "bad value on line " + std::to_string(line_no) + " of '" +
                                                       path.string() + "'");
            v[i] = *x;
        }
        if (normalize) {
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > 0.0)
                for (auto& x : v) x /= norm;
        }
        found.emplace(it->second, std::move(v));
    }
    for (const auto& name : class_names)
        if (!found.contains(name))
            throw Error(Errc::missing_class, "word-vector file '" + path.string() + "' has no entry for '" + name + "'");
    return SemanticTable(dim, std::move(found));
}

void save_word_vectors(const std::filesystem::path& path, const SemanticTable& table) {
    std::string out;
    for (const auto& [name, v] : table.vectors()) {
        out += underscored(name);
        for (double x : v) {
            out += ' ';
            detail::append_double(out, x);
        }
        out += '\n';
    }
    detail::write_file(path, out);
}

SemanticProjection::SemanticProjection(std::vector<AffineLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty() || layers_.size() > 2)
        throw Error(Errc::invalid_argument, "semantic projection has one or two layers");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (static_cast<std::size_t>(layers_[i].bias.size()) != layers_[i].out_dim())
            throw Error(Errc::dimension_mismatch, "projection bias size mismatch");
        if (i > 0 && layers_[i].in_dim() != layers_[i - 1].out_dim())
            throw Error(Errc::dimension_mismatch, "projection layers do not chain");
        if (!layers_[i].weight.allFinite() || !layers_[i].bias.allFinite())
            throw Error(Errc::non_finite, "projection parameters must be finite");
    }
}

SemanticProjection SemanticProjection::init(std::size_t in_dim, std::size_t out_dim, std::size_t hidden_dim,
                                            std::uint64_t seed) {
    Rng rng(seed);
    auto make = [&](std::size_t in, std::size_t out) {
        AffineLayer l{Matrix(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
                      Vector::Zero(static_cast<Eigen::Index>(out))};
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = rng.uniform(-limit, limit);
        return l;
    };
    std::vector<AffineLayer> layers;
    if (hidden_dim == 0) {
        layers.push_back(make(in_dim, out_dim));
    } else {
        layers.push_back(make(in_dim, hidden_dim));
        layers.push_back(make(hidden_dim, out_dim));
    }
    return SemanticProjection(std::move(layers));
}

Matrix SemanticProjection::forward(const Matrix& input, Cache* cache) const {
    if (static_cast<std::size_t>(input.cols()) != in_dim())
        throw Error(Errc::dimension_mismatch, "projection input has dimension " + std::to_string(input.cols()) +
                                                  ", expected " + std::to_string(in_dim()));
    Matrix z = (input * layers_[0].weight.transpose()).rowwise() + layers_[0].bias.transpose();
    if (cache) cache->input = input;
    if (layers_.size() == 1) return z;
    if (cache) cache->hidden_pre = z;
    const Matrix h = z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
    return (h * layers_[1].weight.transpose()).rowwise() + layers_[1].bias.transpose();
}

std::vector<AffineLayer> SemanticProjection::backward(const Cache& cache, const Matrix& grad_out) const {
    std::vector<AffineLayer> grads(layers_.size());
    if (layers_.size() == 1) {
        grads[0].weight = grad_out.transpose() * cache.input;
        grads[0].bias = grad_out.colwise().sum().transpose();
        return grads;
    }
    const Matrix h = cache.hidden_pre.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
    grads[1].weight = grad_out.transpose() * h;
    grads[1].bias = grad_out.colwise().sum().transpose();
    Matrix dh = grad_out * layers_[1].weight;
    for (Eigen::Index i = 0; i < dh.size(); ++i)
        if (cache.hidden_pre.data()[i] <= 0.0) dh.data()[i] *= kLeakySlope;
    grads[0].weight = dh.transpose() * cache.input;
    grads[0].bias = dh.colwise().sum().transpose();
    return grads;
}

SemanticTable project(const SemanticTable& table, const SemanticProjection& proj) {
    if (proj.empty()) throw Error(Errc::invalid_argument, "empty semantic projection");
    if (table.dim() != proj.in_dim())
        throw Error(Errc::dimension_mismatch, "semantic table has dimension " + std::to_string(table.dim()) +
                                                  ", projection expects " + std::to_string(proj.in_dim()));
    std::map<std::string, std::vector<double>> out;
    for (const auto& [name, v] : table.vectors()) {
        Matrix row = Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
        const Matrix projected = proj.forward(row);
        out.emplace(name, std::vector<double>(projected.data(), projected.data() + projected.size()));
    }
    return SemanticTable(proj.out_dim(), std::move(out));
}

}  // namespace zsxm
