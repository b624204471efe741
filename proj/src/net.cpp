#include "zsxm/net.hpp"

#include <cmath>

namespace zsxm {

std::vector<std::size_t> EncoderParams::hidden_dims() const {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) out.push_back(layers[l].out_dim());
    return out;
}

EncoderParams EncoderParams::zeros_like() const {
    EncoderParams z = *this;
    for (auto& l : z.layers) {
        l.weight.setZero();
        l.bias.setZero();
    }
    for (auto& n : z.norms) {
        n.gamma.setZero();
        n.beta.setZero();
        n.running_mean.setZero();
        n.running_var.setZero();
    }
    return z;
}

AffineLayer init_affine(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
    AffineLayer l{Matrix(static_cast<Eigen::Index>(out_dim), static_cast<Eigen::Index>(in_dim)),
                  Vector::Zero(static_cast<Eigen::Index>(out_dim))};
    const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = rng.uniform(-limit, limit);
    return l;
}

EncoderParams init_encoder(std::size_t d_in, std::size_t d_out, std::uint64_t seed,
                           const std::vector<std::size_t>& hidden) {
    if (d_in == 0 || d_out == 0) throw Error(Errc::invalid_argument, "encoder dimensions must be positive");
    Rng rng(seed);
    EncoderParams p;
    std::size_t prev = d_in;
    for (std::size_t h : hidden) {
        p.layers.push_back(init_affine(prev, h, rng));
        const auto n = static_cast<Eigen::Index>(h);
        p.norms.push_back({Vector::Ones(n), Vector::Zero(n), Vector::Zero(n), Vector::Ones(n)});
        prev = h;
    }
    p.layers.push_back(init_affine(prev, d_out, rng));
    return p;
}

namespace {

void check_input(const EncoderParams& params, const Matrix& batch) {
    if (params.layers.empty()) throw Error(Errc::invalid_argument, "encoder has no layers");
    if (static_cast<std::size_t>(batch.cols()) != params.in_dim())
        throw Error(Errc::dimension_mismatch, "encoder expects " + std::to_string(params.in_dim()) +
                                                  " input features, got " + std::to_string(batch.cols()));
}

}  // namespace

Matrix forward_train(EncoderParams& params, const Matrix& batch, ForwardCache& cache) {
    check_input(params, batch);
    const Eigen::Index n = batch.rows();
    if (n < 2) throw Error(Errc::invalid_argument, "training forward needs a batch of at least 2 rows");
    const std::size_t hidden = params.norms.size();
    cache.inputs.assign(params.layers.size(), Matrix());
    cache.xhat.assign(hidden, Matrix());
    cache.bn_out.assign(hidden, Matrix());
    cache.inv_std.assign(hidden, Vector());
    cache.batch = n;

    const double nd = static_cast<double>(n);
    const double slope = params.leaky_slope;
    Matrix x = batch;
    for (std::size_t l = 0; l < hidden; ++l) {
        const auto& lin = params.layers[l];
        auto& bn = params.norms[l];
        cache.inputs[l] = std::move(x);
        Matrix z = (cache.inputs[l] * lin.weight.transpose()).rowwise() + lin.bias.transpose();

        const Eigen::RowVectorXd mean = z.colwise().mean();
        z.rowwise() -= mean;
        const Eigen::RowVectorXd var = z.array().square().colwise().sum() / nd;
        const Vector inv_std = (var.array() + params.bn_eps).rsqrt().transpose();
        z.array().rowwise() *= inv_std.transpose().array();
        cache.xhat[l] = z;
        Matrix y = (z.array().rowwise() * bn.gamma.transpose().array()).rowwise() + bn.beta.transpose().array();

        const double m = params.bn_momentum;
        bn.running_mean = (1.0 - m) * bn.running_mean + m * mean.transpose();
        bn.running_var = (1.0 - m) * bn.running_var + m * (var.transpose() * (nd / (nd - 1.0)));

        cache.inv_std[l] = inv_std;
        x = y.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
        cache.bn_out[l] = std::move(y);
    }
    const auto& last = params.layers.back();
    cache.inputs.back() = std::move(x);
    return (cache.inputs.back() * last.weight.transpose()).rowwise() + last.bias.transpose();
}

Matrix forward_eval(const EncoderParams& params, const Matrix& batch) {
    check_input(params, batch);
    const std::size_t hidden = params.norms.size();
    std::vector<Vector> scale(hidden);
    for (std::size_t l = 0; l < hidden; ++l)
        scale[l] =
            (params.norms[l].gamma.array() * (params.norms[l].running_var.array() + params.bn_eps).rsqrt()).matrix();

    Matrix out(batch.rows(), static_cast<Eigen::Index>(params.out_dim()));
    for (Eigen::Index r = 0; r < batch.rows(); ++r) {
        Vector v = batch.row(r).transpose();
        for (std::size_t l = 0; l < hidden; ++l) {
            const auto& bn = params.norms[l];
            Vector z = params.layers[l].weight * v + params.layers[l].bias;
            z = (z - bn.running_mean).cwiseProduct(scale[l]) + bn.beta;
            v = z.unaryExpr([&](double e) { return e > 0.0 ? e : params.leaky_slope * e; });
        }
        out.row(r) = (params.layers.back().weight * v + params.layers.back().bias).transpose();
    }
    return out;
}

EncoderBackward backward(const EncoderParams& params, const ForwardCache& cache, const Matrix& grad_out) {
    const std::size_t hidden = params.norms.size();
    if (cache.inputs.size() != params.layers.size() || cache.batch != grad_out.rows() ||
        static_cast<std::size_t>(grad_out.cols()) != params.out_dim())
        throw Error(Errc::dimension_mismatch, "gradient shape does not match the cached forward pass");

    EncoderBackward result{params.zeros_like(), Matrix()};
    auto& g = result.grads;
    const double nd = static_cast<double>(cache.batch);

    const auto& last = params.layers.back();
    g.layers.back().weight.noalias() = grad_out.transpose() * cache.inputs.back();
    g.layers.back().bias = grad_out.colwise().sum().transpose();
    Matrix dx = grad_out * last.weight;

    for (std::size_t l = hidden; l-- > 0;) {
        const auto& bn = params.norms[l];
        const Matrix& xhat = cache.xhat[l];
        const Matrix& y = cache.bn_out[l];
        for (Eigen::Index i = 0; i < dx.size(); ++i)
            if (y.data()[i] <= 0.0) dx.data()[i] *= params.leaky_slope;

        g.norms[l].gamma = (dx.array() * xhat.array()).colwise().sum().transpose();
        g.norms[l].beta = dx.colwise().sum().transpose();

        // dz = inv_std/N * (N*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat)), column-wise.
        Matrix dxhat = dx.array().rowwise() * bn.gamma.transpose().array();
        const Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
        const Eigen::RowVectorXd sum_dx = (dxhat.array() * xhat.array()).colwise().sum();
        Matrix dz = (nd * dxhat.array()).rowwise() - sum_d.array();
        dz.array() -= xhat.array().rowwise() * sum_dx.array();
        dz.array().rowwise() *= (cache.inv_std[l].transpose().array() / nd);

        g.layers[l].weight.noalias() = dz.transpose() * cache.inputs[l];
        g.layers[l].bias = dz.colwise().sum().transpose();
        dx = dz * params.layers[l].weight;
    }
    result.grad_in = std::move(dx);
    return result;
}

Matrix affine_forward(const AffineLayer& layer, const Matrix& input) {
    if (static_cast<std::size_t>(input.cols()) != layer.in_dim())
        throw Error(Errc::dimension_mismatch, "affine layer expects " + std::to_string(layer.in_dim()) +
                                                  " inputs, got " + std::to_string(input.cols()));
    return (input * layer.weight.transpose()).rowwise() + layer.bias.transpose();
}

AffineBackward affine_backward(const AffineLayer& layer, const Matrix& input, const Matrix& grad_out) {
    if (grad_out.rows() != input.rows() || static_cast<std::size_t>(grad_out.cols()) != layer.out_dim())
        throw Error(Errc::dimension_mismatch, "affine gradient shape mismatch");
    AffineBackward r;
    r.grads.weight = grad_out.transpose() * input;
    r.grads.bias = grad_out.colwise().sum().transpose();
    r.grad_in = grad_out * layer.weight;
    return r;
}

std::vector<ParamBlock> param_blocks(AffineLayer& layer, const std::string& prefix) {
    return {{prefix + ".weight", layer.weight.data(), layer.weight.rows(), layer.weight.cols()},
            {prefix + ".bias", layer.bias.data(), layer.bias.size(), 1}};
}

std::vector<ParamBlock> param_blocks(EncoderParams& params, const std::string& prefix, bool with_buffers) {
    std::vector<ParamBlock> out;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const std::string p = prefix + ".l" + std::to_string(l);
        for (auto& b : param_blocks(params.layers[l], p)) out.push_back(b);
        if (l < params.norms.size()) {
            auto& bn = params.norms[l];
            out.push_back({p + ".gamma", bn.gamma.data(), bn.gamma.size(), 1});
            out.push_back({p + ".beta", bn.beta.data(), bn.beta.size(), 1});
        }
    }
    if (with_buffers) {
        for (std::size_t l = 0; l < params.norms.size(); ++l) {
            const std::string p = prefix + ".l" + std::to_string(l);
            auto& bn = params.norms[l];
            out.push_back({p + ".running_mean", bn.running_mean.data(), bn.running_mean.size(), 1});
            out.push_back({p + ".running_var", bn.running_var.data(), bn.running_var.size(), 1});
        }
    }
    return out;
}

}  // namespace zsxm
