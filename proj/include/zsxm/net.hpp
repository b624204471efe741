#ifndef ZSXM_NET_HPP
#define ZSXM_NET_HPP

#include <string>
#include <vector>

#include "zsxm/core.hpp"
#include "zsxm/semantics.hpp"

namespace zsxm {

inline const std::vector<std::size_t> kDefaultHidden = {1024, 512, 256};

struct BatchNorm {
    Vector gamma;
    Vector beta;
    Vector running_mean;
    Vector running_var;
};

/**
 * Fully connected encoder: hidden layers are Linear -> BatchNorm -> LeakyReLU,
 * the output layer is Linear only.
 *
 * The same layout doubles as the gradient container: `backward` returns an
 * EncoderParams whose weights, biases, gammas and betas hold gradients (the
 * running statistics are left zero).
 */
struct EncoderParams {
    std::vector<AffineLayer> layers;
    std::vector<BatchNorm> norms;  ///< one per hidden layer
    double leaky_slope = 0.01;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    std::size_t in_dim() const { return layers.front().in_dim(); }
    std::size_t out_dim() const { return layers.back().out_dim(); }
    std::vector<std::size_t> hidden_dims() const;

    /// Same shapes, every entry zero.
    EncoderParams zeros_like() const;
};

using DecoderParams = AffineLayer;
using ClassifierHead = AffineLayer;

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero bias.
AffineLayer init_affine(std::size_t in_dim, std::size_t out_dim, Rng& rng);

/// Deterministic in `seed`; BN gamma=1, beta=0, running stats (0, 1).
EncoderParams init_encoder(std::size_t d_in, std::size_t d_out, std::uint64_t seed,
                           const std::vector<std::size_t>& hidden = kDefaultHidden);

struct ForwardCache {
    std::vector<Matrix> inputs;   ///< input to each linear layer
    std::vector<Matrix> xhat;     ///< normalized pre-activations, per hidden layer
    std::vector<Matrix> bn_out;   ///< gamma*xhat+beta, per hidden layer
    std::vector<Vector> inv_std;  ///< 1/sqrt(var+eps), per hidden layer
    Eigen::Index batch = 0;
};

/// Batch statistics; updates running stats. Requires at least two rows.
Matrix forward_train(EncoderParams& params, const Matrix& batch, ForwardCache& cache);

/// Running statistics; evaluated row by row so every row's output is independent of the batch.
Matrix forward_eval(const EncoderParams& params, const Matrix& batch);

struct EncoderBackward {
    EncoderParams grads;
    Matrix grad_in;
};

/// Exact gradients for the batch-statistics forward recorded in `cache`.
EncoderBackward backward(const EncoderParams& params, const ForwardCache& cache, const Matrix& grad_out);

Matrix affine_forward(const AffineLayer& layer, const Matrix& input);

struct AffineBackward {
    AffineLayer grads;
    Matrix grad_in;
};

AffineBackward affine_backward(const AffineLayer& layer, const Matrix& input, const Matrix& grad_out);

/// Cross-sample decoder: affine map inside the shared space.
inline Matrix decode(const DecoderParams& dec, const Matrix& embeddings) { return affine_forward(dec, embeddings); }

/// Named, contiguous parameter block.
struct ParamBlock {
    std::string name;
    double* data;
    Eigen::Index rows;
    Eigen::Index cols;

    Eigen::Index size() const { return rows * cols; }
};

/// Trainable blocks first, in layer order; BN running statistics appended when `with_buffers`.
std::vector<ParamBlock> param_blocks(EncoderParams& params, const std::string& prefix, bool with_buffers);
std::vector<ParamBlock> param_blocks(AffineLayer& layer, const std::string& prefix);

}  // namespace zsxm

#endif  // ZSXM_NET_HPP
