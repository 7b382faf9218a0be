#pragma once

#include <filesystem>
#include <utility>

#include "gplab/matrix.hpp"
#include "gplab/rng.hpp"

namespace gplab {

// Multilayer perceptron with ReLU hidden activations and an identity output
// layer. weights[l] has shape layer_dims[l+1] x layer_dims[l].
//
// Parameter flattening order, shared by ParamGrad, Momentum and the
// checkpoint format (reimplementations must follow it to be bit-comparable):
// for each layer l in ascending order, weights[l] row-major, then biases[l].
struct Mlp {
    std::vector<std::size_t> layer_dims;  // [d, m_1, ..., m_L, C]
    std::vector<Matrix> weights;
    std::vector<Vec> biases;

    std::size_t num_layers() const { return weights.size(); }
    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }
    std::size_t param_count() const;

    Vec flat_params() const;
    void set_flat_params(const Vec& flat);
};

// Per-sample intermediates kept by forward() so a backward pass can be
// seeded with an arbitrary logit gradient. pre[l] and post[l] are the pre-
// and post-activation of layer l; pre of the last layer is the logit vector.
struct ForwardCache {
    Vec input;
    std::vector<Vec> pre;
    std::vector<Vec> post;
};

// Flat gradient over all parameters, in the flattening order above.
using ParamGrad = Vec;

struct Momentum {
    Vec velocity;  // same flattening order as ParamGrad
    explicit Momentum(std::size_t n) : velocity(n, 0.0) {}
};

// Weights ~ U(-s, s) with s = sqrt(6 / fan_in), drawn layer by layer in
// row-major order from rng; biases zero. Deterministic given the rng seed.
Mlp init_mlp(const std::vector<std::size_t>& layer_dims, Rng& rng);

// Logits and the cache needed for a subsequent backward pass.
std::pair<Vec, ForwardCache> forward(const Mlp& net, const Vec& x);

// Evaluation path without a cache.
Vec forward_logits(const Mlp& net, const Vec& x);

// Reverse pass seeded by an arbitrary logit gradient; returns J * h_seed.
// With h_seed = ce_logit_grad(u, y) this is the exact parameter gradient of
// the cross-entropy loss. The ReLU subgradient at exactly 0 is taken as 0.
ParamGrad backward_from_logit_grad(const Mlp& net, const ForwardCache& cache,
                                   const Vec& h_seed);

// |W| x C matrix whose column j is backward_from_logit_grad with seed e_j;
// consequently matvec(J, h) == backward_from_logit_grad(net, cache, h).
Matrix assemble_jacobian(const Mlp& net, const ForwardCache& cache);

// Canonical SGD-momentum update with coupled L2 weight decay. Elementwise,
// in this exact order so reimplementations are bit-comparable:
//   v[k] = momentum * v[k] + (grad[k] + weight_decay * w[k]);
//   w[k] -= lr * v[k];
void sgd_step(Mlp& net, const ParamGrad& grad, Momentum& state, double lr,
              double momentum, double weight_decay);

// Checkpoint format (little-endian binary): u64 format version, u64 number
// of layer dims, the dims as u64, then the flat parameter vector as f64.
inline constexpr std::uint64_t kCheckpointVersion = 1;

void save_checkpoint(const Mlp& net, const std::filesystem::path& path);
Mlp load_checkpoint(const std::filesystem::path& path);

}  // namespace gplab
