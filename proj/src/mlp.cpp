#include "gplab/mlp.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "gplab/errors.hpp"

namespace gplab {

std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        n += weights[l].rows * weights[l].cols + biases[l].size();
    }
    return n;
}

Vec Mlp::flat_params() const {
    Vec flat;
    flat.reserve(param_count());
    for (std::size_t l = 0; l < weights.size(); ++l) {
        flat.insert(flat.end(), weights[l].data.begin(), weights[l].data.end());
        flat.insert(flat.end(), biases[l].begin(), biases[l].end());
    }
    return flat;
}

void Mlp::set_flat_params(const Vec& flat) {
    if (flat.size() != param_count()) {
        throw std::invalid_argument("set_flat_params: length mismatch");
    }
    std::size_t off = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        std::copy(flat.begin() + off, flat.begin() + off + weights[l].data.size(),
                  weights[l].data.begin());
        off += weights[l].data.size();
        std::copy(flat.begin() + off, flat.begin() + off + biases[l].size(),
                  biases[l].begin());
        off += biases[l].size();
    }
}

Mlp init_mlp(const std::vector<std::size_t>& layer_dims, Rng& rng) {
    if (layer_dims.size() < 2) {
        throw std::invalid_argument("init_mlp: need at least input and output dims");
    }
    for (std::size_t d : layer_dims) {
        if (d == 0) throw std::invalid_argument("init_mlp: nonpositive layer dim");
    }
    Mlp net;
    net.layer_dims = layer_dims;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const std::size_t fan_in = layer_dims[l];
        const std::size_t fan_out = layer_dims[l + 1];
        Matrix w(fan_out, fan_in);
        const double s = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (double& x : w.data) x = rng.uniform(-s, s);
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(fan_out, 0.0);
    }
    return net;
}

std::pair<Vec, ForwardCache> forward(const Mlp& net, const Vec& x) {
    if (x.size() != net.input_dim()) {
        throw std::invalid_argument("forward: input dim mismatch");
    }
    ForwardCache cache;
    cache.input = x;
    cache.pre.reserve(net.num_layers());
    cache.post.reserve(net.num_layers());
    const Vec* a = &x;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        Vec z(net.weights[l].rows);
        for (std::size_t j = 0; j < net.weights[l].rows; ++j) {
            double s = net.biases[l][j];
            const double* row = net.weights[l].data.data() + j * net.weights[l].cols;
            for (std::size_t k = 0; k < net.weights[l].cols; ++k) s += row[k] * (*a)[k];
            z[j] = s;
        }
        cache.pre.push_back(z);
        if (l + 1 < net.num_layers()) {
            for (double& v : z) v = v > 0.0 ? v : 0.0;
        }
        cache.post.push_back(std::move(z));
        a = &cache.post.back();
    }
    return {cache.post.back(), cache};
}

Vec forward_logits(const Mlp& net, const Vec& x) {
    if (x.size() != net.input_dim()) {
        throw std::invalid_argument("forward: input dim mismatch");
    }
    Vec a = x;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        Vec z(net.weights[l].rows);
        for (std::size_t j = 0; j < net.weights[l].rows; ++j) {
            double s = net.biases[l][j];
            const double* row = net.weights[l].data.data() + j * net.weights[l].cols;
            for (std::size_t k = 0; k < net.weights[l].cols; ++k) s += row[k] * a[k];
            z[j] = s;
        }
        if (l + 1 < net.num_layers()) {
            for (double& v : z) v = v > 0.0 ? v : 0.0;
        }
        a = std::move(z);
    }
    return a;
}

namespace {
void require_cache_matches(const Mlp& net, const ForwardCache& cache) {
    if (cache.pre.size() != net.num_layers() || cache.post.size() != net.num_layers() ||
        cache.input.size() != net.input_dim()) {
        throw StateError("backward: cache does not match network shape");
    }
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        if (cache.pre[l].size() != net.weights[l].rows) {
            throw StateError("backward: cache does not match network shape");
        }
    }
}
}  // namespace

ParamGrad backward_from_logit_grad(const Mlp& net, const ForwardCache& cache,
                                   const Vec& h_seed) {
    require_cache_matches(net, cache);
    if (h_seed.size() != net.output_dim()) {
        throw std::invalid_argument("backward: seed length mismatch");
    }

    ParamGrad grad(net.param_count(), 0.0);
    // offset of layer l's weight block in the flat vector
    std::vector<std::size_t> offsets(net.num_layers());
    std::size_t off = 0;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        offsets[l] = off;
        off += net.weights[l].data.size() + net.biases[l].size();
    }

    Vec delta = h_seed;
    for (std::size_t li = net.num_layers(); li-- > 0;) {
        const Matrix& w = net.weights[li];
        const Vec& a_prev = li == 0 ? cache.input : cache.post[li - 1];
        double* gw = grad.data() + offsets[li];
        double* gb = gw + w.data.size();
        for (std::size_t j = 0; j < w.rows; ++j) {
            const double dj = delta[j];
            double* grow = gw + j * w.cols;
            for (std::size_t k = 0; k < w.cols; ++k) grow[k] = dj * a_prev[k];
            gb[j] = dj;
        }
        if (li > 0) {
            Vec prev(w.cols, 0.0);
            for (std::size_t j = 0; j < w.rows; ++j) {
                const double dj = delta[j];
                const double* row = w.data.data() + j * w.cols;
                for (std::size_t k = 0; k < w.cols; ++k) prev[k] += row[k] * dj;
            }
            const Vec& z = cache.pre[li - 1];
            for (std::size_t k = 0; k < w.cols; ++k) {
                if (!(z[k] > 0.0)) prev[k] = 0.0;  // ReLU'(0) = 0
            }
            delta = std::move(prev);
        }
    }
    return grad;
}

Matrix assemble_jacobian(const Mlp& net, const ForwardCache& cache) {
    const std::size_t c = net.output_dim();
    const std::size_t n = net.param_count();
    Matrix jac(n, c);
    Vec seed(c, 0.0);
    for (std::size_t j = 0; j < c; ++j) {
        seed[j] = 1.0;
        const ParamGrad col = backward_from_logit_grad(net, cache, seed);
        seed[j] = 0.0;
        for (std::size_t i = 0; i < n; ++i) jac(i, j) = col[i];
    }
    return jac;
}

void sgd_step(Mlp& net, const ParamGrad& grad, Momentum& state, double lr,
              double momentum, double weight_decay) {
    if (lr <= 0.0) throw std::invalid_argument("sgd_step: lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) {
        throw std::invalid_argument("sgd_step: momentum must be in [0, 1)");
    }
    if (weight_decay < 0.0) throw std::invalid_argument("sgd_step: negative weight decay");
    if (grad.size() != net.param_count() || state.velocity.size() != grad.size()) {
        throw std::invalid_argument("sgd_step: size mismatch");
    }
    if (!all_finite(grad)) throw NumericError("sgd_step: non-finite gradient");

    Vec w = net.flat_params();
    Vec& v = state.velocity;
    for (std::size_t k = 0; k < w.size(); ++k) {
        v[k] = momentum * v[k] + (grad[k] + weight_decay * w[k]);
        w[k] -= lr * v[k];
    }
    net.set_flat_params(w);
}

void save_checkpoint(const Mlp& net, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("checkpoint: cannot open " + path.string() + " for writing");
    auto put_u64 = [&](std::uint64_t v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    };
    put_u64(kCheckpointVersion);
    put_u64(net.layer_dims.size());
    for (std::size_t d : net.layer_dims) put_u64(d);
    const Vec flat = net.flat_params();
    out.write(reinterpret_cast<const char*>(flat.data()),
              static_cast<std::streamsize>(flat.size() * sizeof(double)));
    if (!out) throw ParseError("checkpoint: write failed for " + path.string());
}

Mlp load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("checkpoint: cannot open " + path.string());
    auto get_u64 = [&]() {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in) throw ParseError("checkpoint: truncated header in " + path.string());
        return v;
    };
    const std::uint64_t version = get_u64();
    if (version != kCheckpointVersion) {
        throw ParseError("checkpoint: unsupported format version " + std::to_string(version));
    }
    const std::uint64_t ndims = get_u64();
    if (ndims < 2 || ndims > 64) throw ParseError("checkpoint: bad dim count");
    std::vector<std::size_t> dims(ndims);
    for (auto& d : dims) {
        d = static_cast<std::size_t>(get_u64());
        if (d == 0) throw ParseError("checkpoint: zero layer dim");
    }
    Rng dummy(0);
    Mlp net = init_mlp(dims, dummy);
    Vec flat(net.param_count());
    in.read(reinterpret_cast<char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
    if (!in || in.gcount() != static_cast<std::streamsize>(flat.size() * sizeof(double))) {
        throw ParseError("checkpoint: truncated parameter block in " + path.string());
    }
    in.peek();
    if (!in.eof()) throw ParseError("checkpoint: trailing bytes in " + path.string());
    net.set_flat_params(flat);
    return net;
}

}  // namespace gplab
