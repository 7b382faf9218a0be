#pragma once

#include <cmath>
#include <string>

#include "gplab/core_math.hpp"
#include "gplab/mlp.hpp"
#include "gplab/rng.hpp"

namespace testutil {

using namespace gplab;

struct Instance {
    Mlp net;
    Vec x;
    int label = 0;
};

// Random net + input with every hidden pre-activation at least `margin`
// away from the ReLU kink, so finite differences stay on one linear piece.
inline Instance random_instance(Rng& rng, const std::vector<std::size_t>& dims,
                                double margin = 1e-3) {
    Instance inst;
    Rng init = rng.substream("net-" + std::to_string(rng.next_u64()));
    inst.net = init_mlp(dims, init);
    for (int attempt = 0; attempt < 500; ++attempt) {
        Vec x(dims.front());
        for (double& v : x) v = rng.normal();
        const auto [u, cache] = forward(inst.net, x);
        bool ok = true;
        for (std::size_t l = 0; ok && l + 1 < inst.net.num_layers(); ++l) {
            for (const double z : cache.pre[l]) {
                if (std::fabs(z) < margin) {
                    ok = false;
                    break;
                }
            }
        }
        if (ok) {
            inst.x = x;
            inst.label = static_cast<int>(rng.uniform_int(dims.back()));
            return inst;
        }
    }
    throw std::runtime_error("random_instance: no kink-free sample found");
}

inline double max_abs_diff(const Vec& a, const Vec& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

inline double cosine(const Vec& a, const Vec& b) {
    return dot(a, b) / (norm(a) * norm(b));
}

}  // namespace testutil
