#include "gplab/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gplab {

namespace {
constexpr double kProbFloor = 1e-300;

void require_valid_logits(const Vec& logits) {
    if (logits.size() < 2) throw std::invalid_argument("softmax: need at least 2 logits");
    if (!all_finite(logits)) throw std::invalid_argument("softmax: non-finite input");
}

void require_label(const Vec& logits, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
        throw std::out_of_range("label out of range");
    }
}
}  // namespace

Vec softmax(const Vec& logits) {
    require_valid_logits(logits);
    const double m = *std::max_element(logits.begin(), logits.end());
    Vec p(logits.size());
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        s += p[i];
    }
    for (double& x : p) x = std::max(x / s, kProbFloor);
    return p;
}

double cross_entropy_loss(const Vec& logits, int label) {
    require_label(logits, label);
    const Vec p = softmax(logits);
    return -std::log(p[static_cast<std::size_t>(label)]);
}

Vec ce_logit_grad(const Vec& logits, int label) {
    require_label(logits, label);
    Vec g = softmax(logits);
    g[static_cast<std::size_t>(label)] -= 1.0;
    return g;
}

Matrix ce_logit_hessian(const Vec& logits) {
    const Vec p = softmax(logits);
    const std::size_t c = p.size();
    Matrix h(c, c);
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            h(i, j) = (i == j ? p[i] : 0.0) - p[i] * p[j];
        }
    }
    return h;
}

Vec l2_project(const Vec& v, double r) {
    if (r < 0.0) throw std::invalid_argument("l2_project: negative radius");
    double n = norm(v);
    if (n <= r) return v;
    Vec w = scaled(v, r / n);
    // rescale until the fp norm is inside the ball, so a second projection
    // returns the vector unchanged
    for (double wn = norm(w); wn > r; wn = norm(w)) {
        for (double& x : w) x *= r / wn;
    }
    return w;
}

}  // namespace gplab
