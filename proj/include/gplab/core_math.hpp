#pragma once

#include "gplab/matrix.hpp"

namespace gplab {

// Numerically stable softmax (max subtraction). Output entries are floored
// at 1e-300 so downstream logs stay finite. Requires length >= 2 and finite
// input.
Vec softmax(const Vec& logits);

// -log softmax(logits)[label]
double cross_entropy_loss(const Vec& logits, int label);

// Gradient of the cross-entropy loss w.r.t. the logits: softmax(u) - e_y.
Vec ce_logit_grad(const Vec& logits, int label);

// Hessian of the cross-entropy loss w.r.t. the logits: diag(p) - p p^T.
// Symmetric PSD, rows sum to zero.
Matrix ce_logit_hessian(const Vec& logits);

// Projection onto the l2 ball of radius r. Vectors already inside are
// returned unchanged; the scaled result is re-normalized until its floating
// point norm is <= r, which makes the projection bit-for-bit idempotent.
Vec l2_project(const Vec& v, double r);

}  // namespace gplab
