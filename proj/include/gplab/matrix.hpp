#pragma once

#include <cstddef>
#include <vector>

namespace gplab {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles; the single numeric carrier for weights,
// activations, gradients and Jacobians.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;  // rows * cols entries, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

double dot(const Vec& a, const Vec& b);
double norm(const Vec& v);
double norm_inf(const Vec& v);

// y += a * x
void axpy(double a, const Vec& x, Vec& y);
Vec scaled(const Vec& v, double a);
Vec add(const Vec& a, const Vec& b);
Vec sub(const Vec& a, const Vec& b);
bool all_finite(const Vec& v);

Vec matvec(const Matrix& m, const Vec& v);   // length m.rows
Vec tmatvec(const Matrix& m, const Vec& v);  // m^T v, length m.cols

}  // namespace gplab
