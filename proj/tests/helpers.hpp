#pragma once

// Shared fixtures and independent oracles for the unit tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "csl/cluster.hpp"
#include "csl/rng.hpp"

namespace testing {

using csl::DataShard;
using csl::Matrix;
using csl::Vector;

inline Vector random_vector(csl::Rng& rng, Eigen::Index d, double scale = 1.0) {
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = scale * rng.normal();
    return v;
}

inline Matrix random_matrix(csl::Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    return m;
}

inline Matrix random_spd(csl::Rng& rng, Eigen::Index d) {
    const Matrix a = random_matrix(rng, d, d);
    return a * a.transpose() + 0.5 * Matrix::Identity(d, d);
}

/// Logistic data with y drawn from the model at theta.
inline DataShard logistic_shard(csl::Rng& rng, Eigen::Index n, const Vector& theta) {
    Matrix x = random_matrix(rng, n, theta.size());
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double p = 1.0 / (1.0 + std::exp(-x.row(i).dot(theta)));
        y[i] = rng.uniform() < p ? 1.0 : 0.0;
    }
    return {std::move(x), std::move(y)};
}

inline DataShard linear_shard(csl::Rng& rng, Eigen::Index n, const Vector& theta, double sigma = 1.0) {
    Matrix x = random_matrix(rng, n, theta.size());
    Vector y = x * theta;
    for (Eigen::Index i = 0; i < n; ++i) y[i] += sigma * rng.normal();
    return {std::move(x), std::move(y)};
}

inline DataShard poisson_shard(csl::Rng& rng, Eigen::Index n, const Vector& theta) {
    Matrix x = 0.3 * random_matrix(rng, n, theta.size());
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        // Knuth's product-of-uniforms sampler.
        const double limit = std::exp(-std::exp(x.row(i).dot(theta)));
        double prod = rng.uniform_open();
        int count = 0;
        while (prod > limit) {
            prod *= rng.uniform_open();
            ++count;
        }
        y[i] = count;
    }
    return {std::move(x), std::move(y)};
}

inline std::vector<DataShard> split(const DataShard& data, std::size_t k) {
    const Eigen::Index n = data.n() / static_cast<Eigen::Index>(k);
    std::vector<DataShard> out;
    for (std::size_t j = 0; j < k; ++j) out.push_back(data.rows(static_cast<Eigen::Index>(j) * n, n));
    return out;
}

/// Central differences of a scalar function.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-6) {
    Vector g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vector a = x, b = x;
        a[i] += h;
        b[i] -= h;
        g[i] = (f(a) - f(b)) / (2 * h);
    }
    return g;
}

/// Central differences of a vector function; column i is d/dx_i.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double h = 1e-6) {
    Matrix j(f(x).size(), x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vector a = x, b = x;
        a[i] += h;
        b[i] -= h;
        j.col(i) = (f(a) - f(b)) / (2 * h);
    }
    return j;
}

/// ||a - b|| / max(||b||, floor), sup norms.
inline double rel_err(const Matrix& a, const Matrix& b, double floor = 1e-3) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), floor);
}

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Plain per-sample summation of the logistic loss, written without the
/// library's stable helpers.
inline double logistic_loss_oracle(const Vector& theta, const DataShard& s) {
    long double total = 0;
    for (Eigen::Index i = 0; i < s.n(); ++i) {
        const long double u = s.x().row(i).dot(theta);
        total += -s.y()[i] * u + std::log1p(std::exp(u));
    }
    return static_cast<double>(total / s.n());
}

/// Gradient descent with a fixed step; slow but independent of Newton.
inline Vector gradient_descent(const std::function<Vector(const Vector&)>& grad, Vector x, double step, long iters) {
    for (long t = 0; t < iters; ++t) x -= step * grad(x);
    return x;
}

/// Linear-loss lasso objective mean (y - x theta)^2 + lambda ||theta||_1.
inline double lasso_objective(const DataShard& s, const Vector& theta, double lambda) {
    return (s.y() - s.x() * theta).squaredNorm() / static_cast<double>(s.n()) + lambda * theta.lpNorm<1>();
}

// Exact lasso minimizer for tiny d: try every sign pattern, solve the
// restricted stationarity equations and keep the best consistent one.
inline Vector enumerate_lasso(const DataShard& s, double lambda) {
    const Eigen::Index d = s.d();
    const double n = static_cast<double>(s.n());
    Vector best = Vector::Zero(d);
    double best_obj = lasso_objective(s, best, lambda);
    long patterns = 1;
    for (Eigen::Index i = 0; i < d; ++i) patterns *= 3;
    for (long code = 0; code < patterns; ++code) {
        std::vector<Eigen::Index> idx;
        std::vector<double> sign;
        long c = code;
        for (Eigen::Index i = 0; i < d; ++i, c /= 3) {
            if (c % 3 == 0) continue;
            idx.push_back(i);
            sign.push_back(c % 3 == 1 ? 1.0 : -1.0);
        }
        if (idx.empty()) continue;
        const auto m = static_cast<Eigen::Index>(idx.size());
        Matrix xs(s.n(), m);
        Vector sg(m);
        for (Eigen::Index j = 0; j < m; ++j) {
            xs.col(j) = s.x().col(idx[j]);
            sg[j] = sign[j];
        }
        const Vector sol = (xs.transpose() * xs).ldlt().solve(xs.transpose() * s.y() - 0.5 * n * lambda * sg);
        bool consistent = true;
        for (Eigen::Index j = 0; j < m; ++j) consistent = consistent && sol[j] * sg[j] > 0;
        if (!consistent) continue;
        Vector theta = Vector::Zero(d);
        for (Eigen::Index j = 0; j < m; ++j) theta[idx[j]] = sol[j];
        const double obj = lasso_objective(s, theta, lambda);
        if (obj < best_obj) {
            best_obj = obj;
            best = theta;
        }
    }
    return best;
}

}  // namespace testing
