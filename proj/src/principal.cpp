#include <algorithm>
#include <cmath>

#include "glitch/error.hpp"
#include "glitch/indicators.hpp"
#include "glitch/parallel.hpp"

namespace glitch {

namespace {

constexpr std::size_t kBlockRows = 256;
constexpr std::size_t kKrylovDim = 32;

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

void scale(std::vector<double>& v, double c) {
    for (double& x : v) x *= c;
}

void axpy(std::vector<double>& y, double a, std::span<const double> x) {
    for (std::size_t k = 0; k < y.size(); ++k) y[k] += a * x[k];
}

// v -> sum_i ((x_i - mu) . v) (x_i - mu). Partial sums are formed over
// fixed row blocks and added in block order, so the result does not depend
// on the number of threads.
class CenteredGram {
public:
    CenteredGram(const Matrix& e, unsigned threads) : e_(e), mean_(column_means(e)), threads_(threads) {}

    std::vector<double> apply(std::span<const double> v) const {
        const std::size_t d = e_.cols();
        const std::size_t blocks = (e_.rows() + kBlockRows - 1) / kBlockRows;
        std::vector<std::vector<double>> partial(blocks, std::vector<double>(d, 0.0));
        parallel_for(blocks, threads_, [&](std::size_t b) {
            std::vector<double> centered(d);
            auto& acc = partial[b];
            const std::size_t end = std::min(e_.rows(), (b + 1) * kBlockRows);
            for (std::size_t i = b * kBlockRows; i < end; ++i) {
                const auto r = e_.row(i);
                for (std::size_t k = 0; k < d; ++k) centered[k] = r[k] - mean_[k];
                const double y = dot(centered, v);
                axpy(acc, y, centered);
            }
        });
        std::vector<double> out(d, 0.0);
        for (const auto& p : partial) axpy(out, 1.0, p);
        return out;
    }

private:
    const Matrix& e_;
    std::vector<double> mean_;
    unsigned threads_;
};

// Cyclic Jacobi eigen-decomposition of a small symmetric matrix (row-major
// n x n). Returns eigenvalues; eigenvectors are the columns of `vectors`.
std::vector<double> jacobi_eigen(std::vector<double> a, std::size_t n, std::vector<double>& vectors) {
    vectors.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) vectors[i * n + i] = 1.0;
    auto at = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                total += at(i, j) * at(i, j);
                if (i != j) off += at(i, j) * at(i, j);
            }
        }
        if (off <= 1e-30 * total || off == 0.0) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = at(p, q);
                if (apq == 0.0) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = at(k, p);
                    const double akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = at(p, k);
                    const double aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = vectors[k * n + p];
                    const double vkq = vectors[k * n + q];
                    vectors[k * n + p] = c * vkp - s * vkq;
                    vectors[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = at(i, i);
    return values;
}

// Orthogonalizes w against the basis twice (classical Gram-Schmidt with
// reorthogonalization).
void orthogonalize(std::vector<double>& w, const std::vector<std::vector<double>>& basis) {
    for (int pass = 0; pass < 2; ++pass) {
        for (const auto& q : basis) axpy(w, -dot(q, w), q);
    }
}

void fix_sign(std::vector<double>& u) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < u.size(); ++k) {
        if (std::abs(u[k]) > std::abs(u[best])) best = k;
    }
    if (u[best] < 0) scale(u, -1.0);
}

}  // namespace

PrincipalDirection first_principal_direction(const Matrix& e, int max_iter, double tol, unsigned threads) {
    if (e.rows() < 2) throw Error(ErrorCode::InvalidArgument, "principal direction needs at least two rows");
    if (max_iter < 1 || !(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "max_iter >= 1 and tol > 0 required");
    const std::size_t d = e.cols();
    const CenteredGram op(e, threads);

    PrincipalDirection out;
    std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
    std::vector<double> previous;
    const std::size_t m = std::min(d, kKrylovDim);

    while (true) {
        // Lanczos with full reorthogonalization, restarted from v.
        std::vector<std::vector<double>> basis{v};
        std::vector<double> t(m * m, 0.0);
        std::size_t k = 0;
        double scale_estimate = 0.0;
        for (; k < m; ++k) {
            std::vector<double> w = op.apply(basis[k]);
            ++out.matvecs;
            const double alpha = dot(basis[k], w);
            t[k * m + k] = alpha;
            scale_estimate = std::max(scale_estimate, std::abs(alpha));
            orthogonalize(w, basis);
            if (k + 1 == m) break;
            double beta = std::sqrt(dot(w, w));
            if (beta <= 1e-12 * std::max(scale_estimate, 1e-300)) {
                // Invariant subspace reached: continue from the unit vector
                // that keeps the most mass outside the current basis.
                beta = 0.0;
                std::vector<double> best;
                double best_norm = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    std::vector<double> ej(d, 0.0);
                    ej[j] = 1.0;
                    orthogonalize(ej, basis);
                    const double n = std::sqrt(dot(ej, ej));
                    if (n > best_norm + 1e-12) {
                        best_norm = n;
                        best = std::move(ej);
                    }
                }
                if (best_norm < 1e-8) break;
                w = std::move(best);
                scale(w, 1.0 / best_norm);
            } else {
                scale(w, 1.0 / beta);
            }
            t[k * m + k + 1] = beta;
            t[(k + 1) * m + k] = beta;
            basis.push_back(std::move(w));
        }
        const std::size_t size = basis.size();
        std::vector<double> tk(size * size);
        for (std::size_t i = 0; i < size; ++i) {
            for (std::size_t j = 0; j < size; ++j) tk[i * size + j] = t[i * m + j];
        }
        std::vector<double> vectors;
        const auto values = jacobi_eigen(std::move(tk), size, vectors);
        const std::size_t top = static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());

        std::vector<double> ritz(d, 0.0);
        for (std::size_t i = 0; i < size; ++i) axpy(ritz, vectors[i * size + top], basis[i]);
        scale(ritz, 1.0 / std::sqrt(dot(ritz, ritz)));

        // Rayleigh quotient and residual of the Ritz pair.
        std::vector<double> ar = op.apply(ritz);
        ++out.matvecs;
        const double theta = dot(ritz, ar);
        axpy(ar, -theta, ritz);
        const double residual = std::sqrt(dot(ar, ar));
        const double rel_residual = theta > 0.0 ? residual / theta : residual;

        const bool zero_operator = theta <= 0.0 && residual == 0.0;
        const bool stable = !previous.empty() && std::abs(dot(previous, ritz)) >= 1.0 - tol;
        if (stable || zero_operator || rel_residual <= 1e-14) {
            out.u1 = std::move(ritz);
            out.rayleigh = theta;
            break;
        }
        if (out.matvecs >= max_iter) {
            if (rel_residual > 1e-6) {
                throw Error(ErrorCode::DidNotConverge, "principal direction residual " + std::to_string(rel_residual) +
                                                           " after " + std::to_string(out.matvecs) + " products");
            }
            out.u1 = std::move(ritz);
            out.rayleigh = theta;
            break;
        }
        previous = ritz;
        v = std::move(ritz);
    }
    fix_sign(out.u1);
    return out;
}

}  // namespace glitch
