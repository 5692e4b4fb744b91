#include "virnet/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "virnet/errors.hpp"

namespace virnet {

Mat matmul(const Mat& x, const Mat& y) {
    if (x.cols != y.rows) {
        throw ShapeError("matmul: " + std::to_string(x.cols) + " vs " +
                         std::to_string(y.rows));
    }
    Mat out(x.rows, y.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t k = 0; k < x.cols; ++k) {
            const double v = x.at(i, k);
            if (v == 0.0) continue;
            for (std::size_t j = 0; j < y.cols; ++j) {
                out.at(i, j) += v * y.at(k, j);
            }
        }
    }
    return out;
}

Mat transpose(const Mat& x) {
    Mat out(x.cols, x.rows);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) out.at(j, i) = x.at(i, j);
    return out;
}

EigResult eigh(const Mat& sym) {
    if (sym.rows != sym.cols) {
        throw ShapeError("eigh: matrix is " + std::to_string(sym.rows) + "x" +
                         std::to_string(sym.cols));
    }
    const std::size_t n = sym.rows;
    Mat A = sym;
    // enforce exact symmetry so rotations stay consistent
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (A.at(i, j) + A.at(j, i));
            A.at(i, j) = v;
            A.at(j, i) = v;
        }

    Mat V(n, n);
    for (std::size_t i = 0; i < n; ++i) V.at(i, i) = 1.0;

    double norm = 0.0;
    for (double v : A.a) norm += v * v;
    const double tol = 1e-28 * std::max(norm, 1e-300);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += A.at(p, q) * A.at(p, q);
        if (off <= tol) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = A.at(p, q);
                if (apq == 0.0) continue;
                const double tau = (A.at(q, q) - A.at(p, p)) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = A.at(i, p), aiq = A.at(i, q);
                    A.at(i, p) = c * aip - s * aiq;
                    A.at(i, q) = s * aip + c * aiq;
                }
                for (std::size_t j = 0; j < n; ++j) {
                    const double apj = A.at(p, j), aqj = A.at(q, j);
                    A.at(p, j) = c * apj - s * aqj;
                    A.at(q, j) = s * apj + c * aqj;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = V.at(i, p), viq = V.at(i, q);
                    V.at(i, p) = c * vip - s * viq;
                    V.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return A.at(i, i) > A.at(j, j); });

    EigResult res;
    res.values.resize(n);
    res.vectors = Mat(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        res.values[j] = A.at(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) res.vectors.at(i, j) = V.at(i, order[j]);
    }
    return res;
}

namespace {

// In-place Householder reduction of A (rows >= cols). Reflector k is stored
// in column k below the diagonal plus vhead[k]; the R factor occupies the
// upper triangle.
struct QrFactors {
    Mat A;
    std::vector<double> vhead;
};

QrFactors householder_reduce(Mat A) {
    const std::size_t n = A.rows, m = A.cols;
    if (n < m) {
        throw ShapeError("qr: need rows >= cols, got " + std::to_string(n) + "x" +
                         std::to_string(m));
    }
    QrFactors f{std::move(A), std::vector<double>(m, 0.0)};
    Mat& M = f.A;
    for (std::size_t k = 0; k < m; ++k) {
        double nrm = 0.0;
        for (std::size_t i = k; i < n; ++i) nrm += M.at(i, k) * M.at(i, k);
        nrm = std::sqrt(nrm);
        if (nrm == 0.0) {
            f.vhead[k] = 0.0;
            continue;
        }
        const double alpha = (M.at(k, k) >= 0.0 ? -nrm : nrm);
        double v0 = M.at(k, k) - alpha;
        double vnorm_sq = v0 * v0;
        for (std::size_t i = k + 1; i < n; ++i) vnorm_sq += M.at(i, k) * M.at(i, k);
        M.at(k, k) = alpha;  // R diagonal
        if (vnorm_sq == 0.0) {
            f.vhead[k] = 0.0;
            continue;
        }
        const double inv = 1.0 / std::sqrt(vnorm_sq);
        f.vhead[k] = v0 * inv;
        for (std::size_t i = k + 1; i < n; ++i) M.at(i, k) *= inv;
        // apply H = I - 2 v v^T to the trailing columns
        for (std::size_t j = k + 1; j < m; ++j) {
            double dot = f.vhead[k] * M.at(k, j);
            for (std::size_t i = k + 1; i < n; ++i) dot += M.at(i, k) * M.at(i, j);
            const double two_dot = 2.0 * dot;
            M.at(k, j) -= two_dot * f.vhead[k];
            for (std::size_t i = k + 1; i < n; ++i) M.at(i, j) -= two_dot * M.at(i, k);
        }
    }
    return f;
}

void apply_reflectors_to_vector(const QrFactors& f, std::vector<double>& b) {
    const std::size_t n = f.A.rows, m = f.A.cols;
    for (std::size_t k = 0; k < m; ++k) {
        if (f.vhead[k] == 0.0) continue;
        double dot = f.vhead[k] * b[k];
        for (std::size_t i = k + 1; i < n; ++i) dot += f.A.at(i, k) * b[i];
        const double two_dot = 2.0 * dot;
        b[k] -= two_dot * f.vhead[k];
        for (std::size_t i = k + 1; i < n; ++i) b[i] -= two_dot * f.A.at(i, k);
    }
}

}  // namespace

Mat orthonormal_columns(std::size_t rows, std::size_t cols, Rng& rng) {
    Mat G(rows, cols);
    for (auto& v : G.a) v = rng.normal();
    QrFactors f = householder_reduce(std::move(G));
    const std::size_t n = rows, m = cols;

    // form the thin Q by applying reflectors (in reverse) to thin identity
    Mat Q(n, m);
    for (std::size_t j = 0; j < m; ++j) Q.at(j, j) = 1.0;
    for (std::size_t kk = m; kk-- > 0;) {
        if (f.vhead[kk] == 0.0) continue;
        for (std::size_t j = 0; j < m; ++j) {
            double dot = f.vhead[kk] * Q.at(kk, j);
            for (std::size_t i = kk + 1; i < n; ++i) dot += f.A.at(i, kk) * Q.at(i, j);
            const double two_dot = 2.0 * dot;
            Q.at(kk, j) -= two_dot * f.vhead[kk];
            for (std::size_t i = kk + 1; i < n; ++i) Q.at(i, j) -= two_dot * f.A.at(i, kk);
        }
    }
    // sign fix: make the implied R diagonal positive so the factorization
    // (and thus the init) is unique
    for (std::size_t j = 0; j < m; ++j) {
        if (f.A.at(j, j) < 0.0) {
            for (std::size_t i = 0; i < n; ++i) Q.at(i, j) = -Q.at(i, j);
        }
    }
    return Q;
}

std::vector<double> solve_least_squares(Mat A, std::vector<double> b) {
    if (b.size() != A.rows) {
        throw ShapeError("solve_least_squares: b has " + std::to_string(b.size()) +
                         " entries for " + std::to_string(A.rows) + " rows");
    }
    const std::size_t m = A.cols;
    QrFactors f = householder_reduce(std::move(A));
    apply_reflectors_to_vector(f, b);

    double max_diag = 0.0;
    for (std::size_t j = 0; j < m; ++j) max_diag = std::max(max_diag, std::abs(f.A.at(j, j)));
    std::vector<double> x(m, 0.0);
    for (std::size_t jj = m; jj-- > 0;) {
        const double d = f.A.at(jj, jj);
        if (std::abs(d) <= 1e-12 * std::max(max_diag, 1e-300)) {
            throw ConditioningError(
                "solve_least_squares: rank deficient, |R[" + std::to_string(jj) +
                "][" + std::to_string(jj) + "]| = " + std::to_string(std::abs(d)) +
                " vs max diagonal " + std::to_string(max_diag));
        }
        double acc = b[jj];
        for (std::size_t j = jj + 1; j < m; ++j) acc -= f.A.at(jj, j) * x[j];
        x[jj] = acc / d;
    }
    return x;
}

std::vector<double> cholesky_solve(Mat A, std::vector<double> b) {
    if (A.rows != A.cols || b.size() != A.rows) {
        throw ShapeError("cholesky_solve: bad dimensions");
    }
    const std::size_t n = A.rows;
    // lower-triangular factor in place
    for (std::size_t j = 0; j < n; ++j) {
        double d = A.at(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= A.at(j, k) * A.at(j, k);
        if (d <= 0.0) {
            throw ConditioningError("cholesky_solve: non-positive pivot " +
                                    std::to_string(d) + " at " + std::to_string(j));
        }
        const double dj = std::sqrt(d);
        A.at(j, j) = dj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = A.at(i, j);
            for (std::size_t k = 0; k < j; ++k) v -= A.at(i, k) * A.at(j, k);
            A.at(i, j) = v / dj;
        }
    }
    // forward then back substitution
    for (std::size_t i = 0; i < n; ++i) {
        double v = b[i];
        for (std::size_t k = 0; k < i; ++k) v -= A.at(i, k) * b[k];
        b[i] = v / A.at(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double v = b[ii];
        for (std::size_t k = ii + 1; k < n; ++k) v -= A.at(k, ii) * b[k];
        b[ii] = v / A.at(ii, ii);
    }
    return b;
}

}  // namespace virnet
