#pragma once

// Gauss-Hermite rules (physicists' convention, weight exp(-z^2)) built by
// Golub-Welsch, and bivariate-normal expectations of arbitrary integrands
// evaluated in log space.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace diagmeta {

class decomposition_error : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct QuadratureRule {
    std::vector<double> nodes;    // ascending, symmetric about 0
    std::vector<double> weights;  // positive, sum = sqrt(pi)
};

namespace detail {

// QL iteration with implicit shifts on a symmetric tridiagonal matrix,
// accumulating only the first row of the eigenvector matrix (all that is
// needed for quadrature weights). d: diagonal, e: subdiagonal (e[n-1] unused),
// z: first row, initialized to e_1.
inline void tridiag_ql_first_row(std::vector<double>& d, std::vector<double>& e,
                                 std::vector<double>& z) {
    const int n = static_cast<int>(d.size());
    if (n <= 1) return;
    const double eps = std::numeric_limits<double>::epsilon();
    e[n - 1] = 0.0;

    for (int l = 0; l < n; ++l) {
        int iter = 0;
        int m;
        do {
            for (m = l; m < n - 1; ++m) {
                const double dd = std::fabs(d[m]) + std::fabs(d[m + 1]);
                if (std::fabs(e[m]) <= eps * dd) break;
            }
            if (m != l) {
                if (iter++ == 50) {
                    throw decomposition_error("tridiagonal QL failed to converge");
                }
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
                double s = 1.0, c = 1.0, p = 0.0;
                int i;
                for (i = m - 1; i >= l; --i) {
                    double f = s * e[i];
                    const double b = c * e[i];
                    r = std::hypot(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                    f = z[i + 1];
                    z[i + 1] = s * z[i] + c * f;
                    z[i] = c * z[i] - s * f;
                }
                if (r == 0.0 && i >= l) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }
}

}  // namespace detail

// Nodes are the roots of the degree-m Hermite polynomial; the rule integrates
// z^k exp(-z^2) exactly for k <= 2m-1.
inline QuadratureRule gauss_hermite_rule(int m) {
    if (m < 1 || m > 100) {
        throw std::invalid_argument("gauss_hermite_rule: node count must lie in [1, 100]");
    }
    const double sqrt_pi = 1.7724538509055160273;
    if (m == 1) {
        return {{0.0}, {sqrt_pi}};
    }

    // Jacobi matrix for Hermite polynomials: zero diagonal, b_k = sqrt(k/2).
    std::vector<double> d(m, 0.0), e(m, 0.0), z(m, 0.0);
    for (int k = 1; k < m; ++k) e[k - 1] = std::sqrt(k / 2.0);
    z[0] = 1.0;
    detail::tridiag_ql_first_row(d, e, z);

    std::vector<int> order(m);
    for (int i = 0; i < m; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return d[a] < d[b]; });

    QuadratureRule rule;
    rule.nodes.resize(m);
    rule.weights.resize(m);
    for (int i = 0; i < m; ++i) {
        rule.nodes[i] = d[order[i]];
        rule.weights[i] = sqrt_pi * z[order[i]] * z[order[i]];
    }
    // Enforce exact symmetry about zero (pairs average; middle node zeroed).
    for (int i = 0, j = m - 1; i < j; ++i, --j) {
        const double node = 0.5 * (rule.nodes[j] - rule.nodes[i]);
        rule.nodes[i] = -node;
        rule.nodes[j] = node;
        const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
        rule.weights[i] = rule.weights[j] = w;
    }
    if (m % 2 == 1) rule.nodes[m / 2] = 0.0;
    return rule;
}

// Mean and covariance of a bivariate normal; positive definite iff both
// variances are positive and |rho| < 1.
struct BivariateNormalSpec {
    double mean_eta = 0.0;
    double mean_xi = 0.0;
    double var_eta = 1.0;
    double var_xi = 1.0;
    double rho = 0.0;
};

namespace detail {

struct Cholesky2 {
    double l11, l21, l22;
};

inline Cholesky2 cholesky2(const BivariateNormalSpec& spec) {
    if (!(spec.var_eta > 0.0) || !(spec.var_xi > 0.0)) {
        throw decomposition_error("covariance not positive definite: nonpositive variance");
    }
    const double l11 = std::sqrt(spec.var_eta);
    const double cov = spec.rho * std::sqrt(spec.var_eta * spec.var_xi);
    const double l21 = cov / l11;
    const double rem = spec.var_xi - l21 * l21;
    if (!(rem > 0.0)) {
        throw decomposition_error("covariance not positive definite: |rho| >= 1");
    }
    return {l11, l21, std::sqrt(rem)};
}

}  // namespace detail

// log E[f(eta, xi)] under the bivariate normal, for f supplied as log f.
// Tensor rule over the Cholesky-transformed nodes, combined by log-sum-exp:
//   log sum_{j,k} (w_j w_k / pi) exp(log_f(mu + sqrt2 L (z_j, z_k))).
// log_f may return -inf; underflowing terms drop out instead of producing NaN.
template <class LogF>
double bivariate_expectation_log(LogF&& log_f, const BivariateNormalSpec& spec,
                                 const QuadratureRule& rule) {
    const auto L = detail::cholesky2(spec);
    const double sqrt2 = 1.4142135623730950488;
    const double log_pi = 1.1447298858494001741;
    const std::size_t m = rule.nodes.size();

    std::vector<double> log_w(m);
    for (std::size_t j = 0; j < m; ++j) log_w[j] = std::log(rule.weights[j]);

    // streaming log-sum-exp
    double max_term = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double eta = spec.mean_eta + sqrt2 * L.l11 * rule.nodes[j];
        const double xi_base = spec.mean_xi + sqrt2 * L.l21 * rule.nodes[j];
        for (std::size_t k = 0; k < m; ++k) {
            const double xi = xi_base + sqrt2 * L.l22 * rule.nodes[k];
            const double t = log_w[j] + log_w[k] + log_f(eta, xi);
            if (t == -std::numeric_limits<double>::infinity()) continue;
            if (t > max_term) {
                sum = sum * std::exp(max_term - t) + 1.0;
                max_term = t;
            } else {
                sum += std::exp(t - max_term);
            }
        }
    }
    if (sum == 0.0) return -std::numeric_limits<double>::infinity();
    return max_term + std::log(sum) - log_pi;
}

// Signed variant for integrands that may change sign (moment checks).
template <class F>
double bivariate_expectation(F&& f, const BivariateNormalSpec& spec,
                             const QuadratureRule& rule) {
    const auto L = detail::cholesky2(spec);
    const double sqrt2 = 1.4142135623730950488;
    const double pi = 3.1415926535897932385;
    const std::size_t m = rule.nodes.size();

    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double eta = spec.mean_eta + sqrt2 * L.l11 * rule.nodes[j];
        const double xi_base = spec.mean_xi + sqrt2 * L.l21 * rule.nodes[j];
        double inner = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const double xi = xi_base + sqrt2 * L.l22 * rule.nodes[k];
            inner += rule.weights[k] * f(eta, xi);
        }
        acc += rule.weights[j] * inner;
    }
    return acc / pi;
}

}  // namespace diagmeta
