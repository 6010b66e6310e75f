#pragma once

// Derivative-free and quasi-Newton unconstrained minimizers, plus finite
// difference gradients and Hessians. Objectives may return +inf (or NaN,
// treated as +inf) to reject a point.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "linalg.hpp"

namespace diagmeta {

using Objective = std::function<double(const std::vector<double>&)>;
using Gradient = std::function<std::vector<double>(const std::vector<double>&)>;

enum class OptStatus { converged, max_iter, boundary, degenerate };

inline const char* opt_status_name(OptStatus s) {
    switch (s) {
        case OptStatus::converged:  return "converged";
        case OptStatus::max_iter:   return "max-iter";
        case OptStatus::boundary:   return "boundary";
        case OptStatus::degenerate: return "degenerate";
    }
    return "?";
}

struct OptResult {
    std::vector<double> x;
    double f = std::numeric_limits<double>::infinity();
    OptStatus status = OptStatus::max_iter;
    long evals = 0;
    long iters = 0;
    int restarts_used = 0;
};

struct NelderMeadOptions {
    // the default f tolerance is tighter than the 1e-10 contract so the best
    // vertex itself, not just the simplex spread, is accurate
    double f_tol = 1e-13;       // stop when max-min simplex value spread is below
    double x_tol = 1e-8;        // stop when simplex diameter (inf norm) is below
    long max_evals_per_dim = 5000;
    double initial_step = 0.25;
};

namespace detail {

inline double guard(double v) {
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
}

}  // namespace detail

// Nelder-Mead simplex with the standard coefficients: reflection 1,
// expansion 2, contraction 0.5, shrink 0.5.
inline OptResult nelder_mead(const Objective& f, const std::vector<double>& x0,
                             const NelderMeadOptions& opts = {}) {
    const std::size_t k = x0.size();
    if (k == 0) throw std::invalid_argument("nelder_mead: empty start");
    const long max_evals = opts.max_evals_per_dim * static_cast<long>(k);

    long evals = 0;
    auto eval = [&](const std::vector<double>& x) {
        ++evals;
        return detail::guard(f(x));
    };

    const double f0 = eval(x0);
    if (!std::isfinite(f0)) {
        throw std::invalid_argument("nelder_mead: objective not finite at start");
    }

    std::vector<std::vector<double>> xs(k + 1, x0);
    std::vector<double> fs(k + 1);
    fs[0] = f0;
    for (std::size_t i = 0; i < k; ++i) {
        xs[i + 1][i] += opts.initial_step;
        fs[i + 1] = eval(xs[i + 1]);
    }

    std::vector<std::size_t> order(k + 1);
    auto resort = [&]() {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
    };
    resort();

    OptResult out;
    long iters = 0;
    while (true) {
        const std::size_t best = order[0], worst = order[k], second_worst = order[k - 1];

        const double spread = fs[worst] - fs[best];
        double diam = 0.0;
        for (std::size_t i = 1; i <= k; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                diam = std::max(diam, std::fabs(xs[order[i]][j] - xs[best][j]));
            }
        }
        if ((std::isfinite(spread) && spread < opts.f_tol) || diam < opts.x_tol) {
            out.status = std::isfinite(fs[best]) ? OptStatus::converged : OptStatus::degenerate;
            break;
        }
        if (evals >= max_evals) {
            out.status = std::isfinite(fs[best]) ? OptStatus::max_iter : OptStatus::degenerate;
            break;
        }

        std::vector<double> centroid(k, 0.0);
        for (std::size_t i = 0; i <= k; ++i) {
            if (order[i] == worst) continue;
            for (std::size_t j = 0; j < k; ++j) centroid[j] += xs[order[i]][j];
        }
        for (double& c : centroid) c /= static_cast<double>(k);

        auto blend = [&](double t) {
            std::vector<double> x(k);
            for (std::size_t j = 0; j < k; ++j) {
                x[j] = centroid[j] + t * (xs[worst][j] - centroid[j]);
            }
            return x;
        };

        const auto x_reflect = blend(-1.0);
        const double f_reflect = eval(x_reflect);

        if (f_reflect < fs[order[0]]) {
            const auto x_expand = blend(-2.0);
            const double f_expand = eval(x_expand);
            if (f_expand < f_reflect) {
                xs[worst] = x_expand;
                fs[worst] = f_expand;
            } else {
                xs[worst] = x_reflect;
                fs[worst] = f_reflect;
            }
        } else if (f_reflect < fs[second_worst]) {
            xs[worst] = x_reflect;
            fs[worst] = f_reflect;
        } else {
            const bool outside = f_reflect < fs[worst];
            const auto x_contract = blend(outside ? -0.5 : 0.5);
            const double f_contract = eval(x_contract);
            if (f_contract < std::min(f_reflect, fs[worst])) {
                xs[worst] = x_contract;
                fs[worst] = f_contract;
            } else {
                // shrink toward the best vertex
                for (std::size_t i = 0; i <= k; ++i) {
                    if (order[i] == order[0]) continue;
                    auto& x = xs[order[i]];
                    for (std::size_t j = 0; j < k; ++j) {
                        x[j] = xs[order[0]][j] + 0.5 * (x[j] - xs[order[0]][j]);
                    }
                    fs[order[i]] = eval(x);
                }
            }
        }
        resort();
        ++iters;
    }

    out.x = xs[order[0]];
    out.f = fs[order[0]];
    out.evals = evals;
    out.iters = iters;
    return out;
}

// Central-difference gradient with per-coordinate step h * max(1, |x_i|).
inline std::vector<double> numeric_gradient(const Objective& f, const std::vector<double>& x,
                                            double h = 1e-5) {
    std::vector<double> g(x.size());
    std::vector<double> xp = x, xm = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double hi = h * std::max(1.0, std::fabs(x[i]));
        xp[i] = x[i] + hi;
        xm[i] = x[i] - hi;
        g[i] = (f(xp) - f(xm)) / (2.0 * hi);
        xp[i] = x[i];
        xm[i] = x[i];
    }
    return g;
}

// Central second differences with relative-scaled step, symmetric by
// construction.
inline Matrix numeric_hessian(const Objective& f, const std::vector<double>& x,
                              double h = 1e-4) {
    const std::size_t k = x.size();
    Matrix hess(k, k);
    std::vector<double> step(k);
    for (std::size_t i = 0; i < k; ++i) step[i] = h * std::max(1.0, std::fabs(x[i]));

    const double f0 = f(x);
    std::vector<double> xt = x;
    for (std::size_t i = 0; i < k; ++i) {
        xt[i] = x[i] + step[i];
        const double fp = f(xt);
        xt[i] = x[i] - step[i];
        const double fm = f(xt);
        xt[i] = x[i];
        hess(i, i) = (fp - 2.0 * f0 + fm) / (step[i] * step[i]);
    }
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            xt[i] = x[i] + step[i]; xt[j] = x[j] + step[j];
            const double fpp = f(xt);
            xt[j] = x[j] - step[j];
            const double fpm = f(xt);
            xt[i] = x[i] - step[i]; xt[j] = x[j] + step[j];
            const double fmp = f(xt);
            xt[j] = x[j] - step[j];
            const double fmm = f(xt);
            xt[i] = x[i]; xt[j] = x[j];
            const double v = (fpp - fpm - fmp + fmm) / (4.0 * step[i] * step[j]);
            hess(i, j) = hess(j, i) = v;
        }
    }
    return hess;
}

struct BfgsOptions {
    double g_tol = 1e-6;   // stop when ||grad||_2 is below
    int max_iters = 400;
    int max_halvings = 50;
    double armijo_c1 = 1e-4;
};

// BFGS with a backtracking Armijo line search. The first trial step also
// considers the quadratic-interpolation minimizer, which is exact when the
// objective is quadratic along the ray.
inline OptResult bfgs(const Objective& f, const Gradient& grad, const std::vector<double>& x0,
                      const BfgsOptions& opts = {}) {
    const std::size_t k = x0.size();
    if (k == 0) throw std::invalid_argument("bfgs: empty start");

    long evals = 0;
    auto eval = [&](const std::vector<double>& x) {
        ++evals;
        return detail::guard(f(x));
    };

    std::vector<double> x = x0;
    double fx = eval(x);
    if (!std::isfinite(fx)) {
        throw std::invalid_argument("bfgs: objective not finite at start");
    }
    std::vector<double> g = grad(x);

    Matrix h_inv = Matrix::identity(k);
    OptResult out;
    out.status = OptStatus::max_iter;

    auto norm2 = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double e : v) s += e * e;
        return std::sqrt(s);
    };

    for (int iter = 0; iter < opts.max_iters; ++iter) {
        out.iters = iter;
        if (std::any_of(g.begin(), g.end(), [](double v) { return !std::isfinite(v); })) {
            out.status = OptStatus::degenerate;
            break;
        }
        if (norm2(g) <= opts.g_tol) {
            out.status = OptStatus::converged;
            break;
        }

        // direction d = -H_inv g
        std::vector<double> d(k, 0.0);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) d[i] -= h_inv(i, j) * g[j];
        }
        double slope = 0.0;
        for (std::size_t i = 0; i < k; ++i) slope += d[i] * g[i];
        if (!(slope < 0.0)) {  // not a descent direction; reset to steepest descent
            h_inv = Matrix::identity(k);
            for (std::size_t i = 0; i < k; ++i) d[i] = -g[i];
            slope = 0.0;
            for (std::size_t i = 0; i < k; ++i) slope += d[i] * g[i];
            if (!(slope < 0.0)) {
                out.status = OptStatus::degenerate;
                break;
            }
        }

        auto at = [&](double alpha) {
            std::vector<double> xt(k);
            for (std::size_t i = 0; i < k; ++i) xt[i] = x[i] + alpha * d[i];
            return xt;
        };

        double alpha = 1.0;
        auto x_new = at(alpha);
        double f_new = eval(x_new);

        // quadratic-interpolation candidate from (f(0), f'(0), f(alpha))
        const double denom = f_new - fx - slope * alpha;
        if (std::isfinite(denom) && denom > 0.0) {
            const double alpha_q = -0.5 * slope * alpha * alpha / denom;
            if (std::isfinite(alpha_q) && alpha_q > 0.0) {
                const auto x_q = at(alpha_q);
                const double f_q = eval(x_q);
                if (f_q < f_new) {
                    f_new = f_q;
                    x_new = x_q;
                    alpha = alpha_q;
                }
            }
        }

        int halvings = 0;
        while (!(f_new <= fx + opts.armijo_c1 * alpha * slope)) {
            if (++halvings > opts.max_halvings) break;
            alpha *= 0.5;
            x_new = at(alpha);
            f_new = eval(x_new);
        }
        if (halvings > opts.max_halvings) {
            out.status = OptStatus::max_iter;
            break;
        }

        const auto g_new = grad(x_new);
        std::vector<double> s(k), y(k);
        for (std::size_t i = 0; i < k; ++i) {
            s[i] = x_new[i] - x[i];
            y[i] = g_new[i] - g[i];
        }
        double sy = 0.0;
        for (std::size_t i = 0; i < k; ++i) sy += s[i] * y[i];
        if (sy > 1e-12 * norm2(s) * norm2(y)) {
            // H <- (I - s y^T / sy) H (I - y s^T / sy) + s s^T / sy
            std::vector<double> hy(k, 0.0);
            for (std::size_t i = 0; i < k; ++i) {
                for (std::size_t j = 0; j < k; ++j) hy[i] += h_inv(i, j) * y[j];
            }
            double yhy = 0.0;
            for (std::size_t i = 0; i < k; ++i) yhy += y[i] * hy[i];
            for (std::size_t i = 0; i < k; ++i) {
                for (std::size_t j = 0; j < k; ++j) {
                    h_inv(i, j) += ((sy + yhy) * s[i] * s[j]) / (sy * sy) -
                                   (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }

        x = x_new;
        fx = f_new;
        g = g_new;
    }

    if (out.status == OptStatus::max_iter && norm2(g) <= opts.g_tol) {
        out.status = OptStatus::converged;
    }
    out.x = x;
    out.f = fx;
    out.evals = evals;
    return out;
}

// BFGS with an internally built central-difference gradient.
inline OptResult bfgs(const Objective& f, const std::vector<double>& x0,
                      const BfgsOptions& opts = {}) {
    return bfgs(f, [&](const std::vector<double>& x) { return numeric_gradient(f, x, 1e-6); },
                x0, opts);
}

}  // namespace diagmeta
