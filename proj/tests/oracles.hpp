#pragma once

// Test-only oracles, kept independent of the library's integration and
// transform code paths: inverse links are written out from their formulas,
// the bivariate normal density is evaluated by determinant/quadratic form,
// and integrals use nested adaptive Simpson with a forced minimum depth and
// peak rescaling.

#include <cmath>
#include <functional>
#include <stdexcept>

#include "diagmeta/core_data.hpp"

namespace oracle {

inline double inv_link(diagmeta::Link link, double x) {
    switch (link) {
        case diagmeta::Link::logit:
            return 1.0 / (1.0 + std::exp(-x));
        case diagmeta::Link::probit:
            return 0.5 * std::erfc(-x / std::sqrt(2.0));
        case diagmeta::Link::cloglog:
            return 1.0 - std::exp(-std::exp(x));
    }
    throw std::logic_error("unreachable");
}

// log phi2 by explicit determinant / quadratic form
inline double log_binormal(double dx, double dy, double v1, double cov, double v2) {
    const double det = v1 * v2 - cov * cov;
    const double q = (v2 * dx * dx - 2.0 * cov * dx * dy + v1 * dy * dy) / det;
    return -std::log(2.0 * M_PI) - 0.5 * std::log(det) - 0.5 * q;
}

namespace detail {

template <class F>
double simpson_rec(const F& f, double a, double b, double fa, double fm, double fb,
                   double whole, double eps, int depth, int min_depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (min_depth <= 0 && (depth <= 0 || std::fabs(delta) <= 15.0 * eps)) {
        return left + right + delta / 15.0;
    }
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1, min_depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1, min_depth - 1);
}

}  // namespace detail

template <class F>
double adaptive_simpson(const F& f, double a, double b, double eps, int min_depth = 7) {
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::simpson_rec(f, a, b, fa, fm, fb, whole, eps, 30, min_depth);
}

// log of the MTM per-study integral: nested adaptive Simpson over a box that
// covers both the between-study density and the kernel, rescaled by the grid
// maximum of the log integrand so the quadrature works near magnitude one.
inline double mtm_study_integral_log(const diagmeta::StudyRecord& s, diagmeta::Link link,
                                     double mu_e, double mu_x, double var_e, double var_x,
                                     double rho, double box_lo = -8.0, double box_hi = 8.0) {
    const double cov = rho * std::sqrt(var_e * var_x);
    auto log_h = [&](double eta, double xi) {
        const double se = inv_link(link, eta);
        const double sp = inv_link(link, xi);
        double v = 0.0;
        if (s.tp > 0) v += s.tp * std::log(se);
        if (s.fn > 0) v += s.fn * std::log1p(-se);
        if (s.fp > 0) v += s.fp * std::log1p(-sp);
        if (s.tn > 0) v += s.tn * std::log(sp);
        return v + log_binormal(eta - mu_e, xi - mu_x, var_e, cov, var_x);
    };

    const double alo = std::min(box_lo, mu_e - 8.0 * std::sqrt(var_e));
    const double ahi = std::max(box_hi, mu_e + 8.0 * std::sqrt(var_e));
    const double blo = std::min(box_lo, mu_x - 8.0 * std::sqrt(var_x));
    const double bhi = std::max(box_hi, mu_x + 8.0 * std::sqrt(var_x));

    double peak = -1e308;
    constexpr int probe = 128;
    for (int i = 0; i <= probe; ++i) {
        const double eta = alo + (ahi - alo) * i / probe;
        for (int j = 0; j <= probe; ++j) {
            peak = std::max(peak, log_h(eta, blo + (bhi - blo) * j / probe));
        }
    }

    auto outer = [&](double eta) {
        auto inner = [&](double xi) { return std::exp(log_h(eta, xi) - peak); };
        return adaptive_simpson(inner, blo, bhi, 1e-11);
    };
    return peak + std::log(adaptive_simpson(outer, alo, ahi, 1e-10));
}

// argmax of f over a uniform grid on (0,1)
template <class F>
double grid_argmax_unit(const F& f, int cells = 9999) {
    double best_x = 0.5, best_v = -1e308;
    for (int i = 1; i <= cells; ++i) {
        const double x = static_cast<double>(i) / (cells + 1);
        const double v = f(x);
        if (v > best_v) {
            best_v = v;
            best_x = x;
        }
    }
    return best_x;
}

}  // namespace oracle
