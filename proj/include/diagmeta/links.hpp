#pragma once

// Link functions g : (0,1) -> R (logit, probit, cloglog), their inverses and
// derivatives, and standard-normal CDF/quantile primitives.

#include <cmath>
#include <stdexcept>
#include <string>

namespace diagmeta {

enum class Link { logit, probit, cloglog };

inline const char* link_name(Link link) {
    switch (link) {
        case Link::logit:   return "logit";
        case Link::probit:  return "probit";
        case Link::cloglog: return "cloglog";
    }
    return "?";
}

inline Link link_from_name(const std::string& name) {
    if (name == "logit")   return Link::logit;
    if (name == "probit")  return Link::probit;
    if (name == "cloglog") return Link::cloglog;
    throw std::invalid_argument("unknown link function: " + name);
}

// Inverse-link outputs are clamped to [prob_clamp, 1 - prob_clamp] so that
// downstream logs stay finite.
inline constexpr double prob_clamp = 1e-15;

inline double normal_pdf(double x) {
    constexpr double inv_sqrt_2pi = 0.3989422804014326779;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

// Phi(x) = erfc(-x / sqrt 2) / 2; accurate to a few ulp including the tails.
inline double normal_cdf(double x) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    return 0.5 * std::erfc(-x * inv_sqrt2);
}

// Acklam's rational approximation (|relative error| < 1.2e-9) polished by one
// Newton step on normal_cdf.
inline double normal_quantile(double p) {
    if (!(p > 0.0) || !(p < 1.0)) {
        throw std::domain_error("normal_quantile: p must lie in (0,1)");
    }
    static constexpr double a[6] = {
        -3.969683028665376e+01,  2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01,  2.506628277459239e+00};
    static constexpr double b[5] = {
        -5.447609879822406e+01,  1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01};
    static constexpr double c[6] = {
        -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
        -2.549732539343734e+00,  4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {
         7.784695709041462e-03,  3.224671290700398e-01,  2.445134137142996e+00,
         3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
             ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    const double dens = normal_pdf(x);
    if (dens > 1e-300) {
        x -= (normal_cdf(x) - p) / dens;
    }
    return x;
}

// g(p); domain error outside (0,1).
inline double link_apply(Link link, double p) {
    if (!(p > 0.0) || !(p < 1.0)) {
        throw std::domain_error("link_apply: p must lie in (0,1)");
    }
    switch (link) {
        case Link::logit:   return std::log(p / (1.0 - p));
        case Link::probit:  return normal_quantile(p);
        case Link::cloglog: return std::log(-std::log1p(-p));
    }
    throw std::logic_error("link_apply: unreachable");
}

// g inverse, clamped to [prob_clamp, 1 - prob_clamp]; domain error for
// non-finite x.
inline double link_inverse(Link link, double x) {
    if (!std::isfinite(x)) {
        throw std::domain_error("link_inverse: x must be finite");
    }
    double p;
    switch (link) {
        case Link::logit:
            if (x >= 0.0) {
                p = 1.0 / (1.0 + std::exp(-x));
            } else {
                const double e = std::exp(x);
                p = e / (1.0 + e);
            }
            break;
        case Link::probit:
            p = normal_cdf(x);
            break;
        case Link::cloglog:
            // 1 - exp(-exp(x)), kept accurate for very negative x
            p = -std::expm1(-std::exp(x));
            break;
        default:
            throw std::logic_error("link_inverse: unreachable");
    }
    if (p < prob_clamp) p = prob_clamp;
    if (p > 1.0 - prob_clamp) p = 1.0 - prob_clamp;
    return p;
}

// g'(p)
inline double link_derivative(Link link, double p) {
    if (!(p > 0.0) || !(p < 1.0)) {
        throw std::domain_error("link_derivative: p must lie in (0,1)");
    }
    switch (link) {
        case Link::logit:
            return 1.0 / (p * (1.0 - p));
        case Link::probit:
            return 1.0 / normal_pdf(normal_quantile(p));
        case Link::cloglog:
            return -1.0 / ((1.0 - p) * std::log1p(-p));
    }
    throw std::logic_error("link_derivative: unreachable");
}

// d g^{-1} / dx evaluated at x (unclamped form).
inline double link_inverse_derivative(Link link, double x) {
    if (!std::isfinite(x)) {
        throw std::domain_error("link_inverse_derivative: x must be finite");
    }
    switch (link) {
        case Link::logit: {
            const double p = link_inverse(Link::logit, x);
            return p * (1.0 - p);
        }
        case Link::probit:
            return normal_pdf(x);
        case Link::cloglog:
            // d/dx [1 - exp(-e^x)] = exp(x - e^x)
            return std::exp(x - std::exp(x));
    }
    throw std::logic_error("link_inverse_derivative: unreachable");
}

// d^2 g^{-1} / dx^2 evaluated at x.
inline double link_inverse_second_derivative(Link link, double x) {
    if (!std::isfinite(x)) {
        throw std::domain_error("link_inverse_second_derivative: x must be finite");
    }
    switch (link) {
        case Link::logit: {
            const double p = link_inverse(Link::logit, x);
            return p * (1.0 - p) * (1.0 - 2.0 * p);
        }
        case Link::probit:
            return -x * normal_pdf(x);
        case Link::cloglog: {
            const double e = std::exp(x);
            return std::exp(x - e) * (1.0 - e);
        }
    }
    throw std::logic_error("link_inverse_second_derivative: unreachable");
}

}  // namespace diagmeta
