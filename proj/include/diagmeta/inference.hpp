#pragma once

// Model fitting and inference: the optimization cascade (Nelder-Mead, BFGS
// fallback, jittered restarts), failure classification, model-based and
// sandwich covariances, Wald intervals, pooled accuracy, SROC curves and
// confidence regions.

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "core_data.hpp"
#include "likelihoods.hpp"
#include "linalg.hpp"
#include "links.hpp"
#include "optimize.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

namespace diagmeta {

enum class FailureKind { none, non_convergence, boundary_correlation, non_pd_covariance };

inline const char* failure_name(FailureKind f) {
    switch (f) {
        case FailureKind::none:                return "none";
        case FailureKind::non_convergence:     return "non-convergence";
        case FailureKind::boundary_correlation: return "boundary-correlation";
        case FailureKind::non_pd_covariance:   return "non-pd-covariance";
    }
    return "?";
}

struct FitOptions {
    Link link = Link::logit;
    int gh_nodes = 21;
    Correction correction = Correction::half_cell;
    std::uint64_t seed = 0;
    int max_restarts = 5;
    double jitter = 0.5;          // uniform +-jitter on the unconstrained start
    double rho_boundary = 0.999;  // |rho| beyond this counts as a boundary estimate
    double sigma_floor = 1e-5;    // sigma (SD scale) below this counts as degenerate
    double level = 0.95;
};

struct FitResult {
    ModelKind model = ModelKind::mtm;
    Link link = Link::logit;
    Correction correction = Correction::half_cell;
    int gh_nodes = 21;
    std::uint64_t seed = 0;
    double level = 0.95;
    std::size_t n_studies = 0;

    AccuracyParams theta;            // mtm-fixed: variances 0, rho 0
    std::vector<double> u_opt;       // unconstrained optimum (5, or 2 for mtm-fixed)
    Matrix cov_model;                // 5x5, natural scale
    Matrix cov_sandwich;             // 5x5, natural scale
    double loglik = 0.0;
    double aic = 0.0;
    int n_params_aic = 0;
    std::vector<PrevalenceEstimate> prevalences;  // mtm and mtm-fixed
    FailureKind failure = FailureKind::none;
    OptResult opt;
    bool headline_sandwich = true;  // sandwich SE reported for MTM, model-based for approx

    bool converged() const { return failure == FailureKind::none; }

    double se_model(std::size_t i) const { return std::sqrt(std::max(0.0, cov_model(i, i))); }
    double se_sandwich(std::size_t i) const {
        return std::sqrt(std::max(0.0, cov_sandwich(i, i)));
    }
    double se_headline(std::size_t i) const {
        return headline_sandwich ? se_sandwich(i) : se_model(i);
    }
    const Matrix& cov_headline() const { return headline_sandwich ? cov_sandwich : cov_model; }
};

namespace detail {

struct PooledStart {
    double eta0, xi0;
};

inline PooledStart pooled_start(const MetaDataset& ds, Link link) {
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (const auto& s : ds.studies) {
        tp += static_cast<double>(s.tp);
        fp += static_cast<double>(s.fp);
        fn += static_cast<double>(s.fn);
        tn += static_cast<double>(s.tn);
    }
    if (tp == 0 || fp == 0 || fn == 0 || tn == 0) {
        tp += 0.5; fp += 0.5; fn += 0.5; tn += 0.5;
    }
    return {link_apply(link, tp / (tp + fn)), link_apply(link, tn / (tn + fp))};
}

inline AccuracyParams theta_from_u(const std::vector<double>& u) {
    if (u.size() == 2) return {u[0], u[1], 0.0, 0.0, 0.0};
    return UnconstrainedParams{{u[0], u[1], u[2], u[3], u[4]}}.to_params();
}

// Jacobian diagonal of the unconstrained -> natural map, used to push
// covariances onto the natural scale.
inline std::vector<double> natural_scale_jacobian(const std::vector<double>& u) {
    if (u.size() == 2) return {1.0, 1.0};
    const AccuracyParams p = theta_from_u(u);
    return {1.0, 1.0, 2.0 * p.var_eta, 2.0 * p.var_xi, 1.0 - p.rho * p.rho};
}

// Change-of-variables constant that puts the normal-approximation likelihood
// on the probability scale, making AIC comparable across link choices:
// sum_i log g'(se_hat_i) + log g'(sp_hat_i).
inline double approx_scale_adjustment(const MetaDataset& ds, Link link, Correction corr) {
    double jac = 0.0;
    for (const auto& s : ds.studies) {
        const auto acc = empirical_accuracy(s, corr);
        jac += std::log(link_derivative(link, acc.se)) +
               std::log(link_derivative(link, acc.sp));
    }
    return jac;
}

}  // namespace detail

// Sandwich covariance A^{-1} B A^{-1} on the unconstrained scale, from
// numeric per-study scores (B) and per-study Hessians (A = total observed
// information). Returns nullopt when A is not positive definite.
inline std::optional<Matrix> sandwich_covariance_unconstrained(
    const std::function<double(const std::vector<double>&, std::size_t)>& study_loglik,
    std::size_t n_studies, const std::vector<double>& u) {
    const std::size_t k = u.size();
    Matrix a(k, k), b(k, k);
    for (std::size_t i = 0; i < n_studies; ++i) {
        Objective fi = [&](const std::vector<double>& x) { return study_loglik(x, i); };
        const auto score = numeric_gradient(fi, u, 1e-5);
        const Matrix hess = numeric_hessian(fi, u, 1e-4);
        if (!hess.finite()) return std::nullopt;
        for (std::size_t r = 0; r < k; ++r) {
            if (!std::isfinite(score[r])) return std::nullopt;
            for (std::size_t c = 0; c < k; ++c) {
                a(r, c) -= hess(r, c);
                b(r, c) += score[r] * score[c];
            }
        }
    }
    const auto a_inv = inverse_spd(a);
    if (!a_inv) return std::nullopt;
    return matmul(matmul(*a_inv, b), *a_inv);
}

inline FitResult fit_model(const MetaDataset& ds, ModelKind model, const FitOptions& opt = {}) {
    ds.validate();
    const QuadratureRule rule = gauss_hermite_rule(opt.gh_nodes);
    const std::size_t n = ds.size();
    const std::size_t k = (model == ModelKind::mtm_fixed) ? 2 : 5;

    FitResult fit;
    fit.model = model;
    fit.link = opt.link;
    fit.correction = opt.correction;
    fit.gh_nodes = opt.gh_nodes;
    fit.seed = opt.seed;
    fit.level = opt.level;
    fit.n_studies = n;
    fit.headline_sandwich = (model != ModelKind::approx);
    fit.cov_model = Matrix(5, 5);
    fit.cov_sandwich = Matrix(5, 5);

    // per-study log-likelihood in unconstrained coordinates
    auto study_loglik = [&](const std::vector<double>& u, std::size_t i) {
        const AccuracyParams th = detail::theta_from_u(u);
        return per_study_loglik(model, th, ds.studies[i], opt.link, rule, opt.correction);
    };
    auto total_loglik = [&](const std::vector<double>& u) {
        double t = 0.0;
        for (std::size_t i = 0; i < n; ++i) t += study_loglik(u, i);
        return t;
    };
    Objective negative = [&](const std::vector<double>& u) {
        if (k == 5 && std::fabs(u[4]) > UnconstrainedParams::rho_cap) {
            return std::numeric_limits<double>::infinity();
        }
        try {
            return -total_loglik(u);
        } catch (const std::exception&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    // starting values: pooled accuracy through the link, sigma = 0.5, rho = 0
    const auto start = detail::pooled_start(ds, opt.link);
    std::vector<double> x0 = {start.eta0, start.xi0};
    if (k == 5) {
        x0.push_back(std::log(0.5));
        x0.push_back(std::log(0.5));
        x0.push_back(0.0);
    }

    // optimization cascade: Nelder-Mead, BFGS fallback, jittered restarts
    auto accept = [](const OptResult& r) {
        return r.status == OptStatus::converged && std::isfinite(r.f);
    };
    long evals = 0;
    int restarts = 0;
    OptResult best;
    best.f = std::numeric_limits<double>::infinity();

    auto attempt = [&](const std::vector<double>& from) {
        OptResult r;
        try {
            r = nelder_mead(negative, from);
        } catch (const std::invalid_argument&) {
            return false;  // start not evaluable
        }
        evals += r.evals;
        if (!accept(r) && std::isfinite(r.f)) {
            OptResult rb = bfgs(negative, r.x);
            evals += rb.evals;
            if (rb.f <= r.f) r = rb;
        }
        if (r.f < best.f || (accept(r) && !accept(best))) best = r;
        return accept(r);
    };

    bool ok = attempt(x0);
    SplitMix64 jitter_rng(substream_seed(opt.seed, 0x5eedULL));
    while (!ok && restarts < opt.max_restarts) {
        ++restarts;
        std::vector<double> xj = x0;
        for (double& v : xj) v += opt.jitter * (2.0 * jitter_rng.next_double() - 1.0);
        ok = attempt(xj);
    }

    fit.opt = best;
    fit.opt.evals = evals;
    fit.opt.restarts_used = restarts;
    fit.u_opt = best.x.empty() ? x0 : best.x;
    fit.theta = detail::theta_from_u(fit.u_opt);

    if (!ok) {
        fit.failure = FailureKind::non_convergence;
        if (fit.opt.status == OptStatus::converged) fit.opt.status = OptStatus::max_iter;
    } else if (k == 5) {
        // boundary / degenerate estimates
        const bool rho_boundary = std::fabs(fit.theta.rho) > opt.rho_boundary ||
                                  std::fabs(fit.u_opt[4]) > UnconstrainedParams::rho_cap - 0.01;
        const bool sigma_degenerate = std::sqrt(fit.theta.var_eta) < opt.sigma_floor ||
                                      std::sqrt(fit.theta.var_xi) < opt.sigma_floor;
        if (rho_boundary || sigma_degenerate) {
            fit.failure = FailureKind::boundary_correlation;
            fit.opt.status = OptStatus::boundary;
        }
    }

    // log-likelihood, AIC, prevalences
    double core = -best.f;
    if (!std::isfinite(core)) {
        try {
            core = total_loglik(fit.u_opt);
        } catch (const std::exception&) {
            core = -std::numeric_limits<double>::infinity();
        }
    }
    if (model == ModelKind::approx) {
        fit.loglik = core;
        fit.n_params_aic = 5;
        double scale_adjustment = 0.0;
        try {
            scale_adjustment = detail::approx_scale_adjustment(ds, opt.link, opt.correction);
        } catch (const std::exception&) {
            // transforms not evaluable; core is already -inf
        }
        fit.aic = -2.0 * (core + scale_adjustment) + 2.0 * fit.n_params_aic;
    } else {
        fit.prevalences = estimate_prevalences(ds);
        double prev_part = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& s = ds.studies[i];
            prev_part += static_cast<double>(s.positives()) * std::log(fit.prevalences[i].pi_hat) +
                         static_cast<double>(s.negatives()) *
                             std::log1p(-fit.prevalences[i].pi_hat);
        }
        if (model == ModelKind::mtm) {
            fit.loglik = core + prev_part;
            fit.n_params_aic = 5 + static_cast<int>(n);
        } else {
            fit.loglik = core;  // mtm-fixed contributions already include prevalences
            fit.n_params_aic = 2 + static_cast<int>(n);
        }
        fit.aic = -2.0 * fit.loglik + 2.0 * fit.n_params_aic;
    }

    // covariances in unconstrained coordinates, mapped to the natural scale
    const auto jac = detail::natural_scale_jacobian(fit.u_opt);
    auto map_to_natural = [&](const Matrix& cov_u, Matrix& out) {
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                out(i, j) = jac[i] * cov_u(i, j) * jac[j];
            }
        }
    };

    bool cov_failed = false;
    try {
        const Matrix obs_info = numeric_hessian(negative, fit.u_opt, 1e-4);
        const auto cov_u = obs_info.finite() ? inverse_spd(obs_info) : std::nullopt;
        if (cov_u) {
            map_to_natural(*cov_u, fit.cov_model);
        } else {
            cov_failed = true;
        }
    } catch (const std::exception&) {
        cov_failed = true;
    }
    try {
        auto guarded_study = [&](const std::vector<double>& u, std::size_t i) {
            if (k == 5 && std::fabs(u[4]) > UnconstrainedParams::rho_cap) {
                return -std::numeric_limits<double>::infinity();
            }
            return study_loglik(u, i);
        };
        const auto sand_u = sandwich_covariance_unconstrained(guarded_study, n, fit.u_opt);
        if (sand_u) {
            map_to_natural(*sand_u, fit.cov_sandwich);
        } else {
            cov_failed = true;
        }
    } catch (const std::exception&) {
        cov_failed = true;
    }
    if (cov_failed && fit.failure == FailureKind::none) {
        fit.failure = FailureKind::non_pd_covariance;
    }
    return fit;
}

// Convenience wrapper: sandwich covariance of an existing fit on the natural
// scale.
inline Matrix sandwich_covariance(const FitResult& fit, const MetaDataset& ds) {
    const QuadratureRule rule = gauss_hermite_rule(fit.gh_nodes);
    auto study_loglik = [&](const std::vector<double>& u, std::size_t i) {
        return per_study_loglik(fit.model, detail::theta_from_u(u), ds.studies[i], fit.link,
                                rule, fit.correction);
    };
    const auto sand_u =
        sandwich_covariance_unconstrained(study_loglik, ds.size(), fit.u_opt);
    if (!sand_u) throw decomposition_error("sandwich covariance: information not PD");
    const auto jac = detail::natural_scale_jacobian(fit.u_opt);
    const std::size_t k = fit.u_opt.size();
    Matrix out(5, 5);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) out(i, j) = jac[i] * (*sand_u)(i, j) * jac[j];
    }
    return out;
}

struct Interval {
    double low, high;
};

inline Interval wald_ci(double estimate, double se, double level) {
    if (!(se > 0.0)) throw std::domain_error("wald_ci: se must be positive");
    if (!(level > 0.0) || !(level < 1.0)) {
        throw std::domain_error("wald_ci: level must lie in (0,1)");
    }
    const double z = normal_quantile(0.5 * (1.0 + level));
    return {estimate - z * se, estimate + z * se};
}

// Back-transformed summary accuracy with delta-method standard errors.
struct PooledAccuracy {
    double se, se_se, sp, se_sp;
};

inline PooledAccuracy pooled_accuracy(const FitResult& fit) {
    const double se = link_inverse(fit.link, fit.theta.eta_bar);
    const double sp = link_inverse(fit.link, fit.theta.xi_bar);
    const double dse = std::fabs(link_inverse_derivative(fit.link, fit.theta.eta_bar));
    const double dsp = std::fabs(link_inverse_derivative(fit.link, fit.theta.xi_bar));
    return {se, fit.se_headline(0) * dse, sp, fit.se_headline(1) * dsp};
}

class degenerate_curve : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RocPoint {
    double fpr, sens;
};

// SROC: regression of eta on xi under the between-study model,
// eta(xi) = eta_bar + rho (sigma_eta / sigma_xi) (xi - xi_bar), traced over a
// grid of specificities and mapped to (1 - sp, se).
inline std::vector<RocPoint> sroc_curve(const FitResult& fit,
                                        const std::vector<double>& spec_grid) {
    if (!(fit.theta.var_xi > 0.0)) {
        throw degenerate_curve("sroc_curve: sigma2_xi must be positive");
    }
    const double slope =
        fit.theta.rho * std::sqrt(fit.theta.var_eta / fit.theta.var_xi);
    std::vector<RocPoint> out;
    out.reserve(spec_grid.size());
    for (double c : spec_grid) {
        if (!(c > 0.0) || !(c < 1.0)) {
            throw std::domain_error("sroc_curve: grid specificities must lie in (0,1)");
        }
        const double xi = link_apply(fit.link, c);
        const double eta = fit.theta.eta_bar + slope * (xi - fit.theta.xi_bar);
        out.push_back({1.0 - c, link_inverse(fit.link, eta)});
    }
    std::sort(out.begin(), out.end(),
              [](const RocPoint& a, const RocPoint& b) { return a.fpr < b.fpr; });
    return out;
}

// Confidence region for (eta_bar, xi_bar) mapped to ROC space: the ellipse
// mu + c L (cos t, sin t) with c^2 the chi-square(2) quantile, -2 log(1-level),
// back-transformed coordinatewise. Returns a closed polyline (last == first).
inline std::vector<RocPoint> confidence_region(const FitResult& fit, double level,
                                               std::size_t points = 256) {
    if (!(level > 0.0) || !(level < 1.0)) {
        throw std::domain_error("confidence_region: level must lie in (0,1)");
    }
    if (points < 3) throw std::domain_error("confidence_region: need at least 3 points");
    const Matrix& cov = fit.cov_headline();
    const double c11 = cov(0, 0), c12 = cov(0, 1), c22 = cov(1, 1);
    if (!(c11 > 0.0)) throw decomposition_error("confidence_region: covariance not PD");
    const double l11 = std::sqrt(c11);
    const double l21 = c12 / l11;
    const double rem = c22 - l21 * l21;
    if (!(rem > 0.0)) throw decomposition_error("confidence_region: covariance not PD");
    const double l22 = std::sqrt(rem);
    const double radius = std::sqrt(-2.0 * std::log1p(-level));  // chi2_2 quantile, exactly

    std::vector<RocPoint> out;
    out.reserve(points + 1);
    const double two_pi = 6.2831853071795864769;
    for (std::size_t i = 0; i <= points; ++i) {
        const double t = two_pi * static_cast<double>(i % points) / static_cast<double>(points);
        const double eta = fit.theta.eta_bar + radius * l11 * std::cos(t);
        const double xi =
            fit.theta.xi_bar + radius * (l21 * std::cos(t) + l22 * std::sin(t));
        out.push_back({1.0 - link_inverse(fit.link, xi), link_inverse(fit.link, eta)});
    }
    return out;
}

}  // namespace diagmeta
