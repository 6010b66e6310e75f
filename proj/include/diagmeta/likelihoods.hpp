#pragma once

// Log-likelihood evaluators for the two competing models:
//  - approximate normal-normal marginal model on transformed estimates,
//  - hierarchical multinomial tree model (MTM): binomial kernels integrated
//    against the between-study bivariate normal, plus the separable
//    prevalence part, and the fixed-effects variant.
// Binomial coefficients are omitted throughout (parameter-free constants), so
// reported log-likelihood values are comparable only within this project.

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "core_data.hpp"
#include "links.hpp"
#include "quadrature.hpp"

namespace diagmeta {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

// Between-study accuracy parameters (eta_bar, xi_bar, var_eta, var_xi, rho).
struct AccuracyParams {
    double eta_bar = 0.0;
    double xi_bar = 0.0;
    double var_eta = 1.0;
    double var_xi = 1.0;
    double rho = 0.0;

    void validate() const {
        if (!(var_eta > 0.0) || !(var_xi > 0.0)) {
            throw std::invalid_argument("AccuracyParams: variances must be positive");
        }
        if (!(std::fabs(rho) < 1.0)) {
            throw std::invalid_argument("AccuracyParams: |rho| must be < 1");
        }
    }

    BivariateNormalSpec between_spec() const {
        return {eta_bar, xi_bar, var_eta, var_xi, rho};
    }
};

// Unconstrained reparameterization for optimization:
//   u = (eta_bar, xi_bar, log sigma_eta, log sigma_xi, atanh rho).
// |u[4]| is capped at rho_cap during optimization (|rho| <= tanh 6).
struct UnconstrainedParams {
    static constexpr double rho_cap = 6.0;

    std::array<double, 5> u{};

    static UnconstrainedParams from_params(const AccuracyParams& p) {
        p.validate();
        return {{p.eta_bar, p.xi_bar, 0.5 * std::log(p.var_eta), 0.5 * std::log(p.var_xi),
                 std::atanh(p.rho)}};
    }

    AccuracyParams to_params() const {
        return {u[0], u[1], std::exp(2.0 * u[2]), std::exp(2.0 * u[3]), std::tanh(u[4])};
    }

    bool within_cap() const { return std::fabs(u[4]) <= rho_cap; }
};

// Study-level prevalences pi_i in (0,1).
struct PrevalenceParams {
    std::vector<double> pi;

    void validate(std::size_t n_studies) const {
        if (pi.size() != n_studies) {
            throw std::invalid_argument("PrevalenceParams: length must equal dataset size");
        }
        for (double p : pi) {
            if (!(p > 0.0) || !(p < 1.0)) {
                throw std::invalid_argument("PrevalenceParams: each pi must lie in (0,1)");
            }
        }
    }
};

namespace detail {

// log of the bivariate normal density evaluated via the Cholesky factor of C.
inline double log_bivariate_normal(double dx, double dy, double c11, double c12, double c22) {
    const double log_2pi = 1.8378770664093454836;
    if (!(c11 > 0.0)) throw decomposition_error("covariance not positive definite");
    const double l11 = std::sqrt(c11);
    const double l21 = c12 / l11;
    const double rem = c22 - l21 * l21;
    if (!(rem > 0.0)) throw decomposition_error("covariance not positive definite");
    const double l22 = std::sqrt(rem);
    const double w1 = dx / l11;
    const double w2 = (dy - l21 * w1) / l22;
    return -log_2pi - std::log(l11) - std::log(l22) - 0.5 * (w1 * w1 + w2 * w2);
}

// log binomial kernel of one study at success probabilities (se, sp):
//   TP log se + FN log(1-se) + FP log(1-sp) + TN log sp,
// with zero-count terms dropped so 0 * log 0 never occurs.
inline double log_binomial_kernel(const StudyRecord& s, double se, double sp) {
    double v = 0.0;
    if (s.tp > 0) v += static_cast<double>(s.tp) * std::log(se);
    if (s.fn > 0) v += static_cast<double>(s.fn) * std::log1p(-se);
    if (s.fp > 0) v += static_cast<double>(s.fp) * std::log1p(-sp);
    if (s.tn > 0) v += static_cast<double>(s.tn) * std::log(sp);
    return v;
}

// log p(x) and log(1 - p(x)) without forming p, so deep tails keep full
// precision instead of saturating at the probability clamp.
inline void log_probs(Link link, double x, double& log_p, double& log_q) {
    if (link == Link::logit) {
        if (x >= 0.0) {
            const double t = std::log1p(std::exp(-x));
            log_p = -t;
            log_q = -x - t;
        } else {
            const double t = std::log1p(std::exp(x));
            log_p = x - t;
            log_q = -t;
        }
        return;
    }
    const double p = link_inverse(link, x);
    log_p = std::log(p);
    log_q = std::log1p(-p);
}

// One margin of the log kernel, k_pos * log p(x) + k_neg * log(1 - p(x)),
// with first and second derivatives in x.
struct MarginDerivs {
    double value, d1, d2;
};

inline MarginDerivs binom_margin_log(double k_pos, double k_neg, Link link, double x) {
    const double p = link_inverse(link, x);
    const double d = link_inverse_derivative(link, x);
    const double d2 = link_inverse_second_derivative(link, x);
    MarginDerivs out{0.0, 0.0, 0.0};
    if (k_pos > 0.0) {
        out.value += k_pos * std::log(p);
        out.d1 += k_pos * d / p;
        out.d2 += k_pos * (d2 * p - d * d) / (p * p);
    }
    if (k_neg > 0.0) {
        const double q = 1.0 - p;
        out.value += k_neg * std::log1p(-p);
        out.d1 -= k_neg * d / q;
        out.d2 -= k_neg * (d2 * q + d * d) / (q * q);
    }
    return out;
}

// Per-study integral log int k(eta, xi) phi2(eta, xi; mu, Sigma) d(eta, xi),
// by Gauss-Hermite quadrature recentered at the integrand mode and rescaled by
// its curvature there. The recentering keeps the rule accurate when the
// binomial kernel is much narrower than the between-study density (large
// counts), which a rule anchored at mu cannot resolve.
inline double mtm_study_log_integral(const StudyRecord& s, Link link,
                                     const BivariateNormalSpec& spec,
                                     const QuadratureRule& rule) {
    if (!(spec.var_eta > 0.0) || !(spec.var_xi > 0.0) || !(std::fabs(spec.rho) < 1.0)) {
        throw decomposition_error("between-study covariance not positive definite");
    }
    const double det = spec.var_eta * spec.var_xi * (1.0 - spec.rho * spec.rho);
    const double si11 = spec.var_xi / det;
    const double si22 = spec.var_eta / det;
    const double si12 = -spec.rho * std::sqrt(spec.var_eta * spec.var_xi) / det;
    const double log_norm = -0.5 * std::log(det) - 1.8378770664093454836;  // log 2pi

    auto log_h = [&](double eta, double xi) {
        double log_se, log_nse, log_sp, log_nsp;
        log_probs(link, eta, log_se, log_nse);
        log_probs(link, xi, log_sp, log_nsp);
        double v = 0.0;
        if (s.tp > 0) v += static_cast<double>(s.tp) * log_se;
        if (s.fn > 0) v += static_cast<double>(s.fn) * log_nse;
        if (s.fp > 0) v += static_cast<double>(s.fp) * log_nsp;
        if (s.tn > 0) v += static_cast<double>(s.tn) * log_sp;
        const double de = eta - spec.mean_eta, dx = xi - spec.mean_xi;
        return v - 0.5 * (si11 * de * de + 2.0 * si12 * de * dx + si22 * dx * dx) + log_norm;
    };

    // damped Newton for the mode, starting from the between-study mean
    double eta = spec.mean_eta, xi = spec.mean_xi;
    double cur = log_h(eta, xi);
    double a11 = si11, a22 = si22;
    const double a12 = si12;
    for (int iter = 0; iter < 200; ++iter) {
        const auto me = binom_margin_log(static_cast<double>(s.tp),
                                         static_cast<double>(s.fn), link, eta);
        const auto mx = binom_margin_log(static_cast<double>(s.tn),
                                         static_cast<double>(s.fp), link, xi);
        const double de = eta - spec.mean_eta, dx = xi - spec.mean_xi;
        const double g1 = me.d1 - (si11 * de + si12 * dx);
        const double g2 = mx.d1 - (si12 * de + si22 * dx);
        a11 = -me.d2 + si11;
        a22 = -mx.d2 + si22;
        double ad = a11 * a22 - a12 * a12;
        if (!(a11 > 0.0) || !(ad > 0.0)) {  // kernel locally convex; fall back to prior curvature
            a11 = si11;
            a22 = si22;
            ad = a11 * a22 - a12 * a12;
        }
        const double step_e = (a22 * g1 - a12 * g2) / ad;
        const double step_x = (a11 * g2 - a12 * g1) / ad;
        double scale = 1.0;
        double next_eta = eta + step_e, next_xi = xi + step_x;
        double next = log_h(next_eta, next_xi);
        int halvings = 0;
        while (!(next >= cur) && halvings++ < 50) {
            scale *= 0.5;
            next_eta = eta + scale * step_e;
            next_xi = xi + scale * step_x;
            next = log_h(next_eta, next_xi);
        }
        const double moved = std::fabs(next_eta - eta) + std::fabs(next_xi - xi);
        eta = next_eta;
        xi = next_xi;
        cur = next;
        if (moved < 1e-12 * (1.0 + std::fabs(eta) + std::fabs(xi))) break;
    }

    // Cholesky of the curvature inverse at the mode
    {
        const auto me = binom_margin_log(static_cast<double>(s.tp),
                                         static_cast<double>(s.fn), link, eta);
        const auto mx = binom_margin_log(static_cast<double>(s.tn),
                                         static_cast<double>(s.fp), link, xi);
        a11 = -me.d2 + si11;
        a22 = -mx.d2 + si22;
        if (!(a11 > 0.0) || !(a11 * a22 - a12 * a12 > 0.0)) {
            a11 = si11;
            a22 = si22;
        }
    }
    const double ad = a11 * a22 - a12 * a12;
    const double c11 = a22 / ad, c22 = a11 / ad, c12 = -a12 / ad;
    const double l11 = std::sqrt(c11);
    const double l21 = c12 / l11;
    const double l22 = std::sqrt(c22 - l21 * l21);

    const double sqrt2 = 1.4142135623730950488;
    const std::size_t m = rule.nodes.size();
    std::vector<double> log_w_z2(m);
    for (std::size_t j = 0; j < m; ++j) {
        log_w_z2[j] = std::log(rule.weights[j]) + rule.nodes[j] * rule.nodes[j];
    }
    double max_term = neg_inf;
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double zj = rule.nodes[j];
        const double eta_j = eta + sqrt2 * l11 * zj;
        const double xi_j = xi + sqrt2 * l21 * zj;
        for (std::size_t k = 0; k < m; ++k) {
            const double t =
                log_w_z2[j] + log_w_z2[k] + log_h(eta_j, xi_j + sqrt2 * l22 * rule.nodes[k]);
            if (t == neg_inf) continue;
            if (t > max_term) {
                sum = sum * std::exp(max_term - t) + 1.0;
                max_term = t;
            } else {
                sum += std::exp(t - max_term);
            }
        }
    }
    if (sum == 0.0) return neg_inf;
    return 0.6931471805599453094 /* log 2 */ + std::log(l11) + std::log(l22) + max_term +
           std::log(sum);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Approximate normal-normal model
// ---------------------------------------------------------------------------

// Per-study contribution: log phi2((eta_hat, xi_hat); (eta_bar, xi_bar),
// Gamma_i + Sigma) with Gamma_i the diagonal delta-method covariance.
inline double per_study_loglik_approx(const AccuracyParams& theta, const StudyRecord& study,
                                      Link link, Correction correction) {
    theta.validate();
    const auto t = transform_estimates(study, link, correction);
    const double cov = theta.rho * std::sqrt(theta.var_eta * theta.var_xi);
    return detail::log_bivariate_normal(t.eta_hat - theta.eta_bar, t.xi_hat - theta.xi_bar,
                                        t.var_eta + theta.var_eta, cov,
                                        t.var_xi + theta.var_xi);
}

inline double loglik_approx(const AccuracyParams& theta, const MetaDataset& ds, Link link,
                            Correction correction = Correction::half_cell) {
    double total = 0.0;
    for (const auto& s : ds.studies) {
        total += per_study_loglik_approx(theta, s, link, correction);
    }
    return total;
}

// ---------------------------------------------------------------------------
// Hierarchical MTM
// ---------------------------------------------------------------------------

// Accuracy part of one study: log of the binomial kernel integrated against
// the between-study bivariate normal. Handles zero cells natively.
inline double per_study_loglik_mtm(const AccuracyParams& theta, const StudyRecord& study,
                                   Link link, const QuadratureRule& rule) {
    theta.validate();
    return detail::mtm_study_log_integral(study, link, theta.between_spec(), rule);
}

// l_MTM,2: the diagnostic-accuracy part.
inline double loglik_mtm_accuracy(const AccuracyParams& theta, const MetaDataset& ds,
                                  Link link, const QuadratureRule& rule) {
    double total = 0.0;
    for (const auto& s : ds.studies) {
        total += per_study_loglik_mtm(theta, s, link, rule);
    }
    return total;
}

// l_MTM,1: the prevalence part, sum_i [P_i log pi_i + N_i log(1 - pi_i)].
inline double loglik_mtm_prevalence(const PrevalenceParams& pi, const MetaDataset& ds) {
    pi.validate(ds.size());
    double total = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& s = ds.studies[i];
        total += static_cast<double>(s.positives()) * std::log(pi.pi[i]) +
                 static_cast<double>(s.negatives()) * std::log1p(-pi.pi[i]);
    }
    return total;
}

// Full MTM log-likelihood, evaluated study by study in a single pass. Equals
// loglik_mtm_prevalence + loglik_mtm_accuracy by parameter separability.
inline double loglik_mtm_full(const PrevalenceParams& pi, const AccuracyParams& theta,
                              const MetaDataset& ds, Link link, const QuadratureRule& rule) {
    pi.validate(ds.size());
    double total = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& s = ds.studies[i];
        total += static_cast<double>(s.positives()) * std::log(pi.pi[i]) +
                 static_cast<double>(s.negatives()) * std::log1p(-pi.pi[i]) +
                 per_study_loglik_mtm(theta, s, link, rule);
    }
    return total;
}

// ---------------------------------------------------------------------------
// Fixed-effects MTM (common SE, SP across studies)
// ---------------------------------------------------------------------------

inline double per_study_loglik_mtm_fixed(double se, double sp, double pi,
                                         const StudyRecord& s) {
    if (!(se > 0.0) || !(se < 1.0) || !(sp > 0.0) || !(sp < 1.0) || !(pi > 0.0) ||
        !(pi < 1.0)) {
        throw std::invalid_argument("loglik_mtm_fixed: se, sp, pi must lie in (0,1)");
    }
    // Tree category probabilities pi*se, pi*(1-se), (1-pi)*(1-sp), (1-pi)*sp.
    double v = 0.0;
    if (s.tp > 0) v += static_cast<double>(s.tp) * std::log(pi * se);
    if (s.fn > 0) v += static_cast<double>(s.fn) * std::log(pi * (1.0 - se));
    if (s.fp > 0) v += static_cast<double>(s.fp) * std::log((1.0 - pi) * (1.0 - sp));
    if (s.tn > 0) v += static_cast<double>(s.tn) * std::log((1.0 - pi) * sp);
    return v;
}

inline double loglik_mtm_fixed(double se, double sp, const PrevalenceParams& pi,
                               const MetaDataset& ds) {
    pi.validate(ds.size());
    double total = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        total += per_study_loglik_mtm_fixed(se, sp, pi.pi[i], ds.studies[i]);
    }
    return total;
}

// ---------------------------------------------------------------------------
// Per-study dispatcher (sandwich scores need single-study contributions)
// ---------------------------------------------------------------------------

enum class ModelKind { approx, mtm, mtm_fixed };

inline const char* model_name(ModelKind m) {
    switch (m) {
        case ModelKind::approx:    return "approx";
        case ModelKind::mtm:       return "mtm";
        case ModelKind::mtm_fixed: return "mtm-fixed";
    }
    return "?";
}

inline ModelKind model_from_name(const std::string& name) {
    if (name == "approx") return ModelKind::approx;
    if (name == "mtm") return ModelKind::mtm;
    if (name == "mtm-fixed" || name == "mtm_fixed") return ModelKind::mtm_fixed;
    throw std::invalid_argument("unknown model: " + name);
}

// The i-th summand of the corresponding total log-likelihood. For mtm-fixed
// the study prevalence is profiled at its closed-form estimate P/n, and
// (se, sp) are read off theta through the link.
inline double per_study_loglik(ModelKind kind, const AccuracyParams& theta,
                               const StudyRecord& study, Link link,
                               const QuadratureRule& rule,
                               Correction correction = Correction::half_cell) {
    switch (kind) {
        case ModelKind::approx:
            return per_study_loglik_approx(theta, study, link, correction);
        case ModelKind::mtm:
            return per_study_loglik_mtm(theta, study, link, rule);
        case ModelKind::mtm_fixed: {
            const double pi_hat = static_cast<double>(study.positives()) /
                                  static_cast<double>(study.total());
            return per_study_loglik_mtm_fixed(link_inverse(link, theta.eta_bar),
                                              link_inverse(link, theta.xi_bar), pi_hat,
                                              study);
        }
    }
    throw std::logic_error("per_study_loglik: unreachable");
}

}  // namespace diagmeta
