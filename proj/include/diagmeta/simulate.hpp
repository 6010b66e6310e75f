#pragma once

// Monte-Carlo engine: two-stage study generation (study sizes uniform on
// [50, 200], diseased counts binomial at the scenario prevalence, then test
// results binomial at the inverse-link accuracies drawn per study from the
// between-study normal), scenario grids, and the comparison metrics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "core_data.hpp"
#include "inference.hpp"
#include "likelihoods.hpp"
#include "rng.hpp"

namespace diagmeta {

class generation_error : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Scenario {
    int n_studies = 10;
    double prevalence = 0.20;
    double se_true = 0.9;
    double sp_true = 0.85;
    double rho = 0.2;
    double var_eta_true = 1.0;
    double var_xi_true = 1.0;
    Link link = Link::logit;
    int size_min = 50;
    int size_max = 200;

    void validate() const {
        if (n_studies < 2) throw std::invalid_argument("scenario: need at least 2 studies");
        if (!(prevalence > 0.0) || !(prevalence < 1.0)) {
            throw std::invalid_argument("scenario: prevalence must lie in (0,1)");
        }
        if (!(se_true > 0.0) || !(se_true < 1.0) || !(sp_true > 0.0) || !(sp_true < 1.0)) {
            throw std::invalid_argument("scenario: se/sp must lie in (0,1)");
        }
        // zero variances are allowed for generation (the draws collapse to
        // the means); fitting such data will flag a boundary estimate
        if (!(var_eta_true >= 0.0) || !(var_xi_true >= 0.0) || !(std::fabs(rho) < 1.0)) {
            throw std::invalid_argument("scenario: implied covariance must be PD");
        }
        if (size_min < 1 || size_max < size_min) {
            throw std::invalid_argument("scenario: bad study size range");
        }
    }

    double eta_true() const { return link_apply(link, se_true); }
    double xi_true() const { return link_apply(link, sp_true); }
};

// Binomial draw by CDF inversion; deterministic given the stream. Uses the
// complement when p > 1/2 so the walk starts from a representable pmf(0).
inline long long binomial_draw(SplitMix64& rng, long long n, double p) {
    if (n < 0 || !(p >= 0.0) || !(p <= 1.0)) {
        throw std::invalid_argument("binomial_draw: bad arguments");
    }
    if (n == 0 || p == 0.0) return 0;
    if (p == 1.0) return n;
    const bool flip = p > 0.5;
    const double q = flip ? 1.0 - p : p;
    const double u = rng.next_double();
    const double ratio = q / (1.0 - q);
    double pmf = std::exp(static_cast<double>(n) * std::log1p(-q));
    double cdf = pmf;
    long long kk = 0;
    while (u > cdf && kk < n) {
        pmf *= ratio * static_cast<double>(n - kk) / static_cast<double>(kk + 1);
        cdf += pmf;
        ++kk;
    }
    return flip ? n - kk : kk;
}

// One study from a drawn pair of transformed accuracies. Degenerate margins
// (no diseased or no nondiseased subjects) redraw the study size and the
// diseased count up to 100 times, then give up.
inline StudyRecord generate_study(const Scenario& sc, double eta_i, double xi_i,
                                  SplitMix64& rng) {
    sc.validate();
    const double se = link_inverse(sc.link, eta_i);
    const double sp = link_inverse(sc.link, xi_i);
    for (int attempt = 0; attempt < 100; ++attempt) {
        const long long n_i = rng.next_int(sc.size_min, sc.size_max);
        const long long diseased = binomial_draw(rng, n_i, sc.prevalence);
        if (diseased == 0 || diseased == n_i) continue;
        const long long healthy = n_i - diseased;
        const long long tp = binomial_draw(rng, diseased, se);
        const long long tn = binomial_draw(rng, healthy, sp);
        StudyRecord s;
        s.tp = tp;
        s.fn = diseased - tp;
        s.tn = tn;
        s.fp = healthy - tn;
        return s;
    }
    throw generation_error("generate_study: margins degenerate after 100 redraws");
}

inline MetaDataset generate_meta(const Scenario& sc, SplitMix64& rng) {
    sc.validate();
    const double mu_eta = sc.eta_true();
    const double mu_xi = sc.xi_true();
    const double s_eta = std::sqrt(sc.var_eta_true);
    const double s_xi = std::sqrt(sc.var_xi_true);
    const double rho_c = std::sqrt(1.0 - sc.rho * sc.rho);

    MetaDataset ds;
    ds.studies.reserve(sc.n_studies);
    for (int i = 0; i < sc.n_studies; ++i) {
        const double z1 = rng.next_normal();
        const double z2 = rng.next_normal();
        const double eta_i = mu_eta + s_eta * z1;
        const double xi_i = mu_xi + s_xi * (sc.rho * z1 + rho_c * z2);
        StudyRecord s = generate_study(sc, eta_i, xi_i, rng);
        s.id = std::to_string(i + 1);
        ds.studies.push_back(std::move(s));
    }
    return ds;
}

// Parameter order everywhere: eta_bar, xi_bar, var_eta, var_xi, rho.
struct ParamStats {
    double bias = 0.0;
    double sd = 0.0;
    double avg_se = 0.0;
};

struct MethodSummary {
    ModelKind method = ModelKind::mtm;
    int requested = 0;
    int used = 0;
    int fit_failures = 0;
    int gen_failures = 0;
    std::array<ParamStats, 5> params{};
    double coverage_eta = 0.0;
    double coverage_eta_mc_se = 0.0;
    double coverage_xi = 0.0;
    double coverage_xi_mc_se = 0.0;
    double failure_rate = 0.0;
};

struct SimulationSummary {
    Scenario scenario;
    std::vector<MethodSummary> methods;
};

struct SimOptions {
    int gh_nodes = 21;
    Correction correction = Correction::half_cell;
    double level = 0.95;
    unsigned threads = 0;  // 0: DIAGMETA_THREADS env, else hardware
};

namespace detail {

struct ReplicateOutcome {
    bool gen_failed = false;
    std::vector<int> fit_ok;                   // per method
    std::vector<std::array<double, 5>> est;    // per method
    std::vector<std::array<double, 5>> se;     // per method
    std::vector<int> hit_eta, hit_xi;          // per method
};

inline unsigned resolve_threads(unsigned requested, int replicates) {
    unsigned t = requested;
    if (t == 0) {
        if (const char* env = std::getenv("DIAGMETA_THREADS")) {
            const long v = std::strtol(env, nullptr, 10);
            if (v > 0) t = static_cast<unsigned>(v);
        }
    }
    if (t == 0) t = std::max(1u, std::thread::hardware_concurrency());
    return std::min<unsigned>(t, static_cast<unsigned>(std::max(1, replicates)));
}

}  // namespace detail

// Runs `replicates` independent draws of the scenario, fits every requested
// method, and aggregates bias / sd / average SE / Wald coverage / failure
// rates over the converged fits. Per-replicate RNG substreams make the result
// identical for any thread count.
inline SimulationSummary run_scenario(const Scenario& sc, int replicates,
                                      const std::vector<ModelKind>& methods,
                                      std::uint64_t seed, const SimOptions& opt = {}) {
    sc.validate();
    if (replicates < 1) throw std::invalid_argument("run_scenario: replicates must be >= 1");
    for (ModelKind m : methods) {
        if (m == ModelKind::mtm_fixed) {
            throw std::invalid_argument("run_scenario: methods are approx and mtm");
        }
    }

    const std::array<double, 5> truth = {sc.eta_true(), sc.xi_true(), sc.var_eta_true,
                                         sc.var_xi_true, sc.rho};
    std::vector<detail::ReplicateOutcome> outcomes(replicates);

    auto worker = [&](int lo, int hi) {
        for (int r = lo; r < hi; ++r) {
            detail::ReplicateOutcome& out = outcomes[r];
            out.fit_ok.assign(methods.size(), 0);
            out.est.assign(methods.size(), {});
            out.se.assign(methods.size(), {});
            out.hit_eta.assign(methods.size(), 0);
            out.hit_xi.assign(methods.size(), 0);

            SplitMix64 rng(substream_seed(seed, static_cast<std::uint64_t>(r)));
            MetaDataset ds;
            try {
                ds = generate_meta(sc, rng);
            } catch (const generation_error&) {
                out.gen_failed = true;
                continue;
            }
            for (std::size_t m = 0; m < methods.size(); ++m) {
                FitOptions fopt;
                fopt.link = sc.link;
                fopt.gh_nodes = opt.gh_nodes;
                fopt.correction = opt.correction;
                fopt.level = opt.level;
                fopt.seed = substream_seed(seed, static_cast<std::uint64_t>(r) * 131 + m + 1);
                FitResult fit;
                try {
                    fit = fit_model(ds, methods[m], fopt);
                } catch (const std::exception&) {
                    continue;  // counted as a fit failure
                }
                if (!fit.converged()) continue;
                out.fit_ok[m] = 1;
                out.est[m] = {fit.theta.eta_bar, fit.theta.xi_bar, fit.theta.var_eta,
                              fit.theta.var_xi, fit.theta.rho};
                for (std::size_t p = 0; p < 5; ++p) out.se[m][p] = fit.se_headline(p);
                if (out.se[m][0] > 0.0) {
                    const auto ci = wald_ci(fit.theta.eta_bar, out.se[m][0], opt.level);
                    out.hit_eta[m] = (truth[0] >= ci.low && truth[0] <= ci.high) ? 1 : 0;
                }
                if (out.se[m][1] > 0.0) {
                    const auto ci = wald_ci(fit.theta.xi_bar, out.se[m][1], opt.level);
                    out.hit_xi[m] = (truth[1] >= ci.low && truth[1] <= ci.high) ? 1 : 0;
                }
            }
        }
    };

    const unsigned n_threads = detail::resolve_threads(opt.threads, replicates);
    if (n_threads <= 1) {
        worker(0, replicates);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (replicates + static_cast<int>(n_threads) - 1) /
                          static_cast<int>(n_threads);
        for (unsigned t = 0; t < n_threads; ++t) {
            const int lo = static_cast<int>(t) * chunk;
            const int hi = std::min(replicates, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(worker, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    // fixed-order reduction, independent of the thread layout
    SimulationSummary summary;
    summary.scenario = sc;
    for (std::size_t m = 0; m < methods.size(); ++m) {
        MethodSummary ms;
        ms.method = methods[m];
        ms.requested = replicates;
        std::array<double, 5> sum_est{}, sum_se{};
        long hits_eta = 0, hits_xi = 0;
        for (int r = 0; r < replicates; ++r) {
            const auto& out = outcomes[r];
            if (out.gen_failed) {
                ++ms.gen_failures;
                continue;
            }
            if (!out.fit_ok[m]) {
                ++ms.fit_failures;
                continue;
            }
            ++ms.used;
            for (std::size_t p = 0; p < 5; ++p) {
                sum_est[p] += out.est[m][p];
                sum_se[p] += out.se[m][p];
            }
            hits_eta += out.hit_eta[m];
            hits_xi += out.hit_xi[m];
        }
        if (ms.used > 0) {
            const double inv = 1.0 / ms.used;
            std::array<double, 5> mean{};
            for (std::size_t p = 0; p < 5; ++p) mean[p] = sum_est[p] * inv;
            std::array<double, 5> ss{};
            for (int r = 0; r < replicates; ++r) {
                const auto& out = outcomes[r];
                if (out.gen_failed || !out.fit_ok[m]) continue;
                for (std::size_t p = 0; p < 5; ++p) {
                    const double d = out.est[m][p] - mean[p];
                    ss[p] += d * d;
                }
            }
            for (std::size_t p = 0; p < 5; ++p) {
                ms.params[p].bias = mean[p] - truth[p];
                ms.params[p].sd = ms.used > 1 ? std::sqrt(ss[p] / (ms.used - 1)) : 0.0;
                ms.params[p].avg_se = sum_se[p] * inv;
            }
            ms.coverage_eta = static_cast<double>(hits_eta) * inv;
            ms.coverage_xi = static_cast<double>(hits_xi) * inv;
            ms.coverage_eta_mc_se =
                std::sqrt(ms.coverage_eta * (1.0 - ms.coverage_eta) * inv);
            ms.coverage_xi_mc_se = std::sqrt(ms.coverage_xi * (1.0 - ms.coverage_xi) * inv);
        }
        ms.failure_rate =
            static_cast<double>(replicates - ms.used) / static_cast<double>(replicates);
        summary.methods.push_back(ms);
    }
    return summary;
}

// The full factor grid of the reported study: n x prevalence x rho x link x
// accuracy level, at the default true between-study variances.
inline std::vector<Scenario> paper_grid() {
    std::vector<Scenario> grid;
    for (int n : {10, 25}) {
        for (double prev : {0.20, 0.35}) {
            for (double rho : {0.2, 0.6, 0.8}) {
                for (Link link : {Link::logit, Link::probit, Link::cloglog}) {
                    for (auto acc : {std::pair{0.90, 0.85}, std::pair{0.80, 0.92}}) {
                        Scenario sc;
                        sc.n_studies = n;
                        sc.prevalence = prev;
                        sc.rho = rho;
                        sc.link = link;
                        sc.se_true = acc.first;
                        sc.sp_true = acc.second;
                        grid.push_back(sc);
                    }
                }
            }
        }
    }
    return grid;
}

}  // namespace diagmeta
