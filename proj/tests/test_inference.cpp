#include <doctest.h>

#include <chrono>
#include <cmath>

#include "diagmeta/inference.hpp"
#include "diagmeta/report.hpp"
#include "diagmeta/simulate.hpp"

using namespace diagmeta;

namespace {

MetaDataset delirium() {
    return parse_dataset(read_file(std::string(DIAGMETA_SOURCE_DIR) + "/data/delirium.csv"));
}

FitResult fit_shim(Link link, const AccuracyParams& theta, const Matrix& cov2,
                   bool sandwich_headline = true) {
    FitResult fit;
    fit.link = link;
    fit.theta = theta;
    fit.cov_model = Matrix(5, 5);
    fit.cov_sandwich = Matrix(5, 5);
    for (std::size_t i = 0; i < cov2.rows; ++i) {
        for (std::size_t j = 0; j < cov2.cols; ++j) {
            fit.cov_model(i, j) = cov2(i, j);
            fit.cov_sandwich(i, j) = cov2(i, j);
        }
    }
    fit.headline_sandwich = sandwich_headline;
    return fit;
}

}  // namespace

TEST_CASE("wald_ci: worked value, degenerate level, symmetry") {
    const auto ci = wald_ci(1.44, 0.25, 0.95);
    CHECK(std::fabs(ci.low - 0.95) < 5e-3);
    CHECK(std::fabs(ci.high - 1.93) < 5e-3);

    const auto tiny = wald_ci(2.0, 1.0, 1e-12);
    CHECK(std::fabs(tiny.low - 2.0) < 1e-11);
    CHECK(std::fabs(tiny.high - 2.0) < 1e-11);

    SplitMix64 rng(3);
    for (int rep = 0; rep < 25; ++rep) {
        const double est = 4.0 * rng.next_double() - 2.0;
        const double se = 0.01 + rng.next_double();
        const double level = 0.5 + 0.49 * rng.next_double();
        const auto c = wald_ci(est, se, level);
        CHECK(c.low < est);
        CHECK(c.high > est);
        CHECK(std::fabs((c.high - est) - (est - c.low)) < 1e-12);
    }

    CHECK_THROWS_AS(wald_ci(1.0, 0.0, 0.95), std::domain_error);
    CHECK_THROWS_AS(wald_ci(1.0, 1.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(wald_ci(1.0, 1.0, 1.0), std::domain_error);
}

TEST_CASE("pooled accuracy: delta method at zero, arithmetic identity") {
    Matrix cov2(2, 2);
    cov2(0, 0) = 0.04;  // SE(eta_bar) = 0.2
    cov2(1, 1) = 0.09;
    auto fit = fit_shim(Link::logit, {0.0, 1.0, 0.5, 0.5, 0.0}, cov2);
    const auto acc = pooled_accuracy(fit);
    CHECK(acc.se == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(acc.se_se == doctest::Approx(0.2 / 4.0).epsilon(1e-12));

    // the reported sensitivity SE is SE(eta_bar) * se * (1 - se) for logit
    fit.theta.eta_bar = 1.44;
    const auto acc2 = pooled_accuracy(fit);
    const double p = link_inverse(Link::logit, 1.44);
    CHECK(acc2.se_se == doctest::Approx(0.2 * p * (1.0 - p)).epsilon(1e-12));
}

TEST_CASE("sroc curve: through the summary point, flat when rho is zero, stated slope") {
    Matrix cov2(2, 2);
    cov2(0, 0) = 0.04;
    cov2(1, 1) = 0.04;
    const AccuracyParams th{1.2, 2.0, 0.9, 0.5, -0.4};
    auto fit = fit_shim(Link::logit, th, cov2);

    const double sp_at_mean = link_inverse(Link::logit, th.xi_bar);
    auto curve = sroc_curve(fit, {0.2, sp_at_mean, 0.9});
    bool found = false;
    for (const auto& pt : curve) {
        if (std::fabs(pt.fpr - (1.0 - sp_at_mean)) < 1e-12) {
            CHECK(pt.sens ==
                  doctest::Approx(link_inverse(Link::logit, th.eta_bar)).epsilon(1e-12));
            found = true;
        }
    }
    CHECK(found);

    auto flat_fit = fit_shim(Link::logit, {1.2, 2.0, 0.9, 0.5, 0.0}, cov2);
    const auto flat = sroc_curve(flat_fit, {0.1, 0.3, 0.5, 0.7, 0.9});
    for (const auto& pt : flat) {
        CHECK(pt.sens == doctest::Approx(link_inverse(Link::logit, 1.2)).epsilon(1e-12));
    }

    // transformed-scale slope from emitted points equals rho sigma_eta / sigma_xi
    std::vector<double> grid;
    for (int i = 1; i <= 99; ++i) grid.push_back(i / 100.0);
    const auto dense = sroc_curve(fit, grid);
    const double want_slope = th.rho * std::sqrt(th.var_eta / th.var_xi);
    for (std::size_t i = 12; i + 12 < dense.size(); i += 10) {
        const double e1 = link_apply(Link::logit, dense[i - 1].sens);
        const double e2 = link_apply(Link::logit, dense[i + 1].sens);
        const double x1 = link_apply(Link::logit, 1.0 - dense[i - 1].fpr);
        const double x2 = link_apply(Link::logit, 1.0 - dense[i + 1].fpr);
        CHECK(std::fabs((e2 - e1) / (x2 - x1) - want_slope) < 1e-6);
    }

    // monotone fpr axis
    for (std::size_t i = 1; i < dense.size(); ++i) CHECK(dense[i].fpr > dense[i - 1].fpr);

    auto degenerate = fit_shim(Link::logit, {1.2, 2.0, 0.9, 0.0, 0.0}, cov2);
    CHECK_THROWS_AS(sroc_curve(degenerate, {0.5}), degenerate_curve);
    CHECK_THROWS_AS(sroc_curve(fit, {0.0}), std::domain_error);
}

TEST_CASE("confidence region: collapse, alignment, quadratic form on the boundary") {
    Matrix cov2(2, 2);
    cov2(0, 0) = 0.0625;
    cov2(1, 1) = 0.04;
    const AccuracyParams th{1.44, 3.67, 1.0, 1.0, 0.0};
    auto fit = fit_shim(Link::logit, th, cov2);

    // chi-square(2) quantile at 0.95 is exactly -2 log 0.05
    CHECK(std::fabs(-2.0 * std::log(0.05) - 5.991464547) < 1e-8);

    const auto tiny = confidence_region(fit, 1e-12, 64);
    for (const auto& pt : tiny) {
        CHECK(std::fabs(pt.sens - link_inverse(Link::logit, th.eta_bar)) < 1e-6);
        CHECK(std::fabs(pt.fpr - (1.0 - link_inverse(Link::logit, th.xi_bar))) < 1e-6);
    }

    const auto region = confidence_region(fit, 0.95, 128);
    REQUIRE(region.size() == 129);
    CHECK(region.front().fpr == doctest::Approx(region.back().fpr).epsilon(1e-14));
    CHECK(region.front().sens == doctest::Approx(region.back().sens).epsilon(1e-14));

    // every point satisfies the quadratic form = chi-square quantile on the
    // transformed scale (diagonal covariance, so the form is elementwise)
    const double q = 5.991464547;
    double max_eta = -1e9, max_xi = -1e9;
    for (const auto& pt : region) {
        const double eta = link_apply(Link::logit, pt.sens);
        const double xi = link_apply(Link::logit, 1.0 - pt.fpr);
        const double de = eta - th.eta_bar, dx = xi - th.xi_bar;
        const double form = de * de / cov2(0, 0) + dx * dx / cov2(1, 1);
        CHECK(std::fabs(form - q) < 1e-8);
        max_eta = std::max(max_eta, de);
        max_xi = std::max(max_xi, dx);
    }
    // axis alignment for a diagonal covariance: the extremes reach the full
    // principal radii
    CHECK(max_eta == doctest::Approx(std::sqrt(q * cov2(0, 0))).epsilon(1e-6));
    CHECK(max_xi == doctest::Approx(std::sqrt(q * cov2(1, 1))).epsilon(1e-6));

    Matrix bad(2, 2);
    bad(0, 0) = 1.0;
    bad(0, 1) = bad(1, 0) = 2.0;
    bad(1, 1) = 1.0;
    auto bad_fit = fit_shim(Link::logit, th, bad);
    CHECK_THROWS_AS(confidence_region(bad_fit, 0.95), decomposition_error);
    CHECK_THROWS_AS(confidence_region(fit, 0.0), std::domain_error);
}

TEST_CASE("fit_model: delirium point estimates (regression pins)") {
    const auto ds = delirium();

    const auto t0 = std::chrono::steady_clock::now();
    const auto mtm = fit_model(ds, ModelKind::mtm);
    const auto t1 = std::chrono::steady_clock::now();
    CHECK(std::chrono::duration<double>(t1 - t0).count() < 10.0);
    REQUIRE(mtm.converged());
    CHECK(std::fabs(mtm.theta.eta_bar - 1.4347) < 2e-3);
    CHECK(std::fabs(mtm.theta.xi_bar - 3.8673) < 2e-3);
    CHECK(std::fabs(mtm.theta.var_eta - 1.1699) < 2e-3);
    CHECK(std::fabs(mtm.theta.var_xi - 2.0718) < 4e-3);
    CHECK(std::fabs(mtm.theta.rho - (-0.0200)) < 2e-3);
    CHECK(mtm.n_params_aic == 25);
    CHECK(mtm.headline_sandwich);
    REQUIRE(mtm.prevalences.size() == 20);
    CHECK(mtm.prevalences[0].pi_hat == doctest::Approx(24.0 / 71.0).epsilon(1e-14));

    // reported sandwich SE for eta_bar is about 0.25
    CHECK(std::fabs(mtm.se_sandwich(0) - 0.25) < 0.02);

    const auto acc = pooled_accuracy(mtm);
    CHECK(std::fabs(acc.se - 0.81) < 0.01);
    CHECK(std::fabs(acc.sp - 0.98) < 0.01);
    CHECK(std::fabs(acc.se_se - 0.04) < 0.005);
    CHECK(std::fabs(acc.se_sp - 0.01) < 0.005);

    const auto approx = fit_model(ds, ModelKind::approx);
    REQUIRE(approx.converged());
    CHECK_FALSE(approx.headline_sandwich);
    CHECK(std::fabs(approx.theta.eta_bar - 1.2990) < 2e-3);
    CHECK(std::fabs(approx.theta.xi_bar - 3.2131) < 2e-3);
    CHECK(std::fabs(approx.theta.var_eta - 0.9796) < 2e-3);
    CHECK(std::fabs(approx.theta.var_xi - 1.0551) < 2e-3);
    CHECK(std::fabs(approx.theta.rho - (-0.3357)) < 2e-3);
    CHECK(approx.prevalences.empty());
    CHECK(approx.n_params_aic == 5);

    // loglik at the optimum should dominate the value at a nearby point
    const AccuracyParams nearby{1.30, 3.26, 1.06, 1.06, -0.21};
    CHECK(loglik_approx(approx.theta, ds, Link::logit) >
          loglik_approx(nearby, ds, Link::logit));
}

TEST_CASE("fit_model: mtm-fixed recovers the pooled-count estimates exactly") {
    const auto ds = delirium();
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (const auto& s : ds.studies) {
        tp += s.tp;
        fp += s.fp;
        fn += s.fn;
        tn += s.tn;
    }
    const auto fit = fit_model(ds, ModelKind::mtm_fixed);
    REQUIRE(fit.converged());
    const auto acc = pooled_accuracy(fit);
    // the pooled-count MLE is exact for this likelihood
    CHECK(std::fabs(acc.se - tp / (tp + fn)) < 1e-5);
    CHECK(std::fabs(acc.sp - tn / (tn + fp)) < 1e-5);
    CHECK(fit.n_params_aic == 22);
    REQUIRE(fit.prevalences.size() == 20);
}

TEST_CASE("fit_model: reparameterization invariance of the maximized value") {
    const auto ds = delirium();
    FitOptions a;
    FitOptions b;
    b.seed = 1234567;  // different jitter stream; the cascade should not need it
    const auto fa = fit_model(ds, ModelKind::approx, a);
    const auto fb = fit_model(ds, ModelKind::approx, b);
    CHECK(std::fabs(fa.loglik - fb.loglik) < 1e-6);
}

TEST_CASE("fit_model: degenerate dataset drives variances to zero and is flagged") {
    MetaDataset ds;
    for (int i = 0; i < 10; ++i) {
        StudyRecord s;
        s.id = std::to_string(i + 1);
        s.tp = 30;
        s.fp = 5;
        s.fn = 10;
        s.tn = 55;
        ds.studies.push_back(s);
    }
    const auto fit = fit_model(ds, ModelKind::approx);
    CHECK(fit.theta.var_eta <= 1e-4);
    CHECK(fit.theta.var_xi <= 1e-4);
    CHECK(fit.failure == FailureKind::boundary_correlation);
    CHECK_FALSE(fit.converged());
    CHECK(fit.opt.status == OptStatus::boundary);
}

TEST_CASE("fit_model never throws on an unevaluable objective") {
    // zero cells without correction make every transform non-finite
    MetaDataset ds = parse_dataset("study,tp,fp,fn,tn\n1,5,0,1,7\n2,6,1,0,9\n");
    FitOptions opt;
    opt.correction = Correction::none;
    const auto fit = fit_model(ds, ModelKind::approx, opt);
    CHECK(fit.failure == FailureKind::non_convergence);
    CHECK_FALSE(fit.converged());
    CHECK(fit.loglik == -std::numeric_limits<double>::infinity());
}

TEST_CASE("failure taxonomy is exhaustive and exclusive") {
    const auto ds = delirium();
    const auto good = fit_model(ds, ModelKind::mtm);
    CHECK((good.failure == FailureKind::none || good.failure == FailureKind::non_convergence ||
           good.failure == FailureKind::boundary_correlation ||
           good.failure == FailureKind::non_pd_covariance));
    CHECK(good.converged() == (good.failure == FailureKind::none));
}

TEST_CASE("sandwich: identical studies give identical score contributions") {
    MetaDataset ds;
    for (int i = 0; i < 6; ++i) {
        StudyRecord s;
        s.id = std::to_string(i + 1);
        s.tp = 20;
        s.fp = 4;
        s.fn = 7;
        s.tn = 40;
        ds.studies.push_back(s);
    }
    const auto rule = gauss_hermite_rule(21);
    const std::vector<double> u = {1.0, 2.0, std::log(0.6), std::log(0.7), 0.1};
    std::vector<std::vector<double>> scores;
    for (const auto& s : ds.studies) {
        Objective f = [&](const std::vector<double>& v) {
            return per_study_loglik(ModelKind::mtm,
                                    UnconstrainedParams{{v[0], v[1], v[2], v[3], v[4]}}
                                        .to_params(),
                                    s, Link::logit, rule, Correction::half_cell);
        };
        scores.push_back(numeric_gradient(f, u, 1e-5));
    }
    for (std::size_t i = 1; i < scores.size(); ++i) {
        for (int j = 0; j < 5; ++j) {
            CHECK(scores[i][j] == doctest::Approx(scores[0][j]).epsilon(1e-10));
        }
    }
}

TEST_CASE("sandwich wrapper matches the covariance stored by fit_model") {
    const auto ds = delirium();
    const auto fit = fit_model(ds, ModelKind::approx);
    REQUIRE(fit.converged());
    const auto again = sandwich_covariance(fit, ds);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
            CHECK(again(i, j) == doctest::Approx(fit.cov_sandwich(i, j)).epsilon(1e-10));
        }
    }
}

TEST_CASE("sandwich and model SEs agree under a correctly specified large-n model") {
    Scenario sc;
    sc.n_studies = 200;
    sc.prevalence = 0.3;
    sc.se_true = 0.85;
    sc.sp_true = 0.9;
    sc.rho = 0.4;
    sc.var_eta_true = 0.4;
    sc.var_xi_true = 0.4;

    double total_ratio = 0.0;
    int used = 0;
    for (int rep = 0; rep < 50; ++rep) {
        SplitMix64 rng(substream_seed(424242, rep));
        const auto ds = generate_meta(sc, rng);
        const auto fit = fit_model(ds, ModelKind::approx);
        if (!fit.converged()) continue;
        total_ratio += fit.se_sandwich(0) / fit.se_model(0);
        ++used;
    }
    REQUIRE(used >= 45);
    CHECK(std::fabs(total_ratio / used - 1.0) <= 0.15);
}
