#include <doctest.h>

#include <cmath>

#include "diagmeta/core_data.hpp"
#include "diagmeta/likelihoods.hpp"
#include "diagmeta/optimize.hpp"
#include "diagmeta/rng.hpp"

using namespace diagmeta;

namespace {

double rosenbrock(const std::vector<double>& x) {
    return 100.0 * (x[1] - x[0] * x[0]) * (x[1] - x[0] * x[0]) +
           (1.0 - x[0]) * (1.0 - x[0]);
}

}  // namespace

TEST_CASE("Nelder-Mead: quadratic bowl") {
    auto f = [](const std::vector<double>& x) {
        return (x[0] - 1.0) * (x[0] - 1.0) + (x[1] - 2.0) * (x[1] - 2.0);
    };
    const auto r = nelder_mead(f, {0.0, 0.0});
    CHECK(r.status == OptStatus::converged);
    CHECK(std::fabs(r.x[0] - 1.0) < 1e-6);
    CHECK(std::fabs(r.x[1] - 2.0) < 1e-6);
}

TEST_CASE("Nelder-Mead: Rosenbrock from the classic start") {
    const auto r = nelder_mead(rosenbrock, {-1.2, 1.0});
    CHECK(r.status == OptStatus::converged);
    CHECK(std::fabs(r.x[0] - 1.0) < 1e-4);
    CHECK(std::fabs(r.x[1] - 1.0) < 1e-4);
}

TEST_CASE("Nelder-Mead: translation equivariance") {
    const std::vector<double> c = {0.7, -1.3, 2.1};
    auto f = [](const std::vector<double>& x) {
        double v = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) v += (x[i] - 0.5 * (i + 1)) * (x[i] - 0.5 * (i + 1));
        return v;
    };
    auto g = [&](const std::vector<double>& x) {
        std::vector<double> shifted(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) shifted[i] = x[i] - c[i];
        return f(shifted);
    };
    const auto rf = nelder_mead(f, {0.0, 0.0, 0.0});
    const auto rg = nelder_mead(g, {c[0], c[1], c[2]});
    for (int i = 0; i < 3; ++i) {
        CHECK(std::fabs(rg.x[i] - rf.x[i] - c[i]) < 1e-6);
    }
}

TEST_CASE("Nelder-Mead rejects a non-finite start") {
    auto f = [](const std::vector<double>& x) {
        return x[0] > 0 ? x[0] : std::numeric_limits<double>::infinity();
    };
    CHECK_THROWS_AS(nelder_mead(f, {-1.0}), std::invalid_argument);
}

TEST_CASE("BFGS: exact on quadratics within k+2 iterations") {
    // f = 1/2 x^T A x - b^T x, minimizer A^{-1} b
    const double a[3][3] = {{2.0, 0.3, 0.1}, {0.3, 1.5, -0.2}, {0.1, -0.2, 1.0}};
    const double b[3] = {1.0, -0.5, 0.25};
    auto f = [&](const std::vector<double>& x) {
        double q = 0.0, lin = 0.0;
        for (int i = 0; i < 3; ++i) {
            lin += b[i] * x[i];
            for (int j = 0; j < 3; ++j) q += x[i] * a[i][j] * x[j];
        }
        return 0.5 * q - lin;
    };
    auto grad = [&](const std::vector<double>& x) {
        std::vector<double> g(3, 0.0);
        for (int i = 0; i < 3; ++i) {
            g[i] -= b[i];
            for (int j = 0; j < 3; ++j) g[i] += a[i][j] * x[j];
        }
        return g;
    };
    const auto r = bfgs(f, grad, {0.0, 0.0, 0.0});
    CHECK(r.status == OptStatus::converged);
    CHECK(r.iters <= 5);  // k + 2

    // solve A x = b by hand for the reference
    // (3x3 elimination done numerically here)
    Matrix am(3, 3);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) am(i, j) = a[i][j];
    }
    const auto ainv = inverse_spd(am);
    REQUIRE(ainv.has_value());
    for (int i = 0; i < 3; ++i) {
        double want = 0.0;
        for (int j = 0; j < 3; ++j) want += (*ainv)(i, j) * b[j];
        CHECK(std::fabs(r.x[i] - want) < 1e-8);
    }
}

TEST_CASE("BFGS agrees with Nelder-Mead on Rosenbrock") {
    const auto rb = bfgs(rosenbrock, {-1.2, 1.0});
    CHECK(rb.status == OptStatus::converged);
    CHECK(std::fabs(rb.x[0] - 1.0) < 1e-4);
    CHECK(std::fabs(rb.x[1] - 1.0) < 1e-4);
}

TEST_CASE("BFGS matches or beats Nelder-Mead on a synthetic approximate likelihood") {
    SplitMix64 rng(101);
    MetaDataset ds;
    for (int i = 0; i < 5; ++i) {
        StudyRecord s;
        s.id = std::to_string(i + 1);
        s.tp = rng.next_int(5, 60);
        s.fn = rng.next_int(1, 20);
        s.fp = rng.next_int(1, 15);
        s.tn = rng.next_int(10, 80);
        ds.studies.push_back(s);
    }
    Objective neg = [&](const std::vector<double>& u) {
        if (std::fabs(u[4]) > UnconstrainedParams::rho_cap) {
            return std::numeric_limits<double>::infinity();
        }
        try {
            return -loglik_approx(UnconstrainedParams{{u[0], u[1], u[2], u[3], u[4]}}
                                      .to_params(),
                                  ds, Link::logit);
        } catch (const std::exception&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    const std::vector<double> x0 = {1.0, 1.0, std::log(0.5), std::log(0.5), 0.0};
    const auto rn = nelder_mead(neg, x0);
    const auto rb = bfgs(neg, x0);
    CHECK(-rb.f >= -rn.f - 1e-6);
}

TEST_CASE("numeric_hessian: exact on quadratic forms, step-halving stable") {
    const double a[2][2] = {{3.0, 0.4}, {0.4, 1.2}};
    auto f = [&](const std::vector<double>& x) {
        double q = 0.0;
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) q += x[i] * a[i][j] * x[j];
        }
        return 0.5 * q;
    };
    const std::vector<double> x = {0.3, -0.8};
    const auto h = numeric_hessian(f, x);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            CHECK(std::fabs(h(i, j) - a[i][j]) < 1e-5 * std::max(1.0, std::fabs(a[i][j])));
        }
    }
    const auto h2 = numeric_hessian(f, x, 0.5e-4);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            CHECK(std::fabs(h(i, j) - h2(i, j)) <=
                  1e-3 * std::max(1.0, std::fabs(h2(i, j))));
        }
    }
}

TEST_CASE("Hessian of a log-likelihood at its maximum is negative semidefinite") {
    SplitMix64 rng(103);
    MetaDataset ds;
    for (int i = 0; i < 6; ++i) {
        StudyRecord s;
        s.id = std::to_string(i + 1);
        s.tp = rng.next_int(10, 60);
        s.fn = rng.next_int(2, 20);
        s.fp = rng.next_int(1, 12);
        s.tn = rng.next_int(20, 90);
        ds.studies.push_back(s);
    }
    Objective neg = [&](const std::vector<double>& u) {
        if (std::fabs(u[4]) > UnconstrainedParams::rho_cap) {
            return std::numeric_limits<double>::infinity();
        }
        try {
            return -loglik_approx(UnconstrainedParams{{u[0], u[1], u[2], u[3], u[4]}}
                                      .to_params(),
                                  ds, Link::logit);
        } catch (const std::exception&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    const auto r = nelder_mead(neg, {1.0, 1.5, std::log(0.5), std::log(0.5), 0.0});
    REQUIRE(r.status == OptStatus::converged);
    Objective loglik = [&](const std::vector<double>& u) { return -neg(u); };
    auto h = numeric_hessian(loglik, r.x);
    // eigenvalues <= 1e-6  <=>  1e-6 I - H is positive semidefinite
    Matrix shifted(5, 5);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) shifted(i, j) = (i == j ? 2e-6 : 0.0) - h(i, j);
    }
    CHECK(cholesky(shifted).has_value());
}
