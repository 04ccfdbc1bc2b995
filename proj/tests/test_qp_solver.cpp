#include "doctest.h"

#include "oracles.hpp"
#include "smpc/qp_solver.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

using namespace smpc;
using namespace smpc::oracle;

TEST_CASE("clipped scalar minimum") {
    // min (z-1)^2  s.t. z <= 0.5, written as 1/2 (2) z^2 - 2 z (+1)
    QuadraticProgram qp(1);
    qp.H(0, 0) = 2.0;
    qp.g(0) = -2.0;
    qp.add_inequality(Eigen::RowVectorXd::Ones(1), 0.5);
    const auto sol = solve(qp);
    REQUIRE(sol.optimal());
    CHECK(sol.z(0) == doctest::Approx(0.5));
    CHECK(sol.objective + 1.0 == doctest::Approx(0.25));
    CHECK(sol.lambda_ineq(0) == doctest::Approx(1.0));
    CHECK(sol.active == std::vector<int>{0});
}

TEST_CASE("equality-constrained symmetric problem") {
    QuadraticProgram qp(4);
    qp.H.setIdentity();
    qp.add_equality(Eigen::RowVectorXd::Ones(4), 1.0);
    const auto sol = solve(qp);
    REQUIRE(sol.optimal());
    for (int i = 0; i < 4; ++i) CHECK(sol.z(i) == doctest::Approx(0.25));
}

TEST_CASE("infeasible hard rows") {
    QuadraticProgram qp(1);
    qp.H(0, 0) = 1.0;
    qp.add_inequality(Eigen::RowVectorXd::Ones(1), -1.0);
    qp.add_inequality(-Eigen::RowVectorXd::Ones(1), -1.0);  // z >= 1
    CHECK(solve(qp).status == QpStatus::Infeasible);

    // The same rows softened always solve.
    qp.soft = {true, true};
    const auto sol = solve(qp);
    CHECK(sol.optimal());
    CHECK(sol.slack.size() == 2);
    CHECK(sol.slack.sum() == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("random small QPs agree with the active-set enumeration oracle") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> dn(1, 6), dm(0, 8), dp(0, 1);
    int checked = 0;
    int infeasible_agree = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const int n = dn(rng);
        const int m = dm(rng);
        const int p = std::min(dp(rng), n - 1);
        QuadraticProgram qp = random_qp(rng, n, m, p);
        bool feasible = false;
        const double oracle = enumeration_oracle(qp, &feasible);
        const auto sol = solve(qp);
        if (!feasible) {
            CHECK(sol.status == QpStatus::Infeasible);
            ++infeasible_agree;
            continue;
        }
        REQUIRE(sol.optimal());
        CHECK(sol.objective == doctest::Approx(oracle).epsilon(1e-6).scale(1.0));
        CHECK(std::abs(sol.objective - oracle) <= 1e-6 * std::max(1.0, std::abs(oracle)));
        CHECK(sol.max_kkt_residual() < 1e-6);
        CHECK((sol.lambda_ineq.array() >= 0.0).all());
        ++checked;
    }
    CHECK(checked > 450);
}

TEST_CASE("infeasible random instances are reported as such") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> N01(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 3;
        QuadraticProgram qp(n);
        qp.H.setIdentity();
        Eigen::RowVectorXd a(n);
        for (int j = 0; j < n; ++j) a(j) = N01(rng);
        qp.add_inequality(a, -1.0 - std::abs(N01(rng)));
        qp.add_inequality(-a, -1.0);  // a'z >= 1 contradicts a'z <= -1 - |.|
        bool feasible = true;
        enumeration_oracle(qp, &feasible);
        CHECK_FALSE(feasible);
        CHECK(solve(qp).status == QpStatus::Infeasible);
    }
}

TEST_CASE("soft rows converge to the hard solution as the penalty grows") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        QuadraticProgram qp = random_qp(rng, 4, 5, 0);
        const auto hard = solve(qp);
        REQUIRE(hard.optimal());
        double prev = std::numeric_limits<double>::infinity();
        for (double rho : {1e2, 1e4, 1e6}) {
            QuadraticProgram soft = qp;
            soft.soft.assign(5, true);
            soft.rho_slack = rho;
            soft.linear_slack = 0.0;
            const auto s = solve(soft);
            REQUIRE(s.optimal());
            const double err = (s.z - hard.z).norm();
            CHECK(err <= prev + 1e-12);
            prev = err;
        }
        CHECK(prev < 1e-3);
    }
}

TEST_CASE("exact penalty: a large linear slack weight reproduces the hard solution") {
    std::mt19937_64 rng(8);
    QuadraticProgram qp = random_qp(rng, 5, 6, 0);
    const auto hard = solve(qp);
    REQUIRE(hard.optimal());
    QuadraticProgram soft = qp;
    soft.soft.assign(6, true);
    soft.linear_slack = 1e3;
    const auto s = solve(soft);
    REQUIRE(s.optimal());
    CHECK((s.z - hard.z).norm() < 1e-7);
    CHECK(s.slack.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("determinism and validation") {
    std::mt19937_64 rng(17);
    const QuadraticProgram qp = random_qp(rng, 6, 8, 1);
    const auto a = solve(qp);
    const auto b = solve(qp);
    CHECK(a.z == b.z);
    CHECK(a.objective == b.objective);

    QuadraticProgram bad(2);
    bad.H << 1, 0, 0, -1;
    CHECK_THROWS_AS(solve(bad), std::invalid_argument);
    QuadraticProgram mismatched(2);
    mismatched.g = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(solve(mismatched), std::invalid_argument);
}

TEST_CASE("semidefinite Hessian with bounds") {
    // min z0  s.t. z0 >= -1, |z1| <= 1 (H = 0 on z0)
    QuadraticProgram qp(2);
    qp.H(1, 1) = 1.0;
    qp.g << 1.0, 0.0;
    qp.add_inequality(Eigen::RowVector2d(-1.0, 0.0), 1.0);
    const auto sol = solve(qp);
    REQUIRE(sol.optimal());
    CHECK(sol.z(0) == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("text dump") {
    QuadraticProgram qp(2);
    qp.H.setIdentity();
    qp.add_inequality(Eigen::RowVector2d(1.0, 1.0), 1.0, true);
    std::ostringstream os;
    dump_text(qp, os);
    const std::string text = os.str();
    CHECK(text.find("H 2 2") != std::string::npos);
    CHECK(text.find("A_ineq 1 2") != std::string::npos);
    CHECK(text.find("soft 1\n1") != std::string::npos);
}
