#include "prodenv/error.hpp"
#include "prodenv/lp.hpp"

#include <doctest.h>

#include <random>
#include <vector>

using namespace prodenv;
using lp::RowType;

TEST_CASE("bounded maximization hits the expected vertex") {
    // max 3x + 2y  s.t. x + y <= 4, x + 3y <= 6, x <= 3
    lp::Problem p(2);
    p.set_objective(0, 3.0);
    p.set_objective(1, 2.0);
    p.add_row(std::vector<double>{1, 1}, RowType::LessEqual, 4);
    p.add_row(std::vector<double>{1, 3}, RowType::LessEqual, 6);
    p.set_bounds(0, 0, 3);
    const auto s = lp::solve(p);
    REQUIRE(s.optimal());
    CHECK(s.objective == doctest::Approx(11.0));
    CHECK(s.x[0] == doctest::Approx(3.0));
    CHECK(s.x[1] == doctest::Approx(1.0));
}

TEST_CASE("minimization with >= rows and equalities needs phase one") {
    // min x + y  s.t. x + 2y >= 4, x - y = 1
    lp::Problem p(2, lp::Sense::Minimize);
    p.set_objective(0, 1.0);
    p.set_objective(1, 1.0);
    p.add_row(std::vector<double>{1, 2}, RowType::GreaterEqual, 4);
    p.add_row(std::vector<double>{1, -1}, RowType::Equal, 1);
    const auto s = lp::solve(p);
    REQUIRE(s.optimal());
    CHECK(s.x[0] == doctest::Approx(2.0));
    CHECK(s.x[1] == doctest::Approx(1.0));
    CHECK(s.objective == doctest::Approx(3.0));
}

TEST_CASE("infeasible system is reported, not thrown") {
    lp::Problem p(1);
    p.add_row(std::vector<double>{1}, RowType::LessEqual, 1);
    p.add_row(std::vector<double>{1}, RowType::GreaterEqual, 2);
    CHECK(lp::solve(p).status == lp::Status::Infeasible);
}

TEST_CASE("unbounded problem returns an improving ray") {
    // max x1 + 2 x2 over free x with x1 + x2 <= 0
    lp::Problem p(2);
    p.set_all_free();
    p.set_objective(0, 1.0);
    p.set_objective(1, 2.0);
    p.add_row(std::vector<double>{1, 1}, RowType::LessEqual, 0);
    const auto s = lp::solve(p);
    REQUIRE(s.status == lp::Status::Unbounded);
    REQUIRE(s.ray.size() == 2);
    CHECK(s.ray[0] + s.ray[1] <= 1e-12);
    CHECK(s.ray[0] + 2 * s.ray[1] > 0.0);
}

TEST_CASE("free and upper-bounded variables map back correctly") {
    // max -x + y, x free in [-inf, inf), y <= 5 only, with x >= -2 via row
    lp::Problem p(2);
    p.set_free(0);
    p.set_bounds(1, -lp::kInf, 5);
    p.set_objective(0, -1.0);
    p.set_objective(1, 1.0);
    p.add_row(std::vector<double>{1, 0}, RowType::GreaterEqual, -2);
    const auto s = lp::solve(p);
    REQUIRE(s.optimal());
    CHECK(s.x[0] == doctest::Approx(-2.0));
    CHECK(s.x[1] == doctest::Approx(5.0));
    CHECK(s.objective == doctest::Approx(7.0));
}

TEST_CASE("redundant equalities leave a consistent solution") {
    lp::Problem p(3, lp::Sense::Minimize);
    p.set_objective(Eigen::Vector3d(1, 2, 3));
    p.add_row(std::vector<double>{1, 1, 1}, RowType::Equal, 3);
    p.add_row(std::vector<double>{2, 2, 2}, RowType::Equal, 6);
    const auto s = lp::solve(p);
    REQUIRE(s.optimal());
    CHECK(s.objective == doctest::Approx(3.0));
}

TEST_CASE("degenerate cycling-prone instance terminates") {
    // Beale's example, which cycles under naive Dantzig pricing.
    lp::Problem p(4, lp::Sense::Minimize);
    p.set_objective(Eigen::Vector4d(-0.75, 150, -0.02, 6));
    p.add_row(std::vector<double>{0.25, -60, -0.04, 9}, RowType::LessEqual, 0);
    p.add_row(std::vector<double>{0.5, -90, -0.02, 3}, RowType::LessEqual, 0);
    p.add_row(std::vector<double>{0, 0, 1, 0}, RowType::LessEqual, 1);
    const auto s = lp::solve(p);
    REQUIRE(s.optimal());
    CHECK(s.objective == doctest::Approx(-0.05));
}

TEST_CASE("random feasible programs satisfy their constraints") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 3 + trial % 4;
        lp::Problem p(n);
        Eigen::VectorXd x0(n);
        for (int j = 0; j < n; ++j) x0[j] = 0.5 + 0.5 * (u(rng) + 1.0);
        for (int i = 0; i < 2 * n; ++i) {
            std::vector<double> a(n);
            double ax = 0.0;
            for (int j = 0; j < n; ++j) {
                a[j] = u(rng);
                ax += a[j] * x0[j];
            }
            p.add_row(a, RowType::LessEqual, ax + 0.1);
        }
        for (int j = 0; j < n; ++j) p.set_bounds(j, 0.0, 10.0);
        for (int j = 0; j < n; ++j) p.set_objective(j, u(rng));
        const auto s = lp::solve(p);
        REQUIRE(s.optimal());
        for (int i = 0; i < p.num_rows(); ++i) CHECK(p.rows()[i].dot(s.x) <= p.rhs()[i] + 1e-8);
        CHECK(p.objective().dot(s.x) >= p.objective().dot(x0) - 1e-9);
    }
}
