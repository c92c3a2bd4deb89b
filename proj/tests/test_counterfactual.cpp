#include "prodenv/counterfactual.hpp"
#include "prodenv/error.hpp"
#include "prodenv/technology.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace prodenv;

namespace {

ProfitData from_technology(const TechnologySpec& tech, int e, const std::vector<PriceRay>& rays) {
    ProfitData d;
    d.e = e;
    d.rays = rays;
    for (const auto& r : rays) d.values.push_back(profit_oracle(tech, e, r.components()).profit);
    return d;
}

TechnologySpec diewert2(double b11, double b12, double b22) {
    Eigen::MatrixXd b(2, 2);
    b << b11, b12, b12, b22;
    return TechnologySpec::diewert({b});
}

PriceRay ray_at(double theta) { return PriceRay::normalized(Eigen::Vector2d(std::cos(theta), std::sin(theta))); }

}  // namespace

TEST_CASE("WAPM feasibility") {
    const auto tech = TechnologySpec::nonmonotone_triple();
    const auto rays = RestrictedPriceSet::arc(1.1, 1.5, 6).rays;
    for (int e = 1; e <= 3; ++e) {
        const auto w = wapm_feasible(from_technology(tech, e, rays));
        CHECK(w.feasible);
        REQUIRE(w.quantities.size() == rays.size());
    }

    ProfitData single;
    single.rays = {PriceRay::normalized({0.3, 0.7})};
    single.values = {-4.0};
    CHECK(wapm_feasible(single).feasible);

    ProfitData bad;
    bad.rays = {PriceRay::normalized({1, 0}), PriceRay::normalized({0, 1}), PriceRay::normalized({0.6, 0.8})};
    bad.values = {1.0, 1.0, 2.0};
    CHECK_FALSE(wapm_feasible(bad).feasible);
    CHECK_THROWS_AS(profit_bounds(bad, PriceRay::normalized({1, 1})), ArgumentError);
    CHECK_THROWS_AS(brute_force_bounds(bad, PriceRay::normalized({1, 1}), 50), NumericError);
}

TEST_CASE("bounds collapse at observed prices") {
    const auto tech = diewert2(1.5, -0.4, 2.0);
    const auto rays = std::vector<PriceRay>{ray_at(0.3), ray_at(0.8), ray_at(1.2)};
    const auto data = from_technology(tech, 1, rays);
    for (std::size_t i = 0; i < rays.size(); ++i) {
        const auto b = profit_bounds(data, rays[i]);
        CHECK(std::abs(b.lower - data.values[i]) <= 1e-9);
        CHECK(std::abs(b.upper - data.values[i]) <= 1e-9);
        const auto bf = brute_force_bounds(data, rays[i], 200);
        CHECK(std::abs(bf.lower - data.values[i]) <= 1e-9);
        CHECK(std::abs(bf.upper - data.values[i]) <= 1e-9);
    }
}

TEST_CASE("single halfspace: both bounds infinite") {
    ProfitData data;
    data.rays = {PriceRay::normalized({1, 1})};
    data.values = {0.0};
    const auto pc = PriceRay::normalized({1, 2});
    const auto b = profit_bounds(data, pc);
    CHECK(b.upper == std::numeric_limits<double>::infinity());
    CHECK(b.lower == -std::numeric_limits<double>::infinity());
    REQUIRE(b.upper_ray);
    REQUIRE(b.lower_ray);
    // Certificates: directions along the halfspace boundary moving p_c.y the right way.
    CHECK(data.rays[0].components().dot(*b.upper_ray) <= 1e-12);
    CHECK(pc.components().dot(*b.upper_ray) > 0.0);
    CHECK(std::abs(data.rays[0].components().dot(*b.lower_ray)) <= 1e-12);
    CHECK(pc.components().dot(*b.lower_ray) < 0.0);
    const auto bf = brute_force_bounds(data, pc, 100);
    CHECK(bf.upper == b.upper);
    CHECK(bf.lower == b.lower);
}

TEST_CASE("three-ray Diewert bounds bracket the truth and match the oracle") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const auto tech = diewert2(0.5 + 2.5 * u(rng), -u(rng), 0.5 + 2.5 * u(rng));
        std::vector<double> th = {0.1 + 0.4 * u(rng), 0.6 + 0.4 * u(rng), 1.1 + 0.4 * u(rng)};
        const auto data = from_technology(tech, 1, {ray_at(th[0]), ray_at(th[1]), ray_at(th[2])});
        const auto pc = ray_at(th[0] + (th[1] - th[0]) * (0.1 + 0.8 * u(rng)));
        const double truth = profit_oracle(tech, 1, pc.components()).profit;
        const auto b = profit_bounds(data, pc);
        REQUIRE(std::isfinite(b.lower));
        REQUIRE(std::isfinite(b.upper));
        CHECK(b.lower <= truth + 1e-9);
        CHECK(truth <= b.upper + 1e-9);
        const auto bf = brute_force_bounds(data, pc, 400);
        CHECK(std::abs(bf.lower - b.lower) <= 1e-6);
        CHECK(std::abs(bf.upper - b.upper) <= 1e-6);
        // Certificates satisfy the defining constraints.
        REQUIRE(b.upper_point);
        CHECK(data.envelope().contains(*b.upper_point, 1e-8));
        CHECK(std::abs(pc.components().dot(*b.upper_point) - b.upper) <= 1e-8);
    }
}

TEST_CASE("sharpness and monotonicity in information") {
    const auto tech = diewert2(2.0, -0.5, 1.0);
    const auto data = from_technology(tech, 1, {ray_at(0.2), ray_at(0.7), ray_at(1.3)});
    const auto pc = ray_at(0.95);
    const auto b = profit_bounds(data, pc);
    REQUIRE(std::isfinite(b.upper));
    CHECK(wapm_feasible(data.with(pc, b.upper)).feasible);
    CHECK(wapm_feasible(data.with(pc, b.lower)).feasible);
    CHECK_FALSE(wapm_feasible(data.with(pc, b.upper + 1e-3)).feasible);

    const auto more = from_technology(tech, 1, {ray_at(0.2), ray_at(0.7), ray_at(1.3), ray_at(1.0)});
    const auto tight = profit_bounds(more, pc);
    CHECK(tight.lower >= b.lower - 1e-9);
    CHECK(tight.upper <= b.upper + 1e-9);
}

TEST_CASE("quantity bounds") {
    const auto tech = diewert2(1.0, -0.3, 1.4);
    const auto data = from_technology(tech, 1, {ray_at(0.3), ray_at(0.8), ray_at(1.25)});
    const auto pc = ray_at(1.0);
    const auto pb = profit_bounds(data, pc);
    const auto qb = quantity_bounds(data, pc, pc.components());
    CHECK(std::abs(qb.upper - pb.upper) <= 1e-9);
    CHECK(std::abs(qb.lower - pb.lower) <= 1e-9);

    ProfitData one;
    one.rays = {PriceRay::normalized({1, 1})};
    one.values = {1.0};
    const auto inf = quantity_bounds(one, one.rays[0], Eigen::Vector2d(1, 0));
    CHECK(inf.upper == std::numeric_limits<double>::infinity());
    CHECK(inf.lower == -std::numeric_limits<double>::infinity());

    // Output supply of the nonmonotone technologies lies inside its bounds.
    const auto triple = TechnologySpec::nonmonotone_triple();
    const auto rays = RestrictedPriceSet::arc(1.2, 1.5, 5).rays;
    for (int e = 1; e <= 3; ++e) {
        const auto d = from_technology(triple, e, rays);
        for (double theta : {1.25, 1.33, 1.41, 1.47}) {
            const auto p = ray_at(theta);
            const double y = profit_oracle(triple, e, p.components()).optimizer[0];
            const auto q = quantity_bounds(d, p, Eigen::Vector2d(1, 0));
            CHECK(q.lower <= y + 1e-9);
            CHECK(y <= q.upper + 1e-9);
        }
    }
}

TEST_CASE("fixed-quantity profitability") {
    const auto tech = diewert2(1.0, -0.3, 1.4);
    const auto rays = std::vector<PriceRay>{ray_at(0.3), ray_at(0.8), ray_at(1.25)};
    const auto data = from_technology(tech, 1, rays);
    const auto w = wapm_feasible(data);
    REQUIRE(w.feasible);
    auto grid = quadrant_grid(91);
    grid.push_back(rays[1]);
    const auto b = profit_bounds_fixed_quantity(data, 0, w.quantities[1][0], grid);
    CHECK(b.feasible);
    CHECK(b.grid_size == 92);
    CHECK(b.upper >= data.values[1] - 1e-9);

    // Negative profits at every observed price: no price inside their cone makes the firm profitable.
    ProfitData losing;
    losing.rays = rays;
    for (const auto& r : rays) losing.values.push_back(-0.5 * (r[0] + r[1]));
    losing.nonpositive = {1};
    const auto lb = profit_bounds_fixed_quantity(losing, 0, 0.5, RestrictedPriceSet::arc(0.3, 1.25, 50).rays);
    CHECK(lb.feasible);
    CHECK(lb.upper < 0.0);
    CHECK(profitability_verdict(lb) == Verdict::DefinitelyNo);

    // Nested grids: bounds widen and settle.
    const auto coarse = profit_bounds_fixed_quantity(data, 0, w.quantities[1][0], quadrant_grid(11));
    const auto fine = profit_bounds_fixed_quantity(data, 0, w.quantities[1][0], quadrant_grid(101));
    const auto finer = profit_bounds_fixed_quantity(data, 0, w.quantities[1][0], quadrant_grid(201));
    CHECK(fine.upper >= coarse.upper - 1e-12);
    CHECK(fine.lower <= coarse.lower + 1e-12);
    CHECK(finer.upper >= fine.upper - 1e-12);
    CHECK(std::abs(finer.upper - fine.upper) <= 1e-3 * std::max(1.0, std::abs(fine.upper)));

    // Infeasible pin: output above every envelope point at the grid prices.
    ProfitData tight;
    tight.rays = {PriceRay::normalized({1, 0}), PriceRay::normalized({0, 1})};
    tight.values = {1.0, 1.0};
    const auto none = profit_bounds_fixed_quantity(tight, 0, 5.0, quadrant_grid(31));
    CHECK_FALSE(none.feasible);
}

TEST_CASE("ray grids") {
    const auto q = quadrant_grid(720);
    CHECK(q.size() == 720);
    CHECK(q.front()[1] == 0.0);
    CHECK(default_ray_grid(2).size() == 720);
    const auto o = octant_grid(10000);
    CHECK(std::abs(static_cast<double>(o.size()) - 10000.0) <= 200.0);
    for (const auto& r : o) CHECK(r.strictly_positive());
}
