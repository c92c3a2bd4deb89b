#include "prodenv/error.hpp"
#include "prodenv/market.hpp"
#include "prodenv/technology.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

using namespace prodenv;

namespace {

Eigen::MatrixXd mat2(double a, double b, double c) {
    Eigen::MatrixXd m(2, 2);
    m << a, b, b, c;
    return m;
}

TechnologySpec three_type_diewert() {
    return TechnologySpec::diewert({mat2(0.5, -0.8, 0.5), mat2(2.0, -0.8, 2.0), mat2(3.5, -0.8, 3.5)});
}

MarketConfig ray_markets(int n, std::vector<Eigen::VectorXd> rays) {
    MarketConfig cfg;
    cfg.num_markets = n;
    cfg.price_law.kind = PriceLawKind::DiscreteRays;
    cfg.price_law.rays = std::move(rays);
    cfg.seed = 42;
    return cfg;
}

}  // namespace

TEST_CASE("nonmonotone triple reproduces the closed-form optima") {
    const auto tech = TechnologySpec::nonmonotone_triple();
    tech.validate();
    const Eigen::Vector2d p(0.12, 1.0);
    const auto r1 = profit_oracle(tech, 1, p);
    const auto r2 = profit_oracle(tech, 2, p);
    const auto r3 = profit_oracle(tech, 3, p);
    CHECK(std::abs(-r1.optimizer[1] - std::pow(0.048, 5.0 / 3.0)) <= 1e-12);
    CHECK(std::abs(r1.optimizer[0] - std::pow(0.048, 2.0 / 3.0)) <= 1e-12);
    CHECK(std::abs(-r2.optimizer[1] - std::pow(0.096, 5.0 / 3.0)) <= 1e-12);
    CHECK(std::abs(r2.optimizer[0] - 2.0 * std::pow(0.096, 2.0 / 3.0)) <= 1e-12);
    CHECK(std::abs(-r3.optimizer[1] - std::pow(0.024, 5.0 / 4.0)) <= 1e-12);
    CHECK(std::abs(r3.optimizer[0] - std::pow(0.024, 0.25)) <= 1e-12);
    CHECK(-r1.optimizer[1] < -r3.optimizer[1]);
    CHECK(-r3.optimizer[1] < -r2.optimizer[1]);
    CHECK(r1.optimizer[0] < r3.optimizer[0]);
    CHECK(r3.optimizer[0] < r2.optimizer[0]);
}

TEST_CASE("profit scales with prices, optimizer does not") {
    const auto tech = TechnologySpec::nonmonotone_triple();
    for (int e = 1; e <= 3; ++e) {
        const Eigen::Vector2d p(0.3, 0.9);
        const auto a = profit_oracle(tech, e, p);
        const auto b = profit_oracle(tech, e, Eigen::Vector2d(2.5 * p));
        CHECK(b.profit == doctest::Approx(2.5 * a.profit).epsilon(1e-12));
        CHECK((a.optimizer - b.optimizer).norm() <= 1e-10);
    }
    const auto dw = three_type_diewert();
    const Eigen::Vector2d q(0.4, 1.1);
    CHECK(profit_oracle(dw, 2, Eigen::Vector2d(3 * q)).profit == doctest::Approx(3 * profit_oracle(dw, 2, q).profit));
}

TEST_CASE("oracle errors") {
    const auto tech = TechnologySpec::nonmonotone_triple();
    CHECK_THROWS_AS(profit_oracle(tech, 4, Eigen::Vector2d(1, 1)), ArgumentError);
    CHECK_THROWS_AS(profit_oracle(tech, 1, Eigen::Vector2d(-1, 1)), ArgumentError);
    TechnologySpec lin;
    lin.kind = TechnologyKind::PiecewiseKinked;
    lin.num_types = 1;
    lin.pieces = {{{0.0, std::numeric_limits<double>::infinity(), 2.0, 1.0, 0.0}}};
    CHECK_THROWS_AS(profit_oracle(lin, 1, Eigen::Vector2d(1, 1)), UnboundedError);
}

TEST_CASE("nested_check") {
    const auto probes = RestrictedPriceSet::arc(0.1, 1.4, 25).rays;
    CHECK(nested_check(TechnologySpec::nonmonotone_triple(), probes));
    CHECK_FALSE(nested_check(TechnologySpec::power({1.0, 1.0}, 0.4), probes));
    CHECK(nested_check(three_type_diewert(), probes));
}

TEST_CASE("hicks-neutral knot technology picks the best knot") {
    TechnologySpec t;
    t.kind = TechnologyKind::HicksNeutral;
    t.num_types = 2;
    t.scale = {1.0, 1.5};
    t.knot_input = {0.0, 1.0, 2.0, 3.0};
    t.knot_output = {0.0, 2.0, 3.0, 3.5};
    t.validate();
    // At p = (1, 0.9): type 1 values 0, 1.1, 1.2, 0.8 -> knot 2.
    const auto r = profit_oracle(t, 1, Eigen::Vector2d(1.0, 0.9));
    CHECK(r.profit == doctest::Approx(1.2));
    CHECK(r.optimizer[1] == doctest::Approx(-2.0));
}

TEST_CASE("weak axiom holds between oracle optimizers") {
    const auto tech = TechnologySpec::nonmonotone_triple();
    const auto rays = RestrictedPriceSet::arc(0.05, 0.6, 12).rays;
    for (int e = 1; e <= 3; ++e)
        for (const auto& a : rays)
            for (const auto& b : rays) {
                const auto ya = profit_oracle(tech, e, a.components()).optimizer;
                const auto yb = profit_oracle(tech, e, b.components()).optimizer;
                CHECK(b.components().dot(yb) >= b.components().dot(ya) - 1e-12);
            }
}

TEST_CASE("restricted quantities scale the production set") {
    auto tech = three_type_diewert();
    tech.restricted_elasticity = {0.5};
    const Eigen::Vector2d p(0.6, 0.8);
    const auto a = profit_oracle(tech, 3, p, Eigen::VectorXd::Constant(1, 4.0));
    const auto b = profit_oracle(three_type_diewert(), 3, p);
    CHECK(a.profit == doctest::Approx(2.0 * b.profit));
}

TEST_CASE("dataset generation is deterministic and respects the noise bound") {
    const auto tech = three_type_diewert();
    auto cfg = ray_markets(300, {Eigen::Vector2d(1, 0.2), Eigen::Vector2d(1, 1), Eigen::Vector2d(0.2, 1)});
    cfg.noise.width = 0.2;
    const auto a = generate_dataset(tech, cfg);
    const auto b = generate_dataset(tech, cfg);
    std::ostringstream sa, sb;
    write_csv(sa, a, true);
    write_csv(sb, b, true);
    CHECK(sa.str() == sb.str());
    double worst = 0.0;
    for (const auto& r : a.records) worst = std::max(worst, std::abs(r.noisy_profit - r.true_profit));
    CHECK(worst <= 0.1);
    CHECK(worst > 0.05);

    cfg.noise.shape = NoiseShape::TruncatedNormal;
    for (const auto& r : generate_dataset(tech, cfg).records) CHECK(std::abs(r.noisy_profit - r.true_profit) <= 0.1);
}

TEST_CASE("nonnegative-profit entry yields upper intervals of types") {
    const auto tech = three_type_diewert();
    auto cfg = ray_markets(400, {Eigen::Vector2d(1, 0.1), Eigen::Vector2d(1, 1), Eigen::Vector2d(0.1, 1)});
    cfg.entry.kind = EntryKind::NonnegativeProfit;
    cfg.noise.width = 0.2;
    const auto data = generate_dataset(tech, cfg);
    std::map<int, std::set<int>> present;
    for (const auto& r : data.records) present[r.market_id].insert(r.type_e);
    bool some_excluded = false;
    for (const auto& [m, types] : present) {
        const int lo = *types.begin();
        CHECK(static_cast<int>(types.size()) == 3 - lo + 1);
        some_excluded = some_excluded || lo > 1;
    }
    CHECK(some_excluded);
    CHECK(monotone_presence_audit(tech, cfg, data));
}

TEST_CASE("configuration validation") {
    const auto tech = three_type_diewert();
    auto cfg = ray_markets(10, {Eigen::Vector2d(1, 1)});
    cfg.entry.kind = EntryKind::ThresholdByType;
    cfg.entry.thresholds = {0.0, 0.5, 1.0};
    CHECK_THROWS_AS(cfg.validate(tech), ConfigError);
    cfg.entry.thresholds = {100.0, 100.0, 100.0};
    CHECK_THROWS_AS(generate_dataset(tech, cfg), ConfigError);
    auto bad = mat2(1.0, 0.2, 1.0);
    CHECK_THROWS_AS(TechnologySpec::diewert({bad}).validate(), ConfigError);
}

TEST_CASE("csv round trip") {
    const auto tech = three_type_diewert();
    auto cfg = ray_markets(20, {Eigen::Vector2d(1, 0.5), Eigen::Vector2d(0.5, 1)});
    cfg.noise.width = 0.1;
    const auto data = generate_dataset(tech, cfg);
    std::stringstream ss;
    write_csv(ss, data, false);
    const auto back = read_csv(ss);
    REQUIRE(back.records.size() == data.records.size());
    CHECK_FALSE(back.has_types);
    for (std::size_t i = 0; i < data.records.size(); ++i) {
        CHECK(back.records[i].noisy_profit == data.records[i].noisy_profit);
        CHECK(back.records[i].x == data.records[i].x);
    }
}

TEST_CASE("demand-side proxies") {
    MarketConfig cfg;
    DemandSide ds;
    ds.goods = {DemandCurve{DemandCurve::Shape::Isoelastic, 1.0, 1.0}, std::nullopt};
    cfg.demand = ds;
    const auto x = gen_demand_proxy(cfg, Eigen::Vector2d(2.0, 3.0));
    CHECK(x[0] == doctest::Approx(0.5));
    CHECK(x[1] == 3.0);
    CHECK(gen_demand_proxy(cfg, Eigen::Vector2d(2.0, 3.0)) == x);
    const double p = ds.goods[0]->price(x[0], 0.01, 100.0);
    CHECK(std::abs(p - 2.0) <= 1e-10);

    DemandSide up;
    up.goods = {DemandCurve{DemandCurve::Shape::Linear, 1.0, -1.0}};
    cfg.demand = up;
    CHECK_THROWS_AS(gen_demand_proxy(cfg, Eigen::VectorXd::Constant(1, 2.0)), ConfigError);
}

TEST_CASE("proxy functions invert") {
    for (auto f : {ProxyFunction{ProxyFamily::Exp, 1.0}, ProxyFunction{ProxyFamily::Quadratic, 1.0},
                   ProxyFunction{ProxyFamily::Power, 0.5}, ProxyFunction{}}) {
        for (double x : {0.6, 1.0, 1.7}) CHECK(f.proxy(f.price(x)) == doctest::Approx(x).epsilon(1e-12));
    }
    CHECK(ProxyFunction{ProxyFamily::Quadratic, 1.0}.t_ratio(2.0) == doctest::Approx(5.0 / 4.0));
}
