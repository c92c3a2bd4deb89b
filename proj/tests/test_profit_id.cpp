#include "prodenv/error.hpp"
#include "prodenv/profit_id.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace prodenv;

namespace {

std::vector<double> mixture(const std::vector<double>& atoms, const std::vector<double>& weights, double half, int n,
                            std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-half, half);
    std::discrete_distribution<int> pick(weights.begin(), weights.end());
    std::vector<double> out(n);
    for (auto& v : out) v = atoms[pick(rng)] + (half > 0 ? u(rng) : 0.0);
    std::sort(out.begin(), out.end());
    return out;
}

NoiseCdf uniform_noise(double half, int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-half, half);
    std::vector<double> d(n);
    for (auto& v : d) v = u(rng);
    const double m = std::accumulate(d.begin(), d.end(), 0.0) / n;
    for (auto& v : d) v -= m;
    return NoiseCdf::from_draws(d);
}

Eigen::MatrixXd mat2(double a, double b, double c) {
    Eigen::MatrixXd m(2, 2);
    m << a, b, b, c;
    return m;
}

}  // namespace

TEST_CASE("separated cell in a three-atom sample") {
    CellSample s;
    s.key.ids = {0};
    s.values = mixture({1, 5, 9}, {1, 1, 1}, 0.1, 3000, 1);
    const auto a = find_separated_cell({s}, 0.2, 200);
    CHECK(a.b - a.a >= 0.2);
    const double atom = 9.0 - 4.0 * a.rank_from_top;
    CHECK(a.a <= atom - 0.1);
    CHECK(a.b >= atom + 0.1);
    // Rank resolution against three types.
    CHECK(3 - a.rank_from_top == static_cast<int>(std::lround((atom - 1.0) / 4.0)) + 1);

    CellSample top;
    top.key.ids = {1};
    top.values = mixture({9}, {1}, 0.1, 500, 2);
    const auto t = find_separated_cell({top}, 0.2, 200);
    CHECK(t.rank_from_top == 0);
}

TEST_CASE("zero noise: interval collapses onto the atom") {
    CellSample s;
    s.key.ids = {0};
    s.values = mixture({2.0, 3.0}, {1, 1}, 0.0, 1000, 3);
    const auto a = find_separated_cell({s}, 0.0, 200);
    CHECK(a.a == a.b);
    CHECK((a.a == 2.0 || a.a == 3.0));
}

TEST_CASE("overlapping clusters everywhere fail identification") {
    CellSample s;
    s.key.ids = {0};
    s.values = mixture({1.0, 1.15, 1.3}, {1, 1, 1}, 0.25, 3000, 4);
    CellSample t;
    t.key.ids = {1};
    t.values = mixture({2.0, 2.1}, {1, 1}, 0.25, 3000, 5);
    CHECK_THROWS_AS(find_separated_cell({s, t}, 0.5, 200), IdentificationError);
}

TEST_CASE("noise distribution from the anchor interval") {
    const auto sample = mixture({3.0}, {1.0}, 0.1, 100000, 6);
    const auto [mean, noise] = estimate_noise_cdf(sample, 2.8, 3.2, 200);
    CHECK(std::abs(mean - 3.0) <= 3 * 0.1 / std::sqrt(100000.0) * 2);
    double worst = 0.0;
    for (int i = 0; i <= 200; ++i) {
        const double t = -0.12 + 0.24 * i / 200;
        const double truth = std::clamp((t + 0.1) / 0.2, 0.0, 1.0);
        worst = std::max(worst, std::abs(noise.cdf(t) - truth));
    }
    CHECK(worst <= 0.01);
    CHECK_THROWS_AS(estimate_noise_cdf(sample, 5.0, 6.0, 200), IdentificationError);

    const auto exact = mixture({1.5}, {1.0}, 0.0, 300, 7);
    const auto [m0, n0] = estimate_noise_cdf(exact, 1.5, 1.5, 200);
    CHECK(m0 == 1.5);
    CHECK(n0.cdf(-1e-12) == 0.0);
    CHECK(n0.cdf(0.0) == 1.0);
}

TEST_CASE("deconvolution without noise recovers atoms exactly") {
    const auto s = mixture({1.0, 2.0, 3.0}, {1, 1, 1}, 0.0, 3000, 8);
    const auto noise = NoiseCdf::from_draws({0.0});
    IdentifyOptions opt;
    const auto a = deconvolve_atoms(s, noise, opt);
    REQUIRE(a.atoms.size() == 3);
    CHECK(a.atoms[0] == 1.0);
    CHECK(a.atoms[1] == 2.0);
    CHECK(a.atoms[2] == 3.0);
    CHECK(std::abs(a.weights[0] - 1.0 / 3) <= 0.03);
}

TEST_CASE("deconvolution of two atoms under uniform noise") {
    const auto s = mixture({1.0, 2.0}, {0.4, 0.6}, 0.1, 100000, 9);
    const auto noise = uniform_noise(0.1, 20000, 10);
    IdentifyOptions opt;
    const auto a = deconvolve_atoms(s, noise, opt);
    REQUIRE(a.atoms.size() == 2);
    CHECK(std::abs(a.atoms[0] - 1.0) <= 0.01);
    CHECK(std::abs(a.atoms[1] - 2.0) <= 0.01);
    CHECK(std::abs(a.weights[0] - 0.4) <= 0.02);
    CHECK(a.mgf_ok);
}

TEST_CASE("deconvolution of overlapping atoms") {
    // Atoms closer than the noise width still separate through the CDF fit.
    const auto s = mixture({1.0, 1.15}, {0.5, 0.5}, 0.1, 100000, 11);
    const auto noise = uniform_noise(0.1, 20000, 12);
    IdentifyOptions opt;
    const auto a = deconvolve_atoms(s, noise, opt);
    REQUIRE(a.atoms.size() == 2);
    CHECK(std::abs(a.atoms[0] - 1.0) <= 0.01);
    CHECK(std::abs(a.atoms[1] - 1.15) <= 0.01);
}

TEST_CASE("single atom plus noise recovers the mean") {
    const auto s = mixture({0.7}, {1.0}, 0.1, 100000, 13);
    const auto noise = uniform_noise(0.1, 20000, 14);
    IdentifyOptions opt;
    const auto a = deconvolve_atoms(s, noise, opt);
    REQUIRE(a.atoms.size() == 1);
    CHECK(std::abs(a.atoms[0] - 0.7) <= 1e-3);
}

TEST_CASE("deconvolution fails when the noise model is wrong") {
    const auto s = mixture({1.0}, {1.0}, 0.5, 20000, 15);
    const auto noise = NoiseCdf::from_draws({0.0});
    IdentifyOptions opt;
    opt.max_types = 2;
    CHECK_THROWS_AS(deconvolve_atoms(s, noise, opt), IdentificationError);
}

TEST_CASE("top-down rank assignment") {
    std::vector<ProfitCell> cells(3);
    cells[0].fitted = true;
    cells[0].atoms.atoms = {1, 5, 9};
    cells[0].atoms.weights = {0.3, 0.3, 0.4};
    cells[1].fitted = true;
    cells[1].atoms.atoms = {5, 9};
    cells[1].atoms.weights = {0.5, 0.5};
    rank_and_assign(cells, 3);
    REQUIRE(cells[0].assignments.size() == 3);
    CHECK(cells[0].find(1)->value == 1);
    CHECK(cells[0].find(2)->value == 5);
    CHECK(cells[0].find(3)->value == 9);
    CHECK(cells[1].find(1) == nullptr);
    CHECK(cells[1].find(2)->value == 5);
    CHECK(cells[1].unidentified_below == 2);
    CHECK(cells[2].assignments.empty());
    cells[0].atoms.atoms = {1, 2, 3, 4};
    cells[0].atoms.weights = {0.25, 0.25, 0.25, 0.25};
    CHECK_THROWS_AS(rank_and_assign(cells, 3), IdentificationError);
}

TEST_CASE("end-to-end identification on a small economy") {
    // Type 1 is profitable only near the axes, so middle cells hide it.
    const auto tech = TechnologySpec::diewert({mat2(0.5, -0.72, 0.5), mat2(2.0, -0.72, 2.0), mat2(3.5, -0.72, 3.5)});
    MarketConfig cfg;
    cfg.num_markets = 6000;
    cfg.price_law.kind = PriceLawKind::DiscreteRays;
    cfg.price_law.rays = {Eigen::Vector2d(1, 0.05), Eigen::Vector2d(1, 0.6), Eigen::Vector2d(1, 1), Eigen::Vector2d(0.05, 1)};
    cfg.entry.kind = EntryKind::NonnegativeProfit;
    cfg.noise.width = 0.2;
    cfg.seed = 99;
    const auto data = generate_dataset(tech, cfg);
    IdentifyOptions opt;
    opt.noise_width = 0.2;
    const auto table = identify_profits(data, opt);
    CHECK(table.d_e == 3);
    CHECK(table.anchor.e_star >= 1);
    for (const auto& cell : table.cells) {
        REQUIRE(cell.fitted);
        const Eigen::VectorXd p = cell.center.tail(2);
        int first_present = 4;
        for (int e = 3; e >= 1; --e)
            if (profit_oracle(tech, e, p).profit >= 0.0) first_present = e;
        CHECK(cell.unidentified_below == first_present);
        for (const auto& a : cell.assignments) {
            const double truth = profit_oracle(tech, a.e, p).profit;
            CHECK(std::abs(a.value - truth) <= std::max(0.01 * std::abs(truth), 3 * 0.1 / std::sqrt(cell.n * a.weight)));
        }
        for (std::size_t i = 1; i < cell.assignments.size(); ++i)
            CHECK(cell.assignments[i].value > cell.assignments[i - 1].value);
    }
}

TEST_CASE("homogeneity audit across scaled rays") {
    const auto tech = TechnologySpec::diewert({mat2(1.0, -0.2, 1.0), mat2(3.0, -0.2, 3.0)});
    MarketConfig cfg;
    cfg.num_markets = 4000;
    cfg.price_law.kind = PriceLawKind::DiscreteRays;
    cfg.price_law.rays = {Eigen::Vector2d(1, 0.5)};
    cfg.price_law.scales = {1.0, 2.0};
    cfg.noise.width = 0.1;
    cfg.seed = 5;
    const auto data = generate_dataset(tech, cfg);
    IdentifyOptions opt;
    opt.noise_width = 0.1;
    const auto table = identify_profits(data, opt);
    const auto audit = homogeneity_audit(table);
    CHECK(audit.pairs == 2);
    CHECK(audit.pass);
}
