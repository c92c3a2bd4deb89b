#pragma once

#include "prodenv/technology.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace prodenv {

enum class ProxyFamily { Identity, Exp, Quadratic, Power };

/// Price as a strictly monotone function of an observable proxy.
///   Identity:  g(x) = x
///   Exp:       g(x) = param * exp(x)
///   Quadratic: g(x) = x^2 + param      (x > 0)
///   Power:     g(x) = x^param          (x > 0)
struct ProxyFunction {
    ProxyFamily family = ProxyFamily::Identity;
    double param = 1.0;

    double price(double x) const;
    double proxy(double p) const;  ///< inverse of price
    double derivative(double x) const;
    double t_ratio(double x) const { return price(x) / derivative(x); }
    bool observed() const { return family == ProxyFamily::Identity; }
};

std::string to_string(ProxyFamily f);
ProxyFamily proxy_family_from_string(const std::string& s);

/// Separable aggregate demand for one good.
struct DemandCurve {
    enum class Shape { Isoelastic, Linear } shape = Shape::Isoelastic;
    double level = 1.0;  ///< a
    double slope = 1.0;  ///< elasticity for Isoelastic (a p^-slope), b for Linear (a - b p)

    double quantity(double p) const;
    /// Inverse by bisection on [p_lo, p_hi]; throws NumericError if xbar is not bracketed.
    double price(double xbar, double p_lo, double p_hi) const;
};

struct DemandSide {
    std::vector<std::optional<DemandCurve>> goods;  ///< empty entry: good not proxied by demand
    double grid_lo = 0.05;                           ///< price range on which monotonicity is checked
    double grid_hi = 20.0;
    void validate() const;
};

enum class PriceLawKind { DiscreteRays, UniformBox, ProxyGrid, Endowment };

struct PriceLaw {
    PriceLawKind kind = PriceLawKind::DiscreteRays;
    std::vector<Eigen::VectorXd> rays;  ///< DiscreteRays
    bool cycle = true;                  ///< DiscreteRays: market m uses ray m mod n, else uniform draw
    std::vector<double> scales;         ///< optional multipliers applied to the drawn price vector
    Eigen::VectorXd lo, hi;             ///< box bounds: prices, proxies or endowments depending on kind
    int grid_points = 0;                ///< ProxyGrid: > 1 draws from an even grid, else continuous
    bool normalize = true;              ///< UniformBox: rescale to unit norm
};

enum class EntryKind { AllEnter, NonnegativeProfit, ThresholdByType };

struct EntryRule {
    EntryKind kind = EntryKind::AllEnter;
    std::vector<double> thresholds;  ///< ThresholdByType: enter iff profit >= thresholds[e-1], non-increasing in e
    bool enters(int e, double profit) const;
};

enum class NoiseShape { Uniform, TruncatedNormal };

struct NoiseSpec {
    double width = 0.0;  ///< K; draws lie in [-K/2, K/2]
    NoiseShape shape = NoiseShape::Uniform;
};

struct MarketConfig {
    int num_markets = 0;
    int firms_per_type = 1;             ///< used when type_weights is empty
    int firms_per_market = 0;           ///< used with type_weights
    std::vector<double> type_weights;   ///< optional type distribution
    PriceLaw price_law;
    std::vector<ProxyFunction> proxies; ///< one per good, or empty when all prices are observed
    std::optional<DemandSide> demand;   ///< goods proxied by aggregate demand
    EntryRule entry;
    Eigen::VectorXd restricted_lo, restricted_hi;  ///< per-market uniform draws, size = technology restricted count
    NoiseSpec noise;
    std::uint64_t seed = 1;

    void validate(const TechnologySpec& tech) const;
};

struct ObservationRecord {
    int market_id = 0;
    int type_e = 0;
    Eigen::VectorXd y_restricted;
    Eigen::VectorXd x;
    std::vector<bool> is_price;
    double noisy_profit = 0.0;
    // Simulator truth, kept in memory only.
    Eigen::VectorXd price;
    double true_profit = 0.0;
};

struct Dataset {
    int num_restricted = 0;
    int price_dim = 0;
    bool has_types = false;
    std::vector<ObservationRecord> records;
};

/// Deterministic given cfg.seed; ordered by (market_id, type).
Dataset generate_dataset(const TechnologySpec& tech, const MarketConfig& cfg);

/// x_j = D_j(p_j) for goods with a configured demand curve, p_j otherwise.
Eigen::VectorXd gen_demand_proxy(const MarketConfig& cfg, const Eigen::VectorXd& p);

/// True iff, at every market's conditioning values, the entering types form
/// an upper interval of {1..d_e} and every record's type enters.
bool monotone_presence_audit(const TechnologySpec& tech, const MarketConfig& cfg, const Dataset& data);

void write_csv(std::ostream& os, const Dataset& data, bool include_types);
Dataset read_csv(std::istream& is);

}  // namespace prodenv
