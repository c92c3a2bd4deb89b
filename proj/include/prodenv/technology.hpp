#pragma once

#include "prodenv/convex_core.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace prodenv {

enum class TechnologyKind { PowerScaled, PiecewiseKinked, DiewertGL, HicksNeutral };

std::string to_string(TechnologyKind k);
TechnologyKind technology_kind_from_string(const std::string& s);

/// y = coef * l^expo + offset for l in [lo, hi]; expo in (0, 1].
struct PowerPiece {
    double lo = 0.0;
    double hi = 0.0;
    double coef = 0.0;
    double expo = 1.0;
    double offset = 0.0;
};

/// A family of production sets indexed by type e = 1..num_types.
///
/// Single-output kinds use prices (p_output, p_input) and netputs
/// (y_output, -input). DiewertGL takes any number of goods. Restricted
/// quantities k scale the production set radially by prod_i k_i^beta_i.
struct TechnologySpec {
    TechnologyKind kind = TechnologyKind::PowerScaled;
    int num_types = 0;

    // PowerScaled: f(l, e) = scale[e-1] * l^exponent.  HicksNeutral reuses scale.
    std::vector<double> scale;
    double exponent = 0.5;

    // PiecewiseKinked: one continuous piece list per type, sorted by lo, last hi may be +inf.
    std::vector<std::vector<PowerPiece>> pieces;

    // DiewertGL: one symmetric matrix per type.
    std::vector<Eigen::MatrixXd> coefficients;

    // HicksNeutral: concave piecewise-linear base function through (knot_input, knot_output).
    std::vector<double> knot_input;
    std::vector<double> knot_output;

    std::vector<double> restricted_elasticity;

    int price_dim() const;
    int num_restricted() const { return static_cast<int>(restricted_elasticity.size()); }
    /// Throws ConfigError when parameters are inconsistent.
    void validate() const;

    static TechnologySpec power(std::vector<double> scale, double exponent);
    static TechnologySpec diewert(std::vector<Eigen::MatrixXd> coefficients);
    /// The three nested single-output technologies with nonmonotone supply.
    static TechnologySpec nonmonotone_triple();
};

struct OracleResult {
    double profit = 0.0;
    Eigen::VectorXd optimizer;  ///< netput vector
};

/// Maximal profit of type e (1-based) at prices p.
OracleResult profit_oracle(const TechnologySpec& tech, int e, const Eigen::VectorXd& p,
                           const std::optional<Eigen::VectorXd>& y_restricted = std::nullopt);

/// Strictly increasing in e at every probe ray.
bool nested_check(const TechnologySpec& tech, const std::vector<PriceRay>& probe_rays,
                  const std::optional<Eigen::VectorXd>& y_restricted = std::nullopt);

/// Generalized Leontief profit sum_{s,j} b_sj sqrt(p_s p_j).
double diewert_profit(const Eigen::MatrixXd& b, const Eigen::VectorXd& p);
/// Supply y_s = sum_j b_sj sqrt(p_j / p_s).
Eigen::VectorXd diewert_supply(const Eigen::MatrixXd& b, const Eigen::VectorXd& p);

/// Profit of y_o <= k^alpha l^beta at prices (p_o, p_k, p_l), alpha + beta < 1.
double cobb_douglas_profit(double alpha, double beta, const Eigen::VectorXd& p);

}  // namespace prodenv
