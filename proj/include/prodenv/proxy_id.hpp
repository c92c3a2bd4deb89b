#pragma once

#include "prodenv/market.hpp"
#include "prodenv/profit_id.hpp"

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <vector>

namespace prodenv {

/// Profit as a function of proxies on a box, with finite-difference partials.
class Surface {
public:
    using Fn = std::function<double(const Eigen::VectorXd&)>;

    /// step[j] is the finite-difference step along coordinate j.
    Surface(Fn f, Eigen::VectorXd lo, Eigen::VectorXd hi, Eigen::VectorXd step);

    /// Multilinear interpolation of values on a rectangular grid, last axis fastest.
    static Surface tabulated(std::vector<std::vector<double>> axes, std::vector<double> values);
    /// Identified profits of type e over the x coordinates of the cell grid.
    /// Restricted coordinates must take a single value (one stratum).
    static Surface from_profit_table(const ProfitTable& table, int e);
    /// Mean noisy profit at each distinct proxy vector; the proxies must lie on a full grid.
    static Surface mean_profile(const Dataset& data);

    int dim() const { return static_cast<int>(lo_.size()); }
    double operator()(const Eigen::VectorXd& x) const;
    /// Fourth-order central difference where the stencil fits, lower order near the edges.
    double partial(const Eigen::VectorXd& x, int j) const;
    bool contains(const Eigen::VectorXd& x, double tol = 1e-12) const;
    const Eigen::VectorXd& lower() const { return lo_; }
    const Eigen::VectorXd& upper() const { return hi_; }
    /// Grid axes for tabulated surfaces, empty otherwise.
    const std::vector<std::vector<double>>& axes() const { return axes_; }

private:
    Fn f_;
    Eigen::VectorXd lo_, hi_, step_;
    std::vector<std::vector<double>> axes_;
};

struct RankDiagnostic {
    Eigen::VectorXd x_minus;
    std::vector<double> anchors;  ///< values of the observed-price proxy
    Eigen::MatrixXd matrix;       ///< row l: partials at (x_minus, anchors[l])
    double condition = 0.0;
    bool nonsingular = false;
};

inline constexpr double kRankConditionLimit = 1e8;

/// Matrix of partials in the unobserved coordinates at each anchor. `observed`
/// indexes the coordinate whose price equals its proxy (default: last).
RankDiagnostic rank_matrix(const Surface& pi, const Eigen::VectorXd& x_minus, const std::vector<double>& anchors,
                           int observed = -1);

/// n values spread evenly in rank over the sample (quantile levels (l+1)/(n+1)).
std::vector<double> quantile_anchors(std::vector<double> values, int n);

struct TSolution {
    Eigen::VectorXd t;  ///< g_j / g_j' for the unobserved coordinates, in order
    RankDiagnostic diagnostic;
    bool derivative_vanishing = false;  ///< some |t_j| exceeded 1e12
};

/// Solves the Euler system at x. anchors default to quantile_anchors of the
/// observed coordinate's range when empty.
TSolution solve_t(const Surface& pi, const Eigen::VectorXd& x, std::vector<double> anchors = {}, int observed = -1,
                  double alpha = 1.0);

/// Tabulated proxy-to-price map for one good.
struct ProxyCurve {
    std::vector<double> grid;
    std::vector<double> g;
    bool observed = false;
    std::vector<double> gaps;  ///< grid points excluded from integration

    double operator()(double x) const;  ///< log-linear interpolation; identity when observed
    double t_ratio(double x) const;     ///< g / g' from the tabulation
};

struct ProxyModel {
    std::vector<ProxyCurve> goods;
    Eigen::VectorXd anchor_x, anchor_p;
    std::vector<RankDiagnostic> diagnostics;

    Eigen::VectorXd price(const Eigen::VectorXd& x) const;
};

/// log g(x) = log p0 + integral from x0 of ds / t(s), with t linear between
/// grid points. Non-finite or |t| > 1e12 entries are skipped; a sign change of
/// t throws NumericError. x0 is inserted into the grid when missing.
ProxyCurve integrate_g(std::vector<double> grid, std::vector<double> t, double x0, double p0);

/// Full recovery: t tabulated along each unobserved axis of the surface grid
/// with the other coordinates held at x0, then integrated from the anchor.
/// `grids` gives the nodes per coordinate (defaults to the surface axes).
ProxyModel recover_proxy_model(const Surface& pi, const Eigen::VectorXd& x0, const Eigen::VectorXd& p0,
                               int observed = -1, std::vector<std::vector<double>> grids = {},
                               std::vector<double> anchors = {});

/// Value-as-proxy case: log g(v) = log p0 + integral of pi'(s) / s ds with pi'
/// from finite differences, integrated exactly for piecewise-linear pi'.
ProxyCurve recover_g_housing(const std::vector<double>& vbar, const std::vector<double>& p_land, double v0, double p0);

/// sum_j d_j pi * t_j - alpha * (pi - offset) over the goods in the model.
/// Observed goods contribute t_j = x_j. `skip` lists coordinates left out of the
/// sum (fixed or non-excluded prices); their contribution enters via offset.
double euler_system_residual(const Surface& pi, const ProxyModel& model, const Eigen::VectorXd& x, double alpha = 1.0,
                             double offset = 0.0, const std::vector<int>& skip = {});

/// Per-acre housing producers y_o = A(e) m^gamma(e) with unit material price.
struct HousingEconomy {
    std::vector<double> productivity;  ///< A(e)
    std::vector<double> gamma;         ///< one entry shared by all types, or one per type
    std::vector<double> weights;       ///< type shares, same in every market

    struct Market {
        double vbar = 0.0;      ///< average value of housing
        double materials = 0.0; ///< average materials
        double p_land = 0.0;    ///< land price under zero average profit
    };
    Market at(double p_house) const;
};

}  // namespace prodenv
