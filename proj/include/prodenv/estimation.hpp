#pragma once

#include "prodenv/convex_core.hpp"

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace prodenv {

struct PriceObservation {
    Eigen::VectorXd price;
    double value = 0.0;
};

struct DiewertFitOptions {
    bool sign_constraints = true;   ///< b_jj >= 0, b_sj <= 0 off the diagonal
    bool monotone = true;           ///< b(e+1) >= b(e) entrywise, diagonal by at least min_increment
    double min_increment = 1e-6;
    double quantile = 0.5;          ///< check-loss level; 0.5 is least absolute deviations
};

struct DiewertFit {
    std::vector<Eigen::MatrixXd> coefficients;  ///< one symmetric matrix per type
    std::vector<double> loss;                   ///< check-loss objective per type
    std::vector<double> max_residual;           ///< largest |value - fit| per type
    double min_sign_slack = 0.0;                ///< smallest slack over active sign constraints
    double min_monotone_slack = 0.0;            ///< smallest b(e+1) - b(e) over constrained entries

    double profit(const Eigen::VectorXd& p, int e) const;
    Eigen::VectorXd supply(const Eigen::VectorXd& p, int e) const;
};

/// Check-loss regression of the generalized Leontief form, one type per
/// entry of `observations` (ascending e), as a single linear program.
DiewertFit fit_diewert(const std::vector<std::vector<PriceObservation>>& observations, int d_y,
                       const DiewertFitOptions& opt = {});

/// Profit of type e (1-based) at p.
using TypedPriceFunction = std::function<double(const Eigen::VectorXd&, int)>;

/// One halfspace per ray of pbar with value pi_hat(ray, e).
HalfspaceEnvelope plugin_set(const TypedPriceFunction& pi_hat, const RestrictedPriceSet& pbar, int e);

struct DualityReport {
    int dim = 0;
    int grid_size = 0;
    double eta = 0.0;   ///< max over pbar of |pi_hat - pi| (rays are unit)
    double d_h = 0.0;   ///< support-function formula on the two plug-in envelopes
    std::optional<double> d_h_oracle;  ///< planar geometric distance
    double R = 0.0, r = 0.0;           ///< max and min of pi over pbar
    bool convex_branch = true;
    bool applicable = true;            ///< false when the nonconvex bound's hypothesis eta < r fails
    std::optional<double> bound;       ///< nonconvex branch only
    bool pass = false;
    std::string note;
};

struct DualityOptions {
    double equality_tol = 1e-6;
    double oracle_tol = 2e-3;
    int oracle_samples = 10000;  ///< 0 skips the planar oracle
};

/// Checks the sup-norm / Hausdorff duality for one type. Throws ArgumentError
/// when the nonconvex branch has r <= 0.
DualityReport duality_check(const TypedPriceFunction& pi_true, const TypedPriceFunction& pi_hat,
                            const RestrictedPriceSet& pbar, int e, bool convex_flag, const DualityOptions& opt = {});

struct DivergenceRow {
    double window = 0.0;             ///< y2 ranges over [-window, 0]
    double directed_distance = 0.0;  ///< sup over the true set of the distance to the estimate
};

struct InfiniteHausdorffReport {
    int m = 10;
    std::vector<DivergenceRow> rows;
    double eta = 0.0;           ///< closed-form sup-norm error over the compact price set
    double d_h = 0.0;           ///< formula on the extended sets
    double d_h_oracle = 0.0;    ///< planar geometric distance between the extended sets
    std::vector<std::pair<int, double>> eta_by_m;  ///< eta as m grows
};

/// {y1 <= sqrt(-y2)} against {y1 <= (1 - 1/m) sqrt(-y2)}: the distance on
/// growing windows diverges, while the sets extended over the price cone
/// 0.1 <= p2/p1 <= 10 stay at a finite distance equal to eta.
InfiniteHausdorffReport infinite_hausdorff_demo(int m = 10, std::vector<double> windows = {1e2, 1e4, 1e6},
                                                int grid_rays = 101);

}  // namespace prodenv
