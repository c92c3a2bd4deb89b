#pragma once

#include "prodenv/convex_core.hpp"

#include <Eigen/Core>

#include <limits>
#include <optional>
#include <vector>

namespace prodenv {

/// Observed (ray, profit) pairs for one type.
struct ProfitData {
    int e = 1;
    std::vector<PriceRay> rays;
    std::vector<double> values;
    std::vector<int> nonpositive;  ///< coordinates known to be inputs; added to every program

    int dim() const { return rays.empty() ? 0 : rays.front().dim(); }
    /// Throws ArgumentError on empty or mismatched data, repeated rays or non-finite values.
    void validate() const;
    ProfitData with(const PriceRay& ray, double value) const;
    HalfspaceEnvelope envelope() const;
};

struct BoundResult {
    bool feasible = true;
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
    // Attaining quantities when finite, recession directions when infinite.
    std::optional<Eigen::VectorXd> upper_point, upper_ray;
    std::optional<Eigen::VectorXd> lower_point, lower_ray;
    std::vector<int> lower_argmax;  ///< data rays whose face attains the lower bound (within 1e-9)
    // Grid sweeps only.
    int grid_size = 0;
    int grid_feasible = 0;
    std::optional<PriceRay> upper_at, lower_at;
};

enum class Verdict { DefinitelyNo, DefinitelyYes, Undetermined };
/// No when the upper bound is negative, yes when the lower bound is nonnegative.
Verdict profitability_verdict(const BoundResult& b);
const char* to_string(Verdict v);

struct WapmResult {
    bool feasible = false;
    std::vector<Eigen::VectorXd> quantities;  ///< y_p per data ray when feasible
};

/// Linear feasibility of p.y_p = pi(p) and p'.y_p <= pi(p') for all pairs.
WapmResult wapm_feasible(const ProfitData& data);

/// Upper: sup of p_c.y over the envelope. Lower: max over data faces of the
/// inf of p_c.y on the face. Throws ArgumentError when the data fail WAPM.
BoundResult profit_bounds(const ProfitData& data, const PriceRay& p_c);

/// Sup and inf of u.y_c where y_c is optimal at p_c jointly with quantities
/// rationalizing the data; the counterfactual profit is left free.
BoundResult quantity_bounds(const ProfitData& data, const PriceRay& p_c, const Eigen::VectorXd& u);

/// Profit at a free counterfactual price when coordinate `coord` of the
/// counterfactual quantity is pinned to ybar. The price is swept over ray_grid.
BoundResult profit_bounds_fixed_quantity(const ProfitData& data, int coord, double ybar,
                                         const std::vector<PriceRay>& ray_grid);

/// Independent planar oracle: walks each data face, finds its feasible
/// segment from constraint crossings, samples it with `resolution` points and
/// takes the extreme support values over the induced free-disposal hulls.
/// Two dimensions and at most four rays.
BoundResult brute_force_bounds(const ProfitData& data, const PriceRay& p_c, int resolution);

/// n rays evenly spaced in angle over the closed nonnegative quadrant.
std::vector<PriceRay> quadrant_grid(int n);
/// About n nearly uniform rays in the open positive octant (Fibonacci lattice).
std::vector<PriceRay> octant_grid(int n);
/// 720 rays in two dimensions, 10^4 in three.
std::vector<PriceRay> default_ray_grid(int dim);

}  // namespace prodenv
