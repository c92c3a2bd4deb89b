#pragma once

#include <Eigen/Core>

#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace prodenv::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { Minimize, Maximize };
enum class RowType { LessEqual, GreaterEqual, Equal };
enum class Status { Optimal, Infeasible, Unbounded };

/** A dense linear program
 *
 *     optimize  c'x
 *     s.t.      a_i'x (<=, >=, =) b_i
 *               lo_j <= x_j <= hi_j      (either side may be infinite)
 *
 * Variables default to the nonnegative orthant, i.e. bounds [0, +inf).
 */
class Problem {
public:
    explicit Problem(int num_vars, Sense sense = Sense::Maximize);

    int num_vars() const { return static_cast<int>(objective_.size()); }
    int num_rows() const { return static_cast<int>(rhs_.size()); }
    Sense sense() const { return sense_; }

    void set_objective(int j, double c) { objective_[j] = c; }
    void set_objective(const Eigen::VectorXd& c);
    const Eigen::VectorXd& objective() const { return objective_; }

    void set_bounds(int j, double lo, double hi);
    void set_free(int j) { set_bounds(j, -kInf, kInf); }
    void set_all_free();
    double lower(int j) const { return lower_[j]; }
    double upper(int j) const { return upper_[j]; }

    /// Dense row; coeffs.size() must equal num_vars().
    int add_row(std::span<const double> coeffs, RowType type, double rhs);
    /// Sparse row given as (variable index, coefficient) pairs.
    int add_row(const std::vector<std::pair<int, double>>& coeffs, RowType type, double rhs);

    const std::vector<Eigen::VectorXd>& rows() const { return rows_; }
    const std::vector<RowType>& row_types() const { return row_types_; }
    const std::vector<double>& rhs() const { return rhs_; }

private:
    Sense sense_;
    Eigen::VectorXd objective_;
    std::vector<double> lower_;
    std::vector<double> upper_;
    std::vector<Eigen::VectorXd> rows_;
    std::vector<RowType> row_types_;
    std::vector<double> rhs_;
};

struct Options {
    double feasibility_tol = 1e-9;
    double pivot_tol = 1e-11;
    /// Consecutive degenerate pivots tolerated under Dantzig pricing before
    /// switching to Bland's rule for the remainder of the phase.
    int degenerate_switch = 50;
    int max_iterations = 0;  ///< 0 picks a size-dependent default
};

struct Solution {
    Status status = Status::Infeasible;
    double objective = 0.0;  ///< meaningful when Optimal; +-inf when Unbounded
    Eigen::VectorXd x;       ///< primal point (Optimal), or a feasible point (Unbounded)
    /// For Unbounded: a direction d with A d compatible with every row
    /// (<= 0 for <=-rows, >= 0 for >=-rows, = 0 for equalities), compatible with
    /// the variable bounds, and improving the objective.
    Eigen::VectorXd ray;
    int iterations = 0;

    bool optimal() const { return status == Status::Optimal; }
};

Solution solve(const Problem& problem, const Options& options = {});

}  // namespace prodenv::lp
