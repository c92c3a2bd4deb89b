#include "prodenv/lp.hpp"

#include "prodenv/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace prodenv::lp {

Problem::Problem(int num_vars, Sense sense)
    : sense_(sense),
      objective_(Eigen::VectorXd::Zero(num_vars)),
      lower_(num_vars, 0.0),
      upper_(num_vars, kInf) {
    if (num_vars <= 0) throw ArgumentError("lp::Problem needs at least one variable");
}

void Problem::set_objective(const Eigen::VectorXd& c) {
    if (c.size() != objective_.size()) throw ArgumentError("lp: objective size mismatch");
    objective_ = c;
}

void Problem::set_bounds(int j, double lo, double hi) {
    if (lo > hi) throw ArgumentError("lp: lower bound exceeds upper bound for variable " + std::to_string(j));
    lower_[j] = lo;
    upper_[j] = hi;
}

void Problem::set_all_free() {
    std::fill(lower_.begin(), lower_.end(), -kInf);
    std::fill(upper_.begin(), upper_.end(), kInf);
}

int Problem::add_row(std::span<const double> coeffs, RowType type, double rhs) {
    if (static_cast<int>(coeffs.size()) != num_vars()) throw ArgumentError("lp: row length mismatch");
    Eigen::VectorXd row(num_vars());
    for (int j = 0; j < num_vars(); ++j) row[j] = coeffs[j];
    rows_.push_back(std::move(row));
    row_types_.push_back(type);
    rhs_.push_back(rhs);
    return num_rows() - 1;
}

int Problem::add_row(const std::vector<std::pair<int, double>>& coeffs, RowType type, double rhs) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(num_vars());
    for (auto [j, a] : coeffs) {
        if (j < 0 || j >= num_vars()) throw ArgumentError("lp: sparse row index out of range");
        row[j] += a;
    }
    rows_.push_back(std::move(row));
    row_types_.push_back(type);
    rhs_.push_back(rhs);
    return num_rows() - 1;
}

namespace {

using Tableau = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// x_j = offset_j + sum over its columns of coef * z_col, z >= 0.
struct VarMap {
    double offset = 0.0;
    int col_a = -1;
    double coef_a = 0.0;
    int col_b = -1;
    double coef_b = 0.0;
};

class Simplex {
public:
    Simplex(const Problem& p, const Options& opt) : p_(p), opt_(opt) { build(); }

    Solution run();

private:
    void build();
    void pivot(int row, int col);
    // Returns false when unbounded (entering column recorded in unbounded_col_).
    bool optimize();
    void price_row(const Eigen::VectorXd& cost);
    Eigen::VectorXd z_point() const;
    Eigen::VectorXd to_x(const Eigen::VectorXd& z, bool direction) const;

    const Problem& p_;
    Options opt_;
    std::vector<VarMap> vars_;
    int n_struct_ = 0;  // structural z columns
    int n_cols_ = 0;    // all columns except rhs
    int m_ = 0;
    Tableau t_;  // m_ constraint rows + 1 objective row; last column is rhs
    std::vector<int> basis_;
    std::vector<bool> artificial_;
    std::vector<bool> may_enter_;
    std::vector<bool> dead_row_;
    Eigen::VectorXd phase2_cost_;
    int unbounded_col_ = -1;
    int iterations_ = 0;
    int max_iterations_ = 0;
    double rhs_scale_ = 1.0;
};

void Simplex::build() {
    const int n = p_.num_vars();
    vars_.resize(n);
    std::vector<std::pair<int, double>> upper_rows;  // (z column, width) for boxed vars
    int col = 0;
    for (int j = 0; j < n; ++j) {
        const double lo = p_.lower(j), hi = p_.upper(j);
        VarMap& v = vars_[j];
        if (std::isfinite(lo)) {
            v.offset = lo;
            v.col_a = col++;
            v.coef_a = 1.0;
            if (std::isfinite(hi)) upper_rows.emplace_back(v.col_a, hi - lo);
        } else if (std::isfinite(hi)) {
            v.offset = hi;
            v.col_a = col++;
            v.coef_a = -1.0;
        } else {
            v.col_a = col++;
            v.coef_a = 1.0;
            v.col_b = col++;
            v.coef_b = -1.0;
        }
    }
    n_struct_ = col;

    // Rows in z-space, before slacks.
    struct ZRow {
        Eigen::VectorXd a;
        RowType type;
        double b;
    };
    std::vector<ZRow> zrows;
    zrows.reserve(p_.num_rows() + upper_rows.size());
    for (int i = 0; i < p_.num_rows(); ++i) {
        const Eigen::VectorXd& a = p_.rows()[i];
        Eigen::VectorXd za = Eigen::VectorXd::Zero(n_struct_);
        double b = p_.rhs()[i];
        for (int j = 0; j < n; ++j) {
            if (a[j] == 0.0) continue;
            const VarMap& v = vars_[j];
            b -= a[j] * v.offset;
            za[v.col_a] += a[j] * v.coef_a;
            if (v.col_b >= 0) za[v.col_b] += a[j] * v.coef_b;
        }
        zrows.push_back({std::move(za), p_.row_types()[i], b});
    }
    for (auto [c, width] : upper_rows) {
        Eigen::VectorXd za = Eigen::VectorXd::Zero(n_struct_);
        za[c] = 1.0;
        zrows.push_back({std::move(za), RowType::LessEqual, width});
    }
    m_ = static_cast<int>(zrows.size());

    int n_slack = 0;
    for (const auto& r : zrows)
        if (r.type != RowType::Equal) ++n_slack;

    // Decide which rows need an artificial start.
    std::vector<int> slack_col(m_, -1);
    std::vector<double> sign(m_, 1.0);
    std::vector<bool> needs_art(m_, false);
    int s = n_struct_;
    int n_art = 0;
    for (int i = 0; i < m_; ++i) {
        const auto& r = zrows[i];
        double slack_coef = 0.0;
        if (r.type == RowType::LessEqual) slack_coef = 1.0;
        if (r.type == RowType::GreaterEqual) slack_coef = -1.0;
        if (r.type != RowType::Equal) slack_col[i] = s++;
        sign[i] = (r.b < 0.0 || (r.b == 0.0 && slack_coef < 0.0)) ? -1.0 : 1.0;
        needs_art[i] = !(slack_coef * sign[i] > 0.0);
        if (needs_art[i]) ++n_art;
    }
    n_cols_ = n_struct_ + n_slack + n_art;
    t_ = Tableau::Zero(m_ + 1, n_cols_ + 1);
    basis_.assign(m_, -1);
    artificial_.assign(n_cols_, false);
    may_enter_.assign(n_cols_, true);
    dead_row_.assign(m_, false);

    int a = n_struct_ + n_slack;
    for (int i = 0; i < m_; ++i) {
        const auto& r = zrows[i];
        for (int c = 0; c < n_struct_; ++c) t_(i, c) = sign[i] * r.a[c];
        if (slack_col[i] >= 0) {
            const double slack_coef = r.type == RowType::LessEqual ? 1.0 : -1.0;
            t_(i, slack_col[i]) = sign[i] * slack_coef;
        }
        t_(i, n_cols_) = sign[i] * r.b;
        rhs_scale_ = std::max(rhs_scale_, std::abs(r.b));
        if (needs_art[i]) {
            t_(i, a) = 1.0;
            artificial_[a] = true;
            basis_[i] = a++;
        } else {
            basis_[i] = slack_col[i];
        }
    }

    phase2_cost_ = Eigen::VectorXd::Zero(n_cols_);
    const double flip = p_.sense() == Sense::Maximize ? -1.0 : 1.0;
    for (int j = 0; j < n; ++j) {
        const VarMap& v = vars_[j];
        phase2_cost_[v.col_a] += flip * p_.objective()[j] * v.coef_a;
        if (v.col_b >= 0) phase2_cost_[v.col_b] += flip * p_.objective()[j] * v.coef_b;
    }
    max_iterations_ = opt_.max_iterations > 0 ? opt_.max_iterations : 50 * (m_ + n_cols_) + 1000;
}

void Simplex::pivot(int row, int col) {
    const double piv = t_(row, col);
    t_.row(row) /= piv;
    for (int i = 0; i <= m_; ++i) {
        if (i == row) continue;
        const double f = t_(i, col);
        if (f != 0.0) t_.row(i) -= f * t_.row(row);
    }
    basis_[row] = col;
    ++iterations_;
}

void Simplex::price_row(const Eigen::VectorXd& cost) {
    t_.row(m_).setZero();
    for (int c = 0; c < n_cols_; ++c) t_(m_, c) = cost[c];
    for (int i = 0; i < m_; ++i) {
        if (dead_row_[i]) continue;
        const double cb = cost[basis_[i]];
        if (cb != 0.0) t_.row(m_) -= cb * t_.row(i);
    }
}

bool Simplex::optimize() {
    int degenerate_streak = 0;
    bool bland = false;
    const double rc_tol = opt_.feasibility_tol;
    while (true) {
        if (iterations_ > max_iterations_) throw NumericError("simplex: iteration limit exceeded");
        int enter = -1;
        double best = -rc_tol;
        for (int c = 0; c < n_cols_; ++c) {
            if (!may_enter_[c]) continue;
            const double rc = t_(m_, c);
            if (rc < -rc_tol) {
                if (bland) {
                    enter = c;
                    break;
                }
                if (rc < best) {
                    best = rc;
                    enter = c;
                }
            }
        }
        if (enter < 0) return true;

        int leave = -1;
        double best_ratio = 0.0;
        for (int i = 0; i < m_; ++i) {
            if (dead_row_[i]) continue;
            const double a = t_(i, enter);
            if (a <= opt_.pivot_tol) continue;
            const double ratio = std::max(t_(i, n_cols_), 0.0) / a;
            if (leave < 0 || ratio < best_ratio - 1e-12 * (1.0 + best_ratio) ||
                (std::abs(ratio - best_ratio) <= 1e-12 * (1.0 + best_ratio) && basis_[i] < basis_[leave])) {
                leave = i;
                best_ratio = ratio;
            }
        }
        if (leave < 0) {
            unbounded_col_ = enter;
            return false;
        }
        if (best_ratio <= opt_.feasibility_tol) {
            if (++degenerate_streak > opt_.degenerate_switch) bland = true;
        } else {
            degenerate_streak = 0;
        }
        pivot(leave, enter);
    }
}

Eigen::VectorXd Simplex::z_point() const {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(n_cols_);
    for (int i = 0; i < m_; ++i)
        if (!dead_row_[i]) z[basis_[i]] = std::max(t_(i, n_cols_), 0.0);
    return z;
}

Eigen::VectorXd Simplex::to_x(const Eigen::VectorXd& z, bool direction) const {
    Eigen::VectorXd x(p_.num_vars());
    for (int j = 0; j < p_.num_vars(); ++j) {
        const VarMap& v = vars_[j];
        double val = direction ? 0.0 : v.offset;
        val += v.coef_a * z[v.col_a];
        if (v.col_b >= 0) val += v.coef_b * z[v.col_b];
        x[j] = val;
    }
    return x;
}

Solution Simplex::run() {
    Solution sol;
    const bool any_artificial = std::any_of(artificial_.begin(), artificial_.end(), [](bool b) { return b; });
    if (any_artificial) {
        Eigen::VectorXd cost = Eigen::VectorXd::Zero(n_cols_);
        for (int c = 0; c < n_cols_; ++c)
            if (artificial_[c]) cost[c] = 1.0;
        price_row(cost);
        optimize();  // phase one is bounded below by zero
        const double infeas = -t_(m_, n_cols_);
        if (infeas > opt_.feasibility_tol * rhs_scale_ * 10.0) {
            sol.status = Status::Infeasible;
            sol.iterations = iterations_;
            return sol;
        }
        // Drive artificials out of the basis; rows that cannot be pivoted are redundant.
        for (int i = 0; i < m_; ++i) {
            if (!artificial_[basis_[i]]) continue;
            int col = -1;
            double best = 1e-9;
            for (int c = 0; c < n_cols_; ++c) {
                if (artificial_[c]) continue;
                if (std::abs(t_(i, c)) > best) {
                    best = std::abs(t_(i, c));
                    col = c;
                }
            }
            if (col >= 0) {
                pivot(i, col);
            } else {
                dead_row_[i] = true;
            }
        }
        for (int c = 0; c < n_cols_; ++c)
            if (artificial_[c]) may_enter_[c] = false;
    }

    price_row(phase2_cost_);
    const bool bounded = optimize();
    sol.iterations = iterations_;
    const Eigen::VectorXd z = z_point();
    sol.x = to_x(z, false);
    if (!bounded) {
        Eigen::VectorXd dz = Eigen::VectorXd::Zero(n_cols_);
        dz[unbounded_col_] = 1.0;
        for (int i = 0; i < m_; ++i)
            if (!dead_row_[i]) dz[basis_[i]] = -t_(i, unbounded_col_);
        sol.ray = to_x(dz, true);
        sol.status = Status::Unbounded;
        sol.objective = p_.sense() == Sense::Maximize ? kInf : -kInf;
        return sol;
    }
    sol.status = Status::Optimal;
    sol.objective = p_.objective().dot(sol.x);
    return sol;
}

}  // namespace

Solution solve(const Problem& problem, const Options& options) {
    Simplex s(problem, options);
    return s.run();
}

}  // namespace prodenv::lp
