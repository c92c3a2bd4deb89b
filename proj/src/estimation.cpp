#include "prodenv/estimation.hpp"

#include "prodenv/error.hpp"
#include "prodenv/lp.hpp"
#include "prodenv/parallel.hpp"
#include "prodenv/technology.hpp"

#include <Eigen/SVD>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace prodenv {

namespace {

struct CoefIndex {
    int s, j;
};

std::vector<CoefIndex> upper_triangle(int d) {
    std::vector<CoefIndex> idx;
    for (int s = 0; s < d; ++s)
        for (int j = s; j < d; ++j) idx.push_back({s, j});
    return idx;
}

// Off-diagonal coefficients appear twice in the symmetric quadratic form.
Eigen::VectorXd features(const Eigen::VectorXd& p, const std::vector<CoefIndex>& idx) {
    Eigen::VectorXd f(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto [s, j] = idx[k];
        f[static_cast<Eigen::Index>(k)] = (s == j ? 1.0 : 2.0) * std::sqrt(p[s] * p[j]);
    }
    return f;
}

void check_identifiable(const std::vector<PriceObservation>& obs, int d, const std::vector<CoefIndex>& idx, int e) {
    const int need = d * (d + 1) / 2;
    std::vector<Eigen::VectorXd> distinct;
    for (const auto& o : obs) {
        if (o.price.size() != d) throw ArgumentError("fit_diewert: price dimension mismatch");
        if (!o.price.allFinite() || o.price.minCoeff() <= 0.0) throw ArgumentError("fit_diewert: prices must be finite and positive");
        if (!std::isfinite(o.value)) throw NumericError("fit_diewert: non-finite profit value");
        const Eigen::VectorXd u = o.price.normalized();
        if (std::none_of(distinct.begin(), distinct.end(), [&](const Eigen::VectorXd& q) { return (q - u).norm() < 1e-12; }))
            distinct.push_back(u);
    }
    const std::string where = " for type " + std::to_string(e);
    if (static_cast<int>(distinct.size()) < need)
        throw IdentificationError("fit_diewert: " + std::to_string(distinct.size()) + " distinct rays" + where + ", need " +
                                  std::to_string(need));
    Eigen::MatrixXd design(static_cast<Eigen::Index>(distinct.size()), need);
    for (std::size_t i = 0; i < distinct.size(); ++i) design.row(static_cast<Eigen::Index>(i)) = features(distinct[i], idx).transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(design);
    const auto& sv = svd.singularValues();
    if (sv[sv.size() - 1] <= 1e-10 * sv[0]) throw IdentificationError("fit_diewert: rank-deficient ray design" + where);
}

double check_loss(double resid, double tau) { return resid >= 0.0 ? tau * resid : (tau - 1.0) * resid; }

}  // namespace

double DiewertFit::profit(const Eigen::VectorXd& p, int e) const {
    if (e < 1 || e > static_cast<int>(coefficients.size())) throw ArgumentError("DiewertFit: type out of range");
    return diewert_profit(coefficients[e - 1], p);
}

Eigen::VectorXd DiewertFit::supply(const Eigen::VectorXd& p, int e) const {
    if (e < 1 || e > static_cast<int>(coefficients.size())) throw ArgumentError("DiewertFit: type out of range");
    return diewert_supply(coefficients[e - 1], p);
}

DiewertFit fit_diewert(const std::vector<std::vector<PriceObservation>>& observations, int d_y, const DiewertFitOptions& opt) {
    if (d_y < 1) throw ArgumentError("fit_diewert: d_y must be positive");
    if (observations.empty()) throw ArgumentError("fit_diewert: no types");
    if (!(opt.quantile > 0.0 && opt.quantile < 1.0)) throw ArgumentError("fit_diewert: quantile must lie in (0, 1)");
    if (!(opt.min_increment >= 0.0)) throw ArgumentError("fit_diewert: min_increment must be nonnegative");

    const auto idx = upper_triangle(d_y);
    const int nb = static_cast<int>(idx.size());
    const int n_types = static_cast<int>(observations.size());
    for (int e = 0; e < n_types; ++e) check_identifiable(observations[e], d_y, idx, e + 1);

    // Solve the types in `group` jointly; returns coefficients per type.
    auto solve_group = [&](const std::vector<int>& group, bool couple) {
        std::vector<int> coef_off(group.size()), resid_off(group.size());
        int nv = 0;
        for (std::size_t g = 0; g < group.size(); ++g) {
            coef_off[g] = nv;
            nv += nb;
        }
        for (std::size_t g = 0; g < group.size(); ++g) {
            resid_off[g] = nv;
            nv += 2 * static_cast<int>(observations[group[g]].size());
        }
        lp::Problem prob(nv, lp::Sense::Minimize);
        for (std::size_t g = 0; g < group.size(); ++g) {
            for (int k = 0; k < nb; ++k) {
                const int v = coef_off[g] + k;
                if (!opt.sign_constraints)
                    prob.set_free(v);
                else if (idx[k].s == idx[k].j)
                    prob.set_bounds(v, 0.0, lp::kInf);
                else
                    prob.set_bounds(v, -lp::kInf, 0.0);
            }
            const auto& obs = observations[group[g]];
            for (std::size_t i = 0; i < obs.size(); ++i) {
                const int up = resid_off[g] + 2 * static_cast<int>(i);
                prob.set_objective(up, opt.quantile);
                prob.set_objective(up + 1, 1.0 - opt.quantile);
                const Eigen::VectorXd f = features(obs[i].price, idx);
                std::vector<std::pair<int, double>> row;
                for (int k = 0; k < nb; ++k) row.emplace_back(coef_off[g] + k, f[k]);
                row.emplace_back(up, 1.0);
                row.emplace_back(up + 1, -1.0);
                prob.add_row(row, lp::RowType::Equal, obs[i].value);
            }
        }
        if (couple) {
            for (std::size_t g = 1; g < group.size(); ++g)
                for (int k = 0; k < nb; ++k) {
                    const double inc = idx[k].s == idx[k].j ? opt.min_increment : 0.0;
                    prob.add_row({{coef_off[g] + k, 1.0}, {coef_off[g - 1] + k, -1.0}}, lp::RowType::GreaterEqual, inc);
                }
        }
        const lp::Solution sol = lp::solve(prob);
        if (sol.status == lp::Status::Infeasible)
            throw IdentificationError("fit_diewert: shape constraints conflict (LP infeasible)");
        if (sol.status != lp::Status::Optimal) throw NumericError("fit_diewert: regression LP did not reach an optimum");
        std::vector<Eigen::MatrixXd> out;
        for (std::size_t g = 0; g < group.size(); ++g) {
            Eigen::MatrixXd b(d_y, d_y);
            for (int k = 0; k < nb; ++k) b(idx[k].s, idx[k].j) = b(idx[k].j, idx[k].s) = sol.x[coef_off[g] + k];
            out.push_back(std::move(b));
        }
        return out;
    };

    DiewertFit fit;
    if (opt.monotone) {
        std::vector<int> all(n_types);
        for (int e = 0; e < n_types; ++e) all[e] = e;
        fit.coefficients = solve_group(all, true);
    } else {
        fit.coefficients.resize(n_types);
        parallel_for(n_types, [&](int e) { fit.coefficients[e] = solve_group({e}, false).front(); });
    }

    fit.min_sign_slack = std::numeric_limits<double>::infinity();
    fit.min_monotone_slack = std::numeric_limits<double>::infinity();
    for (int e = 0; e < n_types; ++e) {
        double loss = 0.0, worst = 0.0;
        for (const auto& o : observations[e]) {
            const double r = o.value - fit.profit(o.price, e + 1);
            loss += check_loss(r, opt.quantile);
            worst = std::max(worst, std::abs(r));
        }
        fit.loss.push_back(loss);
        fit.max_residual.push_back(worst);
        const auto& b = fit.coefficients[e];
        for (const auto& [s, j] : idx) {
            if (opt.sign_constraints) fit.min_sign_slack = std::min(fit.min_sign_slack, s == j ? b(s, j) : -b(s, j));
            if (opt.monotone && e > 0)
                fit.min_monotone_slack = std::min(fit.min_monotone_slack,
                                                  b(s, j) - fit.coefficients[e - 1](s, j) - (s == j ? opt.min_increment : 0.0));
        }
    }
    return fit;
}

HalfspaceEnvelope plugin_set(const TypedPriceFunction& pi_hat, const RestrictedPriceSet& pbar, int e) {
    pbar.validate();
    std::vector<Halfspace> cons;
    cons.reserve(pbar.rays.size());
    for (const auto& r : pbar.rays) {
        const double v = pi_hat(r.components(), e);
        if (!std::isfinite(v)) throw NumericError("plugin_set: non-finite profit on a grid ray");
        cons.push_back({r, v});
    }
    return HalfspaceEnvelope(pbar.dimension(), std::move(cons));
}

DualityReport duality_check(const TypedPriceFunction& pi_true, const TypedPriceFunction& pi_hat,
                            const RestrictedPriceSet& pbar, int e, bool convex_flag, const DualityOptions& opt) {
    const HalfspaceEnvelope truth = plugin_set(pi_true, pbar, e);
    const HalfspaceEnvelope est = plugin_set(pi_hat, pbar, e);
    const int n = static_cast<int>(pbar.rays.size());

    DualityReport rep;
    rep.dim = pbar.dimension();
    rep.grid_size = n;
    rep.convex_branch = convex_flag;
    rep.R = -std::numeric_limits<double>::infinity();
    rep.r = std::numeric_limits<double>::infinity();
    // Support values of both envelopes at every grid ray; for a convex
    // function these reproduce the plugged-in values.
    std::vector<double> h_true(n), h_est(n);
    for (int i = 0; i < n; ++i) {
        const double a = truth.constraints()[i].value, b = est.constraints()[i].value;
        rep.eta = std::max(rep.eta, std::abs(a - b));
        rep.R = std::max(rep.R, a);
        rep.r = std::min(rep.r, a);
    }
    parallel_for(n, [&](int i) {
        const auto st = support_value(truth, pbar.rays[i]);
        const auto se = support_value(est, pbar.rays[i]);
        if (!st.finite || !se.finite) throw NumericError("duality_check: unbounded support at a grid ray");
        h_true[i] = st.value;
        h_est[i] = se.value;
    });
    rep.d_h = hausdorff_extended(h_true, h_est, pbar);
    if (rep.dim == 2 && opt.oracle_samples > 0) rep.d_h_oracle = hausdorff_oracle_2d(truth, est, opt.oracle_samples);

    if (convex_flag) {
        rep.pass = std::abs(rep.d_h - rep.eta) <= opt.equality_tol;
        if (rep.d_h_oracle) rep.pass = rep.pass && std::abs(*rep.d_h_oracle - rep.d_h) <= opt.oracle_tol;
        rep.note = rep.pass ? "d_H equals eta" : "d_H differs from eta";
        return rep;
    }
    if (rep.r <= 0.0) throw ArgumentError("duality_check: bound inapplicable, min of pi over the grid is not positive");
    if (rep.eta >= rep.r) {
        rep.applicable = false;
        rep.pass = false;
        rep.note = "bound inapplicable: eta >= r";
        return rep;
    }
    rep.bound = rep.eta * (rep.R / rep.r) * (1.0 + rep.eta / rep.R) / (1.0 - rep.eta / rep.r);
    rep.pass = rep.d_h <= *rep.bound + 1e-12;
    rep.note = rep.pass ? "d_H within bound" : "d_H exceeds bound";
    return rep;
}

namespace {

// Distance from (sqrt(t), -t) on the boundary of {y1 <= sqrt(-y2)} to the
// shrunk set {y1 <= c sqrt(-y2)}. The nearest point is (c u, -u^2) for some
// u in [0, sqrt(t)]; the objective is a quartic in u, so scan then refine.
double gap_to_shrunk(double t, double c) {
    const double st = std::sqrt(t);
    auto f = [&](double u) {
        const double a = st - c * u, b = u * u - t;
        return a * a + b * b;
    };
    constexpr int kScan = 400;
    int best = 0;
    double fbest = f(0.0);
    for (int k = 1; k <= kScan; ++k) {
        const double v = f(st * k / kScan);
        if (v < fbest) {
            fbest = v;
            best = k;
        }
    }
    const double lo = st * std::max(0, best - 1) / kScan, hi = st * std::min(kScan, best + 1) / kScan;
    const auto [u, val] = boost::math::tools::brent_find_minima(f, lo, hi, 52);
    return std::sqrt(std::min(val, fbest));
}

}  // namespace

InfiniteHausdorffReport infinite_hausdorff_demo(int m, std::vector<double> windows, int grid_rays) {
    if (m < 2) throw ArgumentError("infinite_hausdorff_demo: m must be at least 2");
    if (grid_rays < 2) throw ArgumentError("infinite_hausdorff_demo: need at least two grid rays");
    const double c = 1.0 - 1.0 / m;

    InfiniteHausdorffReport rep;
    rep.m = m;
    std::sort(windows.begin(), windows.end());
    for (double w : windows) {
        if (!(w > 0.0)) throw ArgumentError("infinite_hausdorff_demo: windows must be positive");
        // Boundary samples, geometrically spaced, always including the window edge.
        double worst = 0.0;
        constexpr int kSamples = 200;
        for (int k = 0; k <= kSamples; ++k) worst = std::max(worst, gap_to_shrunk(w * std::pow(1e-6, 1.0 - double(k) / kSamples), c));
        rep.rows.push_back({w, worst});
    }

    // Support functions over the cone 0.1 <= p2/p1 <= 10.
    const RestrictedPriceSet pbar = RestrictedPriceSet::arc(std::atan(0.1), std::atan(10.0), grid_rays);
    auto pi = [](const Eigen::VectorXd& p, int) { return p[0] * p[0] / (4.0 * p[1]); };
    auto pi_m = [c](const Eigen::VectorXd& p, int) { return c * c * p[0] * p[0] / (4.0 * p[1]); };
    // pi is largest over the arc at its flattest end p = (1, 0.1) / |(1, 0.1)|.
    const double sup_pi = 2.5 / std::sqrt(1.01);
    rep.eta = (1.0 - c * c) * sup_pi;
    DualityOptions opt;
    const auto dr = duality_check(pi, pi_m, pbar, 1, true, opt);
    rep.d_h = dr.d_h;
    rep.d_h_oracle = dr.d_h_oracle.value_or(std::numeric_limits<double>::quiet_NaN());
    for (int mm : {m, 10 * m, 100 * m, 1000 * m}) {
        const double cc = 1.0 - 1.0 / mm;
        rep.eta_by_m.emplace_back(mm, (1.0 - cc * cc) * sup_pi);
    }
    return rep;
}

}  // namespace prodenv
