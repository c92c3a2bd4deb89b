#include "prodenv/proxy_id.hpp"

#include "prodenv/error.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace prodenv {

namespace {

constexpr double kVanishingT = 1e12;

int resolve_observed(int observed, int d) {
    const int o = observed < 0 ? d - 1 : observed;
    if (o >= d) throw ArgumentError("proxies: observed coordinate out of range");
    return o;
}

// Derivative of tabulated values on a nonuniform grid: second order everywhere.
std::vector<double> gradient(const std::vector<double>& x, const std::vector<double>& f) {
    const std::size_t n = x.size();
    std::vector<double> d(n, 0.0);
    if (n < 2) return d;
    if (n == 2) {
        d[0] = d[1] = (f[1] - f[0]) / (x[1] - x[0]);
        return d;
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double h1 = x[i] - x[i - 1], h2 = x[i + 1] - x[i];
        d[i] = (h1 * h1 * f[i + 1] - h2 * h2 * f[i - 1] + (h2 * h2 - h1 * h1) * f[i]) / (h1 * h2 * (h1 + h2));
    }
    {
        const double h1 = x[1] - x[0], h2 = x[2] - x[1];
        d[0] = -(2 * h1 + h2) / (h1 * (h1 + h2)) * f[0] + (h1 + h2) / (h1 * h2) * f[1] - h1 / (h2 * (h1 + h2)) * f[2];
    }
    {
        const double h1 = x[n - 2] - x[n - 3], h2 = x[n - 1] - x[n - 2];
        d[n - 1] = h2 / (h1 * (h1 + h2)) * f[n - 3] - (h1 + h2) / (h1 * h2) * f[n - 2] +
                   (h1 + 2 * h2) / (h2 * (h1 + h2)) * f[n - 1];
    }
    return d;
}

// Linear interpolation with linear extrapolation off the ends.
double interp(const std::vector<double>& x, const std::vector<double>& f, double t) {
    if (x.size() == 1) return f[0];
    auto it = std::upper_bound(x.begin(), x.end(), t);
    std::size_t i = it == x.begin() ? 0 : static_cast<std::size_t>(it - x.begin()) - 1;
    i = std::min(i, x.size() - 2);
    const double w = (t - x[i]) / (x[i + 1] - x[i]);
    return f[i] + w * (f[i + 1] - f[i]);
}

void check_grid(const std::vector<double>& grid, const char* what) {
    if (grid.size() < 2) throw ArgumentError(std::string(what) + ": grid needs at least two points");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw ArgumentError(std::string(what) + ": grid must be strictly increasing");
}

// integral over [a, b] of ds / t(s) with t linear from ta to tb (same sign).
double reciprocal_segment(double a, double b, double ta, double tb) {
    const double r = (tb - ta) / ta;
    const double factor = std::abs(r) < 1e-8 ? 1.0 - r / 2.0 : std::log1p(r) / r;
    return (b - a) / ta * factor;
}

std::vector<double> axis_values(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

Surface grid_surface(std::vector<std::vector<double>> axes, std::vector<double> values);

}  // namespace

Surface::Surface(Fn f, Eigen::VectorXd lo, Eigen::VectorXd hi, Eigen::VectorXd step)
    : f_(std::move(f)), lo_(std::move(lo)), hi_(std::move(hi)), step_(std::move(step)) {
    if (lo_.size() == 0 || lo_.size() != hi_.size() || step_.size() != lo_.size())
        throw ArgumentError("surface: box and step dimensions differ");
    for (int j = 0; j < lo_.size(); ++j) {
        if (!(hi_[j] > lo_[j])) throw ArgumentError("surface: empty box");
        if (!(step_[j] > 0.0)) throw ArgumentError("surface: step must be positive");
    }
}

double Surface::operator()(const Eigen::VectorXd& x) const {
    const double v = f_(x);
    if (!std::isfinite(v)) throw NumericError("surface: non-finite value");
    return v;
}

bool Surface::contains(const Eigen::VectorXd& x, double tol) const {
    if (x.size() != lo_.size()) return false;
    for (int j = 0; j < x.size(); ++j) {
        const double slack = tol * std::max(1.0, hi_[j] - lo_[j]);
        if (x[j] < lo_[j] - slack || x[j] > hi_[j] + slack) return false;
    }
    return true;
}

double Surface::partial(const Eigen::VectorXd& x, int j) const {
    const double h = step_[j];
    const double room_up = hi_[j] - x[j], room_down = x[j] - lo_[j];
    const double eps = 1e-12 * h;
    auto at = [&](double offset) {
        Eigen::VectorXd y = x;
        y[j] += offset;
        return (*this)(y);
    };
    if (room_up >= 2 * h - eps && room_down >= 2 * h - eps)
        return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
    if (room_up >= h - eps && room_down >= h - eps) return (at(h) - at(-h)) / (2 * h);
    if (room_up >= 2 * h - eps) return (-3 * at(0) + 4 * at(h) - at(2 * h)) / (2 * h);
    if (room_down >= 2 * h - eps) return (3 * at(0) - 4 * at(-h) + at(-2 * h)) / (2 * h);
    const double up = std::max(room_up, 0.0), down = std::max(room_down, 0.0);
    if (up + down <= 0.0) throw NumericError("surface: no room for a difference quotient");
    return (at(up) - at(-down)) / (up + down);
}

namespace {

Surface grid_surface(std::vector<std::vector<double>> axes, std::vector<double> values) {
    const int d = static_cast<int>(axes.size());
    if (d == 0) throw ArgumentError("surface: no axes");
    std::size_t total = 1;
    Eigen::VectorXd lo(d), hi(d), step(d);
    for (int j = 0; j < d; ++j) {
        check_grid(axes[j], "surface");
        total *= axes[j].size();
        lo[j] = axes[j].front();
        hi[j] = axes[j].back();
        double h = std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; i < axes[j].size(); ++i) h = std::min(h, axes[j][i] - axes[j][i - 1]);
        step[j] = h;
    }
    if (values.size() != total) throw ArgumentError("surface: value count does not match the grid");
    for (double v : values)
        if (!std::isfinite(v)) throw NumericError("surface: non-finite tabulated value");

    auto eval = [axes, values, d](const Eigen::VectorXd& x) {
        std::vector<std::size_t> base(d);
        std::vector<double> frac(d);
        for (int j = 0; j < d; ++j) {
            const auto& a = axes[j];
            const double t = std::clamp(x[j], a.front(), a.back());
            auto it = std::upper_bound(a.begin(), a.end(), t);
            std::size_t i = it == a.begin() ? 0 : static_cast<std::size_t>(it - a.begin()) - 1;
            i = std::min(i, a.size() - 2);
            base[j] = i;
            frac[j] = (t - a[i]) / (a[i + 1] - a[i]);
        }
        double acc = 0.0;
        for (unsigned corner = 0; corner < (1u << d); ++corner) {
            double w = 1.0;
            std::size_t idx = 0;
            for (int j = 0; j < d; ++j) {
                const bool up = (corner >> j) & 1u;
                w *= up ? frac[j] : 1.0 - frac[j];
                idx = idx * axes[j].size() + base[j] + (up ? 1 : 0);
            }
            if (w != 0.0) acc += w * values[idx];
        }
        return acc;
    };
    Surface s(eval, lo, hi, step);
    return s;
}

}  // namespace

Surface Surface::tabulated(std::vector<std::vector<double>> axes, std::vector<double> values) {
    Surface s = grid_surface(axes, std::move(values));
    s.axes_ = std::move(axes);
    return s;
}

Surface Surface::from_profit_table(const ProfitTable& table, int e) {
    const int r = table.num_restricted, d = table.price_dim;
    if (d == 0) throw ArgumentError("surface: profit table has no price coordinates");
    std::vector<std::map<int, std::pair<double, int>>> centers(d);
    std::map<std::vector<int>, double> value;
    std::optional<std::vector<int>> stratum;
    for (const auto& cell : table.cells) {
        const std::vector<int> restricted(cell.key.ids.begin(), cell.key.ids.begin() + r);
        if (stratum && *stratum != restricted)
            throw ArgumentError("surface: profit table spans several restricted strata");
        stratum = restricted;
        const std::vector<int> ids(cell.key.ids.begin() + r, cell.key.ids.end());
        for (int j = 0; j < d; ++j) {
            auto& c = centers[j][ids[j]];
            c.first += cell.center[r + j];
            c.second += 1;
        }
        if (const auto* a = cell.find(e)) value[ids] = a->value;
    }
    std::vector<std::vector<int>> ids_per_axis(d);
    std::vector<std::vector<double>> axes(d);
    for (int j = 0; j < d; ++j)
        for (const auto& [id, c] : centers[j]) {
            ids_per_axis[j].push_back(id);
            axes[j].push_back(c.first / c.second);
        }
    std::vector<double> values;
    std::vector<std::size_t> counter(d, 0);
    std::size_t total = 1;
    for (const auto& a : ids_per_axis) total *= a.size();
    values.reserve(total);
    for (std::size_t n = 0; n < total; ++n) {
        std::size_t rem = n;
        std::vector<int> key(d);
        for (int j = d - 1; j >= 0; --j) {
            key[j] = ids_per_axis[j][rem % ids_per_axis[j].size()];
            rem /= ids_per_axis[j].size();
        }
        const auto it = value.find(key);
        if (it == value.end())
            throw IdentificationError("surface: type " + std::to_string(e) + " is not identified in every cell");
        values.push_back(it->second);
    }
    return tabulated(std::move(axes), std::move(values));
}

Surface Surface::mean_profile(const Dataset& data) {
    if (data.records.empty()) throw ArgumentError("surface: empty dataset");
    const int d = static_cast<int>(data.records.front().x.size());
    std::map<std::vector<double>, std::pair<double, int>> sums;
    std::vector<std::vector<double>> coords(d);
    for (const auto& r : data.records) {
        std::vector<double> x(r.x.data(), r.x.data() + r.x.size());
        auto& s = sums[x];
        s.first += r.noisy_profit;
        s.second += 1;
        for (int j = 0; j < d; ++j) coords[j].push_back(x[j]);
    }
    std::vector<std::vector<double>> axes(d);
    std::size_t total = 1;
    for (int j = 0; j < d; ++j) {
        axes[j] = axis_values(std::move(coords[j]));
        total *= axes[j].size();
    }
    if (sums.size() != total) throw IdentificationError("surface: proxies do not cover a full grid");
    std::vector<double> values;
    values.reserve(total);
    for (const auto& [x, s] : sums) values.push_back(s.first / s.second);
    return tabulated(std::move(axes), std::move(values));
}

RankDiagnostic rank_matrix(const Surface& pi, const Eigen::VectorXd& x_minus, const std::vector<double>& anchors,
                           int observed) {
    const int d = pi.dim();
    const int o = resolve_observed(observed, d);
    const int m = d - 1;
    if (m < 1) throw ArgumentError("proxies: need at least two goods");
    if (x_minus.size() != m || static_cast<int>(anchors.size()) != m)
        throw ArgumentError("proxies: rank system needs d-1 coordinates and d-1 anchors");
    RankDiagnostic diag;
    diag.x_minus = x_minus;
    diag.anchors = anchors;
    diag.matrix.resize(m, m);
    for (int l = 0; l < m; ++l) {
        Eigen::VectorXd x(d);
        for (int j = 0, k = 0; j < d; ++j) x[j] = j == o ? anchors[l] : x_minus[k++];
        if (!pi.contains(x)) throw ArgumentError("proxies: anchor point outside the proxy domain");
        for (int j = 0, k = 0; j < d; ++j)
            if (j != o) diag.matrix(l, k++) = pi.partial(x, j);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(diag.matrix);
    const auto& s = svd.singularValues();
    const double smax = s.maxCoeff(), smin = s.minCoeff();
    diag.condition = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    diag.nonsingular = std::isfinite(diag.condition) && diag.condition < kRankConditionLimit;
    return diag;
}

std::vector<double> quantile_anchors(std::vector<double> values, int n) {
    if (values.empty() || n < 1) throw ArgumentError("proxies: anchor quantiles need values");
    std::sort(values.begin(), values.end());
    std::vector<double> out;
    for (int l = 0; l < n; ++l) {
        const double level = static_cast<double>(l + 1) / (n + 1);
        const auto i = static_cast<std::size_t>(std::lround(level * static_cast<double>(values.size() - 1)));
        out.push_back(values[i]);
    }
    return out;
}

TSolution solve_t(const Surface& pi, const Eigen::VectorXd& x, std::vector<double> anchors, int observed,
                  double alpha) {
    const int d = pi.dim();
    const int o = resolve_observed(observed, d);
    if (x.size() != d) throw ArgumentError("proxies: point dimension mismatch");
    if (anchors.empty()) {
        std::vector<double> support;
        if (!pi.axes().empty()) {
            support = pi.axes()[o];
        } else {
            for (int i = 0; i <= 100; ++i) support.push_back(pi.lower()[o] + (pi.upper()[o] - pi.lower()[o]) * i / 100.0);
        }
        anchors = quantile_anchors(support, d - 1);
    }
    Eigen::VectorXd x_minus(d - 1);
    for (int j = 0, k = 0; j < d; ++j)
        if (j != o) x_minus[k++] = x[j];
    TSolution out;
    out.diagnostic = rank_matrix(pi, x_minus, anchors, o);
    if (!out.diagnostic.nonsingular)
        throw IdentificationError("proxies: rank condition fails (condition number " +
                                  std::to_string(out.diagnostic.condition) + ")");
    Eigen::VectorXd b(d - 1);
    for (int l = 0; l < d - 1; ++l) {
        Eigen::VectorXd xl(d);
        for (int j = 0, k = 0; j < d; ++j) xl[j] = j == o ? anchors[l] : x_minus[k++];
        b[l] = alpha * pi(xl) - pi.partial(xl, o) * anchors[l];
    }
    out.t = out.diagnostic.matrix.fullPivLu().solve(b);
    for (int k = 0; k < out.t.size(); ++k)
        if (!std::isfinite(out.t[k]) || std::abs(out.t[k]) > kVanishingT) out.derivative_vanishing = true;
    return out;
}

double ProxyCurve::operator()(double x) const {
    if (observed) return x;
    std::vector<double> lg(g.size());
    std::transform(g.begin(), g.end(), lg.begin(), [](double v) { return std::log(v); });
    return std::exp(interp(grid, lg, x));
}

double ProxyCurve::t_ratio(double x) const {
    if (observed) return x;
    std::vector<double> lg(g.size());
    std::transform(g.begin(), g.end(), lg.begin(), [](double v) { return std::log(v); });
    return 1.0 / interp(grid, gradient(grid, lg), x);
}

Eigen::VectorXd ProxyModel::price(const Eigen::VectorXd& x) const {
    if (x.size() != static_cast<int>(goods.size())) throw ArgumentError("proxy model: dimension mismatch");
    Eigen::VectorXd p(x.size());
    for (int j = 0; j < x.size(); ++j) p[j] = goods[j](x[j]);
    return p;
}

ProxyCurve integrate_g(std::vector<double> grid, std::vector<double> t, double x0, double p0) {
    check_grid(grid, "integrate_g");
    if (grid.size() != t.size()) throw ArgumentError("integrate_g: grid and t sizes differ");
    if (!(p0 > 0.0)) throw ArgumentError("integrate_g: anchor price must be positive");
    if (x0 < grid.front() || x0 > grid.back()) throw ArgumentError("integrate_g: anchor outside the grid");

    auto valid = [](double v) { return std::isfinite(v) && v != 0.0 && std::abs(v) <= kVanishingT; };
    std::vector<double> vx, vt;
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (valid(t[i])) {
            vx.push_back(grid[i]);
            vt.push_back(t[i]);
        }
    if (vx.size() < 2) throw NumericError("integrate_g: fewer than two usable t values");
    for (std::size_t i = 1; i < vt.size(); ++i)
        if ((vt[i] > 0.0) != (vt[0] > 0.0)) throw NumericError("integrate_g: t changes sign inside the grid");

    ProxyCurve out;
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (!valid(t[i])) out.gaps.push_back(grid[i]);

    // Integration nodes: usable points plus the anchor.
    // A node within rounding of x0 (cell centers are averages) stands in for it.
    auto pos = std::lower_bound(vx.begin(), vx.end(), x0);
    std::size_t a = static_cast<std::size_t>(pos - vx.begin());
    const double snap = 1e-9 * std::max(1.0, std::abs(x0));
    if (a > 0 && x0 - vx[a - 1] <= snap) --a;
    const bool present = a < vx.size() && std::abs(vx[a] - x0) <= snap;
    if (!present) {
        const double t0 = interp(vx, vt, x0);
        vx.insert(vx.begin() + static_cast<std::ptrdiff_t>(a), x0);
        vt.insert(vt.begin() + static_cast<std::ptrdiff_t>(a), t0);
    }
    std::vector<double> lg(vx.size());
    lg[a] = std::log(p0);
    for (std::size_t i = a + 1; i < vx.size(); ++i) lg[i] = lg[i - 1] + reciprocal_segment(vx[i - 1], vx[i], vt[i - 1], vt[i]);
    for (std::size_t i = a; i-- > 0;) lg[i] = lg[i + 1] - reciprocal_segment(vx[i], vx[i + 1], vt[i], vt[i + 1]);

    // Report on the caller's grid (plus the anchor), bridging skipped points.
    out.grid = grid;
    const auto near_anchor = [&](double x) { return std::abs(x - x0) <= snap; };
    if (std::none_of(out.grid.begin(), out.grid.end(), near_anchor))
        out.grid.insert(std::lower_bound(out.grid.begin(), out.grid.end(), x0), x0);
    out.g.resize(out.grid.size());
    for (std::size_t i = 0; i < out.grid.size(); ++i)
        out.g[i] = near_anchor(out.grid[i]) ? p0 : std::exp(interp(vx, lg, out.grid[i]));
    return out;
}

ProxyModel recover_proxy_model(const Surface& pi, const Eigen::VectorXd& x0, const Eigen::VectorXd& p0, int observed,
                               std::vector<std::vector<double>> grids, std::vector<double> anchors) {
    const int d = pi.dim();
    const int o = resolve_observed(observed, d);
    if (x0.size() != d || p0.size() != d) throw ArgumentError("proxies: anchor dimension mismatch");
    if (!pi.contains(x0)) throw ArgumentError("proxies: anchor outside the proxy domain");
    if (grids.empty()) {
        if (!pi.axes().empty()) {
            grids = pi.axes();
        } else {
            grids.resize(d);
            for (int j = 0; j < d; ++j)
                for (int i = 0; i <= 100; ++i) grids[j].push_back(pi.lower()[j] + (pi.upper()[j] - pi.lower()[j]) * i / 100.0);
        }
    }
    if (static_cast<int>(grids.size()) != d) throw ArgumentError("proxies: one grid per coordinate required");

    ProxyModel model;
    model.anchor_x = x0;
    model.anchor_p = p0;
    model.goods.resize(d);
    model.diagnostics.push_back(solve_t(pi, x0, anchors, o).diagnostic);
    for (int j = 0, k = 0; j < d; ++j) {
        if (j == o) {
            model.goods[j].observed = true;
            model.goods[j].grid = grids[j];
            model.goods[j].g = grids[j];
            continue;
        }
        std::vector<double> t(grids[j].size(), std::numeric_limits<double>::quiet_NaN());
        for (std::size_t i = 0; i < grids[j].size(); ++i) {
            Eigen::VectorXd x = x0;
            x[j] = grids[j][i];
            try {
                const auto sol = solve_t(pi, x, anchors, o);
                t[i] = sol.t[k];
            } catch (const IdentificationError&) {
                Eigen::VectorXd x_minus(d - 1);
                for (int q = 0, r = 0; q < d; ++q)
                    if (q != o) x_minus[r++] = x[q];
                RankDiagnostic failed;
                failed.x_minus = x_minus;
                failed.anchors = anchors;
                model.diagnostics.push_back(failed);
            }
        }
        model.goods[j] = integrate_g(grids[j], std::move(t), x0[j], p0[j]);
        ++k;
    }
    return model;
}

ProxyCurve recover_g_housing(const std::vector<double>& vbar, const std::vector<double>& p_land, double v0, double p0) {
    check_grid(vbar, "housing");
    if (vbar.size() != p_land.size()) throw ArgumentError("housing: value and land-price sizes differ");
    if (!(vbar.front() > 0.0)) throw ArgumentError("housing: average values must be positive");
    if (!(p0 > 0.0)) throw ArgumentError("housing: anchor price must be positive");
    if (v0 < vbar.front() || v0 > vbar.back()) throw ArgumentError("housing: anchor outside the grid");

    std::vector<double> x = vbar, dp = gradient(vbar, p_land);
    auto pos = std::lower_bound(x.begin(), x.end(), v0);
    const std::size_t a = static_cast<std::size_t>(pos - x.begin());
    if (pos == x.end() || *pos != v0) {
        const double d0 = interp(x, dp, v0);
        x.insert(x.begin() + static_cast<std::ptrdiff_t>(a), v0);
        dp.insert(dp.begin() + static_cast<std::ptrdiff_t>(a), d0);
    }
    // pi' linear on [s1, s2]: integral of (alpha + beta s) / s.
    auto segment = [&](std::size_t i) {
        const double s1 = x[i], s2 = x[i + 1];
        const double beta = (dp[i + 1] - dp[i]) / (s2 - s1);
        const double alpha = dp[i] - beta * s1;
        return alpha * std::log(s2 / s1) + beta * (s2 - s1);
    };
    std::vector<double> lg(x.size());
    lg[a] = std::log(p0);
    for (std::size_t i = a + 1; i < x.size(); ++i) lg[i] = lg[i - 1] + segment(i - 1);
    for (std::size_t i = a; i-- > 0;) lg[i] = lg[i + 1] - segment(i);

    ProxyCurve out;
    out.grid = x;
    out.g.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out.g[i] = i == a ? p0 : std::exp(lg[i]);
    return out;
}

double euler_system_residual(const Surface& pi, const ProxyModel& model, const Eigen::VectorXd& x, double alpha,
                             double offset, const std::vector<int>& skip) {
    const int d = pi.dim();
    if (x.size() != d || static_cast<int>(model.goods.size()) != d)
        throw ArgumentError("euler residual: dimension mismatch");
    double sum = 0.0;
    for (int j = 0; j < d; ++j) {
        if (std::find(skip.begin(), skip.end(), j) != skip.end()) continue;
        sum += pi.partial(x, j) * model.goods[j].t_ratio(x[j]);
    }
    return sum - alpha * (pi(x) - offset);
}

HousingEconomy::Market HousingEconomy::at(double p_house) const {
    const std::size_t n = productivity.size();
    if (n == 0 || weights.size() != n || (gamma.size() != 1 && gamma.size() != n))
        throw ArgumentError("housing: productivity, gamma and weights must align");
    if (!(p_house > 0.0)) throw ArgumentError("housing: price must be positive");
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    Market m;
    for (std::size_t e = 0; e < n; ++e) {
        const double g = gamma.size() == 1 ? gamma[0] : gamma[e];
        if (!(g > 0.0 && g < 1.0)) throw ArgumentError("housing: gamma must lie in (0, 1)");
        const double materials = std::pow(g * productivity[e] * p_house, 1.0 / (1.0 - g));
        const double value = p_house * productivity[e] * std::pow(materials, g);
        m.vbar += weights[e] / total * value;
        m.materials += weights[e] / total * materials;
    }
    m.p_land = m.vbar - m.materials;
    return m;
}

}  // namespace prodenv
