#include "prodenv/counterfactual.hpp"

#include "prodenv/error.hpp"
#include "prodenv/lp.hpp"
#include "prodenv/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace prodenv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTieTol = 1e-9;

void restrict_inputs(lp::Problem& prob, const ProfitData& data, int offset) {
    for (int c : data.nonpositive) prob.set_bounds(offset + c, -kInf, 0.0);
}

std::vector<std::pair<int, double>> block_row(const Eigen::VectorXd& a, int offset) {
    std::vector<std::pair<int, double>> row;
    for (int j = 0; j < a.size(); ++j)
        if (a[j] != 0.0) row.emplace_back(offset + j, a[j]);
    return row;
}

// Single-block program over the envelope, optionally pinned to one face.
lp::Solution envelope_lp(const ProfitData& data, const Eigen::VectorXd& c, lp::Sense sense, int face) {
    const int d = data.dim();
    lp::Problem prob(d, sense);
    prob.set_all_free();
    restrict_inputs(prob, data, 0);
    prob.set_objective(c);
    for (std::size_t i = 0; i < data.rays.size(); ++i)
        prob.add_row(block_row(data.rays[i].components(), 0),
                     static_cast<int>(i) == face ? lp::RowType::Equal : lp::RowType::LessEqual, data.values[i]);
    return lp::solve(prob);
}

// Joint program: block 0 is y_c, block i + 1 is y_i for data ray i.
lp::Problem joint_program(const ProfitData& data, const PriceRay& p_c, lp::Sense sense) {
    const int d = data.dim();
    const int n = static_cast<int>(data.rays.size());
    lp::Problem prob((n + 1) * d, sense);
    prob.set_all_free();
    for (int b = 0; b <= n; ++b) restrict_inputs(prob, data, b * d);
    for (int i = 0; i < n; ++i) {
        const auto& p = data.rays[i].components();
        for (int k = 0; k < n; ++k)
            prob.add_row(block_row(data.rays[k].components(), (i + 1) * d),
                         i == k ? lp::RowType::Equal : lp::RowType::LessEqual, data.values[k]);
        prob.add_row(block_row(p, 0), lp::RowType::LessEqual, data.values[i]);
        // y_c is optimal at p_c against every y_i.
        auto row = block_row(p_c.components(), (i + 1) * d);
        for (const auto& [j, v] : block_row(p_c.components(), 0)) row.emplace_back(j, -v);
        prob.add_row(row, lp::RowType::LessEqual, 0.0);
    }
    return prob;
}

void require_wapm(const ProfitData& data, const char* who) {
    data.validate();
    if (!wapm_feasible(data).feasible)
        throw ArgumentError(std::string(who) + ": data cannot be rationalized (WAPM fails)");
}

void check_ray(const ProfitData& data, const PriceRay& r) {
    if (r.dim() != data.dim()) throw ArgumentError("counterfactual: price dimension mismatch");
}

}  // namespace

void ProfitData::validate() const {
    if (rays.empty()) throw ArgumentError("profit data: no observations");
    if (rays.size() != values.size()) throw ArgumentError("profit data: ray and value counts differ");
    const int d = dim();
    for (std::size_t i = 0; i < rays.size(); ++i) {
        if (rays[i].dim() != d) throw ArgumentError("profit data: mixed ray dimensions");
        if (!std::isfinite(values[i])) throw ArgumentError("profit data: non-finite profit");
        for (std::size_t k = 0; k < i; ++k)
            if ((rays[i].components() - rays[k].components()).norm() <= 1e-12)
                throw ArgumentError("profit data: repeated ray");
    }
    for (int c : nonpositive)
        if (c < 0 || c >= d) throw ArgumentError("profit data: input-sign coordinate out of range");
}

ProfitData ProfitData::with(const PriceRay& ray, double value) const {
    ProfitData out = *this;
    out.rays.push_back(ray);
    out.values.push_back(value);
    return out;
}

HalfspaceEnvelope ProfitData::envelope() const {
    std::vector<Halfspace> h;
    for (std::size_t i = 0; i < rays.size(); ++i) h.push_back({rays[i], values[i]});
    return HalfspaceEnvelope(dim(), std::move(h));
}

Verdict profitability_verdict(const BoundResult& b) {
    if (!b.feasible) return Verdict::Undetermined;
    if (b.upper < 0.0) return Verdict::DefinitelyNo;
    if (b.lower >= 0.0) return Verdict::DefinitelyYes;
    return Verdict::Undetermined;
}

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::DefinitelyNo: return "definitively no";
        case Verdict::DefinitelyYes: return "definitively yes";
        case Verdict::Undetermined: return "undetermined";
    }
    return "undetermined";
}

WapmResult wapm_feasible(const ProfitData& data) {
    data.validate();
    const int d = data.dim();
    const int n = static_cast<int>(data.rays.size());
    lp::Problem prob(n * d, lp::Sense::Maximize);
    prob.set_all_free();
    for (int b = 0; b < n; ++b) restrict_inputs(prob, data, b * d);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k)
            prob.add_row(block_row(data.rays[k].components(), i * d), i == k ? lp::RowType::Equal : lp::RowType::LessEqual,
                         data.values[k]);
    const auto sol = lp::solve(prob);
    WapmResult out;
    out.feasible = sol.status != lp::Status::Infeasible;
    if (out.feasible)
        for (int i = 0; i < n; ++i) out.quantities.push_back(sol.x.segment(i * d, d));
    return out;
}

BoundResult profit_bounds(const ProfitData& data, const PriceRay& p_c) {
    require_wapm(data, "profit_bounds");
    check_ray(data, p_c);
    BoundResult out;
    const Eigen::VectorXd& c = p_c.components();

    const auto up = envelope_lp(data, c, lp::Sense::Maximize, -1);
    if (up.status == lp::Status::Unbounded) {
        out.upper = kInf;
        out.upper_ray = up.ray;
    } else {
        out.upper = up.objective;
        out.upper_point = up.x;
    }

    std::vector<lp::Solution> faces(data.rays.size());
    for (std::size_t i = 0; i < data.rays.size(); ++i) faces[i] = envelope_lp(data, c, lp::Sense::Minimize, static_cast<int>(i));
    double best = -kInf;
    for (const auto& f : faces)
        if (f.optimal()) best = std::max(best, f.objective);
    out.lower = best;
    if (std::isfinite(best)) {
        const double tol = kTieTol * std::max(1.0, std::abs(best));
        for (std::size_t i = 0; i < faces.size(); ++i)
            if (faces[i].optimal() && faces[i].objective >= best - tol) out.lower_argmax.push_back(static_cast<int>(i));
        out.lower_point = faces[static_cast<std::size_t>(out.lower_argmax.front())].x;
    } else {
        out.lower_ray = faces.front().ray;
        for (std::size_t i = 0; i < faces.size(); ++i) out.lower_argmax.push_back(static_cast<int>(i));
    }
    return out;
}

BoundResult quantity_bounds(const ProfitData& data, const PriceRay& p_c, const Eigen::VectorXd& u) {
    require_wapm(data, "quantity_bounds");
    check_ray(data, p_c);
    if (u.size() != data.dim()) throw ArgumentError("quantity_bounds: direction dimension mismatch");
    const int d = data.dim();
    BoundResult out;
    for (auto sense : {lp::Sense::Maximize, lp::Sense::Minimize}) {
        auto prob = joint_program(data, p_c, sense);
        for (int j = 0; j < d; ++j) prob.set_objective(j, u[j]);
        const auto sol = lp::solve(prob);
        if (sol.status == lp::Status::Infeasible) throw NumericError("quantity_bounds: program infeasible after WAPM passed");
        const bool max = sense == lp::Sense::Maximize;
        if (sol.status == lp::Status::Unbounded) {
            (max ? out.upper : out.lower) = max ? kInf : -kInf;
            (max ? out.upper_ray : out.lower_ray) = sol.ray.head(d);
        } else {
            (max ? out.upper : out.lower) = sol.objective;
            (max ? out.upper_point : out.lower_point) = sol.x.head(d);
        }
    }
    return out;
}

BoundResult profit_bounds_fixed_quantity(const ProfitData& data, int coord, double ybar,
                                         const std::vector<PriceRay>& ray_grid) {
    require_wapm(data, "profit_bounds_fixed_quantity");
    if (ray_grid.empty()) throw ArgumentError("fixed-quantity bounds: empty price grid");
    const int d = data.dim();
    if (coord < 0 || coord >= d) throw ArgumentError("fixed-quantity bounds: coordinate out of range");
    for (const auto& r : ray_grid) check_ray(data, r);

    struct Point {
        bool feasible = false;
        lp::Solution hi, lo;
    };
    std::vector<Point> pts(ray_grid.size());
    parallel_for(static_cast<int>(ray_grid.size()), [&](int g) {
        const auto& pc = ray_grid[static_cast<std::size_t>(g)];
        for (auto sense : {lp::Sense::Maximize, lp::Sense::Minimize}) {
            auto prob = joint_program(data, pc, sense);
            for (int j = 0; j < d; ++j) prob.set_objective(j, pc[j]);
            prob.add_row(std::vector<std::pair<int, double>>{{coord, 1.0}}, lp::RowType::Equal, ybar);
            auto sol = lp::solve(prob);
            if (sol.status == lp::Status::Infeasible) return;
            (sense == lp::Sense::Maximize ? pts[static_cast<std::size_t>(g)].hi : pts[static_cast<std::size_t>(g)].lo) =
                std::move(sol);
        }
        pts[static_cast<std::size_t>(g)].feasible = true;
    });

    BoundResult out;
    out.grid_size = static_cast<int>(ray_grid.size());
    out.upper = -kInf;
    out.lower = kInf;
    for (std::size_t g = 0; g < pts.size(); ++g) {
        const auto& p = pts[g];
        if (!p.feasible) continue;
        ++out.grid_feasible;
        const double hi = p.hi.status == lp::Status::Unbounded ? kInf : p.hi.objective;
        const double lo = p.lo.status == lp::Status::Unbounded ? -kInf : p.lo.objective;
        if (hi > out.upper) {
            out.upper = hi;
            out.upper_at = ray_grid[g];
            out.upper_point.reset();
            out.upper_ray.reset();
            if (std::isfinite(hi)) out.upper_point = p.hi.x.head(d);
            else out.upper_ray = p.hi.ray.head(d);
        }
        if (lo < out.lower) {
            out.lower = lo;
            out.lower_at = ray_grid[g];
            out.lower_point.reset();
            out.lower_ray.reset();
            if (std::isfinite(lo)) out.lower_point = p.lo.x.head(d);
            else out.lower_ray = p.lo.ray.head(d);
        }
    }
    if (out.grid_feasible == 0) {
        out.feasible = false;
        out.lower = -kInf;
        out.upper = kInf;
    }
    return out;
}

BoundResult brute_force_bounds(const ProfitData& data, const PriceRay& p_c, int resolution) {
    data.validate();
    check_ray(data, p_c);
    if (data.dim() != 2 || data.rays.size() > 4) throw ArgumentError("brute force: planar data with at most four rays");
    if (resolution < 2) throw ArgumentError("brute force: resolution must be at least 2");
    const std::size_t n = data.rays.size();
    double scale = 1.0;
    for (double v : data.values) scale = std::max(scale, std::abs(v));
    const double tol = 1e-9 * scale;

    auto feasible = [&](const Eigen::Vector2d& y) {
        for (std::size_t k = 0; k < n; ++k)
            if (data.rays[k].components().dot(y) > data.values[k] + tol) return false;
        for (int c : data.nonpositive)
            if (y[c] > tol) return false;
        return true;
    };

    // Per face: the extreme values of p_c.y over sampled feasible points. The
    // best assignment for the upper bound puts one y_i at the overall maximum;
    // the support of the free-disposal hull of {y_i} at p_c is max_i p_c.y_i,
    // so the lower bound picks each y_i at its face minimum.
    double upper = -kInf, lower = -kInf;
    std::optional<Eigen::VectorXd> upper_point, lower_point;
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector2d p = data.rays[i].components();
        const Eigen::Vector2d base = data.values[i] * p;
        const Eigen::Vector2d dir(-p[1], p[0]);
        auto at = [&](double s) -> Eigen::Vector2d { return base + s * dir; };

        // Crossings with the other constraint lines and the input-sign axes.
        std::vector<double> cuts;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            const double slope = data.rays[k].components().dot(dir);
            if (std::abs(slope) > 1e-14) cuts.push_back((data.values[k] - data.rays[k].components().dot(base)) / slope);
        }
        for (int c : data.nonpositive)
            if (std::abs(dir[c]) > 1e-14) cuts.push_back(-base[c] / dir[c]);
        std::sort(cuts.begin(), cuts.end());
        const double reach = 1.0 + (cuts.empty() ? 0.0 : std::max(std::abs(cuts.front()), std::abs(cuts.back())));
        std::vector<double> probes = cuts;
        probes.push_back(-2.0 * reach);
        probes.push_back(2.0 * reach);
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k) probes.push_back(0.5 * (cuts[k] + cuts[k + 1]));
        std::sort(probes.begin(), probes.end());

        double s_lo = kInf, s_hi = -kInf;
        for (double s : probes)
            if (feasible(at(s))) {
                s_lo = std::min(s_lo, s);
                s_hi = std::max(s_hi, s);
            }
        // An empty face leaves this ray without any rationalizing quantity.
        if (s_lo > s_hi) throw NumericError("brute force: no feasible quantity assignment found");
        // Feasible past every crossing means the face runs off to infinity.
        if (s_lo <= -2.0 * reach) s_lo = -kInf;
        if (s_hi >= 2.0 * reach) s_hi = kInf;

        const double slope = p_c.components().dot(dir);
        const double offset = p_c.components().dot(base);
        double face_max = -kInf, face_min = kInf;
        Eigen::VectorXd arg_max, arg_min;
        if ((slope > 0 && std::isinf(s_hi)) || (slope < 0 && std::isinf(s_lo))) face_max = kInf;
        if ((slope > 0 && std::isinf(s_lo)) || (slope < 0 && std::isinf(s_hi))) face_min = -kInf;
        const double a = std::isinf(s_lo) ? (std::isinf(s_hi) ? 0.0 : s_hi) : s_lo;
        const double b = std::isinf(s_hi) ? a : s_hi;
        for (int r = 0; r < resolution; ++r) {
            const double s = a + (b - a) * r / (resolution - 1);
            const double v = offset + slope * s;
            if (v > face_max) {
                face_max = v;
                arg_max = at(s);
            }
            if (v < face_min) {
                face_min = v;
                arg_min = at(s);
            }
        }
        if (face_max > upper) {
            upper = face_max;
            upper_point = std::isfinite(face_max) ? std::optional<Eigen::VectorXd>(arg_max) : std::nullopt;
        }
        if (face_min > lower) {
            lower = face_min;
            lower_point = std::isfinite(face_min) ? std::optional<Eigen::VectorXd>(arg_min) : std::nullopt;
        }
    }
    BoundResult out;
    out.upper = upper;
    out.lower = lower;
    out.upper_point = upper_point;
    out.lower_point = lower_point;
    return out;
}

std::vector<PriceRay> quadrant_grid(int n) {
    if (n < 2) throw ArgumentError("ray grid: need at least two rays");
    std::vector<PriceRay> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double t = 0.5 * std::numbers::pi * i / (n - 1);
        out.push_back(PriceRay::normalized(Eigen::Vector2d(std::max(std::cos(t), 0.0), std::max(std::sin(t), 0.0))));
    }
    return out;
}

std::vector<PriceRay> octant_grid(int n) {
    if (n < 1) throw ArgumentError("ray grid: need at least one ray");
    // Fibonacci lattice on the whole sphere, keeping the positive octant.
    const int total = 8 * n;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    std::vector<PriceRay> out;
    for (int i = 0; i < total; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / total;
        const double r = std::sqrt(1.0 - z * z);
        const double phi = golden * i;
        const Eigen::Vector3d v(r * std::cos(phi), r * std::sin(phi), z);
        if (v.minCoeff() > 0.0) out.push_back(PriceRay::normalized(v));
    }
    return out;
}

std::vector<PriceRay> default_ray_grid(int dim) {
    if (dim == 2) return quadrant_grid(720);
    if (dim == 3) return octant_grid(10000);
    throw ArgumentError("ray grid: defaults exist for two and three goods only");
}

}  // namespace prodenv
