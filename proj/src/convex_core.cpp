#include "prodenv/convex_core.hpp"

#include "prodenv/error.hpp"
#include "prodenv/lp.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace prodenv {

PriceRay PriceRay::normalized(const Eigen::VectorXd& v) {
    if (v.size() == 0) throw ArgumentError("price ray: empty vector");
    for (int i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) throw ArgumentError("price ray: non-finite component");
        if (v[i] < 0.0) throw ArgumentError("price ray: negative component " + std::to_string(v[i]));
    }
    const double n = v.norm();
    if (n <= 0.0) throw ArgumentError("price ray: zero vector");
    return PriceRay(v / n);
}

PriceRay PriceRay::normalized(std::initializer_list<double> v) {
    Eigen::VectorXd x(static_cast<int>(v.size()));
    int i = 0;
    for (double c : v) x[i++] = c;
    return normalized(x);
}

double PriceRay::angle() const { return std::atan2(c_[1], c_[0]); }

HalfspaceEnvelope::HalfspaceEnvelope(int dimension, std::vector<Halfspace> constraints)
    : dim_(dimension), cons_(std::move(constraints)) {
    if (dim_ <= 0) throw ArgumentError("envelope: dimension must be positive");
    if (cons_.empty()) throw ArgumentError("envelope: needs at least one constraint");
    for (const auto& h : cons_) {
        if (h.ray.dim() != dim_) throw ArgumentError("envelope: constraint ray has wrong dimension");
        if (!std::isfinite(h.value)) throw NumericError("envelope: non-finite constraint value");
    }
}

HalfspaceEnvelope HalfspaceEnvelope::with(const Halfspace& h) const {
    auto c = cons_;
    c.push_back(h);
    return HalfspaceEnvelope(dim_, std::move(c));
}

bool HalfspaceEnvelope::contains(const Eigen::VectorXd& y, double tol) const {
    for (const auto& h : cons_)
        if (h.ray.components().dot(y) > h.value + tol) return false;
    return true;
}

void RestrictedPriceSet::validate() const {
    if (rays.empty()) throw ArgumentError("price set: no rays");
    const int d = rays.front().dim();
    for (std::size_t i = 0; i < rays.size(); ++i) {
        if (rays[i].dim() != d) throw ArgumentError("price set: mixed dimensions");
        if (!rays[i].strictly_positive()) throw ArgumentError("price set: rays must be strictly positive");
        for (std::size_t j = 0; j < i; ++j)
            if ((rays[i].components() - rays[j].components()).norm() < 1e-12)
                throw ArgumentError("price set: duplicate ray");
    }
}

RestrictedPriceSet RestrictedPriceSet::arc(double theta_lo, double theta_hi, int n) {
    if (n < 1) throw ArgumentError("price set: need at least one ray");
    RestrictedPriceSet s;
    for (int k = 0; k < n; ++k) {
        const double th = n == 1 ? theta_lo : theta_lo + (theta_hi - theta_lo) * k / (n - 1);
        s.rays.push_back(PriceRay::normalized({std::cos(th), std::sin(th)}));
    }
    return s;
}

SupportResult support_value(const HalfspaceEnvelope& env, const Eigen::VectorXd& u) {
    const int d = env.dimension();
    if (u.size() != d) throw ArgumentError("support_value: dimension mismatch");
    lp::Problem prob(d, lp::Sense::Maximize);
    prob.set_all_free();
    prob.set_objective(u);
    for (const auto& h : env.constraints()) {
        const Eigen::VectorXd& r = h.ray.components();
        prob.add_row(std::span<const double>(r.data(), r.size()), lp::RowType::LessEqual, h.value);
    }
    const lp::Solution sol = lp::solve(prob);
    SupportResult res;
    switch (sol.status) {
        case lp::Status::Optimal:
            res.finite = true;
            res.value = sol.objective;
            res.maximizer = sol.x;
            break;
        case lp::Status::Unbounded:
            res.finite = false;
            res.value = std::numeric_limits<double>::infinity();
            res.certificate = sol.ray;
            break;
        case lp::Status::Infeasible:
            // Cannot happen for envelopes with nonnegative rays, but keep the failure loud.
            throw NumericError("support_value: envelope LP reported infeasible");
    }
    return res;
}

SupportResult support_value(const HalfspaceEnvelope& env, const PriceRay& u) {
    return support_value(env, u.components());
}

double hausdorff_extended(std::span<const double> a, std::span<const double> b, const RestrictedPriceSet& pbar) {
    if (a.size() != b.size() || a.size() != pbar.rays.size())
        throw ArgumentError("hausdorff_extended: value vectors must match the ray grid");
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = std::abs(a[i] - b[i]);
        if (std::isnan(diff)) throw NumericError("hausdorff_extended: NaN value");
        d = std::max(d, diff);
    }
    return d;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Feasible piece of one constraint's boundary line: {base + s * dir : s in [lo, hi]}.
struct Face {
    Eigen::Vector2d base;
    Eigen::Vector2d dir;
    double lo = -kInf;
    double hi = kInf;
};

std::vector<Face> faces_2d(const HalfspaceEnvelope& env) {
    std::vector<Face> faces;
    const auto& cons = env.constraints();
    for (std::size_t i = 0; i < cons.size(); ++i) {
        const Eigen::Vector2d r = cons[i].ray.components();
        Face f;
        f.base = cons[i].value * r;
        f.dir = Eigen::Vector2d(-r[1], r[0]);
        bool empty = false;
        for (std::size_t j = 0; j < cons.size() && !empty; ++j) {
            if (j == i) continue;
            const Eigen::Vector2d q = cons[j].ray.components();
            const double slope = q.dot(f.dir);
            const double room = cons[j].value - q.dot(f.base);
            if (std::abs(slope) < 1e-14) {
                if (room < -1e-12) empty = true;
                continue;
            }
            const double s = room / slope;
            if (slope > 0.0) f.hi = std::min(f.hi, s);
            else f.lo = std::max(f.lo, s);
        }
        if (!empty && f.lo <= f.hi + 1e-12) faces.push_back(f);
    }
    return faces;
}

double point_segment_distance(const Face& f, const Eigen::Vector2d& q) {
    double s = f.dir.dot(q - f.base);
    s = std::clamp(s, f.lo, f.hi);
    return (f.base + s * f.dir - q).norm();
}

double distance_with_faces(const HalfspaceEnvelope& env, const std::vector<Face>& faces, const Eigen::Vector2d& q) {
    if (env.contains(q, 1e-12)) return 0.0;
    double best = kInf;
    for (const auto& f : faces) best = std::min(best, point_segment_distance(f, q));
    return best;
}

// Points on the boundary of env: face endpoints plus roughly n evenly spread samples.
std::vector<Eigen::Vector2d> boundary_samples(const std::vector<Face>& faces, int n) {
    std::vector<Eigen::Vector2d> pts;
    double total_finite = 0.0;
    double scale = 1.0;
    for (const auto& f : faces) {
        if (std::isfinite(f.lo) && std::isfinite(f.hi)) total_finite += f.hi - f.lo;
        scale = std::max(scale, f.base.norm());
        if (std::isfinite(f.lo)) scale = std::max(scale, std::abs(f.lo));
        if (std::isfinite(f.hi)) scale = std::max(scale, std::abs(f.hi));
    }
    // Unbounded pieces are truncated at a length well beyond the bounded part.
    const double ray_len = 10.0 * scale;
    const int per_unit_faces = static_cast<int>(faces.size());
    for (const auto& f : faces) {
        double lo = f.lo, hi = f.hi;
        if (std::isfinite(lo)) pts.push_back(f.base + lo * f.dir);
        if (std::isfinite(hi)) pts.push_back(f.base + hi * f.dir);
        if (!std::isfinite(lo)) lo = (std::isfinite(hi) ? hi : 0.0) - ray_len;
        if (!std::isfinite(hi)) hi = (std::isfinite(f.lo) ? f.lo : 0.0) + ray_len;
        const double len = hi - lo;
        int k;
        if (std::isfinite(f.lo) && std::isfinite(f.hi) && total_finite > 0.0)
            k = static_cast<int>(std::ceil(n * len / total_finite));
        else
            k = std::max(2, n / std::max(1, per_unit_faces));
        for (int i = 0; i <= k; ++i) pts.push_back(f.base + (lo + len * i / k) * f.dir);
    }
    return pts;
}

double directed_2d(const std::vector<Eigen::Vector2d>& from, const HalfspaceEnvelope& to,
                   const std::vector<Face>& to_faces) {
    double d = 0.0;
    for (const auto& q : from) d = std::max(d, distance_with_faces(to, to_faces, q));
    return d;
}

}  // namespace

double distance_to_envelope_2d(const HalfspaceEnvelope& env, const Eigen::Vector2d& q) {
    if (env.dimension() != 2) throw ArgumentError("distance_to_envelope_2d: unsupported dimension");
    return distance_with_faces(env, faces_2d(env), q);
}

double hausdorff_oracle_2d(const HalfspaceEnvelope& a, const HalfspaceEnvelope& b, int n_boundary) {
    if (a.dimension() != 2 || b.dimension() != 2)
        throw ArgumentError("hausdorff_oracle_2d: unsupported dimension (only d = 2)");
    if (n_boundary < 1) throw ArgumentError("hausdorff_oracle_2d: n_boundary must be positive");
    const auto fa = faces_2d(a);
    const auto fb = faces_2d(b);
    if (fa.empty() || fb.empty()) throw NumericError("hausdorff_oracle_2d: envelope has no boundary");
    const double ab = directed_2d(boundary_samples(fa, n_boundary), b, fb);
    const double ba = directed_2d(boundary_samples(fb, n_boundary), a, fa);
    return std::max(ab, ba);
}

namespace {

void for_each_subset(int n, int k, int start, std::vector<int>& cur, const std::function<void(const std::vector<int>&)>& fn) {
    if (static_cast<int>(cur.size()) == k) {
        fn(cur);
        return;
    }
    for (int i = start; i < n; ++i) {
        cur.push_back(i);
        for_each_subset(n, k, i + 1, cur, fn);
        cur.pop_back();
    }
}

}  // namespace

HalfspaceEnvelope free_disposal_hull(const std::vector<Eigen::VectorXd>& points) {
    if (points.empty()) throw ArgumentError("free_disposal_hull: empty point list");
    const int d = static_cast<int>(points.front().size());
    if (d == 0) throw ArgumentError("free_disposal_hull: zero-dimensional points");

    std::vector<Eigen::VectorXd> pts;
    for (const auto& p : points) {
        if (p.size() != d) throw ArgumentError("free_disposal_hull: mixed dimensions");
        const bool dup = std::any_of(pts.begin(), pts.end(), [&](const Eigen::VectorXd& q) { return (q - p).norm() < 1e-14; });
        if (!dup) pts.push_back(p);
    }
    const int n = static_cast<int>(pts.size());
    const double scale = 1.0 + std::accumulate(pts.begin(), pts.end(), 0.0,
                                               [](double m, const Eigen::VectorXd& p) { return std::max(m, p.cwiseAbs().maxCoeff()); });

    std::vector<Halfspace> cons;
    auto try_normal = [&](Eigen::VectorXd r) {
        if (r.maxCoeff() <= 1e-12) r = -r;
        if (r.minCoeff() < -1e-10) return;
        r = r.cwiseMax(0.0);
        if (r.norm() < 1e-12) return;
        const PriceRay ray = PriceRay::normalized(r);
        for (const auto& h : cons)
            if ((h.ray.components() - ray.components()).norm() < 1e-9) return;
        double v = -kInf;
        for (const auto& p : pts) v = std::max(v, ray.components().dot(p));
        cons.push_back({ray, v});
    };

    // A facet normal is orthogonal to the edges among its supporting points and
    // to the disposal directions it contains (zero coordinates).
    for (int ns = 1; ns <= std::min(n, d); ++ns) {
        const int nj = d - ns;
        std::vector<int> cur;
        for_each_subset(n, ns, 0, cur, [&](const std::vector<int>& S) {
            std::vector<int> curj;
            for_each_subset(d, nj, 0, curj, [&](const std::vector<int>& J) {
                Eigen::MatrixXd m(d - 1, d);
                int row = 0;
                for (int s = 1; s < ns; ++s) m.row(row++) = (pts[S[s]] - pts[S[0]]).transpose();
                for (int j : J) {
                    m.row(row).setZero();
                    m(row++, j) = 1.0;
                }
                Eigen::VectorXd r;
                if (d == 1) {
                    r = Eigen::VectorXd::Ones(1);
                } else {
                    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
                    lu.setThreshold(1e-10);
                    if (lu.rank() != d - 1) return;
                    r = lu.kernel().col(0);
                }
                // The supporting points must attain the max.
                Eigen::VectorXd rr = r.maxCoeff() <= 1e-12 ? Eigen::VectorXd(-r) : r;
                if (rr.minCoeff() < -1e-10) return;
                const double top = rr.dot(pts[S[0]]);
                for (const auto& p : pts)
                    if (rr.dot(p) > top + 1e-10 * scale * rr.norm()) return;
                try_normal(rr);
            });
        });
    }
    if (cons.empty()) throw NumericError("free_disposal_hull: no facets found");
    return HalfspaceEnvelope(d, std::move(cons));
}

bool recession_ok(const HalfspaceEnvelope& env, const std::vector<PriceRay>& probe_rays) {
    for (const auto& r : probe_rays)
        if (!support_value(env, r).finite) return false;
    return true;
}

double euler_residual(const PriceFunction& f, const Eigen::VectorXd& p, double h) {
    if (h <= 0.0) throw ArgumentError("euler_residual: step must be positive");
    const double f0 = f(p);
    if (!std::isfinite(f0)) throw NumericError("euler_residual: non-finite evaluation");
    double acc = 0.0;
    for (int j = 0; j < p.size(); ++j) {
        const double step = h * std::max(std::abs(p[j]), 1e-12);
        Eigen::VectorXd up = p, dn = p;
        up[j] += step;
        dn[j] -= step;
        const double fu = f(up), fd = f(dn);
        if (!std::isfinite(fu) || !std::isfinite(fd)) throw NumericError("euler_residual: non-finite evaluation");
        acc += (fu - fd) / (2.0 * step) * p[j];
    }
    return acc - f0;
}

}  // namespace prodenv
