#pragma once

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace prodenv {

/// A direction on the unit sphere with nonnegative components.
///
/// Envelopes built from observed prices only ever carry strictly positive
/// rays; the free-disposal hull also needs coordinate normals, so zero
/// components are accepted here and strictness is checked where it matters.
class PriceRay {
public:
    PriceRay() = default;

    /// Normalizes v to unit length. Throws ArgumentError on negative or
    /// non-finite components, or on the zero vector.
    static PriceRay normalized(const Eigen::VectorXd& v);
    static PriceRay normalized(std::initializer_list<double> v);

    int dim() const { return static_cast<int>(c_.size()); }
    const Eigen::VectorXd& components() const { return c_; }
    double operator[](int i) const { return c_[i]; }
    bool strictly_positive() const { return c_.size() > 0 && c_.minCoeff() > 0.0; }

    double angle() const;  ///< atan2(c1, c0); only meaningful in two dimensions

private:
    explicit PriceRay(Eigen::VectorXd c) : c_(std::move(c)) {}
    Eigen::VectorXd c_;
};

struct Halfspace {
    PriceRay ray;
    double value = 0.0;
};

/// {y : ray . y <= value for every constraint}
class HalfspaceEnvelope {
public:
    HalfspaceEnvelope(int dimension, std::vector<Halfspace> constraints);

    int dimension() const { return dim_; }
    const std::vector<Halfspace>& constraints() const { return cons_; }
    std::size_t size() const { return cons_.size(); }

    HalfspaceEnvelope with(const Halfspace& h) const;
    bool contains(const Eigen::VectorXd& y, double tol = 1e-9) const;

private:
    int dim_;
    std::vector<Halfspace> cons_;
};

struct RestrictedPriceSet {
    std::vector<PriceRay> rays;
    bool convex_flag = true;  ///< caller's assertion that the grid discretizes a convex compact set

    int dimension() const { return rays.empty() ? 0 : rays.front().dim(); }
    /// Throws ArgumentError on empty grid, mixed dimensions, zero components or duplicates.
    void validate() const;

    /// n rays spread evenly in angle between two 2D rays (inclusive).
    static RestrictedPriceSet arc(double theta_lo, double theta_hi, int n);
};

struct SupportResult {
    bool finite = false;
    double value = 0.0;  ///< +infinity when !finite
    std::optional<Eigen::VectorXd> maximizer;
    /// When unbounded: a direction d with ray . d <= 0 for every constraint and u . d > 0.
    std::optional<Eigen::VectorXd> certificate;
};

SupportResult support_value(const HalfspaceEnvelope& env, const PriceRay& u);
/// Same LP with an arbitrary (not normalized) objective vector.
SupportResult support_value(const HalfspaceEnvelope& env, const Eigen::VectorXd& u);

/// Max over rays of |a - b|.
double hausdorff_extended(std::span<const double> a, std::span<const double> b, const RestrictedPriceSet& pbar);

/// Geometric Hausdorff distance between two planar envelopes, by sampling
/// both boundaries (vertices plus n_boundary edge samples) and measuring
/// exact point-to-polyhedron distances.
double hausdorff_oracle_2d(const HalfspaceEnvelope& a, const HalfspaceEnvelope& b, int n_boundary);

/// Distance from q to the envelope set (0 when inside). Two dimensions only.
double distance_to_envelope_2d(const HalfspaceEnvelope& env, const Eigen::Vector2d& q);

/// H-representation of conv(points) + nonpositive orthant.
HalfspaceEnvelope free_disposal_hull(const std::vector<Eigen::VectorXd>& points);

bool recession_ok(const HalfspaceEnvelope& env, const std::vector<PriceRay>& probe_rays);

using PriceFunction = std::function<double(const Eigen::VectorXd&)>;

/// sum_j d f/d p_j * p_j - f(p), central differences with step h * p_j.
double euler_residual(const PriceFunction& f, const Eigen::VectorXd& p, double h = 1e-5);

}  // namespace prodenv
