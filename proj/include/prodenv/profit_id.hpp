#pragma once

#include "prodenv/market.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace prodenv {

/// Bucket ids per observable coordinate (restricted quantities first, then x).
struct CellKey {
    std::vector<int> ids;
    auto operator<=>(const CellKey&) const = default;
};

/// Maps observables to cells. Coordinates with few distinct values get one
/// bucket per value; the rest get equal-count quantile buckets.
class Bucketing {
public:
    Bucketing() = default;
    static Bucketing fit(const std::vector<Eigen::VectorXd>& observables, int buckets_per_dim);
    /// Rebuilds a saved bucketing; each coordinate's edges must be increasing.
    static Bucketing from_edges(std::vector<std::vector<double>> edges);

    CellKey key(const Eigen::VectorXd& obs) const;
    int dimension() const { return static_cast<int>(edges_.size()); }
    /// Upper edges per coordinate; bucket i holds values <= edges[i] (and > edges[i-1]).
    const std::vector<std::vector<double>>& edges() const { return edges_; }

private:
    std::vector<std::vector<double>> edges_;
};

struct AtomSet {
    std::vector<double> atoms;    ///< strictly increasing
    std::vector<double> weights;  ///< positive, sum to 1
    double fit_error = 0.0;       ///< sup distance between empirical and fitted CDF
    double mgf_deviation = 0.0;   ///< max relative gap between MGF ratio and the fitted mixture MGF
    bool mgf_ok = true;
};

/// Tabulated distribution of the additive noise, by quantiles.
class NoiseCdf {
public:
    NoiseCdf() = default;
    /// Builds from centered draws (sorted internally); keeps at most max_points quantiles.
    static NoiseCdf from_draws(std::vector<double> draws, int max_points = 1001);
    static NoiseCdf from_quantiles(std::vector<double> q);

    double cdf(double t) const;
    double mgf(double t) const;  ///< E exp(t eta) over the tabulated quantiles
    const std::vector<double>& quantiles() const { return q_; }
    double spread() const { return q_.empty() ? 0.0 : q_.back() - q_.front(); }
    double stddev() const;

private:
    std::vector<double> q_;
};

struct Anchor {
    CellKey key;
    double a = 0.0;
    double b = 0.0;
    int rank_from_top = 0;  ///< 0 for the cell's highest cluster
    int e_star = 0;         ///< resolved once d_e is known
    double profit = 0.0;
    int count = 0;
    double isolation_gap = 0.0;
};

struct CellAssignment {
    int e = 0;
    double value = 0.0;
    double stderr_proxy = 0.0;
    double weight = 0.0;
};

struct ProfitCell {
    CellKey key;
    Eigen::VectorXd center;    ///< mean observables
    Eigen::VectorXd diameter;  ///< per-coordinate range inside the cell
    int n = 0;
    bool fitted = false;       ///< false when the cell had too few observations
    AtomSet atoms;
    std::vector<CellAssignment> assignments;  ///< ascending in e
    int unidentified_below = 1;               ///< types e < this are not identified in the cell

    const CellAssignment* find(int e) const;
};

struct ProfitTable {
    int d_e = 0;
    int num_restricted = 0;
    int price_dim = 0;
    std::vector<bool> is_price;
    Anchor anchor;
    NoiseCdf noise;
    Bucketing bucketing;
    std::vector<ProfitCell> cells;
};

struct IdentifyOptions {
    double noise_width = 0.0;       ///< K (or an upper bound)
    int buckets_per_dim = 10;
    int min_anchor_count = 200;
    int min_cell_count = 50;
    int max_types = 6;
    double penalty = 1.0;            ///< c in KS + c k / sqrt(n)
    double fit_threshold = 0.05;     ///< KS tolerance floor; the DKW 99% band is used when larger
    double mgf_tolerance = 0.05;
    int d_e_override = 0;            ///< 0 selects d_e from the data
};

/// Cluster structure of one sample: breaks at gaps > K.
struct Cluster {
    double lo = 0.0;
    double hi = 0.0;
    int count = 0;
    double gap_below = 0.0;  ///< +inf at the bottom
    double gap_above = 0.0;  ///< +inf at the top
};
std::vector<Cluster> clusters_of(std::span<const double> sorted, double width);

struct CellSample {
    CellKey key;
    std::vector<double> values;  ///< sorted noisy profits
};

Anchor find_separated_cell(const std::vector<CellSample>& cells, double width, int min_count);

/// Mean of the anchor cell inside [a, b] and the centered residual distribution.
std::pair<double, NoiseCdf> estimate_noise_cdf(std::span<const double> anchor_sample, double a, double b, int min_count);

AtomSet deconvolve_atoms(std::span<const double> sample, const NoiseCdf& noise, const IdentifyOptions& opt);

/// Top-down type assignment. Throws IdentificationError when a cell has more atoms than d_e.
void rank_and_assign(std::vector<ProfitCell>& cells, int d_e);

/// Full estimator: bucket, anchor, noise, per-cell deconvolution, d_e, assignment.
ProfitTable identify_profits(const Dataset& data, const IdentifyOptions& opt);

struct HomogeneityAudit {
    int pairs = 0;
    double max_relative_deviation = 0.0;
    bool pass = true;
};

/// Compares cells whose price coordinates are scalar multiples of each other.
HomogeneityAudit homogeneity_audit(const ProfitTable& table, double tolerance = 0.02);

}  // namespace prodenv
