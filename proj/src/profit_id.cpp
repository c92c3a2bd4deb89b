#include "prodenv/profit_id.hpp"

#include "prodenv/error.hpp"
#include "prodenv/optim.hpp"
#include "prodenv/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace prodenv {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Bucketing Bucketing::fit(const std::vector<Eigen::VectorXd>& observables, int buckets_per_dim) {
    if (buckets_per_dim < 1) throw ConfigError("bucketing: buckets_per_dim must be >= 1");
    Bucketing b;
    if (observables.empty()) return b;
    const int dim = static_cast<int>(observables.front().size());
    b.edges_.resize(dim);
    std::vector<double> vals(observables.size());
    for (int c = 0; c < dim; ++c) {
        for (std::size_t i = 0; i < observables.size(); ++i) vals[i] = observables[i][c];
        std::sort(vals.begin(), vals.end());
        std::vector<double> uniq;
        for (double v : vals)
            if (uniq.empty() || v - uniq.back() > 1e-12 * std::max(1.0, std::abs(v))) uniq.push_back(v);
        auto& e = b.edges_[c];
        if (static_cast<int>(uniq.size()) <= buckets_per_dim) {
            for (std::size_t i = 0; i + 1 < uniq.size(); ++i) e.push_back(0.5 * (uniq[i] + uniq[i + 1]));
        } else {
            for (int k = 1; k < buckets_per_dim; ++k) {
                const double q = vals[static_cast<std::size_t>(static_cast<double>(k) * (vals.size() - 1) / buckets_per_dim)];
                if (e.empty() || q > e.back()) e.push_back(q);
            }
        }
        e.push_back(kInf);
    }
    return b;
}

Bucketing Bucketing::from_edges(std::vector<std::vector<double>> edges) {
    for (const auto& e : edges)
        if (e.empty() || !std::is_sorted(e.begin(), e.end())) throw ArgumentError("bucketing: edges must be nonempty and sorted");
    Bucketing b;
    b.edges_ = std::move(edges);
    return b;
}

CellKey Bucketing::key(const Eigen::VectorXd& obs) const {
    if (obs.size() != dimension()) throw ArgumentError("bucketing: observable dimension mismatch");
    CellKey k;
    k.ids.resize(edges_.size());
    for (std::size_t c = 0; c < edges_.size(); ++c) {
        const auto& e = edges_[c];
        k.ids[c] = static_cast<int>(std::lower_bound(e.begin(), e.end(), obs[static_cast<int>(c)]) - e.begin());
    }
    return k;
}

NoiseCdf NoiseCdf::from_draws(std::vector<double> draws, int max_points) {
    if (draws.empty()) throw ArgumentError("noise cdf: no draws");
    std::sort(draws.begin(), draws.end());
    const std::size_t n = draws.size();
    const std::size_t m = std::min<std::size_t>(n, std::max(2, max_points));
    NoiseCdf out;
    if (m == 1) {
        out.q_ = draws;
        return out;
    }
    out.q_.resize(m);
    for (std::size_t j = 0; j < m; ++j) out.q_[j] = draws[static_cast<std::size_t>(std::llround(static_cast<double>(j) * (n - 1) / (m - 1)))];
    return out;
}

NoiseCdf NoiseCdf::from_quantiles(std::vector<double> q) {
    if (q.empty()) throw ArgumentError("noise cdf: no quantiles");
    if (!std::is_sorted(q.begin(), q.end())) throw ConfigError("noise cdf: quantiles must be sorted");
    NoiseCdf out;
    out.q_ = std::move(q);
    return out;
}

double NoiseCdf::cdf(double t) const {
    const std::size_t m = q_.size();
    if (m == 0 || t < q_.front()) return 0.0;
    if (t >= q_.back()) return 1.0;
    const std::size_t i = static_cast<std::size_t>(std::upper_bound(q_.begin(), q_.end(), t) - q_.begin()) - 1;
    const double w = q_[i + 1] > q_[i] ? (t - q_[i]) / (q_[i + 1] - q_[i]) : 0.0;
    return (static_cast<double>(i) + w) / static_cast<double>(m - 1);
}

double NoiseCdf::mgf(double t) const {
    double acc = 0.0;
    for (double q : q_) acc += std::exp(t * q);
    return acc / static_cast<double>(q_.size());
}

double NoiseCdf::stddev() const {
    if (q_.size() < 2) return 0.0;
    const double mean = std::accumulate(q_.begin(), q_.end(), 0.0) / q_.size();
    double ss = 0.0;
    for (double q : q_) ss += (q - mean) * (q - mean);
    return std::sqrt(ss / q_.size());
}

const CellAssignment* ProfitCell::find(int e) const {
    for (const auto& a : assignments)
        if (a.e == e) return &a;
    return nullptr;
}

std::vector<Cluster> clusters_of(std::span<const double> sorted, double width) {
    std::vector<Cluster> out;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (i == 0 || sorted[i] - sorted[i - 1] > width) {
            Cluster c;
            c.lo = c.hi = sorted[i];
            c.gap_below = i == 0 ? kInf : sorted[i] - sorted[i - 1];
            if (!out.empty()) out.back().gap_above = c.gap_below;
            out.push_back(c);
        }
        out.back().hi = sorted[i];
        ++out.back().count;
    }
    if (!out.empty()) out.back().gap_above = kInf;
    return out;
}

Anchor find_separated_cell(const std::vector<CellSample>& cells, double width, int min_count) {
    if (width < 0.0 || !std::isfinite(width)) throw ArgumentError("find_separated_cell: noise width must be finite and >= 0");
    bool found = false;
    Anchor best;
    int best_clusters = -1;
    for (const auto& cell : cells) {
        if (cell.values.empty()) continue;
        const auto cl = clusters_of(cell.values, width);
        const int nc = static_cast<int>(cl.size());
        for (int i = 0; i < nc; ++i) {
            const auto& c = cl[i];
            if (c.count < min_count) continue;
            if (c.hi - c.lo > width * (1.0 + 1e-12)) continue;
            const double iso = std::min(c.gap_below, c.gap_above);
            // More visible clusters make the top-down rank trustworthy; then prefer wider isolation.
            const bool better = !found || nc > best_clusters || (nc == best_clusters && iso > best.isolation_gap) ||
                                (nc == best_clusters && iso == best.isolation_gap && c.count > best.count);
            if (!better) continue;
            found = true;
            best_clusters = nc;
            best.key = cell.key;
            best.a = c.hi - width;
            best.b = c.lo + width;
            best.rank_from_top = nc - 1 - i;
            best.count = c.count;
            best.isolation_gap = iso;
        }
    }
    if (!found)
        throw IdentificationError("no separated cell: every cluster overlaps a neighbour within the noise width or is too small");
    return best;
}

std::pair<double, NoiseCdf> estimate_noise_cdf(std::span<const double> sample, double a, double b, int min_count) {
    std::vector<double> inside;
    for (double v : sample)
        if (v >= a && v <= b) inside.push_back(v);
    if (static_cast<int>(inside.size()) < min_count)
        throw IdentificationError("anchor interval holds " + std::to_string(inside.size()) + " observations, need " +
                                  std::to_string(min_count));
    const double mean = std::accumulate(inside.begin(), inside.end(), 0.0) / inside.size();
    for (double& v : inside) v -= mean;
    return {mean, NoiseCdf::from_draws(std::move(inside))};
}

namespace {

struct EvalGrid {
    std::vector<double> x;
    std::vector<double> right;  ///< empirical CDF at x
    std::vector<double> left;   ///< empirical CDF just below x
};

EvalGrid make_eval_grid(const std::vector<double>& sorted, std::size_t max_points) {
    EvalGrid g;
    const std::size_t n = sorted.size();
    const std::size_t m = std::min(n, max_points);
    for (std::size_t j = 0; j < m; ++j) {
        const std::size_t i = m == 1 ? 0 : static_cast<std::size_t>(std::llround(static_cast<double>(j) * (n - 1) / (m - 1)));
        const double x = sorted[i];
        if (!g.x.empty() && x == g.x.back()) continue;
        g.x.push_back(x);
        g.right.push_back(static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin()) / n);
        g.left.push_back(static_cast<double>(std::lower_bound(sorted.begin(), sorted.end(), x) - sorted.begin()) / n);
    }
    return g;
}

// Least squares over the probability simplex by enumerating supports.
Eigen::VectorXd simplex_least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& f) {
    const int k = static_cast<int>(a.cols());
    Eigen::VectorXd best = Eigen::VectorXd::Constant(k, 1.0 / k);
    double best_val = (a * best - f).squaredNorm();
    for (unsigned mask = 1; mask < (1u << k); ++mask) {
        std::vector<int> s;
        for (int j = 0; j < k; ++j)
            if (mask & (1u << j)) s.push_back(j);
        const int m = static_cast<int>(s.size());
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(m + 1, m + 1);
        Eigen::VectorXd rhs(m + 1);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) kkt(i, j) = a.col(s[i]).dot(a.col(s[j]));
            kkt(i, m) = kkt(m, i) = 1.0;
            rhs[i] = a.col(s[i]).dot(f);
        }
        rhs[m] = 1.0;
        const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
        Eigen::VectorXd w = Eigen::VectorXd::Zero(k);
        bool ok = true;
        for (int i = 0; i < m; ++i) {
            if (!(sol[i] >= -1e-12)) ok = false;
            w[s[i]] = std::max(0.0, sol[i]);
        }
        if (!ok || w.sum() <= 0.0) continue;
        w /= w.sum();
        const double val = (a * w - f).squaredNorm();
        if (val < best_val - 1e-15) {
            best_val = val;
            best = w;
        }
    }
    return best;
}

std::vector<double> kmeans_1d(const std::vector<double>& sorted, int k) {
    const std::size_t n = sorted.size();
    std::vector<double> c(k);
    for (int j = 0; j < k; ++j) c[j] = sorted[static_cast<std::size_t>((j + 0.5) * n / k)];
    for (int it = 0; it < 100; ++it) {
        std::vector<double> sum(k, 0.0);
        std::vector<std::size_t> cnt(k, 0);
        for (double x : sorted) {
            int best = 0;
            for (int j = 1; j < k; ++j)
                if (std::abs(x - c[j]) < std::abs(x - c[best])) best = j;
            sum[best] += x;
            ++cnt[best];
        }
        bool moved = false;
        for (int j = 0; j < k; ++j) {
            if (cnt[j] == 0) continue;
            const double nc = sum[j] / cnt[j];
            if (nc != c[j]) moved = true;
            c[j] = nc;
        }
        if (!moved) break;
    }
    std::sort(c.begin(), c.end());
    return c;
}

struct MixtureFit {
    std::vector<double> atoms;
    Eigen::VectorXd weights;
    double ks = kInf;
};

Eigen::MatrixXd design(const EvalGrid& g, const NoiseCdf& noise, const std::vector<double>& mu, double shift) {
    Eigen::MatrixXd a(g.x.size(), mu.size());
    for (std::size_t i = 0; i < g.x.size(); ++i)
        for (std::size_t j = 0; j < mu.size(); ++j) a(i, j) = noise.cdf(g.x[i] + shift - mu[j]);
    return a;
}

double ks_distance(const EvalGrid& g, const NoiseCdf& noise, const std::vector<double>& mu, const Eigen::VectorXd& w) {
    const Eigen::VectorXd fr = design(g, noise, mu, 0.0) * w;
    double scale = 1.0;
    for (double x : g.x) scale = std::max(scale, std::abs(x));
    const Eigen::VectorXd fl = design(g, noise, mu, -1e-10 * scale) * w;
    double d = 0.0;
    for (std::size_t i = 0; i < g.x.size(); ++i) {
        d = std::max(d, std::abs(fr[i] - g.right[i]));
        d = std::max(d, std::abs(fl[i] - g.left[i]));
    }
    return d;
}

MixtureFit fit_k(const std::vector<double>& sorted, const EvalGrid& g, const NoiseCdf& noise, int k) {
    const Eigen::VectorXd target = Eigen::Map<const Eigen::VectorXd>(g.right.data(), static_cast<Eigen::Index>(g.right.size()));
    auto weights_for = [&](const std::vector<double>& mu) { return simplex_least_squares(design(g, noise, mu, 0.0), target); };
    auto objective = [&](const Eigen::VectorXd& v) {
        std::vector<double> mu(v.data(), v.data() + v.size());
        const Eigen::MatrixXd a = design(g, noise, mu, 0.0);
        return (a * simplex_least_squares(a, target) - target).squaredNorm();
    };

    const std::vector<double> init = kmeans_1d(sorted, k);
    MixtureFit fit;
    fit.atoms = init;
    fit.weights = weights_for(init);
    fit.ks = ks_distance(g, noise, init, fit.weights);

    if (k == 1) {
        // One atom: the sample mean net of the noise mean is the efficient estimate.
        const auto& q = noise.quantiles();
        const double noise_mean = std::accumulate(q.begin(), q.end(), 0.0) / static_cast<double>(q.size());
        const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
        fit.atoms = {mean - noise_mean};
        fit.weights = Eigen::VectorXd::Ones(1);
        fit.ks = ks_distance(g, noise, fit.atoms, fit.weights);
        return fit;
    }

    if (noise.spread() > 0.0) {
        Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(init.data(), k);
        const double step = std::max(0.05 * noise.spread(), 1e-6);
        NelderMeadOptions nm;
        nm.max_evaluations = 150 * k;
        nm.initial_step = step;
        nm.x_tolerance = 1e-7 * std::max(1.0, x0.cwiseAbs().maxCoeff());
        const auto res = nelder_mead(objective, x0, nm);
        std::vector<double> mu(res.x.data(), res.x.data() + k);
        std::sort(mu.begin(), mu.end());
        const Eigen::VectorXd w = weights_for(mu);
        const double ks = ks_distance(g, noise, mu, w);
        if (ks <= fit.ks) {
            fit.atoms = mu;
            fit.weights = w;
            fit.ks = ks;
        }
    }
    return fit;
}

}  // namespace

AtomSet deconvolve_atoms(std::span<const double> sample_in, const NoiseCdf& noise, const IdentifyOptions& opt) {
    if (sample_in.empty()) throw ArgumentError("deconvolve_atoms: empty sample");
    if (opt.max_types < 1) throw ConfigError("deconvolve_atoms: max_types must be >= 1");
    std::vector<double> sorted(sample_in.begin(), sample_in.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    const EvalGrid grid = make_eval_grid(sorted, 400);

    std::size_t distinct = 1;
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i] != sorted[i - 1]) ++distinct;
    const int kmax = static_cast<int>(std::min<std::size_t>(opt.max_types, distinct));

    std::vector<MixtureFit> fits;
    for (int k = 1; k <= kmax; ++k) fits.push_back(fit_k(sorted, grid, noise, k));

    const double threshold = std::max(opt.fit_threshold, 1.63 / std::sqrt(n));
    double best_ks = kInf;
    for (const auto& f : fits) best_ks = std::min(best_ks, f.ks);
    if (best_ks > threshold)
        throw IdentificationError("deconvolution failed: best CDF distance " + std::to_string(best_ks) + " exceeds " +
                                  std::to_string(threshold));

    std::size_t pick = 0;
    double best_score = kInf;
    for (std::size_t i = 0; i < fits.size(); ++i) {
        const double score = fits[i].ks + opt.penalty * static_cast<double>(i + 1) / std::sqrt(n);
        if (score < best_score - 1e-15) {
            best_score = score;
            pick = i;
        }
    }
    const auto& f = fits[pick];

    // Merge near-ties and drop empty components.
    std::vector<std::pair<double, double>> aw;
    for (std::size_t j = 0; j < f.atoms.size(); ++j)
        if (f.weights[static_cast<Eigen::Index>(j)] > 1e-9) aw.emplace_back(f.atoms[j], f.weights[static_cast<Eigen::Index>(j)]);
    std::sort(aw.begin(), aw.end());
    AtomSet out;
    for (const auto& [a, w] : aw) {
        if (!out.atoms.empty() && a - out.atoms.back() < 1e-8) {
            out.weights.back() += w;
            continue;
        }
        out.atoms.push_back(a);
        out.weights.push_back(w);
    }
    const double wsum = std::accumulate(out.weights.begin(), out.weights.end(), 0.0);
    for (double& w : out.weights) w /= wsum;
    out.fit_error = f.ks;

    // Moment-generating-function cross-check on centered, rescaled data.
    const double c = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
    const double s = std::max(std::max(std::abs(sorted.front() - c), std::abs(sorted.back() - c)), 1e-12);
    double dev = 0.0;
    for (int i = 0; i <= 12; ++i) {
        const double t = -3.0 + 0.5 * i;
        double emp = 0.0;
        for (double x : sorted) emp += std::exp(t * (x - c) / s);
        emp /= n;
        const double ratio = emp / noise.mgf(t / s);
        double model = 0.0;
        for (std::size_t j = 0; j < out.atoms.size(); ++j) model += out.weights[j] * std::exp(t * (out.atoms[j] - c) / s);
        dev = std::max(dev, std::abs(ratio - model) / model);
    }
    out.mgf_deviation = dev;
    out.mgf_ok = dev <= opt.mgf_tolerance;
    return out;
}

void rank_and_assign(std::vector<ProfitCell>& cells, int d_e) {
    if (d_e < 1) throw ArgumentError("rank_and_assign: d_e must be >= 1");
    for (auto& cell : cells) {
        cell.assignments.clear();
        if (!cell.fitted) {
            cell.unidentified_below = d_e + 1;
            continue;
        }
        const int m = static_cast<int>(cell.atoms.atoms.size());
        if (m > d_e)
            throw IdentificationError("cell holds " + std::to_string(m) + " atoms but d_e = " + std::to_string(d_e) +
                                      " (bucketing too coarse or d_e misspecified)");
        for (int i = 0; i < m; ++i) {
            CellAssignment a;
            a.e = d_e - m + 1 + i;
            a.value = cell.atoms.atoms[i];
            a.weight = cell.atoms.weights[i];
            cell.assignments.push_back(a);
        }
        cell.unidentified_below = d_e - m + 1;
    }
}

ProfitTable identify_profits(const Dataset& data, const IdentifyOptions& opt) {
    if (data.records.empty()) throw ArgumentError("identify: empty dataset");
    ProfitTable table;
    table.num_restricted = data.num_restricted;
    table.price_dim = data.price_dim;
    table.is_price = data.records.front().is_price;

    std::vector<Eigen::VectorXd> obs;
    obs.reserve(data.records.size());
    for (const auto& r : data.records) {
        Eigen::VectorXd o(r.y_restricted.size() + r.x.size());
        o << r.y_restricted, r.x;
        obs.push_back(std::move(o));
    }
    table.bucketing = Bucketing::fit(obs, opt.buckets_per_dim);

    std::map<CellKey, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < obs.size(); ++i) groups[table.bucketing.key(obs[i])].push_back(i);

    std::vector<CellSample> samples;
    for (const auto& [key, idx] : groups) {
        CellSample s;
        s.key = key;
        for (std::size_t i : idx) s.values.push_back(data.records[i].noisy_profit);
        std::sort(s.values.begin(), s.values.end());
        samples.push_back(std::move(s));
    }

    table.anchor = find_separated_cell(samples, opt.noise_width, opt.min_anchor_count);
    const auto anchor_it = std::find_if(samples.begin(), samples.end(), [&](const CellSample& s) { return s.key == table.anchor.key; });
    auto [anchor_profit, noise] = estimate_noise_cdf(anchor_it->values, table.anchor.a, table.anchor.b, opt.min_anchor_count);
    table.anchor.profit = anchor_profit;
    table.noise = noise;

    table.cells.resize(samples.size());
    std::size_t c = 0;
    for (const auto& [key, idx] : groups) {
        auto& cell = table.cells[c++];
        cell.key = key;
        cell.n = static_cast<int>(idx.size());
        const int dim = static_cast<int>(obs.front().size());
        Eigen::VectorXd lo = Eigen::VectorXd::Constant(dim, kInf), hi = Eigen::VectorXd::Constant(dim, -kInf);
        cell.center = Eigen::VectorXd::Zero(dim);
        for (std::size_t i : idx) {
            cell.center += obs[i];
            lo = lo.cwiseMin(obs[i]);
            hi = hi.cwiseMax(obs[i]);
        }
        cell.center /= static_cast<double>(idx.size());
        cell.diameter = hi - lo;
    }

    std::vector<std::string> failures(samples.size());
    parallel_for(static_cast<int>(samples.size()), [&](int i) {
        auto& cell = table.cells[i];
        if (cell.n < opt.min_cell_count) return;
        try {
            cell.atoms = deconvolve_atoms(samples[i].values, table.noise, opt);
            cell.fitted = true;
        } catch (const IdentificationError& e) {
            failures[i] = e.what();
        }
    });
    const bool any_fitted = std::any_of(table.cells.begin(), table.cells.end(), [](const ProfitCell& c) { return c.fitted; });
    if (!any_fitted) {
        std::string why = "no cell could be deconvolved";
        for (const auto& f : failures)
            if (!f.empty()) {
                why += ": " + f;
                break;
            }
        throw IdentificationError(why);
    }

    if (opt.d_e_override > 0) {
        table.d_e = opt.d_e_override;
    } else {
        std::vector<double> errs;
        for (const auto& cell : table.cells)
            if (cell.fitted) errs.push_back(cell.atoms.fit_error);
        std::nth_element(errs.begin(), errs.begin() + errs.size() / 2, errs.end());
        const double median = errs[errs.size() / 2];
        for (const auto& cell : table.cells)
            if (cell.fitted && cell.atoms.fit_error <= median)
                table.d_e = std::max(table.d_e, static_cast<int>(cell.atoms.atoms.size()));
    }
    rank_and_assign(table.cells, table.d_e);

    const double sd = table.noise.stddev();
    for (auto& cell : table.cells)
        for (auto& a : cell.assignments) a.stderr_proxy = sd / std::sqrt(std::max(1.0, a.weight * cell.n));

    table.anchor.e_star = table.d_e - table.anchor.rank_from_top;
    if (table.anchor.e_star < 1)
        throw IdentificationError("anchor rank exceeds the number of types; the separated cell is inconsistent with d_e");
    return table;
}

HomogeneityAudit homogeneity_audit(const ProfitTable& table, double tolerance) {
    HomogeneityAudit out;
    const int k = table.num_restricted, d = table.price_dim;
    for (bool p : table.is_price)
        if (!p) return out;  // proxies carry no scale information
    for (std::size_t i = 0; i < table.cells.size(); ++i) {
        const auto& ci = table.cells[i];
        if (ci.assignments.empty()) continue;
        const Eigen::VectorXd pi = ci.center.tail(d);
        for (std::size_t j = i + 1; j < table.cells.size(); ++j) {
            const auto& cj = table.cells[j];
            if (cj.assignments.empty()) continue;
            if (k > 0 && (ci.center.head(k) - cj.center.head(k)).norm() > 1e-9 * (1.0 + ci.center.head(k).norm())) continue;
            const Eigen::VectorXd pj = cj.center.tail(d);
            const double cosang = pi.dot(pj) / (pi.norm() * pj.norm());
            if (1.0 - cosang > 1e-10) continue;
            const double lam = pj.norm() / pi.norm();
            if (std::abs(lam - 1.0) < 1e-6) continue;
            for (const auto& a : ci.assignments) {
                const auto* b = cj.find(a.e);
                if (!b) continue;
                ++out.pairs;
                const double expect = lam * a.value;
                const double dev = std::abs(b->value - expect) / std::max(std::abs(expect), 1e-12);
                out.max_relative_deviation = std::max(out.max_relative_deviation, dev);
            }
        }
    }
    out.pass = out.max_relative_deviation <= tolerance;
    return out;
}

}  // namespace prodenv
