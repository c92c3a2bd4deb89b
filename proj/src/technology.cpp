#include "prodenv/technology.hpp"

#include "prodenv/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace prodenv {

std::string to_string(TechnologyKind k) {
    switch (k) {
        case TechnologyKind::PowerScaled: return "power";
        case TechnologyKind::PiecewiseKinked: return "piecewise";
        case TechnologyKind::DiewertGL: return "diewert";
        case TechnologyKind::HicksNeutral: return "hicks";
    }
    return "unknown";
}

TechnologyKind technology_kind_from_string(const std::string& s) {
    if (s == "power") return TechnologyKind::PowerScaled;
    if (s == "piecewise") return TechnologyKind::PiecewiseKinked;
    if (s == "diewert") return TechnologyKind::DiewertGL;
    if (s == "hicks") return TechnologyKind::HicksNeutral;
    throw ConfigError("unknown technology kind '" + s + "'");
}

int TechnologySpec::price_dim() const {
    if (kind == TechnologyKind::DiewertGL)
        return coefficients.empty() ? 0 : static_cast<int>(coefficients.front().rows());
    return 2;
}

void TechnologySpec::validate() const {
    if (num_types < 1) throw ConfigError("technology: num_types must be >= 1");
    for (double b : restricted_elasticity)
        if (!std::isfinite(b) || b < 0.0) throw ConfigError("technology: restricted elasticities must be >= 0");
    switch (kind) {
        case TechnologyKind::PowerScaled:
        case TechnologyKind::HicksNeutral:
            if (static_cast<int>(scale.size()) != num_types) throw ConfigError("technology: need one scale per type");
            for (double a : scale)
                if (!(a > 0.0)) throw ConfigError("technology: scales must be positive");
            if (kind == TechnologyKind::PowerScaled && !(exponent > 0.0 && exponent < 1.0))
                throw ConfigError("technology: exponent must lie in (0, 1)");
            if (kind == TechnologyKind::HicksNeutral) {
                if (knot_input.size() < 2 || knot_input.size() != knot_output.size())
                    throw ConfigError("technology: base function needs >= 2 matching knots");
                double prev_slope = std::numeric_limits<double>::infinity();
                for (std::size_t i = 1; i < knot_input.size(); ++i) {
                    const double dl = knot_input[i] - knot_input[i - 1];
                    if (!(dl > 0.0)) throw ConfigError("technology: knots must be strictly increasing");
                    const double slope = (knot_output[i] - knot_output[i - 1]) / dl;
                    if (slope > prev_slope + 1e-12) throw ConfigError("technology: base function must be concave");
                    prev_slope = slope;
                }
                if (knot_input.front() != 0.0) throw ConfigError("technology: first knot must be at zero input");
            }
            break;
        case TechnologyKind::PiecewiseKinked:
            if (static_cast<int>(pieces.size()) != num_types) throw ConfigError("technology: need one piece list per type");
            for (const auto& list : pieces) {
                if (list.empty()) throw ConfigError("technology: empty piece list");
                if (list.front().lo != 0.0) throw ConfigError("technology: first piece must start at zero");
                for (std::size_t i = 0; i < list.size(); ++i) {
                    const auto& pc = list[i];
                    if (!(pc.expo > 0.0 && pc.expo <= 1.0)) throw ConfigError("technology: piece exponent must lie in (0, 1]");
                    if (!(pc.coef >= 0.0)) throw ConfigError("technology: piece coefficient must be >= 0");
                    if (!(pc.hi > pc.lo)) throw ConfigError("technology: empty piece");
                    if (i + 1 < list.size() && list[i + 1].lo != pc.hi) throw ConfigError("technology: pieces must be contiguous");
                    if (i + 1 == list.size() && std::isfinite(pc.hi)) throw ConfigError("technology: last piece must be unbounded");
                }
            }
            break;
        case TechnologyKind::DiewertGL: {
            if (static_cast<int>(coefficients.size()) != num_types) throw ConfigError("technology: need one matrix per type");
            const int d = price_dim();
            if (d < 1) throw ConfigError("technology: empty coefficient matrix");
            for (const auto& b : coefficients) {
                if (b.rows() != d || b.cols() != d) throw ConfigError("technology: coefficient matrices must be square and equal size");
                if ((b - b.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw ConfigError("technology: coefficient matrix not symmetric");
                for (int s = 0; s < d; ++s)
                    for (int j = 0; j < d; ++j) {
                        if (s != j && b(s, j) > 0.0) throw ConfigError("technology: off-diagonal coefficients must be <= 0");
                        if (s == j && b(s, j) < 0.0) throw ConfigError("technology: diagonal coefficients must be >= 0");
                    }
            }
            break;
        }
    }
}

TechnologySpec TechnologySpec::power(std::vector<double> scale, double exponent) {
    TechnologySpec t;
    t.kind = TechnologyKind::PowerScaled;
    t.num_types = static_cast<int>(scale.size());
    t.scale = std::move(scale);
    t.exponent = exponent;
    return t;
}

TechnologySpec TechnologySpec::diewert(std::vector<Eigen::MatrixXd> coefficients) {
    TechnologySpec t;
    t.kind = TechnologyKind::DiewertGL;
    t.num_types = static_cast<int>(coefficients.size());
    t.coefficients = std::move(coefficients);
    return t;
}

TechnologySpec TechnologySpec::nonmonotone_triple() {
    constexpr double inf = std::numeric_limits<double>::infinity();
    TechnologySpec t;
    t.kind = TechnologyKind::PiecewiseKinked;
    t.num_types = 3;
    t.pieces = {
        {{0.0, inf, 1.0, 0.4, 0.0}},
        {{0.0, inf, 2.0, 0.4, 0.0}},
        {{0.0, 0.01, 1.0, 0.2, 0.0},
         {0.01, 0.03, 7.0, 1.0, std::pow(0.01, 0.2) - 7.0 * 0.01},
         {0.03, inf, 2.0, 0.4, 7.0 * 0.02 + std::pow(0.01, 0.2) - 2.0 * std::pow(0.03, 0.4)}},
    };
    return t;
}

double diewert_profit(const Eigen::MatrixXd& b, const Eigen::VectorXd& p) {
    const Eigen::VectorXd r = p.cwiseSqrt();
    return r.dot(b * r);
}

Eigen::VectorXd diewert_supply(const Eigen::MatrixXd& b, const Eigen::VectorXd& p) {
    const Eigen::VectorXd r = p.cwiseSqrt();
    return (b * r).cwiseQuotient(r);
}

double cobb_douglas_profit(double alpha, double beta, const Eigen::VectorXd& p) {
    if (!(alpha > 0.0 && beta > 0.0 && alpha + beta < 1.0)) throw ArgumentError("cobb_douglas_profit: need alpha, beta > 0 and alpha + beta < 1");
    const double s = alpha + beta - 1.0;
    return (1.0 - alpha - beta) * std::pow(p[1] / alpha, alpha / s) * std::pow(p[2] / beta, beta / s) * std::pow(p[0], -1.0 / s);
}

namespace {

struct SingleOutput {
    double input = 0.0;
    double output = 0.0;
};

double eval_pieces(const std::vector<PowerPiece>& list, double l) {
    for (const auto& pc : list)
        if (l <= pc.hi) return pc.coef * std::pow(l, pc.expo) + pc.offset;
    const auto& pc = list.back();
    return pc.coef * std::pow(l, pc.expo) + pc.offset;
}

SingleOutput best_piecewise(const std::vector<PowerPiece>& list, double po, double pl) {
    std::vector<double> candidates{0.0};
    for (const auto& pc : list) {
        candidates.push_back(pc.lo);
        if (std::isfinite(pc.hi)) candidates.push_back(pc.hi);
        if (pc.expo < 1.0 && pc.coef > 0.0) {
            // Interior stationary point of po * coef * l^expo - pl * l.
            const double l = std::pow(po * pc.coef * pc.expo / pl, 1.0 / (1.0 - pc.expo));
            if (l >= pc.lo && l <= pc.hi) candidates.push_back(l);
        } else if (!std::isfinite(pc.hi) && po * pc.coef > pl) {
            throw UnboundedError("profit_oracle: linear tail makes profit unbounded");
        }
    }
    SingleOutput best{0.0, eval_pieces(list, 0.0)};
    double best_val = po * best.output;
    for (double l : candidates) {
        const double y = eval_pieces(list, l);
        const double v = po * y - pl * l;
        if (v > best_val) {
            best_val = v;
            best = {l, y};
        }
    }
    return best;
}

SingleOutput best_knots(const std::vector<double>& li, const std::vector<double>& yo, double a, double po, double pl) {
    SingleOutput best{li[0], a * yo[0]};
    double best_val = po * best.output - pl * best.input;
    for (std::size_t i = 1; i < li.size(); ++i) {
        const double v = po * a * yo[i] - pl * li[i];
        if (v > best_val) {
            best_val = v;
            best = {li[i], a * yo[i]};
        }
    }
    return best;
}

}  // namespace

OracleResult profit_oracle(const TechnologySpec& tech, int e, const Eigen::VectorXd& p,
                           const std::optional<Eigen::VectorXd>& y_restricted) {
    if (e < 1 || e > tech.num_types) throw ArgumentError("profit_oracle: type index out of range");
    if (p.size() != tech.price_dim()) throw ArgumentError("profit_oracle: price dimension mismatch");
    for (int i = 0; i < p.size(); ++i)
        if (!(p[i] > 0.0) || !std::isfinite(p[i])) throw ArgumentError("profit_oracle: prices must be strictly positive");

    double radial = 1.0;
    if (tech.num_restricted() > 0) {
        if (!y_restricted || y_restricted->size() != tech.num_restricted())
            throw ArgumentError("profit_oracle: restricted quantities required");
        for (int i = 0; i < tech.num_restricted(); ++i) {
            const double k = (*y_restricted)[i];
            if (!(k > 0.0)) throw ArgumentError("profit_oracle: restricted quantities must be positive");
            radial *= std::pow(k, tech.restricted_elasticity[i]);
        }
    }

    OracleResult out;
    const int idx = e - 1;
    switch (tech.kind) {
        case TechnologyKind::PowerScaled: {
            const double a = tech.scale[idx], g = tech.exponent;
            const double l = std::pow(g * a * p[0] / p[1], 1.0 / (1.0 - g));
            const double y = a * std::pow(l, g);
            out.optimizer = Eigen::Vector2d(y, -l);
            break;
        }
        case TechnologyKind::PiecewiseKinked: {
            const auto s = best_piecewise(tech.pieces[idx], p[0], p[1]);
            out.optimizer = Eigen::Vector2d(s.output, -s.input);
            break;
        }
        case TechnologyKind::HicksNeutral: {
            const auto s = best_knots(tech.knot_input, tech.knot_output, tech.scale[idx], p[0], p[1]);
            out.optimizer = Eigen::Vector2d(s.output, -s.input);
            break;
        }
        case TechnologyKind::DiewertGL:
            out.optimizer = diewert_supply(tech.coefficients[idx], p);
            break;
    }
    out.optimizer *= radial;
    out.profit = p.dot(out.optimizer);
    if (!std::isfinite(out.profit)) throw NumericError("profit_oracle: non-finite profit");
    return out;
}

bool nested_check(const TechnologySpec& tech, const std::vector<PriceRay>& probe_rays,
                  const std::optional<Eigen::VectorXd>& y_restricted) {
    if (probe_rays.empty()) throw ArgumentError("nested_check: need at least one probe ray");
    for (const auto& r : probe_rays) {
        double prev = -std::numeric_limits<double>::infinity();
        for (int e = 1; e <= tech.num_types; ++e) {
            const double v = profit_oracle(tech, e, r.components(), y_restricted).profit;
            if (!(v > prev)) return false;
            prev = v;
        }
    }
    return true;
}

}  // namespace prodenv
