#include "prodenv/market.hpp"

#include "prodenv/error.hpp"
#include "prodenv/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

namespace prodenv {

double ProxyFunction::price(double x) const {
    switch (family) {
        case ProxyFamily::Identity: return x;
        case ProxyFamily::Exp: return param * std::exp(x);
        case ProxyFamily::Quadratic: return x * x + param;
        case ProxyFamily::Power: return std::pow(x, param);
    }
    return x;
}

double ProxyFunction::proxy(double p) const {
    switch (family) {
        case ProxyFamily::Identity: return p;
        case ProxyFamily::Exp: return std::log(p / param);
        case ProxyFamily::Quadratic:
            if (p <= param) throw ArgumentError("proxy: price below the quadratic proxy's range");
            return std::sqrt(p - param);
        case ProxyFamily::Power: return std::pow(p, 1.0 / param);
    }
    return p;
}

double ProxyFunction::derivative(double x) const {
    switch (family) {
        case ProxyFamily::Identity: return 1.0;
        case ProxyFamily::Exp: return param * std::exp(x);
        case ProxyFamily::Quadratic: return 2.0 * x;
        case ProxyFamily::Power: return param * std::pow(x, param - 1.0);
    }
    return 1.0;
}

std::string to_string(ProxyFamily f) {
    switch (f) {
        case ProxyFamily::Identity: return "identity";
        case ProxyFamily::Exp: return "exp";
        case ProxyFamily::Quadratic: return "quadratic";
        case ProxyFamily::Power: return "power";
    }
    return "identity";
}

ProxyFamily proxy_family_from_string(const std::string& s) {
    if (s == "identity") return ProxyFamily::Identity;
    if (s == "exp") return ProxyFamily::Exp;
    if (s == "quadratic") return ProxyFamily::Quadratic;
    if (s == "power") return ProxyFamily::Power;
    throw ConfigError("unknown proxy family '" + s + "'");
}

double DemandCurve::quantity(double p) const {
    return shape == Shape::Isoelastic ? level * std::pow(p, -slope) : level - slope * p;
}

double DemandCurve::price(double xbar, double p_lo, double p_hi) const {
    double qlo = quantity(p_lo), qhi = quantity(p_hi);
    if (!(xbar <= qlo && xbar >= qhi)) throw NumericError("demand inversion: quantity outside the bracketed range");
    for (int it = 0; it < 200 && p_hi - p_lo > 1e-15 * p_hi; ++it) {
        const double mid = 0.5 * (p_lo + p_hi);
        if (quantity(mid) > xbar) p_lo = mid;
        else p_hi = mid;
    }
    return 0.5 * (p_lo + p_hi);
}

void DemandSide::validate() const {
    if (!(grid_lo > 0.0 && grid_hi > grid_lo)) throw ConfigError("demand: invalid price range");
    constexpr int n = 400;
    for (const auto& g : goods) {
        if (!g) continue;
        double prev = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= n; ++i) {
            const double p = grid_lo * std::pow(grid_hi / grid_lo, static_cast<double>(i) / n);
            const double q = g->quantity(p);
            if (!std::isfinite(q) || !(q < prev)) throw ConfigError("demand: configured demand is not strictly decreasing");
            prev = q;
        }
    }
}

bool EntryRule::enters(int e, double profit) const {
    switch (kind) {
        case EntryKind::AllEnter: return true;
        case EntryKind::NonnegativeProfit: return profit >= 0.0;
        case EntryKind::ThresholdByType: return profit >= thresholds.at(e - 1);
    }
    return true;
}

void MarketConfig::validate(const TechnologySpec& tech) const {
    tech.validate();
    const int d = tech.price_dim();
    if (num_markets < 1) throw ConfigError("markets: num_markets must be >= 1");
    if (type_weights.empty()) {
        if (firms_per_type < 1) throw ConfigError("markets: firms_per_type must be >= 1");
    } else {
        if (static_cast<int>(type_weights.size()) != tech.num_types) throw ConfigError("markets: need one weight per type");
        if (firms_per_market < 1) throw ConfigError("markets: firms_per_market must be >= 1");
        for (double w : type_weights)
            if (!(w >= 0.0)) throw ConfigError("markets: type weights must be >= 0");
    }
    if (!std::isfinite(noise.width) || noise.width < 0.0) throw ConfigError("markets: noise width must be finite and >= 0");
    if (entry.kind == EntryKind::ThresholdByType) {
        if (static_cast<int>(entry.thresholds.size()) != tech.num_types) throw ConfigError("markets: need one threshold per type");
        for (std::size_t i = 1; i < entry.thresholds.size(); ++i)
            if (entry.thresholds[i] > entry.thresholds[i - 1])
                throw ConfigError("markets: thresholds must be non-increasing in type (monotone presence)");
    }
    if (restricted_lo.size() != tech.num_restricted() || restricted_hi.size() != tech.num_restricted())
        throw ConfigError("markets: restricted quantity bounds must match the technology");
    for (int i = 0; i < restricted_lo.size(); ++i)
        if (!(restricted_lo[i] > 0.0 && restricted_hi[i] >= restricted_lo[i])) throw ConfigError("markets: invalid restricted bounds");
    if (!proxies.empty() && static_cast<int>(proxies.size()) != d) throw ConfigError("markets: need one proxy function per good");
    for (double s : price_law.scales)
        if (!(s > 0.0)) throw ConfigError("markets: price scales must be positive");
    const auto& pl = price_law;
    switch (pl.kind) {
        case PriceLawKind::DiscreteRays:
            if (pl.rays.empty()) throw ConfigError("markets: discrete ray law needs rays");
            for (const auto& r : pl.rays) {
                if (r.size() != d) throw ConfigError("markets: ray dimension mismatch");
                if (!(r.minCoeff() > 0.0)) throw ConfigError("markets: rays must be strictly positive");
            }
            break;
        case PriceLawKind::UniformBox:
        case PriceLawKind::ProxyGrid:
        case PriceLawKind::Endowment:
            if (pl.lo.size() != d || pl.hi.size() != d) throw ConfigError("markets: box bounds must match the price dimension");
            for (int j = 0; j < d; ++j)
                if (!(pl.hi[j] >= pl.lo[j])) throw ConfigError("markets: box upper bound below lower bound");
            if (pl.kind != PriceLawKind::ProxyGrid && !(pl.lo.minCoeff() > 0.0))
                throw ConfigError("markets: box bounds must be positive");
            if (pl.kind == PriceLawKind::ProxyGrid && proxies.empty()) throw ConfigError("markets: proxy grid law needs proxy functions");
            break;
    }
    if (demand) {
        if (static_cast<int>(demand->goods.size()) != d) throw ConfigError("markets: demand side must list every good");
        demand->validate();
    }
}

namespace {

double u01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * u01(rng); }

double std_normal(std::mt19937_64& rng) {
    // Box-Muller, kept local so streams are portable across standard libraries.
    double u1 = u01(rng);
    while (u1 <= 0.0) u1 = u01(rng);
    const double u2 = u01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double draw_noise(std::mt19937_64& rng, const NoiseSpec& n) {
    const double half = 0.5 * n.width;
    if (half == 0.0) return 0.0;
    if (n.shape == NoiseShape::Uniform) return uniform(rng, -half, half);
    for (;;) {
        const double z = 0.5 * half * std_normal(rng);
        if (std::abs(z) <= half) return z;
    }
}

struct MarketDraw {
    Eigen::VectorXd price;
    Eigen::VectorXd x;
    std::vector<bool> is_price;
    Eigen::VectorXd y_restricted;
};

MarketDraw draw_market(const MarketConfig& cfg, int d, int m, std::mt19937_64& rng) {
    const auto& pl = cfg.price_law;
    MarketDraw out;
    Eigen::VectorXd p(d);
    Eigen::VectorXd x;
    switch (pl.kind) {
        case PriceLawKind::DiscreteRays: {
            const std::size_t n = pl.rays.size();
            const std::size_t k = pl.cycle ? static_cast<std::size_t>(m) % n : static_cast<std::size_t>(u01(rng) * n) % n;
            p = pl.rays[k].normalized();
            break;
        }
        case PriceLawKind::UniformBox:
            for (int j = 0; j < d; ++j) p[j] = uniform(rng, pl.lo[j], pl.hi[j]);
            if (pl.normalize) p.normalize();
            break;
        case PriceLawKind::ProxyGrid:
            x.resize(d);
            for (int j = 0; j < d; ++j) {
                if (pl.grid_points > 1) {
                    const int i = static_cast<int>(u01(rng) * pl.grid_points) % pl.grid_points;
                    x[j] = pl.lo[j] + (pl.hi[j] - pl.lo[j]) * i / (pl.grid_points - 1);
                } else {
                    x[j] = uniform(rng, pl.lo[j], pl.hi[j]);
                }
                p[j] = cfg.proxies[j].price(x[j]);
            }
            break;
        case PriceLawKind::Endowment:
            // Scarcer goods (low endowment) command higher relative prices.
            for (int j = 0; j < d; ++j) p[j] = 1.0 / uniform(rng, pl.lo[j], pl.hi[j]);
            p.normalize();
            break;
    }
    if (!pl.scales.empty()) {
        const std::size_t k = static_cast<std::size_t>(u01(rng) * pl.scales.size()) % pl.scales.size();
        p *= pl.scales[k];
        if (pl.kind == PriceLawKind::ProxyGrid)
            for (int j = 0; j < d; ++j) x[j] = cfg.proxies[j].proxy(p[j]);
    }
    out.is_price.assign(d, true);
    if (x.size() == 0) {
        x = p;
        if (!cfg.proxies.empty())
            for (int j = 0; j < d; ++j) x[j] = cfg.proxies[j].proxy(p[j]);
    }
    if (!cfg.proxies.empty())
        for (int j = 0; j < d; ++j) out.is_price[j] = cfg.proxies[j].observed();
    if (cfg.demand) {
        for (int j = 0; j < d; ++j)
            if (cfg.demand->goods[j]) {
                x[j] = cfg.demand->goods[j]->quantity(p[j]);
                out.is_price[j] = false;
            }
    }
    out.price = p;
    out.x = x;
    out.y_restricted.resize(cfg.restricted_lo.size());
    for (int i = 0; i < cfg.restricted_lo.size(); ++i)
        out.y_restricted[i] = uniform(rng, cfg.restricted_lo[i], cfg.restricted_hi[i]);
    return out;
}

std::optional<Eigen::VectorXd> restricted_arg(const Eigen::VectorXd& y) {
    if (y.size() == 0) return std::nullopt;
    return y;
}

std::vector<int> firm_types(const MarketConfig& cfg, int num_types, std::mt19937_64& rng) {
    std::vector<int> types;
    if (cfg.type_weights.empty()) {
        for (int e = 1; e <= num_types; ++e)
            for (int f = 0; f < cfg.firms_per_type; ++f) types.push_back(e);
        return types;
    }
    double total = 0.0;
    for (double w : cfg.type_weights) total += w;
    for (int f = 0; f < cfg.firms_per_market; ++f) {
        double u = u01(rng) * total;
        int e = 1;
        while (e < num_types && u >= cfg.type_weights[e - 1]) {
            u -= cfg.type_weights[e - 1];
            ++e;
        }
        types.push_back(e);
    }
    std::sort(types.begin(), types.end());
    return types;
}

}  // namespace

Eigen::VectorXd gen_demand_proxy(const MarketConfig& cfg, const Eigen::VectorXd& p) {
    if (!cfg.demand) throw ConfigError("demand proxy: no demand side configured");
    if (static_cast<int>(cfg.demand->goods.size()) != p.size()) throw ArgumentError("demand proxy: dimension mismatch");
    cfg.demand->validate();
    Eigen::VectorXd x = p;
    for (int j = 0; j < p.size(); ++j)
        if (cfg.demand->goods[j]) x[j] = cfg.demand->goods[j]->quantity(p[j]);
    return x;
}

Dataset generate_dataset(const TechnologySpec& tech, const MarketConfig& cfg) {
    cfg.validate(tech);
    const int d = tech.price_dim();
    std::vector<std::vector<ObservationRecord>> per_market(cfg.num_markets);
    parallel_for(cfg.num_markets, [&](int m) {
        std::mt19937_64 rng(stream_seed(cfg.seed, static_cast<std::uint64_t>(m)));
        const MarketDraw draw = draw_market(cfg, d, m, rng);
        const auto yr = restricted_arg(draw.y_restricted);
        for (int e : firm_types(cfg, tech.num_types, rng)) {
            const double profit = profit_oracle(tech, e, draw.price, yr).profit;
            if (!cfg.entry.enters(e, profit)) continue;
            ObservationRecord r;
            r.market_id = m;
            r.type_e = e;
            r.y_restricted = draw.y_restricted;
            r.x = draw.x;
            r.is_price = draw.is_price;
            r.price = draw.price;
            r.true_profit = profit;
            r.noisy_profit = profit + draw_noise(rng, cfg.noise);
            per_market[m].push_back(std::move(r));
        }
    });
    Dataset out;
    out.num_restricted = tech.num_restricted();
    out.price_dim = d;
    out.has_types = true;
    for (auto& v : per_market)
        for (auto& r : v) out.records.push_back(std::move(r));
    if (out.records.empty()) throw ConfigError("simulate: entry rule excludes every type in every market (empty dataset)");
    if (!monotone_presence_audit(tech, cfg, out)) throw ConfigError("simulate: generated data violate monotone presence");
    return out;
}

bool monotone_presence_audit(const TechnologySpec& tech, const MarketConfig& cfg, const Dataset& data) {
    int last_market = -1;
    std::vector<bool> enters;
    for (const auto& r : data.records) {
        if (r.market_id != last_market) {
            last_market = r.market_id;
            enters.assign(tech.num_types + 1, false);
            bool seen = false;
            for (int e = 1; e <= tech.num_types; ++e) {
                const double v = profit_oracle(tech, e, r.price, restricted_arg(r.y_restricted)).profit;
                enters[e] = cfg.entry.enters(e, v);
                if (seen && !enters[e]) return false;
                seen = seen || enters[e];
            }
        }
        if (!enters[r.type_e]) return false;
    }
    return true;
}

void write_csv(std::ostream& os, const Dataset& data, bool include_types) {
    const int k = data.num_restricted, d = data.price_dim;
    os << "market_id";
    for (int i = 1; i <= k; ++i) os << ",y_restricted_" << i;
    for (int j = 1; j <= d; ++j) os << ",x_" << j;
    for (int j = 1; j <= d; ++j) os << ",is_price_" << j;
    os << ",noisy_profit";
    if (include_types) os << ",type_e";
    os << '\n';
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    };
    for (const auto& r : data.records) {
        os << r.market_id;
        for (int i = 0; i < k; ++i) os << ',' << num(r.y_restricted[i]);
        for (int j = 0; j < d; ++j) os << ',' << num(r.x[j]);
        for (int j = 0; j < d; ++j) os << ',' << (r.is_price[j] ? 1 : 0);
        os << ',' << num(r.noisy_profit);
        if (include_types) os << ',' << r.type_e;
        os << '\n';
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        if (!cell.empty() && cell.back() == '\r') cell.pop_back();
        out.push_back(cell);
    }
    return out;
}

double parse_double(const std::string& s, std::size_t line) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("dataset line " + std::to_string(line) + ": cannot parse '" + s + "'");
    }
}

}  // namespace

Dataset read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("dataset: empty file");
    const auto header = split_csv_line(line);
    if (header.empty() || header.front() != "market_id") throw ConfigError("dataset: header must start with market_id");
    Dataset data;
    for (const auto& h : header) {
        if (h.rfind("y_restricted_", 0) == 0) ++data.num_restricted;
        else if (h.rfind("x_", 0) == 0) ++data.price_dim;
        else if (h == "type_e") data.has_types = true;
    }
    const std::size_t expected = 1 + data.num_restricted + 2 * data.price_dim + 1 + (data.has_types ? 1 : 0);
    if (header.size() != expected || header[expected - (data.has_types ? 2 : 1)] != "noisy_profit")
        throw ConfigError("dataset: unexpected header layout");
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != expected) throw ConfigError("dataset line " + std::to_string(lineno) + ": wrong column count");
        ObservationRecord r;
        std::size_t c = 0;
        r.market_id = static_cast<int>(parse_double(cells[c++], lineno));
        r.y_restricted.resize(data.num_restricted);
        for (int i = 0; i < data.num_restricted; ++i) r.y_restricted[i] = parse_double(cells[c++], lineno);
        r.x.resize(data.price_dim);
        for (int j = 0; j < data.price_dim; ++j) r.x[j] = parse_double(cells[c++], lineno);
        r.is_price.resize(data.price_dim);
        for (int j = 0; j < data.price_dim; ++j) r.is_price[j] = parse_double(cells[c++], lineno) != 0.0;
        r.noisy_profit = parse_double(cells[c++], lineno);
        if (data.has_types) r.type_e = static_cast<int>(parse_double(cells[c++], lineno));
        data.records.push_back(std::move(r));
    }
    return data;
}

}  // namespace prodenv
