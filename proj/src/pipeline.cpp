#include "prodenv/pipeline.hpp"

#include "prodenv/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#ifndef PRODENV_VERSION
#define PRODENV_VERSION "unknown"
#endif

namespace prodenv {

namespace fs = std::filesystem;
using io::json;

namespace {

using Section = boost::property_tree::ptree;

const std::map<std::string, std::set<std::string>> kKeys = {
    {"run", {"stages", "seed", "out_dir"}},
    {"technology", {"kind", "types", "scale", "exponent", "knot_input", "knot_output", "restricted_elasticity", "b1", "b2", "b3",
                    "b4", "b5", "b6", "b7", "b8"}},
    {"market", {"markets", "firms_per_type", "firms_per_market", "type_weights", "price_law", "rays", "cycle", "scales", "lo", "hi",
                "grid_points", "normalize", "proxies", "entry", "thresholds", "noise", "noise_shape", "restricted_lo",
                "restricted_hi"}},
    {"identify", {"data", "noise_width", "buckets", "min_anchor_count", "min_cell_count", "max_types", "penalty",
                  "fit_threshold", "mgf_tolerance", "d_e"}},
    {"proxies", {"profits", "type", "observed", "anchor_x", "anchor_p"}},
    {"bounds", {"profits", "proxies", "type", "question", "counterfactual", "direction", "coord", "ybar", "grid", "max_rays",
                "nonpositive"}},
    {"estimate", {"profits", "proxies", "quantile", "sign_constraints", "monotone", "min_increment"}},
    {"duality", {"truth", "fit", "pbar", "convex", "oracle_samples"}},
};

std::string where(const std::string& sec, const std::string& key) { return "config [" + sec + "] " + key; }

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
    std::string s = text;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream in(s);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError(what + ": '" + tok + "' is not a number");
        }
    }
    return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(text);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    return out;
}

std::vector<std::string> words(const std::string& text) {
    std::string s = text;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

/// "a b | c d" -> rows.
std::vector<std::vector<double>> parse_rows(const std::string& text, const std::string& what) {
    std::vector<std::vector<double>> rows;
    for (const auto& r : split(text, '|')) {
        auto v = parse_numbers(r, what);
        if (!v.empty()) rows.push_back(std::move(v));
    }
    return rows;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

class Reader {
public:
    Reader(const Section& root, std::string name, fs::path base) : name_(std::move(name)), base_(std::move(base)) {
        if (const auto child = root.get_child_optional(name_)) sec_ = &*child;
    }
    bool present() const { return sec_ != nullptr; }
    bool has(const std::string& key) const { return sec_ && sec_->get_optional<std::string>(key).has_value(); }
    std::string text(const std::string& key, const std::string& fallback = "") const {
        if (!has(key)) return fallback;
        return sec_->get<std::string>(key);
    }
    double real(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        const auto v = parse_numbers(text(key), where(name_, key));
        if (v.size() != 1) throw ConfigError(where(name_, key) + ": expected one number");
        return v.front();
    }
    int integer(const std::string& key, int fallback) const {
        const double v = real(key, fallback);
        if (v != std::floor(v) || std::abs(v) > 1e9) throw ConfigError(where(name_, key) + ": expected an integer");
        return static_cast<int>(v);
    }
    bool flag(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto t = text(key);
        if (t == "true" || t == "yes" || t == "1" || t == "on") return true;
        if (t == "false" || t == "no" || t == "0" || t == "off") return false;
        throw ConfigError(where(name_, key) + ": expected true or false");
    }
    std::vector<double> numbers(const std::string& key) const { return has(key) ? parse_numbers(text(key), where(name_, key)) : std::vector<double>{}; }
    fs::path path(const std::string& key) const {
        if (!has(key)) return {};
        fs::path p = text(key);
        return p.is_absolute() ? p : base_ / p;
    }
    const std::string& name() const { return name_; }

private:
    const Section* sec_ = nullptr;
    std::string name_;
    fs::path base_;
};

TechnologySpec parse_technology(const Reader& r) {
    const std::string kind = r.text("kind", "diewert");
    TechnologySpec t;
    if (kind == "triple") {
        t = TechnologySpec::nonmonotone_triple();
    } else if (kind == "diewert") {
        const int n = r.integer("types", 1);
        if (n < 1 || n > 8) throw ConfigError(where("technology", "types") + ": between 1 and 8 Diewert types");
        std::vector<Eigen::MatrixXd> bs;
        for (int e = 1; e <= n; ++e) {
            const std::string key = "b" + std::to_string(e);
            if (!r.has(key)) throw ConfigError(where("technology", key) + ": missing coefficient matrix");
            const auto rows = parse_rows(r.text(key), where("technology", key));
            const auto d = static_cast<Eigen::Index>(rows.size());
            Eigen::MatrixXd b(d, d);
            for (Eigen::Index i = 0; i < d; ++i) {
                if (static_cast<Eigen::Index>(rows[i].size()) != d) throw ConfigError(where("technology", key) + ": matrix must be square");
                for (Eigen::Index j = 0; j < d; ++j) b(i, j) = rows[i][j];
            }
            bs.push_back(b);
        }
        t = TechnologySpec::diewert(std::move(bs));
    } else if (kind == "power" || kind == "hicks") {
        t.kind = kind == "power" ? TechnologyKind::PowerScaled : TechnologyKind::HicksNeutral;
        t.scale = r.numbers("scale");
        t.num_types = static_cast<int>(t.scale.size());
        t.exponent = r.real("exponent", t.exponent);
        t.knot_input = r.numbers("knot_input");
        t.knot_output = r.numbers("knot_output");
    } else {
        throw ConfigError(where("technology", "kind") + ": unknown kind '" + kind + "' (diewert, power, hicks, triple)");
    }
    t.restricted_elasticity = r.numbers("restricted_elasticity");
    t.validate();
    return t;
}

MarketConfig parse_market(const Reader& r, std::uint64_t seed) {
    MarketConfig m;
    m.seed = seed;
    m.num_markets = r.integer("markets", 0);
    m.firms_per_type = r.integer("firms_per_type", 1);
    m.firms_per_market = r.integer("firms_per_market", 0);
    m.type_weights = r.numbers("type_weights");
    const std::string law = r.text("price_law", "rays");
    auto& pl = m.price_law;
    if (law == "rays") pl.kind = PriceLawKind::DiscreteRays;
    else if (law == "box") pl.kind = PriceLawKind::UniformBox;
    else if (law == "proxy_grid") pl.kind = PriceLawKind::ProxyGrid;
    else if (law == "endowment") pl.kind = PriceLawKind::Endowment;
    else throw ConfigError(where("market", "price_law") + ": unknown law '" + law + "'");
    for (const auto& row : parse_rows(r.text("rays"), where("market", "rays"))) pl.rays.push_back(to_vector(row));
    pl.cycle = r.flag("cycle", true);
    pl.scales = r.numbers("scales");
    pl.lo = to_vector(r.numbers("lo"));
    pl.hi = to_vector(r.numbers("hi"));
    pl.grid_points = r.integer("grid_points", 0);
    pl.normalize = r.flag("normalize", true);
    for (const auto& w : words(r.text("proxies"))) {
        const auto colon = w.find(':');
        ProxyFunction f;
        f.family = proxy_family_from_string(w.substr(0, colon));
        if (colon != std::string::npos) f.param = parse_numbers(w.substr(colon + 1), where("market", "proxies")).at(0);
        m.proxies.push_back(f);
    }
    const std::string entry = r.text("entry", "all");
    if (entry == "all") m.entry.kind = EntryKind::AllEnter;
    else if (entry == "nonnegative") m.entry.kind = EntryKind::NonnegativeProfit;
    else if (entry == "threshold") m.entry.kind = EntryKind::ThresholdByType;
    else throw ConfigError(where("market", "entry") + ": unknown rule '" + entry + "'");
    m.entry.thresholds = r.numbers("thresholds");
    m.noise.width = r.real("noise", 0.0);
    const std::string shape = r.text("noise_shape", "uniform");
    if (shape == "uniform") m.noise.shape = NoiseShape::Uniform;
    else if (shape == "normal") m.noise.shape = NoiseShape::TruncatedNormal;
    else throw ConfigError(where("market", "noise_shape") + ": unknown shape '" + shape + "'");
    m.restricted_lo = to_vector(r.numbers("restricted_lo"));
    m.restricted_hi = to_vector(r.numbers("restricted_hi"));
    return m;
}

std::string hex(std::uint64_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

int stage_index(const std::string& s) {
    const auto it = std::find(kStageOrder.begin(), kStageOrder.end(), s);
    return it == kStageOrder.end() ? -1 : static_cast<int>(it - kStageOrder.begin());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Greedy max-min angular spread, starting from the ray farthest from the mean direction.
std::vector<std::size_t> spread_rays(const std::vector<PriceRay>& rays, std::size_t keep) {
    std::vector<std::size_t> chosen;
    if (rays.empty()) return chosen;
    if (keep == 0 || keep >= rays.size()) {
        for (std::size_t i = 0; i < rays.size(); ++i) chosen.push_back(i);
        return chosen;
    }
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(rays.front().dim());
    for (const auto& r : rays) mean += r.components();
    auto angle = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return std::acos(std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0));
    };
    std::size_t first = 0;
    for (std::size_t i = 1; i < rays.size(); ++i)
        if (angle(rays[i].components(), mean) > angle(rays[first].components(), mean)) first = i;
    chosen.push_back(first);
    while (chosen.size() < keep) {
        std::size_t best = 0;
        double best_gap = -1.0;
        for (std::size_t i = 0; i < rays.size(); ++i) {
            double gap = std::numeric_limits<double>::infinity();
            for (std::size_t c : chosen) gap = std::min(gap, angle(rays[i].components(), rays[c].components()));
            if (gap > best_gap) {
                best_gap = gap;
                best = i;
            }
        }
        chosen.push_back(best);
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

const char* question_name(Question q) {
    switch (q) {
        case Question::Profit: return "profit";
        case Question::Quantity: return "quantity";
        case Question::FixedQuantity: return "fixed_quantity";
    }
    return "?";
}

}  // namespace

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

bool PipelineConfig::has_stage(const std::string& s) const { return std::find(stages.begin(), stages.end(), s) != stages.end(); }

void PipelineConfig::validate() const {
    if (stages.empty()) throw ConfigError("config [run] stages: no stages listed");
    int prev = -1;
    for (const auto& s : stages) {
        const int i = stage_index(s);
        if (i < 0) throw ConfigError("config [run] stages: unknown stage '" + s + "'");
        if (i <= prev) throw ConfigError("config [run] stages: '" + s + "' is out of order or repeated (order: simulate identify proxies bounds estimate duality)");
        prev = i;
    }
    auto need_file = [](const fs::path& p, const std::string& what) {
        if (!fs::exists(p)) throw ConfigError(what + ": file not found: " + p.string());
    };
    if (has_stage("simulate")) {
        if (!technology) throw ConfigError("stage simulate: missing [technology] section");
        if (!market) throw ConfigError("stage simulate: missing [market] section");
        market->validate(*technology);
    }
    if (has_stage("identify")) {
        if (!has_stage("simulate")) {
            if (identify.data.empty()) throw ConfigError("stage identify: needs a dataset (run simulate first or set [identify] data)");
            need_file(identify.data, "stage identify");
        }
        const double width = identify.options.noise_width > 0.0 ? identify.options.noise_width : (market ? market->noise.width : 0.0);
        if (!(width > 0.0)) throw ConfigError("stage identify: noise width unknown (set [identify] noise_width)");
    }
    auto need_profits = [&](const std::string& stage, const fs::path& p) {
        if (has_stage("identify")) return;
        if (p.empty()) throw ConfigError("stage " + stage + ": needs a profit table (run identify first or set [" + stage + "] profits)");
        need_file(p, "stage " + stage);
    };
    if (has_stage("proxies")) {
        need_profits("proxies", proxies.profits);
        if (proxies.anchor_x.size() == 0 || proxies.anchor_x.size() != proxies.anchor_p.size())
            throw ConfigError("stage proxies: anchor_x and anchor_p are required and must have equal length");
    }
    if (has_stage("bounds")) {
        need_profits("bounds", bounds.profits);
        if (!bounds.proxies.empty()) need_file(bounds.proxies, "stage bounds");
        if (bounds.question != Question::FixedQuantity && bounds.counterfactuals.empty())
            throw ConfigError("stage bounds: no counterfactual prices");
        if (bounds.question == Question::Quantity && bounds.direction.size() == 0)
            throw ConfigError("stage bounds: quantity question needs a direction");
    }
    if (has_stage("estimate")) {
        need_profits("estimate", estimate.profits);
        if (!estimate.proxies.empty()) need_file(estimate.proxies, "stage estimate");
    }
    if (has_stage("duality")) {
        if (!has_stage("estimate")) {
            if (duality.fit.empty()) throw ConfigError("stage duality: needs a fit (run estimate first or set [duality] fit)");
            need_file(duality.fit, "stage duality");
        }
        if (duality.truth.empty() && !technology) throw ConfigError("stage duality: needs the true technology ([technology] or [duality] truth)");
        if (!duality.truth.empty()) need_file(duality.truth, "stage duality");
    }
}

PipelineConfig parse_config(const std::string& text, const fs::path& base_dir) {
    Section root;
    try {
        std::istringstream in(text);
        boost::property_tree::ini_parser::read_ini(in, root);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    for (const auto& [name, sec] : root) {
        const auto it = kKeys.find(name);
        if (it == kKeys.end()) throw ConfigError("config: unknown section [" + name + "]");
        for (const auto& [key, val] : sec)
            if (!it->second.count(key)) throw ConfigError("config [" + name + "]: unknown key '" + key + "'");
    }

    PipelineConfig cfg;
    cfg.source_text = text;
    cfg.config_hash = fnv1a(text);
    const Reader run(root, "run", base_dir);
    cfg.stages = words(run.text("stages"));
    const double seed = run.real("seed", 1.0);
    if (!(seed >= 0.0) || seed != std::floor(seed) || seed > 9.007199254740992e15) throw ConfigError("config [run] seed: expected a nonnegative integer");
    cfg.seed = static_cast<std::uint64_t>(seed);
    if (run.has("out_dir")) cfg.out_dir = run.path("out_dir");

    const Reader tech(root, "technology", base_dir);
    if (tech.present()) cfg.technology = parse_technology(tech);
    const Reader market(root, "market", base_dir);
    if (market.present()) cfg.market = parse_market(market, cfg.seed);

    const Reader id(root, "identify", base_dir);
    auto& idopt = cfg.identify.options;
    cfg.identify.data = id.path("data");
    idopt.noise_width = id.real("noise_width", cfg.market ? cfg.market->noise.width : 0.0);
    idopt.buckets_per_dim = id.integer("buckets", idopt.buckets_per_dim);
    idopt.min_anchor_count = id.integer("min_anchor_count", idopt.min_anchor_count);
    idopt.min_cell_count = id.integer("min_cell_count", idopt.min_cell_count);
    idopt.max_types = id.integer("max_types", idopt.max_types);
    idopt.penalty = id.real("penalty", idopt.penalty);
    idopt.fit_threshold = id.real("fit_threshold", idopt.fit_threshold);
    idopt.mgf_tolerance = id.real("mgf_tolerance", idopt.mgf_tolerance);
    idopt.d_e_override = id.integer("d_e", 0);

    const Reader px(root, "proxies", base_dir);
    cfg.proxies.profits = px.path("profits");
    cfg.proxies.type = px.integer("type", 0);
    cfg.proxies.observed = px.integer("observed", -1);
    cfg.proxies.anchor_x = to_vector(px.numbers("anchor_x"));
    cfg.proxies.anchor_p = to_vector(px.numbers("anchor_p"));

    const Reader bd(root, "bounds", base_dir);
    auto& b = cfg.bounds;
    b.profits = bd.path("profits");
    b.proxies = bd.path("proxies");
    b.type = bd.integer("type", 0);
    const std::string q = bd.text("question", "profit");
    if (q == "profit") b.question = Question::Profit;
    else if (q == "quantity") b.question = Question::Quantity;
    else if (q == "fixed_quantity") b.question = Question::FixedQuantity;
    else throw ConfigError(where("bounds", "question") + ": unknown question '" + q + "'");
    try {
        for (const auto& row : parse_rows(bd.text("counterfactual"), where("bounds", "counterfactual")))
            b.counterfactuals.push_back(PriceRay::normalized(to_vector(row)));
    } catch (const ArgumentError& e) {
        throw ConfigError(where("bounds", "counterfactual") + ": " + e.what());
    }
    b.direction = to_vector(bd.numbers("direction"));
    b.coord = bd.integer("coord", 0);
    b.ybar = bd.real("ybar", 0.0);
    b.grid = bd.integer("grid", 0);
    b.max_rays = bd.integer("max_rays", b.max_rays);
    for (double v : bd.numbers("nonpositive")) b.nonpositive.push_back(static_cast<int>(v));

    const Reader es(root, "estimate", base_dir);
    cfg.estimate.profits = es.path("profits");
    cfg.estimate.proxies = es.path("proxies");
    auto& eo = cfg.estimate.options;
    eo.quantile = es.real("quantile", eo.quantile);
    eo.sign_constraints = es.flag("sign_constraints", eo.sign_constraints);
    eo.monotone = es.flag("monotone", eo.monotone);
    eo.min_increment = es.real("min_increment", eo.min_increment);

    const Reader du(root, "duality", base_dir);
    cfg.duality.truth = du.path("truth");
    cfg.duality.fit = du.path("fit");
    cfg.duality.pbar = du.text("pbar", cfg.duality.pbar);
    if (du.has("convex")) cfg.duality.convex = du.flag("convex", true);
    cfg.duality.oracle_samples = du.integer("oracle_samples", cfg.duality.oracle_samples);
    return cfg;
}

PipelineConfig load_config(const fs::path& path) {
    return parse_config(slurp(path), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

std::vector<std::vector<PriceObservation>> type_observations(const ProfitTable& table, const ProxyModel* model) {
    const int r = table.num_restricted, d = table.price_dim;
    const bool all_prices = std::all_of(table.is_price.begin(), table.is_price.end(), [](bool b) { return b; });
    if (!all_prices && !model) throw ArgumentError("profit table has proxied goods; a proxy model is required to recover prices");
    std::optional<std::vector<int>> stratum;
    std::vector<std::vector<PriceObservation>> out(std::max(table.d_e, 0));
    for (const auto& cell : table.cells) {
        const std::vector<int> ids(cell.key.ids.begin(), cell.key.ids.begin() + r);
        if (stratum && *stratum != ids) throw ArgumentError("profit table spans several restricted strata; split it first");
        stratum = ids;
        const Eigen::VectorXd x = cell.center.tail(d);
        const Eigen::VectorXd p = model ? model->price(x) : x;
        if (!p.allFinite() || p.minCoeff() <= 0.0) continue;  // outside the recovered proxy range
        for (const auto& a : cell.assignments)
            if (a.e >= 1 && a.e <= table.d_e && std::isfinite(a.value)) out[a.e - 1].push_back({p, a.value});
    }
    return out;
}

ProxyModel run_proxies(const ProfitTable& table, const ProxiesSection& s) {
    const int e = s.type > 0 ? s.type : table.d_e;
    if (e < 1 || e > table.d_e) throw ArgumentError("proxies: type " + std::to_string(e) + " is not in the profit table");
    int observed = s.observed;
    if (observed < 0) {
        const auto it = std::find(table.is_price.begin(), table.is_price.end(), true);
        if (it == table.is_price.end()) throw ArgumentError("proxies: no good has an observed price; set [proxies] observed");
        observed = static_cast<int>(it - table.is_price.begin());
    }
    if (s.anchor_x.size() != table.price_dim || s.anchor_p.size() != table.price_dim)
        throw ArgumentError("proxies: anchor_x and anchor_p need one entry per good");
    const Surface pi = Surface::from_profit_table(table, e);
    return recover_proxy_model(pi, s.anchor_x, s.anchor_p, observed);
}

json run_bounds(const ProfitTable& table, const ProxyModel* model, const BoundsSection& s) {
    const auto obs = type_observations(table, model);
    std::vector<int> types;
    if (s.type > 0) {
        if (s.type > table.d_e) throw ArgumentError("bounds: type " + std::to_string(s.type) + " is not in the profit table");
        types.push_back(s.type);
    } else {
        for (int e = 1; e <= table.d_e; ++e) types.push_back(e);
    }
    json question = {{"kind", question_name(s.question)}};
    if (s.question == Question::Quantity) question["direction"] = io::to_json(s.direction);
    if (s.question == Question::FixedQuantity) {
        question["coord"] = s.coord;
        question["ybar"] = s.ybar;
    }

    json out = json::array();
    for (int e : types) {
        json entry = {{"type", e}, {"question", question}};
        // Merge cells that share a ray.
        ProfitData data;
        data.e = e;
        data.nonpositive = s.nonpositive;
        std::vector<int> counts;
        for (const auto& o : obs[e - 1]) {
            const double scale = o.price.norm();
            const PriceRay ray = PriceRay::normalized(o.price);
            const double v = o.value / scale;
            std::size_t i = 0;
            while (i < data.rays.size() && (data.rays[i].components() - ray.components()).norm() > 1e-9) ++i;
            if (i == data.rays.size()) {
                data.rays.push_back(ray);
                data.values.push_back(v);
                counts.push_back(1);
            } else {
                data.values[i] = (data.values[i] * counts[i] + v) / (counts[i] + 1);
                ++counts[i];
            }
        }
        if (data.rays.empty()) {
            entry["status"] = "unidentified";
            entry["results"] = json::array();
            out.push_back(entry);
            continue;
        }
        const auto keep = spread_rays(data.rays, static_cast<std::size_t>(std::max(0, s.max_rays)));
        ProfitData used;
        used.e = e;
        used.nonpositive = s.nonpositive;
        for (std::size_t i : keep) {
            used.rays.push_back(data.rays[i]);
            used.values.push_back(data.values[i]);
        }
        json rays = json::array();
        for (const auto& r : used.rays) rays.push_back(io::to_json(r.components()));
        entry["data"] = {{"rays", rays}, {"values", io::to_json(to_vector(used.values))}, {"available_rays", data.rays.size()}};
        const auto w = wapm_feasible(used);
        entry["wapm_feasible"] = w.feasible;
        json results = json::array();
        if (!w.feasible) {
            entry["status"] = "data not rationalizable by a convex technology";
        } else {
            entry["status"] = "ok";
            if (s.question == Question::FixedQuantity) {
                const auto grid = s.grid > 0 ? (used.dim() == 2 ? quadrant_grid(s.grid) : octant_grid(s.grid)) : default_ray_grid(used.dim());
                const auto b = profit_bounds_fixed_quantity(used, s.coord, s.ybar, grid);
                results.push_back(io::to_json(b, b.upper_at.value_or(grid.front())));
            } else {
                for (const auto& pc : s.counterfactuals) {
                    if (pc.dim() != used.dim()) throw ArgumentError("bounds: counterfactual price has the wrong dimension");
                    const auto b = s.question == Question::Profit ? profit_bounds(used, pc) : quantity_bounds(used, pc, s.direction);
                    results.push_back(io::to_json(b, pc));
                }
            }
        }
        entry["results"] = results;
        out.push_back(entry);
    }
    return {{"types", out}};
}

DiewertFit run_estimate(const ProfitTable& table, const ProxyModel* model, const EstimateSection& s) {
    const auto obs = type_observations(table, model);
    if (obs.empty()) throw IdentificationError("estimate: profit table has no types");
    for (std::size_t e = 0; e < obs.size(); ++e)
        if (obs[e].empty()) throw IdentificationError("estimate: type " + std::to_string(e + 1) + " is unidentified in every cell");
    return fit_diewert(obs, table.price_dim, s.options);
}

RestrictedPriceSet parse_price_grid(const std::string& spec, int dim) {
    const auto w = words(spec);
    if (w.empty() || w.front() == "default") {
        if (dim == 2) return RestrictedPriceSet::arc(0.15, std::numbers::pi / 2 - 0.15, 50);
        return RestrictedPriceSet{octant_grid(200)};
    }
    if (w.front() == "arc" && w.size() == 4) {
        if (dim != 2) throw ConfigError("pbar: arc grids are two-dimensional");
        const auto v = parse_numbers(w[1] + " " + w[2] + " " + w[3], "pbar");
        return RestrictedPriceSet::arc(v[0], v[1], static_cast<int>(v[2]));
    }
    if (w.front() == "octant" && w.size() == 2) {
        if (dim != 3) throw ConfigError("pbar: octant grids are three-dimensional");
        return RestrictedPriceSet{octant_grid(static_cast<int>(parse_numbers(w[1], "pbar").at(0)))};
    }
    if (w.size() == 1 && fs::exists(w.front())) return io::price_set_from_json(io::body_of(io::read_json(w.front()), "price_set"));
    throw ConfigError("pbar: expected 'arc lo hi n', 'octant n', 'default' or a price_set JSON file, got '" + spec + "'");
}

json run_duality(const TechnologySpec& truth, const DiewertFit& fit, const RestrictedPriceSet& pbar, bool convex, int oracle_samples) {
    const int types = std::min<int>(truth.num_types, static_cast<int>(fit.coefficients.size()));
    if (types < 1) throw ArgumentError("duality: no common types between truth and fit");
    if (truth.price_dim() != pbar.dimension()) throw ArgumentError("duality: price grid dimension does not match the technology");
    TypedPriceFunction pi_true = [&](const Eigen::VectorXd& p, int e) { return profit_oracle(truth, e, p).profit; };
    TypedPriceFunction pi_hat = [&](const Eigen::VectorXd& p, int e) { return fit.profit(p, e); };
    DualityOptions opt;
    opt.oracle_samples = oracle_samples;
    json reports = json::array();
    for (int e = 1; e <= types; ++e) {
        json entry = {{"type", e}};
        try {
            entry["report"] = io::to_json(duality_check(pi_true, pi_hat, pbar, e, convex, opt));
        } catch (const ArgumentError& err) {
            entry["report"] = nullptr;
            entry["error"] = err.what();
        }
        reports.push_back(entry);
    }
    return {{"pbar", io::to_json(pbar)}, {"convex", convex}, {"types", reports}};
}

void write_artifact(const fs::path& path, const std::string& contents) {
    fs::path partial = path;
    partial += ".partial";
    {
        std::ofstream out(partial, std::ios::binary);
        if (!out) throw ConfigError("cannot write " + partial.string());
        out << contents;
        if (!out) throw ConfigError("write failed: " + partial.string());
    }
    fs::rename(partial, path);
}

json run_pipeline(const PipelineConfig& cfg, std::ostream& log) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    const fs::path dir = cfg.out_dir;

    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    json manifest = {{"config_hash", hex(cfg.config_hash)},
                     {"seed", cfg.seed},
                     {"versions", {{"prodenv", PRODENV_VERSION}, {"schema", std::to_string(io::kSchemaMajor) + "." + std::to_string(io::kSchemaMinor)}}},
                     {"grid_specs",
                      {{"buckets_per_dim", cfg.identify.options.buckets_per_dim},
                       {"bounds_grid", cfg.bounds.grid},
                       {"bounds_max_rays", cfg.bounds.max_rays},
                       {"pbar", cfg.duality.pbar}}},
                     {"config", cfg.source_text},
                     {"started_at", stamp},
                     {"stages", json::array()}};

    std::optional<Dataset> data;
    std::optional<ProfitTable> table;
    std::optional<ProxyModel> model;
    std::optional<DiewertFit> fit;
    std::optional<TechnologySpec> truth = cfg.technology;

    auto save = [&](const char* name, const std::string& text, json& artifacts) {
        write_artifact(dir / name, text);
        artifacts.push_back(name);
    };
    auto save_doc = [&](const char* name, const std::string& kind, json body, json& artifacts) {
        save(name, io::document(kind, std::move(body)).dump(2) + "\n", artifacts);
    };
    auto load_table = [&](const fs::path& p) {
        if (!table) table = io::profit_table_from_json(io::body_of(io::read_json(p), "profit_table"));
    };
    auto load_model = [&](const fs::path& p) {
        if (!model && !p.empty()) model = io::proxy_model_from_json(io::body_of(io::read_json(p), "proxy_model"));
    };

    for (const auto& stage : cfg.stages) {
        log << "[" << stage << "] running\n";
        const auto t0 = std::chrono::steady_clock::now();
        json artifacts = json::array();
        try {
            if (stage == "simulate") {
                data = generate_dataset(*cfg.technology, *cfg.market);
                std::ostringstream csv;
                write_csv(csv, *data, false);
                save(artifact::kDataset, csv.str(), artifacts);
                save_doc(artifact::kTechnology, "technology", io::to_json(*cfg.technology), artifacts);
                log << "[simulate] " << data->records.size() << " records\n";
            } else if (stage == "identify") {
                if (!data) {
                    std::ifstream in(cfg.identify.data);
                    if (!in) throw ConfigError("cannot open " + cfg.identify.data.string());
                    data = read_csv(in);
                }
                table = identify_profits(*data, cfg.identify.options);
                save_doc(artifact::kProfits, "profit_table", io::to_json(*table), artifacts);
                log << "[identify] d_e = " << table->d_e << ", " << table->cells.size() << " cells\n";
            } else if (stage == "proxies") {
                load_table(cfg.proxies.profits);
                model = run_proxies(*table, cfg.proxies);
                save_doc(artifact::kProxies, "proxy_model", io::to_json(*model), artifacts);
            } else if (stage == "bounds") {
                load_table(cfg.bounds.profits);
                load_model(cfg.bounds.proxies);
                save_doc(artifact::kBounds, "bounds_report", run_bounds(*table, model ? &*model : nullptr, cfg.bounds), artifacts);
            } else if (stage == "estimate") {
                load_table(cfg.estimate.profits);
                load_model(cfg.estimate.proxies);
                fit = run_estimate(*table, model ? &*model : nullptr, cfg.estimate);
                save_doc(artifact::kFit, "diewert_fit", io::to_json(*fit), artifacts);
            } else if (stage == "duality") {
                if (!fit) fit = io::diewert_fit_from_json(io::body_of(io::read_json(cfg.duality.fit), "diewert_fit"));
                if (!cfg.duality.truth.empty()) truth = io::technology_from_json(io::body_of(io::read_json(cfg.duality.truth), "technology"));
                const auto pbar = parse_price_grid(cfg.duality.pbar, truth->price_dim());
                const bool convex = cfg.duality.convex.value_or(cfg.estimate.options.sign_constraints);
                save_doc(artifact::kDuality, "duality_report", run_duality(*truth, *fit, pbar, convex, cfg.duality.oracle_samples), artifacts);
            }
        } catch (const std::exception& err) {
            const Error* typed = dynamic_cast<const Error*>(&err);
            const ErrorKind kind = typed ? typed->kind() : ErrorKind::Numeric;
            manifest["stages"].push_back({{"name", stage}, {"status", "failed"}, {"error", err.what()}, {"artifacts", artifacts}});
            manifest["failed_stage"] = stage;
            try {
                io::write_json(dir / (std::string(artifact::kManifest) + ".partial"), io::document("manifest", manifest));
            } catch (const std::exception&) {
                // keep the original failure
            }
            throw Error(kind, "stage " + stage + ": " + err.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        manifest["stages"].push_back({{"name", stage}, {"status", "ok"}, {"wall_seconds", secs}, {"artifacts", artifacts}});
        log << "[" << stage << "] done in " << std::fixed << std::setprecision(2) << secs << " s\n";
        log.unsetf(std::ios::floatfield);
    }
    json doc = io::document("manifest", manifest);
    write_artifact(dir / artifact::kManifest, doc.dump(2) + "\n");
    return doc;
}

}  // namespace prodenv
