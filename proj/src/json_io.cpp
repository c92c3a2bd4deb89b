#include "prodenv/json_io.hpp"

#include "prodenv/error.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace prodenv::io {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const json& field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError(std::string("json: missing field '") + key + "'");
    return j.at(key);
}

template <class T>
T get(const json& j, const char* key) {
    try {
        return field(j, key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("json: bad field '") + key + "': " + e.what());
    }
}

std::vector<double> doubles(const json& j) {
    if (!j.is_array()) throw ConfigError("json: expected an array of numbers");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& v : j) out.push_back(to_double(v));
    return out;
}

json doubles_json(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(number(x));
    return a;
}

json optional_vector(const std::optional<Eigen::VectorXd>& v) { return v ? to_json(*v) : json(nullptr); }

json key_json(const CellKey& k) { return k.ids; }
CellKey key_from(const json& j) { return CellKey{j.get<std::vector<int>>()}; }

json diagnostic_json(const RankDiagnostic& d) {
    return {{"x_minus", to_json(d.x_minus)},
            {"anchors", doubles_json(d.anchors)},
            {"matrix", to_json(d.matrix)},
            {"condition", number(d.condition)},
            {"nonsingular", d.nonsingular}};
}

}  // namespace

json document(const std::string& kind, json body) {
    return {{"format", "prodenv/" + kind},
            {"version", std::to_string(kSchemaMajor) + "." + std::to_string(kSchemaMinor)},
            {"data", std::move(body)}};
}

const json& body_of(const json& doc, const std::string& kind) {
    const std::string want = "prodenv/" + kind;
    const auto format = get<std::string>(doc, "format");
    if (format != want) throw ConfigError("schema: expected " + want + ", found " + format);
    const auto version = get<std::string>(doc, "version");
    int major = -1;
    try {
        major = std::stoi(version.substr(0, version.find('.')));
    } catch (const std::exception&) {
        throw ConfigError("schema: unreadable version '" + version + "'");
    }
    if (major != kSchemaMajor)
        throw ConfigError("schema: unsupported major version " + std::to_string(major) + " for " + want + " (reader supports " +
                          std::to_string(kSchemaMajor) + ")");
    return field(doc, "data");
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("json: " + path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw ConfigError("write failed: " + path.string());
}

json number(double v) {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double to_double(const json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return kInf;
        if (s == "-inf") return -kInf;
    }
    throw ConfigError("json: expected a number, found " + j.dump());
}

json to_json(const Eigen::VectorXd& v) { return doubles_json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vector_from_json(const json& j) {
    const auto v = doubles(j);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Eigen::VectorXd(m.row(i).transpose())));
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    if (!j.is_array()) throw ConfigError("json: expected a list of matrix rows");
    if (j.empty()) return {};
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j.front().size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto row = vector_from_json(j[i]);
        if (row.size() != m.cols()) throw ConfigError("json: ragged matrix");
        m.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return m;
}

json to_json(const HalfspaceEnvelope& env) {
    json cons = json::array();
    for (const auto& h : env.constraints()) cons.push_back({{"ray", to_json(h.ray.components())}, {"value", number(h.value)}});
    return {{"dimension", env.dimension()}, {"constraints", cons}};
}

HalfspaceEnvelope envelope_from_json(const json& j) {
    const int d = get<int>(j, "dimension");
    std::vector<Halfspace> cons;
    for (const auto& c : field(j, "constraints")) cons.push_back({PriceRay::normalized(vector_from_json(field(c, "ray"))), to_double(field(c, "value"))});
    return HalfspaceEnvelope(d, std::move(cons));
}

json to_json(const RestrictedPriceSet& pbar) {
    json rays = json::array();
    for (const auto& r : pbar.rays) rays.push_back(to_json(r.components()));
    return {{"rays", rays}, {"convex", pbar.convex_flag}};
}

RestrictedPriceSet price_set_from_json(const json& j) {
    RestrictedPriceSet p;
    for (const auto& r : field(j, "rays")) p.rays.push_back(PriceRay::normalized(vector_from_json(r)));
    if (j.contains("convex")) p.convex_flag = j.at("convex").get<bool>();
    p.validate();
    return p;
}

json to_json(const TechnologySpec& tech) {
    json pieces = json::array();
    for (const auto& list : tech.pieces) {
        json l = json::array();
        for (const auto& pc : list)
            l.push_back({{"lo", number(pc.lo)}, {"hi", number(pc.hi)}, {"coef", pc.coef}, {"expo", pc.expo}, {"offset", pc.offset}});
        pieces.push_back(l);
    }
    json coefs = json::array();
    for (const auto& b : tech.coefficients) coefs.push_back(to_json(b));
    return {{"kind", to_string(tech.kind)},
            {"num_types", tech.num_types},
            {"scale", doubles_json(tech.scale)},
            {"exponent", tech.exponent},
            {"pieces", pieces},
            {"coefficients", coefs},
            {"knot_input", doubles_json(tech.knot_input)},
            {"knot_output", doubles_json(tech.knot_output)},
            {"restricted_elasticity", doubles_json(tech.restricted_elasticity)}};
}

TechnologySpec technology_from_json(const json& j) {
    TechnologySpec t;
    t.kind = technology_kind_from_string(get<std::string>(j, "kind"));
    t.num_types = get<int>(j, "num_types");
    if (j.contains("scale")) t.scale = doubles(j.at("scale"));
    if (j.contains("exponent")) t.exponent = to_double(j.at("exponent"));
    if (j.contains("pieces"))
        for (const auto& l : j.at("pieces")) {
            std::vector<PowerPiece> list;
            for (const auto& pc : l)
                list.push_back({to_double(field(pc, "lo")), to_double(field(pc, "hi")), to_double(field(pc, "coef")),
                                to_double(field(pc, "expo")), to_double(field(pc, "offset"))});
            t.pieces.push_back(std::move(list));
        }
    if (j.contains("coefficients"))
        for (const auto& b : j.at("coefficients")) t.coefficients.push_back(matrix_from_json(b));
    if (j.contains("knot_input")) t.knot_input = doubles(j.at("knot_input"));
    if (j.contains("knot_output")) t.knot_output = doubles(j.at("knot_output"));
    if (j.contains("restricted_elasticity")) t.restricted_elasticity = doubles(j.at("restricted_elasticity"));
    t.validate();
    return t;
}

json to_json(const ProfitTable& table) {
    json cells = json::array();
    for (const auto& c : table.cells) {
        json assignments = json::array();
        for (const auto& a : c.assignments)
            assignments.push_back({{"e", a.e}, {"value", number(a.value)}, {"stderr_proxy", number(a.stderr_proxy)}, {"weight", number(a.weight)}});
        cells.push_back({{"key", key_json(c.key)},
                         {"center", to_json(c.center)},
                         {"diameter", to_json(c.diameter)},
                         {"n", c.n},
                         {"fitted", c.fitted},
                         {"atoms",
                          {{"atoms", doubles_json(c.atoms.atoms)},
                           {"weights", doubles_json(c.atoms.weights)},
                           {"fit_error", number(c.atoms.fit_error)},
                           {"mgf_deviation", number(c.atoms.mgf_deviation)},
                           {"mgf_ok", c.atoms.mgf_ok}}},
                         {"assignments", assignments},
                         {"unidentified_below", c.unidentified_below}});
    }
    json edges = json::array();
    for (const auto& e : table.bucketing.edges()) edges.push_back(doubles_json(e));
    const auto& a = table.anchor;
    return {{"d_e", table.d_e},
            {"num_restricted", table.num_restricted},
            {"price_dim", table.price_dim},
            {"is_price", table.is_price},
            {"anchor",
             {{"key", key_json(a.key)},
              {"a", number(a.a)},
              {"b", number(a.b)},
              {"rank_from_top", a.rank_from_top},
              {"e_star", a.e_star},
              {"profit", number(a.profit)},
              {"count", a.count},
              {"isolation_gap", number(a.isolation_gap)}}},
            {"noise_cdf", {{"quantiles", doubles_json(table.noise.quantiles())}}},
            {"bucketing", {{"edges", edges}}},
            {"cells", cells}};
}

ProfitTable profit_table_from_json(const json& j) {
    ProfitTable t;
    t.d_e = get<int>(j, "d_e");
    t.num_restricted = get<int>(j, "num_restricted");
    t.price_dim = get<int>(j, "price_dim");
    t.is_price = get<std::vector<bool>>(j, "is_price");
    const auto& a = field(j, "anchor");
    t.anchor.key = key_from(field(a, "key"));
    t.anchor.a = to_double(field(a, "a"));
    t.anchor.b = to_double(field(a, "b"));
    t.anchor.rank_from_top = get<int>(a, "rank_from_top");
    t.anchor.e_star = get<int>(a, "e_star");
    t.anchor.profit = to_double(field(a, "profit"));
    t.anchor.count = get<int>(a, "count");
    t.anchor.isolation_gap = to_double(field(a, "isolation_gap"));
    const auto q = doubles(field(field(j, "noise_cdf"), "quantiles"));
    if (!q.empty()) t.noise = NoiseCdf::from_quantiles(q);
    std::vector<std::vector<double>> edges;
    for (const auto& e : field(field(j, "bucketing"), "edges")) edges.push_back(doubles(e));
    t.bucketing = Bucketing::from_edges(std::move(edges));
    for (const auto& c : field(j, "cells")) {
        ProfitCell cell;
        cell.key = key_from(field(c, "key"));
        cell.center = vector_from_json(field(c, "center"));
        cell.diameter = vector_from_json(field(c, "diameter"));
        cell.n = get<int>(c, "n");
        cell.fitted = get<bool>(c, "fitted");
        const auto& at = field(c, "atoms");
        cell.atoms.atoms = doubles(field(at, "atoms"));
        cell.atoms.weights = doubles(field(at, "weights"));
        cell.atoms.fit_error = to_double(field(at, "fit_error"));
        cell.atoms.mgf_deviation = to_double(field(at, "mgf_deviation"));
        cell.atoms.mgf_ok = get<bool>(at, "mgf_ok");
        for (const auto& s : field(c, "assignments"))
            cell.assignments.push_back({get<int>(s, "e"), to_double(field(s, "value")), to_double(field(s, "stderr_proxy")),
                                        to_double(field(s, "weight"))});
        cell.unidentified_below = get<int>(c, "unidentified_below");
        if (cell.center.size() != t.num_restricted + t.price_dim) throw ConfigError("profit table: cell center has the wrong dimension");
        t.cells.push_back(std::move(cell));
    }
    return t;
}

json to_json(const ProxyModel& model) {
    json goods = json::array();
    for (const auto& g : model.goods)
        goods.push_back({{"grid", doubles_json(g.grid)}, {"g_values", doubles_json(g.g)}, {"observed_flag", g.observed}, {"gaps", doubles_json(g.gaps)}});
    json diags = json::array();
    for (const auto& d : model.diagnostics) diags.push_back(diagnostic_json(d));
    return {{"goods", goods}, {"anchor", {{"x", to_json(model.anchor_x)}, {"p", to_json(model.anchor_p)}}}, {"diagnostics", diags}};
}

ProxyModel proxy_model_from_json(const json& j) {
    ProxyModel m;
    for (const auto& g : field(j, "goods")) {
        ProxyCurve c;
        c.grid = doubles(field(g, "grid"));
        c.g = doubles(field(g, "g_values"));
        c.observed = get<bool>(g, "observed_flag");
        if (g.contains("gaps")) c.gaps = doubles(g.at("gaps"));
        if (c.grid.size() != c.g.size()) throw ConfigError("proxy model: grid and g_values differ in length");
        m.goods.push_back(std::move(c));
    }
    const auto& a = field(j, "anchor");
    m.anchor_x = vector_from_json(field(a, "x"));
    m.anchor_p = vector_from_json(field(a, "p"));
    if (j.contains("diagnostics"))
        for (const auto& d : j.at("diagnostics")) {
            RankDiagnostic r;
            r.x_minus = vector_from_json(field(d, "x_minus"));
            r.anchors = doubles(field(d, "anchors"));
            r.matrix = matrix_from_json(field(d, "matrix"));
            r.condition = to_double(field(d, "condition"));
            r.nonsingular = get<bool>(d, "nonsingular");
            m.diagnostics.push_back(std::move(r));
        }
    return m;
}

json to_json(const DiewertFit& fit) {
    json types = json::array();
    for (std::size_t e = 0; e < fit.coefficients.size(); ++e)
        types.push_back({{"e", static_cast<int>(e) + 1},
                         {"b", to_json(fit.coefficients[e])},
                         {"loss", number(fit.loss.at(e))},
                         {"max_residual", number(fit.max_residual.at(e))}});
    return {{"types", types}, {"slack", {{"min_sign", number(fit.min_sign_slack)}, {"min_monotone", number(fit.min_monotone_slack)}}}};
}

DiewertFit diewert_fit_from_json(const json& j) {
    DiewertFit fit;
    for (const auto& t : field(j, "types")) {
        Eigen::MatrixXd b = matrix_from_json(field(t, "b"));
        if (b.rows() != b.cols() || (b - b.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw ConfigError("diewert fit: coefficients must be symmetric");
        fit.coefficients.push_back(std::move(b));
        fit.loss.push_back(to_double(field(t, "loss")));
        fit.max_residual.push_back(to_double(field(t, "max_residual")));
    }
    if (fit.coefficients.empty()) throw ConfigError("diewert fit: no types");
    const auto& s = field(j, "slack");
    fit.min_sign_slack = to_double(field(s, "min_sign"));
    fit.min_monotone_slack = to_double(field(s, "min_monotone"));
    return fit;
}

json to_json(const BoundResult& b, const PriceRay& p_c) {
    json grid = nullptr;
    if (b.grid_size > 0)
        grid = {{"grid_size", b.grid_size},
                {"grid_feasible", b.grid_feasible},
                {"upper_at", b.upper_at ? to_json(b.upper_at->components()) : json(nullptr)},
                {"lower_at", b.lower_at ? to_json(b.lower_at->components()) : json(nullptr)}};
    return {{"p_c", to_json(p_c.components())},
            {"feasible", b.feasible},
            {"lower", number(b.lower)},
            {"upper", number(b.upper)},
            {"verdict", to_string(profitability_verdict(b))},
            {"certificates",
             {{"upper_point", optional_vector(b.upper_point)},
              {"upper_ray", optional_vector(b.upper_ray)},
              {"lower_point", optional_vector(b.lower_point)},
              {"lower_ray", optional_vector(b.lower_ray)},
              {"lower_argmax", b.lower_argmax}}},
            {"grid_metadata", grid}};
}

json to_json(const DualityReport& rep) {
    return {{"dim", rep.dim},
            {"grid_size", rep.grid_size},
            {"eta", number(rep.eta)},
            {"d_h", number(rep.d_h)},
            {"d_h_oracle", rep.d_h_oracle ? number(*rep.d_h_oracle) : json(nullptr)},
            {"R", number(rep.R)},
            {"r", number(rep.r)},
            {"convex_branch", rep.convex_branch},
            {"applicable", rep.applicable},
            {"bound", rep.bound ? number(*rep.bound) : json(nullptr)},
            {"pass", rep.pass},
            {"note", rep.note}};
}

}  // namespace prodenv::io
