#include "prodenv/report.hpp"

#include "prodenv/error.hpp"
#include "prodenv/pipeline.hpp"
#include "prodenv/technology.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

namespace prodenv {

using io::json;

namespace {

std::string fmt(double v, int prec = 6) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

std::string fmt_json(const json& j, int prec = 6) { return j.is_null() ? "-" : fmt(io::to_double(j), prec); }

std::string vec_text(const json& j) {
    if (!j.is_array()) return "-";
    std::string s = "(";
    for (std::size_t i = 0; i < j.size(); ++i) s += (i ? ", " : "") + fmt_json(j[i], 4);
    return s + ")";
}

std::string upper_text(const json& r) {
    const double u = io::to_double(r.at("upper"));
    if (std::isinf(u) && u > 0) return "unbounded (certificate: ray " + vec_text(r.at("certificates").at("upper_ray")) + ")";
    return fmt(u);
}

std::string lower_text(const json& r) {
    const double l = io::to_double(r.at("lower"));
    if (std::isinf(l) && l < 0) return "unbounded (certificate: ray " + vec_text(r.at("certificates").at("lower_ray")) + ")";
    return fmt(l);
}

}  // namespace

std::vector<GoldenRow> golden_numbers() {
    const auto tech = TechnologySpec::nonmonotone_triple();
    const Eigen::Vector2d p(0.12, 1.0);
    const auto r1 = profit_oracle(tech, 1, p), r2 = profit_oracle(tech, 2, p), r3 = profit_oracle(tech, 3, p);
    std::vector<GoldenRow> rows = {
        {"l1", -r1.optimizer[1], std::pow(0.048, 5.0 / 3.0), 0.006, 0.007},
        {"y1", r1.optimizer[0], std::pow(0.048, 2.0 / 3.0), 0.1, 0.2},
        {"l2", -r2.optimizer[1], std::pow(0.096, 5.0 / 3.0), 0.02, 0.03},
        {"y2", r2.optimizer[0], 2.0 * std::pow(0.096, 2.0 / 3.0), 0.41, 0.5},
        {"l3", -r3.optimizer[1], std::pow(0.024, 5.0 / 4.0), 0.009, 0.01},
        {"y3", r3.optimizer[0], std::pow(0.024, 1.0 / 4.0), 0.39, 0.40},
    };
    for (auto& r : rows) {
        r.in_bracket = r.lo < r.value && r.value < r.hi;
        r.matches = std::abs(r.value - r.closed_form) <= 1e-8;
    }
    return rows;
}

bool golden_orderings_hold(const std::vector<GoldenRow>& rows) {
    if (rows.size() != 6) return false;
    const double l1 = rows[0].value, y1 = rows[1].value, l2 = rows[2].value, y2 = rows[3].value, l3 = rows[4].value, y3 = rows[5].value;
    return l1 < l3 && l3 < l2 && y1 < y3 && y3 < y2;
}

std::string render_golden_table(const std::vector<GoldenRow>& rows) {
    std::ostringstream os;
    os << "Kinked technologies at p = (0.12, 1)\n";
    os << std::left << std::setw(6) << "qty" << std::setw(14) << "oracle" << std::setw(14) << "closed form" << std::setw(18) << "bracket"
       << "result\n";
    for (const auto& r : rows) {
        os << std::setw(6) << r.name << std::setw(14) << fmt(r.value, 8) << std::setw(14) << fmt(r.closed_form, 8) << std::setw(18)
           << ("(" + fmt(r.lo) + ", " + fmt(r.hi) + ")") << (r.in_bracket && r.matches ? "pass" : "FAIL") << '\n';
    }
    os << "orderings l1 < l3 < l2, y1 < y3 < y2: " << (golden_orderings_hold(rows) ? "pass" : "FAIL") << '\n';
    return os.str();
}

std::string render_profit_table(const ProfitTable& table) {
    std::ostringstream os;
    os << "Identified profits (d_e = " << table.d_e << ", " << table.cells.size() << " cells)\n";
    os << std::left << std::setw(28) << "cell center";
    for (int e = 1; e <= table.d_e; ++e) os << std::setw(26) << ("type " + std::to_string(e));
    os << '\n';
    for (const auto& c : table.cells) {
        std::string center = "(";
        for (Eigen::Index i = 0; i < c.center.size(); ++i) center += (i ? ", " : "") + fmt(c.center[i], 4);
        os << std::setw(28) << center + ")";
        for (int e = 1; e <= table.d_e; ++e) {
            if (const auto* a = c.find(e))
                os << std::setw(26) << fmt(a->value);
            else if (e < c.unidentified_below)
                os << std::setw(26) << "unidentified (low type)";
            else
                os << std::setw(26) << "-";
        }
        os << '\n';
    }
    return os.str();
}

std::string render_bounds(const json& body) {
    std::ostringstream os;
    os << "Counterfactual bounds\n";
    for (const auto& t : body.at("types")) {
        os << "type " << t.at("type").get<int>() << " [" << t.at("question").at("kind").get<std::string>() << "]: " << t.at("status").get<std::string>()
           << '\n';
        for (const auto& r : t.at("results")) {
            os << "  p_c " << vec_text(r.at("p_c"));
            if (!r.at("feasible").get<bool>()) {
                os << "  infeasible\n";
                continue;
            }
            os << "  lower " << lower_text(r) << "  upper " << upper_text(r) << "  verdict " << r.at("verdict").get<std::string>() << '\n';
        }
    }
    return os.str();
}

std::string render_duality(const json& body) {
    std::ostringstream os;
    os << "Duality check (" << (body.at("convex").get<bool>() ? "convex" : "nonconvex") << " estimator, "
       << body.at("pbar").at("rays").size() << " grid rays)\n";
    os << std::left << std::setw(6) << "type" << std::setw(14) << "eta" << std::setw(14) << "d_H" << std::setw(14) << "oracle"
       << std::setw(14) << "bound" << "verdict\n";
    for (const auto& t : body.at("types")) {
        os << std::setw(6) << t.at("type").get<int>();
        if (t.at("report").is_null()) {
            os << "error: " << t.value("error", "") << '\n';
            continue;
        }
        const auto& r = t.at("report");
        os << std::setw(14) << fmt_json(r.at("eta")) << std::setw(14) << fmt_json(r.at("d_h")) << std::setw(14) << fmt_json(r.at("d_h_oracle"))
           << std::setw(14) << fmt_json(r.at("bound")) << (r.at("pass").get<bool>() ? "pass" : "FAIL") << " (" << r.at("note").get<std::string>()
           << ")\n";
    }
    return os.str();
}

std::string render_fit(const json& body) {
    std::ostringstream os;
    os << "Generalized Leontief fit\n";
    for (const auto& t : body.at("types")) {
        os << "type " << t.at("e").get<int>() << ": loss " << fmt_json(t.at("loss")) << ", max residual " << fmt_json(t.at("max_residual"))
           << "\n";
        for (const auto& row : t.at("b")) os << "  " << vec_text(row) << '\n';
    }
    return os.str();
}

std::string render_document(const json& doc) {
    const std::string format = doc.value("format", "");
    if (format == "prodenv/profit_table") return render_profit_table(io::profit_table_from_json(io::body_of(doc, "profit_table")));
    if (format == "prodenv/bounds_report") return render_bounds(io::body_of(doc, "bounds_report"));
    if (format == "prodenv/duality_report") return render_duality(io::body_of(doc, "duality_report"));
    if (format == "prodenv/diewert_fit") return render_fit(io::body_of(doc, "diewert_fit"));
    if (format == "prodenv/proxy_model") {
        const auto m = io::proxy_model_from_json(io::body_of(doc, "proxy_model"));
        std::ostringstream os;
        os << "Recovered proxies\n";
        for (std::size_t j = 0; j < m.goods.size(); ++j) {
            const auto& g = m.goods[j];
            os << "good " << j + 1 << (g.observed ? " (observed)" : "") << ":";
            for (std::size_t i = 0; i < g.grid.size(); ++i) os << ' ' << fmt(g.grid[i], 4) << "->" << fmt(g.g[i], 5);
            os << '\n';
        }
        return os.str();
    }
    throw ConfigError("report: unsupported document format '" + format + "'");
}

std::string render_directory(const std::filesystem::path& dir) {
    std::ostringstream os;
    os << render_golden_table(golden_numbers());
    for (const char* name : {artifact::kProfits, artifact::kProxies, artifact::kBounds, artifact::kFit, artifact::kDuality}) {
        const auto p = dir / name;
        if (!std::filesystem::exists(p)) continue;
        os << '\n' << render_document(io::read_json(p));
    }
    return os.str();
}

}  // namespace prodenv
