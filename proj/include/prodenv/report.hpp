#pragma once

#include "prodenv/json_io.hpp"
#include "prodenv/profit_id.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace prodenv {

/// One optimizer coordinate of the three kinked technologies at p = (0.12, 1).
struct GoldenRow {
    std::string name;
    double value = 0.0;        ///< from profit_oracle
    double closed_form = 0.0;
    double lo = 0.0, hi = 0.0; ///< published open bracket
    bool in_bracket = false;
    bool matches = false;      ///< |value - closed_form| <= 1e-8
};

std::vector<GoldenRow> golden_numbers();
/// l1 < l3 < l2 and y1 < y3 < y2 on rows ordered l1, y1, l2, y2, l3, y3.
bool golden_orderings_hold(const std::vector<GoldenRow>& rows);

std::string render_golden_table(const std::vector<GoldenRow>& rows);
/// Cells by row, types by column; cells below a type's identification floor
/// read "unidentified (low type)".
std::string render_profit_table(const ProfitTable& table);
std::string render_bounds(const io::json& body);
std::string render_duality(const io::json& body);
std::string render_fit(const io::json& body);

/// Renders every artifact present in dir plus the golden table. Schema
/// mismatches throw ConfigError.
std::string render_directory(const std::filesystem::path& dir);
/// Renders one artifact document, dispatching on its format.
std::string render_document(const io::json& doc);

}  // namespace prodenv
