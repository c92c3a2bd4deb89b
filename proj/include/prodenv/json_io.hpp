#pragma once

#include "prodenv/convex_core.hpp"
#include "prodenv/counterfactual.hpp"
#include "prodenv/estimation.hpp"
#include "prodenv/profit_id.hpp"
#include "prodenv/proxy_id.hpp"
#include "prodenv/technology.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace prodenv::io {

using json = nlohmann::json;

/// Major version written into every document; readers reject any other major.
inline constexpr int kSchemaMajor = 1;
inline constexpr int kSchemaMinor = 0;

/// {"format": "prodenv/<kind>", "version": "1.0", "data": body}
json document(const std::string& kind, json body);
/// The body of a document of the given kind. Throws ConfigError on a wrong
/// kind, a missing version or an unsupported major version.
const json& body_of(const json& doc, const std::string& kind);

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& doc);

/// Doubles with infinities spelled "inf" / "-inf"; NaN becomes null.
json number(double v);
double to_double(const json& j);

json to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const json& j);
json to_json(const Eigen::MatrixXd& m);  ///< list of rows
Eigen::MatrixXd matrix_from_json(const json& j);

json to_json(const HalfspaceEnvelope& env);
HalfspaceEnvelope envelope_from_json(const json& j);

json to_json(const RestrictedPriceSet& pbar);
RestrictedPriceSet price_set_from_json(const json& j);

json to_json(const TechnologySpec& tech);
TechnologySpec technology_from_json(const json& j);

json to_json(const ProfitTable& table);
ProfitTable profit_table_from_json(const json& j);

json to_json(const ProxyModel& model);
ProxyModel proxy_model_from_json(const json& j);

json to_json(const DiewertFit& fit);
DiewertFit diewert_fit_from_json(const json& j);

json to_json(const BoundResult& b, const PriceRay& p_c);
json to_json(const DualityReport& rep);

}  // namespace prodenv::io
