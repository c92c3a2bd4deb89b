#pragma once

#include "prodenv/counterfactual.hpp"
#include "prodenv/estimation.hpp"
#include "prodenv/json_io.hpp"
#include "prodenv/market.hpp"
#include "prodenv/profit_id.hpp"
#include "prodenv/proxy_id.hpp"
#include "prodenv/technology.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace prodenv {

/// Stage names in dependency order.
inline const std::vector<std::string> kStageOrder = {"simulate", "identify", "proxies", "bounds", "estimate", "duality"};

struct IdentifySection {
    IdentifyOptions options;
    std::filesystem::path data;  ///< dataset CSV when simulate does not run
};

struct ProxiesSection {
    int type = 0;       ///< 0 picks the highest identified type
    int observed = -1;  ///< index of the good whose proxy is its price; -1 takes the first such good
    Eigen::VectorXd anchor_x, anchor_p;
    std::filesystem::path profits;
};

enum class Question { Profit, Quantity, FixedQuantity };

struct BoundsSection {
    int type = 0;  ///< 0 runs every identified type
    Question question = Question::Profit;
    std::vector<PriceRay> counterfactuals;  ///< Profit and Quantity
    Eigen::VectorXd direction;              ///< Quantity: u
    int coord = 0;                          ///< FixedQuantity
    double ybar = 0.0;
    int grid = 0;                           ///< FixedQuantity sweep size; 0 uses the default ray grid
    int max_rays = 4;                       ///< data rays kept per type, spread by angle; 0 keeps all
    std::vector<int> nonpositive;
    std::filesystem::path profits, proxies;
};

struct EstimateSection {
    DiewertFitOptions options;
    std::filesystem::path profits, proxies;
};

struct DualitySection {
    std::filesystem::path truth, fit;
    std::string pbar = "default";  ///< "arc lo hi n", "octant n" or "default"
    std::optional<bool> convex;    ///< unset: convex iff the fit used sign constraints
    int oracle_samples = 10000;
};

struct PipelineConfig {
    std::vector<std::string> stages;
    std::uint64_t seed = 1;
    std::filesystem::path out_dir = "prodenv_out";
    std::optional<TechnologySpec> technology;
    std::optional<MarketConfig> market;
    IdentifySection identify;
    ProxiesSection proxies;
    BoundsSection bounds;
    EstimateSection estimate;
    DualitySection duality;
    std::uint64_t config_hash = 0;
    std::string source_text;  ///< the INI text as read, stored in the manifest

    bool has_stage(const std::string& s) const;
    /// Stage names, order and inputs. Throws ConfigError before any work is done.
    void validate() const;
};

/// FNV-1a, 64 bit.
std::uint64_t fnv1a(const std::string& bytes);

/// INI text with sections [run], [technology], [market], [identify],
/// [proxies], [bounds], [estimate], [duality]. Relative paths resolve
/// against base_dir. Throws ConfigError on unknown keys or bad values.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
PipelineConfig load_config(const std::filesystem::path& path);

/// Per-type (price, value) pairs from the identified cells; proxied goods are
/// mapped to prices through the model.
std::vector<std::vector<PriceObservation>> type_observations(const ProfitTable& table, const ProxyModel* model);

ProxyModel run_proxies(const ProfitTable& table, const ProxiesSection& s);
io::json run_bounds(const ProfitTable& table, const ProxyModel* model, const BoundsSection& s);
DiewertFit run_estimate(const ProfitTable& table, const ProxyModel* model, const EstimateSection& s);
RestrictedPriceSet parse_price_grid(const std::string& spec, int dim);
io::json run_duality(const TechnologySpec& truth, const DiewertFit& fit, const RestrictedPriceSet& pbar, bool convex,
                     int oracle_samples);

/// Runs the configured stages, writing artifacts and manifest.json into
/// out_dir. On a stage failure the manifest is left as manifest.json.partial
/// and the error is rethrown with the stage name prefixed.
io::json run_pipeline(const PipelineConfig& cfg, std::ostream& log);

/// Artifact file names inside the output directory.
namespace artifact {
inline constexpr const char* kTechnology = "technology.json";
inline constexpr const char* kDataset = "dataset.csv";
inline constexpr const char* kProfits = "profits.json";
inline constexpr const char* kProxies = "proxies.json";
inline constexpr const char* kBounds = "bounds.json";
inline constexpr const char* kFit = "fit.json";
inline constexpr const char* kDuality = "duality.json";
inline constexpr const char* kManifest = "manifest.json";
}  // namespace artifact

/// Writes to path + ".partial" and renames on success.
void write_artifact(const std::filesystem::path& path, const std::string& contents);

}  // namespace prodenv
