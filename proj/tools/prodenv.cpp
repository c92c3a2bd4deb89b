#include "prodenv/error.hpp"
#include "prodenv/json_io.hpp"
#include "prodenv/pipeline.hpp"
#include "prodenv/report.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace prodenv;

namespace {

template <class T>
T read_doc(const fs::path& p, const std::string& kind, T (*convert)(const io::json&)) {
    return convert(io::body_of(io::read_json(p), kind));
}

void save_doc(const fs::path& p, const std::string& kind, io::json body) {
    write_artifact(p, io::document(kind, std::move(body)).dump(2) + "\n");
}

ProfitTable read_table(const fs::path& p) { return read_doc(p, "profit_table", &io::profit_table_from_json); }

std::optional<ProxyModel> read_model(const std::string& p) {
    if (p.empty()) return std::nullopt;
    return read_doc(fs::path(p), "proxy_model", &io::proxy_model_from_json);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Production-set identification, counterfactual bounds and estimation toolkit"};
    app.require_subcommand(1);

    std::string config, out, data, profits, proxies, question, truth, fit, pbar = "default", dir, out_dir;
    std::vector<std::string> artifacts;
    bool debug = false, nonconvex = false;
    int oracle_samples = 10000;

    auto* sim = app.add_subcommand("simulate", "Simulate a market dataset");
    sim->add_option("--config", config, "INI config with [technology] and [market]")->required()->check(CLI::ExistingFile);
    sim->add_option("--out", out, "Dataset CSV")->required();
    sim->add_flag("--debug", debug, "Include the true type column");

    auto* ident = app.add_subcommand("identify", "Identify per-type profits from a dataset");
    ident->add_option("--data", data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    ident->add_option("--config", config, "INI config with [identify]")->required()->check(CLI::ExistingFile);
    ident->add_option("--out", out, "Profit table JSON")->required();

    auto* prox = app.add_subcommand("proxies", "Recover proxy-to-price maps");
    prox->add_option("--profits", profits, "Profit table JSON")->required()->check(CLI::ExistingFile);
    prox->add_option("--config", config, "INI config with [proxies]")->required()->check(CLI::ExistingFile);
    prox->add_option("--out", out, "Proxy model JSON")->required();

    auto* bnd = app.add_subcommand("bounds", "Counterfactual profit and quantity bounds");
    bnd->add_option("--profits", profits, "Profit table JSON")->required()->check(CLI::ExistingFile);
    bnd->add_option("--question", question, "INI file with a [bounds] section")->required()->check(CLI::ExistingFile);
    bnd->add_option("--proxies", proxies, "Proxy model JSON for proxied goods")->check(CLI::ExistingFile);
    bnd->add_option("--out", out, "Bounds report JSON")->required();

    auto* est = app.add_subcommand("estimate", "Shape-constrained generalized Leontief fit");
    est->add_option("--profits", profits, "Profit table JSON")->required()->check(CLI::ExistingFile);
    est->add_option("--proxies", proxies, "Proxy model JSON for proxied goods")->check(CLI::ExistingFile);
    est->add_option("--config", config, "INI config with [estimate]")->check(CLI::ExistingFile);
    est->add_option("--out", out, "Fit JSON")->required();

    auto* dual = app.add_subcommand("duality", "Compare plug-in and true production sets");
    dual->add_option("--truth", truth, "Technology JSON")->required()->check(CLI::ExistingFile);
    dual->add_option("--fit", fit, "Fit JSON")->required()->check(CLI::ExistingFile);
    dual->add_option("--pbar", pbar, "'arc lo hi n', 'octant n', 'default' or a price_set JSON file");
    dual->add_flag("--nonconvex", nonconvex, "Treat the estimate as nonconvex (bound instead of equality)");
    dual->add_option("--oracle-samples", oracle_samples, "Boundary samples for the planar oracle (0 skips it)");
    dual->add_option("--out", out, "Duality report JSON")->required();

    auto* rep = app.add_subcommand("report", "Render artifacts as text tables");
    rep->add_option("--dir", dir, "Pipeline output directory");
    rep->add_option("artifacts", artifacts, "Individual artifact JSON files");
    rep->add_option("--out", out, "Write the report here instead of stdout");

    auto* run = app.add_subcommand("run", "Run the configured pipeline");
    run->add_option("--config", config, "Pipeline INI config")->required()->check(CLI::ExistingFile);
    run->add_option("--out-dir", out_dir, "Override [run] out_dir");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed()) {
            const auto cfg = load_config(config);
            if (!cfg.technology || !cfg.market) throw ConfigError("simulate: config needs [technology] and [market]");
            cfg.market->validate(*cfg.technology);
            const auto ds = generate_dataset(*cfg.technology, *cfg.market);
            std::ostringstream csv;
            write_csv(csv, ds, debug);
            write_artifact(out, csv.str());
            std::cerr << "wrote " << ds.records.size() << " records to " << out << '\n';
        } else if (ident->parsed()) {
            const auto cfg = load_config(config);
            std::ifstream in(data);
            const auto ds = read_csv(in);
            auto opt = cfg.identify.options;
            if (!(opt.noise_width > 0.0)) throw ConfigError("identify: set [identify] noise_width");
            save_doc(out, "profit_table", io::to_json(identify_profits(ds, opt)));
        } else if (prox->parsed()) {
            const auto cfg = load_config(config);
            save_doc(out, "proxy_model", io::to_json(run_proxies(read_table(profits), cfg.proxies)));
        } else if (bnd->parsed()) {
            const auto cfg = load_config(question);
            if (cfg.bounds.question != Question::FixedQuantity && cfg.bounds.counterfactuals.empty())
                throw ConfigError("bounds: the question file lists no counterfactual prices");
            const auto model = read_model(proxies);
            save_doc(out, "bounds_report", run_bounds(read_table(profits), model ? &*model : nullptr, cfg.bounds));
        } else if (est->parsed()) {
            EstimateSection s;
            if (!config.empty()) s = load_config(config).estimate;
            const auto model = read_model(proxies);
            save_doc(out, "diewert_fit", io::to_json(run_estimate(read_table(profits), model ? &*model : nullptr, s)));
        } else if (dual->parsed()) {
            const auto tech = read_doc(fs::path(truth), "technology", &io::technology_from_json);
            const auto f = read_doc(fs::path(fit), "diewert_fit", &io::diewert_fit_from_json);
            const auto grid = parse_price_grid(pbar, tech.price_dim());
            save_doc(out, "duality_report", run_duality(tech, f, grid, !nonconvex, oracle_samples));
        } else if (rep->parsed()) {
            if (dir.empty() && artifacts.empty()) throw ConfigError("report: give --dir or artifact files");
            std::string text;
            if (!dir.empty()) text = render_directory(dir);
            for (const auto& a : artifacts) text += (text.empty() ? "" : "\n") + render_document(io::read_json(a));
            if (out.empty())
                std::cout << text;
            else
                write_artifact(out, text);
        } else if (run->parsed()) {
            auto cfg = load_config(config);
            if (!out_dir.empty()) cfg.out_dir = out_dir;
            run_pipeline(cfg, std::cerr);
            std::cerr << "artifacts in " << cfg.out_dir.string() << '\n';
        }
    } catch (const Error& e) {
        std::cerr << "prodenv: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "prodenv: " << e.what() << '\n';
        return exit_code_for(ErrorKind::Numeric);
    }
    return 0;
}
