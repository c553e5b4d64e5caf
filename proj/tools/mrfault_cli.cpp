// mrfault: run and post-process microring fault-injection campaigns.
//
// Exit codes: 0 ok, 1 configuration error, 2 runtime error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mrfault/campaign.hpp"
#include "mrfault/error.hpp"

namespace fs = std::filesystem;
using namespace mrfault;

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::optional<std::size_t> subsample;
    std::optional<std::string> out;
    std::optional<unsigned> workers;
};

campaign::CampaignConfig load_with(const std::string& path, const Overrides& o) {
    auto cfg = campaign::load_config(path);
    if (o.seed) cfg.seed = *o.seed;
    if (o.trials) cfg.trials = *o.trials;
    if (o.subsample) cfg.subsample = *o.subsample;
    if (o.out) cfg.output_dir = *o.out;
    if (o.workers) cfg.workers = *o.workers;
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void add_overrides(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--seed", o.seed, "Master seed (overrides the config)");
    cmd->add_option("--trials", o.trials, "Trials per scenario")->check(CLI::PositiveNumber);
    cmd->add_option("--subsample", o.subsample, "Evaluate the first N test images (0 = all)");
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--workers", o.workers, "Worker threads (0 = hardware concurrency)");
}

int cmd_validate(const std::string& config, const Overrides& o) {
    const auto cfg = load_with(config, o);
    cfg.validate(true);
    std::printf("config ok: %zu variant(s), %zu scenario(s), %d trial(s) each, hash %s\n", cfg.variants.size(),
                cfg.scenarios().size(), cfg.trials, campaign::hex64(cfg.hash()).c_str());
    return 0;
}

int cmd_run(const std::string& config, const Overrides& o, bool fresh) {
    const auto cfg = load_with(config, o);
    campaign::RunOptions opts;
    opts.resume = !fresh;
    opts.progress = [](std::size_t done, std::size_t total) {
        std::fprintf(stderr, "\r%zu/%zu scenario groups", done, total);
        if (done == total) std::fputc('\n', stderr);
    };
    const auto report = campaign::run_campaign(cfg, opts);
    campaign::emit_all(report, cfg.output_dir);
    std::fputs(campaign::summary_text(report).c_str(), stdout);
    std::printf("\nwrote %s\n", (cfg.output_dir / "report.json").string().c_str());
    return 0;
}

int cmd_compare(const std::string& original, const std::string& robust, const std::string& ov,
                const std::string& rv, const std::string& out) {
    const auto a = campaign::report_from_json(slurp(original));
    const auto b = robust.empty() ? a : campaign::report_from_json(slurp(robust));
    std::string robust_variant = rv;
    if (robust.empty() && robust_variant.empty()) {
        if (a.baselines.size() < 2) throw ConfigError("a single report needs two variants to compare");
        robust_variant = a.baselines[1].name;
    }
    const auto rows = campaign::recovery_metrics(a, b, ov, robust_variant);
    std::fputs(campaign::recovery_text(rows).c_str(), stdout);
    if (!out.empty()) {
        fs::create_directories(out);
        std::ofstream f(fs::path(out) / "recovery.csv", std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + out + "/recovery.csv");
        f << campaign::recovery_csv(rows);
    }
    return 0;
}

int cmd_emit(const std::string& report_path, const std::string& out) {
    const auto report = campaign::report_from_json(slurp(report_path));
    const fs::path dir = out.empty() ? fs::path(report_path).parent_path() : fs::path(out);
    campaign::emit_csv(report, dir / "trials.csv");
    campaign::emit_summary(report, dir / "summary.txt");
    std::printf("wrote %s and %s\n", (dir / "trials.csv").string().c_str(), (dir / "summary.txt").string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fault-injection campaigns for microring-based photonic CNN accelerators"};
    app.require_subcommand(1);

    Overrides o;
    std::string config;
    bool fresh = false;

    auto* validate = app.add_subcommand("validate", "Check a campaign config and the files it references");
    validate->add_option("--config", config, "Campaign config (TOML)")->required();
    add_overrides(validate, o);

    auto* run = app.add_subcommand("run", "Run a campaign and write report.json, trials.csv, summary.txt");
    run->add_option("--config", config, "Campaign config (TOML)")->required();
    run->add_flag("--fresh", fresh, "Ignore stored partial results");
    add_overrides(run, o);

    std::string original, robust, ov, rv, cmp_out;
    auto* compare = app.add_subcommand("compare", "Recovery of a robust variant relative to the original");
    compare->add_option("--original", original, "report.json holding the original variant")->required();
    compare->add_option("--robust", robust, "report.json holding the robust variant (default: same report)");
    compare->add_option("--original-variant", ov, "Variant name in the original report");
    compare->add_option("--robust-variant", rv, "Variant name in the robust report");
    compare->add_option("--out", cmp_out, "Directory for recovery.csv");

    std::string report_path, emit_out;
    auto* emit = app.add_subcommand("emit", "Regenerate trials.csv and summary.txt from report.json");
    emit->add_option("--report", report_path, "report.json")->required();
    emit->add_option("--out", emit_out, "Output directory (default: next to the report)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*validate) return cmd_validate(config, o);
        if (*run) return cmd_run(config, o, fresh);
        if (*compare) return cmd_compare(original, robust, ov, rv, cmp_out);
        if (*emit) return cmd_emit(report_path, emit_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
