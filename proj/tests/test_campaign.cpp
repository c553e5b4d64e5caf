#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "mrfault/campaign.hpp"
#include "mrfault/error.hpp"

using namespace mrfault;
using namespace mrfault::campaign;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"(
seed = 3
trials = 5
subsample = 20

[dataset]
images = "fixtures/mnist/t10k-images-idx3-ubyte.gz"
labels = "fixtures/mnist/t10k-labels-idx1-ubyte.gz"

[[variants]]
name = "original"
archive = "fixtures/models/original.slwa"
)";

CampaignConfig minimal(const std::string& extra = "") {
    return parse_config(std::string(kMinimal) + extra, source_path(""));
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / "mrfault_test_campaign" / name;
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CampaignReport synthetic(const std::string& variant, const std::vector<double>& medians) {
    CampaignReport r;
    r.scenarios = {{faults::AttackKind::actuation, faults::Scope::conv, 0.01},
                   {faults::AttackKind::hotspot, faults::Scope::fc, 0.05}};
    r.baselines.push_back({variant, 0.98, 0.98, std::nullopt, 10, 10});
    for (std::size_t s = 0; s < r.scenarios.size(); ++s) {
        TrialRow row;
        row.variant = variant;
        row.scenario = r.scenarios[s];
        row.accuracy = medians[s];
        r.rows.push_back(row);
    }
    r.stats = compute_stats(r);
    return r;
}

}  // namespace

TEST_CASE("config defaults and scenario matrix") {
    const auto cfg = minimal();
    CHECK(cfg.trials == 5);
    CHECK(cfg.seed == 3);
    CHECK(cfg.num_classes == 10);
    CHECK(cfg.variants.size() == 1);
    CHECK(cfg.variants[0].archive.is_absolute());
    CHECK(fs::exists(cfg.images));
    const auto sc = cfg.scenarios();
    CHECK(sc.size() == 18);
    CHECK(sc.front().key() == "actuation_conv_0.01");
    CHECK(sc.back().key() == "hotspot_both_0.1");
    CHECK_NOTHROW(cfg.validate(true));
    const auto spec = cfg.attack_spec(sc.back());
    CHECK(spec.kind == faults::AttackKind::hotspot);
    CHECK(spec.heater_power_mw == 20.0);
    CHECK(spec.heater_group == 4);
    CHECK(spec.seed == 3);
}

TEST_CASE("shipped config loads and validates") {
    const auto cfg = load_config(source_path("configs/mnist.toml"));
    CHECK_NOTHROW(cfg.validate(true));
    CHECK(cfg.scenarios().size() == 18);
    CHECK(cfg.trials == 10);
    CHECK(cfg.subsample == 1000);
    CHECK(cfg.accelerator.fc.bank_width == 150);
}

TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse_config("seed = ", "."), ConfigError);
    CHECK_THROWS_AS(minimal("colour = 1\n"), ConfigError);
    CHECK_THROWS_AS(minimal("[hotspot]\nwatts = 3\n"), ConfigError);
    CHECK_THROWS_AS(minimal("[scenarios]\nkinds = [\"laser\"]\n"), ConfigError);
    CHECK_THROWS_AS(minimal("[scenarios]\nscopes = [\"all\"]\n"), ConfigError);
    CHECK_THROWS_AS(minimal("[accelerator.conv]\nunits = -1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("trials = 2\n", "."), ConfigError);

    auto cfg = minimal("[scenarios]\nfractions = [0.0]\n");
    CHECK_THROWS_AS(cfg.validate(false), ConfigError);
    cfg = minimal("[scenarios]\nfractions = [0.05, 0.05]\n");
    CHECK_THROWS_AS(cfg.validate(false), ConfigError);
    cfg = minimal("[scenarios]\nfractions = [1.5]\n");
    CHECK_THROWS_AS(cfg.validate(false), ConfigError);
    cfg = minimal();
    cfg.variants.push_back(cfg.variants[0]);
    CHECK_THROWS_AS(cfg.validate(false), ConfigError);
    cfg = minimal();
    cfg.variants[0].archive = "/nonexistent.slwa";
    CHECK_NOTHROW(cfg.validate(false));
    CHECK_THROWS_AS(cfg.validate(true), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.toml"), ConfigError);
}

TEST_CASE("config hash tracks result-relevant settings only") {
    auto a = minimal();
    auto b = minimal();
    b.output_dir = "elsewhere";
    b.workers = 7;
    CHECK(a.hash() == b.hash());
    b.seed = 4;
    CHECK(a.hash() != b.hash());
    b = minimal();
    b.accelerator.thermal.sigma_um = 41.0;
    CHECK(a.hash() != b.hash());
    b = minimal();
    b.heater_group = 0;
    CHECK(a.hash() != b.hash());
}

TEST_CASE("type-7 quantiles") {
    // R: quantile(c(1, 2, 3, 4), type = 7) -> 1, 1.75, 2.5, 3.25, 4
    const auto f = five_number({4.0, 1.0, 3.0, 2.0});
    CHECK(f.min == 1.0);
    CHECK(f.q1 == doctest::Approx(1.75));
    CHECK(f.median == doctest::Approx(2.5));
    CHECK(f.q3 == doctest::Approx(3.25));
    CHECK(f.max == 4.0);
    const auto g = five_number({7.0});
    CHECK(g.q1 == 7.0);
    CHECK(g.q3 == 7.0);
    // R: quantile(c(10, 20, 30, 40, 50, 60, 70, 80, 90, 100), 0.25) -> 32.5
    CHECK(quantile_type7({10, 20, 30, 40, 50, 60, 70, 80, 90, 100}, 0.25) == doctest::Approx(32.5));
    CHECK_THROWS_AS(five_number({}), ContractError);
}

TEST_CASE("recovery") {
    SUBCASE("worked example") {
        // Baseline 98%, original median 91%, robust median 96%: 7 - 2 = 5 points.
        const auto o = synthetic("orig", {0.91, 0.5});
        const auto r = synthetic("rob", {0.96, 0.5});
        const auto rows = recovery_metrics(o, r);
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].drop_original == doctest::Approx(7.0));
        CHECK(rows[0].drop_robust == doctest::Approx(2.0));
        CHECK(rows[0].recovery == doctest::Approx(5.0));
        CHECK(rows[1].recovery == doctest::Approx(0.0));
        CHECK(recovery_csv(rows).rfind("kind,scope,fraction,baseline,", 0) == 0);
    }
    SUBCASE("identical reports recover nothing") {
        const auto o = synthetic("orig", {0.9, 0.4});
        for (const auto& row : recovery_metrics(o, o)) CHECK(row.recovery == 0.0);
    }
    SUBCASE("mismatched matrices") {
        const auto o = synthetic("orig", {0.9, 0.4});
        auto r = synthetic("rob", {0.9, 0.4});
        r.scenarios.pop_back();
        CHECK_THROWS_AS(recovery_metrics(o, r), ContractError);
        CHECK_THROWS_AS(recovery_metrics(o, o, "missing"), ContractError);
    }
}

TEST_CASE("CSV of an empty report is the header") {
    CampaignReport r;
    CHECK(csv_text(r) == std::string(kCsvHeader) + "\n");
    CHECK(kCsvHeader == "variant,kind,scope,fraction,trial,seed,accuracy,corrupted_slots");
}

TEST_CASE("hash helpers") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(hex64(0xabcULL) == "0000000000000abc");
}

// Runs once; doctest re-enters the test case for every subcase.
const std::pair<CampaignConfig, CampaignReport>& small_campaign() {
    static const auto result = [] {
        auto cfg = minimal();
        cfg.output_dir = scratch("small");
        cfg.workers = 2;
        auto report = run_campaign(cfg);
        return std::pair{cfg, report};
    }();
    return result;
}

TEST_CASE("small campaign") {
    const auto& [cfg, report] = small_campaign();

    CHECK(report.rows.size() == 90);
    CHECK(report.evaluated_images == 20);
    CHECK(report.config_hash == cfg.hash());
    CHECK(report.prng == "std::mt19937_64");
    REQUIRE(report.baselines.size() == 1);
    CHECK(report.baselines[0].mapped_slots == 44'190);
    CHECK(report.stats.size() == 18);

    std::set<std::tuple<std::string, int>> seen;
    for (const auto& r : report.rows) {
        CHECK(seen.insert({r.scenario.key(), r.trial}).second);
        CHECK(r.accuracy >= 0.0);
        CHECK(r.accuracy <= 1.0);
        CHECK(r.seed == faults::trial_seed(3, static_cast<std::uint32_t>(r.trial)));
        CHECK(r.accuracy == doctest::Approx(static_cast<double>(r.correct) / 20.0));
    }
    // Stats agree with a recomputation from the rows.
    for (const auto& s : report.stats) {
        std::vector<double> acc;
        for (const auto& r : report.rows) {
            if (r.scenario == s.scenario) acc.push_back(r.accuracy);
        }
        const auto f = five_number(acc);
        CHECK(s.accuracy.median == f.median);
        CHECK(s.accuracy.min == f.min);
        CHECK(s.trials == 5);
    }

    SUBCASE("report JSON round trip") {
        const auto back = report_from_json(report_to_json(report));
        CHECK(report_to_json(back) == report_to_json(report));
        CHECK(csv_text(back) == csv_text(report));
        CHECK(back.rows.size() == 90);
        CHECK_THROWS_AS(report_from_json("{\"rows\": 3}"), FormatError);
    }
    SUBCASE("CSV has one line per trial") {
        const auto csv = csv_text(report);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 91);
    }
    SUBCASE("resume reuses partials; a changed config does not") {
        CHECK(fs::exists(cfg.output_dir / "partial"));
        const auto again = run_campaign(cfg);
        CHECK(csv_text(again) == csv_text(report));
        auto changed = cfg;
        changed.seed = 4;
        changed.kinds = {faults::AttackKind::actuation};
        changed.scopes = {faults::Scope::conv};
        changed.fractions = {0.01};
        const auto other = run_campaign(changed);
        CHECK(other.rows.size() == 5);
        CHECK(other.rows[0].seed == faults::trial_seed(4, 0));
    }
    SUBCASE("emitters") {
        emit_all(report, cfg.output_dir);
        CHECK(slurp(cfg.output_dir / "trials.csv") == csv_text(report));
        CHECK(slurp(cfg.output_dir / "summary.txt").find("config hash: " + hex64(cfg.hash())) != std::string::npos);
        CHECK(report_from_json(slurp(cfg.output_dir / "report.json")).rows.size() == 90);
    }
}

TEST_CASE("variant with a mismatched input shape") {
    auto cfg = minimal();
    cfg.output_dir = scratch("mismatch");
    cfg.kinds = {faults::AttackKind::actuation};
    cfg.scopes = {faults::Scope::conv};
    cfg.fractions = {0.01};
    cfg.images = source_path("fixtures/mnist/t10k-labels-idx1-ubyte.gz");
    CHECK_THROWS(run_campaign(cfg));
}
