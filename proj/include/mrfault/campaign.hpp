#pragma once

// Attack campaigns: every model variant is evaluated under every scenario
// (attack kind x scope x fraction) for a fixed number of seeded trials.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mrfault/accelerator.hpp"
#include "mrfault/faults.hpp"

namespace mrfault::campaign {

struct VariantSpec {
    std::string name;
    std::filesystem::path archive;
};

struct Scenario {
    faults::AttackKind kind = faults::AttackKind::actuation;
    faults::Scope scope = faults::Scope::both;
    double fraction = 0.01;

    /// e.g. "hotspot_both_0.05"; used for partial-result file names.
    std::string key() const;
    bool operator==(const Scenario&) const = default;
};

std::string format_fraction(double fraction);

/// Config file schema (TOML). Relative paths resolve against the file's
/// directory. Unknown keys are rejected.
///
///   seed = 1                  # master seed
///   trials = 10
///   subsample = 1000          # first N test images; 0 = all
///   output = "out"
///   workers = 0               # 0 = hardware concurrency
///
///   [dataset]   images = "...", labels = "...", classes = 10
///   [[variants]] name = "original", archive = "....slwa"
///   [scenarios] kinds = ["actuation", "hotspot"], scopes = ["conv", "fc", "both"],
///               fractions = [0.01, 0.05, 0.10]
///   [hotspot]   heater_power_mw = 20.0, heater_group = 4
///   [accelerator] base_wavelength_nm, channel_spacing_nm, off_resonance_value
///   [accelerator.conv] / [accelerator.fc]  units, banks_per_unit, bank_width, units_per_row
///   [accelerator.floorplan]  mr_pitch_um, bank_pitch_um, array_gap_um, unit_gap_um, block_gap_um
///   [accelerator.thermo]     gamma_si, dn_dT, n_g
///   [accelerator.thermal]    kappa_k_per_mw, sigma_um
struct CampaignConfig {
    accel::AcceleratorConfig accelerator;
    std::vector<VariantSpec> variants;
    std::filesystem::path images;
    std::filesystem::path labels;
    std::size_t num_classes = 10;
    std::vector<faults::AttackKind> kinds{faults::AttackKind::actuation, faults::AttackKind::hotspot};
    std::vector<faults::Scope> scopes{faults::Scope::conv, faults::Scope::fc, faults::Scope::both};
    std::vector<double> fractions{0.01, 0.05, 0.10};
    int trials = 10;
    std::uint64_t seed = 1;
    std::size_t subsample = 0;
    double heater_power_mw = 20.0;
    int heater_group = 4;
    std::filesystem::path output_dir = "out";
    unsigned workers = 0;

    std::vector<Scenario> scenarios() const;
    faults::AttackSpec attack_spec(const Scenario& s) const;

    /// Throws ConfigError. With `check_files`, archives and dataset files
    /// must exist.
    void validate(bool check_files = true) const;

    /// Canonical JSON of every setting that affects results (not the output
    /// directory or worker count).
    std::string canonical_json() const;
    std::uint64_t hash() const;
};

CampaignConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir = ".");
CampaignConfig load_config(const std::filesystem::path& path);

struct TrialRow {
    std::string variant;
    Scenario scenario;
    int trial = 0;
    std::uint64_t seed = 0;  // per-trial generator seed
    double accuracy = 0.0;
    std::size_t correct = 0;
    std::size_t corrupted_slots = 0;
    std::size_t targeted_mrs = 0;
    std::uint64_t digest = 0;
};

/// min / quartiles / max; quartiles by linear interpolation between order
/// statistics (Hyndman-Fan type 7).
struct FiveNumber {
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

FiveNumber five_number(std::vector<double> values);
double quantile_type7(const std::vector<double>& sorted, double p);

struct ScenarioStats {
    std::string variant;
    Scenario scenario;
    std::size_t trials = 0;
    FiveNumber accuracy;
    double mean_accuracy = 0.0;
    double mean_corrupted_slots = 0.0;
};

struct VariantBaseline {
    std::string name;
    double fault_free_accuracy = 0.0;  // through the accelerator with no faults
    double reference_accuracy = 0.0;   // plain forward pass
    std::optional<double> recorded_accuracy;
    std::size_t parameters = 0;
    std::size_t mapped_slots = 0;
};

struct CampaignReport {
    std::string prng;
    std::string seed_derivation;
    std::uint64_t config_hash = 0;
    std::uint64_t master_seed = 0;
    int trials = 0;
    std::size_t evaluated_images = 0;
    std::vector<Scenario> scenarios;
    std::vector<VariantBaseline> baselines;
    std::vector<TrialRow> rows;
    std::vector<ScenarioStats> stats;

    const VariantBaseline* baseline(const std::string& variant) const;
    const ScenarioStats* find(const std::string& variant, const Scenario& s) const;
};

/// Recomputes `stats` from `rows`, ordered by variant then scenario order.
std::vector<ScenarioStats> compute_stats(const CampaignReport& report);

struct RunOptions {
    bool resume = true;
    // Called once per completed (variant, scenario) with (done, total).
    std::function<void(std::size_t, std::size_t)> progress;
};

/// Evaluates every variant x scenario x trial. Completed (variant, scenario)
/// groups are stored under <output>/partial and reused when resuming with an
/// identical config hash. Throws ConfigError for an invalid config.
CampaignReport run_campaign(const CampaignConfig& cfg, const RunOptions& opts = {});

std::string report_to_json(const CampaignReport& report);
CampaignReport report_from_json(std::string_view text);

inline constexpr std::string_view kCsvHeader = "variant,kind,scope,fraction,trial,seed,accuracy,corrupted_slots";

std::string csv_text(const CampaignReport& report);
std::string summary_text(const CampaignReport& report);

/// Writes trials.csv, summary.txt and report.json into `dir`, creating it
/// when needed. Throws std::runtime_error when the directory is unwritable.
void emit_csv(const CampaignReport& report, const std::filesystem::path& file);
void emit_summary(const CampaignReport& report, const std::filesystem::path& file);
void emit_all(const CampaignReport& report, const std::filesystem::path& dir);

/// Accuracy values in percentage points.
struct RecoveryRow {
    Scenario scenario;
    double baseline = 0.0;         // original variant, fault free
    double median_original = 0.0;  // original variant under attack
    double median_robust = 0.0;
    double drop_original = 0.0;
    double drop_robust = 0.0;
    double recovery = 0.0;  // drop_original - drop_robust
};

/// Both drops are measured against the original model's fault-free
/// accuracy, so a robust model beating that baseline has a negative drop.
/// Variant names default to the first variant of each report. Throws
/// ContractError when the scenario matrices differ.
std::vector<RecoveryRow> recovery_metrics(const CampaignReport& original, const CampaignReport& robust,
                                          const std::string& original_variant = "",
                                          const std::string& robust_variant = "");

std::string recovery_text(const std::vector<RecoveryRow>& rows);
std::string recovery_csv(const std::vector<RecoveryRow>& rows);

std::string hex64(std::uint64_t v);
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace mrfault::campaign
