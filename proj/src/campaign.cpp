#include "mrfault/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "mrfault/error.hpp"
#include "mrfault/model_io.hpp"
#include "mrfault/nn.hpp"
#include "toml.hpp"

namespace mrfault::campaign {

using nlohmann::json;
namespace fs = std::filesystem;

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

// Shortest decimal text that reads back to the same double.
std::string shortest(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc{} ? std::string(buf, end) : std::to_string(v);
}

std::string printf_string(const char* fmt, auto... args) {
    const int n = std::snprintf(nullptr, 0, fmt, args...);
    std::string s(static_cast<std::size_t>(n), '\0');
    std::snprintf(s.data(), s.size() + 1, fmt, args...);
    return s;
}

std::uint64_t file_digest(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return 0;
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a64(ss.str());
}

}  // namespace

std::string format_fraction(double fraction) { return shortest(fraction); }

std::string Scenario::key() const {
    return faults::to_string(kind) + "_" + faults::to_string(scope) + "_" + format_fraction(fraction);
}

std::vector<Scenario> CampaignConfig::scenarios() const {
    std::vector<Scenario> out;
    for (auto k : kinds) {
        for (auto s : scopes) {
            for (double f : fractions) out.push_back({k, s, f});
        }
    }
    return out;
}

faults::AttackSpec CampaignConfig::attack_spec(const Scenario& s) const {
    faults::AttackSpec spec;
    spec.kind = s.kind;
    spec.scope = s.scope;
    spec.fraction = s.fraction;
    spec.seed = seed;
    spec.trial_count = trials;
    spec.heater_power_mw = heater_power_mw;
    spec.heater_group = heater_group;
    return spec;
}

void CampaignConfig::validate(bool check_files) const {
    accelerator.validate();
    if (variants.empty()) throw ConfigError("at least one model variant is required");
    std::set<std::string> names;
    for (const auto& v : variants) {
        if (v.name.empty()) throw ConfigError("variant name must not be empty");
        if (v.name.find_first_of("/\\,\"") != std::string::npos) {
            throw ConfigError("variant name '" + v.name + "' contains a reserved character");
        }
        if (!names.insert(v.name).second) throw ConfigError("duplicate variant '" + v.name + "'");
        if (check_files && !fs::is_regular_file(v.archive)) {
            throw ConfigError("archive for variant '" + v.name + "' not found: " + v.archive.string());
        }
    }
    if (images.empty() || labels.empty()) throw ConfigError("dataset images and labels are required");
    if (check_files) {
        if (!fs::is_regular_file(images)) throw ConfigError("dataset images not found: " + images.string());
        if (!fs::is_regular_file(labels)) throw ConfigError("dataset labels not found: " + labels.string());
    }
    if (num_classes < 2) throw ConfigError("dataset needs at least two classes");
    if (kinds.empty() || scopes.empty() || fractions.empty()) {
        throw ConfigError("scenario matrix is empty: kinds, scopes and fractions each need an entry");
    }
    for (double f : fractions) {
        if (!(f > 0.0 && f <= 1.0)) throw ConfigError("attack fraction " + shortest(f) + " outside (0, 1]");
    }
    const auto sc = scenarios();
    for (std::size_t i = 0; i < sc.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (sc[i] == sc[j]) throw ConfigError("duplicate scenario " + sc[i].key());
        }
    }
    if (trials < 1) throw ConfigError("trials must be at least 1");
    if (!(heater_power_mw > 0.0)) throw ConfigError("heater power must be positive");
    if (heater_group < 0) throw ConfigError("heater group must be >= 0");
}

std::string CampaignConfig::canonical_json() const {
    const auto& a = accelerator;
    auto geom = [](const accel::BlockGeometry& g) {
        return json{{"units", g.units},
                    {"banks_per_unit", g.banks_per_unit},
                    {"bank_width", g.bank_width},
                    {"units_per_row", g.units_per_row}};
    };
    json j;
    j["accelerator"] = {
        {"conv", geom(a.conv)},
        {"fc", geom(a.fc)},
        {"base_wavelength_nm", a.base_wavelength_nm},
        {"channel_spacing_nm", a.channel_spacing_nm},
        {"off_resonance_value", a.off_resonance_value},
        {"floorplan",
         {{"mr_pitch_um", a.floorplan.mr_pitch_um},
          {"bank_pitch_um", a.floorplan.bank_pitch_um},
          {"array_gap_um", a.floorplan.array_gap_um},
          {"unit_gap_um", a.floorplan.unit_gap_um},
          {"block_gap_um", a.floorplan.block_gap_um}}},
        {"thermo", {{"gamma_si", a.thermo.gamma_si}, {"dn_dT", a.thermo.dn_dT}, {"n_g", a.thermo.n_g}}},
        {"thermal", {{"kappa_k_per_mw", a.thermal.kappa_k_per_mw}, {"sigma_um", a.thermal.sigma_um}}},
    };
    json vs = json::array();
    for (const auto& v : variants) vs.push_back({{"name", v.name}, {"archive_fnv1a", hex64(file_digest(v.archive))}});
    j["variants"] = vs;
    j["dataset"] = {{"images_fnv1a", hex64(file_digest(images))},
                    {"labels_fnv1a", hex64(file_digest(labels))},
                    {"classes", num_classes}};
    json kinds_j = json::array(), scopes_j = json::array(), fr = json::array();
    for (auto k : kinds) kinds_j.push_back(faults::to_string(k));
    for (auto s : scopes) scopes_j.push_back(faults::to_string(s));
    for (double f : fractions) fr.push_back(f);
    j["scenarios"] = {{"kinds", kinds_j}, {"scopes", scopes_j}, {"fractions", fr}};
    j["hotspot"] = {{"heater_power_mw", heater_power_mw}, {"heater_group", heater_group}};
    j["trials"] = trials;
    j["seed"] = seed;
    j["subsample"] = subsample;
    j["prng"] = faults::kPrngName;
    j["seed_derivation"] = faults::kSeedDerivation;
    return j.dump();
}

std::uint64_t CampaignConfig::hash() const { return fnv1a64(canonical_json()); }

// ---------------------------------------------------------------------------
// Config parsing

namespace {

using Keys = std::initializer_list<std::string_view>;

void reject_unknown(const toml::table& t, Keys allowed, const std::string& where) {
    for (auto&& [k, v] : t) {
        (void)v;
        if (std::find(allowed.begin(), allowed.end(), k.str()) == allowed.end()) {
            throw ConfigError("unknown key '" + std::string(k.str()) + "' in " + where);
        }
    }
}

const toml::table* subtable(const toml::table& t, std::string_view key, const std::string& where) {
    const auto* node = t.get(key);
    if (!node) return nullptr;
    const auto* tbl = node->as_table();
    if (!tbl) throw ConfigError(where + "." + std::string(key) + " must be a table");
    return tbl;
}

template <typename T>
void read(const toml::table& t, std::string_view key, T& out, const std::string& where) {
    const auto* node = t.get(key);
    if (!node) return;
    const std::string name = where + "." + std::string(key);
    if constexpr (std::is_same_v<T, double>) {
        auto v = node->value<double>();
        if (!v) throw ConfigError(name + " must be a number");
        out = *v;
    } else if constexpr (std::is_same_v<T, std::string>) {
        auto v = node->value<std::string>();
        if (!v) throw ConfigError(name + " must be a string");
        out = *v;
    } else {
        auto v = node->value<std::int64_t>();
        if (!v || !node->is_integer()) throw ConfigError(name + " must be an integer");
        if (*v < 0) throw ConfigError(name + " must not be negative");
        if constexpr (sizeof(T) < sizeof(std::int64_t)) {
            if (*v > static_cast<std::int64_t>(std::numeric_limits<T>::max())) throw ConfigError(name + " is too large");
        }
        out = static_cast<T>(*v);
    }
}

std::vector<std::string> string_list(const toml::table& t, std::string_view key, const std::string& where) {
    std::vector<std::string> out;
    const auto* arr = t.get_as<toml::array>(key);
    if (!arr) throw ConfigError(where + "." + std::string(key) + " must be an array of strings");
    for (const auto& n : *arr) {
        auto s = n.value<std::string>();
        if (!s) throw ConfigError(where + "." + std::string(key) + " must contain only strings");
        out.push_back(*s);
    }
    return out;
}

void read_geometry(const toml::table* t, accel::BlockGeometry& g, const std::string& where) {
    if (!t) return;
    reject_unknown(*t, {"units", "banks_per_unit", "bank_width", "units_per_row"}, where);
    read(*t, "units", g.units, where);
    read(*t, "banks_per_unit", g.banks_per_unit, where);
    read(*t, "bank_width", g.bank_width, where);
    read(*t, "units_per_row", g.units_per_row, where);
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

CampaignConfig parse_config(std::string_view toml_text, const fs::path& base_dir) {
    toml::table root;
    try {
        root = toml::parse(toml_text);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "config line " << e.source().begin.line << ": " << e.description();
        throw ConfigError(msg.str());
    }
    CampaignConfig cfg;
    reject_unknown(root,
                   {"seed", "trials", "subsample", "output", "workers", "dataset", "variants", "scenarios", "hotspot",
                    "accelerator"},
                   "config");
    read(root, "seed", cfg.seed, "config");
    read(root, "trials", cfg.trials, "config");
    read(root, "subsample", cfg.subsample, "config");
    read(root, "workers", cfg.workers, "config");
    std::string output;
    read(root, "output", output, "config");
    if (!output.empty()) cfg.output_dir = resolve(base_dir, output);

    const auto* ds = subtable(root, "dataset", "config");
    if (!ds) throw ConfigError("missing [dataset] table");
    reject_unknown(*ds, {"images", "labels", "classes"}, "dataset");
    std::string images, labels;
    read(*ds, "images", images, "dataset");
    read(*ds, "labels", labels, "dataset");
    if (images.empty() || labels.empty()) throw ConfigError("dataset.images and dataset.labels are required");
    cfg.images = resolve(base_dir, images);
    cfg.labels = resolve(base_dir, labels);
    read(*ds, "classes", cfg.num_classes, "dataset");

    const auto* vs = root.get_as<toml::array>("variants");
    if (!vs) throw ConfigError("missing [[variants]] entries");
    for (const auto& node : *vs) {
        const auto* t = node.as_table();
        if (!t) throw ConfigError("each [[variants]] entry must be a table");
        reject_unknown(*t, {"name", "archive"}, "variants");
        VariantSpec v;
        std::string archive;
        read(*t, "name", v.name, "variants");
        read(*t, "archive", archive, "variants");
        if (v.name.empty() || archive.empty()) throw ConfigError("variants need both name and archive");
        v.archive = resolve(base_dir, archive);
        cfg.variants.push_back(std::move(v));
    }

    if (const auto* sc = subtable(root, "scenarios", "config")) {
        reject_unknown(*sc, {"kinds", "scopes", "fractions"}, "scenarios");
        if (sc->contains("kinds")) {
            cfg.kinds.clear();
            for (const auto& s : string_list(*sc, "kinds", "scenarios")) cfg.kinds.push_back(faults::parse_attack_kind(s));
        }
        if (sc->contains("scopes")) {
            cfg.scopes.clear();
            for (const auto& s : string_list(*sc, "scopes", "scenarios")) cfg.scopes.push_back(faults::parse_scope(s));
        }
        if (sc->contains("fractions")) {
            const auto* arr = sc->get_as<toml::array>("fractions");
            if (!arr) throw ConfigError("scenarios.fractions must be an array of numbers");
            cfg.fractions.clear();
            for (const auto& n : *arr) {
                auto f = n.value<double>();
                if (!f) throw ConfigError("scenarios.fractions must contain only numbers");
                cfg.fractions.push_back(*f);
            }
        }
    }

    if (const auto* hs = subtable(root, "hotspot", "config")) {
        reject_unknown(*hs, {"heater_power_mw", "heater_group"}, "hotspot");
        read(*hs, "heater_power_mw", cfg.heater_power_mw, "hotspot");
        read(*hs, "heater_group", cfg.heater_group, "hotspot");
    }

    if (const auto* ac = subtable(root, "accelerator", "config")) {
        auto& a = cfg.accelerator;
        reject_unknown(*ac,
                       {"base_wavelength_nm", "channel_spacing_nm", "off_resonance_value", "conv", "fc", "floorplan",
                        "thermo", "thermal"},
                       "accelerator");
        read(*ac, "base_wavelength_nm", a.base_wavelength_nm, "accelerator");
        read(*ac, "channel_spacing_nm", a.channel_spacing_nm, "accelerator");
        read(*ac, "off_resonance_value", a.off_resonance_value, "accelerator");
        read_geometry(subtable(*ac, "conv", "accelerator"), a.conv, "accelerator.conv");
        read_geometry(subtable(*ac, "fc", "accelerator"), a.fc, "accelerator.fc");
        if (const auto* fp = subtable(*ac, "floorplan", "accelerator")) {
            const std::string w = "accelerator.floorplan";
            reject_unknown(*fp, {"mr_pitch_um", "bank_pitch_um", "array_gap_um", "unit_gap_um", "block_gap_um"}, w);
            read(*fp, "mr_pitch_um", a.floorplan.mr_pitch_um, w);
            read(*fp, "bank_pitch_um", a.floorplan.bank_pitch_um, w);
            read(*fp, "array_gap_um", a.floorplan.array_gap_um, w);
            read(*fp, "unit_gap_um", a.floorplan.unit_gap_um, w);
            read(*fp, "block_gap_um", a.floorplan.block_gap_um, w);
        }
        if (const auto* th = subtable(*ac, "thermo", "accelerator")) {
            const std::string w = "accelerator.thermo";
            reject_unknown(*th, {"gamma_si", "dn_dT", "n_g"}, w);
            read(*th, "gamma_si", a.thermo.gamma_si, w);
            read(*th, "dn_dT", a.thermo.dn_dT, w);
            read(*th, "n_g", a.thermo.n_g, w);
        }
        if (const auto* tk = subtable(*ac, "thermal", "accelerator")) {
            const std::string w = "accelerator.thermal";
            reject_unknown(*tk, {"kappa_k_per_mw", "sigma_um"}, w);
            read(*tk, "kappa_k_per_mw", a.thermal.kappa_k_per_mw, w);
            read(*tk, "sigma_um", a.thermal.sigma_um, w);
        }
    }
    return cfg;
}

CampaignConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    auto base = path.parent_path();
    if (base.empty()) base = ".";
    return parse_config(ss.str(), base);
}

// ---------------------------------------------------------------------------
// Statistics

double quantile_type7(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw ContractError("quantile of an empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

FiveNumber five_number(std::vector<double> values) {
    if (values.empty()) throw ContractError("five-number summary of an empty sample");
    std::sort(values.begin(), values.end());
    return {values.front(), quantile_type7(values, 0.25), quantile_type7(values, 0.5), quantile_type7(values, 0.75),
            values.back()};
}

const VariantBaseline* CampaignReport::baseline(const std::string& variant) const {
    for (const auto& b : baselines) {
        if (b.name == variant) return &b;
    }
    return nullptr;
}

const ScenarioStats* CampaignReport::find(const std::string& variant, const Scenario& s) const {
    for (const auto& st : stats) {
        if (st.variant == variant && st.scenario == s) return &st;
    }
    return nullptr;
}

std::vector<ScenarioStats> compute_stats(const CampaignReport& report) {
    std::vector<ScenarioStats> out;
    for (const auto& b : report.baselines) {
        for (const auto& s : report.scenarios) {
            std::vector<double> acc;
            double slots = 0.0;
            for (const auto& r : report.rows) {
                if (r.variant == b.name && r.scenario == s) {
                    acc.push_back(r.accuracy);
                    slots += static_cast<double>(r.corrupted_slots);
                }
            }
            if (acc.empty()) continue;
            ScenarioStats st;
            st.variant = b.name;
            st.scenario = s;
            st.trials = acc.size();
            double sum = 0.0;
            for (double a : acc) sum += a;
            st.mean_accuracy = sum / static_cast<double>(acc.size());
            st.mean_corrupted_slots = slots / static_cast<double>(acc.size());
            st.accuracy = five_number(std::move(acc));
            out.push_back(st);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json scenario_json(const Scenario& s) {
    return {{"kind", faults::to_string(s.kind)}, {"scope", faults::to_string(s.scope)}, {"fraction", s.fraction}};
}

Scenario scenario_from(const json& j) {
    return {faults::parse_attack_kind(j.at("kind").get<std::string>()),
            faults::parse_scope(j.at("scope").get<std::string>()), j.at("fraction").get<double>()};
}

json row_json(const TrialRow& r) {
    json j = scenario_json(r.scenario);
    j["variant"] = r.variant;
    j["trial"] = r.trial;
    j["seed"] = r.seed;
    j["accuracy"] = r.accuracy;
    j["correct"] = r.correct;
    j["corrupted_slots"] = r.corrupted_slots;
    j["targeted_mrs"] = r.targeted_mrs;
    j["digest"] = hex64(r.digest);
    return j;
}

TrialRow row_from(const json& j) {
    TrialRow r;
    r.variant = j.at("variant").get<std::string>();
    r.scenario = scenario_from(j);
    r.trial = j.at("trial").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.correct = j.at("correct").get<std::size_t>();
    r.corrupted_slots = j.at("corrupted_slots").get<std::size_t>();
    r.targeted_mrs = j.at("targeted_mrs").get<std::size_t>();
    r.digest = std::stoull(j.at("digest").get<std::string>(), nullptr, 16);
    return r;
}

json five_json(const FiveNumber& f) {
    return {{"min", f.min}, {"q1", f.q1}, {"median", f.median}, {"q3", f.q3}, {"max", f.max}};
}

}  // namespace

std::string report_to_json(const CampaignReport& report) {
    json j;
    j["metadata"] = {{"prng", report.prng},
                     {"seed_derivation", report.seed_derivation},
                     {"config_hash", hex64(report.config_hash)},
                     {"master_seed", report.master_seed},
                     {"trials", report.trials},
                     {"evaluated_images", report.evaluated_images}};
    json sc = json::array();
    for (const auto& s : report.scenarios) sc.push_back(scenario_json(s));
    j["scenarios"] = sc;
    json bl = json::array();
    for (const auto& b : report.baselines) {
        json e = {{"variant", b.name},
                  {"fault_free_accuracy", b.fault_free_accuracy},
                  {"reference_accuracy", b.reference_accuracy},
                  {"parameters", b.parameters},
                  {"mapped_slots", b.mapped_slots}};
        e["recorded_accuracy"] = b.recorded_accuracy ? json(*b.recorded_accuracy) : json(nullptr);
        bl.push_back(e);
    }
    j["baselines"] = bl;
    json rows = json::array();
    for (const auto& r : report.rows) rows.push_back(row_json(r));
    j["rows"] = rows;
    json st = json::array();
    for (const auto& s : report.stats) {
        json e = scenario_json(s.scenario);
        e["variant"] = s.variant;
        e["trials"] = s.trials;
        e["accuracy"] = five_json(s.accuracy);
        e["mean_accuracy"] = s.mean_accuracy;
        e["mean_corrupted_slots"] = s.mean_corrupted_slots;
        st.push_back(e);
    }
    j["stats"] = st;
    return j.dump(2) + "\n";
}

CampaignReport report_from_json(std::string_view text) {
    CampaignReport r;
    try {
        const json j = json::parse(text);
        const auto& m = j.at("metadata");
        r.prng = m.at("prng").get<std::string>();
        r.seed_derivation = m.at("seed_derivation").get<std::string>();
        r.config_hash = std::stoull(m.at("config_hash").get<std::string>(), nullptr, 16);
        r.master_seed = m.at("master_seed").get<std::uint64_t>();
        r.trials = m.at("trials").get<int>();
        r.evaluated_images = m.at("evaluated_images").get<std::size_t>();
        for (const auto& s : j.at("scenarios")) r.scenarios.push_back(scenario_from(s));
        for (const auto& b : j.at("baselines")) {
            VariantBaseline v;
            v.name = b.at("variant").get<std::string>();
            v.fault_free_accuracy = b.at("fault_free_accuracy").get<double>();
            v.reference_accuracy = b.at("reference_accuracy").get<double>();
            v.parameters = b.at("parameters").get<std::size_t>();
            v.mapped_slots = b.at("mapped_slots").get<std::size_t>();
            if (b.contains("recorded_accuracy") && b["recorded_accuracy"].is_number()) {
                v.recorded_accuracy = b["recorded_accuracy"].get<double>();
            }
            r.baselines.push_back(v);
        }
        for (const auto& row : j.at("rows")) r.rows.push_back(row_from(row));
    } catch (const json::exception& e) {
        throw FormatError(FormatErrc::bad_manifest, std::string("campaign report: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError(FormatErrc::bad_manifest, std::string("campaign report: ") + e.what());
    }
    r.stats = compute_stats(r);
    return r;
}

// ---------------------------------------------------------------------------
// Running

namespace {

fs::path partial_path(const CampaignConfig& cfg, const std::string& variant, const Scenario& s) {
    return cfg.output_dir / "partial" / (variant + "__" + s.key() + ".json");
}

std::optional<std::vector<TrialRow>> load_partial(const fs::path& p, std::uint64_t hash, int trials) {
    std::ifstream in(p);
    if (!in) return std::nullopt;
    try {
        json j = json::parse(in);
        if (j.at("config_hash").get<std::string>() != hex64(hash)) return std::nullopt;
        std::vector<TrialRow> rows;
        for (const auto& r : j.at("rows")) rows.push_back(row_from(r));
        if (static_cast<int>(rows.size()) != trials) return std::nullopt;
        return rows;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

void write_text(const fs::path& p, const std::string& text) {
    const auto tmp = fs::path(p.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << text;
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    fs::rename(tmp, p);
}

void save_partial(const fs::path& p, std::uint64_t hash, const std::vector<TrialRow>& rows) {
    json j;
    j["config_hash"] = hex64(hash);
    json arr = json::array();
    for (const auto& r : rows) arr.push_back(row_json(r));
    j["rows"] = arr;
    write_text(p, j.dump(1) + "\n");
}

struct LoadedVariant {
    nn::Model model;
    accel::MappingPlan plan;
};

}  // namespace

CampaignReport run_campaign(const CampaignConfig& cfg, const RunOptions& opts) {
    cfg.validate(true);
    const std::uint64_t hash = cfg.hash();

    nn::Dataset data = io::load_idx(cfg.images, cfg.labels, cfg.num_classes);
    if (cfg.subsample > 0 && cfg.subsample < data.count) data = data.head(cfg.subsample);

    const auto acc = accel::build_accelerator(cfg.accelerator);
    const unsigned workers =
        cfg.workers > 0 ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());

    CampaignReport report;
    report.prng = faults::kPrngName;
    report.seed_derivation = faults::kSeedDerivation;
    report.config_hash = hash;
    report.master_seed = cfg.seed;
    report.trials = cfg.trials;
    report.evaluated_images = data.count;
    report.scenarios = cfg.scenarios();

    std::vector<LoadedVariant> loaded;
    for (const auto& v : cfg.variants) {
        LoadedVariant lv{io::load_model(v.archive), {}};
        if (lv.model.info().input_shape != nn::Shape{data.channels, data.rows, data.cols}) {
            throw ConfigError("variant '" + v.name + "' expects input " + nn::to_string(lv.model.info().input_shape) +
                              " but the dataset has " +
                              nn::to_string(nn::Shape{data.channels, data.rows, data.cols}));
        }
        lv.plan = accel::map_model(lv.model, acc);
        const accel::FaultedAccelerator clean(acc, {});
        VariantBaseline b;
        b.name = v.name;
        b.fault_free_accuracy = nn::evaluate_accuracy(lv.model, data, lv.plan, clean, workers).accuracy;
        b.reference_accuracy = nn::evaluate_reference_accuracy(lv.model, data, workers).accuracy;
        b.recorded_accuracy = lv.model.info().recorded_test_accuracy;
        b.parameters = lv.model.parameter_count();
        b.mapped_slots = lv.plan.mapped_slots();
        report.baselines.push_back(b);
        loaded.push_back(std::move(lv));
    }

    const auto& scen = report.scenarios;
    const std::size_t nv = cfg.variants.size(), ns = scen.size(), nt = static_cast<std::size_t>(cfg.trials);
    // rows[(v * ns + s) * nt + t]
    std::vector<TrialRow> rows(nv * ns * nt);
    std::vector<char> have(nv * ns, 0);

    if (opts.resume) {
        for (std::size_t v = 0; v < nv; ++v) {
            for (std::size_t s = 0; s < ns; ++s) {
                if (auto prev = load_partial(partial_path(cfg, cfg.variants[v].name, scen[s]), hash, cfg.trials)) {
                    std::copy(prev->begin(), prev->end(), rows.begin() + static_cast<std::ptrdiff_t>((v * ns + s) * nt));
                    have[v * ns + s] = 1;
                }
            }
        }
    }
    fs::create_directories(cfg.output_dir / "partial");

    // One task realises a (scenario, trial) attack and evaluates every
    // variant still missing it; seeds are shared across variants.
    struct Task {
        std::size_t scenario;
        std::size_t trial;
    };
    std::vector<Task> tasks;
    for (std::size_t s = 0; s < ns; ++s) {
        bool needed = false;
        for (std::size_t v = 0; v < nv; ++v) needed = needed || !have[v * ns + s];
        if (!needed) continue;
        for (std::size_t t = 0; t < nt; ++t) tasks.push_back({s, t});
    }

    std::vector<std::atomic<std::size_t>> remaining(ns);
    for (std::size_t s = 0; s < ns; ++s) remaining[s] = nt;
    std::size_t groups_done = 0;
    for (char h : have) groups_done += h ? 1 : 0;
    const std::size_t groups_total = nv * ns;
    if (opts.progress && groups_done > 0) opts.progress(groups_done, groups_total);

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex mu;

    auto worker = [&] {
        while (!failed) {
            const std::size_t k = next++;
            if (k >= tasks.size()) return;
            const auto [s, t] = tasks[k];
            try {
                const auto spec = cfg.attack_spec(scen[s]);
                const auto trial = static_cast<std::uint32_t>(t);
                const auto attack = faults::realize_attack(acc, spec, trial);
                for (std::size_t v = 0; v < nv; ++v) {
                    if (have[v * ns + s]) continue;
                    const auto& lv = loaded[v];
                    const accel::CompiledPlan compiled(lv.model, lv.plan, attack.faulted);
                    const auto res = nn::evaluate_accuracy(lv.model, data, compiled, 1);
                    TrialRow& row = rows[(v * ns + s) * nt + t];
                    row.variant = cfg.variants[v].name;
                    row.scenario = scen[s];
                    row.trial = static_cast<int>(t);
                    row.seed = faults::trial_seed(cfg.seed, trial);
                    row.accuracy = res.accuracy;
                    row.correct = res.correct;
                    row.corrupted_slots = compiled.corrupted_slots();
                    row.targeted_mrs = attack.targeted_mrs;
                    row.digest = attack.digest;
                }
                if (--remaining[s] == 0) {
                    std::lock_guard lock(mu);
                    for (std::size_t v = 0; v < nv; ++v) {
                        if (have[v * ns + s]) continue;
                        const auto first = rows.begin() + static_cast<std::ptrdiff_t>((v * ns + s) * nt);
                        save_partial(partial_path(cfg, cfg.variants[v].name, scen[s]), hash,
                                     std::vector<TrialRow>(first, first + static_cast<std::ptrdiff_t>(nt)));
                        ++groups_done;
                        if (opts.progress) opts.progress(groups_done, groups_total);
                    }
                }
            } catch (...) {
                std::lock_guard lock(mu);
                if (!error) error = std::current_exception();
                failed = true;
            }
        }
    };

    const unsigned n_threads = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(1, tasks.size())));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    }
    if (error) std::rethrow_exception(error);

    report.rows = std::move(rows);
    report.stats = compute_stats(report);
    return report;
}

// ---------------------------------------------------------------------------
// Emitters

std::string csv_text(const CampaignReport& report) {
    std::string out(kCsvHeader);
    out += '\n';
    for (const auto& r : report.rows) {
        out += r.variant + ',' + faults::to_string(r.scenario.kind) + ',' + faults::to_string(r.scenario.scope) + ',' +
               format_fraction(r.scenario.fraction) + ',' + std::to_string(r.trial) + ',' + std::to_string(r.seed) +
               ',' + shortest(r.accuracy) + ',' + std::to_string(r.corrupted_slots) + '\n';
    }
    return out;
}

std::string summary_text(const CampaignReport& report) {
    std::string out;
    out += "prng: " + report.prng + "\n";
    out += "seed derivation: " + report.seed_derivation + "\n";
    out += "config hash: " + hex64(report.config_hash) + "\n";
    out += "master seed: " + std::to_string(report.master_seed) + "\n";
    out += "trials per scenario: " + std::to_string(report.trials) + "\n";
    out += "evaluated images: " + std::to_string(report.evaluated_images) + "\n";
    for (const auto& b : report.baselines) {
        out += "\nvariant " + b.name + "\n";
        out += printf_string("  fault-free accuracy %.4f (reference %.4f", b.fault_free_accuracy, b.reference_accuracy);
        if (b.recorded_accuracy) out += printf_string(", recorded %.4f", *b.recorded_accuracy);
        out += printf_string("), %zu parameters, %zu mapped slots\n", b.parameters, b.mapped_slots);
        out += printf_string("  %-10s %-5s %8s %3s %8s %8s %8s %8s %8s %8s %9s %10s\n", "kind", "scope", "fraction", "n",
                             "min", "q1", "median", "q3", "max", "mean", "drop(pt)", "slots");
        for (const auto& s : report.stats) {
            if (s.variant != b.name) continue;
            const auto& f = s.accuracy;
            out += printf_string("  %-10s %-5s %8s %3zu %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %9.2f %10.1f\n",
                                 faults::to_string(s.scenario.kind).c_str(), faults::to_string(s.scenario.scope).c_str(),
                                 format_fraction(s.scenario.fraction).c_str(), s.trials, f.min, f.q1, f.median, f.q3,
                                 f.max, s.mean_accuracy, 100.0 * (b.fault_free_accuracy - f.median),
                                 s.mean_corrupted_slots);
        }
    }
    return out;
}

namespace {

void ensure_parent(const fs::path& file) {
    const auto dir = file.parent_path();
    if (dir.empty()) return;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
}

}  // namespace

void emit_csv(const CampaignReport& report, const fs::path& file) {
    ensure_parent(file);
    write_text(file, csv_text(report));
}

void emit_summary(const CampaignReport& report, const fs::path& file) {
    ensure_parent(file);
    write_text(file, summary_text(report));
}

void emit_all(const CampaignReport& report, const fs::path& dir) {
    emit_csv(report, dir / "trials.csv");
    emit_summary(report, dir / "summary.txt");
    write_text(dir / "report.json", report_to_json(report));
}

// ---------------------------------------------------------------------------
// Recovery

std::vector<RecoveryRow> recovery_metrics(const CampaignReport& original, const CampaignReport& robust,
                                          const std::string& original_variant, const std::string& robust_variant) {
    if (original.baselines.empty() || robust.baselines.empty()) throw ContractError("report without variants");
    const std::string ov = original_variant.empty() ? original.baselines.front().name : original_variant;
    const std::string rv = robust_variant.empty() ? robust.baselines.front().name : robust_variant;
    const auto* base = original.baseline(ov);
    if (!base) throw ContractError("variant '" + ov + "' not in the original report");
    if (!robust.baseline(rv)) throw ContractError("variant '" + rv + "' not in the robust report");
    if (original.scenarios != robust.scenarios) throw ContractError("scenario matrices differ between the reports");

    std::vector<RecoveryRow> out;
    for (const auto& s : original.scenarios) {
        const auto* o = original.find(ov, s);
        const auto* r = robust.find(rv, s);
        if (!o || !r) throw ContractError("scenario " + s.key() + " missing from a report");
        RecoveryRow row;
        row.scenario = s;
        row.baseline = 100.0 * base->fault_free_accuracy;
        row.median_original = 100.0 * o->accuracy.median;
        row.median_robust = 100.0 * r->accuracy.median;
        row.drop_original = row.baseline - row.median_original;
        row.drop_robust = row.baseline - row.median_robust;
        row.recovery = row.drop_original - row.drop_robust;
        out.push_back(row);
    }
    return out;
}

std::string recovery_text(const std::vector<RecoveryRow>& rows) {
    std::string out = printf_string("%-10s %-5s %8s %9s %9s %9s %9s %9s %9s\n", "kind", "scope", "fraction", "baseline",
                                    "orig_med", "rob_med", "orig_drop", "rob_drop", "recovery");
    for (const auto& r : rows) {
        out += printf_string("%-10s %-5s %8s %9.2f %9.2f %9.2f %9.2f %9.2f %9.2f\n",
                             faults::to_string(r.scenario.kind).c_str(), faults::to_string(r.scenario.scope).c_str(),
                             format_fraction(r.scenario.fraction).c_str(), r.baseline, r.median_original,
                             r.median_robust, r.drop_original, r.drop_robust, r.recovery);
    }
    return out;
}

std::string recovery_csv(const std::vector<RecoveryRow>& rows) {
    std::string out = "kind,scope,fraction,baseline,median_original,median_robust,drop_original,drop_robust,recovery\n";
    for (const auto& r : rows) {
        out += faults::to_string(r.scenario.kind) + ',' + faults::to_string(r.scenario.scope) + ',' +
               format_fraction(r.scenario.fraction) + ',' + shortest(r.baseline) + ',' + shortest(r.median_original) +
               ',' + shortest(r.median_robust) + ',' + shortest(r.drop_original) + ',' + shortest(r.drop_robust) + ',' +
               shortest(r.recovery) + '\n';
    }
    return out;
}

}  // namespace mrfault::campaign
