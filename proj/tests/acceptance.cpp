// Acceptance checks 1-9. One PASS/FAIL line per criterion; exit status is the
// number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>

#include "helpers.hpp"
#include "mrfault/accelerator.hpp"
#include "mrfault/campaign.hpp"
#include "mrfault/faults.hpp"
#include "mrfault/model_io.hpp"
#include "mrfault/nn.hpp"
#include "mrfault/photonics.hpp"

using namespace mrfault;
using accel::ArrayRole;
using accel::Block;
using photonics::MRState;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
    std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void guarded(int id, const std::function<void()>& body) {
    try {
        body();
    } catch (const std::exception& e) {
        report(id, false, std::string("exception: ") + e.what());
    }
}

// Single fc output over three inputs on the minimal accelerator.
struct ToyBank {
    accel::Accelerator acc;
    nn::Model model;
    accel::MappingPlan plan;
    std::vector<float> w;

    ToyBank(accel::AcceleratorConfig cfg, std::vector<float> weights) : acc(std::move(cfg)), w(std::move(weights)) {
        nn::Linear fc;
        fc.name = "fc";
        fc.in_features = 3;
        fc.out_features = 1;
        fc.weight = nn::Tensor({1, 3}, w);
        nn::ModelInfo info;
        info.input_shape = {3, 1, 1};
        info.num_classes = 1;
        model = nn::Model(info, {nn::Flatten{}, fc});
        plan = accel::map_model(model, acc);
    }
    accel::MRIndex mr(ArrayRole role, int col) const { return acc.array_start({Block::fc, 0, 0}, role) + col; }
    double run(const std::vector<float>& a, const accel::FaultedAccelerator& facc) const {
        return accel::execute_dot_product(plan.layers[0], 0, w, a, facc);
    }
};

const std::vector<float> kA{0.5f, 0.2f, 0.4f};
const std::vector<float> kW{0.3f, 0.6f, 0.9f};
// Operands normalised by their maxima (0.5 and 0.9).
const double an[3] = {1.0, 0.4, 0.8};
const double wn[3] = {1.0 / 3.0, 2.0 / 3.0, 1.0};
const double kScale = 0.5 * 0.9;

bool close(double a, double b, double rel = 1e-6) { return std::abs(a - b) <= rel * std::max(1.0, std::abs(b)); }

void criterion1() {
    const photonics::ThermoOpticParams p;
    const double s = photonics::thermal_shift_nm(1550.0, 10.0, p);
    const double rel = std::abs(s - 0.5491) / 0.5491;
    double worst = 0.0;
    for (int i = 1; i <= 1000; ++i) {
        const double t = 0.173 * i;
        const double a = photonics::thermal_shift_nm(1550.0, t, p);
        const double b = photonics::thermal_shift_nm(1550.0, 2.0 * t, p);
        worst = std::max(worst, std::abs(b - 2.0 * a) / b);
    }
    const bool ok = rel <= 1e-4 && worst <= 4.0 * std::numeric_limits<double>::epsilon();
    report(1, ok, fmt("shift(1550 nm, 10 K) = %.6f nm (rel err %.2e); worst linearity deviation %.2e", s, rel, worst));
}

void criterion2() {
    const auto model = io::load_model(fixture_model());
    const auto data = io::load_idx(fixture_images(), fixture_labels()).head(100);
    const auto acc = accel::build_accelerator({});
    const auto plan = accel::map_model(model, acc);
    const accel::CompiledPlan compiled(model, plan, accel::FaultedAccelerator(acc));
    double worst = 0.0;
    std::size_t agree = 0;
    for (std::size_t i = 0; i < data.count; ++i) {
        const auto ref = nn::reference_forward(model, data.image(i));
        const auto got = nn::accelerated_forward(model, data.image(i), compiled);
        for (std::size_t k = 0; k < ref.size(); ++k) {
            worst = std::max(worst, std::abs(static_cast<double>(got[k]) - ref[k]) / std::abs(static_cast<double>(ref[k])));
        }
        agree += nn::argmax(ref) == nn::argmax(got);
    }
    report(2, worst <= 1e-4 && agree == data.count,
           fmt("100 images: worst per-logit relative error %.2e, argmax agreement %zu/100", worst, agree));
}

void criterion3() {
    const ToyBank t(accel::toy_config(3), kW);
    const double off = t.acc.config().off_resonance_value;
    // Input MR 2 off resonance: its activation becomes the off-resonance value.
    const accel::FaultedAccelerator f(t.acc, {{t.mr(ArrayRole::input, 1), MRState::off_resonance()}});
    const double got = t.run(kA, f);
    const double expect = kScale * (an[0] * wn[0] + off * wn[1] + an[2] * wn[2]);
    bool ok = close(got, expect);
    int local = 0;
    for (ArrayRole role : {ArrayRole::input, ArrayRole::weight}) {
        for (int k = 0; k < 3; ++k) {
            double e = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double a = role == ArrayRole::input && c == k ? off : an[c];
                const double w = role == ArrayRole::weight && c == k ? off : wn[c];
                e += a * w;
            }
            const accel::FaultedAccelerator g(t.acc, {{t.mr(role, k), MRState::off_resonance()}});
            local += close(t.run(kA, g), kScale * e);
        }
    }
    ok = ok && local == 6;
    report(3, ok, fmt("input MR 2 off resonance: %.6f (expected %.6f); %d/6 single-MR positions local", got, expect, local));
}

void criterion4() {
    auto cfg = accel::toy_config(3);
    cfg.floorplan.array_gap_um = 2000.0;  // keeps the input array out of the heater's reach
    const ToyBank t(cfg, kW);
    const auto w0 = t.acc.position({Block::fc, 0, 0, 0, ArrayRole::weight});
    const auto w2 = t.acc.position({Block::fc, 0, 0, 2, ArrayRole::weight});
    const photonics::Point centre{(w0.x_um + w2.x_um) / 2.0, w0.y_um};
    const auto& th = cfg.thermo;
    const double lambda = t.acc.home_wavelength_nm({Block::fc, 0, 0, 1, ArrayRole::weight});
    const double nm_per_mw = th.gamma_si * th.dn_dT * lambda / th.n_g * cfg.thermal.kappa_k_per_mw;
    const double one_spacing = cfg.channel_spacing_nm / nm_per_mw;

    const auto hot = faults::apply_heaters(t.acc, {{centre, one_spacing}});
    const double got = t.run(kA, hot);
    const double expect = kScale * (an[0] * wn[1] + an[1] * wn[2] + an[2]);

    const auto warm = faults::apply_heaters(t.acc, {{centre, 0.4 * one_spacing}});
    const double healthy = t.run(kA, warm);
    const double exact = 0.5 * 0.3 + 0.2 * 0.6 + 0.4 * 0.9;
    const bool ok = close(got, expect) && close(healthy, exact) && warm.fault_count() == 0;
    report(4, ok,
           fmt("%.2f mW heater: %.6f (expected a1w2+a2w3+a3 = %.6f); %.2f mW: %.6f (fault-free %.6f)", one_spacing, got,
               expect, 0.4 * one_spacing, healthy, exact));
}

double median_of(const campaign::CampaignReport& r, faults::AttackKind k, faults::Scope s, double f) {
    const auto* st = r.find(r.baselines.front().name, {k, s, f});
    if (!st) throw std::runtime_error("scenario missing from the report");
    return st->accuracy.median;
}

void criteria5to8() {
    auto cfg = campaign::load_config(source_path("configs/mnist.toml"));
    cfg.output_dir = fs::path(MRFAULT_BINARY_DIR) / "acceptance_out" / "run1";
    fs::remove_all(cfg.output_dir.parent_path());
    campaign::RunOptions fresh;
    fresh.resume = false;
    const auto t0 = std::chrono::steady_clock::now();
    const auto report1 = campaign::run_campaign(cfg, fresh);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    campaign::emit_all(report1, cfg.output_dir);
    std::printf("campaign: %zu rows over %zu images in %.0f s\n", report1.rows.size(), report1.evaluated_images, secs);
    std::fputs(campaign::summary_text(report1).c_str(), stdout);

    using faults::AttackKind;
    using faults::Scope;
    const double base = report1.baselines.front().fault_free_accuracy;

    guarded(5, [&] {
        int ok = 0, total = 0;
        std::string bad;
        for (auto k : cfg.kinds) {
            for (auto s : cfg.scopes) {
                const double m1 = median_of(report1, k, s, 0.01);
                const double m5 = median_of(report1, k, s, 0.05);
                const double m10 = median_of(report1, k, s, 0.10);
                ++total;
                if (m10 <= m5 && m5 <= m1) ++ok;
                else bad += " " + faults::to_string(k) + "/" + faults::to_string(s);
            }
        }
        report(5, ok == total, fmt("%d/%d kind x scope series non-increasing in fraction", ok, total) + bad);
    });

    guarded(6, [&] {
        std::string detail;
        bool ok = true;
        for (double f : {0.05, 0.10}) {
            const double h = base - median_of(report1, AttackKind::hotspot, Scope::both, f);
            const double a = base - median_of(report1, AttackKind::actuation, Scope::both, f);
            ok = ok && h >= a;
            detail += fmt(" %g: hotspot drop %.4f vs actuation %.4f;", f, h, a);
        }
        report(6, ok, "BOTH scope" + detail);
    });

    guarded(7, [&] {
        std::string detail;
        bool ok = true;
        for (auto k : cfg.kinds) {
            for (double f : {0.05, 0.10}) {
                const double fc = base - median_of(report1, k, Scope::fc, f);
                const double conv = base - median_of(report1, k, Scope::conv, f);
                ok = ok && fc >= conv;
                detail += fmt(" %s %g: fc %.4f vs conv %.4f;", faults::to_string(k).c_str(), f, fc, conv);
            }
        }
        report(7, ok, "median drops" + detail);
    });

    guarded(8, [&] {
        // Second fresh run with a different worker count.
        auto cfg2 = cfg;
        cfg2.output_dir = fs::path(MRFAULT_BINARY_DIR) / "acceptance_out" / "run2";
        cfg2.workers = 3;
        const auto report2 = campaign::run_campaign(cfg2, fresh);
        campaign::emit_all(report2, cfg2.output_dir);
        const auto a = campaign::csv_text(report1);
        const auto b = campaign::csv_text(report2);
        report(8, a == b && report1.rows.size() == 180,
               fmt("two fresh runs: %zu vs %zu CSV bytes, %s", a.size(), b.size(), a == b ? "identical" : "different"));
    });
}

void criterion9() {
    const auto acc = accel::build_accelerator({});
    faults::AttackSpec spec;
    spec.kind = faults::AttackKind::actuation;
    spec.scope = faults::Scope::conv;
    spec.fraction = 0.10;
    spec.seed = 2024;
    const auto t = faults::select_actuation_targets(spec, acc, 0);
    const std::set<accel::MRIndex> distinct(t.begin(), t.end());
    const bool in_scope = std::all_of(t.begin(), t.end(), [&](accel::MRIndex i) {
        return acc.coordinate(i).block == Block::conv;
    });
    report(9, t.size() == 8000 && distinct.size() == 8000 && in_scope,
           fmt("%zu targets, %zu distinct, %s", t.size(), distinct.size(), in_scope ? "all in CONV" : "out of scope"));
}

}  // namespace

int main() {
    guarded(1, criterion1);
    guarded(2, criterion2);
    guarded(3, criterion3);
    guarded(4, criterion4);
    try {
        criteria5to8();
    } catch (const std::exception& e) {
        for (int id : {5, 6, 7, 8}) report(id, false, std::string("campaign failed: ") + e.what());
    }
    guarded(9, criterion9);
    std::printf("%s: %d failure(s)\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
    return failures == 0 ? 0 : 1;
}
