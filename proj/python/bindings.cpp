#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mrfault/accelerator.hpp"
#include "mrfault/campaign.hpp"
#include "mrfault/error.hpp"
#include "mrfault/faults.hpp"
#include "mrfault/model_io.hpp"
#include "mrfault/nn.hpp"
#include "mrfault/photonics.hpp"

namespace py = pybind11;
using namespace mrfault;

namespace {

py::array_t<float> to_array(const nn::Tensor& t) {
    py::array_t<float> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

nn::Tensor to_tensor(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    nn::Shape shape(a.shape(), a.shape() + a.ndim());
    return nn::Tensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

faults::AttackSpec make_spec(const std::string& kind, const std::string& scope, double fraction, std::uint64_t seed,
                             double heater_power_mw, int heater_group) {
    faults::AttackSpec s;
    s.kind = faults::parse_attack_kind(kind);
    s.scope = faults::parse_scope(scope);
    s.fraction = fraction;
    s.seed = seed;
    s.heater_power_mw = heater_power_mw;
    s.heater_group = heater_group;
    s.validate();
    return s;
}

py::object json_loads(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Microring fault-injection core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);

    m.def(
        "resonant_wavelength_nm",
        [](double radius_um, int order, double n_eff) {
            return photonics::resonant_wavelength_nm({radius_um, order, n_eff, {}});
        },
        py::arg("radius_um"), py::arg("order"), py::arg("n_eff"));
    m.def(
        "thermal_shift_nm",
        [](double lambda_nm, double delta_t_k, double gamma_si, double dn_dT, double n_g) {
            return photonics::thermal_shift_nm(lambda_nm, delta_t_k, {gamma_si, dn_dT, n_g});
        },
        py::arg("lambda_nm"), py::arg("delta_t_k"), py::arg("gamma_si") = 0.8, py::arg("dn_dT") = 1.86e-4,
        py::arg("n_g") = 4.2);
    m.def(
        "snap_to_channel",
        [](double lambda_nm, double base_nm, double spacing_nm, int count) {
            return photonics::snap_to_channel(lambda_nm, {base_nm, spacing_nm, count});
        },
        py::arg("lambda_nm"), py::arg("base_nm") = 1550.0, py::arg("spacing_nm") = 0.8, py::arg("count") = 20);

    py::class_<nn::Model>(m, "Model")
        .def_property_readonly("name", [](const nn::Model& mo) { return mo.info().name; })
        .def_property_readonly("variant", [](const nn::Model& mo) { return mo.info().variant; })
        .def_property_readonly("input_shape", [](const nn::Model& mo) { return mo.info().input_shape; })
        .def_property_readonly("num_classes", [](const nn::Model& mo) { return mo.info().num_classes; })
        .def_property_readonly("recorded_accuracy", [](const nn::Model& mo) { return mo.info().recorded_test_accuracy; })
        .def_property_readonly("parameter_count", &nn::Model::parameter_count)
        .def_property_readonly("conv_parameter_count", &nn::Model::conv_parameter_count)
        .def_property_readonly("fc_parameter_count", &nn::Model::fc_parameter_count)
        .def("layer_kinds", [](const nn::Model& mo) {
            std::vector<std::string> out;
            for (const auto& l : mo.layers()) out.push_back(nn::layer_kind(l));
            return out;
        });

    py::class_<nn::Dataset>(m, "Dataset")
        .def_readonly("count", &nn::Dataset::count)
        .def_readonly("num_classes", &nn::Dataset::num_classes)
        .def("image", [](const nn::Dataset& d, std::size_t i) {
            if (i >= d.count) throw py::index_error("image index out of range");
            return to_array(d.image(i));
        })
        .def_property_readonly("labels", [](const nn::Dataset& d) {
            py::array_t<std::uint8_t> out(static_cast<py::ssize_t>(d.labels.size()));
            std::copy(d.labels.begin(), d.labels.end(), out.mutable_data());
            return out;
        })
        .def("head", &nn::Dataset::head);

    m.def("load_model", &io::load_model, py::arg("path"));
    m.def("load_idx", &io::load_idx, py::arg("images"), py::arg("labels"), py::arg("num_classes") = 10);
    m.def(
        "reference_forward",
        [](const nn::Model& mo, const py::array_t<float, py::array::c_style | py::array::forcecast>& x) {
            return to_array(nn::reference_forward(mo, to_tensor(x)));
        },
        py::arg("model"), py::arg("image"));

    py::class_<accel::Accelerator>(m, "Accelerator")
        .def(py::init([] { return accel::build_accelerator({}); }))
        .def_property_readonly("conv_mr_count", [](const accel::Accelerator& a) { return a.mr_count(accel::Block::conv); })
        .def_property_readonly("fc_mr_count", [](const accel::Accelerator& a) { return a.mr_count(accel::Block::fc); })
        .def_property_readonly("conv_bank_count",
                               [](const accel::Accelerator& a) { return a.bank_count(accel::Block::conv); })
        .def_property_readonly("fc_bank_count", [](const accel::Accelerator& a) { return a.bank_count(accel::Block::fc); })
        .def_property_readonly("total_mr_count", &accel::Accelerator::total_mr_count)
        .def("mapped_slots",
             [](const accel::Accelerator& a, const nn::Model& mo) { return accel::map_model(mo, a).mapped_slots(); });

    m.def(
        "select_actuation_targets",
        [](const accel::Accelerator& acc, const std::string& scope, double fraction, std::uint64_t seed,
           std::uint32_t trial) {
            return faults::select_actuation_targets(make_spec("actuation", scope, fraction, seed, 20.0, 4), acc, trial);
        },
        py::arg("accelerator"), py::arg("scope"), py::arg("fraction"), py::arg("seed"), py::arg("trial") = 0);

    m.def(
        "attacked_accuracy",
        [](const nn::Model& mo, const nn::Dataset& data, const accel::Accelerator& acc, const std::string& kind,
           const std::string& scope, double fraction, std::uint64_t seed, std::uint32_t trial, double heater_power_mw,
           int heater_group, unsigned workers) {
            const auto spec = make_spec(kind, scope, fraction, seed, heater_power_mw, heater_group);
            py::gil_scoped_release release;
            const auto plan = accel::map_model(mo, acc);
            const auto attack = faults::realize_attack(acc, spec, trial);
            const accel::CompiledPlan compiled(mo, plan, attack.faulted);
            const auto r = nn::evaluate_accuracy(mo, data, compiled, workers);
            return std::make_tuple(r.accuracy, compiled.corrupted_slots(), attack.targeted_mrs);
        },
        py::arg("model"), py::arg("dataset"), py::arg("accelerator"), py::arg("kind"), py::arg("scope"),
        py::arg("fraction"), py::arg("seed"), py::arg("trial") = 0, py::arg("heater_power_mw") = 20.0,
        py::arg("heater_group") = 4, py::arg("workers") = 1,
        "Returns (accuracy, corrupted_slots, targeted_mrs) for one seeded attack trial.");

    m.def(
        "fault_free_accuracy",
        [](const nn::Model& mo, const nn::Dataset& data, const accel::Accelerator& acc, unsigned workers) {
            py::gil_scoped_release release;
            const auto plan = accel::map_model(mo, acc);
            return nn::evaluate_accuracy(mo, data, plan, accel::FaultedAccelerator(acc), workers).accuracy;
        },
        py::arg("model"), py::arg("dataset"), py::arg("accelerator"), py::arg("workers") = 1);

    m.def(
        "validate_config",
        [](const std::filesystem::path& path) {
            const auto cfg = campaign::load_config(path);
            cfg.validate(true);
            return campaign::hex64(cfg.hash());
        },
        py::arg("path"), "Loads and validates a campaign config; returns its hash.");

    m.def(
        "run_campaign",
        [](const std::filesystem::path& config, std::optional<std::filesystem::path> output,
           std::optional<int> trials, std::optional<std::size_t> subsample, std::optional<std::uint64_t> seed,
           bool resume, bool emit) {
            auto cfg = campaign::load_config(config);
            if (output) cfg.output_dir = *output;
            if (trials) cfg.trials = *trials;
            if (subsample) cfg.subsample = *subsample;
            if (seed) cfg.seed = *seed;
            std::string text;
            {
                py::gil_scoped_release release;
                campaign::RunOptions opts;
                opts.resume = resume;
                const auto report = campaign::run_campaign(cfg, opts);
                if (emit) campaign::emit_all(report, cfg.output_dir);
                text = campaign::report_to_json(report);
            }
            return json_loads(text);
        },
        py::arg("config"), py::arg("output") = py::none(), py::arg("trials") = py::none(),
        py::arg("subsample") = py::none(), py::arg("seed") = py::none(), py::arg("resume") = true,
        py::arg("emit") = true, "Runs a campaign and returns the report as a dict.");

    m.def(
        "recovery",
        [](const std::string& original_json, const std::string& robust_json, const std::string& ov,
           const std::string& rv) {
            const auto a = campaign::report_from_json(original_json);
            const auto b = campaign::report_from_json(robust_json);
            return campaign::recovery_csv(campaign::recovery_metrics(a, b, ov, rv));
        },
        py::arg("original_report"), py::arg("robust_report"), py::arg("original_variant") = "",
        py::arg("robust_variant") = "", "Recovery table (CSV text) from two report.json documents.");
}
