// Python bindings for the main operations: bubbles, geometry, Green kernels,
// the reduced model, and the config-driven runner.
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "concentra/cli.hpp"
#include "concentra/green.hpp"
#include "concentra/reduced.hpp"

namespace py = pybind11;
using namespace concentra;

namespace {

Vec3 to_vec3(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }

}  // namespace

PYBIND11_MODULE(_concentra, m) {
    m.doc() = "boundary-concentration laboratory for -div(a grad u) = a |u|^{p-eps} u";

    m.def("alpha_n", &bubble::alpha_n, py::arg("n"));
    m.def("critical_p", &bubble::critical_p, py::arg("n"));
    m.def(
        "bubble_value",
        [](double delta, std::vector<double> xi, std::vector<double> x) {
            bubble::BubbleParams b(delta, std::move(xi), int(x.size()));
            return bubble::value(b, x);
        },
        py::arg("delta"), py::arg("xi"), py::arg("x"));
    m.def(
        "bubble_derivative",
        [](double delta, std::vector<double> xi, std::vector<double> x, int j) {
            bubble::BubbleParams b(delta, std::move(xi), int(x.size()));
            return bubble::derivative(b, x, j);
        },
        py::arg("delta"), py::arg("xi"), py::arg("x"), py::arg("j"));

    m.def("critical_exponent", &geom::critical_exponent, py::arg("N"), py::arg("k"));
    m.def(
        "collar_data",
        [](const std::array<double, 3>& center, double radius, const std::array<double, 3>& x) {
            const auto dom = geom::DomainModel::ball(to_vec3(center), radius);
            const auto c = dom.collar_data(to_vec3(x));
            return py::make_tuple(c.d_x, c.p_x, c.nu, c.x_bar);
        },
        py::arg("center"), py::arg("radius"), py::arg("x"),
        "collar data (d, p, nu, xbar) of a ball domain");

    m.def(
        "regular_part_ball",
        [](std::vector<double> x, std::vector<double> y) {
            return green::regular_part_ball(x, y, int(x.size()));
        },
        py::arg("x"), py::arg("y"));
    m.def(
        "regular_part_halfspace",
        [](std::vector<double> x, std::vector<double> y) {
            return green::regular_part_halfspace(x, y, int(x.size()));
        },
        py::arg("x"), py::arg("y"));

    py::class_<reduced::GammaConstants>(m, "GammaConstants")
        .def_readonly("gamma1", &reduced::GammaConstants::gamma1)
        .def_readonly("gamma2", &reduced::GammaConstants::gamma2)
        .def_readonly("gamma3", &reduced::GammaConstants::gamma3);
    py::class_<reduced::ReducedModel>(m, "ReducedModel")
        .def_readonly("c1", &reduced::ReducedModel::c1)
        .def_readonly("c2", &reduced::ReducedModel::c2)
        .def_readonly("c3", &reduced::ReducedModel::c3)
        .def_readonly("c4", &reduced::ReducedModel::c4)
        .def_readonly("c5", &reduced::ReducedModel::c5)
        .def_readonly("c6", &reduced::ReducedModel::c6)
        .def_readonly("provenance", &reduced::ReducedModel::provenance);
    m.def("gamma_constants", &reduced::gamma_constants, py::arg("n"));
    m.def("assemble_coefficients", &reduced::assemble_coefficients, py::arg("gammas"));
    m.def(
        "psi_tower",
        [](const reduced::ReducedModel& model, double a, double g, std::vector<double> d,
           std::vector<double> t) {
            return reduced::psi_tower(model, {a, g}, d, t);
        },
        py::arg("model"), py::arg("a"), py::arg("g"), py::arg("d"), py::arg("t"));
    m.def(
        "expansion_separated",
        [](const reduced::ReducedModel& model, std::vector<std::pair<double, double>> anchors,
           std::vector<double> d, std::vector<double> t, double eps) {
            std::vector<reduced::AnchorData> a;
            for (auto [av, gv] : anchors) a.push_back({av, gv});
            return reduced::expansion_separated(model, a, d, t, eps);
        },
        py::arg("model"), py::arg("anchors"), py::arg("d"), py::arg("t"), py::arg("eps"));
    m.def(
        "single_peak_optimum",
        [](const reduced::ReducedModel& model, double a, double g) {
            const auto cf = reduced::single_peak_closed_form(model, {a, g});
            return py::make_tuple(cf.d_star, cf.t_star);
        },
        py::arg("model"), py::arg("a"), py::arg("g"));
    m.def(
        "minimize_tower",
        [](const reduced::ReducedModel& model, double a, double g) {
            const auto res = reduced::minimize_model(model, ansatz::Mode::Tower, {{a, g}, {a, g}});
            return py::make_tuple(res.d, res.t, res.value);
        },
        py::arg("model"), py::arg("a"), py::arg("g"));

    m.def(
        "run_scenario",
        [](const std::string& config_json, const std::string& out_dir) {
            auto cfg = cli::ExperimentConfig::parse_string(config_json, "<python>");
            const auto man = cli::run(cfg, out_dir);
            return man.to_json().dump();
        },
        py::arg("config_json"), py::arg("out_dir"),
        "run an experiment scenario; returns the manifest as a JSON string");
}
