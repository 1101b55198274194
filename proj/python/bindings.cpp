#include "synforce/checkpoint.hpp"
#include "synforce/cli.hpp"
#include "synforce/errors.hpp"
#include "synforce/evalscore.hpp"
#include "synforce/fieldsim.hpp"
#include "synforce/losses.hpp"
#include "synforce/synthdata.hpp"
#include "synforce/telemetry_csv.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

namespace py = pybind11;
using namespace synforce;

namespace {

py::dict report_dict(const EvalReport& r)
{
    py::dict d;
    d["threshold"] = r.threshold;
    d["tpr"] = r.tpr;
    d["ppv"] = r.ppv;
    d["f1"] = r.f1;
    d["tp"] = r.confusion.tp;
    d["fp"] = r.confusion.fp;
    d["tn"] = r.confusion.tn;
    d["fn"] = r.confusion.fn;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "synforce core bindings";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);

    m.def("loss_rec", [](const Eigen::MatrixXd& x_hat, const Eigen::MatrixXd& x) { return loss_rec(x_hat, x).value; });
    m.def("loss_svdd", [](const Eigen::MatrixXd& z, const Eigen::VectorXd& c) { return loss_svdd(z, c).value; });
    m.def("loss_enc", [](const Eigen::MatrixXd& z_hat, const Eigen::MatrixXd& z) { return loss_enc(z_hat, z).value; });
    m.def(
        "loss_diff",
        [](const Eigen::MatrixXd& z, std::size_t k, std::optional<double> sigma_d) {
            return loss_diff(build_knn_graph(z, k, sigma_d));
        },
        py::arg("latents"), py::arg("k") = 5, py::arg("sigma_d") = py::none(),
        "sigma_d=None uses the median neighbour distance");
    m.def(
        "loss_vol", [](const Eigen::MatrixXd& z, const Eigen::VectorXd& c, double sigma_v) { return loss_vol(z, c, sigma_v).value; },
        py::arg("latents"), py::arg("centre"), py::arg("sigma_v") = 1.0);
    m.def(
        "loss_stdp",
        [](const Eigen::MatrixXd& z_local, std::size_t window) {
            const LossConfig cfg;
            return loss_stdp(stdp_force_field(z_local, window, cfg), cfg.epsilon);
        },
        py::arg("z_local"), py::arg("window"));
    m.def("hypersphere_log_volume", [](std::size_t p, double r) { return hypersphere_log_volume(p, r); });

    m.def("roc_auc", [](const std::vector<double>& s, const std::vector<int>& y) { return roc_auc(s, y); });
    m.def("pr_best_f1", [](const std::vector<double>& s, const std::vector<int>& y) { return report_dict(pr_best_f1(s, y)); });
    m.def(
        "balanced_eval_set", [](const std::vector<int>& y, std::uint64_t seed) { return balanced_eval_set(y, seed); },
        py::arg("labels"), py::arg("seed"));

    m.def("stdp_window", &stdp_window, py::arg("dt"), py::arg("a_plus") = 1.0, py::arg("a_minus") = 1.0,
          py::arg("tau_plus") = 5.0, py::arg("tau_minus") = 5.0);

    m.def(
        "synth_csv",
        [](std::size_t vehicles, std::size_t frames, std::uint64_t seed) {
            FleetConfig c;
            c.vehicles = vehicles;
            c.frames = frames;
            c.seed = seed;
            std::ostringstream out;
            write_telemetry_csv(out, concat_fleet(generate_fleet(c)));
            return out.str();
        },
        py::arg("vehicles") = 1, py::arg("frames") = 1000, py::arg("seed") = 0,
        "Fault-free synthetic telemetry as CSV text");

    m.def(
        "score_csv",
        [](const std::string& checkpoint_path, const std::string& telemetry_path) {
            const Checkpoint ckpt = load_checkpoint(checkpoint_path);
            const TelemetryTable table = read_telemetry_csv(telemetry_path);
            return score_frames(ckpt, table.frames).scores;
        },
        py::arg("checkpoint"), py::arg("telemetry"));

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = run_cli(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the synforce tool in-process; returns (exit_code, stdout, stderr)");
}
