#include "synforce/cli.hpp"

#include "synforce/errors.hpp"
#include "synforce/rng.hpp"
#include "synforce/synthdata.hpp"
#include "synforce/telemetry_csv.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace synforce {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CflError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SingleClass : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Artifacts are assembled in memory and written in one go so a failed command
// never leaves a half-written file behind.
void write_file(const std::string& path, const std::string& contents)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << contents;
    out.flush();
    if (!out) throw IoError("write to '" + path + "' failed");
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> comment_lines(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] != '#') break;
        std::size_t b = 1;
        while (b < line.size() && line[b] == ' ') ++b;
        out.push_back(line.substr(b));
    }
    return out;
}

std::string sibling_path(const std::string& path, const std::string& suffix)
{
    const auto slash = path.find_last_of('/');
    const auto dot = path.find_last_of('.');
    const std::string stem = (dot != std::string::npos && (slash == std::string::npos || dot > slash))
                                 ? path.substr(0, dot)
                                 : path;
    return stem + suffix;
}

std::vector<std::string> echo(const RunConfig& cfg, const std::string& command)
{
    std::vector<std::string> lines{"command=" + command};
    const auto rest = cfg.echo_lines();
    lines.insert(lines.end(), rest.begin(), rest.end());
    return lines;
}

std::string num(double v) { return format_number(v, 17); }

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
};

RunConfig load_common(const Common& c)
{
    RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
}

// ---------------------------------------------------------------- synth

int cmd_synth(const Common& c, std::ostream& out)
{
    RunConfig cfg = load_common(c);
    FleetConfig fleet = cfg.fleet;
    fleet.seed = cfg.seed;
    const auto frames = concat_fleet(generate_fleet(fleet));
    std::size_t anomalies = 0;
    for (const auto& f : frames) anomalies += f.label != 0 ? 1 : 0;
    std::ostringstream csv;
    write_telemetry_csv(csv, frames, echo(cfg, "synth"));
    write_file(c.out, csv.str());
    out << "rows=" << frames.size() << " anomalies=" << anomalies << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- fit

int cmd_fit(const Common& c, const std::string& data, const std::string& mode, std::string history_path,
            std::ostream& out, std::ostream& err)
{
    RunConfig cfg = load_common(c);
    if (!mode.empty()) cfg.train.mode = fit_mode_from_string(mode);
    TelemetryTable table = read_telemetry_csv(data);
    if (table.dropped_nan > 0) err << "warning: dropped " << table.dropped_nan << " rows with missing values\n";
    if (history_path.empty()) history_path = sibling_path(c.out, "_history.csv");

    std::vector<std::string> warnings;
    Checkpoint ckpt;
    int code = kExitOk;
    try {
        ckpt = train_checkpoint(table.frames, cfg, {}, &warnings);
    } catch (const CheckpointDiverged& e) {
        err << "error: " << e.what() << "; writing the last completed epoch\n";
        ckpt = e.partial;
        code = kExitNoNormal;
    }
    for (const auto& w : warnings) err << "warning: " << w << '\n';

    std::ostringstream ck;
    save_checkpoint(ck, ckpt);
    std::ostringstream hist;
    write_history_csv(hist, ckpt.model.history, cfg.train.mode, echo(cfg, "fit"));
    write_file(c.out, ck.str());
    write_file(history_path, hist.str());
    if (code == kExitOk) {
        const auto& last = ckpt.model.history.back();
        out << "epochs=" << ckpt.model.history.size() << " total=" << num(last.mean.total) << '\n';
    }
    return code;
}

// ---------------------------------------------------------------- score

int cmd_score(const std::string& checkpoint_path, const std::string& data, const std::string& out_path,
              bool emit_latents, std::ostream& out)
{
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const TelemetryTable table = read_telemetry_csv(data);
    const ScoreSeries series = score_frames(ckpt, table.frames, emit_latents);
    std::vector<std::string> comments{"command=score"};
    for (const auto& [k, v] : ckpt.run_config) comments.push_back(k + "=" + v);
    std::ostringstream csv;
    write_scores_csv(csv, series, comments);
    write_file(out_path, csv.str());
    if (emit_latents) {
        std::ostringstream lat;
        write_latents_csv(lat, series, comments);
        write_file(sibling_path(out_path, "_latents.csv"), lat.str());
    }
    std::size_t above = 0;
    for (int level : series.alarm_levels) above += level > 0 ? 1 : 0;
    out << "frames=" << series.size() << " alarms=" << above << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const Common& c, const std::string& scores_path, std::ostream& out)
{
    RunConfig cfg = load_common(c);
    const std::string text = read_file(scores_path);
    std::istringstream in(text);
    const ScoreSeries series = read_scores_csv(in);
    std::size_t pos = 0;
    for (int l : series.labels) pos += l != 0 ? 1 : 0;
    if (pos == 0 || pos == series.labels.size()) {
        throw SingleClass("scores contain a single class (" + std::to_string(pos) + " anomalous of " +
                          std::to_string(series.labels.size()) + ")");
    }
    std::vector<std::string> warnings;
    const auto idx = balanced_eval_set(series.labels, derive_seed(cfg.seed, "balanced-sample"), &warnings);
    std::vector<double> s;
    std::vector<int> y;
    s.reserve(idx.size());
    y.reserve(idx.size());
    for (std::size_t i : idx) {
        s.push_back(series.scores[i]);
        y.push_back(series.labels[i]);
    }
    EvalReport r = pr_best_f1(s, y);
    r.auc = roc_auc(s, y);

    nlohmann::ordered_json j;
    j["format"] = "synforce-eval/1";
    nlohmann::ordered_json rc = nlohmann::ordered_json::object();
    for (const auto& [k, v] : cfg.resolved()) rc[k] = v;
    j["run_config"] = rc;
    j["source_config"] = comment_lines(text);
    j["frames"] = series.size();
    j["balanced"] = {{"strategy", cfg.eval_balanced}, {"size", idx.size()}, {"positives", r.positives},
                     {"negatives", r.negatives}};
    j["threshold"] = r.threshold;
    j["tpr"] = r.tpr;
    j["ppv"] = r.ppv;
    j["f1"] = r.f1;
    j["auc"] = r.auc;
    j["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}};
    j["heuristics"] = {
        {"alarm_thresholds", "empirical quantiles of normal training scores"},
        {"fault_probability", "gated logistic above the first alarm threshold"},
    };
    j["warnings"] = warnings;
    nlohmann::ordered_json curve = nlohmann::ordered_json::array();
    for (const auto& p : r.pr_curve) {
        curve.push_back({{"threshold", p.threshold}, {"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}});
    }
    j["pr_curve"] = curve;
    write_file(c.out, j.dump(2) + "\n");
    out << "threshold=" << num(r.threshold) << " f1=" << num(r.f1) << " auc=" << num(r.auc) << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- fieldsim

int cmd_fieldsim(const Common& c, std::optional<std::size_t> steps_flag, std::ostream& out)
{
    RunConfig cfg = load_common(c);
    const FieldConfig& field = cfg.field;
    FieldRunConfig run = cfg.field_run;
    if (steps_flag) run.steps = *steps_flag;
    if (field.n >= 3 && field.radius > 0.0 && field.diffusion > 0.0) {
        const double h = field.spacing();
        const double bound = h * h / (4.0 * field.diffusion);
        if (field.dt > bound) {
            throw CflError("dt " + num(field.dt) + " exceeds the diffusion stability bound h^2/(4D) = " + num(bound));
        }
    }
    validate_field_config(field);
    if (run.snapshot_every == 0 || run.snapshot_stride == 0) {
        throw ConfigError("field.snapshot_every and field.snapshot_stride must be >= 1");
    }

    DensityGrid grid = make_grid(field);
    init_density(grid, field, run);
    std::vector<Particle> particles = init_particles(field, run, cfg.seed);

    const auto header = echo(cfg, "fieldsim");
    std::ostringstream density, tracks, diag;
    for (auto* s : {&density, &tracks, &diag}) {
        for (const auto& line : header) *s << "# " << line << '\n';
    }
    density << "step,i,j,rho\n";
    tracks << "step,k,x,y\n";
    diag << "step,mass,mean_radius,clamps\n";

    auto snapshot = [&](std::size_t step) {
        for (std::size_t i = 0; i < grid.n; i += run.snapshot_stride) {
            for (std::size_t j = 0; j < grid.n; j += run.snapshot_stride) {
                if (!grid.inside(i, j)) continue;
                density << step << ',' << i << ',' << j << ',' << num(grid.rho[grid.index(i, j)]) << '\n';
            }
        }
        for (std::size_t k = 0; k < particles.size(); ++k) {
            tracks << step << ',' << k << ',' << num(particles[k].r.x()) << ',' << num(particles[k].r.y()) << '\n';
        }
    };
    auto diagnostics = [&](std::size_t step, std::size_t clamps) {
        diag << step << ',' << num(total_mass(grid)) << ',' << num(mean_radius(grid, field.centre)) << ',' << clamps
             << '\n';
    };

    snapshot(0);
    diagnostics(0, 0);
    std::size_t frozen = 0;
    std::size_t clamps_total = 0;
    for (std::size_t step = 1; step <= run.steps; ++step) {
        if (!particles.empty()) frozen += particle_step(particles, grid, field, field.dt);
        const std::size_t clamps = step_density(grid, field);
        clamps_total += clamps;
        diagnostics(step, clamps);
        if (step % run.snapshot_every == 0 || step == run.steps) snapshot(step);
    }

    const std::string prefix = c.out;
    write_file(prefix + "_density.csv", density.str());
    write_file(prefix + "_particles.csv", tracks.str());
    write_file(prefix + "_diagnostics.csv", diag.str());
    if (run.poisson) {
        const PoissonResult p = solve_poisson(grid, particles, field);
        std::ostringstream pot;
        for (const auto& line : header) pot << "# " << line << '\n';
        pot << "# poisson_sweeps=" << p.sweeps << '\n';
        pot << "# poisson_residual=" << num(p.residual) << '\n';
        pot << "# poisson_converged=" << (p.converged ? "true" : "false") << '\n';
        pot << "i,j,phi\n";
        for (std::size_t i = 0; i < grid.n; ++i) {
            for (std::size_t j = 0; j < grid.n; ++j) {
                if (!grid.inside(i, j)) continue;
                pot << i << ',' << j << ',' << num(p.potential[grid.index(i, j)]) << '\n';
            }
        }
        write_file(prefix + "_potential.csv", pot.str());
    }
    out << "steps=" << run.steps << " mass=" << num(total_mass(grid)) << " clamps=" << clamps_total
        << " frozen=" << frozen << '\n';
    return kExitOk;
}

} // namespace

Checkpoint train_checkpoint(const std::vector<RawFrame>& frames, const RunConfig& cfg, const EpochCallback& on_epoch,
                            std::vector<std::string>* warnings)
{
    if (frames.empty()) throw NoNormalWindows("no frames to train on");
    const std::size_t cells = frames.front().cell_volts.size();
    const std::size_t probes = frames.front().probe_temps.size();
    Checkpoint ckpt;
    const auto specs = default_group_specs(cells, probes, cfg.pca_threshold);
    std::size_t normal = 0;
    for (const auto& f : frames) normal += f.label == 0 ? 1 : 0;
    if (normal < 2) throw NoNormalWindows("fewer than 2 normal frames");
    ckpt.pipeline = fit_pipeline(frames, specs, cfg.denoise, cfg.cadence);
    if (warnings) warnings->insert(warnings->end(), ckpt.pipeline.warnings.begin(), ckpt.pipeline.warnings.end());
    const FeatureMatrix features = apply_pipeline(ckpt.pipeline, frames);

    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    const WindowBatch windows =
        build_windows(features.values, features.labels, tc.window, tc.stride, true, features.segments);
    if (windows.empty()) {
        throw NoNormalWindows("no anomaly-free window of length " + std::to_string(tc.window) + " in the data");
    }
    ckpt.config = tc;
    ckpt.run_config = cfg.resolved();
    try {
        ckpt.model = fit(windows, tc, on_epoch);
    } catch (const TrainingDiverged& e) {
        if (!e.last_good()) throw;
        ckpt.model = *e.last_good();
        throw CheckpointDiverged(e.what(), std::move(ckpt));
    }

    const std::vector<double> scores = anomaly_scores(ckpt.model.params, ckpt.model.centre, features.values);
    std::vector<double> normal_scores;
    normal_scores.reserve(normal);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (features.labels[i] == 0) normal_scores.push_back(scores[i]);
    }
    if (normal_scores.size() >= 100) {
        ckpt.alarm = alarm_levels(normal_scores, cfg.alarm_quantiles);
        if (ckpt.alarm->degenerate && warnings) warnings->push_back("alarm thresholds are not strictly increasing");
    } else if (warnings) {
        warnings->push_back("fewer than 100 normal frames; alarm levels disabled");
    }
    return ckpt;
}

void init_density(DensityGrid& grid, const FieldConfig& field, const FieldRunConfig& run)
{
    std::fill(grid.rho.begin(), grid.rho.end(), 0.0);
    if (run.init == FieldInit::none) return;
    if (!(run.init_mass > 0.0)) throw ConfigError("field.init_mass must be positive");
    if (run.init == FieldInit::point) {
        const auto [i, j] = nearest_node(grid, field.centre);
        grid.rho[grid.index(i, j)] = run.init_mass / (grid.h * grid.h);
        return;
    }
    if ((run.init == FieldInit::ring || run.init == FieldInit::gaussian) && !(run.init_width > 0.0)) {
        throw ConfigError("field.init_width must be positive");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < grid.n; ++i) {
        for (std::size_t j = 0; j < grid.n; ++j) {
            if (!grid.inside(i, j)) continue;
            const double r = (grid.position(i, j) - field.centre).norm();
            double v = 1.0;
            if (run.init == FieldInit::ring) {
                const double d = r - run.init_radius;
                v = std::exp(-d * d / (2.0 * run.init_width * run.init_width));
            } else if (run.init == FieldInit::gaussian) {
                v = std::exp(-r * r / (2.0 * run.init_width * run.init_width));
            }
            grid.rho[grid.index(i, j)] = v;
            sum += v;
        }
    }
    if (!(sum > 0.0)) throw ConfigError("initial density is zero on the grid");
    const double scale = run.init_mass / (sum * grid.h * grid.h);
    for (double& v : grid.rho) v *= scale;
}

std::vector<Particle> init_particles(const FieldConfig& field, const FieldRunConfig& run, std::uint64_t seed)
{
    if (run.particles == 0) return {};
    if (!(run.particle_radius > 0.0)) throw ConfigError("field.particle_radius must be positive");
    if (!(run.spike_span >= 0.0)) throw ConfigError("field.spike_span must be >= 0");
    Rng rng(derive_seed(seed, "fieldsim"));
    std::vector<Particle> out(run.particles);
    for (auto& p : out) {
        const double rad = run.particle_radius * std::sqrt(rng.uniform());
        const double ang = 2.0 * kPi * rng.uniform();
        p.r = field.centre + rad * Eigen::Vector2d(std::cos(ang), std::sin(ang));
        p.charge = run.particle_charge;
        p.spike_time = rng.uniform(0.0, run.spike_span);
    }
    return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"battery telemetry anomaly detection", "synforce"};
    app.require_subcommand(1);

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "key=value configuration file")->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "seed (overrides the config)");
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic fleet CSV");
    add_common(synth);
    synth->add_option("--out", common.out, "output telemetry CSV")->required();

    std::string data, mode, history;
    auto* fitc = app.add_subcommand("fit", "fit the pipeline and train a model");
    add_common(fitc);
    fitc->add_option("--data", data, "telemetry CSV")->required()->check(CLI::ExistingFile);
    fitc->add_option("--mode", mode, "synforce or dsvdd (overrides train.mode)");
    fitc->add_option("--out", common.out, "checkpoint JSON")->required();
    fitc->add_option("--history", history, "loss history CSV (default <out>_history.csv)");

    std::string checkpoint;
    bool latents = false;
    auto* score = app.add_subcommand("score", "score frames with a checkpoint");
    score->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required()->check(CLI::ExistingFile);
    score->add_option("--data", data, "telemetry CSV")->required()->check(CLI::ExistingFile);
    score->add_option("--out", common.out, "scores CSV")->required();
    score->add_flag("--emit-latents", latents, "also write <out>_latents.csv");

    std::string scores;
    auto* eval = app.add_subcommand("eval", "balanced evaluation of a labelled scores CSV");
    add_common(eval);
    eval->add_option("--scores", scores, "scores CSV")->required()->check(CLI::ExistingFile);
    eval->add_option("--out", common.out, "report JSON")->required();

    std::optional<std::size_t> steps;
    auto* fs = app.add_subcommand("fieldsim", "run the continuum density model");
    add_common(fs);
    fs->add_option("--steps", steps, "number of steps (overrides field.steps)");
    fs->add_option("--out", common.out, "output prefix")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth->parsed()) return cmd_synth(common, out);
        if (fitc->parsed()) return cmd_fit(common, data, mode, history, out, err);
        if (score->parsed()) return cmd_score(checkpoint, data, common.out, latents, out);
        if (eval->parsed()) return cmd_eval(common, scores, out);
        if (fs->parsed()) return cmd_fieldsim(common, steps, out);
    } catch (const NoNormalWindows& e) {
        err << "error: " << e.what() << '\n';
        return kExitNoNormal;
    } catch (const TrainingDiverged& e) {
        err << "error: " << e.what() << '\n';
        return kExitNoNormal;
    } catch (const SchemaError& e) {
        err << "error: " << e.what() << '\n';
        return kExitSchema;
    } catch (const SingleClass& e) {
        err << "error: " << e.what() << '\n';
        return kExitSingleClass;
    } catch (const CflError& e) {
        err << "error: " << e.what() << '\n';
        return kExitCfl;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

int run_cli(int argc, const char* const* argv)
{
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, std::cout, std::cerr);
}

} // namespace synforce
