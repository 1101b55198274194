#include "synforce/checkpoint.hpp"

#include "synforce/errors.hpp"
#include "synforce/telemetry_csv.hpp"

#include <json.hpp>

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace synforce {

using json = nlohmann::ordered_json;

namespace {

json vec_json(const Eigen::VectorXd& v)
{
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Eigen::VectorXd json_vec(const json& a)
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a.at(i).get<double>();
    return v;
}

json mat_json(const Eigen::MatrixXd& m)
{
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
    }
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", a}};
}

Eigen::MatrixXd json_mat(const json& j)
{
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const json& a = j.at("data");
    if (static_cast<Eigen::Index>(a.size()) != rows * cols) throw SchemaError("checkpoint matrix size mismatch");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = a.at(static_cast<std::size_t>(r * cols + c)).get<double>();
    }
    return m;
}

json loss_config_json(const LossConfig& c)
{
    json j = {{"omega_diff", c.omega_diff}, {"omega_vol", c.omega_vol},   {"lambda_stdp", c.lambda_stdp},
              {"a_plus", c.a_plus},         {"tau_plus", c.tau_plus},     {"max_lag", c.max_lag},
              {"sigma_force", c.sigma_force}, {"epsilon", c.epsilon},     {"knn_k", c.knn_k},
              {"sigma_v", c.sigma_v}};
    j["sigma_d"] = c.sigma_d ? json(*c.sigma_d) : json(nullptr);
    return j;
}

LossConfig json_loss_config(const json& j)
{
    LossConfig c;
    c.omega_diff = j.at("omega_diff").get<double>();
    c.omega_vol = j.at("omega_vol").get<double>();
    c.lambda_stdp = j.at("lambda_stdp").get<double>();
    c.a_plus = j.at("a_plus").get<double>();
    c.tau_plus = j.at("tau_plus").get<double>();
    c.max_lag = j.at("max_lag").get<std::size_t>();
    c.sigma_force = j.at("sigma_force").get<double>();
    c.epsilon = j.at("epsilon").get<double>();
    c.knn_k = j.at("knn_k").get<std::size_t>();
    c.sigma_v = j.at("sigma_v").get<double>();
    if (!j.at("sigma_d").is_null()) c.sigma_d = j.at("sigma_d").get<double>();
    return c;
}

json train_config_json(const TrainConfig& c)
{
    return {{"epochs", c.epochs},
            {"window", c.window},
            {"stride", c.stride},
            {"batch", c.batch},
            {"learning_rate", c.learning_rate},
            {"mode", std::string(to_string(c.mode))},
            {"seed", c.seed},
            {"global_dim", c.global_dim},
            {"local_dim", c.local_dim},
            {"lambda_w", c.lambda_w},
            {"knn_cap", c.knn_cap},
            {"divergence_limit", c.divergence_limit},
            {"loss", loss_config_json(c.loss)}};
}

TrainConfig json_train_config(const json& j)
{
    TrainConfig c;
    c.epochs = j.at("epochs").get<std::size_t>();
    c.window = j.at("window").get<std::size_t>();
    c.stride = j.at("stride").get<std::size_t>();
    c.batch = j.at("batch").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.mode = fit_mode_from_string(j.at("mode").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    c.global_dim = j.at("global_dim").get<std::size_t>();
    c.local_dim = j.at("local_dim").get<std::size_t>();
    c.lambda_w = j.at("lambda_w").get<double>();
    c.knn_cap = j.at("knn_cap").get<std::size_t>();
    c.divergence_limit = j.at("divergence_limit").get<double>();
    c.loss = json_loss_config(j.at("loss"));
    return c;
}

json pipeline_json(const PipelineModel& p)
{
    json groups = json::array();
    for (const GroupModel& g : p.groups) {
        groups.push_back({{"group", std::string(to_string(g.group))},
                          {"columns", g.columns},
                          {"threshold", g.threshold},
                          {"charge_onehot", g.charge_onehot},
                          {"location", g.location},
                          {"scale", g.scale},
                          {"weight", g.weight},
                          {"pca_mean", vec_json(g.pca_mean)},
                          {"components", mat_json(g.components)},
                          {"explained", g.explained},
                          {"retained", g.retained}});
    }
    return {{"cell_count", p.cell_count},
            {"probe_count", p.probe_count},
            {"denoise_window", p.denoise.window},
            {"denoise_nsigma", p.denoise.nsigma},
            {"cadence", p.cadence},
            {"charge_codes", p.charge_codes},
            {"groups", groups},
            {"warnings", p.warnings}};
}

PipelineModel json_pipeline(const json& j)
{
    PipelineModel p;
    p.cell_count = j.at("cell_count").get<std::size_t>();
    p.probe_count = j.at("probe_count").get<std::size_t>();
    p.denoise.window = j.at("denoise_window").get<std::size_t>();
    p.denoise.nsigma = j.at("denoise_nsigma").get<double>();
    p.cadence = j.at("cadence").get<double>();
    p.charge_codes = j.at("charge_codes").get<std::vector<int>>();
    for (const json& gj : j.at("groups")) {
        GroupModel g;
        g.group = feature_group_from_string(gj.at("group").get<std::string>());
        g.columns = gj.at("columns").get<std::vector<std::size_t>>();
        g.threshold = gj.at("threshold").get<double>();
        g.charge_onehot = gj.at("charge_onehot").get<bool>();
        g.location = gj.at("location").get<std::vector<double>>();
        g.scale = gj.at("scale").get<std::vector<double>>();
        g.weight = gj.at("weight").get<std::vector<double>>();
        g.pca_mean = json_vec(gj.at("pca_mean"));
        g.components = json_mat(gj.at("components"));
        g.explained = gj.at("explained").get<std::vector<double>>();
        g.retained = gj.at("retained").get<std::size_t>();
        if (g.components.rows() != static_cast<Eigen::Index>(g.width()) ||
            g.components.cols() != static_cast<Eigen::Index>(g.retained)) {
            throw SchemaError("checkpoint pipeline group '" + std::string(to_string(g.group)) + "' is inconsistent");
        }
        p.groups.push_back(std::move(g));
    }
    p.warnings = j.at("warnings").get<std::vector<std::string>>();
    return p;
}

json breakdown_json(const LossBreakdown& b)
{
    return {{"rec", b.rec}, {"svdd", b.svdd}, {"enc", b.enc},    {"diff", b.diff},
            {"vol", b.vol}, {"stdp", b.stdp}, {"total", b.total}};
}

LossBreakdown json_breakdown(const json& j)
{
    LossBreakdown b;
    b.rec = j.at("rec").get<double>();
    b.svdd = j.at("svdd").get<double>();
    b.enc = j.at("enc").get<double>();
    b.diff = j.at("diff").get<double>();
    b.vol = j.at("vol").get<double>();
    b.stdp = j.at("stdp").get<double>();
    b.total = j.at("total").get<double>();
    return b;
}

json uncertainty_json(const UncertaintyParams& u) { return {{"s_r", u.s_r}, {"s_s", u.s_s}, {"s_e", u.s_e}}; }

UncertaintyParams json_uncertainty(const json& j)
{
    return {j.at("s_r").get<double>(), j.at("s_s").get<double>(), j.at("s_e").get<double>()};
}

} // namespace

void save_checkpoint(std::ostream& out, const Checkpoint& ck)
{
    const ModelParams& p = ck.model.params;
    json weights = json::object();
    p.for_each_layer([&](const char* name, const Dense& layer) {
        json l = {{"out", layer.out()}, {"in", layer.in()}, {"has_bias", layer.has_bias}};
        json w = json::array();
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) w.push_back(layer.weight(r, c));
        }
        l["weight"] = std::move(w);
        l["bias"] = layer.has_bias ? vec_json(layer.bias) : json::array();
        weights[name] = std::move(l);
    });

    json history = json::array();
    for (const EpochRecord& e : ck.model.history) {
        history.push_back({{"epoch", e.epoch},
                           {"mean", breakdown_json(e.mean)},
                           {"weight_penalty", e.weight_penalty},
                           {"uncertainty", uncertainty_json(e.uncertainty)},
                           {"centre_before", vec_json(e.centre_before)},
                           {"epoch_mean", vec_json(e.epoch_mean)},
                           {"centre_after", vec_json(e.centre_after)}});
    }

    json run = json::object();
    for (const auto& [k, v] : ck.run_config) run[k] = v;

    json doc;
    doc["format"] = kCheckpointFormat;
    doc["dims"] = {{"input", p.input_dim}, {"global", p.global_dim}, {"local", p.local_dim}};
    doc["config"] = train_config_json(ck.config);
    doc["run_config"] = std::move(run);
    doc["weights"] = std::move(weights);
    doc["uncertainty"] = uncertainty_json(ck.model.uncertainty);
    doc["centre"] = vec_json(ck.model.centre);
    doc["centre_init"] = vec_json(ck.model.centre_init);
    doc["pipeline"] = pipeline_json(ck.pipeline);
    if (ck.alarm) {
        doc["alarm"] = {{"quantiles", ck.alarm->quantiles},
                        {"thresholds", ck.alarm->thresholds},
                        {"prob_scale", ck.alarm->prob_scale},
                        {"degenerate", ck.alarm->degenerate}};
    } else {
        doc["alarm"] = nullptr;
    }
    doc["history"] = std::move(history);
    out << doc.dump(1) << '\n';
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write checkpoint '" + path + "'");
    save_checkpoint(out, checkpoint);
    if (!out) throw InputError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(std::istream& in)
{
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    try {
        if (doc.value("format", std::string()) != kCheckpointFormat) {
            throw SchemaError("checkpoint format is not " + std::string(kCheckpointFormat));
        }
        Checkpoint ck;
        ck.config = json_train_config(doc.at("config"));
        for (const auto& [k, v] : doc.at("run_config").items()) ck.run_config.emplace_back(k, v.get<std::string>());

        const json& dims = doc.at("dims");
        ModelParams& p = ck.model.params;
        p = init_model(0, dims.at("input").get<std::size_t>(), dims.at("global").get<std::size_t>(),
                       dims.at("local").get<std::size_t>());
        const json& weights = doc.at("weights");
        p.for_each_layer([&](const char* name, Dense& layer) {
            const json& l = weights.at(name);
            if (l.at("out").get<Eigen::Index>() != layer.out() || l.at("in").get<Eigen::Index>() != layer.in() ||
                l.at("has_bias").get<bool>() != layer.has_bias) {
                throw SchemaError(std::string("checkpoint layer '") + name + "' has unexpected shape");
            }
            const json& w = l.at("weight");
            if (static_cast<Eigen::Index>(w.size()) != layer.out() * layer.in()) {
                throw SchemaError(std::string("checkpoint layer '") + name + "' weight size mismatch");
            }
            for (Eigen::Index r = 0; r < layer.out(); ++r) {
                for (Eigen::Index c = 0; c < layer.in(); ++c) {
                    layer.weight(r, c) = w.at(static_cast<std::size_t>(r * layer.in() + c)).get<double>();
                }
            }
            if (layer.has_bias) {
                layer.bias = json_vec(l.at("bias"));
                if (layer.bias.size() != layer.out()) {
                    throw SchemaError(std::string("checkpoint layer '") + name + "' bias size mismatch");
                }
            }
        });
        ck.model.uncertainty = json_uncertainty(doc.at("uncertainty"));
        ck.model.centre = json_vec(doc.at("centre"));
        ck.model.centre_init = json_vec(doc.at("centre_init"));
        if (ck.model.centre.size() != static_cast<Eigen::Index>(p.global_dim)) {
            throw SchemaError("checkpoint centre dimension mismatch");
        }
        ck.pipeline = json_pipeline(doc.at("pipeline"));
        if (!doc.at("alarm").is_null()) {
            const json& a = doc.at("alarm");
            AlarmConfig alarm;
            alarm.quantiles = a.at("quantiles").get<std::array<double, 3>>();
            alarm.thresholds = a.at("thresholds").get<std::array<double, 3>>();
            alarm.prob_scale = a.at("prob_scale").get<double>();
            alarm.degenerate = a.at("degenerate").get<bool>();
            ck.alarm = alarm;
        }
        for (const json& e : doc.at("history")) {
            EpochRecord r;
            r.epoch = e.at("epoch").get<std::size_t>();
            r.mean = json_breakdown(e.at("mean"));
            r.weight_penalty = e.at("weight_penalty").get<double>();
            r.uncertainty = json_uncertainty(e.at("uncertainty"));
            r.centre_before = json_vec(e.at("centre_before"));
            r.epoch_mean = json_vec(e.at("epoch_mean"));
            r.centre_after = json_vec(e.at("centre_after"));
            ck.model.history.push_back(std::move(r));
        }
        return ck;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("checkpoint is malformed: ") + e.what());
    } catch (const ConfigError& e) {
        throw SchemaError(std::string("checkpoint is malformed: ") + e.what());
    }
}

Checkpoint load_checkpoint(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open checkpoint '" + path + "'");
    return load_checkpoint(in);
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history, FitMode mode,
                       const std::vector<std::string>& comments)
{
    for (const auto& c : comments) out << "# " << c << '\n';
    const Eigen::Index dim = history.empty() ? 0 : history.front().centre_after.size();
    if (mode == FitMode::synforce) {
        out << "epoch,l_rec,l_svdd,l_enc,l_diff,l_vol,l_stdp,total,s_r,s_s,s_e";
    } else {
        out << "epoch,l_svdd,l_weight,total";
    }
    for (const char* prefix : {"c_prev_", "c_mean_", "c_new_"}) {
        for (Eigen::Index k = 0; k < dim; ++k) out << ',' << prefix << k + 1;
    }
    out << '\n';
    auto num = [](double v) { return format_number(v, 17); };
    for (const EpochRecord& e : history) {
        out << e.epoch;
        if (mode == FitMode::synforce) {
            for (double v : {e.mean.rec, e.mean.svdd, e.mean.enc, e.mean.diff, e.mean.vol, e.mean.stdp, e.mean.total,
                             e.uncertainty.s_r, e.uncertainty.s_s, e.uncertainty.s_e}) {
                out << ',' << num(v);
            }
        } else {
            out << ',' << num(e.mean.svdd) << ',' << num(e.weight_penalty) << ',' << num(e.mean.total);
        }
        for (const Eigen::VectorXd* v : {&e.centre_before, &e.epoch_mean, &e.centre_after}) {
            for (Eigen::Index k = 0; k < v->size(); ++k) out << ',' << num((*v)(k));
        }
        out << '\n';
    }
}

std::vector<EpochRecord> read_history_csv(std::istream& in, FitMode* mode)
{
    std::string line;
    std::vector<std::string> header;
    std::vector<EpochRecord> out;
    auto split = [](const std::string& s) {
        std::vector<std::string> cols;
        std::string cell;
        std::istringstream ss(s);
        while (std::getline(ss, cell, ',')) cols.push_back(cell);
        return cols;
    };
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (header.empty()) {
            header = split(line);
            if (header.empty() || header[0] != "epoch") throw SchemaError("history CSV must start with 'epoch'");
            continue;
        }
        const auto cols = split(line);
        if (cols.size() != header.size()) throw SchemaError("history CSV row width differs from header");
        std::map<std::string, double> v;
        for (std::size_t i = 0; i < cols.size(); ++i) v[header[i]] = std::stod(cols[i]);
        EpochRecord r;
        r.epoch = static_cast<std::size_t>(v["epoch"]);
        r.mean.svdd = v["l_svdd"];
        r.mean.total = v["total"];
        r.mean.rec = v.count("l_rec") ? v["l_rec"] : 0.0;
        r.mean.enc = v.count("l_enc") ? v["l_enc"] : 0.0;
        r.mean.diff = v.count("l_diff") ? v["l_diff"] : 0.0;
        r.mean.vol = v.count("l_vol") ? v["l_vol"] : 0.0;
        r.mean.stdp = v.count("l_stdp") ? v["l_stdp"] : 0.0;
        r.weight_penalty = v.count("l_weight") ? v["l_weight"] : 0.0;
        r.uncertainty = {v.count("s_r") ? v["s_r"] : 0.0, v.count("s_s") ? v["s_s"] : 0.0,
                         v.count("s_e") ? v["s_e"] : 0.0};
        std::size_t dim = 0;
        while (v.count("c_new_" + std::to_string(dim + 1))) ++dim;
        r.centre_before.resize(static_cast<Eigen::Index>(dim));
        r.epoch_mean.resize(static_cast<Eigen::Index>(dim));
        r.centre_after.resize(static_cast<Eigen::Index>(dim));
        for (std::size_t k = 0; k < dim; ++k) {
            const std::string s = std::to_string(k + 1);
            r.centre_before(static_cast<Eigen::Index>(k)) = v["c_prev_" + s];
            r.epoch_mean(static_cast<Eigen::Index>(k)) = v["c_mean_" + s];
            r.centre_after(static_cast<Eigen::Index>(k)) = v["c_new_" + s];
        }
        out.push_back(std::move(r));
    }
    if (header.empty()) throw SchemaError("history CSV has no header row");
    if (mode) *mode = std::find(header.begin(), header.end(), "l_rec") != header.end() ? FitMode::synforce : FitMode::dsvdd;
    return out;
}

} // namespace synforce
