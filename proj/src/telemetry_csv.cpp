#include "synforce/telemetry_csv.hpp"

#include "synforce/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace synforce {

namespace {

const std::vector<std::string>& required_columns()
{
    static const std::vector<std::string> cols = {
        "time",           "charge_status", "speed",         "mileage",       "total_volt",
        "total_current",  "soc",           "insulation_res", "max_cell_volt", "min_cell_volt",
        "max_temp",       "min_temp",      "label"};
    return cols;
}

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s)
{
    if (s.empty()) return std::nan("");
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        return v;
    } catch (const std::exception&) {
        return std::nan("");
    }
}

} // namespace

std::string format_number(double value, int significant_digits)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", significant_digits, value);
    return buf;
}

std::string format_time(double t)
{
    if (std::isfinite(t) && std::floor(t) == t && std::abs(t) < 9.0e15) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(t));
        return buf;
    }
    return format_number(t, 17);
}

TelemetryTable read_telemetry_csv(std::istream& in)
{
    TelemetryTable table;
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            table.comments.push_back(line.size() > 1 && line[1] == ' ' ? line.substr(2) : line.substr(1));
            continue;
        }
        header = split(line);
        break;
    }
    if (header.empty()) throw SchemaError("telemetry CSV has no header row");

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < header.size(); ++i) index[header[i]] = i;
    std::vector<std::size_t> req;
    for (const auto& name : required_columns()) {
        auto it = index.find(name);
        if (it == index.end()) throw SchemaError("telemetry CSV missing column '" + name + "'");
        req.push_back(it->second);
    }
    std::vector<std::size_t> cells;
    std::vector<std::size_t> probes;
    for (;;) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "cell_volt_%03zu", cells.size() + 1);
        auto it = index.find(buf);
        if (it == index.end()) break;
        cells.push_back(it->second);
    }
    for (;;) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "temp_probe_%03zu", probes.size() + 1);
        auto it = index.find(buf);
        if (it == index.end()) break;
        probes.push_back(it->second);
    }
    table.cell_count = cells.size();
    table.probe_count = probes.size();

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto cols = split(line);
        if (cols.size() != header.size()) {
            throw SchemaError("telemetry CSV line " + std::to_string(line_no) + " has " + std::to_string(cols.size()) +
                              " fields, header has " + std::to_string(header.size()));
        }
        std::vector<double> v(req.size());
        for (std::size_t i = 0; i < req.size(); ++i) v[i] = parse_double(cols[req[i]]);
        RawFrame f;
        f.timestamp = v[0];
        f.speed = v[2];
        f.mileage = v[3];
        f.total_volt = v[4];
        f.total_current = v[5];
        f.soc = v[6];
        f.insulation_res = v[7];
        f.volt_extrema = {v[8], v[9]};
        f.temp_extrema = {v[10], v[11]};
        for (std::size_t c : cells) f.cell_volts.push_back(parse_double(cols[c]));
        for (std::size_t p : probes) f.probe_temps.push_back(parse_double(cols[p]));

        bool finite = true;
        for (double x : v) finite = finite && std::isfinite(x);
        for (double x : f.cell_volts) finite = finite && std::isfinite(x);
        for (double x : f.probe_temps) finite = finite && std::isfinite(x);
        if (!finite) {
            ++table.dropped_nan;
            continue;
        }
        f.charge_status = static_cast<int>(std::lround(v[1]));
        const long label = std::lround(v[12]);
        if (label != 0 && label != 1) {
            throw SchemaError("telemetry CSV line " + std::to_string(line_no) + ": label must be 0 or 1");
        }
        f.label = static_cast<int>(label);
        table.frames.push_back(std::move(f));
    }
    return table;
}

TelemetryTable read_telemetry_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open telemetry CSV '" + path + "'");
    return read_telemetry_csv(in);
}

void write_telemetry_csv(std::ostream& out, const std::vector<RawFrame>& frames,
                         const std::vector<std::string>& comments)
{
    for (const auto& c : comments) out << "# " << c << '\n';
    const std::size_t cells = frames.empty() ? 0 : frames.front().cell_volts.size();
    const std::size_t probes = frames.empty() ? 0 : frames.front().probe_temps.size();
    const auto& req = required_columns();
    for (std::size_t i = 0; i < req.size(); ++i) out << (i ? "," : "") << req[i];
    char buf[48];
    for (std::size_t c = 0; c < cells; ++c) {
        std::snprintf(buf, sizeof buf, ",cell_volt_%03zu", c + 1);
        out << buf;
    }
    for (std::size_t p = 0; p < probes; ++p) {
        std::snprintf(buf, sizeof buf, ",temp_probe_%03zu", p + 1);
        out << buf;
    }
    out << '\n';
    constexpr int digits = 9;
    for (const auto& f : frames) {
        out << format_time(f.timestamp) << ',' << f.charge_status << ',' << format_number(f.speed, digits) << ','
            << format_number(f.mileage, digits) << ',' << format_number(f.total_volt, digits) << ','
            << format_number(f.total_current, digits) << ',' << format_number(f.soc, digits) << ','
            << format_number(f.insulation_res, digits) << ',' << format_number(f.volt_extrema[0], digits) << ','
            << format_number(f.volt_extrema[1], digits) << ',' << format_number(f.temp_extrema[0], digits) << ','
            << format_number(f.temp_extrema[1], digits) << ',' << f.label;
        for (double v : f.cell_volts) out << ',' << format_number(v, digits);
        for (double v : f.probe_temps) out << ',' << format_number(v, digits);
        out << '\n';
    }
}

} // namespace synforce
