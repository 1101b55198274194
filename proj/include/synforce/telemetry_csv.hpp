#pragma once

#include "synforce/pipeline.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace synforce {

struct TelemetryTable {
    std::vector<RawFrame> frames;
    std::size_t cell_count = 0;
    std::size_t probe_count = 0;
    std::size_t dropped_nan = 0; // rows with a missing or NaN value
    std::vector<std::string> comments; // leading '#' lines, without the marker
};

// Header: time,charge_status,speed,mileage,total_volt,total_current,soc,
// insulation_res,max_cell_volt,min_cell_volt,max_temp,min_temp,label, then
// cell_volt_### and temp_probe_### columns. Lines starting with '#' are
// comments. Throws SchemaError on missing columns or ragged rows.
TelemetryTable read_telemetry_csv(std::istream& in);
TelemetryTable read_telemetry_csv(const std::string& path);

// Writes numbers with 9 significant digits; integral timestamps are written
// exactly.
void write_telemetry_csv(std::ostream& out, const std::vector<RawFrame>& frames,
                         const std::vector<std::string>& comments = {});

// Shared number formatting for the CSV writers.
std::string format_number(double value, int significant_digits);
std::string format_time(double t);

} // namespace synforce
