#pragma once

#include <string>
#include <vector>

#include "uvd/sweeps.hpp"

namespace uvd {

// Binary PPM line chart of metric_value against sweep_value, one polyline per
// metric name. Byte-deterministic for identical records.
void render_metric_plot(const std::vector<MetricRecord>& records, const std::string& path);

// One chart per protocol plus metrics.csv with every record; filenames are
// derived from the protocol names. Returns the written paths, CSV first.
std::vector<std::string> emit_plots(const std::vector<MetricRecord>& records,
                                    const std::string& out_dir);

}  // namespace uvd
