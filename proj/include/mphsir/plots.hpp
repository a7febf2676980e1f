#pragma once

// CSV and SVG emitters for the diagnostic figures: per-band error curves,
// spectral-prompt activation bars and the prompt similarity heatmap.

#include "mphsir/metrics.hpp"

#include <string>
#include <utility>
#include <vector>

namespace mphsir::harness {

// One CSV row per (task, level, band); one polyline per report entry in the SVG.
void write_error_curves(const metrics::EvalReport& report, const std::string& csv_path,
                        const std::string& svg_path);

// Grouped bars, one group per prompt pattern index, one bar per labeled series.
void write_activation_chart(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                            const std::string& csv_path, const std::string& svg_path);

void write_similarity_heatmap(const std::vector<std::vector<double>>& sim,
                              const std::vector<std::string>& names, const std::string& csv_path,
                              const std::string& svg_path);

}  // namespace mphsir::harness
