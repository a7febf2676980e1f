#include "mphsir/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace mphsir::harness {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::ofstream open_or_throw(const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("plot: cannot open " + path);
    return f;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

void write_error_curves(const metrics::EvalReport& report, const std::string& csv_path,
                        const std::string& svg_path) {
    auto csv = open_or_throw(csv_path);
    csv << "task,level_label,band,mae\n";
    double ymax = 1e-9;
    size_t bands = 0;
    for (const auto& e : report.entries) {
        bands = std::max(bands, e.band_curve.size());
        for (size_t b = 0; b < e.band_curve.size(); ++b) {
            csv << e.task << ',' << e.level_label << ',' << b << ',' << fmt(e.band_curve[b]) << "\n";
            ymax = std::max(ymax, e.band_curve[b]);
        }
    }

    const int w = 720, h = 420, ml = 60, mr = 200, mt = 30, mb = 45;
    auto svg = open_or_throw(svg_path);
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    svg << "<rect width='100%' height='100%' fill='white'/>\n";
    svg << "<text x='" << ml << "' y='18' font-size='14'>Per-band restoration error (mean "
           "absolute, normalized DN)</text>\n";
    const double px = w - ml - mr, py = h - mt - mb;
    svg << "<line x1='" << ml << "' y1='" << mt + py << "' x2='" << ml + px << "' y2='" << mt + py
        << "' stroke='black'/>\n";
    svg << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << mt + py
        << "' stroke='black'/>\n";
    svg << "<text x='" << ml + px / 2 << "' y='" << h - 10 << "' font-size='12'>band index</text>\n";
    int idx = 0;
    for (const auto& e : report.entries) {
        if (e.band_curve.empty()) continue;
        const char* color = kPalette[idx % 10];
        svg << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
        for (size_t b = 0; b < e.band_curve.size(); ++b) {
            const double x = ml + px * (bands > 1 ? static_cast<double>(b) / (bands - 1) : 0.5);
            const double y = mt + py * (1.0 - e.band_curve[b] / ymax);
            svg << fmt(x) << ',' << fmt(y) << ' ';
        }
        svg << "'/>\n";
        svg << "<text x='" << w - mr + 8 << "' y='" << mt + 14 + 14 * idx << "' font-size='11' fill='"
            << color << "'>" << e.task << " " << e.level_label << "</text>\n";
        ++idx;
    }
    svg << "</svg>\n";
}

void write_activation_chart(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                            const std::string& csv_path, const std::string& svg_path) {
    if (series.empty()) throw std::invalid_argument("activation chart: no series");
    const size_t l_len = series.front().second.size();
    auto csv = open_or_throw(csv_path);
    csv << "series,pattern,activation\n";
    double ymax = 1e-9;
    for (const auto& [name, vals] : series) {
        if (vals.size() != l_len) throw std::invalid_argument("activation chart: length mismatch");
        for (size_t i = 0; i < vals.size(); ++i) {
            csv << name << ',' << i << ',' << fmt(vals[i]) << "\n";
            ymax = std::max(ymax, vals[i]);
        }
    }
    const int w = 720, h = 360, ml = 55, mr = 20, mt = 45, mb = 40;
    const double px = w - ml - mr, py = h - mt - mb;
    auto svg = open_or_throw(svg_path);
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    svg << "<rect width='100%' height='100%' fill='white'/>\n";
    svg << "<text x='" << ml << "' y='18' font-size='14'>Spectral prompt activation proportions</text>\n";
    const double group_w = px / static_cast<double>(l_len);
    const double bar_w = group_w / (series.size() + 0.5);
    for (size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % 10];
        svg << "<rect x='" << ml + 110 * static_cast<int>(s) << "' y='26' width='10' height='10' fill='"
            << color << "'/>\n";
        svg << "<text x='" << ml + 14 + 110 * static_cast<int>(s) << "' y='35' font-size='11'>"
            << series[s].first << "</text>\n";
        for (size_t i = 0; i < l_len; ++i) {
            const double v = series[s].second[i];
            const double bh = py * v / ymax;
            const double x = ml + group_w * static_cast<double>(i) + bar_w * static_cast<double>(s);
            svg << "<rect x='" << fmt(x) << "' y='" << fmt(mt + py - bh) << "' width='" << fmt(bar_w * 0.9)
                << "' height='" << fmt(bh) << "' fill='" << color << "'/>\n";
        }
    }
    svg << "<line x1='" << ml << "' y1='" << mt + py << "' x2='" << ml + px << "' y2='" << mt + py
        << "' stroke='black'/>\n";
    for (size_t i = 0; i < l_len; ++i)
        svg << "<text x='" << fmt(ml + group_w * (static_cast<double>(i) + 0.35)) << "' y='" << h - 22
            << "' font-size='10'>" << i << "</text>\n";
    svg << "<text x='" << ml + px / 2 << "' y='" << h - 6 << "' font-size='12'>pattern index</text>\n";
    svg << "</svg>\n";
}

void write_similarity_heatmap(const std::vector<std::vector<double>>& sim,
                              const std::vector<std::string>& names, const std::string& csv_path,
                              const std::string& svg_path) {
    const size_t n = sim.size();
    if (n == 0 || names.size() != n) throw std::invalid_argument("heatmap: shape mismatch");
    auto csv = open_or_throw(csv_path);
    csv << "task_a,task_b,cosine\n";
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) csv << names[i] << ',' << names[j] << ',' << fmt(sim[i][j]) << "\n";

    const int cell = 46, ml = 130, mt = 120;
    const int w = ml + cell * static_cast<int>(n) + 20, h = mt + cell * static_cast<int>(n) + 20;
    auto svg = open_or_throw(svg_path);
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    svg << "<rect width='100%' height='100%' fill='white'/>\n";
    svg << "<text x='10' y='20' font-size='14'>Prompt vector cosine similarity</text>\n";
    for (size_t i = 0; i < n; ++i) {
        svg << "<text x='" << ml - 8 << "' y='" << mt + cell * static_cast<int>(i) + cell / 2 + 4
            << "' font-size='10' text-anchor='end'>" << names[i] << "</text>\n";
        svg << "<text x='" << ml + cell * static_cast<int>(i) + cell / 2 << "' y='" << mt - 8
            << "' font-size='10' text-anchor='start' transform='rotate(-45 "
            << ml + cell * static_cast<int>(i) + cell / 2 << ' ' << mt - 8 << ")'>" << names[i]
            << "</text>\n";
        for (size_t j = 0; j < n; ++j) {
            // Map [-1, 1] to a blue-white-red ramp.
            const double v = std::clamp(sim[i][j], -1.0, 1.0);
            const int r = static_cast<int>(std::lround(255 * std::min(1.0, 1.0 + v)));
            const int b = static_cast<int>(std::lround(255 * std::min(1.0, 1.0 - v)));
            const int g = static_cast<int>(std::lround(255 * (1.0 - std::abs(v))));
            svg << "<rect x='" << ml + cell * static_cast<int>(j) << "' y='" << mt + cell * static_cast<int>(i)
                << "' width='" << cell << "' height='" << cell << "' fill='rgb(" << r << ',' << g << ','
                << b << ")'/>\n";
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%.3f", sim[i][j]);
            svg << "<text x='" << ml + cell * static_cast<int>(j) + cell / 2 << "' y='"
                << mt + cell * static_cast<int>(i) + cell / 2 + 4
                << "' font-size='9' text-anchor='middle'>" << buf << "</text>\n";
        }
    }
    svg << "</svg>\n";
}

}  // namespace mphsir::harness
