#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace seqmeta {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    bool line = true;     // polyline through the points
    bool markers = false; // circle at every point
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<PlotSeries> series;
    /// Axis ranges; derived from the data (padded to tick boundaries) when unset.
    std::optional<std::pair<double, double>> x_range;
    std::optional<std::pair<double, double>> y_range;
};

/// Round-number tick positions covering [lo, hi], roughly `target` of them.
std::vector<double> nice_ticks(double lo, double hi, int target = 6);

/// Standalone SVG document on a fixed 640x400 viewport with axes, ticks,
/// labels and a legend. Output depends only on the spec.
std::string render_svg(const PlotSpec& spec);

}  // namespace seqmeta
