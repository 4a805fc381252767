#include "seqmeta/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "seqmeta/errors.hpp"

namespace seqmeta {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 55;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    std::ostringstream o;
    o.precision(6);
    o << (std::abs(v) < 1e-12 ? 0.0 : v);
    return o.str();
}

std::pair<double, double> data_range(const std::vector<PlotSeries>& series, bool use_x) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : series)
        for (double v : use_x ? s.x : s.y)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    if (!std::isfinite(lo)) return {0.0, 1.0};
    if (lo == hi) {
        const double pad = lo == 0.0 ? 1.0 : 0.1 * std::abs(lo);
        return {lo - pad, hi + pad};
    }
    const auto ticks = nice_ticks(lo, hi);
    return {std::min(lo, ticks.front()), std::max(hi, ticks.back())};
}

}  // namespace

std::vector<double> nice_ticks(double lo, double hi, int target) {
    if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) return {lo};
    const double raw = (hi - lo) / std::max(1, target);
    const int exponent = static_cast<int>(std::floor(std::log10(raw)));
    double mult = 10.0;
    for (double m : {1.0, 2.0, 5.0})
        if (m * std::pow(10.0, exponent) >= raw) {
            mult = m;
            break;
        }
    // Ticks are integer multiples of mult scaled by an exact power of ten, so
    // 3 * 0.2 prints as 0.6.
    const double scale = std::pow(10.0, std::abs(exponent));
    const auto value = [&](double k) { return exponent < 0 ? k * mult / scale : k * mult * scale; };
    const double step = value(1.0);
    std::vector<double> ticks;
    for (double k = std::floor(lo / step); value(k) <= hi + 0.5 * step; k += 1.0) {
        ticks.push_back(value(k));
        if (ticks.size() > 100) break;
    }
    return ticks;
}

std::string render_svg(const PlotSpec& spec) {
    for (const auto& s : spec.series)
        if (s.x.size() != s.y.size()) throw ShapeError("plot series '" + s.label + "' y length", s.x.size(), s.y.size());
    const auto [x0, x1] = spec.x_range.value_or(data_range(spec.series, true));
    const auto [y0, y1] = spec.y_range.value_or(data_range(spec.series, false));
    if (!(x1 > x0) || !(y1 > y0)) throw invalid_argument("plot axis range must be non-empty");

    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    const auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
    const auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!spec.title.empty())
        o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
          << escape(spec.title) << "</text>\n";

    // Grid and ticks.
    for (double t : nice_ticks(x0, x1)) {
        if (t < x0 || t > x1) continue;
        o << "<line x1=\"" << num(px(t)) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(px(t)) << "\" y2=\""
          << num(kTop + ph) << "\" stroke=\"#e5e5e5\"/>\n";
        o << "<text x=\"" << num(px(t)) << "\" y=\"" << num(kTop + ph + 16) << "\" text-anchor=\"middle\">" << num(t)
          << "</text>\n";
    }
    for (double t : nice_ticks(y0, y1)) {
        if (t < y0 || t > y1) continue;
        o << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(py(t)) << "\" x2=\"" << num(kLeft + pw) << "\" y2=\""
          << num(py(t)) << "\" stroke=\"#e5e5e5\"/>\n";
        o << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(py(t) + 4) << "\" text-anchor=\"end\">" << num(t)
          << "</text>\n";
    }
    o << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    if (!spec.x_label.empty())
        o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 12) << "\" text-anchor=\"middle\">"
          << escape(spec.x_label) << "</text>\n";
    if (!spec.y_label.empty())
        o << "<text transform=\"translate(18," << num(kTop + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
          << escape(spec.y_label) << "</text>\n";

    o << "<clipPath id=\"plot\"><rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(pw)
      << "\" height=\"" << num(ph) << "\"/></clipPath>\n";
    for (std::size_t k = 0; k < spec.series.size(); ++k) {
        const auto& s = spec.series[k];
        const char* color = kPalette[k % std::size(kPalette)];
        o << "<g clip-path=\"url(#plot)\">\n";
        if (s.line && s.x.size() > 1) {
            o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
            for (std::size_t j = 0; j < s.x.size(); ++j) {
                if (!std::isfinite(s.x[j]) || !std::isfinite(s.y[j])) continue;
                o << (j ? " " : "") << num(px(s.x[j])) << ',' << num(py(s.y[j]));
            }
            o << "\"/>\n";
        }
        if (s.markers || !s.line)
            for (std::size_t j = 0; j < s.x.size(); ++j)
                if (std::isfinite(s.x[j]) && std::isfinite(s.y[j]))
                    o << "<circle cx=\"" << num(px(s.x[j])) << "\" cy=\"" << num(py(s.y[j])) << "\" r=\"3.5\" fill=\""
                      << color << "\"/>\n";
        o << "</g>\n";
        const double ly = kTop + 10 + 18 * static_cast<double>(k);
        o << "<line x1=\"" << num(kLeft + pw + 12) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(kLeft + pw + 32)
          << "\" y2=\"" << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << num(kLeft + pw + 36) << "\" y=\"" << num(ly + 4) << "\">" << escape(s.label) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace seqmeta
