#pragma once

// SROC figure emission as standalone SVG: unit axes in (false positive rate,
// sensitivity), one curve + summary point + confidence region per fit, and a
// legend. Output is deterministic (fixed-precision formatting).

#include <cstdio>
#include <string>
#include <vector>

#include "inference.hpp"

namespace diagmeta {

struct SrocSeries {
    std::string label;
    std::vector<RocPoint> curve;
    RocPoint summary{0.0, 0.0};
    std::vector<RocPoint> region;  // closed polyline; may be empty
};

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace detail

inline std::string sroc_svg(const std::vector<SrocSeries>& series) {
    constexpr double width = 640.0, height = 640.0;
    constexpr double margin_left = 70.0, margin_right = 30.0;
    constexpr double margin_top = 40.0, margin_bottom = 70.0;
    const double plot_w = width - margin_left - margin_right;
    const double plot_h = height - margin_top - margin_bottom;
    auto px = [&](double fpr) { return margin_left + fpr * plot_w; };
    auto py = [&](double sens) { return margin_top + (1.0 - sens) * plot_h; };
    static const char* colors[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44"};

    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" "
           "viewBox=\"0 0 640 640\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"640\" fill=\"white\"/>\n";

    // axes and grid
    svg += "<g stroke=\"#888888\" stroke-width=\"1\" fill=\"none\">\n";
    svg += "<rect x=\"" + detail::fmt(margin_left) + "\" y=\"" + detail::fmt(margin_top) +
           "\" width=\"" + detail::fmt(plot_w) + "\" height=\"" + detail::fmt(plot_h) +
           "\"/>\n";
    svg += "</g>\n";
    svg += "<g font-family=\"sans-serif\" font-size=\"13\" fill=\"#222222\">\n";
    for (int i = 0; i <= 5; ++i) {
        const double v = i / 5.0;
        svg += "<line x1=\"" + detail::fmt(px(v)) + "\" y1=\"" + detail::fmt(py(0) + 5) +
               "\" x2=\"" + detail::fmt(px(v)) + "\" y2=\"" + detail::fmt(py(0)) +
               "\" stroke=\"#888888\"/>\n";
        svg += "<text x=\"" + detail::fmt(px(v)) + "\" y=\"" + detail::fmt(py(0) + 22) +
               "\" text-anchor=\"middle\">" + detail::fmt(v) + "</text>\n";
        svg += "<line x1=\"" + detail::fmt(px(0) - 5) + "\" y1=\"" + detail::fmt(py(v)) +
               "\" x2=\"" + detail::fmt(px(0)) + "\" y2=\"" + detail::fmt(py(v)) +
               "\" stroke=\"#888888\"/>\n";
        svg += "<text x=\"" + detail::fmt(px(0) - 10) + "\" y=\"" + detail::fmt(py(v) + 4) +
               "\" text-anchor=\"end\">" + detail::fmt(v) + "</text>\n";
    }
    svg += "<text x=\"" + detail::fmt(margin_left + plot_w / 2) + "\" y=\"" +
           detail::fmt(height - 18) +
           "\" text-anchor=\"middle\">false positive rate (1 - specificity)</text>\n";
    svg += "<text x=\"18\" y=\"" + detail::fmt(margin_top + plot_h / 2) +
           "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
           detail::fmt(margin_top + plot_h / 2) + ")\">sensitivity</text>\n";
    svg += "</g>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = colors[s % 4];
        if (!series[s].region.empty()) {
            std::string pts;
            for (const auto& p : series[s].region) {
                pts += detail::fmt(px(p.fpr)) + "," + detail::fmt(py(p.sens)) + " ";
            }
            svg += "<polygon points=\"" + pts + "\" fill=\"" + color +
                   "\" fill-opacity=\"0.15\" stroke=\"" + color +
                   "\" stroke-width=\"1\" stroke-dasharray=\"4 3\"/>\n";
        }
        std::string pts;
        for (const auto& p : series[s].curve) {
            pts += detail::fmt(px(p.fpr)) + "," + detail::fmt(py(p.sens)) + " ";
        }
        svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
               "\" stroke-width=\"2\"/>\n";
        svg += "<circle cx=\"" + detail::fmt(px(series[s].summary.fpr)) + "\" cy=\"" +
               detail::fmt(py(series[s].summary.sens)) + "\" r=\"5\" fill=\"" + color +
               "\"/>\n";
        const double ly = margin_top + 18.0 + 20.0 * static_cast<double>(s);
        svg += "<line x1=\"" + detail::fmt(margin_left + 14) + "\" y1=\"" + detail::fmt(ly) +
               "\" x2=\"" + detail::fmt(margin_left + 44) + "\" y2=\"" + detail::fmt(ly) +
               "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
        svg += "<text x=\"" + detail::fmt(margin_left + 52) + "\" y=\"" +
               detail::fmt(ly + 4) +
               "\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#222222\">" +
               series[s].label + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

// Assembles curve, summary point and confidence region for one loaded fit.
inline SrocSeries sroc_series_from_fit(const LoadedFit& fit, std::size_t curve_points = 200,
                                       std::size_t region_points = 256) {
    FitResult shim;
    shim.model = model_from_name(fit.model);
    shim.link = fit.link;
    shim.theta = fit.theta;
    shim.level = fit.level;
    shim.cov_model = Matrix(5, 5);
    shim.cov_sandwich = Matrix(5, 5);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            shim.cov_model(i, j) = fit.cov2x2[i][j];
            shim.cov_sandwich(i, j) = fit.cov2x2[i][j];
        }
    }
    shim.headline_sandwich = true;

    SrocSeries series;
    series.label = fit.model;
    std::vector<double> grid;
    grid.reserve(curve_points);
    for (std::size_t i = 0; i < curve_points; ++i) {
        grid.push_back(0.005 + 0.99 * static_cast<double>(i) /
                                   static_cast<double>(curve_points - 1));
    }
    series.curve = sroc_curve(shim, grid);
    series.summary = {1.0 - fit.spec, fit.sens};
    series.region = confidence_region(shim, fit.level, region_points);
    return series;
}

}  // namespace diagmeta
