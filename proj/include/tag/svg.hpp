#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "tag/errors.hpp"
#include "tag/scoremodel.hpp"
#include "tag/vec.hpp"

namespace tag {

namespace svg_detail {

inline std::string num(double v, const char* spec = "%.3f") {
    char buf[48];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

}  // namespace svg_detail

// Square data window derived from the reference mixture alone, so every
// run over the same distribution is drawn in the same frame.
struct Viewport {
    double cx = 0.0;
    double cy = 0.0;
    double half = 1.0;

    static Viewport for_mixture(const GaussianMixture& mix) {
        if (mix.dim() != 2) {
            throw ConfigError("viewport: needs a 2-d mixture");
        }
        double xmin = 0.0, xmax = 0.0, ymin = 0.0, ymax = 0.0;
        double smax = 0.0;
        bool first = true;
        for (const GmmComponent& c : mix.components()) {
            double x = c.mean[0], y = c.mean[1];
            if (first) {
                xmin = xmax = x;
                ymin = ymax = y;
                first = false;
            } else {
                xmin = std::min(xmin, x);
                xmax = std::max(xmax, x);
                ymin = std::min(ymin, y);
                ymax = std::max(ymax, y);
            }
            smax = std::max(smax, c.stdev);
        }
        // Keep the prior scale in frame: initial states live near the unit
        // ball, so strays typically land within a radius-1.5 disc.
        xmin = std::min(xmin, -1.5);
        xmax = std::max(xmax, 1.5);
        ymin = std::min(ymin, -1.5);
        ymax = std::max(ymax, 1.5);
        Viewport v;
        v.cx = 0.5 * (xmin + xmax);
        v.cy = 0.5 * (ymin + ymax);
        v.half = 0.5 * std::max(xmax - xmin, ymax - ymin) + 6.0 * smax + 0.1;
        return v;
    }
};

// Scatter of sample end states over the reference mixture, drawn as light
// discs sized by component stdev. SVG y grows downward, so data y is
// flipped during mapping.
inline void scatter_svg(std::ostream& os, const GaussianMixture& reference,
                        const std::vector<Vec>& points,
                        const std::string& title) {
    using svg_detail::num;
    if (reference.dim() != 2) throw ConfigError("scatter: needs a 2-d mixture");
    for (const Vec& p : points) {
        if (p.size() != 2) throw DimensionError("scatter: points must be 2-d");
    }

    const double size = 640.0;
    const double margin = 30.0;
    const double plot = size - 2.0 * margin;
    Viewport vp = Viewport::for_mixture(reference);
    auto px = [&](double x) {
        return margin + (x - (vp.cx - vp.half)) / (2.0 * vp.half) * plot;
    };
    auto py = [&](double y) {
        return margin + ((vp.cy + vp.half) - y) / (2.0 * vp.half) * plot;
    };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" "
          "height=\"640\" viewBox=\"0 0 640 640\">\n";
    os << "<rect width=\"640\" height=\"640\" fill=\"#ffffff\"/>\n";
    os << "<rect x=\"" << num(margin) << "\" y=\"" << num(margin) << "\" width=\""
       << num(plot) << "\" height=\"" << num(plot)
       << "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
    os << "<text x=\"" << num(size / 2.0)
       << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"13\">"
       << title << "</text>\n";

    double px_per_unit = plot / (2.0 * vp.half);
    for (const GmmComponent& c : reference.components()) {
        double r = std::max(1.0, 2.0 * c.stdev * px_per_unit);
        os << "<circle cx=\"" << num(px(c.mean[0])) << "\" cy=\""
           << num(py(c.mean[1])) << "\" r=\"" << num(r)
           << "\" fill=\"#c9c9c9\"/>\n";
    }
    for (const Vec& p : points) {
        double x = px(p[0]);
        double y = py(p[1]);
        if (x < margin || x > size - margin || y < margin || y > size - margin) {
            continue;  // off-frame stray
        }
        os << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y)
           << "\" r=\"1.6\" fill=\"#27508c\" fill-opacity=\"0.55\"/>\n";
    }
    os << "</svg>\n";
}

// Single-series line chart, x values taken as given (not rescaled to even
// spacing).
inline void line_chart_svg(std::ostream& os, const std::vector<double>& xs,
                           const std::vector<double>& ys,
                           const std::string& xlabel, const std::string& ylabel,
                           const std::string& title) {
    using svg_detail::num;
    if (xs.size() != ys.size()) {
        throw DimensionError("line chart: xs and ys differ in length");
    }
    if (xs.size() < 2) throw EmptyBatch("line chart: need at least 2 points");

    const double w = 640.0, h = 400.0, ml = 70.0, mr = 25.0, mt = 40.0,
                 mb = 50.0;
    double xmin = *std::min_element(xs.begin(), xs.end());
    double xmax = *std::max_element(xs.begin(), xs.end());
    double ymin = *std::min_element(ys.begin(), ys.end());
    double ymax = *std::max_element(ys.begin(), ys.end());
    if (xmax - xmin < 1e-300) xmax = xmin + 1.0;
    if (ymax - ymin < 1e-12) {
        ymax += 0.5;
        ymin -= 0.5;
    } else {
        double pad = 0.08 * (ymax - ymin);
        ymax += pad;
        ymin -= pad;
    }
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double y) { return mt + (ymax - y) / (ymax - ymin) * (h - mt - mb); };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" "
          "height=\"400\" viewBox=\"0 0 640 400\">\n";
    os << "<rect width=\"640\" height=\"400\" fill=\"#ffffff\"/>\n";
    os << "<text x=\"" << num(w / 2.0)
       << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"13\">"
       << title << "</text>\n";
    os << "<rect x=\"" << num(ml) << "\" y=\"" << num(mt) << "\" width=\""
       << num(w - ml - mr) << "\" height=\"" << num(h - mt - mb)
       << "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";

    for (int i = 0; i <= 4; ++i) {
        double y = ymin + (ymax - ymin) * i / 4.0;
        os << "<line x1=\"" << num(ml - 4.0) << "\" y1=\"" << num(py(y))
           << "\" x2=\"" << num(ml) << "\" y2=\"" << num(py(y))
           << "\" stroke=\"#444444\"/>\n";
        os << "<text x=\"" << num(ml - 8.0) << "\" y=\"" << num(py(y) + 4.0)
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
              "font-size=\"11\">"
           << num(y, "%.4g") << "</text>\n";
    }
    for (double x : xs) {
        os << "<line x1=\"" << num(px(x)) << "\" y1=\"" << num(h - mb) << "\" x2=\""
           << num(px(x)) << "\" y2=\"" << num(h - mb + 4.0)
           << "\" stroke=\"#444444\"/>\n";
        os << "<text x=\"" << num(px(x)) << "\" y=\"" << num(h - mb + 18.0)
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
              "font-size=\"11\">"
           << num(x, "%.4g") << "</text>\n";
    }
    os << "<text x=\"" << num((ml + w - mr) / 2.0) << "\" y=\"" << num(h - 12.0)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
       << xlabel << "</text>\n";
    os << "<text x=\"16\" y=\"" << num((mt + h - mb) / 2.0)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
          "transform=\"rotate(-90 16 "
       << num((mt + h - mb) / 2.0) << ")\">" << ylabel << "</text>\n";

    os << "<polyline fill=\"none\" stroke=\"#27508c\" stroke-width=\"1.6\" "
          "points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) os << ' ';
        os << num(px(xs[i])) << ',' << num(py(ys[i]));
    }
    os << "\"/>\n";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        os << "<circle cx=\"" << num(px(xs[i])) << "\" cy=\"" << num(py(ys[i]))
           << "\" r=\"3\" fill=\"#27508c\"/>\n";
    }
    os << "</svg>\n";
}

}  // namespace tag
