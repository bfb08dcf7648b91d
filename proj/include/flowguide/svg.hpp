#pragma once

#include "flowguide/io.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace flowguide {

// Minimal self-contained SVG plotting: polyline series on linear or log-log
// axes, optional markers, optional ellipses (used for mixture contours).
// Deliberately tiny so the tool has no plotting-stack dependence.
class SvgPlot {
public:
    SvgPlot(std::string title, std::string xlabel, std::string ylabel, bool loglog = false)
        : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)),
          loglog_(loglog) {}

    void add_series(const std::vector<double>& xs, const std::vector<double>& ys,
                    const std::string& color, bool markers = true, bool line = true) {
        series_.push_back({xs, ys, color, markers, line});
    }

    void add_ellipse(double cx, double cy, double rx, double ry, double angle_deg,
                     const std::string& color) {
        ellipses_.push_back({cx, cy, rx, ry, angle_deg, color});
    }

    std::string render(int width = 640, int height = 480) const {
        const double ml = 70, mr = 20, mt = 36, mb = 50;
        const double pw = width - ml - mr, ph = height - mt - mb;

        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        auto tx = [&](double v) { return loglog_ ? std::log10(std::max(v, 1e-300)) : v; };
        for (const auto& s : series_) {
            for (double v : s.xs) {
                xmin = std::min(xmin, tx(v));
                xmax = std::max(xmax, tx(v));
            }
            for (double v : s.ys) {
                ymin = std::min(ymin, tx(v));
                ymax = std::max(ymax, tx(v));
            }
        }
        for (const auto& e : ellipses_) {
            xmin = std::min(xmin, e.cx - e.rx);
            xmax = std::max(xmax, e.cx + e.rx);
            ymin = std::min(ymin, e.cy - e.ry);
            ymax = std::max(ymax, e.cy + e.ry);
        }
        if (xmin > xmax) { xmin = 0; xmax = 1; }
        if (ymin > ymax) { ymin = 0; ymax = 1; }
        if (xmax - xmin < 1e-12) { xmin -= 0.5; xmax += 0.5; }
        if (ymax - ymin < 1e-12) { ymin -= 0.5; ymax += 0.5; }
        const double xpad = 0.04 * (xmax - xmin), ypad = 0.04 * (ymax - ymin);
        xmin -= xpad; xmax += xpad; ymin -= ypad; ymax += ypad;

        auto px = [&](double v) { return ml + (tx(v) - xmin) / (xmax - xmin) * pw; };
        auto py = [&](double v) { return mt + ph - (tx(v) - ymin) / (ymax - ymin) * ph; };

        std::string out;
        out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
               "\" height=\"" + std::to_string(height) + "\">\n";
        out += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) + "\" height=\"" +
               std::to_string(height) + "\" fill=\"white\"/>\n";
        out += "<text x=\"" + fmt_g6(width / 2.0) + "\" y=\"20\" text-anchor=\"middle\" "
               "font-family=\"sans-serif\" font-size=\"14\">" + title_ + "</text>\n";
        // axes box
        out += "<rect x=\"" + fmt_g6(ml) + "\" y=\"" + fmt_g6(mt) + "\" width=\"" + fmt_g6(pw) +
               "\" height=\"" + fmt_g6(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
        // ticks
        for (int i = 0; i <= 4; ++i) {
            const double fx = xmin + (xmax - xmin) * i / 4.0;
            const double fy = ymin + (ymax - ymin) * i / 4.0;
            const double sx = ml + pw * i / 4.0;
            const double sy = mt + ph - ph * i / 4.0;
            const double lx = loglog_ ? std::pow(10.0, fx) : fx;
            const double ly = loglog_ ? std::pow(10.0, fy) : fy;
            out += "<text x=\"" + fmt_g6(sx) + "\" y=\"" + fmt_g6(mt + ph + 16) +
                   "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
                   fmt_g6(lx) + "</text>\n";
            out += "<text x=\"" + fmt_g6(ml - 6) + "\" y=\"" + fmt_g6(sy + 3) +
                   "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" +
                   fmt_g6(ly) + "</text>\n";
        }
        out += "<text x=\"" + fmt_g6(ml + pw / 2) + "\" y=\"" + fmt_g6(mt + ph + 36) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + xlabel_ +
               "</text>\n";
        out += "<text x=\"16\" y=\"" + fmt_g6(mt + ph / 2) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
               "transform=\"rotate(-90 16 " + fmt_g6(mt + ph / 2) + ")\">" + ylabel_ +
               "</text>\n";

        for (const auto& e : ellipses_) {
            out += "<ellipse cx=\"" + fmt_g6(px(e.cx)) + "\" cy=\"" + fmt_g6(py(e.cy)) +
                   "\" rx=\"" + fmt_g6(e.rx / (xmax - xmin) * pw) + "\" ry=\"" +
                   fmt_g6(e.ry / (ymax - ymin) * ph) + "\" fill=\"none\" stroke=\"" + e.color +
                   "\" stroke-opacity=\"0.6\" transform=\"rotate(" + fmt_g6(e.angle) + " " +
                   fmt_g6(px(e.cx)) + " " + fmt_g6(py(e.cy)) + ")\"/>\n";
        }

        for (const auto& s : series_) {
            if (s.line && s.xs.size() > 1) {
                out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\" points=\"";
                for (std::size_t i = 0; i < s.xs.size(); ++i) {
                    if (i) out += ' ';
                    out += fmt_g6(px(s.xs[i])) + "," + fmt_g6(py(s.ys[i]));
                }
                out += "\"/>\n";
            }
            if (s.markers) {
                for (std::size_t i = 0; i < s.xs.size(); ++i)
                    out += "<circle cx=\"" + fmt_g6(px(s.xs[i])) + "\" cy=\"" +
                           fmt_g6(py(s.ys[i])) + "\" r=\"2.5\" fill=\"" + s.color + "\"/>\n";
            }
        }
        out += "</svg>\n";
        return out;
    }

    void write(const std::filesystem::path& path, int width = 640, int height = 480) const {
        atomic_write_file(path, render(width, height));
    }

private:
    struct Series {
        std::vector<double> xs, ys;
        std::string color;
        bool markers;
        bool line;
    };
    struct Ellipse {
        double cx, cy, rx, ry, angle;
        std::string color;
    };
    std::string title_, xlabel_, ylabel_;
    bool loglog_;
    std::vector<Series> series_;
    std::vector<Ellipse> ellipses_;
};

}  // namespace flowguide
