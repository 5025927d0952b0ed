#include "setmpc/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace setmpc {

namespace {

constexpr int kWidth = 840, kHeight = 480;
constexpr int kMarginL = 70, kMarginR = 20, kMarginT = 40, kMarginB = 50;
const char* kColors[] = {"#1f6fb2", "#c23b22", "#2e8540", "#8050a0", "#b08020"};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// round a span to a pleasant tick step
double tick_step(double span) {
    if (span <= 0) return 1.0;
    const double raw = span / 6.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double r = raw / mag;
    if (r < 1.5) return mag;
    if (r < 3.5) return 2.0 * mag;
    if (r < 7.5) return 5.0 * mag;
    return 10.0 * mag;
}

}  // namespace

std::string render_svg_plot(const std::string& title, const std::string& x_label,
                            const std::string& y_label, const std::vector<PlotSeries>& series) {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series) {
        for (double v : s.x) {
            xmin = std::min(xmin, v);
            xmax = std::max(xmax, v);
        }
        for (double v : s.y) {
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
        }
    }
    if (!(xmax > xmin)) {
        xmin -= 1.0;
        xmax += 1.0;
    }
    if (!(ymax > ymin)) {
        ymin -= 1.0;
        ymax += 1.0;
    }
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    const double px = kWidth - kMarginL - kMarginR;
    const double py = kHeight - kMarginT - kMarginB;
    auto sx = [&](double v) { return kMarginL + (v - xmin) / (xmax - xmin) * px; };
    auto sy = [&](double v) { return kHeight - kMarginB - (v - ymin) / (ymax - ymin) * py; };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kWidth) +
           "\" height=\"" + std::to_string(kHeight) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + std::to_string(kWidth / 2) +
           "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
           title + "</text>\n";

    // axes and grid
    const double xstep = tick_step(xmax - xmin), ystep = tick_step(ymax - ymin);
    for (double v = std::ceil(xmin / xstep) * xstep; v <= xmax + 1e-12; v += xstep) {
        out += "<line x1=\"" + fmt(sx(v)) + "\" y1=\"" + fmt(sy(ymin)) + "\" x2=\"" + fmt(sx(v)) +
               "\" y2=\"" + fmt(sy(ymax)) + "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        out += "<text x=\"" + fmt(sx(v)) + "\" y=\"" + fmt(sy(ymin) + 18.0) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(v) +
               "</text>\n";
    }
    for (double v = std::ceil(ymin / ystep) * ystep; v <= ymax + 1e-12; v += ystep) {
        out += "<line x1=\"" + fmt(sx(xmin)) + "\" y1=\"" + fmt(sy(v)) + "\" x2=\"" +
               fmt(sx(xmax)) + "\" y2=\"" + fmt(sy(v)) +
               "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        out += "<text x=\"" + fmt(sx(xmin) - 8.0) + "\" y=\"" + fmt(sy(v) + 4.0) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(v) +
               "</text>\n";
    }
    out += "<rect x=\"" + fmt(sx(xmin)) + "\" y=\"" + fmt(sy(ymax)) + "\" width=\"" + fmt(px) +
           "\" height=\"" + fmt(py) + "\" fill=\"none\" stroke=\"#333333\"/>\n";
    out += "<text x=\"" + std::to_string(kWidth / 2) + "\" y=\"" + std::to_string(kHeight - 12) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + x_label +
           "</text>\n";
    out += "<text x=\"18\" y=\"" + std::to_string(kHeight / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
           "transform=\"rotate(-90 18 " +
           std::to_string(kHeight / 2) + ")\">" + y_label + "</text>\n";

    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        if (s.x.size() != s.y.size()) throw std::invalid_argument("plot series size mismatch");
        std::string pts;
        for (size_t k = 0; k < s.x.size(); ++k) {
            pts += fmt(sx(s.x[k])) + "," + fmt(sy(s.y[k])) + " ";
        }
        out += "<polyline fill=\"none\" stroke=\"" + std::string(kColors[si % 5]) +
               "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
        out += "<text x=\"" + std::to_string(kMarginL + 10) + "\" y=\"" +
               std::to_string(kMarginT + 16 + 16 * static_cast<int>(si)) +
               "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" +
               std::string(kColors[si % 5]) + "\">" + s.label + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

void write_svg_plot(const std::string& path, const std::string& title, const std::string& x_label,
                    const std::string& y_label, const std::vector<PlotSeries>& series) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write plot file: " + path);
    out << render_svg_plot(title, x_label, y_label, series);
}

}  // namespace setmpc
