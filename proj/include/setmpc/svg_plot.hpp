#pragma once

#include <string>
#include <vector>

namespace setmpc {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Static SVG line plot; a pure function of its inputs with fixed formatting,
// so identical data yields identical bytes.
std::string render_svg_plot(const std::string& title, const std::string& x_label,
                            const std::string& y_label, const std::vector<PlotSeries>& series);

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<PlotSeries>& series);

}  // namespace setmpc
