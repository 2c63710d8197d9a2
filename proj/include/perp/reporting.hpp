#pragma once

#include <string>
#include <vector>

#include "perp/tail_engine.hpp"

namespace perp {

inline const std::vector<std::string> kTailCsvColumns = {"log_x",        "leading",      "normal_approx",
                                                        "tilted_exact", "ratio_normal", "ratio_tilted"};

// Six significant digits in scientific notation; NaN becomes an empty cell.
std::string format_sci(double v);

// Comment lines are written first, each prefixed with "# ".
std::string tail_curve_csv(const TailCurve& curve, const std::vector<std::string>& comments = {});

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotPanel {
    std::string title;
    std::vector<PlotSeries> series;
    bool reference_one = true;  // dashed y = 1 line
};

struct PlotStyle {
    std::string title;
    // Column names per panel, drawn from leading, normal_approx, tilted_exact, ratio_normal, ratio_tilted.
    std::vector<std::vector<std::string>> panels = {{"ratio_normal", "ratio_tilted"}};
    std::vector<std::string> panel_titles;
    std::string x_label = "log x";
    std::string y_label = "ratio";
    int width = 720;
    int panel_height = 300;
};

std::string emit_svg(const std::vector<PlotPanel>& panels, const PlotStyle& style);
std::string emit_plot(const TailCurve& curve, const PlotStyle& style = {});

}  // namespace perp
