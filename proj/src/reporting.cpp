#include "perp/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "perp/errors.hpp"

namespace perp {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        switch (c) {
            case '<': o += "&lt;"; break;
            case '>': o += "&gt;"; break;
            case '&': o += "&amp;"; break;
            case '"': o += "&quot;"; break;
            default: o += c;
        }
    }
    return o;
}

std::vector<double> column(const TailCurve& c, const std::string& name) {
    if (name == "log_x") return c.log_x;
    if (name == "leading") return c.leading;
    if (name == "normal_approx") return c.normal_approx ? *c.normal_approx : std::vector<double>{};
    if (name == "tilted_exact") return c.tilted_exact ? *c.tilted_exact : std::vector<double>{};
    if (name == "ratio_normal") return c.normal_approx ? c.ratio_normal() : std::vector<double>{};
    if (name == "ratio_tilted") return c.tilted_exact ? c.ratio_tilted() : std::vector<double>{};
    throw Error(Status::invalid_argument, "unknown curve column '" + name + "'");
}

// "Nice" tick positions covering [lo, hi].
std::vector<double> ticks(double lo, double hi) {
    double span = hi - lo;
    double raw = span / 5.0;
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double f : {1.0, 2.0, 2.5, 5.0, 10.0}) {
        step = f * mag;
        if (span / step <= 6.0) break;
    }
    std::vector<double> t;
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) t.push_back(std::fabs(v) < 1e-12 * step ? 0.0 : v);
    return t;
}

}  // namespace

std::string format_sci(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.5e", v);
    return buf;
}

std::string tail_curve_csv(const TailCurve& c, const std::vector<std::string>& comments) {
    std::ostringstream os;
    for (const auto& line : comments) os << "# " << line << "\n";
    for (std::size_t i = 0; i < kTailCsvColumns.size(); ++i) os << (i ? "," : "") << kTailCsvColumns[i];
    os << "\n";
    std::vector<std::vector<double>> cols;
    for (const auto& name : kTailCsvColumns) cols.push_back(column(c, name));
    for (std::size_t r = 0; r < c.size(); ++r) {
        for (std::size_t k = 0; k < cols.size(); ++k) {
            if (k) os << ",";
            if (!cols[k].empty()) os << format_sci(cols[k][r]);
        }
        os << "\n";
    }
    return os.str();
}

std::string emit_svg(const std::vector<PlotPanel>& panels, const PlotStyle& style) {
    if (panels.empty()) throw Error(Status::invalid_argument, "plot needs at least one panel");
    const double W = style.width, H = style.panel_height;
    const double ml = 70, mr = 170, mt = 36, mb = 48;
    const double title_h = style.title.empty() ? 0.0 : 28.0;
    const double total_h = title_h + H * static_cast<double>(panels.size());
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << style.width << "\" height=\"" << fixed2(total_h)
       << "\" viewBox=\"0 0 " << style.width << " " << fixed2(total_h) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << style.width << "\" height=\"" << fixed2(total_h) << "\" fill=\"white\"/>\n";
    if (!style.title.empty())
        os << "<text x=\"" << fixed2(W / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">" << escape(style.title) << "</text>\n";

    for (std::size_t p = 0; p < panels.size(); ++p) {
        const PlotPanel& panel = panels[p];
        const double top = title_h + H * static_cast<double>(p);
        double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
        for (const auto& s : panel.series) {
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
                xlo = std::min(xlo, s.x[i]);
                xhi = std::max(xhi, s.x[i]);
                ylo = std::min(ylo, s.y[i]);
                yhi = std::max(yhi, s.y[i]);
            }
        }
        if (!std::isfinite(xlo)) throw Error(Status::invalid_argument, "plot panel has no finite points");
        if (panel.reference_one) {
            ylo = std::min(ylo, 1.0);
            yhi = std::max(yhi, 1.0);
        }
        if (xhi == xlo) {
            xlo -= 0.5;
            xhi += 0.5;
        }
        if (yhi == ylo) {
            double d = std::max(std::fabs(ylo) * 0.1, 0.5);
            ylo -= d;
            yhi += d;
        }
        double pad = 0.05 * (yhi - ylo);
        ylo -= pad;
        yhi += pad;
        const double px0 = ml, px1 = W - mr, py0 = top + mt, py1 = top + H - mb;
        auto sx = [&](double x) { return px0 + (x - xlo) / (xhi - xlo) * (px1 - px0); };
        auto sy = [&](double y) { return py1 - (y - ylo) / (yhi - ylo) * (py1 - py0); };

        os << "<g class=\"panel\">\n";
        if (!panel.title.empty())
            os << "<text x=\"" << fixed2((px0 + px1) / 2) << "\" y=\"" << fixed2(top + 22) << "\" text-anchor=\"middle\" font-size=\"13\">"
               << escape(panel.title) << "</text>\n";
        os << "<rect x=\"" << fixed2(px0) << "\" y=\"" << fixed2(py0) << "\" width=\"" << fixed2(px1 - px0) << "\" height=\""
           << fixed2(py1 - py0) << "\" fill=\"none\" stroke=\"black\"/>\n";
        for (double t : ticks(xlo, xhi)) {
            os << "<line x1=\"" << fixed2(sx(t)) << "\" y1=\"" << fixed2(py1) << "\" x2=\"" << fixed2(sx(t)) << "\" y2=\"" << fixed2(py1 + 5)
               << "\" stroke=\"black\"/>\n";
            os << "<text x=\"" << fixed2(sx(t)) << "\" y=\"" << fixed2(py1 + 18) << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
        }
        for (double t : ticks(ylo, yhi)) {
            os << "<line x1=\"" << fixed2(px0 - 5) << "\" y1=\"" << fixed2(sy(t)) << "\" x2=\"" << fixed2(px0) << "\" y2=\"" << fixed2(sy(t))
               << "\" stroke=\"black\"/>\n";
            os << "<text x=\"" << fixed2(px0 - 8) << "\" y=\"" << fixed2(sy(t) + 4) << "\" text-anchor=\"end\">" << tick_label(t) << "</text>\n";
        }
        os << "<text x=\"" << fixed2((px0 + px1) / 2) << "\" y=\"" << fixed2(py1 + 38) << "\" text-anchor=\"middle\">" << escape(style.x_label)
           << "</text>\n";
        os << "<text x=\"" << fixed2(px0 - 50) << "\" y=\"" << fixed2((py0 + py1) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 "
           << fixed2(px0 - 50) << " " << fixed2((py0 + py1) / 2) << ")\">" << escape(style.y_label) << "</text>\n";
        if (panel.reference_one)
            os << "<line class=\"reference\" x1=\"" << fixed2(px0) << "\" y1=\"" << fixed2(sy(1.0)) << "\" x2=\"" << fixed2(px1) << "\" y2=\""
               << fixed2(sy(1.0)) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";

        for (std::size_t k = 0; k < panel.series.size(); ++k) {
            const PlotSeries& s = panel.series[k];
            const char* color = kPalette[k % (sizeof kPalette / sizeof kPalette[0])];
            std::vector<std::pair<double, double>> pts;
            for (std::size_t i = 0; i < s.x.size(); ++i)
                if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) pts.emplace_back(sx(s.x[i]), sy(s.y[i]));
            if (pts.size() == 1) {
                os << "<circle class=\"marker\" cx=\"" << fixed2(pts[0].first) << "\" cy=\"" << fixed2(pts[0].second) << "\" r=\"3\" fill=\""
                   << color << "\"/>\n";
            } else if (pts.size() > 1) {
                os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
                for (std::size_t i = 0; i < pts.size(); ++i) os << (i ? " " : "") << fixed2(pts[i].first) << "," << fixed2(pts[i].second);
                os << "\"/>\n";
            }
            double ly = py0 + 14 + 18 * static_cast<double>(k);
            os << "<line x1=\"" << fixed2(px1 + 12) << "\" y1=\"" << fixed2(ly - 4) << "\" x2=\"" << fixed2(px1 + 32) << "\" y2=\""
               << fixed2(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
            os << "<text class=\"legend\" x=\"" << fixed2(px1 + 38) << "\" y=\"" << fixed2(ly) << "\">" << escape(s.label) << "</text>\n";
        }
        os << "</g>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string emit_plot(const TailCurve& curve, const PlotStyle& style) {
    if (curve.size() == 0) throw Error(Status::invalid_argument, "cannot plot an empty curve");
    std::vector<PlotPanel> panels;
    for (std::size_t p = 0; p < style.panels.size(); ++p) {
        PlotPanel panel;
        if (p < style.panel_titles.size()) panel.title = style.panel_titles[p];
        for (const auto& name : style.panels[p]) {
            std::vector<double> y = column(curve, name);
            if (y.empty()) continue;
            panel.series.push_back(PlotSeries{name, curve.log_x, y});
        }
        if (!panel.series.empty()) panels.push_back(std::move(panel));
    }
    if (panels.empty()) throw Error(Status::invalid_argument, "none of the requested columns are present in the curve");
    return emit_svg(panels, style);
}

}  // namespace perp
