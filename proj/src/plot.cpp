#include "searth/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "searth/common.hpp"

namespace searth {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else out += c;
    }
    return out;
}

bool parse_double(const std::string& s, double* out) {
    if (s.empty()) return false;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) return false;
    *out = v;
    return true;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

CsvTable read_csv(std::istream& is) {
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");
        if (first) {
            t.header = cells;
            first = false;
        } else {
            if (cells.size() != t.header.size())
                throw ConfigError("csv: row has " + std::to_string(cells.size()) +
                                  " cells, header has " + std::to_string(t.header.size()));
            t.rows.push_back(cells);
        }
    }
    if (t.header.empty()) throw ConfigError("csv: missing header row");
    return t;
}

std::vector<PlotSeries> series_from_csv(const CsvTable& table, const std::string& file_label) {
    const size_t ncol = table.header.size();
    std::vector<bool> numeric(ncol, true);
    for (const auto& row : table.rows)
        for (size_t c = 0; c < ncol; ++c) {
            double v;
            if (!parse_double(row[c], &v)) numeric[c] = false;
        }
    size_t x_col = ncol;
    for (size_t c = 0; c < ncol; ++c)
        if (numeric[c]) {
            x_col = c;
            break;
        }
    if (x_col == ncol) throw ConfigError("csv: no numeric column to use as the x axis");

    // group rows by the concatenated non-numeric cells, preserving first-seen order
    std::vector<std::string> group_order;
    std::map<std::string, std::vector<size_t>> groups;
    for (size_t r = 0; r < table.rows.size(); ++r) {
        std::string key;
        for (size_t c = 0; c < ncol; ++c)
            if (!numeric[c]) {
                if (!key.empty()) key += '/';
                key += table.rows[r][c];
            }
        if (groups.emplace(key, std::vector<size_t>{}).second) group_order.push_back(key);
        groups[key].push_back(r);
    }

    std::vector<PlotSeries> out;
    for (const auto& gkey : group_order)
        for (size_t c = 0; c < ncol; ++c) {
            if (!numeric[c] || c == x_col) continue;
            PlotSeries s;
            s.label = file_label;
            if (!gkey.empty()) s.label += " " + gkey;
            s.label += " " + table.header[c];
            for (size_t r : groups[gkey]) {
                double xv, yv;
                parse_double(table.rows[r][x_col], &xv);
                parse_double(table.rows[r][c], &yv);
                s.x.push_back(xv);
                s.y.push_back(yv);
            }
            out.push_back(std::move(s));
        }
    if (out.empty()) throw ConfigError("csv: no series to plot");
    return out;
}

std::string render_svg_lines(const std::vector<PlotSeries>& series, const std::string& x_label,
                             const std::string& y_label, const std::string& title) {
    if (series.empty()) throw ConfigError("plot: no series");
    for (const auto& s : series) {
        if (s.x.size() != s.y.size() || s.x.empty())
            throw ConfigError("plot: series '" + s.label + "' is empty or ragged");
        for (double v : s.x)
            if (!std::isfinite(v)) throw NumericError("plot: non-finite x in " + s.label);
        for (double v : s.y)
            if (!std::isfinite(v)) throw NumericError("plot: non-finite y in " + s.label);
    }
    double x0 = series[0].x[0], x1 = x0, y0 = series[0].y[0], y1 = y0;
    for (const auto& s : series) {
        for (double v : s.x) {
            x0 = std::min(x0, v);
            x1 = std::max(x1, v);
        }
        for (double v : s.y) {
            y0 = std::min(y0, v);
            y1 = std::max(y1, v);
        }
    }
    if (x1 == x0) x1 = x0 + 1.0;
    if (y1 == y0) y1 = y0 + 1.0;
    const double pad_y = 0.05 * (y1 - y0);
    y0 -= pad_y;
    y1 += pad_y;

    const double width = 720, height = 480;
    const double ml = 72, mr = 24, mt = 40, mb = 56;
    const double pw = width - ml - mr, ph = height - mt - mb;
    auto px = [&](double v) { return ml + (v - x0) / (x1 - x0) * pw; };
    auto py = [&](double v) { return mt + ph - (v - y0) / (y1 - y0) * ph; };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 720 480\" "
           "font-family=\"sans-serif\" font-size=\"12\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"720\" height=\"480\" fill=\"white\"/>\n";
    if (!title.empty())
        svg += "<text x=\"360\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" +
               xml_escape(title) + "</text>\n";
    // axes
    svg += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(mt + ph) + "\" x2=\"" + fmt(ml + pw) +
           "\" y2=\"" + fmt(mt + ph) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(mt) + "\" x2=\"" + fmt(ml) + "\" y2=\"" +
           fmt(mt + ph) + "\" stroke=\"black\"/>\n";
    const int nticks = 5;
    for (int i = 0; i <= nticks; ++i) {
        const double fx = x0 + (x1 - x0) * i / nticks;
        const double fy = y0 + (y1 - y0) * i / nticks;
        svg += "<line x1=\"" + fmt(px(fx)) + "\" y1=\"" + fmt(mt + ph) + "\" x2=\"" + fmt(px(fx)) +
               "\" y2=\"" + fmt(mt + ph + 5) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + fmt(px(fx)) + "\" y=\"" + fmt(mt + ph + 18) +
               "\" text-anchor=\"middle\">" + fmt(fx) + "</text>\n";
        svg += "<line x1=\"" + fmt(ml - 5) + "\" y1=\"" + fmt(py(fy)) + "\" x2=\"" + fmt(ml) +
               "\" y2=\"" + fmt(py(fy)) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + fmt(ml - 8) + "\" y=\"" + fmt(py(fy) + 4) +
               "\" text-anchor=\"end\">" + fmt(fy) + "</text>\n";
    }
    svg += "<text x=\"" + fmt(ml + pw / 2) + "\" y=\"" + fmt(height - 12) +
           "\" text-anchor=\"middle\">" + xml_escape(x_label) + "</text>\n";
    svg += "<text x=\"16\" y=\"" + fmt(mt + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
           fmt(mt + ph / 2) + ")\">" + xml_escape(y_label) + "</text>\n";
    // polylines
    for (size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
        std::string pts;
        for (size_t j = 0; j < series[i].x.size(); ++j) {
            if (j) pts += ' ';
            pts += fmt(px(series[i].x[j])) + "," + fmt(py(series[i].y[j]));
        }
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
               "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    }
    // legend
    for (size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
        const double ly = mt + 8 + 16 * static_cast<double>(i);
        svg += "<line x1=\"" + fmt(ml + pw - 150) + "\" y1=\"" + fmt(ly) + "\" x2=\"" +
               fmt(ml + pw - 130) + "\" y2=\"" + fmt(ly) + "\" stroke=\"" + color +
               "\" stroke-width=\"1.5\"/>\n";
        svg += "<text x=\"" + fmt(ml + pw - 124) + "\" y=\"" + fmt(ly + 4) + "\">" +
               xml_escape(series[i].label) + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace searth
