#pragma once

#include <istream>
#include <string>
#include <vector>

namespace searth {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Static line chart: axes, ticks, legend, one polyline per series. Output is
// byte-deterministic for identical input.
std::string render_svg_lines(const std::vector<PlotSeries>& series, const std::string& x_label,
                             const std::string& y_label, const std::string& title);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(std::istream& is);

// Turns a CSV into plot series: the first all-numeric column is the x axis,
// every other all-numeric column is one series, and non-numeric columns
// (e.g. a variable name) split the rows into separate series.
std::vector<PlotSeries> series_from_csv(const CsvTable& table, const std::string& file_label);

}  // namespace searth
