#pragma once

#include <string>
#include <utility>
#include <vector>

// Minimal static SVG charts. The CSV next to each chart is the data of record.

namespace rpf::svg {

struct Series {
    std::string name;
    std::vector<double> x, y;
};

std::string scatter(std::string const& title, std::string const& x_label, std::string const& y_label,
                    std::vector<Series> const& series, bool log_y = false);

/// Quartile boxes with whiskers at the 5th and 95th percentiles.
std::string box_summary(std::string const& title, std::string const& y_label,
                        std::vector<std::pair<std::string, std::vector<double>>> const& groups, bool log_y = true);

struct Marker {
    double x = 0.0, y = 0.0;  // in data coordinates
    std::string label;
};

/// Row-major values (i along x, j along y); NaN cells are left blank.
std::string heat_grid(std::string const& title, std::string const& x_label, std::string const& y_label,
                      std::vector<double> const& xs, std::vector<double> const& ys, std::vector<double> const& values,
                      std::vector<Marker> const& markers);

}  // namespace rpf::svg
