#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rpf/stats.hpp"

namespace rpf::svg {

namespace {

constexpr double kWidth = 640, kHeight = 440, kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;
constexpr char const* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape(std::string const& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double x) {
    std::ostringstream os;
    os.precision(4);
    os << x;
    return os.str();
}

struct Axis {
    double lo = 0.0, hi = 1.0;
    bool log = false;

    static Axis fit(std::vector<double> const& values, bool log) {
        Axis a;
        a.log = log;
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (double v : values) {
            if (!std::isfinite(v) || (log && v <= 0.0)) continue;
            double t = log ? std::log10(v) : v;
            lo = std::min(lo, t);
            hi = std::max(hi, t);
        }
        if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
        if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
        double pad = 0.05 * (hi - lo);
        a.lo = lo - pad;
        a.hi = hi + pad;
        return a;
    }

    double frac(double v) const {
        double t = log ? std::log10(std::max(v, 1e-300)) : v;
        return (t - lo) / (hi - lo);
    }
    std::string tick(double t) const { return log ? "1e" + num(t) : num(t); }
};

double px(Axis const& a, double v) { return kLeft + a.frac(v) * (kWidth - kLeft - kRight); }
double py(Axis const& a, double v) { return kHeight - kBottom - a.frac(v) * (kHeight - kTop - kBottom); }

void frame(std::ostringstream& os, std::string const& title, std::string const& x_label, std::string const& y_label) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
       << "</text>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << escape(x_label)
       << "</text>\n";
    os << "<text x=\"16\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << kHeight / 2 << ")\">" << escape(y_label) << "</text>\n";
    os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kWidth - kLeft - kRight << "\" height=\""
       << kHeight - kTop - kBottom << "\" fill=\"none\" stroke=\"black\"/>\n";
}

void y_ticks(std::ostringstream& os, Axis const& a) {
    for (int k = 0; k <= 4; ++k) {
        double t = a.lo + (a.hi - a.lo) * k / 4.0;
        double y = kHeight - kBottom - (k / 4.0) * (kHeight - kTop - kBottom);
        os << "<text x=\"" << kLeft - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << a.tick(t) << "</text>\n";
    }
}

void x_ticks(std::ostringstream& os, Axis const& a) {
    for (int k = 0; k <= 4; ++k) {
        double t = a.lo + (a.hi - a.lo) * k / 4.0;
        double x = kLeft + (k / 4.0) * (kWidth - kLeft - kRight);
        os << "<text x=\"" << x << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">" << a.tick(t)
           << "</text>\n";
    }
}

}  // namespace

std::string scatter(std::string const& title, std::string const& x_label, std::string const& y_label,
                    std::vector<Series> const& series, bool log_y) {
    std::vector<double> all_x, all_y;
    for (auto const& s : series) {
        all_x.insert(all_x.end(), s.x.begin(), s.x.end());
        all_y.insert(all_y.end(), s.y.begin(), s.y.end());
    }
    auto ax = Axis::fit(all_x, false);
    auto ay = Axis::fit(all_y, log_y);
    std::ostringstream os;
    frame(os, title, x_label, y_label);
    x_ticks(os, ax);
    y_ticks(os, ay);
    for (std::size_t k = 0; k < series.size(); ++k) {
        auto const& s = series[k];
        char const* color = kPalette[k % std::size(kPalette)];
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (log_y && s.y[i] <= 0.0)) continue;
            os << "<circle cx=\"" << num(px(ax, s.x[i])) << "\" cy=\"" << num(py(ay, s.y[i]))
               << "\" r=\"2\" fill=\"" << color << "\" fill-opacity=\"0.6\"/>\n";
        }
        os << "<text x=\"" << kLeft + 8 << "\" y=\"" << kTop + 16 + 14 * k << "\" fill=\"" << color << "\">"
           << escape(s.name) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string box_summary(std::string const& title, std::string const& y_label,
                        std::vector<std::pair<std::string, std::vector<double>>> const& groups, bool log_y) {
    std::vector<double> all;
    for (auto const& g : groups) all.insert(all.end(), g.second.begin(), g.second.end());
    auto ay = Axis::fit(all, log_y);
    std::ostringstream os;
    frame(os, title, "", y_label);
    y_ticks(os, ay);
    double const slot = (kWidth - kLeft - kRight) / std::max<std::size_t>(1, groups.size());
    for (std::size_t k = 0; k < groups.size(); ++k) {
        std::vector<double> v;
        for (double x : groups[k].second) {
            if (std::isfinite(x) && (!log_y || x > 0.0)) v.push_back(x);
        }
        double cx = kLeft + slot * (k + 0.5);
        os << "<text x=\"" << cx << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">"
           << escape(groups[k].first) << "</text>\n";
        if (v.empty()) continue;
        double q05 = stats::quantile(v, 0.05), q25 = stats::quantile(v, 0.25), q50 = stats::median(v),
               q75 = stats::quantile(v, 0.75), q95 = stats::quantile(v, 0.95);
        double w = slot * 0.3;
        char const* color = kPalette[k % std::size(kPalette)];
        os << "<line x1=\"" << cx << "\" x2=\"" << cx << "\" y1=\"" << num(py(ay, q05)) << "\" y2=\""
           << num(py(ay, q95)) << "\" stroke=\"" << color << "\"/>\n";
        os << "<rect x=\"" << num(cx - w) << "\" y=\"" << num(py(ay, q75)) << "\" width=\"" << num(2 * w)
           << "\" height=\"" << num(std::max(1.0, py(ay, q25) - py(ay, q75))) << "\" fill=\"" << color
           << "\" fill-opacity=\"0.4\" stroke=\"" << color << "\"/>\n";
        os << "<line x1=\"" << num(cx - w) << "\" x2=\"" << num(cx + w) << "\" y1=\"" << num(py(ay, q50))
           << "\" y2=\"" << num(py(ay, q50)) << "\" stroke=\"black\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string heat_grid(std::string const& title, std::string const& x_label, std::string const& y_label,
                      std::vector<double> const& xs, std::vector<double> const& ys, std::vector<double> const& values,
                      std::vector<Marker> const& markers) {
    auto ax = Axis::fit(xs, false);
    auto ay = Axis::fit(ys, false);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : values) {
        if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
    }
    if (!(hi > lo)) hi = lo + 1.0;
    std::ostringstream os;
    frame(os, title, x_label, y_label);
    x_ticks(os, ax);
    y_ticks(os, ay);
    std::size_t const nx = xs.size(), ny = ys.size();
    double const cw = (kWidth - kLeft - kRight) / (ax.hi - ax.lo) * (nx > 1 ? (xs.back() - xs.front()) / (nx - 1) : 1.0);
    double const ch = (kHeight - kTop - kBottom) / (ay.hi - ay.lo) * (ny > 1 ? (ys.back() - ys.front()) / (ny - 1) : 1.0);
    for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < ny; ++j) {
            double v = values[i * ny + j];
            if (!std::isfinite(v)) continue;
            int shade = static_cast<int>(std::lround(255.0 * (v - lo) / (hi - lo)));
            os << "<rect x=\"" << num(px(ax, xs[i]) - cw / 2) << "\" y=\"" << num(py(ay, ys[j]) - ch / 2)
               << "\" width=\"" << num(cw) << "\" height=\"" << num(ch) << "\" fill=\"rgb(" << shade << ","
               << shade << ",255)\"/>\n";
        }
    }
    for (std::size_t k = 0; k < markers.size(); ++k) {
        auto const& m = markers[k];
        char const* color = kPalette[(k + 1) % std::size(kPalette)];
        os << "<text x=\"" << num(px(ax, m.x)) << "\" y=\"" << num(py(ay, m.y) + 5) << "\" text-anchor=\"middle\" fill=\""
           << color << "\" font-size=\"16\">*</text>\n";
        os << "<text x=\"" << kLeft + 8 << "\" y=\"" << kTop + 16 + 14 * k << "\" fill=\"" << color << "\">"
           << escape(m.label) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace rpf::svg
