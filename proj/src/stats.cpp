#include "rpf/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rpf/errors.hpp"

namespace rpf::stats {

namespace {

void require_pair(std::span<double const> x, std::span<double const> y) {
    if (x.size() != y.size()) throw ValidationError("sample length mismatch");
    if (x.size() < 2) throw ValidationError("at least two samples required");
}

double pearson(std::span<double const> x, std::span<double const> y) {
    double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double mean(std::span<double const> x) {
    if (x.empty()) throw ValidationError("mean of an empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double quantile(std::span<double const> x, double q) {
    if (x.empty()) throw ValidationError("quantile of an empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("quantile level outside [0, 1]");
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    double pos = q * static_cast<double>(s.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = std::min(lo + 1, s.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return s[lo] + frac * (s[hi] - s[lo]);
}

double median(std::span<double const> x) { return quantile(x, 0.5); }

double r_squared(std::span<double const> x, std::span<double const> y) {
    require_pair(x, y);
    double r = pearson(x, y);
    return r * r;
}

std::vector<double> ranks(std::span<double const> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) out[order[k]] = avg;
        i = j + 1;
    }
    return out;
}

double spearman(std::span<double const> x, std::span<double const> y) {
    require_pair(x, y);
    auto rx = ranks(x);
    auto ry = ranks(y);
    return pearson(rx, ry);
}

}  // namespace rpf::stats
