#include "scribble/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace scribble {

double dice(const LabelMap& pred, const LabelMap& gt, Label k)
{
    require_same_shape(pred.shape(), gt.shape(), "dice");
    std::size_t p = 0, g = 0, both = 0;
    for (std::size_t i = 0; i < gt.pixels(); ++i) {
        const bool in_p = pred[i] == k, in_g = gt[i] == k;
        p += in_p;
        g += in_g;
        both += in_p && in_g;
    }
    if (p + g == 0) {
        return 1.0;
    }
    return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

namespace {

struct Point {
    long r, c;
};

std::vector<Point> boundary(const LabelMap& labels, Label k)
{
    std::vector<Point> out;
    const long h = static_cast<long>(labels.height()), w = static_cast<long>(labels.width());
    auto inside = [&](long r, long c) {
        return r >= 0 && c >= 0 && r < h && c < w && labels.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) == k;
    };
    for (long r = 0; r < h; ++r) {
        for (long c = 0; c < w; ++c) {
            if (inside(r, c) && (!inside(r - 1, c) || !inside(r + 1, c) || !inside(r, c - 1) || !inside(r, c + 1))) {
                out.push_back({r, c});
            }
        }
    }
    return out;
}

// Directed distance with the early-break scan: once a point of `from` has a
// neighbour in `to` closer than the running maximum it cannot raise it.
double directed_sq(const std::vector<Point>& from, const std::vector<Point>& to)
{
    long worst = 0;
    for (const Point& a : from) {
        long nearest = std::numeric_limits<long>::max();
        for (const Point& b : to) {
            const long d = (a.r - b.r) * (a.r - b.r) + (a.c - b.c) * (a.c - b.c);
            if (d < nearest) {
                nearest = d;
                if (nearest <= worst) {
                    break;
                }
            }
        }
        worst = std::max(worst, nearest);
    }
    return static_cast<double>(worst);
}

}  // namespace

double hausdorff(const LabelMap& pred, const LabelMap& gt, Label k)
{
    require_same_shape(pred.shape(), gt.shape(), "hausdorff");
    const std::vector<Point> a = boundary(pred, k);
    const std::vector<Point> b = boundary(gt, k);
    if (a.empty() && b.empty()) {
        return 0.0;
    }
    if (a.empty() || b.empty()) {
        return std::numeric_limits<double>::infinity();
    }
    return std::sqrt(std::max(directed_sq(a, b), directed_sq(b, a)));
}

MetricReport evaluate(const LabelMap& pred, const LabelMap& gt, std::size_t classes)
{
    MetricReport report;
    for (std::size_t k = 0; k < classes; ++k) {
        report.dice.push_back(dice(pred, gt, static_cast<Label>(k)));
        report.hausdorff.push_back(hausdorff(pred, gt, static_cast<Label>(k)));
    }
    if (classes > 1) {
        for (std::size_t k = 1; k < classes; ++k) {
            report.mean_dice += report.dice[k];
            report.mean_hausdorff += report.hausdorff[k];
        }
        report.mean_dice /= static_cast<double>(classes - 1);
        report.mean_hausdorff /= static_cast<double>(classes - 1);
    }
    return report;
}

MetricReport average(const std::vector<MetricReport>& reports)
{
    MetricReport out;
    if (reports.empty()) {
        return out;
    }
    const std::size_t m = reports.front().dice.size();
    out.dice.assign(m, 0.0);
    out.hausdorff.assign(m, 0.0);
    for (const auto& r : reports) {
        for (std::size_t k = 0; k < m; ++k) {
            out.dice[k] += r.dice[k] / static_cast<double>(reports.size());
            out.hausdorff[k] += r.hausdorff[k] / static_cast<double>(reports.size());
        }
    }
    if (m > 1) {
        for (std::size_t k = 1; k < m; ++k) {
            out.mean_dice += out.dice[k];
            out.mean_hausdorff += out.hausdorff[k];
        }
        out.mean_dice /= static_cast<double>(m - 1);
        out.mean_hausdorff /= static_cast<double>(m - 1);
    }
    return out;
}

}  // namespace scribble
