#pragma once

// Brute-force reference implementations used by the unit tests and the
// acceptance runner. Each one is written for obviousness, not speed, and
// shares no code with the library routine it checks.

#include "scribble/core.hpp"
#include "scribble/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <vector>

namespace oracle {

using scribble::BinaryMask;
using scribble::Image;
using scribble::LabelMap;
using scribble::ProbMap;

/// Minimum assignment cost over all n! permutations.
inline double brute_assignment(const std::vector<double>& cost, std::size_t n)
{
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            s += cost[r * n + perm[r]];
        }
        best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

/// Breadth-first flood fill; returns one component id per pixel (-1 off mask).
inline std::vector<long> flood_components(const BinaryMask& mask, bool eight, std::size_t& count)
{
    const long h = static_cast<long>(mask.height()), w = static_cast<long>(mask.width());
    std::vector<long> id(mask.pixels(), -1);
    count = 0;
    for (long start = 0; start < h * w; ++start) {
        if (!mask[static_cast<std::size_t>(start)] || id[static_cast<std::size_t>(start)] >= 0) {
            continue;
        }
        std::queue<long> q;
        q.push(start);
        id[static_cast<std::size_t>(start)] = static_cast<long>(count);
        while (!q.empty()) {
            const long p = q.front();
            q.pop();
            for (long dr = -1; dr <= 1; ++dr) {
                for (long dc = -1; dc <= 1; ++dc) {
                    if ((dr == 0 && dc == 0) || (!eight && dr != 0 && dc != 0)) {
                        continue;
                    }
                    const long r = p / w + dr, c = p % w + dc;
                    if (r < 0 || c < 0 || r >= h || c >= w) {
                        continue;
                    }
                    const auto j = static_cast<std::size_t>(r * w + c);
                    if (mask[j] && id[j] < 0) {
                        id[j] = static_cast<long>(count);
                        q.push(static_cast<long>(j));
                    }
                }
            }
        }
        ++count;
    }
    return id;
}

inline std::size_t count_components(const BinaryMask& mask, bool eight)
{
    std::size_t n = 0;
    flood_components(mask, eight, n);
    return n;
}

/// Pixels of class k that touch (4-neighbour) a non-k pixel or the image edge.
inline std::vector<std::pair<long, long>> boundary(const LabelMap& map, scribble::Label k)
{
    std::vector<std::pair<long, long>> out;
    const long h = static_cast<long>(map.height()), w = static_cast<long>(map.width());
    for (long r = 0; r < h; ++r) {
        for (long c = 0; c < w; ++c) {
            if (map.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) != k) {
                continue;
            }
            bool edge = false;
            const long nr[] = {r - 1, r + 1, r, r};
            const long nc[] = {c, c, c - 1, c + 1};
            for (int d = 0; d < 4; ++d) {
                if (nr[d] < 0 || nc[d] < 0 || nr[d] >= h || nc[d] >= w ||
                    map.at(static_cast<std::size_t>(nr[d]), static_cast<std::size_t>(nc[d])) != k) {
                    edge = true;
                }
            }
            if (edge) {
                out.emplace_back(r, c);
            }
        }
    }
    return out;
}

/// Symmetric Hausdorff distance by comparing every boundary pair.
inline double brute_hausdorff(const LabelMap& a, const LabelMap& b, scribble::Label k)
{
    const auto pa = boundary(a, k), pb = boundary(b, k);
    if (pa.empty() && pb.empty()) {
        return 0.0;
    }
    if (pa.empty() || pb.empty()) {
        return std::numeric_limits<double>::infinity();
    }
    auto directed = [](const auto& from, const auto& to) {
        double worst = 0.0;
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) {
                const double dr = static_cast<double>(p.first - q.first);
                const double dc = static_cast<double>(p.second - q.second);
                best = std::min(best, std::sqrt(dr * dr + dc * dc));
            }
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(directed(pa, pb), directed(pb, pa));
}

/// Spatial energy by visiting every pixel pair and keeping those within
/// Chebyshev distance r, with the Gaussian affinity written out in full.
inline std::vector<double> brute_energy(const ProbMap& pred, const Image& image, std::size_t k, double sigma_p,
                                        double sigma_o, long radius, bool include_self)
{
    const long w = static_cast<long>(image.width());
    const std::size_t n = image.pixels();
    std::vector<double> phi(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const long ri = static_cast<long>(i) / w, ci = static_cast<long>(i) % w;
            const long rj = static_cast<long>(j) / w, cj = static_cast<long>(j) % w;
            if (std::max(std::labs(ri - rj), std::labs(ci - cj)) > radius || (i == j && !include_self)) {
                continue;
            }
            double color = 0.0;
            for (std::size_t ch = 0; ch < image.channels(); ++ch) {
                const double d = image.pixel(i)[ch] - image.pixel(j)[ch];
                color += d * d;
            }
            const double pos = static_cast<double>((ri - rj) * (ri - rj) + (ci - cj) * (ci - cj));
            const double g = std::exp(-pos / (2.0 * sigma_p * sigma_p) - color / (2.0 * sigma_o * sigma_o));
            phi[i] += g * pred(i, k) * pred(j, k);
        }
    }
    return phi;
}

/// Central differences of f at x, one coordinate at a time.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h = 1e-6)
{
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// Standard normal density.
inline double normal_pdf(double x, double mean, double sd)
{
    const double z = (x - mean) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * 3.14159265358979323846));
}

}  // namespace oracle
