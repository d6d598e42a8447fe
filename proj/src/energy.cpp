#include "scribble/energy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scribble {

void EnergyConfig::validate() const
{
    if (!(sigma_position > 0.0) || !(sigma_intensity > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "kernel bandwidths must be positive");
    }
    if (radius < 1) {
        throw Error(ErrorCode::InvalidArgument, "kernel radius must be at least 1");
    }
}

double gaussian_kernel(const Image& image, std::size_t i, std::size_t j, const EnergyConfig& cfg)
{
    const double dr = static_cast<double>(i / image.width()) - static_cast<double>(j / image.width());
    const double dc = static_cast<double>(i % image.width()) - static_cast<double>(j % image.width());
    auto a = image.pixel(i);
    auto b = image.pixel(j);
    double intensity_sq = 0.0;
    for (std::size_t ch = 0; ch < a.size(); ++ch) {
        intensity_sq += (a[ch] - b[ch]) * (a[ch] - b[ch]);
    }
    return std::exp(-(dr * dr + dc * dc) / (2.0 * cfg.sigma_position * cfg.sigma_position) -
                    intensity_sq / (2.0 * cfg.sigma_intensity * cfg.sigma_intensity));
}

AffinityWindow::AffinityWindow(const Image& image, const EnergyConfig& cfg)
    : shape_(image.shape()), radius_(cfg.radius), taps_((2 * cfg.radius + 1) * (2 * cfg.radius + 1))
{
    cfg.validate();
    const long r = static_cast<long>(radius_);
    const long side = 2 * r + 1;
    std::vector<double> position(taps_);
    for (long dr = -r; dr <= r; ++dr) {
        for (long dc = -r; dc <= r; ++dc) {
            position[static_cast<std::size_t>((dr + r) * side + dc + r)] =
                -static_cast<double>(dr * dr + dc * dc) / (2.0 * cfg.sigma_position * cfg.sigma_position);
        }
    }
    const double intensity_scale = 1.0 / (2.0 * cfg.sigma_intensity * cfg.sigma_intensity);
    const std::size_t ch_count = image.channels();
    weights_.assign(shape_.pixels() * taps_, 0.0);
    for (long row = 0; row < static_cast<long>(shape_.height); ++row) {
        for (long col = 0; col < static_cast<long>(shape_.width); ++col) {
            const std::size_t i = shape_.index(static_cast<std::size_t>(row), static_cast<std::size_t>(col));
            auto oi = image.pixel(i);
            double* out = weights_.data() + i * taps_;
            for (long dr = -r; dr <= r; ++dr) {
                for (long dc = -r; dc <= r; ++dc) {
                    if (!shape_.contains(row + dr, col + dc) || (dr == 0 && dc == 0 && !cfg.include_self)) {
                        continue;
                    }
                    auto oj = image.pixel(shape_.index(static_cast<std::size_t>(row + dr), static_cast<std::size_t>(col + dc)));
                    double d2 = 0.0;
                    for (std::size_t ch = 0; ch < ch_count; ++ch) {
                        d2 += (oi[ch] - oj[ch]) * (oi[ch] - oj[ch]);
                    }
                    const std::size_t tap = static_cast<std::size_t>((dr + r) * side + dc + r);
                    out[tap] = std::exp(position[tap] - d2 * intensity_scale);
                }
            }
        }
    }
}

std::vector<double> spatial_energy(const ProbMap& pred, const AffinityWindow& window, std::size_t k)
{
    require_same_shape(pred.shape(), window.shape(), "spatial_energy");
    if (k >= pred.classes()) {
        throw Error(ErrorCode::ClassOutOfRange, "energy class " + std::to_string(k));
    }
    const Shape shape = pred.shape();
    const long r = static_cast<long>(window.radius());
    const long side = 2 * r + 1;
    std::vector<double> phi(shape.pixels(), 0.0);
    for (long row = 0; row < static_cast<long>(shape.height); ++row) {
        for (long col = 0; col < static_cast<long>(shape.width); ++col) {
            const std::size_t i = shape.index(static_cast<std::size_t>(row), static_cast<std::size_t>(col));
            const double yi = pred(i, k);
            if (yi == 0.0) {
                continue;
            }
            auto g = window.weights(i);
            const long r0 = std::max(-r, -row);
            const long r1 = std::min(r, static_cast<long>(shape.height) - 1 - row);
            const long c0 = std::max(-r, -col);
            const long c1 = std::min(r, static_cast<long>(shape.width) - 1 - col);
            double sum = 0.0;
            for (long dr = r0; dr <= r1; ++dr) {
                const std::size_t base = shape.index(static_cast<std::size_t>(row + dr), 0);
                for (long dc = c0; dc <= c1; ++dc) {
                    sum += g[static_cast<std::size_t>((dr + r) * side + dc + r)] *
                           pred(base + static_cast<std::size_t>(col + dc), k);
                }
            }
            phi[i] = yi * sum;
        }
    }
    return phi;
}

std::vector<double> spatial_energy(const ProbMap& pred, const Image& image, std::size_t k, const EnergyConfig& cfg)
{
    return spatial_energy(pred, AffinityWindow(image, cfg), k);
}

std::size_t ClassSplit::negative_total() const
{
    std::size_t n = 0;
    for (std::size_t k = 0; k < sets.size(); ++k) {
        if (active[k]) {
            n += sets[k].negative.size();
        }
    }
    return n;
}

std::size_t positive_count(double pi_k, std::size_t unlabeled)
{
    if (!(pi_k >= 0.0 && pi_k <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "mixture ratio outside [0, 1]");
    }
    const auto n = static_cast<std::size_t>(std::floor(pi_k * static_cast<double>(unlabeled) + 0.5));
    return std::min(n, unlabeled);
}

SplitSets rank_select(std::span<const double> energy, const BinaryMask& unlabeled, double pi_k)
{
    if (energy.size() != unlabeled.pixels()) {
        throw Error(ErrorCode::ShapeMismatch, "energy and mask sizes differ");
    }
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < unlabeled.pixels(); ++i) {
        if (unlabeled[i]) {
            order.push_back(i);
        }
    }
    const std::size_t top = positive_count(pi_k, order.size());
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return energy[a] > energy[b]; });

    SplitSets out;
    out.positive.assign(order.begin(), order.begin() + static_cast<long>(top));
    out.negative.assign(order.begin() + static_cast<long>(top), order.end());
    std::sort(out.positive.begin(), out.positive.end());
    std::sort(out.negative.begin(), out.negative.end());
    return out;
}

}  // namespace scribble
