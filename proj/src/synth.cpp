#include "scribble/trainer.hpp"

#include <cmath>

namespace scribble {

void SynthSpec::validate() const
{
    if (side < 32) {
        throw Error(ErrorCode::InvalidArgument, "synthetic side must be at least 32");
    }
    if (classes < 2 || classes > 8) {
        throw Error(ErrorCode::InvalidArgument, "synthetic class count must be in [2, 8]");
    }
    if (!(noise >= 0.0) || !(bias >= 0.0) || !(jitter >= 0.0 && jitter <= 0.25)) {
        throw Error(ErrorCode::InvalidArgument, "noise and bias must be non-negative, jitter in [0, 0.25]");
    }
    if (!(disk_min > 0.0 && disk_min <= disk_max && ring_min > 0.0 && ring_min <= ring_max && blob_min > 0.0 &&
          blob_min <= blob_max)) {
        throw Error(ErrorCode::InvalidArgument, "shape radius ranges must be positive and ordered");
    }
}

double SynthSpec::class_intensity(std::size_t k) const
{
    if (k < intensity.size()) {
        return intensity[k];
    }
    // Further blobs cycle through a fixed ladder.
    return 0.3 + 0.1 * static_cast<double>(k % 6);
}

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Ellipse {
    double cy, cx, a, b, angle;

    bool contains(double r, double c) const
    {
        const double dy = r - cy, dx = c - cx;
        const double u = dx * std::cos(angle) + dy * std::sin(angle);
        const double v = -dx * std::sin(angle) + dy * std::cos(angle);
        return (u * u) / (a * a) + (v * v) / (b * b) < 1.0;
    }
};

Sample make_sample(const SynthSpec& spec, SeededRng& rng)
{
    const std::size_t n = spec.side;
    const double side = static_cast<double>(n);
    const double cy = side / 2.0 + rng.uniform(-spec.jitter, spec.jitter) * side;
    const double cx = side / 2.0 + rng.uniform(-spec.jitter, spec.jitter) * side;
    const double r1 = side * rng.uniform(spec.disk_min, spec.disk_max);
    const double r2 = r1 + side * rng.uniform(spec.ring_min, spec.ring_max);

    std::vector<Ellipse> blobs;
    const double theta0 = rng.uniform(0.0, 2.0 * kPi);
    for (std::size_t k = 3; k < spec.classes; ++k) {
        const double theta = theta0 + 2.0 * kPi * static_cast<double>(k - 3) / static_cast<double>(spec.classes - 2);
        const double a = side * rng.uniform(spec.blob_min, spec.blob_max);
        const double b = side * rng.uniform(spec.blob_min, spec.blob_max);
        const double d = r2 + 0.5 * std::min(a, b);
        blobs.push_back({cy + d * std::sin(theta), cx + d * std::cos(theta), a, b, rng.uniform(0.0, kPi)});
    }

    LabelMap truth(n, n, kBackground);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            const double y = static_cast<double>(r), x = static_cast<double>(c);
            const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            Label label = kBackground;
            for (std::size_t b = 0; b < blobs.size(); ++b) {
                if (blobs[b].contains(y, x)) {
                    label = static_cast<Label>(3 + b);
                }
            }
            if (spec.classes > 2 && d2 < r2 * r2) {
                label = 2;
            }
            if (d2 < r1 * r1) {
                label = 1;
            }
            truth.at(r, c) = label;
        }
    }

    std::vector<double> base(n * n);
    for (std::size_t i = 0; i < base.size(); ++i) {
        base[i] = spec.class_intensity(truth[i]);
    }
    for (std::size_t s = 0; s < spec.clutter; ++s) {
        const Ellipse spot{rng.uniform(0.0, side - 1.0), rng.uniform(0.0, side - 1.0),
                           side * rng.uniform(0.03, 0.06), side * rng.uniform(0.03, 0.06), rng.uniform(0.0, kPi)};
        const double value = rng.uniform(0.55, 0.9);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < n; ++c) {
                if (truth.at(r, c) == kBackground && spot.contains(static_cast<double>(r), static_cast<double>(c))) {
                    base[r * n + c] = value;
                }
            }
        }
    }

    const double fy = rng.uniform(0.5, 1.5), fx = rng.uniform(0.5, 1.5);
    const double py = rng.uniform(0.0, 1.0), px = rng.uniform(0.0, 1.0);
    std::vector<double> data(n * n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            const double field = spec.bias * std::sin(2.0 * kPi * (fy * static_cast<double>(r) / side + py)) *
                                 std::cos(2.0 * kPi * (fx * static_cast<double>(c) / side + px));
            const double noise = spec.noise > 0.0 ? rng.normal(0.0, spec.noise) : 0.0;
            data[r * n + c] = base[r * n + c] + field + noise;
        }
    }
    return {Image(n, n, 1, std::move(data)), std::move(truth)};
}

}  // namespace

std::vector<Sample> synth_dataset(const SynthSpec& spec)
{
    spec.validate();
    const SeededRng root(spec.seed);
    std::vector<Sample> out;
    out.reserve(spec.count);
    for (std::size_t i = 0; i < spec.count; ++i) {
        SeededRng rng = root.fork(i);
        out.push_back(make_sample(spec, rng));
    }
    return out;
}

}  // namespace scribble
