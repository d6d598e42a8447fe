#pragma once

// Linear-softmax pixel classifier over handcrafted local features.

#include "scribble/core.hpp"

#include <span>
#include <vector>

namespace scribble {

/// Per-pixel feature vectors. For an image with C channels the layout is
///
///   [ intensity(C) | 3x3 mean(C) | 3x3 std(C) | x | y | 1 ]
///
/// so the dimension is 3C + 3. Windows use reflect-101 borders (index -1 maps
/// to 1). Coordinates are col/(W-1) and row/(H-1), exactly 0 and 1 at the
/// corners (0 for a single-pixel axis). The std is the population std of the
/// nine window values.
class Features {
public:
    Features() = default;
    Features(std::size_t height, std::size_t width, std::size_t dim);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t pixels() const noexcept { return height_ * width_; }

    std::span<const double> pixel(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
    std::span<double> pixel(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

constexpr std::size_t feature_dim(std::size_t channels) { return 3 * channels + 3; }

std::size_t reflect101(long index, std::size_t size);

Features featurize(const Image& image);

struct PixelModel {
    std::size_t feature_dim = 0;
    std::size_t classes = 0;
    std::vector<double> weights;  // feature_dim x classes, row-major
    std::vector<double> bias;     // classes

    static PixelModel zeros(std::size_t feature_dim, std::size_t classes);
    PixelModel zeros_like() const { return zeros(feature_dim, classes); }

    double& weight(std::size_t d, std::size_t k) { return weights[d * classes + k]; }
    double weight(std::size_t d, std::size_t k) const { return weights[d * classes + k]; }

    std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }
    /// Flat view order: all weights, then bias.
    double& parameter(std::size_t i) { return i < weights.size() ? weights[i] : bias[i - weights.size()]; }
    double parameter(std::size_t i) const { return i < weights.size() ? weights[i] : bias[i - weights.size()]; }

    void add_scaled(const PixelModel& other, double scale);
    bool finite() const;

    friend bool operator==(const PixelModel&, const PixelModel&) = default;
};

/// W^T f + b per pixel. Throws FeatureDimMismatch.
Field logits(const PixelModel& model, const Features& features);
ProbMap predict(const PixelModel& model, const Features& features);
ProbMap predict(const PixelModel& model, const Image& image);

/// Adds dL/dW and dL/db to `grad`, given dL/dlogits per pixel.
void accumulate_gradient(const Features& features, const Field& logit_grad, PixelModel& grad, double scale = 1.0);

/// dL/dX through the feature map, given dL/dlogits per pixel.
Image input_gradient(const PixelModel& model, const Image& image, const Field& logit_grad);

}  // namespace scribble
