#pragma once

// Shared value types for the scribble-supervision toolkit: images, label maps,
// probability maps, dense per-pixel fields and a portable seeded RNG.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace scribble {

using Label = std::uint8_t;

/// Reserved "no annotation" value. Never a valid class index.
inline constexpr Label kUnlabeled = std::numeric_limits<Label>::max();
inline constexpr Label kBackground = 0;
inline constexpr std::size_t kMaxClasses = kUnlabeled;

enum class ErrorCode {
    NonFiniteLogits,
    NonFiniteImage,
    ClassOutOfRange,
    NotASimplex,
    ShapeMismatch,
    InvalidArgument,
    BudgetExceedsMask,
    InconsistentScribble,
    GridMismatch,
    BadCostMatrix,
    OcclusionTooLarge,
    ClassUnobserved,
    DegeneratePosterior,
    NoSupervision,
    DegenerateConsistency,
    FeatureDimMismatch,
    TrainingDiverged,
    Io,
    Schema,
};

std::string_view error_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail);

    ErrorCode code() const noexcept { return code_; }
    std::string_view name() const noexcept { return error_name(code_); }

private:
    ErrorCode code_;
};

struct Shape {
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t pixels() const noexcept { return height * width; }
    std::size_t index(std::size_t row, std::size_t col) const noexcept { return row * width + col; }
    bool contains(long row, long col) const noexcept
    {
        return row >= 0 && col >= 0 && static_cast<std::size_t>(row) < height &&
               static_cast<std::size_t>(col) < width;
    }
    friend bool operator==(const Shape&, const Shape&) = default;
};

/// Row-major, channel-innermost real image. All values finite.
class Image {
public:
    Image() = default;
    Image(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> data);
    static Image zeros(std::size_t height, std::size_t width, std::size_t channels = 1);

    Shape shape() const noexcept { return {height_, width_}; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t channels() const noexcept { return channels_; }
    std::size_t pixels() const noexcept { return height_ * width_; }

    double at(std::size_t row, std::size_t col, std::size_t ch = 0) const
    {
        return data_[(row * width_ + col) * channels_ + ch];
    }
    std::span<const double> pixel(std::size_t index) const
    {
        return {data_.data() + index * channels_, channels_};
    }
    std::span<const double> data() const noexcept { return data_; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t channels_ = 0;
    std::vector<double> data_;
};

/// Dense grid of class indices; kUnlabeled marks pixels without annotation.
class LabelMap {
public:
    LabelMap() = default;
    LabelMap(std::size_t height, std::size_t width, Label fill = kUnlabeled);
    LabelMap(std::size_t height, std::size_t width, std::vector<Label> labels);

    Shape shape() const noexcept { return {height_, width_}; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t pixels() const noexcept { return labels_.size(); }

    Label at(std::size_t row, std::size_t col) const { return labels_[row * width_ + col]; }
    Label& at(std::size_t row, std::size_t col) { return labels_[row * width_ + col]; }
    Label operator[](std::size_t index) const { return labels_[index]; }
    Label& operator[](std::size_t index) { return labels_[index]; }
    std::span<const Label> labels() const noexcept { return labels_; }

    std::size_t count(Label label) const;

    friend bool operator==(const LabelMap&, const LabelMap&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<Label> labels_;
};

/// Unconstrained H x W x depth real field: logits, gradients, soft label
/// weights, mixed prediction tensors.
class Field {
public:
    Field() = default;
    Field(std::size_t height, std::size_t width, std::size_t depth, double fill = 0.0);

    Shape shape() const noexcept { return {height_, width_}; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t depth() const noexcept { return depth_; }
    std::size_t pixels() const noexcept { return height_ * width_; }

    std::span<double> pixel(std::size_t index) { return {data_.data() + index * depth_, depth_}; }
    std::span<const double> pixel(std::size_t index) const
    {
        return {data_.data() + index * depth_, depth_};
    }
    double& operator()(std::size_t index, std::size_t k) { return data_[index * depth_ + k]; }
    double operator()(std::size_t index, std::size_t k) const { return data_[index * depth_ + k]; }
    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    friend bool operator==(const Field&, const Field&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t depth_ = 0;
    std::vector<double> data_;
};

/// Per-pixel class probability simplex. Rows are validated on construction.
class ProbMap {
public:
    static constexpr double kSimplexTolerance = 1e-9;

    ProbMap() = default;
    ProbMap(std::size_t height, std::size_t width, std::size_t classes, std::vector<double> probs);
    /// Row-wise softmax of a logit field.
    static ProbMap from_logits(const Field& logits);
    static ProbMap uniform(std::size_t height, std::size_t width, std::size_t classes);

    Shape shape() const noexcept { return {height_, width_}; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t classes() const noexcept { return classes_; }
    std::size_t pixels() const noexcept { return height_ * width_; }

    std::span<const double> pixel(std::size_t index) const
    {
        return {probs_.data() + index * classes_, classes_};
    }
    double operator()(std::size_t index, std::size_t k) const { return probs_[index * classes_ + k]; }
    std::span<const double> data() const noexcept { return probs_; }

    /// Per-pixel argmax, ties to the lowest class index.
    LabelMap argmax() const;
    Field as_field() const;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t classes_ = 0;
    std::vector<double> probs_;
};

/// Classes expected to form a single connected structure (never background).
struct ClassSet {
    std::size_t classes = 0;
    std::vector<Label> connected;

    ClassSet() = default;
    ClassSet(std::size_t classes, std::vector<Label> connected);
};

/// Deterministic random stream: std::mt19937_64 for the raw 64-bit words and
/// hand-written distributions on top, so a seed reproduces the same values
/// with any standard library.
///
///   uniform()        (word >> 11) * 2^-53, in [0, 1)
///   uniform_int(n)   rejection sampling on the top of the word range
///   normal()         Box-Muller, one value per call (no caching)
///   fork(stream)     splitmix64(seed ^ splitmix64(stream)) as a child seed
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t next_u64() { return engine_(); }
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::size_t uniform_int(std::size_t n);
    double normal(double mean = 0.0, double stddev = 1.0);
    bool bernoulli(double p) { return uniform() < p; }
    SeededRng fork(std::uint64_t stream) const;

    template <typename T>
    void shuffle(std::vector<T>& values)
    {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[uniform_int(i)]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Max-subtracted softmax. Throws NonFiniteLogits on NaN/inf input.
std::vector<double> softmax(std::span<const double> logits);
void softmax_into(std::span<const double> logits, std::span<double> out);

/// Labeled pixels become unit vectors, kUnlabeled pixels the uniform 1/m vector.
ProbMap one_hot(const LabelMap& labels, std::size_t classes);

/// Hard labels as soft weights: unit vector on labeled pixels, zero elsewhere.
Field label_weights(const LabelMap& labels, std::size_t classes);

void require_same_shape(Shape a, Shape b, std::string_view what);

}  // namespace scribble
