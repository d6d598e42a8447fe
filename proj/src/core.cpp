#include "scribble/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace scribble {

std::string_view error_name(ErrorCode code)
{
    switch (code) {
    case ErrorCode::NonFiniteLogits: return "NonFiniteLogits";
    case ErrorCode::NonFiniteImage: return "NonFiniteImage";
    case ErrorCode::ClassOutOfRange: return "ClassOutOfRange";
    case ErrorCode::NotASimplex: return "NotASimplex";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BudgetExceedsMask: return "BudgetExceedsMask";
    case ErrorCode::InconsistentScribble: return "InconsistentScribble";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::BadCostMatrix: return "BadCostMatrix";
    case ErrorCode::OcclusionTooLarge: return "OcclusionTooLarge";
    case ErrorCode::ClassUnobserved: return "ClassUnobserved";
    case ErrorCode::DegeneratePosterior: return "DegeneratePosterior";
    case ErrorCode::NoSupervision: return "NoSupervision";
    case ErrorCode::DegenerateConsistency: return "DegenerateConsistency";
    case ErrorCode::FeatureDimMismatch: return "FeatureDimMismatch";
    case ErrorCode::TrainingDiverged: return "TrainingDiverged";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Schema: return "Schema";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(error_name(code)) + ": " + detail), code_(code)
{
}

void require_same_shape(Shape a, Shape b, std::string_view what)
{
    if (a != b) {
        std::ostringstream msg;
        msg << what << ": " << a.height << "x" << a.width << " vs " << b.height << "x" << b.width;
        throw Error(ErrorCode::ShapeMismatch, msg.str());
    }
}

Image::Image(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data))
{
    if (channels_ == 0) {
        throw Error(ErrorCode::InvalidArgument, "image needs at least one channel");
    }
    if (data_.size() != height_ * width_ * channels_) {
        throw Error(ErrorCode::ShapeMismatch, "image data length does not match dimensions");
    }
    for (double v : data_) {
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::NonFiniteImage, "image contains a non-finite value");
        }
    }
}

Image Image::zeros(std::size_t height, std::size_t width, std::size_t channels)
{
    return Image(height, width, channels, std::vector<double>(height * width * channels, 0.0));
}

LabelMap::LabelMap(std::size_t height, std::size_t width, Label fill)
    : height_(height), width_(width), labels_(height * width, fill)
{
}

LabelMap::LabelMap(std::size_t height, std::size_t width, std::vector<Label> labels)
    : height_(height), width_(width), labels_(std::move(labels))
{
    if (labels_.size() != height_ * width_) {
        throw Error(ErrorCode::ShapeMismatch, "label data length does not match dimensions");
    }
}

std::size_t LabelMap::count(Label label) const
{
    return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), label));
}

Field::Field(std::size_t height, std::size_t width, std::size_t depth, double fill)
    : height_(height), width_(width), depth_(depth), data_(height * width * depth, fill)
{
}

ProbMap::ProbMap(std::size_t height, std::size_t width, std::size_t classes, std::vector<double> probs)
    : height_(height), width_(width), classes_(classes), probs_(std::move(probs))
{
    if (classes_ == 0 || probs_.size() != height_ * width_ * classes_) {
        throw Error(ErrorCode::ShapeMismatch, "probability data length does not match dimensions");
    }
    for (std::size_t i = 0; i < pixels(); ++i) {
        double sum = 0.0;
        for (double p : pixel(i)) {
            if (!(p >= 0.0 && p <= 1.0)) {
                throw Error(ErrorCode::NotASimplex, "entry outside [0, 1] at pixel " + std::to_string(i));
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > kSimplexTolerance) {
            throw Error(ErrorCode::NotASimplex, "row does not sum to 1 at pixel " + std::to_string(i));
        }
    }
}

ProbMap ProbMap::from_logits(const Field& logits)
{
    std::vector<double> probs(logits.data().size());
    const std::size_t m = logits.depth();
    for (std::size_t i = 0; i < logits.pixels(); ++i) {
        softmax_into(logits.pixel(i), std::span<double>(probs.data() + i * m, m));
    }
    return ProbMap(logits.height(), logits.width(), m, std::move(probs));
}

ProbMap ProbMap::uniform(std::size_t height, std::size_t width, std::size_t classes)
{
    return ProbMap(height, width, classes,
                   std::vector<double>(height * width * classes, 1.0 / static_cast<double>(classes)));
}

LabelMap ProbMap::argmax() const
{
    LabelMap out(height_, width_, kBackground);
    for (std::size_t i = 0; i < pixels(); ++i) {
        auto row = pixel(i);
        out[i] = static_cast<Label>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

Field ProbMap::as_field() const
{
    Field f(height_, width_, classes_);
    std::copy(probs_.begin(), probs_.end(), f.data().begin());
    return f;
}

ClassSet::ClassSet(std::size_t classes_, std::vector<Label> connected_)
    : classes(classes_), connected(std::move(connected_))
{
    for (Label k : connected) {
        if (k == kBackground) {
            throw Error(ErrorCode::InvalidArgument, "background cannot be a connected class");
        }
        if (k >= classes) {
            throw Error(ErrorCode::ClassOutOfRange, "connected class " + std::to_string(k));
        }
    }
}

std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double SeededRng::uniform()
{
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t SeededRng::uniform_int(std::size_t n)
{
    if (n <= 1) {
        return 0;
    }
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = engine_();
    while (x >= limit) {
        x = engine_();
    }
    return static_cast<std::size_t>(x % bound);
}

double SeededRng::normal(double mean, double stddev)
{
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

SeededRng SeededRng::fork(std::uint64_t stream) const
{
    return SeededRng(splitmix64(seed_ ^ splitmix64(stream)));
}

void softmax_into(std::span<const double> logits, std::span<double> out)
{
    double hi = -std::numeric_limits<double>::infinity();
    for (double z : logits) {
        if (!std::isfinite(z)) {
            throw Error(ErrorCode::NonFiniteLogits, "softmax input contains a non-finite value");
        }
        hi = std::max(hi, z);
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        out[k] = std::exp(logits[k] - hi);
        sum += out[k];
    }
    for (double& p : out) {
        p /= sum;
    }
}

std::vector<double> softmax(std::span<const double> logits)
{
    std::vector<double> out(logits.size());
    softmax_into(logits, out);
    return out;
}

ProbMap one_hot(const LabelMap& labels, std::size_t classes)
{
    if (classes == 0 || classes > kMaxClasses) {
        throw Error(ErrorCode::InvalidArgument, "class count out of range");
    }
    std::vector<double> probs(labels.pixels() * classes, 0.0);
    const double uniform = 1.0 / static_cast<double>(classes);
    for (std::size_t i = 0; i < labels.pixels(); ++i) {
        const Label k = labels[i];
        double* row = probs.data() + i * classes;
        if (k == kUnlabeled) {
            std::fill(row, row + classes, uniform);
        } else if (k >= classes) {
            throw Error(ErrorCode::ClassOutOfRange, "label " + std::to_string(k) + " at pixel " + std::to_string(i));
        } else {
            row[k] = 1.0;
        }
    }
    return ProbMap(labels.height(), labels.width(), classes, std::move(probs));
}

Field label_weights(const LabelMap& labels, std::size_t classes)
{
    Field w(labels.height(), labels.width(), classes);
    for (std::size_t i = 0; i < labels.pixels(); ++i) {
        const Label k = labels[i];
        if (k == kUnlabeled) {
            continue;
        }
        if (k >= classes) {
            throw Error(ErrorCode::ClassOutOfRange, "label " + std::to_string(k) + " at pixel " + std::to_string(i));
        }
        w(i, k) = 1.0;
    }
    return w;
}

}  // namespace scribble
