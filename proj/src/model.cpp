#include "scribble/model.hpp"

#include <algorithm>
#include <cmath>

namespace scribble {

Features::Features(std::size_t height, std::size_t width, std::size_t dim)
    : height_(height), width_(width), dim_(dim), data_(height * width * dim, 0.0)
{
}

std::size_t reflect101(long index, std::size_t size)
{
    const long n = static_cast<long>(size);
    if (n <= 1) {
        return 0;
    }
    if (index < 0) {
        index = -index;
    }
    if (index >= n) {
        index = 2 * n - 2 - index;
    }
    return static_cast<std::size_t>(std::clamp(index, 0L, n - 1));
}

namespace {

struct WindowMoments {
    double mean = 0.0;
    double std = 0.0;
};

WindowMoments window_moments(const Image& image, std::size_t r, std::size_t c, std::size_t ch)
{
    double sum = 0.0, sum_sq = 0.0;
    for (long dr = -1; dr <= 1; ++dr) {
        for (long dc = -1; dc <= 1; ++dc) {
            const double v = image.at(reflect101(static_cast<long>(r) + dr, image.height()),
                                      reflect101(static_cast<long>(c) + dc, image.width()), ch);
            sum += v;
            sum_sq += v * v;
        }
    }
    WindowMoments m;
    m.mean = sum / 9.0;
    m.std = std::sqrt(std::max(0.0, sum_sq / 9.0 - m.mean * m.mean));
    return m;
}

}  // namespace

Features featurize(const Image& image)
{
    const std::size_t ch_count = image.channels();
    Features f(image.height(), image.width(), feature_dim(ch_count));
    const double x_scale = image.width() > 1 ? 1.0 / static_cast<double>(image.width() - 1) : 0.0;
    const double y_scale = image.height() > 1 ? 1.0 / static_cast<double>(image.height() - 1) : 0.0;
    for (std::size_t r = 0; r < image.height(); ++r) {
        for (std::size_t c = 0; c < image.width(); ++c) {
            auto row = f.pixel(r * image.width() + c);
            for (std::size_t ch = 0; ch < ch_count; ++ch) {
                const WindowMoments m = window_moments(image, r, c, ch);
                row[ch] = image.at(r, c, ch);
                row[ch_count + ch] = m.mean;
                row[2 * ch_count + ch] = m.std;
            }
            row[3 * ch_count] = static_cast<double>(c) * x_scale;
            row[3 * ch_count + 1] = static_cast<double>(r) * y_scale;
            row[3 * ch_count + 2] = 1.0;
        }
    }
    return f;
}

PixelModel PixelModel::zeros(std::size_t feature_dim, std::size_t classes)
{
    PixelModel m;
    m.feature_dim = feature_dim;
    m.classes = classes;
    m.weights.assign(feature_dim * classes, 0.0);
    m.bias.assign(classes, 0.0);
    return m;
}

void PixelModel::add_scaled(const PixelModel& other, double scale)
{
    for (std::size_t i = 0; i < weights.size(); ++i) {
        weights[i] += scale * other.weights[i];
    }
    for (std::size_t k = 0; k < bias.size(); ++k) {
        bias[k] += scale * other.bias[k];
    }
}

bool PixelModel::finite() const
{
    auto ok = [](double v) { return std::isfinite(v); };
    return std::all_of(weights.begin(), weights.end(), ok) && std::all_of(bias.begin(), bias.end(), ok);
}

Field logits(const PixelModel& model, const Features& features)
{
    if (features.dim() != model.feature_dim) {
        throw Error(ErrorCode::FeatureDimMismatch, "model expects " + std::to_string(model.feature_dim) +
                                                       " features, got " + std::to_string(features.dim()));
    }
    Field z(features.height(), features.width(), model.classes);
    for (std::size_t i = 0; i < features.pixels(); ++i) {
        auto f = features.pixel(i);
        auto out = z.pixel(i);
        std::copy(model.bias.begin(), model.bias.end(), out.begin());
        for (std::size_t d = 0; d < f.size(); ++d) {
            const double fd = f[d];
            const double* w = model.weights.data() + d * model.classes;
            for (std::size_t k = 0; k < model.classes; ++k) {
                out[k] += fd * w[k];
            }
        }
    }
    return z;
}

ProbMap predict(const PixelModel& model, const Features& features)
{
    return ProbMap::from_logits(logits(model, features));
}

ProbMap predict(const PixelModel& model, const Image& image)
{
    return predict(model, featurize(image));
}

void accumulate_gradient(const Features& features, const Field& logit_grad, PixelModel& grad, double scale)
{
    if (logit_grad.pixels() != features.pixels() || logit_grad.depth() != grad.classes ||
        features.dim() != grad.feature_dim) {
        throw Error(ErrorCode::ShapeMismatch, "gradient accumulation shapes disagree");
    }
    const std::size_t m = grad.classes;
    for (std::size_t i = 0; i < features.pixels(); ++i) {
        auto g = logit_grad.pixel(i);
        if (std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; })) {
            continue;
        }
        auto f = features.pixel(i);
        for (std::size_t d = 0; d < f.size(); ++d) {
            const double fd = f[d] * scale;
            double* w = grad.weights.data() + d * m;
            for (std::size_t k = 0; k < m; ++k) {
                w[k] += fd * g[k];
            }
        }
        for (std::size_t k = 0; k < m; ++k) {
            grad.bias[k] += scale * g[k];
        }
    }
}

Image input_gradient(const PixelModel& model, const Image& image, const Field& logit_grad)
{
    const std::size_t ch_count = image.channels();
    if (model.feature_dim != feature_dim(ch_count)) {
        throw Error(ErrorCode::FeatureDimMismatch, "model does not match image channels");
    }
    require_same_shape(image.shape(), logit_grad.shape(), "input_gradient");
    const std::size_t h = image.height(), w = image.width(), m = model.classes;
    std::vector<double> out(image.data().size(), 0.0);
    std::vector<double> feat_grad(model.feature_dim);

    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const std::size_t i = r * w + c;
            auto g = logit_grad.pixel(i);
            for (std::size_t d = 0; d < model.feature_dim; ++d) {
                double s = 0.0;
                for (std::size_t k = 0; k < m; ++k) {
                    s += model.weight(d, k) * g[k];
                }
                feat_grad[d] = s;
            }
            for (std::size_t ch = 0; ch < ch_count; ++ch) {
                out[i * ch_count + ch] += feat_grad[ch];
                const WindowMoments mom = window_moments(image, r, c, ch);
                const double g_mean = feat_grad[ch_count + ch] / 9.0;
                const double g_std = mom.std > 1e-12 ? feat_grad[2 * ch_count + ch] / (9.0 * mom.std) : 0.0;
                for (long dr = -1; dr <= 1; ++dr) {
                    for (long dc = -1; dc <= 1; ++dc) {
                        const std::size_t rr = reflect101(static_cast<long>(r) + dr, h);
                        const std::size_t cc = reflect101(static_cast<long>(c) + dc, w);
                        const std::size_t q = rr * w + cc;
                        out[q * ch_count + ch] += g_mean + g_std * (image.at(rr, cc, ch) - mom.mean);
                    }
                }
            }
        }
    }
    return Image(h, w, ch_count, std::move(out));
}

}  // namespace scribble
