#include "scribble/losses.hpp"

#include <algorithm>
#include <cmath>

namespace scribble {

void LossWeights::validate() const
{
    if (!(global >= 0.0) || !(spatial >= 0.0) || !(shape >= 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "loss weights must be non-negative");
    }
}

EffectiveWeights effective_weights(const LossWeights& weights, std::size_t epoch)
{
    const bool warm = epoch >= weights.warmup_epochs;
    EffectiveWeights w;
    w.global = weights.global;
    w.spatial = warm ? weights.spatial : 0.0;
    w.shape = (weights.gate_shape && !warm) ? 0.0 : weights.shape;
    return w;
}

void softmax_backward(std::span<const double> probs, std::span<const double> dprob, std::span<double> dlogits)
{
    double dot = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        dot += probs[k] * dprob[k];
    }
    for (std::size_t k = 0; k < probs.size(); ++k) {
        dlogits[k] = probs[k] * (dprob[k] - dot);
    }
}

LossValue pce_loss(const ProbMap& pred, const Field& weights)
{
    require_same_shape(pred.shape(), weights.shape(), "pce_loss");
    if (weights.depth() != pred.classes()) {
        throw Error(ErrorCode::ShapeMismatch, "pce_loss: class count differs");
    }
    const std::size_t m = pred.classes();
    LossValue out;
    out.gradient = Field(pred.height(), pred.width(), m);
    for (std::size_t i = 0; i < pred.pixels(); ++i) {
        auto w = weights.pixel(i);
        double mass = 0.0;
        for (double v : w) {
            mass += v;
        }
        if (mass > 0.0) {
            ++out.active;
        }
    }
    if (out.active == 0) {
        throw Error(ErrorCode::NoSupervision, "no labeled pixels");
    }
    const double norm = 1.0 / static_cast<double>(out.active);
    for (std::size_t i = 0; i < pred.pixels(); ++i) {
        auto w = weights.pixel(i);
        auto p = pred.pixel(i);
        auto g = out.gradient.pixel(i);
        // -w_k log p_k contributes w_k (p_j - delta_jk) to dz_j unless clamped.
        double live_mass = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            if (w[k] == 0.0) {
                continue;
            }
            if (p[k] < kLogClamp) {
                out.value -= w[k] * std::log(kLogClamp);
                ++out.saturated;
                continue;
            }
            out.value -= w[k] * std::log(p[k]);
            live_mass += w[k];
            g[k] -= w[k];
        }
        if (live_mass == 0.0 && std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; })) {
            continue;
        }
        for (std::size_t j = 0; j < m; ++j) {
            g[j] = (g[j] + live_mass * p[j]) * norm;
        }
    }
    out.value *= norm;
    return out;
}

LossValue pce_loss(const ProbMap& pred, const LabelMap& scribbles)
{
    return pce_loss(pred, label_weights(scribbles, pred.classes()));
}

LossValue negative_cosine(const Field& u, const ProbMap& v)
{
    require_same_shape(u.shape(), v.shape(), "negative_cosine");
    if (u.depth() != v.classes()) {
        throw Error(ErrorCode::ShapeMismatch, "negative_cosine: class count differs");
    }
    double uv = 0.0, uu = 0.0, vv = 0.0;
    auto ud = u.data();
    auto vd = v.data();
    for (std::size_t n = 0; n < ud.size(); ++n) {
        uv += ud[n] * vd[n];
        uu += ud[n] * ud[n];
        vv += vd[n] * vd[n];
    }
    if (uu == 0.0 || vv == 0.0) {
        throw Error(ErrorCode::DegenerateConsistency, "zero-norm operand");
    }
    const double nu = std::sqrt(uu), nv = std::sqrt(vv);
    LossValue out;
    out.value = -uv / (nu * nv);
    out.active = v.pixels();
    out.gradient = Field(v.height(), v.width(), v.classes());
    // dL/dv = -u / (|u||v|) + <u,v> v / (|u| |v|^3)
    const double a = -1.0 / (nu * nv);
    const double b = uv / (nu * nv * vv);
    std::vector<double> dprob(v.classes());
    for (std::size_t i = 0; i < v.pixels(); ++i) {
        auto ui = u.pixel(i);
        auto vi = v.pixel(i);
        for (std::size_t k = 0; k < v.classes(); ++k) {
            dprob[k] = a * ui[k] + b * vi[k];
        }
        softmax_backward(vi, dprob, out.gradient.pixel(i));
    }
    return out;
}

ConsistencyLoss global_consistency_loss(const Field& u12, const ProbMap& v12, const Field& u21, const ProbMap& v21)
{
    LossValue a = negative_cosine(u12, v12);
    LossValue b = negative_cosine(u21, v21);
    ConsistencyLoss out;
    out.value = 0.5 * (a.value + b.value);
    for (double& g : a.gradient.data()) {
        g *= 0.5;
    }
    for (double& g : b.gradient.data()) {
        g *= 0.5;
    }
    out.gradient12 = std::move(a.gradient);
    out.gradient21 = std::move(b.gradient);
    return out;
}

LossValue spatial_prior_loss(const ProbMap& pred, const ClassSplit& splits)
{
    if (splits.classes() != pred.classes()) {
        throw Error(ErrorCode::ShapeMismatch, "spatial_prior_loss: class count differs");
    }
    const std::size_t m = pred.classes();
    LossValue out;
    out.gradient = Field(pred.height(), pred.width(), m);
    out.active = splits.negative_total();
    if (out.active == 0) {
        return out;
    }
    const double norm = 1.0 / static_cast<double>(out.active);
    for (std::size_t k = 0; k < m; ++k) {
        if (!splits.active[k]) {
            continue;
        }
        for (std::size_t i : splits.sets[k].negative) {
            if (i >= pred.pixels()) {
                throw Error(ErrorCode::ShapeMismatch, "split index outside prediction");
            }
            auto p = pred.pixel(i);
            double rest = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                if (j != k) {
                    rest += p[j];
                }
            }
            if (rest < kLogClamp) {
                out.value -= std::log(kLogClamp);
                ++out.saturated;
                continue;
            }
            out.value -= std::log(rest);
            // d/dz_j -log(1 - p_k) = p_k (delta_jk - p_j) / (1 - p_k)
            auto g = out.gradient.pixel(i);
            const double scale = p[k] / rest * norm;
            for (std::size_t j = 0; j < m; ++j) {
                g[j] += scale * ((j == k ? 1.0 : 0.0) - p[j]);
            }
        }
    }
    out.value *= norm;
    return out;
}

std::size_t ShapeTarget::pixels() const
{
    std::size_t n = 0;
    for (const auto& mask : masks) {
        n += mask.popcount();
    }
    return n;
}

ShapeTarget shape_target(const ProbMap& pred, const ClassSet& classes, Connectivity connectivity)
{
    if (classes.classes != pred.classes()) {
        throw Error(ErrorCode::ShapeMismatch, "shape_target: class count differs");
    }
    ShapeTarget target;
    if (classes.connected.empty()) {
        return target;
    }
    const LabelMap hard = pred.argmax();
    for (Label k : classes.connected) {
        target.classes.push_back(k);
        target.masks.push_back(largest_component(BinaryMask::of_class(hard, k), connectivity));
    }
    return target;
}

LossValue shape_loss(const ProbMap& pred, const ShapeTarget& target)
{
    const std::size_t m = pred.classes();
    LossValue out;
    out.gradient = Field(pred.height(), pred.width(), m);
    out.active = target.pixels();
    if (out.active == 0) {
        return out;
    }
    const double norm = 1.0 / static_cast<double>(out.active);
    for (std::size_t t = 0; t < target.classes.size(); ++t) {
        const Label k = target.classes[t];
        const BinaryMask& mask = target.masks[t];
        require_same_shape(pred.shape(), mask.shape(), "shape_loss");
        for (std::size_t i = 0; i < mask.pixels(); ++i) {
            if (!mask[i]) {
                continue;
            }
            auto p = pred.pixel(i);
            if (p[k] < kLogClamp) {
                out.value -= std::log(kLogClamp);
                ++out.saturated;
                continue;
            }
            out.value -= std::log(p[k]);
            auto g = out.gradient.pixel(i);
            for (std::size_t j = 0; j < m; ++j) {
                g[j] += (p[j] - (j == k ? 1.0 : 0.0)) * norm;
            }
        }
    }
    out.value *= norm;
    return out;
}

LossValue shape_loss(const ProbMap& pred, const ClassSet& classes, Connectivity connectivity)
{
    return shape_loss(pred, shape_target(pred, classes, connectivity));
}

LossValue total_loss(const LossParts& parts, const LossWeights& weights, std::size_t epoch)
{
    const EffectiveWeights w = effective_weights(weights, epoch);
    LossValue out;
    out.value = parts.pce.value;
    out.gradient = parts.pce.gradient;
    out.active = parts.pce.active;
    auto add = [&](const LossValue& part, double scale) {
        if (scale == 0.0) {
            return;
        }
        out.value += scale * part.value;
        if (part.gradient.data().empty()) {
            return;
        }
        if (part.gradient.data().size() != out.gradient.data().size()) {
            throw Error(ErrorCode::ShapeMismatch, "total_loss: part gradients differ in shape");
        }
        auto dst = out.gradient.data();
        auto src = part.gradient.data();
        for (std::size_t n = 0; n < dst.size(); ++n) {
            dst[n] += scale * src[n];
        }
    };
    add(parts.global, w.global);
    add(parts.spatial, w.spatial);
    add(parts.shape, w.shape);
    return out;
}

}  // namespace scribble
