#pragma once

// Training losses with analytic gradients w.r.t. the per-pixel logits.
// Every loss is normalised by the number of pixels it touches.

#include "scribble/core.hpp"
#include "scribble/energy.hpp"
#include "scribble/morphology.hpp"

#include <vector>

namespace scribble {

inline constexpr double kLogClamp = 1e-12;

struct LossValue {
    double value = 0.0;
    Field gradient;             // dL/dlogits, zero where the loss is inactive
    std::size_t active = 0;     // pixels contributing
    std::size_t saturated = 0;  // terms whose probability hit the log clamp
};

struct LossWeights {
    double global = 0.05;  // lambda_1
    double spatial = 1.0;  // lambda_2
    double shape = 1.0;    // lambda_3
    std::size_t warmup_epochs = 30;
    bool gate_shape = false;  // also hold the shape term off during warm-up

    void validate() const;
};

/// Multipliers actually applied at `epoch` (pce is always 1).
struct EffectiveWeights {
    double pce = 1.0;
    double global = 0.0;
    double spatial = 0.0;
    double shape = 0.0;
};
EffectiveWeights effective_weights(const LossWeights& weights, std::size_t epoch);

/// Chain rule through the per-pixel softmax: dL/dz_j = p_j (a_j - sum_k p_k a_k)
/// for a = dL/dp.
void softmax_backward(std::span<const double> probs, std::span<const double> dprob, std::span<double> dlogits);

/// -(1/n_l) sum_labeled sum_k w_k log p_k; labeled means total weight > 0.
LossValue pce_loss(const ProbMap& pred, const Field& weights);
LossValue pce_loss(const ProbMap& pred, const LabelMap& scribbles);

/// -<u, v> / (|u| |v|) over flattened tensors, gradient w.r.t. v's logits
/// (u is a constant target).
LossValue negative_cosine(const Field& u, const ProbMap& v);

struct ConsistencyLoss {
    double value = 0.0;
    Field gradient12;  // dL/dlogits of v12
    Field gradient21;  // dL/dlogits of v21
};

/// 1/2 [L_n(u12, v12) + L_n(u21, v21)].
ConsistencyLoss global_consistency_loss(const Field& u12, const ProbMap& v12, const Field& u21, const ProbMap& v21);

/// -(1/|negatives|) sum_k sum_{x in negative_k} log(sum_{k' != k} p_k'(x)).
LossValue spatial_prior_loss(const ProbMap& pred, const ClassSplit& splits);

/// F(argmax == k) for every connected class k, fixed as the distillation target.
struct ShapeTarget {
    std::vector<Label> classes;
    std::vector<BinaryMask> masks;

    std::size_t pixels() const;
};

ShapeTarget shape_target(const ProbMap& pred, const ClassSet& classes, Connectivity connectivity = Connectivity::Four);

/// -(1/sum|F_k|) sum_k sum_{F_k} log p_k.
LossValue shape_loss(const ProbMap& pred, const ShapeTarget& target);
LossValue shape_loss(const ProbMap& pred, const ClassSet& classes, Connectivity connectivity = Connectivity::Four);

struct LossParts {
    LossValue pce;
    LossValue global;
    LossValue spatial;
    LossValue shape;
};

/// pce + l1 global + l2 spatial + l3 shape, with l2 forced to 0 before warm-up.
/// All part gradients must share one shape (missing parts may be left empty).
LossValue total_loss(const LossParts& parts, const LossWeights& weights, std::size_t epoch);

}  // namespace scribble
