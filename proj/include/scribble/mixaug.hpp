#pragma once

// Supervision augmentation: saliency-guided block mixup with optimal block
// transport, followed by random rotated-square occlusion.

#include "scribble/core.hpp"
#include "scribble/hungarian.hpp"
#include "scribble/model.hpp"
#include "scribble/morphology.hpp"

#include <optional>
#include <vector>

namespace scribble {

struct SaliencyMap {
    Shape shape;
    std::vector<double> values;
};

enum class SaliencyMode { ImageGradient, LossGradient };

/// Sum over channels of the L2 norm of the central-difference spatial
/// gradient. Borders replicate the edge pixel, giving a half one-sided
/// difference there.
SaliencyMap image_saliency(const Image& image);

/// Per-pixel L2 norm (over channels) of dL_pce/dX through the classifier's
/// feature map.
SaliencyMap loss_saliency(const Image& image, const PixelModel& model, const LabelMap& scribbles);

/// Block-wise mean over a grid x grid partition. Throws GridMismatch when the
/// grid does not divide both sides.
std::vector<double> block_saliency(const SaliencyMap& saliency, std::size_t grid);

/// Per-block channel means, block-major: result[b * channels + ch].
std::vector<double> block_means(const Image& image, std::size_t grid);

struct MixConfig {
    std::size_t grid = 4;                          // blocks per side
    std::vector<double> beta_levels{0.0, 0.5, 1.0};  // sorted, contains 0 and 1
    double label_smoothness = 0.5;                 // gamma_1, on (b_i - b_j)^2
    double image_smoothness = 0.5;                 // gamma_2, on seam intensity jumps
    double prior_weight = 0.2;                     // gamma_3, on -log p(b_i)
    double transport_weight = 0.05;                // gamma_4, on block displacement
    double prior_p = 0.5;                          // binomial parameter of p(b_i)
    bool sample_prior = true;                      // plan_mix draws prior_p ~ U[0.05, 0.95) per pair
    std::size_t icm_restarts = 8;
    std::size_t icm_max_sweeps = 50;
    std::uint64_t icm_seed = 0x5eed;

    void validate() const;
};

/// Inputs of the mask optimisation for one image pair.
struct BetaProblem {
    std::size_t grid = 0;
    std::size_t channels = 1;
    std::vector<double> saliency1;  // per block
    std::vector<double> saliency2;
    std::vector<double> means1;     // per block and channel
    std::vector<double> means2;
};

/// m(b) + g1 sum psi + g2 sum phi - g3 sum log p(b_i), with
///   m(b)       = -sum_b [(1 - b_b) s1_b + b_b s2_b]
///   psi        = (b_i - b_j)^2 over 4-adjacent block pairs (each pair once)
///   phi        = |c_i - c_j| for pairs with b_i != b_j, c_b = (1-b_b) mu1_b + b_b mu2_b
///   p(b_i)     = Binomial(index(b_i); L - 1, prior_p) over the L sorted levels
/// `beta` holds level indices.
double beta_objective(const BetaProblem& problem, const std::vector<std::size_t>& beta, const MixConfig& cfg);

struct BetaSolution {
    std::vector<std::size_t> levels;  // level index per block
    double objective = 0.0;
    std::vector<double> values(const MixConfig& cfg) const;
};

/// Iterated conditional modes from several starts (greedy unary, all-0, all-1,
/// then seeded random); keeps the best.
BetaSolution optimize_beta(const BetaProblem& problem, const MixConfig& cfg);

/// Exact minimiser by enumeration; allowed while levels^blocks <= 2^20.
BetaSolution optimize_beta_exhaustive(const BetaProblem& problem, const MixConfig& cfg);

/// source_of_dest[b] is the source block placed at destination b.
using BlockPermutation = std::vector<std::size_t>;

/// Squared Euclidean distance between block centres, in block units.
double block_distance(std::size_t grid, std::size_t a, std::size_t b);

/// Hungarian solution of max sum_{i->j} w_j s_i - g4 C_ij where w_j = 1 - b_j
/// for the first image and b_j for the second.
BlockPermutation optimize_transport(const std::vector<double>& saliency, const std::vector<double>& beta,
                                    const MixConfig& cfg, int which);

struct Occlusion {
    double center_row = 0.0;
    double center_col = 0.0;
    double side = 0.0;
    double angle = 0.0;  // radians
};

struct MixPlan {
    std::size_t grid = 0;
    std::vector<double> beta;
    BlockPermutation perm1;
    BlockPermutation perm2;
    std::optional<Occlusion> occlusion;

    static MixPlan identity(std::size_t grid, double beta);
    void validate() const;
};

struct MixedPair {
    Image image;
    Field labels;  // per-class soft weights, total <= 1 per pixel
};

Image mix_images(const Image& x1, const Image& x2, const MixPlan& plan);
Field mix_fields(const Field& y1, const Field& y2, const MixPlan& plan);
MixedPair apply_mix(const Image& x1, const Field& y1, const Image& x2, const Field& y2, const MixPlan& plan);
MixedPair apply_mix(const Image& x1, const LabelMap& y1, const Image& x2, const LabelMap& y2,
                    std::size_t classes, const MixPlan& plan);

/// Pixel centres (r, c) whose offset from the centre, rotated by -angle, lies
/// in [-side/2, side/2)^2.
BinaryMask occlusion_mask(Shape shape, const Occlusion& occlusion);

/// Uniform centre in [0, H-1] x [0, W-1] and angle in [0, pi/2).
Occlusion random_occlusion(Shape shape, double side, SeededRng& rng);

/// Zero the image and make the label hard background inside the square.
MixedPair apply_occlusion(const MixedPair& pair, const Occlusion& occlusion);
MixedPair occlude(const MixedPair& pair, double side, SeededRng& rng);

/// Zero `field` inside the occluded square: (1 - 1_b) * field.
Field mask_outside(const Field& field, const Occlusion& occlusion);

/// round(32 / 192 * side), at least 1.
std::size_t default_occlusion_side(std::size_t image_side);

/// Saliency -> mask -> transports (+ occlusion when side > 0). With
/// sample_prior set, the binomial parameter is drawn first from `rng`.
MixPlan plan_mix(const Image& x1, const Image& x2, const SaliencyMap& s1, const SaliencyMap& s2,
                 const MixConfig& cfg, double occlusion_side, SeededRng& rng);

}  // namespace scribble
