#pragma once

// Synthetic nested-shape benchmark and the training loop that wires
// augmentation, pi estimation, spatial energy and the losses together.

#include "scribble/core.hpp"
#include "scribble/energy.hpp"
#include "scribble/estimator.hpp"
#include "scribble/losses.hpp"
#include "scribble/metrics.hpp"
#include "scribble/mixaug.hpp"
#include "scribble/model.hpp"
#include "scribble/scribblegen.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace scribble {

/// Class 1 is a disk, class 2 a ring around it and class 3 a blob touching the
/// ring from outside. Extra classes (m > 4) are further blobs; m < 4 drops the
/// later shapes. The background carries a smooth bias field and a few bright
/// clutter spots that are labeled background.
struct SynthSpec {
    std::size_t side = 64;
    std::size_t classes = 4;
    double noise = 0.1;
    std::size_t count = 15;
    std::uint64_t seed = 0;
    double bias = 0.08;           // amplitude of the low-frequency additive field
    std::size_t clutter = 3;      // background spots per image
    double jitter = 0.06;         // centre offset range, fraction of the side
    std::vector<double> intensity{0.2, 0.85, 0.45, 0.65};  // base value per class

    // Radii are fractions of the side.
    double disk_min = 0.11, disk_max = 0.16;
    double ring_min = 0.05, ring_max = 0.08;  // ring thickness
    double blob_min = 0.09, blob_max = 0.14;

    void validate() const;
    double class_intensity(std::size_t k) const;
};

struct Sample {
    Image image;
    LabelMap truth;
};

std::vector<Sample> synth_dataset(const SynthSpec& spec);

enum class Augment { None, Mix };

struct TrainConfig {
    std::size_t epochs = 300;
    double learning_rate = 0.05;
    std::size_t batch_size = 4;
    LossWeights losses;
    EnergyConfig energy;
    MixConfig mix;
    EmConfig em;
    Augment augment = Augment::Mix;
    double occlusion_side = -1.0;  // < 0: default for the image side, 0: off
    SaliencyMode saliency = SaliencyMode::ImageGradient;
    bool spatial_background = true;  // split the background class as well
    std::vector<Label> connected;     // shape-regularised classes; empty means all foreground
    ScribbleForm form = ScribbleForm::DirRandomWalk;
    ScribbleBudget budget = ScribbleBudget::pixels(4, 40);
    ScribbleOptions scribble;
    std::uint64_t seed = 0;

    void validate() const;
};

/// PCE only, no augmentation.
TrainConfig pce_only(TrainConfig cfg);
/// PCE with mixing, occlusion and global consistency.
TrainConfig pce_mix_global(TrainConfig cfg);

struct EpochLog {
    std::size_t epoch = 0;
    double pce = 0.0;
    double global = 0.0;
    double spatial = 0.0;
    double shape = 0.0;
    double total = 0.0;
    double mean_dice = 0.0;
    std::vector<double> pi;  // estimate used this epoch, empty before warm-up
};

struct TrainResult {
    PixelModel model;
    std::vector<EpochLog> log;
    MetricReport report;  // on the test split after the last epoch
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Scribbles for every sample, one forked stream per sample.
std::vector<LabelMap> make_scribbles(const std::vector<Sample>& samples, const TrainConfig& cfg);

TrainResult train(const std::vector<Sample>& train_set, const std::vector<LabelMap>& scribbles,
                  const std::vector<Sample>& test_set, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

MetricReport evaluate_model(const PixelModel& model, const std::vector<Sample>& samples, std::size_t classes);

/// One batch item with every target frozen: the unmixed image, the two mixed
/// images with their soft labels and consistency targets, the spatial split
/// and the shape target.
struct FrozenItem {
    Features features;
    const LabelMap* scribbles = nullptr;
    bool mixed = false;
    Features features12, features21;
    Field weights12, weights21;  // mixed soft labels
    Field target12, target21;    // consistency targets u
    std::optional<ClassSplit> split;
    std::optional<ShapeTarget> shape;
};

struct ItemLoss {
    double pce = 0.0, global = 0.0, spatial = 0.0, shape = 0.0, total = 0.0;
    PixelModel grad_pce, grad_global, grad_spatial, grad_shape, grad_total;
};

/// Loss terms and their parameter gradients for one item. Terms with zero
/// weight are skipped and leave a zero gradient.
ItemLoss item_loss(const PixelModel& model, const FrozenItem& item, const EffectiveWeights& weights);

struct AuditInput {
    Image image;
    LabelMap scribbles;
    Image partner;
    LabelMap partner_scribbles;
    std::vector<double> pi;  // one entry per class
};

struct GradientAudit {
    double pce = 0.0, global = 0.0, spatial = 0.0, shape = 0.0, total = 0.0;  // max relative error
};

/// Freezes every target at `model`, then compares the analytic gradient of each
/// term and of the weighted total with central differences over all parameters.
GradientAudit finite_diff_audit(const PixelModel& model, const AuditInput& input, const TrainConfig& cfg,
                                double step = 1e-5);

/// Relative error used by the audit: |a - n| / max(1e-6, |a|, |n|).
double relative_error(double analytic, double numeric);

}  // namespace scribble
