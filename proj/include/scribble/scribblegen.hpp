#pragma once

// Synthetic scribble annotation: points, random walks, directed random walks
// and skeletons drawn inside ground-truth class masks.

#include "scribble/core.hpp"
#include "scribble/morphology.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace scribble {

enum class ScribbleForm { Points, RandomWalk, DirRandomWalk, Skeleton };

std::string_view form_name(ScribbleForm form);
std::optional<ScribbleForm> parse_form(std::string_view name);

struct ScribbleBudget {
    enum class Mode { Pixels, Draws };
    Mode mode = Mode::Pixels;
    /// Per class: n_l^k pixels (Pixels) or d_k manual draws (Draws).
    std::vector<std::size_t> values;

    static ScribbleBudget pixels(std::size_t classes, std::size_t per_class);
    static ScribbleBudget draws(std::size_t classes, std::size_t per_class);
};

struct ScribbleOptions {
    std::size_t step = 1;              // random-walk step length l
    double momentum = 0.9;             // DirRandomWalk direction reuse probability
    std::size_t stroke_length = 16;    // pixels per draw in Draws mode
    std::size_t max_retries = 32;      // consecutive rejected moves before restarting
    std::size_t attempt_factor = 200;  // move attempts allowed per requested pixel
};

struct WalkResult {
    std::vector<std::size_t> pixels;  // distinct, in labeling order
    std::size_t draws = 0;            // number of strokes (starts + restarts)
    bool complete = true;             // false when the budget was unreachable
};

struct ScribbleResult {
    LabelMap scribbles;
    std::vector<std::size_t> draws;  // per class
    bool complete = true;
};

struct ScribbleStats {
    std::vector<std::size_t> labeled;   // n_l^k
    std::vector<std::size_t> total;     // n_k
    std::vector<double> ratio;          // a_k = n_l^k / n_k (0 when n_k == 0)
    std::vector<double> frequency;      // n_l^k / n_l
    std::size_t labeled_total = 0;
    std::size_t unlabeled_total = 0;
};

/// Exactly budget[k] pixels per present class, uniformly without replacement.
LabelMap gen_points(const LabelMap& gt, std::span<const std::size_t> budget, SeededRng& rng);

WalkResult gen_random_walk(const LabelMap& gt, Label k, std::size_t n_pix, std::size_t step, SeededRng& rng,
                           const ScribbleOptions& opts = {});

WalkResult gen_dir_random_walk(const LabelMap& gt, Label k, std::size_t n_pix, SeededRng& rng,
                               const ScribbleOptions& opts = {});

/// Skeleton of every present class (background included); one draw per
/// 8-connected skeleton component.
ScribbleResult gen_skeleton(const LabelMap& gt, std::size_t classes);

/// Dispatches to the generator for `form` for every class present in `gt`.
ScribbleResult generate_scribbles(const LabelMap& gt, std::size_t classes, ScribbleForm form,
                                  const ScribbleBudget& budget, SeededRng& rng, const ScribbleOptions& opts = {});

ScribbleStats compute_stats(const LabelMap& scribbles, const LabelMap& gt, std::size_t classes);

}  // namespace scribble
