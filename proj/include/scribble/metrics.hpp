#pragma once

#include "scribble/core.hpp"

#include <limits>
#include <vector>

namespace scribble {

/// 2|P n G| / (|P| + |G|) for class k; 1 when both are empty.
double dice(const LabelMap& pred, const LabelMap& gt, Label k);

/// Symmetric Hausdorff distance in pixels between the boundary pixels of the
/// two class-k masks (mask pixels with a 4-neighbour outside the mask or the
/// image). 0 when both masks are empty, +infinity when only one is.
double hausdorff(const LabelMap& pred, const LabelMap& gt, Label k);

struct MetricReport {
    std::vector<double> dice;       // per class, background included
    std::vector<double> hausdorff;  // per class, may be +infinity
    double mean_dice = 0.0;         // over foreground classes
    double mean_hausdorff = 0.0;
};

MetricReport evaluate(const LabelMap& pred, const LabelMap& gt, std::size_t classes);

/// Per-class averages of several reports (means recomputed from the averages).
MetricReport average(const std::vector<MetricReport>& reports);

}  // namespace scribble
