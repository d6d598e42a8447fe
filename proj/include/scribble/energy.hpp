#pragma once

// Local Gaussian spatial energy and the top-pi positive/negative split.

#include "scribble/core.hpp"
#include "scribble/morphology.hpp"

#include <vector>

namespace scribble {

struct EnergyConfig {
    double sigma_position = 6.0;   // sigma_p, pixels
    double sigma_intensity = 0.1;  // sigma_o, intensity units
    std::size_t radius = 5;        // Chebyshev window radius r
    bool include_self = false;     // add the j == i term

    void validate() const;
};

/// exp(-|p_i - p_j|^2 / (2 sigma_p^2) - |o_i - o_j|^2 / (2 sigma_o^2)); o is
/// the channel vector, compared with the Euclidean norm.
double gaussian_kernel(const Image& image, std::size_t i, std::size_t j, const EnergyConfig& cfg);

/// Precomputed kernel weights G_ij for every pixel i and every offset of the
/// (2r+1)^2 window. Weights outside the image are 0, and the centre weight is 0
/// unless include_self is set. Depends only on the image, so it can be cached
/// across training steps.
class AffinityWindow {
public:
    AffinityWindow(const Image& image, const EnergyConfig& cfg);

    Shape shape() const noexcept { return shape_; }
    std::size_t radius() const noexcept { return radius_; }
    std::size_t taps() const noexcept { return taps_; }
    std::span<const double> weights(std::size_t i) const { return {weights_.data() + i * taps_, taps_}; }

private:
    Shape shape_;
    std::size_t radius_;
    std::size_t taps_;
    std::vector<double> weights_;
};

/// Phi^k_i = sum_{j in window(i), j != i} G_ij y_i^k y_j^k. O(N r^2).
std::vector<double> spatial_energy(const ProbMap& pred, const AffinityWindow& window, std::size_t k);
std::vector<double> spatial_energy(const ProbMap& pred, const Image& image, std::size_t k, const EnergyConfig& cfg);

struct SplitSets {
    std::vector<std::size_t> positive;  // Omega_k, raster order
    std::vector<std::size_t> negative;  // complement within the unlabeled set, raster order
};

/// Per-class splits over the unlabeled pixels. Classes without a split have
/// `active[k] == false` and contribute nothing to the spatial prior loss.
struct ClassSplit {
    std::vector<SplitSets> sets;
    std::vector<bool> active;

    explicit ClassSplit(std::size_t classes = 0) : sets(classes), active(classes, false) {}
    std::size_t classes() const noexcept { return sets.size(); }
    std::size_t negative_total() const;
};

/// Half-up rounding of pi_k * n_u.
std::size_t positive_count(double pi_k, std::size_t unlabeled);

/// Ranks unlabeled pixels by energy (descending, ties by ascending raster
/// index) and takes the top round(pi_k * n_u) as positives.
SplitSets rank_select(std::span<const double> energy, const BinaryMask& unlabeled, double pi_k);

}  // namespace scribble
