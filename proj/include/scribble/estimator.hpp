#pragma once

// EM estimation of the class mixture ratio pi over unlabeled pixels.

#include "scribble/core.hpp"
#include "scribble/scribblegen.hpp"

#include <vector>

namespace scribble {

/// Labeled class frequencies are floored at this value before division.
inline constexpr double kFrequencyFloor = 1e-6;

struct PosteriorBatch {
    std::size_t classes = 0;
    std::vector<double> posteriors;          // n_u x classes, rows on the simplex
    std::vector<double> labeled_frequency;   // p_l(c_k)

    PosteriorBatch() = default;
    PosteriorBatch(std::size_t classes, std::vector<double> posteriors, std::vector<double> labeled_frequency);

    std::size_t count() const noexcept { return classes == 0 ? 0 : posteriors.size() / classes; }
    std::span<const double> row(std::size_t i) const { return {posteriors.data() + i * classes, classes}; }
};

/// Posterior rows of the unlabeled pixels of `pred`, with frequencies taken
/// from the labeled pixels of `scribbles`.
PosteriorBatch posterior_batch(const ProbMap& pred, const LabelMap& scribbles);

struct EmConfig {
    double tolerance = 1e-6;  // on the L-infinity change of pi
    std::size_t max_iterations = 100;
};

struct PiEstimate {
    std::vector<double> pi;
    std::size_t iterations = 0;
    std::vector<double> trace;  // surrogate log-likelihood at pi^0, pi^1, ...
    bool converged = false;
};

/// pi^0_k = n_l^k / n_l. Throws ClassUnobserved if a class has no labeled pixel.
std::vector<double> init_pi(std::span<const std::size_t> labeled_counts);
std::vector<double> init_pi(const ScribbleStats& stats);

/// p_u(c_k | x_i) = pi_k r_ik / sum_j pi_j r_ij with r_ik = p_l(c_k | x_i) / p_l(c_k).
std::vector<double> adapt_posterior(const PosteriorBatch& batch, std::span<const double> pi);

/// pi_k <- mean_i p_u(c_k | x_i).
std::vector<double> em_step(const PosteriorBatch& batch, std::span<const double> pi);

/// sum_i log sum_k pi_k r_ik, the marginal likelihood EM ascends.
double surrogate_log_likelihood(const PosteriorBatch& batch, std::span<const double> pi);

PiEstimate estimate_pi(const PosteriorBatch& batch, std::span<const double> pi0, const EmConfig& cfg = {});

}  // namespace scribble
