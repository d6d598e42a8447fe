#include "scribble/estimator.hpp"

#include <algorithm>
#include <cmath>

namespace scribble {

namespace {

// Deterministic pairwise summation; keeps the M-step sum order fixed.
double pairwise_sum(const double* v, std::size_t n, std::size_t stride)
{
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s += v[i * stride];
        }
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(v, half, stride) + pairwise_sum(v + half * stride, n - half, stride);
}

void check_pi(std::span<const double> pi, std::size_t classes)
{
    if (pi.size() != classes) {
        throw Error(ErrorCode::ShapeMismatch, "pi has the wrong number of classes");
    }
    double sum = 0.0;
    for (double p : pi) {
        if (!(p >= 0.0)) {
            throw Error(ErrorCode::NotASimplex, "pi has a negative entry");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > ProbMap::kSimplexTolerance) {
        throw Error(ErrorCode::NotASimplex, "pi does not sum to 1");
    }
}

std::vector<double> ratio_weights(const PosteriorBatch& batch, std::span<const double> pi)
{
    std::vector<double> w(batch.classes);
    for (std::size_t k = 0; k < batch.classes; ++k) {
        w[k] = pi[k] / std::max(batch.labeled_frequency[k], kFrequencyFloor);
    }
    return w;
}

}  // namespace

PosteriorBatch::PosteriorBatch(std::size_t classes_, std::vector<double> posteriors_, std::vector<double> frequency)
    : classes(classes_), posteriors(std::move(posteriors_)), labeled_frequency(std::move(frequency))
{
    if (classes == 0 || posteriors.size() % classes != 0 || labeled_frequency.size() != classes) {
        throw Error(ErrorCode::ShapeMismatch, "posterior batch dimensions disagree");
    }
    for (std::size_t i = 0; i < count(); ++i) {
        double sum = 0.0;
        for (double p : row(i)) {
            if (!(p >= 0.0 && p <= 1.0)) {
                throw Error(ErrorCode::NotASimplex, "posterior entry outside [0, 1]");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > ProbMap::kSimplexTolerance) {
            throw Error(ErrorCode::NotASimplex, "posterior row does not sum to 1");
        }
    }
    for (double f : labeled_frequency) {
        if (!(f >= 0.0)) {
            throw Error(ErrorCode::InvalidArgument, "labeled frequency must be non-negative");
        }
    }
}

PosteriorBatch posterior_batch(const ProbMap& pred, const LabelMap& scribbles)
{
    require_same_shape(pred.shape(), scribbles.shape(), "posterior_batch");
    const std::size_t m = pred.classes();
    std::vector<std::size_t> counts(m, 0);
    std::vector<double> rows;
    for (std::size_t i = 0; i < pred.pixels(); ++i) {
        const Label k = scribbles[i];
        if (k == kUnlabeled) {
            auto p = pred.pixel(i);
            rows.insert(rows.end(), p.begin(), p.end());
        } else if (k < m) {
            ++counts[k];
        } else {
            throw Error(ErrorCode::ClassOutOfRange, "scribble label " + std::to_string(k));
        }
    }
    return PosteriorBatch(m, std::move(rows), init_pi(counts));
}

std::vector<double> init_pi(std::span<const std::size_t> labeled_counts)
{
    std::size_t total = 0;
    for (std::size_t k = 0; k < labeled_counts.size(); ++k) {
        if (labeled_counts[k] == 0) {
            throw Error(ErrorCode::ClassUnobserved, "class " + std::to_string(k) + " has no labeled pixel");
        }
        total += labeled_counts[k];
    }
    std::vector<double> pi(labeled_counts.size());
    for (std::size_t k = 0; k < pi.size(); ++k) {
        pi[k] = static_cast<double>(labeled_counts[k]) / static_cast<double>(total);
    }
    return pi;
}

std::vector<double> init_pi(const ScribbleStats& stats)
{
    return init_pi(stats.labeled);
}

std::vector<double> adapt_posterior(const PosteriorBatch& batch, std::span<const double> pi)
{
    check_pi(pi, batch.classes);
    const std::vector<double> w = ratio_weights(batch, pi);
    const std::size_t m = batch.classes;
    std::vector<double> out(batch.posteriors.size());
    for (std::size_t i = 0; i < batch.count(); ++i) {
        auto p = batch.row(i);
        double denom = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            out[i * m + k] = w[k] * p[k];
            denom += out[i * m + k];
        }
        if (!(denom > 0.0)) {
            throw Error(ErrorCode::DegeneratePosterior, "all adapted terms vanish at unlabeled pixel " + std::to_string(i));
        }
        for (std::size_t k = 0; k < m; ++k) {
            out[i * m + k] /= denom;
        }
    }
    return out;
}

std::vector<double> em_step(const PosteriorBatch& batch, std::span<const double> pi)
{
    if (batch.count() == 0) {
        throw Error(ErrorCode::InvalidArgument, "no unlabeled pixels");
    }
    const std::vector<double> adapted = adapt_posterior(batch, pi);
    std::vector<double> next(batch.classes);
    double total = 0.0;
    for (std::size_t k = 0; k < batch.classes; ++k) {
        next[k] = pairwise_sum(adapted.data() + k, batch.count(), batch.classes) / static_cast<double>(batch.count());
        total += next[k];
    }
    // Rows are normalised individually; remove the accumulated rounding.
    for (double& p : next) {
        p /= total;
    }
    return next;
}

double surrogate_log_likelihood(const PosteriorBatch& batch, std::span<const double> pi)
{
    check_pi(pi, batch.classes);
    const std::vector<double> w = ratio_weights(batch, pi);
    std::vector<double> terms(batch.count());
    for (std::size_t i = 0; i < batch.count(); ++i) {
        auto p = batch.row(i);
        double s = 0.0;
        for (std::size_t k = 0; k < batch.classes; ++k) {
            s += w[k] * p[k];
        }
        terms[i] = std::log(s);
    }
    return pairwise_sum(terms.data(), terms.size(), 1);
}

PiEstimate estimate_pi(const PosteriorBatch& batch, std::span<const double> pi0, const EmConfig& cfg)
{
    if (!(cfg.tolerance > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "EM tolerance must be positive");
    }
    check_pi(pi0, batch.classes);
    PiEstimate est;
    est.pi.assign(pi0.begin(), pi0.end());
    est.trace.push_back(surrogate_log_likelihood(batch, est.pi));
    while (est.iterations < cfg.max_iterations) {
        std::vector<double> next = em_step(batch, est.pi);
        double change = 0.0;
        for (std::size_t k = 0; k < next.size(); ++k) {
            change = std::max(change, std::abs(next[k] - est.pi[k]));
        }
        est.pi = std::move(next);
        ++est.iterations;
        est.trace.push_back(surrogate_log_likelihood(batch, est.pi));
        if (change < cfg.tolerance) {
            est.converged = true;
            break;
        }
    }
    return est;
}

}  // namespace scribble
