#pragma once

// k-means++ seeding followed by Lloyd iterations, all in double precision.
// Stops after max_iter iterations or once the summed squared centroid shift
// drops to tol * (mean per-dimension variance of the data).
// An empty cluster is re-seeded with the point farthest from its assigned
// centroid (lowest index on ties), which cannot raise the SSE.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "memekit/embedding.hpp"
#include "memekit/error.hpp"
#include "memekit/parallel.hpp"
#include "memekit/rng.hpp"

namespace memekit {

struct KMeansOptions {
    std::size_t k = 2;
    std::size_t max_iter = 300;
    double tol = 1e-4;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

struct KMeansResult {
    std::vector<std::vector<double>> centroids;
    std::vector<std::size_t> assignment;
    std::vector<double> sse_history;  // SSE after each assignment step
    std::size_t iterations = 0;
    bool converged = false;

    double sse() const { return sse_history.empty() ? 0.0 : sse_history.back(); }
};

namespace detail {

inline double sq_dist(std::span<const float> x, const std::vector<double>& c) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - c[i];
        s += d * d;
    }
    return s;
}

inline std::vector<double> as_double(std::span<const float> x) { return {x.begin(), x.end()}; }

inline std::vector<std::vector<double>> kmeanspp_init(const EmbeddingMatrix& data, std::size_t k, Rng& rng) {
    const std::size_t n = data.rows();
    std::vector<std::vector<double>> centroids;
    centroids.push_back(as_double(data.row(static_cast<std::size_t>(rng.below(n)))));
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(data.row(i), centroids.back());

    while (centroids.size() < k) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick = 0;
        if (total <= 0.0) {
            // every point coincides with a centroid: take the first unused index
            pick = centroids.size() % n;
        } else {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc > target && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.push_back(as_double(data.row(pick)));
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(data.row(i), centroids.back()));
    }
    return centroids;
}

}  // namespace detail

inline KMeansResult kmeans(const EmbeddingMatrix& data, const KMeansOptions& opt) {
    const std::size_t n = data.rows();
    const std::size_t dim = data.dim();
    if (opt.k == 0) throw Error(ErrorCode::out_of_range, "k must be at least 1");
    if (opt.k > n) throw Error(ErrorCode::out_of_range, "k=" + std::to_string(opt.k) + " exceeds " + std::to_string(n) + " points");

    // convergence scale: mean per-dimension variance
    double mean_var = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += data.row(i)[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (data.row(i)[j] - mean) * (data.row(i)[j] - mean);
        mean_var += var / static_cast<double>(n);
    }
    if (dim > 0) mean_var /= static_cast<double>(dim);
    const double shift_tol = opt.tol * mean_var;

    Rng rng(opt.seed);
    KMeansResult result;
    result.centroids = detail::kmeanspp_init(data, opt.k, rng);
    result.assignment.assign(n, 0);
    std::vector<double> point_d2(n);

    auto assign = [&] {
        parallel_for(n, opt.threads, [&](std::size_t i) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t best_c = 0;
            for (std::size_t c = 0; c < result.centroids.size(); ++c) {
                const double d = detail::sq_dist(data.row(i), result.centroids[c]);
                if (d < best) {
                    best = d;
                    best_c = c;
                }
            }
            result.assignment[i] = best_c;
            point_d2[i] = best;
        });
        double sse = 0.0;
        for (double d : point_d2) sse += d;
        result.sse_history.push_back(sse);
    };

    assign();
    while (result.iterations < opt.max_iter) {
        ++result.iterations;
        std::vector<std::vector<double>> sums(opt.k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> sizes(opt.k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = data.row(i);
            auto& s = sums[result.assignment[i]];
            for (std::size_t j = 0; j < dim; ++j) s[j] += row[j];
            ++sizes[result.assignment[i]];
        }

        std::vector<bool> taken(n, false);
        double shift = 0.0;
        for (std::size_t c = 0; c < opt.k; ++c) {
            std::vector<double> next(dim);
            if (sizes[c] == 0) {
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (!taken[i] && point_d2[i] > far_d) {
                        far_d = point_d2[i];
                        far = i;
                    }
                }
                taken[far] = true;
                next = detail::as_double(data.row(far));
            } else {
                for (std::size_t j = 0; j < dim; ++j) next[j] = sums[c][j] / static_cast<double>(sizes[c]);
            }
            for (std::size_t j = 0; j < dim; ++j) shift += (next[j] - result.centroids[c][j]) * (next[j] - result.centroids[c][j]);
            result.centroids[c] = std::move(next);
        }
        assign();
        if (shift <= shift_tol) {
            result.converged = true;
            break;
        }
    }
    return result;
}

}  // namespace memekit
