#pragma once

#include <algorithm>
#include <cstddef>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "memekit/corpus.hpp"
#include "memekit/error.hpp"
#include "memekit/kmeans.hpp"
#include "memekit/metric_index.hpp"
#include "memekit/parallel.hpp"

namespace memekit {

enum class Grouping { base, instance, relevant, irrelevant };

/// One item paired with its nearest template. `grouping` is filled in by
/// human annotators and is never computed here.
struct RetrievalPair {
    std::string template_id;
    std::string item_id;
    double distance = 0.0;
    std::optional<Grouping> grouping;
};

/// The n items closest to their nearest template, ascending by distance
/// (dataset order breaks ties). `queries` has one row per item.
inline std::vector<RetrievalPair> retrieval_report(const std::vector<MemeRecord>& items, const EmbeddingMatrix& queries,
                                                   const Index& index, const KnowledgeBase& kb, std::size_t n,
                                                   std::size_t threads = 1) {
    if (n == 0) throw Error(ErrorCode::out_of_range, "n must be at least 1");
    if (n > items.size()) {
        throw Error(ErrorCode::out_of_range, "n=" + std::to_string(n) + " exceeds " + std::to_string(items.size()) + " items");
    }
    if (queries.rows() != items.size()) throw Error(ErrorCode::invalid_argument, "one query row per item required");

    std::vector<Neighbor> nearest(items.size());
    parallel_for(items.size(), threads, [&](std::size_t i) { nearest[i] = index.query(queries.row(i), 1).front(); });

    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return nearest[a].distance < nearest[b].distance; });

    std::vector<RetrievalPair> out;
    out.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        const auto i = order[r];
        out.push_back({kb.templates.at(nearest[i].template_ordinal).template_id, items[i].item_id, nearest[i].distance, std::nullopt});
    }
    return out;
}

inline Json retrieval_pair_to_json(const RetrievalPair& p) {
    Json j;
    j["template_id"] = p.template_id;
    j["item_id"] = p.item_id;
    j["distance"] = p.distance;
    j["grouping"] = nullptr;
    return j;
}

enum class FitSide { kb, dataset };

inline std::string_view to_string(FitSide s) { return s == FitSide::kb ? "kb" : "dataset"; }

inline FitSide parse_fit_side(std::string_view s) {
    if (s == "kb") return FitSide::kb;
    if (s == "dataset") return FitSide::dataset;
    throw Error(ErrorCode::invalid_argument, "unknown side '" + std::string(s) + "'");
}

struct CentroidEntry {
    std::vector<double> centroid;
    std::size_t cluster_size = 0;
    std::string nearest_entry_id;
    double distance = 0.0;
};

struct CentroidReport {
    std::size_t k = 0;
    FitSide fit_side = FitSide::kb;
    std::vector<CentroidEntry> centroids;
    KMeansResult fit;
};

/// Fits k-means on `fit_vectors` and pairs every centroid with the nearest
/// row of `other_vectors` (whose ids are `other_ids`). Distinct nearest
/// entries are not guaranteed.
inline CentroidReport centroid_report(const EmbeddingMatrix& fit_vectors, FitSide side, const EmbeddingMatrix& other_vectors,
                                      const std::vector<std::string>& other_ids, const KMeansOptions& options) {
    if (other_vectors.rows() != other_ids.size()) throw Error(ErrorCode::invalid_argument, "one id per lookup row required");
    if (other_vectors.empty()) throw Error(ErrorCode::empty_input, "nothing to pair centroids with");
    if (other_vectors.dim() != fit_vectors.dim()) {
        throw Error(ErrorCode::dimension_mismatch, "fit side and lookup side have different dims");
    }

    CentroidReport report;
    report.k = options.k;
    report.fit_side = side;
    report.fit = kmeans(fit_vectors, options);

    std::vector<std::size_t> sizes(options.k, 0);
    for (auto a : report.fit.assignment) ++sizes[a];
    for (std::size_t c = 0; c < options.k; ++c) {
        const auto& centroid = report.fit.centroids[c];
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < other_vectors.rows(); ++r) {
            const double d = detail::sq_dist(other_vectors.row(r), centroid);
            if (d < best_d) {
                best_d = d;
                best = r;
            }
        }
        report.centroids.push_back({centroid, sizes[c], other_ids[best], std::sqrt(best_d)});
    }
    return report;
}

inline Json centroid_report_to_json(const CentroidReport& r) {
    Json j;
    j["k"] = r.k;
    j["fit_side"] = std::string(to_string(r.fit_side));
    j["iterations"] = r.fit.iterations;
    j["converged"] = r.fit.converged;
    j["sse_history"] = r.fit.sse_history;
    Json centroids = Json::array();
    for (const auto& c : r.centroids) {
        Json rec;
        rec["nearest_entry_id"] = c.nearest_entry_id;
        rec["distance"] = c.distance;
        rec["cluster_size"] = c.cluster_size;
        rec["centroid"] = c.centroid;
        centroids.push_back(std::move(rec));
    }
    j["centroids"] = std::move(centroids);
    return j;
}

}  // namespace memekit
