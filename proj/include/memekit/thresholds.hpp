#pragma once

// Templateness statistics: how far each template's examples sit from it,
// which distance counts as "still an instance", and OOD bounds.
//
// Quantiles use linear interpolation between closest ranks: for sorted
// values x[0..n-1] and q in [0,1], pos = q*(n-1) and
// Q(q) = x[floor(pos)] + (pos - floor(pos)) * (x[floor(pos)+1] - x[floor(pos)]).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memekit/corpus.hpp"
#include "memekit/error.hpp"
#include "memekit/fusion.hpp"
#include "memekit/metric_index.hpp"
#include "memekit/parallel.hpp"

namespace memekit {

enum class ThresholdMethod { max, median, mean, p25 };

inline std::string_view to_string(ThresholdMethod m) {
    switch (m) {
        case ThresholdMethod::max: return "max";
        case ThresholdMethod::median: return "median";
        case ThresholdMethod::mean: return "mean";
        case ThresholdMethod::p25: return "p25";
    }
    return "max";
}

inline ThresholdMethod parse_threshold_method(std::string_view s) {
    if (s == "max") return ThresholdMethod::max;
    if (s == "median") return ThresholdMethod::median;
    if (s == "mean") return ThresholdMethod::mean;
    if (s == "p25" || s == "percentile") return ThresholdMethod::p25;
    throw Error(ErrorCode::invalid_argument, "unknown threshold method '" + std::string(s) + "'");
}

inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw Error(ErrorCode::no_examples, "quantile of an empty list");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double mean_of(std::span<const double> values) {
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

/// Throws ErrorCode::no_examples on an empty list; callers then use the
/// global fallback.
inline double template_threshold(std::span<const double> dists, ThresholdMethod method) {
    if (dists.empty()) throw Error(ErrorCode::no_examples, "template has no example distances; use the global threshold");
    for (double d : dists) {
        if (!(d >= 0.0)) throw Error(ErrorCode::invalid_argument, "distances must be non-negative");
    }
    std::vector<double> sorted(dists.begin(), dists.end());
    std::sort(sorted.begin(), sorted.end());
    switch (method) {
        case ThresholdMethod::max: return sorted.back();
        case ThresholdMethod::median: return quantile_sorted(sorted, 0.5);
        case ThresholdMethod::mean: return mean_of(sorted);
        case ThresholdMethod::p25: return quantile_sorted(sorted, 0.25);
    }
    return sorted.back();
}

struct ThresholdProfile {
    std::string template_id;
    std::vector<double> dists;
    double threshold = 0.0;
    ThresholdMethod method = ThresholdMethod::max;
    std::size_t n_examples = 0;
    bool fallback = false;  // threshold came from the global value
};

struct GlobalThreshold {
    ThresholdMethod method = ThresholdMethod::max;
    double value = 0.0;
    std::size_t n_contributing_templates = 0;
};

/// The method applied across per-template thresholds of templates that
/// have examples.
inline GlobalThreshold global_threshold(std::span<const ThresholdProfile> profiles, ThresholdMethod method) {
    std::vector<double> values;
    for (const auto& p : profiles) {
        if (p.n_examples >= 1) values.push_back(p.threshold);
    }
    if (values.empty()) throw Error(ErrorCode::no_examples, "no template has examples; global threshold undefined");
    return {method, template_threshold(values, method), values.size()};
}

struct ProfileSet {
    std::vector<ThresholdProfile> profiles;  // KB order
    GlobalThreshold global;

    double threshold_for(std::size_t template_ordinal) const { return profiles.at(template_ordinal).threshold; }
};

/// Per-template distance profiles in the space of `refs`, with templates
/// lacking examples filled from the global threshold.
inline ProfileSet build_profiles(const KnowledgeBase& kb, const ReferenceSet& refs, ThresholdMethod method,
                                 std::size_t threads = 1) {
    ProfileSet set;
    set.profiles.resize(kb.n_templates());
    parallel_for(kb.n_templates(), threads, [&](std::size_t t) {
        auto& p = set.profiles[t];
        p.template_id = kb.templates[t].template_id;
        p.method = method;
        const auto ref = refs.vectors.row(t);
        for (auto row : refs.example_rows[t]) p.dists.push_back(euclidean_distance(ref, refs.vectors.row(row)));
        p.n_examples = p.dists.size();
        if (p.n_examples > 0) p.threshold = template_threshold(p.dists, method);
    });
    set.global = global_threshold(set.profiles, method);
    for (auto& p : set.profiles) {
        if (p.n_examples == 0) {
            p.threshold = set.global.value;
            p.fallback = true;
        }
    }
    return set;
}

enum class Templateness { instance, non_templatic };

/// Boundary counts as an instance: only a distance strictly above the
/// threshold makes an item non-templatic.
inline Templateness classify_item(double distance, double threshold) {
    return distance <= threshold ? Templateness::instance : Templateness::non_templatic;
}

inline Json profiles_to_json(const ProfileSet& set) {
    Json templates = Json::array();
    for (const auto& p : set.profiles) {
        Json rec;
        rec["template_id"] = p.template_id;
        rec["method"] = std::string(to_string(p.method));
        rec["threshold"] = p.threshold;
        rec["n_examples"] = p.n_examples;
        rec["fallback"] = p.fallback;
        templates.push_back(std::move(rec));
    }
    Json global;
    global["method"] = std::string(to_string(set.global.method));
    global["value"] = set.global.value;
    global["n_contributing_templates"] = set.global.n_contributing_templates;
    Json out;
    out["global"] = std::move(global);
    out["templates"] = std::move(templates);
    return out;
}

// ---------------------------------------------------------------- OOD filters

enum class OodKind { iqr, three_sigma, mad, max };

inline std::string_view to_string(OodKind k) {
    switch (k) {
        case OodKind::iqr: return "iqr";
        case OodKind::three_sigma: return "three_sigma";
        case OodKind::mad: return "mad";
        case OodKind::max: return "max";
    }
    return "max";
}

inline OodKind parse_ood_kind(std::string_view s) {
    if (s == "iqr") return OodKind::iqr;
    if (s == "three_sigma") return OodKind::three_sigma;
    if (s == "mad") return OodKind::mad;
    if (s == "max") return OodKind::max;
    throw Error(ErrorCode::invalid_argument, "unknown OOD filter '" + std::string(s) + "'");
}

/// Summary of one template's example distances, enough for every filter
/// kind. Templates with fewer than two examples cannot support the spread
/// based kinds and behave as `max`.
class OodFilter {
public:
    static OodFilter from_dists(std::span<const double> dists, OodKind kind) {
        if (dists.empty()) throw Error(ErrorCode::no_examples, "OOD filter needs at least one distance");
        std::vector<double> sorted(dists.begin(), dists.end());
        std::sort(sorted.begin(), sorted.end());

        OodFilter f;
        f.requested_ = kind;
        f.kind_ = sorted.size() < 2 ? OodKind::max : kind;
        f.max_ = sorted.back();
        f.q1_ = quantile_sorted(sorted, 0.25);
        f.median_ = quantile_sorted(sorted, 0.5);
        f.q3_ = quantile_sorted(sorted, 0.75);
        f.mean_ = mean_of(sorted);
        double var = 0.0;
        double abs_dev = 0.0;
        for (double d : sorted) {
            var += (d - f.mean_) * (d - f.mean_);
            abs_dev += std::abs(d - f.median_);
        }
        f.std_ = std::sqrt(var / static_cast<double>(sorted.size()));
        f.mad_ = abs_dev / static_cast<double>(sorted.size());
        return f;
    }

    OodKind kind() const noexcept { return kind_; }
    OodKind requested_kind() const noexcept { return requested_; }

    double bound() const noexcept {
        switch (kind_) {
            case OodKind::iqr: return q3_ + 1.5 * (q3_ - q1_);
            case OodKind::three_sigma: return mean_ + 3.0 * std_;
            case OodKind::mad: return median_ + 3.0 * mad_;
            case OodKind::max: return max_;
        }
        return max_;
    }

    double q1() const noexcept { return q1_; }
    double q3() const noexcept { return q3_; }
    double median() const noexcept { return median_; }
    double mean() const noexcept { return mean_; }
    double stddev() const noexcept { return std_; }
    double mad() const noexcept { return mad_; }
    double max() const noexcept { return max_; }

private:
    OodKind requested_ = OodKind::max;
    OodKind kind_ = OodKind::max;
    double q1_ = 0, median_ = 0, q3_ = 0, mean_ = 0, std_ = 0, mad_ = 0, max_ = 0;
};

inline bool ood_keep(double distance, const OodFilter& filter) { return distance <= filter.bound(); }

}  // namespace memekit
