#pragma once

// F1 with both zero-division conventions. Each metric is computed with
// undefined ratios set to 0 (zd0) and to 1 (zd1) and the larger aggregate is
// reported, except that a class nobody predicted and nobody labelled always
// contributes its zd0 value so empty classes cannot inflate the average.

#include <algorithm>
#include <cstddef>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "memekit/error.hpp"
#include "memekit/labels.hpp"

namespace memekit {

struct ClassCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    std::size_t support() const noexcept { return tp + fn; }
    std::size_t predicted() const noexcept { return tp + fp; }
    bool empty_class() const noexcept { return support() == 0 && predicted() == 0; }
};

enum class ZeroDivision { zd0, zd1, max_of_both };

inline std::string_view to_string(ZeroDivision z) {
    switch (z) {
        case ZeroDivision::zd0: return "zd0";
        case ZeroDivision::zd1: return "zd1";
        case ZeroDivision::max_of_both: return "max_of_both";
    }
    return "max_of_both";
}

struct MetricSet {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct F1Report {
    std::vector<std::string> label_names;
    std::vector<ClassCounts> counts;
    std::vector<MetricSet> per_class;  // under the reported convention
    MetricSet macro;
    MetricSet weighted;
    MetricSet micro;
    ZeroDivision convention_used = ZeroDivision::max_of_both;
    std::size_t n_samples = 0;

    double headline(Average avg) const {
        switch (avg) {
            case Average::macro: return macro.f1;
            case Average::weighted: return weighted.f1;
            case Average::micro: return micro.f1;
        }
        return macro.f1;
    }
};

inline std::vector<ClassCounts> confusion_counts(std::span<const LabelVector> preds, std::span<const LabelVector> golds,
                                                 std::size_t n_labels) {
    if (preds.size() != golds.size()) {
        throw Error(ErrorCode::invalid_argument, std::to_string(preds.size()) + " predictions for " +
                                                     std::to_string(golds.size()) + " gold labels");
    }
    if (preds.empty()) throw Error(ErrorCode::empty_input, "nothing to evaluate");
    std::vector<ClassCounts> counts(n_labels);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].size() != n_labels || golds[i].size() != n_labels) {
            throw Error(ErrorCode::label_count, "sample " + std::to_string(i) + " is not sized to the label inventory");
        }
        for (std::size_t c = 0; c < n_labels; ++c) {
            const bool p = preds[i].test(c);
            const bool g = golds[i].test(c);
            if (p && g) ++counts[c].tp;
            if (p && !g) ++counts[c].fp;
            if (!p && g) ++counts[c].fn;
        }
    }
    return counts;
}

namespace detail {

inline double ratio(std::size_t num, std::size_t den, double zero_division) {
    return den == 0 ? zero_division : static_cast<double>(num) / static_cast<double>(den);
}

inline MetricSet class_metrics(std::size_t tp, std::size_t fp, std::size_t fn, double zd) {
    return {ratio(tp, tp + fp, zd), ratio(tp, tp + fn, zd), ratio(2 * tp, 2 * tp + fp + fn, zd)};
}

struct Aggregates {
    std::vector<MetricSet> per_class;
    MetricSet macro, weighted, micro;
};

/// `guard` forces empty classes to zd0 regardless of `zd`.
inline Aggregates aggregate(std::span<const ClassCounts> counts, double zd, bool guard) {
    Aggregates a;
    std::size_t total_support = 0;
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& c : counts) {
        const double class_zd = guard && c.empty_class() ? 0.0 : zd;
        a.per_class.push_back(class_metrics(c.tp, c.fp, c.fn, class_zd));
        total_support += c.support();
        tp += c.tp;
        fp += c.fp;
        fn += c.fn;
    }
    const double n = static_cast<double>(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const auto& m = a.per_class[i];
        a.macro.precision += m.precision / n;
        a.macro.recall += m.recall / n;
        a.macro.f1 += m.f1 / n;
        if (total_support > 0) {
            const double w = static_cast<double>(counts[i].support()) / static_cast<double>(total_support);
            a.weighted.precision += w * m.precision;
            a.weighted.recall += w * m.recall;
            a.weighted.f1 += w * m.f1;
        }
    }
    // micro pools every class; with nothing pooled the whole input is empty
    const double micro_zd = guard && tp + fp + fn == 0 ? 0.0 : zd;
    a.micro = class_metrics(tp, fp, fn, micro_zd);
    return a;
}

inline MetricSet max_of(const MetricSet& a, const MetricSet& b) {
    return {std::max(a.precision, b.precision), std::max(a.recall, b.recall), std::max(a.f1, b.f1)};
}

}  // namespace detail

inline F1Report f1_report(std::span<const LabelVector> preds, std::span<const LabelVector> golds, const TaskMeta& task,
                          ZeroDivision convention = ZeroDivision::max_of_both) {
    F1Report report;
    report.label_names = task.label_names;
    report.counts = confusion_counts(preds, golds, task.n_labels());
    report.n_samples = preds.size();
    report.convention_used = convention;

    const auto zd0 = detail::aggregate(report.counts, 0.0, false);
    const auto zd1 = detail::aggregate(report.counts, 1.0, true);
    switch (convention) {
        case ZeroDivision::zd0:
            report.per_class = zd0.per_class;
            report.macro = zd0.macro;
            report.weighted = zd0.weighted;
            report.micro = zd0.micro;
            break;
        case ZeroDivision::zd1: {
            const auto raw = detail::aggregate(report.counts, 1.0, false);
            report.per_class = raw.per_class;
            report.macro = raw.macro;
            report.weighted = raw.weighted;
            report.micro = raw.micro;
            break;
        }
        case ZeroDivision::max_of_both:
            for (std::size_t c = 0; c < report.counts.size(); ++c) {
                report.per_class.push_back(detail::max_of(zd0.per_class[c], zd1.per_class[c]));
            }
            report.macro = detail::max_of(zd0.macro, zd1.macro);
            report.weighted = detail::max_of(zd0.weighted, zd1.weighted);
            report.micro = detail::max_of(zd0.micro, zd1.micro);
            break;
    }
    return report;
}

inline Json f1_report_to_json(const F1Report& r, Average headline) {
    auto metrics = [](const MetricSet& m) { return Json{{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}}; };
    Json classes = Json::array();
    for (std::size_t c = 0; c < r.label_names.size(); ++c) {
        Json rec = metrics(r.per_class[c]);
        rec["label"] = r.label_names[c];
        rec["support"] = r.counts[c].support();
        rec["tp"] = r.counts[c].tp;
        rec["fp"] = r.counts[c].fp;
        rec["fn"] = r.counts[c].fn;
        classes.push_back(std::move(rec));
    }
    Json j;
    j["average"] = std::string(to_string(headline));
    j["f1"] = r.headline(headline);
    j["convention"] = std::string(to_string(r.convention_used));
    j["n_samples"] = r.n_samples;
    j["macro"] = metrics(r.macro);
    j["weighted"] = metrics(r.weighted);
    j["micro"] = metrics(r.micro);
    j["per_class"] = std::move(classes);
    return j;
}

/// Aligned plain-text table, one row per class plus the three averages.
inline std::string f1_report_table(const F1Report& r) {
    std::size_t width = 8;
    for (const auto& name : r.label_names) width = std::max(width, name.size());
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << std::left << std::setw(static_cast<int>(width)) << "label" << std::right << std::setw(11) << "precision"
        << std::setw(10) << "recall" << std::setw(10) << "f1" << std::setw(10) << "support" << '\n';
    auto row = [&](std::string_view name, const MetricSet& m, std::size_t support) {
        out << std::left << std::setw(static_cast<int>(width)) << name << std::right << std::setw(11) << m.precision
            << std::setw(10) << m.recall << std::setw(10) << m.f1 << std::setw(10) << support << '\n';
    };
    std::size_t total = 0;
    for (std::size_t c = 0; c < r.label_names.size(); ++c) {
        row(r.label_names[c], r.per_class[c], r.counts[c].support());
        total += r.counts[c].support();
    }
    row("macro", r.macro, total);
    row("weighted", r.weighted, total);
    row("micro", r.micro, total);
    return out.str();
}

}  // namespace memekit
