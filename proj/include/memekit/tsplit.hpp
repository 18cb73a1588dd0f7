#pragma once

// Template-aware splitting. Every item is reduced to an object (its matched
// template, or a fresh per-item UI when it is too far from every template),
// the distinct objects are shuffled, and whole objects are dealt into
// splits so no object ever spans two of them.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "memekit/corpus.hpp"
#include "memekit/error.hpp"
#include "memekit/metric_index.hpp"
#include "memekit/parallel.hpp"
#include "memekit/rng.hpp"
#include "memekit/thresholds.hpp"

namespace memekit {

enum class ObjectKind { template_object, ui };

struct ObjectId {
    ObjectKind kind = ObjectKind::template_object;
    std::string id;

    static ObjectId for_template(std::string template_id) { return {ObjectKind::template_object, std::move(template_id)}; }
    static ObjectId ui_for(std::string_view item_id) { return {ObjectKind::ui, "UI::" + std::string(item_id)}; }

    friend auto operator<=>(const ObjectId&, const ObjectId&) = default;
    friend bool operator==(const ObjectId&, const ObjectId&) = default;
};

inline std::string_view to_string(ObjectKind k) { return k == ObjectKind::ui ? "ui" : "template"; }

inline ObjectKind parse_object_kind(std::string_view s) {
    if (s == "template") return ObjectKind::template_object;
    if (s == "ui") return ObjectKind::ui;
    throw Error(ErrorCode::bad_manifest, "unknown object kind '" + std::string(s) + "'");
}

struct ItemMatch {
    std::string item_id;
    std::uint32_t template_ordinal = 0;  // nearest template
    double distance = 0.0;
    double threshold = 0.0;
    Templateness templateness = Templateness::instance;
    ObjectId object;
};

/// Nearest-template lookup plus threshold test for every item. `queries`
/// holds one row per item in the same space as the index; the index must
/// cover base templates only.
inline std::vector<ItemMatch> assign_objects(const std::vector<MemeRecord>& items, const EmbeddingMatrix& queries,
                                             const Index& templates, const KnowledgeBase& kb, const ProfileSet& profiles,
                                             std::size_t threads = 1) {
    if (queries.rows() != items.size()) {
        throw Error(ErrorCode::invalid_argument, std::to_string(queries.rows()) + " query rows for " +
                                                     std::to_string(items.size()) + " items");
    }
    if (templates.includes_examples()) {
        throw Error(ErrorCode::invalid_argument, "object assignment needs a templates-only index");
    }
    std::vector<ItemMatch> out(items.size());
    parallel_for(items.size(), threads, [&](std::size_t i) {
        const auto nearest = templates.query(queries.row(i), 1).front();
        auto& m = out[i];
        m.item_id = items[i].item_id;
        m.template_ordinal = nearest.template_ordinal;
        m.distance = nearest.distance;
        m.threshold = profiles.threshold_for(nearest.template_ordinal);
        m.templateness = classify_item(m.distance, m.threshold);
        m.object = m.templateness == Templateness::instance
                       ? ObjectId::for_template(kb.templates.at(nearest.template_ordinal).template_id)
                       : ObjectId::ui_for(m.item_id);
    });
    return out;
}

enum class Split { train, val, test, discard };

inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
        case Split::discard: return "discard";
    }
    return "discard";
}

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    if (s == "discard") return Split::discard;
    throw Error(ErrorCode::bad_manifest, "unknown split '" + std::string(s) + "'");
}

enum class TsplitMode { downsample, full, full_downsample };

inline std::string_view to_string(TsplitMode m) {
    switch (m) {
        case TsplitMode::downsample: return "downsample";
        case TsplitMode::full: return "full";
        case TsplitMode::full_downsample: return "full-downsample";
    }
    return "full";
}

inline TsplitMode parse_tsplit_mode(std::string_view s) {
    if (s == "downsample") return TsplitMode::downsample;
    if (s == "full") return TsplitMode::full;
    if (s == "full-downsample") return TsplitMode::full_downsample;
    throw Error(ErrorCode::invalid_argument, "unknown tsplit mode '" + std::string(s) + "'");
}

/// Sizes steering one object-level split. test cutoff = floor(t/d * o);
/// val cutoff = floor(v/d * remaining) or floor(remaining / 5) when the
/// original data had no validation split.
struct SplitGeometry {
    std::size_t t_size = 0;
    std::size_t v_size = 0;
    std::size_t d_size = 0;
    std::size_t o_size = 0;
    std::size_t cutoff = 0;
    std::size_t val_cutoff = 0;

    friend bool operator==(const SplitGeometry&, const SplitGeometry&) = default;
};

inline std::size_t test_cutoff(std::size_t t_size, std::size_t d_size, std::size_t o_size) {
    if (d_size == 0) throw Error(ErrorCode::empty_input, "dataset size is zero");
    if (t_size > d_size) throw Error(ErrorCode::out_of_range, "test size exceeds dataset size");
    // exact floor of the rational (t/d)*o
    return static_cast<std::size_t>((static_cast<unsigned __int128>(t_size) * o_size) / d_size);
}

inline std::size_t val_cutoff(std::size_t v_size, std::size_t d_size, std::size_t remaining) {
    if (v_size == 0) return remaining / 5;
    return static_cast<std::size_t>((static_cast<unsigned __int128>(v_size) * remaining) / d_size);
}

struct DownsampleGeometry {
    std::size_t downsample_size = 0;
    std::size_t original_training_size = 0;
    double train_ratio = 1.0;
    std::size_t train_templates = 0;
    std::size_t cutoff = 0;
    std::size_t val_downsample_size = 0;
    std::size_t original_val_size = 0;
    std::size_t val_objects = 0;
    std::size_t val_cutoff = 0;
};

struct PlanEntry {
    std::string item_id;
    Split split = Split::train;
    ObjectId object;
    bool passthrough = false;  // kept its original split without resampling

    friend bool operator==(const PlanEntry&, const PlanEntry&) = default;
};

struct SplitPlan {
    TsplitMode mode = TsplitMode::full;
    ThresholdMethod threshold_method = ThresholdMethod::max;
    std::uint64_t seed = 0;
    SplitGeometry geometry;
    std::optional<DownsampleGeometry> downsample;
    std::vector<PlanEntry> entries;  // dataset order
    std::vector<std::string> warnings;
};

namespace detail {

/// Distinct objects in first-occurrence order.
inline std::vector<ObjectId> distinct_objects(std::span<const PlanEntry> entries, std::span<const std::size_t> positions) {
    std::vector<ObjectId> order;
    std::set<ObjectId> seen;
    for (auto pos : positions) {
        if (seen.insert(entries[pos].object).second) order.push_back(entries[pos].object);
    }
    return order;
}

}  // namespace detail

/// Deals the objects of entries[positions] into test/val/train pools.
/// Entries outside `positions` are left untouched. `test_split` lets the
/// downsample mode send its test pool to `discard`.
inline SplitGeometry deal_objects(std::vector<PlanEntry>& entries, std::span<const std::size_t> positions,
                                  std::size_t t_size, std::size_t v_size, std::size_t d_size, Rng& rng,
                                  Split test_split, std::vector<std::string>& warnings) {
    auto objects = detail::distinct_objects(entries, positions);
    rng.shuffle(std::span<ObjectId>(objects));

    SplitGeometry g;
    g.t_size = t_size;
    g.v_size = v_size;
    g.d_size = d_size;
    g.o_size = objects.size();
    g.cutoff = test_cutoff(t_size, d_size, g.o_size);
    g.val_cutoff = val_cutoff(v_size, d_size, g.o_size - g.cutoff);
    if (g.cutoff == 0 && t_size > 0) {
        warnings.push_back("test cutoff is 0 with " + std::to_string(g.o_size) + " objects; test pool is empty");
    }

    std::map<ObjectId, Split> pool;
    for (std::size_t i = 0; i < objects.size(); ++i) {
        Split s = Split::train;
        if (i < g.cutoff) {
            s = test_split;
        } else if (i < g.cutoff + g.val_cutoff) {
            s = Split::val;
        }
        pool.emplace(objects[i], s);
    }
    for (auto pos : positions) entries[pos].split = pool.at(entries[pos].object);
    return g;
}

inline std::vector<PlanEntry> entries_from_matches(std::span<const ItemMatch> matches) {
    std::vector<PlanEntry> entries;
    entries.reserve(matches.size());
    for (const auto& m : matches) entries.push_back({m.item_id, Split::train, m.object, false});
    return entries;
}

/// Resplits every item; target ratios come from the original split tags.
inline SplitPlan tsplit_full_mode(const std::vector<MemeRecord>& items, std::span<const ItemMatch> matches,
                                  ThresholdMethod method, std::uint64_t seed) {
    if (items.empty()) throw Error(ErrorCode::empty_input, "dataset is empty");
    if (matches.size() != items.size()) throw Error(ErrorCode::invalid_argument, "one match per item required");
    const auto counts = count_original_splits(items);

    SplitPlan plan;
    plan.mode = TsplitMode::full;
    plan.threshold_method = method;
    plan.seed = seed;
    plan.entries = entries_from_matches(matches);
    if (counts.none == counts.total()) plan.warnings.push_back("dataset has no split tags; everything lands in train");

    std::vector<std::size_t> positions(items.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
    Rng rng(seed);
    plan.geometry = deal_objects(plan.entries, positions, counts.test, counts.val, counts.total(), rng, Split::test,
                                 plan.warnings);
    return plan;
}

/// Resplits only the original train+val items into train / val / dummy
/// test (marked discard); original test items pass through unchanged.
inline SplitPlan tsplit_downsample_mode(const std::vector<MemeRecord>& items, std::span<const ItemMatch> matches,
                                        ThresholdMethod method, std::uint64_t seed) {
    if (matches.size() != items.size()) throw Error(ErrorCode::invalid_argument, "one match per item required");
    const auto counts = count_original_splits(items);
    if (counts.none > 0) {
        throw Error(ErrorCode::missing_split_tags, std::to_string(counts.none) + " items carry no original split tag");
    }
    if (counts.train == 0) throw Error(ErrorCode::empty_input, "no original training items");

    SplitPlan plan;
    plan.mode = TsplitMode::downsample;
    plan.threshold_method = method;
    plan.seed = seed;
    plan.entries = entries_from_matches(matches);

    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].original_split == OriginalSplit::test) {
            plan.entries[i].split = Split::test;
            plan.entries[i].passthrough = true;
        } else {
            positions.push_back(i);
        }
    }
    Rng rng(seed);
    plan.geometry = deal_objects(plan.entries, positions, counts.test, counts.val, counts.total(), rng, Split::discard,
                                 plan.warnings);
    return plan;
}

/// Keeps floor(train_objects * downsample/original) shuffled training
/// objects and discards the rest; validation is thinned by its own ratio
/// (the training ratio when no validation size is given).
inline SplitPlan tsplit_downsample_by_template(const SplitPlan& full_plan, std::size_t downsample_size,
                                               std::optional<std::size_t> val_downsample_size = std::nullopt) {
    std::vector<std::size_t> train_pos;
    std::vector<std::size_t> val_pos;
    for (std::size_t i = 0; i < full_plan.entries.size(); ++i) {
        if (full_plan.entries[i].split == Split::train) train_pos.push_back(i);
        if (full_plan.entries[i].split == Split::val) val_pos.push_back(i);
    }
    if (train_pos.empty()) throw Error(ErrorCode::empty_input, "plan has no training items");
    if (downsample_size > train_pos.size()) {
        throw Error(ErrorCode::out_of_range, "downsample size " + std::to_string(downsample_size) +
                                                 " exceeds training size " + std::to_string(train_pos.size()));
    }
    if (val_downsample_size && *val_downsample_size > val_pos.size()) {
        throw Error(ErrorCode::out_of_range, "validation downsample size " + std::to_string(*val_downsample_size) +
                                                 " exceeds validation size " + std::to_string(val_pos.size()));
    }

    SplitPlan plan = full_plan;
    plan.mode = TsplitMode::full_downsample;
    DownsampleGeometry g;
    g.downsample_size = downsample_size;
    g.original_training_size = train_pos.size();
    g.train_ratio = static_cast<double>(downsample_size) / static_cast<double>(train_pos.size());
    g.original_val_size = val_pos.size();
    g.val_downsample_size = val_downsample_size.value_or(0);

    Rng rng(full_plan.seed);
    auto thin = [&](std::span<const std::size_t> positions, std::size_t keep_num, std::size_t keep_den,
                    std::size_t& n_objects, std::size_t& cutoff) {
        auto objects = detail::distinct_objects(plan.entries, positions);
        rng.shuffle(std::span<ObjectId>(objects));
        n_objects = objects.size();
        cutoff = keep_den == 0 ? n_objects
                               : static_cast<std::size_t>((static_cast<unsigned __int128>(n_objects) * keep_num) / keep_den);
        std::set<ObjectId> dropped(objects.begin() + static_cast<std::ptrdiff_t>(cutoff), objects.end());
        for (auto pos : positions) {
            if (dropped.count(plan.entries[pos].object)) plan.entries[pos].split = Split::discard;
        }
    };

    thin(train_pos, downsample_size, train_pos.size(), g.train_templates, g.cutoff);
    if (val_downsample_size) {
        thin(val_pos, *val_downsample_size, val_pos.size(), g.val_objects, g.val_cutoff);
    } else {
        thin(val_pos, downsample_size, train_pos.size(), g.val_objects, g.val_cutoff);
    }
    plan.downsample = g;
    return plan;
}

/// Objects whose resampled items land in more than one non-discard split.
inline std::vector<ObjectId> find_leaks(const SplitPlan& plan) {
    std::map<ObjectId, std::set<Split>> splits_of;
    for (const auto& e : plan.entries) {
        if (e.passthrough || e.split == Split::discard) continue;
        splits_of[e.object].insert(e.split);
    }
    std::vector<ObjectId> leaks;
    for (const auto& [object, splits] : splits_of) {
        if (splits.size() > 1) leaks.push_back(object);
    }
    return leaks;
}

struct SplitSummary {
    struct Row {
        std::size_t items = 0;
        std::size_t templates = 0;
        std::size_t uis = 0;
    };
    Row train, val, test, discard;

    Row& at(Split s) {
        switch (s) {
            case Split::train: return train;
            case Split::val: return val;
            case Split::test: return test;
            case Split::discard: return discard;
        }
        return discard;
    }
};

inline SplitSummary summarize(const SplitPlan& plan) {
    SplitSummary summary;
    std::map<Split, std::set<ObjectId>> objects;
    for (const auto& e : plan.entries) {
        ++summary.at(e.split).items;
        objects[e.split].insert(e.object);
    }
    for (auto& [split, set] : objects) {
        for (const auto& o : set) {
            if (o.kind == ObjectKind::ui) {
                ++summary.at(split).uis;
            } else {
                ++summary.at(split).templates;
            }
        }
    }
    return summary;
}

// ---------------------------------------------------------------- serialization

inline Json plan_to_json(const SplitPlan& plan) {
    Json j;
    j["mode"] = std::string(to_string(plan.mode));
    j["threshold_method"] = std::string(to_string(plan.threshold_method));
    j["seed"] = plan.seed;
    const auto& g = plan.geometry;
    j["geometry"] = {{"t_size", g.t_size}, {"v_size", g.v_size}, {"d_size", g.d_size},
                     {"o_size", g.o_size}, {"cutoff", g.cutoff}, {"val_cutoff", g.val_cutoff}};
    if (plan.downsample) {
        const auto& d = *plan.downsample;
        j["downsample"] = {{"downsample_size", d.downsample_size},
                           {"original_training_size", d.original_training_size},
                           {"train_ratio", d.train_ratio},
                           {"train_templates", d.train_templates},
                           {"cutoff", d.cutoff},
                           {"val_downsample_size", d.val_downsample_size},
                           {"original_val_size", d.original_val_size},
                           {"val_objects", d.val_objects},
                           {"val_cutoff", d.val_cutoff}};
    }
    j["warnings"] = plan.warnings;
    Json entries = Json::array();
    for (const auto& e : plan.entries) {
        Json rec;
        rec["item_id"] = e.item_id;
        rec["split"] = std::string(to_string(e.split));
        rec["object_kind"] = std::string(to_string(e.object.kind));
        rec["object_id"] = e.object.id;
        if (e.passthrough) rec["passthrough"] = true;
        entries.push_back(std::move(rec));
    }
    j["assignments"] = std::move(entries);
    return j;
}

inline SplitPlan plan_from_json(const Json& j) {
    SplitPlan plan;
    try {
        plan.mode = parse_tsplit_mode(j.at("mode").get<std::string>());
        plan.threshold_method = parse_threshold_method(j.at("threshold_method").get<std::string>());
        plan.seed = j.at("seed").get<std::uint64_t>();
        const auto& g = j.at("geometry");
        plan.geometry = {g.at("t_size").get<std::size_t>(), g.at("v_size").get<std::size_t>(),
                         g.at("d_size").get<std::size_t>(), g.at("o_size").get<std::size_t>(),
                         g.at("cutoff").get<std::size_t>(), g.at("val_cutoff").get<std::size_t>()};
        if (auto it = j.find("downsample"); it != j.end()) {
            DownsampleGeometry d;
            d.downsample_size = it->at("downsample_size").get<std::size_t>();
            d.original_training_size = it->at("original_training_size").get<std::size_t>();
            d.train_ratio = it->at("train_ratio").get<double>();
            d.train_templates = it->at("train_templates").get<std::size_t>();
            d.cutoff = it->at("cutoff").get<std::size_t>();
            d.val_downsample_size = it->at("val_downsample_size").get<std::size_t>();
            d.original_val_size = it->at("original_val_size").get<std::size_t>();
            d.val_objects = it->at("val_objects").get<std::size_t>();
            d.val_cutoff = it->at("val_cutoff").get<std::size_t>();
            plan.downsample = d;
        }
        plan.warnings = j.value("warnings", std::vector<std::string>{});
        std::set<std::string> seen;
        for (const auto& rec : j.at("assignments")) {
            PlanEntry e;
            e.item_id = rec.at("item_id").get<std::string>();
            e.split = parse_split(rec.at("split").get<std::string>());
            e.object = {parse_object_kind(rec.at("object_kind").get<std::string>()), rec.at("object_id").get<std::string>()};
            e.passthrough = rec.value("passthrough", false);
            if (!seen.insert(e.item_id).second) throw Error(ErrorCode::duplicate_id, "item '" + e.item_id + "' in split plan");
            plan.entries.push_back(std::move(e));
        }
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::bad_manifest, std::string("split plan: ") + e.what());
    }
    return plan;
}

/// item_id -> split lookup for downstream consumers.
inline std::unordered_map<std::string, Split> split_lookup(const SplitPlan& plan) {
    std::unordered_map<std::string, Split> out;
    for (const auto& e : plan.entries) out.emplace(e.item_id, e.split);
    return out;
}

}  // namespace memekit
