#pragma once

// Template-Label Counter. Fitting attaches every training label to the
// template nearest to its item; predicting looks up the k nearest KB entries
// and votes with what those templates saw in training.
//
// Label vectors are tallied as whole sets. Every "most frequent" choice
// breaks ties by proximity: the majority label of the nearest template
// among the tied candidates wins, then the earliest occurrence in the
// proximity-ordered pool.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memekit/corpus.hpp"
#include "memekit/error.hpp"
#include "memekit/fusion.hpp"
#include "memekit/metric_index.hpp"
#include "memekit/parallel.hpp"
#include "memekit/rng.hpp"
#include "memekit/thresholds.hpp"

namespace memekit {

enum class VoteMode { template_vote, label_vote };
enum class OodMode { norm, maj, rand };
enum class Backoff { none, unseen_template, ood };

inline std::string_view to_string(VoteMode v) { return v == VoteMode::label_vote ? "label" : "template"; }

inline VoteMode parse_vote_mode(std::string_view s) {
    if (s == "template") return VoteMode::template_vote;
    if (s == "label") return VoteMode::label_vote;
    throw Error(ErrorCode::invalid_argument, "unknown vote mode '" + std::string(s) + "'");
}

inline std::string_view to_string(OodMode m) {
    switch (m) {
        case OodMode::norm: return "norm";
        case OodMode::maj: return "maj";
        case OodMode::rand: return "rand";
    }
    return "norm";
}

inline OodMode parse_ood_mode(std::string_view s) {
    if (s == "norm") return OodMode::norm;
    if (s == "maj") return OodMode::maj;
    if (s == "rand") return OodMode::rand;
    throw Error(ErrorCode::invalid_argument, "unknown OOD mode '" + std::string(s) + "'");
}

inline std::string_view to_string(Backoff b) {
    switch (b) {
        case Backoff::none: return "none";
        case Backoff::unseen_template: return "unseen_template";
        case Backoff::ood: return "ood";
    }
    return "none";
}

struct TlcConfig {
    FusionMode fusion = FusionMode::image_only;
    bool include_examples = false;
    std::size_t k = 1;
    VoteMode vote = VoteMode::template_vote;
    OodMode ood = OodMode::norm;
    std::uint64_t seed = 0;
};

struct TlcModel {
    TlcConfig config;
    std::vector<std::string> template_ids;                // KB order
    std::vector<std::vector<LabelVector>> observed;       // per template, training order
    std::vector<std::optional<LabelVector>> majority;     // per template; empty if unseen
    std::vector<double> max_threshold;                    // per template, max-method (global fallback)
    LabelVector global_majority;
    std::vector<LabelVector> training_labels;             // training order
    bool fitted = false;
};

struct Prediction {
    std::string item_id;
    LabelVector labels;
    std::optional<std::uint32_t> matched_template;  // nearest template ordinal
    Backoff backoff = Backoff::none;
    double distance = 0.0;                          // query to matched base template
};

/// Most frequent vector in `pool`. Ties go to the first candidate listed in
/// `preference`, then to the earliest occurrence in `pool`.
inline LabelVector most_frequent(std::span<const LabelVector> pool, std::span<const LabelVector> preference = {}) {
    if (pool.empty()) throw Error(ErrorCode::empty_input, "cannot vote over an empty pool");
    std::map<LabelVector, std::size_t> counts;
    std::size_t best = 0;
    for (const auto& v : pool) best = std::max(best, ++counts[v]);
    for (const auto& v : preference) {
        auto it = counts.find(v);
        if (it != counts.end() && it->second == best) return v;
    }
    for (const auto& v : pool) {
        if (counts[v] == best) return v;
    }
    return pool.front();
}

/// Fits on `train`, whose query vectors are the rows of `queries` (same
/// space as `index`). `max_profiles` must hold max-method thresholds in that
/// same space; they gate the OOD variants.
inline TlcModel tlc_fit(const std::vector<MemeRecord>& train, const EmbeddingMatrix& queries, const Index& index,
                        const KnowledgeBase& kb, const ProfileSet& max_profiles, const TlcConfig& config,
                        std::size_t threads = 1) {
    if (train.empty()) throw Error(ErrorCode::empty_input, "training set is empty");
    if (queries.rows() != train.size()) throw Error(ErrorCode::invalid_argument, "one query row per training item required");
    if (config.fusion == FusionMode::late) {
        throw Error(ErrorCode::invalid_argument, "late fusion fits one model per modality");
    }
    if (index.includes_examples() != config.include_examples) {
        throw Error(ErrorCode::invalid_argument, "index and config disagree on include_examples");
    }
    if (config.k == 0) throw Error(ErrorCode::out_of_range, "k must be at least 1");
    if (max_profiles.profiles.size() != kb.n_templates()) {
        throw Error(ErrorCode::invalid_argument, "threshold profiles do not cover the knowledge base");
    }

    TlcModel model;
    model.config = config;
    model.observed.resize(kb.n_templates());
    model.majority.resize(kb.n_templates());
    for (const auto& t : kb.templates) model.template_ids.push_back(t.template_id);
    for (const auto& p : max_profiles.profiles) model.max_threshold.push_back(p.threshold);

    std::vector<std::uint32_t> nearest(train.size());
    parallel_for(train.size(), threads,
                 [&](std::size_t i) { nearest[i] = index.query(queries.row(i), 1).front().template_ordinal; });

    for (std::size_t i = 0; i < train.size(); ++i) {
        model.observed[nearest[i]].push_back(train[i].labels);
        model.training_labels.push_back(train[i].labels);
    }
    for (std::size_t t = 0; t < kb.n_templates(); ++t) {
        if (!model.observed[t].empty()) model.majority[t] = most_frequent(model.observed[t]);
    }
    model.global_majority = most_frequent(model.training_labels);
    model.fitted = true;
    return model;
}

namespace detail {

/// Templates of the ranked entries, deduplicated, nearest first.
inline std::vector<std::uint32_t> ranked_templates(const RankedList& ranked) {
    std::vector<std::uint32_t> out;
    for (const auto& n : ranked) {
        if (std::find(out.begin(), out.end(), n.template_ordinal) == out.end()) out.push_back(n.template_ordinal);
    }
    return out;
}

struct VotePool {
    std::vector<LabelVector> pool;
    std::vector<LabelVector> preference;  // majorities, nearest template first
};

inline VotePool gather_votes(const TlcModel& model, std::span<const std::uint32_t> templates, VoteMode vote) {
    VotePool votes;
    for (auto t : templates) {
        if (!model.majority[t]) continue;
        votes.preference.push_back(*model.majority[t]);
        if (vote == VoteMode::template_vote) {
            votes.pool.push_back(*model.majority[t]);
        } else {
            votes.pool.insert(votes.pool.end(), model.observed[t].begin(), model.observed[t].end());
        }
    }
    return votes;
}

inline void require_fitted(const TlcModel& model) {
    if (!model.fitted) throw Error(ErrorCode::not_fitted, "call tlc_fit first");
}

inline LabelVector backoff_label(const TlcModel& model, Backoff reason, std::string_view item_id) {
    if (reason == Backoff::ood && model.config.ood == OodMode::rand) {
        auto rng = Rng::for_item(model.config.seed, item_id);
        return model.training_labels[static_cast<std::size_t>(rng.below(model.training_labels.size()))];
    }
    return model.global_majority;
}

inline bool is_ood(const TlcModel& model, std::uint32_t template_ordinal, double distance) {
    return model.config.ood != OodMode::norm &&
           classify_item(distance, model.max_threshold[template_ordinal]) == Templateness::non_templatic;
}

}  // namespace detail

inline Prediction tlc_predict(const TlcModel& model, const MemeRecord& item, std::span<const float> query, const Index& index) {
    detail::require_fitted(model);
    const auto ranked = index.query(query, model.config.k);
    const auto templates = detail::ranked_templates(ranked);

    Prediction p;
    p.item_id = item.item_id;
    p.matched_template = templates.front();
    p.distance = index.distance_to_template(query, templates.front());

    if (detail::is_ood(model, templates.front(), p.distance)) {
        p.backoff = Backoff::ood;
        p.labels = detail::backoff_label(model, p.backoff, item.item_id);
        return p;
    }
    const auto votes = detail::gather_votes(model, templates, model.config.vote);
    if (votes.pool.empty()) {
        p.backoff = Backoff::unseen_template;
        p.labels = detail::backoff_label(model, p.backoff, item.item_id);
        return p;
    }
    p.labels = most_frequent(votes.pool, votes.preference);
    return p;
}

inline std::vector<Prediction> tlc_predict_all(const TlcModel& model, const std::vector<MemeRecord>& items,
                                               const EmbeddingMatrix& queries, const Index& index, std::size_t threads = 1) {
    detail::require_fitted(model);
    if (queries.rows() != items.size()) throw Error(ErrorCode::invalid_argument, "one query row per item required");
    std::vector<Prediction> out(items.size());
    parallel_for(items.size(), threads, [&](std::size_t i) { out[i] = tlc_predict(model, items[i], queries.row(i), index); });
    return out;
}

/// One modality's side of a late-fusion prediction.
struct ModalityInput {
    const TlcModel* model = nullptr;
    const Index* index = nullptr;
    std::optional<std::span<const float>> query;  // empty when the item lacks this modality
};

/// Each modality runs a label vote; the pools are merged and the most
/// frequent label wins, ties going to the image side's nearest template.
inline Prediction tlc_predict_late_fusion(const MemeRecord& item, const ModalityInput& image, const ModalityInput& text) {
    Prediction p;
    p.item_id = item.item_id;
    detail::VotePool merged;
    const TlcModel* fallback_model = nullptr;
    bool any_ood = false;
    bool any_modality = false;

    for (const ModalityInput* side : {&image, &text}) {
        if (!side->query || side->model == nullptr || side->index == nullptr) continue;
        detail::require_fitted(*side->model);
        any_modality = true;
        if (fallback_model == nullptr) fallback_model = side->model;

        const auto ranked = side->index->query(*side->query, side->model->config.k);
        const auto templates = detail::ranked_templates(ranked);
        const double distance = side->index->distance_to_template(*side->query, templates.front());
        if (!p.matched_template) {
            p.matched_template = templates.front();
            p.distance = distance;
        }
        if (detail::is_ood(*side->model, templates.front(), distance)) {
            any_ood = true;
            continue;
        }
        auto votes = detail::gather_votes(*side->model, templates, VoteMode::label_vote);
        merged.pool.insert(merged.pool.end(), votes.pool.begin(), votes.pool.end());
        merged.preference.insert(merged.preference.end(), votes.preference.begin(), votes.preference.end());
    }
    if (!any_modality) throw Error(ErrorCode::missing_modality, "item '" + item.item_id + "' has no usable modality");

    if (merged.pool.empty()) {
        p.backoff = any_ood ? Backoff::ood : Backoff::unseen_template;
        p.labels = detail::backoff_label(*fallback_model, p.backoff, item.item_id);
        return p;
    }
    p.labels = most_frequent(merged.pool, merged.preference);
    return p;
}

// ---------------------------------------------------------------- persistence

inline Json tlc_config_to_json(const TlcConfig& c) {
    Json j;
    j["fusion"] = std::string(to_string(c.fusion));
    j["include_examples"] = c.include_examples;
    j["k"] = c.k;
    j["vote"] = std::string(to_string(c.vote));
    j["ood"] = std::string(to_string(c.ood));
    j["seed"] = c.seed;
    return j;
}

inline TlcConfig tlc_config_from_json(const Json& j) {
    TlcConfig c;
    c.fusion = parse_fusion_mode(j.at("fusion").get<std::string>());
    c.include_examples = j.at("include_examples").get<bool>();
    c.k = j.at("k").get<std::size_t>();
    c.vote = parse_vote_mode(j.at("vote").get<std::string>());
    c.ood = parse_ood_mode(j.at("ood").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline Json tlc_model_to_json(const TlcModel& model, const TaskMeta& task) {
    detail::require_fitted(model);
    Json j;
    j["config"] = tlc_config_to_json(model.config);
    j["label_names"] = task.label_names;
    j["global_majority"] = labels_to_json(model.global_majority, task);
    Json templates = Json::array();
    for (std::size_t t = 0; t < model.template_ids.size(); ++t) {
        Json rec;
        rec["template_id"] = model.template_ids[t];
        rec["max_threshold"] = model.max_threshold[t];
        rec["majority"] = model.majority[t] ? labels_to_json(*model.majority[t], task) : Json(nullptr);
        Json observed = Json::array();
        for (const auto& labels : model.observed[t]) observed.push_back(labels_to_json(labels, task));
        rec["observed"] = std::move(observed);
        templates.push_back(std::move(rec));
    }
    j["templates"] = std::move(templates);
    Json training = Json::array();
    for (const auto& labels : model.training_labels) training.push_back(labels_to_json(labels, task));
    j["training_labels"] = std::move(training);
    return j;
}

inline TlcModel tlc_model_from_json(const Json& j, const TaskMeta& task) {
    TlcModel model;
    try {
        model.config = tlc_config_from_json(j.at("config"));
        if (j.at("label_names").get<std::vector<std::string>>() != task.label_names) {
            throw Error(ErrorCode::bad_manifest, "model was fitted on a different label inventory");
        }
        model.global_majority = labels_from_json(j.at("global_majority"), task, "model");
        for (const auto& rec : j.at("templates")) {
            model.template_ids.push_back(rec.at("template_id").get<std::string>());
            model.max_threshold.push_back(rec.at("max_threshold").get<double>());
            const auto& maj = rec.at("majority");
            model.majority.push_back(maj.is_null() ? std::nullopt
                                                   : std::optional<LabelVector>(labels_from_json(maj, task, "model")));
            std::vector<LabelVector> observed;
            for (const auto& labels : rec.at("observed")) observed.push_back(labels_from_json(labels, task, "model"));
            model.observed.push_back(std::move(observed));
        }
        for (const auto& labels : j.at("training_labels")) {
            model.training_labels.push_back(labels_from_json(labels, task, "model"));
        }
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::bad_manifest, std::string("tlc model: ") + e.what());
    }
    if (model.training_labels.empty()) throw Error(ErrorCode::bad_manifest, "tlc model has no training labels");
    model.fitted = true;
    return model;
}

/// Checks that a loaded model lines up with the KB it is about to query.
inline void check_model_matches_kb(const TlcModel& model, const KnowledgeBase& kb) {
    if (model.template_ids.size() != kb.n_templates()) {
        throw Error(ErrorCode::bad_manifest, "model covers " + std::to_string(model.template_ids.size()) +
                                                 " templates, knowledge base has " + std::to_string(kb.n_templates()));
    }
    for (std::size_t t = 0; t < kb.n_templates(); ++t) {
        if (model.template_ids[t] != kb.templates[t].template_id) {
            throw Error(ErrorCode::bad_manifest, "template order differs at position " + std::to_string(t));
        }
    }
}

}  // namespace memekit
