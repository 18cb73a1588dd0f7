#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "memekit/error.hpp"

namespace memekit {

using Json = nlohmann::ordered_json;

/// Multi-hot label vector over a task's label inventory. Tallied as a whole
/// (the set is the atom), so it is totally ordered and comparable.
class LabelVector {
public:
    LabelVector() = default;
    explicit LabelVector(std::size_t n_labels) : bits_(n_labels, 0) {}

    static LabelVector one_hot(std::size_t n_labels, std::size_t index) {
        LabelVector v(n_labels);
        v.set(index);
        return v;
    }

    std::size_t size() const noexcept { return bits_.size(); }
    bool test(std::size_t i) const { return bits_.at(i) != 0; }
    void set(std::size_t i, bool on = true) { bits_.at(i) = on ? 1 : 0; }

    std::size_t count() const noexcept {
        return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
    }

    /// Index of the first set bit, if any.
    std::optional<std::size_t> first() const noexcept {
        auto it = std::find(bits_.begin(), bits_.end(), std::uint8_t{1});
        if (it == bits_.end()) return std::nullopt;
        return static_cast<std::size_t>(it - bits_.begin());
    }

    friend auto operator<=>(const LabelVector&, const LabelVector&) = default;
    friend bool operator==(const LabelVector&, const LabelVector&) = default;

private:
    std::vector<std::uint8_t> bits_;
};

enum class Average { macro, weighted, micro };

inline std::string_view to_string(Average a) {
    switch (a) {
        case Average::macro: return "macro";
        case Average::weighted: return "weighted";
        case Average::micro: return "micro";
    }
    return "macro";
}

inline Average parse_average(std::string_view s) {
    if (s == "macro") return Average::macro;
    if (s == "weighted") return Average::weighted;
    if (s == "micro") return Average::micro;
    throw Error(ErrorCode::invalid_argument, "unknown average '" + std::string(s) + "'");
}

struct TaskMeta {
    std::vector<std::string> label_names;
    bool multilabel = false;
    Average eval_average = Average::macro;

    std::size_t n_labels() const noexcept { return label_names.size(); }

    std::optional<std::size_t> index_of(std::string_view name) const {
        auto it = std::find(label_names.begin(), label_names.end(), name);
        if (it == label_names.end()) return std::nullopt;
        return static_cast<std::size_t>(it - label_names.begin());
    }

    void validate() const {
        if (label_names.empty()) throw Error(ErrorCode::bad_manifest, "task has no labels");
        std::unordered_set<std::string> seen;
        for (const auto& name : label_names) {
            if (!seen.insert(name).second) throw Error(ErrorCode::duplicate_id, "label '" + name + "'");
        }
    }

    /// Rejects vectors of the wrong width and, for single-label tasks,
    /// anything other than exactly one set bit.
    void check_labels(const LabelVector& labels, std::string_view context) const {
        if (labels.size() != n_labels()) {
            throw Error(ErrorCode::label_count, std::string(context) + ": label vector has width " +
                                                    std::to_string(labels.size()) + ", task has " +
                                                    std::to_string(n_labels()) + " labels");
        }
        if (!multilabel && labels.count() != 1) {
            throw Error(ErrorCode::label_count, std::string(context) + ": single-label task needs exactly one label, got " +
                                                    std::to_string(labels.count()));
        }
    }
};

/// Labels on disk are a list of label names; a 0/1 list as wide as the
/// inventory is also accepted on input.
inline Json labels_to_json(const LabelVector& labels, const TaskMeta& task) {
    Json out = Json::array();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels.test(i)) out.push_back(task.label_names.at(i));
    }
    return out;
}

inline LabelVector labels_from_json(const Json& j, const TaskMeta& task, std::string_view context) {
    if (!j.is_array()) throw Error(ErrorCode::bad_manifest, std::string(context) + ": labels must be an array");
    LabelVector labels(task.n_labels());
    const bool numeric = !j.empty() && j.front().is_number_integer();
    if (numeric) {
        if (j.size() != task.n_labels()) {
            throw Error(ErrorCode::label_count, std::string(context) + ": multi-hot vector has width " +
                                                    std::to_string(j.size()));
        }
        for (std::size_t i = 0; i < j.size(); ++i) {
            const auto bit = j[i].get<int>();
            if (bit != 0 && bit != 1) throw Error(ErrorCode::bad_manifest, std::string(context) + ": multi-hot entries must be 0/1");
            labels.set(i, bit == 1);
        }
        return labels;
    }
    for (const auto& name : j) {
        if (!name.is_string()) throw Error(ErrorCode::bad_manifest, std::string(context) + ": label names must be strings");
        auto idx = task.index_of(name.get<std::string>());
        if (!idx) throw Error(ErrorCode::bad_manifest, std::string(context) + ": unknown label '" + name.get<std::string>() + "'");
        labels.set(*idx);
    }
    return labels;
}

inline TaskMeta task_from_json(const Json& j) {
    TaskMeta task;
    try {
        task.label_names = j.at("label_names").get<std::vector<std::string>>();
        task.multilabel = j.value("multilabel", false);
        task.eval_average = parse_average(j.value("eval_average", std::string("macro")));
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::bad_manifest, std::string("task: ") + e.what());
    }
    task.validate();
    return task;
}

inline Json task_to_json(const TaskMeta& task) {
    Json j;
    j["label_names"] = task.label_names;
    j["multilabel"] = task.multilabel;
    j["eval_average"] = std::string(to_string(task.eval_average));
    return j;
}

}  // namespace memekit
