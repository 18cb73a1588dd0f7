#pragma once

// Knowledge-base manifests (kb.json), datasets (dataset.jsonl) and task
// metadata (task.json). Rows referenced here index into `.emb` matrices
// loaded separately; see embedding.hpp.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "memekit/embedding.hpp"
#include "memekit/labels.hpp"

namespace memekit {

struct TemplateRecord {
    std::string template_id;
    std::string title;
    std::string about;
    std::string source_url;
    std::size_t image_row = 0;
    std::optional<std::size_t> text_row;
    std::vector<std::size_t> example_image_rows;
    std::optional<std::vector<std::size_t>> example_text_rows;

    friend bool operator==(const TemplateRecord&, const TemplateRecord&) = default;
};

struct KnowledgeBase {
    std::vector<TemplateRecord> templates;

    std::size_t n_templates() const noexcept { return templates.size(); }
    std::size_t n_examples() const noexcept {
        std::size_t n = 0;
        for (const auto& t : templates) n += t.example_image_rows.size();
        return n;
    }

    friend bool operator==(const KnowledgeBase&, const KnowledgeBase&) = default;
};

enum class OriginalSplit { train, val, test, none };

inline std::string_view to_string(OriginalSplit s) {
    switch (s) {
        case OriginalSplit::train: return "train";
        case OriginalSplit::val: return "val";
        case OriginalSplit::test: return "test";
        case OriginalSplit::none: return "none";
    }
    return "none";
}

inline OriginalSplit parse_original_split(std::string_view s) {
    if (s == "train") return OriginalSplit::train;
    if (s == "val") return OriginalSplit::val;
    if (s == "test") return OriginalSplit::test;
    if (s == "none" || s.empty()) return OriginalSplit::none;
    throw Error(ErrorCode::bad_manifest, "unknown split tag '" + std::string(s) + "'");
}

struct MemeRecord {
    std::string item_id;
    std::string ocr_text;
    LabelVector labels;
    std::size_t image_row = 0;
    std::optional<std::size_t> text_row;
    OriginalSplit original_split = OriginalSplit::none;

    friend bool operator==(const MemeRecord&, const MemeRecord&) = default;
};

/// Image matrix plus optional text matrix; one per side (KB or dataset).
struct Modalities {
    const EmbeddingMatrix* image = nullptr;
    const EmbeddingMatrix* text = nullptr;
};

// ---------------------------------------------------------------- file io

inline Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::bad_manifest, path.string() + ": " + e.what());
    }
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::io, "short write to " + path.string());
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

/// Non-empty lines of a JSONL file, parsed.
inline std::vector<Json> read_jsonl_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    std::vector<Json> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            rows.push_back(Json::parse(line));
        } catch (const Json::parse_error& e) {
            throw Error(ErrorCode::bad_manifest, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return rows;
}

inline std::string to_jsonl(const std::vector<Json>& rows) {
    std::string out;
    for (const auto& row : rows) {
        out += row.dump();
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------- kb

namespace detail {

inline std::size_t checked_row(const Json& j, std::size_t limit, std::string_view what, std::string_view owner) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
        throw Error(ErrorCode::bad_manifest, std::string(owner) + ": " + std::string(what) + " must be a non-negative integer");
    }
    const auto row = j.get<std::size_t>();
    if (row >= limit) {
        throw Error(ErrorCode::row_out_of_range, std::string(owner) + ": " + std::string(what) + " " + std::to_string(row) +
                                                     " >= " + std::to_string(limit) + " rows");
    }
    return row;
}

inline std::optional<std::size_t> optional_row(const Json& record, const char* key, const EmbeddingMatrix* matrix,
                                               std::string_view owner) {
    auto it = record.find(key);
    if (it == record.end() || it->is_null()) return std::nullopt;
    if (matrix == nullptr) {
        throw Error(ErrorCode::missing_modality, std::string(owner) + ": " + key + " given but no text embeddings loaded");
    }
    return checked_row(*it, matrix->rows(), key, owner);
}

}  // namespace detail

/// Parses a KB manifest and checks every row against the given matrices.
/// Templates keep manifest order.
inline KnowledgeBase kb_from_json(const Json& manifest, const EmbeddingMatrix& image, const EmbeddingMatrix* text = nullptr) {
    KnowledgeBase kb;
    const auto templates = manifest.find("templates");
    if (templates == manifest.end() || !templates->is_array()) {
        throw Error(ErrorCode::bad_manifest, "kb manifest needs a \"templates\" array");
    }
    std::unordered_set<std::string> seen;
    kb.templates.reserve(templates->size());
    for (const auto& rec : *templates) {
        TemplateRecord t;
        try {
            t.template_id = rec.at("template_id").get<std::string>();
            t.title = rec.value("title", std::string());
            t.about = rec.value("about", std::string());
            t.source_url = rec.value("source_url", std::string());
        } catch (const Json::exception& e) {
            throw Error(ErrorCode::bad_manifest, std::string("template record: ") + e.what());
        }
        if (!seen.insert(t.template_id).second) throw Error(ErrorCode::duplicate_id, "template '" + t.template_id + "'");

        const std::string owner = "template '" + t.template_id + "'";
        t.image_row = detail::checked_row(rec.at("image_row"), image.rows(), "image_row", owner);
        t.text_row = detail::optional_row(rec, "text_row", text, owner);
        for (const auto& row : rec.value("example_image_rows", Json::array())) {
            t.example_image_rows.push_back(detail::checked_row(row, image.rows(), "example_image_rows", owner));
        }
        if (auto it = rec.find("example_text_rows"); it != rec.end() && !it->is_null()) {
            if (text == nullptr) throw Error(ErrorCode::missing_modality, owner + ": example_text_rows given but no text embeddings loaded");
            std::vector<std::size_t> rows;
            for (const auto& row : *it) rows.push_back(detail::checked_row(row, text->rows(), "example_text_rows", owner));
            if (rows.size() != t.example_image_rows.size()) {
                throw Error(ErrorCode::bad_manifest, owner + ": example_text_rows and example_image_rows differ in length");
            }
            t.example_text_rows = std::move(rows);
        }
        kb.templates.push_back(std::move(t));
    }
    return kb;
}

inline Json kb_to_json(const KnowledgeBase& kb) {
    Json templates = Json::array();
    for (const auto& t : kb.templates) {
        Json rec;
        rec["template_id"] = t.template_id;
        rec["title"] = t.title;
        rec["about"] = t.about;
        rec["source_url"] = t.source_url;
        rec["image_row"] = t.image_row;
        rec["text_row"] = t.text_row ? Json(*t.text_row) : Json(nullptr);
        rec["example_image_rows"] = t.example_image_rows;
        if (t.example_text_rows) rec["example_text_rows"] = *t.example_text_rows;
        templates.push_back(std::move(rec));
    }
    Json out;
    out["templates"] = std::move(templates);
    return out;
}

inline KnowledgeBase load_kb(const std::filesystem::path& manifest_path, const EmbeddingMatrix& image,
                             const EmbeddingMatrix* text = nullptr) {
    return kb_from_json(read_json_file(manifest_path), image, text);
}

inline void save_kb(const std::filesystem::path& path, const KnowledgeBase& kb) { write_json_file(path, kb_to_json(kb)); }

// ---------------------------------------------------------------- dataset

inline MemeRecord meme_from_json(const Json& rec, const TaskMeta& task, const EmbeddingMatrix& image,
                                 const EmbeddingMatrix* text) {
    MemeRecord m;
    try {
        m.item_id = rec.at("item_id").get<std::string>();
        m.ocr_text = rec.value("ocr_text", std::string());
        m.original_split = parse_original_split(rec.value("split", std::string("none")));
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::bad_manifest, std::string("dataset record: ") + e.what());
    }
    const std::string owner = "item '" + m.item_id + "'";
    m.labels = labels_from_json(rec.contains("labels") ? rec.at("labels") : Json::array(), task, owner);
    task.check_labels(m.labels, owner);
    m.image_row = detail::checked_row(rec.at("image_row"), image.rows(), "image_row", owner);
    m.text_row = detail::optional_row(rec, "text_row", text, owner);
    return m;
}

inline Json meme_to_json(const MemeRecord& m, const TaskMeta& task) {
    Json rec;
    rec["item_id"] = m.item_id;
    rec["ocr_text"] = m.ocr_text;
    rec["labels"] = labels_to_json(m.labels, task);
    rec["image_row"] = m.image_row;
    rec["text_row"] = m.text_row ? Json(*m.text_row) : Json(nullptr);
    rec["split"] = std::string(to_string(m.original_split));
    return rec;
}

/// Records in file order; item ids must be unique.
inline std::vector<MemeRecord> dataset_from_rows(const std::vector<Json>& rows, const TaskMeta& task,
                                                 const EmbeddingMatrix& image, const EmbeddingMatrix* text = nullptr) {
    std::vector<MemeRecord> records;
    records.reserve(rows.size());
    std::unordered_set<std::string> seen;
    for (const auto& row : rows) {
        auto m = meme_from_json(row, task, image, text);
        if (!seen.insert(m.item_id).second) throw Error(ErrorCode::duplicate_id, "item '" + m.item_id + "'");
        records.push_back(std::move(m));
    }
    return records;
}

inline std::vector<MemeRecord> load_dataset(const std::filesystem::path& path, const TaskMeta& task,
                                            const EmbeddingMatrix& image, const EmbeddingMatrix* text = nullptr) {
    return dataset_from_rows(read_jsonl_file(path), task, image, text);
}

inline void save_dataset(const std::filesystem::path& path, const std::vector<MemeRecord>& records, const TaskMeta& task) {
    std::vector<Json> rows;
    rows.reserve(records.size());
    for (const auto& m : records) rows.push_back(meme_to_json(m, task));
    write_text_file(path, to_jsonl(rows));
}

inline TaskMeta load_task(const std::filesystem::path& path) { return task_from_json(read_json_file(path)); }

struct SplitCounts {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
    std::size_t none = 0;

    std::size_t total() const noexcept { return train + val + test + none; }
};

inline SplitCounts count_original_splits(const std::vector<MemeRecord>& records) {
    SplitCounts c;
    for (const auto& m : records) {
        switch (m.original_split) {
            case OriginalSplit::train: ++c.train; break;
            case OriginalSplit::val: ++c.val; break;
            case OriginalSplit::test: ++c.test; break;
            case OriginalSplit::none: ++c.none; break;
        }
    }
    return c;
}

}  // namespace memekit
