#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memekit/corpus.hpp"
#include "memekit/error.hpp"
#include "memekit/metric_index.hpp"

namespace memekit {

enum class FusionMode { image_only, text_only, concat, hadamard, norm_avg, late };

inline std::string_view to_string(FusionMode mode) {
    switch (mode) {
        case FusionMode::image_only: return "image";
        case FusionMode::text_only: return "text";
        case FusionMode::concat: return "concat";
        case FusionMode::hadamard: return "hadamard";
        case FusionMode::norm_avg: return "norm_avg";
        case FusionMode::late: return "late";
    }
    return "image";
}

inline FusionMode parse_fusion_mode(std::string_view s) {
    if (s == "image") return FusionMode::image_only;
    if (s == "text") return FusionMode::text_only;
    if (s == "concat") return FusionMode::concat;
    if (s == "hadamard") return FusionMode::hadamard;
    if (s == "norm_avg") return FusionMode::norm_avg;
    if (s == "late") return FusionMode::late;
    throw Error(ErrorCode::invalid_argument, "unknown fusion mode '" + std::string(s) + "'");
}

namespace detail {

inline std::vector<float> to_vector(std::span<const float> v) { return {v.begin(), v.end()}; }

inline double l2_norm(std::span<const float> v) {
    double sum = 0.0;
    for (float x : v) sum += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(sum);
}

inline void require_same_dim(std::span<const float> a, std::span<const float> b, FusionMode mode) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::dimension_mismatch, std::string(to_string(mode)) + " needs equal dims, got " +
                                                       std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
}

}  // namespace detail

/// Combines one item's modalities into a single vector. `late` fuses votes,
/// not vectors, and is rejected here.
inline std::vector<float> fuse(std::span<const float> image, std::optional<std::span<const float>> text, FusionMode mode) {
    auto need_text = [&]() -> std::span<const float> {
        if (!text) throw Error(ErrorCode::missing_modality, std::string(to_string(mode)) + " needs a text embedding");
        return *text;
    };

    switch (mode) {
        case FusionMode::image_only:
            if (image.empty()) throw Error(ErrorCode::missing_modality, "image embedding is empty");
            return detail::to_vector(image);
        case FusionMode::text_only:
            return detail::to_vector(need_text());
        case FusionMode::concat: {
            const auto t = need_text();
            std::vector<float> out(image.begin(), image.end());
            out.insert(out.end(), t.begin(), t.end());
            return out;
        }
        case FusionMode::hadamard: {
            const auto t = need_text();
            detail::require_same_dim(image, t, mode);
            std::vector<float> out(image.size());
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = image[i] * t[i];
            return out;
        }
        case FusionMode::norm_avg: {
            const auto t = need_text();
            detail::require_same_dim(image, t, mode);
            const double ni = detail::l2_norm(image);
            const double nt = detail::l2_norm(t);
            if (ni == 0.0 || nt == 0.0) throw Error(ErrorCode::invalid_argument, "norm_avg of a zero vector");
            std::vector<float> out(image.size());
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] = static_cast<float>((image[i] / ni + t[i] / nt) / 2.0);
            }
            return out;
        }
        case FusionMode::late:
            break;
    }
    throw Error(ErrorCode::invalid_argument, "late fusion combines votes; it has no vector form");
}

/// Fused reference vectors for every KB entry: rows [0, n_templates) are the
/// templates in KB order, followed by each template's examples in KB order.
struct ReferenceSet {
    EmbeddingMatrix vectors;
    std::vector<EntryMeta> meta;
    std::vector<std::vector<std::uint32_t>> example_rows;  // per template, rows into `vectors`

    Index index(bool include_examples) const { return Index::build(vectors, meta, include_examples); }
};

/// An example without its own text embedding borrows its template's about-text row.
inline ReferenceSet build_reference_set(const KnowledgeBase& kb, Modalities emb, FusionMode mode) {
    if (emb.image == nullptr) throw Error(ErrorCode::missing_modality, "knowledge base image embeddings");
    auto text_of = [&](std::optional<std::size_t> row) -> std::optional<std::span<const float>> {
        if (!row || emb.text == nullptr) return std::nullopt;
        return emb.text->row(*row);
    };

    ReferenceSet refs;
    refs.example_rows.resize(kb.n_templates());
    for (std::size_t t = 0; t < kb.n_templates(); ++t) {
        const auto& tpl = kb.templates[t];
        refs.vectors.push_back(fuse(emb.image->row(tpl.image_row), text_of(tpl.text_row), mode));
        refs.meta.push_back({EntryKind::template_entry, static_cast<std::uint32_t>(t)});
    }
    for (std::size_t t = 0; t < kb.n_templates(); ++t) {
        const auto& tpl = kb.templates[t];
        for (std::size_t e = 0; e < tpl.example_image_rows.size(); ++e) {
            const auto text_row = tpl.example_text_rows ? std::optional<std::size_t>((*tpl.example_text_rows)[e]) : tpl.text_row;
            refs.example_rows[t].push_back(static_cast<std::uint32_t>(refs.vectors.rows()));
            refs.vectors.push_back(fuse(emb.image->row(tpl.example_image_rows[e]), text_of(text_row), mode));
            refs.meta.push_back({EntryKind::example, static_cast<std::uint32_t>(t)});
        }
    }
    return refs;
}

inline std::vector<float> query_vector(const MemeRecord& item, Modalities emb, FusionMode mode) {
    if (emb.image == nullptr) throw Error(ErrorCode::missing_modality, "dataset image embeddings");
    std::optional<std::span<const float>> text;
    if (item.text_row && emb.text != nullptr) text = emb.text->row(*item.text_row);
    try {
        return fuse(emb.image->row(item.image_row), text, mode);
    } catch (const Error& e) {
        throw Error(e.code(), "item '" + item.item_id + "': " + e.detail());
    }
}

/// Query vectors for a whole dataset, one row per record.
inline EmbeddingMatrix query_matrix(const std::vector<MemeRecord>& items, Modalities emb, FusionMode mode) {
    EmbeddingMatrix out;
    for (const auto& item : items) out.push_back(query_vector(item, emb, mode));
    return out;
}

}  // namespace memekit
