#pragma once

// Exact Euclidean k-NN over knowledge-base entries. Distances accumulate in
// double over float32 inputs; ties are broken by ascending original row id.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "memekit/embedding.hpp"
#include "memekit/error.hpp"
#include "memekit/parallel.hpp"

namespace memekit {

inline double squared_euclidean(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::dimension_mismatch,
                    std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " components");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sum += d * d;
    }
    return sum;
}

inline double euclidean_distance(std::span<const float> a, std::span<const float> b) {
    return std::sqrt(squared_euclidean(a, b));
}

enum class EntryKind : std::uint8_t { template_entry, example };

struct EntryMeta {
    EntryKind kind = EntryKind::template_entry;
    std::uint32_t template_ordinal = 0;  // position of the parent template in the KB

    friend bool operator==(const EntryMeta&, const EntryMeta&) = default;
};

struct Neighbor {
    std::uint32_t row = 0;               // row id in the matrix the index was built from
    std::uint32_t template_ordinal = 0;  // parent template
    EntryKind kind = EntryKind::template_entry;
    double distance = 0.0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

using RankedList = std::vector<Neighbor>;

class Index {
public:
    /// Indexes every row whose meta is a template entry, plus example rows
    /// when include_examples is set. meta.size() must equal matrix.rows().
    static Index build(const EmbeddingMatrix& matrix, std::span<const EntryMeta> meta, bool include_examples) {
        if (meta.size() != matrix.rows()) {
            throw Error(ErrorCode::invalid_argument, "entry meta covers " + std::to_string(meta.size()) + " of " +
                                                         std::to_string(matrix.rows()) + " rows");
        }
        Index index;
        index.include_examples_ = include_examples;
        index.dim_ = matrix.dim();
        for (std::size_t r = 0; r < matrix.rows(); ++r) {
            if (meta[r].kind == EntryKind::example && !include_examples) continue;
            const auto row = matrix.row(r);
            index.vectors_.insert(index.vectors_.end(), row.begin(), row.end());
            index.rows_.push_back(static_cast<std::uint32_t>(r));
            if (meta[r].kind == EntryKind::template_entry) {
                index.template_slot_.emplace(meta[r].template_ordinal, index.rows_.size() - 1);
            }
            index.meta_.push_back(meta[r]);
        }
        if (index.rows_.empty()) throw Error(ErrorCode::empty_input, "index has no rows");
        return index;
    }

    std::size_t size() const noexcept { return rows_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    bool includes_examples() const noexcept { return include_examples_; }

    std::size_t count(EntryKind kind) const noexcept {
        return static_cast<std::size_t>(
            std::count_if(meta_.begin(), meta_.end(), [kind](const EntryMeta& m) { return m.kind == kind; }));
    }

    /// The k exactly-nearest entries, nearest first.
    RankedList query(std::span<const float> q, std::size_t k) const {
        if (k == 0 || k > size()) {
            throw Error(ErrorCode::out_of_range, "k=" + std::to_string(k) + " with " + std::to_string(size()) + " entries");
        }
        if (q.size() != dim_) {
            throw Error(ErrorCode::dimension_mismatch,
                        "query has " + std::to_string(q.size()) + " components, index dim is " + std::to_string(dim_));
        }

        struct Candidate {
            double sq;
            std::uint32_t slot;
        };
        std::vector<Candidate> candidates(size());
        for (std::size_t s = 0; s < size(); ++s) {
            candidates[s] = {squared_euclidean(q, entry(s)), static_cast<std::uint32_t>(s)};
        }
        // slots are in ascending row order, so comparing slots == comparing rows
        auto closer = [](const Candidate& a, const Candidate& b) {
            return a.sq < b.sq || (a.sq == b.sq && a.slot < b.slot);
        };
        if (k < candidates.size()) {
            std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k - 1), candidates.end(), closer);
            candidates.resize(k);
        }
        std::sort(candidates.begin(), candidates.end(), closer);

        RankedList out;
        out.reserve(k);
        for (const auto& c : candidates) {
            out.push_back({rows_[c.slot], meta_[c.slot].template_ordinal, meta_[c.slot].kind, std::sqrt(c.sq)});
        }
        return out;
    }

    /// Distance from q to the base-template entry of a template.
    double distance_to_template(std::span<const float> q, std::uint32_t template_ordinal) const {
        auto it = template_slot_.find(template_ordinal);
        if (it == template_slot_.end()) {
            throw Error(ErrorCode::out_of_range, "template " + std::to_string(template_ordinal) + " is not indexed");
        }
        return euclidean_distance(q, entry(it->second));
    }

    /// One ranked list per query row, in input order.
    std::vector<RankedList> query_batch(const EmbeddingMatrix& queries, std::size_t k, std::size_t threads = 1) const {
        std::vector<RankedList> out(queries.rows());
        parallel_for(queries.rows(), threads, [&](std::size_t i) { out[i] = query(queries.row(i), k); });
        return out;
    }

private:
    std::span<const float> entry(std::size_t slot) const { return {vectors_.data() + slot * dim_, dim_}; }

    std::vector<float> vectors_;
    std::vector<std::uint32_t> rows_;
    std::vector<EntryMeta> meta_;
    std::unordered_map<std::uint32_t, std::size_t> template_slot_;
    std::size_t dim_ = 0;
    bool include_examples_ = false;
};

}  // namespace memekit
