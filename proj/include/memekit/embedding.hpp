#pragma once

// Dense float32 embedding matrices and the `.emb` container:
//
//   offset 0   4 bytes   magic "EMB1"
//   offset 4   u32 LE    n_rows
//   offset 8   u32 LE    dim
//   offset 12  n_rows*dim float32 LE, row-major
//
// Row identity is kept in sidecar JSON manifests, never in this file.

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "memekit/error.hpp"

namespace memekit {

class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;

    EmbeddingMatrix(std::size_t rows, std::size_t dim) : rows_(rows), dim_(dim), data_(rows * dim, 0.0f) {}

    EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data)
        : rows_(rows), dim_(dim), data_(std::move(data)) {
        if (data_.size() != rows_ * dim_) {
            throw Error(ErrorCode::dimension_mismatch,
                        "payload holds " + std::to_string(data_.size()) + " values, expected " +
                            std::to_string(rows_ * dim_));
        }
        validate_finite();
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t dim() const noexcept { return dim_; }
    bool empty() const noexcept { return rows_ == 0; }

    std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
    std::span<float> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

    std::span<const float> data() const noexcept { return data_; }

    /// Appends one row; the first append on an empty 0-dim matrix fixes dim.
    void push_back(std::span<const float> values) {
        if (rows_ == 0 && dim_ == 0) dim_ = values.size();
        if (values.size() != dim_) {
            throw Error(ErrorCode::dimension_mismatch,
                        "row has " + std::to_string(values.size()) + " components, matrix dim is " +
                            std::to_string(dim_));
        }
        for (float v : values) {
            if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, "row " + std::to_string(rows_));
        }
        data_.insert(data_.end(), values.begin(), values.end());
        ++rows_;
    }

    friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

private:
    void validate_finite() const {
        for (std::size_t i = 0; i < data_.size(); ++i) {
            if (!std::isfinite(data_[i])) {
                throw Error(ErrorCode::non_finite, "row " + std::to_string(i / (dim_ ? dim_ : 1)) +
                                                       ", component " + std::to_string(dim_ ? i % dim_ : 0));
            }
        }
    }

    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::vector<float> data_;
};

namespace detail {

inline constexpr char kEmbMagic[4] = {'E', 'M', 'B', '1'};
inline constexpr std::size_t kEmbHeaderSize = 12;

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[offset + b]) << (8 * b);
    return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& m) {
    if (m.rows() > UINT32_MAX || m.dim() > UINT32_MAX) {
        throw Error(ErrorCode::out_of_range, "matrix too large for the EMB1 header");
    }
    std::vector<std::uint8_t> out;
    out.reserve(detail::kEmbHeaderSize + m.data().size() * 4);
    out.insert(out.end(), std::begin(detail::kEmbMagic), std::end(detail::kEmbMagic));
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.dim()));
    for (float v : m.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

inline EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), detail::kEmbMagic, 4) != 0) {
        throw Error(ErrorCode::bad_magic, "expected \"EMB1\"");
    }
    if (bytes.size() < detail::kEmbHeaderSize) throw Error(ErrorCode::truncated_payload, "header incomplete");

    const std::uint64_t rows = detail::get_u32(bytes, 4);
    const std::uint64_t dim = detail::get_u32(bytes, 8);
    const std::uint64_t expected = rows * dim;
    const std::uint64_t available = (bytes.size() - detail::kEmbHeaderSize) / 4;
    if (available < expected || (bytes.size() - detail::kEmbHeaderSize) < expected * 4) {
        throw Error(ErrorCode::truncated_payload, "header declares " + std::to_string(rows) + "x" +
                                                      std::to_string(dim) + " but payload holds " +
                                                      std::to_string(available) + " floats");
    }
    if (bytes.size() != detail::kEmbHeaderSize + expected * 4) {
        throw Error(ErrorCode::trailing_bytes,
                    std::to_string(bytes.size() - detail::kEmbHeaderSize - expected * 4) + " extra bytes");
    }

    std::vector<float> data(expected);
    for (std::uint64_t i = 0; i < expected; ++i) {
        data[i] = std::bit_cast<float>(detail::get_u32(bytes, detail::kEmbHeaderSize + i * 4));
    }
    return EmbeddingMatrix(rows, dim, std::move(data));
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
    try {
        return decode_embeddings(read_file_bytes(path));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::io) throw;
        throw Error(e.code(), path.string() + ": " + e.detail());
    }
}

inline void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m) {
    const auto bytes = encode_embeddings(m);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::io, "short write to " + path.string());
}

/// Copy with every row scaled to unit L2 norm. Off by default everywhere;
/// zero rows have no direction and are rejected.
inline EmbeddingMatrix l2_normalized(const EmbeddingMatrix& m) {
    EmbeddingMatrix out = m;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        double sq = 0.0;
        for (float v : row) sq += static_cast<double>(v) * v;
        if (sq == 0.0) throw Error(ErrorCode::invalid_argument, "row " + std::to_string(r) + " is the zero vector");
        const double inv = 1.0 / std::sqrt(sq);
        for (auto& v : row) v = static_cast<float>(v * inv);
    }
    return out;
}

}  // namespace memekit
