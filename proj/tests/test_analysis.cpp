#include <gtest/gtest.h>

#include "memekit/memekit.hpp"
#include "oracles.hpp"
#include "synth.hpp"
#include "test_util.hpp"

using namespace memekit;

namespace {

using Vec = std::vector<float>;

struct Blobs {
    EmbeddingMatrix data;
    std::vector<Vec> a, b;
};

// two blobs 100 units apart, so no point can ever be closer to the other blob
Blobs two_blobs(std::uint64_t seed, std::size_t per_blob = 40, std::size_t dim = 4) {
    Rng rng(seed);
    Blobs out;
    for (std::size_t i = 0; i < 2 * per_blob; ++i) {
        Vec v(dim);
        for (auto& x : v) x = static_cast<float>(rng.normal());
        const bool first = i % 2 == 0;  // interleave so blob order does not leak into row order
        if (!first) v[0] += 100.0f;
        (first ? out.a : out.b).push_back(v);
        out.data.push_back(v);
    }
    return out;
}

EmbeddingMatrix random_matrix(Rng& rng, std::size_t n, std::size_t dim) {
    EmbeddingMatrix m;
    for (std::size_t i = 0; i < n; ++i) {
        Vec v(dim);
        for (auto& x : v) x = static_cast<float>(rng.normal() * (1 + (i % 3)));
        m.push_back(v);
    }
    return m;
}

}  // namespace

// ------------------------------------------------------------------ retrieval

TEST(Retrieval, ExactCopyComesFirst) {
    const auto c = synth::make_corpus({}, 81);
    auto items = c.items;
    auto image = c.items_image;
    // append a verbatim copy of template 3's embedding as a new item
    MemeRecord copy;
    copy.item_id = "copy";
    copy.image_row = image.rows();
    copy.labels = items.front().labels;
    image.push_back(c.kb_image.row(c.kb.templates[3].image_row));
    items.push_back(copy);

    const auto refs = build_reference_set(c.kb, c.kb_modalities(), FusionMode::image_only);
    const auto pairs = retrieval_report(items, image, refs.index(false), c.kb, 5);
    ASSERT_EQ(pairs.size(), 5u);
    EXPECT_EQ(pairs[0].item_id, "copy");
    EXPECT_EQ(pairs[0].template_id, c.kb.templates[3].template_id);
    EXPECT_EQ(pairs[0].distance, 0.0);
}

TEST(Retrieval, MatchesSortOracleAndIsNonDecreasing) {
    auto p = synth::Params{};
    p.items = 200;
    const auto c = synth::make_corpus(p, 82);
    const auto refs = build_reference_set(c.kb, c.kb_modalities(), FusionMode::image_only);
    const auto pairs = retrieval_report(c.items, c.items_image, refs.index(false), c.kb, c.items.size(), 3);

    // oracle: nearest template per item by full scan, then stable sort by distance
    std::vector<Vec> templates;
    for (const auto& t : c.kb.templates) templates.emplace_back(c.kb_image.row(t.image_row).begin(), c.kb_image.row(t.image_row).end());
    struct Want {
        std::size_t item, tpl;
        double d;
    };
    std::vector<Want> want;
    for (std::size_t i = 0; i < c.items.size(); ++i) {
        const auto nn = oracle::knn(templates, c.items_image.row(i), 1).front();
        want.push_back({i, nn.row, nn.distance});
    }
    std::stable_sort(want.begin(), want.end(), [](const Want& a, const Want& b) { return a.d < b.d; });

    ASSERT_EQ(pairs.size(), c.items.size());
    std::set<std::string> seen;
    for (std::size_t r = 0; r < pairs.size(); ++r) {
        EXPECT_EQ(pairs[r].item_id, c.items[want[r].item].item_id) << r;
        EXPECT_EQ(pairs[r].template_id, c.kb.templates[want[r].tpl].template_id) << r;
        EXPECT_NEAR(pairs[r].distance, want[r].d, 1e-6 * (1 + want[r].d));
        if (r > 0) {
            EXPECT_LE(pairs[r - 1].distance, pairs[r].distance);
        }
        seen.insert(pairs[r].item_id);
        EXPECT_FALSE(pairs[r].grouping.has_value());
    }
    EXPECT_EQ(seen.size(), c.items.size());  // each item exactly once

    // top-n is a prefix of the full ranking
    const auto top = retrieval_report(c.items, c.items_image, refs.index(false), c.kb, 17);
    for (std::size_t r = 0; r < top.size(); ++r) EXPECT_EQ(top[r].item_id, pairs[r].item_id);
    EXPECT_EQ(retrieval_pair_to_json(top[0])["grouping"], nullptr);
}

TEST(Retrieval, Errors) {
    const auto c = synth::make_corpus({}, 83);
    const auto refs = build_reference_set(c.kb, c.kb_modalities(), FusionMode::image_only);
    const auto index = refs.index(false);
    EXPECT_MEMEKIT_ERROR(retrieval_report(c.items, c.items_image, index, c.kb, 0), ErrorCode::out_of_range);
    EXPECT_MEMEKIT_ERROR(retrieval_report(c.items, c.items_image, index, c.kb, c.items.size() + 1), ErrorCode::out_of_range);
}

// -------------------------------------------------------------------- k-means

TEST(KMeans, KEqualsNPutsACentroidOnEveryPoint) {
    Rng rng(84);
    const auto data = random_matrix(rng, 12, 3);
    const auto fit = kmeans(data, {12, 300, 1e-4, 1, 1});
    EXPECT_EQ(fit.sse(), 0.0);
    std::set<std::size_t> used(fit.assignment.begin(), fit.assignment.end());
    EXPECT_EQ(used.size(), 12u);
    for (std::size_t i = 0; i < data.rows(); ++i) {
        const auto& c = fit.centroids[fit.assignment[i]];
        for (std::size_t j = 0; j < data.dim(); ++j) EXPECT_EQ(c[j], static_cast<double>(data.row(i)[j]));
    }
}

TEST(KMeans, TwoBlobsRecoverBlobMeans) {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        const auto blobs = two_blobs(100 + seed);
        const auto fit = kmeans(blobs.data, {2, 300, 1e-4, seed, 1});
        EXPECT_TRUE(fit.converged);
        const auto ma = oracle::centroid(blobs.a);
        const auto mb = oracle::centroid(blobs.b);
        // which centroid is which blob
        const std::size_t ca = fit.centroids[0][0] < 50 ? 0 : 1;
        for (std::size_t j = 0; j < ma.size(); ++j) {
            EXPECT_NEAR(fit.centroids[ca][j], ma[j], 1e-6);
            EXPECT_NEAR(fit.centroids[1 - ca][j], mb[j], 1e-6);
        }
    }
}

TEST(KMeans, SseNeverIncreases) {
    Rng rng(85);
    for (std::uint64_t run = 0; run < 20; ++run) {
        const auto data = random_matrix(rng, 150 + run * 5, 6);
        const auto fit = kmeans(data, {3 + run % 6, 300, 1e-4, run, 1});
        ASSERT_GE(fit.sse_history.size(), 1u);
        for (std::size_t i = 1; i < fit.sse_history.size(); ++i) EXPECT_LE(fit.sse_history[i], fit.sse_history[i - 1]) << run;
    }
}

TEST(KMeans, DeterministicPerSeedAndThreads) {
    Rng rng(86);
    const auto data = random_matrix(rng, 300, 5);
    const auto a = kmeans(data, {5, 300, 1e-4, 9, 1});
    const auto b = kmeans(data, {5, 300, 1e-4, 9, 4});
    EXPECT_EQ(a.centroids, b.centroids);
    EXPECT_EQ(a.assignment, b.assignment);
    EXPECT_EQ(a.sse_history, b.sse_history);
}

TEST(KMeans, Errors) {
    Rng rng(87);
    const auto data = random_matrix(rng, 4, 2);
    EXPECT_MEMEKIT_ERROR(kmeans(data, {5, 300, 1e-4, 0, 1}), ErrorCode::out_of_range);
    EXPECT_MEMEKIT_ERROR(kmeans(data, {0, 300, 1e-4, 0, 1}), ErrorCode::out_of_range);
}

TEST(CentroidReport, BlobCentroidsPairWithEntriesFromTheirBlob) {
    const auto blobs = two_blobs(88);
    // lookup side: one entry near each blob, plus a decoy far away
    EmbeddingMatrix other;
    other.push_back(Vec{0.5f, 0, 0, 0});
    other.push_back(Vec{99, 0, 0, 0});
    other.push_back(Vec{-500, 0, 0, 0});
    const std::vector<std::string> ids{"near-a", "near-b", "decoy"};
    const auto r = centroid_report(blobs.data, FitSide::dataset, other, ids, {2, 300, 1e-4, 3, 1});
    ASSERT_EQ(r.centroids.size(), 2u);
    std::set<std::string> nearest;
    for (const auto& c : r.centroids) {
        nearest.insert(c.nearest_entry_id);
        EXPECT_EQ(c.cluster_size, 40u);
        const std::size_t row = c.nearest_entry_id == "near-a" ? 0 : 1;
        double d = 0;
        for (std::size_t j = 0; j < 4; ++j) d += (c.centroid[j] - other.row(row)[j]) * (c.centroid[j] - other.row(row)[j]);
        EXPECT_NEAR(c.distance, std::sqrt(d), 1e-9);
    }
    EXPECT_EQ(nearest, (std::set<std::string>{"near-a", "near-b"}));

    const auto j = centroid_report_to_json(r);
    EXPECT_EQ(j["fit_side"], "dataset");
    EXPECT_EQ(j["k"], 2);
    EXPECT_EQ(j["centroids"].size(), 2u);
    // same seed, same report
    EXPECT_EQ(centroid_report_to_json(centroid_report(blobs.data, FitSide::dataset, other, ids, {2, 300, 1e-4, 3, 1})), j);
}

TEST(CentroidReport, Errors) {
    const auto blobs = two_blobs(89);
    EmbeddingMatrix other;
    other.push_back(Vec{0, 0, 0, 0});
    EXPECT_MEMEKIT_ERROR(centroid_report(blobs.data, FitSide::kb, other, {}, {}), ErrorCode::invalid_argument);
    EXPECT_MEMEKIT_ERROR(centroid_report(blobs.data, FitSide::kb, EmbeddingMatrix(0, 4), {}, {}), ErrorCode::empty_input);
    EmbeddingMatrix narrow;
    narrow.push_back(Vec{0, 0});
    EXPECT_MEMEKIT_ERROR(centroid_report(blobs.data, FitSide::kb, narrow, {"x"}, {}), ErrorCode::dimension_mismatch);
    EXPECT_EQ(parse_fit_side("kb"), FitSide::kb);
    EXPECT_EQ(parse_fit_side("dataset"), FitSide::dataset);
    EXPECT_THROW(parse_fit_side("both"), Error);
}
