#include <map>
#include <set>

#include <gtest/gtest.h>

#include "memekit/memekit.hpp"
#include "oracles.hpp"
#include "synth.hpp"
#include "test_util.hpp"

using namespace memekit;

namespace {

std::size_t count_split(const SplitPlan& plan, Split s) {
    std::size_t n = 0;
    for (const auto& e : plan.entries) n += e.split == s ? 1 : 0;
    return n;
}

std::set<ObjectId> objects_in(const SplitPlan& plan, Split s) {
    std::set<ObjectId> out;
    for (const auto& e : plan.entries) {
        if (e.split == s) out.insert(e.object);
    }
    return out;
}

// hand-built plan: `objects` train objects with `per` items each, plus
// `val_objects` val objects
SplitPlan manual_plan(std::size_t objects, std::size_t per, std::size_t val_objects = 0, std::uint64_t seed = 1) {
    SplitPlan plan;
    plan.seed = seed;
    for (std::size_t o = 0; o < objects + val_objects; ++o) {
        for (std::size_t i = 0; i < per; ++i) {
            PlanEntry e;
            e.item_id = "o" + std::to_string(o) + "i" + std::to_string(i);
            e.object = ObjectId::for_template("t" + std::to_string(o));
            e.split = o < objects ? Split::train : Split::val;
            plan.entries.push_back(e);
        }
    }
    return plan;
}

synth::Params mixed_params() {
    synth::Params p;
    p.templates = 30;
    p.items = 300;
    p.ood_fraction = 0.25;
    return p;
}

}  // namespace

TEST(Cutoff, MultiOffGeometry) {
    EXPECT_EQ(test_cutoff(149, 743, 289), 57u);
    EXPECT_EQ(oracle::cutoff(149, 743, 289), 57u);
}

TEST(Cutoff, AgreesWithCountingOracle) {
    Rng rng(40);
    for (int i = 0; i < 2000; ++i) {
        const std::size_t d = 1 + rng.below(3000);
        const std::size_t t = rng.below(d + 1);
        const std::size_t o = rng.below(2000);
        const auto c = test_cutoff(t, d, o);
        EXPECT_EQ(c, oracle::cutoff(t, d, o));
        EXPECT_LE(c, o);
    }
}

TEST(Cutoff, ValCarving) {
    EXPECT_EQ(val_cutoff(149, 743, 232), 46u);  // floor(149*232/743)
    EXPECT_EQ(val_cutoff(0, 743, 232), 46u);    // 20% of objects when no val split exists
    EXPECT_EQ(val_cutoff(0, 100, 4), 0u);
    EXPECT_MEMEKIT_ERROR(test_cutoff(1, 0, 5), ErrorCode::empty_input);
    EXPECT_MEMEKIT_ERROR(test_cutoff(6, 5, 5), ErrorCode::out_of_range);
}

TEST(AssignObjects, IdenticalMemeMapsToTemplate) {
    synth::Params p;
    p.templates = 4;
    auto c = synth::make_corpus(p, 41);
    for (std::size_t j = 0; j < p.dim; ++j) c.items_image.row(0)[j] = c.kb_image.row(2)[j];
    const auto matches = synth::match(c, ThresholdMethod::p25);
    EXPECT_EQ(matches[0].distance, 0.0);
    EXPECT_EQ(matches[0].object, ObjectId::for_template("T0002"));
    EXPECT_EQ(matches[0].templateness, Templateness::instance);
}

TEST(AssignObjects, FarMemesGetTheirOwnUis) {
    synth::Params p;
    p.templates = 4;
    p.items = 40;
    auto c = synth::make_corpus(p, 42);
    for (std::size_t i : {3u, 7u}) {
        for (std::size_t j = 0; j < p.dim; ++j) c.items_image.row(i)[j] = 1e4f * static_cast<float>(i + j);
    }
    const auto matches = synth::match(c, ThresholdMethod::max);
    EXPECT_EQ(matches[3].object, ObjectId::ui_for(c.items[3].item_id));
    EXPECT_EQ(matches[7].object, ObjectId::ui_for(c.items[7].item_id));
    EXPECT_EQ(matches[3].object.id, "UI::" + c.items[3].item_id);
    EXPECT_NE(matches[3].object, matches[7].object);
}

TEST(AssignObjects, ThreeClustersAgainstOracle) {
    synth::Params p;
    p.templates = 3;
    p.examples_per = 5;
    p.items = 30;
    p.ood_fraction = 0.0;
    p.spread = 20.0;
    p.example_noise = 1.0;
    p.item_noise = 0.2;  // well inside the example spread
    const auto c = synth::make_corpus(p, 43);
    const auto matches = synth::match(c, ThresholdMethod::max);

    // oracle: nearest template by brute force, threshold = max example distance
    std::vector<std::vector<float>> centres;
    for (std::size_t t = 0; t < 3; ++t) centres.emplace_back(c.kb_image.row(t).begin(), c.kb_image.row(t).end());
    std::map<std::string, std::size_t> want, got;
    for (std::size_t i = 0; i < c.items.size(); ++i) {
        const auto hit = oracle::knn(centres, c.items_image.row(i), 1).front();
        std::vector<double> d;
        for (auto row : c.kb.templates[hit.row].example_image_rows) {
            d.push_back(oracle::distance(c.kb_image.row(hit.row), c.kb_image.row(row)));
        }
        ASSERT_LE(hit.distance, oracle::max(d));
        ++want[c.kb.templates[hit.row].template_id];
        EXPECT_EQ(static_cast<int>(hit.row), c.true_template[i]);
        ++got[matches[i].object.id];
        EXPECT_EQ(matches[i].object.kind, ObjectKind::template_object);
    }
    EXPECT_EQ(got, want);
}

TEST(AssignObjects, RequiresTemplatesOnlyIndex) {
    const auto c = synth::make_corpus(synth::Params{}, 44);
    const auto refs = build_reference_set(c.kb, c.kb_modalities(), FusionMode::image_only);
    const auto profiles = build_profiles(c.kb, refs, ThresholdMethod::max);
    const auto queries = query_matrix(c.items, c.item_modalities(), FusionMode::image_only);
    EXPECT_MEMEKIT_ERROR(assign_objects(c.items, queries, refs.index(true), c.kb, profiles), ErrorCode::invalid_argument);
}

TEST(AssignObjects, UiCountEqualsNonInstanceCount) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto c = synth::make_corpus(mixed_params(), seed);
        for (auto method : {ThresholdMethod::max, ThresholdMethod::median, ThresholdMethod::mean, ThresholdMethod::p25}) {
            const auto matches = synth::match(c, method);
            std::set<ObjectId> uis;
            std::size_t non_instance = 0;
            for (const auto& m : matches) {
                if (m.object.kind == ObjectKind::ui) uis.insert(m.object);
                non_instance += m.templateness == Templateness::non_templatic ? 1 : 0;
            }
            EXPECT_EQ(uis.size(), non_instance);
        }
    }
}

TEST(FullMode, LeakFreeAndSized) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto c = synth::make_corpus(mixed_params(), 100 + seed);
        const auto matches = synth::match(c, ThresholdMethod::max);
        const auto plan = tsplit_full_mode(c.items, matches, ThresholdMethod::max, seed);
        EXPECT_TRUE(find_leaks(plan).empty());
        ASSERT_EQ(plan.entries.size(), c.items.size());
        const auto counts = count_original_splits(c.items);
        EXPECT_EQ(plan.geometry.d_size, c.items.size());
        EXPECT_EQ(plan.geometry.t_size, counts.test);
        EXPECT_EQ(plan.geometry.cutoff, oracle::cutoff(counts.test, c.items.size(), plan.geometry.o_size));
        EXPECT_EQ(objects_in(plan, Split::test).size(), plan.geometry.cutoff);
        EXPECT_EQ(objects_in(plan, Split::val).size(), plan.geometry.val_cutoff);
        EXPECT_EQ(count_split(plan, Split::discard), 0u);
        // dataset order preserved
        for (std::size_t i = 0; i < c.items.size(); ++i) EXPECT_EQ(plan.entries[i].item_id, c.items[i].item_id);
    }
}

TEST(FullMode, SingleObjectLandsInOnePool) {
    synth::Params p;
    p.templates = 1;
    p.items = 20;
    p.ood_fraction = 0.0;
    p.item_noise = 0.0;
    const auto c = synth::make_corpus(p, 45);
    const auto plan = tsplit_full_mode(c.items, synth::match(c, ThresholdMethod::max), ThresholdMethod::max, 3);
    std::set<Split> used;
    for (const auto& e : plan.entries) used.insert(e.split);
    EXPECT_EQ(used.size(), 1u);
    EXPECT_EQ(plan.geometry.o_size, 1u);
    // one object cannot cover a test fraction: warned, not fatal
    EXPECT_FALSE(plan.warnings.empty());
}

TEST(FullMode, DeterministicReplay) {
    const auto c = synth::make_corpus(mixed_params(), 46);
    const auto a = plan_to_json(tsplit_full_mode(c.items, synth::match(c, ThresholdMethod::median, 1), ThresholdMethod::median, 9));
    const auto b = plan_to_json(tsplit_full_mode(c.items, synth::match(c, ThresholdMethod::median, 4), ThresholdMethod::median, 9));
    EXPECT_EQ(a.dump(), b.dump());
    const auto other = plan_to_json(tsplit_full_mode(c.items, synth::match(c, ThresholdMethod::median), ThresholdMethod::median, 10));
    EXPECT_NE(a.dump(), other.dump());
}

TEST(FullMode, EmptyDataset) {
    EXPECT_MEMEKIT_ERROR(tsplit_full_mode({}, {}, ThresholdMethod::max, 1), ErrorCode::empty_input);
}

TEST(DownsampleMode, OriginalTestPassesThrough) {
    const auto c = synth::make_corpus(mixed_params(), 47);
    const auto plan = tsplit_downsample_mode(c.items, synth::match(c, ThresholdMethod::max), ThresholdMethod::max, 5);
    EXPECT_TRUE(find_leaks(plan).empty());
    std::size_t original_test = 0;
    for (std::size_t i = 0; i < c.items.size(); ++i) {
        if (c.items[i].original_split == OriginalSplit::test) {
            ++original_test;
            EXPECT_EQ(plan.entries[i].split, Split::test);
            EXPECT_TRUE(plan.entries[i].passthrough);
        } else {
            EXPECT_NE(plan.entries[i].split, Split::test);  // the dummy test pool is discarded
            EXPECT_FALSE(plan.entries[i].passthrough);
        }
    }
    EXPECT_EQ(count_split(plan, Split::test), original_test);
    EXPECT_GT(count_split(plan, Split::discard), 0u);
    EXPECT_EQ(objects_in(plan, Split::discard).size(), plan.geometry.cutoff);
    EXPECT_EQ(plan.geometry.o_size, objects_in(plan, Split::train).size() + objects_in(plan, Split::val).size() +
                                        objects_in(plan, Split::discard).size());
}

TEST(DownsampleMode, NoValCarvesTwentyPercentOfObjects) {
    auto p = mixed_params();
    p.val_fraction = 0.0;
    const auto c = synth::make_corpus(p, 48);
    ASSERT_EQ(count_original_splits(c.items).val, 0u);
    const auto plan = tsplit_downsample_mode(c.items, synth::match(c, ThresholdMethod::max), ThresholdMethod::max, 5);
    const auto remaining = plan.geometry.o_size - plan.geometry.cutoff;
    EXPECT_EQ(plan.geometry.val_cutoff, remaining / 5);
    EXPECT_EQ(objects_in(plan, Split::val).size(), remaining / 5);
    EXPECT_GT(remaining / 5, 0u);
}

TEST(DownsampleMode, Errors) {
    auto c = synth::make_corpus(mixed_params(), 49);
    const auto matches = synth::match(c, ThresholdMethod::max);
    auto untagged = c.items;
    untagged[5].original_split = OriginalSplit::none;
    EXPECT_MEMEKIT_ERROR(tsplit_downsample_mode(untagged, matches, ThresholdMethod::max, 1), ErrorCode::missing_split_tags);
    auto no_train = c.items;
    for (auto& m : no_train) {
        if (m.original_split == OriginalSplit::train) m.original_split = OriginalSplit::val;
    }
    EXPECT_MEMEKIT_ERROR(tsplit_downsample_mode(no_train, matches, ThresholdMethod::max, 1), ErrorCode::empty_input);
}

TEST(DownsampleByTemplate, HalfRatioKeepsHalfTheObjects) {
    const auto plan = manual_plan(10, 2);
    const auto out = tsplit_downsample_by_template(plan, 10);
    ASSERT_TRUE(out.downsample.has_value());
    EXPECT_DOUBLE_EQ(out.downsample->train_ratio, 0.5);
    EXPECT_EQ(out.downsample->train_templates, 10u);
    EXPECT_EQ(out.downsample->cutoff, 5u);
    EXPECT_EQ(objects_in(out, Split::train).size(), 5u);
    EXPECT_EQ(objects_in(out, Split::discard).size(), 5u);
    EXPECT_EQ(count_split(out, Split::train), 10u);
    EXPECT_TRUE(find_leaks(out).empty());
    EXPECT_EQ(out.mode, TsplitMode::full_downsample);
}

TEST(DownsampleByTemplate, FullRatioIsIdentity) {
    const auto plan = manual_plan(7, 3, 4);
    const auto out = tsplit_downsample_by_template(plan, 21);
    EXPECT_EQ(out.entries, plan.entries);
}

TEST(DownsampleByTemplate, ValThinnedByItsOwnRatio) {
    const auto plan = manual_plan(10, 2, 8);
    const auto out = tsplit_downsample_by_template(plan, 20, 4);  // val 4 of 16 items
    EXPECT_EQ(objects_in(out, Split::train).size(), 10u);
    EXPECT_EQ(objects_in(out, Split::val).size(), 2u);
    EXPECT_EQ(out.downsample->val_cutoff, 2u);
    // without a val size the training ratio applies
    const auto shared = tsplit_downsample_by_template(plan, 10);
    EXPECT_EQ(objects_in(shared, Split::val).size(), 4u);
}

TEST(DownsampleByTemplate, Errors) {
    const auto plan = manual_plan(4, 2, 1);
    EXPECT_MEMEKIT_ERROR(tsplit_downsample_by_template(plan, 9), ErrorCode::out_of_range);
    EXPECT_MEMEKIT_ERROR(tsplit_downsample_by_template(plan, 4, 3), ErrorCode::out_of_range);
    EXPECT_MEMEKIT_ERROR(tsplit_downsample_by_template(manual_plan(0, 0), 0), ErrorCode::empty_input);
}

TEST(DownsampleByTemplate, DeterministicFromPlanSeed) {
    const auto plan = manual_plan(30, 3, 10, 77);
    EXPECT_EQ(plan_to_json(tsplit_downsample_by_template(plan, 40)).dump(),
              plan_to_json(tsplit_downsample_by_template(plan, 40)).dump());
}

TEST(Leaks, DetectsSharedObject) {
    auto plan = manual_plan(3, 2);
    EXPECT_TRUE(find_leaks(plan).empty());
    plan.entries[1].split = Split::test;  // second item of object t0
    const auto leaks = find_leaks(plan);
    ASSERT_EQ(leaks.size(), 1u);
    EXPECT_EQ(leaks[0].id, "t0");
    plan.entries[1].split = Split::discard;  // discards never count
    EXPECT_TRUE(find_leaks(plan).empty());
}

TEST(Plan, JsonRoundTrip) {
    const auto c = synth::make_corpus(mixed_params(), 50);
    const auto full = tsplit_full_mode(c.items, synth::match(c, ThresholdMethod::max), ThresholdMethod::max, 2);
    const auto plans = {full, tsplit_downsample_by_template(full, 50),
                        tsplit_downsample_mode(c.items, synth::match(c, ThresholdMethod::p25), ThresholdMethod::p25, 2)};
    for (const auto& plan : plans) {
        const auto j = plan_to_json(plan);
        const auto back = plan_from_json(Json::parse(j.dump()));
        EXPECT_EQ(plan_to_json(back).dump(), j.dump());
        EXPECT_EQ(back.entries, plan.entries);
    }
}

TEST(Plan, SummaryCountsTemplatesAndUis) {
    SplitPlan plan;
    plan.entries = {{"a", Split::train, ObjectId::for_template("t1"), false},
                    {"b", Split::train, ObjectId::for_template("t1"), false},
                    {"c", Split::train, ObjectId::ui_for("c"), false},
                    {"d", Split::test, ObjectId::for_template("t2"), false}};
    auto s = summarize(plan);
    EXPECT_EQ(s.train.items, 3u);
    EXPECT_EQ(s.train.templates, 1u);
    EXPECT_EQ(s.train.uis, 1u);
    EXPECT_EQ(s.test.templates, 1u);
    EXPECT_EQ(s.val.items, 0u);
}
