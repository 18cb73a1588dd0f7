#include <gtest/gtest.h>

#include "memekit/memekit.hpp"
#include "oracles.hpp"
#include "synth.hpp"
#include "test_util.hpp"

using namespace memekit;

namespace {

const std::vector<double> kOneToFour{4, 2, 1, 3};  // unsorted on purpose

std::vector<double> random_dists(Rng& rng, std::size_t n) {
    std::vector<double> d(n);
    for (auto& x : d) x = std::abs(rng.normal()) * 5.0;
    return d;
}

}  // namespace

TEST(TemplateThreshold, OneToFour) {
    EXPECT_DOUBLE_EQ(template_threshold(kOneToFour, ThresholdMethod::median), 2.5);
    EXPECT_DOUBLE_EQ(template_threshold(kOneToFour, ThresholdMethod::mean), 2.5);
    EXPECT_DOUBLE_EQ(template_threshold(kOneToFour, ThresholdMethod::max), 4.0);
    EXPECT_DOUBLE_EQ(template_threshold(kOneToFour, ThresholdMethod::p25), 1.75);
}

TEST(TemplateThreshold, Singleton) {
    const std::vector<double> one{5};
    for (auto m : {ThresholdMethod::max, ThresholdMethod::median, ThresholdMethod::mean, ThresholdMethod::p25}) {
        EXPECT_EQ(template_threshold(one, m), 5.0);
    }
}

TEST(TemplateThreshold, EmptySignalsFallback) {
    EXPECT_MEMEKIT_ERROR(template_threshold(std::vector<double>{}, ThresholdMethod::max), ErrorCode::no_examples);
}

TEST(TemplateThreshold, NegativeDistanceRejected) {
    EXPECT_MEMEKIT_ERROR(template_threshold(std::vector<double>{1, -1}, ThresholdMethod::max), ErrorCode::invalid_argument);
}

TEST(TemplateThreshold, MatchesStatisticsOracle) {
    Rng rng(31);
    for (int i = 0; i < 100; ++i) {
        const auto d = random_dists(rng, 1 + rng.below(40));
        EXPECT_NEAR(template_threshold(d, ThresholdMethod::max), oracle::max(d), 1e-9);
        EXPECT_NEAR(template_threshold(d, ThresholdMethod::median), oracle::median(d), 1e-9);
        EXPECT_NEAR(template_threshold(d, ThresholdMethod::mean), oracle::mean(d), 1e-9);
        EXPECT_NEAR(template_threshold(d, ThresholdMethod::p25), oracle::percentile(d, 0.25), 1e-9);
    }
}

TEST(TemplateThreshold, MonotoneAndWithinRange) {
    Rng rng(32);
    for (int i = 0; i < 300; ++i) {
        const auto d = random_dists(rng, 1 + rng.below(25));
        const double p25 = template_threshold(d, ThresholdMethod::p25);
        const double med = template_threshold(d, ThresholdMethod::median);
        const double mean = template_threshold(d, ThresholdMethod::mean);
        const double mx = template_threshold(d, ThresholdMethod::max);
        const double mn = *std::min_element(d.begin(), d.end());
        EXPECT_LE(p25, med);
        EXPECT_LE(med, mx);
        EXPECT_LE(mean, mx);
        for (double t : {p25, med, mean, mx}) {
            EXPECT_GE(t, mn);
            EXPECT_LE(t, mx);
        }
    }
}

TEST(GlobalThreshold, TwoProfiles) {
    std::vector<ThresholdProfile> profiles(3);
    profiles[0].threshold = 2;
    profiles[0].n_examples = 1;
    profiles[1].threshold = 4;
    profiles[1].n_examples = 3;
    profiles[2].threshold = 100;  // no examples: ignored
    const auto mx = global_threshold(profiles, ThresholdMethod::max);
    EXPECT_EQ(mx.value, 4.0);
    EXPECT_EQ(mx.n_contributing_templates, 2u);
    EXPECT_EQ(global_threshold(profiles, ThresholdMethod::mean).value, 3.0);
}

TEST(GlobalThreshold, NoExamplesAnywhere) {
    std::vector<ThresholdProfile> profiles(2);
    EXPECT_MEMEKIT_ERROR(global_threshold(profiles, ThresholdMethod::max), ErrorCode::no_examples);
}

TEST(GlobalThreshold, MatchesRecomputationFromRawValues) {
    Rng rng(33);
    std::vector<ThresholdProfile> profiles;
    std::vector<double> per_template;
    for (int i = 0; i < 50; ++i) {
        ThresholdProfile p;
        p.dists = random_dists(rng, rng.below(6));
        p.n_examples = p.dists.size();
        if (p.n_examples > 0) {
            p.threshold = oracle::median(p.dists);
            per_template.push_back(p.threshold);
        }
        profiles.push_back(p);
    }
    EXPECT_NEAR(global_threshold(profiles, ThresholdMethod::max).value, oracle::max(per_template), 1e-12);
    EXPECT_NEAR(global_threshold(profiles, ThresholdMethod::median).value, oracle::median(per_template), 1e-12);
    EXPECT_NEAR(global_threshold(profiles, ThresholdMethod::mean).value, oracle::mean(per_template), 1e-12);
    EXPECT_NEAR(global_threshold(profiles, ThresholdMethod::p25).value, oracle::percentile(per_template, 0.25), 1e-12);
}

TEST(BuildProfiles, FallbackForTemplatesWithoutExamples) {
    synth::Params p;
    p.templates = 6;
    p.examples_per = 4;
    auto c = synth::make_corpus(p, 3);
    c.kb.templates[2].example_image_rows.clear();
    const auto refs = build_reference_set(c.kb, c.kb_modalities(), FusionMode::image_only);
    const auto set = build_profiles(c.kb, refs, ThresholdMethod::median);
    EXPECT_TRUE(set.profiles[2].fallback);
    EXPECT_EQ(set.profiles[2].threshold, set.global.value);
    EXPECT_EQ(set.global.n_contributing_templates, 5u);
    for (std::size_t t = 0; t < 6; ++t) {
        if (t == 2) continue;
        std::vector<double> d;
        for (auto row : c.kb.templates[t].example_image_rows) {
            d.push_back(oracle::distance(c.kb_image.row(c.kb.templates[t].image_row), c.kb_image.row(row)));
        }
        EXPECT_NEAR(set.profiles[t].threshold, oracle::median(d), 1e-6);
        EXPECT_FALSE(set.profiles[t].fallback);
    }
    // thread count never changes the result
    const auto again = build_profiles(c.kb, refs, ThresholdMethod::median, 4);
    EXPECT_EQ(profiles_to_json(again), profiles_to_json(set));
    const auto j = profiles_to_json(set);
    EXPECT_EQ(j["templates"][2]["fallback"], true);
    EXPECT_EQ(j["templates"][2]["n_examples"], 0);
}

TEST(Classify, BoundaryIsInstance) {
    EXPECT_EQ(classify_item(0.0, 0.0), Templateness::instance);
    EXPECT_EQ(classify_item(0.0, 3.0), Templateness::instance);
    EXPECT_EQ(classify_item(2.5, 2.5), Templateness::instance);
    EXPECT_EQ(classify_item(std::nextafter(2.5, 3.0), 2.5), Templateness::non_templatic);
}

TEST(Classify, MethodOrdering) {
    // instance under p25 => instance under median; instance under anything => instance under max
    Rng rng(34);
    for (int i = 0; i < 200; ++i) {
        const auto d = random_dists(rng, 1 + rng.below(10));
        const double x = std::abs(rng.normal()) * 6.0;
        auto inst = [&](ThresholdMethod m) { return classify_item(x, template_threshold(d, m)) == Templateness::instance; };
        if (inst(ThresholdMethod::p25)) {
            EXPECT_TRUE(inst(ThresholdMethod::median));
        }
        for (auto m : {ThresholdMethod::p25, ThresholdMethod::median, ThresholdMethod::mean}) {
            if (inst(m)) {
                EXPECT_TRUE(inst(ThresholdMethod::max));
            }
        }
    }
}

TEST(Ood, MaxKeepsBoundary) {
    const auto f = OodFilter::from_dists(kOneToFour, OodKind::max);
    EXPECT_TRUE(ood_keep(4.0, f));
    EXPECT_FALSE(ood_keep(4.0001, f));
}

TEST(Ood, IqrBound) {
    const auto f = OodFilter::from_dists(kOneToFour, OodKind::iqr);
    EXPECT_DOUBLE_EQ(f.q1(), 1.75);
    EXPECT_DOUBLE_EQ(f.q3(), 3.25);
    EXPECT_DOUBLE_EQ(f.bound(), 5.5);
    EXPECT_TRUE(ood_keep(5.0, f));
    EXPECT_TRUE(ood_keep(5.5, f));
    EXPECT_FALSE(ood_keep(5.6, f));
}

TEST(Ood, SigmaAndMadBounds) {
    const auto s = OodFilter::from_dists(kOneToFour, OodKind::three_sigma);
    // population std of {1,2,3,4} is sqrt(1.25)
    EXPECT_NEAR(s.bound(), 2.5 + 3.0 * std::sqrt(1.25), 1e-12);
    const auto m = OodFilter::from_dists(kOneToFour, OodKind::mad);
    // mean |d - 2.5| = (1.5 + 0.5 + 0.5 + 1.5) / 4 = 1
    EXPECT_NEAR(m.mad(), 1.0, 1e-12);
    EXPECT_NEAR(m.bound(), 5.5, 1e-12);
}

TEST(Ood, HugeDistanceDiscardedUnderEveryKind) {
    for (auto kind : {OodKind::iqr, OodKind::three_sigma, OodKind::mad, OodKind::max}) {
        EXPECT_FALSE(ood_keep(1e9, OodFilter::from_dists(kOneToFour, kind)));
    }
}

TEST(Ood, SingleExampleFallsBackToMax) {
    const std::vector<double> one{2.0};
    for (auto kind : {OodKind::iqr, OodKind::three_sigma, OodKind::mad}) {
        const auto f = OodFilter::from_dists(one, kind);
        EXPECT_EQ(f.kind(), OodKind::max);
        EXPECT_EQ(f.requested_kind(), kind);
        EXPECT_EQ(f.bound(), 2.0);
    }
}

TEST(Ood, MaxKindAgreesWithMaxClassification) {
    Rng rng(35);
    for (int i = 0; i < 200; ++i) {
        const auto d = random_dists(rng, 1 + rng.below(10));
        const double x = std::abs(rng.normal()) * 6.0;
        const bool keep = ood_keep(x, OodFilter::from_dists(d, OodKind::max));
        const bool inst = classify_item(x, template_threshold(d, ThresholdMethod::max)) == Templateness::instance;
        EXPECT_EQ(keep, inst);
    }
}

TEST(ThresholdMethod, StringForms) {
    for (const char* s : {"max", "median", "mean", "p25"}) EXPECT_EQ(to_string(parse_threshold_method(s)), s);
    EXPECT_EQ(parse_threshold_method("percentile"), ThresholdMethod::p25);
    EXPECT_THROW(parse_threshold_method("p90"), Error);
}
