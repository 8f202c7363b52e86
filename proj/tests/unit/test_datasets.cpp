#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

using namespace csicl;
using datasets::Example;
using datasets::TaskSpec;

namespace {

std::string task_json(std::size_t n) {
    nlohmann::json ex = nlohmann::json::array();
    for (std::size_t i = 0; i < n; ++i) ex.push_back({{"input", "q" + std::to_string(i)}, {"target", "t" + std::to_string(i)}});
    return nlohmann::json{{"examples", ex}}.dump();
}

std::vector<Example> make_examples(std::size_t n) {
    std::vector<Example> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({"q" + std::to_string(i), "t" + std::to_string(i)});
    return out;
}

TaskSpec spec(std::size_t pool, std::size_t test) {
    return {"task", "Task", datasets::AnswerFormat::free_text, pool, test};
}

std::vector<int> iota_vec(int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    std::iota(v.begin(), v.end(), 0);
    return v;
}

} // namespace

TEST(Prng, SplitMixMatchesPublishedVector) {
    datasets::SplitMix64 g(1234567);
    EXPECT_EQ(g.next(), 6457827717110365317ULL);
    EXPECT_EQ(g.next(), 3203168211198807973ULL);
    EXPECT_EQ(g.next(), 9817491932198370423ULL);
}

TEST(Prng, BoundedStaysInRange) {
    datasets::SplitMix64 g(9);
    for (std::uint64_t n : {1ULL, 2ULL, 3ULL, 7ULL, 1000ULL, (1ULL << 63) + 5}) {
        for (int i = 0; i < 200; ++i) EXPECT_LT(g.bounded(n), n);
    }
}

// Goldens from tests/oracles/shuffle_goldens.py.
TEST(ShuffleDemos, GoldenPermutations) {
    const std::vector<std::pair<std::int64_t, std::vector<int>>> goldens = {
        {0, {6, 3, 2, 9, 8, 1, 4, 7, 0, 5}},  {1, {4, 2, 8, 1, 9, 3, 0, 6, 7, 5}},
        {2, {9, 8, 3, 2, 4, 6, 1, 7, 5, 0}},  {42, {0, 9, 5, 8, 6, 4, 7, 2, 1, 3}},
        {-1, {3, 4, 2, 7, 5, 0, 8, 1, 9, 6}},
    };
    for (const auto& [seed, want] : goldens) EXPECT_EQ(datasets::shuffle_demos(iota_vec(10), seed), want) << seed;
    const auto head = datasets::shuffle_demos(iota_vec(150), 0);
    EXPECT_EQ(std::vector<int>(head.begin(), head.begin() + 12),
              (std::vector<int>{3, 79, 92, 2, 135, 1, 78, 82, 27, 139, 147, 108}));
}

TEST(ShuffleDemos, EmptyAndSingleton) {
    EXPECT_TRUE(datasets::shuffle_demos(std::vector<int>{}, 5).empty());
    EXPECT_EQ(datasets::shuffle_demos(std::vector<int>{7}, 5), std::vector<int>{7});
}

TEST(ShuffleDemos, DifferentSeedsDiffer) {
    EXPECT_NE(datasets::shuffle_demos(iota_vec(10), 1), datasets::shuffle_demos(iota_vec(10), 2));
}

TEST(ShuffleDemos, AlwaysAPermutation) {
    for (int n = 0; n <= 1000; ++n) {
        auto v = iota_vec(n);
        for (auto& x : v) x %= 17;  // repeated values too
        auto s = datasets::shuffle_demos(v, n * 31 + 7);
        ASSERT_TRUE(std::is_permutation(v.begin(), v.end(), s.begin(), s.end())) << n;
    }
}

TEST(ShuffleDemos, PureFunctionOfInputs) {
    EXPECT_EQ(datasets::shuffle_demos(make_examples(30), 11), datasets::shuffle_demos(make_examples(30), 11));
}

TEST(TaskSpec, Invariants) {
    EXPECT_NO_THROW(spec(2, 1).validate());
    EXPECT_THROW(spec(1, 1).validate(), DataError);
    EXPECT_THROW(spec(2, 0).validate(), DataError);
    auto s = spec(2, 1);
    s.task_id.clear();
    EXPECT_THROW(s.validate(), DataError);
}

TEST(LoadTask, ReturnsFileOrder) {
    test::TempDir dir;
    test::write_file(dir / "t.json", task_json(250));
    const auto ex = datasets::load_task(dir / "t.json", spec(150, 100));
    ASSERT_EQ(ex.size(), 250u);
    EXPECT_EQ(ex.front().input, "q0");
    EXPECT_EQ(ex.back().target, "t249");
}

TEST(LoadTask, EmptyFileGivesEmptyList) {
    test::TempDir dir;
    test::write_file(dir / "t.json", task_json(0));
    EXPECT_TRUE(datasets::load_task(dir / "t.json", spec(2, 1)).empty());
}

TEST(LoadTask, MissingTargetNamesIndex) {
    test::TempDir dir;
    auto doc = nlohmann::json::parse(task_json(5));
    doc["examples"][3].erase("target");
    test::write_file(dir / "t.json", doc.dump());
    try {
        datasets::load_task(dir / "t.json", spec(2, 1));
        FAIL() << "no error";
    } catch (const IndexedError& e) {
        EXPECT_EQ(e.index(), 3u);
        EXPECT_NE(std::string(e.what()).find("index 3"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("target"), std::string::npos);
    }
}

TEST(LoadTask, MalformedRecordAndMissingFile) {
    test::TempDir dir;
    test::write_file(dir / "t.json", R"({"examples":[{"input":"a","target":"b"}, 5]})");
    try {
        datasets::load_task(dir / "t.json", spec(2, 1));
        FAIL() << "no error";
    } catch (const IndexedError& e) {
        EXPECT_EQ(e.index(), 1u);
    }
    test::write_file(dir / "u.json", R"({"examples":[{"input":"","target":"b"}]})");
    EXPECT_THROW(datasets::load_task(dir / "u.json", spec(2, 1)), IndexedError);
    test::write_file(dir / "v.json", R"({"items":[]})");
    EXPECT_THROW(datasets::load_task(dir / "v.json", spec(2, 1)), DataError);
    EXPECT_THROW(datasets::load_task(dir / "missing.json", spec(2, 1)), DataError);
}

TEST(SplitExamples, StandardSizes) {
    const auto a = datasets::split_examples(make_examples(250), spec(150, 100), 0);
    EXPECT_EQ(a.demos.size(), 150u);
    EXPECT_EQ(a.test.size(), 100u);
    const auto b = datasets::split_examples(make_examples(187), spec(100, 87), 0);
    EXPECT_EQ(b.demos.size(), 100u);
    EXPECT_EQ(b.test.size(), 87u);
}

TEST(SplitExamples, MembershipFixedOrderBySeed) {
    const auto ex = make_examples(20);
    const auto s = spec(12, 8);
    const auto a = datasets::split_examples(ex, s, 0);
    const auto b = datasets::split_examples(ex, s, 1);
    EXPECT_EQ(a.test, std::vector<Example>(ex.begin() + 12, ex.end()));
    EXPECT_EQ(a.test, b.test);
    EXPECT_TRUE(std::is_permutation(a.demos.begin(), a.demos.end(), ex.begin(), ex.begin() + 12));
    EXPECT_TRUE(std::is_permutation(a.demos.begin(), a.demos.end(), b.demos.begin(), b.demos.end()));
    EXPECT_NE(a.demos, b.demos);
    EXPECT_EQ(a.demos, datasets::shuffle_demos(std::vector<Example>(ex.begin(), ex.begin() + 12), 0));
    for (const auto& d : a.demos) EXPECT_EQ(std::find(a.test.begin(), a.test.end(), d), a.test.end());
}

TEST(SplitExamples, Idempotent) {
    const auto ex = make_examples(16);
    EXPECT_EQ(datasets::split_examples(ex, spec(12, 4), 3).demos, datasets::split_examples(ex, spec(12, 4), 3).demos);
}

TEST(SplitExamples, SizeMismatch) {
    EXPECT_THROW(datasets::split_examples(make_examples(15), spec(12, 4), 0), DataError);
}

TEST(Registry, LoadsSyntheticAndSizesMatchFiles) {
    const auto reg = datasets::TaskRegistry::load(test::kSyntheticDir / "registry.json");
    ASSERT_TRUE(reg.contains("boolean_expressions"));
    for (const auto& id : reg.task_ids()) {
        const auto& e = reg.at(id);
        EXPECT_EQ(datasets::load_task(e.path, e.spec).size(), e.spec.demo_pool_size + e.spec.test_size);
    }
}

TEST(Registry, RejectsDuplicatesAndEmptyPools) {
    datasets::TaskRegistry reg;
    reg.add({spec(2, 1), "a.json", std::nullopt});
    EXPECT_THROW(reg.add({spec(2, 1), "b.json", std::nullopt}), DataError);
    auto empty = spec(0, 1);
    empty.task_id = "other";
    EXPECT_THROW(reg.add({empty, "c.json", std::nullopt}), DataError);
    EXPECT_THROW(reg.at("nope"), DataError);
}
