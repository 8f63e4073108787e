#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <string>
#include <vector>

#include "gidx/error.hpp"
#include "gidx/kmeans.hpp"
#include "gidx/metrics.hpp"

using namespace gidx;

namespace {

RetrievalResult result(Granularity g, const std::string& qid,
                       const std::vector<std::string>& ids) {
    RetrievalResult r;
    r.granularity = g;
    r.query_id = qid;
    float score = 1.0f;
    for (const auto& id : ids) {
        r.hits.push_back({id, score});
        score -= 0.01f;
    }
    return r;
}

// unit text = the unit id itself, so answers match ids directly
std::string self_text(Granularity, const std::string& id) {
    return id;
}

} // namespace

TEST_CASE("top_k_accuracy counting") {
    std::vector<std::vector<char>> rel = {
        {1, 0, 0},          // relevant at rank 1
        {0, 0, 1},          // relevant at rank 3
        {0, 0, 0, 0, 0, 1}, // relevant at rank 6
    };
    CHECK(top_k_accuracy(rel, 1) == doctest::Approx(1.0 / 3.0));
    CHECK(top_k_accuracy(rel, 5) == doctest::Approx(2.0 / 3.0));
    CHECK(top_k_accuracy(rel, 20) == doctest::Approx(1.0));
    CHECK_THROWS_AS(top_k_accuracy(rel, 0), ValidationError);
}

TEST_CASE("top-k accuracy three-query example") {
    // first-relevant ranks {1, 3, 21}, k=20 -> 2/3
    std::vector<std::vector<char>> rel(3);
    rel[0] = {1};
    rel[1] = {0, 0, 1};
    rel[2].assign(21, 0);
    rel[2][20] = 1;
    CHECK(top_k_accuracy(rel, 20) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("mrr_at_k") {
    std::vector<std::vector<char>> rel = {{0, 0, 1}};
    CHECK(mrr_at_k(rel, 5) == doctest::Approx(1.0 / 3.0));
    std::vector<std::vector<char>> none = {{0, 0, 0}};
    CHECK(mrr_at_k(none, 5) == doctest::Approx(0.0));
    std::vector<std::vector<char>> two = {{1, 0}, {0, 1}};
    CHECK(mrr_at_k(two, 2) == doctest::Approx(0.75));
}

TEST_CASE("precision_at_k with short-list padding") {
    std::vector<std::vector<char>> rel = {{1, 0, 1, 0}};
    CHECK(precision_at_k(rel, 4) == doctest::Approx(0.5));
    std::vector<std::vector<char>> all = {{1, 1, 1}};
    CHECK(precision_at_k(all, 3) == doctest::Approx(1.0));
    // list shorter than k: denominator stays k
    std::vector<std::vector<char>> short_list = {{1, 0}};
    CHECK(precision_at_k(short_list, 4) == doctest::Approx(0.25));
}

TEST_CASE("metrics are monotone in k and bounded") {
    Rng rng(3);
    std::vector<std::vector<char>> rel;
    for (int q = 0; q < 25; ++q) {
        std::vector<char> marks(20);
        for (auto& m : marks) {
            m = rng.below(4) == 0 ? 1 : 0;
        }
        rel.push_back(std::move(marks));
    }
    double prev_acc = 0.0, prev_mrr = 0.0;
    for (std::size_t k = 1; k <= 20; ++k) {
        const double acc = top_k_accuracy(rel, k);
        const double mrr = mrr_at_k(rel, k);
        const double p = precision_at_k(rel, k);
        CHECK(acc >= prev_acc);
        CHECK(mrr >= prev_mrr);
        CHECK(acc >= 0.0);
        CHECK(acc <= 1.0);
        CHECK(mrr >= 0.0);
        CHECK(mrr <= 1.0);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        prev_acc = acc;
        prev_mrr = mrr;
    }
}

TEST_CASE("permutation invariances") {
    Rng rng(9);
    std::vector<std::vector<char>> rel;
    for (int q = 0; q < 10; ++q) {
        std::vector<char> marks(10);
        for (auto& m : marks) {
            m = rng.below(3) == 0 ? 1 : 0;
        }
        rel.push_back(std::move(marks));
    }
    const std::size_t k = 5;
    const double acc = top_k_accuracy(rel, k);
    const double mrr = mrr_at_k(rel, k);
    const double p = precision_at_k(rel, k);

    // permuting queries changes nothing
    auto shuffled = rel;
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(top_k_accuracy(shuffled, k) == doctest::Approx(acc));
    CHECK(mrr_at_k(shuffled, k) == doctest::Approx(mrr));
    CHECK(precision_at_k(shuffled, k) == doctest::Approx(p));

    // permuting ranks within the top k preserves accuracy and precision
    auto swapped = rel;
    for (auto& marks : swapped) {
        std::reverse(marks.begin(), marks.begin() + k);
    }
    CHECK(top_k_accuracy(swapped, k) == doctest::Approx(acc));
    CHECK(precision_at_k(swapped, k) == doctest::Approx(p));
}

TEST_CASE("relevance_by_answer resolves units and judgments") {
    std::vector<RetrievalResult> results = {
        result(Granularity::passage, "q1", {"the bell tolls", "no answer here"}),
        result(Granularity::passage, "q2", {"nothing", "georgia peach"}),
    };
    std::vector<Judgment> judgments = {
        {"q1", {"Bell"}, {}},
        {"q2", {"peach"}, {}},
    };
    auto rel = relevance_by_answer(results, judgments, self_text);
    REQUIRE(rel.size() == 2);
    CHECK(rel[0] == std::vector<char>{1, 0});
    CHECK(rel[1] == std::vector<char>{0, 1});

    std::vector<Judgment> missing = {{"q1", {"Bell"}, {}}};
    CHECK_THROWS_AS(relevance_by_answer(results, missing, self_text), ValidationError);
}

TEST_CASE("r_precision basics") {
    std::vector<RetrievalResult> results = {result(Granularity::document, "q1", {"gold", "x"})};
    std::vector<Judgment> judgments = {{"q1", {}, {"gold"}}};
    CHECK(r_precision(results, judgments) == doctest::Approx(1.0));

    // R=2, one of two gold docs in the top 2
    std::vector<RetrievalResult> r2 = {result(Granularity::document, "q1", {"g1", "x", "g2"})};
    std::vector<Judgment> j2 = {{"q1", {}, {"g1", "g2"}}};
    CHECK(r_precision(r2, j2) == doctest::Approx(0.5));

    std::vector<Judgment> empty_gold = {{"q1", {"a"}, {}}};
    CHECK_THROWS_AS(r_precision(results, empty_gold), ValidationError);
}

TEST_CASE("r_precision equals precision@1 when every query has one gold doc") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<RetrievalResult> results;
        std::vector<Judgment> judgments;
        std::vector<std::vector<char>> rel;
        const int queries = 1 + static_cast<int>(rng.below(8));
        for (int q = 0; q < queries; ++q) {
            const std::string qid = "q" + std::to_string(q);
            std::vector<std::string> ids;
            for (int i = 0; i < 5; ++i) {
                ids.push_back("doc" + std::to_string(rng.below(6)));
            }
            // force unique ids within hits
            std::vector<std::string> unique_ids;
            for (const auto& id : ids) {
                if (std::find(unique_ids.begin(), unique_ids.end(), id) == unique_ids.end()) {
                    unique_ids.push_back(id);
                }
            }
            const std::string gold = "doc" + std::to_string(rng.below(6));
            results.push_back(result(Granularity::document, qid, unique_ids));
            judgments.push_back({qid, {}, {gold}});
            std::vector<char> marks;
            for (const auto& id : unique_ids) {
                marks.push_back(id == gold ? 1 : 0);
            }
            rel.push_back(std::move(marks));
        }
        CHECK(r_precision(results, judgments) == doctest::Approx(precision_at_k(rel, 1)));
    }
}
