#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "roleforge/eval.hpp"
#include "roleforge/retrieval.hpp"
#include "test_support.hpp"

using namespace roleforge;
using namespace roleforge::eval;
using genpipe::Category;
using genpipe::OriginPool;
using genpipe::Sample;
using genpipe::Split;

namespace {

/// Independent LCS: full table, no rolling rows, no shared code.
size_t oracle_lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::vector<size_t>> table(a.size() + 1, std::vector<size_t>(b.size() + 1, 0));
    for (size_t i = 1; i <= a.size(); ++i)
        for (size_t j = 1; j <= b.size(); ++j)
            table[i][j] = a[i - 1] == b[j - 1]
                              ? table[i - 1][j - 1] + 1
                              : std::max(table[i - 1][j], table[i][j - 1]);
    return table[a.size()][b.size()];
}

double oracle_rouge(const std::string& cand, const std::string& ref) {
    auto a = retrieval::tokenize(cand, Language::en);
    auto b = retrieval::tokenize(ref, Language::en);
    if (a.empty() || b.empty()) return 0.0;
    double lcs = static_cast<double>(oracle_lcs(a, b));
    if (lcs == 0) return 0.0;
    double p = lcs / a.size(), r = lcs / b.size();
    return 2 * p * r / (p + r);
}

std::vector<RankingRecord> verdict_of(std::initializer_list<std::pair<const char*, int>> ranks) {
    std::vector<RankingRecord> v;
    for (const auto& [model, rank] : ranks) v.push_back({model, rank, "fixture"});
    return v;
}

}  // namespace

TEST_CASE("rouge_l identities and the worked 5/6 example") {
    CHECK(rouge_l("the cat sat on the mat", {{"the cat sat on the mat"}}, Language::en) ==
          doctest::Approx(1.0));
    CHECK(rouge_l("alpha beta", {{"gamma delta"}}, Language::en) == doctest::Approx(0.0));
    CHECK(rouge_l("", {{"anything"}}, Language::en) == doctest::Approx(0.0));
    CHECK(rouge_l("anything", {{""}}, Language::en) == doctest::Approx(0.0));

    double f = rouge_l("the cat sat on the mat", {{"the cat lay on the mat"}}, Language::en);
    CHECK(f == doctest::Approx(2.0 * (5.0 / 6.0) * (5.0 / 6.0) / (5.0 / 6.0 + 5.0 / 6.0))
                   .epsilon(1e-12));
    CHECK(f == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("property: rouge_l symmetric for single reference and monotone in references") {
    Rng rng(2468);
    const char* vocab[] = {"t0", "t1", "t2", "t3", "t4", "t5", "t6", "t7"};
    for (int iter = 0; iter < 300; ++iter) {
        auto sentence = [&](size_t len) {
            std::string s;
            for (size_t i = 0; i < len; ++i) {
                if (i) s += ' ';
                s += vocab[rng.below(8)];
            }
            return s;
        };
        std::string a = sentence(1 + rng.below(10));
        std::string b = sentence(1 + rng.below(10));
        CHECK(rouge_l(a, {{b}}, Language::en) ==
              doctest::Approx(rouge_l(b, {{a}}, Language::en)).epsilon(1e-12));

        std::string extra = sentence(1 + rng.below(10));
        double base = rouge_l(a, {{b}}, Language::en);
        double more = rouge_l(a, std::vector<std::string>{b, extra}, Language::en);
        CHECK(more >= base - 1e-12);
    }
}

TEST_CASE("rouge_l matches the brute-force oracle on random pairs") {
    Rng rng(13579);
    const char* vocab[] = {"a", "b", "c", "d", "e", "f"};
    for (int iter = 0; iter < 200; ++iter) {
        auto sentence = [&](size_t len) {
            std::string s;
            for (size_t i = 0; i < len; ++i) {
                if (i) s += ' ';
                s += vocab[rng.below(6)];
            }
            return s;
        };
        std::string cand = sentence(rng.below(12));
        std::string ref = sentence(rng.below(12));
        CHECK(rouge_l(cand, {{ref}}, Language::en) ==
              doctest::Approx(oracle_rouge(cand, ref)).epsilon(1e-12));
    }
}

TEST_CASE("rouge_l on zh uses character tokens") {
    CHECK(rouge_l("你好世界", {{"你好世界"}}, Language::zh) == doctest::Approx(1.0));
    // LCS("你好世界", "你好地球") = 2; P=R=2/4
    CHECK(rouge_l("你好世界", {{"你好地球"}}, Language::zh) == doctest::Approx(0.5));
}

TEST_CASE("evaluate: hand-computed three-instruction report") {
    bench::Dataset dataset;
    auto add = [&](const std::string& instruction, const std::string& response, Category cat,
                   int rank) {
        Sample s;
        s.role_name = "R";
        s.language = Language::en;
        s.instruction = instruction;
        s.response = response;
        s.category = cat;
        s.source = cat == Category::general ? genpipe::Source::rolegpt
                                            : genpipe::Source::context_instruct;
        s.reference_rank = rank;
        s.split = Split::test;
        s.origin_pool = cat == Category::general ? OriginPool::train_pool : OriginPool::test_pool;
        dataset.samples.push_back(std::move(s));
    };
    add("i1", "alpha beta gamma", Category::general, 1);
    add("i2", "one two three", Category::general, 1);
    add("i2", "two three four five", Category::general, 2);
    add("i3", "x q z", Category::specific, 1);

    auto table = ReferenceTable::from_dataset(dataset);
    table.add_raw("i1", {"alpha beta delta"});

    std::vector<Prediction> preds = {{"R", "i1", "m", "alpha beta gamma"},
                                     {"R", "i2", "m", "one two three four"},
                                     {"R", "i3", "m", "x y z"}};
    auto reports = evaluate(preds, table);
    REQUIRE(reports.count("m") == 1);
    const auto& r = reports.at("m");
    REQUIRE(r.cus);
    REQUIRE(r.raw);
    REQUIRE(r.spe);
    // i1 CUS: identical -> 1; i2 CUS: max(6/7, 2/3) = 6/7
    CHECK(*r.cus == doctest::Approx(100.0 * (1.0 + 6.0 / 7.0) / 2.0).epsilon(1e-9));
    CHECK(*r.raw == doctest::Approx(100.0 * 2.0 / 3.0).epsilon(1e-9));
    CHECK(*r.spe == doctest::Approx(100.0 * 2.0 / 3.0).epsilon(1e-9));
    CHECK(r.avg == doctest::Approx((*r.cus + *r.raw + *r.spe) / 3.0).epsilon(1e-12));
    CHECK(r.n_cus == 2);
    CHECK(r.n_raw == 1);
    CHECK(r.n_spe == 1);
}

TEST_CASE("evaluate: outputs equal to one candidate everywhere give CUS 100") {
    bench::Dataset dataset;
    std::vector<Prediction> preds;
    for (int i = 0; i < 5; ++i) {
        std::string instruction = "instr " + std::to_string(i);
        for (int rank = 1; rank <= 5; ++rank) {
            Sample s;
            s.role_name = "R";
            s.instruction = instruction;
            s.response = "candidate " + std::to_string(rank) + " body " + std::to_string(i);
            s.category = Category::general;
            s.reference_rank = rank;
            s.split = Split::test;
            dataset.samples.push_back(std::move(s));
        }
        preds.push_back({"R", instruction, "copycat", "candidate 3 body " + std::to_string(i)});
    }
    auto reports = evaluate(preds, ReferenceTable::from_dataset(dataset));
    CHECK(*reports.at("copycat").cus == doctest::Approx(100.0));

    std::vector<Prediction> empties;
    for (int i = 0; i < 5; ++i)
        empties.push_back({"R", "instr " + std::to_string(i), "silent", ""});
    auto silent = evaluate(empties, ReferenceTable::from_dataset(dataset));
    CHECK(*silent.at("silent").cus == doctest::Approx(0.0));
}

TEST_CASE("evaluate: unknown keys raise MissingReference") {
    bench::Dataset dataset;
    std::vector<Prediction> preds = {{"R", "never seen", "m", "text"}};
    CHECK_THROWS_AS(evaluate(preds, ReferenceTable::from_dataset(dataset)), MissingReference);
}

TEST_CASE("parse_judge_response: canonical, quoted variants, prose wrapping") {
    auto records = parse_judge_response(
        R"([{"model": "A", "reason": "style", "rank": 1}, {"model": "B", "reason": "flat", "rank": 2}])");
    REQUIRE(records.size() == 2);
    CHECK(records[0].model == "A");
    CHECK(records[0].rank == 1);
    CHECK(records[1].model == "B");
    CHECK(records[1].rank == 2);
    CHECK(records[0].reason == "style");

    auto single = parse_judge_response(
        "Sure! Here is my ranking:\n[{'model': 'gpt', 'reason': 'vivid', 'rank': 1}, "
        "{'model': 'base', 'reason': 'dull', 'rank': 2}]\nHope that helps.");
    REQUIRE(single.size() == 2);
    CHECK(single[0].model == "gpt");
    CHECK(single[1].rank == 2);

    CHECK_THROWS_AS(parse_judge_response(""), UnparseableVerdict);
    CHECK_THROWS_AS(parse_judge_response("no list here at all"), UnparseableVerdict);

    // quoted rank and reordered keys still parse
    auto odd = parse_judge_response(R"([{"rank": "1", "model": "m1", "reason": "r"}])");
    REQUIRE(odd.size() == 1);
    CHECK(odd[0].rank == 1);
}

TEST_CASE("aggregate_rankings: arithmetic by definition") {
    std::vector<std::vector<RankingRecord>> verdicts = {
        verdict_of({{"m", 1}, {"other", 2}}),
        verdict_of({{"m", 2}, {"other", 1}}),
        verdict_of({{"m", 1}, {"other", 2}}),
    };
    auto summary = aggregate_rankings(verdicts, AggregationMode::multiway);
    CHECK(summary.at("m").win_rate == doctest::Approx(200.0 / 3.0));
    CHECK(summary.at("m").avg_ranking == doctest::Approx(4.0 / 3.0));

    std::vector<std::vector<RankingRecord>> one = {verdict_of({{"m", 1}, {"other", 2}})};
    auto single = aggregate_rankings(one, AggregationMode::multiway);
    CHECK(single.at("m").win_rate == doctest::Approx(100.0));
    CHECK(single.at("m").avg_ranking == doctest::Approx(1.0));

    CHECK_THROWS_AS(aggregate_rankings({}, AggregationMode::multiway), NoVerdicts);
}

TEST_CASE("a 30-verdict fixture lands on 63.3 / 1.5 for the dialogue mode") {
    // fsd first in 19 verdicts, second in 7, third in 4
    std::vector<std::vector<RankingRecord>> verdicts;
    for (int i = 0; i < 30; ++i) {
        int fsd_rank = i < 19 ? 1 : (i < 26 ? 2 : 3);
        int slot = 1;
        std::vector<RankingRecord> v;
        v.push_back({"fsd", fsd_rank, ""});
        for (const char* other : {"fsp", "zsp"}) {
            while (slot == fsd_rank) ++slot;
            v.push_back({other, slot, ""});
            ++slot;
        }
        verdicts.push_back(std::move(v));
    }
    auto summary = aggregate_rankings(verdicts, AggregationMode::multiway);
    auto round1 = [](double x) { return std::round(x * 10.0) / 10.0; };
    CHECK(round1(summary.at("fsd").win_rate) == doctest::Approx(63.3));
    CHECK(round1(summary.at("fsd").avg_ranking) == doctest::Approx(1.5));

    double total = 0;
    for (const auto& [_, s] : summary) total += s.win_rate;
    CHECK(total == doctest::Approx(100.0));  // no rank-1 ties in this fixture
}

TEST_CASE("co-winners both count; win rates sum to at least 100") {
    std::vector<std::vector<RankingRecord>> verdicts = {
        verdict_of({{"a", 1}, {"b", 1}}),
        verdict_of({{"a", 1}, {"b", 2}}),
    };
    auto summary = aggregate_rankings(verdicts, AggregationMode::multiway);
    CHECK(summary.at("a").win_rate == doctest::Approx(100.0));
    CHECK(summary.at("b").win_rate == doctest::Approx(50.0));
    double total = summary.at("a").win_rate + summary.at("b").win_rate;
    CHECK(total >= 100.0);
}

TEST_CASE("pairwise mode: strictly outranking the reference wins") {
    std::vector<std::vector<RankingRecord>> verdicts = {
        verdict_of({{"m", 1}, {"ref", 2}}),
        verdict_of({{"m", 2}, {"ref", 1}}),
        verdict_of({{"m", 1}, {"ref", 1}}),  // tie: not a win
        verdict_of({{"m", 1}, {"ref", 2}}),
    };
    auto summary = aggregate_rankings(verdicts, AggregationMode::pairwise_vs_reference, "ref");
    CHECK(summary.at("m").win_rate == doctest::Approx(50.0));
}

TEST_CASE("run_judge: cardinality, closed loop with the mock, shuffle independence") {
    auto profile = testsupport::make_twilight_profile();
    std::vector<Sample> subset;
    std::vector<Prediction> preds;
    for (int i = 0; i < 5; ++i) {
        Sample s;
        s.role_name = profile.role_name;
        s.language = Language::en;
        s.instruction = "Judge question " + std::to_string(i) + "?";
        s.category = Category::general;
        s.split = Split::test;
        subset.push_back(s);
        preds.push_back({profile.role_name, s.instruction, "alpha_model", "Answer A."});
        preds.push_back({profile.role_name, s.instruction, "beta_model", "Answer B."});
    }
    genpipe::MockBackend backend(3);
    genpipe::CallOptions options;
    options.parallelism = 1;
    std::vector<corpus::RoleProfile> profiles = {profile};
    auto report = run_judge(subset, preds, profiles, backend, 42, options);
    REQUIRE(report.verdicts.size() == 5);
    CHECK(report.unparseable == 0);

    // the mock ranks models alphabetically, so alpha_model always wins
    auto summary = aggregate_rankings(report.verdicts, AggregationMode::multiway);
    CHECK(summary.at("alpha_model").win_rate == doctest::Approx(100.0));
    CHECK(summary.at("beta_model").avg_ranking == doctest::Approx(2.0));

    auto reshuffled = run_judge(subset, preds, profiles, backend, 4242, options);
    auto summary2 = aggregate_rankings(reshuffled.verdicts, AggregationMode::multiway);
    CHECK(summary2.at("alpha_model").win_rate == doctest::Approx(100.0));
}

namespace {

/// Wraps the mock so tests can observe the prompts the judge was shown.
struct RecordingBackend : genpipe::LlmBackend {
    genpipe::MockBackend inner{3};
    std::vector<std::string> prompts;
    std::string name() const override { return "recording"; }
    std::string complete(const std::vector<prompts::Message>& messages,
                         const genpipe::GenParams& params, uint64_t nonce) override {
        std::string all;
        for (const auto& m : messages) all += m.text + "\n";
        prompts.push_back(all);
        return inner.complete(messages, params, nonce);
    }
};

}  // namespace

TEST_CASE("changing the shuffle seed reorders answers inside the prompt") {
    auto profile = testsupport::make_twilight_profile();
    std::vector<Sample> subset;
    std::vector<Prediction> preds;
    for (int i = 0; i < 4; ++i) {
        Sample s;
        s.role_name = profile.role_name;
        s.language = Language::en;
        s.instruction = "Order-sensitive question " + std::to_string(i) + "?";
        s.category = Category::general;
        s.split = Split::test;
        subset.push_back(s);
        for (const char* model : {"alpha_model", "beta_model", "gamma_model"})
            preds.push_back({profile.role_name, s.instruction, model,
                             std::string("Answer from ") + model + "."});
    }
    genpipe::CallOptions options;
    options.parallelism = 1;

    RecordingBackend first;
    std::vector<corpus::RoleProfile> profiles = {profile};
    auto r1 = run_judge(subset, preds, profiles, first, 1, options);
    RecordingBackend second;
    auto r2 = run_judge(subset, preds, profiles, second, 2, options);

    REQUIRE(first.prompts.size() == second.prompts.size());
    bool any_order_change = false;
    for (size_t i = 0; i < first.prompts.size(); ++i)
        if (first.prompts[i] != second.prompts[i]) any_order_change = true;
    CHECK(any_order_change);

    // parsed model names are unaffected by presentation order
    auto s1 = aggregate_rankings(r1.verdicts, AggregationMode::multiway);
    auto s2 = aggregate_rankings(r2.verdicts, AggregationMode::multiway);
    for (const char* model : {"alpha_model", "beta_model", "gamma_model"}) {
        CHECK(s1.at(model).win_rate == doctest::Approx(s2.at(model).win_rate));
        CHECK(s1.at(model).avg_ranking == doctest::Approx(s2.at(model).avg_ranking));
    }
}

TEST_CASE("predictions JSONL round trip") {
    std::vector<Prediction> preds = {{"R", "what?", "m", "因为如此。"}};
    auto back = predictions_from_jsonl(predictions_to_jsonl(preds));
    REQUIRE(back.size() == 1);
    CHECK(back[0].role_name == "R");
    CHECK(back[0].output == "因为如此。");
}

TEST_CASE("run_judge matches profiles to samples by role") {
    auto twilight = testsupport::make_twilight_profile();
    auto wukong = testsupport::make_wukong_profile();
    std::vector<Sample> subset;
    std::vector<Prediction> preds;
    for (const auto* profile : {&twilight, &wukong}) {
        Sample s;
        s.role_name = profile->role_name;
        s.language = profile->language;
        s.instruction = "Who are you?";
        s.category = Category::general;
        s.split = Split::test;
        subset.push_back(s);
        preds.push_back({profile->role_name, s.instruction, "a_model", "First answer."});
        preds.push_back({profile->role_name, s.instruction, "b_model", "Second answer."});
    }
    // an unknown role in the subset is skipped, not mis-described
    Sample stray = subset[0];
    stray.role_name = "Nobody";
    subset.push_back(stray);

    genpipe::MockBackend backend(9);
    genpipe::CallOptions options;
    options.parallelism = 1;
    std::vector<corpus::RoleProfile> profiles = {twilight, wukong};
    auto report = run_judge(subset, preds, profiles, backend, 7, options);
    CHECK(report.verdicts.size() == 2);  // both known roles judged, stray skipped
}
