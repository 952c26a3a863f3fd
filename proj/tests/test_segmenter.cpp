#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "roleforge/segmenter.hpp"
#include "test_support.hpp"

using namespace roleforge;
using namespace roleforge::seg;

namespace {

std::string words(int n, const std::string& stem) {
    std::string out;
    for (int i = 0; i < n; ++i) {
        if (i > 0) out += ' ';
        out += stem + std::to_string(i);
    }
    return out;
}

/// Synthetic profile from per-turn word counts; every second turn belongs
/// to the role so rounds stay valid.
corpus::RoleProfile profile_from_turn_sizes(const std::vector<int>& sizes) {
    std::vector<corpus::DialogueRound> rounds;
    corpus::DialogueRound round;
    round.act_id = 0;
    round.diag_id = 0;
    for (size_t i = 0; i < sizes.size(); ++i) {
        bool role_turn = (i % 2 == 1) || i + 1 == sizes.size();
        round.turns.push_back({role_turn ? "Hero" : "Other",
                               words(sizes[i], "w" + std::to_string(i) + "x"), 0});
        if (role_turn) {
            rounds.push_back(round);
            round = corpus::DialogueRound{};
            round.act_id = 0;
            round.diag_id = static_cast<int>(rounds.size());
        }
    }
    corpus::RoleProfile profile;
    profile.role_name = "Hero";
    profile.language = Language::en;
    profile.description = "A synthetic test hero.";
    profile.rounds = std::move(rounds);
    profile.source_script = "synthetic.txt";
    corpus::finalize_counts(profile.rounds, profile.language);
    return profile;
}

/// Independent replay of the segmentation rule list, index-walking style,
/// kept deliberately separate from the library implementation.
struct OracleSegment {
    std::vector<int> turn_words;
    bool truncated = false;
    bool undersized = false;
};

std::vector<OracleSegment> oracle_segment(const std::vector<int>& turn_sizes,
                                          const SegConfig& cfg, Language lang) {
    std::vector<int> kept;
    for (int w : turn_sizes)
        if (w <= cfg.max_turn_words) kept.push_back(w);

    std::vector<OracleSegment> segments;
    size_t i = 0;
    int min_words = lang == Language::en ? cfg.min_words_en : cfg.min_chars_zh;
    while (i < kept.size()) {
        OracleSegment s;
        int total = 0;
        while (i < kept.size()) {
            s.turn_words.push_back(kept[i]);
            total += kept[i];
            ++i;
            if (total >= min_words && static_cast<int>(s.turn_words.size()) >= cfg.min_turns)
                break;
        }
        bool closed = total >= min_words && static_cast<int>(s.turn_words.size()) >= cfg.min_turns;
        if (closed) {
            segments.push_back(std::move(s));
        } else {
            // trailing remainder
            if (!segments.empty()) {
                for (int w : s.turn_words) segments.back().turn_words.push_back(w);
            } else {
                s.undersized = true;
                segments.push_back(std::move(s));
            }
        }
    }
    for (auto& s : segments) {
        int total = 0;
        size_t keep = 0;
        for (; keep < s.turn_words.size(); ++keep) {
            if (total + s.turn_words[keep] > cfg.truncate_words) break;
            total += s.turn_words[keep];
        }
        if (keep < s.turn_words.size()) {
            s.turn_words.resize(keep);
            s.truncated = true;
        }
    }
    return segments;
}

}  // namespace

TEST_CASE("count_words: en whitespace tokens, zh non-space characters") {
    CHECK(count_words("", Language::en) == 0);
    CHECK(count_words("Magnificent woman, Watson. Magnificent!", Language::en) == 4);
    CHECK(count_words("你好 世界", Language::zh) == 4);
    CHECK(count_words("  spaced   out  ", Language::en) == 2);
    CHECK(count_words("", Language::zh) == 0);
}

TEST_CASE("oversize cap subsamples to exactly max_segments, reproducibly") {
    // 150 closable segments: 4 turns x 125 words each
    std::vector<int> sizes(150 * 4, 125);
    auto profile = profile_from_turn_sizes(sizes);
    SegConfig cfg;
    cfg.rng_seed = 99;
    auto first = segment_profile(profile, cfg);
    auto second = segment_profile(profile, cfg);

    REQUIRE(first.segments.size() == 101);  // description + 100 script
    CHECK(first.segments[0].kind == SegmentKind::description);
    REQUIRE(second.segments.size() == first.segments.size());
    for (size_t i = 0; i < first.segments.size(); ++i) {
        CHECK(first.segments[i].index == second.segments[i].index);
        CHECK(first.segments[i].text == second.segments[i].text);
    }
    // indices keep original order after subsampling
    for (size_t i = 2; i < first.segments.size(); ++i)
        CHECK(first.segments[i - 1].index < first.segments[i].index);

    SegConfig other = cfg;
    other.rng_seed = 100;
    auto third = segment_profile(profile, other);
    bool any_difference = false;
    for (size_t i = 1; i < third.segments.size(); ++i)
        if (third.segments[i].index != first.segments[i].index) any_difference = true;
    CHECK(any_difference);
}

TEST_CASE("a single oversized turn leaves the script portion empty") {
    auto profile = profile_from_turn_sizes({501});
    SegConfig cfg;
    auto result = segment_profile(profile, cfg);
    REQUIRE(result.segments.size() == 1);
    CHECK(result.segments[0].kind == SegmentKind::description);
    CHECK(result.script_portion_empty);
}

TEST_CASE("empty profile raises EmptyProfile") {
    corpus::RoleProfile profile;
    profile.role_name = "Hero";
    profile.description = "d";
    CHECK_THROWS_AS(segment_profile(profile, SegConfig{}), EmptyProfile);
}

TEST_CASE("10 turns x 60 words match the rule-replay oracle") {
    std::vector<int> sizes(10, 60);
    auto profile = profile_from_turn_sizes(sizes);
    SegConfig cfg;
    auto result = segment_profile(profile, cfg);
    auto expected = oracle_segment(sizes, cfg, Language::en);

    std::vector<Segment> script(result.segments.begin() + 1, result.segments.end());
    REQUIRE(script.size() == expected.size());
    for (size_t i = 0; i < script.size(); ++i) {
        int total = 0;
        for (int w : expected[i].turn_words) total += w;
        CHECK(script[i].word_count == total);
        CHECK(script[i].turn_count == static_cast<int>(expected[i].turn_words.size()));
        CHECK(script[i].truncated == expected[i].truncated);
        CHECK(script[i].undersized == expected[i].undersized);
    }
}

TEST_CASE("oracle equivalence over 50 randomized small profiles") {
    Rng rng(555);
    for (int iter = 0; iter < 50; ++iter) {
        size_t n = 1 + rng.below(30);
        std::vector<int> sizes;
        for (size_t i = 0; i < n; ++i) {
            // mix of tiny, mid, oversized turns
            uint64_t kind = rng.below(10);
            if (kind < 6) sizes.push_back(static_cast<int>(20 + rng.below(180)));
            else if (kind < 9) sizes.push_back(static_cast<int>(200 + rng.below(301)));
            else sizes.push_back(static_cast<int>(501 + rng.below(200)));
        }
        auto profile = profile_from_turn_sizes(sizes);
        SegConfig cfg;
        cfg.rng_seed = iter;
        auto expected = oracle_segment(sizes, cfg, Language::en);

        if (expected.empty()) {
            auto result = segment_profile(profile, cfg);
            CHECK(result.script_portion_empty);
            continue;
        }
        auto result = segment_profile(profile, cfg);
        std::vector<Segment> script(result.segments.begin() + 1, result.segments.end());
        REQUIRE(script.size() == expected.size());
        for (size_t i = 0; i < script.size(); ++i) {
            int total = 0;
            for (int w : expected[i].turn_words) total += w;
            CHECK(script[i].word_count == total);
            CHECK(script[i].turn_count == static_cast<int>(expected[i].turn_words.size()));
            CHECK(script[i].truncated == expected[i].truncated);
            CHECK(script[i].undersized == expected[i].undersized);
        }
    }
}

TEST_CASE("property: all segment invariants hold over 1000 random profiles") {
    Rng rng(777);
    for (int iter = 0; iter < 1000; ++iter) {
        size_t n = 1 + rng.below(60);
        std::vector<int> sizes;
        for (size_t i = 0; i < n; ++i) sizes.push_back(static_cast<int>(1 + rng.below(700)));
        auto profile = profile_from_turn_sizes(sizes);
        SegConfig cfg;
        cfg.rng_seed = iter;
        auto result = segment_profile(profile, cfg);

        int script_count = 0;
        for (size_t i = 1; i < result.segments.size(); ++i) {
            const Segment& s = result.segments[i];
            ++script_count;
            CHECK(s.kind == SegmentKind::script);
            if (!s.undersized) {
                CHECK(s.word_count >= cfg.min_words_en);
                CHECK(s.turn_count >= cfg.min_turns);
            }
            CHECK(s.word_count <= cfg.truncate_words);
            // no contained turn exceeds the per-turn cap: counts per line
            for (auto line : split_lines(s.text)) {
                auto colon = line.find(": ");
                REQUIRE(colon != std::string::npos);
                std::string content(line.substr(colon + 2));
                CHECK(count_words(content, Language::en) <= cfg.max_turn_words);
            }
        }
        CHECK(script_count <= cfg.max_segments);
    }
}

TEST_CASE("segment texts preserve profile turns in original order") {
    std::vector<int> sizes(40, 90);
    auto profile = profile_from_turn_sizes(sizes);
    SegConfig cfg;
    auto result = segment_profile(profile, cfg);

    std::string concatenated;
    for (size_t i = 1; i < result.segments.size(); ++i) {
        if (!concatenated.empty()) concatenated += '\n';
        concatenated += result.segments[i].text;
    }
    std::string full;
    for (const auto& round : profile.rounds)
        for (const auto& turn : round.turns) {
            if (!full.empty()) full += '\n';
            full += turn.speaker + ": " + turn.content;
        }
    CHECK(concatenated == full);  // below the cap, nothing dropped here
}

TEST_CASE("segments serialize and load back") {
    auto profile = profile_from_turn_sizes(std::vector<int>(12, 150));
    auto result = segment_profile(profile, SegConfig{});
    auto text = segments_to_jsonl(result.segments);
    auto loaded = segments_from_jsonl(text);
    REQUIRE(loaded.size() == result.segments.size());
    for (size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].text == result.segments[i].text);
        CHECK(loaded[i].index == result.segments[i].index);
        CHECK(loaded[i].word_count == result.segments[i].word_count);
    }
}

TEST_CASE("zh profiles use character counts") {
    std::vector<corpus::DialogueRound> rounds;
    corpus::DialogueRound round;
    round.act_id = 0;
    round.diag_id = 0;
    std::string zh_text;
    for (int i = 0; i < 300; ++i) zh_text += "好";
    round.turns.push_back({"别人", zh_text, 0});
    round.turns.push_back({"主角", zh_text, 0});
    rounds.push_back(round);
    corpus::RoleProfile profile;
    profile.role_name = "主角";
    profile.language = Language::zh;
    profile.description = "测试角色。";
    profile.rounds = {rounds[0]};
    corpus::finalize_counts(profile.rounds, Language::zh);

    CHECK(profile.rounds[0].turns[0].word_count == 300);
    SegConfig cfg;
    auto result = segment_profile(profile, cfg);
    // 600 chars, 2 turns: below zh minimum of 1000 chars and 4 turns
    REQUIRE(result.segments.size() == 2);
    CHECK(result.segments[1].undersized);
}
