#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "roleforge/corpus.hpp"
#include "roleforge/segmenter.hpp"
#include "roleforge/genpipe.hpp"
#include "test_support.hpp"

using namespace roleforge;
using namespace roleforge::corpus;

namespace {

ParseRules holmes_rules() {
    ParseRules rules;
    rules.role_aliases["SHERLOCK HOLMES"] = "Sherlock Holmes";
    return rules;
}

std::vector<DialogueRound> rounds_for(const std::string& role, int count) {
    std::vector<DialogueRound> rounds;
    for (int i = 0; i < count; ++i) {
        DialogueRound round;
        round.act_id = 0;
        round.diag_id = i;
        round.turns.push_back({"Other", "Question number " + std::to_string(i) + "?", 0});
        round.turns.push_back({role, "Answer number " + std::to_string(i) + ".", 0});
        rounds.push_back(std::move(round));
    }
    return rounds;
}

}  // namespace

TEST_CASE("parse_script builds one round ending with the role of interest") {
    std::string script =
        "WATSON: Take care of yourself, Holmes.\n"
        "SHERLOCK HOLMES: Magnificent woman, Watson. Magnificent!\n";
    auto rounds = parse_script(script, "Sherlock Holmes", holmes_rules());
    REQUIRE(rounds.size() == 1);
    REQUIRE(rounds[0].turns.size() == 2);
    CHECK(rounds[0].turns[0].speaker == "WATSON");
    CHECK(rounds[0].turns[1].speaker == "Sherlock Holmes");
    CHECK(rounds[0].turns[1].content == "Magnificent woman, Watson. Magnificent!");
}

TEST_CASE("parse_script on empty input reports the role as absent") {
    CHECK_THROWS_AS(parse_script("", "Sherlock Holmes", holmes_rules()), MalformedScript);
    CHECK_THROWS_AS(parse_script("WATSON: Hello there, my friend.\n", "Sherlock Holmes",
                                 holmes_rules()),
                    RoleAbsent);
}

TEST_CASE("three-speaker script matches the hand-built round structure") {
    std::string script =
        "The street outside is quiet.\n"
        "\n"
        "WATSON: Anything in the morning post?\n"
        "\n"
        "LESTRADE: The Yard needs you at once.\n"
        "\n"
        "SHERLOCK HOLMES: The post can wait, Lestrade cannot.\n"
        "\n"
        "WATSON: Shall I fetch my revolver?\n"
        "\n"
        "SHERLOCK HOLMES: Bring the revolver and the lantern.\n"
        "\n"
        "LESTRADE: I will wait downstairs.\n";
    auto rounds = parse_script(script, "Sherlock Holmes", holmes_rules());

    // Hand-derived oracle: rounds close at each Holmes turn; the trailing
    // Lestrade line never precedes another role turn and is dropped.
    REQUIRE(rounds.size() == 2);
    REQUIRE(rounds[0].turns.size() == 4);  // narration, Watson, Lestrade, Holmes
    CHECK(rounds[0].turns[0].speaker == "narrator");
    CHECK(rounds[0].turns[1].speaker == "WATSON");
    CHECK(rounds[0].turns[2].speaker == "LESTRADE");
    CHECK(rounds[0].turns[3].speaker == "Sherlock Holmes");
    REQUIRE(rounds[1].turns.size() == 2);
    CHECK(rounds[1].turns[0].speaker == "WATSON");
    CHECK(rounds[1].turns[1].speaker == "Sherlock Holmes");
    CHECK(rounds[0].diag_id < rounds[1].diag_id);
}

TEST_CASE("action lines inside a cue block stay in the speaker's turn") {
    std::string script =
        "SHERLOCK HOLMES: Observe the ash.\n"
        "He kneels, produces a glass, and sniffs the carpet.\n"
        "Trichinopoly, unmistakably.\n";
    auto rounds = parse_script(script, "Sherlock Holmes", holmes_rules());
    REQUIRE(rounds.size() == 1);
    REQUIRE(rounds[0].turns.size() == 1);
    CHECK(rounds[0].turns[0].content ==
          "Observe the ash.\n He kneels, produces a glass, and sniffs the carpet.\n "
          "Trichinopoly, unmistakably.");
}

TEST_CASE("parse_script is deterministic") {
    std::string script = read_file(testsupport::fixture_dir() / "sherlock.txt");
    auto a = parse_script(script, "Sherlock Holmes", holmes_rules());
    auto b = parse_script(script, "Sherlock Holmes", holmes_rules());
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].turns.size() == b[i].turns.size());
        for (size_t j = 0; j < a[i].turns.size(); ++j) {
            CHECK(a[i].turns[j].speaker == b[i].turns[j].speaker);
            CHECK(a[i].turns[j].content == b[i].turns[j].content);
        }
    }
}

TEST_CASE("build_profile enforces the 25-turn minimum") {
    CHECK_NOTHROW(build_profile("Role", Language::en, "A role.", {}, rounds_for("Role", 25),
                                "s.txt"));
    CHECK_THROWS_AS(build_profile("Role", Language::en, "A role.", {}, rounds_for("Role", 24),
                                  "s.txt"),
                    TooFewTurns);
}

TEST_CASE("build_profile rejects a round ending with the narrator") {
    auto rounds = rounds_for("Role", 25);
    rounds[10].turns.push_back({kNarrator, "The lights dim.", 0});
    CHECK_THROWS_AS(build_profile("Role", Language::en, "A role.", {}, std::move(rounds), "s.txt"),
                    InvariantViolation);
}

TEST_CASE("store then load round-trips profiles bit-identically") {
    auto profile = testsupport::make_twilight_profile();
    auto path = std::filesystem::temp_directory_path() / "roleforge_profile_rt.jsonl";
    store_profile(profile, path);
    auto loaded = load_profile(path);

    CHECK(loaded.role_name == profile.role_name);
    CHECK(loaded.language == profile.language);
    CHECK(loaded.description == profile.description);
    CHECK(loaded.catchphrases == profile.catchphrases);
    CHECK(loaded.source_script == profile.source_script);
    REQUIRE(loaded.rounds.size() == profile.rounds.size());
    for (size_t i = 0; i < loaded.rounds.size(); ++i) {
        CHECK(loaded.rounds[i].act_id == profile.rounds[i].act_id);
        CHECK(loaded.rounds[i].diag_id == profile.rounds[i].diag_id);
        REQUIRE(loaded.rounds[i].turns.size() == profile.rounds[i].turns.size());
        for (size_t j = 0; j < loaded.rounds[i].turns.size(); ++j) {
            CHECK(loaded.rounds[i].turns[j].speaker == profile.rounds[i].turns[j].speaker);
            CHECK(loaded.rounds[i].turns[j].content == profile.rounds[i].turns[j].content);
        }
    }
    // storing the loaded profile reproduces the same bytes
    CHECK(profile_to_jsonl(loaded) == profile_to_jsonl(profile));
    std::filesystem::remove(path);
}

TEST_CASE("profile fixture file parses with its original act and diag ids") {
    auto profile = load_profile(testsupport::fixture_dir() / "sherlock_profile.jsonl");
    CHECK(profile.role_name == "Sherlock Holmes");
    bool saw_3_4 = false;
    for (const auto& round : profile.rounds)
        if (round.act_id == 3 && round.diag_id == 4) saw_3_4 = true;
    CHECK(saw_3_4);
    REQUIRE(profile.rounds.size() == 3);
    CHECK(profile.rounds.back().act_id == 84);
    CHECK(profile.rounds.back().diag_id == 217);
    for (const auto& round : profile.rounds)
        CHECK(round.turns.back().speaker == "Sherlock Holmes");
}

TEST_CASE("missing content key raises SchemaError naming the line") {
    std::string text =
        R"({"role_name":"R","language":"en","description":"d","catchphrases":[],"source_script":"s"})"
        "\n"
        R"({"act_id":0,"diag_id":0,"role":"R"})"
        "\n";
    try {
        profile_from_jsonl(text, "bad.jsonl");
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("bad.jsonl:2") != std::string::npos);
        CHECK(std::string(e.what()).find("content") != std::string::npos);
    }
}

TEST_CASE("property: every parsed round ends with the role, 500 synthetic scripts") {
    Rng rng(20240811);
    const std::vector<std::string> speakers = {"ALICE", "BOB", "CAROL", "NARRATOR VOICE"};
    for (int iter = 0; iter < 500; ++iter) {
        std::string script;
        int lines = 3 + static_cast<int>(rng.below(30));
        bool role_spoke = false;
        for (int i = 0; i < lines; ++i) {
            int pick = static_cast<int>(rng.below(speakers.size() + 1));
            if (pick == static_cast<int>(speakers.size())) {
                script += "Rain taps against the window pane " + std::to_string(i) + ".\n\n";
            } else {
                script += speakers[pick] + ": Line " + std::to_string(i) + " as spoken word.\n\n";
                if (speakers[pick] == "ALICE") role_spoke = true;
            }
        }
        if (!role_spoke) {
            script += "ALICE: Closing remark for iteration.\n";
        }
        auto rounds = parse_script(script, "ALICE", ParseRules{});
        CHECK(!rounds.empty());
        std::set<std::pair<int, int>> ids;
        std::pair<int, int> prev{-1, -1};
        for (const auto& round : rounds) {
            CHECK(round.turns.back().speaker == "ALICE");
            std::pair<int, int> key{round.act_id, round.diag_id};
            CHECK(ids.insert(key).second);
            CHECK(prev < key);
            prev = key;
            for (const auto& turn : round.turns) {
                CHECK(!turn.speaker.empty());
                CHECK(!std::string(trim(turn.content)).empty());
            }
        }
    }
}

TEST_CASE("fixture scripts parse into valid profiles") {
    auto script = read_file(testsupport::fixture_dir() / "sherlock.txt");
    auto rounds = parse_script(script, "Sherlock Holmes", holmes_rules());
    auto profile = build_profile("Sherlock Holmes", Language::en, "A consulting detective.",
                                 {"Elementary, my dear Watson."}, std::move(rounds),
                                 "sherlock.txt");
    CHECK(profile.role_turn_count() >= 25);

    auto gaston_script = read_file(testsupport::fixture_dir() / "gaston.txt");
    auto gaston_rounds = parse_script(gaston_script, "GASTON", ParseRules{});
    auto gaston =
        build_profile("GASTON", Language::en, "A swaggering village hunter.",
                      {"No one fights like Gaston!"}, std::move(gaston_rounds), "gaston.txt");
    CHECK(gaston.role_turn_count() >= 25);
}

TEST_CASE("load_profile on a missing path raises IoError") {
    CHECK_THROWS_AS(load_profile("/nonexistent/profile.jsonl"), IoError);
}

TEST_CASE("sample rank invariants are enforced on load") {
    std::string bad_general =
        R"({"role_name":"R","language":"en","instruction":"i","response":"r","category":"general","source":"rolegpt","reference_rank":7,"split":"train"})"
        "\n";
    CHECK_THROWS_AS(genpipe::samples_from_jsonl(bad_general), SchemaError);
    std::string bad_specific =
        R"({"role_name":"R","language":"en","instruction":"i","response":"r","category":"specific","source":"context_instruct","reference_rank":2,"split":"train"})"
        "\n";
    CHECK_THROWS_AS(genpipe::samples_from_jsonl(bad_specific), SchemaError);
}

TEST_CASE("property: randomized profiles round-trip through JSONL") {
    Rng rng(8086);
    for (int iter = 0; iter < 60; ++iter) {
        std::vector<DialogueRound> rounds;
        int n_rounds = 25 + static_cast<int>(rng.below(10));
        int act = 0, diag = -1;
        for (int r = 0; r < n_rounds; ++r) {
            if (rng.below(4) == 0) { ++act; diag = -1; }
            diag += 1 + static_cast<int>(rng.below(3));
            DialogueRound round;
            round.act_id = act;
            round.diag_id = diag;
            int extra = static_cast<int>(rng.below(3));
            for (int t = 0; t < extra; ++t)
                round.turns.push_back({rng.below(2) ? "Other" : std::string(kNarrator),
                                       "Filler line " + std::to_string(rng.below(1000)) +
                                           " with \"quotes\" and\n embedded newline.",
                                       0});
            round.turns.push_back({"Hero", "Spoken line " + std::to_string(rng.below(1000)) + ".",
                                   0});
            rounds.push_back(std::move(round));
        }
        auto profile = build_profile("Hero", rng.below(2) ? Language::en : Language::zh,
                                     "Synthetic round-trip hero.", {"Catch!"}, std::move(rounds),
                                     "rt.txt");
        auto text = profile_to_jsonl(profile);
        auto loaded = profile_from_jsonl(text, "rt");
        CHECK(profile_to_jsonl(loaded) == text);
    }
}
