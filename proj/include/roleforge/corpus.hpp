#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "roleforge/common.hpp"

namespace roleforge::corpus {

inline constexpr const char* kNarrator = "narrator";

struct DialogueTurn {
    std::string speaker;  // canonical role name or the narrator marker
    std::string content;
    int word_count = 0;   // words for en, characters for zh
};

struct DialogueRound {
    int act_id = 0;
    int diag_id = 0;
    std::vector<DialogueTurn> turns;  // last turn belongs to the role of interest
};

struct RoleProfile {
    std::string role_name;
    Language language = Language::en;
    std::string description;
    std::vector<std::string> catchphrases;
    std::vector<DialogueRound> rounds;
    std::string source_script;

    /// Number of turns spoken by the role itself, across all rounds.
    int role_turn_count() const;
};

/// Script-shape configuration. The default speaker grammar recognizes
/// screenplay cue lines like "SHERLOCK HOLMES:"; anything between cues is
/// narration or a continuation of the open turn.
struct ParseRules {
    std::string speaker_line_pattern = R"(^([A-Z][A-Z .'\-]{1,40}):\s*(.*)$)";
    std::vector<std::string> narrator_markers = {kNarrator};
    std::map<std::string, std::string> role_aliases;  // alias -> canonical name

    /// Case/spacing-insensitive canonicalization through the alias map;
    /// unmapped speakers pass through verbatim.
    std::string canonicalize(const std::string& speaker) const;

    static ParseRules load(const std::filesystem::path& path);
};

/// Minimum role turns required by profile construction.
inline constexpr int kMinRoleTurns = 25;

/// Parses a raw script into dialogue rounds, each ending with a turn by
/// role_name. Narration becomes turns with the narrator marker; action
/// lines inside a cue block stay in that speaker's turn; trailing turns
/// that never precede another role turn are dropped.
std::vector<DialogueRound> parse_script(const std::string& raw_text,
                                        const std::string& role_name,
                                        const ParseRules& rules = {});

RoleProfile build_profile(const std::string& role_name,
                          Language language,
                          const std::string& description,
                          std::vector<std::string> catchphrases,
                          std::vector<DialogueRound> rounds,
                          const std::string& source_script);

/// JSONL profile IO. First record carries the header fields, every
/// following record one dialogue turn with act_id/diag_id/role/content.
RoleProfile load_profile(const std::filesystem::path& path);
void store_profile(const RoleProfile& profile, const std::filesystem::path& path);

std::string profile_to_jsonl(const RoleProfile& profile);
RoleProfile profile_from_jsonl(const std::string& text, const std::string& origin = "<memory>");

/// Recomputes per-turn word counts under the profile language.
void finalize_counts(std::vector<DialogueRound>& rounds, Language language);

/// One round rendered as "speaker: content" lines, used as retrieval
/// documents and for segment text.
std::string render_round(const DialogueRound& round);

void validate_profile(const RoleProfile& profile);

}  // namespace roleforge::corpus
