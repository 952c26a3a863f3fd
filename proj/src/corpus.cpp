#include "roleforge/corpus.hpp"

#include <algorithm>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "roleforge/segmenter.hpp"

using json = nlohmann::ordered_json;

namespace roleforge::corpus {

int RoleProfile::role_turn_count() const {
    int n = 0;
    for (const auto& round : rounds)
        for (const auto& turn : round.turns)
            if (turn.speaker == role_name) ++n;
    return n;
}

namespace {

std::string squash_key(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == ' ' || c == '\t') continue;
        out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
    }
    return out;
}

}  // namespace

std::string ParseRules::canonicalize(const std::string& speaker) const {
    const std::string key = squash_key(speaker);
    for (const auto& [alias, canonical] : role_aliases)
        if (squash_key(alias) == key) return canonical;
    return speaker;
}

ParseRules ParseRules::load(const std::filesystem::path& path) {
    json doc = json::parse(read_file(path));
    ParseRules rules;
    if (doc.contains("speaker_line_pattern"))
        rules.speaker_line_pattern = doc["speaker_line_pattern"].get<std::string>();
    if (doc.contains("narrator_markers"))
        rules.narrator_markers = doc["narrator_markers"].get<std::vector<std::string>>();
    if (doc.contains("role_aliases"))
        for (auto& [k, v] : doc["role_aliases"].items())
            rules.role_aliases[k] = v.get<std::string>();
    return rules;
}

std::vector<DialogueRound> parse_script(const std::string& raw_text,
                                        const std::string& role_name,
                                        const ParseRules& rules) {
    if (role_name.empty()) throw MalformedScript("role_name is empty");
    const std::regex speaker_re(rules.speaker_line_pattern);
    const std::string canonical_role = rules.canonicalize(role_name);
    // the role's own name acts as an implicit alias for its cue-line form
    auto canonicalize = [&](const std::string& speaker) {
        std::string mapped = rules.canonicalize(speaker);
        if (mapped != canonical_role && squash_key(mapped) == squash_key(canonical_role))
            return canonical_role;
        return mapped;
    };

    std::vector<DialogueTurn> turns;
    bool any_speaker_line = false;
    bool turn_open = false;

    auto close_turn = [&] { turn_open = false; };
    auto append_content = [&](DialogueTurn& turn, std::string_view text) {
        if (!turn.content.empty()) turn.content += "\n ";
        turn.content += std::string(text);
    };

    for (std::string_view line : split_lines(raw_text)) {
        std::string_view stripped = trim(line);
        if (stripped.empty()) {
            close_turn();
            continue;
        }
        std::cmatch m;
        if (std::regex_match(stripped.begin(), stripped.end(), m, speaker_re)) {
            any_speaker_line = true;
            close_turn();
            DialogueTurn turn;
            turn.speaker = canonicalize(std::string(trim(m[1].str())));
            std::string rest = m[2].str();
            if (!trim(rest).empty()) turn.content = std::string(trim(rest));
            turns.push_back(std::move(turn));
            turn_open = true;
        } else if (turn_open) {
            append_content(turns.back(), stripped);
        } else {
            // narration between cue blocks; adjacent narrator turns are
            // consolidated by the merge pass below
            DialogueTurn turn;
            turn.speaker = rules.narrator_markers.empty() ? kNarrator
                                                          : rules.narrator_markers.front();
            turn.content = std::string(stripped);
            turns.push_back(std::move(turn));
        }
    }

    if (!any_speaker_line) throw MalformedScript("no speaker line matched the pattern");

    // Cue lines with no dialogue content contribute nothing.
    turns.erase(std::remove_if(turns.begin(), turns.end(),
                               [](const DialogueTurn& t) { return trim(t.content).empty(); }),
                turns.end());

    // Merge adjacent turns by the same speaker.
    std::vector<DialogueTurn> merged;
    for (auto& turn : turns) {
        if (!merged.empty() && merged.back().speaker == turn.speaker) {
            merged.back().content += "\n " + turn.content;
        } else {
            merged.push_back(std::move(turn));
        }
    }

    bool role_speaks = std::any_of(merged.begin(), merged.end(), [&](const DialogueTurn& t) {
        return t.speaker == canonical_role;
    });
    if (!role_speaks) throw RoleAbsent("role never speaks: " + role_name);

    // A round closes at every turn of the role of interest; trailing turns
    // after the role's final appearance are dropped.
    std::vector<DialogueRound> rounds;
    std::vector<DialogueTurn> pending;
    int diag_id = 0;
    for (auto& turn : merged) {
        bool is_role = turn.speaker == canonical_role;
        pending.push_back(std::move(turn));
        if (is_role) {
            DialogueRound round;
            round.act_id = 0;
            round.diag_id = diag_id++;
            round.turns = std::move(pending);
            pending.clear();
            rounds.push_back(std::move(round));
        }
    }
    finalize_counts(rounds, Language::en);
    return rounds;
}

void finalize_counts(std::vector<DialogueRound>& rounds, Language language) {
    for (auto& round : rounds)
        for (auto& turn : round.turns)
            turn.word_count = seg::count_words(turn.content, language);
}

void validate_profile(const RoleProfile& profile) {
    if (profile.role_name.empty()) throw InvariantViolation("profile role_name is empty");
    if (trim(profile.description).empty())
        throw InvariantViolation("profile description is empty");
    if (profile.rounds.empty()) throw InvariantViolation("profile has no rounds");

    std::pair<int, int> prev{-1, -1};
    for (size_t i = 0; i < profile.rounds.size(); ++i) {
        const auto& round = profile.rounds[i];
        if (round.turns.empty())
            throw InvariantViolation("round " + std::to_string(i) + " has no turns");
        if (round.act_id < 0 || round.diag_id < 0)
            throw InvariantViolation("round " + std::to_string(i) + " has negative ids");
        std::pair<int, int> key{round.act_id, round.diag_id};
        if (key <= prev)
            throw InvariantViolation("round ids not strictly increasing at index " +
                                     std::to_string(i));
        prev = key;
        for (const auto& turn : round.turns) {
            if (turn.speaker.empty())
                throw InvariantViolation("turn with empty speaker in round " + std::to_string(i));
            if (trim(turn.content).empty())
                throw InvariantViolation("turn with empty content in round " + std::to_string(i));
        }
        if (round.turns.back().speaker != profile.role_name)
            throw InvariantViolation("round " + std::to_string(i) +
                                     " does not end with the role of interest");
    }
}

RoleProfile build_profile(const std::string& role_name,
                          Language language,
                          const std::string& description,
                          std::vector<std::string> catchphrases,
                          std::vector<DialogueRound> rounds,
                          const std::string& source_script) {
    RoleProfile profile;
    profile.role_name = role_name;
    profile.language = language;
    profile.description = description;
    profile.catchphrases = std::move(catchphrases);
    profile.rounds = std::move(rounds);
    profile.source_script = source_script;
    finalize_counts(profile.rounds, language);
    validate_profile(profile);
    int own = profile.role_turn_count();
    if (own < kMinRoleTurns)
        throw TooFewTurns("role has " + std::to_string(own) + " dialogue turns, need " +
                          std::to_string(kMinRoleTurns));
    return profile;
}

namespace {

// records are written in the "key": value style of the profile format
std::string spaced_record(std::initializer_list<std::pair<const char*, json>> fields) {
    std::string out = "{";
    bool first = true;
    for (const auto& [key, value] : fields) {
        if (!first) out += ", ";
        first = false;
        out += "\"";
        out += key;
        out += "\": ";
        out += value.dump();
    }
    out += "}";
    return out;
}

}  // namespace

std::string profile_to_jsonl(const RoleProfile& profile) {
    std::string out;
    out += spaced_record({{"role_name", profile.role_name},
                          {"language", std::string(to_string(profile.language))},
                          {"description", profile.description},
                          {"catchphrases", profile.catchphrases},
                          {"source_script", profile.source_script}});
    out += '\n';
    for (const auto& round : profile.rounds) {
        for (const auto& turn : round.turns) {
            out += spaced_record({{"act_id", round.act_id},
                                  {"diag_id", round.diag_id},
                                  {"role", turn.speaker},
                                  {"content", turn.content}});
            out += '\n';
        }
    }
    return out;
}

RoleProfile profile_from_jsonl(const std::string& text, const std::string& origin) {
    auto lines = split_lines(text);
    if (lines.empty()) throw SchemaError(origin + ": empty profile file");

    auto parse_line = [&](size_t idx) -> json {
        try {
            return json::parse(lines[idx]);
        } catch (const json::parse_error& e) {
            throw SchemaError(origin + ":" + std::to_string(idx + 1) + ": " + e.what());
        }
    };
    auto require = [&](const json& rec, const char* key, size_t idx) -> const json& {
        if (!rec.contains(key))
            throw SchemaError(origin + ":" + std::to_string(idx + 1) + ": missing key \"" +
                              key + "\"");
        return rec.at(key);
    };

    json header = parse_line(0);
    RoleProfile profile;
    profile.role_name = require(header, "role_name", 0).get<std::string>();
    profile.language = language_from_string(require(header, "language", 0).get<std::string>());
    profile.description = require(header, "description", 0).get<std::string>();
    profile.catchphrases = require(header, "catchphrases", 0).get<std::vector<std::string>>();
    profile.source_script = require(header, "source_script", 0).get<std::string>();

    DialogueRound current;
    bool open = false;
    for (size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        json rec = parse_line(i);
        int act_id, diag_id;
        std::string role, content;
        try {
            act_id = require(rec, "act_id", i).get<int>();
            diag_id = require(rec, "diag_id", i).get<int>();
            role = require(rec, "role", i).get<std::string>();
            content = require(rec, "content", i).get<std::string>();
        } catch (const json::exception& e) {
            throw SchemaError(origin + ":" + std::to_string(i + 1) + ": " + e.what());
        }
        if (open && (current.act_id != act_id || current.diag_id != diag_id)) {
            profile.rounds.push_back(std::move(current));
            current = DialogueRound{};
            open = false;
        }
        current.act_id = act_id;
        current.diag_id = diag_id;
        current.turns.push_back(DialogueTurn{role, content, 0});
        open = true;
    }
    if (open) profile.rounds.push_back(std::move(current));

    finalize_counts(profile.rounds, profile.language);
    validate_profile(profile);
    return profile;
}

RoleProfile load_profile(const std::filesystem::path& path) {
    return profile_from_jsonl(read_file(path), path.string());
}

void store_profile(const RoleProfile& profile, const std::filesystem::path& path) {
    write_file(path, profile_to_jsonl(profile));
}

std::string render_round(const DialogueRound& round) {
    std::string out;
    for (const auto& turn : round.turns) {
        if (!out.empty()) out += '\n';
        out += turn.speaker + ": " + turn.content;
    }
    return out;
}

}  // namespace roleforge::corpus
