#include "roleforge/segmenter.hpp"

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

using json = nlohmann::ordered_json;

namespace roleforge::seg {

std::string_view to_string(SegmentKind kind) {
    return kind == SegmentKind::description ? "description" : "script";
}

SegmentKind segment_kind_from_string(std::string_view s) {
    if (s == "description") return SegmentKind::description;
    if (s == "script") return SegmentKind::script;
    throw SchemaError("unknown segment kind: " + std::string(s));
}

int count_words(const std::string& text, Language language) {
    if (language == Language::en) {
        int n = 0;
        bool in_token = false;
        for (size_t i = 0; i < text.size();) {
            char32_t cp = utf8_next(text, i);
            if (is_space_cp(cp)) {
                in_token = false;
            } else if (!in_token) {
                in_token = true;
                ++n;
            }
        }
        return n;
    }
    int n = 0;
    for (size_t i = 0; i < text.size();) {
        char32_t cp = utf8_next(text, i);
        if (!is_space_cp(cp)) ++n;
    }
    return n;
}

namespace {

std::string render_turns(const std::vector<const corpus::DialogueTurn*>& turns) {
    std::string out;
    for (const auto* t : turns) {
        if (!out.empty()) out += '\n';
        out += t->speaker + ": " + t->content;
    }
    return out;
}

Segment make_segment(const corpus::RoleProfile& profile,
                     const std::vector<const corpus::DialogueTurn*>& turns,
                     int index) {
    Segment s;
    s.role_name = profile.role_name;
    s.kind = SegmentKind::script;
    s.index = index;
    s.text = render_turns(turns);
    s.turn_count = static_cast<int>(turns.size());
    s.word_count = std::accumulate(turns.begin(), turns.end(), 0,
                                   [](int acc, const corpus::DialogueTurn* t) {
                                       return acc + t->word_count;
                                   });
    return s;
}

}  // namespace

SegmentationResult segment_profile(const corpus::RoleProfile& profile, const SegConfig& cfg) {
    if (profile.rounds.empty()) throw EmptyProfile("profile has no rounds: " + profile.role_name);

    SegmentationResult result;

    Segment desc;
    desc.role_name = profile.role_name;
    desc.kind = SegmentKind::description;
    desc.index = 0;
    desc.text = profile.description;
    if (!profile.catchphrases.empty()) {
        desc.text += '\n';
        for (size_t i = 0; i < profile.catchphrases.size(); ++i) {
            if (i > 0) desc.text += " / ";
            desc.text += profile.catchphrases[i];
        }
    }
    desc.turn_count = 0;
    desc.word_count = count_words(desc.text, profile.language);
    result.segments.push_back(std::move(desc));

    // Flatten to turns, dropping oversized ones. Act/episode boundaries are
    // deliberately ignored.
    std::vector<const corpus::DialogueTurn*> turns;
    for (const auto& round : profile.rounds)
        for (const auto& turn : round.turns)
            if (turn.word_count <= cfg.max_turn_words) turns.push_back(&turn);

    if (turns.empty()) {
        result.script_portion_empty = true;
        return result;
    }

    const int min_words = cfg.min_words(profile.language);

    std::vector<std::vector<const corpus::DialogueTurn*>> raw;
    std::vector<const corpus::DialogueTurn*> current;
    int current_words = 0;
    for (const auto* turn : turns) {
        current.push_back(turn);
        current_words += turn->word_count;
        if (current_words >= min_words && static_cast<int>(current.size()) >= cfg.min_turns) {
            raw.push_back(std::move(current));
            current.clear();
            current_words = 0;
        }
    }

    bool trailing_remainder = !current.empty();
    bool undersized_alone = false;
    if (trailing_remainder) {
        if (!raw.empty()) {
            auto& last = raw.back();
            last.insert(last.end(), current.begin(), current.end());
        } else {
            raw.push_back(std::move(current));
            undersized_alone = true;
        }
        current.clear();
    }

    // Cut any overlong segment back at a turn boundary: keep whole turns
    // while the running count stays within truncate_words, drop the turn
    // that crosses the limit and everything after it.
    std::vector<bool> truncated(raw.size(), false);
    for (size_t i = 0; i < raw.size(); ++i) {
        int words = 0;
        size_t keep = 0;
        for (; keep < raw[i].size(); ++keep) {
            if (words + raw[i][keep]->word_count > cfg.truncate_words) break;
            words += raw[i][keep]->word_count;
        }
        if (keep < raw[i].size()) {
            raw[i].resize(keep);
            truncated[i] = true;
        }
    }

    std::vector<size_t> order(raw.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (raw.size() > static_cast<size_t>(cfg.max_segments)) {
        Rng rng(derive_seed(cfg.rng_seed, "segment-subsample"));
        order = rng.sample_indices(raw.size(), static_cast<size_t>(cfg.max_segments));
    }

    for (size_t pos : order) {
        if (raw[pos].empty()) continue;  // truncation may have emptied it
        Segment s = make_segment(profile, raw[pos], static_cast<int>(pos) + 1);
        s.truncated = truncated[pos];
        s.undersized = undersized_alone && pos == 0 &&
                       (s.word_count < min_words ||
                        s.turn_count < cfg.min_turns);
        result.segments.push_back(std::move(s));
    }

    if (result.segments.size() == 1) result.script_portion_empty = true;
    return result;
}

std::string segments_to_jsonl(const std::vector<Segment>& segments) {
    std::string out;
    for (const auto& s : segments) {
        json rec = {{"role_name", s.role_name},
                    {"kind", std::string(to_string(s.kind))},
                    {"index", s.index},
                    {"text", s.text},
                    {"turn_count", s.turn_count},
                    {"word_count", s.word_count},
                    {"truncated", s.truncated},
                    {"undersized", s.undersized}};
        out += rec.dump();
        out += '\n';
    }
    return out;
}

std::vector<Segment> segments_from_jsonl(const std::string& text, const std::string& origin) {
    std::vector<Segment> out;
    auto lines = split_lines(text);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        json rec;
        try {
            rec = json::parse(lines[i]);
            Segment s;
            s.role_name = rec.at("role_name").get<std::string>();
            s.kind = segment_kind_from_string(rec.at("kind").get<std::string>());
            s.index = rec.at("index").get<int>();
            s.text = rec.at("text").get<std::string>();
            s.turn_count = rec.at("turn_count").get<int>();
            s.word_count = rec.at("word_count").get<int>();
            s.truncated = rec.at("truncated").get<bool>();
            s.undersized = rec.at("undersized").get<bool>();
            out.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw SchemaError(origin + ":" + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace roleforge::seg
