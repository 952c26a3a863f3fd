#pragma once

#include <string>
#include <vector>

#include "roleforge/common.hpp"
#include "roleforge/corpus.hpp"

namespace roleforge::seg {

enum class SegmentKind { description, script };

std::string_view to_string(SegmentKind kind);
SegmentKind segment_kind_from_string(std::string_view s);

struct Segment {
    std::string role_name;
    SegmentKind kind = SegmentKind::script;
    int index = 0;          // 0 for the description segment, 1..N for script
    std::string text;       // whole turns rendered as "speaker: content" lines
    int turn_count = 0;
    int word_count = 0;     // words for en, characters for zh
    bool truncated = false;
    bool undersized = false;
};

struct SegConfig {
    int min_words_en = 500;
    int min_chars_zh = 1000;
    int min_turns = 4;
    int max_turn_words = 500;   // 500 characters for zh
    int max_segments = 100;
    int truncate_words = 2000;
    uint64_t rng_seed = 0;

    int min_words(Language lang) const {
        return lang == Language::en ? min_words_en : min_chars_zh;
    }
};

/// en: whitespace-delimited tokens; zh: non-whitespace code points.
int count_words(const std::string& text, Language language);

struct SegmentationResult {
    std::vector<Segment> segments;      // description segment first
    bool script_portion_empty = false;  // every turn was dropped or absent
};

/// Splits a profile into the description segment plus greedily accumulated
/// script segments: oversized turns dropped, a segment closes once the
/// word and turn minima both hold, overlong segments are cut back at a
/// turn boundary, and at most max_segments script segments survive (seeded
/// uniform subsample, original order kept). A trailing remainder joins the
/// last segment when one exists, otherwise it is emitted undersized.
SegmentationResult segment_profile(const corpus::RoleProfile& profile, const SegConfig& cfg);

std::string segments_to_jsonl(const std::vector<Segment>& segments);
std::vector<Segment> segments_from_jsonl(const std::string& text,
                                         const std::string& origin = "<memory>");

}  // namespace roleforge::seg
