#include "roleforge/genpipe.hpp"

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

using json = nlohmann::ordered_json;

namespace roleforge::genpipe {

std::string_view to_string(Confidence c) { return c == Confidence::high ? "high" : "low"; }

std::string_view to_string(TripletKind k) {
    return k == TripletKind::script_based ? "script_based" : "script_agnostic";
}

TripletKind triplet_kind_from_string(std::string_view s) {
    if (s == "script_based") return TripletKind::script_based;
    if (s == "script_agnostic") return TripletKind::script_agnostic;
    throw SchemaError("unknown triplet kind: " + std::string(s));
}

Confidence confidence_from_string(std::string_view s) {
    if (s == "high") return Confidence::high;
    if (s == "low") return Confidence::low;
    throw SchemaError("unknown confidence: " + std::string(s));
}

std::string_view to_string(Category c) { return c == Category::general ? "general" : "specific"; }

std::string_view to_string(Source s) {
    return s == Source::rolegpt ? "rolegpt" : "context_instruct";
}

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test: return "test";
        case Split::unassigned: return "unassigned";
    }
    return "unassigned";
}

std::string_view to_string(QuestionKind k) {
    switch (k) {
        case QuestionKind::none: return "none";
        case QuestionKind::script_based: return "script_based";
        case QuestionKind::script_agnostic: return "script_agnostic";
    }
    return "none";
}

std::string_view to_string(OriginPool p) {
    return p == OriginPool::train_pool ? "train_pool" : "test_pool";
}

namespace {

Category category_from_string(std::string_view s) {
    if (s == "general") return Category::general;
    if (s == "specific") return Category::specific;
    throw SchemaError("unknown category: " + std::string(s));
}

Source source_from_string(std::string_view s) {
    if (s == "rolegpt") return Source::rolegpt;
    if (s == "context_instruct") return Source::context_instruct;
    throw SchemaError("unknown source: " + std::string(s));
}

Split split_from_string(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    if (s == "unassigned") return Split::unassigned;
    throw SchemaError("unknown split: " + std::string(s));
}

QuestionKind question_kind_from_string(std::string_view s) {
    if (s == "none") return QuestionKind::none;
    if (s == "script_based") return QuestionKind::script_based;
    if (s == "script_agnostic") return QuestionKind::script_agnostic;
    throw SchemaError("unknown question kind: " + std::string(s));
}

OriginPool origin_pool_from_string(std::string_view s) {
    if (s == "train_pool") return OriginPool::train_pool;
    if (s == "test_pool") return OriginPool::test_pool;
    throw SchemaError("unknown origin pool: " + std::string(s));
}

}  // namespace

std::string samples_to_jsonl(std::span<const Sample> samples) {
    std::string out;
    for (const auto& s : samples) {
        json rec = {{"role_name", s.role_name},
                    {"language", std::string(roleforge::to_string(s.language))},
                    {"instruction", s.instruction},
                    {"response", s.response},
                    {"category", std::string(to_string(s.category))},
                    {"source", std::string(to_string(s.source))},
                    {"reference_rank", s.reference_rank},
                    {"split", std::string(to_string(s.split))},
                    {"question_kind", std::string(to_string(s.question_kind))},
                    {"origin_pool", std::string(to_string(s.origin_pool))}};
        out += rec.dump();
        out += '\n';
    }
    return out;
}

std::vector<Sample> samples_from_jsonl(const std::string& text, const std::string& origin) {
    std::vector<Sample> out;
    auto lines = split_lines(text);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        try {
            json rec = json::parse(lines[i]);
            Sample s;
            s.role_name = rec.at("role_name").get<std::string>();
            s.language = language_from_string(rec.at("language").get<std::string>());
            s.instruction = rec.at("instruction").get<std::string>();
            s.response = rec.at("response").get<std::string>();
            s.category = category_from_string(rec.at("category").get<std::string>());
            s.source = source_from_string(rec.at("source").get<std::string>());
            s.reference_rank = rec.at("reference_rank").get<int>();
            if (s.category == Category::general &&
                (s.reference_rank < 0 || s.reference_rank > 5))
                throw SchemaError("general reference_rank out of [0,5]: " +
                                  std::to_string(s.reference_rank));
            if (s.category == Category::specific && s.reference_rank != 1)
                throw SchemaError("specific reference_rank must be 1, got " +
                                  std::to_string(s.reference_rank));
            s.split = split_from_string(rec.at("split").get<std::string>());
            if (rec.contains("question_kind"))
                s.question_kind = question_kind_from_string(rec.at("question_kind").get<std::string>());
            if (rec.contains("origin_pool"))
                s.origin_pool = origin_pool_from_string(rec.at("origin_pool").get<std::string>());
            out.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw SchemaError(origin + ":" + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

std::string triplets_to_jsonl(std::span<const Triplet> triplets) {
    std::string out;
    for (const auto& t : triplets) {
        json rec = {{"question", t.question},
                    {"confidence", std::string(to_string(t.confidence))},
                    {"rationale", t.rationale},
                    {"answer", t.answer},
                    {"kind", std::string(to_string(t.kind))},
                    {"role_name", t.role_name},
                    {"segment_index", t.segment_index}};
        out += rec.dump();
        out += '\n';
    }
    return out;
}

std::vector<Triplet> triplets_from_jsonl(const std::string& text, const std::string& origin) {
    std::vector<Triplet> out;
    auto lines = split_lines(text);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        try {
            json rec = json::parse(lines[i]);
            Triplet t;
            t.question = rec.at("question").get<std::string>();
            t.confidence = confidence_from_string(rec.at("confidence").get<std::string>());
            t.rationale = rec.at("rationale").get<std::string>();
            t.answer = rec.at("answer").get<std::string>();
            t.kind = triplet_kind_from_string(rec.at("kind").get<std::string>());
            t.role_name = rec.at("role_name").get<std::string>();
            t.segment_index = rec.at("segment_index").get<int>();
            out.push_back(std::move(t));
        } catch (const json::exception& e) {
            throw SchemaError(origin + ":" + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Triplet parsing
// ---------------------------------------------------------------------------

namespace {

// Accepts both ASCII and full-width colons after a label.
bool consume_colon(std::string_view s, size_t& pos) {
    if (pos < s.size() && s[pos] == ':') {
        ++pos;
        return true;
    }
    if (s.substr(pos, 3) == "\xef\xbc\x9a") {  // full-width colon
        pos += 3;
        return true;
    }
    return false;
}

// "Question 3:" / "问题3：" -> text after the colon, or nullopt.
std::optional<std::string> match_question_header(std::string_view line) {
    for (std::string_view label : {std::string_view("Question"), std::string_view("问题")}) {
        if (line.size() <= label.size() || line.substr(0, label.size()) != label) continue;
        size_t pos = label.size();
        while (pos < line.size() && line[pos] == ' ') ++pos;
        size_t digits = pos;
        while (pos < line.size() && line[pos] >= '0' && line[pos] <= '9') ++pos;
        if (pos == digits) continue;
        if (!consume_colon(line, pos)) continue;
        return std::string(trim(line.substr(pos)));
    }
    return std::nullopt;
}

std::optional<std::string> match_labeled_line(std::string_view line,
                                              std::initializer_list<std::string_view> labels) {
    for (std::string_view label : labels) {
        if (line.size() < label.size() || line.substr(0, label.size()) != label) continue;
        size_t pos = label.size();
        if (!consume_colon(line, pos)) continue;
        return std::string(trim(line.substr(pos)));
    }
    return std::nullopt;
}

// Splits "High, because ..." / "高(因为...)。" into level + rationale.
std::optional<std::pair<Confidence, std::string>> parse_confidence_value(std::string_view value) {
    Confidence conf;
    size_t skip;
    std::string lowered = lower_ascii(value.substr(0, 4));
    if (lowered.rfind("high", 0) == 0) {
        conf = Confidence::high;
        skip = 4;
    } else if (lowered.rfind("low", 0) == 0) {
        conf = Confidence::low;
        skip = 3;
    } else if (value.substr(0, 3) == "高") {
        conf = Confidence::high;
        skip = 3;
    } else if (value.substr(0, 3) == "低") {
        conf = Confidence::low;
        skip = 3;
    } else {
        return std::nullopt;
    }
    std::string_view rest = value.substr(skip);
    // strip rationale delimiters: leading comma/paren, trailing paren/period
    while (!rest.empty() && (rest.front() == ',' || rest.front() == ' ' || rest.front() == '(' ||
                             rest.front() == ':')) {
        rest.remove_prefix(1);
    }
    if (rest.substr(0, 3) == "（" || rest.substr(0, 3) == "，" || rest.substr(0, 3) == "：") {
        rest.remove_prefix(3);
    }
    while (!rest.empty() && (rest.back() == '.' || rest.back() == ')' || rest.back() == ' '))
        rest.remove_suffix(1);
    if (rest.size() >= 3 && (rest.substr(rest.size() - 3) == "。" || rest.substr(rest.size() - 3) == "）"))
        rest.remove_suffix(3);
    while (!rest.empty() && (rest.back() == '.' || rest.back() == ')' || rest.back() == ' '))
        rest.remove_suffix(1);
    return std::make_pair(conf, std::string(trim(rest)));
}

}  // namespace

TripletParse parse_triplets(const std::string& raw, TripletKind kind, Language language) {
    TripletParse result;
    auto lines = split_lines(raw);

    struct Block {
        std::string question;
        std::optional<std::pair<Confidence, std::string>> confidence;
        std::string response;
        bool in_response = false;
        bool started = false;
    };
    Block block;

    auto flush = [&](Block& b) {
        if (!b.started) return;
        std::string question = std::string(trim(b.question));
        std::string response = std::string(trim(b.response));
        if (question.empty() || response.empty() || !b.confidence) {
            ++result.skipped;
            return;
        }
        Triplet t;
        t.question = std::move(question);
        t.confidence = b.confidence->first;
        t.rationale = b.confidence->second;
        t.answer = std::move(response);
        t.kind = kind;
        result.triplets.push_back(std::move(t));
    };

    for (std::string_view raw_line : lines) {
        std::string_view line = trim(raw_line);
        if (auto question = match_question_header(line)) {
            flush(block);
            block = Block{};
            block.started = true;
            block.question = *question;
            continue;
        }
        if (!block.started) continue;
        if (auto value = match_labeled_line(line, {"Factualness", "Completeness", "真实性", "完整性"})) {
            block.confidence = parse_confidence_value(*value);
            block.in_response = false;
            continue;
        }
        if (auto body = match_labeled_line(line, {"Response", "回复"})) {
            block.response = *body;
            block.in_response = true;
            continue;
        }
        if (line.empty()) continue;
        if (block.in_response) {
            block.response += "\n" + std::string(line);
        } else if (!block.confidence) {
            // multi-line question before the confidence line
            block.question += "\n" + std::string(line);
        }
    }
    flush(block);
    (void)language;
    return result;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace {

std::string pad_id(size_t i) {
    std::string s = std::to_string(i);
    return std::string(6 - std::min<size_t>(6, s.size()), '0') + s;
}

}  // namespace

GeneralGenReport generate_general(const corpus::RoleProfile& profile,
                                  std::span<const std::string> instructions,
                                  LlmBackend& backend,
                                  const GeneralGenOptions& options) {
    GeneralGenReport report;
    if (instructions.empty()) return report;

    // Rounds with at least two turns can serve as (q, a) demonstrations.
    std::vector<const corpus::DialogueRound*> demo_rounds;
    retrieval::Bm25Index index(profile.language);
    for (const auto& round : profile.rounds) {
        if (round.turns.size() < 2) continue;
        index.add(pad_id(demo_rounds.size()), corpus::render_round(round));
        demo_rounds.push_back(&round);
    }

    std::vector<CallSpec> specs;
    specs.reserve(instructions.size() * static_cast<size_t>(options.responses_per_instruction));
    std::vector<prompts::PromptBundle> bundles;
    bundles.reserve(instructions.size());
    for (const auto& instruction : instructions) {
        std::vector<prompts::QaPair> demos;
        if (index.size() > 0) {
            auto tokens = retrieval::tokenize(instruction, profile.language);
            if (!tokens.empty()) {
                for (const auto& hit :
                     index.top_k_tokens(tokens, static_cast<size_t>(options.k_demos))) {
                    const auto* round = demo_rounds[static_cast<size_t>(std::stoul(hit.doc_id))];
                    const auto& turns = round->turns;
                    demos.push_back({turns[turns.size() - 2].content, turns.back().content});
                }
            }
        }
        bundles.push_back(prompts::render_rolegpt(profile, instruction, prompts::PromptMode::fsd,
                                                  demos, options.user_name));
    }
    for (size_t i = 0; i < bundles.size(); ++i) {
        for (int j = 0; j < options.responses_per_instruction; ++j) {
            CallSpec spec;
            spec.messages = bundles[i].messages;
            spec.params = GenParams::rolegpt();
            spec.nonce = specs.size();
            specs.push_back(std::move(spec));
        }
    }

    auto results = run_calls(backend, specs, options.calls);

    size_t cursor = 0;
    for (size_t i = 0; i < instructions.size(); ++i) {
        for (int j = 0; j < options.responses_per_instruction; ++j, ++cursor) {
            const auto& r = results[cursor];
            report.total_retries += std::max(0, r.attempts - 1);
            if (r.from_ledger) ++report.ledger_hits;
            else ++report.backend_calls;
            Sample s;
            s.role_name = profile.role_name;
            s.language = profile.language;
            s.instruction = instructions[i];
            s.response = r.response;
            s.category = Category::general;
            s.source = Source::rolegpt;
            // last response is the rank-0 baseline, the others candidates
            s.reference_rank = (j == options.responses_per_instruction - 1) ? 0 : j + 1;
            s.split = Split::unassigned;
            report.samples.push_back(std::move(s));
        }
    }
    return report;
}

SpecificGenReport generate_specific(const corpus::RoleProfile& profile,
                                    std::span<const seg::Segment> segments,
                                    LlmBackend& backend,
                                    const SpecificGenOptions& options) {
    SpecificGenReport report;

    const seg::Segment* description = nullptr;
    std::vector<const seg::Segment*> script_segments;
    for (const auto& s : segments) {
        if (s.kind == seg::SegmentKind::description) description = &s;
        else script_segments.push_back(&s);
    }

    uint64_t nonce = 0;
    std::vector<CallSpec> specs;
    std::vector<std::pair<TripletKind, int>> spec_meta;  // kind, segment_index

    for (const auto* s : script_segments) {
        auto bundle = prompts::render_context_instruct(profile, *s, options.per_script_questions);
        specs.push_back({bundle.messages, GenParams::standard(), nonce++});
        spec_meta.emplace_back(TripletKind::script_based, s->index);
    }
    if (description != nullptr) {
        for (int call = 0; call < options.agnostic_calls; ++call) {
            auto bundle = prompts::render_context_instruct(profile, *description,
                                                           options.per_agnostic_questions);
            specs.push_back({bundle.messages, GenParams::standard(), nonce++});
            spec_meta.emplace_back(TripletKind::script_agnostic, 0);
        }
    }

    auto ingest = [&](const CallResult& r, TripletKind kind, int segment_index) {
        report.total_retries += std::max(0, r.attempts - 1);
        if (!r.from_ledger) ++report.backend_calls;
        auto parsed = parse_triplets(r.response, kind, profile.language);
        report.skipped_blocks += parsed.skipped;
        if (parsed.triplets.empty()) ++report.parse_failures;
        for (auto& t : parsed.triplets) {
            t.role_name = profile.role_name;
            t.segment_index = segment_index;
            report.triplets.push_back(std::move(t));
        }
    };

    auto results = run_calls(backend, specs, options.calls);
    for (size_t i = 0; i < results.size(); ++i)
        ingest(results[i], spec_meta[i].first, spec_meta[i].second);

    // Script-agnostic top-up until the per-role target is met.
    while (description != nullptr &&
           report.triplets.size() < static_cast<size_t>(options.target) &&
           report.topup_calls < options.max_topup_calls) {
        auto bundle = prompts::render_context_instruct(profile, *description,
                                                       options.per_agnostic_questions);
        std::vector<CallSpec> one;
        one.push_back({bundle.messages, GenParams::standard(), nonce++});
        auto batch = run_calls(backend, one, options.calls);
        ++report.topup_calls;
        ingest(batch[0], TripletKind::script_agnostic, 0);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Filtering and cleaning
// ---------------------------------------------------------------------------

FilterOutcome filter_candidates(std::span<const Triplet> triplets, double dedup_threshold,
                                Language language) {
    FilterOutcome outcome;

    std::vector<std::pair<std::string, std::string>> high_items;
    std::vector<size_t> high_positions;
    for (size_t i = 0; i < triplets.size(); ++i) {
        if (triplets[i].confidence == Confidence::high) {
            high_items.emplace_back(pad_id(high_positions.size()), triplets[i].question);
            high_positions.push_back(i);
        }
    }

    auto dedup_result = retrieval::dedup(high_items, dedup_threshold, language);
    std::vector<bool> duplicate(triplets.size(), false);
    for (const auto& id : dedup_result.removed)
        duplicate[high_positions[std::stoul(id)]] = true;

    for (size_t i = 0; i < triplets.size(); ++i) {
        const Triplet& t = triplets[i];
        if (t.confidence != Confidence::high) {
            outcome.test_pool.push_back(t);
        } else if (duplicate[i]) {
            outcome.test_pool.push_back(t);
            outcome.removed_dupes.push_back(t);
        } else {
            outcome.train.push_back(t);
        }
    }
    return outcome;
}

std::vector<Sample> samples_from_triplets(std::span<const Triplet> triplets, Language language,
                                          Split split, OriginPool pool) {
    std::vector<Sample> out;
    out.reserve(triplets.size());
    for (const auto& t : triplets) {
        Sample s;
        s.role_name = t.role_name;
        s.language = language;
        s.instruction = t.question;
        s.response = t.answer;
        s.category = Category::specific;
        s.source = Source::context_instruct;
        s.reference_rank = 1;
        s.split = split;
        s.question_kind = t.kind == TripletKind::script_based ? QuestionKind::script_based
                                                              : QuestionKind::script_agnostic;
        s.origin_pool = pool;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Sample> build_specific_test(std::span<const Triplet> test_pool,
                                        std::span<const Triplet> train,
                                        Language language, size_t per_role_cap) {
    if (test_pool.size() <= per_role_cap)
        return samples_from_triplets(test_pool, language, Split::test, OriginPool::test_pool);

    std::vector<std::pair<std::string, std::string>> items;
    for (size_t i = 0; i < test_pool.size(); ++i)
        items.emplace_back(pad_id(i), test_pool[i].question);
    std::vector<std::string> references;
    for (const auto& t : train) references.push_back(t.question);

    auto ids = retrieval::least_similar(items, references, per_role_cap, language);
    std::vector<bool> chosen(test_pool.size(), false);
    for (const auto& id : ids) chosen[std::stoul(id)] = true;

    std::vector<Triplet> selected;
    for (size_t i = 0; i < test_pool.size(); ++i)
        if (chosen[i]) selected.push_back(test_pool[i]);
    return samples_from_triplets(selected, language, Split::test, OriginPool::test_pool);
}

CleanRules CleanRules::defaults(Language language) {
    CleanRules rules;
    rules.terminal_punct = {".", "!", "?", "\"", "'", ")", "…", "。", "！", "？", "”"};
    if (language == Language::en) {
        rules.ai_identity = {
            "as a language model",  "as an ai language model", "as an ai,",
            "as an ai assistant",   "i am an ai",              "i'm an ai",
            "i am a language model", "i'm a language model",   "as an artificial intelligence",
            "i am an artificial intelligence", "as a chatbot", "i am a chatbot",
            "as a virtual assistant", "i am a virtual assistant", "being an ai",
        };
        rules.refusal = {
            "i cannot answer",      "i can't answer",         "i cannot provide",
            "i can't provide",      "i'm sorry, but i cannot", "i am sorry, but i cannot",
            "i cannot assist",      "i can't assist",         "i refuse to answer",
            "i won't answer",       "i cannot fulfill",       "i can't fulfill",
            "i am unable to answer", "i'm unable to answer",  "i cannot help with",
            "sorry, i cannot",
        };
    } else {
        rules.ai_identity = {
            "作为一个语言模型", "作为语言模型", "作为人工智能",   "作为一个人工智能",
            "我是一个语言模型", "我是语言模型", "我是人工智能",   "我是一个人工智能",
            "作为ai",           "我是ai",       "作为一个ai",     "我是一个ai",
            "作为ai助手",       "我是ai助手",   "我只是一个程序",
        };
        rules.refusal = {
            "我不能回答",   "我无法回答",   "我不能提供",     "我无法提供",
            "无法回答这个", "我拒绝回答",   "不能透露",       "我无法帮助",
            "我无法协助",   "恕我无法",     "我不便回答",     "我无法完成",
            "我不能参与",   "对不起，我不能", "抱歉，我不能",
        };
    }
    return rules;
}

bool should_clean(const Sample& sample) {
    if (sample.category == Category::specific) return true;
    return sample.reference_rank >= 1;  // rank 0 is the untouched baseline
}

namespace {

bool contains_any(const std::string& haystack, const std::vector<std::string>& needles) {
    for (const auto& n : needles)
        if (haystack.find(n) != std::string::npos) return true;
    return false;
}

bool starts_with_role_colon(std::string_view text, const std::string& role_name) {
    if (role_name.empty() || text.size() <= role_name.size()) return false;
    std::string head = lower_ascii(text.substr(0, role_name.size()));
    if (head != lower_ascii(role_name)) return false;
    std::string_view rest = text.substr(role_name.size());
    while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
    return !rest.empty() && (rest.front() == ':' || rest.substr(0, 3) == "\xef\xbc\x9a");
}

bool ends_with_terminal(std::string_view text, const std::vector<std::string>& terminals) {
    if (text.empty()) return false;
    // decode the final code point
    char32_t last = 0;
    for (size_t i = 0; i < text.size();) last = utf8_next(text, i);
    std::string holder;
    append_utf8(holder, last);
    for (const auto& t : terminals)
        if (t == holder) return true;
    return false;
}

}  // namespace

CleanVerdict clean_sample(const Sample& sample, const CleanRules& rules) {
    if (!should_clean(sample)) return {true, ""};
    std::string_view trimmed = trim(sample.response);
    std::string lowered = lower_ascii(trimmed);
    if (contains_any(lowered, rules.ai_identity)) return {false, "ai_identity"};
    if (starts_with_role_colon(trimmed, sample.role_name)) return {false, "role_identity"};
    if (contains_any(lowered, rules.refusal)) return {false, "refusal"};
    if (!ends_with_terminal(trimmed, rules.terminal_punct)) return {false, "incomplete"};
    return {true, ""};
}

}  // namespace roleforge::genpipe
