#include "roleforge/bench.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "roleforge/retrieval.hpp"
#include "roleforge/segmenter.hpp"

using json = nlohmann::ordered_json;

namespace roleforge::bench {

using genpipe::Category;
using genpipe::OriginPool;
using genpipe::QuestionKind;
using genpipe::Split;

int SplitSpec::scaled(int n) const {
    return static_cast<int>(std::floor(n * scale));
}

void sort_samples(std::vector<Sample>& samples) {
    std::sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) {
        if (a.role_name != b.role_name) return a.role_name < b.role_name;
        if (a.category != b.category) return a.category < b.category;
        if (a.instruction != b.instruction) return a.instruction < b.instruction;
        return a.reference_rank < b.reference_rank;
    });
}

namespace {

std::vector<std::string> distinct_general_instructions(const Dataset& dataset) {
    std::set<std::string> seen;
    for (const auto& s : dataset.samples)
        if (s.category == Category::general) seen.insert(s.instruction);
    return {seen.begin(), seen.end()};
}

/// Applies the per-role cap to the specific test pool; returns instructions
/// that stay in the test split for that role.
std::set<std::string> select_specific_test(const Dataset& dataset, const std::string& role,
                                           Language language, size_t cap) {
    std::vector<const Sample*> pool;
    std::vector<std::string> train_questions;
    for (const auto& s : dataset.samples) {
        if (s.role_name != role || s.category != Category::specific) continue;
        if (s.origin_pool == OriginPool::test_pool) pool.push_back(&s);
        else train_questions.push_back(s.instruction);
    }
    std::set<std::string> keep;
    if (pool.size() <= cap) {
        for (const auto* s : pool) keep.insert(s->instruction);
        return keep;
    }
    std::vector<std::pair<std::string, std::string>> items;
    items.reserve(pool.size());
    for (size_t i = 0; i < pool.size(); ++i) {
        std::string id = std::to_string(i);
        items.emplace_back(std::string(6 - std::min<size_t>(6, id.size()), '0') + id,
                           pool[i]->instruction);
    }
    auto ids = retrieval::least_similar(items, train_questions, cap, language);
    for (const auto& id : ids) keep.insert(pool[std::stoul(id)]->instruction);
    return keep;
}

Language role_language(const Dataset& dataset, const std::string& role) {
    for (const auto& s : dataset.samples)
        if (s.role_name == role) return s.language;
    return Language::en;
}

std::vector<std::string> distinct_roles(const Dataset& dataset) {
    std::set<std::string> seen;
    for (const auto& s : dataset.samples) seen.insert(s.role_name);
    return {seen.begin(), seen.end()};
}

}  // namespace

Dataset split_instruction_gen(const Dataset& dataset, const SplitSpec& spec) {
    const int train_n = spec.scaled(spec.general_train);
    const int test_n = spec.scaled(spec.general_test);
    if (train_n < 1 || test_n < 1)
        throw InsufficientData("scaled split counts must stay positive (train " +
                               std::to_string(train_n) + ", test " + std::to_string(test_n) + ")");

    auto instructions = distinct_general_instructions(dataset);
    if (static_cast<int>(instructions.size()) < train_n + test_n)
        throw InsufficientData("need " + std::to_string(train_n + test_n) +
                               " distinct general instructions, have " +
                               std::to_string(instructions.size()));

    Rng rng(derive_seed(spec.seed, "split-instruction"));
    rng.shuffle(instructions);
    std::set<std::string> test_instructions(instructions.begin(), instructions.begin() + test_n);

    Dataset out;
    out.manifest = dataset.manifest;

    std::map<std::string, std::set<std::string>> specific_keep;
    for (const auto& role : distinct_roles(dataset))
        specific_keep[role] = select_specific_test(dataset, role, role_language(dataset, role),
                                                   static_cast<size_t>(spec.specific_test_cap));

    for (const auto& s : dataset.samples) {
        Sample copy = s;
        if (s.category == Category::general) {
            copy.split = test_instructions.count(s.instruction) ? Split::test : Split::train;
        } else if (s.origin_pool == OriginPool::train_pool) {
            copy.split = Split::train;
        } else if (specific_keep[s.role_name].count(s.instruction)) {
            copy.split = Split::test;
        } else {
            continue;  // filtered-out question beyond the cap: dropped
        }
        out.samples.push_back(std::move(copy));
    }
    sort_samples(out.samples);
    out.manifest["split"] = {{"kind", "instruction_gen"},
                             {"seed", spec.seed},
                             {"scale", spec.scale},
                             {"general_train_instructions", train_n},
                             {"general_test_instructions", test_n}};
    return out;
}

Dataset split_role_gen(const Dataset& dataset, const SplitSpec& spec) {
    const int train_r = spec.scaled(spec.roles_train);
    const int test_r = spec.scaled(spec.roles_test);
    if (train_r < 1 || test_r < 1)
        throw InsufficientRoles("scaled role counts must stay positive");

    std::vector<std::string> en_roles;
    for (const auto& role : distinct_roles(dataset))
        if (role_language(dataset, role) == Language::en) en_roles.push_back(role);
    if (static_cast<int>(en_roles.size()) < train_r + test_r)
        throw InsufficientRoles("need " + std::to_string(train_r + test_r) +
                                " English roles, have " + std::to_string(en_roles.size()));

    Rng rng(derive_seed(spec.seed, "split-role"));
    rng.shuffle(en_roles);
    std::set<std::string> held_out(en_roles.begin(), en_roles.begin() + test_r);

    std::map<std::string, std::set<std::string>> specific_keep;
    for (const auto& role : distinct_roles(dataset))
        specific_keep[role] = select_specific_test(dataset, role, role_language(dataset, role),
                                                   static_cast<size_t>(spec.specific_test_cap));

    // Held-out roles contribute at most rolegen_general_test_per_role
    // general instruction groups, seeded per role.
    std::map<std::string, std::set<std::string>> general_keep;
    for (const auto& role : held_out) {
        std::set<std::string> seen;
        for (const auto& s : dataset.samples)
            if (s.role_name == role && s.category == Category::general) seen.insert(s.instruction);
        std::vector<std::string> all(seen.begin(), seen.end());
        size_t want = static_cast<size_t>(spec.rolegen_general_test_per_role);
        if (all.size() > want) {
            Rng role_rng(derive_seed(spec.seed, "rolegen-general:" + role));
            auto idx = role_rng.sample_indices(all.size(), want);
            std::set<std::string> kept;
            for (size_t i : idx) kept.insert(all[i]);
            general_keep[role] = std::move(kept);
        } else {
            general_keep[role] = {all.begin(), all.end()};
        }
    }

    Dataset out;
    out.manifest = dataset.manifest;
    for (const auto& s : dataset.samples) {
        Sample copy = s;
        bool unseen = held_out.count(s.role_name) > 0;
        if (!unseen) {
            if (s.category == Category::specific && s.origin_pool == OriginPool::test_pool &&
                !specific_keep[s.role_name].count(s.instruction))
                continue;  // beyond the per-role cap
            copy.split = Split::train;
        } else if (s.category == Category::general) {
            if (!general_keep[s.role_name].count(s.instruction)) continue;
            copy.split = Split::test;
        } else {
            if (s.origin_pool == OriginPool::test_pool &&
                !specific_keep[s.role_name].count(s.instruction))
                continue;
            copy.split = Split::test;
        }
        out.samples.push_back(std::move(copy));
    }
    sort_samples(out.samples);
    out.manifest["split"] = {{"kind", "role_gen"},
                             {"seed", spec.seed},
                             {"scale", spec.scale},
                             {"roles_train", train_r},
                             {"roles_test", test_r},
                             {"held_out_roles", std::vector<std::string>(held_out.begin(),
                                                                         held_out.end())}};
    return out;
}

namespace {

struct GroupKey {
    std::string role;
    std::string instruction;
    bool operator<(const GroupKey& other) const {
        if (role != other.role) return role < other.role;
        return instruction < other.instruction;
    }
};

/// One representative test sample per (role, instruction): the lowest rank.
std::map<GroupKey, const Sample*> test_groups(const Dataset& dataset, Category category,
                                              bool test_pool_only) {
    std::map<GroupKey, const Sample*> groups;
    for (const auto& s : dataset.samples) {
        if (s.split != Split::test || s.category != category) continue;
        if (test_pool_only && s.category == Category::specific &&
            s.origin_pool != OriginPool::test_pool)
            continue;
        GroupKey key{s.role_name, s.instruction};
        auto it = groups.find(key);
        if (it == groups.end() || s.reference_rank < it->second->reference_rank)
            groups[key] = &s;
    }
    return groups;
}

std::vector<Sample> pick_per_role(const std::map<GroupKey, const Sample*>& groups,
                                  size_t per_role, Rng& rng) {
    std::map<std::string, std::vector<const Sample*>> by_role;
    for (const auto& [key, sample] : groups) by_role[key.role].push_back(sample);
    std::vector<Sample> out;
    for (auto& [role, list] : by_role) {
        if (list.size() > per_role) {
            auto idx = rng.sample_indices(list.size(), per_role);
            for (size_t i : idx) out.push_back(*list[i]);
        } else {
            for (const auto* s : list) out.push_back(*s);
        }
    }
    return out;
}

}  // namespace

std::vector<Sample> make_eval_subset(const Dataset& dataset, EvalSubsetKind kind, uint64_t seed) {
    Rng rng(derive_seed(seed, "eval-subset"));
    if (kind == EvalSubsetKind::manual) {
        auto general = test_groups(dataset, Category::general, false);
        auto specific = test_groups(dataset, Category::specific, true);
        std::vector<const Sample*> all;
        for (const auto& [_, s] : general) all.push_back(s);
        for (const auto& [_, s] : specific) all.push_back(s);
        std::vector<Sample> out;
        if (all.size() > 500) {
            auto idx = rng.sample_indices(all.size(), 500);
            for (size_t i : idx) out.push_back(*all[i]);
        } else {
            for (const auto* s : all) out.push_back(*s);
        }
        sort_samples(out);
        return out;
    }

    size_t per_role = kind == EvalSubsetKind::instruction_gen ? 20 : 50;
    auto general = pick_per_role(test_groups(dataset, Category::general, false), per_role, rng);
    auto specific = pick_per_role(test_groups(dataset, Category::specific, true), per_role, rng);
    std::vector<Sample> out = std::move(general);
    out.insert(out.end(), specific.begin(), specific.end());
    sort_samples(out);
    return out;
}

StatsReport compute_stats(const Dataset& dataset) {
    StatsReport report;
    std::set<std::string> general_instr, general_instr_en, general_instr_zh;
    std::set<std::string> roles, roles_en, roles_zh;
    long long instr_words = 0;
    long long resp_words = 0;
    long long resp_count = 0;

    for (const auto& s : dataset.samples) {
        ++report.samples;
        roles.insert(s.role_name);
        (s.language == Language::en ? roles_en : roles_zh).insert(s.role_name);
        instr_words += seg::count_words(s.instruction, Language::en);
        // Multi-candidate records (external format) join their responses
        // with \x1e; each piece counts as one response for the average.
        size_t start = 0;
        while (start <= s.response.size()) {
            size_t end = s.response.find('\x1e', start);
            if (end == std::string::npos) end = s.response.size();
            std::string_view piece = trim(std::string_view(s.response).substr(start, end - start));
            if (!piece.empty()) {
                resp_words += seg::count_words(std::string(piece), Language::en);
                ++resp_count;
            }
            start = end + 1;
        }
        if (s.category == Category::general) {
            ++report.general_samples;
            general_instr.insert(s.instruction);
            if (s.language == Language::en) {
                ++report.general_samples_en;
                general_instr_en.insert(s.instruction);
            } else {
                ++report.general_samples_zh;
                general_instr_zh.insert(s.instruction);
            }
        } else {
            ++report.specific_samples;
            ++report.specific_instructions;
            if (s.language == Language::en) ++report.specific_samples_en;
            else ++report.specific_samples_zh;
            if (s.question_kind == QuestionKind::script_agnostic)
                ++report.script_agnostic_questions;
            else if (s.question_kind == QuestionKind::script_based)
                ++report.script_based_questions;
        }
    }
    report.general_instructions = static_cast<long long>(general_instr.size());
    report.general_instructions_en = static_cast<long long>(general_instr_en.size());
    report.general_instructions_zh = static_cast<long long>(general_instr_zh.size());
    report.instructions = report.general_instructions + report.specific_instructions;
    report.roles = static_cast<long long>(roles.size());
    report.roles_en = static_cast<long long>(roles_en.size());
    report.roles_zh = static_cast<long long>(roles_zh.size());
    if (report.samples > 0)
        report.avg_instruction_words = static_cast<double>(instr_words) /
                                       static_cast<double>(report.samples);
    if (resp_count > 0)
        report.avg_response_words = static_cast<double>(resp_words) /
                                    static_cast<double>(resp_count);
    return report;
}

std::string StatsReport::to_table() const {
    std::ostringstream out;
    auto row = [&](const std::string& name, const std::string& value) {
        out << std::left << std::setw(46) << name << value << '\n';
    };
    auto pair = [](long long a, long long b) {
        return std::to_string(a) + " / " + std::to_string(b);
    };
    std::ostringstream f1, f2;
    f1 << std::fixed << std::setprecision(2) << avg_instruction_words;
    f2 << std::fixed << std::setprecision(2) << avg_response_words;
    row("# of roles", std::to_string(roles));
    row("  - # of English roles", std::to_string(roles_en));
    row("  - # of Chinese roles", std::to_string(roles_zh));
    row("# of samples / instructions", pair(samples, instructions));
    row("  - of general-purpose", pair(general_samples, general_instructions));
    row("    - in English", pair(general_samples_en, general_instructions_en));
    row("    - in Chinese", pair(general_samples_zh, general_instructions_zh));
    row("  - of role-specific", pair(specific_samples, specific_instructions));
    row("    - in English", pair(specific_samples_en, specific_samples_en));
    row("    - in Chinese", pair(specific_samples_zh, specific_samples_zh));
    row("    - of script-agnostic qs", pair(script_agnostic_questions, script_agnostic_questions));
    row("    - of script-based qs", pair(script_based_questions, script_based_questions));
    row("avg. instruction length (in words)", f1.str());
    row("avg. response length (in words)", f2.str());
    return out.str();
}

json StatsReport::to_json() const {
    return json{{"samples", samples},
                {"instructions", instructions},
                {"general_samples", general_samples},
                {"general_instructions", general_instructions},
                {"general_samples_en", general_samples_en},
                {"general_instructions_en", general_instructions_en},
                {"general_samples_zh", general_samples_zh},
                {"general_instructions_zh", general_instructions_zh},
                {"specific_samples", specific_samples},
                {"specific_instructions", specific_instructions},
                {"specific_samples_en", specific_samples_en},
                {"specific_samples_zh", specific_samples_zh},
                {"script_agnostic_questions", script_agnostic_questions},
                {"script_based_questions", script_based_questions},
                {"roles", roles},
                {"roles_en", roles_en},
                {"roles_zh", roles_zh},
                {"avg_instruction_words", avg_instruction_words},
                {"avg_response_words", avg_response_words}};
}

Dataset load_external_dataset(const std::filesystem::path& dir) {
    Dataset dataset;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    for (const auto& file : files) {
        std::string path_tag = lower_ascii(file.string());
        bool zh = path_tag.find("zh") != std::string::npos;
        bool specific = path_tag.find("specific") != std::string::npos;
        const std::string text = read_file(file);
        auto lines = split_lines(text);
        for (size_t i = 0; i < lines.size(); ++i) {
            if (trim(lines[i]).empty()) continue;
            json rec;
            try {
                rec = json::parse(lines[i]);
            } catch (const json::parse_error& e) {
                throw SchemaError(file.string() + ":" + std::to_string(i + 1) + ": " + e.what());
            }
            Sample s;
            s.role_name = rec.value("role", rec.value("role_name", ""));
            s.language = zh ? Language::zh : Language::en;
            s.instruction = rec.value("question", rec.value("instruction", ""));
            s.category = specific ? Category::specific : Category::general;
            s.source = specific ? genpipe::Source::context_instruct : genpipe::Source::rolegpt;
            if (rec.contains("generated") && rec["generated"].is_array() &&
                !rec["generated"].empty()) {
                // one record stays one sample; candidates joined with \x1e
                // so the stats reporter can still count them individually
                std::string joined;
                for (const auto& g : rec["generated"]) {
                    if (!joined.empty()) joined += '\x1e';
                    joined += g.get<std::string>();
                }
                s.response = joined;
            } else {
                s.response = rec.value("generated", rec.value("response", ""));
            }
            dataset.samples.push_back(std::move(s));
        }
    }
    return dataset;
}

std::string dataset_to_jsonl(const Dataset& dataset) {
    return genpipe::samples_to_jsonl(dataset.samples);
}

Dataset dataset_from_jsonl(const std::string& text, const std::string& origin) {
    Dataset d;
    d.samples = genpipe::samples_from_jsonl(text, origin);
    return d;
}

void store_dataset(const Dataset& dataset, const std::filesystem::path& samples_path,
                   const std::filesystem::path& manifest_path) {
    write_file(samples_path, dataset_to_jsonl(dataset));
    if (!manifest_path.empty()) write_file(manifest_path, dataset.manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& samples_path,
                     const std::filesystem::path& manifest_path) {
    Dataset d = dataset_from_jsonl(read_file(samples_path), samples_path.string());
    if (!manifest_path.empty() && std::filesystem::exists(manifest_path))
        d.manifest = json::parse(read_file(manifest_path));
    return d;
}

}  // namespace roleforge::bench
