#include "roleforge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "roleforge/prompts.hpp"
#include "roleforge/retrieval.hpp"

using json = nlohmann::ordered_json;

namespace roleforge::eval {

std::vector<Prediction> predictions_from_jsonl(const std::string& text,
                                               const std::string& origin) {
    std::vector<Prediction> out;
    std::set<std::tuple<std::string, std::string, std::string>> keys;
    auto lines = split_lines(text);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        try {
            json rec = json::parse(lines[i]);
            Prediction p;
            p.role_name = rec.value("role", rec.value("role_name", ""));
            p.instruction = rec.value("instruction", rec.value("question", ""));
            p.model_name = rec.at("model").get<std::string>();
            p.output = rec.at("output").get<std::string>();
            if (!keys.insert({p.role_name, p.instruction, p.model_name}).second)
                throw SchemaError(origin + ":" + std::to_string(i + 1) +
                                  ": duplicate (role, instruction, model) key");
            out.push_back(std::move(p));
        } catch (const json::exception& e) {
            throw SchemaError(origin + ":" + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

std::string predictions_to_jsonl(std::span<const Prediction> predictions) {
    std::string out;
    for (const auto& p : predictions) {
        json rec = {{"role", p.role_name},
                    {"instruction", p.instruction},
                    {"model", p.model_name},
                    {"output", p.output}};
        out += rec.dump();
        out += '\n';
    }
    return out;
}

void ReferenceTable::add_raw(const std::string& instruction, std::vector<std::string> answers) {
    raw_by_instruction_[instruction] = std::move(answers);
    const auto& stored = raw_by_instruction_[instruction];
    for (auto& [key, refs] : entries_)
        if (key.second == instruction) refs.raw_refs = stored;
}

const ReferenceSet* ReferenceTable::find(const std::string& role,
                                         const std::string& instruction) const {
    auto it = entries_.find({role, instruction});
    if (it != entries_.end()) return &it->second;
    return nullptr;
}

ReferenceTable ReferenceTable::from_dataset(const bench::Dataset& dataset) {
    using genpipe::Category;
    using genpipe::Split;
    ReferenceTable table;
    for (const auto& s : dataset.samples) {
        if (s.split != Split::test) continue;
        auto& entry = table.entries_[{s.role_name, s.instruction}];
        entry.language = s.language;
        if (s.category == Category::general) {
            if (s.reference_rank >= 1) entry.cus_refs.push_back(s.response);
        } else {
            entry.spe_refs.push_back(s.response);
        }
    }
    for (auto& [key, refs] : table.entries_) {
        auto it = table.raw_by_instruction_.find(key.second);
        if (it != table.raw_by_instruction_.end()) refs.raw_refs = it->second;
    }
    return table;
}

namespace {

size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<size_t> prev(b.size() + 1, 0), curr(b.size() + 1, 0);
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j) {
            if (a[i - 1] == b[j - 1]) curr[j] = prev[j - 1] + 1;
            else curr[j] = std::max(prev[j], curr[j - 1]);
        }
        std::swap(prev, curr);
        std::fill(curr.begin(), curr.end(), 0);
    }
    return prev[b.size()];
}

}  // namespace

double rouge_l(const std::string& candidate, std::span<const std::string> references,
               Language language) {
    auto cand_tokens = retrieval::tokenize(candidate, language);
    double best = 0.0;
    for (const auto& ref : references) {
        auto ref_tokens = retrieval::tokenize(ref, language);
        if (cand_tokens.empty() || ref_tokens.empty()) continue;
        double lcs = static_cast<double>(lcs_length(cand_tokens, ref_tokens));
        if (lcs == 0.0) continue;
        double p = lcs / static_cast<double>(cand_tokens.size());
        double r = lcs / static_cast<double>(ref_tokens.size());
        best = std::max(best, 2.0 * p * r / (p + r));
    }
    return best;
}

std::map<std::string, RougeReport> evaluate(std::span<const Prediction> predictions,
                                            const ReferenceTable& references) {
    struct Acc {
        double cus = 0, raw = 0, spe = 0;
        int n_cus = 0, n_raw = 0, n_spe = 0;
    };
    std::map<std::string, Acc> acc;
    std::vector<std::string> missing;

    for (const auto& p : predictions) {
        const ReferenceSet* refs = references.find(p.role_name, p.instruction);
        if (refs == nullptr ||
            (refs->cus_refs.empty() && refs->raw_refs.empty() && refs->spe_refs.empty())) {
            missing.push_back(p.role_name + " / " + p.instruction);
            continue;
        }
        Acc& a = acc[p.model_name];
        if (!refs->cus_refs.empty()) {
            a.cus += rouge_l(p.output, refs->cus_refs, refs->language);
            ++a.n_cus;
        }
        if (!refs->raw_refs.empty()) {
            a.raw += rouge_l(p.output, refs->raw_refs, refs->language);
            ++a.n_raw;
        }
        if (!refs->spe_refs.empty()) {
            a.spe += rouge_l(p.output, refs->spe_refs, refs->language);
            ++a.n_spe;
        }
    }
    if (!missing.empty()) {
        std::string msg = "no references for " + std::to_string(missing.size()) + " key(s): ";
        for (size_t i = 0; i < missing.size() && i < 5; ++i) {
            if (i > 0) msg += "; ";
            msg += missing[i];
        }
        throw MissingReference(msg);
    }

    std::map<std::string, RougeReport> reports;
    for (const auto& [model, a] : acc) {
        RougeReport r;
        double sum = 0.0;
        int parts = 0;
        if (a.n_cus > 0) {
            r.cus = 100.0 * a.cus / a.n_cus;
            sum += *r.cus;
            ++parts;
        }
        if (a.n_raw > 0) {
            r.raw = 100.0 * a.raw / a.n_raw;
            sum += *r.raw;
            ++parts;
        }
        if (a.n_spe > 0) {
            r.spe = 100.0 * a.spe / a.n_spe;
            sum += *r.spe;
            ++parts;
        }
        r.n_cus = a.n_cus;
        r.n_raw = a.n_raw;
        r.n_spe = a.n_spe;
        r.avg = parts > 0 ? sum / parts : 0.0;
        reports[model] = r;
    }
    return reports;
}

std::string report_table(const std::map<std::string, RougeReport>& reports) {
    std::ostringstream out;
    out << std::left << std::setw(24) << "Model" << std::right << std::setw(8) << "CUS"
        << std::setw(8) << "RAW" << std::setw(8) << "SPE" << std::setw(8) << "avg." << '\n';
    auto cell = [](const std::optional<double>& v) {
        if (!v) return std::string("-");
        std::ostringstream ss;
        ss << std::fixed << std::setprecision(1) << *v;
        return ss.str();
    };
    for (const auto& [model, r] : reports) {
        std::ostringstream avg;
        avg << std::fixed << std::setprecision(1) << r.avg;
        out << std::left << std::setw(24) << model << std::right << std::setw(8) << cell(r.cus)
            << std::setw(8) << cell(r.raw) << std::setw(8) << cell(r.spe) << std::setw(8)
            << avg.str() << '\n';
    }
    return out.str();
}

json report_json(const std::map<std::string, RougeReport>& reports) {
    json doc = json::object();
    for (const auto& [model, r] : reports) {
        json entry;
        if (r.cus) entry["cus"] = *r.cus;
        if (r.raw) entry["raw"] = *r.raw;
        if (r.spe) entry["spe"] = *r.spe;
        entry["avg"] = r.avg;
        entry["n_cus"] = r.n_cus;
        entry["n_raw"] = r.n_raw;
        entry["n_spe"] = r.n_spe;
        doc[model] = entry;
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Judge verdict parsing and aggregation
// ---------------------------------------------------------------------------

namespace {

void skip_ws(const std::string& s, size_t& i) {
    while (i < s.size() && static_cast<unsigned char>(s[i]) <= ' ') ++i;
}

std::optional<std::string> parse_quoted(const std::string& s, size_t& i) {
    if (i >= s.size() || (s[i] != '"' && s[i] != '\'')) return std::nullopt;
    char quote = s[i++];
    std::string out;
    while (i < s.size()) {
        char c = s[i];
        if (c == '\\' && i + 1 < s.size()) {
            char n = s[i + 1];
            if (n == 'n') out.push_back('\n');
            else if (n == 't') out.push_back('\t');
            else out.push_back(n);
            i += 2;
            continue;
        }
        if (c == quote) {
            ++i;
            return out;
        }
        out.push_back(c);
        ++i;
    }
    return std::nullopt;
}

std::optional<RankingRecord> parse_record(const std::string& s, size_t& i) {
    skip_ws(s, i);
    if (i >= s.size() || s[i] != '{') return std::nullopt;
    ++i;
    RankingRecord record;
    bool have_model = false, have_rank = false;
    while (i < s.size() && s[i] != '}') {
        skip_ws(s, i);
        auto key = parse_quoted(s, i);
        if (!key) {
            // tolerate unquoted keys
            size_t start = i;
            while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_'))
                ++i;
            if (i == start) return std::nullopt;
            key = s.substr(start, i - start);
        }
        skip_ws(s, i);
        if (i >= s.size() || s[i] != ':') return std::nullopt;
        ++i;
        skip_ws(s, i);
        if (auto text = parse_quoted(s, i)) {
            if (*key == "model") {
                record.model = *text;
                have_model = true;
            } else if (*key == "reason") {
                record.reason = *text;
            } else if (*key == "rank") {
                try {
                    record.rank = std::stoi(*text);
                    have_rank = true;
                } catch (...) {
                    return std::nullopt;
                }
            }
        } else if (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '-')) {
            size_t start = i;
            if (s[i] == '-') ++i;
            while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
            if (*key == "rank") {
                record.rank = std::stoi(s.substr(start, i - start));
                have_rank = true;
            }
        } else {
            return std::nullopt;
        }
        skip_ws(s, i);
        if (i < s.size() && s[i] == ',') ++i;
    }
    if (i >= s.size()) return std::nullopt;
    ++i;  // '}'
    if (!have_model || !have_rank) return std::nullopt;
    return record;
}

}  // namespace

std::vector<RankingRecord> parse_judge_response(const std::string& raw) {
    size_t i = raw.find('[');
    while (i != std::string::npos) {
        size_t pos = i + 1;
        std::vector<RankingRecord> records;
        bool ok = true;
        for (;;) {
            skip_ws(raw, pos);
            if (pos < raw.size() && raw[pos] == ']') break;
            auto record = parse_record(raw, pos);
            if (!record) {
                ok = false;
                break;
            }
            records.push_back(std::move(*record));
            skip_ws(raw, pos);
            if (pos < raw.size() && raw[pos] == ',') ++pos;
        }
        if (ok && !records.empty()) return records;
        i = raw.find('[', i + 1);
    }
    throw UnparseableVerdict("no bracketed model-ranking list found");
}

std::map<std::string, RankingSummary> aggregate_rankings(
    std::span<const std::vector<RankingRecord>> verdicts, AggregationMode mode,
    const std::string& reference_model) {
    if (verdicts.empty()) throw NoVerdicts("no parseable verdicts to aggregate");
    if (mode == AggregationMode::pairwise_vs_reference && reference_model.empty())
        throw NoVerdicts("pairwise aggregation needs a reference model");

    struct Acc {
        int wins = 0;
        long long rank_sum = 0;
        int appearances = 0;
    };
    std::map<std::string, Acc> acc;
    for (const auto& verdict : verdicts) {
        int reference_rank = 0;
        if (mode == AggregationMode::pairwise_vs_reference) {
            for (const auto& r : verdict)
                if (r.model == reference_model) reference_rank = r.rank;
        }
        for (const auto& r : verdict) {
            Acc& a = acc[r.model];
            ++a.appearances;
            a.rank_sum += r.rank;
            if (mode == AggregationMode::multiway) {
                if (r.rank == 1) ++a.wins;
            } else {
                if (r.model != reference_model && reference_rank > 0 && r.rank < reference_rank)
                    ++a.wins;
            }
        }
    }

    std::map<std::string, RankingSummary> out;
    const double n = static_cast<double>(verdicts.size());
    for (const auto& [model, a] : acc) {
        RankingSummary s;
        s.win_rate = 100.0 * static_cast<double>(a.wins) / n;
        s.avg_ranking = a.appearances > 0
                            ? static_cast<double>(a.rank_sum) / static_cast<double>(a.appearances)
                            : 0.0;
        s.appearances = a.appearances;
        out[model] = s;
    }
    return out;
}

JudgeRunReport run_judge(std::span<const genpipe::Sample> subset,
                         std::span<const Prediction> predictions,
                         std::span<const corpus::RoleProfile> profiles,
                         genpipe::LlmBackend& backend, uint64_t shuffle_seed,
                         const genpipe::CallOptions& options) {
    // model outputs grouped by (role, instruction)
    std::map<std::pair<std::string, std::string>, std::vector<std::pair<std::string, std::string>>>
        answers;
    for (const auto& p : predictions)
        answers[{p.role_name, p.instruction}].emplace_back(p.model_name, p.output);

    std::map<std::string, const corpus::RoleProfile*> by_role;
    for (const auto& profile : profiles) by_role[profile.role_name] = &profile;

    JudgeRunReport report;
    std::vector<genpipe::CallSpec> specs;
    for (const auto& sample : subset) {
        auto profile_it = by_role.find(sample.role_name);
        if (profile_it == by_role.end()) continue;
        auto it = answers.find({sample.role_name, sample.instruction});
        if (it == answers.end() || it->second.size() < 2) continue;
        auto shuffled = it->second;
        Rng rng(derive_seed(shuffle_seed, sample.role_name + "\x1f" + sample.instruction));
        rng.shuffle(shuffled);
        auto bundle = prompts::render_judge_prompt(*profile_it->second, sample.instruction,
                                                   shuffled, sample.language);
        genpipe::CallSpec spec;
        spec.messages = bundle.messages;
        spec.params = genpipe::GenParams::standard();
        spec.nonce = specs.size();
        specs.push_back(std::move(spec));
    }

    auto results = genpipe::run_calls(backend, specs, options);
    for (const auto& r : results) {
        if (!r.from_ledger) ++report.backend_calls;
        try {
            report.verdicts.push_back(parse_judge_response(r.response));
        } catch (const UnparseableVerdict&) {
            ++report.unparseable;
        }
    }
    return report;
}

}  // namespace roleforge::eval
