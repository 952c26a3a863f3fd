#include <cstdio>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "roleforge/bench.hpp"
#include "roleforge/corpus.hpp"
#include "roleforge/eval.hpp"
#include "roleforge/genpipe.hpp"
#include "roleforge/pipeline.hpp"
#include "roleforge/prompts.hpp"
#include "roleforge/retrieval.hpp"
#include "roleforge/segmenter.hpp"

using json = nlohmann::ordered_json;
using namespace roleforge;

namespace {

std::unique_ptr<genpipe::LlmBackend> backend_from_flags(const std::string& kind,
                                                        const std::string& endpoint,
                                                        uint64_t seed) {
    if (kind == "mock") return std::make_unique<genpipe::MockBackend>(seed);
    if (kind == "http") {
        genpipe::HttpBackendConfig config;
        if (!endpoint.empty()) config.endpoint = endpoint;
        return std::make_unique<genpipe::HttpBackend>(config);
    }
    throw ConfigError("unknown backend: " + kind);
}

corpus::RoleProfile profile_with_fallback_description(const std::filesystem::path& script,
                                                      const std::string& role,
                                                      const std::string& language,
                                                      const std::string& description,
                                                      const std::vector<std::string>& catchphrases,
                                                      const corpus::ParseRules& rules) {
    auto rounds = corpus::parse_script(read_file(script), role, rules);
    std::string desc = description.empty() ? "No description provided." : description;
    return corpus::build_profile(role, language_from_string(language), desc, catchphrases,
                                 std::move(rounds), script.filename().string());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"roleforge: role-play instruction dataset construction and evaluation"};
    app.require_subcommand(1);

    // ---- parse ----
    auto* cmd_parse = app.add_subcommand("parse", "Parse a raw script into a role profile");
    std::string parse_script_path, parse_role, parse_rules, parse_out, parse_language = "en";
    std::string parse_description;
    std::vector<std::string> parse_catchphrases;
    cmd_parse->add_option("--script", parse_script_path, "Raw script file")->required();
    cmd_parse->add_option("--role", parse_role, "Role of interest")->required();
    cmd_parse->add_option("--rules", parse_rules, "ParseRules JSON file");
    cmd_parse->add_option("--out", parse_out, "Output profile JSONL")->required();
    cmd_parse->add_option("--language", parse_language, "en or zh");
    cmd_parse->add_option("--description", parse_description, "Role description text");
    cmd_parse->add_option("--catchphrase", parse_catchphrases, "Catchphrase (repeatable)");

    // ---- segment ----
    auto* cmd_segment = app.add_subcommand("segment", "Split a profile into segments");
    std::string seg_profile, seg_out;
    uint64_t seg_seed = 0;
    cmd_segment->add_option("--profile", seg_profile)->required();
    cmd_segment->add_option("--out", seg_out)->required();
    cmd_segment->add_option("--seed", seg_seed);

    // ---- dedup ----
    auto* cmd_dedup = app.add_subcommand("dedup", "De-duplicate a JSONL of texts by BM25");
    std::string dedup_in, dedup_out, dedup_language = "en";
    double dedup_threshold = 6.0;
    cmd_dedup->add_option("--in", dedup_in)->required();
    cmd_dedup->add_option("--threshold", dedup_threshold);
    cmd_dedup->add_option("--out", dedup_out, "Retained records (stdout summary if omitted)");
    cmd_dedup->add_option("--language", dedup_language);

    // ---- render ----
    auto* cmd_render = app.add_subcommand("render", "Render a prompt bundle as JSON");
    std::string render_mode = "zsp", render_profile, render_instruction, render_demos;
    int render_k = 5;
    cmd_render->add_option("--mode", render_mode, "zsp, fsp, or fsd");
    cmd_render->add_option("--profile", render_profile)->required();
    cmd_render->add_option("--instruction", render_instruction)->required();
    cmd_render->add_option("--demos", render_demos, "JSONL of {question, answer} demos");
    cmd_render->add_option("--k", render_k, "Demos retrieved from the profile when --demos absent");

    // ---- generate ----
    auto* cmd_generate = app.add_subcommand("generate", "Run backend generation for one profile");
    std::string gen_what, gen_profile, gen_backend = "mock", gen_endpoint, gen_out;
    std::string gen_instructions, gen_segments, gen_ledger;
    uint64_t gen_seed = 0;
    cmd_generate->add_option("what", gen_what, "general or specific")->required();
    cmd_generate->add_option("--profile", gen_profile)->required();
    cmd_generate->add_option("--backend", gen_backend, "mock or http");
    cmd_generate->add_option("--endpoint", gen_endpoint);
    cmd_generate->add_option("--seed", gen_seed);
    cmd_generate->add_option("--instructions", gen_instructions, "Instructions JSONL (general)");
    cmd_generate->add_option("--segments", gen_segments, "Segments JSONL (specific)");
    cmd_generate->add_option("--ledger", gen_ledger, "Call ledger JSONL for resume");
    cmd_generate->add_option("--out", gen_out)->required();

    // ---- split ----
    auto* cmd_split = app.add_subcommand("split", "Assign train/test splits");
    std::string split_kind = "instruction", split_in, split_out_dir;
    double split_scale = 1.0;
    uint64_t split_seed = 0;
    cmd_split->add_option("--kind", split_kind, "instruction or role");
    cmd_split->add_option("--in", split_in, "Samples JSONL")->required();
    cmd_split->add_option("--out", split_out_dir, "Output directory")->required();
    cmd_split->add_option("--seed", split_seed);
    cmd_split->add_option("--scale", split_scale);

    // ---- stats ----
    auto* cmd_stats = app.add_subcommand("stats", "Dataset statistics table");
    std::string stats_in;
    bool stats_external = false;
    cmd_stats->add_option("--in", stats_in, "Samples JSONL file or dataset directory")->required();
    cmd_stats->add_flag("--external", stats_external,
                        "Treat --in as an externally published dataset tree");

    // ---- eval ----
    auto* cmd_eval = app.add_subcommand("eval", "Evaluation commands");
    cmd_eval->require_subcommand(1);
    auto* cmd_rouge = cmd_eval->add_subcommand("rouge", "Rouge-L report for predictions");
    std::string rouge_pred, rouge_dataset, rouge_instructions, rouge_json_out;
    cmd_rouge->add_option("--pred", rouge_pred)->required();
    cmd_rouge->add_option("--dataset", rouge_dataset, "Split directory with test.jsonl")
        ->required();
    cmd_rouge->add_option("--instructions", rouge_instructions,
                          "Instructions JSONL providing raw answers");
    cmd_rouge->add_option("--json", rouge_json_out, "Write machine-readable report here");

    auto* cmd_judge = cmd_eval->add_subcommand("judge", "LLM-judge ranking aggregation");
    std::string judge_pred, judge_subset, judge_backend = "mock", judge_endpoint;
    std::vector<std::string> judge_profiles;
    std::string judge_reference;
    uint64_t judge_seed = 0;
    cmd_judge->add_option("--pred", judge_pred)->required();
    cmd_judge->add_option("--profile", judge_profiles, "Role profile JSONL (repeatable)")
        ->required();
    cmd_judge->add_option("--subset", judge_subset, "Samples JSONL naming what to judge")
        ->required();
    cmd_judge->add_option("--backend", judge_backend);
    cmd_judge->add_option("--endpoint", judge_endpoint);
    cmd_judge->add_option("--seed", judge_seed);
    cmd_judge->add_option("--reference", judge_reference,
                          "Score pairwise win rates against this model instead of multiway");

    // ---- describe ----
    auto* cmd_describe = app.add_subcommand(
        "describe", "Generate a role description and catchphrase via the backend");
    std::string desc_role, desc_backend = "mock", desc_endpoint;
    uint64_t desc_seed = 0;
    cmd_describe->add_option("--role", desc_role)->required();
    cmd_describe->add_option("--backend", desc_backend);
    cmd_describe->add_option("--endpoint", desc_endpoint);
    cmd_describe->add_option("--seed", desc_seed);

    // ---- run (pipeline) ----
    auto* cmd_run = app.add_subcommand("run", "Run pipeline stages over a project directory");
    std::string run_config, run_project, run_stages;
    cmd_run->add_option("--config", run_config)->required();
    cmd_run->add_option("--project", run_project, "Project directory (default: config dir)");
    cmd_run->add_option("--stages", run_stages, "Comma-separated stage list (default: all)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cmd_parse) {
            corpus::ParseRules rules = parse_rules.empty() ? corpus::ParseRules{}
                                                           : corpus::ParseRules::load(parse_rules);
            auto profile = profile_with_fallback_description(parse_script_path, parse_role,
                                                             parse_language, parse_description,
                                                             parse_catchphrases, rules);
            corpus::store_profile(profile, parse_out);
            std::cout << "wrote " << parse_out << " (" << profile.rounds.size() << " rounds, "
                      << profile.role_turn_count() << " role turns)\n";
        } else if (*cmd_segment) {
            auto profile = corpus::load_profile(seg_profile);
            seg::SegConfig cfg;
            cfg.rng_seed = seg_seed;
            auto result = seg::segment_profile(profile, cfg);
            write_file(seg_out, seg::segments_to_jsonl(result.segments));
            std::cout << "wrote " << seg_out << " (" << result.segments.size() << " segments)\n";
        } else if (*cmd_dedup) {
            std::vector<std::pair<std::string, std::string>> items;
            const std::string dedup_text = read_file(dedup_in);
            auto lines = split_lines(dedup_text);
            std::vector<std::string> raw_lines;
            for (size_t i = 0; i < lines.size(); ++i) {
                if (trim(lines[i]).empty()) continue;
                json rec = json::parse(lines[i]);
                std::string text = rec.value("instruction", rec.value("question",
                                             rec.value("text", "")));
                items.emplace_back(std::to_string(items.size()), text);
                raw_lines.emplace_back(lines[i]);
            }
            auto result = retrieval::dedup(items, dedup_threshold,
                                           language_from_string(dedup_language));
            std::cout << "retained " << result.retained.size() << ", removed "
                      << result.removed.size() << "\n";
            if (!dedup_out.empty()) {
                std::string out;
                for (const auto& id : result.retained) out += raw_lines[std::stoul(id)] + "\n";
                write_file(dedup_out, out);
            }
        } else if (*cmd_render) {
            auto profile = corpus::load_profile(render_profile);
            auto mode = prompts::prompt_mode_from_string(render_mode);
            std::vector<prompts::QaPair> demos;
            if (!render_demos.empty()) {
                const std::string demo_text = read_file(render_demos);
                for (auto line : split_lines(demo_text)) {
                    if (trim(line).empty()) continue;
                    json rec = json::parse(line);
                    demos.push_back({rec.at("question").get<std::string>(),
                                     rec.at("answer").get<std::string>()});
                }
            } else if (mode != prompts::PromptMode::zsp && render_k > 0) {
                // few-shot modes retrieve demonstrations from the profile
                retrieval::Bm25Index index(profile.language);
                std::vector<const corpus::DialogueRound*> rounds;
                for (const auto& round : profile.rounds) {
                    if (round.turns.size() < 2) continue;
                    index.add(std::to_string(rounds.size()), corpus::render_round(round));
                    rounds.push_back(&round);
                }
                auto tokens = retrieval::tokenize(render_instruction, profile.language);
                if (!tokens.empty()) {
                    for (const auto& hit :
                         index.top_k_tokens(tokens, static_cast<size_t>(render_k))) {
                        const auto& turns = rounds[std::stoul(hit.doc_id)]->turns;
                        demos.push_back(
                            {turns[turns.size() - 2].content, turns.back().content});
                    }
                }
            }
            auto bundle = prompts::render_rolegpt(profile, render_instruction, mode, demos);
            std::cout << prompts::bundle_to_json(bundle) << "\n";
        } else if (*cmd_generate) {
            auto profile = corpus::load_profile(gen_profile);
            auto backend = backend_from_flags(gen_backend, gen_endpoint,
                                              derive_seed(gen_seed, "mock-backend"));
            std::unique_ptr<genpipe::CallLedger> ledger;
            genpipe::CallOptions calls;
            if (!gen_ledger.empty()) {
                ledger = std::make_unique<genpipe::CallLedger>(gen_ledger);
                calls.ledger = ledger.get();
            }
            if (gen_what == "general") {
                if (gen_instructions.empty())
                    throw ConfigError("generate general needs --instructions");
                auto records = pipeline::load_instructions(gen_instructions);
                std::vector<std::string> instructions;
                for (const auto& r : records)
                    if (r.language == profile.language) instructions.push_back(r.instruction);
                genpipe::GeneralGenOptions options;
                options.calls = calls;
                auto report = genpipe::generate_general(profile, instructions, *backend, options);
                write_file(gen_out, genpipe::samples_to_jsonl(report.samples));
                std::cout << "wrote " << gen_out << " (" << report.samples.size()
                          << " samples, " << report.total_retries << " retries)\n";
            } else if (gen_what == "specific") {
                if (gen_segments.empty()) throw ConfigError("generate specific needs --segments");
                auto segments = seg::segments_from_jsonl(read_file(gen_segments), gen_segments);
                genpipe::SpecificGenOptions options;
                options.calls = calls;
                auto report = genpipe::generate_specific(profile, segments, *backend, options);
                write_file(gen_out, genpipe::triplets_to_jsonl(report.triplets));
                std::cout << "wrote " << gen_out << " (" << report.triplets.size()
                          << " triplets, " << report.topup_calls << " top-up calls)\n";
            } else {
                throw ConfigError("generate expects 'general' or 'specific'");
            }
        } else if (*cmd_split) {
            bench::Dataset dataset;
            dataset.samples = genpipe::samples_from_jsonl(read_file(split_in), split_in);
            dataset.manifest = json::object();
            bench::SplitSpec spec;
            spec.seed = split_seed;
            spec.scale = split_scale;
            bench::Dataset result;
            if (split_kind == "instruction") {
                spec.kind = bench::SplitKind::instruction_gen;
                result = bench::split_instruction_gen(dataset, spec);
            } else if (split_kind == "role") {
                spec.kind = bench::SplitKind::role_gen;
                result = bench::split_role_gen(dataset, spec);
            } else {
                throw ConfigError("split --kind expects 'instruction' or 'role'");
            }
            std::filesystem::path dir(split_out_dir);
            std::vector<genpipe::Sample> train, test;
            for (const auto& s : result.samples)
                (s.split == genpipe::Split::train ? train : test).push_back(s);
            write_file(dir / "train.jsonl", genpipe::samples_to_jsonl(train));
            write_file(dir / "test.jsonl", genpipe::samples_to_jsonl(test));
            write_file(dir / "manifest.json", result.manifest.dump(2) + "\n");
            std::cout << "wrote " << (dir / "train.jsonl") << " (" << train.size() << ") and "
                      << (dir / "test.jsonl") << " (" << test.size() << ")\n";
        } else if (*cmd_stats) {
            bench::Dataset dataset;
            if (stats_external) {
                dataset = bench::load_external_dataset(stats_in);
            } else if (std::filesystem::is_directory(stats_in)) {
                for (const auto& entry : std::filesystem::directory_iterator(stats_in)) {
                    if (entry.path().extension() != ".jsonl") continue;
                    auto part = genpipe::samples_from_jsonl(read_file(entry.path()),
                                                            entry.path().string());
                    dataset.samples.insert(dataset.samples.end(), part.begin(), part.end());
                }
            } else {
                dataset.samples = genpipe::samples_from_jsonl(read_file(stats_in), stats_in);
            }
            std::cout << bench::compute_stats(dataset).to_table();
        } else if (*cmd_rouge) {
            auto predictions = eval::predictions_from_jsonl(read_file(rouge_pred), rouge_pred);
            std::filesystem::path dir(rouge_dataset);
            bench::Dataset dataset;
            for (const auto& name : {"train.jsonl", "test.jsonl"}) {
                auto f = dir / name;
                if (!std::filesystem::exists(f)) continue;
                auto part = genpipe::samples_from_jsonl(read_file(f), f.string());
                dataset.samples.insert(dataset.samples.end(), part.begin(), part.end());
            }
            auto table = eval::ReferenceTable::from_dataset(dataset);
            if (!rouge_instructions.empty()) {
                for (const auto& r : pipeline::load_instructions(rouge_instructions))
                    if (!r.raw_answers.empty()) table.add_raw(r.instruction, r.raw_answers);
            }
            auto reports = eval::evaluate(predictions, table);
            std::cout << eval::report_table(reports);
            if (!rouge_json_out.empty())
                write_file(rouge_json_out, eval::report_json(reports).dump(2) + "\n");
        } else if (*cmd_judge) {
            auto predictions = eval::predictions_from_jsonl(read_file(judge_pred), judge_pred);
            std::vector<corpus::RoleProfile> profiles;
            for (const auto& path : judge_profiles)
                profiles.push_back(corpus::load_profile(path));
            auto subset = genpipe::samples_from_jsonl(read_file(judge_subset), judge_subset);
            auto backend = backend_from_flags(judge_backend, judge_endpoint,
                                              derive_seed(judge_seed, "mock-judge"));
            auto report = eval::run_judge(subset, predictions, profiles, *backend, judge_seed);
            auto summary =
                judge_reference.empty()
                    ? eval::aggregate_rankings(report.verdicts, eval::AggregationMode::multiway)
                    : eval::aggregate_rankings(report.verdicts,
                                               eval::AggregationMode::pairwise_vs_reference,
                                               judge_reference);
            std::cout << std::left;
            for (const auto& [model, s] : summary) {
                printf("%-24s win_rate %6.1f  avg_ranking %5.2f  (n=%d)\n", model.c_str(),
                       s.win_rate, s.avg_ranking, s.appearances);
            }
            if (report.unparseable > 0)
                std::cout << report.unparseable << " unparseable verdict(s) excluded\n";
        } else if (*cmd_describe) {
            auto backend = backend_from_flags(desc_backend, desc_endpoint,
                                              derive_seed(desc_seed, "mock-describe"));
            auto [step1, step2] = prompts::render_description_prompts(desc_role);
            auto params = genpipe::GenParams::standard();
            std::string third_person =
                backend->complete({{prompts::Speaker::user, step1}}, params, 0);
            std::string second_person = backend->complete(
                {{prompts::Speaker::user, step1},
                 {prompts::Speaker::assistant, third_person},
                 {prompts::Speaker::user, step2}},
                params, 1);
            std::string catchphrase = backend->complete(
                {{prompts::Speaker::user, prompts::render_catchphrase_prompt(desc_role)}}, params,
                2);
            json out = {{"role_name", desc_role},
                        {"description", second_person},
                        {"catchphrases", catchphrase}};
            std::cout << out.dump(2) << "\n";
        } else if (*cmd_run) {
            auto config = pipeline::ProjectConfig::load(run_config);
            std::filesystem::path project = run_project.empty()
                                                ? std::filesystem::path(run_config).parent_path()
                                                : std::filesystem::path(run_project);
            std::vector<std::string> stages;
            if (run_stages.empty()) {
                stages = pipeline::kAllStages;
            } else {
                std::stringstream ss(run_stages);
                std::string stage;
                while (std::getline(ss, stage, ',')) stages.push_back(stage);
            }
            return pipeline::run_pipeline(config, stages, project, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
