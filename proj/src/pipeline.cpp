#include "roleforge/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "roleforge/prompts.hpp"
#include "roleforge/retrieval.hpp"

using json = nlohmann::ordered_json;

namespace roleforge::pipeline {

std::string slugify(const std::string& name) {
    std::string out;
    for (char c : name) {
        if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) out.push_back(c);
        else if (c >= 'A' && c <= 'Z') out.push_back(static_cast<char>(c - 'A' + 'a'));
        else if (!out.empty() && out.back() != '_') out.push_back('_');
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out.empty() ? "role" : out;
}

ProjectConfig ProjectConfig::load(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    auto resolve = [&](const std::string& p) -> std::filesystem::path {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    ProjectConfig config;
    config.seed = doc.value("seed", 0ull);
    for (const auto& r : doc.at("roles")) {
        RoleConfig role;
        role.role_name = r.at("role_name").get<std::string>();
        role.language = language_from_string(r.value("language", "en"));
        role.script = resolve(r.at("script").get<std::string>());
        role.description = r.value("description", "");
        if (r.contains("description_file"))
            role.description = read_file(resolve(r["description_file"].get<std::string>()));
        if (r.contains("catchphrases"))
            role.catchphrases = r["catchphrases"].get<std::vector<std::string>>();
        if (r.contains("rules")) role.rules = resolve(r["rules"].get<std::string>());
        if (!std::filesystem::exists(role.script))
            throw ConfigError("script not found: " + role.script.string());
        config.roles.push_back(std::move(role));
    }
    config.instructions = resolve(doc.at("instructions").get<std::string>());
    if (!std::filesystem::exists(config.instructions))
        throw ConfigError("instructions file not found: " + config.instructions.string());

    if (doc.contains("seg")) {
        const auto& s = doc["seg"];
        config.seg.min_words_en = s.value("min_words_en", config.seg.min_words_en);
        config.seg.min_chars_zh = s.value("min_chars_zh", config.seg.min_chars_zh);
        config.seg.min_turns = s.value("min_turns", config.seg.min_turns);
        config.seg.max_turn_words = s.value("max_turn_words", config.seg.max_turn_words);
        config.seg.max_segments = s.value("max_segments", config.seg.max_segments);
        config.seg.truncate_words = s.value("truncate_words", config.seg.truncate_words);
    }
    config.dedup_threshold = doc.value("dedup_threshold", config.dedup_threshold);

    if (doc.contains("split")) {
        const auto& s = doc["split"];
        config.split.general_train = s.value("general_train", config.split.general_train);
        config.split.general_test = s.value("general_test", config.split.general_test);
        config.split.specific_test_cap = s.value("specific_test_cap", config.split.specific_test_cap);
        config.split.roles_train = s.value("roles_train", config.split.roles_train);
        config.split.roles_test = s.value("roles_test", config.split.roles_test);
        config.split.rolegen_general_test_per_role =
            s.value("rolegen_general_test_per_role", config.split.rolegen_general_test_per_role);
        config.split.scale = s.value("scale", config.split.scale);
    }
    if (doc.contains("specific")) {
        const auto& s = doc["specific"];
        config.specific.target = s.value("target", config.specific.target);
        config.specific.per_script_questions =
            s.value("per_script_questions", config.specific.per_script_questions);
        config.specific.per_agnostic_questions =
            s.value("per_agnostic_questions", config.specific.per_agnostic_questions);
        config.specific.agnostic_calls = s.value("agnostic_calls", config.specific.agnostic_calls);
        config.specific.max_topup_calls =
            s.value("max_topup_calls", config.specific.max_topup_calls);
    }
    if (doc.contains("backend")) {
        const auto& b = doc["backend"];
        config.backend.kind = b.value("kind", config.backend.kind);
        config.backend.endpoint = b.value("endpoint", config.backend.endpoint);
        config.backend.model = b.value("model", config.backend.model);
        config.backend.api_key_env = b.value("key_env", config.backend.api_key_env);
        config.backend.parallelism = b.value("parallelism", config.backend.parallelism);
        config.backend.retries = b.value("retries", config.backend.retries);
        config.backend.retry_base_delay_ms =
            b.value("retry_base_delay_ms", config.backend.retry_base_delay_ms);
        config.backend.min_interval_ms = b.value("min_interval_ms", config.backend.min_interval_ms);
    }
    return config;
}

std::vector<InstructionRecord> load_instructions(const std::filesystem::path& path) {
    std::vector<InstructionRecord> out;
    const std::string text = read_file(path);
    auto lines = split_lines(text);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        try {
            json rec = json::parse(lines[i]);
            InstructionRecord r;
            r.instruction = rec.at("instruction").get<std::string>();
            r.language = language_from_string(rec.value("language", "en"));
            if (rec.contains("raw_answers"))
                r.raw_answers = rec["raw_answers"].get<std::vector<std::string>>();
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw SchemaError(path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

ProjectLock::ProjectLock(const std::filesystem::path& project_dir) {
    std::filesystem::create_directories(project_dir);
    path_ = project_dir / ".roleforge.lock";
    // O_EXCL-style creation through noreplace is not portable here; a
    // plain existence check is enough for one pipeline per directory.
    if (std::filesystem::exists(path_))
        throw IoError("project is locked by another run: " + path_.string());
    std::ofstream out(path_);
    if (!out) throw IoError("cannot create lock file " + path_.string());
    out << "locked\n";
    owned_ = true;
}

ProjectLock::~ProjectLock() {
    if (owned_) {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
}

namespace {

struct StageContext {
    const ProjectConfig& config;
    std::filesystem::path project;
    json manifest;
    std::filesystem::path manifest_path;

    void save_manifest() { write_file(manifest_path, manifest.dump(2) + "\n"); }
};

std::string combined_hash(const std::vector<std::string>& parts) {
    std::string all;
    for (const auto& p : parts) {
        all += p;
        all += '\x1f';
    }
    return hash_hex(fnv1a64(all));
}

std::string config_fingerprint(const ProjectConfig& config) {
    std::ostringstream ss;
    ss << config.seed << '|' << config.dedup_threshold << '|' << config.seg.min_words_en << '|'
       << config.seg.min_chars_zh << '|' << config.seg.min_turns << '|'
       << config.seg.max_turn_words << '|' << config.seg.max_segments << '|'
       << config.seg.truncate_words << '|' << config.split.scale << '|'
       << config.split.general_train << '|' << config.split.general_test << '|'
       << config.split.specific_test_cap << '|' << config.specific.target << '|'
       << config.backend.kind;
    for (const auto& r : config.roles) ss << '|' << r.role_name << '>' << r.script.string();
    return hash_hex(fnv1a64(ss.str()));
}

bool outputs_exist(const std::vector<std::filesystem::path>& outputs) {
    return std::all_of(outputs.begin(), outputs.end(),
                       [](const auto& p) { return std::filesystem::exists(p); });
}

/// Returns true when the stage can be skipped (hash hit + outputs present).
bool stage_guard(StageContext& ctx, const std::string& stage, const std::string& input_hash,
                 const std::vector<std::filesystem::path>& outputs, std::ostream& log) {
    if (ctx.manifest.contains("stages") && ctx.manifest["stages"].contains(stage)) {
        const auto& rec = ctx.manifest["stages"][stage];
        if (rec.value("input_hash", "") == input_hash && outputs_exist(outputs)) {
            log << "[" << stage << "] unchanged inputs, skipping\n";
            return true;
        }
    }
    return false;
}

void stage_done(StageContext& ctx, const std::string& stage, const std::string& input_hash,
                const std::vector<std::filesystem::path>& outputs, json counts) {
    std::vector<std::string> parts;
    for (const auto& p : outputs) parts.push_back(content_hash(p));
    ctx.manifest["stages"][stage] = {{"input_hash", input_hash},
                                     {"output_hash", combined_hash(parts)},
                                     {"counts", std::move(counts)}};
    ctx.save_manifest();
}

std::filesystem::path profile_path(const StageContext& ctx, const RoleConfig& role) {
    return ctx.project / "artifacts" / "parse" / (slugify(role.role_name) + ".profile.jsonl");
}

void require_stage_outputs(const StageContext&, const std::string& needed_by,
                           const std::string& prerequisite,
                           const std::vector<std::filesystem::path>& files) {
    for (const auto& f : files)
        if (!std::filesystem::exists(f))
            throw Error(needed_by + ": missing input " + f.string() + "; run the " +
                        prerequisite + " stage first");
}

void run_parse(StageContext& ctx, std::ostream& log) {
    std::vector<std::string> inputs{config_fingerprint(ctx.config)};
    std::vector<std::filesystem::path> outputs;
    for (const auto& role : ctx.config.roles) {
        inputs.push_back(content_hash(role.script));
        outputs.push_back(profile_path(ctx, role));
    }
    std::string input_hash = combined_hash(inputs);
    if (stage_guard(ctx, "parse", input_hash, outputs, log)) return;

    json counts = json::object();
    for (size_t i = 0; i < ctx.config.roles.size(); ++i) {
        const auto& role = ctx.config.roles[i];
        corpus::ParseRules rules =
            role.rules ? corpus::ParseRules::load(*role.rules) : corpus::ParseRules{};
        auto rounds = corpus::parse_script(read_file(role.script), role.role_name, rules);
        auto profile = corpus::build_profile(role.role_name, role.language, role.description,
                                             role.catchphrases, std::move(rounds),
                                             role.script.filename().string());
        corpus::store_profile(profile, outputs[i]);
        counts[role.role_name] = {{"rounds", profile.rounds.size()},
                                  {"role_turns", profile.role_turn_count()}};
        log << "[parse] " << role.role_name << ": " << profile.rounds.size() << " rounds\n";
    }
    stage_done(ctx, "parse", input_hash, outputs, counts);
}

void run_segment(StageContext& ctx, std::ostream& log) {
    std::vector<std::filesystem::path> profiles;
    for (const auto& role : ctx.config.roles) profiles.push_back(profile_path(ctx, role));
    require_stage_outputs(ctx, "segment", "parse", profiles);

    std::vector<std::string> inputs{config_fingerprint(ctx.config)};
    std::vector<std::filesystem::path> outputs;
    for (size_t i = 0; i < profiles.size(); ++i) {
        inputs.push_back(content_hash(profiles[i]));
        outputs.push_back(ctx.project / "artifacts" / "segment" /
                          (slugify(ctx.config.roles[i].role_name) + ".segments.jsonl"));
    }
    std::string input_hash = combined_hash(inputs);
    if (stage_guard(ctx, "segment", input_hash, outputs, log)) return;

    json counts = json::object();
    for (size_t i = 0; i < profiles.size(); ++i) {
        auto profile = corpus::load_profile(profiles[i]);
        seg::SegConfig cfg = ctx.config.seg;
        cfg.rng_seed = derive_seed(ctx.config.seed, "segment:" + profile.role_name);
        auto result = seg::segment_profile(profile, cfg);
        write_file(outputs[i], seg::segments_to_jsonl(result.segments));
        counts[profile.role_name] = {{"segments", result.segments.size()},
                                     {"script_portion_empty", result.script_portion_empty}};
        log << "[segment] " << profile.role_name << ": " << result.segments.size()
            << " segments\n";
    }
    stage_done(ctx, "segment", input_hash, outputs, counts);
}

std::unique_ptr<genpipe::LlmBackend> make_backend(const ProjectConfig& config) {
    if (config.backend.kind == "mock")
        return std::make_unique<genpipe::MockBackend>(derive_seed(config.seed, "mock-backend"));
    if (config.backend.kind == "http") {
        genpipe::HttpBackendConfig http;
        http.endpoint = config.backend.endpoint;
        http.model = config.backend.model;
        http.api_key_env = config.backend.api_key_env;
        return std::make_unique<genpipe::HttpBackend>(http);
    }
    throw ConfigError("unknown backend kind: " + config.backend.kind);
}

void run_generate(StageContext& ctx, std::ostream& log) {
    std::vector<std::filesystem::path> profiles, segment_files;
    for (const auto& role : ctx.config.roles) {
        profiles.push_back(profile_path(ctx, role));
        segment_files.push_back(ctx.project / "artifacts" / "segment" /
                                (slugify(role.role_name) + ".segments.jsonl"));
    }
    require_stage_outputs(ctx, "generate", "parse", profiles);
    require_stage_outputs(ctx, "generate", "segment", segment_files);

    std::vector<std::string> inputs{config_fingerprint(ctx.config),
                                    content_hash(ctx.config.instructions)};
    std::vector<std::filesystem::path> outputs;
    for (size_t i = 0; i < profiles.size(); ++i) {
        inputs.push_back(content_hash(profiles[i]));
        inputs.push_back(content_hash(segment_files[i]));
        auto slug = slugify(ctx.config.roles[i].role_name);
        outputs.push_back(ctx.project / "artifacts" / "generate" / (slug + ".general.jsonl"));
        outputs.push_back(ctx.project / "artifacts" / "generate" / (slug + ".triplets.jsonl"));
    }
    std::string input_hash = combined_hash(inputs);
    if (stage_guard(ctx, "generate", input_hash, outputs, log)) return;

    auto backend = make_backend(ctx.config);
    genpipe::CallLedger ledger(ctx.project / "artifacts" / "generate" / "ledger.jsonl");
    genpipe::CallOptions calls;
    calls.retry.max_attempts = ctx.config.backend.retries;
    calls.retry.base_delay_ms = ctx.config.backend.retry_base_delay_ms;
    calls.parallelism = ctx.config.backend.parallelism;
    calls.min_interval_ms = ctx.config.backend.min_interval_ms;
    calls.ledger = &ledger;

    auto records = load_instructions(ctx.config.instructions);

    json counts = json::object();
    for (size_t i = 0; i < profiles.size(); ++i) {
        auto profile = corpus::load_profile(profiles[i]);
        auto segments = seg::segments_from_jsonl(read_file(segment_files[i]),
                                                 segment_files[i].string());

        std::vector<std::string> instructions;
        for (const auto& r : records)
            if (r.language == profile.language) instructions.push_back(r.instruction);

        genpipe::GeneralGenOptions general_options;
        general_options.calls = calls;
        auto general = genpipe::generate_general(profile, instructions, *backend, general_options);

        genpipe::SpecificGenOptions specific_options = ctx.config.specific;
        specific_options.calls = calls;
        auto specific = genpipe::generate_specific(profile, segments, *backend, specific_options);

        write_file(outputs[2 * i], genpipe::samples_to_jsonl(general.samples));
        write_file(outputs[2 * i + 1], genpipe::triplets_to_jsonl(specific.triplets));
        counts[profile.role_name] = {{"general_samples", general.samples.size()},
                                     {"general_retries", general.total_retries},
                                     {"general_ledger_hits", general.ledger_hits},
                                     {"triplets", specific.triplets.size()},
                                     {"topup_calls", specific.topup_calls},
                                     {"skipped_blocks", specific.skipped_blocks},
                                     {"specific_retries", specific.total_retries}};
        log << "[generate] " << profile.role_name << ": " << general.samples.size()
            << " general samples, " << specific.triplets.size() << " triplets\n";
    }
    stage_done(ctx, "generate", input_hash, outputs, counts);
}

void run_filter(StageContext& ctx, std::ostream& log) {
    std::vector<std::filesystem::path> general_files, triplet_files;
    for (const auto& role : ctx.config.roles) {
        auto slug = slugify(role.role_name);
        general_files.push_back(ctx.project / "artifacts" / "generate" /
                                (slug + ".general.jsonl"));
        triplet_files.push_back(ctx.project / "artifacts" / "generate" /
                                (slug + ".triplets.jsonl"));
    }
    require_stage_outputs(ctx, "filter", "generate", general_files);
    require_stage_outputs(ctx, "filter", "generate", triplet_files);

    std::vector<std::string> inputs{config_fingerprint(ctx.config)};
    for (size_t i = 0; i < general_files.size(); ++i) {
        inputs.push_back(content_hash(general_files[i]));
        inputs.push_back(content_hash(triplet_files[i]));
    }
    std::vector<std::filesystem::path> outputs{ctx.project / "artifacts" / "filter" /
                                               "samples.jsonl"};
    std::string input_hash = combined_hash(inputs);
    if (stage_guard(ctx, "filter", input_hash, outputs, log)) return;

    std::vector<genpipe::Sample> all;
    json counts = json::object();
    for (size_t i = 0; i < general_files.size(); ++i) {
        const auto& role = ctx.config.roles[i];
        auto rules = genpipe::CleanRules::defaults(role.language);

        auto general = genpipe::samples_from_jsonl(read_file(general_files[i]),
                                                   general_files[i].string());
        int rejected_general = 0;
        for (const auto& s : general) {
            if (genpipe::clean_sample(s, rules).keep) all.push_back(s);
            else ++rejected_general;
        }

        auto triplets = genpipe::triplets_from_jsonl(read_file(triplet_files[i]),
                                                     triplet_files[i].string());
        auto outcome = genpipe::filter_candidates(triplets, ctx.config.dedup_threshold,
                                                  role.language);
        auto train = genpipe::samples_from_triplets(outcome.train, role.language,
                                                    genpipe::Split::train,
                                                    genpipe::OriginPool::train_pool);
        auto pool = genpipe::samples_from_triplets(outcome.test_pool, role.language,
                                                   genpipe::Split::unassigned,
                                                   genpipe::OriginPool::test_pool);
        int rejected_specific = 0;
        for (auto& list : {std::ref(train), std::ref(pool)}) {
            for (const auto& s : list.get()) {
                if (genpipe::clean_sample(s, rules).keep) all.push_back(s);
                else ++rejected_specific;
            }
        }
        counts[role.role_name] = {{"general_rejected", rejected_general},
                                  {"specific_train", outcome.train.size()},
                                  {"specific_test_pool", outcome.test_pool.size()},
                                  {"removed_dupes", outcome.removed_dupes.size()},
                                  {"specific_rejected", rejected_specific}};
        log << "[filter] " << role.role_name << ": " << outcome.train.size() << " train, "
            << outcome.test_pool.size() << " pool, " << rejected_general + rejected_specific
            << " rejected\n";
    }
    bench::sort_samples(all);
    // datasets key samples by (role, instruction, rank); exact duplicates
    // can slip through the low-confidence pool, keep the first
    std::set<std::tuple<std::string, std::string, int>> seen;
    std::vector<genpipe::Sample> unique;
    for (auto& s : all)
        if (seen.insert({s.role_name, s.instruction, s.reference_rank}).second)
            unique.push_back(std::move(s));
    write_file(outputs[0], genpipe::samples_to_jsonl(unique));
    stage_done(ctx, "filter", input_hash, outputs, counts);
}

void run_split(StageContext& ctx, std::ostream& log) {
    auto samples_file = ctx.project / "artifacts" / "filter" / "samples.jsonl";
    require_stage_outputs(ctx, "split", "filter", {samples_file});

    std::string input_hash =
        combined_hash({config_fingerprint(ctx.config), content_hash(samples_file)});
    auto dir = ctx.project / "artifacts" / "split" / "instruction_gen";
    std::vector<std::filesystem::path> outputs{dir / "train.jsonl", dir / "test.jsonl",
                                               dir / "manifest.json"};
    if (stage_guard(ctx, "split", input_hash, outputs, log)) return;

    bench::Dataset dataset;
    dataset.samples = genpipe::samples_from_jsonl(read_file(samples_file), samples_file.string());
    dataset.manifest = json::object();
    std::set<std::string> roles, languages;
    for (const auto& s : dataset.samples) {
        roles.insert(s.role_name);
        languages.insert(std::string(to_string(s.language)));
    }
    dataset.manifest["roles"] = std::vector<std::string>(roles.begin(), roles.end());
    dataset.manifest["languages"] = std::vector<std::string>(languages.begin(), languages.end());
    dataset.manifest["seed"] = ctx.config.seed;
    dataset.manifest["pipeline_version"] = "0.1.0";

    bench::SplitSpec spec = ctx.config.split;
    spec.kind = bench::SplitKind::instruction_gen;
    spec.seed = derive_seed(ctx.config.seed, "split:instruction");
    auto split = bench::split_instruction_gen(dataset, spec);

    std::vector<genpipe::Sample> train, test;
    for (const auto& s : split.samples)
        (s.split == genpipe::Split::train ? train : test).push_back(s);
    write_file(outputs[0], genpipe::samples_to_jsonl(train));
    write_file(outputs[1], genpipe::samples_to_jsonl(test));
    write_file(outputs[2], split.manifest.dump(2) + "\n");
    log << "[split] instruction_gen: " << train.size() << " train / " << test.size()
        << " test samples\n";
    stage_done(ctx, "split", input_hash, outputs,
               json{{"train_samples", train.size()}, {"test_samples", test.size()}});
}

void run_stats(StageContext& ctx, std::ostream& log) {
    auto dir = ctx.project / "artifacts" / "split" / "instruction_gen";
    require_stage_outputs(ctx, "stats", "split", {dir / "train.jsonl", dir / "test.jsonl"});

    std::string input_hash = combined_hash(
        {content_hash(dir / "train.jsonl"), content_hash(dir / "test.jsonl")});
    std::vector<std::filesystem::path> outputs{ctx.project / "artifacts" / "stats" / "stats.txt",
                                               ctx.project / "artifacts" / "stats" / "stats.json"};
    if (stage_guard(ctx, "stats", input_hash, outputs, log)) return;

    bench::Dataset dataset;
    for (const auto& f : {dir / "train.jsonl", dir / "test.jsonl"}) {
        auto part = genpipe::samples_from_jsonl(read_file(f), f.string());
        dataset.samples.insert(dataset.samples.end(), part.begin(), part.end());
    }
    auto report = bench::compute_stats(dataset);
    write_file(outputs[0], report.to_table());
    write_file(outputs[1], report.to_json().dump(2) + "\n");
    log << "[stats]\n" << report.to_table();
    stage_done(ctx, "stats", input_hash, outputs,
               json{{"samples", report.samples}, {"instructions", report.instructions}});
}

}  // namespace

int run_pipeline(const ProjectConfig& config, const std::vector<std::string>& stages,
                 const std::filesystem::path& project_dir, std::ostream& log) {
    for (const auto& stage : stages)
        if (std::find(kAllStages.begin(), kAllStages.end(), stage) == kAllStages.end()) {
            log << "unknown stage: " << stage << '\n';
            return 2;
        }

    std::string current = "lock";
    try {
        ProjectLock lock(project_dir);
        StageContext ctx{config, project_dir, json::object(),
                         project_dir / "manifest.json"};
        if (std::filesystem::exists(ctx.manifest_path))
            ctx.manifest = json::parse(read_file(ctx.manifest_path));
        if (!ctx.manifest.contains("stages")) ctx.manifest["stages"] = json::object();
        ctx.manifest["seed"] = config.seed;

        for (const auto& stage : kAllStages) {
            if (std::find(stages.begin(), stages.end(), stage) == stages.end()) continue;
            current = stage;
            if (stage == "parse") run_parse(ctx, log);
            else if (stage == "segment") run_segment(ctx, log);
            else if (stage == "generate") run_generate(ctx, log);
            else if (stage == "filter") run_filter(ctx, log);
            else if (stage == "split") run_split(ctx, log);
            else if (stage == "stats") run_stats(ctx, log);
        }
    } catch (const std::exception& e) {
        log << "stage '" << current << "' failed: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace roleforge::pipeline
