#include "roleforge/prompts.hpp"

#include <array>
#include <cstdlib>

#include <nlohmann/json.hpp>

using json = nlohmann::ordered_json;

namespace roleforge::prompts {

std::string_view to_string(Speaker s) {
    switch (s) {
        case Speaker::system: return "system";
        case Speaker::user: return "user";
        case Speaker::assistant: return "assistant";
    }
    return "user";
}

std::string_view to_string(PromptMode m) {
    switch (m) {
        case PromptMode::zsp: return "zsp";
        case PromptMode::fsp: return "fsp";
        case PromptMode::fsd: return "fsd";
        case PromptMode::context: return "context";
        case PromptMode::judge: return "judge";
    }
    return "zsp";
}

PromptMode prompt_mode_from_string(std::string_view s) {
    if (s == "zsp") return PromptMode::zsp;
    if (s == "fsp") return PromptMode::fsp;
    if (s == "fsd") return PromptMode::fsd;
    if (s == "context") return PromptMode::context;
    if (s == "judge") return PromptMode::judge;
    throw ModeMismatch("unknown prompt mode: " + std::string(s));
}

namespace {

constexpr std::array<const char*, 8> kPerLanguage = {
    "rolegpt_system", "user_turn",        "fsp_user",        "context_agnostic",
    "context_script_system", "context_script_user", "judge_system", "judge_user"};

constexpr std::array<const char*, 5> kLanguageless = {
    "role_list", "role_reselect", "description_step1", "description_step2", "catchphrase"};

std::string load_template_file(const std::filesystem::path& path) {
    std::string text = read_file(path);
    // The file's trailing newline is a file terminator, not template text.
    if (!text.empty() && text.back() == '\n') text.pop_back();
    return text;
}

using Vars = std::vector<std::pair<std::string_view, std::string_view>>;

}  // namespace

std::filesystem::path TemplateCatalog::default_dir() {
    if (const char* env = std::getenv("ROLEFORGE_TEMPLATES")) return env;
#ifdef ROLEFORGE_TEMPLATE_DIR
    return ROLEFORGE_TEMPLATE_DIR;
#else
    return "templates";
#endif
}

TemplateCatalog::TemplateCatalog(const std::filesystem::path& dir) {
    for (const char* name : kPerLanguage) {
        for (Language lang : {Language::en, Language::zh}) {
            auto path = dir / std::string(to_string(lang)) / (std::string(name) + ".txt");
            texts_[std::string(to_string(lang)) + "/" + name] = load_template_file(path);
        }
    }
    for (const char* name : kLanguageless)
        texts_[std::string("en/") + name] = load_template_file(dir / "en" / (std::string(name) + ".txt"));
}

const TemplateCatalog& TemplateCatalog::instance() {
    static TemplateCatalog catalog(default_dir());
    return catalog;
}

const std::string& TemplateCatalog::get(Language lang, std::string_view name) const {
    auto it = texts_.find(std::string(to_string(lang)) + "/" + std::string(name));
    if (it == texts_.end())
        throw IoError("unknown template: " + std::string(name));
    return it->second;
}

const std::string& TemplateCatalog::get(std::string_view name) const {
    return get(Language::en, name);
}

std::string description_and_catchphrases(const corpus::RoleProfile& profile) {
    std::string out = profile.description;
    if (!profile.catchphrases.empty()) {
        std::string joined;
        for (size_t i = 0; i < profile.catchphrases.size(); ++i) {
            if (i > 0) joined += " / ";
            joined += profile.language == Language::en ? "\"" + profile.catchphrases[i] + "\""
                                                       : "“" + profile.catchphrases[i] + "”";
        }
        out += profile.language == Language::en ? " Your catchphrase is: " + joined
                                                : "你的口头禅是：" + joined;
    }
    // the surrounding templates supply the sentence-ending period
    if (!out.empty() && out.back() == '.') out.pop_back();
    else if (out.size() >= 3 && out.substr(out.size() - 3) == "。") out.resize(out.size() - 3);
    return out;
}

std::string render_system_instruction(const corpus::RoleProfile& profile,
                                      bool with_task_instruction,
                                      const TemplateCatalog& catalog) {
    std::string desc = description_and_catchphrases(profile);
    Vars vars = {{"role_name", profile.role_name},
                 {"role_description_and_catchphrases", desc}};
    std::string out = substitute(catalog.get(profile.language, "rolegpt_system"), vars);
    if (with_task_instruction) {
        out += profile.language == Language::en ? " Please speak like " + profile.role_name + "."
                                                : "请像" + profile.role_name + "一样说话。";
    }
    return out;
}

namespace {

std::string render_user_turn(const corpus::RoleProfile& profile, const std::string& instruction,
                             const std::string& user_name, const TemplateCatalog& catalog) {
    Vars vars = {{"user_name", user_name}, {"user_instruction", instruction}};
    return substitute(catalog.get(profile.language, "user_turn"), vars);
}

}  // namespace

PromptBundle render_rolegpt(const corpus::RoleProfile& profile,
                            const std::string& instruction,
                            PromptMode mode,
                            std::span<const QaPair> demos,
                            const std::string& user_name,
                            const TemplateCatalog& catalog) {
    if (mode != PromptMode::zsp && mode != PromptMode::fsp && mode != PromptMode::fsd)
        throw ModeMismatch("render_rolegpt expects zsp, fsp, or fsd");
    if (mode == PromptMode::zsp && !demos.empty())
        throw ModeMismatch("zsp takes no demonstrations");

    PromptBundle bundle;
    bundle.mode = mode;
    bundle.role_name = profile.role_name;
    bundle.language = profile.language;
    bundle.messages.push_back({Speaker::system, render_system_instruction(profile, false, catalog)});

    if (mode == PromptMode::zsp) {
        bundle.messages.push_back(
            {Speaker::user, render_user_turn(profile, instruction, user_name, catalog)});
    } else if (mode == PromptMode::fsp) {
        std::string demo_block;
        for (size_t i = 0; i < demos.size(); ++i) {
            if (i > 0) demo_block += '\n';
            demo_block += demos[i].question + "\n" + demos[i].answer;
        }
        Vars vars = {{"few_shot_demonstrations", demo_block},
                     {"role_name", profile.role_name},
                     {"user_name", user_name},
                     {"user_instruction", instruction}};
        bundle.messages.push_back(
            {Speaker::user, substitute(catalog.get(profile.language, "fsp_user"), vars)});
    } else {
        for (const auto& demo : demos) {
            bundle.messages.push_back({Speaker::user, demo.question});
            bundle.messages.push_back({Speaker::assistant, demo.answer});
        }
        bundle.messages.push_back(
            {Speaker::user, render_user_turn(profile, instruction, user_name, catalog)});
    }
    return bundle;
}

PromptBundle render_context_instruct(const corpus::RoleProfile& profile,
                                     const seg::Segment& segment,
                                     int question_num,
                                     const TemplateCatalog& catalog) {
    std::string desc = description_and_catchphrases(profile);
    std::string num = std::to_string(question_num);

    PromptBundle bundle;
    bundle.mode = PromptMode::context;
    bundle.role_name = profile.role_name;
    bundle.language = profile.language;

    Vars vars = {{"role_name", profile.role_name},
                 {"script_name", profile.source_script},
                 {"question_num", num},
                 {"role_description_and_catchphrases", desc},
                 {"script", segment.text}};

    if (segment.kind == seg::SegmentKind::description) {
        bundle.messages.push_back(
            {Speaker::system, substitute(catalog.get(profile.language, "context_agnostic"), vars)});
    } else {
        bundle.messages.push_back(
            {Speaker::system,
             substitute(catalog.get(profile.language, "context_script_system"), vars)});
        bundle.messages.push_back(
            {Speaker::user, substitute(catalog.get(profile.language, "context_script_user"), vars)});
    }
    return bundle;
}

MarkupRender render_markup(const std::string& system_instruction,
                           const std::string& user_input,
                           const std::string& response,
                           std::string_view dialect,
                           std::span<const QaPair> demos) {
    MarkupRender render;
    if (dialect == "alpaca_en" || dialect == "glm_zh") {
        if (!demos.empty())
            throw ModeMismatch(std::string(dialect) + " markup takes no demonstrations");
        // glm_zh mirrors the alpaca structure with translated field labels;
        // the label choice is a repo convention.
        const bool zh = dialect == "glm_zh";
        const std::string instruction_label = zh ? "### 指令:" : "### Instruction:";
        const std::string input_label = zh ? "### 输入:" : "### Input:";
        const std::string response_label = zh ? "### 回复:" : "### Response:";
        render.text = instruction_label + "\n" + system_instruction + "</s>\n\n" + input_label +
                      "\n" + user_input + "</s>\n\n" + response_label + "\n";
        size_t start = render.text.size();
        render.text += response + "</s>";
        render.supervised_spans.push_back({start, render.text.size()});
        return render;
    }
    if (dialect == "chatml") {
        auto block = [&](std::string_view role, const std::string& text) {
            render.text += "<|im_start|>";
            render.text += role;
            render.text += "\n";
            render.text += text;
            render.text += "<|im_end|>";
        };
        block("system", system_instruction);
        render.text += "\n";
        for (const auto& demo : demos) {
            block("user", demo.question);
            render.text += "\n";
            block("assistant", demo.answer);
            render.text += "\n";
        }
        block("user", user_input);
        render.text += "\n<|im_start|>assistant\n";
        size_t start = render.text.size();
        render.text += response + "<|im_end|>";
        render.supervised_spans.push_back({start, render.text.size()});
        return render;
    }
    throw UnknownDialect("unknown markup dialect: " + std::string(dialect));
}

PromptBundle render_judge_prompt(const corpus::RoleProfile& profile,
                                 const std::string& question,
                                 std::span<const std::pair<std::string, std::string>> answers,
                                 Language language,
                                 const TemplateCatalog& catalog) {
    if (answers.size() < 2)
        throw TooFewAnswers("ranking needs at least 2 answers, got " +
                            std::to_string(answers.size()));
    json question_dict = {{"question", question}};
    json answer_list = json::array();
    for (const auto& [model, text] : answers)
        answer_list.push_back(json{{"model", model}, {"answer", text}});

    std::string qd = question_dict.dump();
    std::string ad = answer_list.dump();
    std::string desc = description_and_catchphrases(profile);
    Vars vars = {{"role_name", profile.role_name},
                 {"role_description_and_catchphrases", desc},
                 {"question_dict", qd},
                 {"list_model_answer_dict", ad}};

    PromptBundle bundle;
    bundle.mode = PromptMode::judge;
    bundle.role_name = profile.role_name;
    bundle.language = language;
    bundle.messages.push_back({Speaker::system, catalog.get(language, "judge_system")});
    bundle.messages.push_back({Speaker::user, substitute(catalog.get(language, "judge_user"), vars)});
    return bundle;
}

std::string render_role_list_prompt(std::span<const std::string> script_names,
                                    const TemplateCatalog& catalog) {
    std::string out = catalog.get("role_list");
    out += "\n";
    for (const auto& name : script_names) out += "\n" + name;
    return out;
}

std::string render_role_reselect_prompt(
    std::span<const std::pair<std::string, std::string>> script_role_pairs,
    const TemplateCatalog& catalog) {
    std::string out = catalog.get("role_reselect");
    out += "\n";
    for (const auto& [script, role] : script_role_pairs) out += "\n" + script + " | " + role;
    return out;
}

std::pair<std::string, std::string> render_description_prompts(const std::string& role_name,
                                                               const TemplateCatalog& catalog) {
    std::string step1 = catalog.get("description_step1");
    step1 += "\n\n" + role_name;
    return {step1, catalog.get("description_step2")};
}

std::string render_catchphrase_prompt(const std::string& role_name,
                                      const TemplateCatalog& catalog) {
    std::string out = catalog.get("catchphrase");
    out += "\n\nWhat's " + role_name + "'s catchphrase?";
    return out;
}

std::string bundle_to_chatml(const PromptBundle& bundle) {
    std::string out;
    for (const auto& m : bundle.messages) {
        if (!out.empty()) out += '\n';
        out += "<|im_start|>";
        out += to_string(m.speaker);
        out += '\n';
        out += m.text;
        out += "<|im_end|>";
    }
    return out;
}

std::string bundle_to_json(const PromptBundle& bundle) {
    json doc;
    doc["mode"] = std::string(to_string(bundle.mode));
    doc["role_name"] = bundle.role_name;
    doc["language"] = std::string(to_string(bundle.language));
    doc["messages"] = json::array();
    for (const auto& m : bundle.messages)
        doc["messages"].push_back(json{{"speaker", std::string(to_string(m.speaker))},
                                       {"text", m.text}});
    return doc.dump(2);
}

}  // namespace roleforge::prompts
