#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "roleforge/common.hpp"
#include "roleforge/corpus.hpp"
#include "roleforge/segmenter.hpp"

namespace roleforge::prompts {

enum class Speaker { system, user, assistant };
std::string_view to_string(Speaker s);

struct Message {
    Speaker speaker = Speaker::user;
    std::string text;
};

enum class PromptMode { zsp, fsp, fsd, context, judge };
std::string_view to_string(PromptMode m);
PromptMode prompt_mode_from_string(std::string_view s);

struct PromptBundle {
    std::vector<Message> messages;
    PromptMode mode = PromptMode::zsp;
    std::string role_name;
    Language language = Language::en;
};

struct QaPair {
    std::string question;
    std::string answer;
};

/// Loads the prompt template files once. Lookup order for the directory:
/// explicit path, ROLEFORGE_TEMPLATES env var, compiled-in default.
class TemplateCatalog {
public:
    explicit TemplateCatalog(const std::filesystem::path& dir);
    static const TemplateCatalog& instance();
    static std::filesystem::path default_dir();

    /// Template text with the trailing newline of the file stripped.
    const std::string& get(Language lang, std::string_view name) const;
    const std::string& get(std::string_view name) const;  // language-less (en set)

private:
    std::map<std::string, std::string> texts_;
};

/// Joint description + catchphrase string substituted into every template
/// that takes {role_description_and_catchphrases}.
std::string description_and_catchphrases(const corpus::RoleProfile& profile);

/// System instruction for role prompting. When with_task_instruction is
/// set (open-model markup), the "Please speak like ..." task sentence is
/// appended.
std::string render_system_instruction(const corpus::RoleProfile& profile,
                                      bool with_task_instruction = false,
                                      const TemplateCatalog& catalog = TemplateCatalog::instance());

PromptBundle render_rolegpt(const corpus::RoleProfile& profile,
                            const std::string& instruction,
                            PromptMode mode,
                            std::span<const QaPair> demos = {},
                            const std::string& user_name = "User",
                            const TemplateCatalog& catalog = TemplateCatalog::instance());

PromptBundle render_context_instruct(const corpus::RoleProfile& profile,
                                     const seg::Segment& segment,
                                     int question_num,
                                     const TemplateCatalog& catalog = TemplateCatalog::instance());

struct MarkupRender {
    std::string text;
    std::vector<std::pair<size_t, size_t>> supervised_spans;  // byte ranges [start, end)
};

/// Training-string rendering. alpaca_en and glm_zh take no demos; chatml
/// interleaves them as user/assistant turns. Supervised spans cover exactly
/// the response plus its terminator token.
MarkupRender render_markup(const std::string& system_instruction,
                           const std::string& user_input,
                           const std::string& response,
                           std::string_view dialect,
                           std::span<const QaPair> demos = {});

PromptBundle render_judge_prompt(const corpus::RoleProfile& profile,
                                 const std::string& question,
                                 std::span<const std::pair<std::string, std::string>> answers,
                                 Language language,
                                 const TemplateCatalog& catalog = TemplateCatalog::instance());

/// Role selection, description, and catchphrase prompts. The instruction
/// block is the template verbatim; the subjects follow after a blank line.
std::string render_role_list_prompt(std::span<const std::string> script_names,
                                    const TemplateCatalog& catalog = TemplateCatalog::instance());
std::string render_role_reselect_prompt(
    std::span<const std::pair<std::string, std::string>> script_role_pairs,
    const TemplateCatalog& catalog = TemplateCatalog::instance());
std::pair<std::string, std::string> render_description_prompts(
    const std::string& role_name, const TemplateCatalog& catalog = TemplateCatalog::instance());
std::string render_catchphrase_prompt(const std::string& role_name,
                                      const TemplateCatalog& catalog = TemplateCatalog::instance());

std::string bundle_to_json(const PromptBundle& bundle);

/// Flattens a bundle into <|im_start|>role ... <|im_end|> blocks, one per
/// message, newline separated.
std::string bundle_to_chatml(const PromptBundle& bundle);

}  // namespace roleforge::prompts
