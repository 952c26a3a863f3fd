#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "roleforge/prompts.hpp"
#include "roleforge/segmenter.hpp"
#include "test_support.hpp"

using namespace roleforge;
using namespace roleforge::prompts;

namespace {

const corpus::RoleProfile& twilight() {
    static corpus::RoleProfile profile = testsupport::make_twilight_profile();
    return profile;
}

const corpus::RoleProfile& wukong() {
    static corpus::RoleProfile profile = testsupport::make_wukong_profile();
    return profile;
}

std::vector<QaPair> twilight_demos() {
    return {{"Spike, have you seen my quill?",
             "It is right next to the inkwell, Spike. Organization matters."},
            {"Are you ready for the festival tonight?",
             "I have a checklist of my checklists. Of course I am ready!"}};
}

const std::string kInstructionEn =
    "Determine the length of the item in the given list: [apple, banana, cherry].";
const std::string kInstructionZh = "请计算4和5的乘积。";

seg::Segment script_segment_en() {
    seg::Segment s;
    s.role_name = "Twilight Sparkle";
    s.kind = seg::SegmentKind::script;
    s.index = 1;
    s.text =
        "Spike: Twilight, have you seen my quill?\n"
        "Twilight Sparkle: It is right next to the inkwell, Spike. Organization matters.\n"
        "Applejack: Sugarcube, you should rest once in a while.\n"
        "Twilight Sparkle: Rest is scheduled for Tuesday. Today we study the stars.";
    s.turn_count = 4;
    s.word_count = 40;
    return s;
}

seg::Segment description_segment(const corpus::RoleProfile& profile) {
    seg::Segment s;
    s.role_name = profile.role_name;
    s.kind = seg::SegmentKind::description;
    s.index = 0;
    s.text = profile.description;
    return s;
}

void golden_bundle(const std::string& name, const PromptBundle& bundle) {
    INFO("golden file: ", name);
    CHECK(testsupport::check_golden(name, bundle_to_chatml(bundle)));
}

}  // namespace

TEST_CASE("system instruction renders against the stored golden bytes") {
    INFO("golden file: system_instruction_en.txt");
    CHECK(testsupport::check_golden("system_instruction_en.txt",
                                    render_system_instruction(twilight())));
    INFO("golden file: system_instruction_zh.txt");
    CHECK(testsupport::check_golden("system_instruction_zh.txt",
                                    render_system_instruction(wukong())));
    INFO("golden file: system_instruction_task_en.txt");
    CHECK(testsupport::check_golden("system_instruction_task_en.txt",
                                    render_system_instruction(twilight(), true)));
}

TEST_CASE("system instruction with no catchphrases renders the description only") {
    auto profile = twilight();
    profile.catchphrases.clear();
    auto text = render_system_instruction(profile);
    CHECK(text.find("catchphrase") == std::string::npos);
    CHECK(text.find("above all else. Now please answer") != std::string::npos);
    CHECK(text.find("..") == std::string::npos);
}

TEST_CASE("zsp, fsp, and fsd render against golden files, both languages") {
    golden_bundle("rolegpt_zsp_en.txt",
                  render_rolegpt(twilight(), kInstructionEn, PromptMode::zsp));
    golden_bundle("rolegpt_fsp_en.txt",
                  render_rolegpt(twilight(), kInstructionEn, PromptMode::fsp, twilight_demos()));
    golden_bundle("rolegpt_fsd_en.txt",
                  render_rolegpt(twilight(), kInstructionEn, PromptMode::fsd, twilight_demos()));

    std::vector<QaPair> zh_demos = {{"悟空，前方的山势为何如此险峻？",
                                     "师父莫怕，待俺老孙前去探路，妖怪来了也不怕！"}};
    golden_bundle("rolegpt_zsp_zh.txt", render_rolegpt(wukong(), kInstructionZh, PromptMode::zsp));
    golden_bundle("rolegpt_fsp_zh.txt",
                  render_rolegpt(wukong(), kInstructionZh, PromptMode::fsp, zh_demos));
    golden_bundle("rolegpt_fsd_zh.txt",
                  render_rolegpt(wukong(), kInstructionZh, PromptMode::fsd, zh_demos));
}

TEST_CASE("fsd message shape: 2*demos + 2, alternating, ends with user") {
    auto demos = twilight_demos();
    std::vector<QaPair> five(5, demos[0]);
    auto bundle = render_rolegpt(twilight(), kInstructionEn, PromptMode::fsd, five);
    CHECK(bundle.messages.size() == 12);  // system + 10 demo turns + final user
    CHECK(bundle.messages.front().speaker == Speaker::system);
    for (size_t i = 1; i + 1 < bundle.messages.size(); i += 2) {
        CHECK(bundle.messages[i].speaker == Speaker::user);
        CHECK(bundle.messages[i + 1].speaker == Speaker::assistant);
    }
    CHECK(bundle.messages.back().speaker == Speaker::user);

    auto zero = render_rolegpt(twilight(), kInstructionEn, PromptMode::fsd, {});
    auto zsp = render_rolegpt(twilight(), kInstructionEn, PromptMode::zsp);
    REQUIRE(zero.messages.size() == 2);
    CHECK(zero.messages[0].text == zsp.messages[0].text);
    CHECK(zero.messages[1].text == zsp.messages[1].text);
}

TEST_CASE("zsp with demonstrations is a mode mismatch") {
    CHECK_THROWS_AS(render_rolegpt(twilight(), kInstructionEn, PromptMode::zsp, twilight_demos()),
                    ModeMismatch);
}

TEST_CASE("context-instruct prompts render against golden files") {
    golden_bundle("context_agnostic_en.txt",
                  render_context_instruct(twilight(), description_segment(twilight()), 10));
    golden_bundle("context_script_en.txt",
                  render_context_instruct(twilight(), script_segment_en(), 3));
    golden_bundle("context_agnostic_zh.txt",
                  render_context_instruct(wukong(), description_segment(wukong()), 10));

    seg::Segment zh_script;
    zh_script.role_name = "孙悟空";
    zh_script.kind = seg::SegmentKind::script;
    zh_script.index = 1;
    zh_script.text =
        "唐僧: 悟空，前方的山势为何如此险峻？\n"
        "孙悟空: 师父莫怕，待俺老孙前去探路，妖怪来了也不怕！";
    golden_bundle("context_script_zh.txt", render_context_instruct(wukong(), zh_script, 3));
}

TEST_CASE("script segment text appears verbatim in the user prompt") {
    auto segment = script_segment_en();
    auto bundle = render_context_instruct(twilight(), segment, 3);
    REQUIRE(bundle.messages.size() == 2);
    CHECK(bundle.messages[1].text.find(segment.text) != std::string::npos);
    CHECK(bundle.messages[1].text.find("[Script Content]") != std::string::npos);
}

TEST_CASE("question_num substitutes as a bare count") {
    auto one = render_context_instruct(twilight(), description_segment(twilight()), 1);
    auto ten = render_context_instruct(twilight(), description_segment(twilight()), 10);
    CHECK(one.messages[0].text.find("design 1 questions") != std::string::npos);
    // aside from the two count sites, the texts agree
    std::string a = one.messages[0].text, b = ten.messages[0].text;
    size_t pos;
    while ((pos = a.find("design 1 ")) != std::string::npos) a.replace(pos, 9, "design N ");
    while ((pos = a.find("Design (1 ")) != std::string::npos) a.replace(pos, 10, "Design (N ");
    while ((pos = b.find("design 10 ")) != std::string::npos) b.replace(pos, 10, "design N ");
    while ((pos = b.find("Design (10 ")) != std::string::npos) b.replace(pos, 11, "Design (N ");
    CHECK(a == b);
}

TEST_CASE("markup renders: alpaca, glm, chatml, with exact supervised spans") {
    const std::string sys = "You are Twilight Sparkle, a studious pony.";
    const std::string user = "How many books have you read?";
    const std::string resp = "All of them. Twice.";

    auto alpaca = render_markup(sys, user, resp, "alpaca_en");
    INFO("golden file: markup_alpaca.txt");
    CHECK(testsupport::check_golden("markup_alpaca.txt", alpaca.text));
    CHECK(alpaca.text ==
          "### Instruction:\n" + sys + "</s>\n\n### Input:\n" + user + "</s>\n\n### Response:\n" +
              resp + "</s>");
    REQUIRE(alpaca.supervised_spans.size() == 1);
    auto [start, end] = alpaca.supervised_spans[0];
    CHECK(alpaca.text.substr(start, end - start) == resp + "</s>");

    auto glm = render_markup("你是孙悟空。", "你读过多少书？", "俺老孙读过的书可不少。",
                             "glm_zh");
    INFO("golden file: markup_glm.txt");
    CHECK(testsupport::check_golden("markup_glm.txt", glm.text));
    auto [gs, ge] = glm.supervised_spans[0];
    CHECK(glm.text.substr(gs, ge - gs) == std::string("俺老孙读过的书可不少。") + "</s>");

    std::vector<QaPair> demo = {{"Spike, have you seen my quill?",
                                 "It is right next to the inkwell, Spike. Organization matters."}};
    auto chatml = render_markup(sys, user, resp, "chatml", demo);
    INFO("golden file: markup_chatml.txt");
    CHECK(testsupport::check_golden("markup_chatml.txt", chatml.text));
    auto [cs, ce] = chatml.supervised_spans[0];
    CHECK(chatml.text.substr(cs, ce - cs) == resp + "<|im_end|>");

    CHECK_THROWS_AS(render_markup(sys, user, resp, "vicuna"), UnknownDialect);
}

TEST_CASE("empty response: supervised span covers only the terminator") {
    auto render = render_markup("sys", "user", "", "alpaca_en");
    auto [start, end] = render.supervised_spans[0];
    CHECK(render.text.substr(start, end - start) == "</s>");
}

TEST_CASE("judge prompt renders against golden files, en and zh") {
    std::vector<std::pair<std::string, std::string>> answers_en = {
        {"model_a", "I am Twilight Sparkle, and friendship is the greatest magic of all."},
        {"model_b", "The list contains three items."}};
    golden_bundle("judge_en.txt",
                  render_judge_prompt(twilight(), kInstructionEn, answers_en, Language::en));

    std::vector<std::pair<std::string, std::string>> answers_zh = {
        {"model_a", "俺老孙掐指一算，4乘5便是20！"},
        {"model_b", "结果是20。"},
        {"model_c", "二十。"}};
    golden_bundle("judge_zh.txt",
                  render_judge_prompt(wukong(), kInstructionZh, answers_zh, Language::zh));
}

TEST_CASE("judge prompt needs at least two answers") {
    std::vector<std::pair<std::string, std::string>> one = {{"m", "text"}};
    CHECK_THROWS_AS(render_judge_prompt(twilight(), kInstructionEn, one, Language::en),
                    TooFewAnswers);
}

TEST_CASE("judge prompt keeps the caller's presentation order") {
    std::vector<std::pair<std::string, std::string>> ab = {{"alpha", "first answer"},
                                                           {"beta", "second answer"}};
    std::vector<std::pair<std::string, std::string>> ba = {{"beta", "second answer"},
                                                           {"alpha", "first answer"}};
    auto b1 = render_judge_prompt(twilight(), kInstructionEn, ab, Language::en);
    auto b2 = render_judge_prompt(twilight(), kInstructionEn, ba, Language::en);
    CHECK(b1.messages[1].text != b2.messages[1].text);
    CHECK(b1.messages[1].text.find("\"model\":\"alpha\"") <
          b1.messages[1].text.find("\"model\":\"beta\""));
}

TEST_CASE("selection, description, and catchphrase prompts match goldens") {
    std::vector<std::string> scripts = {"Sherlock-Holmes"};
    INFO("golden file: selection_list.txt");
    CHECK(testsupport::check_golden("selection_list.txt", render_role_list_prompt(scripts)));

    std::vector<std::pair<std::string, std::string>> pairs = {
        {"Sherlock-Holmes", "Sherlock Holmes"}};
    INFO("golden file: selection_reselect.txt");
    CHECK(testsupport::check_golden("selection_reselect.txt", render_role_reselect_prompt(pairs)));

    auto [step1, step2] = render_description_prompts("Twilight Sparkle");
    INFO("golden file: description_step1.txt");
    CHECK(testsupport::check_golden("description_step1.txt", step1));
    INFO("golden file: description_step2.txt");
    CHECK(testsupport::check_golden("description_step2.txt", step2));

    INFO("golden file: catchphrase.txt");
    CHECK(testsupport::check_golden("catchphrase.txt",
                                    render_catchphrase_prompt("Twilight Sparkle")));
}

TEST_CASE("substitution is literal: braces in content pass through") {
    auto profile = twilight();
    profile.description = "A pony who says {role_name} out loud.";
    auto text = render_system_instruction(profile);
    CHECK(text.find("says {role_name} out loud") != std::string::npos);
    // the template's own placeholder was still substituted
    CHECK(text.rfind("You are Twilight Sparkle, your description is:", 0) == 0);
}
