#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "test_support.hpp"

using namespace mavqa;

namespace {

TEST(RenderTemplate, SubstitutesPlaceholders) {
    auto out = render_template("Q: {{question}} / N: {{n}}", {{"question", "why?"}, {"n", "3"}});
    EXPECT_EQ(out, "Q: why? / N: 3");
}

TEST(RenderTemplate, MissingValueIsConfigError) {
    EXPECT_THROW(render_template("{{question}}", {}), ConfigError);
    EXPECT_THROW(render_template("{{oops", {}), ConfigError);
}

TEST(RenderTemplate, RepeatedPlaceholder) {
    auto out = render_template("{{x}}-{{x}}", {{"x", "a"}});
    EXPECT_EQ(out, "a-a");
}

TEST(PromptLibrary, BuiltinCoversEveryPipelineTemplate) {
    auto lib = PromptLibrary::builtin();
    for (const char* name : {"dag_experts", "reask_experts", "tool_select", "reask_tool", "expert_answer",
                             "reask_answer", "organizer_default", "organizer_concise", "organizer_tool_offer",
                             "organizer_tool_result", "reask_organizer", "single_agent",
                             "analyzer_single_best", "analyzer_per_choice", "reask_verdict",
                             "fallback_assistant"}) {
        EXPECT_TRUE(lib.has(name)) << name;
        EXPECT_FALSE(lib.get(name).empty()) << name;
    }
    EXPECT_THROW(lib.get("nonexistent"), ConfigError);
}

TEST(PromptLibrary, ConciseVariantCarriesTheConcisionInstruction) {
    auto lib = PromptLibrary::builtin();
    EXPECT_NE(lib.get("organizer_concise").find("shorter, more concise response"), std::string::npos);
    EXPECT_EQ(lib.get("organizer_default").find("shorter, more concise response"), std::string::npos);
}

TEST(PromptLibrary, DirOverride) {
    testsupport::TempDir dir("prompts");
    {
        std::ofstream out(dir.path() / "expert_answer.txt");
        out << "custom {{question}} {{options}} {{tool}} {{tool_payload}}";
    }
    auto lib = PromptLibrary::builtin();
    lib.load_dir(dir.str());
    EXPECT_EQ(lib.get("expert_answer").rfind("custom ", 0), 0u);
    EXPECT_NE(lib.get("dag_experts").rfind("custom", 0), 0u) << "untouched templates keep defaults";
    EXPECT_THROW(lib.load_dir((dir.path() / "missing").string()), ConfigError);
}

// The repo ships the templates as versioned text assets; they must stay in
// sync with the compiled-in defaults.
TEST(PromptAssets, MatchBuiltinDefaults) {
    namespace fs = std::filesystem;
    fs::path assets = fs::path(MAVQA_ASSETS_DIR) / "prompts";
    ASSERT_TRUE(fs::is_directory(assets)) << assets;

    auto lib = PromptLibrary::builtin();
    size_t files = 0;
    for (const auto& entry : fs::directory_iterator(assets)) {
        if (entry.path().extension() != ".txt") continue;
        ++files;
        std::ifstream in(entry.path());
        std::ostringstream os;
        os << in.rdbuf();
        std::string name = entry.path().stem().string();
        ASSERT_TRUE(lib.has(name)) << "asset without builtin: " << name;
        EXPECT_EQ(os.str(), lib.get(name)) << "asset drifted from builtin: " << name;
    }
    EXPECT_EQ(files, lib.all().size()) << "every builtin template must ship as an asset";
}

TEST(FormatOptions, NumbersAllFive) {
    auto q = testsupport::make_question(2);
    auto text = format_options(q);
    EXPECT_NE(text.find("0. activity 2-0"), std::string::npos);
    EXPECT_NE(text.find("4. activity 2-4"), std::string::npos);
}

} // namespace
