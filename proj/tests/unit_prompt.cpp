#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "causalbench/prompt.hpp"

using namespace causalbench;
namespace fs = std::filesystem;

namespace {

std::string golden_path(const std::string& name) {
    return std::string(CB_GOLDEN_DIR) + "/" + name;
}

std::size_t count_occurrences(const std::string& haystack, const std::string& needle) {
    std::size_t n = 0;
    std::size_t pos = 0;
    while ((pos = haystack.find(needle, pos)) != std::string::npos) {
        ++n;
        pos += needle.size();
    }
    return n;
}

GeneContextBundle rich_bundle() {
    GeneContextBundle b;
    b.descriptions["ATR"] = "Replication stress kinase.";
    b.descriptions["CD47"] = "Macrophage checkpoint receptor.";
    b.passages[{"ATR", "CD47"}] = {"ATR loss raised CD47 levels.",
                                   "CD47 blockade with ATR inhibition cleared tumors."};
    return b;
}

}  // namespace

TEST_CASE("variant matrix enumerates 105 distinct combinations in order") {
    const auto variants = variant_matrix();
    REQUIRE(variants.size() == 105);
    std::set<std::string> names;
    for (const auto& v : variants) names.insert(to_string(v));
    REQUIRE(names.size() == 105);

    // Canonical order: experimental-major, then gene context, then
    // chain-of-thought; 15 entries per experimental block.
    REQUIRE(to_string(variants[0]) == "naive/none/none");
    REQUIRE(to_string(variants[1]) == "naive/none/simple");
    REQUIRE(to_string(variants[3]) == "naive/gene_desc/none");
    REQUIRE(to_string(variants[15]) == "cancer/none/none");
    REQUIRE(to_string(variants[104]) == "cancer_mrna_experiment/literature_suppl/guided");

    for (const auto& v : variants) {
        REQUIRE(parse_variant(to_string(v)) == v);  // name round trip
    }
    REQUIRE_THROWS_AS(parse_variant("naive/none"), ConfigError);
    REQUIRE_THROWS_AS(parse_variant("bogus/none/none"), ConfigError);
    REQUIRE_THROWS_AS(parse_variant("naive/bogus/none"), ConfigError);
    REQUIRE_THROWS_AS(parse_variant("naive/none/bogus"), ConfigError);
}

TEST_CASE("completion budgets depend only on the reasoning mode") {
    REQUIRE(max_new_tokens_for(CotMode::none) == 10);
    REQUIRE(max_new_tokens_for(CotMode::simple) == 200);
    REQUIRE(max_new_tokens_for(CotMode::guided) == 500);
}

TEST_CASE("bare prompt matches the golden file byte for byte") {
    const auto rendered = render_prompt("ATR", "CD47", parse_variant("naive/none/none"), {});
    std::string golden = detail::read_file(golden_path("naive_atr_cd47.txt"));
    REQUIRE(!golden.empty());
    REQUIRE(golden.back() == '\n');
    golden.pop_back();  // stored with one trailing newline
    REQUIRE(rendered.text == golden);
    REQUIRE(rendered.max_new_tokens == 10);
    REQUIRE(rendered.system_text.empty());
    REQUIRE(rendered.user_text == rendered.text);
}

TEST_CASE("all 105 variants render distinct and fully substituted prompts") {
    const auto bundle = rich_bundle();
    std::set<std::string> texts;
    for (const auto& v : variant_matrix()) {
        const auto r = render_prompt("ATR", "CD47", v, bundle);
        REQUIRE(r.text.find("{{") == std::string::npos);
        REQUIRE(r.text.find("}}") == std::string::npos);
        REQUIRE(r.text.find("ATR") != std::string::npos);
        REQUIRE(r.text.find("CD47") != std::string::npos);
        REQUIRE(r.max_new_tokens == max_new_tokens_for(v.cot));
        texts.insert(r.text);
    }
    REQUIRE(texts.size() == 105);
}

TEST_CASE("reasoning modes change the cue and the worked example") {
    const auto bundle = rich_bundle();
    const auto none = render_prompt("ATR", "CD47", parse_variant("naive/none/none"), bundle);
    const auto simple = render_prompt("ATR", "CD47", parse_variant("naive/none/simple"), bundle);
    const auto guided = render_prompt("ATR", "CD47", parse_variant("naive/none/guided"), bundle);

    REQUIRE(none.text.rfind("Probability =") == none.text.size() - 13);
    REQUIRE(simple.text.rfind("Reason =") == simple.text.size() - 8);
    REQUIRE(guided.text.rfind("Evidence") != std::string::npos);

    // The worked example names the placeholder pair, the query the real one.
    REQUIRE(none.text.find("[Gene A]") != std::string::npos);
    REQUIRE(simple.text.find("[Gene A]") != std::string::npos);
}

TEST_CASE("experimental contexts add their framing text") {
    const auto naive = render_prompt("ATR", "CD47", parse_variant("naive/none/none"), {});
    const auto cancer = render_prompt("ATR", "CD47", parse_variant("cancer/none/none"), {});
    const auto perturb =
        render_prompt("ATR", "CD47", parse_variant("cancer_mrna_experiment/none/none"), {});

    REQUIRE(naive.text.find("CML") == std::string::npos);
    REQUIRE(cancer.text.find("in human CML (Chronic myelogenous leukemia)") != std::string::npos);
    REQUIRE(perturb.text.find("Perturb-seq") != std::string::npos);
    REQUIRE(perturb.text.size() > naive.text.size());
}

TEST_CASE("gene description variants use the bundle or a placeholder") {
    const auto bundle = rich_bundle();
    const auto with = render_prompt("ATR", "CD47", parse_variant("naive/gene_desc/none"), bundle);
    REQUIRE(with.text.find("Replication stress kinase.") != std::string::npos);
    REQUIRE(with.text.find("Macrophage checkpoint receptor.") != std::string::npos);

    const auto without = render_prompt("ATR", "CD47", parse_variant("naive/gene_desc/none"), {});
    REQUIRE(without.text.find(std::string(GeneContextBundle::missing_description)) !=
            std::string::npos);
}

TEST_CASE("literature passages are injected, or a fallback when absent") {
    const auto bundle = rich_bundle();
    const auto with = render_prompt("ATR", "CD47", parse_variant("naive/literature/none"), bundle);
    REQUIRE(with.text.find("ATR loss raised CD47 levels.") != std::string::npos);
    REQUIRE(with.text.find("CD47 blockade with ATR inhibition cleared tumors.") !=
            std::string::npos);

    const auto without = render_prompt("ATR", "CD47", parse_variant("naive/literature/none"), {});
    const auto& fallback = TemplateSet::builtin().fragment("literature_fallback");
    const auto expected = detail_prompt::render_template(
        fallback, {{"gene_a", std::string("ATR")}, {"gene_b", std::string("CD47")}});
    REQUIRE(without.text.find(expected) != std::string::npos);
}

TEST_CASE("passage lookup is symmetric in the pair order") {
    GeneContextBundle bundle;
    bundle.passages[{"CD47", "ATR"}] = {"stored under the reversed key"};
    const auto r = render_prompt("ATR", "CD47", parse_variant("naive/literature/none"), bundle);
    REQUIRE(r.text.find("stored under the reversed key") != std::string::npos);
}

TEST_CASE("passages beyond the cap are dropped") {
    GeneContextBundle bundle;
    auto& list = bundle.passages[{"ATR", "CD47"}];
    for (int i = 0; i < 150; ++i) list.push_back("PASSAGE_MARK " + std::to_string(i) + ".");
    const auto r = render_prompt("ATR", "CD47", parse_variant("naive/literature/none"), bundle);
    REQUIRE(count_occurrences(r.text, "PASSAGE_MARK ") == 100);
    REQUIRE(r.text.find("PASSAGE_MARK 0.") != std::string::npos);   // first kept
    REQUIRE(r.text.find("PASSAGE_MARK 99.") != std::string::npos);  // last kept
    REQUIRE(r.text.find("PASSAGE_MARK 100.") == std::string::npos); // first dropped

    bundle.max_passages = 3;
    const auto tight = render_prompt("ATR", "CD47", parse_variant("naive/literature/none"), bundle);
    REQUIRE(count_occurrences(tight.text, "PASSAGE_MARK ") == 3);
}

TEST_CASE("persona can move into a system message without changing the text") {
    RenderOptions options;
    options.persona_as_system = true;
    const auto split = render_prompt("ATR", "CD47", parse_variant("naive/none/none"), {},
                                     TemplateSet::builtin(), options);
    const auto joined = render_prompt("ATR", "CD47", parse_variant("naive/none/none"), {});

    REQUIRE(split.text == joined.text);  // full text is the canonical form
    REQUIRE(split.system_text == TemplateSet::builtin().fragment("persona"));
    REQUIRE(split.user_text == split.text.substr(split.system_text.size() + 1));
    REQUIRE(split.system_text + " " + split.user_text == split.text);
}

TEST_CASE("a template directory overrides single fragments") {
    const auto dir = fs::temp_directory_path() / "causalbench_unit_prompt_templates";
    fs::create_directories(dir);
    detail::write_file((dir / "persona.txt").string(), "You are a terse oracle.\n");

    const auto templates = TemplateSet::load_directory(dir);
    REQUIRE(templates.fragment("persona") == "You are a terse oracle.");
    REQUIRE(templates.fragment("base") == TemplateSet::builtin().fragment("base"));
    REQUIRE(templates.version() == TemplateSet::builtin().version());

    const auto r = render_prompt("ATR", "CD47", parse_variant("naive/none/none"), {}, templates);
    REQUIRE(r.text.find("You are a terse oracle.") == 0);
    REQUIRE_THROWS_AS(TemplateSet::load_directory(dir / "missing"), ConfigError);
}

TEST_CASE("invalid pairs are rejected") {
    REQUIRE_THROWS_AS(render_prompt("ATR", "ATR", parse_variant("naive/none/none"), {}), DataError);
    REQUIRE_THROWS_AS(render_prompt("", "CD47", parse_variant("naive/none/none"), {}), DataError);
    REQUIRE_THROWS_AS(render_prompt("ATR", "", parse_variant("naive/none/none"), {}), DataError);
}

TEST_CASE("template engine reports slot problems") {
    REQUIRE(detail_prompt::render_template("a {{x}} b", {{"x", std::string("1")}}) == "a 1 b");
    REQUIRE_THROWS_AS(detail_prompt::render_template("a {{x}} b", {}), ConfigError);
    REQUIRE_THROWS_AS(detail_prompt::render_template("a {{x b", {}), ConfigError);
    // Inserted content is never re-scanned for markers.
    REQUIRE(detail_prompt::render_template("v: {{x}}", {{"x", std::string("{{y}}")}}) ==
            "v: {{y}}");
}

TEST_CASE("template set is versioned") {
    REQUIRE(TemplateSet::builtin().version() == "1");
}
