#pragma once

// Prompt variants and deterministic rendering.
//
// A variant is the triple (experimental context, gene context, chain-of-
// thought mode): 7 x 5 x 3 = 105 combinations. Rendering is pure text
// assembly from template fragments; fragment files use {{slot}} markers,
// substituted in a single pass so inserted content (gene descriptions,
// literature passages) is never re-scanned for markers.
//
// Fragment sources: the set compiled into the library from assets/prompts/,
// or any directory of *.txt files with the same names (one fragment per
// file, one trailing newline stripped).

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "causalbench/detail/text.hpp"
#include "causalbench/errors.hpp"
#include "causalbench/prompt_assets.hpp"

namespace causalbench {

enum class ExperimentalContext {
    naive,
    cancer,
    mrna,
    cancer_mrna,
    evidence,
    cancer_mrna_evidence,
    cancer_mrna_experiment,
};

enum class GeneContext {
    none,
    gene_desc,
    gene_desc_suppl,
    literature,
    literature_suppl,
};

enum class CotMode {
    none,
    simple,
    guided,
};

inline constexpr std::array<ExperimentalContext, 7> all_experimental_contexts = {
    ExperimentalContext::naive,
    ExperimentalContext::cancer,
    ExperimentalContext::mrna,
    ExperimentalContext::cancer_mrna,
    ExperimentalContext::evidence,
    ExperimentalContext::cancer_mrna_evidence,
    ExperimentalContext::cancer_mrna_experiment,
};

inline constexpr std::array<GeneContext, 5> all_gene_contexts = {
    GeneContext::none,
    GeneContext::gene_desc,
    GeneContext::gene_desc_suppl,
    GeneContext::literature,
    GeneContext::literature_suppl,
};

inline constexpr std::array<CotMode, 3> all_cot_modes = {
    CotMode::none,
    CotMode::simple,
    CotMode::guided,
};

inline std::string_view to_string(ExperimentalContext c) {
    switch (c) {
        case ExperimentalContext::naive: return "naive";
        case ExperimentalContext::cancer: return "cancer";
        case ExperimentalContext::mrna: return "mrna";
        case ExperimentalContext::cancer_mrna: return "cancer_mrna";
        case ExperimentalContext::evidence: return "evidence";
        case ExperimentalContext::cancer_mrna_evidence: return "cancer_mrna_evidence";
        case ExperimentalContext::cancer_mrna_experiment: return "cancer_mrna_experiment";
    }
    throw InternalError("unknown experimental context");
}

inline std::string_view to_string(GeneContext c) {
    switch (c) {
        case GeneContext::none: return "none";
        case GeneContext::gene_desc: return "gene_desc";
        case GeneContext::gene_desc_suppl: return "gene_desc_suppl";
        case GeneContext::literature: return "literature";
        case GeneContext::literature_suppl: return "literature_suppl";
    }
    throw InternalError("unknown gene context");
}

inline std::string_view to_string(CotMode c) {
    switch (c) {
        case CotMode::none: return "none";
        case CotMode::simple: return "simple";
        case CotMode::guided: return "guided";
    }
    throw InternalError("unknown chain-of-thought mode");
}

// Completion budget per chain-of-thought mode.
inline constexpr int max_new_tokens_for(CotMode cot) {
    switch (cot) {
        case CotMode::none: return 10;
        case CotMode::simple: return 200;
        case CotMode::guided: return 500;
    }
    return 10;
}

struct PromptVariant {
    ExperimentalContext experimental = ExperimentalContext::naive;
    GeneContext gene = GeneContext::none;
    CotMode cot = CotMode::none;

    auto operator<=>(const PromptVariant&) const = default;
};

// "experimental/gene/cot", e.g. "cancer_mrna/literature/simple".
inline std::string to_string(const PromptVariant& v) {
    std::string out;
    out += to_string(v.experimental);
    out += '/';
    out += to_string(v.gene);
    out += '/';
    out += to_string(v.cot);
    return out;
}

inline PromptVariant parse_variant(std::string_view name) {
    const auto parts = detail::split(name, '/');
    if (parts.size() != 3) {
        throw ConfigError("variant must be experimental/gene/cot, got '" + std::string(name) + "'");
    }
    PromptVariant v;
    bool found = false;
    for (const auto c : all_experimental_contexts) {
        if (to_string(c) == parts[0]) {
            v.experimental = c;
            found = true;
        }
    }
    if (!found) throw ConfigError("unknown experimental context '" + parts[0] + "'");
    found = false;
    for (const auto c : all_gene_contexts) {
        if (to_string(c) == parts[1]) {
            v.gene = c;
            found = true;
        }
    }
    if (!found) throw ConfigError("unknown gene context '" + parts[1] + "'");
    found = false;
    for (const auto c : all_cot_modes) {
        if (to_string(c) == parts[2]) {
            v.cot = c;
            found = true;
        }
    }
    if (!found) throw ConfigError("unknown chain-of-thought mode '" + parts[2] + "'");
    return v;
}

// All 105 variants in canonical order: experimental-major, then gene
// context, then chain-of-thought mode.
inline std::vector<PromptVariant> variant_matrix() {
    std::vector<PromptVariant> out;
    out.reserve(105);
    for (const auto e : all_experimental_contexts) {
        for (const auto g : all_gene_contexts) {
            for (const auto c : all_cot_modes) {
                out.push_back({e, g, c});
            }
        }
    }
    return out;
}

class TemplateSet {
  public:
    static const TemplateSet& builtin() {
        static const TemplateSet instance = [] {
            TemplateSet t;
            for (const auto& asset : detail::k_prompt_assets) {
                t.fragments_[std::string(asset.name)] = strip_one_newline(std::string(asset.content));
            }
            return t;
        }();
        return instance;
    }

    static TemplateSet load_directory(const std::filesystem::path& dir) {
        TemplateSet t;
        if (!std::filesystem::is_directory(dir)) {
            throw ConfigError("template directory not found: " + dir.string());
        }
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
            t.fragments_[entry.path().stem().string()] =
                strip_one_newline(detail::read_file(entry.path().string()));
        }
        // Anything missing falls back to the compiled-in fragment, so a
        // directory override can replace a single file.
        for (const auto& [name, content] : builtin().fragments_) {
            t.fragments_.emplace(name, content);
        }
        return t;
    }

    const std::string& fragment(const std::string& name) const {
        const auto it = fragments_.find(name);
        if (it == fragments_.end()) {
            std::string known;
            for (const auto& [n, _] : fragments_) {
                if (!known.empty()) known += ", ";
                known += n;
            }
            throw ConfigError("unknown template fragment '" + name + "' (known: " + known + ")");
        }
        return it->second;
    }

    const std::string& version() const { return fragment("version"); }

  private:
    static std::string strip_one_newline(std::string s) {
        if (!s.empty() && s.back() == '\n') s.pop_back();
        if (!s.empty() && s.back() == '\r') s.pop_back();
        return s;
    }

    std::map<std::string, std::string> fragments_;
};

// Gene descriptions and literature passages available for rendering.
// Passages are stored per ordered pair; both orderings of a pair share
// whichever entry exists (lookup tries (a, b) then (b, a)).
struct GeneContextBundle {
    std::map<std::string, std::string> descriptions;
    std::map<std::pair<std::string, std::string>, std::vector<std::string>> passages;
    // Passages beyond this count are dropped at render time.
    std::size_t max_passages = 100;

    static constexpr std::string_view missing_description = "No description available.";

    std::vector<std::string> passages_for(const std::string& a, const std::string& b) const {
        auto it = passages.find({a, b});
        if (it == passages.end()) it = passages.find({b, a});
        if (it == passages.end()) return {};
        const auto& found = it->second;
        const std::size_t take = std::min(found.size(), max_passages);
        return {found.begin(), found.begin() + static_cast<std::ptrdiff_t>(take)};
    }

    std::string description_for(const std::string& symbol) const {
        const auto it = descriptions.find(symbol);
        if (it == descriptions.end()) return std::string(missing_description);
        return it->second;
    }
};

struct RenderOptions {
    // Move the persona sentences into a separate system message instead of
    // leading the user message.
    bool persona_as_system = false;
};

struct RenderedPrompt {
    std::string gene_a;           // candidate cause
    std::string gene_b;           // candidate effect
    PromptVariant variant;
    std::string text;             // complete prompt as one block
    std::string system_text;      // empty unless persona_as_system
    std::string user_text;        // text minus the system part
    int max_new_tokens = 10;
};

namespace detail_prompt {

inline std::string render_template(std::string_view tpl,
                                   const std::map<std::string, std::string>& slots) {
    std::string out;
    out.reserve(tpl.size());
    std::size_t pos = 0;
    while (pos < tpl.size()) {
        const std::size_t open = tpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(tpl.substr(pos));
            break;
        }
        out.append(tpl.substr(pos, open - pos));
        const std::size_t close = tpl.find("}}", open + 2);
        if (close == std::string_view::npos) {
            throw ConfigError("unterminated {{slot}} in template fragment");
        }
        const std::string name(tpl.substr(open + 2, close - open - 2));
        const auto it = slots.find(name);
        if (it == slots.end()) throw ConfigError("template references unknown slot '" + name + "'");
        out.append(it->second);
        pos = close + 2;
    }
    return out;
}

inline std::string clause_for(ExperimentalContext e, const TemplateSet& t) {
    switch (e) {
        case ExperimentalContext::naive:
        case ExperimentalContext::evidence:
            return {};
        case ExperimentalContext::cancer: return " " + t.fragment("clause_cancer");
        case ExperimentalContext::mrna: return " " + t.fragment("clause_mrna");
        case ExperimentalContext::cancer_mrna:
        case ExperimentalContext::cancer_mrna_evidence:
            return " " + t.fragment("clause_cancer_mrna");
        case ExperimentalContext::cancer_mrna_experiment:
            return " " + t.fragment("clause_perturbseq");
    }
    throw InternalError("unknown experimental context");
}

inline std::string paragraph_for(ExperimentalContext e, const TemplateSet& t) {
    switch (e) {
        case ExperimentalContext::evidence:
        case ExperimentalContext::cancer_mrna_evidence:
            return " " + t.fragment("paragraph_evidence");
        case ExperimentalContext::cancer_mrna_experiment:
            return " " + t.fragment("paragraph_perturbseq");
        default:
            return {};
    }
}

}  // namespace detail_prompt

inline RenderedPrompt render_prompt(const std::string& gene_a, const std::string& gene_b,
                                    const PromptVariant& variant, const GeneContextBundle& bundle,
                                    const TemplateSet& templates = TemplateSet::builtin(),
                                    const RenderOptions& options = {}) {
    using detail_prompt::render_template;
    if (gene_a.empty() || gene_b.empty()) throw DataError("render_prompt requires two gene symbols");
    if (gene_a == gene_b) throw DataError("render_prompt rejects self pairs: " + gene_a);

    const std::string persona = templates.fragment("persona");
    const std::string clause = detail_prompt::clause_for(variant.experimental, templates);
    const std::string paragraph = detail_prompt::paragraph_for(variant.experimental, templates);

    // Chain-of-thought instruction, with the guided form naming the pair:
    // placeholders in the worked example, the real symbols in the query.
    std::string cot_example;
    std::string cot_query;
    if (variant.cot != CotMode::none) {
        const std::string& frag = templates.fragment(
            variant.cot == CotMode::simple ? "cot_simple" : "cot_guided");
        cot_example = " " + render_template(frag, {{"gene_a", "[Gene A]"}, {"gene_b", "[Gene B]"}});
        cot_query = " " + render_template(frag, {{"gene_a", gene_a}, {"gene_b", gene_b}});
    }

    // The worked example answer: inline for the bare mode, on its own lines
    // when reasoning is requested.
    std::string example_output;
    switch (variant.cot) {
        case CotMode::none:
            example_output = " " + templates.fragment("example_output_none");
            break;
        case CotMode::simple:
            example_output = "\n" + templates.fragment("example_output_simple");
            break;
        case CotMode::guided:
            example_output = "\n" + templates.fragment("example_output_guided");
            break;
    }

    std::string gene_block;
    switch (variant.gene) {
        case GeneContext::none:
            break;
        case GeneContext::gene_desc:
        case GeneContext::gene_desc_suppl: {
            const std::string& frag = templates.fragment(
                variant.gene == GeneContext::gene_desc ? "gene_desc" : "gene_desc_suppl");
            gene_block = render_template(frag, {{"gene_a", gene_a},
                                                {"gene_b", gene_b},
                                                {"description_a", bundle.description_for(gene_a)},
                                                {"description_b", bundle.description_for(gene_b)}}) +
                         "\n";
            break;
        }
        case GeneContext::literature:
        case GeneContext::literature_suppl: {
            const auto passages = bundle.passages_for(gene_a, gene_b);
            std::string joined;
            if (passages.empty()) {
                joined = render_template(templates.fragment("literature_fallback"),
                                         {{"gene_a", gene_a}, {"gene_b", gene_b}});
            } else {
                for (std::size_t i = 0; i < passages.size(); ++i) {
                    if (i > 0) joined += '\n';
                    joined += passages[i];
                }
            }
            const std::string& frag = templates.fragment(
                variant.gene == GeneContext::literature ? "literature" : "literature_suppl");
            gene_block = render_template(frag, {{"passages", joined}}) + "\n";
            break;
        }
    }

    std::string cue;
    switch (variant.cot) {
        case CotMode::none: cue = templates.fragment("cue_none"); break;
        case CotMode::simple: cue = templates.fragment("cue_simple"); break;
        case CotMode::guided: cue = templates.fragment("cue_guided"); break;
    }

    RenderedPrompt out;
    out.gene_a = gene_a;
    out.gene_b = gene_b;
    out.variant = variant;
    out.max_new_tokens = max_new_tokens_for(variant.cot);
    out.text = render_template(templates.fragment("base"),
                               {{"persona", persona},
                                {"experiment_paragraph", paragraph},
                                {"context_clause", clause},
                                {"cot_example_instruction", cot_example},
                                {"cot_query_instruction", cot_query},
                                {"example_output", example_output},
                                {"gene_context_block", gene_block},
                                {"gene_a", gene_a},
                                {"gene_b", gene_b},
                                {"completion_cue", cue}});
    if (options.persona_as_system && detail::starts_with(out.text, persona + " ")) {
        out.system_text = persona;
        out.user_text = out.text.substr(persona.size() + 1);
    } else {
        out.user_text = out.text;
    }
    return out;
}

}  // namespace causalbench
