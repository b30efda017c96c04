#pragma once

// Externally sourced knowledge: gene descriptions, STRING association
// scores, literature evidence bookkeeping, and the enrichment tests that
// compare literature coverage against ground-truth causality.
//
// literature_contingency counts ordered gene pairs (i, j), i != j, split by
// "is j a descendant of i in the truth graph" and "does the pair have any
// literature passages (in either orientation)". Evidence presence is
// symmetric, causality is not, so each unordered pair contributes two
// ordered observations.
//
// fisher_one_sided is the exact one-sided test on that 2x2 table:
// the hypergeometric upper tail for the causal-and-covered cell given the
// margins, i.e. the probability of literature coverage this concentrated on
// causal pairs (or more) under independence.
//
// boschloo_one_sided removes Fisher's conditioning on the causal margin.
// The coverage margins n1 (uncovered) and n2 (covered) are treated as two
// binomial samples with common unknown success rate pi (success = causal);
// the statistic is the Fisher tail above, and the p value is the supremum
// over a pi grid of the probability of drawing a table with a statistic at
// least as extreme:
//
//   p = sup_pi sum over (y1, y2) with fisher(y1, y2) <= fisher(x1, x2) of
//              Bin(y1; n1, pi) * Bin(y2; n2, pi)
//
// The enumeration walks the lattice by total successes s = y1 + y2. For
// fixed y2 the Fisher tail grows with y1, so the acceptance region is a
// prefix y1 <= M(y2); the grid sum then needs only binomial pmf/cdf lookups
// per pi. The grid uses midpoints (2k+1)/(2*grid_points), which avoids the
// degenerate endpoints 0 and 1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "causalbench/core.hpp"
#include "causalbench/detail/numeric.hpp"
#include "causalbench/detail/text.hpp"
#include "causalbench/errors.hpp"
#include "causalbench/prompt.hpp"

namespace causalbench {

enum class RelationType {
    associate,
    interact,
    positive_correlate,
    negative_correlate,
};

inline constexpr std::array<RelationType, 4> all_relation_types = {
    RelationType::associate,
    RelationType::interact,
    RelationType::positive_correlate,
    RelationType::negative_correlate,
};

inline std::string_view to_string(RelationType r) {
    switch (r) {
        case RelationType::associate: return "associate";
        case RelationType::interact: return "interact";
        case RelationType::positive_correlate: return "positive_correlate";
        case RelationType::negative_correlate: return "negative_correlate";
    }
    throw InternalError("unknown relation type");
}

inline RelationType parse_relation_type(std::string_view name) {
    for (const auto r : all_relation_types) {
        if (to_string(r) == name) return r;
    }
    throw ConfigError("unknown relation type '" + std::string(name) + "'");
}

struct Passage {
    std::string text;
    std::string article_id;

    bool operator==(const Passage&) const = default;
};

struct LiteratureEvidence {
    std::string gene_a;
    std::string gene_b;
    RelationType relation = RelationType::associate;
    std::vector<Passage> passages;
};

// ---------------------------------------------------------------------------
// Gene descriptions

struct GeneDescriptions {
    std::map<std::string, std::string> by_symbol;
    std::vector<std::string> warnings;  // duplicate symbols (last entry wins)

    std::vector<std::string> missing_from(const GenePanel& panel) const {
        std::vector<std::string> missing;
        for (const auto& s : panel.symbols()) {
            if (by_symbol.find(s) == by_symbol.end()) missing.push_back(s);
        }
        return missing;
    }
};

// Two-column TSV: symbol <TAB> description. '#' lines are comments.
inline GeneDescriptions load_gene_descriptions(const std::string& path) {
    GeneDescriptions out;
    const auto lines = detail::split_lines(detail::read_file(path));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string_view line = lines[i];
        if (detail::trim(line).empty() || detail::trim(line).front() == '#') continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string_view::npos) {
            throw SchemaError(path + ":" + std::to_string(i + 1) +
                              ": expected symbol<TAB>description");
        }
        const std::string symbol(detail::trim(line.substr(0, tab)));
        const std::string description(detail::trim(line.substr(tab + 1)));
        if (symbol.empty() || description.empty()) {
            throw SchemaError(path + ":" + std::to_string(i + 1) + ": empty symbol or description");
        }
        if (!out.by_symbol.emplace(symbol, description).second) {
            out.warnings.push_back("duplicate description for " + symbol + " at " + path + ":" +
                                   std::to_string(i + 1) + "; keeping the later entry");
            out.by_symbol[symbol] = description;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// STRING association scores

struct StringScores {
    GenePanel panel;
    std::vector<double> scores;            // d x d, symmetric, 0 diagonal
    std::vector<std::string> unmapped;     // panel symbols without a STRING id

    double at(std::size_t i, std::size_t j) const { return scores.at(i * panel.size() + j); }
};

// links: whitespace-separated "protein1 protein2 combined_score" with a
// header line; aliases: "string_id<TAB>alias<TAB>source". A symbol may map
// to several STRING ids; the pair score is the maximum over id combinations.
inline StringScores load_string_scores(const std::string& links_path, const std::string& aliases_path,
                                       const GenePanel& panel) {
    std::unordered_map<std::string, std::vector<std::size_t>> id_to_genes;
    {
        const auto lines = detail::split_lines(detail::read_file(aliases_path));
        for (std::size_t i = 0; i < lines.size(); ++i) {
            const std::string_view line = lines[i];
            if (detail::trim(line).empty() || detail::trim(line).front() == '#') continue;
            const auto fields = detail::split(line, '\t');
            if (fields.size() < 2) {
                throw SchemaError(aliases_path + ":" + std::to_string(i + 1) +
                                  ": expected string_id<TAB>alias[<TAB>source]");
            }
            const std::string id(detail::trim(fields[0]));
            const std::string alias(detail::trim(fields[1]));
            const auto gene = panel.find(alias);
            if (!gene) continue;
            auto& genes = id_to_genes[id];
            if (std::find(genes.begin(), genes.end(), *gene) == genes.end()) genes.push_back(*gene);
        }
    }

    std::vector<bool> mapped(panel.size(), false);
    for (const auto& [id, genes] : id_to_genes) {
        for (const std::size_t g : genes) mapped[g] = true;
    }

    StringScores out;
    out.panel = panel;
    out.scores.assign(panel.size() * panel.size(), 0.0);
    for (std::size_t g = 0; g < panel.size(); ++g) {
        if (!mapped[g]) out.unmapped.push_back(panel.symbol(g));
    }

    const auto lines = detail::split_lines(detail::read_file(links_path));
    for (std::size_t i = 1; i < lines.size(); ++i) {  // line 0 is the header
        const std::string_view line = detail::trim(lines[i]);
        if (line.empty()) continue;
        std::istringstream fields{std::string(line)};
        std::string p1, p2, score_text;
        if (!(fields >> p1 >> p2 >> score_text)) {
            throw SchemaError(links_path + ":" + std::to_string(i + 1) +
                              ": expected protein1 protein2 combined_score");
        }
        const auto score = detail::parse_double(score_text);
        if (!score || *score < 0.0) {
            throw SchemaError(links_path + ":" + std::to_string(i + 1) + ": bad combined_score '" +
                              score_text + "'");
        }
        const auto a = id_to_genes.find(p1);
        const auto b = id_to_genes.find(p2);
        if (a == id_to_genes.end() || b == id_to_genes.end()) continue;
        for (const std::size_t ga : a->second) {
            for (const std::size_t gb : b->second) {
                if (ga == gb) continue;
                const std::size_t ij = ga * panel.size() + gb;
                const std::size_t ji = gb * panel.size() + ga;
                out.scores[ij] = std::max(out.scores[ij], *score);
                out.scores[ji] = std::max(out.scores[ji], *score);
            }
        }
    }
    return out;
}

// STRING combined scores live on 0..1000; rescale so they can be evaluated
// like predicted probabilities.
inline ProbabilityMatrix string_probability_matrix(const StringScores& s) {
    const std::size_t d = s.panel.size();
    ProbabilityMatrix p(d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            if (i != j) p.set(i, j, std::min(1.0, s.at(i, j) / 1000.0));
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// Literature coverage vs ground truth

struct ContingencyTable2x2 {
    // Rows: causal (truth edge present) or not; columns: literature
    // coverage present or not.
    std::uint64_t no_causal_no_lit = 0;
    std::uint64_t no_causal_lit = 0;
    std::uint64_t causal_no_lit = 0;
    std::uint64_t causal_lit = 0;

    std::uint64_t total() const {
        return no_causal_no_lit + no_causal_lit + causal_no_lit + causal_lit;
    }
};

inline ContingencyTable2x2 literature_contingency(
    const CausalGraph& truth, const GenePanel& panel,
    const std::map<std::pair<std::string, std::string>, std::size_t>& passage_counts) {
    if (truth.node_count() != panel.size()) {
        throw ShapeError("literature_contingency: graph and panel sizes differ");
    }
    const auto covered = [&](const std::string& a, const std::string& b) {
        const auto ab = passage_counts.find({a, b});
        if (ab != passage_counts.end() && ab->second > 0) return true;
        const auto ba = passage_counts.find({b, a});
        return ba != passage_counts.end() && ba->second > 0;
    };
    ContingencyTable2x2 t;
    for (std::size_t i = 0; i < panel.size(); ++i) {
        for (std::size_t j = 0; j < panel.size(); ++j) {
            if (i == j) continue;
            const bool causal = truth.edge(i, j);
            const bool lit = covered(panel.symbol(i), panel.symbol(j));
            if (causal) {
                (lit ? t.causal_lit : t.causal_no_lit) += 1;
            } else {
                (lit ? t.no_causal_lit : t.no_causal_no_lit) += 1;
            }
        }
    }
    return t;
}

namespace detail_knowledge {

struct LogChooseTable {
    std::vector<double> value;  // value[k] = log C(n, k)
    explicit LogChooseTable(std::uint64_t n) : value(n + 1) {
        for (std::uint64_t k = 0; k <= n; ++k) value[k] = detail::log_choose(n, k);
    }
};

// Hypergeometric upper tail P(X >= x2) where X counts successes among the
// n2 draws, with s successes total in a population of n1 + n2. Computed by
// suffix accumulation from the top of the support so repeated calls
// reproduce identical floats.
inline double fisher_upper_tail(std::uint64_t x2, std::uint64_t s, const LogChooseTable& lc1,
                                const LogChooseTable& lc2, const LogChooseTable& lcN,
                                std::uint64_t n1, std::uint64_t n2) {
    const std::uint64_t lo = s > n1 ? s - n1 : 0;
    const std::uint64_t hi = std::min(s, n2);
    if (x2 < lo) x2 = lo;
    if (x2 > hi) return 0.0;
    double tail = 0.0;
    for (std::uint64_t k = hi + 1; k-- > x2;) {
        tail += std::exp(lc2.value[k] + lc1.value[s - k] - lcN.value[s]);
    }
    return tail;
}

}  // namespace detail_knowledge

// One-sided exact conditional test: probability that literature coverage is
// at least as concentrated on causal pairs as observed, given all margins.
inline double fisher_one_sided(const ContingencyTable2x2& t) {
    const std::uint64_t n1 = t.no_causal_no_lit + t.causal_no_lit;  // uncovered column
    const std::uint64_t n2 = t.no_causal_lit + t.causal_lit;        // covered column
    const std::uint64_t s = t.causal_no_lit + t.causal_lit;         // causal row
    if (n1 == 0 || n2 == 0 || s == 0 || s == t.total()) return 1.0;
    const detail_knowledge::LogChooseTable lc1(n1), lc2(n2), lcN(n1 + n2);
    return std::min(1.0, detail_knowledge::fisher_upper_tail(t.causal_lit, s, lc1, lc2, lcN, n1, n2));
}

// One-sided exact unconditional test with the Fisher tail as statistic; see
// the header comment for the construction.
inline double boschloo_one_sided(const ContingencyTable2x2& t, std::size_t grid_points = 1000) {
    if (grid_points == 0) throw ConfigError("boschloo_one_sided requires a non-empty grid");
    const std::uint64_t n1 = t.no_causal_no_lit + t.causal_no_lit;
    const std::uint64_t n2 = t.no_causal_lit + t.causal_lit;
    if (n1 == 0 || n2 == 0) return 1.0;
    const std::uint64_t x1 = t.causal_no_lit;
    const std::uint64_t x2 = t.causal_lit;
    const std::uint64_t N = n1 + n2;

    const detail_knowledge::LogChooseTable lc1(n1), lc2(n2), lcN(N);
    const double p_observed =
        detail_knowledge::fisher_upper_tail(x2, x1 + x2, lc1, lc2, lcN, n1, n2);
    // Relative slack keeps lattice points whose statistic ties the observed
    // one but lands on the far side of a rounding step.
    const double threshold = p_observed * (1.0 + 1e-13);

    // M[y2] = largest y1 with (y1, y2) accepted, or -1. Scanning totals s
    // upward overwrites M[y2] with ever larger y1 = s - y2, which is exactly
    // the prefix boundary.
    std::vector<std::int64_t> M(n2 + 1, -1);
    for (std::uint64_t s = 0; s <= N; ++s) {
        const std::uint64_t lo = s > n1 ? s - n1 : 0;
        const std::uint64_t hi = std::min(s, n2);
        // Find the smallest y2 whose upper tail still fits under the
        // threshold; the tail grows as y2 decreases, so scan from the top.
        double tail = 0.0;
        std::uint64_t first_accepted = hi + 1;
        for (std::uint64_t y2 = hi + 1; y2-- > lo;) {
            tail += std::exp(lc2.value[y2] + lc1.value[s - y2] - lcN.value[s]);
            if (tail <= threshold) {
                first_accepted = y2;
            } else {
                break;
            }
        }
        for (std::uint64_t y2 = first_accepted; y2 <= hi; ++y2) {
            M[y2] = static_cast<std::int64_t>(s - y2);
        }
    }

    double sup = 0.0;
    std::vector<double> pmf2(n2 + 1);
    std::vector<double> cdf1(n1 + 1);
    for (std::size_t g = 0; g < grid_points; ++g) {
        const double pi = (2.0 * static_cast<double>(g) + 1.0) / (2.0 * static_cast<double>(grid_points));
        const double log_pi = std::log(pi);
        const double log_qi = std::log1p(-pi);
        double acc = 0.0;
        for (std::uint64_t k = 0; k <= n1; ++k) {
            acc += std::exp(lc1.value[k] + static_cast<double>(k) * log_pi +
                            static_cast<double>(n1 - k) * log_qi);
            cdf1[k] = acc;
        }
        for (std::uint64_t k = 0; k <= n2; ++k) {
            pmf2[k] = std::exp(lc2.value[k] + static_cast<double>(k) * log_pi +
                               static_cast<double>(n2 - k) * log_qi);
        }
        double mass = 0.0;
        for (std::uint64_t y2 = 0; y2 <= n2; ++y2) {
            if (M[y2] >= 0) mass += pmf2[y2] * cdf1[static_cast<std::uint64_t>(M[y2])];
        }
        sup = std::max(sup, mass);
    }
    return std::min(1.0, sup);
}

// ---------------------------------------------------------------------------
// Evidence cache (offline literature store)

// Append-only JSONL keyed by (gene_a, gene_b, relation). Duplicate keys keep
// the latest line.
class EvidenceCache {
  public:
    explicit EvidenceCache(std::filesystem::path path) : path_(std::move(path)) {
        if (!std::filesystem::exists(path_)) return;
        std::ifstream in(path_);
        if (!in) throw DataError("cannot open evidence cache: " + path_.string());
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (detail::trim(line).empty()) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                LiteratureEvidence ev;
                ev.gene_a = j.at("gene_a").get<std::string>();
                ev.gene_b = j.at("gene_b").get<std::string>();
                ev.relation = parse_relation_type(j.at("relation").get<std::string>());
                for (const auto& p : j.at("passages")) {
                    ev.passages.push_back(
                        {p.at("text").get<std::string>(), p.value("article_id", std::string{})});
                }
                by_key_[key(ev.gene_a, ev.gene_b, ev.relation)] = std::move(ev);
            } catch (const std::exception& e) {
                throw CacheIntegrityError(path_.string() + ":" + std::to_string(line_no) +
                                          ": corrupt evidence line: " + e.what());
            }
        }
    }

    std::optional<LiteratureEvidence> find(const std::string& a, const std::string& b,
                                           RelationType relation) const {
        const auto it = by_key_.find(key(a, b, relation));
        if (it == by_key_.end()) return std::nullopt;
        return it->second;
    }

    void append(const LiteratureEvidence& ev) {
        if (!out_.is_open()) {
            if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
            out_.open(path_, std::ios::app);
            if (!out_) throw DataError("cannot append to evidence cache: " + path_.string());
        }
        nlohmann::json passages = nlohmann::json::array();
        for (const auto& p : ev.passages) {
            passages.push_back({{"text", p.text}, {"article_id", p.article_id}});
        }
        const nlohmann::json j = {{"gene_a", ev.gene_a},
                                  {"gene_b", ev.gene_b},
                                  {"relation", std::string(to_string(ev.relation))},
                                  {"passages", passages}};
        out_ << j.dump() << '\n';
        out_.flush();
        if (!out_) throw DataError("short write to evidence cache: " + path_.string());
        by_key_[key(ev.gene_a, ev.gene_b, ev.relation)] = ev;
    }

    std::size_t size() const noexcept { return by_key_.size(); }

  private:
    static std::string key(const std::string& a, const std::string& b, RelationType r) {
        return a + '\x1f' + b + '\x1f' + std::string(to_string(r));
    }

    std::filesystem::path path_;
    std::unordered_map<std::string, LiteratureEvidence> by_key_;
    std::ofstream out_;
};

// Collates per-relation evidence into the passage lists used by prompt
// rendering: relation types in enum order, passages in retrieval order,
// exact duplicate texts dropped.
inline GeneContextBundle bundle_from_evidence(const std::vector<LiteratureEvidence>& evidence,
                                              GeneDescriptions descriptions = {}) {
    GeneContextBundle bundle;
    bundle.descriptions = std::move(descriptions.by_symbol);
    std::map<std::pair<std::string, std::string>, std::set<std::string>> seen;
    for (const auto relation : all_relation_types) {
        for (const auto& ev : evidence) {
            if (ev.relation != relation) continue;
            const std::pair<std::string, std::string> pair{ev.gene_a, ev.gene_b};
            auto& texts = bundle.passages[pair];
            auto& dedupe = seen[pair];
            for (const auto& p : ev.passages) {
                if (dedupe.insert(p.text).second) texts.push_back(p.text);
            }
        }
    }
    return bundle;
}

}  // namespace causalbench
