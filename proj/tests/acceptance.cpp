// Acceptance gate for the benchmarking pipeline. Runs eleven fixed checks,
// prints exactly one [PASS]/[FAIL] line per criterion, and exits non-zero if
// any fail. Statistical checks use pinned seeds so the outcome is
// reproducible; oracles here are written from the definitions, independent
// of the library implementations they validate.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "causalbench/causalbench.hpp"

using namespace causalbench;

namespace {

int g_failures = 0;

struct Criterion {
    bool ok = true;
    std::string detail;

    void check(bool condition, const std::string& message) {
        if (condition) return;
        ok = false;
        append(message);
    }

    void note(const std::string& message) { append(message); }

  private:
    void append(const std::string& message) {
        if (!detail.empty()) detail += "; ";
        detail += message;
    }
};

void report(int number, const std::string& title, const Criterion& c) {
    std::printf("[%s] criterion %d: %s%s%s\n", c.ok ? "PASS" : "FAIL", number, title.c_str(),
                c.detail.empty() ? "" : " -- ", c.detail.c_str());
    std::fflush(stdout);
    if (!c.ok) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) { return detail::format_double(v); }

// ---------------------------------------------------------------------------
// Definitional oracles.

// AUROC as the average win share of positive over negative scores, ties
// counting half.
double auroc_by_pairs(const std::vector<double>& scores, const std::vector<bool>& labels) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            ++pairs;
            if (scores[i] > scores[j]) {
                wins += 1.0;
            } else if (scores[i] == scores[j]) {
                wins += 0.5;
            }
        }
    }
    return wins / static_cast<double>(pairs);
}

// Per-node depth-first reachability.
CausalGraph closure_by_dfs(const CausalGraph& g) {
    const std::size_t d = g.node_count();
    CausalGraph out(d);
    std::vector<bool> seen(d);
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < d; ++s) {
        std::fill(seen.begin(), seen.end(), false);
        stack.assign(1, s);
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t v = 0; v < d; ++v) {
                if (g.edge(u, v) && !seen[v]) {
                    seen[v] = true;
                    stack.push_back(v);
                }
            }
        }
        for (std::size_t v = 0; v < d; ++v) {
            if (seen[v] && v != s) out.set_edge(s, v);
        }
    }
    return out;
}

// Step-up false-discovery-rate adjustment straight from the definition:
// q_(k) = p_(k) * m / k, then a running minimum from the largest rank down.
std::vector<double> bh_by_definition(const std::vector<double>& p) {
    const std::size_t m = p.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return p[x] < p[y]; });
    std::vector<double> adjusted(m);
    double running = 1.0;
    for (std::size_t rank = m; rank >= 1; --rank) {
        const double q = p[order[rank - 1]] * (static_cast<double>(m) / static_cast<double>(rank));
        running = std::min(running, q);
        adjusted[order[rank - 1]] = running;
    }
    return adjusted;
}

double f1_against(const CausalGraph& predicted, const CausalGraph& truth) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.node_count(); ++i) {
        for (std::size_t j = 0; j < truth.node_count(); ++j) {
            if (i == j) continue;
            const bool p = predicted.edge(i, j);
            const bool t = truth.edge(i, j);
            if (p && t) ++tp;
            if (p && !t) ++fp;
            if (!p && t) ++fn;
        }
    }
    if (tp == 0) return 0.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

GenePanel numbered_panel(std::size_t d) {
    std::vector<std::string> symbols;
    for (std::size_t i = 0; i < d; ++i) symbols.push_back("N" + std::to_string(i + 1));
    return GenePanel(symbols);
}

// ---------------------------------------------------------------------------

void criterion_1() {
    Criterion c;
    const auto t0 = std::chrono::steady_clock::now();
    ContingencyTable2x2 t;
    t.no_causal_no_lit = 4060;
    t.no_causal_lit = 5639;
    t.causal_no_lit = 78;
    t.causal_lit = 123;
    const double p = boschloo_one_sided(t, 1000);
    const double elapsed = seconds_since(t0);
    c.check(std::abs(p - 0.2075) <= 0.002, "p=" + fmt(p) + " outside 0.2075 +/- 0.002");
    c.check(elapsed <= 600.0, "took " + fmt(elapsed) + "s (limit 600)");
    if (c.ok) c.note("p=" + fmt(p) + " in " + fmt(elapsed) + "s at 1000 grid points");
    report(1, "unconditional 2x2 test on ((4060,5639),(78,123)) reproduces 0.2075 +/- 0.002", c);
}

void criterion_2() {
    Criterion c;
    // Continuous draws with 3..8 observations per side: no ties, and both
    // sides large enough for the normal approximation to stay within the
    // tolerance (a side of 1 or 2 observations can be off by ~0.13).
    std::mt19937_64 rng(20260825);
    std::uniform_int_distribution<std::size_t> n_dist(3, 8);
    std::normal_distribution<double> base(0.0, 1.0);
    std::uniform_real_distribution<double> shift_dist(-1.5, 1.5);
    double max_gap = 0.0;
    std::size_t disagreements = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const double shift = shift_dist(rng);
        std::vector<double> a(n_dist(rng));
        std::vector<double> b(n_dist(rng));
        for (auto& v : a) v = base(rng);
        for (auto& v : b) v = base(rng) + shift;
        const double p_asym = mann_whitney_u(a, b).p_two_sided;
        const double p_exact = mann_whitney_exact(a, b);
        max_gap = std::max(max_gap, std::abs(p_asym - p_exact));
        const bool reject_asym = p_asym < 0.05;
        const bool reject_exact = p_exact < 0.05;
        if (reject_asym != reject_exact && std::abs(p_exact - 0.05) >= 0.02) ++disagreements;
    }
    c.check(max_gap <= 0.05, "max |p_asym - p_exact| = " + fmt(max_gap) + " exceeds 0.05");
    c.check(disagreements == 0,
            std::to_string(disagreements) + " rejection disagreements outside the 0.02 band");
    if (c.ok) c.note("max |p_asym - p_exact| = " + fmt(max_gap) + " over 500 pairs");
    report(2, "rank-test normal approximation tracks exact enumeration (n in 3..8, no ties)", c);
}

void criterion_3() {
    Criterion c;
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> len_dist(1, 10000);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> p(len_dist(rng));
        for (auto& v : p) v = unit(rng);
        // Duplicates and boundary values exercise the tie handling.
        if (trial % 3 == 0) {
            for (auto& v : p) v = std::floor(v * 50.0) / 50.0;
        }
        if (!p.empty()) p[0] = (trial % 2 == 0) ? 0.0 : 1.0;
        const auto mine = bh_adjust(p);
        const auto oracle = bh_by_definition(p);
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (mine[i] != oracle[i]) ++mismatches;
        }
    }
    c.check(mismatches == 0, std::to_string(mismatches) + " adjusted values differ from the oracle");
    if (c.ok) c.note("1000 vectors, lengths 1..10000, bitwise equal");
    report(3, "false-discovery-rate adjustment matches the step-up definition exactly", c);
}

void criterion_4() {
    Criterion c;
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::size_t> n_dist(2, 2000);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double max_err = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = n_dist(rng);
        std::vector<double> scores(n);
        std::vector<bool> labels(n);
        const bool tie_heavy = trial % 2 == 0;
        for (std::size_t i = 0; i < n; ++i) {
            double v = unit(rng);
            if (tie_heavy) v = std::floor(v * 10.0) / 10.0;
            scores[i] = v;
            labels[i] = unit(rng) < 0.4;
        }
        labels[0] = true;   // guarantee both classes
        labels[1] = false;
        max_err = std::max(max_err, std::abs(auroc(scores, labels) - auroc_by_pairs(scores, labels)));
    }
    c.check(max_err <= 1e-12, "max |auroc - oracle| = " + fmt(max_err) + " exceeds 1e-12");
    if (c.ok) c.note("max |auroc - oracle| = " + fmt(max_err) + " over 200 instances");
    report(4, "rank-based AUROC matches the pair-counting oracle within 1e-12", c);
}

void criterion_5() {
    Criterion c;
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> d_dist(2, 100);
    std::uniform_real_distribution<double> p_dist(0.02, 0.4);
    std::size_t oracle_mismatches = 0;
    std::size_t idempotence_failures = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto g = sample_dag(d_dist(rng), p_dist(rng), seed);
        const auto closed = transitive_closure(g);
        if (!(closed == closure_by_dfs(g))) ++oracle_mismatches;
        if (!(transitive_closure(closed) == closed)) ++idempotence_failures;
    }
    c.check(oracle_mismatches == 0,
            std::to_string(oracle_mismatches) + " graphs differ from reachability");
    c.check(idempotence_failures == 0,
            std::to_string(idempotence_failures) + " graphs are not idempotent under closure");
    if (c.ok) c.note("100 random acyclic graphs, up to 100 nodes");
    report(5, "transitive closure equals per-node reachability and is idempotent", c);
}

void criterion_6() {
    Criterion c;
    const auto t0 = std::chrono::steady_clock::now();
    double total_fraction = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto dag = sample_dag(20, 0.15, seed);
        SemParams params;
        params.knockdown_shift = 0.0;  // no interventional effect: every edge is a false discovery
        params.cells_per_condition = 300;
        params.seed = 1000 + seed;
        const auto screen = simulate_screen(dag, params);
        const auto result = build_ancestral_graph(screen, GroundTruthOptions{});
        total_fraction += static_cast<double>(result.graph.edge_count()) / 380.0;
    }
    const double mean_fraction = total_fraction / 50.0;
    const double elapsed = seconds_since(t0);
    c.check(mean_fraction <= 0.07,
            "mean discovered-edge fraction " + fmt(mean_fraction) + " exceeds 0.07");
    c.check(elapsed <= 300.0, "took " + fmt(elapsed) + "s (limit 300)");
    if (c.ok) {
        c.note("mean fraction " + fmt(mean_fraction) + " over 50 null screens in " + fmt(elapsed) +
               "s");
    }
    report(6, "null screens (zero shift, d=20, 300 cells) keep discoveries at or below 0.07", c);
}

void criterion_7() {
    Criterion c;
    double total_f1 = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto dag = sample_dag(20, 0.15, 100 + seed);
        SemParams params;
        params.knockdown_shift = 3.0 * params.noise_sd;
        params.cells_per_condition = 500;
        params.seed = 2000 + seed;
        const auto screen = simulate_screen(dag, params);
        const auto result = build_ancestral_graph(screen, GroundTruthOptions{});
        total_f1 += f1_against(result.graph, transitive_closure(dag));
    }
    const double mean_f1 = total_f1 / 10.0;
    c.check(mean_f1 >= 0.9, "mean F1 " + fmt(mean_f1) + " below 0.9");
    if (c.ok) c.note("mean F1 " + fmt(mean_f1) + " against the closed generating graph, 10 seeds");
    report(7, "screens with 3-sigma shift recover the ancestral graph at F1 >= 0.9", c);
}

void criterion_8() {
    Criterion c;
    const auto panel = numbered_panel(10);
    const auto truth = sample_dag(10, 0.3, 7);
    c.check(truth.edge_count() > 0 && truth.edge_count() < 90, "degenerate truth graph");

    EndpointConfig endpoint;
    endpoint.model_name = "acceptance-model";
    const std::vector<PromptVariant> variants{PromptVariant{}};
    const GeneContextBundle bundle;

    {
        const auto plan = build_campaign_plan(panel, variants, 1, bundle, endpoint);
        OracleMockBackend backend(truth, panel);
        const auto result = run_campaign(panel, plan, bundle, backend, nullptr, endpoint);
        const double score =
            evaluate(result.variants[0].per_repetition[0], truth, EvaluationMode::direct);
        c.check(score == 1.0, "oracle-backed AUROC is " + fmt(score) + ", not exactly 1");
    }
    {
        const auto plan = build_campaign_plan(panel, variants, 10, bundle, endpoint);
        SeededRandomMockBackend backend(42);
        const auto result = run_campaign(panel, plan, bundle, backend, nullptr, endpoint);
        std::vector<double> scores;
        for (const auto& m : result.variants[0].per_repetition) {
            scores.push_back(evaluate(m, truth, EvaluationMode::direct));
        }
        const double mean = aggregate(scores).mean;
        c.check(mean >= 0.45 && mean <= 0.55,
                "random-backend mean AUROC " + fmt(mean) + " outside [0.45, 0.55]");
        if (c.ok) c.note("random-backend mean AUROC " + fmt(mean) + " over 10 repetitions");
    }
    report(8, "mock campaigns: graph-oracle backend scores exactly 1.0, random backend ~0.5", c);
}

void criterion_9() {
    Criterion c;
    const auto variants = variant_matrix();
    std::set<std::string> names;
    for (const auto& v : variants) names.insert(to_string(v));
    c.check(variants.size() == 105 && names.size() == 105,
            "variant matrix has " + std::to_string(names.size()) + " distinct entries, want 105");

    const std::string golden = detail::read_file(std::string(CB_GOLDEN_DIR) + "/naive_atr_cd47.txt");
    const auto rendered = render_prompt("ATR", "CD47", PromptVariant{}, GeneContextBundle{});
    c.check(rendered.text + "\n" == golden, "baseline ATR/CD47 prompt differs from the golden file");

    c.check(max_new_tokens_for(CotMode::none) == 10 && max_new_tokens_for(CotMode::simple) == 200 &&
                max_new_tokens_for(CotMode::guided) == 500,
            "completion budgets are not 10/200/500");
    c.check(rendered.max_new_tokens == 10, "rendered budget is not wired to the variant");

    // No cached passages: the retrieval-fallback paragraph must appear.
    PromptVariant lit_variant;
    lit_variant.gene = GeneContext::literature;
    const auto fallback_prompt = render_prompt("ATR", "CD47", lit_variant, GeneContextBundle{});
    const std::string fallback =
        detail_prompt::render_template(TemplateSet::builtin().fragment("literature_fallback"),
                                       {{"gene_a", "ATR"}, {"gene_b", "CD47"}});
    c.check(fallback_prompt.text.find(fallback) != std::string::npos,
            "empty evidence does not render the fallback paragraph");

    // 150 available passages: exactly the first 100 survive rendering.
    GeneContextBundle big;
    auto& passages = big.passages[{"ATR", "CD47"}];
    for (int i = 0; i < 150; ++i) passages.push_back("PASSAGE_" + std::to_string(i) + "_END");
    const auto capped = render_prompt("ATR", "CD47", lit_variant, big);
    c.check(capped.text.find("PASSAGE_99_END") != std::string::npos &&
                capped.text.find("PASSAGE_100_END") == std::string::npos &&
                capped.text.find(fallback) == std::string::npos,
            "passage cap at 100 not applied");
    if (c.ok) c.note("105 distinct variants; golden render byte-identical; budgets 10/200/500");
    report(9, "prompt matrix, golden render, token budgets, fallback and passage cap", c);
}

void criterion_10() {
    Criterion c;
    const auto panel = numbered_panel(5);
    EndpointConfig endpoint;
    endpoint.model_name = "acceptance-model";
    const std::vector<PromptVariant> variants{PromptVariant{}};
    const GeneContextBundle bundle;
    const auto plan = build_campaign_plan(panel, variants, 50, bundle, endpoint);  // 20 pairs x 50
    c.check(plan.size() == 1000, "plan has " + std::to_string(plan.size()) + " entries, want 1000");

    const std::set<std::size_t> malformed{123, 456, 789};
    std::unordered_map<std::string, std::string> corpus;
    for (std::size_t idx = 0; idx < plan.size(); ++idx) {
        corpus[plan[idx].digest] = malformed.count(idx) != 0
                                       ? "The relationship between these genes is unclear."
                                       : "Probability = 0.42";
    }
    CorpusMockBackend backend(std::move(corpus));
    const auto result = run_campaign(panel, plan, bundle, backend, nullptr, endpoint);
    const auto& v = result.variants[0];
    c.check(v.completions == 1000 && v.parse_failures == 3,
            "saw " + std::to_string(v.parse_failures) + "/" + std::to_string(v.completions) +
                " failures, want 3/1000");
    char rate_buf[32];
    std::snprintf(rate_buf, sizeof(rate_buf), "%.3f%%", 100.0 * v.parse_failure_rate());
    c.check(std::string(rate_buf) == "0.300%",
            std::string("failure rate formats as ") + rate_buf + ", want 0.300%");
    for (const std::size_t idx : malformed) {
        const auto& e = plan[idx];
        c.check(v.per_repetition[e.repetition].at(e.source, e.dest) == 0.0,
                "unparsable completion did not map to probability 0");
    }
    c.check(v.per_repetition[plan[0].repetition].at(plan[0].source, plan[0].dest) == 0.42,
            "parsable completion did not keep its value");

    const auto low = parse_probability("Probability = 0.25");
    const auto high = parse_probability("Probability = 0.75");
    c.check(low.ok && low.value == 0.25 && high.ok && high.value == 0.75,
            "literal answers 0.25 / 0.75 do not parse to their stated values");
    if (c.ok) c.note("3/1000 malformed replayed completions -> 0.300%, failures pinned to 0");
    report(10, "replayed corpus: failure-rate accounting, zero-fill, literal answer parses", c);
}

void criterion_11() {
    Criterion c;
    const auto panel = numbered_panel(4);
    const auto truth = sample_dag(4, 0.4, 3);
    c.check(truth.edge_count() > 0 && truth.edge_count() < 12, "degenerate truth graph");

    EndpointConfig endpoint;
    endpoint.model_name = "acceptance-model";
    const auto variants = variant_matrix();
    const GeneContextBundle bundle;
    const auto plan = build_campaign_plan(panel, variants, 2, bundle, endpoint);

    const auto cache_path =
        std::filesystem::temp_directory_path() / "causalbench_acceptance" / "report_cache.jsonl";
    std::filesystem::create_directories(cache_path.parent_path());
    std::filesystem::remove(cache_path);

    {
        CompletionCache cache(cache_path);
        SeededRandomMockBackend backend(7);
        run_campaign(panel, plan, bundle, backend, &cache, endpoint);
    }
    // Rebuild everything from the cache alone: the backend must stay idle.
    CompletionCache cache(cache_path);
    SeededRandomMockBackend backend(7);
    const auto result = run_campaign(panel, plan, bundle, backend, &cache, endpoint);
    c.check(result.backend_calls == 0 && result.cache_hits == plan.size(),
            "report inputs were not replayed from the cache");

    std::vector<VariantScore> scores;
    for (const auto& v : result.variants) {
        VariantScore s;
        s.variant = v.variant;
        for (const auto& m : v.per_repetition) {
            s.per_repetition.push_back(evaluate(m, truth, EvaluationMode::direct));
        }
        s.agg = aggregate(s.per_repetition);
        scores.push_back(std::move(s));
    }
    const auto report_text = render_matrix_report(scores);
    const auto lines = detail::split_lines(report_text);

    // Shape: three sections (one per chain-of-thought mode), each a header
    // plus 5 gene-context rows of 7 filled "mean (stderr)" cells.
    c.check(lines.size() == 23, "report has " + std::to_string(lines.size()) + " lines, want 23");
    const std::string header =
        "gene_context,naive,cancer,mrna,cancer_mrna,evidence,cancer_mrna_evidence,"
        "cancer_mrna_experiment";
    const std::regex row_re(
        R"((none|gene_desc|gene_desc_suppl|literature|literature_suppl)(,\d\.\d{4} \(\d\.\d{4}\)){7})");
    std::size_t headers_seen = 0;
    std::size_t rows_ok = 0;
    for (const auto& line : lines) {
        if (line == header) ++headers_seen;
        if (std::regex_match(line, row_re)) ++rows_ok;
    }
    for (const auto cot : {"# chain_of_thought=none", "# chain_of_thought=simple",
                           "# chain_of_thought=guided"}) {
        c.check(report_text.find(cot) != std::string::npos,
                std::string("missing section ") + cot);
    }
    c.check(headers_seen == 3, std::to_string(headers_seen) + " column headers, want 3");
    c.check(rows_ok == 15, std::to_string(rows_ok) + " fully populated rows, want 15");
    c.note("report built from mock caches only; full-scale AUROCs (best variant 0.625, association "
           "baseline 0.460, best closure mode 0.6074) need the original screen data and a live "
           "model endpoint, so shape is verified instead of values");
    report(11, "mock-cache campaign yields a complete 7x5 'mean (stderr)' report matrix", c);
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    criterion_11();
    if (g_failures > 0) {
        std::printf("%d of 11 criteria failed\n", g_failures);
        return 1;
    }
    std::printf("all 11 criteria passed\n");
    return 0;
}
