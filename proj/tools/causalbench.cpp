// Command-line front end for the benchmarking pipeline.
//
// Option precedence everywhere: command-line flag, then config file
// (--config, INI syntax), then environment (CAUSALBENCH_API_KEY,
// CAUSALBENCH_BASE_URL), then built-in default. Environment values are
// injected as option defaults, which yields exactly that order.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 network
// error, 5 internal error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "causalbench/causalbench.hpp"
#include "causalbench/knowledge_pubtator.hpp"
#include "causalbench/llm_http.hpp"

namespace fs = std::filesystem;
using namespace causalbench;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v != nullptr ? std::string(v) : fallback;
}

GenePanel load_panel_file(const std::string& path) {
    std::vector<std::string> symbols;
    for (const auto& line : detail::split_lines(detail::read_file(path))) {
        const auto trimmed = detail::trim(line);
        if (trimmed.empty() || trimmed.front() == '#') continue;
        symbols.emplace_back(trimmed);
    }
    if (symbols.empty()) throw SchemaError(path + ": no gene symbols found");
    try {
        return GenePanel(symbols);
    } catch (const PanelError& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

std::string sanitize_variant(const PromptVariant& v) {
    std::string s = to_string(v);
    std::size_t pos;
    while ((pos = s.find('/')) != std::string::npos) s.replace(pos, 1, "__");
    return s;
}

PromptVariant unsanitize_variant(std::string s) {
    std::size_t pos;
    while ((pos = s.find("__")) != std::string::npos) s.replace(pos, 2, "/");
    return parse_variant(s);
}

std::vector<PromptVariant> parse_variant_list(const std::string& spec) {
    if (spec == "all") return variant_matrix();
    std::vector<PromptVariant> out;
    for (const auto& name : detail::split(spec, ',')) {
        out.push_back(parse_variant(std::string(detail::trim(name))));
    }
    if (out.empty()) throw ConfigError("no variants selected");
    return out;
}

struct SharedEndpointOpts {
    std::string base_url;
    std::string model = "gemma-2-9b-it";
    double temperature = 0.7;
    std::size_t max_concurrency = 4;
    double requests_per_minute = 0.0;
    std::size_t max_retries = 3;
    long timeout_ms = 30000;
    long retry_backoff_ms = 250;

    void attach(CLI::App* cmd) {
        cmd->add_option("--base-url", base_url, "Chat endpoint base URL")
            ->default_val(env_or("CAUSALBENCH_BASE_URL", ""));
        cmd->add_option("--model", model, "Model name sent with each request")
            ->capture_default_str();
        cmd->add_option("--temperature", temperature, "Sampling temperature")
            ->capture_default_str();
        cmd->add_option("--max-concurrency", max_concurrency, "Parallel requests in flight")
            ->capture_default_str();
        cmd->add_option("--rpm", requests_per_minute, "Request rate limit per minute (0 = off)")
            ->capture_default_str();
        cmd->add_option("--retries", max_retries, "Extra attempts for retryable failures")
            ->capture_default_str();
        cmd->add_option("--timeout-ms", timeout_ms, "Per-request timeout in milliseconds")
            ->capture_default_str();
        cmd->add_option("--retry-backoff-ms", retry_backoff_ms, "Initial retry backoff")
            ->capture_default_str();
    }

    EndpointConfig to_config() const {
        EndpointConfig c;
        c.base_url = base_url;
        c.model_name = model;
        c.temperature = temperature;
        c.request_timeout = std::chrono::milliseconds(timeout_ms);
        c.max_concurrency = max_concurrency;
        c.requests_per_minute = requests_per_minute;
        c.max_retries = max_retries;
        c.retry_backoff = std::chrono::milliseconds(retry_backoff_ms);
        c.api_key = env_or("CAUSALBENCH_API_KEY", "");
        return c;
    }
};

struct BundleOpts {
    std::string descriptions_path;
    std::string evidence_cache_path;
    std::size_t max_passages = 100;

    void attach(CLI::App* cmd) {
        cmd->add_option("--descriptions", descriptions_path,
                        "Gene description TSV (symbol<TAB>description)");
        cmd->add_option("--evidence-cache", evidence_cache_path,
                        "Literature evidence cache (JSONL) for literature variants");
        cmd->add_option("--max-passages", max_passages, "Passage cap per pair")
            ->capture_default_str();
    }

    GeneContextBundle load() const {
        GeneDescriptions descriptions;
        if (!descriptions_path.empty()) descriptions = load_gene_descriptions(descriptions_path);
        for (const auto& w : descriptions.warnings) std::cerr << "warning: " << w << '\n';
        std::vector<LiteratureEvidence> evidence;
        if (!evidence_cache_path.empty()) {
            for (const auto& line : detail::split_lines(detail::read_file(evidence_cache_path))) {
                if (detail::trim(line).empty()) continue;
                const auto j = nlohmann::json::parse(line);
                LiteratureEvidence ev;
                ev.gene_a = j.at("gene_a").get<std::string>();
                ev.gene_b = j.at("gene_b").get<std::string>();
                ev.relation = parse_relation_type(j.at("relation").get<std::string>());
                for (const auto& p : j.at("passages")) {
                    ev.passages.push_back(
                        {p.at("text").get<std::string>(), p.value("article_id", std::string{})});
                }
                evidence.push_back(std::move(ev));
            }
        }
        auto bundle = bundle_from_evidence(evidence, std::move(descriptions));
        bundle.max_passages = max_passages;
        return bundle;
    }
};

std::unique_ptr<CompletionBackend> make_backend(const std::string& spec,
                                               const EndpointConfig& endpoint,
                                               const GenePanel& panel) {
    if (spec == "http") return std::make_unique<HttpBackend>(endpoint);
    const auto parts = detail::split(spec, ':');
    if (parts.size() == 3 && parts[0] == "mock") {
        if (parts[1] == "oracle") {
            auto [graph, graph_panel] = load_graph(parts[2]);
            if (!(graph_panel == panel)) {
                throw ConfigError("oracle mock graph panel does not match the run panel");
            }
            return std::make_unique<OracleMockBackend>(std::move(graph), std::move(graph_panel));
        }
        if (parts[1] == "constant") {
            const auto v = detail::parse_double(parts[2]);
            if (!v) throw ConfigError("mock:constant requires a numeric value");
            return std::make_unique<ConstantMockBackend>(*v);
        }
        if (parts[1] == "seeded_random") {
            const auto v = detail::parse_double(parts[2]);
            if (!v || *v < 0) throw ConfigError("mock:seeded_random requires a seed");
            return std::make_unique<SeededRandomMockBackend>(static_cast<std::uint64_t>(*v));
        }
        if (parts[1] == "corpus") {
            return std::make_unique<CorpusMockBackend>(CorpusMockBackend::load(parts[2]));
        }
    }
    throw ConfigError("unknown backend '" + spec +
                      "' (expected http, mock:oracle:<graph.csv>, mock:constant:<value>, "
                      "mock:seeded_random:<seed>, or mock:corpus:<corpus.jsonl>)");
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

nlohmann::json endpoint_config_json(const EndpointConfig& c) {
    return {{"base_url", c.base_url},
            {"model", c.model_name},
            {"temperature", c.temperature},
            {"timeout_ms", c.request_timeout.count()},
            {"max_concurrency", c.max_concurrency},
            {"requests_per_minute", c.requests_per_minute},
            {"max_retries", c.max_retries},
            {"api_key_present", !c.api_key.empty()}};
}

// ---------------------------------------------------------------------------

int cmd_ingest(const std::string& matrix_path, const std::string& labels_path,
               const std::string& genes_path, bool sparse, double min_cell_total,
               double min_gene_fraction, bool skip_normalize, const std::string& out_dir) {
    ScreenMatrix screen;
    if (sparse) {
        if (genes_path.empty()) throw ConfigError("--sparse requires --genes with the panel symbols");
        screen = load_screen_sparse(matrix_path, labels_path, load_panel_file(genes_path));
    } else {
        screen = load_screen(matrix_path, labels_path);
    }
    FilterParams params;
    params.min_cell_total = min_cell_total;
    params.min_gene_nonzero_fraction = min_gene_fraction;
    auto filtered = filter_low_quality(screen, params);
    const ScreenMatrix final_screen =
        skip_normalize ? filtered.screen : z_normalize(filtered.screen);

    ensure_dir(out_dir);
    save_screen(final_screen, out_dir + "/screen.tsv", out_dir + "/labels.tsv");
    const nlohmann::json config = {{"matrix", matrix_path},
                                   {"labels", labels_path},
                                   {"sparse", sparse},
                                   {"min_cell_total", min_cell_total},
                                   {"min_gene_nonzero_fraction", min_gene_fraction},
                                   {"normalized", !skip_normalize},
                                   {"normalization", "control population sd (divisor n)"},
                                   {"dropped_cells", filtered.dropped_cells},
                                   {"dropped_genes", filtered.dropped_genes}};
    write_manifest(out_dir + "/manifest.json", make_manifest("ingest", config));
    std::cout << "cells=" << final_screen.cell_count() << " genes=" << final_screen.gene_count()
              << " controls=" << final_screen.control_count()
              << " dropped_cells=" << filtered.dropped_cells.size()
              << " dropped_genes=" << filtered.dropped_genes.size() << '\n';
    return 0;
}

int cmd_ground_truth(const std::string& matrix_path, const std::string& labels_path, double alpha,
                     const std::string& scope_name, std::size_t threads,
                     const std::string& out_dir) {
    const auto screen = load_screen(matrix_path, labels_path);
    GroundTruthOptions options;
    options.alpha = alpha;
    options.threads = threads;
    if (scope_name == "global") {
        options.scope = CorrectionScope::global;
    } else if (scope_name == "per_perturbation") {
        options.scope = CorrectionScope::per_perturbation;
    } else {
        throw ConfigError("--scope must be global or per_perturbation");
    }
    const auto result = build_ancestral_graph(screen, options);

    ensure_dir(out_dir);
    save_graph(out_dir + "/graph.csv", result.graph, screen.panel());
    write_test_ledger(out_dir + "/ledger.csv", result, screen.panel(), options);
    std::vector<std::string> unperturbed;
    for (const auto g : result.unperturbed_genes) unperturbed.push_back(screen.panel().symbol(g));
    const nlohmann::json config = {{"matrix", matrix_path},
                                   {"labels", labels_path},
                                   {"alpha", alpha},
                                   {"scope", scope_name},
                                   {"unperturbed_genes", unperturbed},
                                   {"skipped_tests", result.skipped_tests.size()}};
    write_manifest(out_dir + "/manifest.json", make_manifest("ground-truth", config));
    std::cout << "edges=" << result.graph.edge_count() << " tests=" << result.ledger.size()
              << " unperturbed=" << unperturbed.size() << " skipped=" << result.skipped_tests.size()
              << '\n';
    return 0;
}

int cmd_synth(std::size_t genes, double edge_prob, std::size_t cells, double shift,
              double noise_sd, std::uint64_t seed, bool hard, const std::string& out_dir) {
    const auto dag = sample_dag(genes, edge_prob, seed);
    SemParams params;
    params.cells_per_condition = cells;
    params.knockdown_shift = shift;
    params.noise_sd = noise_sd;
    params.seed = seed;
    params.hard_intervention = hard;
    const auto screen = simulate_screen(dag, params);

    ensure_dir(out_dir);
    save_screen(screen, out_dir + "/matrix.tsv", out_dir + "/labels.tsv");
    save_graph(out_dir + "/true_graph.csv", dag, screen.panel());
    const nlohmann::json config = {{"genes", genes},           {"edge_prob", edge_prob},
                                   {"cells_per_condition", cells}, {"shift", shift},
                                   {"noise_sd", noise_sd},     {"seed", seed},
                                   {"hard_intervention", hard}};
    write_manifest(out_dir + "/manifest.json", make_manifest("synth", config));
    std::cout << "genes=" << genes << " edges=" << dag.edge_count()
              << " cells=" << screen.cell_count() << '\n';
    return 0;
}

int cmd_prompts(const std::string& pair_spec, const std::string& variant_name, bool list_variants,
                const BundleOpts& bundle_opts, const std::string& template_dir, bool persona_split,
                const std::string& out_path) {
    if (list_variants) {
        for (const auto& v : variant_matrix()) std::cout << to_string(v) << '\n';
        return 0;
    }
    const auto genes = detail::split(pair_spec, ',');
    if (genes.size() != 2) throw ConfigError("--pair expects GENE_A,GENE_B");
    const TemplateSet templates =
        template_dir.empty() ? TemplateSet::builtin() : TemplateSet::load_directory(template_dir);
    RenderOptions render_options;
    render_options.persona_as_system = persona_split;
    const auto rendered =
        render_prompt(std::string(detail::trim(genes[0])), std::string(detail::trim(genes[1])),
                      parse_variant(variant_name), bundle_opts.load(), templates, render_options);
    if (out_path.empty()) {
        std::cout << rendered.text << '\n';
    } else {
        detail::write_file(out_path, rendered.text);
    }
    return 0;
}

int cmd_run(const std::string& genes_path, const std::string& variants_spec,
            std::size_t repetitions, const std::string& backend_spec,
            const std::string& cache_path, const SharedEndpointOpts& endpoint_opts,
            const BundleOpts& bundle_opts, const std::string& template_dir, bool persona_split,
            const std::string& out_dir) {
    const auto panel = load_panel_file(genes_path);
    const auto variants = parse_variant_list(variants_spec);
    const auto bundle = bundle_opts.load();
    const TemplateSet templates =
        template_dir.empty() ? TemplateSet::builtin() : TemplateSet::load_directory(template_dir);
    RenderOptions render_options;
    render_options.persona_as_system = persona_split;
    const EndpointConfig endpoint = endpoint_opts.to_config();

    const auto plan =
        build_campaign_plan(panel, variants, repetitions, bundle, endpoint, templates, render_options);
    auto backend = make_backend(backend_spec, endpoint, panel);
    std::optional<CompletionCache> cache;
    if (!cache_path.empty()) cache.emplace(fs::path(cache_path));

    const auto result = run_campaign(panel, plan, bundle, *backend,
                                     cache ? &*cache : nullptr, endpoint, templates, render_options);

    ensure_dir(out_dir);
    save_campaign_plan(out_dir + "/plan.csv", plan, panel);
    nlohmann::json variant_summaries = nlohmann::json::array();
    for (const auto& v : result.variants) {
        const std::string dir = out_dir + "/matrices/" + sanitize_variant(v.variant);
        ensure_dir(dir);
        for (std::size_t r = 0; r < v.per_repetition.size(); ++r) {
            save_probability_matrix(dir + "/rep" + std::to_string(r) + ".csv", v.per_repetition[r],
                                    panel);
        }
        variant_summaries.push_back({{"variant", to_string(v.variant)},
                                     {"completions", v.completions},
                                     {"parse_failures", v.parse_failures},
                                     {"parse_failure_rate", v.parse_failure_rate()}});
    }
    detail::write_file(out_dir + "/summary.json",
                       nlohmann::json{{"variants", variant_summaries},
                                      {"cache_hits", result.cache_hits},
                                      {"backend_calls", result.backend_calls}}
                               .dump(2) +
                           "\n");
    const nlohmann::json config = {{"genes", genes_path},
                                   {"variants", variants_spec},
                                   {"repetitions", repetitions},
                                   {"backend", backend_spec},
                                   {"cache", cache_path},
                                   {"persona_split", persona_split},
                                   {"template_version", templates.version()},
                                   {"endpoint", endpoint_config_json(endpoint)}};
    write_manifest(out_dir + "/manifest.json", make_manifest("run", config));
    std::cout << "plan_entries=" << plan.size() << " cache_hits=" << result.cache_hits
              << " backend_calls=" << result.backend_calls << '\n';
    return 0;
}

int cmd_evaluate(const std::string& pred_path, const std::string& truth_path,
                 const std::string& mode_name, const std::string& out_path) {
    auto [pred, pred_panel] = load_probability_matrix(pred_path);
    auto [truth, truth_panel] = load_graph(truth_path);
    if (!(pred_panel == truth_panel)) {
        throw SchemaError("prediction and truth panels differ (symbols or order)");
    }
    const auto mode = parse_evaluation_mode(mode_name);
    const double score = evaluate(pred, truth, mode);
    std::cout << "auroc=" << detail::format_double(score) << '\n';
    if (!out_path.empty()) {
        detail::write_file(out_path, nlohmann::json{{"mode", mode_name}, {"auroc", score}}.dump(2) + "\n");
    }
    return 0;
}

int cmd_string_baseline(const std::string& links_path, const std::string& aliases_path,
                        const std::string& genes_path, const std::string& truth_path,
                        const std::string& mode_name, const std::string& out_dir) {
    const auto panel = load_panel_file(genes_path);
    const auto scores = load_string_scores(links_path, aliases_path, panel);
    for (const auto& sym : scores.unmapped) {
        std::cerr << "warning: no STRING mapping for " << sym << '\n';
    }
    const auto matrix = string_probability_matrix(scores);
    ensure_dir(out_dir);
    save_probability_matrix(out_dir + "/string_scores.csv", matrix, panel);

    nlohmann::json result = {{"unmapped", scores.unmapped}};
    if (!truth_path.empty()) {
        auto [truth, truth_panel] = load_graph(truth_path);
        if (!(truth_panel == panel)) throw SchemaError("truth panel does not match --genes");
        const double score = evaluate(matrix, truth, parse_evaluation_mode(mode_name));
        result["mode"] = mode_name;
        result["auroc"] = score;
        std::cout << "auroc=" << detail::format_double(score) << '\n';
    }
    detail::write_file(out_dir + "/string_baseline.json", result.dump(2) + "\n");
    const nlohmann::json config = {{"links", links_path},
                                   {"aliases", aliases_path},
                                   {"genes", genes_path},
                                   {"truth", truth_path},
                                   {"mode", mode_name}};
    write_manifest(out_dir + "/manifest.json", make_manifest("string-baseline", config));
    return 0;
}

int cmd_literature_analysis(const std::string& truth_path, const std::string& evidence_cache_path,
                            const std::string& counts_path, std::size_t grid_points,
                            const std::string& out_path) {
    auto [truth, panel] = load_graph(truth_path);
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    if (!counts_path.empty()) {
        const auto lines = detail::split_lines(detail::read_file(counts_path));
        for (std::size_t i = 1; i < lines.size(); ++i) {  // header line first
            if (detail::trim(lines[i]).empty()) continue;
            const auto fields = detail::split(lines[i], ',');
            if (fields.size() != 3) {
                throw SchemaError(counts_path + ":" + std::to_string(i + 1) +
                                  ": expected gene_a,gene_b,passages");
            }
            const auto n = detail::parse_double(fields[2]);
            if (!n || *n < 0) {
                throw SchemaError(counts_path + ":" + std::to_string(i + 1) + ": bad passage count");
            }
            counts[{std::string(detail::trim(fields[0])), std::string(detail::trim(fields[1]))}] +=
                static_cast<std::size_t>(*n);
        }
    } else if (!evidence_cache_path.empty()) {
        for (const auto& line : detail::split_lines(detail::read_file(evidence_cache_path))) {
            if (detail::trim(line).empty()) continue;
            const auto j = nlohmann::json::parse(line);
            counts[{j.at("gene_a").get<std::string>(), j.at("gene_b").get<std::string>()}] +=
                j.at("passages").size();
        }
    } else {
        throw ConfigError("literature-analysis needs --counts or --evidence-cache");
    }

    const auto table = literature_contingency(truth, panel, counts);
    const double fisher = fisher_one_sided(table);
    const double boschloo = boschloo_one_sided(table, grid_points);
    const nlohmann::json result = {
        {"table",
         {{"no_causal_no_lit", table.no_causal_no_lit},
          {"no_causal_lit", table.no_causal_lit},
          {"causal_no_lit", table.causal_no_lit},
          {"causal_lit", table.causal_lit}}},
        {"fisher_one_sided", fisher},
        {"boschloo_one_sided", boschloo},
        {"grid_points", grid_points}};
    std::cout << "table=((" << table.no_causal_no_lit << ',' << table.no_causal_lit << "),("
              << table.causal_no_lit << ',' << table.causal_lit << "))"
              << " fisher=" << detail::format_double(fisher)
              << " boschloo=" << detail::format_double(boschloo) << '\n';
    if (!out_path.empty()) detail::write_file(out_path, result.dump(2) + "\n");
    return 0;
}

std::vector<VariantScore> score_run_dir(const std::string& run_dir, const CausalGraph& truth,
                                        const GenePanel& panel, EvaluationMode mode) {
    const fs::path matrices = fs::path(run_dir) / "matrices";
    if (!fs::is_directory(matrices)) {
        throw DataError(run_dir + " has no matrices/ directory (expected a run output)");
    }
    std::vector<VariantScore> scores;
    std::vector<fs::path> variant_dirs;
    for (const auto& entry : fs::directory_iterator(matrices)) {
        if (entry.is_directory()) variant_dirs.push_back(entry.path());
    }
    std::sort(variant_dirs.begin(), variant_dirs.end());
    for (const auto& dir : variant_dirs) {
        VariantScore s;
        s.variant = unsanitize_variant(dir.filename().string());
        std::vector<fs::path> reps;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.path().extension() == ".csv") reps.push_back(entry.path());
        }
        std::sort(reps.begin(), reps.end());
        for (const auto& rep : reps) {
            auto [matrix, matrix_panel] = load_probability_matrix(rep.string());
            if (!(matrix_panel == panel)) {
                throw SchemaError(rep.string() + ": panel does not match the truth graph");
            }
            s.per_repetition.push_back(evaluate(matrix, truth, mode));
        }
        if (s.per_repetition.empty()) continue;
        s.agg = aggregate(s.per_repetition);
        scores.push_back(std::move(s));
    }
    if (scores.empty()) throw DataError(run_dir + ": no matrices found");
    return scores;
}

int cmd_report(const std::string& run_dir, const std::string& truth_path,
               const std::string& mode_name, const std::string& baseline_dir,
               const std::string& out_dir) {
    auto [truth, panel] = load_graph(truth_path);
    const auto mode = parse_evaluation_mode(mode_name);
    const auto scores = score_run_dir(run_dir, truth, panel, mode);

    ensure_dir(out_dir);
    detail::write_file(out_dir + "/report_matrix.csv", render_matrix_report(scores));
    detail::write_file(out_dir + "/report_long.csv", render_long_report(scores));
    if (!baseline_dir.empty()) {
        const auto baseline = score_run_dir(baseline_dir, truth, panel, mode);
        detail::write_file(out_dir + "/report_delta.csv", render_delta_report(baseline, scores));
    }
    const nlohmann::json config = {{"run_dir", run_dir},
                                   {"truth", truth_path},
                                   {"mode", mode_name},
                                   {"baseline_dir", baseline_dir}};
    write_manifest(out_dir + "/manifest.json", make_manifest("report", config));
    std::cout << "variants=" << scores.size() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LLM zero-shot causal gene-pair benchmarking pipeline"};
    app.set_config("--config", "", "INI config file (flag values override it)");
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Load, filter and z-normalize a screen");
    std::string in_matrix, in_labels, in_genes, in_out = "ingest_out";
    bool in_sparse = false, in_skip_norm = false;
    double in_min_cell_total = 0.0, in_min_gene_fraction = 0.0;
    ingest->add_option("--matrix", in_matrix, "Expression table (dense TSV, or triplets with --sparse)")
        ->required();
    ingest->add_option("--labels", in_labels, "Per-cell perturbation labels TSV")->required();
    ingest->add_option("--genes", in_genes, "Panel symbols file (required with --sparse)");
    ingest->add_flag("--sparse", in_sparse, "Treat --matrix as cell/gene/value triplets");
    ingest->add_option("--min-cell-total", in_min_cell_total, "Drop cells below this total")
        ->capture_default_str();
    ingest->add_option("--min-gene-nonzero-fraction", in_min_gene_fraction,
                       "Drop genes expressed in fewer than this fraction of cells")
        ->capture_default_str();
    ingest->add_flag("--skip-normalize", in_skip_norm, "Skip control z-normalization");
    ingest->add_option("--out-dir", in_out, "Output directory")->capture_default_str();

    // ground-truth
    auto* ground = app.add_subcommand("ground-truth", "Build the ancestral graph from a screen");
    std::string gt_matrix, gt_labels, gt_scope = "global", gt_out = "ground_truth_out";
    double gt_alpha = 0.05;
    std::size_t gt_threads = 0;
    ground->add_option("--matrix", gt_matrix, "Ingested screen matrix TSV")->required();
    ground->add_option("--labels", gt_labels, "Ingested labels TSV")->required();
    ground->add_option("--alpha", gt_alpha, "FDR level")->capture_default_str();
    ground->add_option("--scope", gt_scope, "BH pool: global or per_perturbation")
        ->capture_default_str();
    ground->add_option("--threads", gt_threads, "Worker threads (0 = hardware)")
        ->capture_default_str();
    ground->add_option("--out-dir", gt_out, "Output directory")->capture_default_str();

    // synth
    auto* synth = app.add_subcommand("synth", "Simulate a screen from a random DAG");
    std::size_t sy_genes = 20, sy_cells = 100;
    double sy_edge_prob = 0.15, sy_shift = 3.0, sy_noise = 1.0;
    std::uint64_t sy_seed = 0;
    bool sy_hard = false;
    std::string sy_out = "synth_out";
    synth->add_option("--genes", sy_genes, "Number of genes")->capture_default_str();
    synth->add_option("--edge-prob", sy_edge_prob, "Edge probability")->capture_default_str();
    synth->add_option("--cells", sy_cells, "Cells per condition")->capture_default_str();
    synth->add_option("--shift", sy_shift, "Knockdown shift")->capture_default_str();
    synth->add_option("--noise-sd", sy_noise, "Noise standard deviation")->capture_default_str();
    synth->add_option("--seed", sy_seed, "Random seed")->capture_default_str();
    synth->add_flag("--hard", sy_hard, "Hard intervention (pin target, sever parents)");
    synth->add_option("--out-dir", sy_out, "Output directory")->capture_default_str();

    // prompts
    auto* prompts = app.add_subcommand("prompts", "Render or list prompt variants");
    std::string pr_pair, pr_variant = "naive/none/none", pr_templates, pr_out;
    bool pr_list = false, pr_persona_split = false;
    BundleOpts pr_bundle;
    prompts->add_option("--pair", pr_pair, "Gene pair GENE_A,GENE_B");
    prompts->add_option("--variant", pr_variant, "Variant experimental/gene/cot")
        ->capture_default_str();
    prompts->add_flag("--list-variants", pr_list, "Print all variants and exit");
    pr_bundle.attach(prompts);
    prompts->add_option("--template-dir", pr_templates, "Override template fragment directory");
    prompts->add_flag("--persona-split", pr_persona_split,
                      "Move the persona into a system message");
    prompts->add_option("--out", pr_out, "Write the prompt here instead of stdout");

    // run
    auto* run = app.add_subcommand("run", "Execute a completion campaign");
    std::string ru_genes, ru_variants = "all", ru_backend = "http", ru_cache, ru_templates,
                ru_out = "run_out";
    std::size_t ru_reps = 1;
    bool ru_persona_split = false;
    SharedEndpointOpts ru_endpoint;
    BundleOpts ru_bundle;
    run->add_option("--genes", ru_genes, "Panel symbols file")->required();
    run->add_option("--variants", ru_variants, "Comma-separated variants, or 'all'")
        ->capture_default_str();
    run->add_option("--repetitions", ru_reps, "Repetitions per pair and variant")
        ->capture_default_str();
    run->add_option("--backend", ru_backend,
                    "http, mock:oracle:<graph.csv>, mock:constant:<v>, mock:seeded_random:<seed>, "
                    "mock:corpus:<file>")
        ->capture_default_str();
    run->add_option("--cache", ru_cache, "Completion cache JSONL (reused across runs)");
    ru_endpoint.attach(run);
    ru_bundle.attach(run);
    run->add_option("--template-dir", ru_templates, "Override template fragment directory");
    run->add_flag("--persona-split", ru_persona_split, "Move the persona into a system message");
    run->add_option("--out-dir", ru_out, "Output directory")->capture_default_str();

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Score a probability matrix against a truth graph");
    std::string ev_pred, ev_truth, ev_mode = "direct", ev_out;
    eval->add_option("--pred", ev_pred, "Predicted probability matrix CSV")->required();
    eval->add_option("--truth", ev_truth, "Truth graph CSV")->required();
    eval->add_option("--mode", ev_mode, "direct, closure_pred, closure_both or undirected")
        ->capture_default_str();
    eval->add_option("--out", ev_out, "Write the result JSON here");

    // string-baseline
    auto* string_cmd = app.add_subcommand("string-baseline", "Score STRING association scores");
    std::string st_links, st_aliases, st_genes, st_truth, st_mode = "undirected",
                st_out = "string_out";
    string_cmd->add_option("--links", st_links, "STRING links file")->required();
    string_cmd->add_option("--aliases", st_aliases, "STRING aliases file")->required();
    string_cmd->add_option("--genes", st_genes, "Panel symbols file")->required();
    string_cmd->add_option("--truth", st_truth, "Truth graph CSV (optional: skip to only map)");
    string_cmd->add_option("--mode", st_mode, "Evaluation mode")->capture_default_str();
    string_cmd->add_option("--out-dir", st_out, "Output directory")->capture_default_str();

    // literature-analysis
    auto* lit = app.add_subcommand("literature-analysis",
                                   "Literature coverage vs causality (Fisher and exact "
                                   "unconditional test)");
    std::string li_truth, li_evidence, li_counts, li_out;
    std::size_t li_grid = 1000;
    lit->add_option("--truth", li_truth, "Truth graph CSV")->required();
    lit->add_option("--evidence-cache", li_evidence, "Evidence cache JSONL");
    lit->add_option("--counts", li_counts, "Passage count CSV (gene_a,gene_b,passages)");
    lit->add_option("--grid-points", li_grid, "Nuisance grid resolution")->capture_default_str();
    lit->add_option("--out", li_out, "Write the result JSON here");

    // report
    auto* report = app.add_subcommand("report", "Aggregate a run into reports");
    std::string re_run, re_truth, re_mode = "direct", re_baseline, re_out = "report_out";
    report->add_option("--run-dir", re_run, "Run output directory")->required();
    report->add_option("--truth", re_truth, "Truth graph CSV")->required();
    report->add_option("--mode", re_mode, "Evaluation mode")->capture_default_str();
    report->add_option("--baseline-dir", re_baseline, "Second run for a delta report");
    report->add_option("--out-dir", re_out, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
        if (ingest->parsed()) {
            return cmd_ingest(in_matrix, in_labels, in_genes, in_sparse, in_min_cell_total,
                              in_min_gene_fraction, in_skip_norm, in_out);
        }
        if (ground->parsed()) {
            return cmd_ground_truth(gt_matrix, gt_labels, gt_alpha, gt_scope, gt_threads, gt_out);
        }
        if (synth->parsed()) {
            return cmd_synth(sy_genes, sy_edge_prob, sy_cells, sy_shift, sy_noise, sy_seed, sy_hard,
                             sy_out);
        }
        if (prompts->parsed()) {
            return cmd_prompts(pr_pair, pr_variant, pr_list, pr_bundle, pr_templates,
                               pr_persona_split, pr_out);
        }
        if (run->parsed()) {
            return cmd_run(ru_genes, ru_variants, ru_reps, ru_backend, ru_cache, ru_endpoint,
                           ru_bundle, ru_templates, ru_persona_split, ru_out);
        }
        if (eval->parsed()) return cmd_evaluate(ev_pred, ev_truth, ev_mode, ev_out);
        if (string_cmd->parsed()) {
            return cmd_string_baseline(st_links, st_aliases, st_genes, st_truth, st_mode, st_out);
        }
        if (lit->parsed()) {
            return cmd_literature_analysis(li_truth, li_evidence, li_counts, li_grid, li_out);
        }
        if (report->parsed()) return cmd_report(re_run, re_truth, re_mode, re_baseline, re_out);
        throw InternalError("no subcommand dispatched");
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ErrorClass::config);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return static_cast<int>(ErrorClass::internal);
    }
    return 0;
}
