#pragma once

// Ancestral ground truth from a perturbation screen.
//
// For every perturbed gene k and every readout gene j != k, the cells
// targeting k are compared against control cells on gene j with the
// two-sided Mann-Whitney U test. p values are multiplicity-adjusted
// (Benjamini-Hochberg) and the edge k -> j is drawn when the adjusted p
// falls below alpha. Because a knockdown propagates through every directed
// path, a detected effect means j is a descendant of k, so the graph is an
// ancestral (reachability) graph, not a direct-edge graph.
//
// Adjustment scope is either one pool over all tests (default) or one pool
// per perturbed gene. Tests with fewer than two cells on either side are
// skipped: their p values are recorded as 1 and the pair is listed in
// skipped_tests.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "causalbench/detail/text.hpp"
#include "causalbench/errors.hpp"
#include "causalbench/ingest.hpp"
#include "causalbench/stats.hpp"

namespace causalbench {

struct PairwiseTestResult {
    std::size_t perturbed = 0;  // k: gene whose knockdown cells form group 1
    std::size_t readout = 0;    // j: gene whose expression is compared
    double u_statistic = 0.0;
    double p_raw = 1.0;
    double p_adjusted = 1.0;
    bool significant = false;
};

enum class CorrectionScope {
    global,            // one BH pool across all perturbed x readout tests
    per_perturbation,  // one BH pool per perturbed gene
};

struct GroundTruthOptions {
    double alpha = 0.05;
    CorrectionScope scope = CorrectionScope::global;
    // 0 = one thread per hardware core.
    std::size_t threads = 0;
};

struct GroundTruthResult {
    CausalGraph graph;
    // Canonical order: perturbed-major, readout-minor, skipping k == j.
    std::vector<PairwiseTestResult> ledger;
    std::vector<std::size_t> unperturbed_genes;           // no targeting cells at all
    std::vector<std::pair<std::size_t, std::size_t>> skipped_tests;  // < 2 cells on a side
};

// Indices j with adjusted_p_row[j] < alpha, ascending, excluding k itself.
// adjusted_p_row[k] is ignored.
inline std::vector<std::size_t> differential_set(std::size_t k,
                                                 std::span<const double> adjusted_p_row,
                                                 double alpha) {
    std::vector<std::size_t> members;
    for (std::size_t j = 0; j < adjusted_p_row.size(); ++j) {
        if (j == k) continue;
        if (adjusted_p_row[j] < alpha) members.push_back(j);
    }
    return members;
}

inline GroundTruthResult build_ancestral_graph(const ScreenMatrix& s,
                                               const GroundTruthOptions& options = {}) {
    if (!(options.alpha > 0.0 && options.alpha < 1.0)) {
        throw ConfigError("alpha must lie in (0, 1)");
    }
    const std::size_t d = s.gene_count();
    const auto control_of = [](const PerturbationLabel& l) { return l.is_control(); };

    std::vector<std::size_t> cells_targeting(d, 0);
    for (const auto& l : s.labels()) {
        if (!l.is_control()) ++cells_targeting[l.target_index()];
    }

    GroundTruthResult result;
    result.graph = CausalGraph(d);

    std::vector<std::size_t> perturbed;
    for (std::size_t k = 0; k < d; ++k) {
        if (cells_targeting[k] == 0) {
            result.unperturbed_genes.push_back(k);
        } else {
            perturbed.push_back(k);
        }
    }

    // One ledger slot per (k, j) test, filled independently, so worker
    // scheduling cannot reorder or change anything.
    const std::size_t tests_per_k = d - 1;
    result.ledger.resize(perturbed.size() * tests_per_k);
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> skipped_per_k(perturbed.size());

    const auto run_perturbation = [&](std::size_t pi) {
        const std::size_t k = perturbed[pi];
        const auto treated_of = [&](const PerturbationLabel& l) {
            return !l.is_control() && l.target_index() == k;
        };
        std::size_t slot = pi * tests_per_k;
        for (std::size_t j = 0; j < d; ++j) {
            if (j == k) continue;
            const auto treated = s.gene_column(j, treated_of);
            const auto control = s.gene_column(j, control_of);
            PairwiseTestResult r;
            r.perturbed = k;
            r.readout = j;
            if (treated.size() < 2 || control.size() < 2) {
                r.u_statistic = std::numeric_limits<double>::quiet_NaN();
                r.p_raw = 1.0;
                skipped_per_k[pi].emplace_back(k, j);
            } else {
                const auto mw = mann_whitney_u(treated, control);
                r.u_statistic = mw.u;
                r.p_raw = mw.p_two_sided;
            }
            result.ledger[slot++] = r;
        }
    };

    std::size_t thread_count = options.threads != 0
                                   ? options.threads
                                   : std::max<std::size_t>(1, std::thread::hardware_concurrency());
    thread_count = std::min(thread_count, std::max<std::size_t>(perturbed.size(), 1));
    if (thread_count <= 1) {
        for (std::size_t pi = 0; pi < perturbed.size(); ++pi) run_perturbation(pi);
    } else {
        std::vector<std::thread> workers;
        std::atomic<std::size_t> next{0};
        for (std::size_t t = 0; t < thread_count; ++t) {
            workers.emplace_back([&] {
                while (true) {
                    const std::size_t pi = next.fetch_add(1);
                    if (pi >= perturbed.size()) return;
                    run_perturbation(pi);
                }
            });
        }
        for (auto& w : workers) w.join();
    }
    for (auto& sk : skipped_per_k) {
        result.skipped_tests.insert(result.skipped_tests.end(), sk.begin(), sk.end());
    }

    // Multiplicity adjustment over the chosen pool.
    if (options.scope == CorrectionScope::global) {
        std::vector<double> raw(result.ledger.size());
        for (std::size_t i = 0; i < result.ledger.size(); ++i) raw[i] = result.ledger[i].p_raw;
        const auto adjusted = bh_adjust(raw);
        for (std::size_t i = 0; i < result.ledger.size(); ++i) {
            result.ledger[i].p_adjusted = adjusted[i];
        }
    } else {
        for (std::size_t pi = 0; pi < perturbed.size(); ++pi) {
            std::vector<double> raw(tests_per_k);
            for (std::size_t t = 0; t < tests_per_k; ++t) {
                raw[t] = result.ledger[pi * tests_per_k + t].p_raw;
            }
            const auto adjusted = bh_adjust(raw);
            for (std::size_t t = 0; t < tests_per_k; ++t) {
                result.ledger[pi * tests_per_k + t].p_adjusted = adjusted[t];
            }
        }
    }

    for (auto& r : result.ledger) {
        r.significant = r.p_adjusted < options.alpha;
        if (r.significant) result.graph.set_edge(r.perturbed, r.readout);
    }
    return result;
}

// Ledger CSV: comment header pinning the statistical conventions, then one
// row per test.
inline void write_test_ledger(const std::string& path, const GroundTruthResult& result,
                              const GenePanel& panel, const GroundTruthOptions& options) {
    std::ostringstream out;
    out << "# two-sided Mann-Whitney U, midranks, tie-corrected variance, 0.5 continuity correction\n";
    out << "# z-normalization convention: control population sd (divisor n)\n";
    out << "# adjustment: Benjamini-Hochberg step-up, scope="
        << (options.scope == CorrectionScope::global ? "global" : "per_perturbation")
        << ", alpha=" << detail::format_double(options.alpha) << "\n";
    out << "# skipped tests (fewer than 2 cells on a side) carry U=NaN, p_raw=1\n";
    out << "perturbed,readout,u,p_raw,p_adjusted,significant\n";
    for (const auto& r : result.ledger) {
        out << panel.symbol(r.perturbed) << ',' << panel.symbol(r.readout) << ','
            << detail::format_double(r.u_statistic) << ',' << detail::format_double(r.p_raw) << ','
            << detail::format_double(r.p_adjusted) << ',' << (r.significant ? "true" : "false")
            << '\n';
    }
    detail::write_file(path, out.str());
}

}  // namespace causalbench
