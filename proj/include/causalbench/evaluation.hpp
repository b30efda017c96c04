#pragma once

// Scoring predicted pairwise probabilities against a ground-truth graph.
//
// auroc uses the rank identity AUROC = (R_pos - n_pos*(n_pos+1)/2) /
// (n_pos * n_neg) with midranks, so tied scores earn half credit. It is
// undefined (error) when either class is empty.
//
// evaluate modes:
//   direct        score p(i, j) against truth edge i -> j over ordered pairs
//   closure_pred  ROC by sweeping a threshold over the distinct scores,
//                 transitively closing each thresholded prediction before
//                 counting; trapezoidal area. Closure is monotone in the
//                 edge set, so the curve is a valid staircase.
//   closure_both  closure_pred with the truth also closed
//   undirected    unordered pairs: score max(p(i,j), p(j,i)) against
//                 edge-in-either-direction
//
// aggregate: mean and standard error (sample sd / sqrt(n)) over repetition
// AUROCs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "causalbench/core.hpp"
#include "causalbench/detail/numeric.hpp"
#include "causalbench/errors.hpp"
#include "causalbench/prompt.hpp"

namespace causalbench {

inline double auroc(std::span<const double> scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size()) throw ShapeError("auroc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (bool l : labels) n_pos += l ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw UndefinedAurocError("auroc requires at least one positive and one negative");
    }
    for (double s : scores) {
        if (std::isnan(s)) throw DataError("auroc: NaN score");
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Midrank sum over positives; doubled ranks stay integral under ties.
    double doubled_rank_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double doubled_midrank = static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]]) doubled_rank_pos += doubled_midrank;
        }
        i = j;
    }
    const double r_pos = doubled_rank_pos / 2.0;
    return (r_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0) /
           (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

enum class EvaluationMode {
    direct,
    closure_pred,
    closure_both,
    undirected,
};

inline std::string_view to_string(EvaluationMode m) {
    switch (m) {
        case EvaluationMode::direct: return "direct";
        case EvaluationMode::closure_pred: return "closure_pred";
        case EvaluationMode::closure_both: return "closure_both";
        case EvaluationMode::undirected: return "undirected";
    }
    throw InternalError("unknown evaluation mode");
}

inline EvaluationMode parse_evaluation_mode(std::string_view name) {
    for (const auto m : {EvaluationMode::direct, EvaluationMode::closure_pred,
                         EvaluationMode::closure_both, EvaluationMode::undirected}) {
        if (to_string(m) == name) return m;
    }
    throw ConfigError("unknown evaluation mode '" + std::string(name) + "'");
}

namespace detail_eval {

// Area under the staircase built by thresholding at every distinct score
// (descending) and closing the resulting graph before counting hits.
inline double closure_sweep_auroc(const ProbabilityMatrix& p, const CausalGraph& truth) {
    const std::size_t d = p.node_count();
    std::vector<double> thresholds;
    thresholds.reserve(d * d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            if (i != j) thresholds.push_back(p.at(i, j));
        }
    }
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            if (i == j) continue;
            if (truth.edge(i, j)) {
                ++n_pos;
            } else {
                ++n_neg;
            }
        }
    }
    if (n_pos == 0 || n_neg == 0) {
        throw UndefinedAurocError("closure sweep requires truth with both edge classes");
    }

    double area = 0.0;
    double prev_fpr = 0.0;
    double prev_tpr = 0.0;
    for (const double gamma : thresholds) {
        const CausalGraph closed = transitive_closure(binarize(p, EdgeThreshold(gamma)));
        std::size_t tp = 0;
        std::size_t fp = 0;
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                if (i == j || !closed.edge(i, j)) continue;
                if (truth.edge(i, j)) {
                    ++tp;
                } else {
                    ++fp;
                }
            }
        }
        const double tpr = static_cast<double>(tp) / static_cast<double>(n_pos);
        const double fpr = static_cast<double>(fp) / static_cast<double>(n_neg);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    area += (1.0 - prev_fpr) * (1.0 + prev_tpr) / 2.0;  // anchor at (1, 1)
    return area;
}

}  // namespace detail_eval

inline double evaluate(const ProbabilityMatrix& p, const CausalGraph& truth, EvaluationMode mode) {
    const std::size_t d = p.node_count();
    if (truth.node_count() != d) throw ShapeError("evaluate: prediction and truth sizes differ");
    if (d < 2) throw ShapeError("evaluate requires at least two genes");
    switch (mode) {
        case EvaluationMode::direct: {
            std::vector<double> scores;
            std::vector<bool> labels;
            for (std::size_t i = 0; i < d; ++i) {
                for (std::size_t j = 0; j < d; ++j) {
                    if (i == j) continue;
                    scores.push_back(p.at(i, j));
                    labels.push_back(truth.edge(i, j));
                }
            }
            return auroc(scores, labels);
        }
        case EvaluationMode::closure_pred:
            return detail_eval::closure_sweep_auroc(p, truth);
        case EvaluationMode::closure_both:
            return detail_eval::closure_sweep_auroc(p, transitive_closure(truth));
        case EvaluationMode::undirected: {
            std::vector<double> scores;
            std::vector<bool> labels;
            for (std::size_t i = 0; i < d; ++i) {
                for (std::size_t j = i + 1; j < d; ++j) {
                    scores.push_back(std::max(p.at(i, j), p.at(j, i)));
                    labels.push_back(truth.edge(i, j) || truth.edge(j, i));
                }
            }
            return auroc(scores, labels);
        }
    }
    throw InternalError("unknown evaluation mode");
}

struct Aggregate {
    double mean = 0.0;
    double stderr_of_mean = 0.0;
    std::size_t repetitions = 0;
};

inline Aggregate aggregate(std::span<const double> per_repetition) {
    if (per_repetition.empty()) throw DataError("aggregate requires at least one repetition");
    Aggregate out;
    out.repetitions = per_repetition.size();
    const double n = static_cast<double>(per_repetition.size());
    out.mean = detail::stable_sum(per_repetition) / n;
    if (per_repetition.size() > 1) {
        std::vector<double> sq(per_repetition.size());
        for (std::size_t i = 0; i < per_repetition.size(); ++i) {
            const double dlt = per_repetition[i] - out.mean;
            sq[i] = dlt * dlt;
        }
        const double sample_var = detail::stable_sum(sq) / (n - 1.0);
        out.stderr_of_mean = std::sqrt(sample_var / n);
    }
    return out;
}

struct VariantScore {
    PromptVariant variant;
    std::vector<double> per_repetition;
    Aggregate agg;
};

namespace detail_eval {

inline std::string format_cell(const Aggregate& a) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f (%.4f)", a.mean, a.stderr_of_mean);
    return buf;
}

}  // namespace detail_eval

// Matrix report: one section per chain-of-thought mode present, rows are
// gene contexts, columns are experimental contexts, cells "mean (stderr)".
// Cells with no data are left empty.
inline std::string render_matrix_report(const std::vector<VariantScore>& scores) {
    std::map<PromptVariant, const VariantScore*> by_variant;
    for (const auto& s : scores) {
        if (!by_variant.emplace(s.variant, &s).second) {
            throw DataError("duplicate variant in report input: " + to_string(s.variant));
        }
    }
    std::ostringstream out;
    bool first_section = true;
    for (const auto cot : all_cot_modes) {
        bool any = false;
        for (const auto& s : scores) any = any || s.variant.cot == cot;
        if (!any) continue;
        if (!first_section) out << '\n';
        first_section = false;
        out << "# chain_of_thought=" << to_string(cot) << '\n';
        out << "gene_context";
        for (const auto e : all_experimental_contexts) out << ',' << to_string(e);
        out << '\n';
        for (const auto g : all_gene_contexts) {
            out << to_string(g);
            for (const auto e : all_experimental_contexts) {
                out << ',';
                const auto it = by_variant.find({e, g, cot});
                if (it != by_variant.end()) out << detail_eval::format_cell(it->second->agg);
            }
            out << '\n';
        }
    }
    if (first_section) throw DataError("matrix report requires at least one variant");
    return out.str();
}

// Long-form report: one row per variant and repetition.
inline std::string render_long_report(const std::vector<VariantScore>& scores) {
    std::ostringstream out;
    out << "variant,repetition,auroc\n";
    for (const auto& s : scores) {
        for (std::size_t r = 0; r < s.per_repetition.size(); ++r) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.17g", s.per_repetition[r]);
            out << to_string(s.variant) << ',' << r << ',' << buf << '\n';
        }
    }
    return out.str();
}

// Cellwise comparison of two runs over the same variants. A cell is flagged
// when the means differ by more than tolerance.
inline std::string render_delta_report(const std::vector<VariantScore>& baseline,
                                       const std::vector<VariantScore>& candidate,
                                       double tolerance = 1e-9) {
    std::map<PromptVariant, double> base_means;
    for (const auto& s : baseline) base_means[s.variant] = s.agg.mean;
    std::map<PromptVariant, double> cand_means;
    for (const auto& s : candidate) cand_means[s.variant] = s.agg.mean;
    if (base_means.size() != cand_means.size()) {
        throw DataError("delta report requires the same variant set on both sides");
    }
    std::ostringstream out;
    out << "variant,baseline_mean,candidate_mean,delta,flagged\n";
    for (const auto& [variant, base] : base_means) {
        const auto it = cand_means.find(variant);
        if (it == cand_means.end()) {
            throw DataError("delta report: variant missing on candidate side: " + to_string(variant));
        }
        const double delta = it->second - base;
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f", base, it->second, delta);
        out << to_string(variant) << ',' << buf << ','
            << (std::abs(delta) > tolerance ? "true" : "false") << '\n';
    }
    return out.str();
}

}  // namespace causalbench
