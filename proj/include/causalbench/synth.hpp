#pragma once

// Synthetic perturbation screens with a known causal graph, used as an
// end-to-end oracle for the ground-truth pipeline.
//
// sample_dag draws a random node order and includes each edge allowed by
// that order independently with probability edge_prob, which guarantees
// acyclicity without rejection.
//
// simulate_screen generates cells from a linear structural equation model
// over the DAG: in topological order, x_j = sum over parents i of
// w_ij * x_i + noise, with weights drawn once per screen from
// [weight_min, weight_max] and Gaussian noise. A knockdown condition adds
// knockdown_shift to the target's noise term (soft intervention) or pins
// the target to the shift value and severs its incoming edges (hard
// intervention). Conditions are one knockdown per gene plus a control pool,
// cells_per_condition cells each.
//
// Per-condition RNG streams are derived from the screen seed and the
// condition index, so any one condition's cells are reproducible in
// isolation.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "causalbench/core.hpp"
#include "causalbench/errors.hpp"
#include "causalbench/ingest.hpp"

namespace causalbench {

struct SemParams {
    double weight_min = 0.5;
    double weight_max = 1.5;
    double noise_sd = 1.0;
    double knockdown_shift = 3.0;
    bool hard_intervention = false;
    std::size_t cells_per_condition = 100;
    std::uint64_t seed = 0;
};

inline CausalGraph sample_dag(std::size_t d, double edge_prob, std::uint64_t seed) {
    if (d == 0) throw ConfigError("sample_dag requires at least one node");
    if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) {
        throw ConfigError("edge_prob must lie in [0, 1]");
    }
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    CausalGraph g(d);
    // Edges only point from earlier to later in the sampled order.
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = a + 1; b < d; ++b) {
            if (unit(rng) < edge_prob) g.set_edge(order[a], order[b]);
        }
    }
    return g;
}

namespace detail_synth {

// Topological order; throws when the graph has a cycle.
inline std::vector<std::size_t> topological_order(const CausalGraph& g) {
    const std::size_t d = g.node_count();
    std::vector<std::size_t> indegree(d, 0);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            if (g.edge(i, j)) ++indegree[j];
        }
    }
    std::vector<std::size_t> queue;
    for (std::size_t j = 0; j < d; ++j) {
        if (indegree[j] == 0) queue.push_back(j);
    }
    std::vector<std::size_t> order;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const std::size_t i = queue[head];
        order.push_back(i);
        for (std::size_t j = 0; j < d; ++j) {
            if (g.edge(i, j) && --indegree[j] == 0) queue.push_back(j);
        }
    }
    if (order.size() != d) throw DataError("simulate_screen requires an acyclic graph");
    return order;
}

inline std::string gene_name(std::size_t index, std::size_t d) {
    std::size_t width = 1;
    for (std::size_t v = d; v >= 10; v /= 10) ++width;
    std::string digits = std::to_string(index + 1);
    return "G" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

}  // namespace detail_synth

inline ScreenMatrix simulate_screen(const CausalGraph& g, const SemParams& params) {
    const std::size_t d = g.node_count();
    if (params.cells_per_condition < 2) {
        throw ConfigError("cells_per_condition must be at least 2");
    }
    if (!(params.noise_sd > 0.0)) throw ConfigError("noise_sd must be positive");
    if (!(params.weight_min <= params.weight_max)) {
        throw ConfigError("weight_min must not exceed weight_max");
    }
    if (params.weight_min <= 0.0) {
        throw ConfigError("edge weights must be positive and bounded away from zero");
    }
    const auto order = detail_synth::topological_order(g);

    // Edge weights are screen-level parameters, shared by all conditions.
    std::mt19937_64 weight_rng(params.seed);
    std::uniform_real_distribution<double> weight_dist(params.weight_min, params.weight_max);
    std::vector<double> weight(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            if (g.edge(i, j)) weight[i * d + j] = weight_dist(weight_rng);
        }
    }

    std::vector<std::string> symbols;
    for (std::size_t i = 0; i < d; ++i) symbols.push_back(detail_synth::gene_name(i, d));
    GenePanel panel(symbols);

    std::vector<std::string> cell_ids;
    std::vector<PerturbationLabel> labels;
    std::vector<double> values;
    values.reserve((d + 1) * params.cells_per_condition * d);

    // Condition index c: 0 = control, 1..d = knockdown of gene c-1. The
    // condition stream seed mixes the screen seed with c via splitmix-style
    // constants so streams are decorrelated.
    for (std::size_t c = 0; c <= d; ++c) {
        const std::uint64_t stream_seed =
            params.seed ^ (0x9e3779b97f4a7c15ull + 0xbf58476d1ce4e5b9ull * static_cast<std::uint64_t>(c));
        std::mt19937_64 rng(stream_seed);
        std::normal_distribution<double> noise(0.0, params.noise_sd);
        const bool is_control = c == 0;
        const std::size_t target = is_control ? 0 : c - 1;
        for (std::size_t r = 0; r < params.cells_per_condition; ++r) {
            std::vector<double> x(d, 0.0);
            for (const std::size_t j : order) {
                if (!is_control && params.hard_intervention && j == target) {
                    // Hard intervention: the target ignores its parents.
                    x[j] = params.knockdown_shift;
                    continue;
                }
                double v = noise(rng);
                if (!is_control && j == target) v += params.knockdown_shift;
                for (std::size_t i = 0; i < d; ++i) {
                    if (weight[i * d + j] != 0.0) v += weight[i * d + j] * x[i];
                }
                x[j] = v;
            }
            const std::string condition = is_control ? std::string("control") : panel.symbol(target);
            cell_ids.push_back(condition + "_" + std::to_string(r + 1));
            labels.push_back(is_control ? PerturbationLabel::control()
                                        : PerturbationLabel::target(target));
            values.insert(values.end(), x.begin(), x.end());
        }
    }
    return ScreenMatrix(std::move(panel), std::move(cell_ids), std::move(labels),
                        std::move(values));
}

}  // namespace causalbench
