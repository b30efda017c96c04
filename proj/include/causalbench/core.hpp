#pragma once

// Core value types: the gene panel, per-cell perturbation labels, boolean
// causal graphs over panel indices, and pairwise probability matrices.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "causalbench/errors.hpp"

namespace causalbench {

// Ordered list of unique gene symbols. Index order is the canonical order
// for every matrix and report in the library.
class GenePanel {
  public:
    GenePanel() = default;

    explicit GenePanel(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
        for (std::size_t i = 0; i < symbols_.size(); ++i) {
            if (symbols_[i].empty()) throw PanelError("empty gene symbol at index " + std::to_string(i));
            const auto [it, inserted] = index_.emplace(symbols_[i], i);
            if (!inserted) throw PanelError("duplicate gene symbol: " + symbols_[i]);
        }
    }

    std::size_t size() const noexcept { return symbols_.size(); }
    const std::string& symbol(std::size_t i) const { return symbols_.at(i); }
    const std::vector<std::string>& symbols() const noexcept { return symbols_; }

    std::optional<std::size_t> find(std::string_view symbol) const {
        const auto it = index_.find(std::string(symbol));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t index_of(std::string_view symbol) const {
        const auto idx = find(symbol);
        if (!idx) throw PanelError("gene symbol not in panel: " + std::string(symbol));
        return *idx;
    }

    bool operator==(const GenePanel& other) const { return symbols_ == other.symbols_; }

  private:
    std::vector<std::string> symbols_;
    std::unordered_map<std::string, std::size_t> index_;
};

// A cell is either an unperturbed control or targets exactly one panel gene.
class PerturbationLabel {
  public:
    static PerturbationLabel control() { return PerturbationLabel(std::nullopt); }
    static PerturbationLabel target(std::size_t gene_index) { return PerturbationLabel(gene_index); }

    bool is_control() const noexcept { return !target_.has_value(); }

    std::size_t target_index() const {
        if (!target_) throw InternalError("target_index() on a control label");
        return *target_;
    }

    bool operator==(const PerturbationLabel&) const = default;

  private:
    explicit PerturbationLabel(std::optional<std::size_t> t) : target_(t) {}
    std::optional<std::size_t> target_;
};

// Probability for edges when binarizing: an edge exists when its score is
// greater than or equal to the threshold.
class EdgeThreshold {
  public:
    explicit EdgeThreshold(double value) : value_(value) {
        if (!(value >= 0.0 && value <= 1.0)) {
            throw ConfigError("edge threshold must lie in [0, 1]");
        }
    }
    double value() const noexcept { return value_; }

  private:
    double value_;
};

// Directed graph over d panel genes, adjacency stored as packed bit rows.
// Self loops are rejected at every entry point.
class CausalGraph {
  public:
    CausalGraph() = default;

    explicit CausalGraph(std::size_t node_count)
        : d_(node_count), words_per_row_((node_count + 63) / 64), bits_(d_ * words_per_row_, 0) {}

    std::size_t node_count() const noexcept { return d_; }

    bool edge(std::size_t from, std::size_t to) const {
        check_pair(from, to);
        if (from == to) return false;
        return (row(from)[to >> 6] >> (to & 63)) & 1u;
    }

    void set_edge(std::size_t from, std::size_t to, bool present = true) {
        check_pair(from, to);
        if (from == to) throw InternalError("self loop rejected: node " + std::to_string(from));
        std::uint64_t* w = row(from) + (to >> 6);
        const std::uint64_t mask = std::uint64_t{1} << (to & 63);
        if (present) {
            *w |= mask;
        } else {
            *w &= ~mask;
        }
    }

    std::size_t edge_count() const {
        std::size_t n = 0;
        for (const std::uint64_t w : bits_) n += static_cast<std::size_t>(__builtin_popcountll(w));
        return n;
    }

    // Raw row words: used by the closure and by set algebra on graphs.
    const std::uint64_t* row(std::size_t from) const { return bits_.data() + from * words_per_row_; }
    std::uint64_t* row(std::size_t from) { return bits_.data() + from * words_per_row_; }
    std::size_t words_per_row() const noexcept { return words_per_row_; }

    bool operator==(const CausalGraph&) const = default;

  private:
    void check_pair(std::size_t from, std::size_t to) const {
        if (from >= d_ || to >= d_) {
            throw InternalError("node index out of range: (" + std::to_string(from) + ", " +
                                std::to_string(to) + ") with " + std::to_string(d_) + " nodes");
        }
    }

    std::size_t d_ = 0;
    std::size_t words_per_row_ = 0;
    std::vector<std::uint64_t> bits_;
};

// Reachability-by-nonempty-path closure (Warshall over bit rows). A node is
// never its own ancestor in the result, even inside a cycle, because the
// graph type cannot hold self loops. Idempotent.
inline CausalGraph transitive_closure(const CausalGraph& g) {
    const std::size_t d = g.node_count();
    CausalGraph closure = g;
    const std::size_t words = closure.words_per_row();
    for (std::size_t k = 0; k < d; ++k) {
        const std::uint64_t* row_k = closure.row(k);
        for (std::size_t i = 0; i < d; ++i) {
            if (i == k) continue;
            std::uint64_t* row_i = closure.row(i);
            if ((row_i[k >> 6] >> (k & 63)) & 1u) {
                for (std::size_t w = 0; w < words; ++w) row_i[w] |= row_k[w];
            }
        }
    }
    // A cycle through i would set bit (i, i) above; strip it to keep the
    // no-self-loop invariant.
    for (std::size_t i = 0; i < d; ++i) {
        closure.row(i)[i >> 6] &= ~(std::uint64_t{1} << (i & 63));
    }
    return closure;
}

// Square matrix of pairwise scores in [0, 1]; the diagonal has no meaning
// and always reads NaN.
class ProbabilityMatrix {
  public:
    ProbabilityMatrix() = default;

    explicit ProbabilityMatrix(std::size_t node_count)
        : d_(node_count), values_(node_count * node_count, 0.0) {
        for (std::size_t i = 0; i < d_; ++i) {
            values_[i * d_ + i] = std::numeric_limits<double>::quiet_NaN();
        }
    }

    std::size_t node_count() const noexcept { return d_; }

    double at(std::size_t from, std::size_t to) const {
        check_pair(from, to);
        return values_[from * d_ + to];
    }

    void set(std::size_t from, std::size_t to, double value) {
        check_pair(from, to);
        if (from == to) throw InternalError("diagonal of a probability matrix is not writable");
        if (!(value >= 0.0 && value <= 1.0)) {
            throw DataError("probability out of [0, 1]: " + std::to_string(value));
        }
        values_[from * d_ + to] = value;
    }

    bool operator==(const ProbabilityMatrix& other) const {
        if (d_ != other.d_) return false;
        for (std::size_t i = 0; i < values_.size(); ++i) {
            const bool nan_a = std::isnan(values_[i]);
            const bool nan_b = std::isnan(other.values_[i]);
            if (nan_a != nan_b) return false;
            if (!nan_a && values_[i] != other.values_[i]) return false;
        }
        return true;
    }

  private:
    void check_pair(std::size_t from, std::size_t to) const {
        if (from >= d_ || to >= d_) {
            throw InternalError("pair index out of range: (" + std::to_string(from) + ", " +
                                std::to_string(to) + ") with " + std::to_string(d_) + " nodes");
        }
    }

    std::size_t d_ = 0;
    std::vector<double> values_;
};

inline CausalGraph binarize(const ProbabilityMatrix& p, EdgeThreshold threshold) {
    const std::size_t d = p.node_count();
    CausalGraph g(d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            if (i == j) continue;
            if (p.at(i, j) >= threshold.value()) g.set_edge(i, j);
        }
    }
    return g;
}

}  // namespace causalbench
