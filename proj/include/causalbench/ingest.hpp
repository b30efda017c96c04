#pragma once

// Perturbation-screen ingestion: dense and sparse readers for the
// cells x genes expression table, per-cell perturbation labels, low-quality
// filtering, and z-normalization against the control population.
//
// Dense matrix file (TSV by default): header "cell_id<TAB>SYM1<TAB>...",
// one row per cell. Labels file: two columns "cell_id<TAB>target" where
// target is a panel symbol or the literal "control". Every matrix cell id
// must be labeled exactly once.
//
// Sparse alternative: three columns "cell_id<TAB>gene<TAB>value"; cells are
// those present in the labels file and unlisted (cell, gene) entries are 0.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "causalbench/core.hpp"
#include "causalbench/detail/numeric.hpp"
#include "causalbench/detail/text.hpp"
#include "causalbench/errors.hpp"

namespace causalbench {

class ScreenMatrix {
  public:
    ScreenMatrix() = default;

    ScreenMatrix(GenePanel panel, std::vector<std::string> cell_ids,
                 std::vector<PerturbationLabel> labels, std::vector<double> values)
        : panel_(std::move(panel)),
          cell_ids_(std::move(cell_ids)),
          labels_(std::move(labels)),
          values_(std::move(values)) {
        validate();
    }

    const GenePanel& panel() const noexcept { return panel_; }
    std::size_t cell_count() const noexcept { return cell_ids_.size(); }
    std::size_t gene_count() const noexcept { return panel_.size(); }
    const std::vector<std::string>& cell_ids() const noexcept { return cell_ids_; }
    const std::vector<PerturbationLabel>& labels() const noexcept { return labels_; }

    double value(std::size_t cell, std::size_t gene) const {
        return values_.at(cell * panel_.size() + gene);
    }
    void set_value(std::size_t cell, std::size_t gene, double v) {
        values_.at(cell * panel_.size() + gene) = v;
    }

    std::size_t control_count() const {
        std::size_t n = 0;
        for (const auto& l : labels_) {
            if (l.is_control()) ++n;
        }
        return n;
    }

    // Values of one gene across the cells selected by pred, in stored cell
    // order.
    template <typename Pred>
    std::vector<double> gene_column(std::size_t gene, Pred&& pred) const {
        std::vector<double> out;
        for (std::size_t c = 0; c < cell_count(); ++c) {
            if (pred(labels_[c])) out.push_back(value(c, gene));
        }
        return out;
    }

  private:
    void validate() const {
        if (panel_.size() == 0) throw ShapeError("screen has an empty gene panel");
        if (cell_ids_.empty()) throw ShapeError("screen has no cells");
        if (labels_.size() != cell_ids_.size()) {
            throw ShapeError("label count does not match cell count");
        }
        if (values_.size() != cell_ids_.size() * panel_.size()) {
            throw ShapeError("value buffer does not match cells x genes");
        }
        std::unordered_set<std::string> seen;
        for (const auto& id : cell_ids_) {
            if (id.empty()) throw SchemaError("empty cell id");
            if (!seen.insert(id).second) throw SchemaError("duplicate cell id: " + id);
        }
        if (!detail::all_finite(values_)) throw DataError("screen contains non-finite values");
        if (control_count() == 0) throw EmptyControlError("screen has no control cells");
    }

    GenePanel panel_;
    std::vector<std::string> cell_ids_;
    std::vector<PerturbationLabel> labels_;
    std::vector<double> values_;
};

namespace detail_ingest {

inline PerturbationLabel parse_label(const GenePanel& panel, const std::string& target,
                                     const std::string& context) {
    if (target == "control") return PerturbationLabel::control();
    const auto idx = panel.find(target);
    if (!idx) {
        throw LabelError(context + ": perturbation target '" + target +
                         "' is neither 'control' nor a panel gene");
    }
    return PerturbationLabel::target(*idx);
}

inline std::unordered_map<std::string, std::string> read_label_map(
    const std::string& labels_path, char delim, std::vector<std::string>* order) {
    const auto lines = detail::split_lines(detail::read_file(labels_path));
    std::unordered_map<std::string, std::string> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string_view line = detail::trim(lines[i]);
        if (line.empty() || line.front() == '#') continue;
        const auto fields = detail::split(line, delim);
        if (fields.size() != 2) {
            throw SchemaError(labels_path + ":" + std::to_string(i + 1) +
                              ": expected two fields (cell_id, target)");
        }
        const std::string id(detail::trim(fields[0]));
        const std::string target(detail::trim(fields[1]));
        if (!out.emplace(id, target).second) {
            throw SchemaError(labels_path + ": duplicate label for cell '" + id + "'");
        }
        if (order) order->push_back(id);
    }
    if (out.empty()) throw SchemaError(labels_path + ": no labels found");
    return out;
}

}  // namespace detail_ingest

inline ScreenMatrix load_screen(const std::string& matrix_path, const std::string& labels_path,
                                char delim = '\t') {
    const auto lines = detail::split_lines(detail::read_file(matrix_path));
    if (lines.empty()) throw SchemaError(matrix_path + ": empty file");
    const auto header = detail::split(lines[0], delim);
    if (header.size() < 2) throw SchemaError(matrix_path + ": header must list at least one gene");
    std::vector<std::string> symbols;
    for (std::size_t j = 1; j < header.size(); ++j) symbols.emplace_back(detail::trim(header[j]));
    GenePanel panel;
    try {
        panel = GenePanel(symbols);
    } catch (const PanelError& e) {
        throw SchemaError(matrix_path + ": " + e.what());
    }

    const auto label_map = detail_ingest::read_label_map(labels_path, delim, nullptr);

    std::vector<std::string> cell_ids;
    std::vector<PerturbationLabel> labels;
    std::vector<double> values;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (detail::trim(lines[i]).empty()) continue;
        const auto fields = detail::split(lines[i], delim);
        if (fields.size() != header.size()) {
            throw SchemaError(matrix_path + ":" + std::to_string(i + 1) + ": expected " +
                              std::to_string(header.size()) + " fields, found " +
                              std::to_string(fields.size()));
        }
        const std::string id(detail::trim(fields[0]));
        const auto label_it = label_map.find(id);
        if (label_it == label_map.end()) {
            throw LabelError(matrix_path + ": cell '" + id + "' has no label in " + labels_path);
        }
        cell_ids.push_back(id);
        labels.push_back(detail_ingest::parse_label(panel, label_it->second,
                                                    labels_path + " (cell " + id + ")"));
        for (std::size_t j = 1; j < fields.size(); ++j) {
            const auto v = detail::parse_double(fields[j]);
            if (!v || !std::isfinite(*v)) {
                throw DataError(matrix_path + ":" + std::to_string(i + 1) +
                                ": unparsable or non-finite value '" + fields[j] + "'");
            }
            values.push_back(*v);
        }
    }
    return ScreenMatrix(std::move(panel), std::move(cell_ids), std::move(labels), std::move(values));
}

// Sparse triplet reader. The cell universe and ordering come from the labels
// file; genes must come from the given panel; missing entries are 0.
inline ScreenMatrix load_screen_sparse(const std::string& triplets_path,
                                       const std::string& labels_path, GenePanel panel,
                                       char delim = '\t') {
    std::vector<std::string> cell_order;
    const auto label_map = detail_ingest::read_label_map(labels_path, delim, &cell_order);
    std::unordered_map<std::string, std::size_t> cell_index;
    for (std::size_t i = 0; i < cell_order.size(); ++i) cell_index.emplace(cell_order[i], i);

    std::vector<double> values(cell_order.size() * panel.size(), 0.0);
    const auto lines = detail::split_lines(detail::read_file(triplets_path));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string_view line = detail::trim(lines[i]);
        if (line.empty() || line.front() == '#') continue;
        const auto fields = detail::split(line, delim);
        if (fields.size() != 3) {
            throw SchemaError(triplets_path + ":" + std::to_string(i + 1) +
                              ": expected three fields (cell_id, gene, value)");
        }
        const std::string id(detail::trim(fields[0]));
        const auto cit = cell_index.find(id);
        if (cit == cell_index.end()) {
            throw LabelError(triplets_path + ":" + std::to_string(i + 1) + ": cell '" + id +
                             "' has no label in " + labels_path);
        }
        const std::string gene(detail::trim(fields[1]));
        const auto gidx = panel.find(gene);
        if (!gidx) {
            throw SchemaError(triplets_path + ":" + std::to_string(i + 1) + ": gene '" + gene +
                              "' is not in the panel");
        }
        const auto v = detail::parse_double(fields[2]);
        if (!v || !std::isfinite(*v)) {
            throw DataError(triplets_path + ":" + std::to_string(i + 1) +
                            ": unparsable or non-finite value '" + std::string(fields[2]) + "'");
        }
        values[cit->second * panel.size() + *gidx] = *v;
    }

    std::vector<PerturbationLabel> labels;
    for (const auto& id : cell_order) {
        labels.push_back(detail_ingest::parse_label(panel, label_map.at(id),
                                                    labels_path + " (cell " + id + ")"));
    }
    return ScreenMatrix(std::move(panel), std::move(cell_order), std::move(labels),
                        std::move(values));
}

inline void save_screen(const ScreenMatrix& s, const std::string& matrix_path,
                        const std::string& labels_path, char delim = '\t') {
    std::ostringstream matrix;
    matrix << "cell_id";
    for (const auto& sym : s.panel().symbols()) matrix << delim << sym;
    matrix << '\n';
    for (std::size_t c = 0; c < s.cell_count(); ++c) {
        matrix << s.cell_ids()[c];
        for (std::size_t g = 0; g < s.gene_count(); ++g) {
            matrix << delim << detail::format_double(s.value(c, g));
        }
        matrix << '\n';
    }
    detail::write_file(matrix_path, matrix.str());

    std::ostringstream labels;
    for (std::size_t c = 0; c < s.cell_count(); ++c) {
        const auto& l = s.labels()[c];
        labels << s.cell_ids()[c] << delim
               << (l.is_control() ? "control" : s.panel().symbol(l.target_index())) << '\n';
    }
    detail::write_file(labels_path, labels.str());
}

struct FilterParams {
    // Drop cells whose total expression falls below this.
    double min_cell_total = 0.0;
    // Drop genes expressed (value != 0) in fewer than this fraction of the
    // surviving cells.
    double min_gene_nonzero_fraction = 0.0;
};

struct FilterOutcome {
    ScreenMatrix screen;
    std::vector<std::string> dropped_cells;
    std::vector<std::string> dropped_genes;
};

// Cells are filtered first, then genes are assessed on the surviving cells.
// Dropping a perturbed gene also drops the cells that targeted it, so labels
// always refer to panel members.
inline FilterOutcome filter_low_quality(const ScreenMatrix& s, const FilterParams& params) {
    FilterOutcome out;

    std::vector<std::size_t> kept_cells;
    for (std::size_t c = 0; c < s.cell_count(); ++c) {
        std::vector<double> row(s.gene_count());
        for (std::size_t g = 0; g < s.gene_count(); ++g) row[g] = s.value(c, g);
        if (detail::stable_sum(row) >= params.min_cell_total) {
            kept_cells.push_back(c);
        } else {
            out.dropped_cells.push_back(s.cell_ids()[c]);
        }
    }
    if (kept_cells.empty()) throw DataError("filter removed every cell");

    std::vector<bool> keep_gene(s.gene_count(), true);
    for (std::size_t g = 0; g < s.gene_count(); ++g) {
        std::size_t nonzero = 0;
        for (std::size_t c : kept_cells) {
            if (s.value(c, g) != 0.0) ++nonzero;
        }
        const double fraction = static_cast<double>(nonzero) / static_cast<double>(kept_cells.size());
        if (fraction < params.min_gene_nonzero_fraction) {
            keep_gene[g] = false;
            out.dropped_genes.push_back(s.panel().symbol(g));
        }
    }

    std::vector<std::string> kept_symbols;
    std::vector<std::size_t> gene_old_index;
    for (std::size_t g = 0; g < s.gene_count(); ++g) {
        if (keep_gene[g]) {
            kept_symbols.push_back(s.panel().symbol(g));
            gene_old_index.push_back(g);
        }
    }
    if (kept_symbols.empty()) throw DataError("filter removed every gene");
    GenePanel panel(kept_symbols);

    std::vector<std::string> cell_ids;
    std::vector<PerturbationLabel> labels;
    std::vector<double> values;
    for (std::size_t c : kept_cells) {
        const auto& label = s.labels()[c];
        if (!label.is_control() && !keep_gene[label.target_index()]) {
            out.dropped_cells.push_back(s.cell_ids()[c]);
            continue;
        }
        cell_ids.push_back(s.cell_ids()[c]);
        labels.push_back(label.is_control()
                             ? PerturbationLabel::control()
                             : PerturbationLabel::target(
                                   panel.index_of(s.panel().symbol(label.target_index()))));
        for (std::size_t g : gene_old_index) values.push_back(s.value(c, g));
    }
    if (cell_ids.empty()) throw DataError("filter removed every cell");
    out.screen = ScreenMatrix(std::move(panel), std::move(cell_ids), std::move(labels),
                              std::move(values));
    return out;
}

struct ControlStats {
    std::vector<double> mean;  // per gene, over control cells
    std::vector<double> sd;    // population convention (divisor n)
};

inline ControlStats control_stats(const ScreenMatrix& s) {
    if (s.control_count() == 0) throw EmptyControlError("no control cells to normalize against");
    ControlStats out;
    out.mean.resize(s.gene_count());
    out.sd.resize(s.gene_count());
    for (std::size_t g = 0; g < s.gene_count(); ++g) {
        const auto column = s.gene_column(g, [](const PerturbationLabel& l) { return l.is_control(); });
        const auto ms = detail::mean_population_sd(column);
        out.mean[g] = ms.mean;
        out.sd[g] = ms.sd;
    }
    return out;
}

// Per gene: (x - control mean) / control sd, applied to every cell. Genes
// whose control sd is zero make the transform undefined; all offenders are
// listed in one error.
inline ScreenMatrix z_normalize(const ScreenMatrix& s) {
    const auto stats = control_stats(s);
    std::vector<std::string> degenerate;
    for (std::size_t g = 0; g < s.gene_count(); ++g) {
        if (stats.sd[g] == 0.0) degenerate.push_back(s.panel().symbol(g));
    }
    if (!degenerate.empty()) {
        std::string msg = "control standard deviation is zero for: ";
        for (std::size_t i = 0; i < degenerate.size(); ++i) {
            if (i > 0) msg += ", ";
            msg += degenerate[i];
        }
        throw DegenerateGeneError(msg);
    }
    std::vector<double> values;
    values.reserve(s.cell_count() * s.gene_count());
    for (std::size_t c = 0; c < s.cell_count(); ++c) {
        for (std::size_t g = 0; g < s.gene_count(); ++g) {
            values.push_back((s.value(c, g) - stats.mean[g]) / stats.sd[g]);
        }
    }
    return ScreenMatrix(s.panel(), s.cell_ids(), s.labels(), std::move(values));
}

}  // namespace causalbench
