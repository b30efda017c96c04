#pragma once

// CSV persistence for graphs and probability matrices.
//
// Layout: first line is an empty corner cell followed by the panel symbols;
// each following row starts with its symbol, then one value per column.
// Diagonal cells are written empty and must be empty on load. Graph cells
// hold 0 or 1; probability cells hold decimal floats that round-trip.

#include <cstddef>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "causalbench/core.hpp"
#include "causalbench/detail/text.hpp"
#include "causalbench/errors.hpp"

namespace causalbench {

namespace detail_io {

inline void check_symbol_cell(const std::string& got, const std::string& expected, std::size_t line_no,
                              const std::string& path) {
    if (got != expected) {
        throw SchemaError(path + ":" + std::to_string(line_no) + ": row symbol '" + got +
                          "' does not match header order (expected '" + expected + "')");
    }
}

template <typename CellWriter>
inline std::string render_matrix_csv(const GenePanel& panel, CellWriter&& cell) {
    std::ostringstream out;
    const std::size_t d = panel.size();
    for (std::size_t j = 0; j < d; ++j) out << ',' << panel.symbol(j);
    out << '\n';
    for (std::size_t i = 0; i < d; ++i) {
        out << panel.symbol(i);
        for (std::size_t j = 0; j < d; ++j) {
            out << ',';
            if (i != j) out << cell(i, j);
        }
        out << '\n';
    }
    return out.str();
}

struct ParsedMatrixCsv {
    GenePanel panel;
    std::vector<std::vector<std::string>> cells;  // d rows of d cell strings, diagonal empty
};

inline ParsedMatrixCsv parse_matrix_csv(const std::string& path) {
    const auto lines = detail::split_lines(detail::read_file(path));
    if (lines.empty()) throw SchemaError(path + ": empty file");
    auto header = detail::split(lines[0], ',');
    if (header.empty() || !detail::trim(header[0]).empty()) {
        throw SchemaError(path + ": header must start with an empty corner cell");
    }
    std::vector<std::string> symbols(header.begin() + 1, header.end());
    ParsedMatrixCsv out;
    try {
        out.panel = GenePanel(symbols);
    } catch (const PanelError& e) {
        throw SchemaError(path + ": " + e.what());
    }
    const std::size_t d = symbols.size();
    if (lines.size() != d + 1) {
        throw SchemaError(path + ": expected " + std::to_string(d) + " data rows, found " +
                          std::to_string(lines.size() - 1));
    }
    out.cells.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        auto fields = detail::split(lines[i + 1], ',');
        if (fields.size() != d + 1) {
            throw SchemaError(path + ":" + std::to_string(i + 2) + ": expected " +
                              std::to_string(d + 1) + " fields, found " + std::to_string(fields.size()));
        }
        check_symbol_cell(fields[0], symbols[i], i + 2, path);
        for (std::size_t j = 0; j < d; ++j) {
            const std::string cell(detail::trim(fields[j + 1]));
            if (i == j) {
                if (!cell.empty()) {
                    throw SchemaError(path + ":" + std::to_string(i + 2) +
                                      ": diagonal cell must be empty, found '" + cell + "'");
                }
            } else if (cell.empty()) {
                throw SchemaError(path + ":" + std::to_string(i + 2) + ": empty off-diagonal cell in column " +
                                  symbols[j]);
            }
            out.cells[i].push_back(cell);
        }
    }
    return out;
}

}  // namespace detail_io

inline void save_graph(const std::string& path, const CausalGraph& g, const GenePanel& panel) {
    if (g.node_count() != panel.size()) throw ShapeError("graph size does not match panel size");
    detail::write_file(path, detail_io::render_matrix_csv(
                                 panel, [&](std::size_t i, std::size_t j) { return g.edge(i, j) ? "1" : "0"; }));
}

inline std::pair<CausalGraph, GenePanel> load_graph(const std::string& path) {
    auto parsed = detail_io::parse_matrix_csv(path);
    const std::size_t d = parsed.panel.size();
    CausalGraph g(d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            if (i == j) continue;
            const std::string& cell = parsed.cells[i][j];
            if (cell == "1") {
                g.set_edge(i, j);
            } else if (cell != "0") {
                throw SchemaError(path + ":" + std::to_string(i + 2) +
                                  ": graph cell must be 0 or 1, found '" + cell + "'");
            }
        }
    }
    return {std::move(g), std::move(parsed.panel)};
}

inline void save_probability_matrix(const std::string& path, const ProbabilityMatrix& p,
                                    const GenePanel& panel) {
    if (p.node_count() != panel.size()) throw ShapeError("matrix size does not match panel size");
    detail::write_file(path, detail_io::render_matrix_csv(panel, [&](std::size_t i, std::size_t j) {
                           return detail::format_double(p.at(i, j));
                       }));
}

inline std::pair<ProbabilityMatrix, GenePanel> load_probability_matrix(const std::string& path) {
    auto parsed = detail_io::parse_matrix_csv(path);
    const std::size_t d = parsed.panel.size();
    ProbabilityMatrix p(d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            if (i == j) continue;
            const auto v = detail::parse_double(parsed.cells[i][j]);
            if (!v) {
                throw SchemaError(path + ":" + std::to_string(i + 2) + ": unparsable probability '" +
                                  parsed.cells[i][j] + "' at (" + parsed.panel.symbol(i) + ", " +
                                  parsed.panel.symbol(j) + ")");
            }
            try {
                p.set(i, j, *v);
            } catch (const DataError&) {
                throw SchemaError(path + ":" + std::to_string(i + 2) + ": probability out of [0, 1] at (" +
                                  parsed.panel.symbol(i) + ", " + parsed.panel.symbol(j) + "): " +
                                  parsed.cells[i][j]);
            }
        }
    }
    return {std::move(p), std::move(parsed.panel)};
}

}  // namespace causalbench
