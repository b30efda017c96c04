#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "causalbench/ingest.hpp"

using namespace causalbench;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "causalbench_unit_ingest";
    fs::create_directories(dir);
    return dir / name;
}

std::string write_temp(const std::string& name, const std::string& content) {
    const auto path = temp_file(name);
    detail::write_file(path.string(), content);
    return path.string();
}

ScreenMatrix small_screen() {
    // Two controls, one cell per perturbed gene, values chosen by hand.
    const GenePanel panel({"G1", "G2", "G3"});
    std::vector<std::string> ids{"c1", "c2", "p1", "p2"};
    std::vector<PerturbationLabel> labels{
        PerturbationLabel::control(), PerturbationLabel::control(),
        PerturbationLabel::target(0), PerturbationLabel::target(1)};
    std::vector<double> values{
        1.0, 10.0, 5.0,   // c1
        3.0, 14.0, 7.0,   // c2
        0.0, 12.0, 6.0,   // p1 (G1 knocked down)
        2.0, 2.0, 6.0,    // p2 (G2 knocked down)
    };
    return ScreenMatrix(panel, ids, labels, values);
}

}  // namespace

TEST_CASE("dense screen loads values and labels") {
    const auto matrix = write_temp("dense.tsv",
                                   "cell_id\tG1\tG2\n"
                                   "c1\t1.5\t2.5\n"
                                   "c2\t0\t-3.25\n"
                                   "p1\t4\t5\n");
    const auto labels = write_temp("dense_labels.tsv",
                                   "c1\tcontrol\n"
                                   "c2\tcontrol\n"
                                   "p1\tG2\n");
    const auto s = load_screen(matrix, labels);
    REQUIRE(s.cell_count() == 3);
    REQUIRE(s.gene_count() == 2);
    REQUIRE(s.control_count() == 2);
    REQUIRE(s.value(0, 1) == 2.5);
    REQUIRE(s.value(1, 1) == -3.25);
    REQUIRE(s.labels()[2] == PerturbationLabel::target(1));

    const auto matrix_out = temp_file("dense_out.tsv").string();
    const auto labels_out = temp_file("dense_labels_out.tsv").string();
    save_screen(s, matrix_out, labels_out);
    const auto reloaded = load_screen(matrix_out, labels_out);
    REQUIRE(reloaded.cell_ids() == s.cell_ids());
    REQUIRE(reloaded.labels() == s.labels());
    for (std::size_t c = 0; c < s.cell_count(); ++c) {
        for (std::size_t g = 0; g < s.gene_count(); ++g) {
            REQUIRE(reloaded.value(c, g) == s.value(c, g));
        }
    }
}

TEST_CASE("dense screen rejects malformed inputs") {
    const auto labels_ok = write_temp("labels_ok.tsv", "c1\tcontrol\nc2\tcontrol\n");

    // Cell without a label.
    const auto m1 = write_temp("m1.tsv", "cell_id\tG1\nc1\t1\nzz\t2\n");
    REQUIRE_THROWS_AS(load_screen(m1, labels_ok), LabelError);

    // Unparsable expression value.
    const auto m2 = write_temp("m2.tsv", "cell_id\tG1\nc1\tx\nc2\t2\n");
    REQUIRE_THROWS_AS(load_screen(m2, labels_ok), DataError);

    // Non-finite value.
    const auto m3 = write_temp("m3.tsv", "cell_id\tG1\nc1\tinf\nc2\t2\n");
    REQUIRE_THROWS_AS(load_screen(m3, labels_ok), DataError);

    // Field count mismatch.
    const auto m4 = write_temp("m4.tsv", "cell_id\tG1\tG2\nc1\t1\nc2\t2\t3\n");
    REQUIRE_THROWS_AS(load_screen(m4, labels_ok), SchemaError);

    // Duplicate gene in the header.
    const auto m5 = write_temp("m5.tsv", "cell_id\tG1\tG1\nc1\t1\t2\nc2\t2\t3\n");
    REQUIRE_THROWS_AS(load_screen(m5, labels_ok), SchemaError);

    // Target that is not a panel gene.
    const auto m6 = write_temp("m6.tsv", "cell_id\tG1\nc1\t1\nc2\t2\n");
    const auto bad_target = write_temp("bad_target.tsv", "c1\tcontrol\nc2\tG9\n");
    REQUIRE_THROWS_AS(load_screen(m6, bad_target), LabelError);

    // No control cells at all.
    const auto no_control = write_temp("no_control.tsv", "c1\tG1\nc2\tG1\n");
    REQUIRE_THROWS_AS(load_screen(m6, no_control), EmptyControlError);

    // Duplicate label line.
    const auto dup_label = write_temp("dup_label.tsv", "c1\tcontrol\nc1\tcontrol\n");
    REQUIRE_THROWS_AS(load_screen(m6, dup_label), SchemaError);
}

TEST_CASE("sparse triplets fill a dense screen with zeros elsewhere") {
    const auto labels = write_temp("sparse_labels.tsv",
                                   "# cell\ttarget\n"
                                   "c1\tcontrol\n"
                                   "c2\tG1\n"
                                   "c3\tcontrol\n");
    const auto triplets = write_temp("sparse.tsv",
                                     "c1\tG1\t2.5\n"
                                     "c3\tG2\t-1\n"
                                     "c1\tG2\t4\n");
    const auto s = load_screen_sparse(triplets, labels, GenePanel({"G1", "G2"}));
    REQUIRE(s.cell_count() == 3);
    REQUIRE(s.cell_ids() == std::vector<std::string>{"c1", "c2", "c3"});  // labels file order
    REQUIRE(s.value(0, 0) == 2.5);
    REQUIRE(s.value(0, 1) == 4.0);
    REQUIRE(s.value(1, 0) == 0.0);  // absent triplet
    REQUIRE(s.value(1, 1) == 0.0);
    REQUIRE(s.value(2, 1) == -1.0);

    const auto unknown_cell = write_temp("sparse_bad.tsv", "zz\tG1\t1\n");
    REQUIRE_THROWS_AS(load_screen_sparse(unknown_cell, labels, GenePanel({"G1", "G2"})), LabelError);
    const auto unknown_gene = write_temp("sparse_bad2.tsv", "c1\tG9\t1\n");
    REQUIRE_THROWS_AS(load_screen_sparse(unknown_gene, labels, GenePanel({"G1", "G2"})),
                      SchemaError);
}

TEST_CASE("filter drops low-total cells, sparse genes, and orphaned targets") {
    const GenePanel panel({"G1", "G2", "G3"});
    std::vector<std::string> ids{"c1", "c2", "p1", "p3", "tiny"};
    std::vector<PerturbationLabel> labels{
        PerturbationLabel::control(), PerturbationLabel::control(),
        PerturbationLabel::target(0), PerturbationLabel::target(2),
        PerturbationLabel::control()};
    // G3 is non-zero only in the cell "tiny", which the cell filter removes,
    // so the gene filter then drops G3, which in turn drops the cell p3.
    std::vector<double> values{
        5.0, 5.0, 0.0,   // c1
        6.0, 4.0, 0.0,   // c2
        1.0, 9.0, 0.0,   // p1
        7.0, 3.0, 0.0,   // p3
        0.1, 0.0, 0.2,   // tiny (total 0.3)
    };
    const ScreenMatrix s(panel, ids, labels, values);

    FilterParams params;
    params.min_cell_total = 1.0;
    params.min_gene_nonzero_fraction = 0.25;
    const auto outcome = filter_low_quality(s, params);

    REQUIRE(outcome.dropped_cells == std::vector<std::string>{"tiny", "p3"});
    REQUIRE(outcome.dropped_genes == std::vector<std::string>{"G3"});
    const auto& f = outcome.screen;
    REQUIRE(f.cell_ids() == std::vector<std::string>{"c1", "c2", "p1"});
    REQUIRE(f.panel().symbols() == std::vector<std::string>{"G1", "G2"});
    REQUIRE(f.labels()[2] == PerturbationLabel::target(0));  // remapped to the new panel
    REQUIRE(f.value(2, 1) == 9.0);
}

TEST_CASE("filter with permissive thresholds is the identity") {
    const auto s = small_screen();
    const auto outcome = filter_low_quality(s, FilterParams{});
    REQUIRE(outcome.dropped_cells.empty());
    REQUIRE(outcome.dropped_genes.empty());
    REQUIRE(outcome.screen.cell_ids() == s.cell_ids());
    for (std::size_t c = 0; c < s.cell_count(); ++c) {
        for (std::size_t g = 0; g < s.gene_count(); ++g) {
            REQUIRE(outcome.screen.value(c, g) == s.value(c, g));
        }
    }
}

TEST_CASE("control statistics use the population convention") {
    const auto s = small_screen();
    const auto stats = control_stats(s);
    // Controls: G1 in {1, 3}, G2 in {10, 14}, G3 in {5, 7}.
    REQUIRE_THAT(stats.mean[0], Catch::Matchers::WithinAbs(2.0, 1e-15));
    REQUIRE_THAT(stats.sd[0], Catch::Matchers::WithinAbs(1.0, 1e-15));  // divisor n = 2
    REQUIRE_THAT(stats.mean[1], Catch::Matchers::WithinAbs(12.0, 1e-15));
    REQUIRE_THAT(stats.sd[1], Catch::Matchers::WithinAbs(2.0, 1e-15));
    REQUIRE_THAT(stats.sd[2], Catch::Matchers::WithinAbs(1.0, 1e-15));
}

TEST_CASE("z-normalization centers controls and applies to all cells") {
    const auto s = small_screen();
    const auto z = z_normalize(s);
    REQUIRE(z.cell_ids() == s.cell_ids());
    REQUIRE(z.labels() == s.labels());
    // Control columns become mean 0, population sd 1.
    for (std::size_t g = 0; g < z.gene_count(); ++g) {
        const auto column = z.gene_column(g, [](const PerturbationLabel& l) { return l.is_control(); });
        const auto ms = detail::mean_population_sd(column);
        REQUIRE_THAT(ms.mean, Catch::Matchers::WithinAbs(0.0, 1e-12));
        REQUIRE_THAT(ms.sd, Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
    // Perturbed cells use the control statistics: p1 G1 = (0 - 2) / 1.
    REQUIRE_THAT(z.value(2, 0), Catch::Matchers::WithinAbs(-2.0, 1e-15));
    REQUIRE_THAT(z.value(3, 1), Catch::Matchers::WithinAbs(-5.0, 1e-15));
}

TEST_CASE("z-normalization lists every degenerate gene at once") {
    const GenePanel panel({"G1", "G2", "G3"});
    std::vector<std::string> ids{"c1", "c2", "p1"};
    std::vector<PerturbationLabel> labels{PerturbationLabel::control(),
                                          PerturbationLabel::control(),
                                          PerturbationLabel::target(0)};
    // G1 and G3 are constant across controls, G2 is not.
    std::vector<double> values{4.0, 1.0, 7.0, 4.0, 2.0, 7.0, 9.0, 9.0, 9.0};
    const ScreenMatrix s(panel, ids, labels, values);
    try {
        z_normalize(s);
        FAIL("expected DegenerateGeneError");
    } catch (const DegenerateGeneError& e) {
        const std::string msg = e.what();
        REQUIRE(msg.find("G1") != std::string::npos);
        REQUIRE(msg.find("G3") != std::string::npos);
        REQUIRE(msg.find("G2") == std::string::npos);
    }
}

TEST_CASE("normalization is invariant to cell order") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    const std::size_t cells = 60;
    const std::size_t genes = 5;
    const GenePanel panel({"A", "B", "C", "D", "E"});

    std::vector<std::string> ids;
    std::vector<PerturbationLabel> labels;
    std::vector<double> values;
    for (std::size_t c = 0; c < cells; ++c) {
        ids.push_back("cell" + std::to_string(c));
        labels.push_back(c % 3 == 0 ? PerturbationLabel::control()
                                    : PerturbationLabel::target(c % genes));
        for (std::size_t g = 0; g < genes; ++g) values.push_back(unif(rng));
    }
    const ScreenMatrix s(panel, ids, labels, values);
    const auto z1 = z_normalize(s);

    // Shuffle cell order and normalize again.
    std::vector<std::size_t> perm(cells);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::string> ids2;
    std::vector<PerturbationLabel> labels2;
    std::vector<double> values2;
    for (const std::size_t c : perm) {
        ids2.push_back(ids[c]);
        labels2.push_back(labels[c]);
        for (std::size_t g = 0; g < genes; ++g) values2.push_back(s.value(c, g));
    }
    const auto z2 = z_normalize(ScreenMatrix(panel, ids2, labels2, values2));

    // Identical per cell id, bit for bit: the control sums do not depend on
    // the order the cells arrived in.
    for (std::size_t c2 = 0; c2 < cells; ++c2) {
        const std::size_t c1 = perm[c2];
        for (std::size_t g = 0; g < genes; ++g) {
            REQUIRE(z2.value(c2, g) == z1.value(c1, g));
        }
    }
}
