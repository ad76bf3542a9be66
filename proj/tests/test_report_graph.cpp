#include "agx/report_graph.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <memory>
#include <random>
#include <string>
#include <vector>

using namespace agx;
using namespace agx::report;

namespace {

std::shared_ptr<const Vocabulary> small_vocab() {
    return std::make_shared<Vocabulary>(
        std::vector<std::string>{"right lower lung", "left lower lung", "lung bases"},
        std::vector<std::string>{"opacity", "pneumothorax", "atelectasis"});
}

// Independent re-statement of the textual label rules, used as the oracle:
// collect each column/row as a string of cell letters and apply the three
// sentences directly.
Label3 oracle_column_rule(const std::string& cells) {
    if (cells.find('P') != std::string::npos) return Label3::Positive;
    if (cells.find('N') != std::string::npos) return Label3::Negative;
    return Label3::Unlabeled;
}

bool oracle_row_rule(const std::string& cells) {
    return cells.find('P') != std::string::npos;
}

AdjacencyMatrix random_matrix(std::mt19937_64& rng, std::shared_ptr<const Vocabulary> vocab,
                              double fill = 0.5) {
    AdjacencyMatrix m("rand", vocab);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> pick(1, 3);
    for (std::size_t j = 0; j < m.n_rows(); ++j)
        for (std::size_t k = 0; k < m.n_cols(); ++k)
            if (coin(rng) < fill) m.set(j, k, static_cast<RelationState>(pick(rng)));
    return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// parsing
// ---------------------------------------------------------------------------

TEST_CASE("parse_annotations accepts a single negated observation") {
    // "No evidence of pneumothorax": one OBS-DA entity, no relations.
    std::string doc = R"({"doc_id": "r1", "entities": {
        "e1": {"tokens": "pneumothorax", "label": "OBS-DA", "relations": []}}})";
    auto parsed = parse_annotations(doc);
    REQUIRE(parsed.doc_id == "r1");
    REQUIRE(parsed.entities.size() == 1);
    CHECK(parsed.entities[0].label == EntityLabel::ObsDa);
    CHECK(parsed.entities[0].relations.empty());
}

TEST_CASE("parse_annotations accepts an empty entity list") {
    auto parsed = parse_annotations(R"({"doc_id": "r2", "entities": {}})");
    CHECK(parsed.doc_id == "r2");
    CHECK(parsed.entities.empty());
}

TEST_CASE("parse_annotations rejects dangling relation targets by id") {
    std::string doc = R"({"doc_id": "r3", "entities": {
        "e1": {"tokens": "opacity", "label": "OBS-DP", "relations": [["located_at", "e9"]]}}})";
    REQUIRE_THROWS_WITH(parse_annotations(doc), Catch::Matchers::ContainsSubstring("e9"));
}

TEST_CASE("parse_annotations rejects malformed input and bad enums") {
    REQUIRE_THROWS_AS(parse_annotations("{not json"), Error);
    REQUIRE_THROWS_AS(parse_annotations(R"({"entities": {}})"), Error);  // missing doc_id
    REQUIRE_THROWS_AS(parse_annotations(R"({"doc_id": "x", "entities": {
        "e1": {"tokens": "a", "label": "OBS-XX"}}})"),
                      Error);
    REQUIRE_THROWS_AS(parse_annotations(R"({"doc_id": "x", "entities": {
        "e1": {"tokens": "a", "label": "OBS-DP", "relations": [["points_at", "e1"]]}}})"),
                      Error);
}

TEST_CASE("parse_annotations ignores unknown fields") {
    std::string doc = R"({"doc_id": "r4", "text": "free text", "entities": {
        "e1": {"tokens": "opacity", "label": "OBS-DP", "start_ix": 3, "relations": []}}})";
    CHECK(parse_annotations(doc).entities.size() == 1);
}

// ---------------------------------------------------------------------------
// adjacency construction
// ---------------------------------------------------------------------------

TEST_CASE("build_adjacency places located observations") {
    std::string doc = R"({"doc_id": "r5", "entities": {
        "e1": {"tokens": "opacity", "label": "OBS-DP", "relations": [["located_at", "e2"]]},
        "e2": {"tokens": "right lower lung", "label": "ANAT-DP", "relations": []}}})";
    auto vocab = small_vocab();
    auto m = build_adjacency(parse_annotations(doc), vocab);
    auto cell = m.at(vocab->anatomy_row("right lower lung"), vocab->observation_col("opacity"));
    REQUIRE(cell.has_value());
    CHECK(*cell == RelationState::P);
}

TEST_CASE("build_adjacency sends unlocated observations to the unspecified row") {
    std::string doc = R"({"doc_id": "r6", "entities": {
        "e1": {"tokens": "pneumothorax", "label": "OBS-DA", "relations": []}}})";
    auto vocab = small_vocab();
    auto m = build_adjacency(parse_annotations(doc), vocab);
    auto cell = m.at(vocab->unspecified_row(), vocab->observation_col("pneumothorax"));
    REQUIRE(cell.has_value());
    CHECK(*cell == RelationState::N);
}

TEST_CASE("build_adjacency routes tail tokens to the reserved buckets") {
    std::string doc = R"({"doc_id": "r7", "entities": {
        "e1": {"tokens": "opacity", "label": "OBS-DP", "relations": [["located_at", "e2"]]},
        "e2": {"tokens": "azygos lobe", "label": "ANAT-DP", "relations": []},
        "e3": {"tokens": "situs inversus", "label": "OBS-U", "relations": []}}})";
    auto vocab = small_vocab();
    auto m = build_adjacency(parse_annotations(doc), vocab);
    CHECK(m.at(vocab->other_anatomies_row(), vocab->observation_col("opacity")) ==
          RelationState::P);
    CHECK(m.at(vocab->unspecified_row(), vocab->other_observations_col()) == RelationState::U);
}

TEST_CASE("build_adjacency ignores modify and suggestive_of edges") {
    std::string doc = R"({"doc_id": "r8", "entities": {
        "e1": {"tokens": "opacity", "label": "OBS-DP",
               "relations": [["modify", "e3"], ["suggestive_of", "e3"]]},
        "e3": {"tokens": "atelectasis", "label": "OBS-U", "relations": []}}})";
    auto vocab = small_vocab();
    auto m = build_adjacency(parse_annotations(doc), vocab);
    // No located_at edge: opacity lands on unspecified, nothing else.
    CHECK(m.at(vocab->unspecified_row(), vocab->observation_col("opacity")) == RelationState::P);
    std::size_t populated = 0;
    for (std::size_t j = 0; j < m.n_rows(); ++j)
        for (std::size_t k = 0; k < m.n_cols(); ++k)
            if (m.at(j, k)) ++populated;
    CHECK(populated == 2);  // opacity + atelectasis, both unspecified
}

TEST_CASE("cell conflicts merge with precedence P > N > U") {
    auto vocab = small_vocab();
    AdjacencyMatrix m("c", vocab);
    m.set(0, 0, RelationState::U);
    m.set(0, 0, RelationState::N);
    CHECK(m.at(0, 0) == RelationState::N);
    m.set(0, 0, RelationState::P);
    CHECK(m.at(0, 0) == RelationState::P);
    m.set(0, 0, RelationState::N);  // later weaker mention cannot demote
    CHECK(m.at(0, 0) == RelationState::P);
}

// ---------------------------------------------------------------------------
// label derivation
// ---------------------------------------------------------------------------

TEST_CASE("derive_labels spec columns") {
    auto vocab = small_vocab();
    AdjacencyMatrix m("d", vocab);
    std::size_t col = vocab->observation_col("opacity");
    m.set(0, col, RelationState::P);
    m.set(1, col, RelationState::U);
    std::size_t col2 = vocab->observation_col("pneumothorax");
    m.set(0, col2, RelationState::N);
    m.set(2, col2, RelationState::U);
    auto labels = derive_labels(m);
    CHECK(labels.obs("opacity") == Label3::Positive);
    CHECK(labels.obs("pneumothorax") == Label3::Negative);
    CHECK(labels.obs("atelectasis") == Label3::Unlabeled);  // untouched column
    CHECK(labels.anat("right lower lung"));
    CHECK_FALSE(labels.anat("left lower lung"));
}

TEST_CASE("derive_labels agrees with the brute-force rule oracle", "[oracle]") {
    // 10,000 random small matrices, cells drawn from {P, N, U, absent}.
    auto vocab = std::make_shared<Vocabulary>(std::vector<std::string>{"a1", "a2", "a3"},
                                              std::vector<std::string>{"o1", "o2", "o3"});
    std::mt19937_64 rng(20240809);
    for (int iter = 0; iter < 10000; ++iter) {
        auto m = random_matrix(rng, vocab);
        auto labels = derive_labels(m);
        for (std::size_t k = 0; k < m.n_cols(); ++k) {
            std::string cells;
            for (std::size_t j = 0; j < m.n_rows(); ++j)
                if (auto s = m.at(j, k)) cells.push_back(relation_char(*s));
            REQUIRE(labels.obs_labels[k] == oracle_column_rule(cells));
        }
        for (std::size_t j = 0; j < m.n_rows(); ++j) {
            std::string cells;
            for (std::size_t k = 0; k < m.n_cols(); ++k)
                if (auto s = m.at(j, k)) cells.push_back(relation_char(*s));
            REQUIRE((labels.anat_labels[j] != 0) == oracle_row_rule(cells));
        }
    }
}

TEST_CASE("label monotonicity properties") {
    auto vocab = small_vocab();
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<std::size_t> row(0, vocab->n_rows() - 1);
    std::uniform_int_distribution<std::size_t> col(0, vocab->n_cols() - 1);
    for (int iter = 0; iter < 500; ++iter) {
        auto m = random_matrix(rng, vocab, 0.3);
        auto before = derive_labels(m);

        // Adding U entries never changes any label (merge keeps stronger cells).
        auto mu = m;
        mu.set(row(rng), col(rng), RelationState::U);
        auto after_u = derive_labels(mu);
        REQUIRE(after_u.obs_labels == before.obs_labels);
        REQUIRE(after_u.anat_labels == before.anat_labels);

        // Adding a P to a column forces that column to 1 and keeps existing 1s.
        auto mp = m;
        std::size_t k = col(rng);
        mp.set(row(rng), k, RelationState::P);
        auto after_p = derive_labels(mp);
        REQUIRE(after_p.obs_labels[k] == Label3::Positive);
        for (std::size_t c = 0; c < m.n_cols(); ++c)
            if (before.obs_labels[c] == Label3::Positive)
                REQUIRE(after_p.obs_labels[c] == Label3::Positive);
    }
}

// ---------------------------------------------------------------------------
// corpus statistics
// ---------------------------------------------------------------------------

TEST_CASE("corpus_stats fractions over derived labels") {
    auto vocab = small_vocab();
    std::vector<AdjacencyMatrix> ms;
    // opacity labels across 4 docs: {1, 1, 0, u}
    for (int i = 0; i < 4; ++i) ms.emplace_back("doc" + std::to_string(i), vocab);
    std::size_t k = vocab->observation_col("opacity");
    ms[0].set(0, k, RelationState::P);
    ms[1].set(1, k, RelationState::P);
    ms[2].set(0, k, RelationState::N);
    // ms[3] untouched -> u
    auto stats = corpus_stats(ms, 3);
    const auto& o = stats.observations[k];
    CHECK(o.p_fraction == 0.5);
    CHECK(o.n_fraction == 0.25);
    CHECK(o.u_fraction == 0.25);
    CHECK(o.p_fraction + o.n_fraction + o.u_fraction == 1.0);
}

TEST_CASE("corpus_stats top anatomy co-occurrence") {
    auto vocab = small_vocab();
    std::vector<AdjacencyMatrix> ms;
    ms.emplace_back("doc0", vocab);
    std::size_t k = vocab->observation_col("atelectasis");
    ms[0].set(vocab->anatomy_row("lung bases"), k, RelationState::P);
    auto stats = corpus_stats(ms, 1);
    const auto& o = stats.observations[k];
    REQUIRE(o.top_anatomies.size() == 1);
    CHECK(o.top_anatomies[0].token == "lung bases");
    CHECK(o.top_anatomies[0].percent == 100.0);
}

TEST_CASE("corpus_stats rejects empty input") {
    REQUIRE_THROWS_AS(corpus_stats({}), Error);
}

TEST_CASE("corpus_stats sorts co-occurrences descending") {
    auto vocab = small_vocab();
    std::vector<AdjacencyMatrix> ms;
    for (int i = 0; i < 3; ++i) ms.emplace_back("doc" + std::to_string(i), vocab);
    std::size_t k = vocab->observation_col("opacity");
    for (int i = 0; i < 3; ++i) ms[static_cast<std::size_t>(i)].set(0, k, RelationState::P);
    ms[0].set(1, k, RelationState::P);
    auto stats = corpus_stats(ms, 3);
    const auto& tops = stats.observations[k].top_anatomies;
    REQUIRE(tops.size() == 2);
    CHECK(tops[0].count == 3);
    CHECK(tops[1].count == 1);
    CHECK(tops[0].percent == Catch::Approx(75.0));
    CHECK(tops[0].percent >= tops[1].percent);
}

// ---------------------------------------------------------------------------
// export / import
// ---------------------------------------------------------------------------

TEST_CASE("export and import round-trip on random matrices") {
    auto vocab = small_vocab();
    std::mt19937_64 rng(99);
    for (int iter = 0; iter < 50; ++iter) {
        auto m = random_matrix(rng, vocab, 0.4);
        auto back = import_matrix(export_matrix(m));
        REQUIRE(back == m);
    }
}

TEST_CASE("export of an untouched matrix is header row and column only") {
    auto vocab = small_vocab();
    AdjacencyMatrix m("empty", vocab);
    std::string text = export_matrix(m);
    auto back = import_matrix(text);
    CHECK(back == m);
    // No P/N/U letters anywhere after the header tokens.
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        auto fields = csv_detail::split_line(line);
        for (std::size_t i = 1; i < fields.size(); ++i) CHECK(fields[i].empty());
    }
}

TEST_CASE("exported unspecified cell lands in the unspecified row") {
    auto vocab = small_vocab();
    AdjacencyMatrix m("u", vocab);
    m.set(vocab->unspecified_row(), vocab->observation_col("pneumothorax"), RelationState::N);
    std::string text = export_matrix(m);
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    auto header = csv_detail::split_line(line);
    std::size_t col = 0;
    for (std::size_t i = 1; i < header.size(); ++i)
        if (header[i] == "pneumothorax") col = i;
    REQUIRE(col > 0);
    bool found = false;
    while (std::getline(in, line)) {
        auto fields = csv_detail::split_line(line);
        if (fields[0] == "unspecified") {
            CHECK(fields[col] == "N");
            found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("default vocabulary is 48 x 64 with reserved entries last") {
    const auto& v = default_vocabulary();
    CHECK(v.n_rows() == 48);
    CHECK(v.n_cols() == 64);
    CHECK(v.anatomy_tokens()[46] == "unspecified");
    CHECK(v.anatomy_tokens()[47] == "other_anatomies");
    CHECK(v.observation_tokens()[63] == "other_observations");
}
