#pragma once
// Report-graph ingestion: parse annotation documents (entity/relation graphs
// over report text), build per-image adjacency matrices between anatomy rows
// and observation columns, derive weak image-level labels, and compute corpus
// statistics.
//
// Annotation document wire format (UTF-8 JSON):
//   {"doc_id": "...",
//    "entities": {"e1": {"tokens": "opacity", "label": "OBS-DP",
//                        "relations": [["located_at", "e2"], ...]}, ...}}
// Unknown object fields are ignored. Entity labels are exactly ANAT-DP,
// OBS-DP, OBS-DA, OBS-U; relation types are exactly located_at, modify,
// suggestive_of. modify and suggestive_of are parsed but never touch the
// matrix.

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "agx/error.hpp"
#include "agx/labels.hpp"
#include "agx/vocab.hpp"

namespace agx::report {

// ---------------------------------------------------------------------------
// annotation documents
// ---------------------------------------------------------------------------

enum class EntityLabel : std::uint8_t { AnatDp, ObsDp, ObsDa, ObsU };
enum class RelationType : std::uint8_t { LocatedAt, Modify, SuggestiveOf };

struct Relation {
    RelationType type;
    std::string target_entity_id;
};

struct Entity {
    std::string entity_id;
    std::string tokens;
    EntityLabel label;
    std::vector<Relation> relations;
};

struct AnnotationDocument {
    std::string doc_id;
    std::vector<Entity> entities;  // sorted by entity_id

    const Entity* find(const std::string& id) const {
        for (const auto& e : entities)
            if (e.entity_id == id) return &e;
        return nullptr;
    }
};

inline EntityLabel parse_entity_label(const std::string& s, const std::string& entity_id) {
    if (s == "ANAT-DP") return EntityLabel::AnatDp;
    if (s == "OBS-DP") return EntityLabel::ObsDp;
    if (s == "OBS-DA") return EntityLabel::ObsDa;
    if (s == "OBS-U") return EntityLabel::ObsU;
    throw Error("annotation: entity '" + entity_id + "' has unknown label '" + s + "'");
}

inline RelationType parse_relation_type(const std::string& s, const std::string& entity_id) {
    if (s == "located_at") return RelationType::LocatedAt;
    if (s == "modify") return RelationType::Modify;
    if (s == "suggestive_of") return RelationType::SuggestiveOf;
    throw Error("annotation: entity '" + entity_id + "' has unknown relation type '" + s + "'");
}

inline bool is_observation(EntityLabel l) { return l != EntityLabel::AnatDp; }

// Parse and structurally validate one annotation document.
inline AnnotationDocument parse_annotations(const std::string& document_bytes) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(document_bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(std::string("annotation: parse error: ") + e.what());
    }
    if (!j.is_object()) throw Error("annotation: top level must be an object");
    AnnotationDocument doc;
    if (!j.contains("doc_id") || !j["doc_id"].is_string())
        throw Error("annotation: missing string field 'doc_id'");
    doc.doc_id = j["doc_id"].get<std::string>();
    if (j.contains("entities")) {
        const auto& ents = j["entities"];
        if (!ents.is_object()) throw Error("annotation: 'entities' must be an object");
        for (const auto& [id, body] : ents.items()) {
            if (!body.is_object())
                throw Error("annotation: entity '" + id + "' must be an object");
            Entity e;
            e.entity_id = id;
            if (!body.contains("tokens") || !body["tokens"].is_string())
                throw Error("annotation: entity '" + id + "' missing string field 'tokens'");
            e.tokens = body["tokens"].get<std::string>();
            if (!body.contains("label") || !body["label"].is_string())
                throw Error("annotation: entity '" + id + "' missing string field 'label'");
            e.label = parse_entity_label(body["label"].get<std::string>(), id);
            if (body.contains("relations")) {
                if (!body["relations"].is_array())
                    throw Error("annotation: entity '" + id + "' relations must be an array");
                for (const auto& r : body["relations"]) {
                    if (!r.is_array() || r.size() != 2 || !r[0].is_string() || !r[1].is_string())
                        throw Error("annotation: entity '" + id +
                                    "' relation must be [type, target_id]");
                    e.relations.push_back(
                        {parse_relation_type(r[0].get<std::string>(), id), r[1].get<std::string>()});
                }
            }
            doc.entities.push_back(std::move(e));
        }
    }
    std::sort(doc.entities.begin(), doc.entities.end(),
              [](const Entity& a, const Entity& b) { return a.entity_id < b.entity_id; });
    for (std::size_t i = 1; i < doc.entities.size(); ++i)
        if (doc.entities[i].entity_id == doc.entities[i - 1].entity_id)
            throw Error("annotation: duplicate entity id '" + doc.entities[i].entity_id + "'");
    for (const auto& e : doc.entities)
        for (const auto& r : e.relations)
            if (doc.find(r.target_entity_id) == nullptr)
                throw Error("annotation: relation target '" + r.target_entity_id +
                            "' of entity '" + e.entity_id + "' does not exist");
    return doc;
}

// ---------------------------------------------------------------------------
// adjacency matrix
// ---------------------------------------------------------------------------

enum class RelationState : std::uint8_t { U = 1, N = 2, P = 3 };

inline char relation_char(RelationState s) {
    switch (s) {
        case RelationState::P: return 'P';
        case RelationState::N: return 'N';
        case RelationState::U: return 'U';
    }
    return '?';
}

class AdjacencyMatrix {
public:
    AdjacencyMatrix(std::string doc_id, std::shared_ptr<const Vocabulary> vocab)
        : doc_id_(std::move(doc_id)), vocab_(std::move(vocab)),
          cells_(vocab_->n_rows() * vocab_->n_cols(), 0) {}

    const std::string& doc_id() const { return doc_id_; }
    const Vocabulary& vocab() const { return *vocab_; }
    std::shared_ptr<const Vocabulary> vocab_ptr() const { return vocab_; }
    std::size_t n_rows() const { return vocab_->n_rows(); }
    std::size_t n_cols() const { return vocab_->n_cols(); }

    std::optional<RelationState> at(std::size_t row, std::size_t col) const {
        std::uint8_t v = cells_[row * n_cols() + col];
        if (v == 0) return std::nullopt;
        return static_cast<RelationState>(v);
    }

    // Conflicting mentions of one cell merge with precedence P > N > U.
    void set(std::size_t row, std::size_t col, RelationState s) {
        std::uint8_t& cell = cells_[row * n_cols() + col];
        cell = std::max(cell, static_cast<std::uint8_t>(s));
    }

    void clear(std::size_t row, std::size_t col) { cells_[row * n_cols() + col] = 0; }

    bool operator==(const AdjacencyMatrix& o) const {
        return doc_id_ == o.doc_id_ && *vocab_ == *o.vocab_ && cells_ == o.cells_;
    }

private:
    std::string doc_id_;
    std::shared_ptr<const Vocabulary> vocab_;
    std::vector<std::uint8_t> cells_;
};

inline RelationState state_for_observation(EntityLabel l) {
    switch (l) {
        case EntityLabel::ObsDp: return RelationState::P;
        case EntityLabel::ObsDa: return RelationState::N;
        case EntityLabel::ObsU: return RelationState::U;
        case EntityLabel::AnatDp: break;
    }
    throw Error("adjacency: anatomy entity has no relation state");
}

// Build the anatomy x observation grid for one document. Observations with a
// located_at edge to an anatomy mention land on that row (tail tokens fall
// into the reserved buckets); observations without one land on `unspecified`.
inline AdjacencyMatrix build_adjacency(const AnnotationDocument& doc,
                                       std::shared_ptr<const Vocabulary> vocab) {
    AdjacencyMatrix m(doc.doc_id, std::move(vocab));
    for (const auto& e : doc.entities) {
        if (!is_observation(e.label)) continue;
        RelationState state = state_for_observation(e.label);
        std::size_t col = m.vocab().observation_col(e.tokens);
        bool located = false;
        for (const auto& r : e.relations) {
            if (r.type != RelationType::LocatedAt) continue;
            const Entity* target = doc.find(r.target_entity_id);
            if (target == nullptr || target->label != EntityLabel::AnatDp) continue;
            m.set(m.vocab().anatomy_row(target->tokens), col, state);
            located = true;
        }
        if (!located) m.set(m.vocab().unspecified_row(), col, state);
    }
    return m;
}

// ---------------------------------------------------------------------------
// weak labels
// ---------------------------------------------------------------------------

struct WeakLabels {
    std::vector<Label3> obs_labels;          // per observation column
    std::vector<std::uint8_t> anat_labels;   // per anatomy row, 0/1
    std::shared_ptr<const Vocabulary> vocab;

    Label3 obs(std::string_view token) const {
        return obs_labels[vocab->observation_col(token)];
    }
    bool anat(std::string_view token) const {
        return anat_labels[vocab->anatomy_row(token)] != 0;
    }
};

// Image-level label rules:
//   y(o_k) = 1 if column k has at least one P; 0 if no P and at least one N;
//   u otherwise (all-U columns and untouched columns both derive u).
//   y(a_j) = 1 iff row j has at least one P.
inline WeakLabels derive_labels(const AdjacencyMatrix& A) {
    WeakLabels out;
    out.vocab = A.vocab_ptr();
    out.obs_labels.assign(A.n_cols(), Label3::Unlabeled);
    out.anat_labels.assign(A.n_rows(), 0);
    for (std::size_t k = 0; k < A.n_cols(); ++k) {
        bool any_p = false, any_n = false;
        for (std::size_t j = 0; j < A.n_rows(); ++j) {
            auto s = A.at(j, k);
            if (!s) continue;
            if (*s == RelationState::P) any_p = true;
            if (*s == RelationState::N) any_n = true;
        }
        out.obs_labels[k] = any_p ? Label3::Positive : (any_n ? Label3::Negative : Label3::Unlabeled);
    }
    for (std::size_t j = 0; j < A.n_rows(); ++j)
        for (std::size_t k = 0; k < A.n_cols(); ++k)
            if (auto s = A.at(j, k); s && *s == RelationState::P) {
                out.anat_labels[j] = 1;
                break;
            }
    return out;
}

// ---------------------------------------------------------------------------
// corpus statistics
// ---------------------------------------------------------------------------

struct AnatomyCooccurrence {
    std::string token;
    std::size_t count = 0;
    double percent = 0.0;  // share of the column's P entries, in [0, 100]
};

struct ObservationStats {
    std::string token;
    std::size_t pos_docs = 0, neg_docs = 0, unl_docs = 0;
    double p_fraction = 0.0, n_fraction = 0.0, u_fraction = 0.0;
    std::vector<AnatomyCooccurrence> top_anatomies;
};

struct CorpusStats {
    std::size_t documents = 0;
    std::size_t top_k = 3;
    std::vector<ObservationStats> observations;
};

// P/N/U fractions over image-level derived labels plus, per observation, the
// top-k anatomy rows among that column's P entries across the corpus.
inline CorpusStats corpus_stats(const std::vector<AdjacencyMatrix>& matrices,
                                std::size_t top_k = 3) {
    if (matrices.empty()) throw Error("corpus_stats: no matrices");
    const Vocabulary& vocab = matrices.front().vocab();
    for (const auto& m : matrices)
        if (!(m.vocab() == vocab)) throw Error("corpus_stats: vocabulary mismatch across matrices");

    CorpusStats stats;
    stats.documents = matrices.size();
    stats.top_k = top_k;
    const std::size_t R = vocab.n_rows(), K = vocab.n_cols();
    std::vector<std::vector<std::size_t>> p_by_row(K, std::vector<std::size_t>(R, 0));

    std::vector<ObservationStats> per_obs(K);
    for (std::size_t k = 0; k < K; ++k) per_obs[k].token = vocab.observation_tokens()[k];

    for (const auto& m : matrices) {
        WeakLabels labels = derive_labels(m);
        for (std::size_t k = 0; k < K; ++k) {
            switch (labels.obs_labels[k]) {
                case Label3::Positive: ++per_obs[k].pos_docs; break;
                case Label3::Negative: ++per_obs[k].neg_docs; break;
                case Label3::Unlabeled: ++per_obs[k].unl_docs; break;
            }
            for (std::size_t j = 0; j < R; ++j)
                if (auto s = m.at(j, k); s && *s == RelationState::P) ++p_by_row[k][j];
        }
    }

    const double n_docs = static_cast<double>(matrices.size());
    for (std::size_t k = 0; k < K; ++k) {
        auto& o = per_obs[k];
        o.p_fraction = static_cast<double>(o.pos_docs) / n_docs;
        o.n_fraction = static_cast<double>(o.neg_docs) / n_docs;
        o.u_fraction = static_cast<double>(o.unl_docs) / n_docs;
        std::size_t total_p = 0;
        for (std::size_t j = 0; j < R; ++j) total_p += p_by_row[k][j];
        if (total_p > 0) {
            std::vector<std::size_t> rows;
            for (std::size_t j = 0; j < R; ++j)
                if (p_by_row[k][j] > 0) rows.push_back(j);
            std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
                return p_by_row[k][a] > p_by_row[k][b];
            });
            for (std::size_t i = 0; i < rows.size() && i < top_k; ++i) {
                std::size_t j = rows[i];
                o.top_anatomies.push_back(
                    {vocab.anatomy_tokens()[j], p_by_row[k][j],
                     100.0 * static_cast<double>(p_by_row[k][j]) / static_cast<double>(total_p)});
            }
        }
        stats.observations.push_back(std::move(o));
    }
    return stats;
}

inline nlohmann::json stats_to_json(const CorpusStats& s) {
    nlohmann::json j;
    j["documents"] = s.documents;
    j["top_k"] = s.top_k;
    j["observations"] = nlohmann::json::array();
    for (const auto& o : s.observations) {
        nlohmann::json jo;
        jo["token"] = o.token;
        jo["pos_docs"] = o.pos_docs;
        jo["neg_docs"] = o.neg_docs;
        jo["unl_docs"] = o.unl_docs;
        jo["p_fraction"] = o.p_fraction;
        jo["n_fraction"] = o.n_fraction;
        jo["u_fraction"] = o.u_fraction;
        jo["top_anatomies"] = nlohmann::json::array();
        for (const auto& a : o.top_anatomies)
            jo["top_anatomies"].push_back(
                {{"token", a.token}, {"count", a.count}, {"percent", a.percent}});
        j["observations"].push_back(std::move(jo));
    }
    return j;
}

// ---------------------------------------------------------------------------
// delimited export / import
// ---------------------------------------------------------------------------

// Comma-delimited grid: cell (0,0) carries the doc_id, the first row lists
// observation tokens, the first column anatomy tokens, cells are P/N/U or
// empty. Lossless against import_matrix.
inline std::string export_matrix(const AdjacencyMatrix& A) {
    std::ostringstream out;
    out << A.doc_id();
    for (const auto& t : A.vocab().observation_tokens()) out << ',' << t;
    out << '\n';
    for (std::size_t j = 0; j < A.n_rows(); ++j) {
        out << A.vocab().anatomy_tokens()[j];
        for (std::size_t k = 0; k < A.n_cols(); ++k) {
            out << ',';
            if (auto s = A.at(j, k)) out << relation_char(*s);
        }
        out << '\n';
    }
    return out.str();
}

namespace csv_detail {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace csv_detail

inline AdjacencyMatrix import_matrix(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw Error("matrix import: empty input");
    auto header = csv_detail::split_line(line);
    if (header.size() < 2) throw Error("matrix import: header has no observation tokens");
    std::string doc_id = header[0];
    std::vector<std::string> obs_tokens(header.begin() + 1, header.end());

    std::vector<std::string> anat_tokens;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = csv_detail::split_line(line);
        if (fields.size() != header.size())
            throw Error("matrix import: row '" + fields[0] + "' has wrong cell count");
        anat_tokens.push_back(fields[0]);
        rows.push_back(std::move(fields));
    }
    auto vocab = std::make_shared<Vocabulary>(anat_tokens, obs_tokens);
    if (vocab->n_rows() != anat_tokens.size() || vocab->n_cols() != obs_tokens.size())
        throw Error("matrix import: reserved tokens missing from grid");
    AdjacencyMatrix m(doc_id, vocab);
    for (std::size_t j = 0; j < rows.size(); ++j)
        for (std::size_t k = 0; k < obs_tokens.size(); ++k) {
            const std::string& cell = rows[j][k + 1];
            if (cell.empty()) continue;
            if (cell == "P") m.set(j, k, RelationState::P);
            else if (cell == "N") m.set(j, k, RelationState::N);
            else if (cell == "U") m.set(j, k, RelationState::U);
            else throw Error("matrix import: bad cell '" + cell + "'");
        }
    return m;
}

}  // namespace agx::report
