#pragma once
// Fixed token vocabularies for the adjacency grid. Rows are anatomical
// landmarks plus two reserved rows (`unspecified` for observations mentioned
// without a location, `other_anatomies` for tail tokens); columns are
// observations plus the reserved `other_observations` tail column.

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "agx/error.hpp"

namespace agx::report {

inline constexpr std::string_view kUnspecified = "unspecified";
inline constexpr std::string_view kOtherAnatomies = "other_anatomies";
inline constexpr std::string_view kOtherObservations = "other_observations";

inline std::string normalize_token(std::string_view raw) {
    std::string s;
    s.reserve(raw.size());
    bool in_space = true;
    for (char c : raw) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!in_space) s.push_back(' ');
            in_space = true;
        } else {
            s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
            in_space = false;
        }
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
}

class Vocabulary {
public:
    // Reserved tokens are appended when missing from the given lists.
    Vocabulary(std::vector<std::string> anatomy, std::vector<std::string> observations) {
        for (auto& t : anatomy) add_row(normalize_token(t));
        add_row(std::string(kUnspecified));
        add_row(std::string(kOtherAnatomies));
        for (auto& t : observations) add_col(normalize_token(t));
        add_col(std::string(kOtherObservations));
    }

    const std::vector<std::string>& anatomy_tokens() const { return rows_; }
    const std::vector<std::string>& observation_tokens() const { return cols_; }
    std::size_t n_rows() const { return rows_.size(); }
    std::size_t n_cols() const { return cols_.size(); }

    std::size_t unspecified_row() const { return row_index_.at(std::string(kUnspecified)); }
    std::size_t other_anatomies_row() const { return row_index_.at(std::string(kOtherAnatomies)); }
    std::size_t other_observations_col() const {
        return col_index_.at(std::string(kOtherObservations));
    }

    bool is_reserved_row(std::size_t r) const {
        return r == unspecified_row() || r == other_anatomies_row();
    }
    bool is_reserved_col(std::size_t c) const { return c == other_observations_col(); }

    // Tail-bucketed lookups used by adjacency construction.
    std::size_t anatomy_row(std::string_view token) const {
        auto it = row_index_.find(normalize_token(token));
        return it == row_index_.end() ? other_anatomies_row() : it->second;
    }
    std::size_t observation_col(std::string_view token) const {
        auto it = col_index_.find(normalize_token(token));
        return it == col_index_.end() ? other_observations_col() : it->second;
    }

    bool operator==(const Vocabulary& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

private:
    void add_row(std::string t) {
        check(t);
        if (row_index_.count(t)) return;
        row_index_[t] = rows_.size();
        rows_.push_back(std::move(t));
    }
    void add_col(std::string t) {
        check(t);
        if (col_index_.count(t)) return;
        col_index_[t] = cols_.size();
        cols_.push_back(std::move(t));
    }
    static void check(const std::string& t) {
        if (t.empty()) throw Error("vocabulary: empty token");
        if (t.find(',') != std::string::npos)
            throw Error("vocabulary: token contains a comma: " + t);
    }

    std::vector<std::string> rows_, cols_;
    std::unordered_map<std::string, std::size_t> row_index_, col_index_;
};

// One token per line; blank lines and '#' comments skipped.
inline std::vector<std::string> load_token_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("vocabulary: cannot open " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(f, line)) {
        std::string t = normalize_token(line);
        if (t.empty() || t[0] == '#') continue;
        tokens.push_back(std::move(t));
    }
    return tokens;
}

inline Vocabulary load_vocabulary(const std::string& anat_path, const std::string& obs_path) {
    return Vocabulary(load_token_file(anat_path), load_token_file(obs_path));
}

// Bundled default: 46 named landmarks and 63 named observations, giving the
// standard 48 x 64 grid once the reserved entries are appended.
inline const Vocabulary& default_vocabulary() {
    static const Vocabulary vocab = [] {
        std::vector<std::string> anat = {
            "right lung", "left lung", "lungs", "right upper lung", "right mid lung",
            "right lower lung", "left upper lung", "left mid lung", "left lower lung",
            "right apical lung", "left apical lung", "lung bases", "right base", "left base",
            "upper right lobe", "middle right lobe", "lower right lobe", "upper left lobe",
            "lower left lobe", "lingula", "right hilar", "left hilar", "bilateral hilar",
            "pleural", "right pleural", "left pleural", "right costophrenic angle",
            "left costophrenic angle", "heart", "cardiac silhouette", "mediastinal",
            "upper mediastinal", "cardiomediastinal", "aorta", "aortic arch", "trachea",
            "carina", "right diaphragm", "left diaphragm", "diaphragm", "spine",
            "thoracic spine", "right clavicle", "left clavicle", "right ribs", "left ribs"};
        std::vector<std::string> obs = {
            "opacity", "opacities", "effusion", "atelectasis", "pneumothorax", "consolidation",
            "edema", "pneumonia", "cardiomegaly", "enlarge", "enlarged", "nodule", "nodules",
            "mass", "infiltrate", "congestion", "fracture", "fractures", "emphysema", "fibrosis",
            "scarring", "thickening", "calcification", "granuloma", "hernia",
            "degenerative changes", "osteophytes", "deformity", "tortuosity", "ectasia",
            "aeration", "hyperinflation", "hypoinflation", "collapse", "blunting", "haziness",
            "density", "densities", "lucency", "air", "fluid", "gas", "pneumoperitoneum",
            "pneumomediastinum", "cavitation", "bronchiectasis", "interstitial markings",
            "kyphosis", "scoliosis", "osteopenia", "widening", "elevation", "flattening",
            "crowding", "engorgement", "prominence", "calcified granuloma", "plaque",
            "distention", "obstruction", "infection", "inflammation", "abnormality"};
        return Vocabulary(std::move(anat), std::move(obs));
    }();
    return vocab;
}

}  // namespace agx::report
