#pragma once
// On-disk dataset layout shared by the CLI subcommands:
//
//   <dir>/dataset.json     split, truth, label space, region geometry
//   <dir>/images.bin       named-array container, one "img/<scene_id>" each
//   <dir>/matrices/<scene_id>.csv
//   <dir>/gt_boxes.csv     image_id,label,x_min,y_min,x_max,y_max
//   <dir>/vocab_anat.txt, <dir>/vocab_obs.txt
//
// Externally produced data can use the same layout; truth fields are optional
// there (evaluation then falls back to report labels and skips alpha checks).

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "agx/checkpoint.hpp"
#include "agx/error.hpp"
#include "agx/synth.hpp"

namespace agx::harness {

namespace fs_detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw Error("dataset: cannot open for writing: " + path.string());
    f << text;
    if (!f) throw Error("dataset: write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("dataset: cannot open: " + path.string());
    std::ostringstream buf;
    buf << f.rdbuf();
    return buf.str();
}

}  // namespace fs_detail

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

inline Split split_from_name(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val" || s == "validation") return Split::Val;
    if (s == "test") return Split::Test;
    throw Error("dataset: unknown split '" + s + "'");
}

inline void save_dataset(const std::filesystem::path& dir, const SceneSet& data,
                         const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "matrices");

    NamedArrays images;
    for (const auto& scene : data.scenes) images["img/" + scene.id] = scene.image;
    save_arrays((dir / "images.bin").string(), images);

    std::ostringstream boxes;
    boxes << "image_id,label,x_min,y_min,x_max,y_max\n";
    for (const auto& scene : data.scenes) {
        fs_detail::write_text(dir / "matrices" / (scene.id + ".csv"),
                              report::export_matrix(scene.matrix));
        for (const auto& lesion : scene.lesions)
            boxes << scene.id << ',' << data.labels.observation_tokens[lesion.obs] << ','
                  << lesion.box.x_min << ',' << lesion.box.y_min << ',' << lesion.box.x_max << ','
                  << lesion.box.y_max << '\n';
    }
    fs_detail::write_text(dir / "gt_boxes.csv", boxes.str());

    std::ostringstream va, vo;
    for (const auto& t : data.vocab->anatomy_tokens()) va << t << '\n';
    for (const auto& t : data.vocab->observation_tokens()) vo << t << '\n';
    fs_detail::write_text(dir / "vocab_anat.txt", va.str());
    fs_detail::write_text(dir / "vocab_obs.txt", vo.str());

    nlohmann::json j;
    j["config"] = config_to_json(cfg);
    j["mention_dropout_used"] = data.mention_dropout_used;
    j["scenes"] = nlohmann::json::array();
    for (std::size_t i = 0; i < data.scenes.size(); ++i) {
        const auto& scene = data.scenes[i];
        nlohmann::json js;
        js["id"] = scene.id;
        js["split"] = split_name(data.split[i]);
        js["true_obs"] = scene.true_obs;
        js["true_anat"] = scene.true_anat;
        js["has_confound"] = scene.has_confound;
        j["scenes"].push_back(std::move(js));
    }
    j["region_boxes"] = nlohmann::json::array();
    for (const auto& b : data.region_boxes)
        j["region_boxes"].push_back({b.x_min, b.y_min, b.x_max, b.y_max});
    j["true_alpha"] = nlohmann::json::object();
    for (int sp = 0; sp < 3; ++sp)
        j["true_alpha"][split_name(static_cast<Split>(sp))] = data.true_alpha[sp];
    fs_detail::write_text(dir / "dataset.json", j.dump(2));
}

struct GtBoxTable {
    // (scene_id, label token) -> boxes
    std::map<std::pair<std::string, std::string>, std::vector<loc::BBox>> boxes;
};

inline GtBoxTable load_gt_boxes(const std::filesystem::path& file) {
    GtBoxTable table;
    if (!std::filesystem::exists(file)) return table;
    std::istringstream in(fs_detail::read_text(file));
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = report::csv_detail::split_line(line);
        if (fields.size() != 6) throw Error("dataset: bad gt_boxes row: " + line);
        loc::BBox b{std::stoi(fields[2]), std::stoi(fields[3]), std::stoi(fields[4]),
                    std::stoi(fields[5])};
        table.boxes[{fields[0], fields[1]}].push_back(b);
    }
    return table;
}

inline SceneSet load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::exists(dir / "dataset.json")) throw Error("dataset: missing " + (dir / "dataset.json").string());
    nlohmann::json j = nlohmann::json::parse(fs_detail::read_text(dir / "dataset.json"));

    SceneSet data;
    data.vocab = std::make_shared<report::Vocabulary>(
        report::load_token_file((dir / "vocab_anat.txt").string()),
        report::load_token_file((dir / "vocab_obs.txt").string()));
    data.labels = net::LabelSpace::from_vocab(*data.vocab);
    data.mention_dropout_used = j.value("mention_dropout_used", 0.0);

    NamedArrays images = load_arrays((dir / "images.bin").string());
    GtBoxTable gt = load_gt_boxes(dir / "gt_boxes.csv");

    for (const auto& js : j.at("scenes")) {
        std::string id = js.at("id").get<std::string>();
        auto img_it = images.find("img/" + id);
        if (img_it == images.end()) throw Error("dataset: missing image for scene " + id);
        auto matrix = report::import_matrix(
            fs_detail::read_text(dir / "matrices" / (id + ".csv")));
        if (!(matrix.vocab() == *data.vocab))
            throw Error("dataset: matrix vocabulary mismatch for scene " + id);
        Scene scene(id, img_it->second, std::move(matrix));
        if (js.contains("true_obs")) scene.true_obs = js.at("true_obs").get<std::vector<std::uint8_t>>();
        if (js.contains("true_anat"))
            scene.true_anat = js.at("true_anat").get<std::vector<std::uint8_t>>();
        scene.has_confound = js.value("has_confound", false);
        for (std::size_t k = 0; k < data.labels.n_observation(); ++k) {
            auto it = gt.boxes.find({id, data.labels.observation_tokens[k]});
            if (it == gt.boxes.end()) continue;
            for (const auto& b : it->second) scene.lesions.push_back({0, k, b});
        }
        data.split.push_back(split_from_name(js.at("split").get<std::string>()));
        data.scenes.push_back(std::move(scene));
    }

    if (j.contains("region_boxes"))
        for (const auto& rb : j.at("region_boxes"))
            data.region_boxes.push_back(
                {rb[0].get<int>(), rb[1].get<int>(), rb[2].get<int>(), rb[3].get<int>()});
    data.true_alpha.assign(3, {});
    if (j.contains("true_alpha"))
        for (int sp = 0; sp < 3; ++sp)
            data.true_alpha[sp] =
                j.at("true_alpha").at(split_name(static_cast<Split>(sp))).get<std::vector<double>>();
    return data;
}

}  // namespace agx::harness
