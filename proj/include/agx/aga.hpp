#pragma once
// Anatomy-guided attention: aggregate the CAMs of anatomy rows where an
// observation is reported present, then min-max normalize the sum to [0,1].
// Reserved rows (unspecified / other_anatomies) carry no spatial meaning and
// never contribute. At inference time the map is identically zero.

#include <map>
#include <string>
#include <vector>

#include "agx/autodiff.hpp"
#include "agx/error.hpp"
#include "agx/report_graph.hpp"
#include "agx/tensor.hpp"

namespace agx::aga {

struct AgaMap {
    std::string observation_token;
    Tensor map;  // S x S, values in [0,1]
    std::vector<std::string> contributing_rows;
};

// Graph-level construction used inside the training loss so gradients flow
// back into the anatomy branch. `row_cams` maps anatomy row index -> CAM node.
inline ad::Value build_aga_node(const report::AdjacencyMatrix& A, std::size_t col,
                                const std::map<std::size_t, ad::Value>& row_cams,
                                const std::vector<std::size_t>& spatial_dims) {
    std::vector<ad::Value> terms;
    for (std::size_t j = 0; j < A.n_rows(); ++j) {
        if (A.vocab().is_reserved_row(j)) continue;
        auto s = A.at(j, col);
        if (!s || *s != report::RelationState::P) continue;
        auto it = row_cams.find(j);
        if (it == row_cams.end())
            throw Error("aga: missing CAM for contributing row '" +
                        A.vocab().anatomy_tokens()[j] + "'");
        terms.push_back(it->second);
    }
    if (terms.empty()) return ad::constant(Tensor(spatial_dims));
    return ad::minmax_norm(terms.size() == 1 ? terms[0] : ad::add_n(std::move(terms)));
}

// Value-level spec operation over precomputed CAM tensors keyed by token.
inline AgaMap build_aga_map(const report::AdjacencyMatrix& A, std::size_t col,
                            const std::map<std::string, Tensor>& cams) {
    AgaMap out;
    out.observation_token = A.vocab().observation_tokens()[col];
    std::map<std::size_t, ad::Value> row_nodes;
    std::vector<std::size_t> dims;
    for (std::size_t j = 0; j < A.n_rows(); ++j) {
        if (A.vocab().is_reserved_row(j)) continue;
        auto s = A.at(j, col);
        if (!s || *s != report::RelationState::P) continue;
        const std::string& token = A.vocab().anatomy_tokens()[j];
        auto it = cams.find(token);
        if (it == cams.end()) throw Error("aga: missing CAM for contributing row '" + token + "'");
        if (dims.empty()) dims = it->second.shape();
        row_nodes.emplace(j, ad::constant(it->second));
        out.contributing_rows.push_back(token);
    }
    if (dims.empty()) {
        // No contributing rows; callers that need a concrete shape use
        // inference_map instead. Fall back to any provided CAM's shape.
        dims = cams.empty() ? std::vector<std::size_t>{1, 1} : cams.begin()->second.shape();
    }
    out.map = build_aga_node(A, col, row_nodes, dims)->val;
    return out;
}

// Test-time rule: no text input, H^k = 0.
inline AgaMap inference_map(std::size_t s1, std::size_t s2) {
    return AgaMap{"", Tensor({s1, s2}), {}};
}

inline AgaMap inference_map(std::size_t s) { return inference_map(s, s); }

}  // namespace agx::aga
