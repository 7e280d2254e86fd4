#pragma once

// Internal helpers for the single-JSON checkpoint scheme shared by the teacher
// and student savers: every parameter is stored as {"shape":[r,c],"data":[..]}.

#include <string>

#include <nlohmann/json.hpp>

#include "mgfd/errors.hpp"
#include "mgfd/numkit.hpp"

namespace mgfd::detail {

inline nlohmann::json matrix_to_json(const numkit::Matrix& m) {
    return nlohmann::json{{"shape", {m.rows(), m.cols()}}, {"data", m.values()}};
}

inline numkit::Matrix matrix_from_json(const nlohmann::json& doc, const std::string& name,
                                       std::size_t rows, std::size_t cols) {
    if (!doc.contains("shape") || !doc.contains("data")) {
        throw ValidationError("checkpoint parameter '" + name + "' missing shape or data");
    }
    const auto shape = doc["shape"].get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != rows || shape[1] != cols) {
        throw ValidationError("checkpoint parameter '" + name + "' has wrong shape: expected " +
                              std::to_string(rows) + "x" + std::to_string(cols));
    }
    const auto data = doc["data"].get<std::vector<double>>();
    if (data.size() != rows * cols) {
        throw ValidationError("checkpoint parameter '" + name + "' data length mismatch");
    }
    numkit::Matrix m(rows, cols);
    m.values() = data;
    return m;
}

inline const nlohmann::json& checkpoint_param(const nlohmann::json& params,
                                              const std::string& name) {
    if (!params.contains(name)) {
        throw ValidationError("checkpoint missing parameter '" + name + "'");
    }
    return params[name];
}

}  // namespace mgfd::detail
