#pragma once

#include <vector>

#include "mgfd/mgraph.hpp"
#include "mgfd/numkit.hpp"

namespace mgfd {

/// Teacher probability targets for distillation. teacher_probs holds r+1
/// matrices of shape |scope| x k: one per view plus, at index r (the last
/// slot), the integrated "whole" model. Row i of every matrix refers to node
/// scope[i].
struct SoftLabelBundle {
    std::vector<mgraph::NodeId> scope;
    std::vector<numkit::Matrix> teacher_probs;

    int teachers() const { return static_cast<int>(teacher_probs.size()); }
    int views() const { return teachers() - 1; }
    const numkit::Matrix& integrated() const { return teacher_probs.back(); }

    /// Shapes consistent and every row on the probability simplex within 1e-8.
    void validate(int classes) const;
};

}  // namespace mgfd
