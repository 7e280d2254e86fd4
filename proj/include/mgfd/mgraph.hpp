#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mgfd/numkit.hpp"

namespace mgfd::mgraph {

using NodeId = std::int32_t;

// Compressed sparse rows over one view. Undirected edges are stored in both
// directions; neighbor lists are sorted, deduplicated, and self-loop free.
struct Csr {
    std::vector<std::int64_t> offsets;  // size n+1
    std::vector<NodeId> cols;

    std::size_t node_count() const { return offsets.empty() ? 0 : offsets.size() - 1; }
    std::int64_t degree(NodeId u) const { return offsets[u + 1] - offsets[u]; }
    std::span<const NodeId> neighbors(NodeId u) const {
        return {cols.data() + offsets[u], static_cast<std::size_t>(degree(u))};
    }
    // Each undirected edge contributes two directed entries.
    std::int64_t undirected_edge_count() const {
        return static_cast<std::int64_t>(cols.size()) / 2;
    }

    bool operator==(const Csr&) const = default;
};

// Symmetrizes, deduplicates, and drops self-loops before building the CSR.
Csr build_csr(NodeId n, std::vector<std::pair<NodeId, NodeId>> edges);

// One node set, r edge sets (views), shared features and labels. Immutable
// after construction; copy to modify.
struct MultiplexGraph {
    NodeId n = 0;
    int r = 0;  // view count
    int d = 0;  // feature dim
    int k = 0;  // class count
    std::vector<Csr> views;
    numkit::Matrix x;         // n×d
    std::vector<NodeId> y;    // class index per node, in [0, k)
    std::vector<std::string> view_names;

    void validate() const;  // throws ValidationError on any broken invariant
};

struct SplitSpec {
    std::vector<NodeId> train, val, test;

    // Disjoint, in range, each non-empty.
    void validate(NodeId n) const;
};

// Test nodes partitioned into transductively observed (obs) and inductively
// held out (ind); |ind| = round(ind_fraction * |test|).
struct ProductionSplit {
    SplitSpec base;
    std::vector<NodeId> obs;
    std::vector<NodeId> ind;
    double ind_fraction = 0.2;
};

ProductionSplit make_production_split(const SplitSpec& base, double ind_fraction,
                                      std::uint64_t seed);

struct Dataset {
    MultiplexGraph graph;
    SplitSpec splits;
};

// On-disk format: meta.json, view_1.edges .. view_r.edges, features.csv,
// labels.csv, splits.json. Node id = line number. Distinct errors for missing
// files, out-of-range endpoints, feature-row mismatches, and bad labels.
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::filesystem::path& dir, const MultiplexGraph& g,
                  const SplitSpec& splits);

// Deletes, in every view, each edge with exactly one endpoint in ind. Edges
// inside ind survive (the held-out subset remains a graph of its own).
MultiplexGraph remove_cross_edges(const MultiplexGraph& g, std::span<const NodeId> ind);

// Cross-edge count for assertions: edges with exactly one endpoint in ind.
std::int64_t count_cross_edges(const MultiplexGraph& g, std::span<const NodeId> ind);

// Per view: the full neighbor list when degree <= fanout, otherwise a uniform
// sample without replacement of size fanout. Pure function of (seed, view, node).
std::vector<std::vector<NodeId>> neighbor_sample(const MultiplexGraph& g, NodeId node,
                                                 int fanout, std::uint64_t seed);

// Sorted union of the L-hop neighborhoods of targets, where one hop expands a
// node to itself plus its neighbors across all views.
std::vector<NodeId> fetch_l_hop(const MultiplexGraph& g, std::span<const NodeId> targets,
                                int layers);

// Number of nodes an L-layer model over all views must read for the targets.
std::int64_t count_fetched_nodes(const MultiplexGraph& g, std::span<const NodeId> targets,
                                 int layers);

// A subgraph with node ids remapped to [0, nodes.size()); `nodes` holds the
// original ids (sorted), `target_pos` the rows of the requested targets.
struct FetchedSubgraph {
    std::vector<NodeId> nodes;
    MultiplexGraph sub;
    std::vector<NodeId> target_pos;
};

// The induced subgraph on the full L-hop fetched set of the targets.
FetchedSubgraph fetch_full_subgraph(const MultiplexGraph& g, std::span<const NodeId> targets,
                                    int layers);

// Like fetch_full_subgraph but each hop expands via neighbor_sample with the
// given fanout, so both the node set and the edge set are the sampled ones.
FetchedSubgraph fetch_sampled_subgraph(const MultiplexGraph& g,
                                       std::span<const NodeId> targets, int layers,
                                       int fanout, std::uint64_t seed);

// Stochastic block model over r views with class-mean Gaussian features.
struct SbmSpec {
    NodeId n = 0;
    int k = 2;
    int r = 1;
    int d = 8;
    std::vector<numkit::Matrix> block_probs;  // r matrices, each k×k in [0,1]
    double feature_signal = 1.0;              // class-mean separation
    double train_fraction = 0.1;
    double val_fraction = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

Dataset synth_multiplex_sbm(const SbmSpec& spec);

// Two views over a node partition into groups A and B. View 1 is assortative
// (intra/inter class probabilities) on pairs inside A and pure noise on any
// pair touching B; view 2 mirrors this with the roles of A and B swapped. The
// informative view therefore differs per node, which is exactly the regime
// where node-wise ensemble coefficients pay off.
struct HeterophilousSpec {
    NodeId n = 0;
    int k = 2;
    int d = 8;
    double group_a_fraction = 0.5;
    double intra_prob = 0.05;   // same-class rate in the informative view
    double inter_prob = 0.002;  // cross-class rate in the informative view
    double noise_prob = 0.002;  // class-blind rate elsewhere
    double feature_signal = 0.5;  // class-mean separation in features
    double group_signal = 1.0;    // group-indicator strength in features
    double train_fraction = 0.05;
    double val_fraction = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

Dataset make_heterophilous_views(const HeterophilousSpec& spec);

}  // namespace mgfd::mgraph
