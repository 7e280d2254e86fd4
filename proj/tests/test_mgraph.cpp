#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "mgfd/mgraph.hpp"
#include "mgfd/rng.hpp"

using namespace mgfd;
using namespace mgfd::mgraph;

namespace fs = std::filesystem;

namespace {

// Independent fetch-count oracle: plain std::set BFS over the union of views.
std::int64_t bfs_fetch_oracle(const MultiplexGraph& g, const std::vector<NodeId>& targets,
                              int layers) {
    std::set<NodeId> visited(targets.begin(), targets.end());
    std::set<NodeId> frontier = visited;
    for (int hop = 0; hop < layers; ++hop) {
        std::set<NodeId> next;
        for (NodeId u : frontier) {
            for (const Csr& view : g.views) {
                for (NodeId v : view.neighbors(u)) {
                    if (!visited.count(v)) next.insert(v);
                }
            }
        }
        visited.insert(next.begin(), next.end());
        frontier = std::move(next);
    }
    return static_cast<std::int64_t>(visited.size());
}

MultiplexGraph random_graph(NodeId n, int r, std::int64_t edges_per_view, Rng& rng) {
    MultiplexGraph g;
    g.n = n;
    g.r = r;
    g.d = 1;
    g.k = 2;
    g.x = numkit::Matrix(n, 1);
    g.y.assign(n, 0);
    for (int view = 0; view < r; ++view) {
        std::vector<std::pair<NodeId, NodeId>> edges;
        for (std::int64_t e = 0; e < edges_per_view; ++e) {
            edges.emplace_back(static_cast<NodeId>(rng.uniform_index(n)),
                               static_cast<NodeId>(rng.uniform_index(n)));
        }
        g.views.push_back(build_csr(n, std::move(edges)));
        g.view_names.push_back("v" + std::to_string(view));
    }
    return g;
}

fs::path fresh_temp_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("mgfd_test_" + tag + "_" +
                                                std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path fixture_dir() {
    // the fixture lives next to the sources; tests run from the build tree
    return fs::path(MGFD_SOURCE_DIR) / "data" / "fixture3";
}

}  // namespace

TEST_CASE("build_csr symmetrizes, dedups, drops self-loops, sorts") {
    Csr csr = build_csr(4, {{1, 2}, {2, 1}, {1, 2}, {3, 3}, {0, 2}});
    CHECK(csr.node_count() == 4);
    CHECK(csr.undirected_edge_count() == 2);  // (1,2) and (0,2); (3,3) dropped
    auto n2 = csr.neighbors(2);
    REQUIRE(n2.size() == 2);
    CHECK(n2[0] == 0);
    CHECK(n2[1] == 1);
    CHECK(csr.degree(3) == 0);
    CHECK(csr.neighbors(1)[0] == 2);
}

TEST_CASE("load_dataset reads the checked-in fixture") {
    Dataset ds = load_dataset(fixture_dir());
    CHECK(ds.graph.n == 3);
    CHECK(ds.graph.r == 2);
    CHECK(ds.graph.d == 2);
    CHECK(ds.graph.k == 2);
    CHECK(ds.graph.view_names[0] == "cites");
    CHECK(ds.graph.views[0].undirected_edge_count() == 2);
    CHECK(ds.graph.views[1].undirected_edge_count() == 1);
    CHECK(ds.graph.x(0, 0) == 1.5);
    CHECK(ds.graph.x(2, 1) == 0.75);
    CHECK(ds.graph.y[1] == 1);
    CHECK(ds.splits.train == std::vector<NodeId>{0});
    CHECK(ds.splits.test == std::vector<NodeId>{2});
}

TEST_CASE("load_dataset error paths are distinct") {
    fs::path dir = fresh_temp_dir("load_errors");
    // start from a copy of the fixture and break one thing at a time
    fs::copy(fixture_dir(), dir,
             fs::copy_options::overwrite_existing | fs::copy_options::recursive);

    SUBCASE("missing file") {
        fs::remove(dir / "features.csv");
        CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("missing file"),
                             ValidationError);
    }
    SUBCASE("edge endpoint out of range") {
        std::ofstream(dir / "view_1.edges") << "0 99\n";
        CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("out of range"),
                             ValidationError);
    }
    SUBCASE("feature row count mismatch") {
        std::ofstream(dir / "features.csv") << "1,2\n3,4\n";
        CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("feature row count"),
                             ValidationError);
    }
    SUBCASE("label out of range") {
        std::ofstream(dir / "labels.csv") << "0\n5\n0\n";
        CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("label out of"),
                             ValidationError);
    }
    SUBCASE("duplicate edges collapse to one CSR entry") {
        std::ofstream(dir / "view_1.edges") << "1 2\n1 2\n2 1\n";
        Dataset ds = load_dataset(dir);
        CHECK(ds.graph.views[0].undirected_edge_count() == 1);
        CHECK(ds.graph.views[0].degree(1) == 1);
    }
    fs::remove_all(dir);
}

TEST_CASE("save/load round-trip is exact") {
    SbmSpec spec;
    spec.n = 60;
    spec.k = 3;
    spec.r = 2;
    spec.d = 4;
    spec.block_probs = {numkit::Matrix::filled(3, 3, 0.05), numkit::Matrix::filled(3, 3, 0.08)};
    for (int c = 0; c < 3; ++c) {
        spec.block_probs[0](c, c) = 0.3;
        spec.block_probs[1](c, c) = 0.2;
    }
    spec.train_fraction = 0.2;
    spec.val_fraction = 0.2;
    spec.seed = 5;
    Dataset ds = synth_multiplex_sbm(spec);

    fs::path dir = fresh_temp_dir("roundtrip");
    save_dataset(dir, ds.graph, ds.splits);
    Dataset back = load_dataset(dir);
    CHECK(back.graph.n == ds.graph.n);
    CHECK(back.graph.views == ds.graph.views);
    CHECK(back.graph.x.values() == ds.graph.x.values());  // %.17g round-trips doubles
    CHECK(back.graph.y == ds.graph.y);
    CHECK(back.splits.train == ds.splits.train);
    CHECK(back.splits.val == ds.splits.val);
    CHECK(back.splits.test == ds.splits.test);
    fs::remove_all(dir);
}

TEST_CASE("remove_cross_edges keeps inside edges, cuts boundary edges") {
    // path 0-1-2 in view 1, edge 0-2 in view 2
    Dataset ds = load_dataset(fixture_dir());
    const MultiplexGraph& g = ds.graph;

    MultiplexGraph unchanged = remove_cross_edges(g, std::vector<NodeId>{});
    CHECK(unchanged.views == g.views);

    std::vector<NodeId> all{0, 1, 2};
    CHECK(remove_cross_edges(g, all).views == g.views);

    std::vector<NodeId> ind{2};
    MultiplexGraph cut = remove_cross_edges(g, ind);
    CHECK(cut.views[0].undirected_edge_count() == 1);  // 1-2 removed, 0-1 kept
    CHECK(cut.views[0].degree(2) == 0);
    CHECK(cut.views[0].neighbors(0)[0] == 1);
    CHECK(cut.views[1].undirected_edge_count() == 0);  // 0-2 removed
    CHECK(count_cross_edges(cut, ind) == 0);
    cut.validate();  // still symmetric

    MultiplexGraph twice = remove_cross_edges(cut, ind);
    CHECK(twice.views == cut.views);  // idempotent
}

TEST_CASE("remove_cross_edges never touches same-side edges") {
    Rng rng(77);
    MultiplexGraph g = random_graph(40, 2, 120, rng);
    std::vector<NodeId> ind{1, 5, 9, 22, 33};
    std::set<NodeId> ind_set(ind.begin(), ind.end());
    MultiplexGraph cut = remove_cross_edges(g, ind);
    for (int view = 0; view < 2; ++view) {
        for (NodeId u = 0; u < g.n; ++u) {
            for (NodeId v : g.views[view].neighbors(u)) {
                bool cross = ind_set.count(u) != ind_set.count(v);
                auto nb = cut.views[view].neighbors(u);
                bool kept = std::binary_search(nb.begin(), nb.end(), v);
                CHECK(kept == !cross);
            }
        }
    }
}

TEST_CASE("neighbor_sample cardinality and determinism") {
    // star: node 0 joined to 1..100 in view 1; view 2 empty
    std::vector<std::pair<NodeId, NodeId>> star;
    for (NodeId v = 1; v <= 100; ++v) star.emplace_back(0, v);
    MultiplexGraph g;
    g.n = 101;
    g.r = 2;
    g.d = 1;
    g.k = 2;
    g.x = numkit::Matrix(101, 1);
    g.y.assign(101, 0);
    g.views.push_back(build_csr(101, star));
    g.views.push_back(build_csr(101, {}));
    g.view_names = {"a", "b"};

    auto small = neighbor_sample(g, 5, 10, /*seed=*/3);  // degree 1 in view 1
    CHECK(small[0] == std::vector<NodeId>{0});
    CHECK(small[1].empty());

    auto sampled = neighbor_sample(g, 0, 10, 3);
    CHECK(sampled[0].size() == 10);
    std::set<NodeId> distinct(sampled[0].begin(), sampled[0].end());
    CHECK(distinct.size() == 10);
    for (NodeId v : sampled[0]) CHECK((v >= 1 && v <= 100));

    CHECK(neighbor_sample(g, 0, 10, 3) == sampled);           // same seed
    CHECK(neighbor_sample(g, 0, 10, 4) != sampled);           // different stream
    CHECK(neighbor_sample(g, 0, 200, 3)[0].size() == 100);    // fanout >= degree
    CHECK_THROWS_AS(neighbor_sample(g, 0, 0, 3), ValidationError);
}

TEST_CASE("count_fetched_nodes trivial shapes") {
    Rng rng(8);
    MultiplexGraph g = random_graph(30, 2, 0, rng);  // edgeless
    std::vector<NodeId> one{7};
    CHECK(count_fetched_nodes(g, one, 1) == 1);
    CHECK(count_fetched_nodes(g, one, 3) == 1);

    std::vector<std::pair<NodeId, NodeId>> star;
    for (NodeId v = 1; v <= 6; ++v) star.emplace_back(0, v);
    MultiplexGraph sg = random_graph(7, 1, 0, rng);
    sg.views[0] = build_csr(7, star);
    std::vector<NodeId> center{0};
    CHECK(count_fetched_nodes(sg, center, 1) == 7);  // 1 + degree
}

TEST_CASE("count_fetched_nodes equals BFS oracle and is monotone in L") {
    Rng rng(123);
    for (int trial = 0; trial < 30; ++trial) {
        auto n = static_cast<NodeId>(20 + rng.uniform_index(180));
        MultiplexGraph g = random_graph(n, 2, n, rng);
        std::vector<NodeId> targets;
        for (int t = 0; t < 5; ++t) targets.push_back(static_cast<NodeId>(rng.uniform_index(n)));
        std::int64_t prev = 0;
        for (int layers = 1; layers <= 3; ++layers) {
            std::int64_t got = count_fetched_nodes(g, targets, layers);
            CHECK(got == bfs_fetch_oracle(g, targets, layers));
            CHECK(got >= prev);
            CHECK(got <= n);
            prev = got;
        }
    }
}

TEST_CASE("fetch_full_subgraph induces the right edges") {
    // path 0-1-2-3-4 in one view
    MultiplexGraph g;
    g.n = 5;
    g.r = 1;
    g.d = 2;
    g.k = 2;
    g.x = numkit::Matrix(5, 2);
    for (NodeId i = 0; i < 5; ++i) g.x(i, 0) = i;
    g.y.assign(5, 0);
    g.views.push_back(build_csr(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}}));
    g.view_names = {"path"};

    std::vector<NodeId> targets{2};
    FetchedSubgraph fs1 = fetch_full_subgraph(g, targets, 1);
    CHECK(fs1.nodes == std::vector<NodeId>{1, 2, 3});
    CHECK(fs1.sub.n == 3);
    CHECK(fs1.target_pos == std::vector<NodeId>{1});
    CHECK(fs1.sub.views[0].undirected_edge_count() == 2);  // 1-2, 2-3 induced
    CHECK(fs1.sub.x(0, 0) == 1.0);                         // features follow the remap
    fs1.sub.validate();

    FetchedSubgraph fs2 = fetch_full_subgraph(g, targets, 2);
    CHECK(fs2.nodes.size() == 5);
    CHECK(fs2.sub.views[0].undirected_edge_count() == 4);
}

TEST_CASE("fetch_sampled_subgraph respects fanout and is deterministic") {
    Rng rng(55);
    MultiplexGraph g = random_graph(300, 2, 3000, rng);
    std::vector<NodeId> targets{3, 50, 200};
    FetchedSubgraph full = fetch_full_subgraph(g, targets, 2);
    FetchedSubgraph ns = fetch_sampled_subgraph(g, targets, 2, 4, /*seed=*/9);
    CHECK(ns.nodes.size() <= full.nodes.size());
    ns.sub.validate();
    // every target keeps at most fanout sampled neighbors per view at hop 1
    for (std::size_t t = 0; t < targets.size(); ++t) {
        for (int view = 0; view < 2; ++view) {
            CHECK(ns.sub.views[view].degree(ns.target_pos[t]) <= 2 * 4);  // own + backward picks
        }
    }
    FetchedSubgraph again = fetch_sampled_subgraph(g, targets, 2, 4, 9);
    CHECK(again.nodes == ns.nodes);
    CHECK(again.sub.views == ns.sub.views);
}

TEST_CASE("synth_multiplex_sbm degenerate and statistical cases") {
    SbmSpec spec;
    spec.n = 40;
    spec.k = 2;
    spec.r = 1;
    spec.d = 3;
    spec.block_probs = {numkit::Matrix(2, 2)};
    spec.block_probs[0](0, 0) = 1.0;
    spec.block_probs[0](1, 1) = 1.0;
    spec.train_fraction = 0.2;
    spec.val_fraction = 0.2;
    spec.seed = 11;

    SUBCASE("intra 1 inter 0 gives two disjoint cliques") {
        Dataset ds = synth_multiplex_sbm(spec);
        for (NodeId u = 0; u < ds.graph.n; ++u) {
            std::int64_t same = 0;
            for (NodeId v = 0; v < ds.graph.n; ++v) {
                if (v != u && ds.graph.y[v] == ds.graph.y[u]) ++same;
            }
            CHECK(ds.graph.views[0].degree(u) == same);
            for (NodeId v : ds.graph.views[0].neighbors(u)) CHECK(ds.graph.y[v] == ds.graph.y[u]);
        }
    }
    SUBCASE("all-zero probabilities give edgeless views") {
        spec.block_probs[0] = numkit::Matrix(2, 2);
        Dataset ds = synth_multiplex_sbm(spec);
        CHECK(ds.graph.views[0].undirected_edge_count() == 0);
    }
    SUBCASE("invalid probability rejected") {
        spec.block_probs[0](0, 1) = 1.5;
        CHECK_THROWS_AS(synth_multiplex_sbm(spec), ValidationError);
    }
}

TEST_CASE("synth_multiplex_sbm edge count within 3 sigma of the binomial mean") {
    SbmSpec spec;
    spec.n = 1000;
    spec.k = 2;
    spec.r = 1;
    spec.d = 2;
    spec.block_probs = {numkit::Matrix(2, 2)};
    spec.block_probs[0](0, 0) = 0.02;
    spec.block_probs[0](1, 1) = 0.02;
    spec.block_probs[0](0, 1) = 0.005;
    spec.block_probs[0](1, 0) = 0.005;
    spec.seed = 21;
    Dataset ds = synth_multiplex_sbm(spec);

    std::int64_t size0 = std::count(ds.graph.y.begin(), ds.graph.y.end(), 0);
    std::int64_t size1 = ds.graph.n - size0;
    double mean = 0.02 * (size0 * (size0 - 1) / 2.0 + size1 * (size1 - 1) / 2.0) +
                  0.005 * static_cast<double>(size0) * static_cast<double>(size1);
    double var = 0.02 * 0.98 * (size0 * (size0 - 1) / 2.0 + size1 * (size1 - 1) / 2.0) +
                 0.005 * 0.995 * static_cast<double>(size0) * static_cast<double>(size1);
    double got = static_cast<double>(ds.graph.views[0].undirected_edge_count());
    CHECK(std::abs(got - mean) <= 3.0 * std::sqrt(var));
}

TEST_CASE("generators are pure functions of spec + seed") {
    SbmSpec spec;
    spec.n = 200;
    spec.k = 3;
    spec.r = 2;
    spec.d = 4;
    spec.block_probs = {numkit::Matrix::filled(3, 3, 0.02), numkit::Matrix::filled(3, 3, 0.03)};
    spec.seed = 31;
    Dataset a = synth_multiplex_sbm(spec);
    Dataset b = synth_multiplex_sbm(spec);
    CHECK(a.graph.views == b.graph.views);
    CHECK(a.graph.x.values() == b.graph.x.values());
    CHECK(a.graph.y == b.graph.y);
    CHECK(a.splits.train == b.splits.train);

    spec.seed = 32;
    Dataset c = synth_multiplex_sbm(spec);
    CHECK(a.graph.views != c.graph.views);
}

TEST_CASE("make_heterophilous_views shape and statistics") {
    HeterophilousSpec spec;
    spec.n = 500;
    spec.k = 2;
    spec.d = 6;
    spec.group_a_fraction = 0.5;
    spec.intra_prob = 0.10;
    spec.inter_prob = 0.01;
    spec.noise_prob = 0.01;
    spec.seed = 41;
    Dataset ds = make_heterophilous_views(spec);
    ds.graph.validate();
    ds.splits.validate(ds.graph.n);
    CHECK(ds.graph.r == 2);

    // group A = ids [0, 250): same-class rate inside A in view 1 ~ intra_prob
    const NodeId n_a = 250;
    std::int64_t candidates = 0, hits = 0;
    for (NodeId u = 0; u < n_a; ++u) {
        for (NodeId v = u + 1; v < n_a; ++v) {
            if (ds.graph.y[u] != ds.graph.y[v]) continue;
            ++candidates;
            auto nb = ds.graph.views[0].neighbors(u);
            if (std::binary_search(nb.begin(), nb.end(), v)) ++hits;
        }
    }
    double mean = spec.intra_prob * static_cast<double>(candidates);
    double sigma = std::sqrt(spec.intra_prob * (1 - spec.intra_prob) *
                             static_cast<double>(candidates));
    CHECK(std::abs(static_cast<double>(hits) - mean) <= 3.0 * sigma);

    Dataset again = make_heterophilous_views(spec);
    CHECK(again.graph.views == ds.graph.views);
    CHECK(again.graph.x.values() == ds.graph.x.values());
}

TEST_CASE("make_heterophilous_views with group A only is assortative everywhere") {
    HeterophilousSpec spec;
    spec.n = 60;
    spec.k = 2;
    spec.d = 4;
    spec.group_a_fraction = 1.0;
    spec.intra_prob = 1.0;
    spec.inter_prob = 0.0;
    spec.noise_prob = 0.5;  // no pair touches group B, so this never fires in view 1
    spec.train_fraction = 0.2;
    spec.val_fraction = 0.2;
    spec.seed = 43;
    Dataset ds = make_heterophilous_views(spec);
    for (NodeId u = 0; u < ds.graph.n; ++u) {
        for (NodeId v : ds.graph.views[0].neighbors(u)) {
            CHECK(ds.graph.y[v] == ds.graph.y[u]);
        }
    }
    // view 2's informative group (B) is empty: all its pairs are noise pairs
    CHECK(ds.graph.views[1].undirected_edge_count() > 0);
}

TEST_CASE("make_production_split partitions test deterministically") {
    SplitSpec base;
    for (NodeId i = 0; i < 10; ++i) base.train.push_back(i);
    for (NodeId i = 10; i < 20; ++i) base.val.push_back(i);
    for (NodeId i = 20; i < 45; ++i) base.test.push_back(i);

    ProductionSplit p = make_production_split(base, 0.2, 7);
    CHECK(p.ind.size() == 5);  // round(0.2 * 25)
    CHECK(p.obs.size() == 20);
    std::set<NodeId> whole(p.ind.begin(), p.ind.end());
    whole.insert(p.obs.begin(), p.obs.end());
    CHECK(whole.size() == 25);
    for (NodeId i : whole) CHECK((i >= 20 && i < 45));

    ProductionSplit q = make_production_split(base, 0.2, 7);
    CHECK(q.ind == p.ind);
    ProductionSplit zero = make_production_split(base, 0.0, 7);
    CHECK(zero.ind.empty());
    CHECK(zero.obs.size() == 25);
    CHECK_THROWS_AS(make_production_split(base, 1.5, 7), ValidationError);
}

TEST_CASE("SplitSpec validation rejects overlap and emptiness") {
    SplitSpec s;
    s.train = {0};
    s.val = {1};
    s.test = {2};
    s.validate(3);
    s.val = {0};
    CHECK_THROWS_WITH_AS(s.validate(3), doctest::Contains("disjoint"), ValidationError);
    s.val = {};
    CHECK_THROWS_AS(s.validate(3), ValidationError);
    s.val = {9};
    CHECK_THROWS_AS(s.validate(3), ValidationError);
}
