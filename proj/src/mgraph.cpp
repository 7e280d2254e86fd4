#include "mgfd/mgraph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "mgfd/errors.hpp"
#include "mgfd/rng.hpp"

namespace mgfd::mgraph {

namespace {

using json = nlohmann::json;

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("missing file: " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw RuntimeFailure("cannot write file: " + path.string());
    }
    out << text;
    if (!out) {
        throw RuntimeFailure("write failed: " + path.string());
    }
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        start = end + 1;
    }
    // ignore a trailing blank line from the final newline
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

double parse_real(std::string_view token, const std::string& context) {
    double v = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    while (first < last && (*first == ' ' || *first == '\t')) ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    while (ptr < last && (*ptr == ' ' || *ptr == '\t')) ++ptr;
    if (ec != std::errc{} || ptr != last) {
        throw ValidationError("malformed real value in " + context + ": '" + std::string(token) +
                              "'");
    }
    return v;
}

std::int64_t parse_int(std::string_view token, const std::string& context) {
    std::int64_t v = 0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    while (first < last && (*first == ' ' || *first == '\t')) ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    while (ptr < last && (*ptr == ' ' || *ptr == '\t')) ++ptr;
    if (ec != std::errc{} || ptr != last) {
        throw ValidationError("malformed integer in " + context + ": '" + std::string(token) +
                              "'");
    }
    return v;
}

std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Visits each index in [0, total) independently with probability p, skipping
// the gaps geometrically so sparse blocks cost O(expected hits).
template <typename Visit>
void bernoulli_indices(std::int64_t total, double p, Rng& rng, Visit&& visit) {
    if (total <= 0 || p <= 0.0) return;
    if (p >= 1.0) {
        for (std::int64_t i = 0; i < total; ++i) visit(i);
        return;
    }
    const double log1mp = std::log1p(-p);
    std::int64_t idx = -1;
    while (true) {
        double skip = std::floor(std::log1p(-rng.uniform()) / log1mp);
        if (skip >= static_cast<double>(total - idx)) break;
        idx += 1 + static_cast<std::int64_t>(skip);
        if (idx >= total) break;
        visit(idx);
    }
}

// Same-group unordered pairs: sample the full sz*sz rectangle and keep the
// upper triangle, so each pair is a single Bernoulli(p) trial.
void sample_pairs_within(const std::vector<NodeId>& nodes, double p, Rng& rng,
                         std::vector<std::pair<NodeId, NodeId>>& out) {
    const std::int64_t sz = static_cast<std::int64_t>(nodes.size());
    bernoulli_indices(sz * sz, p, rng, [&](std::int64_t idx) {
        std::int64_t i = idx / sz;
        std::int64_t j = idx % sz;
        if (i < j) out.emplace_back(nodes[i], nodes[j]);
    });
}

void sample_pairs_across(const std::vector<NodeId>& a, const std::vector<NodeId>& b, double p,
                         Rng& rng, std::vector<std::pair<NodeId, NodeId>>& out) {
    const std::int64_t bs = static_cast<std::int64_t>(b.size());
    bernoulli_indices(static_cast<std::int64_t>(a.size()) * bs, p, rng, [&](std::int64_t idx) {
        out.emplace_back(a[idx / bs], b[idx % bs]);
    });
}

std::vector<std::vector<NodeId>> nodes_by_class(std::span<const NodeId> y, int k) {
    std::vector<std::vector<NodeId>> by(k);
    for (std::size_t i = 0; i < y.size(); ++i) by[y[i]].push_back(static_cast<NodeId>(i));
    return by;
}

// Class-mean Gaussian features: unit noise everywhere plus a per-class mean
// offset of the given strength. reserve_last keeps the final column free for
// a separate indicator.
numkit::Matrix class_mean_features(std::span<const NodeId> y, int d, double signal,
                                   bool reserve_last, Rng& rng) {
    numkit::Matrix x(y.size(), d);
    const int class_dims = (reserve_last && d > 1) ? d - 1 : d;
    for (std::size_t i = 0; i < y.size(); ++i) {
        for (int j = 0; j < d; ++j) x(i, j) = rng.normal();
        x(i, y[i] % class_dims) += signal;
    }
    return x;
}

SplitSpec stratified_split(std::span<const NodeId> y, int k, double train_fraction,
                           double val_fraction, Rng& rng) {
    if (train_fraction <= 0.0 || val_fraction <= 0.0 ||
        train_fraction + val_fraction >= 1.0) {
        throw ValidationError("split fractions must be positive with train+val < 1");
    }
    SplitSpec s;
    for (auto& cls : nodes_by_class(y, k)) {
        if (cls.empty()) continue;
        for (std::size_t i = 0; i + 1 < cls.size(); ++i) {
            std::swap(cls[i], cls[i + rng.uniform_index(cls.size() - i)]);
        }
        const auto sz = static_cast<std::int64_t>(cls.size());
        std::int64_t n_train = std::max<std::int64_t>(1, std::llround(train_fraction * sz));
        std::int64_t n_val = std::max<std::int64_t>(1, std::llround(val_fraction * sz));
        if (n_train + n_val >= sz) {
            throw ValidationError("class with " + std::to_string(sz) +
                                  " nodes is too small for the split fractions");
        }
        s.train.insert(s.train.end(), cls.begin(), cls.begin() + n_train);
        s.val.insert(s.val.end(), cls.begin() + n_train, cls.begin() + n_train + n_val);
        s.test.insert(s.test.end(), cls.begin() + n_train + n_val, cls.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

std::vector<NodeId> assign_classes(NodeId n, int k, Rng& rng) {
    std::vector<NodeId> y(n);
    for (auto& c : y) c = static_cast<NodeId>(rng.uniform_index(k));
    return y;
}

void check_probability(double p, const std::string& what) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ValidationError(what + " must lie in [0,1], got " + format_real(p));
    }
}

}  // namespace

Csr build_csr(NodeId n, std::vector<std::pair<NodeId, NodeId>> edges) {
    std::vector<std::pair<NodeId, NodeId>> directed;
    directed.reserve(edges.size() * 2);
    for (auto [u, v] : edges) {
        if (u == v) continue;  // self-contribution lives in the layer formulas
        directed.emplace_back(u, v);
        directed.emplace_back(v, u);
    }
    std::sort(directed.begin(), directed.end());
    directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

    Csr csr;
    csr.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
    for (auto [u, v] : directed) csr.offsets[u + 1]++;
    for (NodeId i = 0; i < n; ++i) csr.offsets[i + 1] += csr.offsets[i];
    csr.cols.reserve(directed.size());
    for (auto [u, v] : directed) csr.cols.push_back(v);
    return csr;
}

void MultiplexGraph::validate() const {
    if (n < 0 || r <= 0 || d <= 0 || k <= 0) {
        throw ValidationError("graph dimensions must be positive (n,r,d,k)");
    }
    if (static_cast<int>(views.size()) != r) {
        throw ValidationError("view count mismatch: " + std::to_string(views.size()) +
                              " CSRs for r=" + std::to_string(r));
    }
    if (x.rows() != static_cast<std::size_t>(n) || x.cols() != static_cast<std::size_t>(d)) {
        throw ValidationError("feature matrix shape mismatch");
    }
    if (y.size() != static_cast<std::size_t>(n)) {
        throw ValidationError("label count mismatch");
    }
    for (NodeId c : y) {
        if (c < 0 || c >= k) throw ValidationError("label out of [0,k)");
    }
    for (const Csr& view : views) {
        if (view.node_count() != static_cast<std::size_t>(n)) {
            throw ValidationError("CSR node count mismatch");
        }
        for (NodeId u = 0; u < n; ++u) {
            auto nb = view.neighbors(u);
            for (std::size_t j = 0; j < nb.size(); ++j) {
                NodeId v = nb[j];
                if (v < 0 || v >= n) throw ValidationError("CSR column out of range");
                if (v == u) throw ValidationError("self-loop stored in CSR");
                if (j > 0 && nb[j - 1] >= v) throw ValidationError("CSR columns not sorted");
                auto back = view.neighbors(v);
                if (!std::binary_search(back.begin(), back.end(), u)) {
                    throw ValidationError("CSR not symmetric");
                }
            }
        }
    }
}

void SplitSpec::validate(NodeId n) const {
    if (train.empty() || val.empty() || test.empty()) {
        throw ValidationError("each split must be non-empty");
    }
    std::vector<std::uint8_t> seen(n, 0);
    for (const auto* part : {&train, &val, &test}) {
        for (NodeId i : *part) {
            if (i < 0 || i >= n) throw ValidationError("split index out of range");
            if (seen[i]) throw ValidationError("splits not disjoint at node " + std::to_string(i));
            seen[i] = 1;
        }
    }
}

ProductionSplit make_production_split(const SplitSpec& base, double ind_fraction,
                                      std::uint64_t seed) {
    if (!(ind_fraction >= 0.0 && ind_fraction <= 1.0)) {
        throw ValidationError("ind_fraction must lie in [0,1]");
    }
    ProductionSplit p;
    p.base = base;
    p.ind_fraction = ind_fraction;
    std::vector<NodeId> pool = base.test;
    Rng rng(mix_seed(seed, 0x70d5));
    for (std::size_t i = 0; i + 1 < pool.size(); ++i) {
        std::swap(pool[i], pool[i + rng.uniform_index(pool.size() - i)]);
    }
    const auto n_ind = static_cast<std::size_t>(
        std::llround(ind_fraction * static_cast<double>(pool.size())));
    p.ind.assign(pool.begin(), pool.begin() + n_ind);
    p.obs.assign(pool.begin() + n_ind, pool.end());
    std::sort(p.ind.begin(), p.ind.end());
    std::sort(p.obs.begin(), p.obs.end());
    return p;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    json meta;
    try {
        meta = json::parse(read_text_file(dir / "meta.json"));
    } catch (const json::exception& e) {
        throw ValidationError("malformed meta.json: " + std::string(e.what()));
    }
    for (const char* key : {"n", "r", "d", "k", "view_names"}) {
        if (!meta.contains(key)) {
            throw ValidationError("meta.json missing field '" + std::string(key) + "'");
        }
    }

    MultiplexGraph g;
    g.n = meta["n"].get<NodeId>();
    g.r = meta["r"].get<int>();
    g.d = meta["d"].get<int>();
    g.k = meta["k"].get<int>();
    g.view_names = meta["view_names"].get<std::vector<std::string>>();
    if (g.n <= 0 || g.r <= 0 || g.d <= 0 || g.k <= 0) {
        throw ValidationError("meta.json dimensions must be positive");
    }
    if (static_cast<int>(g.view_names.size()) != g.r) {
        throw ValidationError("meta.json view_names length differs from r");
    }

    for (int view = 1; view <= g.r; ++view) {
        const std::string fname = "view_" + std::to_string(view) + ".edges";
        std::vector<std::pair<NodeId, NodeId>> edges;
        for (const std::string& line : split_lines(read_text_file(dir / fname))) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string a, b;
            if (!(ls >> a >> b)) {
                throw ValidationError("malformed edge line in " + fname + ": '" + line + "'");
            }
            const std::int64_t u = parse_int(a, fname);
            const std::int64_t v = parse_int(b, fname);
            if (u < 0 || u >= g.n || v < 0 || v >= g.n) {
                throw ValidationError("edge endpoint out of range in " + fname + ": " + line +
                                      " (valid ids are 0.." + std::to_string(g.n - 1) + ")");
            }
            edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
        }
        g.views.push_back(build_csr(g.n, std::move(edges)));
    }

    const auto feature_lines = split_lines(read_text_file(dir / "features.csv"));
    if (feature_lines.size() != static_cast<std::size_t>(g.n)) {
        throw ValidationError("feature row count mismatch: expected " + std::to_string(g.n) +
                              " rows, found " + std::to_string(feature_lines.size()));
    }
    g.x = numkit::Matrix(g.n, g.d);
    for (std::size_t i = 0; i < feature_lines.size(); ++i) {
        const std::string& line = feature_lines[i];
        std::size_t start = 0;
        int col = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            std::string_view token(line.data() + start,
                                   (comma == std::string::npos ? line.size() : comma) - start);
            if (col >= g.d) {
                throw ValidationError("features.csv row " + std::to_string(i) +
                                      " has more than d=" + std::to_string(g.d) + " columns");
            }
            g.x(i, col++) = parse_real(token, "features.csv row " + std::to_string(i));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (col != g.d) {
            throw ValidationError("features.csv row " + std::to_string(i) + " has " +
                                  std::to_string(col) + " columns, expected " +
                                  std::to_string(g.d));
        }
    }

    const auto label_lines = split_lines(read_text_file(dir / "labels.csv"));
    if (label_lines.size() != static_cast<std::size_t>(g.n)) {
        throw ValidationError("label row count mismatch: expected " + std::to_string(g.n) +
                              " rows, found " + std::to_string(label_lines.size()));
    }
    g.y.resize(g.n);
    for (std::size_t i = 0; i < label_lines.size(); ++i) {
        const std::int64_t c = parse_int(label_lines[i], "labels.csv row " + std::to_string(i));
        if (c < 0 || c >= g.k) {
            throw ValidationError("label out of [0,k) at row " + std::to_string(i) + ": " +
                                  std::to_string(c));
        }
        g.y[i] = static_cast<NodeId>(c);
    }

    json splits_doc;
    try {
        splits_doc = json::parse(read_text_file(dir / "splits.json"));
    } catch (const json::exception& e) {
        throw ValidationError("malformed splits.json: " + std::string(e.what()));
    }
    SplitSpec splits;
    try {
        splits.train = splits_doc.at("train").get<std::vector<NodeId>>();
        splits.val = splits_doc.at("val").get<std::vector<NodeId>>();
        splits.test = splits_doc.at("test").get<std::vector<NodeId>>();
    } catch (const json::exception& e) {
        throw ValidationError("splits.json missing or malformed field: " + std::string(e.what()));
    }
    splits.validate(g.n);
    g.validate();
    return {std::move(g), std::move(splits)};
}

void save_dataset(const std::filesystem::path& dir, const MultiplexGraph& g,
                  const SplitSpec& splits) {
    g.validate();
    splits.validate(g.n);
    std::filesystem::create_directories(dir);

    json meta{{"n", g.n}, {"r", g.r}, {"d", g.d}, {"k", g.k}, {"view_names", g.view_names}};
    write_text_file(dir / "meta.json", meta.dump(2) + "\n");

    for (int view = 0; view < g.r; ++view) {
        std::string text;
        for (NodeId u = 0; u < g.n; ++u) {
            for (NodeId v : g.views[view].neighbors(u)) {
                if (v > u) {
                    text += std::to_string(u) + " " + std::to_string(v) + "\n";
                }
            }
        }
        write_text_file(dir / ("view_" + std::to_string(view + 1) + ".edges"), text);
    }

    std::string features;
    for (NodeId i = 0; i < g.n; ++i) {
        for (int j = 0; j < g.d; ++j) {
            if (j) features += ",";
            features += format_real(g.x(i, j));
        }
        features += "\n";
    }
    write_text_file(dir / "features.csv", features);

    std::string labels;
    for (NodeId c : g.y) labels += std::to_string(c) + "\n";
    write_text_file(dir / "labels.csv", labels);

    json sj{{"train", splits.train}, {"val", splits.val}, {"test", splits.test}};
    write_text_file(dir / "splits.json", sj.dump(2) + "\n");
}

MultiplexGraph remove_cross_edges(const MultiplexGraph& g, std::span<const NodeId> ind) {
    std::vector<std::uint8_t> in_ind(g.n, 0);
    for (NodeId i : ind) {
        if (i < 0 || i >= g.n) throw ValidationError("ind index out of range");
        in_ind[i] = 1;
    }
    MultiplexGraph out = g;
    for (Csr& view : out.views) {
        Csr kept;
        kept.offsets.assign(static_cast<std::size_t>(g.n) + 1, 0);
        kept.cols.reserve(view.cols.size());
        for (NodeId u = 0; u < g.n; ++u) {
            for (NodeId v : view.neighbors(u)) {
                if (in_ind[u] == in_ind[v]) kept.cols.push_back(v);
            }
            kept.offsets[u + 1] = static_cast<std::int64_t>(kept.cols.size());
        }
        view = std::move(kept);
    }
    return out;
}

std::int64_t count_cross_edges(const MultiplexGraph& g, std::span<const NodeId> ind) {
    std::vector<std::uint8_t> in_ind(g.n, 0);
    for (NodeId i : ind) {
        if (i < 0 || i >= g.n) throw ValidationError("ind index out of range");
        in_ind[i] = 1;
    }
    std::int64_t count = 0;
    for (const Csr& view : g.views) {
        for (NodeId u = 0; u < g.n; ++u) {
            for (NodeId v : view.neighbors(u)) {
                if (v > u && in_ind[u] != in_ind[v]) ++count;
            }
        }
    }
    return count;
}

std::vector<std::vector<NodeId>> neighbor_sample(const MultiplexGraph& g, NodeId node,
                                                 int fanout, std::uint64_t seed) {
    if (fanout < 1) throw ValidationError("fanout must be >= 1");
    if (node < 0 || node >= g.n) throw ValidationError("node out of range");
    std::vector<std::vector<NodeId>> result(g.r);
    for (int view = 0; view < g.r; ++view) {
        auto nb = g.views[view].neighbors(node);
        if (static_cast<int>(nb.size()) <= fanout) {
            result[view].assign(nb.begin(), nb.end());
            continue;
        }
        std::vector<NodeId> pool(nb.begin(), nb.end());
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(view) + 1,
                         static_cast<std::uint64_t>(node)));
        for (int j = 0; j < fanout; ++j) {
            std::swap(pool[j], pool[j + rng.uniform_index(static_cast<std::int64_t>(pool.size()) -
                                                          j)]);
        }
        pool.resize(fanout);
        std::sort(pool.begin(), pool.end());
        result[view] = std::move(pool);
    }
    return result;
}

std::vector<NodeId> fetch_l_hop(const MultiplexGraph& g, std::span<const NodeId> targets,
                                int layers) {
    if (layers < 1) throw ValidationError("layers must be >= 1");
    std::vector<std::uint8_t> visited(g.n, 0);
    std::vector<NodeId> frontier;
    std::vector<NodeId> collected;
    for (NodeId t : targets) {
        if (t < 0 || t >= g.n) throw ValidationError("target out of range");
        if (!visited[t]) {
            visited[t] = 1;
            frontier.push_back(t);
            collected.push_back(t);
        }
    }
    for (int hop = 0; hop < layers && !frontier.empty(); ++hop) {
        std::vector<NodeId> next;
        for (NodeId u : frontier) {
            for (const Csr& view : g.views) {
                for (NodeId v : view.neighbors(u)) {
                    if (!visited[v]) {
                        visited[v] = 1;
                        next.push_back(v);
                        collected.push_back(v);
                    }
                }
            }
        }
        frontier = std::move(next);
    }
    std::sort(collected.begin(), collected.end());
    return collected;
}

std::int64_t count_fetched_nodes(const MultiplexGraph& g, std::span<const NodeId> targets,
                                 int layers) {
    return static_cast<std::int64_t>(fetch_l_hop(g, targets, layers).size());
}

namespace {

// Shared tail of both fetch paths: restrict features/labels to `nodes` and
// remap the per-view edge pairs (original ids) onto [0, nodes.size()).
FetchedSubgraph assemble_subgraph(const MultiplexGraph& g, std::vector<NodeId> nodes,
                                  std::span<const NodeId> targets,
                                  const std::vector<std::vector<std::pair<NodeId, NodeId>>>&
                                      view_edges) {
    FetchedSubgraph out;
    out.nodes = std::move(nodes);
    const auto pos_of = [&](NodeId orig) {
        return static_cast<NodeId>(
            std::lower_bound(out.nodes.begin(), out.nodes.end(), orig) - out.nodes.begin());
    };

    MultiplexGraph sub;
    sub.n = static_cast<NodeId>(out.nodes.size());
    sub.r = g.r;
    sub.d = g.d;
    sub.k = g.k;
    sub.view_names = g.view_names;
    sub.x = numkit::Matrix(sub.n, g.d);
    sub.y.resize(sub.n);
    for (NodeId p = 0; p < sub.n; ++p) {
        const NodeId orig = out.nodes[p];
        std::copy(g.x.row(orig), g.x.row(orig) + g.d, sub.x.row(p));
        sub.y[p] = g.y[orig];
    }
    for (int view = 0; view < g.r; ++view) {
        std::vector<std::pair<NodeId, NodeId>> remapped;
        remapped.reserve(view_edges[view].size());
        for (auto [u, v] : view_edges[view]) {
            remapped.emplace_back(pos_of(u), pos_of(v));
        }
        sub.views.push_back(build_csr(sub.n, std::move(remapped)));
    }
    out.sub = std::move(sub);
    out.target_pos.reserve(targets.size());
    for (NodeId t : targets) out.target_pos.push_back(pos_of(t));
    return out;
}

}  // namespace

FetchedSubgraph fetch_full_subgraph(const MultiplexGraph& g, std::span<const NodeId> targets,
                                    int layers) {
    std::vector<NodeId> nodes = fetch_l_hop(g, targets, layers);
    std::vector<std::vector<std::pair<NodeId, NodeId>>> view_edges(g.r);
    for (int view = 0; view < g.r; ++view) {
        for (NodeId u : nodes) {
            for (NodeId v : g.views[view].neighbors(u)) {
                if (v > u && std::binary_search(nodes.begin(), nodes.end(), v)) {
                    view_edges[view].emplace_back(u, v);
                }
            }
        }
    }
    return assemble_subgraph(g, std::move(nodes), targets, view_edges);
}

FetchedSubgraph fetch_sampled_subgraph(const MultiplexGraph& g,
                                       std::span<const NodeId> targets, int layers,
                                       int fanout, std::uint64_t seed) {
    if (layers < 1) throw ValidationError("layers must be >= 1");
    std::vector<std::uint8_t> visited(g.n, 0);
    std::vector<NodeId> frontier;
    std::vector<NodeId> collected;
    for (NodeId t : targets) {
        if (t < 0 || t >= g.n) throw ValidationError("target out of range");
        if (!visited[t]) {
            visited[t] = 1;
            frontier.push_back(t);
            collected.push_back(t);
        }
    }
    std::vector<std::vector<std::pair<NodeId, NodeId>>> view_edges(g.r);
    for (int hop = 0; hop < layers && !frontier.empty(); ++hop) {
        std::vector<NodeId> next;
        for (NodeId u : frontier) {
            auto sampled = neighbor_sample(g, u, fanout, seed);
            for (int view = 0; view < g.r; ++view) {
                for (NodeId v : sampled[view]) {
                    view_edges[view].emplace_back(u, v);
                    if (!visited[v]) {
                        visited[v] = 1;
                        next.push_back(v);
                        collected.push_back(v);
                    }
                }
            }
        }
        frontier = std::move(next);
    }
    std::sort(collected.begin(), collected.end());
    return assemble_subgraph(g, std::move(collected), targets, view_edges);
}

void SbmSpec::validate() const {
    if (n <= 0 || k <= 0 || r <= 0 || d <= 0) {
        throw ValidationError("sbm spec dimensions must be positive");
    }
    if (static_cast<int>(block_probs.size()) != r) {
        throw ValidationError("sbm spec needs one block matrix per view");
    }
    for (const auto& probs : block_probs) {
        if (probs.rows() != static_cast<std::size_t>(k) ||
            probs.cols() != static_cast<std::size_t>(k)) {
            throw ValidationError("block matrix must be k x k");
        }
        for (double p : probs.values()) check_probability(p, "block probability");
    }
}

Dataset synth_multiplex_sbm(const SbmSpec& spec) {
    spec.validate();
    Rng label_rng(mix_seed(spec.seed, 1));
    Rng feature_rng(mix_seed(spec.seed, 2));
    Rng split_rng(mix_seed(spec.seed, 3));

    MultiplexGraph g;
    g.n = spec.n;
    g.r = spec.r;
    g.d = spec.d;
    g.k = spec.k;
    g.y = assign_classes(spec.n, spec.k, label_rng);
    g.x = class_mean_features(g.y, spec.d, spec.feature_signal, /*reserve_last=*/false,
                              feature_rng);
    for (int view = 0; view < spec.r; ++view) {
        g.view_names.push_back("view_" + std::to_string(view + 1));
    }

    const auto by_class = nodes_by_class(g.y, spec.k);
    for (int view = 0; view < spec.r; ++view) {
        Rng edge_rng(mix_seed(spec.seed, 4, static_cast<std::uint64_t>(view)));
        std::vector<std::pair<NodeId, NodeId>> edges;
        for (int a = 0; a < spec.k; ++a) {
            sample_pairs_within(by_class[a], spec.block_probs[view](a, a), edge_rng, edges);
            for (int b = a + 1; b < spec.k; ++b) {
                sample_pairs_across(by_class[a], by_class[b], spec.block_probs[view](a, b),
                                    edge_rng, edges);
            }
        }
        g.views.push_back(build_csr(g.n, std::move(edges)));
    }

    SplitSpec splits =
        stratified_split(g.y, spec.k, spec.train_fraction, spec.val_fraction, split_rng);
    return {std::move(g), std::move(splits)};
}

void HeterophilousSpec::validate() const {
    if (n <= 0 || k <= 0 || d <= 0) {
        throw ValidationError("heterophilous spec dimensions must be positive");
    }
    if (!(group_a_fraction >= 0.0 && group_a_fraction <= 1.0)) {
        throw ValidationError("group_a_fraction must lie in [0,1]");
    }
    check_probability(intra_prob, "intra_prob");
    check_probability(inter_prob, "inter_prob");
    check_probability(noise_prob, "noise_prob");
}

Dataset make_heterophilous_views(const HeterophilousSpec& spec) {
    spec.validate();
    Rng label_rng(mix_seed(spec.seed, 1));
    Rng feature_rng(mix_seed(spec.seed, 2));
    Rng split_rng(mix_seed(spec.seed, 3));

    MultiplexGraph g;
    g.n = spec.n;
    g.r = 2;
    g.d = spec.d;
    g.k = spec.k;
    g.view_names = {"view_1", "view_2"};
    g.y = assign_classes(spec.n, spec.k, label_rng);
    g.x = class_mean_features(g.y, spec.d, spec.feature_signal, /*reserve_last=*/true,
                              feature_rng);

    // Group A is the id prefix; the last feature column carries its indicator
    // so a feature-only model can in principle learn which view to trust.
    const auto n_a = static_cast<NodeId>(std::llround(spec.group_a_fraction * spec.n));
    std::vector<NodeId> group_a, group_b;
    for (NodeId i = 0; i < spec.n; ++i) (i < n_a ? group_a : group_b).push_back(i);
    if (spec.d > 1) {
        for (NodeId i = 0; i < spec.n; ++i) {
            g.x(i, spec.d - 1) += (i < n_a ? spec.group_signal : -spec.group_signal);
        }
    }

    for (int view = 0; view < 2; ++view) {
        const auto& informative = (view == 0) ? group_a : group_b;
        const auto& uninformative = (view == 0) ? group_b : group_a;
        Rng edge_rng(mix_seed(spec.seed, 4, static_cast<std::uint64_t>(view)));
        std::vector<std::pair<NodeId, NodeId>> edges;

        // assortative part: class-aware rates among informative-group nodes
        std::vector<std::vector<NodeId>> by_class(spec.k);
        for (NodeId i : informative) by_class[g.y[i]].push_back(i);
        for (int a = 0; a < spec.k; ++a) {
            sample_pairs_within(by_class[a], spec.intra_prob, edge_rng, edges);
            for (int b = a + 1; b < spec.k; ++b) {
                sample_pairs_across(by_class[a], by_class[b], spec.inter_prob, edge_rng, edges);
            }
        }
        // class-blind noise on every pair touching the other group
        sample_pairs_across(informative, uninformative, spec.noise_prob, edge_rng, edges);
        sample_pairs_within(uninformative, spec.noise_prob, edge_rng, edges);

        g.views.push_back(build_csr(g.n, std::move(edges)));
    }

    SplitSpec splits =
        stratified_split(g.y, spec.k, spec.train_fraction, spec.val_fraction, split_rng);
    return {std::move(g), std::move(splits)};
}

}  // namespace mgfd::mgraph
