#include "mgfd/runconfig.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mgfd/errors.hpp"

namespace mgfd {

namespace {

using nlohmann::json;

// Overwrite `out` only when the key is present; type errors become
// ValidationErrors naming the key.
template <typename T>
void read_into(const json& doc, const char* key, T& out) {
    if (!doc.contains(key)) return;
    try {
        out = doc.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(std::string("config field '") + key + "' has the wrong type");
    }
}

void read_adam(const json& doc, numkit::AdamConfig& adam) {
    read_into(doc, "learning_rate", adam.learning_rate);
    read_into(doc, "weight_decay", adam.weight_decay);
    read_into(doc, "beta1", adam.beta1);
    read_into(doc, "beta2", adam.beta2);
    read_into(doc, "epsilon", adam.epsilon);
}

mgraph::SbmSpec parse_sbm(const json& doc) {
    mgraph::SbmSpec spec;
    read_into(doc, "n", spec.n);
    read_into(doc, "k", spec.k);
    read_into(doc, "r", spec.r);
    read_into(doc, "d", spec.d);
    read_into(doc, "feature_signal", spec.feature_signal);
    read_into(doc, "train_fraction", spec.train_fraction);
    read_into(doc, "val_fraction", spec.val_fraction);
    read_into(doc, "seed", spec.seed);
    if (doc.contains("block_probs")) {
        const json& views = doc.at("block_probs");
        if (!views.is_array()) {
            throw ValidationError("block_probs must be an array of k×k matrices, one per view");
        }
        for (const json& view : views) {
            numkit::Matrix p(spec.k, spec.k);
            if (!view.is_array() || view.size() != static_cast<std::size_t>(spec.k)) {
                throw ValidationError("each block_probs entry must be a k×k matrix");
            }
            for (int a = 0; a < spec.k; ++a) {
                const json& row = view.at(a);
                if (!row.is_array() || row.size() != static_cast<std::size_t>(spec.k)) {
                    throw ValidationError("each block_probs entry must be a k×k matrix");
                }
                for (int b = 0; b < spec.k; ++b) p(a, b) = row.at(b).get<double>();
            }
            spec.block_probs.push_back(std::move(p));
        }
    } else if (doc.contains("intra_prob") || doc.contains("inter_prob")) {
        // shorthand: same assortative matrix in every view
        double intra = 0.05, inter = 0.005;
        read_into(doc, "intra_prob", intra);
        read_into(doc, "inter_prob", inter);
        for (int v = 0; v < spec.r; ++v) {
            numkit::Matrix p(spec.k, spec.k);
            for (int a = 0; a < spec.k; ++a)
                for (int b = 0; b < spec.k; ++b) p(a, b) = a == b ? intra : inter;
            spec.block_probs.push_back(std::move(p));
        }
    }
    return spec;
}

mgraph::HeterophilousSpec parse_heterophilous(const json& doc) {
    mgraph::HeterophilousSpec spec;
    read_into(doc, "n", spec.n);
    read_into(doc, "k", spec.k);
    read_into(doc, "d", spec.d);
    read_into(doc, "group_a_fraction", spec.group_a_fraction);
    read_into(doc, "intra_prob", spec.intra_prob);
    read_into(doc, "inter_prob", spec.inter_prob);
    read_into(doc, "noise_prob", spec.noise_prob);
    read_into(doc, "feature_signal", spec.feature_signal);
    read_into(doc, "group_signal", spec.group_signal);
    read_into(doc, "train_fraction", spec.train_fraction);
    read_into(doc, "val_fraction", spec.val_fraction);
    read_into(doc, "seed", spec.seed);
    return spec;
}

}  // namespace

void RunConfig::validate() const {
    const int sources = (dataset_path.empty() ? 0 : 1) + (sbm ? 1 : 0) +
                        (heterophilous ? 1 : 0);
    if (sources == 0) {
        throw ValidationError("config needs a dataset: a path or a generator spec");
    }
    if (sources > 1) {
        throw ValidationError("config must name exactly one dataset source");
    }
    if (!dataset_path.empty() && !std::filesystem::exists(dataset_path)) {
        throw ValidationError("dataset path does not exist: " + dataset_path.string());
    }
    if (seeds.empty()) throw ValidationError("seeds list must be non-empty");
    if (!(ind_fraction >= 0.0 && ind_fraction <= 1.0)) {
        throw ValidationError("ind_fraction must lie in [0,1]");
    }
    if (fanout < 1) throw ValidationError("fanout must be positive");
    if (bench_targets < 1) throw ValidationError("bench needs at least one target node");
    teacher.validate();
    distill.validate();
}

void RunConfig::apply_seed(std::uint64_t seed) {
    seeds = {seed};
    teacher.seed = seed;
    distill.seed = seed;
    if (sbm) sbm->seed = seed;
    if (heterophilous) heterophilous->seed = seed;
}

RunConfig parse_run_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ValidationError("malformed config JSON: " + std::string(e.what()));
    }
    if (!doc.is_object()) throw ValidationError("config root must be a JSON object");

    RunConfig cfg;
    if (doc.contains("dataset")) {
        const json& ds = doc.at("dataset");
        if (!ds.is_object()) throw ValidationError("'dataset' must be an object");
        if (ds.contains("path")) {
            cfg.dataset_path = ds.at("path").get<std::string>();
        }
        if (ds.contains("generator")) {
            const std::string kind = ds.at("generator").get<std::string>();
            if (kind == "sbm") {
                cfg.sbm = parse_sbm(ds);
            } else if (kind == "heterophilous") {
                cfg.heterophilous = parse_heterophilous(ds);
            } else {
                throw ValidationError("unknown generator '" + kind +
                                      "' (expected sbm or heterophilous)");
            }
        }
    }
    if (doc.contains("teacher")) {
        const json& t = doc.at("teacher");
        if (t.contains("kind")) {
            cfg.teacher.kind = teacher::layer_kind_from_string(t.at("kind").get<std::string>());
        }
        if (t.contains("integration")) {
            cfg.teacher.integration =
                teacher::integration_from_string(t.at("integration").get<std::string>());
        }
        read_into(t, "layers", cfg.teacher.layers);
        read_into(t, "hidden", cfg.teacher.hidden);
        read_into(t, "epochs", cfg.teacher.epochs);
        read_into(t, "dropout", cfg.teacher.dropout);
        read_into(t, "seed", cfg.teacher.seed);
        read_adam(t, cfg.teacher.adam);
    }
    if (doc.contains("distill")) {
        const json& d = doc.at("distill");
        if (d.contains("mode")) {
            cfg.distill.mode = distill::mode_from_string(d.at("mode").get<std::string>());
        }
        read_into(d, "lambda", cfg.distill.lambda);
        read_into(d, "gamma", cfg.distill.gamma);
        read_into(d, "rank", cfg.distill.rank);
        read_into(d, "layers", cfg.distill.layers);
        read_into(d, "hidden", cfg.distill.hidden);
        read_into(d, "epochs", cfg.distill.epochs);
        read_into(d, "seed", cfg.distill.seed);
        read_adam(d, cfg.distill.adam);
    }
    if (doc.contains("split")) {
        read_into(doc.at("split"), "ind_fraction", cfg.ind_fraction);
    }
    if (doc.contains("bench")) {
        const json& b = doc.at("bench");
        read_into(b, "fanout", cfg.fanout);
        read_into(b, "repeats", cfg.bench_repeats);
        read_into(b, "targets", cfg.bench_targets);
    }
    read_into(doc, "seeds", cfg.seeds);
    if (doc.contains("out")) cfg.out = doc.at("out").get<std::string>();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ValidationError("missing config file: " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

mgraph::Dataset materialize_dataset(const RunConfig& cfg) {
    if (!cfg.dataset_path.empty()) return mgraph::load_dataset(cfg.dataset_path);
    if (cfg.sbm) return mgraph::synth_multiplex_sbm(*cfg.sbm);
    if (cfg.heterophilous) return mgraph::make_heterophilous_views(*cfg.heterophilous);
    throw ValidationError("config names no dataset source");
}

}  // namespace mgfd
