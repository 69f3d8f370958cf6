#include "fairkd/experiment.hpp"

#include "fairkd/fairness.hpp"
#include "fairkd/rng.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fairkd {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kSchemaVersion = 1;

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                    const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read_opt(const json& obj, const char* key, T& target) {
    if (obj.contains(key)) {
        target = obj.at(key).get<T>();
    }
}

json weights_json(const LossWeights& w) {
    return {{"lambda", w.lambda}, {"alpha", w.alpha}, {"beta", w.beta},
            {"gamma", w.gamma},   {"delta", w.delta}, {"tau", w.tau}};
}

json train_json(const TrainConfig& t) {
    json j = {{"epochs", t.epochs},
              {"finetune_epochs", t.effective_finetune_epochs()},
              {"batch_size", t.batch_size},
              {"lr", t.lr},
              {"shuffle", t.shuffle},
              {"student_hidden", t.student_hidden},
              {"teacher_hidden", t.teacher_hidden},
              {"weights", weights_json(t.weights)}};
    return j;
}

LossWeights parse_weights(const json& j) {
    reject_unknown(j, {"lambda", "alpha", "beta", "gamma", "delta", "tau"}, "train.weights");
    LossWeights w;
    read_opt(j, "lambda", w.lambda);
    read_opt(j, "alpha", w.alpha);
    read_opt(j, "beta", w.beta);
    read_opt(j, "gamma", w.gamma);
    read_opt(j, "delta", w.delta);
    read_opt(j, "tau", w.tau);
    return w;
}

TrainConfig parse_train(const json& j) {
    reject_unknown(j,
                   {"epochs", "finetune_epochs", "batch_size", "lr", "shuffle", "student_hidden",
                    "teacher_hidden", "weights"},
                   "train");
    TrainConfig t;
    read_opt(j, "epochs", t.epochs);
    if (j.contains("finetune_epochs")) {
        t.finetune_epochs = j.at("finetune_epochs").get<std::size_t>();
    }
    read_opt(j, "batch_size", t.batch_size);
    read_opt(j, "lr", t.lr);
    read_opt(j, "shuffle", t.shuffle);
    read_opt(j, "student_hidden", t.student_hidden);
    read_opt(j, "teacher_hidden", t.teacher_hidden);
    if (j.contains("weights")) {
        t.weights = parse_weights(j.at("weights"));
    }
    return t;
}

SynthConfig parse_synthetic(const json& j) {
    reject_unknown(j,
                   {"n", "d", "num_classes", "bias_strength", "group_balance", "noise_scale",
                    "class_separation", "group_shift", "noise_penalty"},
                   "data.synthetic");
    SynthConfig s;
    read_opt(j, "n", s.n);
    read_opt(j, "d", s.d);
    read_opt(j, "num_classes", s.num_classes);
    read_opt(j, "bias_strength", s.bias_strength);
    read_opt(j, "group_balance", s.group_balance);
    read_opt(j, "noise_scale", s.noise_scale);
    read_opt(j, "class_separation", s.class_separation);
    read_opt(j, "group_shift", s.group_shift);
    read_opt(j, "noise_penalty", s.noise_penalty);
    return s;
}

json synthetic_json(const SynthConfig& s) {
    return {{"n", s.n},
            {"d", s.d},
            {"num_classes", s.num_classes},
            {"bias_strength", s.bias_strength},
            {"group_balance", s.group_balance},
            {"noise_scale", s.noise_scale},
            {"class_separation", s.class_separation},
            {"group_shift", s.group_shift},
            {"noise_penalty", s.noise_penalty}};
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Collects a command's outputs and records them in the manifest.
class OutputSet {
public:
    explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec || !fs::is_directory(dir_)) {
            throw std::runtime_error("cannot create output directory " + dir_.string());
        }
    }

    const fs::path& dir() const { return dir_; }

    std::string write(const std::string& name, const std::string& bytes) {
        const fs::path path = dir_ / name;
        {
            std::ofstream out(path, std::ios::binary | std::ios::trunc);
            if (!out) {
                throw std::runtime_error("cannot open " + path.string() + " for writing");
            }
            out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
            if (!out) {
                throw std::runtime_error("failed writing " + path.string());
            }
        }
        if (read_file(path) != bytes) {
            throw std::runtime_error("verification failed for " + path.string());
        }
        const auto digest = sha256_hex(bytes);
        files_[name] = {{"sha256", digest}, {"bytes", bytes.size()}};
        return digest;
    }

    void commit(const std::string& command, json details) {
        const fs::path manifest_path = dir_ / "manifest.json";
        json manifest = {{"schema_version", kSchemaVersion},
                         {"files", json::object()},
                         {"commands", json::object()}};
        if (fs::exists(manifest_path)) {
            try {
                manifest = json::parse(read_file(manifest_path));
            } catch (const json::exception&) {
                throw std::runtime_error("existing manifest " + manifest_path.string() +
                                         " is not valid JSON");
            }
        }
        json outputs = json::array();
        for (const auto& [name, entry] : files_.items()) {
            manifest["files"][name] = entry;
            outputs.push_back(name);
        }
        details["outputs"] = outputs;
        manifest["commands"][command] = details;
        const std::string text = manifest.dump(2) + "\n";
        std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) {
            throw std::runtime_error("failed writing " + manifest_path.string());
        }
    }

private:
    fs::path dir_;
    json files_ = json::object();
};

std::pair<Dataset, Dataset> load_split(const ExperimentConfig& cfg, const fs::path& out) {
    std::vector<std::string> missing;
    for (const char* name : {"train.csv", "test.csv"}) {
        if (!fs::exists(out / name)) {
            missing.push_back((out / name).string());
        }
    }
    if (!missing.empty()) {
        std::string msg = "missing prerequisite dataset file(s) (run gen-data first):";
        for (const auto& m : missing) {
            msg += " " + m;
        }
        throw std::runtime_error(msg);
    }
    const auto schema = cfg.schema();
    return {load_tabular(out / "train.csv", schema), load_tabular(out / "test.csv", schema)};
}

void require_files(const fs::path& out, std::initializer_list<const char*> names,
                   std::string_view for_what) {
    std::string missing;
    for (const char* name : names) {
        if (!fs::exists(out / name)) {
            missing += " " + (out / name).string();
        }
    }
    if (!missing.empty()) {
        throw std::runtime_error(std::string(for_what) + " requires missing checkpoint(s):" +
                                 missing);
    }
}

std::string checkpoint_bytes_verified(const DenseNet& net) {
    const std::string bytes = serialize_checkpoint(net);
    if (!(parse_checkpoint(bytes) == net)) {
        throw std::runtime_error("checkpoint round-trip verification failed");
    }
    return bytes;
}

json command_details(const ExperimentConfig& cfg) {
    return {{"root_seed", cfg.seed}, {"config_sha256", sha256_hex(canonical_config_json(cfg))}};
}

}  // namespace

TabularSchema ExperimentConfig::schema() const {
    if (synthetic) {
        return {synthetic->d, synthetic->num_classes};
    }
    if (tabular) {
        return tabular->schema;
    }
    throw std::invalid_argument("config: no data source");
}

void ExperimentConfig::validate() const {
    if (schema_version != kSchemaVersion) {
        throw std::invalid_argument("config: unsupported schema_version " +
                                    std::to_string(schema_version));
    }
    if (synthetic.has_value() == tabular.has_value()) {
        throw std::invalid_argument("config: data must name exactly one of 'synthetic' or 'tabular'");
    }
    if (synthetic) {
        synthetic->validate();
    }
    if (tabular && (tabular->schema.feature_dim == 0 || tabular->schema.num_classes < 2)) {
        throw std::invalid_argument("config: tabular source needs feature_dim >= 1 and num_classes >= 2");
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("config: test_fraction must lie in (0, 1)");
    }
    train.validate();
    for (const double w : ablation_grid) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw std::invalid_argument("config: ablation grid weights must be non-negative");
        }
    }
    for (const auto& f : report_formats) {
        if (f != "json" && f != "table") {
            throw std::invalid_argument("config: unknown report format '" + f + "'");
        }
    }
}

ExperimentConfig parse_experiment_config(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw std::invalid_argument("config: top level must be an object");
    }
    reject_unknown(j,
                   {"schema_version", "seed", "data", "test_fraction", "train", "ablation",
                    "output_dir", "report_formats"},
                   "config");
    ExperimentConfig cfg;
    try {
        if (!j.contains("schema_version")) {
            throw std::invalid_argument("config: missing schema_version");
        }
        cfg.schema_version = j.at("schema_version").get<int>();
        read_opt(j, "seed", cfg.seed);
        if (!j.contains("data")) {
            throw std::invalid_argument("config: missing data section");
        }
        const auto& data = j.at("data");
        reject_unknown(data, {"synthetic", "tabular"}, "data");
        if (data.contains("synthetic")) {
            cfg.synthetic = parse_synthetic(data.at("synthetic"));
        }
        if (data.contains("tabular")) {
            const auto& t = data.at("tabular");
            reject_unknown(t, {"path", "test_path", "feature_dim", "num_classes"}, "data.tabular");
            TabularSource src;
            src.path = t.at("path").get<std::string>();
            if (t.contains("test_path")) {
                src.test_path = fs::path(t.at("test_path").get<std::string>());
            }
            src.schema.feature_dim = t.at("feature_dim").get<std::size_t>();
            src.schema.num_classes = t.at("num_classes").get<std::size_t>();
            cfg.tabular = src;
        }
        read_opt(j, "test_fraction", cfg.test_fraction);
        if (j.contains("train")) {
            cfg.train = parse_train(j.at("train"));
        }
        if (j.contains("ablation")) {
            reject_unknown(j.at("ablation"), {"grid"}, "ablation");
            read_opt(j.at("ablation"), "grid", cfg.ablation_grid);
        }
        if (j.contains("output_dir")) {
            cfg.output_dir = j.at("output_dir").get<std::string>();
        }
        read_opt(j, "report_formats", cfg.report_formats);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    auto cfg = parse_experiment_config(read_file(path));
    // Relative paths are taken relative to the config file.
    const auto base = path.parent_path();
    if (cfg.tabular) {
        if (cfg.tabular->path.is_relative()) {
            cfg.tabular->path = base / cfg.tabular->path;
        }
        if (cfg.tabular->test_path && cfg.tabular->test_path->is_relative()) {
            cfg.tabular->test_path = base / *cfg.tabular->test_path;
        }
    }
    if (cfg.output_dir.is_relative()) {
        cfg.output_dir = base / cfg.output_dir;
    }
    return cfg;
}

std::string canonical_config_json(const ExperimentConfig& cfg) {
    json j;
    j["schema_version"] = cfg.schema_version;
    j["seed"] = cfg.seed;
    if (cfg.synthetic) {
        j["data"]["synthetic"] = synthetic_json(*cfg.synthetic);
    } else if (cfg.tabular) {
        j["data"]["tabular"] = {{"path", cfg.tabular->path.filename().string()},
                                {"feature_dim", cfg.tabular->schema.feature_dim},
                                {"num_classes", cfg.tabular->schema.num_classes}};
        if (cfg.tabular->test_path) {
            j["data"]["tabular"]["test_path"] = cfg.tabular->test_path->filename().string();
        }
    }
    j["test_fraction"] = cfg.test_fraction;
    j["train"] = train_json(cfg.train);
    j["ablation"]["grid"] = cfg.ablation_grid;
    j["report_formats"] = cfg.report_formats;
    return j.dump();
}

std::string run_record_to_json(const RunRecord& record) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["phase"] = record.phase;
    j["seed"] = record.seed;
    j["config"] = train_json(record.config);
    j["epochs"] = json::array();
    for (const auto& e : record.epochs) {
        json row;
        row["epoch"] = e.epoch;
        row["loss"] = {{"l_ce", e.loss.l_ce},
                       {"l_bias0", e.loss.l_bias0},
                       {"l_bias1", e.loss.l_bias1},
                       {"l_debias0", e.loss.l_debias0},
                       {"l_debias1", e.loss.l_debias1},
                       {"l_total", e.loss.l_total},
                       {"n_group0", e.loss.n_group0},
                       {"n_group1", e.loss.n_group1}};
        if (e.eval) {
            row["eval"] = {{"f1_group0", e.eval->f1_group0}, {"f1_group1", e.eval->f1_group1},
                           {"f1_avg", e.eval->f1_avg},       {"eopp0", e.eval->eopp0},
                           {"eopp1", e.eval->eopp1},         {"eodd", e.eval->eodd}};
        }
        j["epochs"].push_back(row);
    }
    j["checkpoints"] = json::array();
    for (const auto& c : record.checkpoints) {
        j["checkpoints"].push_back({{"path", c.path}, {"sha256", c.sha256}});
    }
    return j.dump(2) + "\n";
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

Phase parse_phase(std::string_view name) {
    if (name == "base") return Phase::base;
    if (name == "teacher0") return Phase::teacher0;
    if (name == "teacher1") return Phase::teacher1;
    if (name == "student") return Phase::student;
    throw std::invalid_argument("unknown phase '" + std::string(name) +
                                "' (expected base, teacher0, teacher1 or student)");
}

std::string_view phase_name(Phase phase) {
    switch (phase) {
        case Phase::base:
            return "base";
        case Phase::teacher0:
            return "teacher0";
        case Phase::teacher1:
            return "teacher1";
        case Phase::student:
            return "student";
    }
    return "unknown";
}

std::uint64_t phase_seed(const ExperimentConfig& cfg, std::string_view label) {
    return derive_seed(cfg.seed, label);
}

void cmd_gen_data(const ExperimentConfig& cfg, const fs::path& out) {
    cfg.validate();
    OutputSet outputs(out);
    Dataset train;
    Dataset test;
    json details = command_details(cfg);
    if (cfg.synthetic) {
        SynthConfig synth = *cfg.synthetic;
        synth.seed = phase_seed(cfg, "data");
        details["data_seed"] = synth.seed;
        std::tie(train, test) =
            stratified_split(generate_synthetic(synth), cfg.test_fraction, phase_seed(cfg, "split"));
    } else {
        const auto& src = *cfg.tabular;
        Dataset all = load_tabular(src.path, src.schema);
        if (src.test_path) {
            train = std::move(all);
            test = load_tabular(*src.test_path, src.schema);
        } else {
            std::tie(train, test) = stratified_split(all, cfg.test_fraction, phase_seed(cfg, "split"));
        }
    }
    details["split_seed"] = phase_seed(cfg, "split");
    for (const auto& [name, data] : {std::pair{"train.csv", &train}, std::pair{"test.csv", &test}}) {
        std::ostringstream text;
        write_tabular(*data, text);
        outputs.write(name, text.str());
        std::istringstream back(text.str());
        if (!(parse_tabular(back, cfg.schema()) == *data)) {
            throw std::runtime_error(std::string("round-trip verification failed for ") + name);
        }
    }
    details["train_size"] = train.size();
    details["test_size"] = test.size();
    outputs.commit("gen-data", details);
}

void cmd_train(const ExperimentConfig& cfg, const fs::path& out, Phase phase) {
    cfg.validate();
    switch (phase) {
        case Phase::base:
            break;
        case Phase::teacher0:
        case Phase::teacher1:
            require_files(out, {"base.ckpt"}, std::string("phase ") + std::string(phase_name(phase)));
            break;
        case Phase::student:
            require_files(out, {"teacher0.ckpt", "teacher1.ckpt"}, "phase student");
            break;
    }
    const auto [train, test] = load_split(cfg, out);
    const std::string name(phase_name(phase));
    TrainConfig tc = cfg.train;
    tc.seed = phase_seed(cfg, name);

    TrainResult result;
    switch (phase) {
        case Phase::base:
            result = train_base(train, tc, teacher_dims(tc, train), &test);
            break;
        case Phase::teacher0:
        case Phase::teacher1:
            result = finetune_teacher(load_checkpoint(out / "base.ckpt"), train,
                                      phase == Phase::teacher0 ? 0 : 1, tc, &test);
            break;
        case Phase::student:
            result = train_student(train, load_checkpoint(out / "teacher0.ckpt"),
                                   load_checkpoint(out / "teacher1.ckpt"), tc, &test);
            break;
    }

    OutputSet outputs(out);
    const std::string ckpt_name = name + ".ckpt";
    const auto digest = outputs.write(ckpt_name, checkpoint_bytes_verified(result.net));
    result.record.checkpoints.push_back({ckpt_name, digest});
    outputs.write("run_" + name + ".json", run_record_to_json(result.record));
    json details = command_details(cfg);
    details["phase_seed"] = tc.seed;
    outputs.commit("train:" + name, details);
}

void cmd_eval(const ExperimentConfig& cfg, const fs::path& out, const fs::path& checkpoint,
              const fs::path& dataset) {
    cfg.validate();
    const DenseNet net = load_checkpoint(checkpoint);
    const Dataset data = load_tabular(dataset, cfg.schema());
    const auto log = predict(net, data);
    const auto report = evaluate_fairness(log.pred, log.truth, log.groups, data.num_classes);

    OutputSet outputs(out);
    const std::string stem = checkpoint.stem().string();
    const auto has = [&](const char* f) {
        return std::find(cfg.report_formats.begin(), cfg.report_formats.end(), f) !=
               cfg.report_formats.end();
    };
    if (has("json")) {
        outputs.write(stem + "_report.json", report_to_json(report));
    }
    if (has("table")) {
        outputs.write(stem + "_fairness.csv", report_to_table(report));
    }
    std::ostringstream preds;
    write_prediction_log(log, preds);
    outputs.write(stem + "_predictions.csv", preds.str());
    std::ostringstream feats;
    write_tabular(export_features(net, data), feats);
    outputs.write(stem + "_features.csv", feats.str());

    json details = command_details(cfg);
    details["checkpoint"] = checkpoint.filename().string();
    details["dataset"] = dataset.filename().string();
    outputs.commit("eval:" + stem, details);
}

void cmd_ablate(const ExperimentConfig& cfg, const fs::path& out) {
    cfg.validate();
    require_files(out, {"teacher0.ckpt", "teacher1.ckpt"}, "ablate");
    const auto [train, test] = load_split(cfg, out);
    TrainConfig tc = cfg.train;
    tc.seed = phase_seed(cfg, "student");
    const auto table = run_ablation(train, test, load_checkpoint(out / "teacher0.ckpt"),
                                    load_checkpoint(out / "teacher1.ckpt"), tc, cfg.ablation_grid);
    OutputSet outputs(out);
    outputs.write("ablation.csv", ablation_to_table(table));
    json details = command_details(cfg);
    details["student_seed"] = tc.seed;
    details["rows"] = table.rows.size();
    outputs.commit("ablate", details);
}

}  // namespace fairkd
