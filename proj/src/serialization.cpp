#include "gaets/serialization.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace gaets {

using nlohmann::json;

json to_json(const TrainConfig& c) {
    return json{{"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"lr_milestones", c.lr_milestones},
                {"lr_decay", c.lr_decay},
                {"max_grad_norm", c.max_grad_norm},
                {"adam_epsilon", c.adam_epsilon},
                {"seed", c.seed},
                {"mode", to_string(c.mode)},
                {"input_horizon", c.input_horizon},
                {"horizon", c.horizon},
                {"temperature", c.temperature},
                {"scheduled_sampling", c.scheduled_sampling},
                {"ss_decay", c.ss_decay},
                {"order", c.order},
                {"hidden", c.hidden},
                {"num_layers", c.num_layers},
                {"d_embed", c.d_embed},
                {"link_hidden", c.link_hidden},
                {"d_sem", c.d_sem},
                {"sem_hidden", c.sem_hidden},
                {"conv",
                 {{"kernel1", c.conv.kernel1},
                  {"channels1", c.conv.channels1},
                  {"pool1", c.conv.pool1},
                  {"kernel2", c.conv.kernel2},
                  {"channels2", c.conv.channels2},
                  {"bins", c.conv.bins}}},
                {"ae_weight", c.ae_weight},
                {"base_loss", c.base_loss == BaseLossKind::l1 ? "l1" : "l2"},
                {"shuffle", c.shuffle}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
    if (!j.is_object()) throw ConfigError("training configuration must be a JSON object");
    static const std::set<std::string> known{"epochs",        "batch_size",  "learning_rate", "lr_milestones",
                                             "lr_decay",      "max_grad_norm", "adam_epsilon", "seed",
                                             "mode",          "input_horizon", "horizon",      "temperature",
                                             "scheduled_sampling", "ss_decay", "order",        "hidden",
                                             "num_layers",    "d_embed",     "link_hidden",   "d_sem",
                                             "sem_hidden",    "conv",        "ae_weight",     "base_loss",
                                             "shuffle"};
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ConfigError("unknown training option '" + key + "'");
    }
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("epochs", c.epochs);
        get("batch_size", c.batch_size);
        get("learning_rate", c.learning_rate);
        get("lr_milestones", c.lr_milestones);
        get("lr_decay", c.lr_decay);
        get("max_grad_norm", c.max_grad_norm);
        get("adam_epsilon", c.adam_epsilon);
        get("seed", c.seed);
        if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
        get("input_horizon", c.input_horizon);
        get("horizon", c.horizon);
        get("temperature", c.temperature);
        get("scheduled_sampling", c.scheduled_sampling);
        get("ss_decay", c.ss_decay);
        get("order", c.order);
        get("hidden", c.hidden);
        get("num_layers", c.num_layers);
        get("d_embed", c.d_embed);
        get("link_hidden", c.link_hidden);
        get("d_sem", c.d_sem);
        get("sem_hidden", c.sem_hidden);
        if (j.contains("conv")) {
            const auto& cv = j.at("conv");
            auto getc = [&](const char* key, Index& field) {
                if (cv.contains(key)) field = cv.at(key).get<Index>();
            };
            getc("kernel1", c.conv.kernel1);
            getc("channels1", c.conv.channels1);
            getc("pool1", c.conv.pool1);
            getc("kernel2", c.conv.kernel2);
            getc("channels2", c.conv.channels2);
            getc("bins", c.conv.bins);
        }
        get("ae_weight", c.ae_weight);
        if (j.contains("base_loss")) {
            const auto s = j.at("base_loss").get<std::string>();
            if (s == "l1") {
                c.base_loss = BaseLossKind::l1;
            } else if (s == "l2") {
                c.base_loss = BaseLossKind::l2;
            } else {
                throw ConfigError("base_loss must be 'l1' or 'l2'");
            }
        }
        get("shuffle", c.shuffle);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad training option: ") + e.what());
    }
    c.validate();
    return c;
}

json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Index>(data.size()) != rows * cols) throw DataError("matrix payload has the wrong length");
    return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (const unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string config_hash(const TrainConfig& config) { return fnv1a_hex(to_json(config).dump()); }

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    json params = json::array();
    for (const auto& e : ckpt.params.entries()) params.push_back({{"name", e.name}, {"value", matrix_to_json(e.value)}});
    json doc{{"format", "gaets-checkpoint"},
             {"version", kCheckpointVersion},
             {"config", to_json(ckpt.config)},
             {"config_hash", ckpt.config_hash},
             {"seed", ckpt.config.seed},
             {"n_vars", ckpt.n_vars},
             {"var_names", ckpt.var_names},
             {"norm", {{"mean", matrix_to_json(ckpt.stats.mean)}, {"std", matrix_to_json(ckpt.stats.std)}}},
             {"edge_logits", matrix_to_json(ckpt.logits)},
             {"epoch", ckpt.epoch},
             {"val_base", std::isfinite(ckpt.val_base) ? json(ckpt.val_base) : json(nullptr)},
             {"params", std::move(params)}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
    out << doc.dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
    }
    if (doc.value("format", "") != "gaets-checkpoint") throw DataError("not a checkpoint: " + path.string());
    if (doc.at("version").get<int>() != kCheckpointVersion) {
        throw DataError("unsupported checkpoint version " + doc.at("version").dump());
    }
    Checkpoint c;
    c.config = train_config_from_json(doc.at("config"));
    c.config_hash = doc.at("config_hash").get<std::string>();
    c.n_vars = doc.at("n_vars").get<Index>();
    c.var_names = doc.at("var_names").get<std::vector<std::string>>();
    c.stats.mean = matrix_from_json(doc.at("norm").at("mean"));
    c.stats.std = matrix_from_json(doc.at("norm").at("std"));
    c.logits = matrix_from_json(doc.at("edge_logits"));
    c.epoch = doc.at("epoch").get<int>();
    c.val_base = doc.at("val_base").is_null() ? std::numeric_limits<double>::infinity()
                                              : doc.at("val_base").get<double>();
    for (const auto& p : doc.at("params")) c.params.add(p.at("name").get<std::string>(), matrix_from_json(p.at("value")));
    return c;
}

std::string to_log_line(const EpochRecord& r) {
    return json{{"epoch", r.epoch},
                {"base", r.train.base},
                {"autoencoder", r.train.autoencoder},
                {"total", r.train.total},
                {"val_base", r.val_base},
                {"learning_rate", r.learning_rate},
                {"wall_time", r.wall_time},
                {"seed", r.seed}}
        .dump();
}

}  // namespace gaets
