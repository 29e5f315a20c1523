#include "uvd/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "uvd/common.hpp"

namespace uvd {

Json default_config() {
    Json cfg;
    cfg["seed"] = 1234;
    cfg["out_dir"] = "runs/default";

    Json& data = cfg["data"];
    data["dir"] = "data/temporal_shapes";
    data["n"] = 8000;
    data["seed"] = 1234;
    data["t"] = 16;
    data["h"] = 16;
    data["w"] = 16;
    data["num_classes"] = 8;
    data["blob_sigma_min"] = 1.2;
    data["blob_sigma_max"] = 1.8;
    data["speed_min"] = 0.3;
    data["speed_max"] = 0.5;
    data["ramp_speed_lo"] = 0.15;
    data["ramp_speed_hi"] = 0.65;
    data["pixel_noise"] = 0.05;

    Json& bb = cfg["backbone"];
    bb["latent_channels"] = 1;
    bb["base_channels"] = 64;
    bb["channel_multipliers"] = Json::array({1, 2, 2, 4});
    bb["num_up_blocks"] = 4;
    bb["feature_tap_index"] = 2;
    bb["num_classes"] = 8;
    bb["temporal_mixing"] = "temporal_attention";
    bb["emb_dim"] = 64;
    bb["gn_groups"] = 8;
    bb["mask_indicator_channel"] = false;

    Json& tr = cfg["train"];
    tr["phase"] = "joint";
    tr["gamma"] = 10.0;
    tr["p_drop"] = 0.1;
    tr["batch_size"] = 16;
    tr["epochs"] = 10;
    tr["base_lr"] = 1.25e-5;
    tr["warmup_lr"] = 2.5e-7;
    tr["final_lr"] = 2.5e-7;
    tr["warmup_epochs"] = 5;
    tr["warmup_steps"] = -1;
    tr["weight_decay"] = 0.0;
    tr["head_lr_mult"] = 10.0;
    tr["probe_head_only"] = false;
    tr["mask_min_hidden"] = 0.5;
    tr["p_mean"] = -1.2;
    tr["p_std"] = 1.2;
    tr["sigma_data"] = 0.5;
    tr["seed"] = 0;
    tr["init_seed"] = 1;
    tr["save_every_epochs"] = 1;

    Json& sp = cfg["sampler"];
    sp["n_steps"] = 40;
    sp["sigma_min"] = 0.002;
    sp["sigma_max"] = 80.0;
    sp["rho"] = 7.0;
    sp["churn"] = 0.0;
    sp["guidance_scale"] = 0.0;
    sp["guidance_target"] = -1;
    sp["cfg_scale"] = 1.0;

    Json& rec = cfg["recognition"];
    rec["eval_sigma"] = std::exp(-1.2);
    rec["n_eval_draws"] = 4;
    rec["seed"] = 0;

    Json& ev = cfg["eval"];
    ev["rho_grid"] = Json::array({0.1, 0.3, 0.5, 0.7, 1.0});
    ev["k_grid"] = Json::array({2, 3, 4, 16});
    ev["genrel_frames"] = Json::array({2, 4});
    ev["n_eval"] = 200;
    ev["n_generate"] = 64;
    ev["seed"] = 0;
    ev["extractor_path"] = "assets/toy_fvd_extractor.ckpt";
    ev["extractor_steps"] = 600;
    ev["extractor_seed"] = 7;
    return cfg;
}

Json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    Json j;
    try {
        in >> j;
    } catch (const Json::parse_error& e) {
        throw ConfigError("config: parse failure in " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object in " + path);
    return j;
}

namespace {

const char* kind_name(const Json& v) {
    if (v.is_object()) return "object";
    if (v.is_array()) return "array";
    if (v.is_string()) return "string";
    if (v.is_boolean()) return "bool";
    if (v.is_number()) return "number";
    return "null";
}

bool same_kind(const Json& a, const Json& b) {
    if (a.is_number() && b.is_number()) return true;
    return std::string(kind_name(a)) == kind_name(b);
}

void merge_into(Json& base, const Json& overlay, const std::string& prefix) {
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("config: unknown key '" + path + "'");
        Json& slot = base[it.key()];
        const Json& v = it.value();
        if (!same_kind(slot, v))
            throw ConfigError("config: key '" + path + "' expects " + kind_name(slot) +
                              ", got " + kind_name(v));
        if (slot.is_object())
            merge_into(slot, v, path);
        else
            slot = v;
    }
}

}  // namespace

void merge_config(Json& base, const Json& overlay) { merge_into(base, overlay, ""); }

void set_config_value(Json& base, const std::string& assignment) {
    size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("config: override must look like key.path=value: '" + assignment + "'");
    std::string path = assignment.substr(0, eq);
    std::string raw = assignment.substr(eq + 1);

    Json value = Json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    Json* node = &base;
    size_t start = 0;
    std::string walked;
    while (true) {
        size_t dot = path.find('.', start);
        std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        walked = walked.empty() ? key : walked + "." + key;
        if (!node->is_object() || !node->contains(key))
            throw ConfigError("config: unknown key '" + walked + "'");
        node = &(*node)[key];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    if (node->is_object()) throw ConfigError("config: key '" + path + "' is a section");
    if (!same_kind(*node, value))
        throw ConfigError("config: key '" + path + "' expects " + kind_name(*node) + ", got " +
                          kind_name(value));
    *node = value;
}

std::vector<std::pair<std::string, std::string>> env_config_overrides(
    const std::map<std::string, std::string>& env) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [name, value] : env) {
        if (name.rfind("UVD_", 0) != 0) continue;
        std::string rest = name.substr(4);
        std::string path;
        for (size_t i = 0; i < rest.size(); ++i) {
            if (rest[i] == '_' && i + 1 < rest.size() && rest[i + 1] == '_') {
                path += '.';
                ++i;
            } else {
                path += char(std::tolower(static_cast<unsigned char>(rest[i])));
            }
        }
        out.emplace_back(path, value);
    }
    std::sort(out.begin(), out.end());
    return out;
}

Json resolve_config(const std::string& file_path, const std::map<std::string, std::string>& env,
                    const std::vector<std::string>& assignments) {
    Json cfg = default_config();
    if (!file_path.empty()) merge_config(cfg, load_config_file(file_path));
    for (const auto& [path, value] : env_config_overrides(env))
        set_config_value(cfg, path + "=" + value);
    for (const std::string& a : assignments) set_config_value(cfg, a);
    return cfg;
}

uint64_t config_hash(const Json& cfg) {
    Json sub;
    sub["backbone"] = cfg.at("backbone");
    sub["data"] = cfg.at("data");
    sub["train"] = cfg.at("train");
    std::string dump = sub.dump();
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

namespace {

// json type errors on a hand-edited file should surface as config errors
template <typename T>
T pick(const Json& cfg, const char* section, const char* key) {
    try {
        return cfg.at(section).at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config: bad value at ") + section + "." + key + ": " +
                          e.what());
    }
}

}  // namespace

TemporalShapesSpec data_spec_from_config(const Json& cfg) {
    TemporalShapesSpec s;
    s.t = pick<int>(cfg, "data", "t");
    s.h = pick<int>(cfg, "data", "h");
    s.w = pick<int>(cfg, "data", "w");
    s.num_classes = pick<int>(cfg, "data", "num_classes");
    s.blob_sigma_min = pick<double>(cfg, "data", "blob_sigma_min");
    s.blob_sigma_max = pick<double>(cfg, "data", "blob_sigma_max");
    s.speed_min = pick<double>(cfg, "data", "speed_min");
    s.speed_max = pick<double>(cfg, "data", "speed_max");
    s.ramp_speed_lo = pick<double>(cfg, "data", "ramp_speed_lo");
    s.ramp_speed_hi = pick<double>(cfg, "data", "ramp_speed_hi");
    s.pixel_noise = pick<double>(cfg, "data", "pixel_noise");
    return s;
}

BackboneConfig backbone_from_config(const Json& cfg) {
    BackboneConfig b;
    b.latent_channels = pick<int>(cfg, "backbone", "latent_channels");
    b.base_channels = pick<int>(cfg, "backbone", "base_channels");
    b.channel_multipliers = pick<std::vector<int>>(cfg, "backbone", "channel_multipliers");
    b.num_up_blocks = pick<int>(cfg, "backbone", "num_up_blocks");
    b.feature_tap_index = pick<int>(cfg, "backbone", "feature_tap_index");
    b.num_classes = pick<int>(cfg, "backbone", "num_classes");
    b.temporal_mixing = pick<std::string>(cfg, "backbone", "temporal_mixing");
    b.emb_dim = pick<int>(cfg, "backbone", "emb_dim");
    b.gn_groups = pick<int>(cfg, "backbone", "gn_groups");
    b.mask_indicator_channel = pick<bool>(cfg, "backbone", "mask_indicator_channel");
    return b;
}

TrainConfig train_from_config(const Json& cfg) {
    TrainConfig t;
    t.phase = pick<std::string>(cfg, "train", "phase");
    t.gamma = pick<double>(cfg, "train", "gamma");
    t.p_drop = pick<double>(cfg, "train", "p_drop");
    t.batch_size = pick<int>(cfg, "train", "batch_size");
    t.epochs = pick<int>(cfg, "train", "epochs");
    t.base_lr = pick<double>(cfg, "train", "base_lr");
    t.warmup_lr = pick<double>(cfg, "train", "warmup_lr");
    t.final_lr = pick<double>(cfg, "train", "final_lr");
    t.warmup_epochs = pick<int>(cfg, "train", "warmup_epochs");
    t.warmup_steps = pick<int>(cfg, "train", "warmup_steps");
    t.weight_decay = pick<double>(cfg, "train", "weight_decay");
    t.head_lr_mult = pick<double>(cfg, "train", "head_lr_mult");
    t.probe_head_only = pick<bool>(cfg, "train", "probe_head_only");
    t.mask_min_hidden = pick<double>(cfg, "train", "mask_min_hidden");
    t.p_mean = pick<double>(cfg, "train", "p_mean");
    t.p_std = pick<double>(cfg, "train", "p_std");
    t.seed = pick<uint64_t>(cfg, "train", "seed");
    return t;
}

SamplerConfig sampler_from_config(const Json& cfg) {
    SamplerConfig s;
    s.n_steps = pick<int>(cfg, "sampler", "n_steps");
    s.sigma_min = pick<double>(cfg, "sampler", "sigma_min");
    s.sigma_max = pick<double>(cfg, "sampler", "sigma_max");
    s.rho = pick<double>(cfg, "sampler", "rho");
    s.churn = pick<double>(cfg, "sampler", "churn");
    s.guidance_scale = pick<double>(cfg, "sampler", "guidance_scale");
    s.guidance_target = pick<int>(cfg, "sampler", "guidance_target");
    s.cfg_scale = pick<double>(cfg, "sampler", "cfg_scale");
    return s;
}

RecognitionConfig recognition_from_config(const Json& cfg) {
    RecognitionConfig r;
    r.eval_sigma = pick<double>(cfg, "recognition", "eval_sigma");
    r.n_eval_draws = pick<int>(cfg, "recognition", "n_eval_draws");
    r.seed = pick<uint64_t>(cfg, "recognition", "seed");
    return r;
}

}  // namespace uvd
