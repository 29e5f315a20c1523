#include "uvd/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>

#include "uvd/checkpoint.hpp"
#include "uvd/common.hpp"
#include "uvd/config.hpp"
#include "uvd/dataset_io.hpp"
#include "uvd/extractor.hpp"
#include "uvd/masking.hpp"
#include "uvd/metrics.hpp"
#include "uvd/model.hpp"
#include "uvd/plots.hpp"
#include "uvd/recognition.hpp"
#include "uvd/sampler.hpp"
#include "uvd/sweeps.hpp"
#include "uvd/temporal_shapes.hpp"
#include "uvd/trainer.hpp"

extern "C" char** environ;

namespace uvd {

namespace {

namespace fs = std::filesystem;

std::map<std::string, std::string> process_env() {
    std::map<std::string, std::string> env;
    for (char** e = environ; *e != nullptr; ++e) {
        const char* s = *e;
        const char* eq = std::strchr(s, '=');
        if (eq) env.emplace(std::string(s, eq), std::string(eq + 1));
    }
    return env;
}

// Shared --config/--set handling; the environment applies between them.
struct ConfigArgs {
    std::string file;
    std::vector<std::string> sets;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", file, "JSON config file");
        cmd->add_option("--set", sets, "config override, key.path=value (repeatable)");
    }
    Json resolve() const { return resolve_config(file, process_env(), sets); }
};

// Exclusive ownership of a run directory while training writes into it.
struct RunLock {
    std::string path;

    explicit RunLock(const std::string& run_dir) : path(run_dir + "/.lock") {
        int fd = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) {
            if (errno == EEXIST)
                throw IoError("run directory is locked (training in progress?); remove " + path +
                              " if it is stale");
            throw IoError("cannot create lock file " + path + ": " + std::strerror(errno));
        }
        std::string pid = std::to_string(::getpid()) + "\n";
        ssize_t n = ::write(fd, pid.data(), pid.size());
        (void)n;
        ::close(fd);
    }
    ~RunLock() { ::unlink(path.c_str()); }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(text.data(), std::streamsize(text.size()));
    if (!out) throw IoError("write failed: " + path);
}

void save_resolved_config(const Json& cfg, const std::string& path) {
    write_text(path, cfg.dump(2) + "\n");
}

// Run configs are complete trees; merging onto defaults re-validates keys.
Json read_run_config(const std::string& run_dir) {
    Json cfg = default_config();
    merge_config(cfg, load_config_file(run_dir + "/config.json"));
    return cfg;
}

std::unique_ptr<VideoModel> build_model(const Json& cfg) {
    BackboneConfig b = backbone_from_config(cfg);
    b.validate();
    double sigma_data = cfg.at("train").at("sigma_data").get<double>();
    uint64_t init_seed = cfg.at("train").at("init_seed").get<uint64_t>();
    return std::make_unique<VideoModel>(b, sigma_data, init_seed);
}

struct LoadedModel {
    Json cfg;
    std::unique_ptr<VideoModel> model;
    CheckpointMeta meta;
};

LoadedModel load_run_model(const std::string& run_dir, std::string checkpoint,
                           const std::vector<std::string>& sets) {
    LoadedModel lm;
    lm.cfg = read_run_config(run_dir);
    for (const std::string& s : sets) set_config_value(lm.cfg, s);
    lm.model = build_model(lm.cfg);
    if (checkpoint.empty()) checkpoint = run_dir + "/last.ckpt";
    lm.meta = load_checkpoint(checkpoint, lm.model->params(), nullptr, config_hash(lm.cfg));
    return lm;
}

FrameMask parse_mask(const std::string& s, int t) {
    FrameMask m;
    m.visible.assign(size_t(t), false);
    auto prefix_of = [&](int k) {
        for (int i = 0; i < k && i < t; ++i) m.visible[size_t(i)] = true;
    };
    if (s == "full" || s == "all_visible") {
        m.visible.assign(size_t(t), true);
    } else if (s == "all_hidden") {
        // leave all hidden
    } else if (s == "first" || s == "first_frame") {
        prefix_of(1);
    } else if (s.rfind("prefix:", 0) == 0) {
        int k = std::stoi(s.substr(7));
        if (k < 1 || k > t) throw std::invalid_argument("mask prefix count out of range: " + s);
        prefix_of(k);
    } else if (s.rfind("uniform:", 0) == 0) {
        int k = std::stoi(s.substr(8));
        if (k < 1 || k > t) throw std::invalid_argument("mask uniform count out of range: " + s);
        m = mask_for_sparse_frames(k, t);
    } else if (s.rfind("ratio:", 0) == 0) {
        double r = std::stod(s.substr(6));
        if (r < 0.0 || r > 1.0) throw std::invalid_argument("mask ratio out of range: " + s);
        m = mask_for_observation_ratio(r, t);
    } else {
        throw std::invalid_argument(
            "unknown mask spec '" + s +
            "'; valid: full | all_visible | all_hidden | first | prefix:K | uniform:K | "
            "ratio:R");
    }
    return m;
}

int video_t(const VideoDataset& ds) {
    if (ds.samples.empty()) throw std::invalid_argument("dataset has no samples");
    return ds.samples[0].video.dim(0);
}

VideoDataset head_of(const VideoDataset& ds, int n) {
    if (n <= 0 || n >= int(ds.samples.size())) return ds;
    VideoDataset out;
    out.num_classes = ds.num_classes;
    out.class_names = ds.class_names;
    out.samples.assign(ds.samples.begin(), ds.samples.begin() + n);
    return out;
}

// ---- data gen / inspect ----

int cmd_data_gen(const Json& cfg, const std::string& out_override, bool overwrite) {
    std::string dir =
        out_override.empty() ? cfg.at("data").at("dir").get<std::string>() : out_override;
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw IoError("data gen: target is not a directory: " + dir);
        if (!fs::is_empty(dir) && !overwrite)
            throw IoError("data gen: target directory " + dir +
                          " is not empty; pass --overwrite to regenerate");
    }
    fs::create_directories(dir);

    TemporalShapesSpec spec = data_spec_from_config(cfg);
    spec.validate();
    int n = cfg.at("data").at("n").get<int>();
    uint64_t seed = cfg.at("data").at("seed").get<uint64_t>();
    VideoDataset all = generate_temporal_shapes(spec, n, seed);
    uint64_t spec_hash = temporal_shapes_spec_hash(spec);

    Json manifest;
    manifest["n"] = n;
    manifest["seed"] = seed;
    manifest["spec_hash"] = spec_hash;
    manifest["class_names"] = all.class_names;
    const std::pair<Split, const char*> splits[] = {
        {Split::train, "train"}, {Split::val, "val"}, {Split::test, "test"}};
    for (const auto& [split, name] : splits) {
        VideoDataset part = dataset_split(all, split);
        std::string file = std::string(name) + ".uvd";
        save_dataset(part, spec_hash, dir + "/" + file);
        manifest["splits"][name] = {{"file", file}, {"count", part.samples.size()}};
        std::cout << name << ": " << part.samples.size() << " clips -> " << dir << "/" << file
                  << "\n";
    }
    write_text(dir + "/manifest.json", manifest.dump(2) + "\n");
    std::cout << "manifest: " << dir << "/manifest.json\n";
    return 0;
}

int cmd_data_inspect(const std::string& path) {
    LoadedDataset ld = load_dataset(path);
    const VideoDataset& ds = ld.dataset;
    std::cout << "file: " << path << "\n";
    std::cout << "clips: " << ds.samples.size() << "\n";
    if (!ds.samples.empty()) {
        const Tensor& v = ds.samples[0].video;
        std::cout << "shape: [" << v.dim(0) << ", " << v.dim(1) << ", " << v.dim(2) << ", "
                  << v.dim(3) << "]\n";
    }
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(ld.spec_hash));
    std::cout << "spec_hash: " << hex << "\n";
    std::cout << "classes: " << ds.num_classes << "\n";
    std::vector<int> histogram(size_t(std::max(ds.num_classes, 1)), 0);
    for (const VideoSample& s : ds.samples)
        if (s.label >= 0 && s.label < ds.num_classes) ++histogram[size_t(s.label)];
    for (int c = 0; c < ds.num_classes; ++c) {
        std::string name = c < int(ds.class_names.size()) ? ds.class_names[size_t(c)]
                                                          : std::to_string(c);
        std::cout << "  " << name << ": " << histogram[size_t(c)] << "\n";
    }
    return 0;
}

// ---- train ----

int cmd_train(const Json& cfg_in, const std::string& run_dir, const std::string& data_file,
              const std::string& resume, const std::string& phase_override) {
    Json cfg = cfg_in;
    if (!phase_override.empty()) set_config_value(cfg, "train.phase=" + phase_override);

    fs::create_directories(run_dir);
    RunLock lock(run_dir);

    std::string data_path =
        data_file.empty() ? cfg.at("data").at("dir").get<std::string>() + "/train.uvd"
                          : data_file;
    LoadedDataset ld = load_dataset(data_path);
    if (ld.dataset.samples.empty()) throw IoError("train: dataset is empty: " + data_path);

    uint64_t chash = config_hash(cfg);
    auto model = build_model(cfg);
    TrainConfig tc = train_from_config(cfg);
    tc.validate();
    Trainer trainer(*model, ld.dataset, tc);
    if (!resume.empty()) {
        CheckpointMeta meta = load_checkpoint(resume, model->params(), &trainer.optimizer(),
                                              chash);
        trainer.restore_step(meta.step);
        std::cout << "resumed from " << resume << " at step " << meta.step << "\n";
    }

    save_resolved_config(cfg, run_dir + "/config.json");
    std::ofstream log(run_dir + "/metrics.jsonl", std::ios::app);
    if (!log) throw IoError("train: cannot open metrics log in " + run_dir);

    int save_every = std::max(1, cfg.at("train").at("save_every_epochs").get<int>());
    while (!trainer.done()) {
        std::vector<TrainStepRecord> records;
        trainer.run_epoch(&records);
        double gen = 0.0, cls = 0.0;
        for (const TrainStepRecord& r : records) {
            log << train_record_jsonl(r) << "\n";
            gen += r.gen_loss;
            cls += r.cls_loss;
        }
        log.flush();
        int epoch = trainer.epoch_index();
        std::cout << "epoch " << epoch << "/" << tc.epochs << " gen " << gen / records.size()
                  << " cls " << cls / records.size() << " lr " << records.back().lr << "\n";
        if (epoch % save_every == 0 || trainer.done()) {
            std::string tagged =
                run_dir + "/ckpt_step_" + std::to_string(trainer.step()) + ".ckpt";
            save_checkpoint(tagged, model->params(), trainer.optimizer(), trainer.step(), epoch,
                            chash);
            save_checkpoint(run_dir + "/last.ckpt", model->params(), trainer.optimizer(),
                            trainer.step(), epoch, chash);
        }
    }
    std::cout << "done: " << trainer.step() << " steps, checkpoints in " << run_dir << "\n";
    return 0;
}

// ---- sample ----

int cmd_sample(const std::string& run_dir, const std::string& checkpoint,
               const std::string& data_file, const std::string& out_dir,
               const std::string& mask_str, int class_index, double guidance_scale, int count,
               uint64_t seed, const std::vector<std::string>& sets) {
    LoadedModel lm = load_run_model(run_dir, checkpoint, sets);
    if (class_index >= lm.model->num_classes())
        throw std::invalid_argument("class index " + std::to_string(class_index) +
                                    " out of range; model has " +
                                    std::to_string(lm.model->num_classes()) + " classes");

    SamplerConfig scfg = sampler_from_config(lm.cfg);
    if (class_index >= 0) scfg.guidance_target = class_index;
    if (guidance_scale >= 0.0) scfg.guidance_scale = guidance_scale;

    std::string data_path =
        data_file.empty() ? lm.cfg.at("data").at("dir").get<std::string>() + "/val.uvd"
                          : data_file;
    LoadedDataset src = load_dataset(data_path);
    if (src.dataset.samples.empty()) throw IoError("sample: source dataset is empty");
    int t = video_t(src.dataset);
    FrameMask mask = parse_mask(mask_str, t);

    fs::create_directories(out_dir);
    VideoDataset out;
    out.num_classes = src.dataset.num_classes;
    out.class_names = src.dataset.class_names;
    Rng base(seed);
    for (int i = 0; i < count; ++i) {
        const VideoSample& s = src.dataset.samples[size_t(i) % src.dataset.samples.size()];
        Tensor cond = build_condition(s.video, mask, lm.model->wants_mask_indicator());
        Rng rng = base.fork(uint64_t(i));
        Tensor gen = sample(*lm.model, cond, s.video.shape(), scfg, rng);
        for (int64_t j = 0; j < gen.numel(); ++j) gen.data()[j] = quantize_unit(gen.data()[j]);
        VideoSample g;
        g.video = std::move(gen);
        g.label = class_index >= 0 ? class_index : s.label;
        g.id = i;
        out.samples.push_back(std::move(g));
    }
    save_dataset(out, src.spec_hash, out_dir + "/generated.uvd");

    Json sidecar;
    sidecar["run_dir"] = run_dir;
    sidecar["checkpoint_step"] = lm.meta.step;
    sidecar["mask"] = mask_str;
    sidecar["class_index"] = class_index;
    sidecar["n"] = count;
    sidecar["seed"] = seed;
    sidecar["source_data"] = data_path;
    sidecar["sampler"] = {{"n_steps", scfg.n_steps},
                          {"sigma_min", scfg.sigma_min},
                          {"sigma_max", scfg.sigma_max},
                          {"rho", scfg.rho},
                          {"churn", scfg.churn},
                          {"guidance_scale", scfg.guidance_scale},
                          {"guidance_target", scfg.guidance_target},
                          {"cfg_scale", scfg.cfg_scale}};
    write_text(out_dir + "/sample_meta.json", sidecar.dump(2) + "\n");
    std::cout << "wrote " << count << " clips to " << out_dir << "/generated.uvd\n";
    return 0;
}

// ---- classify ----

int cmd_classify(const std::string& run_dir, const std::string& checkpoint,
                 const std::string& data_file, const std::string& mask_str, int count,
                 const std::string& out_csv, const std::vector<std::string>& sets) {
    LoadedModel lm = load_run_model(run_dir, checkpoint, sets);
    std::string data_path =
        data_file.empty() ? lm.cfg.at("data").at("dir").get<std::string>() + "/val.uvd"
                          : data_file;
    VideoDataset data = head_of(load_dataset(data_path).dataset, count);
    if (data.samples.empty()) throw IoError("classify: dataset is empty");
    int t = video_t(data);
    FrameMask mask = parse_mask(mask_str, t);
    RecognitionConfig rc = recognition_from_config(lm.cfg);
    double sigma_max = sampler_from_config(lm.cfg).sigma_max;

    std::vector<int> pred, label;
    std::string rows = "id,label,pred\n";
    Rng base(rc.seed);
    for (size_t i = 0; i < data.samples.size(); ++i) {
        const VideoSample& s = data.samples[i];
        Tensor logits;
        if (mask.all_visible()) {
            logits = classify_full(s.video, rc, *lm.model);
        } else {
            Rng rng = base.fork(uint64_t(i));
            logits = classify_partial(s.video, mask, *lm.model, rng, sigma_max);
        }
        int p = predict(logits).class_index;
        pred.push_back(p);
        label.push_back(s.label);
        rows += std::to_string(s.id) + "," + std::to_string(s.label) + "," + std::to_string(p) +
                "\n";
    }
    double acc = top1_accuracy(pred, label);
    std::cout << "accuracy " << acc << " on " << pred.size() << " clips (mask " << mask_str
              << ")\n";
    if (!out_csv.empty()) write_text(out_csv, rows);
    return 0;
}

// ---- eval ----

FeatureExtractor eval_extractor(const Json& cfg, const VideoDataset& data) {
    ExtractorConfig ecfg;
    ecfg.num_classes = std::max(2, data.num_classes);
    ExtractorTrainConfig tcfg;
    tcfg.steps = cfg.at("eval").at("extractor_steps").get<int>();
    tcfg.seed = cfg.at("eval").at("extractor_seed").get<uint64_t>();
    std::string path = cfg.at("eval").at("extractor_path").get<std::string>();
    return load_or_train_extractor(ecfg, path, data, tcfg);
}

std::vector<MetricRecord> eval_fvd_records(const Json& cfg, const VideoModel& model,
                                           const VideoDataset& data, uint64_t seed) {
    FeatureExtractor ex = eval_extractor(cfg, data);
    std::vector<Tensor> half_a, half_b, all_real;
    for (size_t i = 0; i < data.samples.size(); ++i) {
        (i % 2 == 0 ? half_a : half_b).push_back(data.samples[i].video);
        all_real.push_back(data.samples[i].video);
    }
    double floor = toy_fvd(half_a, half_b, ex);

    Rng noise_rng = Rng(seed).fork(0x4E4F49534Full);  // pure-noise stream
    std::vector<Tensor> noise_clips;
    for (size_t i = 0; i < half_a.size(); ++i) {
        Tensor clip(data.samples[0].video.shape());
        for (int64_t j = 0; j < clip.numel(); ++j) clip.data()[j] = quantize_unit(noise_rng.normal());
        noise_clips.push_back(std::move(clip));
    }
    double noise_fvd = toy_fvd(noise_clips, all_real, ex);

    SamplerConfig scfg = sampler_from_config(cfg);
    int n_generate = cfg.at("eval").at("n_generate").get<int>();
    FrameMask hidden;
    hidden.visible.assign(size_t(video_t(data)), false);
    Rng gen_rng = Rng(seed).fork(0x47454E00ull);
    std::vector<Tensor> gen_clips;
    for (int i = 0; i < n_generate; ++i) {
        const VideoSample& s = data.samples[size_t(i) % data.samples.size()];
        Tensor cond = build_condition(s.video, hidden, model.wants_mask_indicator());
        Rng rng = gen_rng.fork(uint64_t(i));
        Tensor gen = sample(model, cond, s.video.shape(), scfg, rng);
        for (int64_t j = 0; j < gen.numel(); ++j) gen.data()[j] = quantize_unit(gen.data()[j]);
        gen_clips.push_back(std::move(gen));
    }
    double model_fvd = toy_fvd(gen_clips, all_real, ex);

    int n = int(data.samples.size());
    std::vector<MetricRecord> out;
    out.push_back({"fvd_floor", "none", 0.0, "fvd", floor, n, seed});
    out.push_back({"fvd_noise", "none", 0.0, "fvd", noise_fvd, n, seed});
    out.push_back({"fvd_noise", "none", 0.0, "fvd_rel", noise_fvd / floor, n, seed});
    out.push_back({"fvd_model", "none", 0.0, "fvd", model_fvd, n_generate, seed});
    out.push_back({"fvd_model", "none", 0.0, "fvd_rel", model_fvd / floor, n_generate, seed});
    return out;
}

int cmd_eval(const std::string& run_dir, const std::string& checkpoint,
             const std::string& data_file, const std::string& protocol,
             const std::string& out_override, const std::vector<std::string>& sets) {
    const std::vector<std::string> known = {"full", "early", "sparse", "genrel", "fvd"};
    if (std::find(known.begin(), known.end(), protocol) == known.end()) {
        std::string valid;
        for (const std::string& k : known) valid += " " + k;
        throw std::invalid_argument("unknown protocol '" + protocol + "'; valid:" + valid);
    }

    LoadedModel lm = load_run_model(run_dir, checkpoint, sets);
    std::string data_path =
        data_file.empty() ? lm.cfg.at("data").at("dir").get<std::string>() + "/val.uvd"
                          : data_file;
    int n_eval = lm.cfg.at("eval").at("n_eval").get<int>();
    VideoDataset data = head_of(load_dataset(data_path).dataset, n_eval);
    if (data.samples.empty()) throw IoError("eval: dataset is empty");
    uint64_t seed = lm.cfg.at("eval").at("seed").get<uint64_t>();
    double sigma_max = sampler_from_config(lm.cfg).sigma_max;

    std::vector<MetricRecord> records;
    if (protocol == "full") {
        RecognitionConfig rc = recognition_from_config(lm.cfg);
        std::vector<int> pred, label;
        for (const VideoSample& s : data.samples) {
            pred.push_back(predict(classify_full(s.video, rc, *lm.model)).class_index);
            label.push_back(s.label);
        }
        records.push_back({"full", "none", 0.0, "accuracy", top1_accuracy(pred, label),
                           int(pred.size()), rc.seed});
    } else if (protocol == "early") {
        std::vector<double> grid =
            lm.cfg.at("eval").at("rho_grid").get<std::vector<double>>();
        records = run_early_prediction_sweep(*lm.model, data, grid, seed, sigma_max);
    } else if (protocol == "sparse") {
        std::vector<int> grid = lm.cfg.at("eval").at("k_grid").get<std::vector<int>>();
        records = run_sparse_sweep(*lm.model, data, grid, seed, sigma_max);
    } else if (protocol == "genrel") {
        FeatureExtractor ex = eval_extractor(lm.cfg, data);
        int t = video_t(data);
        std::vector<MaskProtocol> protocols;
        for (int k : lm.cfg.at("eval").at("genrel_frames").get<std::vector<int>>()) {
            protocols.push_back({"prefix" + std::to_string(k), parse_mask("prefix:" + std::to_string(k), t)});
            protocols.push_back({"uniform" + std::to_string(k), parse_mask("uniform:" + std::to_string(k), t)});
        }
        protocols.push_back({"all_visible", parse_mask("full", t)});
        SamplerConfig scfg = sampler_from_config(lm.cfg);
        int n_generate = lm.cfg.at("eval").at("n_generate").get<int>();
        records = run_generation_difficulty_sweep(*lm.model, data, protocols, ex, scfg,
                                                  n_generate, seed);
    } else {
        records = eval_fvd_records(lm.cfg, *lm.model, data, seed);
    }

    std::string out_dir =
        out_override.empty() ? run_dir + "/eval/" + protocol : out_override;
    std::vector<std::string> written = emit_plots(records, out_dir);
    for (const MetricRecord& r : records)
        std::cout << r.protocol << " " << r.sweep_var << "=" << r.sweep_value << " "
                  << r.metric_name << " " << r.metric_value << " (n=" << r.n << ")\n";
    for (const std::string& p : written) std::cout << "wrote " << p << "\n";
    return 0;
}

}  // namespace

int run_cli(std::vector<std::string> args) {
    CLI::App app{"unified video diffusion workbench"};
    app.require_subcommand(1);

    // data gen | data inspect
    CLI::App* data_cmd = app.add_subcommand("data", "dataset tools");
    data_cmd->require_subcommand(1);

    CLI::App* gen = data_cmd->add_subcommand("gen", "generate the synthetic video dataset");
    ConfigArgs gen_cfg;
    gen_cfg.attach(gen);
    std::string gen_out;
    bool gen_overwrite = false;
    gen->add_option("--out", gen_out, "output directory (default: data.dir from config)");
    gen->add_flag("--overwrite", gen_overwrite, "replace an existing non-empty target");
    int rc = 0;
    gen->callback([&] { rc = cmd_data_gen(gen_cfg.resolve(), gen_out, gen_overwrite); });

    CLI::App* inspect = data_cmd->add_subcommand("inspect", "summarize a dataset file");
    std::string inspect_path;
    inspect->add_option("path", inspect_path, "dataset file")->required();
    inspect->callback([&] { rc = cmd_data_inspect(inspect_path); });

    // train
    CLI::App* train = app.add_subcommand("train", "train a model into a run directory");
    ConfigArgs train_cfg;
    train_cfg.attach(train);
    std::string train_run, train_data, train_resume, train_phase;
    train->add_option("--run-dir", train_run, "run directory (created, then locked)")->required();
    train->add_option("--data", train_data, "training dataset file");
    train->add_option("--resume", train_resume, "checkpoint to resume from");
    train->add_option("--phase", train_phase, "gen_only | joint | cls_only");
    train->callback([&] {
        rc = cmd_train(train_cfg.resolve(), train_run, train_data, train_resume, train_phase);
    });

    // sample
    CLI::App* smp = app.add_subcommand("sample", "generate clips from a checkpoint");
    std::string smp_run, smp_ckpt, smp_data, smp_out = "samples", smp_mask = "all_hidden";
    std::vector<std::string> smp_sets;
    int smp_class = -1, smp_n = 8;
    double smp_gs = -1.0;
    uint64_t smp_seed = 0;
    smp->add_option("--run-dir", smp_run, "run directory with config.json")->required();
    smp->add_option("--checkpoint", smp_ckpt, "checkpoint file (default <run-dir>/last.ckpt)");
    smp->add_option("--data", smp_data, "source clips for conditioning frames");
    smp->add_option("--out", smp_out, "output directory");
    smp->add_option("--mask", smp_mask, "full | all_hidden | first | prefix:K | uniform:K | ratio:R");
    smp->add_option("--class-index", smp_class, "guidance target class (-1 = none)");
    smp->add_option("--guidance-scale", smp_gs, "guidance strength s (overrides config when >= 0)");
    smp->add_option("--n", smp_n, "number of clips");
    smp->add_option("--seed", smp_seed, "sampling seed");
    smp->add_option("--set", smp_sets, "config override, key.path=value");
    smp->callback([&] {
        rc = cmd_sample(smp_run, smp_ckpt, smp_data, smp_out, smp_mask, smp_class, smp_gs, smp_n,
                        smp_seed, smp_sets);
    });

    // classify
    CLI::App* cls = app.add_subcommand("classify", "run recognition over a dataset");
    std::string cls_run, cls_ckpt, cls_data, cls_mask = "full", cls_csv;
    std::vector<std::string> cls_sets;
    int cls_n = 0;
    cls->add_option("--run-dir", cls_run, "run directory with config.json")->required();
    cls->add_option("--checkpoint", cls_ckpt, "checkpoint file (default <run-dir>/last.ckpt)");
    cls->add_option("--data", cls_data, "dataset file");
    cls->add_option("--mask", cls_mask, "observation mask (default full)");
    cls->add_option("--n", cls_n, "clip budget (0 = all)");
    cls->add_option("--out", cls_csv, "write per-clip predictions CSV here");
    cls->add_option("--set", cls_sets, "config override, key.path=value");
    cls->callback([&] {
        rc = cmd_classify(cls_run, cls_ckpt, cls_data, cls_mask, cls_n, cls_csv, cls_sets);
    });

    // eval
    CLI::App* ev = app.add_subcommand("eval", "run an evaluation protocol");
    std::string ev_run, ev_ckpt, ev_data, ev_protocol, ev_out;
    std::vector<std::string> ev_sets;
    ev->add_option("--run-dir", ev_run, "run directory with config.json")->required();
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file (default <run-dir>/last.ckpt)");
    ev->add_option("--data", ev_data, "dataset file");
    ev->add_option("--protocol", ev_protocol, "full | early | sparse | genrel | fvd")->required();
    ev->add_option("--out", ev_out, "output directory (default <run-dir>/eval/<protocol>)");
    ev->add_option("--set", ev_sets, "config override, key.path=value");
    ev->callback([&] { rc = cmd_eval(ev_run, ev_ckpt, ev_data, ev_protocol, ev_out, ev_sets); });

    // plots
    CLI::App* pl = app.add_subcommand("plots", "render charts from a metrics CSV");
    std::string pl_csv, pl_out;
    pl->add_option("--csv", pl_csv, "metrics CSV file")->required();
    pl->add_option("--out", pl_out, "output directory")->required();
    pl->callback([&] {
        std::vector<MetricRecord> records = read_metric_csv(pl_csv);
        for (const std::string& p : emit_plots(records, pl_out)) std::cout << "wrote " << p << "\n";
        rc = 0;
    });

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
        return rc;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 5;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace uvd
