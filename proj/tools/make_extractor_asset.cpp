// Regenerates the frozen feature-extractor checkpoint used by the video
// Frechet metric. Run from the repository root; the asset path is fixed so
// every evaluation sees the same feature space.
#include <cstdio>

#include "uvd/config.hpp"
#include "uvd/extractor.hpp"
#include "uvd/temporal_shapes.hpp"

int main() {
    using namespace uvd;
    Json cfg = default_config();
    TemporalShapesSpec spec = data_spec_from_config(cfg);
    int n = cfg.at("data").at("n").get<int>();
    uint64_t seed = cfg.at("data").at("seed").get<uint64_t>();
    std::printf("generating %d clips...\n", n);
    VideoDataset full = generate_temporal_shapes(spec, n, seed);
    VideoDataset train = dataset_split(full, Split::train);
    VideoDataset val = dataset_split(full, Split::val);

    ExtractorConfig ecfg;
    ecfg.num_classes = spec.num_classes;
    ExtractorTrainConfig tcfg;
    tcfg.steps = cfg.at("eval").at("extractor_steps").get<int>();
    tcfg.seed = cfg.at("eval").at("extractor_seed").get<uint64_t>();
    std::string path = cfg.at("eval").at("extractor_path").get<std::string>();

    std::printf("training extractor (%d steps) on %zu clips...\n", tcfg.steps,
                train.samples.size());
    FeatureExtractor ex = load_or_train_extractor(ecfg, path, train, tcfg);
    double train_acc = extractor_accuracy(ex, train);
    double val_acc = extractor_accuracy(ex, val);
    std::printf("saved %s\ntrain accuracy: %.4f (%zu clips)\nval accuracy: %.4f (%zu clips)\n",
                path.c_str(), train_acc, train.samples.size(), val_acc, val.samples.size());
    return 0;
}
