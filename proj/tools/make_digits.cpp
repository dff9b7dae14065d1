// make-digits: writes a deterministic two-class digit dataset as IDX files
// (train-images.idx, train-labels.idx, test-images.idx, test-labels.idx).
// The test split uses a different seed stream than the train split.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include <ilab/idx.hpp>
#include <ilab/io.hpp>
#include <ilab/rng.hpp>
#include <ilab/synthetic.hpp>

int main(int argc, char** argv) {
    CLI::App app{"deterministic two-class IDX digit dataset generator"};
    std::string out_dir = "data";
    ilab::SyntheticSpec spec;
    size_t test_per_class = 500;
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--train-per-class", spec.per_class, "training examples per class");
    app.add_option("--test-per-class", test_per_class, "test examples per class");
    app.add_option("--seed", spec.seed, "generator seed");
    app.add_option("--jitter", spec.jitter, "shape center jitter in pixels");
    app.add_option("--noise", spec.noise, "pixel noise amplitude in [0,1]");
    app.add_option("--label-noise", spec.label_noise, "fraction of flipped labels");
    CLI11_PARSE(app, argc, argv);

    try {
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);

        ilab::SyntheticData train = ilab::generate_synthetic(spec);
        ilab::SyntheticSpec test_spec = spec;
        test_spec.per_class = test_per_class;
        test_spec.seed = ilab::mix_u64(spec.seed, 0x54455354ULL); // "TEST"
        ilab::SyntheticData test = ilab::generate_synthetic(test_spec);

        const fs::path out(out_dir);
        ilab::detail::write_file_bytes(out / "train-images.idx",
                                       ilab::write_idx_images(train.rows, train.cols,
                                                              train.images));
        ilab::detail::write_file_bytes(out / "train-labels.idx",
                                       ilab::write_idx_labels(train.labels));
        ilab::detail::write_file_bytes(out / "test-images.idx",
                                       ilab::write_idx_images(test.rows, test.cols, test.images));
        ilab::detail::write_file_bytes(out / "test-labels.idx",
                                       ilab::write_idx_labels(test.labels));
        std::printf("wrote %zu train and %zu test examples to %s\n", train.images.size(),
                    test.images.size(), out_dir.c_str());
        return 0;
    } catch (const ilab::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
