#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "deblur/errors.hpp"
#include "deblur/image_io.hpp"
#include "deblur/pipeline.hpp"

#include "test_util.hpp"

#include <cmath>
#include <filesystem>

namespace fs = std::filesystem;
using namespace deblur;

namespace {

// Frame directory with a translating white square, plus the fps metadata.
void write_frames(const std::string& dir, int count, int size = 64, int square = 16) {
    fs::create_directories(dir);
    for (int i = 0; i < count; ++i) {
        Tensor frame = testutil::square_frame(size, square, size / 3, 4 + i);
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04d.png", i);
        write_image(frame, (fs::path(dir) / name).string());
    }
    std::ofstream meta(fs::path(dir) / "meta.txt");
    meta << "fps 240\n";
}

SynthOptions synth_opts(const std::string& in, const std::string& out,
                        std::uint64_t seed = 7) {
    SynthOptions opt;
    opt.input_dir = in;
    opt.output_dir = out;
    opt.windows = {7, 9};
    opt.stride = 4;
    opt.seed = seed;
    return opt;
}

const std::string& shared_dataset() {
    static testutil::TempDir frames("frames_fixture");
    static testutil::TempDir dataset("dataset_fixture");
    static bool built = false;
    if (!built) {
        write_frames(frames.str(), 24);
        SynthSummary s = run_synth(synth_opts(frames.str(), dataset.str()));
        REQUIRE(s.pairs >= 3);
        built = true;
    }
    static std::string dir = dataset.str();
    return dir;
}

// Cheap trained checkpoint shared by the infer/eval cases.
const std::string& quick_checkpoint() {
    static testutil::TempDir dir("train_fixture");
    static std::string path;
    if (path.empty()) {
        TrainOptions opt;
        opt.dataset_dir = shared_dataset();
        opt.output_dir = dir.str();
        opt.preset = "desk";
        opt.overrides = {{"total_iterations", "3"},
                         {"batch_size", "2"},
                         {"seed", "5"},
                         {"aug_noise", "0"}};
        TrainSummary s = run_train(opt);
        REQUIRE(s.iterations == 3);
        path = s.checkpoint_path;
    }
    return path;
}

} // namespace

TEST_CASE("png round trip preserves 8-bit data exactly") {
    testutil::TempDir dir("png");
    Rng rng(1);
    Tensor img = Tensor::uniform(Shape{1, 3, 20, 24}, rng, 0.0, 1.0);
    const std::string path = (dir / "img.png").string();
    write_image(img, path);
    Tensor back = read_image(path);
    CHECK(back.shape == img.shape);
    CHECK(max_abs_diff(back, quantize8(img)) == 0.0);
    CHECK_THROWS_AS(read_image((dir / "missing.png").string()), IoError);
}

TEST_CASE("synth writes dataset layout, manifest and config echo") {
    testutil::TempDir frames("synth_frames");
    testutil::TempDir out("synth_out");
    write_frames(frames.str(), 24);
    SynthSummary s = run_synth(synth_opts(frames.str(), out.str()));
    CHECK(s.pairs >= 3);
    CHECK_FALSE(s.too_short);
    CHECK(fs::exists(out / "manifest.txt"));
    CHECK(fs::exists(out / "run_config.txt"));
    CHECK(fs::exists(out / "blur/000000.png"));
    CHECK(fs::exists(out / "sharp/000000.png"));

    std::vector<BlurPair> pairs = load_dataset(out.str());
    CHECK(static_cast<int>(pairs.size()) == s.pairs);
    for (const BlurPair& p : pairs) {
        CHECK(p.blurry.shape == Shape{1, 3, 64, 64});
        CHECK(p.window_length % 2 == 1);
        CHECK(p.gamma == 2.2);
    }
}

TEST_CASE("synth requires the fps metadata file") {
    testutil::TempDir frames("synth_nometa");
    testutil::TempDir out("synth_nometa_out");
    write_frames(frames.str(), 10);
    fs::remove(frames / "meta.txt");
    CHECK_THROWS_AS(run_synth(synth_opts(frames.str(), out.str())), IoError);
}

TEST_CASE("synth is byte-deterministic and the config echo reproduces it") {
    testutil::TempDir frames("synth_det_frames");
    write_frames(frames.str(), 20);
    testutil::TempDir out1("synth_det1");
    testutil::TempDir out2("synth_det2");
    run_synth(synth_opts(frames.str(), out1.str(), 99));
    run_synth(synth_opts(frames.str(), out2.str(), 99));
    CHECK(testutil::read_file((out1 / "manifest.txt").string()) ==
          testutil::read_file((out2 / "manifest.txt").string()));
    CHECK(testutil::read_file((out1 / "blur/000000.png").string()) ==
          testutil::read_file((out2 / "blur/000000.png").string()));

    // Same run rebuilt purely from the echoed configuration.
    auto echo = read_config_file((out1 / "run_config.txt").string());
    SynthOptions fed;
    for (const auto& [k, v] : echo) {
        if (k == "input") {
            fed.input_dir = v;
        } else if (k == "windows") {
            fed.windows.clear();
            std::stringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ','))
                fed.windows.push_back(std::stoi(item));
        } else if (k == "stride") {
            fed.stride = std::stoi(v);
        } else if (k == "gamma") {
            fed.gamma = std::stod(v);
        } else if (k == "seed") {
            fed.seed = std::stoull(v);
        }
    }
    testutil::TempDir out3("synth_det3");
    fed.output_dir = out3.str();
    run_synth(fed);
    CHECK(testutil::read_file((out1 / "manifest.txt").string()) ==
          testutil::read_file((out3 / "manifest.txt").string()));
    CHECK(testutil::read_file((out1 / "sharp/000001.png").string()) ==
          testutil::read_file((out3 / "sharp/000001.png").string()));
}

TEST_CASE("augment-preview writes deterministic pairs") {
    testutil::TempDir frames("pv_frames");
    write_frames(frames.str(), 3, 32, 8);
    testutil::TempDir out1("pv1");
    testutil::TempDir out2("pv2");
    AugmentPreviewOptions opt;
    opt.blur_path = (frames / "frame_0000.png").string();
    opt.sharp_path = (frames / "frame_0001.png").string();
    opt.count = 3;
    opt.seed = 11;
    opt.output_dir = out1.str();
    run_augment_preview(opt);
    opt.output_dir = out2.str();
    run_augment_preview(opt);
    for (int i = 0; i < 3; ++i) {
        char name[40];
        std::snprintf(name, sizeof(name), "preview_%03d_blur.png", i);
        CHECK(fs::exists(out1 / name));
        CHECK(testutil::read_file((out1 / name).string()) ==
              testutil::read_file((out2 / name).string()));
    }
}

TEST_CASE("train writes loss log, checkpoint and echo; config keys are validated") {
    const std::string ckpt = quick_checkpoint();
    CHECK(fs::exists(ckpt));
    const fs::path out = fs::path(ckpt).parent_path();
    CHECK(fs::exists(out / "loss_log.txt"));
    CHECK(fs::exists(out / "run_config.txt"));

    const std::string log = testutil::read_file((out / "loss_log.txt").string());
    CHECK(log.find("# iteration content adv_g adv_d total lr") != std::string::npos);
    CHECK(log.find("\n0 ") != std::string::npos);

    TrainOptions bad;
    bad.dataset_dir = shared_dataset();
    bad.output_dir = (out / "bad").string();
    bad.overrides = {{"no_such_key", "1"}};
    CHECK_THROWS_AS(run_train(bad), ValueError);
}

TEST_CASE("train config echo resolves back to the identical configuration") {
    const std::string ckpt = quick_checkpoint();
    const fs::path out = fs::path(ckpt).parent_path();

    TrainOptions fed;
    fed.config_path = (out / "run_config.txt").string();
    std::string dataset2, out2, resume2;
    TrainConfig cfg = resolve_train_config(fed, &dataset2, &out2, &resume2);
    CHECK(dataset2 == shared_dataset());
    CHECK(cfg.total_iterations == 3);
    CHECK(cfg.batch_size == 2);
    CHECK(cfg.seed == 5);
    CHECK(cfg.aug.noise == false);
    CHECK(cfg.gen.resblocks_per_scale == 2);
}

TEST_CASE("infer handles single files, directories and non-divisible sizes") {
    const std::string dataset = shared_dataset();
    const std::string ckpt = quick_checkpoint();

    testutil::TempDir odd("infer_odd");
    Rng rng(3);
    Tensor odd_img = Tensor::uniform(Shape{1, 3, 100, 100}, rng, 0.0, 1.0);
    write_image(odd_img, (odd / "odd.png").string());

    testutil::TempDir out("infer_out");
    InferOptions opt;
    opt.checkpoint = ckpt;
    opt.input_path = (odd / "odd.png").string();
    opt.output_dir = out.str();
    InferSummary s = run_infer(opt);
    CHECK(s.written == 1);
    CHECK(s.failed.empty());
    Tensor result = read_image((out / "odd_deblur.png").string());
    CHECK(result.shape == Shape{1, 3, 100, 100}); // padded to 104, cropped back

    // Directory mode: every blur image processed, same bytes as single runs.
    testutil::TempDir out_dir("infer_dir");
    InferOptions dopt;
    dopt.checkpoint = ckpt;
    dopt.input_path = dataset + "/blur";
    dopt.output_dir = out_dir.str();
    dopt.save_pyramid = true;
    InferSummary ds = run_infer(dopt);
    CHECK(ds.written >= 3);
    CHECK(fs::exists(out_dir / "000000_deblur.png"));
    CHECK(fs::exists(out_dir / "000000_L2.png"));
    CHECK(fs::exists(out_dir / "000000_L3.png"));

    testutil::TempDir out_single("infer_single");
    InferOptions sopt;
    sopt.checkpoint = ckpt;
    sopt.input_path = dataset + "/blur/000001.png";
    sopt.output_dir = out_single.str();
    run_infer(sopt);
    CHECK(testutil::read_file((out_dir / "000001_deblur.png").string()) ==
          testutil::read_file((out_single / "000001_deblur.png").string()));
}

TEST_CASE("infer records per-file failures and keeps going") {
    const std::string ckpt = quick_checkpoint();
    testutil::TempDir mixed("infer_mixed");
    Rng rng(4);
    write_image(Tensor::uniform(Shape{1, 3, 32, 32}, rng, 0.0, 1.0),
                (mixed / "a_good.png").string());
    {
        std::ofstream junk(mixed / "b_junk.png");
        junk << "not a png";
    }
    write_image(Tensor::uniform(Shape{1, 3, 32, 32}, rng, 0.0, 1.0),
                (mixed / "c_good.png").string());

    testutil::TempDir out("infer_mixed_out");
    InferOptions opt;
    opt.checkpoint = ckpt;
    opt.input_path = mixed.str();
    opt.output_dir = out.str();
    InferSummary s = run_infer(opt);
    CHECK(s.written == 2);
    REQUIRE(s.failed.size() == 1);
    CHECK(s.failed[0].find("b_junk.png") != std::string::npos);
}

TEST_CASE("eval: identity baseline, model mode, per-item errors") {
    const std::string dataset = shared_dataset();
    const std::string ckpt = quick_checkpoint();

    testutil::TempDir out("eval_out");
    EvalOptions base;
    base.dataset_dir = dataset;
    base.output_path = (out / "baseline.txt").string();
    EvalSummary bs = run_eval(base);
    CHECK(bs.images >= 3);
    CHECK(bs.errors == 0);
    CHECK(bs.mean_psnr > 5.0);
    CHECK(bs.mean_psnr < 99.0);
    CHECK(std::isnan(bs.mean_msssim)); // 64x64 is below the 5-level minimum
    CHECK(fs::exists(out / "baseline.txt"));
    CHECK(fs::exists(out / "baseline.txt.csv"));

    const std::string report = testutil::read_file((out / "baseline.txt").string());
    CHECK(report.find("path psnr ssim msssim") != std::string::npos);
    CHECK(report.find("mean ") != std::string::npos);

    EvalOptions model;
    model.checkpoint = ckpt;
    model.dataset_dir = dataset;
    model.output_path = (out / "model.txt").string();
    EvalSummary ms = run_eval(model);
    CHECK(ms.images == bs.images);
    CHECK(std::isfinite(ms.mean_psnr));

    EvalOptions wrong = model;
    wrong.scales = 2; // desk checkpoint has 3
    CHECK_THROWS_AS(run_eval(wrong), ValueError);

    // Remove one blur file: that row becomes an error entry, the rest proceed.
    testutil::TempDir broken("eval_broken");
    fs::create_directories(broken / "blur");
    fs::create_directories(broken / "sharp");
    fs::copy(fs::path(dataset) / "manifest.txt", broken / "manifest.txt");
    for (const auto& entry : fs::directory_iterator(fs::path(dataset) / "blur"))
        if (entry.path().filename() != "000000.png")
            fs::copy(entry.path(), broken / "blur" / entry.path().filename());
    for (const auto& entry : fs::directory_iterator(fs::path(dataset) / "sharp"))
        fs::copy(entry.path(), broken / "sharp" / entry.path().filename());
    EvalOptions be;
    be.dataset_dir = broken.str();
    be.output_path = (out / "broken.txt").string();
    EvalSummary bsum = run_eval(be);
    CHECK(bsum.errors == 1);
    CHECK(bsum.images == bs.images - 1);
    CHECK(testutil::read_file((out / "broken.txt").string()).find("ERROR") !=
          std::string::npos);
}

TEST_CASE("run_train resumes from a checkpoint and continues the iteration count") {
    testutil::TempDir out("resume_run");
    TrainOptions opt;
    opt.dataset_dir = shared_dataset();
    opt.output_dir = out.str();
    opt.overrides = {{"total_iterations", "2"}, {"batch_size", "2"}, {"seed", "8"},
                     {"aug_noise", "0"}};
    TrainSummary first = run_train(opt);
    CHECK(first.iterations == 2);

    testutil::TempDir out2("resume_run2");
    TrainOptions cont = opt;
    cont.output_dir = out2.str();
    cont.resume_checkpoint = first.checkpoint_path;
    cont.overrides.push_back({"total_iterations", "4"});
    TrainSummary second = run_train(cont);
    CHECK(second.iterations == 4);

    const std::string log = testutil::read_file((out2 / "loss_log.txt").string());
    CHECK(log.find("\n2 ") != std::string::npos); // continues at iteration 2
    CHECK(log.find("\n0 ") == std::string::npos);
}

TEST_CASE("gradcheck layer scope passes through the pipeline entry point") {
    GradCheckSummary s = run_gradcheck("layer", 0);
    CHECK(s.pass);
    CHECK(s.max_rel_err <= 1e-4);
    CHECK(s.checks.size() == 6);
    CHECK_THROWS_AS(run_gradcheck("nonsense", 0), ValueError);
}
