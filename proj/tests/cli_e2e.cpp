// End-to-end run of the installed CLI binary: synth -> train -> infer -> eval
// -> gradcheck, checking exit codes and primary outputs. The binary path comes
// from the build system; fixtures are fabricated with the core library.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "deblur/image_io.hpp"
#include "deblur/tensor.hpp"

#include "test_util.hpp"

#include <cstdlib>
#include <filesystem>
#include <string>

namespace fs = std::filesystem;
using namespace deblur;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DEBLUR_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

} // namespace

TEST_CASE("cli end to end: synth, train, infer, eval, gradcheck, exit codes") {
    testutil::TempDir frames("cli_frames");
    for (int i = 0; i < 24; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "f_%04d.png", i);
        write_image(testutil::square_frame(64, 16, 20, 4 + i),
                    (frames / name).string());
    }
    {
        std::ofstream meta(frames / "meta.txt");
        meta << "fps 240\n";
    }

    testutil::TempDir root("cli_root");
    const std::string dataset = (root / "dataset").string();
    const std::string train_out = (root / "train").string();

    CHECK(run_cli("synth --input " + frames.str() + " --output " + dataset +
                  " --windows 7,9 --stride 4 --gamma 2.2 --seed 3") == 0);
    CHECK(fs::exists(fs::path(dataset) / "manifest.txt"));

    CHECK(run_cli("train --dataset " + dataset + " --out " + train_out +
                  " --preset desk --set 'total_iterations 3' --set 'batch_size 2'"
                  " --set 'seed 4'") == 0);
    const std::string ckpt = train_out + "/final.ckpt";
    CHECK(fs::exists(ckpt));

    // Rerunning from the echoed config reproduces the checkpoint bytes.
    const std::string train_out2 = (root / "train2").string();
    CHECK(run_cli("train --config " + train_out + "/run_config.txt --out " +
                  train_out2) == 0);
    CHECK(testutil::read_file(ckpt) ==
          testutil::read_file(train_out2 + "/final.ckpt"));

    const std::string infer_out = (root / "infer").string();
    CHECK(run_cli("infer --checkpoint " + ckpt + " --input " + dataset +
                  "/blur/000000.png --out " + infer_out) == 0);
    CHECK(fs::exists(fs::path(infer_out) / "000000_deblur.png"));

    const std::string report = (root / "report.txt").string();
    CHECK(run_cli("eval --checkpoint " + ckpt + " --dataset " + dataset + " --out " +
                  report) == 0);
    CHECK(fs::exists(report));
    CHECK(fs::exists(report + ".csv"));

    CHECK(run_cli("gradcheck --scope resblock --seed 1") == 0);

    // Usage errors exit 1.
    CHECK(run_cli("no-such-subcommand") == 1);
    CHECK(run_cli("train --preset bogus --dataset " + dataset + " --out " +
                  (root / "x").string()) == 1);
    CHECK(run_cli("synth --input /missing --output " + (root / "y").string()) == 1);
}
