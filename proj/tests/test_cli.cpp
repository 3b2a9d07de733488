#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dvton/data.hpp"
#include "dvton/imaging.hpp"
#include "support.hpp"

using namespace dvton;
namespace fs = std::filesystem;

namespace {

int cli(const std::string& args) {
  const std::string cmd = std::string(DVTON_CLI) + " -q " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kMicroConfig =
    "image_size=16\nbatch_size=2\niterations=3\nlearning_rate=0.001\n"
    "depth=1\nwidth=16\nheads=2\ntime_freq_dim=32\ncontrol_depth=1\nsampler_steps=3\n";

}  // namespace

TEST_CASE("gen-data is byte-identical across runs") {
  const fs::path dir = test::scratch_dir("cli_gen");
  REQUIRE(cli("gen-data --n 3 --seed 4 --out " + (dir / "a").string()) == 0);
  REQUIRE(cli("gen-data --n 3 --seed 4 --out " + (dir / "b").string()) == 0);
  for (const char* f : {"pairs.txt", "image/000002_00.png", "cloth/000001_00.png",
                        "agnostic-mask/000000_00_mask.png", "openpose-img/000002_00_rendered.png"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    CHECK_FALSE(slurp(dir / "a" / f).empty());
  }
}

TEST_CASE("exit codes") {
  const fs::path dir = test::scratch_dir("cli_exit");
  CHECK(cli("gen-data --n 0 --out " + dir.string()) == 2);
  CHECK(cli("gen-data --n 2 --mode sideways --out " + dir.string()) == 2);
  CHECK(cli("frobnicate") == 2);
  CHECK(cli("train --data " + (dir / "nowhere").string() + " --out " + (dir / "o").string()) == 3);
  std::ofstream(dir / "bad.txt") << "bogus_key=1\n";
  CHECK(cli("train --config " + (dir / "bad.txt").string() + " --data x --out y") == 3);
  std::ofstream(dir / "junk.dvt") << "not an archive";
  CHECK(cli("inspect --checkpoint " + (dir / "junk.dvt").string()) == 3);
}

TEST_CASE("train, sample, inspect and eval") {
  const fs::path dir = test::scratch_dir("cli_flow");
  const std::string data = (dir / "data").string();
  REQUIRE(cli("gen-data --n 4 --seed 8 --size 16 --out " + data) == 0);
  std::ofstream(dir / "micro.txt") << kMicroConfig;
  REQUIRE(cli("train --config " + (dir / "micro.txt").string() + " --data " + data + " --out " +
              (dir / "run").string()) == 0);
  const fs::path ckpt = dir / "run" / "checkpoint.dvt";
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(dir / "run" / "config.txt"));
  std::ifstream log(dir / "run" / "runlog.jsonl");
  int lines = 0;
  for (std::string line; std::getline(log, line); ++lines) CHECK(nlohmann::json::parse(line).contains("loss"));
  CHECK(lines == 3);
  CHECK(cli("inspect --checkpoint " + ckpt.string()) == 0);

  const fs::path src = dir / "data" / "image" / "000001_00.png";
  const fs::path mask = dir / "data" / "agnostic-mask" / "000001_00_mask.png";
  REQUIRE(cli("sample --checkpoint " + ckpt.string() + " --source " + src.string() + " --reference " +
              (dir / "data" / "cloth" / "000002_00.png").string() + " --mask " + mask.string() +
              " --out " + (dir / "out.png").string()) == 0);
  const Image out = read_image(dir / "out.png");
  const Image source = read_image(src);
  const Mask keep = read_mask(mask, MaskPolarity::kEditIsWhite);
  bool outside_equal = true;
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c)
      if (keep.at(r, c))
        for (int ch = 0; ch < 3; ++ch) outside_equal &= out.at(r, c, ch) == source.at(r, c, ch);
  CHECK(outside_equal);

  // Wrong extent and wrong polarity name.
  CHECK(cli("sample --checkpoint " + ckpt.string() + " --source " + src.string() + " --reference " +
            src.string() + " --mask " + mask.string() + " --mask-polarity sideways --out " +
            (dir / "x.png").string()) == 2);
  const Image big(20, 20);
  write_png(dir / "big.png", big);
  CHECK(cli("sample --checkpoint " + ckpt.string() + " --source " + (dir / "big.png").string() +
            " --reference " + src.string() + " --mask " + mask.string() + " --out " +
            (dir / "x.png").string()) == 3);

  // Generated = targets gives a perfect paired score.
  REQUIRE(cli("eval --checkpoint " + ckpt.string() + " --data " + data + " --generated " +
              (dir / "data" / "image").string() + " --report " + (dir / "r.json").string()) == 0);
  const auto report = nlohmann::json::parse(slurp(dir / "r.json"));
  CHECK(report["config_hash"].get<std::string>().size() == 16);
  CHECK(report["n"] == 4);
  CHECK(report["metrics"][0]["name"] == "ssim");
  CHECK(report["metrics"][0]["value"].get<double>() == doctest::Approx(1.0));

  REQUIRE(cli("eval --checkpoint " + ckpt.string() + " --data " + data + " --steps 2 --report " +
              (dir / "r2.json").string()) == 0);
  const double ssim = nlohmann::json::parse(slurp(dir / "r2.json"))["metrics"][0]["value"].get<double>();
  CHECK(ssim > 0.0);
  CHECK(ssim < 1.0);

  REQUIRE(cli("experiment --config " + (dir / "micro.txt").string() + " --data " + data +
              " --budget 1 --eval-pairs 2 --out " + (dir / "exp.json").string()) == 0);
  const auto exp = nlohmann::json::parse(slurp(dir / "exp.json"));
  CHECK(exp["reports"].size() == 3);
  CHECK(exp["budget"] == 1);
}
