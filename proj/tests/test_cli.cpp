#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / ("mf_cli_" + std::to_string(::getpid()));

int run(const std::string& args) {
  const std::string cmd = std::string(MF_CLI_PATH) + " " + args + " > " + (kRoot / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int lines(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<int>(std::count(s.begin(), s.end(), '\n'));
}

std::string path(const std::string& name) { return (kRoot / name).string(); }

// One corpus and one quick model shared by the whole suite.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    ASSERT_EQ(run("gen-data --out " + path("data") + " --seed 3"), 0);
    ASSERT_EQ(run("train --data " + path("data") + " --out " + path("model") +
                  " --seed 1 --delta-t 10 --max-epochs 1 --batch-size 2000 --quiet"),
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(kRoot); }
};

}  // namespace

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("train --data " + path("data")), 2);
  EXPECT_EQ(run("train --data " + path("data") + " --out " + path("m0") + " --delta-t 1"), 2);
}

TEST_F(Cli, GenDataRefusesNonEmptyDir) {
  EXPECT_EQ(run("gen-data --out " + path("data") + " --seed 3"), 2);
}

TEST_F(Cli, GenDataIsDeterministic) {
  ASSERT_EQ(run("gen-data --out " + path("data2") + " --seed 3"), 0);
  for (const char* f : {"train/train_004.jsonl", "test/test_000.jsonl", "reaches/index.json", "labeled/legible_2_00.jsonl",
                        "targets.json", "manifest.json"})
    EXPECT_EQ(slurp(kRoot / "data" / f), slurp(kRoot / "data2" / f)) << f;
  EXPECT_EQ(lines(kRoot / "data" / "train" / "train_000.jsonl"), 3000);
  fs::remove_all(kRoot / "data2");
}

TEST_F(Cli, TrainOutputs) {
  for (const char* f : {"manifest.json", "root.json", "torso.json", "right.json", "left.json"})
    EXPECT_TRUE(fs::exists(kRoot / "model" / f)) << f;
  // header plus the evaluations at steps 0 and 15
  EXPECT_EQ(slurp(kRoot / "model" / "loss_right.csv").substr(0, 16), "step,epoch,loss\n");
  EXPECT_EQ(lines(kRoot / "model" / "loss_right.csv"), 3);
}

TEST_F(Cli, TrainingIsDeterministicAcrossThreadCounts) {
  ASSERT_EQ(run("train --data " + path("data") + " --out " + path("model_t4") +
                " --seed 1 --delta-t 10 --max-epochs 1 --batch-size 2000 --quiet --threads 4"),
            0);
  for (const char* f : {"root.json", "right.json", "left.json"})
    EXPECT_EQ(slurp(kRoot / "model" / f), slurp(kRoot / "model_t4" / f)) << f;
  fs::remove_all(kRoot / "model_t4");
}

TEST_F(Cli, MissingInputsAreIoErrors) {
  EXPECT_EQ(run("train --data " + path("nowhere") + " --out " + path("m1")), 3);
  EXPECT_EQ(run("eval-mpe --model " + path("nowhere") + " --data " + path("data") + " --out " + path("e1")), 3);
  std::ofstream(kRoot / "broken.jsonl") << "{\"t\": 0, \"joints\": [[1,2]]}\n";
  EXPECT_EQ(run("sample --model " + path("model") + " --past " + path("broken.jsonl") + " --out " + path("s.jsonl")), 3);
}

TEST_F(Cli, ResumeChecksVersionAndWindow) {
  EXPECT_EQ(run("train --data " + path("data") + " --out " + path("m2") + " --resume " + path("model") +
                " --delta-t 12 --max-epochs 1 --quiet"),
            2);
  fs::copy(kRoot / "model", kRoot / "old_model");
  auto manifest = nlohmann::json::parse(slurp(kRoot / "old_model" / "manifest.json"));
  manifest["version"] = 99;
  std::ofstream(kRoot / "old_model" / "manifest.json") << manifest.dump();
  EXPECT_EQ(run("train --data " + path("data") + " --out " + path("m3") + " --resume " + path("old_model") +
                " --delta-t 10 --max-epochs 1 --quiet"),
            3);
  fs::remove_all(kRoot / "old_model");
}

TEST_F(Cli, EvalMpe) {
  ASSERT_EQ(run("eval-mpe --model " + path("model") + " --data " + path("data") + " --out " + path("mpe") +
                " --baseline linear,constant"),
            2);  // linear needs 21-frame windows; the model uses 10
  ASSERT_EQ(run("eval-mpe --model " + path("model") + " --data " + path("data") + " --out " + path("mpe") +
                " --baseline constant --force"),
            0);
  for (const char* limb : {"root", "torso", "right", "left"}) {
    EXPECT_EQ(lines(kRoot / "mpe" / (std::string("mpe_cvae_") + limb + ".csv")), 11);
    EXPECT_EQ(lines(kRoot / "mpe" / (std::string("mpe_constant_") + limb + ".csv")), 11);
  }
  EXPECT_TRUE(fs::exists(kRoot / "mpe" / "mpe.gp"));
}

TEST_F(Cli, Sample) {
  const std::string past = path("data") + "/test/test_000.jsonl";
  ASSERT_EQ(run("sample --model " + path("model") + " --past " + past + " --n 3 --seed 4 --out " + path("s1.jsonl")), 0);
  EXPECT_EQ(lines(kRoot / "s1.jsonl"), 3);
  EXPECT_EQ(run("sample --model " + path("model") + " --past " + past + " --n 3 --seed 4 --out " + path("s1.jsonl")), 2);
  ASSERT_EQ(run("sample --model " + path("model") + " --past " + past + " --n 3 --seed 4 --out " + path("s2.jsonl")), 0);
  EXPECT_EQ(slurp(kRoot / "s1.jsonl"), slurp(kRoot / "s2.jsonl"));

  ASSERT_EQ(run("sample --model " + path("model") + " --past " + past + " --n 2 --zero-noise --out " + path("z.jsonl")), 0);
  std::ifstream in(kRoot / "z.jsonl");
  std::string a, b;
  std::getline(in, a);
  std::getline(in, b);
  const auto ja = nlohmann::json::parse(a), jb = nlohmann::json::parse(b);
  EXPECT_EQ(ja["frames"], jb["frames"]);
  EXPECT_EQ(ja["frames"].size(), 10u);
  EXPECT_EQ(ja["frames"][0]["t"], 3000);
}

TEST_F(Cli, Classify) {
  ASSERT_EQ(run("classify --model " + path("model") + " --reaches " + path("data") + "/reaches --out " + path("cls")), 0);
  // 40 reaches x 5 fractions x 3 methods plus the header
  EXPECT_EQ(lines(kRoot / "cls" / "classification.csv"), 601);
  EXPECT_EQ(lines(kRoot / "cls" / "table1.csv"), 4);
  ASSERT_EQ(run("classify --reaches " + path("data") + "/reaches --method linear,current --fractions 0.5,1 --out " +
                path("cls2")),
            0);
  EXPECT_EQ(slurp(kRoot / "cls2" / "table1.csv").substr(0, 17), "method,50%,100%\nl");
  EXPECT_EQ(run("classify --reaches " + path("data") + "/reaches --method cvae --out " + path("cls3")), 2);
  EXPECT_EQ(run("classify --reaches " + path("data") + "/reaches --method linear --fractions 1.5 --out " + path("cls3")), 2);
}

TEST_F(Cli, Latent) {
  ASSERT_EQ(run("latent --model " + path("model") + " --data " + path("data") + " --samples 300 --out " + path("lat")), 0);
  // 300 random windows plus the labeled windows (20 reaches, one per reach frame)
  EXPECT_GT(lines(kRoot / "lat" / "embedding.csv"), 301);
  EXPECT_EQ(slurp(kRoot / "lat" / "embedding.csv").substr(0, 14), "pc1,pc2,label\n");
  EXPECT_TRUE(fs::exists(kRoot / "lat" / "separation.csv"));
  EXPECT_TRUE(fs::exists(kRoot / "lat" / "table2.csv"));
  EXPECT_EQ(run("latent --model " + path("model") + " --data " + path("data") + " --layer middle --out " + path("lat2")), 2);
}
