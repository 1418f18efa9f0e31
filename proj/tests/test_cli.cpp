#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tralfm/cli.hpp"

using namespace tralfm;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "tralfm");
  std::ostringstream out, err;
  Run r;
  r.code = cli::dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("tralfm_cli_") + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }

  std::string small_corpus(const std::string& name = "c.txt") {
    const auto r = run({"simulate", "--out", path(name), "--k", "3", "--sequences", "40", "--objects", "4",
                        "--trajectories", "60", "--units", "6", "--seed", "5"});
    EXPECT_EQ(r.code, 0) << r.err;
    return path(name);
  }

  std::string route_corpus(const std::string& name = "routes.txt") {
    const auto r = run({"simulate", "--kind", "routes", "--out", path(name), "--locations", "10", "--trajectories",
                        "80", "--seed", "3"});
    EXPECT_EQ(r.code, 0) << r.err;
    return path(name);
  }

  fs::path dir;
};

std::string setting(const std::string& manifest, const std::string& key) {
  std::istringstream in(manifest);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + " = ", 0) == 0) return line.substr(key.size() + 3);
  return "<missing>";
}

}  // namespace

TEST(Dispatch, NoArgumentsPrintsUsage) {
  std::ostringstream out, err;
  EXPECT_EQ(cli::dispatch({"tralfm"}, out, err), 1);
  EXPECT_NE(err.str().find("usage"), std::string::npos);
}

TEST(Dispatch, UnknownSubcommandAndFlag) {
  auto r = run({"frobnicate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("usage"), std::string::npos);
  EXPECT_EQ(run({"train", "--no-such-flag", "1"}).code, 1);
  EXPECT_EQ(run({"train", "--help"}).code, 0);
}

TEST(Dispatch, MissingRequiredSettingIsUsageError) {
  EXPECT_EQ(run({"train"}).code, 1);
  EXPECT_EQ(run({"inspect"}).code, 1);
}

TEST(Config, PrecedenceDefaultsFileFlags) {
  const std::vector<SettingSpec> specs{{"k", "40", ""}, {"beta", "0.01", ""}, {"seed", "", ""}};
  auto rc = RunConfig::resolve("train", specs, {}, {});
  EXPECT_EQ(rc.str("k"), "40");
  EXPECT_EQ(rc.origin("k"), "default");
  rc = RunConfig::resolve("train", specs, {{"k", "7"}, {"beta", "0.5"}}, {});
  EXPECT_EQ(rc.str("k"), "7");
  EXPECT_EQ(rc.origin("k"), "file");
  rc = RunConfig::resolve("train", specs, {{"k", "7"}, {"beta", "0.5"}}, {{"k", "9"}});
  EXPECT_EQ(rc.str("k"), "9");
  EXPECT_EQ(rc.origin("k"), "flag");
  EXPECT_EQ(rc.str("beta"), "0.5");
  EXPECT_THROW(RunConfig::resolve("train", specs, {{"kk", "1"}}, {}), UsageError);
  EXPECT_FALSE(rc.has("seed"));
  const auto s = rc.seed();
  EXPECT_EQ(rc.origin("seed"), "generated");
  EXPECT_EQ(rc.seed(), s);
}

TEST(Config, ParsesFlatText) {
  std::istringstream in("# comment\n k = 5 \n\nbeta=0.2\n");
  const auto m = parse_config_text(in);
  EXPECT_EQ(m.at("k"), "5");
  EXPECT_EQ(m.at("beta"), "0.2");
  std::istringstream bad("k 5\n");
  EXPECT_THROW(parse_config_text(bad), UsageError);
}

TEST_F(CliTest, TrainDefaultsAreRecorded) {
  const auto corpus = small_corpus();
  const auto r = run({"train", "--corpus", corpus, "--out", path("m.txt"), "--seed", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto manifest = slurp(path("m.txt.manifest"));
  EXPECT_EQ(setting(manifest, "k"), "40");
  EXPECT_EQ(setting(manifest, "iterations"), "100");
  EXPECT_EQ(setting(manifest, "seed"), "1");
  EXPECT_NE(manifest.find("# checksum corpus: fnv1a64:"), std::string::npos);
  const auto model = load_model(path("m.txt"));
  EXPECT_EQ(model.config.num_factors, 40);
  EXPECT_EQ(model.config.order, 2);
  EXPECT_EQ(model.scheme.bin_hours, 2);
  EXPECT_NE(r.out.find("iterations\t100"), std::string::npos);
}

TEST_F(CliTest, ConfigFileAndFlagPrecedence) {
  const auto corpus = small_corpus();
  {
    std::ofstream cfg(path("run.cfg"));
    cfg << "k = 7\niterations = 3\nseed = 11\n";
  }
  ASSERT_EQ(run({"train", "--config", path("run.cfg"), "--corpus", corpus, "--out", path("a.txt")}).code, 0);
  EXPECT_EQ(load_model(path("a.txt")).config.num_factors, 7);
  ASSERT_EQ(run({"train", "--config", path("run.cfg"), "--corpus", corpus, "--out", path("b.txt"), "--k", "4"}).code, 0);
  EXPECT_EQ(load_model(path("b.txt")).config.num_factors, 4);
  EXPECT_EQ(setting(slurp(path("b.txt.manifest")), "iterations"), "3");
  {
    std::ofstream cfg(path("bad.cfg"));
    cfg << "kay = 7\n";
  }
  EXPECT_EQ(run({"train", "--config", path("bad.cfg"), "--corpus", corpus, "--out", path("c.txt")}).code, 1);
}

TEST_F(CliTest, GeneratedSeedIsRecordedAndReplays) {
  const auto corpus = small_corpus();
  ASSERT_EQ(run({"train", "--corpus", corpus, "--out", path("a.txt"), "--k", "3", "--iterations", "5"}).code, 0);
  const auto manifest = slurp(path("a.txt.manifest"));
  EXPECT_NE(setting(manifest, "seed"), "");
  EXPECT_NE(manifest.find("# seed origin: generated"), std::string::npos);
  ASSERT_EQ(run({"train", "--config", path("a.txt.manifest"), "--out", path("b.txt")}).code, 0);
  EXPECT_EQ(slurp(path("a.txt")), slurp(path("b.txt")));
}

TEST_F(CliTest, IngestRecords) {
  {
    std::ofstream f(path("records.csv"));
    f << "object,location,timestamp\n";
    f << "car1,A,1704270600\ncar1,B,1704270900\ncar1,C,1704271200\ncar1,D,1704271500\n";
    f << "car2,A,1704280000\ncar2,B,1704280300\ncar2,C,1704280600\n";
  }
  const auto r = run({"ingest", "--input", path("records.csv"), "--out", path("c.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("trajectories\t2"), std::string::npos);
  EXPECT_NE(r.out.find("units\t3"), std::string::npos);
  const auto c = load_corpus(path("c.txt"));
  EXPECT_EQ(c.num_sequences(), 2u);
  EXPECT_TRUE(fs::exists(path("c.txt.manifest")));

  {
    std::ofstream f(path("broken.csv"));
    f << "car1,A,1704270600\ncar1,B,not-a-time\n";
  }
  const auto bad = run({"ingest", "--input", path("broken.csv"), "--out", path("d.txt")});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find(":2:"), std::string::npos);
  EXPECT_EQ(run({"ingest", "--input", path("records.csv"), "--out", path("e.txt"), "--bin-hours", "5"}).code, 1);
}

TEST_F(CliTest, CorruptCorpusIsDataError) {
  {
    std::ofstream f(path("junk.txt"));
    f << "not a corpus\n";
  }
  EXPECT_EQ(run({"train", "--corpus", path("junk.txt"), "--out", path("m.txt")}).code, 2);
}

TEST_F(CliTest, PredictFollowsRoute) {
  const auto corpus_path = route_corpus();
  ASSERT_EQ(run({"train", "--corpus", corpus_path, "--out", path("m.bin"), "--k", "4", "--iterations", "20",
                 "--format", "binary", "--seed", "2"})
                .code,
            0);
  const auto corpus = load_corpus(corpus_path);
  const auto& t = corpus.trajectories[0];
  const auto& key = corpus.vocab.sequences.decode(t.units[1].sequence);
  const auto& first = corpus.vocab.sequences.decode(t.units[0].sequence);
  std::string locs = corpus.vocab.locations.decode(first[0]);
  for (Id l : key) locs += "," + corpus.vocab.locations.decode(l);
  locs = locs.substr(0, locs.rfind(','));
  const auto r = run({"predict", "--model", path("m.bin"), "--locations", locs, "--object",
                      corpus.vocab.objects.decode(t.object()), "--timestamps",
                      "2024-01-03T08:00,2024-01-03T08:05,2024-01-03T08:10", "--seed", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("rank\tlocation\tscore\n1\t" + corpus.vocab.locations.decode(key.back()) + "\t", 0), 0u)
      << r.out;

  const auto unknown = run({"predict", "--model", path("m.bin"), "--locations", "nowhere,elsewhere", "--object", "x"});
  EXPECT_EQ(unknown.code, 0);
  EXPECT_NE(unknown.out.find("# fallback"), std::string::npos);
  EXPECT_EQ(run({"predict", "--model", path("m.bin"), "--locations", "loc1", "--object", "x"}).code, 2);
  EXPECT_EQ(run({"predict", "--model", path("m.bin"), "--locations", "loc1,loc2", "--object", "x", "--bin", "99"}).code,
            1);
}

TEST_F(CliTest, InspectFactors) {
  const auto corpus = small_corpus();
  ASSERT_EQ(run({"simulate", "--out", path("c2.txt"), "--truth", path("truth.txt"), "--k", "3", "--sequences", "40",
                 "--trajectories", "10", "--seed", "5"})
                .code,
            0);
  auto r = run({"inspect", "--model", path("truth.txt"), "--factor", "2", "--q", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("latent factor 2\n", 0), 0u);
  EXPECT_NE(r.out.find("@week"), std::string::npos);
  r = run({"inspect", "--model", path("truth.txt")});
  EXPECT_NE(r.out.find("latent factor 3"), std::string::npos);
  EXPECT_EQ(run({"inspect", "--model", path("truth.txt"), "--factor", "0"}).code, 1);
  EXPECT_EQ(run({"inspect", "--model", path("truth.txt"), "--factor", "4"}).code, 1);
}

TEST_F(CliTest, EvaluateManifestReplaysBitForBit) {
  const auto corpus = small_corpus();
  ASSERT_EQ(run({"evaluate", "--corpus", corpus, "--out", path("r1.tsv"), "--k", "3", "--folds", "3", "--iterations",
                 "10", "--inspect", path("inspect.txt")})
                .code,
            0);
  ASSERT_EQ(run({"evaluate", "--config", path("r1.tsv.manifest"), "--out", path("r2.tsv"), "--inspect",
                 path("inspect2.txt")})
                .code,
            0);
  EXPECT_EQ(slurp(path("r1.tsv")), slurp(path("r2.tsv")));
  EXPECT_EQ(slurp(path("inspect.txt")), slurp(path("inspect2.txt")));
  EXPECT_EQ(slurp(path("r1.tsv")).rfind("fold\tn_train\tn_test\tap@1\tap@5", 0), 0u);
}

TEST_F(CliTest, SingleValueSweepMatchesEvaluate) {
  const auto corpus = small_corpus();
  const std::vector<std::string> common{"--corpus", corpus, "--folds", "3", "--iterations", "10", "--seed", "8"};
  auto ev = common;
  ev.insert(ev.begin(), {"evaluate", "--k", "4", "--out", path("eval.tsv")});
  ASSERT_EQ(run(ev).code, 0);
  auto sw = common;
  sw.insert(sw.begin(), {"sweep", "--param", "k", "--values", "4", "--out", path("sweep.tsv")});
  const auto r = run(sw);
  ASSERT_EQ(r.code, 0) << r.err;

  std::istringstream eval_in(slurp(path("eval.tsv"))), sweep_in(slurp(path("sweep.tsv")));
  std::string line, mean_row, sweep_row;
  while (std::getline(eval_in, line))
    if (line.rfind("mean\t", 0) == 0) mean_row = line;
  std::getline(sweep_in, line);
  EXPECT_EQ(line, "k\tap@1\tap@5\tpmi\tseconds");
  std::getline(sweep_in, sweep_row);
  auto fields = [](const std::string& s) {
    std::vector<std::string> f;
    std::istringstream in(s);
    std::string x;
    while (std::getline(in, x, '\t')) f.push_back(x);
    return f;
  };
  const auto m = fields(mean_row), s = fields(sweep_row);
  ASSERT_EQ(m.size(), 9u);
  ASSERT_EQ(s.size(), 5u);
  EXPECT_EQ(s[0], "4");
  EXPECT_EQ(s[1], m[3]);
  EXPECT_EQ(s[2], m[4]);
  EXPECT_EQ(s[3], m[7]);
}

TEST_F(CliTest, SweepRejectsInvalidValuesBeforeRunning) {
  auto r = run({"sweep", "--param", "bin-hours", "--values", "2,5", "--input", path("missing.csv")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("does not divide 24"), std::string::npos);
  EXPECT_EQ(run({"sweep", "--param", "order", "--values", "1,2", "--corpus", path("c.txt")}).code, 1);
  EXPECT_EQ(run({"sweep", "--param", "alpha", "--values", "1", "--corpus", path("c.txt")}).code, 1);
}

TEST_F(CliTest, PipelineIsByteIdenticalAcrossProcesses) {
  const std::string exe = TRALFM_CLI_PATH;
  for (const std::string run_dir : {"one", "two"}) {
    const auto d = dir / run_dir;
    fs::create_directories(d);
    const std::string q = "\"" + exe + "\"";
    const std::string c = (d / "c.txt").string(), m = (d / "m.bin").string(), r = (d / "r.tsv").string();
    ASSERT_EQ(std::system((q + " simulate --out \"" + c +
                           "\" --k 3 --sequences 40 --objects 4 --trajectories 60 --units 6 --seed 21 > /dev/null")
                              .c_str()),
              0);
    ASSERT_EQ(std::system((q + " train --corpus \"" + c + "\" --out \"" + m +
                           "\" --k 3 --iterations 20 --format binary --seed 21 > /dev/null")
                              .c_str()),
              0);
    ASSERT_EQ(std::system((q + " evaluate --corpus \"" + c + "\" --out \"" + r +
                           "\" --k 3 --folds 3 --iterations 10 --seed 21 --jobs 2")
                              .c_str()),
              0);
  }
  for (const std::string f : {"c.txt", "m.bin", "r.tsv"}) {
    const auto a = slurp(dir / "one" / f), b = slurp(dir / "two" / f);
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, b) << f;
  }
}
