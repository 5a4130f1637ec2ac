#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "svebm/data_synth.hpp"
#include "svebm/dataset_io.hpp"
#include "svebm/density.hpp"
#include "svebm/eval_metrics.hpp"
#include "test_util.hpp"

using namespace svebm;
using namespace svebm::test;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status = 0;
  std::string err;
};

Run cli(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + SVEBM_CLI_PATH + "\" " + args + " 2> \"" + err.string() + "\"";
  const int rc = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  std::ifstream is(err);
  std::stringstream ss;
  ss << is.rdbuf();
  r.err = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::vector<double>> read_grid(const fs::path& p) {
  std::ifstream is(p);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

// Small eight-Gaussians run shared by the tests below.
struct Fixture {
  fs::path dir;
  fs::path config;

  Fixture() {
    dir = scratch_dir("cli");
    write_points(dir / "train.csv", eight_gaussians(200, 5));
    config = dir / "run.cfg";
    std::ofstream os(config);
    os << "[data]\nmodality = points\ntrain = train.csv\n"
          "[model]\nlatent_dim = 2\nnum_classes = 4\nprior_hidden = 16\nencoder_hidden = 16\ndecoder_hidden = 16\n"
          "[train]\nmode = ib-ebm\niterations = 20\nbatch_size = 20\nnum_chains = 50\nlangevin_steps = 5\n"
          "checkpoint_every = 10\nseed = 4\n"
          "[eval]\nlog_z_samples = 2000\nnll_samples = 20\nnll_examples = 10\nsample_count = 200\ngrid_size = 20\n";
  }

  Run train(const std::string& out, const std::string& extra = "") const {
    return cli("train --config \"" + config.string() + "\" --out \"" + (dir / out).string() + "\" " + extra, dir);
  }
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    const Run r = x.train("a");
    REQUIRE_MESSAGE(r.status == 0, r.err);
    return x;
  }();
  return f;
}

}  // namespace

TEST_CASE("cli train writes its outputs reproducibly") {
  const Fixture& f = fixture();
  for (const char* name : {"config.txt", "train_log.tsv", "final.ckpt", "eval_report.csv"})
    CHECK(fs::exists(f.dir / "a" / name));
  CHECK(fs::exists(f.dir / "a" / "checkpoints"));
  REQUIRE(f.train("b").status == 0);
  CHECK(slurp(f.dir / "a" / "train_log.tsv") == slurp(f.dir / "b" / "train_log.tsv"));
  // the config echo records the output directory, everything else matches
  auto without_out = [](std::string text) {
    const auto at = text.find("output.dir=");
    return text.erase(at, text.find('\n', at) - at);
  };
  CHECK(without_out(slurp(f.dir / "a" / "final.ckpt")) == without_out(slurp(f.dir / "b" / "final.ckpt")));
  REQUIRE(f.train("c", "--seed 5").status == 0);
  CHECK(slurp(f.dir / "a" / "train_log.tsv") != slurp(f.dir / "c" / "train_log.tsv"));
}

TEST_CASE("cli train reports a missing field") {
  const fs::path dir = scratch_dir("cli_missing");
  std::ofstream(dir / "bad.cfg") << "[data]\nmodality = points\n";
  const Run r = cli("train --config \"" + (dir / "bad.cfg").string() + "\" --out \"" + (dir / "o").string() + "\"", dir);
  CHECK(r.status != 0);
  CHECK(r.err.rfind("error[E_CONFIG]:", 0) == 0);
  CHECK(r.err.find("data.train") != std::string::npos);
}

TEST_CASE("cli eval") {
  const Fixture& f = fixture();
  const std::string ck = "--checkpoint \"" + (f.dir / "a" / "final.ckpt").string() + "\"";
  REQUIRE(cli("eval " + ck + " --metrics homogeneity,nll --out \"" + (f.dir / "e1.csv").string() + "\"", f.dir).status == 0);
  REQUIRE(cli("eval " + ck + " --metrics homogeneity,nll --out \"" + (f.dir / "e2.csv").string() + "\"", f.dir).status == 0);
  CHECK(slurp(f.dir / "e1.csv") == slurp(f.dir / "e2.csv"));
  const auto rows = read_report(f.dir / "e1.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].metric == "homogeneity");
  CHECK(rows[0].value >= 0.0);
  CHECK(rows[0].value <= 1.0);
  CHECK(rows[0].n == 200);
  CHECK(std::isfinite(rows[1].value));

  const Run bad = cli("eval " + ck + " --metrics homogeneity,perplexity", f.dir);
  CHECK(bad.status != 0);
  CHECK(bad.err.find("perplexity") != std::string::npos);
  CHECK(bad.err.find("matched_accuracy") != std::string::npos);
}

TEST_CASE("cli sample") {
  const Fixture& f = fixture();
  const std::string ck = "sample --checkpoint \"" + (f.dir / "a" / "final.ckpt").string() + "\" ";
  REQUIRE(cli(ck + "--count 0 --out \"" + (f.dir / "s0.csv").string() + "\"", f.dir).status == 0);
  CHECK(slurp(f.dir / "s0.csv").empty());
  REQUIRE(cli(ck + "--count 30 --seed 2 --out \"" + (f.dir / "s1.csv").string() + "\"", f.dir).status == 0);
  REQUIRE(cli(ck + "--count 30 --seed 2 --out \"" + (f.dir / "s2.csv").string() + "\"", f.dir).status == 0);
  CHECK(slurp(f.dir / "s1.csv") == slurp(f.dir / "s2.csv"));
  CHECK(read_points(f.dir / "s1.csv").size() == 30);
  REQUIRE(cli(ck + "--count 30 --label 1 --out \"" + (f.dir / "s3.csv").string() + "\"", f.dir).status == 0);
  CHECK(read_points(f.dir / "s3.csv").size() == 30);
  const Run bad = cli(ck + "--count 3 --label 4", f.dir);
  CHECK(bad.status != 0);
  CHECK(bad.err.rfind("error[E_CONFIG]:", 0) == 0);
}

TEST_CASE("cli classify") {
  const Fixture& f = fixture();
  REQUIRE(cli("classify --checkpoint \"" + (f.dir / "a" / "final.ckpt").string() + "\" --out \"" +
                  (f.dir / "cls.tsv").string() + "\"",
              f.dir)
              .status == 0);
  std::ifstream is(f.dir / "cls.tsv");
  std::string line;
  std::getline(is, line);
  CHECK(line == "index\tp0\tp1\tp2\tp3");
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    std::stringstream ls(line);
    int pred = -1;
    ls >> pred;
    double sum = 0.0, p = 0.0, best = -1.0;
    int arg = -1;
    for (int k = 0; k < 4; ++k) {
      ls >> p;
      sum += p;
      if (p > best) best = p, arg = k;
    }
    CHECK(pred == arg);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    ++rows;
  }
  CHECK(rows == 200);
}

TEST_CASE("cli plot-density") {
  const Fixture& f = fixture();
  const fs::path out = f.dir / "plots";
  REQUIRE(cli("plot-density --checkpoint \"" + (f.dir / "a" / "final.ckpt").string() + "\" --out \"" + out.string() + "\"",
              f.dir)
              .status == 0);
  for (const char* panel : {"true_x", "posterior_x", "prior_x", "posterior_z", "prior_z"}) {
    const auto grid = read_grid(out / (std::string(panel) + ".csv"));
    REQUIRE(grid.size() == 20);
    for (const auto& row : grid) {
      CHECK(row.size() == 20);
      for (double v : row) CHECK(v >= 0.0);
    }
  }
  CHECK(fs::exists(out / "index.csv"));

  const fs::path pts_out = f.dir / "plots_points";
  REQUIRE(cli("plot-density --points \"" + (f.dir / "train.csv").string() + "\" --out \"" + pts_out.string() + "\"",
              f.dir)
              .status == 0);
  const PointDataset ds = read_points(f.dir / "train.csv");
  const GridSpec g = bounding_grid({&ds.points}, 100, 0.5);
  const Matrix expect = kde_grid(ds.points, scott_bandwidth(ds.points), g);
  const auto grid = read_grid(pts_out / "true_x.csv");
  REQUIRE(grid.size() == expect.rows());
  double worst = 0.0;
  for (std::size_t i = 0; i < expect.rows(); ++i)
    for (std::size_t j = 0; j < expect.cols(); ++j) worst = std::max(worst, std::abs(grid[i][j] - expect(i, j)));
  CHECK(worst == 0.0);

  const Run both = cli("plot-density --points \"" + (f.dir / "train.csv").string() + "\" --checkpoint \"" +
                           (f.dir / "a" / "final.ckpt").string() + "\" --out \"" + out.string() + "\"",
                       f.dir);
  CHECK(both.status != 0);
}

TEST_CASE("cli plot-density rejects non-point checkpoints") {
  const fs::path dir = scratch_dir("cli_seq");
  const TextCorpus c = toy_text_corpus(GrammarSpec::default_spec(), 40, 1);
  write_corpus(dir / "train.txt", c.sequences, c.vocab);
  std::ofstream(dir / "run.cfg") << "[data]\nmodality = sequence\ntrain = train.txt\n"
                                    "[model]\nlatent_dim = 2\nnum_classes = 4\nprior_hidden = 8\nembed_dim = 4\n"
                                    "rnn_hidden = 8\n[train]\niterations = 2\nbatch_size = 10\nnum_chains = 20\n"
                                    "langevin_steps = 2\n[eval]\nmetrics = homogeneity\n";
  REQUIRE(cli("train --config \"" + (dir / "run.cfg").string() + "\" --out \"" + (dir / "o").string() + "\"", dir)
              .status == 0);
  const Run r = cli("plot-density --checkpoint \"" + (dir / "o" / "final.ckpt").string() + "\" --out \"" +
                        (dir / "plots").string() + "\"",
                    dir);
  CHECK(r.status != 0);
  CHECK(r.err.find("2D points") != std::string::npos);
  REQUIRE(cli("sample --checkpoint \"" + (dir / "o" / "final.ckpt").string() + "\" --count 5 --out \"" +
                  (dir / "s.txt").string() + "\"",
              dir)
              .status == 0);
  std::ifstream is(dir / "s.txt");
  std::size_t lines = 0;
  for (std::string line; std::getline(is, line);) ++lines;
  CHECK(lines == 5);
}

TEST_CASE("cli make-data and a document run") {
  const fs::path dir = scratch_dir("cli_docs");
  REQUIRE(cli("make-data documents --count 60 --seed 2 --out \"" + (dir / "c.docs").string() + "\" --vocab \"" +
                  (dir / "c.vocab").string() + "\"",
              dir)
              .status == 0);
  const Vocabulary vocab = Vocabulary::load(dir / "c.vocab");
  CHECK(read_documents(dir / "c.docs") == toy_text_corpus(GrammarSpec::default_spec(), 60, 2).documents);
  REQUIRE(cli("make-data eight-gaussians --count 30 --out \"" + (dir / "p.csv").string() + "\"", dir).status == 0);
  CHECK(read_points(dir / "p.csv").size() == 30);
  CHECK(cli("make-data spirals --out \"" + (dir / "x").string() + "\"", dir).status != 0);

  std::ofstream(dir / "run.cfg") << "[data]\nmodality = document\ntrain = c.docs\nvocab = c.vocab\n"
                                    "[model]\nlatent_dim = 2\nnum_classes = 4\nprior_hidden = 8\nencoder_hidden = 8\n"
                                    "decoder_hidden = 8\n[train]\niterations = 3\nbatch_size = 10\nnum_chains = 20\n"
                                    "langevin_steps = 2\n[eval]\nmetrics = homogeneity\n";
  REQUIRE(cli("train --config \"" + (dir / "run.cfg").string() + "\" --out \"" + (dir / "o").string() + "\"", dir)
              .status == 0);
  const std::string echo = slurp(dir / "o" / "config.txt");
  CHECK(echo.find("model.data_dim=" + std::to_string(vocab.size()) + "\n") != std::string::npos);

  // a points checkpoint cannot read a document file
  const Fixture& f = fixture();
  const Run bad = cli("eval --checkpoint \"" + (f.dir / "a" / "final.ckpt").string() + "\" \"" +
                          (dir / "c.docs").string() + "\"",
                      dir);
  CHECK(bad.status != 0);
  CHECK(bad.err.rfind("error[E_DATA]:", 0) == 0);
}
