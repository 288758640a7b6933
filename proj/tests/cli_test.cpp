#include "dclm/corpus.hpp"
#include "dclm/evaluator.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

using namespace dclm;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int code = -1;
  std::string out;
  std::string err;
};

struct Sandbox {
  fs::path dir;
  Sandbox() {
    static int counter = 0;
    dir = fs::path("/tmp") / ("dclm_cli_test_" + std::to_string(counter++));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }

  std::string path(const std::string& name) const {
    return (dir / name).string();
  }

  std::string slurp(const std::string& name) const {
    std::ifstream f(dir / name, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)),
                       std::istreambuf_iterator<char>());
  }

  void spit(const std::string& name, const std::string& content) const {
    const fs::path p = dir / name;
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << content;
  }

  CmdResult run(const std::string& args) const {
    const std::string cmd = std::string(DCLM_BIN) + " " + args + " > " +
                            path("_stdout") + " 2> " + path("_stderr");
    const int status = std::system(cmd.c_str());
    CmdResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp("_stdout");
    r.err = slurp("_stderr");
    return r;
  }

  // Generates train/valid corpora and the vocab most cases reuse.
  void seed_corpora() const {
    REQUIRE(run("gen-synthetic --mode self-echo --vocab-size 40 --dialogs 12 "
                "--turns 4 --seed 5 --out " +
                path("train.jsonl"))
                .code == 0);
    REQUIRE(run("gen-synthetic --mode self-echo --vocab-size 40 --dialogs 3 "
                "--turns 4 --seed 6 --first-index 12 --out " +
                path("valid.jsonl"))
                .code == 0);
    REQUIRE(run("build-vocab --corpus " + path("train.jsonl") + " --out " +
                path("vocab.txt"))
                .code == 0);
  }
};

bool same_bytes(const Sandbox& s, const std::string& a, const std::string& b) {
  return s.slurp(a) == s.slurp(b);
}

const char* kCsvHeader =
    "swda_filename,ptb_basename,conversation_no,transcript_index,act_tag,"
    "caller,utterance_index,subutterance_index,text,pos,trees,"
    "ptb_treenumbers\n";

}  // namespace

TEST_CASE("the full synthetic pipeline runs through compare") {
  Sandbox s;
  s.seed_corpora();

  CmdResult train = s.run(
      "train --variant single-turn --k 2 --corpus " + s.path("train.jsonl") +
      " --valid " + s.path("valid.jsonl") + " --vocab " + s.path("vocab.txt") +
      " --epochs 2 --keep-prob 1.0 --out " + s.path("st.dclm"));
  CHECK(train.code == 0);
  CHECK(train.err.find("best epoch") != std::string::npos);
  CHECK(fs::exists(s.path("st.dclm")));
  CHECK(fs::exists(s.path("st.dclm.trainlog")));

  CHECK(s.run("train --variant kn --order 3 --corpus " + s.path("train.jsonl") +
              " --vocab " + s.path("vocab.txt") + " --out " + s.path("kn.arpa"))
            .code == 0);
  CHECK(s.slurp("kn.arpa").find("\\data\\") != std::string::npos);

  CmdResult eval =
      s.run("eval --model " + s.path("st.dclm") + " --test " +
            s.path("valid.jsonl") + " --vocab " + s.path("vocab.txt") +
            " --json " + s.path("st.json"));
  CHECK(eval.code == 0);
  CHECK(eval.out.find("model single-turn-k2") != std::string::npos);
  CHECK(eval.out.find("perplexity") != std::string::npos);
  CHECK(eval.out.find("POS tag") != std::string::npos);
  const EvalReport report = report_from_json(s.slurp("st.json"));
  CHECK(report.variant == "single-turn");
  CHECK(report.overall.tokens > 0);

  CmdResult rel =
      s.run("eval --model " + s.path("st.dclm") + " --test " +
            s.path("valid.jsonl") + " --vocab " + s.path("vocab.txt") +
            " --baseline " + s.path("st.json"));
  CHECK(rel.code == 0);
  CHECK(rel.out.find("+0.00%") != std::string::npos);

  CmdResult cmp = s.run(
      "compare --models " + s.path("st.dclm") + "," + s.path("kn.arpa") +
      " --test " + s.path("valid.jsonl") + " --vocab " + s.path("vocab.txt") +
      " --baseline " + s.path("st.dclm") + " --json " + s.path("cmp.json"));
  CHECK(cmp.code == 0);
  CHECK(cmp.out.find("single-turn-k2") != std::string::npos);
  CHECK(cmp.out.find("kn3") != std::string::npos);
  CHECK(cmp.out.find("baseline") != std::string::npos);
  CHECK(cmp.out.find("vs single-turn-k2") != std::string::npos);

  const nlohmann::json j = nlohmann::json::parse(s.slurp("cmp.json"));
  CHECK(j.at("baseline") == "single-turn-k2");
  REQUIRE(j.at("rows").size() == 2);
  CHECK(j.at("rows")[0].at("perplexity").get<double>() <=
        j.at("rows")[1].at("perplexity").get<double>());
  REQUIRE(j.at("reports").size() == 2);
}

TEST_CASE("identical checkpoints compare as identical rows") {
  Sandbox s;
  s.seed_corpora();
  REQUIRE(s.run("train --variant ccdclm --k 2 --corpus " +
                s.path("train.jsonl") + " --valid " + s.path("valid.jsonl") +
                " --vocab " + s.path("vocab.txt") +
                " --epochs 1 --out " + s.path("a.dclm"))
              .code == 0);
  fs::copy_file(s.path("a.dclm"), s.path("b.dclm"));

  CmdResult cmp = s.run(
      "compare --models " + s.path("a.dclm") + "," + s.path("b.dclm") +
      " --test " + s.path("valid.jsonl") + " --vocab " + s.path("vocab.txt") +
      " --baseline " + s.path("a.dclm") + " --json " + s.path("cmp.json"));
  CHECK(cmp.code == 0);
  const nlohmann::json j = nlohmann::json::parse(s.slurp("cmp.json"));
  REQUIRE(j.at("rows").size() == 2);
  CHECK(j.at("rows")[0].at("perplexity") == j.at("rows")[1].at("perplexity"));
  CHECK(j.at("rows")[1].at("change_pct").get<double>() == 0.0);
}

TEST_CASE("training artifacts are reproducible from the seed") {
  Sandbox s;
  s.seed_corpora();
  const std::string base =
      "train --variant idclm --k 2 --corpus " + s.path("train.jsonl") +
      " --valid " + s.path("valid.jsonl") + " --vocab " + s.path("vocab.txt") +
      " --epochs 2 --seed 11 --out ";
  REQUIRE(s.run(base + s.path("r1.dclm")).code == 0);
  REQUIRE(s.run(base + s.path("r2.dclm")).code == 0);
  CHECK(same_bytes(s, "r1.dclm", "r2.dclm"));
  CHECK(same_bytes(s, "r1.dclm.trainlog", "r2.dclm.trainlog"));

  REQUIRE(s.run("train --variant idclm --k 2 --corpus " +
                s.path("train.jsonl") + " --valid " + s.path("valid.jsonl") +
                " --vocab " + s.path("vocab.txt") +
                " --epochs 2 --seed 12 --out " + s.path("r3.dclm"))
              .code == 0);
  CHECK_FALSE(same_bytes(s, "r1.dclm", "r3.dclm"));

  const std::string gen =
      "gen-synthetic --mode none --vocab-size 25 --dialogs 4 --turns 3 "
      "--seed 7 --out ";
  REQUIRE(s.run(gen + s.path("g1.jsonl")).code == 0);
  REQUIRE(s.run(gen + s.path("g2.jsonl")).code == 0);
  CHECK(same_bytes(s, "g1.jsonl", "g2.jsonl"));
}

TEST_CASE("config files fill in what flags leave unset") {
  Sandbox s;
  s.seed_corpora();
  s.spit("cfg.kv",
         "# hyperparameters\n"
         "vocab = " + s.path("vocab.txt") + "\n"
         "epochs = 3\n"
         "patience = 3\n"
         "keep-prob = 1.0\n");

  CmdResult from_file = s.run(
      "train --variant single-turn --k 1 --corpus " + s.path("train.jsonl") +
      " --valid " + s.path("valid.jsonl") + " --config " + s.path("cfg.kv") +
      " --out " + s.path("c1.dclm"));
  CHECK(from_file.code == 0);
  std::size_t lines = 0;
  std::istringstream log1(s.slurp("c1.dclm.trainlog"));
  for (std::string line; std::getline(log1, line);) ++lines;
  CHECK(lines == 4);

  CmdResult overridden = s.run(
      "train --variant single-turn --k 1 --corpus " + s.path("train.jsonl") +
      " --valid " + s.path("valid.jsonl") + " --config " + s.path("cfg.kv") +
      " --epochs 1 --out " + s.path("c2.dclm"));
  CHECK(overridden.code == 0);
  lines = 0;
  std::istringstream log2(s.slurp("c2.dclm.trainlog"));
  for (std::string line; std::getline(log2, line);) ++lines;
  CHECK(lines == 2);

  s.spit("bad.kv", "no_such_knob = 1\n");
  CmdResult bad = s.run(
      "train --variant single-turn --k 1 --corpus " + s.path("train.jsonl") +
      " --valid " + s.path("valid.jsonl") + " --vocab " + s.path("vocab.txt") +
      " --config " + s.path("bad.kv") + " --out " + s.path("c3.dclm"));
  CHECK(bad.code == 1);
  CHECK(bad.err.find("no_such_knob") != std::string::npos);

  s.spit("bad2.kv", "epochs\n");
  CHECK(s.run("train --variant single-turn --k 1 --corpus " +
              s.path("train.jsonl") + " --valid " + s.path("valid.jsonl") +
              " --vocab " + s.path("vocab.txt") + " --config " +
              s.path("bad2.kv") + " --out " + s.path("c4.dclm"))
            .code == 1);
}

TEST_CASE("conversion writes a loadable corpus and folder splits") {
  Sandbox s;
  std::string csv = kCsvHeader;
  csv +=
      "swda/sw00utt/sw_0001_2001.utt.csv,ptb,2001,0,sd,A,1,1,t,"
      "so/RB yeah/UH,t,n\n";
  csv +=
      "swda/sw00utt/sw_0001_2001.utt.csv,ptb,2001,1,b,B,2,1,t,"
      "right/UH,t,n\n";
  s.spit("raw/sw00utt/sw_0001_2001.utt.csv", csv);
  std::string csv2 = kCsvHeader;
  csv2 +=
      "swda/sw10utt/sw_0002_2002.utt.csv,ptb,2002,0,qy,B,1,1,t,"
      "really/RB ?/.,t,n\n";
  s.spit("raw/sw10utt/sw_0002_2002.utt.csv", csv2);

  CmdResult conv = s.run("convert --in " + s.path("raw") + " --out " +
                         s.path("all.jsonl") + " --split-dir " +
                         s.path("splits"));
  CHECK(conv.code == 0);
  const Corpus all = load_corpus(s.path("all.jsonl"));
  REQUIRE(all.size() == 2);
  CHECK(all[0].dialog_id == "sw002001");
  CHECK(all[0].turns[0].utterances[0].tokens ==
        std::vector<std::string>{"so", "yeah"});
  const Corpus train = load_corpus(s.path("splits/train.jsonl"));
  const Corpus test = load_corpus(s.path("splits/test.jsonl"));
  const Corpus valid = load_corpus(s.path("splits/valid.jsonl"));
  CHECK(train.size() == 1);
  CHECK(test.size() == 1);
  CHECK(valid.empty());

  CHECK(s.run("convert --in " + s.path("raw")).code == 1);
  CHECK(s.run("convert --in " + s.path("nowhere") + " --out " +
              s.path("x.jsonl"))
            .code == 2);
}

TEST_CASE("gradcheck verdicts drive the exit code") {
  Sandbox s;
  CmdResult ok = s.run("gradcheck --variant bow-context --dims 5 --seeds 1");
  CHECK(ok.code == 0);
  CHECK(ok.out.find("OK") != std::string::npos);
  CHECK(ok.out.find("max relative error") != std::string::npos);

  CmdResult fail =
      s.run("gradcheck --variant bow-context --dims 5 --seeds 1 --tol 1e-13");
  CHECK(fail.code == 1);
  CHECK(fail.out.find("FAIL") != std::string::npos);
}

TEST_CASE("usage, data and divergence problems exit distinctly") {
  Sandbox s;
  s.seed_corpora();

  CHECK(s.run("no-such-command").code == 1);
  CHECK(s.run("eval --bogus").code == 1);
  CHECK(s.run("train --variant idclm").code == 1);
  CHECK(s.run("--help").code == 0);
  CHECK(s.run("train --help").code == 0);

  CmdResult missing =
      s.run("eval --model " + s.path("nope.dclm") + " --test " +
            s.path("valid.jsonl") + " --vocab " + s.path("vocab.txt"));
  CHECK(missing.code == 2);
  CHECK(missing.err.find("nope.dclm") != std::string::npos);

  s.spit("broken.jsonl", "{\"dialog_id\": \"sw0001\"");
  CHECK(s.run("build-vocab --corpus " + s.path("broken.jsonl") + " --out " +
              s.path("v2.txt"))
            .code == 2);

  CHECK(s.run("train --variant idclm --k 2 --corpus " + s.path("train.jsonl") +
              " --valid " + s.path("valid.jsonl") + " --vocab " +
              s.path("vocab.txt") + " --threads 2 --out " + s.path("t.dclm"))
            .code == 1);

  CmdResult diverged = s.run(
      "train --variant idclm --k 2 --corpus " + s.path("train.jsonl") +
      " --valid " + s.path("valid.jsonl") + " --vocab " + s.path("vocab.txt") +
      " --alpha 1e200 --epochs 2 --out " + s.path("d.dclm"));
  CHECK(diverged.code == 3);
  CHECK(diverged.err.find("non-finite") != std::string::npos);
}

TEST_CASE("a stale vocabulary is rejected by its fingerprint") {
  Sandbox s;
  s.seed_corpora();
  REQUIRE(s.run("train --variant single-turn --k 1 --corpus " +
                s.path("train.jsonl") + " --valid " + s.path("valid.jsonl") +
                " --vocab " + s.path("vocab.txt") +
                " --epochs 1 --out " + s.path("m.dclm"))
              .code == 0);
  REQUIRE(s.run("build-vocab --corpus " + s.path("valid.jsonl") + " --out " +
                s.path("other_vocab.txt"))
              .code == 0);

  CmdResult bad =
      s.run("eval --model " + s.path("m.dclm") + " --test " +
            s.path("valid.jsonl") + " --vocab " + s.path("other_vocab.txt"));
  CHECK(bad.code == 2);
  CHECK(bad.err.find("fingerprint") != std::string::npos);
}

TEST_CASE("compare validates its model list") {
  Sandbox s;
  s.seed_corpora();
  REQUIRE(s.run("train --variant single-turn --k 1 --corpus " +
                s.path("train.jsonl") + " --valid " + s.path("valid.jsonl") +
                " --vocab " + s.path("vocab.txt") +
                " --epochs 1 --out " + s.path("m.dclm"))
              .code == 0);
  REQUIRE(s.run("train --variant kn --corpus " + s.path("train.jsonl") +
                " --vocab " + s.path("vocab.txt") + " --out " +
                s.path("kn.arpa"))
              .code == 0);

  CHECK(s.run("compare --models " + s.path("m.dclm") + " --test " +
              s.path("valid.jsonl") + " --vocab " + s.path("vocab.txt"))
            .code == 1);
  CHECK(s.run("compare --models " + s.path("m.dclm") + "," + s.path("kn.arpa") +
              " --test " + s.path("valid.jsonl") + " --vocab " +
              s.path("vocab.txt") + " --baseline " + s.path("zzz.dclm"))
            .code == 1);
  CHECK(s.run("compare --models " + s.path("kn.arpa") + "," + s.path("kn.arpa") +
              " --test " + s.path("valid.jsonl") + " --vocab " +
              s.path("vocab.txt"))
            .code == 1);
  CHECK(s.run("compare --models " + s.path("kn.arpa") + "," + s.path("kn.arpa") +
              " --test " + s.path("valid.jsonl") + " --vocab " +
              s.path("vocab.txt") + " --k 2")
            .code == 0);
}
