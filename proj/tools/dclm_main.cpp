#include "dclm/evaluator.hpp"
#include "dclm/ngram.hpp"
#include "dclm/swda.hpp"
#include "dclm/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace {

using namespace dclm;
using nlohmann::json;

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw DataError("cannot write " + path);
}

bool is_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open model file " + path);
  char magic[4] = {};
  f.read(magic, 4);
  return f.gcount() == 4 && std::string(magic, 4) == "DCLM";
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---- convert ----

struct ConvertOpts {
  std::vector<std::string> inputs;
  std::string out;
  std::string split_dir;
};

int run_convert(const ConvertOpts& o) {
  if (o.out.empty() && o.split_dir.empty()) {
    throw ConfigError("convert needs --out and/or --split-dir");
  }
  const Corpus corpus = convert_swda(collect_csv_files(o.inputs), &std::cerr);
  if (!o.out.empty()) save_corpus(o.out, corpus);
  if (!o.split_dir.empty()) {
    const CorpusSplit split = split_by_folder(corpus);
    std::filesystem::create_directories(o.split_dir);
    save_corpus(o.split_dir + "/train.jsonl", split.train);
    save_corpus(o.split_dir + "/valid.jsonl", split.valid);
    save_corpus(o.split_dir + "/test.jsonl", split.test);
    std::cerr << "split: " << split.train.size() << " train, "
              << split.valid.size() << " valid, " << split.test.size()
              << " test dialogs\n";
  }
  std::cerr << "converted " << corpus.size() << " dialogs\n";
  return 0;
}

// ---- gen-synthetic ----

struct GenOpts {
  std::string mode;
  int vocab_size = 0;
  int dialogs = 0;
  int turns = 0;
  std::uint64_t seed = 0;
  int first_index = 0;
  std::string out;
};

int run_gen(const GenOpts& o) {
  SynthConfig cfg;
  cfg.mode = synth_mode_from_string(o.mode);
  cfg.vocab_size = o.vocab_size;
  cfg.dialog_count = o.dialogs;
  cfg.turns_per_dialog = o.turns;
  cfg.seed = o.seed;
  cfg.first_index = o.first_index;
  save_corpus(o.out, generate_synthetic(cfg));
  std::cerr << "generated " << o.dialogs << " " << o.mode << " dialogs\n";
  return 0;
}

// ---- build-vocab ----

struct VocabOpts {
  std::string corpus;
  int cap = 10000;
  std::string out;
};

int run_build_vocab(const VocabOpts& o) {
  const Vocab v = Vocab::build(load_corpus(o.corpus, &std::cerr), o.cap);
  v.save(o.out);
  std::cerr << "vocab: " << v.size() << " tokens, " << v.pos_size()
            << " pos tags, " << v.da_size() << " da tags\n";
  return 0;
}

// ---- train ----

struct TrainOpts {
  std::string variant;
  std::string corpus;
  std::string valid;
  std::string vocab;
  std::string out;
  std::string trainlog;
  std::string config;
  int k = 3;
  int embed_dim = 32;
  int hidden_dim = 32;
  int external_dim = 0;
  int da_embed_dim = 0;
  Scalar keep_prob = 0.8;
  Scalar l2 = 1e-4;
  TrainConfig tc;
  int order = 5;
  bool cross_turn = false;
};

std::string trim(const std::string& s) {
  const std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Flat "key = value" lines; '#' starts a comment line.
std::vector<std::pair<std::string, std::string>> read_kv(
    const std::string& path) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(slurp(path));
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    const std::string where = path + " line " + std::to_string(no);
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    for (const auto& [seen, unused] : out) {
      if (seen == key) throw ConfigError(where + ": duplicate key " + key);
    }
    out.emplace_back(key, trim(t.substr(eq + 1)));
  }
  return out;
}

int config_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key " + key + ": expected an integer, got \"" +
                    v + "\"");
}

std::uint64_t config_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::uint64_t x = std::stoull(v, &pos);
    if (pos == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key " + key + ": expected an integer, got \"" +
                    v + "\"");
}

Scalar config_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const Scalar x = std::stod(v, &pos);
    if (pos == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key " + key + ": expected a number, got \"" + v +
                    "\"");
}

bool config_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + key + ": expected true or false, got \"" +
                    v + "\"");
}

// Config keys are the train flags' long names without the leading dashes.
// A flag given on the command line beats its config value.
void apply_train_config(const CLI::App& train, TrainOpts& o) {
  if (o.config.empty()) return;
  using Setter = std::function<void(const std::string&)>;
  const std::vector<std::pair<std::string, Setter>> keys = {
      {"valid", [&](const std::string& v) { o.valid = v; }},
      {"vocab", [&](const std::string& v) { o.vocab = v; }},
      {"trainlog", [&](const std::string& v) { o.trainlog = v; }},
      {"k", [&](const std::string& v) { o.k = config_int("k", v); }},
      {"embed-dim",
       [&](const std::string& v) {
         o.embed_dim = config_int("embed-dim", v);
       }},
      {"hidden-dim",
       [&](const std::string& v) {
         o.hidden_dim = config_int("hidden-dim", v);
       }},
      {"external-dim",
       [&](const std::string& v) {
         o.external_dim = config_int("external-dim", v);
       }},
      {"da-embed-dim",
       [&](const std::string& v) {
         o.da_embed_dim = config_int("da-embed-dim", v);
       }},
      {"keep-prob",
       [&](const std::string& v) {
         o.keep_prob = config_real("keep-prob", v);
       }},
      {"l2", [&](const std::string& v) { o.l2 = config_real("l2", v); }},
      {"batch-size",
       [&](const std::string& v) {
         o.tc.batch_size = config_int("batch-size", v);
       }},
      {"epochs",
       [&](const std::string& v) {
         o.tc.max_epochs = config_int("epochs", v);
       }},
      {"patience",
       [&](const std::string& v) {
         o.tc.patience = config_int("patience", v);
       }},
      {"clip",
       [&](const std::string& v) { o.tc.clip_norm = config_real("clip", v); }},
      {"alpha",
       [&](const std::string& v) {
         o.tc.adam.alpha = config_real("alpha", v);
       }},
      {"beta1",
       [&](const std::string& v) {
         o.tc.adam.beta1 = config_real("beta1", v);
       }},
      {"beta2",
       [&](const std::string& v) {
         o.tc.adam.beta2 = config_real("beta2", v);
       }},
      {"adam-eps",
       [&](const std::string& v) {
         o.tc.adam.eps = config_real("adam-eps", v);
       }},
      {"seed",
       [&](const std::string& v) { o.tc.seed = config_u64("seed", v); }},
      {"threads",
       [&](const std::string& v) { o.tc.threads = config_int("threads", v); }},
      {"order",
       [&](const std::string& v) { o.order = config_int("order", v); }},
      {"cross-turn",
       [&](const std::string& v) {
         o.cross_turn = config_bool("cross-turn", v);
       }},
  };
  for (const auto& [key, value] : read_kv(o.config)) {
    const auto it =
        std::find_if(keys.begin(), keys.end(),
                     [&](const auto& e) { return e.first == key; });
    if (it == keys.end()) {
      throw ConfigError(o.config + ": unknown config key \"" + key + "\"");
    }
    if (train.count("--" + key) > 0) continue;
    it->second(value);
  }
}

int run_train(const TrainOpts& o) {
  if (o.vocab.empty()) {
    throw ConfigError("train needs --vocab (flag or config key)");
  }
  const Vocab vocab = Vocab::load(o.vocab);
  const EncodedCorpus train =
      encode_corpus(load_corpus(o.corpus, &std::cerr), vocab);

  if (o.variant == "kn") {
    NgramConfig cfg;
    cfg.order = o.order;
    cfg.cross_turn_history = o.cross_turn;
    const KnModel model = KnModel::train(train, vocab.size(), cfg);
    model.write_arpa(o.out, vocab);
    if (!o.valid.empty()) {
      const EncodedCorpus valid =
          encode_corpus(load_corpus(o.valid, &std::cerr), vocab);
      std::cerr << "validation perplexity "
                << ngram_perplexity(model, valid, o.k) << " at k=" << o.k
                << "\n";
    }
    return 0;
  }

  if (o.valid.empty()) {
    throw ConfigError("train needs --valid for neural variants");
  }
  ModelInfo info;
  info.variant = variant_from_string(o.variant);
  info.k = o.k;
  info.config.vocab_size = vocab.size();
  info.config.embed_dim = o.embed_dim;
  info.config.hidden_dim = o.hidden_dim;
  info.config.external_state_dim = o.external_dim;
  info.config.da_vocab_size = vocab.da_size();
  info.config.da_embed_dim = o.da_embed_dim;
  info.config.keep_prob = o.keep_prob;
  info.config.l2_lambda = o.l2;
  info.vocab_fingerprint = vocab.fingerprint();

  DialogModel model = DialogModel::create(info, o.tc.seed);
  const EncodedCorpus valid =
      encode_corpus(load_corpus(o.valid, &std::cerr), vocab);
  const TrainLog log = train_model(model, train, valid, o.tc);
  model.save(o.out);
  write_trainlog(o.trainlog.empty() ? o.out + ".trainlog" : o.trainlog, log);
  std::cerr << "best epoch " << log.best_epoch << ", validation perplexity "
            << log.best_valid_ppl << "\n";
  return 0;
}

// ---- eval ----

struct EvalOpts {
  std::string model;
  std::string test;
  std::string vocab;
  std::string json_out;
  std::string baseline;
  int k = 0;
  int top = 5;
  bool cross_turn = false;
};

void check_fingerprint(const DialogModel& model, const Vocab& vocab,
                       const std::string& path) {
  if (model.info().vocab_fingerprint != vocab.fingerprint()) {
    throw DataError("vocabulary fingerprint mismatch: " + path +
                    " was trained with a different vocabulary");
  }
}

int run_eval(const EvalOpts& o) {
  const Vocab vocab = Vocab::load(o.vocab);
  const EncodedCorpus test =
      encode_corpus(load_corpus(o.test, &std::cerr), vocab);

  EvalReport report;
  if (is_checkpoint(o.model)) {
    DialogModel model = DialogModel::load(o.model);
    check_fingerprint(model, vocab, o.model);
    NeuralScorer scorer(model);
    report = evaluate(scorer, test, vocab, o.k > 0 ? o.k : model.info().k);
  } else {
    if (o.k <= 0) throw ConfigError("--k is required for n-gram models");
    const KnModel model = KnModel::read_arpa(o.model, vocab, o.cross_turn);
    NgramScorer scorer(model);
    report = evaluate(scorer, test, vocab, o.k);
  }

  if (!o.json_out.empty()) spit(o.json_out, report_to_json(report));
  if (!o.baseline.empty()) {
    const EvalReport base = report_from_json(slurp(o.baseline));
    std::cout << render_relative(report, base, o.top);
  } else {
    std::cout << render_report(report, o.top);
  }
  return 0;
}

// ---- compare ----

struct CompareOpts {
  std::string models;
  std::string test;
  std::string vocab;
  std::string baseline;
  std::string json_out;
  int k = 0;
  int top = 5;
  bool cross_turn = false;
};

struct CompareEntry {
  std::string path;
  std::unique_ptr<DialogModel> neural;
  std::unique_ptr<KnModel> gram;
  std::unique_ptr<WindowScorer> scorer;
  EvalReport report;
};

int run_compare(const CompareOpts& o) {
  const std::vector<std::string> paths = split_commas(o.models);
  if (paths.size() < 2) {
    throw ConfigError("compare needs at least two --models");
  }
  const Vocab vocab = Vocab::load(o.vocab);
  const EncodedCorpus test =
      encode_corpus(load_corpus(o.test, &std::cerr), vocab);

  std::vector<CompareEntry> entries;
  for (const std::string& path : paths) {
    CompareEntry e;
    e.path = path;
    if (is_checkpoint(path)) {
      e.neural = std::make_unique<DialogModel>(DialogModel::load(path));
      check_fingerprint(*e.neural, vocab, path);
      e.scorer = std::make_unique<NeuralScorer>(*e.neural);
    } else {
      e.gram =
          std::make_unique<KnModel>(KnModel::read_arpa(path, vocab, o.cross_turn));
      e.scorer = std::make_unique<NgramScorer>(*e.gram);
    }
    entries.push_back(std::move(e));
  }

  int k = o.k;
  if (k <= 0) {
    for (const CompareEntry& e : entries) {
      if (!e.neural) continue;
      if (k <= 0) {
        k = e.neural->info().k;
      } else if (k != e.neural->info().k) {
        throw ConfigError("models disagree on k; pass --k explicitly");
      }
    }
    if (k <= 0) {
      throw ConfigError("--k is required when every model is an n-gram table");
    }
  }

  int baseline_idx = -1;
  if (!o.baseline.empty()) {
    for (std::size_t i = 0; i < paths.size(); ++i) {
      if (paths[i] == o.baseline) baseline_idx = static_cast<int>(i);
    }
    if (baseline_idx < 0) {
      throw ConfigError("--baseline must name one of --models");
    }
  }

  for (CompareEntry& e : entries) {
    e.report = evaluate(*e.scorer, test, vocab, k);
  }
  const EvalReport* base =
      baseline_idx >= 0 ? &entries[baseline_idx].report : nullptr;
  std::vector<Scalar> change(entries.size(), 0);
  if (base) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      change[i] = relative_change(entries[i].report, *base).overall;
    }
  }

  std::vector<int> order(entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const Scalar pa = entries[a].report.overall.ppl();
    const Scalar pb = entries[b].report.overall.ppl();
    if (pa != pb) return pa < pb;
    return entries[a].report.model_id < entries[b].report.model_id;
  });

  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "k=" << k << ", " << entries[0].report.overall.tokens
      << " scored tokens\n";
  out << std::left << std::setw(24) << "model" << std::right << std::setw(12)
      << "perplexity";
  if (base) out << std::setw(14) << "vs baseline";
  out << "\n";
  for (const int idx : order) {
    const EvalReport& r = entries[idx].report;
    out << std::left << std::setw(24) << r.model_id << std::right
        << std::setw(12) << r.overall.ppl();
    if (base) {
      if (idx == baseline_idx) {
        out << std::setw(14) << "baseline";
      } else {
        out << std::showpos << std::setw(13) << change[idx] << std::noshowpos
            << "%";
      }
    }
    out << "\n";
  }
  std::cout << out.str();
  if (base) {
    for (const int idx : order) {
      if (idx == baseline_idx) continue;
      std::cout << "\n" << render_relative(entries[idx].report, *base, o.top);
    }
  }

  if (!o.json_out.empty()) {
    json j;
    j["k"] = k;
    j["baseline"] = base ? json(base->model_id) : json(nullptr);
    j["rows"] = json::array();
    for (const int idx : order) {
      const EvalReport& r = entries[idx].report;
      json row;
      row["model_id"] = r.model_id;
      row["variant"] = r.variant;
      row["path"] = entries[idx].path;
      row["perplexity"] = r.overall.ppl();
      row["change_pct"] = base ? json(change[idx]) : json(nullptr);
      j["rows"].push_back(std::move(row));
    }
    j["reports"] = json::array();
    for (const int idx : order) {
      j["reports"].push_back(json::parse(report_to_json(entries[idx].report)));
    }
    spit(o.json_out, j.dump(2) + "\n");
  }
  return 0;
}

// ---- gradcheck ----

struct GradOpts {
  std::string variant = "all";
  int dims = 8;
  int vocab_size = 20;
  int k = 3;
  int seeds = 5;
  Scalar eps = 1e-4;
  Scalar tol = 1e-4;
  std::uint64_t seed = 0;
};

int run_gradcheck(const GradOpts& o) {
  std::vector<ModelVariant> variants;
  if (o.variant == "all") {
    for (int i = 0; i < kVariantCount; ++i) {
      variants.push_back(static_cast<ModelVariant>(i));
    }
  } else {
    variants.push_back(variant_from_string(o.variant));
  }

  std::ostringstream out;
  out << std::scientific << std::setprecision(3);
  Scalar worst = 0;
  std::string worst_at;
  for (const ModelVariant v : variants) {
    Scalar vmax = 0;
    std::string ventry;
    std::int64_t checked = 0;
    for (int s = 0; s < o.seeds; ++s) {
      const GradCheckResult r = check_variant_gradients(
          v, o.dims, o.dims, o.vocab_size, o.k,
          mix_seed(o.seed, static_cast<std::uint64_t>(s) + 1), o.eps);
      checked += r.checked;
      if (r.max_rel_err > vmax) {
        vmax = r.max_rel_err;
        ventry = r.worst;
      }
    }
    if (vmax > worst) {
      worst = vmax;
      worst_at = std::string(variant_name(v)) + " " + ventry;
    }
    out << std::left << std::setw(14) << variant_name(v) << std::right
        << "max rel err " << vmax << " over " << o.seeds << " seeds ("
        << checked << " entries)\n";
  }
  const bool ok = worst <= o.tol;
  out << "max relative error " << worst << " at " << worst_at
      << ", tolerance " << o.tol << ": " << (ok ? "OK" : "FAIL") << "\n";
  std::cout << out.str();
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dialog-context language models"};
  app.require_subcommand(1);

  ConvertOpts co;
  CLI::App* convert = app.add_subcommand(
      "convert", "convert SwDA-layout CSV transcripts to corpus jsonl");
  convert->add_option("--in", co.inputs, "csv files or directories")
      ->required();
  convert->add_option("--out", co.out, "write the full corpus here");
  convert->add_option("--split-dir", co.split_dir,
                      "write train/valid/test jsonl into this directory");

  GenOpts go;
  CLI::App* gen =
      app.add_subcommand("gen-synthetic", "generate a synthetic corpus");
  gen->add_option("--mode", go.mode, "self-echo, cross-echo, or none")
      ->required();
  gen->add_option("--vocab-size", go.vocab_size, "distinct content tokens")
      ->required();
  gen->add_option("--dialogs", go.dialogs, "dialog count")->required();
  gen->add_option("--turns", go.turns, "turns per dialog")->required();
  gen->add_option("--seed", go.seed, "generator seed");
  gen->add_option("--first-index", go.first_index, "first dialog id index");
  gen->add_option("--out", go.out, "output jsonl path")->required();

  VocabOpts vo;
  CLI::App* bv = app.add_subcommand(
      "build-vocab", "build the vocabulary from a training corpus");
  bv->add_option("--corpus", vo.corpus, "training corpus jsonl")->required();
  bv->add_option("--cap", vo.cap, "most frequent tokens kept");
  bv->add_option("--out", vo.out, "vocabulary output path")->required();

  TrainOpts to;
  CLI::App* train = app.add_subcommand("train", "train one model");
  train->add_option("--config", to.config,
                    "key=value file; keys are long option names without --, "
                    "and flags given here win over file values");
  train
      ->add_option("--variant", to.variant,
                   "single-turn, bow-context, drnnlm, ccdclm, idclm, "
                   "esidclm, daclm, or kn")
      ->required();
  train->add_option("--corpus", to.corpus, "training corpus jsonl")
      ->required();
  train->add_option("--valid", to.valid,
                    "validation corpus jsonl (required for neural variants)");
  train->add_option("--vocab", to.vocab, "vocabulary path");
  train->add_option("--out", to.out, "checkpoint (or arpa) output path")
      ->required();
  train->add_option("--trainlog", to.trainlog,
                    "training log path (default: <out>.trainlog)");
  train->add_option("--k", to.k, "turns per window");
  train->add_option("--embed-dim", to.embed_dim, "word embedding width");
  train->add_option("--hidden-dim", to.hidden_dim, "recurrent state width");
  train->add_option("--external-dim", to.external_dim,
                    "external recurrence width (esidclm)");
  train->add_option("--da-embed-dim", to.da_embed_dim,
                    "dialog-act embedding width (daclm)");
  train->add_option("--keep-prob", to.keep_prob, "dropout keep probability");
  train->add_option("--l2", to.l2, "L2 weight on the output layer");
  train->add_option("--batch-size", to.tc.batch_size, "windows per batch");
  train->add_option("--epochs", to.tc.max_epochs, "epoch cap");
  train->add_option("--patience", to.tc.patience,
                    "epochs without improvement before stopping");
  train->add_option("--clip", to.tc.clip_norm, "gradient norm clip");
  train->add_option("--alpha", to.tc.adam.alpha, "adam step size");
  train->add_option("--beta1", to.tc.adam.beta1, "adam first-moment decay");
  train->add_option("--beta2", to.tc.adam.beta2, "adam second-moment decay");
  train->add_option("--adam-eps", to.tc.adam.eps, "adam denominator floor");
  train->add_option("--seed", to.tc.seed, "training seed");
  train->add_option("--threads", to.tc.threads, "worker count (must be 1)");
  train->add_option("--order", to.order, "n-gram order (kn)");
  train->add_flag("--cross-turn", to.cross_turn,
                  "n-gram history crosses turn boundaries (kn)");

  EvalOpts eo;
  CLI::App* eval = app.add_subcommand(
      "eval", "score a test corpus with one model and report perplexity");
  eval->add_option("--model", eo.model, "checkpoint or arpa path")
      ->required();
  eval->add_option("--test", eo.test, "test corpus jsonl")->required();
  eval->add_option("--vocab", eo.vocab, "vocabulary path")->required();
  eval->add_option("--k", eo.k,
                   "turns per window (default: the checkpoint's k; required "
                   "for n-gram models)");
  eval->add_option("--json", eo.json_out, "also write the report here");
  eval->add_option("--baseline", eo.baseline,
                   "report json to diff against (prints relative changes)");
  eval->add_option("--top", eo.top, "tags shown per partition");
  eval->add_flag("--cross-turn", eo.cross_turn,
                 "score an arpa model with cross-turn history");

  CompareOpts po;
  CLI::App* compare = app.add_subcommand(
      "compare", "evaluate several models side by side on one test corpus");
  compare
      ->add_option("--models", po.models,
                   "comma-separated checkpoint or arpa paths")
      ->required();
  compare->add_option("--test", po.test, "test corpus jsonl")->required();
  compare->add_option("--vocab", po.vocab, "vocabulary path")->required();
  compare->add_option("--baseline", po.baseline,
                      "one of --models to diff the others against");
  compare->add_option("--k", po.k,
                      "turns per window (default: the checkpoints' k)");
  compare->add_option("--json", po.json_out, "write the combined report here");
  compare->add_option("--top", po.top, "tags shown per partition");
  compare->add_flag("--cross-turn", po.cross_turn,
                    "score arpa models with cross-turn history");

  GradOpts gro;
  CLI::App* grad = app.add_subcommand(
      "gradcheck", "finite-difference check of the analytic gradients");
  grad->add_option("--variant", gro.variant, "one variant name, or all");
  grad->add_option("--dims", gro.dims, "embedding and hidden width");
  grad->add_option("--vocab-size", gro.vocab_size, "fixture vocabulary size");
  grad->add_option("--k", gro.k, "turns per window");
  grad->add_option("--seeds", gro.seeds, "random restarts");
  grad->add_option("--eps", gro.eps, "finite-difference step");
  grad->add_option("--tol", gro.tol, "max relative error accepted");
  grad->add_option("--seed", gro.seed, "base seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (convert->parsed()) return run_convert(co);
    if (gen->parsed()) return run_gen(go);
    if (bv->parsed()) return run_build_vocab(vo);
    if (train->parsed()) {
      apply_train_config(*train, to);
      return run_train(to);
    }
    if (eval->parsed()) return run_eval(eo);
    if (compare->parsed()) return run_compare(po);
    if (grad->parsed()) return run_gradcheck(gro);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
