// bagg: command-line front end for augmentation, training, benchmarking and reports.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "bagg/augment.hpp"
#include "bagg/bench.hpp"
#include "bagg/dataset.hpp"
#include "bagg/model.hpp"
#include "bagg/trainer.hpp"

using namespace bagg;
using json = nlohmann::json;

namespace {

void warn(const std::string& msg) { std::fprintf(stderr, "warning: %s\n", msg.c_str()); }

LabeledCorpus load_corpus(const std::filesystem::path& path) {
  if (path.extension() == ".csv") return load_csv(path);
  return load_jsonl(path);
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::unique_ptr<Translator> make_translator(const std::string& endpoint, const std::string& mock,
                                            int timeout_ms) {
  if (!endpoint.empty()) {
    HttpTranslatorOptions opts;
    opts.endpoint = endpoint;
    opts.timeout = std::chrono::milliseconds(timeout_ms);
    return std::make_unique<HttpTranslator>(opts);
  }
  if (mock == "identity") return std::make_unique<IdentityTranslator>();
  if (mock == "deterministic") return std::make_unique<MockTranslator>();
  throw std::invalid_argument("unknown --bt-mock '" + mock + "'");
}

// Plan covering every method in a record set, counting up to the highest variant.
AugmentationPlan plan_from_records(const std::vector<AugRecord>& records) {
  std::map<std::string, int> counts;
  for (const auto& r : records) counts[r.method] = std::max(counts[r.method], r.variant_index + 1);
  AugmentationPlan plan;
  for (const auto& [name, count] : counts) plan.methods.push_back({AugMethod::eda(name), count});
  return plan;
}

LabeledCorpus with_augmentations(const LabeledCorpus& corpus, const std::string& aug_path) {
  if (aug_path.empty()) return corpus;
  const auto records = read_aug_cache(aug_path);
  auto attached = attach_augmentations(corpus, records, plan_from_records(records));
  for (const auto& w : attached.warnings) warn(w);
  return attached.corpus;
}

template <typename T>
std::vector<T> parse_list(const std::string& csv, T (*convert)(const std::string&)) {
  std::vector<T> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(convert(item));
  }
  return out;
}

std::size_t to_size(const std::string& s) { return static_cast<std::size_t>(std::stoul(s)); }
std::string to_str(const std::string& s) { return s; }
TrainMode to_mode(const std::string& s) { return parse_train_mode(s); }

struct TrainerFlags {
  int epochs = 30;
  double lr = 1e-3;
  std::size_t batch = 0;
  std::string pool = "prob";
  std::string optimizer = "adam";
  bool raw_normalizer = false;
  std::size_t embed = 64;
  std::size_t hidden = 128;

  void attach(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
    cmd->add_option("--lr", lr, "Learning rate")->check(CLI::PositiveNumber);
    cmd->add_option("--batch", batch, "Minibatch size in sampling units (0 = mode default)");
    cmd->add_option("--pool", pool, "Pooling space")->check(CLI::IsMember({"prob", "logit"}));
    cmd->add_option("--optimizer", optimizer)->check(CLI::IsMember({"adam", "sgd"}));
    cmd->add_flag("--raw-normalizer", raw_normalizer,
                  "Standard loss divides by the augmented count instead of the group size");
    cmd->add_option("--embed-dim", embed);
    cmd->add_option("--hidden-dim", hidden);
  }

  TrainConfig config() const {
    TrainConfig c;
    c.epochs = epochs;
    c.learning_rate = lr;
    c.batch_size = batch;
    c.pool_space = parse_pool_space(pool);
    c.optimizer.kind = optimizer == "sgd" ? OptimizerConfig::Kind::Sgd : OptimizerConfig::Kind::Adam;
    c.normalizer = raw_normalizer ? GroupNormalizer::AugmentedCount : GroupNormalizer::GroupSize;
    c.embed_dim = embed;
    c.hidden_dim = hidden;
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grouped-augmentation text classification toolkit"};
  app.require_subcommand(1);

  // augment
  auto* aug = app.add_subcommand("augment", "Generate augmented texts into a JSONL cache");
  std::string aug_input, aug_out, aug_method = "eda", aug_name, aug_routes = "fr,pt,es,it";
  std::string aug_endpoint, aug_mock = "deterministic";
  std::string thesaurus_path = BAGG_DEFAULT_THESAURUS, stopwords_path = BAGG_DEFAULT_STOPWORDS;
  int aug_count = 4, aug_retries = 2, aug_timeout = 10000;
  double aug_alpha = kDefaultEdaAlpha;
  std::uint64_t aug_seed = 0;
  aug->add_option("--input", aug_input, "Corpus (JSONL or CSV)")->required()->check(CLI::ExistingFile);
  aug->add_option("--out", aug_out, "Output cache (JSONL)")->required();
  aug->add_option("--method", aug_method)->check(CLI::IsMember({"eda", "bt"}));
  aug->add_option("--name", aug_name, "Method tag written to records (default: eda or bt)");
  aug->add_option("--count", aug_count)->check(CLI::PositiveNumber);
  aug->add_option("--alpha", aug_alpha)->check(CLI::Range(0.0, 1.0));
  aug->add_option("--seed", aug_seed);
  aug->add_option("--routes", aug_routes, "Pivot languages for back-translation");
  auto* endpoint_opt = aug->add_option("--bt-endpoint", aug_endpoint, "Translation endpoint URL")
                           ->envname("BAGG_BT_ENDPOINT");
  aug->add_option("--bt-mock", aug_mock)->check(CLI::IsMember({"deterministic", "identity"}))->excludes(endpoint_opt);
  aug->add_option("--bt-timeout-ms", aug_timeout);
  aug->add_option("--bt-retries", aug_retries);
  aug->add_option("--thesaurus", thesaurus_path);
  aug->add_option("--stopwords", stopwords_path);

  // train
  auto* tr = app.add_subcommand("train", "Train a classifier and write a checkpoint");
  std::string tr_data, tr_aug, tr_mode = "bagg", tr_out;
  std::uint64_t tr_seed = 0;
  TrainerFlags tr_flags;
  tr->add_option("--data", tr_data)->required()->check(CLI::ExistingFile);
  tr->add_option("--aug", tr_aug, "Augmentation cache (JSONL)")->check(CLI::ExistingFile);
  tr->add_option("--mode", tr_mode)->check(CLI::IsMember({"baseline", "standard", "bagg"}));
  tr->add_option("--seed", tr_seed);
  tr->add_option("--out", tr_out)->required();
  tr_flags.attach(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "Accuracy of a checkpoint on a corpus (original texts)");
  std::string ev_model, ev_data;
  ev->add_option("--model", ev_model)->required()->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data)->required()->check(CLI::ExistingFile);

  // bench
  auto* be = app.add_subcommand("bench", "Run the repeated subsample/split benchmark grid");
  std::string be_data, be_aug_dir, be_modes = "baseline,standard,bagg", be_methods = "eda,bt_a,bt_b,combined";
  std::string be_n = "100,200", be_cats = "8,12", be_out = "results.csv", be_cache;
  int be_reps = 25;
  unsigned be_threads = 1;
  std::uint64_t be_seed = 0;
  TrainerFlags be_flags;
  be->add_option("--data", be_data)->required()->check(CLI::ExistingFile);
  be->add_option("--aug-dir", be_aug_dir, "Directory of <method>.jsonl caches");
  be->add_option("--modes", be_modes);
  be->add_option("--methods", be_methods);
  be->add_option("--n", be_n);
  be->add_option("--cats", be_cats);
  be->add_option("--reps", be_reps)->check(CLI::PositiveNumber);
  be->add_option("--seed", be_seed);
  be->add_option("--threads", be_threads);
  be->add_option("--cache-dir", be_cache, "Resume cache for finished rows");
  be->add_option("--out", be_out);
  be_flags.attach(be);

  // report
  auto* re = app.add_subcommand("report", "Render results.csv as a table or chart");
  std::string re_results, re_format = "md", re_out;
  re->add_option("--results", re_results)->required()->check(CLI::ExistingFile);
  re->add_option("--format", re_format)->check(CLI::IsMember({"md", "csv", "svg"}));
  re->add_option("--out", re_out, "Output path (stdout if omitted)");

  // corr-study
  auto* co = app.add_subcommand("corr-study", "Correlation of per-text losses within and across groups");
  std::string co_data, co_aug, co_out;
  int co_steps = 5;
  std::uint64_t co_seed = 0;
  co->add_option("--data", co_data)->required()->check(CLI::ExistingFile);
  co->add_option("--aug", co_aug)->required()->check(CLI::ExistingFile);
  co->add_option("--steps", co_steps, "Standard-mode training epochs before measuring")->check(CLI::NonNegativeNumber);
  co->add_option("--seed", co_seed);
  co->add_option("--out", co_out);

  // synth
  auto* sy = app.add_subcommand("synth", "Write a synthetic keyword corpus and its thesaurus");
  SyntheticConfig sy_cfg;
  std::string sy_out, sy_thesaurus;
  std::uint64_t sy_seed = 0;
  sy->add_option("--out", sy_out)->required();
  sy->add_option("--thesaurus-out", sy_thesaurus);
  sy->add_option("--classes", sy_cfg.classes);
  sy->add_option("--size", sy_cfg.size);
  sy->add_option("--noise", sy_cfg.noise_level)->check(CLI::Range(0.0, 1.0));
  sy->add_option("--dropout", sy_cfg.dropout)->check(CLI::Range(0.0, 1.0));
  sy->add_option("--synonym-rate", sy_cfg.synonym_rate)->check(CLI::Range(0.0, 1.0));
  sy->add_option("--seed", sy_seed);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of both losses on a random instance");
  std::uint64_t gc_seed = 0;
  double gc_eps = 1e-4;
  gc->add_option("--seed", gc_seed);
  gc->add_option("--epsilon", gc_eps);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*aug) {
      const auto corpus = load_corpus(aug_input);
      Thesaurus thesaurus;
      WordSet stopwords;
      std::unique_ptr<Translator> translator;
      AugMethod method;
      if (aug_method == "eda") {
        thesaurus = load_thesaurus(thesaurus_path);
        stopwords = load_word_list(stopwords_path);
        method = AugMethod::eda(aug_name.empty() ? "eda" : aug_name, aug_alpha);
      } else {
        translator = make_translator(aug_endpoint, aug_mock, aug_timeout);
        method = AugMethod::back_translate(aug_name.empty() ? "bt" : aug_name,
                                           parse_list<std::string>(aug_routes, to_str));
      }
      AugmentationPlan plan;
      plan.methods.push_back({method, aug_count});
      AugmentDeps deps;
      deps.thesaurus = &thesaurus;
      deps.stopwords = &stopwords;
      deps.master_seed = aug_seed;
      deps.retries = aug_retries;
      if (translator) deps.translators[method.name] = translator.get();
      std::vector<std::string> warnings;
      const auto records = augment_corpus(corpus, plan, deps, &warnings);
      for (const auto& w : warnings) warn(w);
      write_aug_cache(aug_out, records);
      std::fprintf(stderr, "wrote %zu records for %zu observations to %s\n", records.size(), corpus.size(),
                   aug_out.c_str());
    } else if (*tr) {
      const auto corpus = with_augmentations(load_corpus(tr_data), tr_aug);
      TrainConfig config = tr_flags.config();
      config.mode = parse_train_mode(tr_mode);
      config.seed = tr_seed;
      const Vocab vocab = build_training_vocab(corpus, config.mode, config.vocab_min_count);
      const auto model = train(corpus, vocab, config, {});
      for (std::size_t e = 0; e < model.epoch_losses.size(); ++e) {
        std::fprintf(stderr, "epoch %zu loss %.6f\n", e + 1, model.epoch_losses[e]);
      }
      save_checkpoint(tr_out, Checkpoint{model.params, config.pool_space, model.vocab});
    } else if (*ev) {
      const auto ckpt = load_checkpoint(ev_model);
      const auto corpus = load_corpus(ev_data);
      std::printf("%.6f\n", evaluate(ckpt.params, ckpt.vocab, corpus));
    } else if (*be) {
      ExperimentConfig config;
      config.sample_sizes = parse_list<std::size_t>(be_n, to_size);
      config.num_categories = parse_list<std::size_t>(be_cats, to_size);
      config.modes = parse_list<TrainMode>(be_modes, to_mode);
      config.methods = parse_list<std::string>(be_methods, to_str);
      config.repetitions = be_reps;
      config.master_seed = be_seed;
      config.threads = be_threads;
      config.trainer = be_flags.config();
      if (!be_cache.empty()) config.cache_dir = be_cache;
      AugmentationStore store;
      if (!be_aug_dir.empty()) store = load_augmentation_dir(be_aug_dir);
      const auto table = run_experiment(load_corpus(be_data), store, config);
      for (const auto& s : table.skipped) {
        warn("skipped n=" + std::to_string(s.sample_size) + " C=" + std::to_string(s.num_categories) +
             " method=" + s.method + ": " + s.reason);
      }
      write_results_csv(be_out, table);
      std::cout << format_table(table, TableFormat::Markdown);
    } else if (*re) {
      const auto table = read_results_csv(re_results);
      if (re_format == "svg") {
        write_text(re_out, render_chart(table));
      } else {
        write_text(re_out, format_table(table, re_format == "csv" ? TableFormat::Csv : TableFormat::Markdown));
      }
    } else if (*co) {
      const auto corpus = with_augmentations(load_corpus(co_data), co_aug);
      TrainConfig config;
      config.mode = TrainMode::Standard;
      config.seed = co_seed;
      const Vocab vocab = build_training_vocab(corpus, config.mode);
      ModelParams params;
      if (co_steps > 0) {
        config.epochs = co_steps;
        params = train(corpus, vocab, config).params;
      } else {
        Rng init = derive_rng(co_seed, {"init"});
        params = ModelParams::initialize({vocab.size(), config.embed_dim, config.hidden_dim,
                                          corpus.num_categories()},
                                         init);
      }
      const auto groups = encode_corpus(corpus, vocab, true);
      Rng rng = derive_rng(co_seed, {"corr"});
      const auto r = correlation_study(groups, params, rng);
      json j = {{"within_group_corr", r.degenerate ? json(nullptr) : json(r.within_group_corr)},
                {"cross_group_corr", r.degenerate ? json(nullptr) : json(r.cross_group_corr)},
                {"within_pairs", r.within_pairs},
                {"cross_pairs", r.cross_pairs},
                {"groups", r.groups},
                {"texts_per_group", r.texts_per_group},
                {"within_p_value", r.degenerate ? json(nullptr) : json(r.within_p_value)},
                {"difference_p_value", r.degenerate ? json(nullptr) : json(r.difference_p_value)},
                {"degenerate", r.degenerate},
                {"epochs", co_steps}};
      write_text(co_out, j.dump(2) + "\n");
    } else if (*sy) {
      Rng rng(sy_seed);
      const auto syn = make_synthetic_corpus(sy_cfg, rng);
      write_jsonl(sy_out, syn.corpus);
      if (!sy_thesaurus.empty()) {
        std::vector<std::string> heads;
        for (const auto& [word, cls] : syn.signature_class) heads.push_back(word);
        std::sort(heads.begin(), heads.end());
        std::string text;
        for (const auto& h : heads) {
          const auto* syns = syn.thesaurus.find(h);
          if (!syns) continue;
          text += h + '\t';
          for (std::size_t i = 0; i < syns->size(); ++i) text += (i ? "," : "") + (*syns)[i];
          text += '\n';
        }
        write_text(sy_thesaurus, text);
      }
    } else if (*gc) {
      Rng rng(gc_seed);
      const ModelDims dims{12, 4, 5, 3};
      const auto params = ModelParams::initialize(dims, rng);
      std::vector<EncodedObservation> batch;
      for (std::size_t size : {1, 2, 5}) {
        EncodedObservation obs;
        obs.label = static_cast<int>(rng.uniform_index(dims.classes));
        for (std::size_t j = 0; j < size; ++j) {
          TokenIds ids;
          const auto len = 1 + rng.uniform_index(6);
          for (std::size_t t = 0; t < len; ++t) ids.push_back(static_cast<int>(rng.uniform_index(dims.vocab)));
          obs.texts.push_back(ids);
        }
        batch.push_back(obs);
      }
      int failures = 0;
      for (auto kind : {LossKind::Standard, LossKind::Bagg}) {
        for (auto space : {PoolSpace::Probability, PoolSpace::Logit}) {
          const auto rep = check_gradients(params, batch, gc_eps, kind, {space, GroupNormalizer::GroupSize});
          const bool ok = rep.max_relative_error < 1e-4;
          failures += !ok;
          std::printf("%-8s %-5s max_rel_err=%.3e worst=%s[%zu] %s\n",
                      kind == LossKind::Standard ? "standard" : "bagg", std::string(to_string(space)).c_str(),
                      rep.max_relative_error, rep.worst_tensor.c_str(), rep.worst_index, ok ? "ok" : "FAIL");
        }
      }
      return failures == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
