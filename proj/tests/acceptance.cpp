// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bagg/bench.hpp"
#include "helpers.hpp"

using namespace bagg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

unsigned worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------------------

Outcome gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelDims d{10, 4, 5, 3};
  Rng rng(101);
  double worst = 0.0;
  std::size_t checks = 0;
  for (int instance = 0; instance < 10; ++instance) {
    const auto params = testing::random_params(rng, d, 0.8);
    std::vector<EncodedObservation> batch;
    for (std::size_t size : {1, 2, 5}) batch.push_back(testing::random_group(rng, size, d));
    for (auto kind : {LossKind::Standard, LossKind::Bagg}) {
      for (auto space : {PoolSpace::Probability, PoolSpace::Logit}) {
        LossOptions opt;
        opt.pool_space = space;
        const auto r = check_gradients(params, batch, 1e-4, kind, opt);
        worst = std::max(worst, r.max_relative_error);
        ++checks;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 10.0,
          fmt("max relative error %.3g over %zu checks (limit 1e-4), %.2fs (limit 10s)", worst, checks, secs)};
}

Outcome singleton_equivalence() {
  Rng rng(202);
  double worst = 0.0;
  for (int b = 0; b < 100; ++b) {
    const ModelDims d{20, 1 + rng.uniform_index(8), 1 + rng.uniform_index(8), 2 + rng.uniform_index(10)};
    const auto params = testing::random_params(rng, d, 1.0);
    std::vector<EncodedObservation> batch;
    const auto n = 1 + rng.uniform_index(32);
    for (std::size_t i = 0; i < n; ++i) batch.push_back(testing::random_group(rng, 1, d));
    for (auto space : {PoolSpace::Probability, PoolSpace::Logit}) {
      LossOptions opt;
      opt.pool_space = space;
      worst = std::max(worst, std::abs(loss_bagg_value(batch, params, opt) - loss_standard_value(batch, params, opt)));
    }
  }
  return {worst <= 1e-12, fmt("max |bagg - standard| = %.3g over 100 batches (limit 1e-12)", worst)};
}

Outcome flattening_identity() {
  Rng rng(303);
  double worst = 0.0;
  for (int b = 0; b < 100; ++b) {
    const ModelDims d{15, 4, 5, 2 + rng.uniform_index(6)};
    const auto params = testing::random_params(rng, d, 1.0);
    const auto m = 1 + rng.uniform_index(13);
    const auto n = 1 + rng.uniform_index(16);
    std::vector<EncodedObservation> batch;
    double flat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      batch.push_back(testing::random_group(rng, m, d));
      for (const auto& t : batch.back().texts) flat += testing::ref_ce(t, batch.back().label, params);
    }
    flat /= static_cast<double>(n * m);
    worst = std::max(worst, std::abs(loss_standard_value(batch, params) - flat));
  }
  return {worst <= 1e-12, fmt("max |J - flat CE mean| = %.3g over 100 batches (limit 1e-12)", worst)};
}

Outcome pooling_contract() {
  Rng rng(404);
  double worst_sum = 0.0, worst_perm = 0.0;
  bool in_range = true;
  const auto check = [&](const ClassDistribution& p) {
    double s = 0.0;
    for (double v : p.probs) {
      s += v;
      in_range = in_range && v >= 0.0 && v <= 1.0;
    }
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
  };
  const auto diff = [](const ClassDistribution& a, const ClassDistribution& b) {
    double w = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::abs(a[i] - b[i]));
    return w;
  };
  for (int trial = 0; trial < 10000; ++trial) {
    const auto m = 1 + rng.uniform_index(13);
    const auto c = 2 + rng.uniform_index(11);
    const double spread = std::pow(10.0, rng.uniform(-2.0, 2.0));
    std::vector<std::vector<double>> logits(m, std::vector<double>(c));
    std::vector<ClassDistribution> probs;
    for (auto& z : logits) {
      for (auto& v : z) v = spread * rng.uniform(-1.0, 1.0);
      probs.push_back(softmax(z));
    }
    const auto p = pool(probs);
    const auto q = pool_logits(logits);
    check(p);
    check(q);
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    for (std::size_t i = m; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    std::vector<std::vector<double>> logits_perm;
    std::vector<ClassDistribution> probs_perm;
    for (auto i : order) {
      logits_perm.push_back(logits[i]);
      probs_perm.push_back(probs[i]);
    }
    worst_perm = std::max({worst_perm, diff(p, pool(probs_perm)), diff(q, pool_logits(logits_perm))});
  }
  return {worst_sum <= 1e-9 && in_range && worst_perm <= 1e-12,
          fmt("max |sum-1| = %.3g (limit 1e-9), entries in [0,1]: %s, max permutation change %.3g, 10^4 inputs",
              worst_sum, in_range ? "yes" : "no", worst_perm)};
}

Outcome directional_benchmark() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticConfig sc;
  sc.size = 400;
  Rng corpus_rng(7);
  const auto syn = make_synthetic_corpus(sc, corpus_rng);
  WordSet stop;
  AugmentDeps deps;
  deps.thesaurus = &syn.thesaurus;
  deps.stopwords = &stop;
  deps.master_seed = 11;
  AugmentationStore store;
  store["eda"] = augment_corpus(syn.corpus, method_plan("eda"), deps);

  ExperimentConfig cfg;
  cfg.sample_sizes = {100};
  cfg.num_categories = {8};
  cfg.methods = {"eda"};
  cfg.repetitions = 10;
  cfg.master_seed = 3;
  cfg.threads = worker_count();
  const auto t = run_experiment(syn.corpus, store, cfg);
  const auto* b = t.find(100, 8, "baseline", "none");
  const auto* s = t.find(100, 8, "standard", "eda");
  const auto* g = t.find(100, 8, "bagg", "eda");
  if (!b || !s || !g) return {false, "benchmark rows missing"};
  int wins = 0;
  for (std::size_t i = 0; i < g->accuracies.size(); ++i) wins += g->accuracies[i] > s->accuracies[i];
  const double secs = seconds_since(t0);
  const bool pass = s->mean_accuracy >= b->mean_accuracy - 0.005 && g->mean_accuracy >= s->mean_accuracy - 0.005 &&
                    wins >= 6 && secs < 300.0;
  return {pass, fmt("baseline %.4f, standard %.4f, bagg %.4f, bagg > standard in %d/10 reps (need 6), %.1fs",
                    b->mean_accuracy, s->mean_accuracy, g->mean_accuracy, wins, secs)};
}

Outcome correlation_demo() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticConfig sc;
  Rng corpus_rng(21);
  const auto syn = make_synthetic_corpus(sc, corpus_rng);
  WordSet stop;
  AugmentDeps deps;
  deps.thesaurus = &syn.thesaurus;
  deps.stopwords = &stop;
  deps.master_seed = 22;
  const auto plan = method_plan("eda");
  const auto corpus = attach_augmentations(syn.corpus, augment_corpus(syn.corpus, plan, deps), plan).corpus;

  TrainConfig tc;
  tc.mode = TrainMode::Standard;
  tc.epochs = 5;
  tc.seed = 23;
  const auto vocab = build_training_vocab(corpus, tc.mode);
  const auto params = train(corpus, vocab, tc).params;
  const auto groups = encode_corpus(corpus, vocab, true);
  Rng rng(24);
  const auto r = correlation_study(groups, params, rng);
  const double secs = seconds_since(t0);
  const bool pass = !r.degenerate && r.within_group_corr > r.cross_group_corr && r.within_group_corr > 0.0 &&
                    r.within_p_value < 0.05 && r.within_pairs >= 200 && secs < 120.0;
  return {pass, fmt("within %.4f vs cross %.4f, p(within>0) = %.3g, %zu within pairs, %.1fs", r.within_group_corr,
                    r.cross_group_corr, r.within_p_value, r.within_pairs, secs)};
}

TokenSeq random_tokens(Rng& rng, const std::vector<std::string>& pool_words, std::size_t max_len) {
  TokenSeq seq;
  const auto len = rng.uniform_index(max_len + 1);
  for (std::size_t i = 0; i < len; ++i) seq.push_back(pool_words[rng.uniform_index(pool_words.size())]);
  return seq;
}

bool is_subsequence(const TokenSeq& small, const TokenSeq& big) {
  std::size_t i = 0;
  for (const auto& t : big) {
    if (i < small.size() && t == small[i]) ++i;
  }
  return i == small.size();
}

Outcome augmentation_invariants() {
  const auto thesaurus = load_thesaurus(BAGG_DATA_DIR "/thesaurus_small.tsv");
  const std::vector<std::string> words{"quick", "happy", "big", "small", "fast", "zzz", "qqq", "table", "the", "run"};
  Rng rng(505);
  int swap_bad = 0, insert_bad = 0, delete_empty = 0, repro_bad = 0;

  for (int trial = 0; trial < 1000; ++trial) {
    const auto seq = random_tokens(rng, words, 20);
    const auto n = rng.uniform_index(6);
    const auto seed = rng.next();
    Rng r1(seed), r2(seed);
    const auto out = random_swap(seq, n, r1);
    auto a = seq, b = out;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    swap_bad += a != b;
    repro_bad += random_swap(seq, n, r2) != out;
  }

  for (int trial = 0; trial < 1000; ++trial) {
    const auto seq = random_tokens(rng, words, 20);
    const auto n = rng.uniform_index(6);
    const auto seed = rng.next();
    Rng r1(seed), r2(seed);
    std::size_t inserted = 0, inserted2 = 0;
    const auto out = random_insert(seq, n, thesaurus, r1, &inserted);
    const bool eligible = std::any_of(seq.begin(), seq.end(), [&](const auto& t) { return thesaurus.has_entry(t); });
    insert_bad += out.size() != seq.size() + inserted || inserted > n || (eligible && inserted != n) ||
                  (!eligible && inserted != 0) || !is_subsequence(seq, out);
    repro_bad += random_insert(seq, n, thesaurus, r2, &inserted2) != out || inserted2 != inserted;
  }

  // Expected length of random_delete: Binomial(L, 1-p) kept tokens, with an
  // all-deleted draw replaced by one survivor.
  double observed = 0.0, expected = 0.0, variance = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto seq = random_tokens(rng, words, 20);
    if (seq.empty()) seq.push_back("solo");
    const double p = rng.uniform(0.0, 0.9);
    const auto seed = rng.next();
    Rng r1(seed), r2(seed);
    const auto out = random_delete(seq, p, r1);
    delete_empty += out.empty();
    repro_bad += random_delete(seq, p, r2) != out;
    const double len = static_cast<double>(seq.size());
    const double all_gone = std::pow(p, len);
    const double mean = len * (1.0 - p) + all_gone;
    const double second = len * p * (1.0 - p) + len * len * (1.0 - p) * (1.0 - p) + all_gone;
    observed += static_cast<double>(out.size());
    expected += mean;
    variance += second - mean * mean;
  }
  const double z = (observed - expected) / std::sqrt(variance);

  const bool pass = swap_bad == 0 && insert_bad == 0 && delete_empty == 0 && repro_bad == 0 && std::abs(z) <= 3.0;
  return {pass, fmt("swap multiset violations %d, insert count violations %d, empty deletions %d, "
                    "delete length z = %.2f (limit 3), irreproducible outputs %d; 1000 trials each",
                    swap_bad, insert_bad, delete_empty, z, repro_bad)};
}

int run(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome protocol_determinism() {
  const auto dir = fs::temp_directory_path() / "bagg_acceptance_protocol";
  fs::remove_all(dir);
  fs::create_directories(dir / "aug");
  const std::string cli = BAGG_CLI;
  const auto q = [](const fs::path& p) { return "'" + p.string() + "'"; };
  const auto corpus = dir / "corpus.jsonl", thes = dir / "thesaurus.tsv";

  int rc = run(cli + " synth --out " + q(corpus) + " --thesaurus-out " + q(thes) + " --size 240 --seed 5");
  rc |= run(cli + " augment --input " + q(corpus) + " --out " + q(dir / "aug" / "eda.jsonl") +
            " --method eda --name eda --seed 6 --thesaurus " + q(thes));
  rc |= run(cli + " augment --input " + q(corpus) + " --out " + q(dir / "aug" / "bt_a.jsonl") +
            " --method bt --name bt_a --routes zh,ja,ko,hi --bt-mock deterministic --seed 6");
  rc |= run(cli + " augment --input " + q(corpus) + " --out " + q(dir / "aug" / "bt_b.jsonl") +
            " --method bt --name bt_b --routes fr,pt,es,it --bt-mock deterministic --seed 6");
  const std::string bench = cli + " bench --data " + q(corpus) + " --aug-dir " + q(dir / "aug") +
                            " --methods eda,bt_a,bt_b,combined --n 80 --cats 4,8 --reps 2 --seed 13 --epochs 4 --threads " +
                            std::to_string(worker_count());
  rc |= run(bench + " --out " + q(dir / "run1.csv"));
  rc |= run(bench + " --out " + q(dir / "run2.csv"));
  if (rc != 0) return {false, "a CLI step exited with an error"};
  const auto a = slurp(dir / "run1.csv"), b = slurp(dir / "run2.csv");
  const auto rows = parse_results_csv(a).rows.size();

  // Group sizes after attaching each plan.
  const auto loaded = load_jsonl(corpus);
  const auto store = load_augmentation_dir(dir / "aug");
  std::size_t wrong = 0;
  std::vector<std::pair<std::string, std::size_t>> expect{{"eda", 5}, {"bt_a", 5}, {"bt_b", 5}, {"combined", 13}};
  for (const auto& [method, size] : expect) {
    std::vector<AugRecord> records;
    for (const auto& src : method_sources(method)) {
      const auto& r = store.at(src);
      records.insert(records.end(), r.begin(), r.end());
    }
    const auto plan = method_plan(method);
    wrong += plan.group_size() != size;
    for (const auto& o : attach_augmentations(loaded, records, plan).corpus.observations) wrong += o.group_size() != size;
  }
  fs::remove_all(dir);
  const bool pass = !a.empty() && a == b && rows == 18 && wrong == 0;
  return {pass, fmt("results.csv %s across two runs (%zu bytes, %zu rows); group-size mismatches %zu (eda/bt 5, combined 13)",
                    a == b ? "identical" : "DIFFERENT", a.size(), rows, wrong)};
}

ResultRow row(std::string mode, std::string method, double acc) {
  ResultRow r;
  r.sample_size = 100;
  r.num_categories = 12;
  r.mode = std::move(mode);
  r.method = std::move(method);
  r.mean_accuracy = acc;
  return r;
}

Outcome report_fidelity() {
  // Baseline, standard and BAGG with one translation system, as printed.
  ResultTable amazon, trials;
  amazon.rows = {row("baseline", "none", 0.2940), row("standard", "google", 0.5000), row("bagg", "google", 0.5320)};
  trials.rows = {row("baseline", "none", 0.4360), row("standard", "opus", 0.6500), row("bagg", "opus", 0.7280)};
  const std::string want_a = "| 100 | 12 | 29.40% | 50.00% | 53.20% |\n";
  const std::string want_t = "| 100 | 12 | 43.60% | 65.00% | 72.80% |\n";
  const auto got_a = format_table(amazon, TableFormat::Markdown);
  const auto got_t = format_table(trials, TableFormat::Markdown);
  const bool ok_a = got_a.ends_with(want_a), ok_t = got_t.ends_with(want_t);
  return {ok_a && ok_t, fmt("amazon row %s, clinical trials row %s", ok_a ? "exact" : "MISMATCH",
                            ok_t ? "exact" : "MISMATCH")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient oracle", gradient_oracle},
      {"singleton equivalence", singleton_equivalence},
      {"equal-size flattening identity", flattening_identity},
      {"pooling contract", pooling_contract},
      {"directional synthetic benchmark", directional_benchmark},
      {"within-group loss correlation", correlation_demo},
      {"augmentation invariants", augmentation_invariants},
      {"protocol determinism", protocol_determinism},
      {"report fidelity", report_fidelity},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %zu: %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
