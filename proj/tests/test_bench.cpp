#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "bagg/bench.hpp"

using namespace bagg;
namespace pt = boost::property_tree;

namespace {

ResultRow row(std::size_t n, std::size_t c, std::string mode, std::string method, double acc) {
  ResultRow r;
  r.sample_size = n;
  r.num_categories = c;
  r.mode = std::move(mode);
  r.method = std::move(method);
  r.mean_accuracy = acc;
  r.repetitions = 25;
  return r;
}

// One wide row: baseline, standard x {eda, bt_a, bt_b}, bagg x {eda, bt_a, bt_b, combined}.
ResultTable wide_row(std::size_t n, std::size_t c, const std::vector<double>& v) {
  ResultTable t;
  t.rows = {row(n, c, "baseline", "none", v[0]),   row(n, c, "standard", "eda", v[1]),
            row(n, c, "standard", "bt_a", v[2]),   row(n, c, "standard", "bt_b", v[3]),
            row(n, c, "bagg", "eda", v[4]),        row(n, c, "bagg", "bt_a", v[5]),
            row(n, c, "bagg", "bt_b", v[6]),       row(n, c, "bagg", "combined", v[7])};
  return t;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string l;
  while (std::getline(in, l)) out.push_back(l);
  return out;
}

struct Bar {
  std::string mode, method;
  double accuracy, height, y;
};

std::vector<Bar> parse_bars(const std::string& svg) {
  std::istringstream in(svg);
  pt::ptree tree;
  pt::read_xml(in, tree);
  std::vector<Bar> bars;
  for (const auto& [name, node] : tree.get_child("svg")) {
    if (name != "rect" || node.get<std::string>("<xmlattr>.class", "") != "bar") continue;
    bars.push_back({node.get<std::string>("<xmlattr>.data-mode"), node.get<std::string>("<xmlattr>.data-method"),
                    node.get<double>("<xmlattr>.data-accuracy"), node.get<double>("<xmlattr>.height"),
                    node.get<double>("<xmlattr>.y")});
  }
  return bars;
}

struct SyntheticSetup {
  SyntheticCorpus syn;
  AugmentationStore store;
};

SyntheticSetup synthetic_setup(std::size_t size, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.size = size;
  Rng rng(seed);
  SyntheticSetup s{make_synthetic_corpus(cfg, rng), {}};
  AugmentDeps deps;
  deps.thesaurus = &s.syn.thesaurus;
  deps.master_seed = seed;
  s.store["eda"] = augment_corpus(s.syn.corpus, method_plan("eda"), deps);
  return s;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.sample_sizes = {40};
  cfg.num_categories = {4};
  cfg.methods = {"eda"};
  cfg.repetitions = 2;
  cfg.master_seed = 9;
  cfg.trainer.epochs = 3;
  cfg.trainer.embed_dim = 8;
  cfg.trainer.hidden_dim = 8;
  return cfg;
}

}  // namespace

TEST_CASE("method plans") {
  CHECK(method_plan("eda").group_size() == 5);
  CHECK(method_plan("bt_a").group_size() == 5);
  CHECK(method_plan("bt_a").methods[0].method.routes == std::vector<std::string>{"zh", "ja", "ko", "hi"});
  CHECK(method_plan("bt_b").methods[0].method.routes == std::vector<std::string>{"fr", "pt", "es", "it"});
  CHECK(method_plan("combined").group_size() == 13);
  CHECK(method_sources("combined") == std::vector<std::string>{"eda", "bt_a", "bt_b"});
  CHECK_THROWS(method_plan("google"));
  CHECK(method_rank("eda") < method_rank("combined"));
}

TEST_CASE("format_table renders reference rows exactly") {
  // Amazon, n=100, 12 categories; Google -> bt_a, OPUS-MT -> bt_b.
  const auto amazon = wide_row(100, 12, {0.2940, 0.4380, 0.5000, 0.4180, 0.5100, 0.5320, 0.4860, 0.5020});
  const auto md = lines(format_table(amazon, TableFormat::Markdown));
  REQUIRE(md.size() == 3);
  CHECK(md[0] ==
        "| Sample Size | Categories | Baseline | Standard EDA | Standard BT-A | Standard BT-B | BAGG EDA | BAGG BT-A "
        "| BAGG BT-B | BAGG Combined |");
  CHECK(md[2] == "| 100 | 12 | 29.40% | 43.80% | 50.00% | 41.80% | 51.00% | 53.20% | 48.60% | 50.20% |");

  // Clinical Trials, n=100, 12 categories.
  const auto ct = wide_row(100, 12, {0.4360, 0.6380, 0.6480, 0.6500, 0.7140, 0.7020, 0.7280, 0.6940});
  CHECK(lines(format_table(ct, TableFormat::Markdown))[2] ==
        "| 100 | 12 | 43.60% | 63.80% | 64.80% | 65.00% | 71.40% | 70.20% | 72.80% | 69.40% |");
}

TEST_CASE("format_table marks missing cells and orders rows") {
  ResultTable t;
  t.rows = {row(200, 8, "bagg", "eda", 0.5), row(100, 8, "baseline", "none", 0.25), row(100, 8, "bagg", "eda", 0.75)};
  const auto md = lines(format_table(t, TableFormat::Markdown));
  REQUIRE(md.size() == 4);
  CHECK(md[0] == "| Sample Size | Categories | Baseline | BAGG EDA |");
  CHECK(md[2] == "| 100 | 8 | 25.00% | 75.00% |");
  CHECK(md[3] == "| 200 | 8 | — | 50.00% |");
}

TEST_CASE("results csv round trip") {
  ResultTable t = wide_row(100, 8, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8});
  for (auto& r : t.rows) {
    r.std_dev = 0.0123456;
    r.seed = 18446744073709551615ULL;
  }
  const auto csv = format_table(t, TableFormat::Csv);
  CHECK(lines(csv)[0] == "sample_size,num_categories,mode,method,mean_accuracy,std_dev,repetitions,seed");
  CHECK(lines(csv)[1] == "100,8,baseline,none,0.100000,0.012346,25,18446744073709551615");
  const auto back = parse_results_csv(csv);
  REQUIRE(back.rows.size() == t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& a = t.rows[i];
    const auto* b = back.find(a.sample_size, a.num_categories, a.mode, a.method);
    REQUIRE(b);
    CHECK(std::abs(a.mean_accuracy - b->mean_accuracy) <= 5e-7);
    CHECK(std::abs(a.std_dev - b->std_dev) <= 5e-7);
    CHECK(a.repetitions == b->repetitions);
    CHECK(a.seed == b->seed);
  }
  CHECK(format_table(back, TableFormat::Csv) == csv);
  CHECK_THROWS(parse_results_csv("bad,header\n"));
  CHECK_THROWS(parse_results_csv(lines(csv)[0] + "\n1,2,3\n"));
}

TEST_CASE("chart has one bar per mode and method with proportional heights") {
  ResultTable one;
  one.rows = {row(100, 8, "baseline", "none", 0.3), row(100, 8, "standard", "eda", 0.45),
              row(100, 8, "bagg", "eda", 0.612345)};
  const auto bars = parse_bars(render_chart(one));
  REQUIRE(bars.size() == 3);
  for (const auto& b : bars) {
    CHECK(std::abs(b.height - b.accuracy * ChartGeometry::kPlotHeight) <= 0.5);
    CHECK(std::abs(b.y + b.height - (ChartGeometry::kPlotTop + ChartGeometry::kPlotHeight)) <= 0.5);
  }
  CHECK(bars[2].method == "eda");
  CHECK(bars[2].mode == "bagg");

  const auto full = wide_row(100, 12, {0.2940, 0.4380, 0.5000, 0.4180, 0.5100, 0.5320, 0.4860, 0.5020});
  CHECK(parse_bars(render_chart(full)).size() == 8);
}

TEST_CASE("pearson") {
  const std::vector<double> x{1, 2, 3, 4}, y{2, 4, 6, 8}, z{4, 3, 2, 1}, flat{1, 1, 1, 1};
  CHECK(pearson(x, y) == doctest::Approx(1.0));
  CHECK(pearson(x, z) == doctest::Approx(-1.0));
  CHECK(std::isnan(pearson(x, flat)));
  CHECK_THROWS(pearson(x, std::vector<double>{1, 2}));
}

TEST_CASE("correlation of copied groups is exactly one") {
  Rng rng(1);
  std::vector<std::vector<double>> losses;
  for (int g = 0; g < 60; ++g) losses.push_back(std::vector<double>(4, rng.uniform(0, 3)));
  const auto r = correlation_from_losses(losses, rng);
  CHECK(r.within_group_corr == 1.0);
  CHECK(r.within_pairs == 60 * 6);
  CHECK(r.cross_pairs == r.within_pairs);
  CHECK(r.groups == 60);
  CHECK(r.texts_per_group == 4.0);
  CHECK(r.within_p_value < 1e-6);
  CHECK(r.cross_group_corr >= -1.0);
  CHECK(r.cross_group_corr <= 1.0);

  std::vector<std::vector<double>> flat(60, std::vector<double>(3, 0.7));
  CHECK(correlation_from_losses(flat, rng).degenerate);
}

TEST_CASE("independent losses show no correlation") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::vector<double>> losses(200);
    for (auto& g : losses) {
      for (int j = 0; j < 3; ++j) g.push_back(-std::log(rng.uniform(1e-3, 1.0)));
    }
    const auto r = correlation_from_losses(losses, rng);
    CHECK(std::abs(r.within_group_corr) <= 0.15);
    CHECK(std::abs(r.cross_group_corr) <= 0.15);
  }
}

TEST_CASE("correlation_study needs enough groups") {
  const auto setup = synthetic_setup(60, 3);
  const auto attached = attach_augmentations(setup.syn.corpus, setup.store.at("eda"), method_plan("eda"));
  const auto vocab = build_training_vocab(attached.corpus, TrainMode::Standard);
  Rng init(1);
  const auto params = ModelParams::initialize({vocab.size(), 8, 8, 8}, init);
  const auto groups = encode_corpus(attached.corpus, vocab);
  Rng rng(4);
  const auto r = correlation_study(groups, params, rng);
  CHECK(r.groups == 60);
  CHECK(r.within_pairs == 600);
  const std::vector<EncodedObservation> few(groups.begin(), groups.begin() + 49);
  CHECK_THROWS(correlation_study(few, params, rng));
}

TEST_CASE("synthetic corpus construction") {
  SyntheticConfig cfg;
  cfg.classes = 6;
  cfg.size = 200;
  cfg.noise_level = 0.0;
  cfg.dropout = 0.0;
  Rng rng(5);
  const auto syn = make_synthetic_corpus(cfg, rng);
  CHECK(syn.corpus.size() == 200);
  const auto counts = syn.corpus.category_counts();
  CHECK(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()) <= 1);

  // Majority vote over signature words recovers every label.
  for (const auto& o : syn.corpus.observations) {
    std::map<int, int> votes;
    for (const auto& t : tokenize(o.original)) {
      if (auto it = syn.signature_class.find(t); it != syn.signature_class.end()) ++votes[it->second];
    }
    REQUIRE_FALSE(votes.empty());
    const auto best = std::max_element(votes.begin(), votes.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    CHECK(best->first == o.label);
    const auto len = tokenize(o.original).size();
    CHECK(len >= 7);
    CHECK(len <= 19);
  }
  CHECK(syn.thesaurus.has_entry("c0k0"));
  CHECK(syn.thesaurus.has_entry("c0k0s1"));
  cfg.classes = 1;
  CHECK_THROWS(make_synthetic_corpus(cfg, rng));
}

TEST_CASE("trained model beats chance on the synthetic corpus") {
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticConfig cfg;
    Rng rng(100 + seed);
    const auto corpus = make_synthetic_corpus(cfg, rng).corpus;
    Rng sample_rng(seed);
    const auto sample = stratified_sample(corpus, 100, sample_rng);
    const auto parts = split(sample, SplitSpec{0.8, 100, 8, seed}, 0);
    TrainConfig tc;
    tc.mode = TrainMode::Baseline;
    tc.seed = seed;
    const auto vocab = build_training_vocab(parts.train, tc.mode);
    total += evaluate(train(parts.train, vocab, tc), parts.test);
  }
  CHECK(total / 5.0 >= 1.0 / 8.0 + 0.2);
}

TEST_CASE("run_experiment shape, determinism and cell isolation") {
  const auto setup = synthetic_setup(120, 6);
  auto cfg = small_config();
  cfg.sample_sizes = {40, 60};
  const auto a = run_experiment(setup.syn.corpus, setup.store, cfg);
  REQUIRE(a.rows.size() == 6);
  CHECK(a.rows[0].mode == "baseline");
  CHECK(a.rows[0].method == "none");
  CHECK(a.rows[1].mode == "standard");
  CHECK(a.rows[2].mode == "bagg");
  for (const auto& r : a.rows) {
    CHECK(r.repetitions == 2);
    CHECK(r.seed == 9);
    CHECK(r.mean_accuracy >= 0.0);
    CHECK(r.mean_accuracy <= 1.0);
    CHECK(r.std_dev >= 0.0);
    const double mean = (r.accuracies[0] + r.accuracies[1]) / 2;
    CHECK(r.mean_accuracy == mean);
    CHECK(r.std_dev == doctest::Approx(std::abs(r.accuracies[0] - r.accuracies[1]) / std::sqrt(2.0)));
  }

  cfg.threads = 3;
  const auto b = run_experiment(setup.syn.corpus, setup.store, cfg);
  CHECK(format_table(a, TableFormat::Csv) == format_table(b, TableFormat::Csv));

  cfg.sample_sizes = {60};
  cfg.modes = {TrainMode::Bagg};
  const auto c = run_experiment(setup.syn.corpus, setup.store, cfg);
  REQUIRE(c.rows.size() == 1);
  CHECK(c.rows[0].accuracies == a.find(60, 4, "bagg", "eda")->accuracies);
}

TEST_CASE("run_experiment reports evaluate() accuracies") {
  const auto setup = synthetic_setup(80, 7);
  auto cfg = small_config();
  cfg.repetitions = 1;
  cfg.modes = {TrainMode::Baseline};
  const auto t = run_experiment(setup.syn.corpus, setup.store, cfg);
  REQUIRE(t.rows.size() == 1);
  // Accuracy on a 20% split of 40 stratified texts is a multiple of 1/8.
  CHECK(std::fmod(t.rows[0].mean_accuracy * 8.0, 1.0) == doctest::Approx(0.0));
}

TEST_CASE("infeasible cells are skipped") {
  const auto setup = synthetic_setup(200, 8);
  auto cfg = small_config();
  cfg.repetitions = 1;
  cfg.sample_sizes = {40, 500};
  cfg.num_categories = {4, 12};
  cfg.methods = {"eda", "bt_a"};
  const auto t = run_experiment(setup.syn.corpus, setup.store, cfg);
  CHECK(t.rows.size() == 3);  // (40, 4): baseline, standard eda, bagg eda
  std::size_t missing_bt = 0, infeasible = 0;
  for (const auto& s : t.skipped) {
    if (s.method == "bt_a") ++missing_bt;
    if (s.method == "*") ++infeasible;
  }
  CHECK(missing_bt == 2);
  CHECK(infeasible == 3);
}

TEST_CASE("finished rows are cached and reused") {
  const auto dir = std::filesystem::temp_directory_path() / "bagg_test_bench_cache";
  std::filesystem::remove_all(dir);
  const auto setup = synthetic_setup(120, 10);
  auto cfg = small_config();
  cfg.cache_dir = dir;
  const auto first = run_experiment(setup.syn.corpus, setup.store, cfg);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) files += e.path().extension() == ".json";
  CHECK(files == 3);
  const auto second = run_experiment(setup.syn.corpus, setup.store, cfg);
  CHECK(format_table(first, TableFormat::Csv) == format_table(second, TableFormat::Csv));
  for (std::size_t i = 0; i < first.rows.size(); ++i) CHECK(first.rows[i].accuracies == second.rows[i].accuracies);

  cfg.trainer.epochs = 4;  // a different config must not hit the cache
  run_experiment(setup.syn.corpus, setup.store, cfg);
  files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) files += e.path().extension() == ".json";
  CHECK(files == 6);
  std::filesystem::remove_all(dir);
}

TEST_CASE("results csv written to disk") {
  const auto path = std::filesystem::temp_directory_path() / "bagg_test_results.csv";
  const auto t = wide_row(100, 8, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8});
  write_results_csv(path, t);
  CHECK(format_table(read_results_csv(path), TableFormat::Csv) == format_table(t, TableFormat::Csv));
  std::filesystem::remove(path);
}
