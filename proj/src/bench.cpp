#include "bagg/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace bagg {

using json = nlohmann::json;

namespace {

std::string fixed(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, value);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

int mode_rank(std::string_view mode) {
  if (mode == "baseline") return 0;
  if (mode == "standard") return 1;
  if (mode == "bagg") return 2;
  return 3;
}

bool row_less(const ResultRow& a, const ResultRow& b) {
  if (a.sample_size != b.sample_size) return a.sample_size < b.sample_size;
  if (a.num_categories != b.num_categories) return a.num_categories < b.num_categories;
  if (mode_rank(a.mode) != mode_rank(b.mode)) return mode_rank(a.mode) < mode_rank(b.mode);
  if (method_rank(a.method) != method_rank(b.method)) return method_rank(a.method) < method_rank(b.method);
  if (a.mode != b.mode) return a.mode < b.mode;
  return a.method < b.method;
}

}  // namespace

// ---------------------------------------------------------------------------
// Methods

AugmentationPlan method_plan(std::string_view method, int count, double eda_alpha) {
  const auto eda = [&] { return AugmentationPlan::Entry{AugMethod::eda("eda", eda_alpha), count}; };
  const auto bt_a = [&] {
    return AugmentationPlan::Entry{AugMethod::back_translate("bt_a", {"zh", "ja", "ko", "hi"}), count};
  };
  const auto bt_b = [&] {
    return AugmentationPlan::Entry{AugMethod::back_translate("bt_b", {"fr", "pt", "es", "it"}), count};
  };
  AugmentationPlan plan;
  if (method == "eda") {
    plan.methods = {eda()};
  } else if (method == "bt_a") {
    plan.methods = {bt_a()};
  } else if (method == "bt_b") {
    plan.methods = {bt_b()};
  } else if (method == "combined") {
    plan.methods = {eda(), bt_a(), bt_b()};
  } else {
    throw std::invalid_argument("unknown augmentation method '" + std::string(method) + "'");
  }
  return plan;
}

std::vector<std::string> method_sources(std::string_view method) {
  if (method == "combined") return {"eda", "bt_a", "bt_b"};
  method_plan(method);  // validates the name
  return {std::string(method)};
}

int method_rank(std::string_view method) {
  static const std::vector<std::string_view> order{kBaselineMethod, "eda", "bt_a", "bt_b", "combined"};
  auto it = std::find(order.begin(), order.end(), method);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

// ---------------------------------------------------------------------------
// Experiment

void ExperimentConfig::validate() const {
  if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must lie in (0,1)");
  }
  if (sample_sizes.empty() || num_categories.empty() || modes.empty()) {
    throw std::invalid_argument("experiment grid is empty");
  }
  for (const auto& m : methods) method_plan(m);
  trainer.validate();
}

const ResultRow* ResultTable::find(std::size_t n, std::size_t c, std::string_view mode,
                                   std::string_view method) const {
  for (const auto& r : rows) {
    if (r.sample_size == n && r.num_categories == c && r.mode == mode && r.method == method) return &r;
  }
  return nullptr;
}

AugmentationStore load_augmentation_dir(const std::filesystem::path& dir) {
  AugmentationStore store;
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("augmentation directory not found: " + dir.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".jsonl") continue;
    store[entry.path().stem().string()] = read_aug_cache(entry.path());
  }
  return store;
}

namespace {

struct Job {
  std::size_t row;
  int rep;
};

struct RowPlan {
  ResultRow row;
  TrainMode mode;
  std::vector<AugRecord> records;  // union of the method's sources
  AugmentationPlan plan;
  std::string cache_key;
  bool cached = false;
};

std::uint64_t corpus_fingerprint(const LabeledCorpus& corpus) {
  SeedKey key(0);
  for (const auto& c : corpus.categories) key.add(c);
  for (const auto& o : corpus.observations) {
    key.add(o.id).add(o.original).add(static_cast<std::uint64_t>(o.label));
  }
  return key.value();
}

std::uint64_t records_fingerprint(const std::vector<AugRecord>& records) {
  SeedKey key(1);
  for (const auto& r : records) {
    key.add(r.origin_id).add(r.method).add(static_cast<std::uint64_t>(r.variant_index)).add(r.text);
  }
  return key.value();
}

std::string row_cache_key(std::uint64_t corpus_fp, const RowPlan& plan, const ExperimentConfig& cfg) {
  const auto& t = cfg.trainer;
  SeedKey key(cfg.master_seed);
  key.add(corpus_fp)
      .add(records_fingerprint(plan.records))
      .add(plan.row.sample_size)
      .add(plan.row.num_categories)
      .add(plan.row.mode)
      .add(plan.row.method)
      .add(static_cast<std::uint64_t>(cfg.repetitions))
      .add(fixed(cfg.train_fraction, 17))
      .add(static_cast<std::uint64_t>(t.epochs))
      .add(t.batch_size)
      .add(fixed(t.learning_rate, 17))
      .add(static_cast<std::uint64_t>(t.optimizer.kind))
      .add(fixed(t.optimizer.beta1, 17))
      .add(fixed(t.optimizer.beta2, 17))
      .add(fixed(t.optimizer.epsilon, 20))
      .add(static_cast<std::uint64_t>(t.pool_space))
      .add(static_cast<std::uint64_t>(t.normalizer))
      .add(t.embed_dim)
      .add(t.hidden_dim)
      .add(static_cast<std::uint64_t>(t.vocab_min_count));
  return hex64(key.value());
}

json row_to_json(const ResultRow& r) {
  return {{"sample_size", r.sample_size}, {"num_categories", r.num_categories},
          {"mode", r.mode},               {"method", r.method},
          {"repetitions", r.repetitions}, {"seed", r.seed},
          {"accuracies", r.accuracies}};
}

void summarize(ResultRow& r) {
  const double n = static_cast<double>(r.accuracies.size());
  r.repetitions = static_cast<int>(r.accuracies.size());
  r.mean_accuracy = std::accumulate(r.accuracies.begin(), r.accuracies.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : r.accuracies) ss += (a - r.mean_accuracy) * (a - r.mean_accuracy);
  r.std_dev = r.accuracies.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
}

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

ResultTable run_experiment(const LabeledCorpus& corpus, const AugmentationStore& augmentations,
                           const ExperimentConfig& config) {
  config.validate();
  corpus.validate();
  ResultTable table;
  const std::uint64_t corpus_fp = config.cache_dir ? corpus_fingerprint(corpus) : 0;

  struct CellData {
    std::vector<Split> splits;  // one per repetition
  };
  std::vector<CellData> cells;
  std::vector<std::size_t> row_cell;
  std::vector<RowPlan> plans;

  for (std::size_t n : config.sample_sizes) {
    for (std::size_t c : config.num_categories) {
      std::string reason;
      if (c > corpus.num_categories()) {
        reason = "corpus has only " + std::to_string(corpus.num_categories()) + " categories";
      } else if (n < c) {
        reason = "sample size smaller than the number of categories";
      }
      LabeledCorpus selected;
      if (reason.empty()) {
        selected = select_categories(corpus, c);
        if (selected.size() < n) {
          reason = "only " + std::to_string(selected.size()) + " observations in the top " +
                   std::to_string(c) + " categories";
        }
      }
      if (!reason.empty()) {
        table.skipped.push_back({n, c, "*", reason});
        continue;
      }

      CellData cell;
      const std::uint64_t split_seed =
          SeedKey(config.master_seed).add("split").add(n).add(c).value();
      for (int rep = 0; rep < config.repetitions; ++rep) {
        Rng sample_rng(SeedKey(config.master_seed)
                           .add("sample")
                           .add(n)
                           .add(c)
                           .add(static_cast<std::uint64_t>(rep))
                           .value());
        auto sample = stratified_sample(selected, n, sample_rng);
        SplitSpec spec{config.train_fraction, n, c, split_seed};
        cell.splits.push_back(split(sample, spec, static_cast<std::uint64_t>(rep)));
      }
      const std::size_t cell_index = cells.size();
      cells.push_back(std::move(cell));

      const auto add_row = [&](TrainMode mode, const std::string& method) {
        RowPlan p;
        p.mode = mode;
        p.row.sample_size = n;
        p.row.num_categories = c;
        p.row.mode = std::string(to_string(mode));
        p.row.method = method;
        p.row.seed = config.master_seed;
        if (mode != TrainMode::Baseline) {
          p.plan = method_plan(method);
          for (const auto& source : method_sources(method)) {
            auto it = augmentations.find(source);
            if (it == augmentations.end()) {
              table.skipped.push_back({n, c, method, "no augmentation records for '" + source + "'"});
              return;
            }
            p.records.insert(p.records.end(), it->second.begin(), it->second.end());
          }
        }
        if (config.cache_dir) p.cache_key = row_cache_key(corpus_fp, p, config);
        plans.push_back(std::move(p));
        row_cell.push_back(cell_index);
      };

      for (TrainMode mode : config.modes) {
        if (mode == TrainMode::Baseline) {
          add_row(mode, std::string(kBaselineMethod));
        } else {
          for (const auto& method : config.methods) add_row(mode, method);
        }
      }
    }
  }

  if (config.cache_dir) {
    std::filesystem::create_directories(*config.cache_dir);
    for (auto& p : plans) {
      auto path = *config.cache_dir / (p.cache_key + ".json");
      if (!std::filesystem::exists(path)) continue;
      std::ifstream in(path, std::ios::binary);
      json j = json::parse(in, nullptr, false);
      if (j.is_discarded() || !j.contains("accuracies")) continue;
      p.row.accuracies = j.at("accuracies").get<std::vector<double>>();
      if (static_cast<int>(p.row.accuracies.size()) != config.repetitions) continue;
      p.cached = true;
    }
  }

  std::vector<Job> jobs;
  for (std::size_t r = 0; r < plans.size(); ++r) {
    if (plans[r].cached) continue;
    plans[r].row.accuracies.assign(static_cast<std::size_t>(config.repetitions), 0.0);
    for (int rep = 0; rep < config.repetitions; ++rep) jobs.push_back({r, rep});
  }

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  const auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= jobs.size()) return;
      const Job job = jobs[k];
      auto& p = plans[job.row];
      try {
        const Split& s = cells[row_cell[job.row]].splits[static_cast<std::size_t>(job.rep)];
        LabeledCorpus train_side = p.mode == TrainMode::Baseline
                                       ? strip_augmentations(s.train)
                                       : attach_augmentations(s.train, p.records, p.plan).corpus;
        TrainConfig tc = config.trainer;
        tc.mode = p.mode;
        tc.seed = SeedKey(config.master_seed)
                      .add("train")
                      .add(p.row.sample_size)
                      .add(p.row.num_categories)
                      .add(p.row.method == kBaselineMethod ? std::string("baseline") : p.row.method)
                      .add(static_cast<std::uint64_t>(job.rep))
                      .value();
        Vocab vocab = build_training_vocab(train_side, p.mode, tc.vocab_min_count);
        TrainedModel model = train(train_side, vocab, tc);
        p.row.accuracies[static_cast<std::size_t>(job.rep)] = evaluate(model, s.test);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(jobs.size())));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);

  for (auto& p : plans) {
    summarize(p.row);
    if (config.cache_dir && !p.cached) {
      write_atomic(*config.cache_dir / (p.cache_key + ".json"), row_to_json(p.row).dump() + "\n");
    }
    table.rows.push_back(std::move(p.row));
  }
  std::stable_sort(table.rows.begin(), table.rows.end(), row_less);
  return table;
}

// ---------------------------------------------------------------------------
// results.csv

namespace {

constexpr std::string_view kResultsHeader =
    "sample_size,num_categories,mode,method,mean_accuracy,std_dev,repetitions,seed";

std::string results_csv(const ResultTable& table) {
  std::vector<ResultRow> rows = table.rows;
  std::stable_sort(rows.begin(), rows.end(), row_less);
  std::string out(kResultsHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.sample_size) + ',' + std::to_string(r.num_categories) + ',' + r.mode +
           ',' + r.method + ',' + fixed(r.mean_accuracy, 6) + ',' + fixed(r.std_dev, 6) + ',' +
           std::to_string(r.repetitions) + ',' + std::to_string(r.seed) + '\n';
  }
  return out;
}

}  // namespace

void write_results_csv(const std::filesystem::path& path, const ResultTable& table) {
  write_atomic(path, results_csv(table));
}

ResultTable parse_results_csv(std::string_view contents) {
  ResultTable table;
  std::istringstream in{std::string(contents)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != kResultsHeader) throw std::runtime_error("unexpected results.csv header");
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 8) {
      throw std::runtime_error("results.csv line " + std::to_string(line_no) + ": expected 8 fields");
    }
    try {
      ResultRow r;
      r.sample_size = std::stoul(f[0]);
      r.num_categories = std::stoul(f[1]);
      r.mode = f[2];
      r.method = f[3];
      r.mean_accuracy = std::stod(f[4]);
      r.std_dev = std::stod(f[5]);
      r.repetitions = std::stoi(f[6]);
      r.seed = std::stoull(f[7]);
      table.rows.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw std::runtime_error("results.csv line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return table;
}

ResultTable read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_results_csv(buf.str());
}

// ---------------------------------------------------------------------------
// Tables and charts

namespace {

struct Column {
  std::string mode;
  std::string method;
  std::string title;
};

std::string method_title(std::string_view method) {
  if (method == "eda") return "EDA";
  if (method == "bt_a") return "BT-A";
  if (method == "bt_b") return "BT-B";
  if (method == "combined") return "Combined";
  return std::string(method);
}

std::string mode_title(std::string_view mode) {
  if (mode == "baseline") return "Baseline";
  if (mode == "standard") return "Standard";
  if (mode == "bagg") return "BAGG";
  return std::string(mode);
}

std::vector<Column> table_columns(const ResultTable& table) {
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<ResultRow> keys;
  for (const auto& r : table.rows) {
    if (seen.emplace(r.mode, r.method).second) {
      ResultRow key;
      key.mode = r.mode;
      key.method = r.method;
      keys.push_back(std::move(key));
    }
  }
  std::stable_sort(keys.begin(), keys.end(), row_less);
  std::vector<Column> cols;
  for (const auto& k : keys) {
    std::string title = mode_title(k.mode);
    if (k.method != kBaselineMethod) title += " " + method_title(k.method);
    cols.push_back({k.mode, k.method, title});
  }
  return cols;
}

std::vector<std::pair<std::size_t, std::size_t>> table_cells(const ResultTable& table) {
  std::set<std::pair<std::size_t, std::size_t>> cells;
  for (const auto& r : table.rows) cells.emplace(r.sample_size, r.num_categories);
  return {cells.begin(), cells.end()};
}

std::string percent(double fraction) { return fixed(fraction * 100.0, 2) + "%"; }

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string format_table(const ResultTable& table, TableFormat format) {
  if (format == TableFormat::Csv) return results_csv(table);
  const auto cols = table_columns(table);
  std::string out = "| Sample Size | Categories |";
  for (const auto& c : cols) out += " " + c.title + " |";
  out += "\n|---:|---:|";
  for (std::size_t i = 0; i < cols.size(); ++i) out += "---:|";
  out += '\n';
  for (const auto& [n, k] : table_cells(table)) {
    out += "| " + std::to_string(n) + " | " + std::to_string(k) + " |";
    for (const auto& c : cols) {
      const ResultRow* r = table.find(n, k, c.mode, c.method);
      out += " " + (r ? percent(r->mean_accuracy) : std::string("—")) + " |";
    }
    out += '\n';
  }
  return out;
}

std::string render_chart(const ResultTable& table) {
  const auto cols = table_columns(table);
  const auto cells = table_cells(table);
  constexpr double left = 70.0, right = 180.0, bar = 16.0, bar_gap = 4.0, group_gap = 36.0;
  constexpr double top = ChartGeometry::kPlotTop, plot_h = ChartGeometry::kPlotHeight;
  const double group_w = static_cast<double>(cols.size()) * (bar + bar_gap) - bar_gap;
  const double plot_w =
      std::max(1.0, static_cast<double>(cells.size()) * (group_w + group_gap) + group_gap);
  const double width = left + plot_w + right;
  const double height = top + plot_h + 60.0;
  static const char* palette[] = {"#7f7f7f", "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22"};

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width, 1) << "\" height=\""
      << fixed(height, 1) << "\" viewBox=\"0 0 " << fixed(width, 1) << ' ' << fixed(height, 1)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "  <rect x=\"0\" y=\"0\" width=\"" << fixed(width, 1) << "\" height=\"" << fixed(height, 1)
      << "\" fill=\"white\"/>\n"
      << "  <text x=\"" << fixed(left, 1) << "\" y=\"20\" font-size=\"14\">Average accuracy</text>\n";
  for (int tick = 0; tick <= 100; tick += 20) {
    const double y = top + plot_h * (1.0 - tick / 100.0);
    svg << "  <line class=\"grid\" x1=\"" << fixed(left, 1) << "\" y1=\"" << fixed(y, 3) << "\" x2=\""
        << fixed(left + plot_w, 1) << "\" y2=\"" << fixed(y, 3) << "\" stroke=\"#dddddd\"/>\n"
        << "  <text x=\"" << fixed(left - 6, 1) << "\" y=\"" << fixed(y + 4, 3)
        << "\" text-anchor=\"end\">" << tick << "%</text>\n";
  }
  svg << "  <line x1=\"" << fixed(left, 1) << "\" y1=\"" << fixed(top, 1) << "\" x2=\"" << fixed(left, 1)
      << "\" y2=\"" << fixed(top + plot_h, 1) << "\" stroke=\"black\"/>\n";

  for (std::size_t g = 0; g < cells.size(); ++g) {
    const auto [n, k] = cells[g];
    const double gx = left + group_gap + static_cast<double>(g) * (group_w + group_gap);
    for (std::size_t i = 0; i < cols.size(); ++i) {
      const ResultRow* r = table.find(n, k, cols[i].mode, cols[i].method);
      if (!r) continue;
      const double h = plot_h * std::clamp(r->mean_accuracy, 0.0, 1.0);
      const double x = gx + static_cast<double>(i) * (bar + bar_gap);
      svg << "  <rect class=\"bar\" x=\"" << fixed(x, 3) << "\" y=\"" << fixed(top + plot_h - h, 3)
          << "\" width=\"" << fixed(bar, 1) << "\" height=\"" << fixed(h, 3) << "\" fill=\""
          << palette[i % std::size(palette)] << "\" data-mode=\"" << xml_escape(r->mode)
          << "\" data-method=\"" << xml_escape(r->method) << "\" data-accuracy=\""
          << fixed(r->mean_accuracy, 6) << "\"><title>" << xml_escape(cols[i].title) << ": "
          << percent(r->mean_accuracy) << "</title></rect>\n";
    }
    svg << "  <text x=\"" << fixed(gx + group_w / 2, 3) << "\" y=\"" << fixed(top + plot_h + 18, 1)
        << "\" text-anchor=\"middle\">n=" << n << ", C=" << k << "</text>\n";
  }
  svg << "  <line x1=\"" << fixed(left, 1) << "\" y1=\"" << fixed(top + plot_h, 1) << "\" x2=\""
      << fixed(left + plot_w, 1) << "\" y2=\"" << fixed(top + plot_h, 1) << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const double y = top + 14.0 * static_cast<double>(i);
    svg << "  <rect x=\"" << fixed(left + plot_w + 12, 1) << "\" y=\"" << fixed(y, 1)
        << "\" width=\"10\" height=\"10\" fill=\"" << palette[i % std::size(palette)] << "\"/>\n"
        << "  <text x=\"" << fixed(left + plot_w + 26, 1) << "\" y=\"" << fixed(y + 9, 1) << "\">"
        << xml_escape(cols[i].title) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

// ---------------------------------------------------------------------------
// Correlation

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("pearson needs paired samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
  };
  if (sxx == 0.0 || syy == 0.0 || constant(x) || constant(y)) return std::numeric_limits<double>::quiet_NaN();
  return std::clamp(sxy / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

namespace {

double upper_normal_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double fisher_z(double r) {
  const double bound = 1.0 - 1e-15;
  return std::atanh(std::clamp(r, -bound, bound));
}

}  // namespace

CorrelationReport correlation_from_losses(const std::vector<std::vector<double>>& losses, Rng& rng) {
  CorrelationReport report;
  report.groups = losses.size();
  std::vector<double> wx, wy;
  std::size_t texts = 0;
  for (const auto& g : losses) {
    texts += g.size();
    for (std::size_t a = 0; a < g.size(); ++a) {
      for (std::size_t b = a + 1; b < g.size(); ++b) {
        wx.push_back(g[a]);
        wy.push_back(g[b]);
      }
    }
  }
  report.texts_per_group = losses.empty() ? 0.0 : static_cast<double>(texts) / static_cast<double>(losses.size());
  report.within_pairs = wx.size();

  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (!losses[i].empty()) usable.push_back(i);
  }
  std::vector<double> cx, cy;
  if (usable.size() >= 2) {
    for (std::size_t k = 0; k < wx.size(); ++k) {
      const std::size_t ai = rng.uniform_index(usable.size());
      std::size_t bi = rng.uniform_index(usable.size() - 1);
      if (bi >= ai) ++bi;
      const std::size_t a = usable[ai], b = usable[bi];
      cx.push_back(losses[a][rng.uniform_index(losses[a].size())]);
      cy.push_back(losses[b][rng.uniform_index(losses[b].size())]);
    }
  }
  report.cross_pairs = cx.size();
  if (wx.size() < 4 || cx.size() < 4) {
    throw std::invalid_argument("too few loss pairs for a correlation estimate");
  }
  report.within_group_corr = pearson(wx, wy);
  report.cross_group_corr = pearson(cx, cy);
  if (std::isnan(report.within_group_corr) || std::isnan(report.cross_group_corr)) {
    report.degenerate = true;
    report.within_p_value = report.difference_p_value = std::numeric_limits<double>::quiet_NaN();
    return report;
  }
  const double nw = static_cast<double>(wx.size()), nc = static_cast<double>(cx.size());
  const double zw = fisher_z(report.within_group_corr), zc = fisher_z(report.cross_group_corr);
  report.within_p_value = upper_normal_tail(zw * std::sqrt(nw - 3.0));
  report.difference_p_value = upper_normal_tail((zw - zc) / std::sqrt(1.0 / (nw - 3.0) + 1.0 / (nc - 3.0)));
  return report;
}

CorrelationReport correlation_study(std::span<const EncodedObservation> groups,
                                    const ModelParams& params, Rng& rng) {
  std::size_t eligible = 0;
  std::vector<std::vector<double>> losses;
  for (const auto& g : groups) {
    if (g.texts.size() >= 3) ++eligible;
    losses.push_back(text_losses(g, params));
  }
  if (eligible < 50) {
    throw std::invalid_argument("correlation study needs at least 50 groups of size >= 3");
  }
  return correlation_from_losses(losses, rng);
}

// ---------------------------------------------------------------------------
// Synthetic corpora

SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& cfg, Rng& rng) {
  if (cfg.classes < 2) throw std::invalid_argument("synthetic corpus needs at least 2 classes");
  if (cfg.keywords_per_class == 0 || cfg.filler_vocabulary == 0 || cfg.min_signature > cfg.max_signature ||
      cfg.min_noise > cfg.max_noise) {
    throw std::invalid_argument("invalid synthetic corpus shape");
  }
  SyntheticCorpus out;
  // forms[c][k] = {keyword, synonym1, synonym2, ...}
  std::vector<std::vector<std::vector<std::string>>> forms(cfg.classes);
  std::vector<std::string> all_forms_by_class_flat;
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    for (std::size_t k = 0; k < cfg.keywords_per_class; ++k) {
      std::vector<std::string> f;
      const std::string base = "c" + std::to_string(c) + "k" + std::to_string(k);
      f.push_back(base);
      for (std::size_t s = 0; s < cfg.synonyms_per_keyword; ++s) f.push_back(base + "s" + std::to_string(s));
      for (const auto& w : f) {
        out.signature_class[w] = static_cast<int>(c);
        std::vector<std::string> others;
        for (const auto& o : f) {
          if (o != w) others.push_back(o);
        }
        out.thesaurus.add(w, others);
      }
      forms[c].push_back(std::move(f));
    }
    out.corpus.categories.push_back("class" + std::to_string(c));
  }
  std::vector<std::string> filler;
  for (std::size_t i = 0; i < cfg.filler_vocabulary; ++i) filler.push_back("w" + std::to_string(i));

  const auto signature_word = [&](std::size_t c) {
    const auto& f = forms[c][rng.uniform_index(forms[c].size())];
    if (f.size() > 1 && rng.bernoulli(cfg.synonym_rate)) return f[1 + rng.uniform_index(f.size() - 1)];
    return f[0];
  };
  const auto in_range = [&](std::size_t lo, std::size_t hi) { return lo + rng.uniform_index(hi - lo + 1); };

  std::vector<int> labels(cfg.size);
  for (std::size_t i = 0; i < cfg.size; ++i) labels[i] = static_cast<int>(i % cfg.classes);
  rng.shuffle(labels);

  char id[32];
  for (std::size_t i = 0; i < cfg.size; ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    std::vector<std::string> words;
    const std::size_t slots = in_range(cfg.min_signature, cfg.max_signature);
    for (std::size_t s = 0; s < slots; ++s) {
      if (!rng.bernoulli(cfg.dropout)) words.push_back(signature_word(c));
    }
    const std::size_t noise = in_range(cfg.min_noise, cfg.max_noise);
    for (std::size_t s = 0; s < noise; ++s) {
      if (rng.bernoulli(cfg.noise_level)) {
        std::size_t other = rng.uniform_index(cfg.classes - 1);
        if (other >= c) ++other;
        words.push_back(signature_word(other));
      } else {
        words.push_back(filler[rng.uniform_index(filler.size())]);
      }
    }
    rng.shuffle(words);
    std::snprintf(id, sizeof id, "syn%06zu", i);
    out.corpus.observations.push_back(Observation{id, detokenize(words), {}, labels[i]});
  }
  out.corpus.provenance.push_back("synthetic classes=" + std::to_string(cfg.classes) +
                                  " size=" + std::to_string(cfg.size));
  return out;
}

std::vector<AugRecord> augment_corpus(const LabeledCorpus& corpus, const AugmentationPlan& plan,
                                      const AugmentDeps& deps, std::vector<std::string>* warnings) {
  std::vector<AugRecord> records;
  for (const auto& o : corpus.observations) {
    auto result = augment_text(o.id, o.original, plan, deps);
    records.insert(records.end(), std::make_move_iterator(result.records.begin()),
                   std::make_move_iterator(result.records.end()));
    if (warnings) warnings->insert(warnings->end(), result.warnings.begin(), result.warnings.end());
  }
  return records;
}

}  // namespace bagg
