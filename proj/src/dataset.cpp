#include "bagg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace bagg {

using json = nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

class CorpusBuilder {
 public:
  explicit CorpusBuilder(std::string source) { corpus_.provenance.push_back(std::move(source)); }

  void add(std::string id, std::string text, const std::string& label, const std::string& where) {
    if (!ids_.insert(id).second) throw DataError(where + ": duplicate id '" + id + "'");
    auto [it, fresh] = labels_.try_emplace(label, static_cast<int>(corpus_.categories.size()));
    if (fresh) corpus_.categories.push_back(label);
    corpus_.observations.push_back(Observation{std::move(id), std::move(text), {}, it->second});
  }

  LabeledCorpus finish() { return std::move(corpus_); }

 private:
  LabeledCorpus corpus_;
  std::set<std::string> ids_;
  std::unordered_map<std::string, int> labels_;
};

// Orders category indices by descending size, then by name.
std::vector<std::size_t> by_size_then_name(const LabeledCorpus& corpus) {
  auto counts = corpus.category_counts();
  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (counts[a] != counts[b]) return counts[a] > counts[b];
    return corpus.categories[a] < corpus.categories[b];
  });
  return order;
}

std::vector<std::vector<std::size_t>> members_by_category(const LabeledCorpus& corpus) {
  std::vector<std::vector<std::size_t>> members(corpus.num_categories());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    members[static_cast<std::size_t>(corpus.observations[i].label)].push_back(i);
  }
  return members;
}

LabeledCorpus subset(const LabeledCorpus& corpus, std::vector<std::size_t> indices,
                     std::string step) {
  std::sort(indices.begin(), indices.end());
  LabeledCorpus out;
  out.categories = corpus.categories;
  out.provenance = corpus.provenance;
  out.provenance.push_back(std::move(step));
  out.observations.reserve(indices.size());
  for (auto i : indices) out.observations.push_back(corpus.observations[i]);
  return out;
}

}  // namespace

std::vector<std::size_t> LabeledCorpus::category_counts() const {
  std::vector<std::size_t> counts(categories.size(), 0);
  for (const auto& o : observations) ++counts.at(static_cast<std::size_t>(o.label));
  return counts;
}

void LabeledCorpus::validate() const {
  std::set<std::string> names(categories.begin(), categories.end());
  if (names.size() != categories.size()) throw std::invalid_argument("duplicate category names");
  for (const auto& o : observations) {
    if (o.label < 0 || static_cast<std::size_t>(o.label) >= categories.size()) {
      throw std::invalid_argument("label out of range for observation " + o.id);
    }
  }
}

LabeledCorpus parse_jsonl(std::string_view contents, const std::string& source) {
  CorpusBuilder builder(source);
  std::istringstream in{std::string(contents)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
      if (!j.is_object()) throw DataError("expected a JSON object");
      builder.add(j.at("id").get<std::string>(), j.at("text").get<std::string>(),
                  j.at("label").get<std::string>(), where);
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    } catch (const DataError& e) {
      if (std::string_view(e.what()).starts_with(where)) throw;
      throw DataError(where + ": " + e.what());
    }
  }
  return builder.finish();
}

LabeledCorpus load_jsonl(const std::filesystem::path& path) {
  return parse_jsonl(read_file(path), path.string());
}

void write_jsonl(const std::filesystem::path& path, const LabeledCorpus& corpus) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& o : corpus.observations) {
    json j = {{"id", o.id},
              {"text", o.original},
              {"label", corpus.categories.at(static_cast<std::size_t>(o.label))}};
    out << j.dump() << '\n';
  }
}

LabeledCorpus parse_csv(std::string_view contents, const std::string& source) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, field_started = false;
  std::vector<int> row_lines;
  int line_no = 1, row_start = 1;
  for (std::size_t i = 0; i < contents.size(); ++i) {
    char c = contents[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < contents.size() && contents[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line_no;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = field_started = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < contents.size() && contents[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      field_started = false;
      rows.push_back(std::move(row));
      row.clear();
      row_lines.push_back(row_start);
      row_start = ++line_no;
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) throw DataError(source + ":" + std::to_string(row_start) + ": unterminated quote");
  if (field_started || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
    row_lines.push_back(row_start);
  }

  CorpusBuilder builder(source);
  if (rows.empty()) return builder.finish();
  const auto& header = rows.front();
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError(source + ": CSV header lacks '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t id_col = column("id"), text_col = column("text"), label_col = column("label");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& fields = rows[r];
    const std::string where = source + ":" + std::to_string(row_lines[r]);
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    builder.add(fields[id_col], fields[text_col], fields[label_col], where);
  }
  return builder.finish();
}

LabeledCorpus load_csv(const std::filesystem::path& path) {
  return parse_csv(read_file(path), path.string());
}

LabeledCorpus select_categories(const LabeledCorpus& corpus, std::size_t k) {
  if (k > corpus.num_categories()) {
    throw DataError("requested " + std::to_string(k) + " categories but corpus has " +
                    std::to_string(corpus.num_categories()));
  }
  auto order = by_size_then_name(corpus);
  std::vector<int> relabel(corpus.num_categories(), -1);
  LabeledCorpus out;
  for (std::size_t rank = 0; rank < k; ++rank) {
    relabel[order[rank]] = static_cast<int>(rank);
    out.categories.push_back(corpus.categories[order[rank]]);
  }
  out.provenance = corpus.provenance;
  out.provenance.push_back("select_categories k=" + std::to_string(k));
  for (const auto& o : corpus.observations) {
    int label = relabel[static_cast<std::size_t>(o.label)];
    if (label < 0) continue;
    Observation copy = o;
    copy.label = label;
    out.observations.push_back(std::move(copy));
  }
  return out;
}

std::vector<std::size_t> stratified_quotas(const LabeledCorpus& corpus, std::size_t n) {
  if (n > corpus.size()) {
    throw DataError("cannot sample " + std::to_string(n) + " of " + std::to_string(corpus.size()) +
                    " observations");
  }
  const auto counts = corpus.category_counts();
  const auto order = by_size_then_name(corpus);
  const std::size_t c = counts.size();
  std::vector<std::size_t> quota(c, 0);
  if (c == 0) return quota;

  for (std::size_t rank = 0; rank < c; ++rank) {
    quota[order[rank]] = n / c + (rank < n % c ? 1 : 0);
  }
  std::size_t deficit = 0;
  for (std::size_t k = 0; k < c; ++k) {
    if (quota[k] > counts[k]) {
      deficit += quota[k] - counts[k];
      quota[k] = counts[k];
    }
  }
  // Hand the deficit out one at a time, largest categories first.
  while (deficit > 0) {
    for (std::size_t rank = 0; rank < c && deficit > 0; ++rank) {
      auto k = order[rank];
      if (quota[k] < counts[k]) {
        ++quota[k];
        --deficit;
      }
    }
  }
  return quota;
}

LabeledCorpus stratified_sample(const LabeledCorpus& corpus, std::size_t n, Rng& rng) {
  auto quota = stratified_quotas(corpus, n);
  auto members = members_by_category(corpus);
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  for (std::size_t k = 0; k < members.size(); ++k) {
    auto& pool = members[k];
    for (std::size_t i = 0; i < quota[k]; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(pool.size() - i));
      std::swap(pool[i], pool[j]);
      chosen.push_back(pool[i]);
    }
  }
  return subset(corpus, std::move(chosen), "stratified_sample n=" + std::to_string(n));
}

void SplitSpec::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must lie in (0,1)");
  }
  if (sample_size < num_categories) {
    throw std::invalid_argument("sample_size must be >= num_categories");
  }
}

Split split(const LabeledCorpus& corpus, const SplitSpec& spec, std::uint64_t rep_index) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must lie in (0,1)");
  }
  if (corpus.empty()) throw DataError("cannot split an empty corpus");
  Rng rng(SeedKey(spec.repetition_seed).add("split").add(rep_index).value());
  auto members = members_by_category(corpus);
  std::vector<std::size_t> train_idx, test_idx;
  Split result;
  for (std::size_t k = 0; k < members.size(); ++k) {
    auto& pool = members[k];
    const std::size_t m = pool.size();
    if (m == 0) continue;
    if (m < 2) {
      result.warnings.push_back("category '" + corpus.categories[k] + "' has " +
                                std::to_string(m) + " member(s); kept in train");
      train_idx.insert(train_idx.end(), pool.begin(), pool.end());
      continue;
    }
    rng.shuffle(pool);
    auto n_test = static_cast<std::size_t>(
        std::lround((1.0 - spec.train_fraction) * static_cast<double>(m)));
    n_test = std::clamp<std::size_t>(n_test, 1, m - 1);
    test_idx.insert(test_idx.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_idx.insert(train_idx.end(), pool.begin() + static_cast<std::ptrdiff_t>(n_test), pool.end());
  }
  const std::string tag = " rep=" + std::to_string(rep_index);
  result.train = subset(corpus, std::move(train_idx), "split:train" + tag);
  result.test = subset(corpus, std::move(test_idx), "split:test" + tag);
  return result;
}

AttachResult attach_augmentations(const LabeledCorpus& corpus, std::span<const AugRecord> cache,
                                  const AugmentationPlan& plan) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < corpus.size(); ++i) index.emplace(corpus.observations[i].id, i);
  std::map<std::string, int> wanted;
  for (const auto& e : plan.methods) wanted.emplace(e.method.name, e.count);

  // (observation, method) -> variant index -> text
  std::map<std::pair<std::size_t, std::string>, std::map<int, const std::string*>> found;
  std::set<std::string> orphans;
  for (const auto& r : cache) {
    auto it = index.find(r.origin_id);
    if (it == index.end()) {
      orphans.insert(r.origin_id);
      continue;
    }
    if (!wanted.contains(r.method)) continue;
    found[{it->second, r.method}][r.variant_index] = &r.text;
  }

  AttachResult result;
  result.corpus = corpus;
  result.corpus.provenance.push_back("attach_augmentations");
  for (const auto& id : orphans) {
    result.warnings.push_back("augmentation records for unknown id '" + id + "' ignored");
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto& obs = result.corpus.observations[i];
    obs.augmented.clear();
    for (const auto& e : plan.methods) {
      auto it = found.find({i, e.method.name});
      if (it == found.end()) continue;
      int taken = 0;
      for (const auto& [variant, text] : it->second) {
        if (taken++ >= e.count) break;
        obs.augmented.push_back({e.method.name, *text});
      }
    }
  }
  return result;
}

LabeledCorpus strip_augmentations(const LabeledCorpus& corpus) {
  LabeledCorpus out = corpus;
  for (auto& o : out.observations) o.augmented.clear();
  return out;
}

}  // namespace bagg
