#include "bagg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <httplib.h>
#include <json.hpp>

namespace bagg {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Thesaurus

void Thesaurus::add(const std::string& word, const std::vector<std::string>& synonyms) {
  auto& list = entries_[word];
  for (const auto& s : synonyms) {
    if (s.empty() || s == word) continue;
    if (std::find(list.begin(), list.end(), s) == list.end()) list.push_back(s);
  }
  if (list.empty()) entries_.erase(word);
}

const std::vector<std::string>* Thesaurus::find(const std::string& word) const {
  auto it = entries_.find(word);
  return it == entries_.end() ? nullptr : &it->second;
}

Thesaurus parse_thesaurus(std::string_view contents) {
  Thesaurus th;
  std::istringstream in{std::string(contents)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw std::runtime_error("thesaurus line " + std::to_string(line_no) +
                               ": expected word<TAB>synonyms");
    }
    std::vector<std::string> synonyms;
    std::string rest = line.substr(tab + 1);
    std::size_t start = 0;
    while (start <= rest.size()) {
      auto comma = rest.find(',', start);
      if (comma == std::string::npos) comma = rest.size();
      auto item = rest.substr(start, comma - start);
      auto b = item.find_first_not_of(' ');
      auto e = item.find_last_not_of(' ');
      if (b != std::string::npos) synonyms.push_back(item.substr(b, e - b + 1));
      start = comma + 1;
    }
    th.add(line.substr(0, tab), synonyms);
  }
  return th;
}

Thesaurus load_thesaurus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open thesaurus: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_thesaurus(buf.str());
}

// ---------------------------------------------------------------------------
// EDA

TokenSeq synonym_replace(const TokenSeq& seq, std::size_t n, const Thesaurus& thesaurus,
                         const WordSet& stopwords, Rng& rng) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (!stopwords.contains(seq[i]) && thesaurus.has_entry(seq[i])) eligible.push_back(i);
  }
  TokenSeq out = seq;
  std::size_t k = std::min(n, eligible.size());
  // Partial Fisher-Yates: the first k slots become a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
    const auto& synonyms = *thesaurus.find(seq[eligible[i]]);
    out[eligible[i]] = synonyms[rng.uniform_index(synonyms.size())];
  }
  return out;
}

TokenSeq random_insert(const TokenSeq& seq, std::size_t n, const Thesaurus& thesaurus, Rng& rng,
                       std::size_t* inserted) {
  TokenSeq out = seq;
  std::size_t done = 0;
  if (!out.empty()) {
    for (std::size_t round = 0; round < n; ++round) {
      std::vector<std::size_t> eligible;
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (thesaurus.has_entry(out[i])) eligible.push_back(i);
      }
      if (eligible.empty()) break;
      const auto& source = out[eligible[rng.uniform_index(eligible.size())]];
      const auto& synonyms = *thesaurus.find(source);
      std::string word = synonyms[rng.uniform_index(synonyms.size())];
      auto pos = static_cast<std::ptrdiff_t>(rng.uniform_index(out.size() + 1));
      out.insert(out.begin() + pos, std::move(word));
      ++done;
    }
  }
  if (inserted) *inserted = done;
  return out;
}

TokenSeq random_swap(const TokenSeq& seq, std::size_t n, Rng& rng) {
  TokenSeq out = seq;
  if (out.size() < 2) return out;
  for (std::size_t round = 0; round < n; ++round) {
    std::size_t a = rng.uniform_index(out.size());
    std::size_t b = rng.uniform_index(out.size() - 1);
    if (b >= a) ++b;
    std::swap(out[a], out[b]);
  }
  return out;
}

TokenSeq random_delete(const TokenSeq& seq, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("deletion probability must be in [0,1)");
  TokenSeq out;
  for (const auto& t : seq) {
    if (!rng.bernoulli(p)) out.push_back(t);
  }
  if (out.empty() && !seq.empty()) out.push_back(seq[rng.uniform_index(seq.size())]);
  return out;
}

std::string eda_variant(std::string_view text, int variant_index, double alpha,
                        const Thesaurus& thesaurus, const WordSet& stopwords, Rng& rng) {
  if (variant_index < 0 || variant_index > 3) {
    throw std::invalid_argument("EDA variant index must be 0..3");
  }
  TokenSeq tokens = tokenize(text);
  if (tokens.empty()) return std::string(text);
  auto n = static_cast<std::size_t>(
      std::max<long>(1, std::lround(alpha * static_cast<double>(tokens.size()))));
  TokenSeq out;
  switch (variant_index) {
    case 0: out = synonym_replace(tokens, n, thesaurus, stopwords, rng); break;
    case 1: out = random_insert(tokens, n, thesaurus, rng); break;
    case 2: out = random_swap(tokens, n, rng); break;
    default: out = random_delete(tokens, alpha, rng); break;
  }
  return detokenize(out);
}

// ---------------------------------------------------------------------------
// Translators

namespace {

std::vector<std::string> split_spaces(const std::string& text) {
  std::vector<std::string> parts;
  std::istringstream in(text);
  std::string w;
  while (in >> w) parts.push_back(w);
  return parts;
}

}  // namespace

std::string MockTranslator::translate(const std::string& text, const std::string& source,
                                      const std::string& target) {
  if (source == target) return text;
  if (source == "en") return "[" + target + "] " + text;
  std::string body = text;
  const std::string tag = "[" + source + "] ";
  if (body.rfind(tag, 0) == 0) body.erase(0, tag.size());
  auto tokens = split_spaces(body);
  if (tokens.size() < 2) return detokenize(tokens);
  auto offset = 1 + SeedKey(0).add(body).add(source).value() % (tokens.size() - 1);
  std::rotate(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(offset), tokens.end());
  return detokenize(tokens);
}

HttpTranslator::HttpTranslator(HttpTranslatorOptions options) : options_(std::move(options)) {
  const auto& url = options_.endpoint;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("translation endpoint must be an absolute URL: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

std::string HttpTranslator::translate(const std::string& text, const std::string& source,
                                      const std::string& target) {
  httplib::Client client(scheme_host_port_);
  auto seconds = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  auto micros = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());

  json body = {{"text", text}, {"source", source}, {"target", target}};
  auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) {
    throw TransportError("translation request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw TransportError("translation endpoint returned HTTP " + std::to_string(res->status));
  }
  try {
    return json::parse(res->body).at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed translation response: ") + e.what());
  }
}

BackTranslationError::BackTranslationError(std::string route, std::string origin_id,
                                           const std::string& cause)
    : std::runtime_error("back-translation via '" + route + "' failed for '" + origin_id +
                         "': " + cause),
      route_(std::move(route)),
      origin_id_(std::move(origin_id)) {}

std::string back_translate(const std::string& text, const std::string& route, Translator& client,
                           int retries, const std::string& origin_id) {
  std::string last_error;
  for (int attempt = 0; attempt <= retries; ++attempt) {
    try {
      return client.translate(client.translate(text, "en", route), route, "en");
    } catch (const TransportError& e) {
      last_error = e.what();
    }
  }
  throw BackTranslationError(route, origin_id, last_error);
}

// ---------------------------------------------------------------------------
// Plans

AugMethod AugMethod::eda(std::string name, double alpha) {
  AugMethod m;
  m.kind = Kind::Eda;
  m.name = std::move(name);
  m.eda_alpha = alpha;
  return m;
}

AugMethod AugMethod::back_translate(std::string name, std::vector<std::string> routes) {
  AugMethod m;
  m.kind = Kind::BackTranslate;
  m.name = std::move(name);
  m.routes = std::move(routes);
  return m;
}

void AugMethod::validate() const {
  if (name.empty()) throw std::invalid_argument("augmentation method needs a name");
  if (kind == Kind::Eda && !(eda_alpha > 0.0 && eda_alpha < 1.0)) {
    throw std::invalid_argument("EDA alpha must lie in (0,1)");
  }
  if (kind == Kind::BackTranslate && routes.empty()) {
    throw std::invalid_argument("back-translation needs at least one route");
  }
}

void AugmentationPlan::validate() const {
  std::set<std::string> names;
  for (const auto& e : methods) {
    e.method.validate();
    if (e.count < 1) throw std::invalid_argument("augmentation count must be >= 1");
    if (!names.insert(e.method.name).second) {
      throw std::invalid_argument("duplicate method in plan: " + e.method.name);
    }
  }
}

std::size_t AugmentationPlan::group_size() const {
  std::size_t n = 1;
  for (const auto& e : methods) n += static_cast<std::size_t>(e.count);
  return n;
}

Rng variant_rng(std::uint64_t master_seed, const std::string& origin_id, const std::string& method,
                int variant_index) {
  return Rng(SeedKey(master_seed)
                 .add(origin_id)
                 .add(method)
                 .add(static_cast<std::uint64_t>(variant_index))
                 .value());
}

AugmentationResult augment_text(const std::string& origin_id, const std::string& text,
                                const AugmentationPlan& plan, const AugmentDeps& deps) {
  plan.validate();
  static const Thesaurus kNoThesaurus;
  static const WordSet kNoStopwords;
  const Thesaurus& thesaurus = deps.thesaurus ? *deps.thesaurus : kNoThesaurus;
  const WordSet& stopwords = deps.stopwords ? *deps.stopwords : kNoStopwords;

  AugmentationResult result;
  for (const auto& entry : plan.methods) {
    const auto& method = entry.method;
    Translator* client = nullptr;
    if (method.kind == AugMethod::Kind::BackTranslate) {
      auto it = deps.translators.find(method.name);
      if (it == deps.translators.end() || it->second == nullptr) {
        throw std::invalid_argument("no translator configured for method " + method.name);
      }
      client = it->second;
    }
    for (int v = 0; v < entry.count; ++v) {
      std::string variant;
      if (method.kind == AugMethod::Kind::Eda) {
        Rng rng = variant_rng(deps.master_seed, origin_id, method.name, v);
        variant = eda_variant(text, v % 4, method.eda_alpha, thesaurus, stopwords, rng);
      } else {
        const auto& route = method.routes[static_cast<std::size_t>(v) % method.routes.size()];
        try {
          variant = back_translate(text, route, *client, deps.retries, origin_id);
        } catch (const BackTranslationError& e) {
          result.warnings.push_back(std::string(e.what()) + "; variant " + std::to_string(v) +
                                    " skipped");
          continue;
        }
        if (tokenize(variant).empty()) {
          result.warnings.push_back("empty back-translation via '" + route + "' for '" +
                                    origin_id + "'; variant " + std::to_string(v) + " skipped");
          continue;
        }
      }
      result.augmented.push_back({method.name, variant});
      result.records.push_back({origin_id, method.name, v, std::move(variant)});
    }
  }
  return result;
}

Observation augment_observation(const std::string& id, const std::string& text, int label,
                                const AugmentationPlan& plan, const AugmentDeps& deps,
                                std::vector<AugRecord>* records,
                                std::vector<std::string>* warnings) {
  auto result = augment_text(id, text, plan, deps);
  if (records) records->insert(records->end(), result.records.begin(), result.records.end());
  if (warnings) warnings->insert(warnings->end(), result.warnings.begin(), result.warnings.end());
  return Observation{id, text, std::move(result.augmented), label};
}

// ---------------------------------------------------------------------------
// Cache

std::string aug_record_to_json(const AugRecord& r) {
  json j = {{"origin_id", r.origin_id},
            {"method", r.method},
            {"variant_index", r.variant_index},
            {"text", r.text}};
  return j.dump();
}

AugRecord aug_record_from_json(std::string_view line) {
  json j = json::parse(line);
  AugRecord r;
  r.origin_id = j.at("origin_id").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.variant_index = j.at("variant_index").get<int>();
  r.text = j.at("text").get<std::string>();
  if (r.variant_index < 0) throw std::invalid_argument("negative variant_index");
  return r;
}

std::vector<AugRecord> read_aug_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open augmentation cache: " + path.string());
  std::vector<AugRecord> records;
  std::set<std::tuple<std::string, std::string, int>> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    AugRecord r;
    try {
      r = aug_record_from_json(line);
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.emplace(r.origin_id, r.method, r.variant_index).second) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": duplicate record for " + r.origin_id + "/" + r.method + "/" +
                               std::to_string(r.variant_index));
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_aug_cache(const std::filesystem::path& path, const std::vector<AugRecord>& records) {
  std::set<std::tuple<std::string, std::string, int>> seen;
  for (const auto& r : records) {
    if (!seen.emplace(r.origin_id, r.method, r.variant_index).second) {
      throw std::invalid_argument("duplicate augmentation record for " + r.origin_id + "/" +
                                  r.method + "/" + std::to_string(r.variant_index));
    }
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    for (const auto& r : records) out << aug_record_to_json(r) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace bagg
