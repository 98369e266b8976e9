#include "evrag/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <set>
#include <tuple>

#include "evrag/error.hpp"
#include "text_util.hpp"

namespace evrag::evalkit {

namespace {

struct CategoryInfo {
  Category value;
  std::string_view name;
};

constexpr CategoryInfo kCategories[] = {
    {Category::ClassificationsScheduling, "classifications_scheduling"},
    {Category::RegulatoryPolicy, "regulatory_policy"},
    {Category::HealthEffects, "health_effects"},
    {Category::Prevention, "prevention"},
    {Category::TreatmentRecovery, "treatment_recovery"},
};

constexpr std::pair<Criterion, std::string_view> kCriteria[] = {
    {Criterion::FactualAccuracy, "factual_accuracy"},
    {Criterion::CitationQuality, "citation_quality"},
    {Criterion::ContextualCoherence, "contextual_coherence"},
    {Criterion::RegulatoryAppropriateness, "regulatory_appropriateness"},
};

}  // namespace

std::string_view to_string(Category c) {
  for (const auto& info : kCategories) {
    if (info.value == c) return info.name;
  }
  return "unknown";
}

std::string_view to_string(Criterion c) {
  for (const auto& [value, name] : kCriteria) {
    if (value == c) return name;
  }
  return "unknown";
}

Category parse_category(std::string_view s) {
  for (const auto& info : kCategories) {
    if (info.name == s) return info.value;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown category '" + std::string(s) + "'");
}

Criterion parse_criterion(std::string_view s) {
  for (const auto& [value, name] : kCriteria) {
    if (name == s) return value;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown criterion '" + std::string(s) + "'");
}

GroupBy parse_group_by(std::string_view s) {
  if (s == "criterion") return GroupBy::Criterion;
  if (s == "category") return GroupBy::Category;
  if (s == "overall") return GroupBy::Overall;
  throw Error(ErrorCode::InvalidArgument, "unknown grouping '" + std::string(s) + "'");
}

const std::vector<Category>& all_categories() {
  static const std::vector<Category> order = [] {
    std::vector<Category> v;
    for (const auto& info : kCategories) v.push_back(info.value);
    return v;
  }();
  return order;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::string(detail::trim(field)));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(std::string(detail::trim(field)));
  return fields;
}

}  // namespace

std::vector<RatedInteraction> read_ratings_csv(std::istream& in) {
  static const std::vector<std::string> kHeader{"interaction_id", "question_id", "category",
                                                "criterion",      "rater_id",    "score"};
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<RatedInteraction> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (!have_header) {
      if (fields != kHeader) {
        throw Error(ErrorCode::InvalidArgument,
                    "ratings header must be interaction_id,question_id,category,criterion,rater_id,score");
      }
      have_header = true;
      continue;
    }
    if (fields.size() != kHeader.size()) {
      throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + ": expected 6 fields");
    }
    RatedInteraction r;
    r.interaction_id = fields[0];
    r.question_id = fields[1];
    r.rater_id = fields[4];
    try {
      r.category = parse_category(fields[2]);
      r.criterion = parse_criterion(fields[3]);
      std::size_t used = 0;
      r.score = std::stoi(fields[5], &used);
      if (used != fields[5].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception& e) {
      throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (r.score < 1 || r.score > 5) {
      throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + ": score must be 1..5");
    }
    out.push_back(std::move(r));
  }
  if (!have_header) throw Error(ErrorCode::InvalidArgument, "ratings file is empty");
  return out;
}

std::vector<RatedInteraction> read_ratings_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path);
  return read_ratings_csv(in);
}

// ---------------------------------------------------------------------------
// summaries

std::string format_mean_sd(double mean, double sd) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f (%.2f)", mean, sd);
  return buf;
}

SummaryRow summarize_scores(std::string label, const std::vector<int>& scores) {
  if (scores.empty()) throw Error(ErrorCode::EmptyGroup, "no ratings for '" + label + "'");
  SummaryRow row;
  row.label = std::move(label);
  row.n = scores.size();
  row.min = *std::min_element(scores.begin(), scores.end());
  row.max = *std::max_element(scores.begin(), scores.end());
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t k = 0;
  for (int s : scores) {
    ++k;
    const double delta = s - mean;
    mean += delta / static_cast<double>(k);
    m2 += delta * (s - mean);
  }
  row.mean = mean;
  row.sd = row.n > 1 ? std::sqrt(std::max(0.0, m2 / static_cast<double>(row.n - 1))) : 0.0;
  return row;
}

std::vector<SummaryRow> likert_summary(const std::vector<RatedInteraction>& ratings, GroupBy group_by) {
  if (ratings.empty()) throw Error(ErrorCode::EmptyGroup, "no ratings");
  std::map<std::string, std::vector<int>> groups;
  for (const auto& r : ratings) {
    std::string key;
    switch (group_by) {
      case GroupBy::Criterion: key = std::string(to_string(r.criterion)); break;
      case GroupBy::Category: key = std::string(to_string(r.category)); break;
      case GroupBy::Overall: key = "overall"; break;
    }
    groups[key].push_back(r.score);
  }
  std::vector<SummaryRow> rows;
  for (auto& [label, scores] : groups) rows.push_back(summarize_scores(label, scores));
  return rows;
}

std::map<Category, std::string> default_source_tags() {
  return {{Category::ClassificationsScheduling, "local regulatory"},
          {Category::RegulatoryPolicy, "local regulatory"},
          {Category::HealthEffects, "dual-source"},
          {Category::Prevention, "dual-source"},
          {Category::TreatmentRecovery, "literature"}};
}

std::vector<SummaryRow> category_summary(const std::vector<RatedInteraction>& ratings,
                                         const std::map<std::string, Category>& question_categories,
                                         const std::map<Category, std::string>& source_tags) {
  std::map<Category, std::vector<int>> groups;
  for (const auto& r : ratings) {
    auto it = question_categories.find(r.question_id);
    if (it == question_categories.end()) {
      throw Error(ErrorCode::UnmappedQuestion, "question '" + r.question_id + "' has no category");
    }
    groups[it->second].push_back(r.score);
  }
  std::vector<SummaryRow> rows;
  for (auto c : all_categories()) {
    auto it = groups.find(c);
    if (it == groups.end()) continue;
    auto row = summarize_scores(std::string(to_string(c)), it->second);
    if (auto tag = source_tags.find(c); tag != source_tags.end()) row.source = tag->second;
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// kappa

double cohen_kappa_binary(const std::vector<bool>& a, const std::vector<bool>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "rating lists differ in length");
  if (a.empty()) throw Error(ErrorCode::Empty, "no ratings");
  const double n = static_cast<double>(a.size());
  std::size_t agree = 0;
  std::size_t a_yes = 0;
  std::size_t b_yes = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    agree += a[i] == b[i];
    a_yes += a[i];
    b_yes += b[i];
  }
  const double p_o = static_cast<double>(agree) / n;
  const double pa = static_cast<double>(a_yes) / n;
  const double pb = static_cast<double>(b_yes) / n;
  const double p_e = pa * pb + (1.0 - pa) * (1.0 - pb);
  // Both raters used a single, shared category: chance agreement is total.
  if (a_yes == b_yes && (a_yes == 0 || a_yes == a.size())) return p_o == 1.0 ? 1.0 : 0.0;
  return (p_o - p_e) / (1.0 - p_e);
}

double cohen_kappa(const std::vector<int>& a, const std::vector<int>& b, int binarize_at) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "rating lists differ in length");
  if (a.empty()) throw Error(ErrorCode::Empty, "no ratings");
  auto binarize = [binarize_at](const std::vector<int>& v) {
    std::vector<bool> out;
    out.reserve(v.size());
    for (int s : v) {
      if (s < 1 || s > 5) throw Error(ErrorCode::InvalidArgument, "score " + std::to_string(s) + " outside 1..5");
      out.push_back(s >= binarize_at);
    }
    return out;
  };
  return cohen_kappa_binary(binarize(a), binarize(b));
}

KappaInput pair_raters(const std::vector<RatedInteraction>& ratings) {
  std::set<std::string> raters;
  for (const auto& r : ratings) raters.insert(r.rater_id);
  if (raters.size() != 2) {
    throw Error(ErrorCode::InvalidArgument,
                "kappa needs exactly two raters, found " + std::to_string(raters.size()));
  }
  KappaInput in;
  in.rater_a = *raters.begin();
  in.rater_b = *std::next(raters.begin());
  using Key = std::tuple<std::string, std::string, Criterion>;
  std::map<Key, int> first;
  std::map<Key, int> second;
  for (const auto& r : ratings) {
    const Key key{r.interaction_id, r.question_id, r.criterion};
    auto& side = r.rater_id == in.rater_a ? first : second;
    if (!side.emplace(key, r.score).second) {
      throw Error(ErrorCode::InvalidArgument, "rater " + r.rater_id + " rated interaction " + r.interaction_id +
                                                  " / " + std::string(to_string(r.criterion)) + " twice");
    }
  }
  for (const auto& [key, score] : first) {
    auto it = second.find(key);
    if (it == second.end()) {
      ++in.unpaired;
      continue;
    }
    in.a.push_back(score);
    in.b.push_back(it->second);
  }
  for (const auto& [key, score] : second) in.unpaired += !first.contains(key);
  return in;
}

// ---------------------------------------------------------------------------
// dedup

DedupResult dedup_questions(const std::vector<std::string>& questions, const embedding::Embedder& embedder,
                            double threshold) {
  if (questions.empty()) throw Error(ErrorCode::Empty, "no questions");
  if (!(threshold > 0.0 && threshold <= 1.0)) throw Error(ErrorCode::InvalidArgument, "threshold must be in (0, 1]");
  const auto vectors = embedding::embed_texts(questions, embedder);

  DedupResult out;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    std::optional<RemovedPair> best;
    for (std::size_t kept : out.kept_indices) {
      const double sim = embedding::cosine_similarity(vectors[kept], vectors[i]);
      if (sim >= threshold && (!best || sim > best->similarity)) best = RemovedPair{kept, i, sim};
    }
    if (best) {
      out.removed_pairs.push_back(*best);
      continue;
    }
    out.kept_indices.push_back(i);
    out.kept.push_back(questions[i]);
  }
  return out;
}

nlohmann::json to_json(const SummaryRow& row) {
  nlohmann::json j{{"label", row.label}, {"mean", row.mean}, {"sd", row.sd},
                   {"min", row.min},     {"max", row.max},   {"n", row.n},
                   {"formatted", format_mean_sd(row.mean, row.sd)}};
  if (!row.source.empty()) j["source"] = row.source;
  return j;
}

std::string render_table(const std::vector<SummaryRow>& rows) {
  std::size_t label_w = 5;
  bool with_source = false;
  for (const auto& r : rows) {
    label_w = std::max(label_w, r.label.size());
    with_source = with_source || !r.source.empty();
  }
  std::string out;
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%-*s  %-13s  %3s  %3s  %5s%s\n", static_cast<int>(label_w), "label", "mean (sd)",
                "min", "max", "n", with_source ? "  source" : "");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-*s  %-13s  %3d  %3d  %5zu%s%s\n", static_cast<int>(label_w), r.label.c_str(),
                  format_mean_sd(r.mean, r.sd).c_str(), r.min, r.max, r.n, with_source ? "  " : "",
                  r.source.c_str());
    out += buf;
  }
  return out;
}

}  // namespace evrag::evalkit
