#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "evrag/embedding.hpp"

namespace evrag::evalkit {

enum class Category { ClassificationsScheduling, RegulatoryPolicy, HealthEffects, Prevention, TreatmentRecovery };
enum class Criterion { FactualAccuracy, CitationQuality, ContextualCoherence, RegulatoryAppropriateness };
enum class GroupBy { Criterion, Category, Overall };

std::string_view to_string(Category c);
std::string_view to_string(Criterion c);
Category parse_category(std::string_view s);
Criterion parse_criterion(std::string_view s);
GroupBy parse_group_by(std::string_view s);

/// Categories in reporting order.
const std::vector<Category>& all_categories();

struct RatedInteraction {
  std::string interaction_id;
  std::string question_id;
  Category category = Category::ClassificationsScheduling;
  Criterion criterion = Criterion::FactualAccuracy;
  std::string rater_id;
  int score = 0;
};

/// Header: interaction_id,question_id,category,criterion,rater_id,score.
/// Throws InvalidArgument naming the offending line.
std::vector<RatedInteraction> read_ratings_csv(std::istream& in);
std::vector<RatedInteraction> read_ratings_csv(const std::string& path);

struct SummaryRow {
  std::string label;
  double mean = 0.0;
  double sd = 0.0;  // sample (n - 1); 0 when n == 1
  int min = 0;
  int max = 0;
  std::size_t n = 0;
  std::string source;  // primary knowledge source, category rows only
};

/// "4.31 (0.68)".
std::string format_mean_sd(double mean, double sd);

/// Throws EmptyGroup for an empty score list.
SummaryRow summarize_scores(std::string label, const std::vector<int>& scores);

/// Rows sorted by label. Throws EmptyGroup if `ratings` is empty.
std::vector<SummaryRow> likert_summary(const std::vector<RatedInteraction>& ratings, GroupBy group_by);

/// Primary knowledge source tag per category.
std::map<Category, std::string> default_source_tags();

/// Rows in reporting category order; categories without ratings are omitted.
/// The category of each rating is taken from `question_categories`. Throws
/// UnmappedQuestion.
std::vector<SummaryRow> category_summary(const std::vector<RatedInteraction>& ratings,
                                         const std::map<std::string, Category>& question_categories,
                                         const std::map<Category, std::string>& source_tags = default_source_tags());

/// Binarized Cohen's kappa. Throws LengthMismatch, Empty, InvalidArgument
/// (score outside 1..5).
double cohen_kappa(const std::vector<int>& a, const std::vector<int>& b, int binarize_at = 3);
double cohen_kappa_binary(const std::vector<bool>& a, const std::vector<bool>& b);

struct KappaInput {
  std::string rater_a;
  std::string rater_b;
  std::vector<int> a;
  std::vector<int> b;
  std::size_t unpaired = 0;
};
/// Pairs the two raters' scores on (interaction_id, criterion). Throws
/// InvalidArgument unless exactly two raters are present.
KappaInput pair_raters(const std::vector<RatedInteraction>& ratings);

struct RemovedPair {
  std::size_t kept;     // index of the surviving earlier question
  std::size_t removed;  // index of the dropped question
  double similarity = 0.0;
};

struct DedupResult {
  std::vector<std::size_t> kept_indices;
  std::vector<std::string> kept;
  std::vector<RemovedPair> removed_pairs;
};

/// Greedy first-wins: a question is dropped when its cosine similarity to any
/// earlier kept question is >= threshold. The recorded partner is the most
/// similar kept question.
DedupResult dedup_questions(const std::vector<std::string>& questions, const embedding::Embedder& embedder,
                            double threshold = 0.90);

nlohmann::json to_json(const SummaryRow& row);
std::string render_table(const std::vector<SummaryRow>& rows);

}  // namespace evrag::evalkit
