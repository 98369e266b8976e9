#include <doctest.h>

#include <cmath>
#include <sstream>

#include "evrag/error.hpp"
#include "evrag/evalkit.hpp"
#include "support.hpp"

using namespace evrag;
using namespace evrag::evalkit;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::InvalidArgument;
}

RatedInteraction rating(std::string interaction, std::string question, Criterion c, std::string rater, int score,
                        Category cat = Category::HealthEffects) {
  return RatedInteraction{std::move(interaction), std::move(question), cat, c, std::move(rater), score};
}

/// Texts mentioning "omega" embed on axis 1, everything else on axis 0.
class OneHotEmbedder : public embedding::Embedder {
 public:
  std::size_t dim() const override { return 8; }
  std::vector<embedding::Embedding> embed(const std::vector<std::string>& texts) const override {
    std::vector<embedding::Embedding> out;
    for (const auto& t : texts) {
      std::vector<float> v(8, 0.0f);
      v[t.find("omega") != std::string::npos ? 1 : 0] = 1.0f;
      out.emplace_back(std::move(v));
    }
    return out;
  }
};

}  // namespace

TEST_CASE("summary statistics") {
  const auto constant = summarize_scores("x", {4, 4, 4, 4});
  CHECK(constant.mean == 4.0);
  CHECK(constant.sd == 0.0);
  CHECK(format_mean_sd(constant.mean, constant.sd) == "4.00 (0.00)");
  const auto pair = summarize_scores("x", {3, 5});
  CHECK(pair.mean == 4.0);
  CHECK(pair.sd == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(pair.min == 3);
  CHECK(pair.max == 5);
  CHECK(summarize_scores("x", {5}).sd == 0.0);
  CHECK(format_mean_sd(4.3125, 0.6777) == "4.31 (0.68)");
  CHECK(code_of([] { summarize_scores("x", {}); }) == ErrorCode::EmptyGroup);
}

TEST_CASE("likert grouping") {
  const std::vector<RatedInteraction> rs{rating("i1", "q1", Criterion::FactualAccuracy, "r1", 4),
                                         rating("i1", "q1", Criterion::CitationQuality, "r1", 2),
                                         rating("i2", "q2", Criterion::FactualAccuracy, "r2", 5)};
  const auto by_criterion = likert_summary(rs, GroupBy::Criterion);
  REQUIRE(by_criterion.size() == 2);
  CHECK(by_criterion[0].label == "citation_quality");
  CHECK(by_criterion[1].label == "factual_accuracy");
  CHECK(by_criterion[1].mean == 4.5);
  const auto overall = likert_summary(rs, GroupBy::Overall);
  REQUIRE(overall.size() == 1);
  CHECK(overall[0].n == 3);
  CHECK(code_of([] { likert_summary({}, GroupBy::Overall); }) == ErrorCode::EmptyGroup);
}

TEST_CASE("category summary") {
  const std::vector<RatedInteraction> rs{rating("i1", "q1", Criterion::FactualAccuracy, "r1", 4),
                                         rating("i2", "q1", Criterion::FactualAccuracy, "r2", 5),
                                         rating("i3", "q2", Criterion::FactualAccuracy, "r1", 3)};
  const std::map<std::string, Category> map{{"q1", Category::TreatmentRecovery},
                                            {"q2", Category::ClassificationsScheduling}};
  const auto rows = category_summary(rs, map);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].label == "classifications_scheduling");
  CHECK(rows[0].source == "local regulatory");
  CHECK(rows[1].mean == 4.5);
  CHECK(rows[1].source == "literature");
  CHECK(code_of([&] { category_summary(rs, {{"q1", Category::Prevention}}); }) == ErrorCode::UnmappedQuestion);
}

TEST_CASE("kappa") {
  CHECK(cohen_kappa({5, 4, 2, 1}, {5, 2, 2, 1}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(cohen_kappa({5, 1, 4, 2}, {5, 1, 4, 2}) == 1.0);
  CHECK(cohen_kappa(std::vector<int>(90, 4), std::vector<int>(90, 3)) == 1.0);
  CHECK(cohen_kappa_binary({true, true}, {false, false}) == 0.0);
  CHECK(cohen_kappa({1, 5}, {5, 1}) == doctest::Approx(-1.0));
  CHECK(code_of([] { cohen_kappa({1, 2}, {1}); }) == ErrorCode::LengthMismatch);
  CHECK(code_of([] { cohen_kappa({}, {}); }) == ErrorCode::Empty);
  CHECK(code_of([] { cohen_kappa({0}, {1}); }) == ErrorCode::InvalidArgument);
  CHECK(cohen_kappa({3, 2}, {4, 1}, 4) == doctest::Approx(cohen_kappa_binary({false, false}, {true, false})));
}

TEST_CASE("rater pairing") {
  const std::vector<RatedInteraction> rs{rating("i1", "q1", Criterion::FactualAccuracy, "a", 4),
                                         rating("i1", "q1", Criterion::FactualAccuracy, "b", 5),
                                         rating("i2", "q2", Criterion::FactualAccuracy, "a", 2),
                                         rating("i2", "q2", Criterion::FactualAccuracy, "b", 1),
                                         rating("i3", "q3", Criterion::FactualAccuracy, "a", 3)};
  const auto p = pair_raters(rs);
  CHECK(p.rater_a == "a");
  CHECK(p.rater_b == "b");
  CHECK(p.a == std::vector<int>{4, 2});
  CHECK(p.b == std::vector<int>{5, 1});
  CHECK(p.unpaired == 1);
  auto three = rs;
  three.push_back(rating("i1", "q1", Criterion::CitationQuality, "c", 3));
  CHECK(code_of([&] { pair_raters(three); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("ratings csv") {
  std::istringstream ok(
      "interaction_id,question_id,category,criterion,rater_id,score\n"
      "i1,q1,health_effects,factual_accuracy,r1,4\n"
      "\"i,2\",q2,prevention,citation_quality,r2,5\n");
  const auto rs = read_ratings_csv(ok);
  REQUIRE(rs.size() == 2);
  CHECK(rs[1].interaction_id == "i,2");
  CHECK(rs[1].category == Category::Prevention);
  std::istringstream bad_score("interaction_id,question_id,category,criterion,rater_id,score\ni,q,prevention,factual_accuracy,r,6\n");
  CHECK(code_of([&] { read_ratings_csv(bad_score); }) == ErrorCode::InvalidArgument);
  std::istringstream bad_header("a,b\n");
  CHECK(code_of([&] { read_ratings_csv(bad_header); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("dedup") {
  embedding::DeterministicEmbedder embedder;
  const auto same = dedup_questions({"What is fentanyl?", "What is fentanyl?"}, embedder);
  CHECK(same.kept.size() == 1);
  REQUIRE(same.removed_pairs.size() == 1);
  CHECK(same.removed_pairs[0].similarity == doctest::Approx(1.0));
  CHECK(dedup_questions({"alpha question", "omega question"}, OneHotEmbedder{}, 0.9).kept.size() == 2);
  CHECK(code_of([&] { dedup_questions({}, embedder); }) == ErrorCode::Empty);
  CHECK(code_of([&] { dedup_questions({"a"}, embedder, 0.0); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { dedup_questions({"a"}, embedder, 1.5); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("table rendering") {
  const auto rows = likert_summary({rating("i", "q", Criterion::FactualAccuracy, "r", 4)}, GroupBy::Criterion);
  const auto table = render_table(rows);
  CHECK(table.find("factual_accuracy") != std::string::npos);
  CHECK(table.find("4.00 (0.00)") != std::string::npos);
  CHECK(to_json(rows[0]).at("formatted") == "4.00 (0.00)");
}
