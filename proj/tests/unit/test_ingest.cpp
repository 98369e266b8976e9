#include <doctest.h>

#include "evrag/error.hpp"
#include "evrag/ingest.hpp"
#include "support.hpp"

using namespace evrag;
using namespace evrag::ingest;

namespace {

const std::string kFffd = "\xEF\xBF\xBD";

std::string with_replacements(std::size_t total, std::size_t bad) {
  std::string s;
  for (std::size_t i = 0; i < total; ++i) s += i < bad ? kFffd : "a";
  return s;
}

class FixedExtractor : public Extractor {
 public:
  FixedExtractor(std::string text, bool hint = false, bool fail = false)
      : text_(std::move(text)), hint_(hint), fail_(fail) {}
  bool supports(Format) const override { return true; }
  ExtractorOutput extract(const SourceDocument&) const override {
    ++calls;
    if (fail_) throw Error(ErrorCode::ExtractionFailed, "scripted failure");
    return {text_, hint_};
  }
  mutable int calls = 0;

 private:
  std::string text_;
  bool hint_;
  bool fail_;
};

SourceDocument plain_doc() {
  SourceDocument d;
  d.doc_id = "doc";
  d.format = Format::Pdf;
  d.raw_path = "unused.pdf";
  return d;
}

}  // namespace

TEST_CASE("replacement_ratio counts U+FFFD over code points") {
  CHECK(replacement_ratio("") == 0.0);
  CHECK(replacement_ratio(with_replacements(100, 11)) == doctest::Approx(0.11));
  CHECK(replacement_ratio(with_replacements(10, 1)) == doctest::Approx(0.10));
  CHECK(replacement_ratio("ab\xFF" "c") == doctest::Approx(0.25));
}

TEST_CASE("normalize collapses whitespace, strips tags, keeps paragraph breaks") {
  CHECK(normalize("a  b\t c") == "a b c");
  CHECK(normalize("x&amp;y <b>z</b>") == "x&y z");
  CHECK(normalize("p1\n\n\n\np2") == "p1\n\np2");
  for (const char* s : {"a  b\t c", "x&amp;y <b>z</b>", "p1\n\n\n\np2", " <p>one</p>\n\n<p>two &lt;3</p> "}) {
    const auto once = normalize(s);
    CHECK(normalize(once) == once);
  }
}

TEST_CASE("caption parsing") {
  SUBCASE("vtt cues join with newlines") {
    CHECK(parse_captions("WEBVTT\n\n00:00:00.000 --> 00:00:01.000\nHello\n\n00:00:01.000 --> 00:00:02.000\nworld\n",
                         Format::Vtt) == "Hello\nworld");
  }
  SUBCASE("srt roll-up repeats collapse") {
    CHECK(parse_captions("1\n00:00:00,000 --> 00:00:01,000\nA\n\n2\n00:00:01,000 --> 00:00:02,000\nA\n\n3\n"
                         "00:00:02,000 --> 00:00:03,000\nB\n",
                         Format::Srt) == "A\nB");
  }
  SUBCASE("inline tags stripped") {
    CHECK(parse_captions("WEBVTT\n\n00:00:00.000 --> 00:00:01.000\nHello <i>there</i>\n", Format::Vtt) ==
          "Hello there");
  }
  SUBCASE("malformed timing") {
    CHECK_THROWS_AS(parse_captions("WEBVTT\n\n00:00 --> nonsense\nHello\n", Format::Vtt), Error);
    CHECK_THROWS_AS(parse_captions("not a caption file\n00:00:00.000 --> 00:00:01.000\nx\n", Format::Vtt), Error);
  }
  SUBCASE("fixture srt") {
    const auto text = parse_captions(test::read_file(test::fixture("corpus/podcast_recovery_en.srt")), Format::Srt);
    CHECK(text.find("buprenorphine") != std::string::npos);
    CHECK(text.find("possible.\nRecovery") == std::string::npos);
  }
}

TEST_CASE("select_transcript prefers language, then manual") {
  const CaptionTrack manual_en{"en", CaptionKind::Manual, {}};
  const CaptionTrack auto_en{"en", CaptionKind::AutoGenerated, {}};
  const CaptionTrack manual_es{"es", CaptionKind::Manual, {}};
  CHECK(&select_transcript(std::vector{manual_en, auto_en}, "en") != nullptr);
  CHECK(select_transcript({manual_en, auto_en}, "en").kind == CaptionKind::Manual);
  CHECK(select_transcript({auto_en}, "en").kind == CaptionKind::AutoGenerated);
  const auto& picked = select_transcript({manual_es, auto_en}, "en");
  CHECK(picked.language == "en");
  CHECK(picked.kind == CaptionKind::AutoGenerated);
  try {
    select_transcript({}, "en");
    FAIL("expected NoTracks");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoTracks);
  }
}

TEST_CASE("extract_document tier routing") {
  auto registry = ExtractorRegistry::with_defaults();
  SUBCASE("clean text stays on the primary tier") {
    auto primary = std::make_shared<FixedExtractor>("clean digital text");
    auto ocr = std::make_shared<FixedExtractor>("ocr text");
    registry.set(Tier::PrimaryText, primary);
    registry.set(Tier::OcrFallback, ocr);
    const auto out = extract_document(plain_doc(), registry);
    CHECK(out.report.tier_used == Tier::PrimaryText);
    CHECK(out.report.replacement_ratio < 0.10);
    CHECK(ocr->calls == 0);
  }
  SUBCASE("15 percent replacement characters go to OCR") {
    const auto scanned = with_replacements(100, 15);
    CHECK(replacement_ratio(scanned) == doctest::Approx(0.15));
    registry.set(Tier::PrimaryText, std::make_shared<FixedExtractor>(scanned));
    registry.set(Tier::OcrFallback, std::make_shared<FixedExtractor>("recognized text"));
    const auto out = extract_document(plain_doc(), registry);
    CHECK(out.report.tier_used == Tier::OcrFallback);
    CHECK(out.report.replacement_ratio == doctest::Approx(0.15));
    CHECK(out.text == "recognized text");
  }
  SUBCASE("complex layout flag uses the structure tier") {
    registry.set(Tier::PrimaryText, std::make_shared<FixedExtractor>("flat"));
    registry.set(Tier::StructurePreserving, std::make_shared<FixedExtractor>("| table |"));
    auto doc = plain_doc();
    doc.complex_layout = true;
    CHECK(extract_document(doc, registry).report.tier_used == Tier::StructurePreserving);
  }
  SUBCASE("extractor layout hint uses the structure tier") {
    registry.set(Tier::PrimaryText, std::make_shared<FixedExtractor>("flat", true));
    registry.set(Tier::StructurePreserving, std::make_shared<FixedExtractor>("| table |"));
    CHECK(extract_document(plain_doc(), registry).report.tier_used == Tier::StructurePreserving);
  }
  SUBCASE("all tiers failing") {
    registry.set(Tier::PrimaryText, std::make_shared<FixedExtractor>("", false, true));
    registry.set(Tier::OcrFallback, std::make_shared<FixedExtractor>("", false, true));
    try {
      extract_document(plain_doc(), registry);
      FAIL("expected ExtractionFailed");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ExtractionFailed);
    }
  }
}

TEST_CASE("manifest ingest over the fixture corpus") {
  test::TempDir dir;
  const auto docs = load_manifest(test::fixture("corpus/manifest.json"));
  REQUIRE(docs.size() == 10);
  CHECK(docs[0].title == "Cocaine-Drug-Fact-Sheet");
  CHECK(docs[8].tracks.size() == 2);
  const auto reports = run_ingest(docs, ExtractorRegistry::with_defaults(), dir.path());
  REQUIRE(reports.size() == 10);
  for (const auto& r : reports) {
    CHECK(r.tier_used == Tier::PrimaryText);
    CHECK(r.char_count > 0);
    CHECK(std::filesystem::exists(dir / (r.doc_id + ".txt")));
  }
  const auto podcast = test::read_file(dir / "podcast_fentanyl.txt");
  CHECK(podcast.find("Counterfeit pills are made") != std::string::npos);
  CHECK(podcast.find("fenton all") == std::string::npos);
  const auto cocaine = test::read_file(dir / "cocaine_fact_sheet.txt");
  CHECK(cocaine.find("<p>") == std::string::npos);
  CHECK(cocaine.find("color:#333") == std::string::npos);
  CHECK(std::filesystem::exists(dir / "report.json"));
}

TEST_CASE("manifest errors") {
  test::TempDir dir;
  test::write_file(dir / "m.json", R"([{"doc_id": "x", "origin": "agency_publication"}])");
  CHECK_THROWS_AS(load_manifest(dir / "m.json"), Error);
  test::write_file(dir / "m.json", "{not json");
  CHECK_THROWS_AS(load_manifest(dir / "m.json"), Error);
  CHECK_THROWS_AS(load_manifest(dir / "missing.json"), Error);
}
