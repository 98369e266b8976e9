#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace evrag::ingest {

enum class Origin { AgencyPublication, VideoTranscript };
enum class Format { Pdf, Html, Plain, Vtt, Srt };
enum class Tier { PrimaryText, OcrFallback, StructurePreserving };
enum class CaptionKind { Manual, AutoGenerated };

// Primary-tier output with a replacement ratio strictly above this goes to OCR.
inline constexpr double kOcrFallbackThreshold = 0.10;

std::string_view to_string(Origin origin);
std::string_view to_string(Format format);
std::string_view to_string(Tier tier);
std::string_view to_string(CaptionKind kind);
Origin parse_origin(std::string_view s);
Format parse_format(std::string_view s);
Tier parse_tier(std::string_view s);
CaptionKind parse_caption_kind(std::string_view s);

struct TrackRef {
  std::filesystem::path path;
  std::string language;
  CaptionKind kind = CaptionKind::Manual;
};

struct SourceDocument {
  std::string doc_id;
  Origin origin = Origin::AgencyPublication;
  std::string title;
  std::filesystem::path raw_path;
  std::optional<std::string> published_date;
  Format format = Format::Plain;
  bool complex_layout = false;
  // Transcripts may list several caption tracks; raw_path is used when empty.
  std::vector<TrackRef> tracks;
  std::string language = "en";
};

struct ExtractionReport {
  std::string doc_id;
  Tier tier_used = Tier::PrimaryText;
  // Ratio measured on the primary tier's output (the fallback trigger input).
  double replacement_ratio = 0.0;
  std::size_t char_count = 0;
  std::vector<std::string> warnings;
};

struct Cue {
  long long start_ms = 0;
  long long end_ms = 0;
  std::string text;
};

struct CaptionTrack {
  std::string language;
  CaptionKind kind = CaptionKind::Manual;
  std::vector<Cue> cues;
};

/// Fraction of decoded characters that are U+FFFD. Invalid UTF-8 bytes count
/// as replacement characters, matching what a lossy decoder would produce.
double replacement_ratio(std::string_view text);

/// Strips HTML, decodes entities, collapses whitespace. Idempotent.
std::string normalize(std::string_view text);

std::vector<Cue> parse_caption_cues(std::string_view raw, Format format);
std::string parse_captions(std::string_view raw, Format format);
std::string caption_text(const CaptionTrack& track);

const CaptionTrack& select_transcript(const std::vector<CaptionTrack>& tracks,
                                      std::string_view preferred_language);

struct ExtractorOutput {
  std::string text;
  // Set by extractors that can see tables or multi-column layout.
  bool complex_layout_hint = false;
};

class Extractor {
 public:
  virtual ~Extractor() = default;
  virtual bool supports(Format format) const = 0;
  /// Throws evrag::Error(ExtractionFailed) on failure.
  virtual ExtractorOutput extract(const SourceDocument& doc) const = 0;
};

/// Reads plain, HTML and caption files directly from disk.
class PassThroughExtractor : public Extractor {
 public:
  bool supports(Format format) const override;
  ExtractorOutput extract(const SourceDocument& doc) const override;
};

/// Runs an external command. "{input}" in the template is replaced with the
/// shell-quoted document path; stdout is the extracted text.
class CommandExtractor : public Extractor {
 public:
  CommandExtractor(std::string command_template, std::string encoding,
                   std::vector<Format> formats);
  bool supports(Format format) const override;
  ExtractorOutput extract(const SourceDocument& doc) const override;

 private:
  std::string command_template_;
  std::string encoding_;
  std::vector<Format> formats_;
};

class ExtractorRegistry {
 public:
  /// Registry with the built-in pass-through extractor as the primary tier.
  static ExtractorRegistry with_defaults();
  /// Loads {"primary_text": {"command": ..., "encoding": ..., "formats": [...]}, ...}.
  /// Tiers absent from the config keep the defaults.
  static ExtractorRegistry from_json(const nlohmann::json& config);

  void set(Tier tier, std::shared_ptr<const Extractor> extractor);
  const Extractor* get(Tier tier) const;

 private:
  std::map<Tier, std::shared_ptr<const Extractor>> tiers_;
};

struct Extraction {
  std::string text;
  ExtractionReport report;
};

/// Runs the tiered extraction and normalizes the result.
Extraction extract_document(const SourceDocument& doc, const ExtractorRegistry& extractors);

std::vector<SourceDocument> load_manifest(const std::filesystem::path& manifest_path);

/// Extracts every manifest document in parallel, writing <doc_id>.txt files and
/// report.json under out_dir. Returns the reports in manifest order.
std::vector<ExtractionReport> run_ingest(const std::vector<SourceDocument>& docs,
                                         const ExtractorRegistry& extractors,
                                         const std::filesystem::path& out_dir);

nlohmann::json to_json(const ExtractionReport& report);

}  // namespace evrag::ingest
