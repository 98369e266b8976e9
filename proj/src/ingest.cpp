#include "evrag/ingest.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "evrag/error.hpp"
#include "text_util.hpp"

namespace evrag::ingest {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Origin origin) {
  return origin == Origin::AgencyPublication ? "agency_publication" : "video_transcript";
}

std::string_view to_string(Format format) {
  switch (format) {
    case Format::Pdf: return "pdf";
    case Format::Html: return "html";
    case Format::Plain: return "plain";
    case Format::Vtt: return "vtt";
    case Format::Srt: return "srt";
  }
  return "plain";
}

std::string_view to_string(Tier tier) {
  switch (tier) {
    case Tier::PrimaryText: return "primary_text";
    case Tier::OcrFallback: return "ocr_fallback";
    case Tier::StructurePreserving: return "structure_preserving";
  }
  return "primary_text";
}

std::string_view to_string(CaptionKind kind) {
  return kind == CaptionKind::Manual ? "manual" : "auto_generated";
}

Origin parse_origin(std::string_view s) {
  if (s == "agency_publication") return Origin::AgencyPublication;
  if (s == "video_transcript") return Origin::VideoTranscript;
  throw Error(ErrorCode::BadManifest, "unknown origin '" + std::string(s) + "'");
}

Format parse_format(std::string_view s) {
  if (s == "pdf") return Format::Pdf;
  if (s == "html") return Format::Html;
  if (s == "plain") return Format::Plain;
  if (s == "vtt") return Format::Vtt;
  if (s == "srt") return Format::Srt;
  throw Error(ErrorCode::UnsupportedFormat, "unknown format '" + std::string(s) + "'");
}

Tier parse_tier(std::string_view s) {
  if (s == "primary_text") return Tier::PrimaryText;
  if (s == "ocr_fallback") return Tier::OcrFallback;
  if (s == "structure_preserving") return Tier::StructurePreserving;
  throw Error(ErrorCode::BadManifest, "unknown extraction tier '" + std::string(s) + "'");
}

CaptionKind parse_caption_kind(std::string_view s) {
  if (s == "manual") return CaptionKind::Manual;
  if (s == "auto_generated" || s == "auto") return CaptionKind::AutoGenerated;
  throw Error(ErrorCode::BadManifest, "unknown caption kind '" + std::string(s) + "'");
}

double replacement_ratio(std::string_view text) {
  if (text.empty()) return 0.0;
  const auto decoded = detail::decode_utf8(text);
  const auto bad = std::count(decoded.begin(), decoded.end(), detail::kReplacementChar);
  return static_cast<double>(bad) / static_cast<double>(decoded.size());
}

// ---------------------------------------------------------------------------
// normalize

namespace {

std::string normalize_once(std::string_view input) {
  std::string s;
  s.reserve(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (input[i] == '\r') {
      s.push_back('\n');
      if (i + 1 < input.size() && input[i + 1] == '\n') ++i;
    } else {
      s.push_back(input[i]);
    }
  }
  s = detail::decode_entities(detail::strip_tags(s, /*keep_blocks=*/true));

  // Control characters (C0 except \n and \t, DEL, C1) go; NBSP becomes a space.
  std::string cleaned;
  cleaned.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (c == '\n' || c == '\t') {
      cleaned.push_back(static_cast<char>(c));
    } else if (c < 0x20 || c == 0x7F) {
      continue;
    } else if (c == 0xC2 && i + 1 < s.size()) {
      const auto n = static_cast<unsigned char>(s[i + 1]);
      if (n >= 0x80 && n <= 0x9F) {
        ++i;
      } else if (n == 0xA0) {
        cleaned.push_back(' ');
        ++i;
      } else {
        cleaned.push_back(static_cast<char>(c));
      }
    } else {
      cleaned.push_back(static_cast<char>(c));
    }
  }

  // Collapse horizontal whitespace and trim each line.
  std::string lines;
  lines.reserve(cleaned.size());
  for (const auto& line : detail::split_lines(cleaned)) {
    std::string collapsed;
    bool in_space = false;
    for (char c : line) {
      if (c == ' ' || c == '\t') {
        in_space = true;
      } else {
        if (in_space && !collapsed.empty()) collapsed.push_back(' ');
        in_space = false;
        collapsed.push_back(c);
      }
    }
    lines += collapsed;
    lines.push_back('\n');
  }
  if (!lines.empty()) lines.pop_back();

  std::string out;
  out.reserve(lines.size());
  int newline_run = 0;
  for (char c : lines) {
    if (c == '\n') {
      if (++newline_run <= 2) out.push_back(c);
    } else {
      newline_run = 0;
      out.push_back(c);
    }
  }
  return std::string(detail::trim(out));
}

}  // namespace

std::string normalize(std::string_view text) {
  // Each pass never grows the text, so iterating to a fixed point terminates.
  // Decoded entities can form new tags ("&lt;b&gt;"), which is why one pass is
  // not enough for idempotence.
  std::string current = normalize_once(text);
  for (;;) {
    std::string next = normalize_once(current);
    if (next == current) return current;
    current = std::move(next);
  }
}

// ---------------------------------------------------------------------------
// captions

namespace {

long long parse_timestamp(std::string_view ts, char ms_sep, std::string_view line) {
  auto fail = [&]() -> long long {
    throw Error(ErrorCode::MalformedCaptionFile, "bad cue timing '" + std::string(line) + "'");
  };
  const auto sep = ts.rfind(ms_sep);
  if (sep == std::string_view::npos || ts.size() - sep - 1 != 3) fail();
  const std::string_view clock = ts.substr(0, sep);
  const std::string_view millis = ts.substr(sep + 1);
  std::vector<long long> parts;
  std::size_t start = 0;
  while (start <= clock.size()) {
    auto colon = clock.find(':', start);
    if (colon == std::string_view::npos) colon = clock.size();
    const auto part = clock.substr(start, colon - start);
    if (part.empty() || part.size() > 3 ||
        !std::all_of(part.begin(), part.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      fail();
    }
    parts.push_back(std::stoll(std::string(part)));
    start = colon + 1;
  }
  if (parts.size() < 2 || parts.size() > 3) fail();
  if (!std::all_of(millis.begin(), millis.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    fail();
  }
  long long hours = parts.size() == 3 ? parts[0] : 0;
  long long minutes = parts[parts.size() - 2];
  long long seconds = parts.back();
  if (minutes > 59 || seconds > 59) fail();
  return ((hours * 60 + minutes) * 60 + seconds) * 1000 + std::stoll(std::string(millis));
}

std::pair<long long, long long> parse_timing_line(std::string_view line, char ms_sep) {
  const auto arrow = line.find("-->");
  if (arrow == std::string_view::npos) {
    throw Error(ErrorCode::MalformedCaptionFile, "missing '-->' in '" + std::string(line) + "'");
  }
  const auto start = detail::trim(line.substr(0, arrow));
  std::string_view rest = detail::trim(line.substr(arrow + 3));
  // VTT cue settings follow the end timestamp.
  const auto space = rest.find_first_of(" \t");
  const auto end = rest.substr(0, space);
  const long long s = parse_timestamp(start, ms_sep, line);
  const long long e = parse_timestamp(end, ms_sep, line);
  if (e < s) {
    throw Error(ErrorCode::MalformedCaptionFile, "cue ends before it starts: '" + std::string(line) + "'");
  }
  return {s, e};
}

std::string clean_cue_text(const std::vector<std::string>& lines) {
  std::string joined;
  for (const auto& l : lines) {
    const auto t = detail::trim(l);
    if (t.empty()) continue;
    if (!joined.empty()) joined.push_back(' ');
    joined += t;
  }
  std::string text = detail::decode_entities(detail::strip_tags(joined, false));
  std::string collapsed;
  bool in_space = false;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n') {
      in_space = true;
    } else {
      if (in_space && !collapsed.empty()) collapsed.push_back(' ');
      in_space = false;
      collapsed.push_back(c);
    }
  }
  return collapsed;
}

std::vector<std::vector<std::string>> split_blocks(std::string_view raw) {
  std::vector<std::vector<std::string>> blocks;
  std::vector<std::string> current;
  for (auto& line : detail::split_lines(raw)) {
    if (detail::trim(line).empty()) {
      if (!current.empty()) blocks.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(std::move(line));
    }
  }
  if (!current.empty()) blocks.push_back(std::move(current));
  return blocks;
}

}  // namespace

std::vector<Cue> parse_caption_cues(std::string_view raw, Format format) {
  if (format != Format::Vtt && format != Format::Srt) {
    throw Error(ErrorCode::UnsupportedFormat, "captions must be vtt or srt");
  }
  if (raw.substr(0, 3) == "\xEF\xBB\xBF") raw.remove_prefix(3);
  auto blocks = split_blocks(raw);
  std::vector<Cue> cues;
  std::size_t first = 0;
  const char ms_sep = format == Format::Vtt ? '.' : ',';

  if (format == Format::Vtt) {
    if (blocks.empty() || blocks[0][0].rfind("WEBVTT", 0) != 0) {
      throw Error(ErrorCode::MalformedCaptionFile, "missing WEBVTT header");
    }
    const auto& header = blocks[0][0];
    if (header.size() > 6 && header[6] != ' ' && header[6] != '\t') {
      throw Error(ErrorCode::MalformedCaptionFile, "bad WEBVTT header");
    }
    // Header metadata lines must be followed by a blank line before any cue.
    for (const auto& line : blocks[0]) {
      if (line.find("-->") != std::string::npos) {
        throw Error(ErrorCode::MalformedCaptionFile, "missing blank line after WEBVTT header");
      }
    }
    first = 1;
  }

  for (std::size_t b = first; b < blocks.size(); ++b) {
    const auto& block = blocks[b];
    if (format == Format::Vtt) {
      const auto& head = block[0];
      if (head.rfind("NOTE", 0) == 0 || head.rfind("STYLE", 0) == 0 ||
          head.rfind("REGION", 0) == 0) {
        continue;
      }
    }
    std::size_t timing_idx = 0;
    if (block[0].find("-->") == std::string::npos) {
      // Cue identifier (SRT sequence number or optional VTT id).
      if (format == Format::Srt) {
        const auto id = detail::trim(block[0]);
        if (id.empty() || !std::all_of(id.begin(), id.end(), [](char c) { return c >= '0' && c <= '9'; })) {
          throw Error(ErrorCode::MalformedCaptionFile, "bad SRT cue number '" + block[0] + "'");
        }
      }
      timing_idx = 1;
    }
    if (timing_idx >= block.size()) {
      throw Error(ErrorCode::MalformedCaptionFile, "cue without timing line");
    }
    const auto [start_ms, end_ms] = parse_timing_line(block[timing_idx], ms_sep);
    std::vector<std::string> text_lines(block.begin() + static_cast<std::ptrdiff_t>(timing_idx) + 1,
                                        block.end());
    cues.push_back(Cue{start_ms, end_ms, clean_cue_text(text_lines)});
  }
  std::stable_sort(cues.begin(), cues.end(),
                   [](const Cue& a, const Cue& b) { return a.start_ms < b.start_ms; });
  return cues;
}

std::string caption_text(const CaptionTrack& track) {
  std::string out;
  const std::string* previous = nullptr;
  for (const auto& cue : track.cues) {
    if (cue.text.empty()) continue;
    if (previous != nullptr && *previous == cue.text) continue;
    if (!out.empty()) out.push_back('\n');
    out += cue.text;
    previous = &cue.text;
  }
  return out;
}

std::string parse_captions(std::string_view raw, Format format) {
  CaptionTrack track;
  track.cues = parse_caption_cues(raw, format);
  return caption_text(track);
}

namespace {

std::string primary_subtag(std::string_view tag) {
  const auto dash = tag.find_first_of("-_");
  return detail::to_lower_ascii(tag.substr(0, dash));
}

}  // namespace

const CaptionTrack& select_transcript(const std::vector<CaptionTrack>& tracks,
                                      std::string_view preferred_language) {
  if (tracks.empty()) throw Error(ErrorCode::NoTracks, "no caption tracks");
  const auto wanted = primary_subtag(preferred_language);
  std::vector<const CaptionTrack*> pool;
  for (const auto& t : tracks) {
    if (primary_subtag(t.language) == wanted) pool.push_back(&t);
  }
  if (pool.empty()) {
    for (const auto& t : tracks) pool.push_back(&t);
  }
  for (const auto* t : pool) {
    if (t->kind == CaptionKind::Manual) return *t;
  }
  return *pool.front();
}

// ---------------------------------------------------------------------------
// extractors

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ExtractionFailed, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string latin1_to_utf8(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) detail::append_utf8(out, static_cast<unsigned char>(c));
  return out;
}

}  // namespace

bool PassThroughExtractor::supports(Format format) const { return format != Format::Pdf; }

ExtractorOutput PassThroughExtractor::extract(const SourceDocument& doc) const {
  if (!supports(doc.format)) {
    throw Error(ErrorCode::UnsupportedFormat, "pass-through cannot read " +
                                                  std::string(to_string(doc.format)));
  }
  std::string raw = read_file(doc.raw_path);
  if (doc.format == Format::Vtt || doc.format == Format::Srt) {
    return {parse_captions(raw, doc.format), false};
  }
  return {std::move(raw), false};
}

CommandExtractor::CommandExtractor(std::string command_template, std::string encoding,
                                   std::vector<Format> formats)
    : command_template_(std::move(command_template)),
      encoding_(std::move(encoding)),
      formats_(std::move(formats)) {}

bool CommandExtractor::supports(Format format) const {
  return formats_.empty() || std::find(formats_.begin(), formats_.end(), format) != formats_.end();
}

ExtractorOutput CommandExtractor::extract(const SourceDocument& doc) const {
  std::string command = command_template_;
  const std::string quoted = detail::shell_quote(doc.raw_path.string());
  for (auto pos = command.find("{input}"); pos != std::string::npos;
       pos = command.find("{input}", pos + quoted.size())) {
    command.replace(pos, 7, quoted);
  }
  FILE* pipe = ::popen(command.c_str(), "r");
  if (pipe == nullptr) throw Error(ErrorCode::ExtractionFailed, "cannot run: " + command);
  std::string output;
  std::array<char, 4096> buffer{};
  std::size_t n = 0;
  while ((n = std::fread(buffer.data(), 1, buffer.size(), pipe)) > 0) output.append(buffer.data(), n);
  const int status = ::pclose(pipe);
  if (status != 0) {
    throw Error(ErrorCode::ExtractionFailed,
                "command exited with status " + std::to_string(status) + ": " + command);
  }
  if (encoding_ == "latin-1" || encoding_ == "iso-8859-1") output = latin1_to_utf8(output);
  ExtractorOutput result{std::move(output), false};
  // Extractors may flag tables/columns with a form feed marker line.
  constexpr std::string_view kLayoutMarker = "\f[complex-layout]\n";
  if (result.text.rfind(kLayoutMarker, 0) == 0) {
    result.text.erase(0, kLayoutMarker.size());
    result.complex_layout_hint = true;
  }
  return result;
}

ExtractorRegistry ExtractorRegistry::with_defaults() {
  ExtractorRegistry registry;
  registry.set(Tier::PrimaryText, std::make_shared<PassThroughExtractor>());
  return registry;
}

ExtractorRegistry ExtractorRegistry::from_json(const json& config) {
  auto registry = with_defaults();
  for (const auto& [key, spec] : config.items()) {
    const Tier tier = parse_tier(key);
    std::vector<Format> formats;
    if (spec.contains("formats")) {
      for (const auto& f : spec.at("formats")) formats.push_back(parse_format(f.get<std::string>()));
    }
    registry.set(tier, std::make_shared<CommandExtractor>(spec.at("command").get<std::string>(),
                                                          spec.value("encoding", "utf-8"),
                                                          std::move(formats)));
  }
  return registry;
}

void ExtractorRegistry::set(Tier tier, std::shared_ptr<const Extractor> extractor) {
  tiers_[tier] = std::move(extractor);
}

const Extractor* ExtractorRegistry::get(Tier tier) const {
  const auto it = tiers_.find(tier);
  return it == tiers_.end() ? nullptr : it->second.get();
}

// ---------------------------------------------------------------------------
// extract_document

namespace {

const Extractor* usable(const ExtractorRegistry& r, Tier tier, Format format) {
  const auto* e = r.get(tier);
  return e != nullptr && e->supports(format) ? e : nullptr;
}

Extraction finish(const SourceDocument& doc, Tier tier, double ratio, const std::string& raw,
                  std::vector<std::string> warnings) {
  Extraction out;
  out.text = normalize(raw);
  out.report.doc_id = doc.doc_id;
  out.report.tier_used = tier;
  out.report.replacement_ratio = ratio;
  out.report.char_count = detail::decode_utf8(out.text).size();
  out.report.warnings = std::move(warnings);
  return out;
}

Extraction extract_transcript_tracks(const SourceDocument& doc) {
  std::vector<CaptionTrack> tracks;
  for (const auto& ref : doc.tracks) {
    const auto ext = ref.path.extension().string();
    const Format f = ext == ".srt" ? Format::Srt : Format::Vtt;
    CaptionTrack t;
    t.language = ref.language;
    t.kind = ref.kind;
    t.cues = parse_caption_cues(read_file(ref.path), f);
    tracks.push_back(std::move(t));
  }
  const auto& chosen = select_transcript(tracks, doc.language);
  const std::string raw = caption_text(chosen);
  std::vector<std::string> warnings;
  if (chosen.kind == CaptionKind::AutoGenerated) {
    warnings.emplace_back("no manual caption track; using auto-generated captions");
  }
  return finish(doc, Tier::PrimaryText, replacement_ratio(raw), raw, std::move(warnings));
}

}  // namespace

Extraction extract_document(const SourceDocument& doc, const ExtractorRegistry& extractors) {
  if (!doc.tracks.empty()) return extract_transcript_tracks(doc);

  std::vector<std::string> warnings;
  const auto* primary = usable(extractors, Tier::PrimaryText, doc.format);
  const auto* ocr = usable(extractors, Tier::OcrFallback, doc.format);
  const auto* structure = usable(extractors, Tier::StructurePreserving, doc.format);
  if (primary == nullptr && ocr == nullptr && structure == nullptr) {
    throw Error(ErrorCode::UnsupportedFormat, "no extractor registered for " +
                                                  std::string(to_string(doc.format)) + " (" +
                                                  doc.doc_id + ")");
  }

  if (doc.complex_layout) {
    if (structure != nullptr) {
      try {
        auto out = structure->extract(doc);
        return finish(doc, Tier::StructurePreserving, replacement_ratio(out.text), out.text,
                      std::move(warnings));
      } catch (const Error& e) {
        warnings.push_back(std::string("structure-preserving tier failed: ") + e.what());
      }
    } else {
      warnings.emplace_back("complex_layout set but no structure-preserving extractor registered");
    }
  }

  std::optional<ExtractorOutput> primary_out;
  if (primary != nullptr) {
    try {
      primary_out = primary->extract(doc);
    } catch (const Error& e) {
      warnings.push_back(std::string("primary tier failed: ") + e.what());
    }
  }

  if (primary_out) {
    const double ratio = replacement_ratio(primary_out->text);
    if (primary_out->complex_layout_hint && structure != nullptr && !doc.complex_layout) {
      try {
        auto out = structure->extract(doc);
        warnings.emplace_back("primary extractor reported complex layout");
        return finish(doc, Tier::StructurePreserving, ratio, out.text, std::move(warnings));
      } catch (const Error& e) {
        warnings.push_back(std::string("structure-preserving tier failed: ") + e.what());
      }
    }
    if (ratio > kOcrFallbackThreshold) {
      if (ocr != nullptr) {
        try {
          auto out = ocr->extract(doc);
          return finish(doc, Tier::OcrFallback, ratio, out.text, std::move(warnings));
        } catch (const Error& e) {
          warnings.push_back(std::string("ocr fallback failed: ") + e.what());
        }
      } else {
        warnings.emplace_back("replacement ratio above threshold but no OCR extractor registered");
      }
    }
    return finish(doc, Tier::PrimaryText, ratio, primary_out->text, std::move(warnings));
  }

  throw Error(ErrorCode::ExtractionFailed, "all tiers failed for " + doc.doc_id);
}

// ---------------------------------------------------------------------------
// manifest + batch

std::vector<SourceDocument> load_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::BadManifest, "cannot open " + manifest_path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::BadManifest, e.what());
  }
  const json& list = root.is_array() ? root : root.at("documents");
  const fs::path base = manifest_path.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
  };

  std::vector<SourceDocument> docs;
  std::vector<std::string> seen;
  try {
    for (const auto& item : list) {
      SourceDocument d;
      d.doc_id = item.at("doc_id").get<std::string>();
      d.origin = parse_origin(item.at("origin").get<std::string>());
      d.title = item.value("title", d.doc_id);
      d.format = parse_format(item.at("format").get<std::string>());
      if (item.contains("raw_path")) d.raw_path = resolve(item.at("raw_path").get<std::string>());
      if (item.contains("published_date") && !item.at("published_date").is_null()) {
        d.published_date = item.at("published_date").get<std::string>();
      }
      d.complex_layout = item.value("complex_layout", false);
      d.language = item.value("language", std::string("en"));
      if (item.contains("tracks")) {
        for (const auto& t : item.at("tracks")) {
          d.tracks.push_back(TrackRef{resolve(t.at("path").get<std::string>()),
                                      t.value("language", std::string("en")),
                                      parse_caption_kind(t.value("kind", std::string("manual")))});
        }
      }
      if (d.raw_path.empty() && d.tracks.empty()) {
        throw Error(ErrorCode::BadManifest, d.doc_id + " has neither raw_path nor tracks");
      }
      if (std::find(seen.begin(), seen.end(), d.doc_id) != seen.end()) {
        throw Error(ErrorCode::BadManifest, "duplicate doc_id " + d.doc_id);
      }
      seen.push_back(d.doc_id);
      docs.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadManifest, e.what());
  }
  return docs;
}

json to_json(const ExtractionReport& report) {
  return json{{"doc_id", report.doc_id},
              {"tier_used", to_string(report.tier_used)},
              {"replacement_ratio", report.replacement_ratio},
              {"char_count", report.char_count},
              {"warnings", report.warnings}};
}

std::vector<ExtractionReport> run_ingest(const std::vector<SourceDocument>& docs,
                                         const ExtractorRegistry& extractors,
                                         const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<std::optional<Extraction>> results(docs.size());
  std::vector<std::string> failures(docs.size());

  const auto n = static_cast<long>(docs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    try {
      results[i] = extract_document(docs[i], extractors);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  }

  std::vector<ExtractionReport> reports;
  json report_json = json::array();
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (!results[i]) throw Error(ErrorCode::ExtractionFailed, docs[i].doc_id + ": " + failures[i]);
    std::ofstream out(out_dir / (docs[i].doc_id + ".txt"), std::ios::binary);
    out << results[i]->text;
    for (const auto& w : results[i]->report.warnings) spdlog::warn("{}: {}", docs[i].doc_id, w);
    report_json.push_back(to_json(results[i]->report));
    reports.push_back(std::move(results[i]->report));
  }
  std::ofstream(out_dir / "report.json") << report_json.dump(2) << '\n';
  return reports;
}

}  // namespace evrag::ingest
