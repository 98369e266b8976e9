#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace evrag::chunker {

inline constexpr std::size_t kDefaultTargetChars = 1000;
inline constexpr std::string_view kParagraphJoiner = "\n\n";

// Offsets and lengths count Unicode code points of the normalized document.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  bool operator==(const Span&) const = default;
};

struct Paragraph {
  std::string text;
  Span span;
};

struct Chunk {
  std::string chunk_id;
  std::string doc_id;
  std::size_t ordinal = 0;
  std::string text;
  Span span;
  std::size_t char_len = 0;

  bool operator==(const Chunk&) const = default;
};

/// Paragraphs are maximal runs separated by blank lines ("\n\n").
std::vector<Paragraph> split_paragraphs(std::string_view text);

/// Greedy paragraph packing. Paragraphs are joined with "\n\n" (counted toward
/// the target). A paragraph longer than target_chars becomes its own chunk.
std::vector<Chunk> chunk_document(std::string_view doc_id, const std::vector<Paragraph>& paragraphs,
                                  std::size_t target_chars = kDefaultTargetChars);

std::string make_chunk_id(std::string_view doc_id, std::size_t ordinal);

nlohmann::json to_json(const Chunk& chunk);
Chunk chunk_from_json(const nlohmann::json& j);

void write_jsonl(const std::filesystem::path& path, const std::vector<Chunk>& chunks);
std::vector<Chunk> read_jsonl(const std::filesystem::path& path);

}  // namespace evrag::chunker
