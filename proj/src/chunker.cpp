#include "evrag/chunker.hpp"

#include <fstream>

#include "evrag/error.hpp"

namespace evrag::chunker {

using nlohmann::json;

namespace {

bool is_continuation(char c) { return (static_cast<unsigned char>(c) & 0xC0) == 0x80; }

std::size_t count_code_points(std::string_view s) {
  std::size_t n = 0;
  for (char c : s) n += is_continuation(c) ? 0 : 1;
  return n;
}

}  // namespace

std::vector<Paragraph> split_paragraphs(std::string_view text) {
  std::vector<Paragraph> out;
  std::size_t byte = 0;
  std::size_t cp = 0;
  auto advance_to = [&](std::size_t target) {
    cp += count_code_points(text.substr(byte, target - byte));
    byte = target;
  };

  while (byte < text.size()) {
    // Skip a separator run of two or more newlines (or leading newlines).
    std::size_t run = byte;
    while (run < text.size() && text[run] == '\n') ++run;
    advance_to(run);
    if (byte >= text.size()) break;

    const auto sep = text.find("\n\n", byte);
    const std::size_t end = sep == std::string_view::npos ? text.size() : sep;
    std::string_view body = text.substr(byte, end - byte);
    // A single trailing newline before EOF belongs to the separator, not the paragraph.
    while (!body.empty() && body.back() == '\n') body.remove_suffix(1);
    const std::size_t start_cp = cp;
    const std::size_t len_cp = count_code_points(body);
    out.push_back(Paragraph{std::string(body), Span{start_cp, start_cp + len_cp}});
    advance_to(end);
  }
  return out;
}

std::string make_chunk_id(std::string_view doc_id, std::size_t ordinal) {
  return std::string(doc_id) + "#" + std::to_string(ordinal);
}

std::vector<Chunk> chunk_document(std::string_view doc_id, const std::vector<Paragraph>& paragraphs,
                                  std::size_t target_chars) {
  if (target_chars < 1) throw Error(ErrorCode::InvalidArgument, "target_chars must be >= 1");
  std::vector<Chunk> chunks;
  const std::size_t joiner_len = kParagraphJoiner.size();
  std::size_t i = 0;
  while (i < paragraphs.size()) {
    Chunk chunk;
    chunk.doc_id = std::string(doc_id);
    chunk.ordinal = chunks.size();
    chunk.chunk_id = make_chunk_id(doc_id, chunk.ordinal);
    chunk.text = paragraphs[i].text;
    chunk.span = paragraphs[i].span;
    std::size_t len = paragraphs[i].span.end - paragraphs[i].span.start;
    ++i;
    while (i < paragraphs.size()) {
      const std::size_t next_len = paragraphs[i].span.end - paragraphs[i].span.start;
      if (len + joiner_len + next_len > target_chars) break;
      chunk.text += kParagraphJoiner;
      chunk.text += paragraphs[i].text;
      chunk.span.end = paragraphs[i].span.end;
      len += joiner_len + next_len;
      ++i;
    }
    chunk.char_len = len;
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

json to_json(const Chunk& chunk) {
  return json{{"chunk_id", chunk.chunk_id},
              {"doc_id", chunk.doc_id},
              {"ordinal", chunk.ordinal},
              {"text", chunk.text},
              {"char_span", {chunk.span.start, chunk.span.end}},
              {"char_len", chunk.char_len}};
}

Chunk chunk_from_json(const json& j) {
  Chunk c;
  c.chunk_id = j.at("chunk_id").get<std::string>();
  c.doc_id = j.at("doc_id").get<std::string>();
  c.ordinal = j.at("ordinal").get<std::size_t>();
  c.text = j.at("text").get<std::string>();
  c.span = Span{j.at("char_span").at(0).get<std::size_t>(), j.at("char_span").at(1).get<std::size_t>()};
  c.char_len = j.at("char_len").get<std::size_t>();
  return c;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Chunk>& chunks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  for (const auto& c : chunks) out << to_json(c).dump() << '\n';
}

std::vector<Chunk> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot read " + path.string());
  std::vector<Chunk> chunks;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      chunks.push_back(chunk_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return chunks;
}

}  // namespace evrag::chunker
