#include <doctest.h>

#include "evrag/chunker.hpp"
#include "support.hpp"

using namespace evrag::chunker;

namespace {

std::vector<Paragraph> paragraphs_of_lengths(const std::vector<std::size_t>& lengths) {
  std::string text;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (i) text += "\n\n";
    text += std::string(lengths[i], static_cast<char>('a' + i % 26));
  }
  return split_paragraphs(text);
}

std::vector<std::size_t> chunk_lengths(const std::vector<Chunk>& chunks) {
  std::vector<std::size_t> out;
  for (const auto& c : chunks) out.push_back(c.char_len);
  return out;
}

}  // namespace

TEST_CASE("split_paragraphs") {
  auto texts = [](std::string_view s) {
    std::vector<std::string> out;
    for (const auto& p : split_paragraphs(s)) out.push_back(p.text);
    return out;
  };
  CHECK(texts("p1\n\np2") == std::vector<std::string>{"p1", "p2"});
  CHECK(texts("p1") == std::vector<std::string>{"p1"});
  CHECK(texts("\n\np1\n\n") == std::vector<std::string>{"p1"});
  const auto ps = split_paragraphs("p1\n\np2");
  CHECK(ps[1].span == Span{4, 6});
}

TEST_CASE("greedy packing counts the joiner") {
  CHECK(chunk_lengths(chunk_document("d", paragraphs_of_lengths({400, 400, 400}), 1000)) ==
        std::vector<std::size_t>{802, 400});
  CHECK(chunk_lengths(chunk_document("d", paragraphs_of_lengths({200}), 1000)) == std::vector<std::size_t>{200});
  CHECK(chunk_lengths(chunk_document("d", paragraphs_of_lengths({1500}), 1000)) == std::vector<std::size_t>{1500});
  CHECK(chunk_lengths(chunk_document("d", paragraphs_of_lengths({499, 499}), 1000)) == std::vector<std::size_t>{1000});
  CHECK(chunk_lengths(chunk_document("d", paragraphs_of_lengths({500, 499}), 1000)) ==
        std::vector<std::size_t>{500, 499});
}

TEST_CASE("chunk ids, ordinals and spans") {
  const std::string text = "alpha\n\nbeta\n\ngamma";
  const auto chunks = chunk_document("doc", split_paragraphs(text), 8);
  REQUIRE(chunks.size() == 3);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    CHECK(chunks[i].ordinal == i);
    CHECK(chunks[i].chunk_id == make_chunk_id("doc", i));
    CHECK(chunks[i].doc_id == "doc");
  }
  CHECK(chunks[2].span == Span{13, 18});
}

TEST_CASE("multi-byte text is measured in code points") {
  const std::string para = "\xC3\xA9\xC3\xA9\xC3\xA9";  // three e-acute
  const auto chunks = chunk_document("d", split_paragraphs(para + "\n\n" + para), 8);
  REQUIRE(chunks.size() == 1);
  CHECK(chunks[0].char_len == 8);
  CHECK(chunks[0].span == Span{0, 8});
}

TEST_CASE("jsonl round trip") {
  evrag::test::TempDir dir;
  const auto chunks = chunk_document("doc", split_paragraphs("one\n\ntwo \xE2\x80\x94 three"), 5);
  write_jsonl(dir / "c.jsonl", chunks);
  CHECK(read_jsonl(dir / "c.jsonl") == chunks);
  CHECK(chunk_from_json(to_json(chunks[0])) == chunks[0]);
}
