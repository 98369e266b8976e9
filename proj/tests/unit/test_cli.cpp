#include <doctest.h>

#include <cstdlib>

#include "evrag/cli.hpp"
#include "evrag/vindex.hpp"
#include "support.hpp"

using namespace evrag;
using evrag::cli::cli_main;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "evrag");
  return cli_main(args);
}

struct CleanEnv {
  CleanEnv() {
    for (const char* v : {"EMBED_ENDPOINT", "LLM_ENDPOINT", "NCBI_BASE_URL"}) ::unsetenv(v);
  }
};

}  // namespace

TEST_CASE("help and usage errors") {
  CleanEnv env;
  CHECK(run({"--help"}) == cli::kExitOk);
  CHECK(run({"index", "--help"}) == cli::kExitOk);
  CHECK(run({"eval", "kappa", "--help"}) == cli::kExitOk);
  CHECK(run({}) == cli::kExitUser);
  CHECK(run({"frobnicate"}) == cli::kExitUser);
  CHECK(run({"index", "query", "--text", "x"}) == cli::kExitUser);
  CHECK(run({"index", "query", "--index", "/nonexistent/file", "--text", "x"}) == cli::kExitUser);
}

TEST_CASE("full pipeline") {
  CleanEnv env;
  test::TempDir dir;
  const auto manifest = test::fixture("corpus/manifest.json").string();
  const auto p = [&](const char* name) { return (dir / name).string(); };
  REQUIRE(run({"ingest", "--manifest", manifest, "--out", p("norm")}) == 0);
  REQUIRE(run({"chunk", "--in", p("norm"), "--out", p("chunks.jsonl")}) == 0);
  REQUIRE(run({"embed", "--in", p("chunks.jsonl"), "--out", p("vectors.bin")}) == 0);
  REQUIRE(run({"index", "build", "--chunks", p("chunks.jsonl"), "--vectors", p("vectors.bin"), "--manifest",
               manifest, "--out", p("index.evrx")}) == 0);
  CHECK(run({"index", "query", "--index", p("index.evrx"), "--text", "cocaine heart", "--k", "2"}) == 0);
  CHECK(run({"serve", "--dry-run", "--bind", "127.0.0.1:0", "--index", p("index.evrx"), "--sessions-dir",
             p("sessions"), "--no-literature"}) == 0);
  const auto index = vindex::HnswIndex::load(dir / "index.evrx");
  CHECK(index.size() > 10);
  CHECK(index.payload(0).find("\"title\":\"Cocaine-Drug-Fact-Sheet\"") != std::string::npos);
}

TEST_CASE("eval subcommands") {
  CleanEnv env;
  test::TempDir dir;
  test::write_file(dir / "q.txt", "What is fentanyl?\nWhat is fentanyl?\nHow is heroin scheduled?\n");
  CHECK(run({"eval", "dedup", "--in", (dir / "q.txt").string(), "--json"}) == 0);
  test::write_file(dir / "r.csv",
                   "interaction_id,question_id,category,criterion,rater_id,score\n"
                   "i1,q1,health_effects,factual_accuracy,a,4\n"
                   "i1,q1,health_effects,factual_accuracy,b,5\n"
                   "i2,q2,prevention,factual_accuracy,a,2\n"
                   "i2,q2,prevention,factual_accuracy,b,1\n");
  CHECK(run({"eval", "summarize", "--in", (dir / "r.csv").string(), "--by", "criterion"}) == 0);
  CHECK(run({"eval", "kappa", "--in", (dir / "r.csv").string(), "--binarize", "3"}) == 0);
  CHECK(run({"eval", "summarize", "--in", (dir / "r.csv").string(), "--by", "weekday"}) == cli::kExitUser);
  test::write_file(dir / "bad.csv", "nope\n");
  CHECK(run({"eval", "kappa", "--in", (dir / "bad.csv").string()}) == cli::kExitUser);
}

TEST_CASE("helpers") {
  chunker::Chunk c;
  c.chunk_id = "d#0000";
  c.doc_id = "d";
  c.text = "hello";
  c.span = {0, 5};
  const auto payload = nlohmann::json::parse(cli::chunk_payload(c, {"Title", ingest::Origin::VideoTranscript}));
  CHECK(payload.at("title") == "Title");
  CHECK(payload.at("origin") == "video_transcript");
  CHECK(payload.at("text") == "hello");
  CHECK(payload.at("char_span") == nlohmann::json::array({0, 5}));
}
