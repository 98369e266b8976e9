#include "evrag/cli.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <pthread.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "evrag/embedding.hpp"
#include "evrag/error.hpp"
#include "evrag/evalkit.hpp"
#include "evrag/mcp.hpp"
#include "evrag/orchestrate.hpp"
#include "evrag/pubmed.hpp"
#include "evrag/service.hpp"
#include "evrag/session_store.hpp"

namespace evrag::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string chunk_payload(const chunker::Chunk& chunk, const DocumentInfo& info) {
  return json{{"doc_id", chunk.doc_id},
              {"title", info.title.empty() ? chunk.doc_id : info.title},
              {"origin", ingest::to_string(info.origin)},
              {"text", chunk.text},
              {"char_span", json::array({chunk.span.start, chunk.span.end})}}
      .dump();
}

vindex::HnswIndex build_chunk_index(const std::vector<chunker::Chunk>& chunks,
                                    const std::vector<vindex::VectorRecord>& vectors,
                                    const std::map<std::string, DocumentInfo>& docs,
                                    const vindex::HnswParams& params) {
  if (vectors.empty()) throw Error(ErrorCode::InvalidArgument, "no vectors to index");
  std::map<std::string, const vindex::VectorRecord*> by_id;
  for (const auto& v : vectors) by_id[v.id] = &v;
  vindex::HnswIndex index(vectors.front().vector.dim(), params);
  for (const auto& c : chunks) {
    auto it = by_id.find(c.chunk_id);
    if (it == by_id.end()) throw Error(ErrorCode::InvalidArgument, "no vector for chunk " + c.chunk_id);
    auto doc = docs.find(c.doc_id);
    const DocumentInfo info = doc == docs.end() ? DocumentInfo{c.doc_id, ingest::Origin::AgencyPublication}
                                                : doc->second;
    index.insert(c.chunk_id, it->second->vector, chunk_payload(c, info));
  }
  return index;
}

std::map<std::string, DocumentInfo> document_info(const std::vector<ingest::SourceDocument>& docs) {
  std::map<std::string, DocumentInfo> out;
  for (const auto& d : docs) out[d.doc_id] = DocumentInfo{d.title.empty() ? d.doc_id : d.title, d.origin};
  return out;
}

std::vector<chunker::Chunk> chunk_path(const fs::path& in, std::size_t target_chars) {
  std::vector<fs::path> files;
  if (fs::is_directory(in)) {
    for (const auto& entry : fs::directory_iterator(in)) {
      if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(in);
  }
  std::vector<chunker::Chunk> chunks;
  for (const auto& f : files) {
    std::ifstream file(f, std::ios::binary);
    if (!file) throw Error(ErrorCode::NotFound, "cannot read " + f.string());
    const std::string text((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    auto doc_chunks = chunker::chunk_document(f.stem().string(), chunker::split_paragraphs(text), target_chars);
    chunks.insert(chunks.end(), std::make_move_iterator(doc_chunks.begin()), std::make_move_iterator(doc_chunks.end()));
  }
  return chunks;
}

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
}

std::unique_ptr<embedding::Embedder> embedder_for(std::size_t dim) {
  auto cfg = embedding::EmbedderConfig::from_env();
  cfg.dim = dim;
  return embedding::make_embedder(cfg);
}

std::shared_ptr<pubmed::LitClient> literature_client() {
  return std::make_shared<pubmed::LitClient>(pubmed::ClientConfig::from_env(), http::default_client());
}

std::unique_ptr<orchestrate::LlmProvider> llm_provider() {
  auto cfg = orchestrate::RemoteLlmConfig::from_env();
  if (cfg.endpoint.empty()) return std::make_unique<orchestrate::StubLlm>();
  return std::make_unique<orchestrate::RemoteLlm>(cfg, http::default_client());
}

bool is_user_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::TransportError:
    case ErrorCode::RateLimited:
    case ErrorCode::ProviderUnavailable:
    case ErrorCode::HandlerError:
    case ErrorCode::ParseError:
      return false;
    default:
      return true;
  }
}

// --- subcommand bodies ------------------------------------------------------

int do_ingest(const std::string& manifest, const std::string& out, const std::string& extractors) {
  const auto docs = ingest::load_manifest(manifest);
  const auto registry = extractors.empty() ? ingest::ExtractorRegistry::with_defaults()
                                           : ingest::ExtractorRegistry::from_json(read_json_file(extractors));
  const auto reports = ingest::run_ingest(docs, registry, out);
  for (const auto& r : reports) {
    std::cout << r.doc_id << '\t' << ingest::to_string(r.tier_used) << '\t' << r.replacement_ratio << '\t'
              << r.char_count << '\n';
  }
  spdlog::info("ingested {} documents into {}", reports.size(), out);
  return kExitOk;
}

int do_chunk(const std::string& in, std::size_t target, const std::string& out) {
  const auto chunks = chunk_path(in, target);
  chunker::write_jsonl(out, chunks);
  spdlog::info("wrote {} chunks to {}", chunks.size(), out);
  return kExitOk;
}

int do_embed(const std::string& in, const std::string& out, std::size_t dim) {
  const auto chunks = chunker::read_jsonl(in);
  std::vector<std::string> texts;
  texts.reserve(chunks.size());
  for (const auto& c : chunks) texts.push_back(c.text);
  const auto embedder = embedder_for(dim);
  auto vectors = embedding::embed_texts(texts, *embedder);
  std::vector<vindex::VectorRecord> records;
  records.reserve(chunks.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) records.push_back({chunks[i].chunk_id, std::move(vectors[i])});
  vindex::write_vectors(out, dim, records);
  spdlog::info("wrote {} vectors of dimension {} to {}", records.size(), dim, out);
  return kExitOk;
}

int do_index_build(const std::string& chunks_path, const std::string& vectors_path, const std::string& out,
                   const std::string& manifest, std::size_t m, std::uint64_t seed, std::size_t ef_construction) {
  const auto chunks = chunker::read_jsonl(chunks_path);
  const auto vectors = vindex::read_vectors(vectors_path);
  std::map<std::string, DocumentInfo> docs;
  if (!manifest.empty()) docs = document_info(ingest::load_manifest(manifest));
  auto params = vindex::HnswParams::with_m(m, seed);
  params.ef_construction = ef_construction;
  params.validate();
  const auto index = build_chunk_index(chunks, vectors, docs, params);
  index.persist(out);
  spdlog::info("indexed {} chunks into {}", index.size(), out);
  return kExitOk;
}

int do_index_query(const std::string& index_path, const std::string& text, std::size_t k,
                   std::optional<std::size_t> ef) {
  const auto index = vindex::HnswIndex::load(index_path);
  const auto embedder = embedder_for(index.dim());
  const auto hits = index.search(embedder->embed_one(text), k, ef);
  int rank = 1;
  for (const auto& h : hits) {
    const auto payload = json::parse(h.payload, nullptr, false);
    const std::string title = payload.is_object() ? payload.value("title", h.item_id) : h.item_id;
    std::cout << json{{"rank", rank},
                      {"item_id", h.item_id},
                      {"score", h.score},
                      {"display", "#" + std::to_string(rank) + " - " + title + " | " +
                                      orchestrate::format_match_percent(h.score) + "% match"}}
                     .dump()
              << '\n';
    ++rank;
  }
  return kExitOk;
}

int do_litsearch(const std::string& term, std::size_t k, int years_back, bool no_reviews) {
  pubmed::LitQuery q;
  q.term = term;
  q.max_results = k;
  q.years_back = years_back;
  q.prefer_reviews = !no_reviews;
  q.validate();
  for (const auto& a : literature_client()->find(q)) std::cout << pubmed::to_json(a).dump() << '\n';
  return kExitOk;
}

int do_mcp_serve() {
  const auto registry = mcp::make_literature_registry(literature_client());
  mcp::Server server(registry);
  return server.serve(std::cin, std::cout) ? kExitOk : kExitInternal;
}

std::vector<std::string> read_questions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "cannot read " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) out.push_back(line);
  }
  return out;
}

int do_eval_dedup(const std::string& in, double threshold, bool as_json) {
  const auto questions = read_questions(in);
  const auto embedder = embedder_for(embedding::kDefaultDim);
  const auto result = evalkit::dedup_questions(questions, *embedder, threshold);
  if (as_json) {
    json removed = json::array();
    for (const auto& p : result.removed_pairs) {
      removed.push_back(json{{"kept", p.kept}, {"removed", p.removed}, {"similarity", p.similarity}});
    }
    std::cout << json{{"kept", result.kept}, {"kept_indices", result.kept_indices}, {"removed_pairs", removed}}.dump(2)
              << '\n';
    return kExitOk;
  }
  std::cout << "kept " << result.kept.size() << " of " << questions.size() << " questions\n";
  for (std::size_t i = 0; i < result.kept.size(); ++i) {
    std::cout << "  " << result.kept_indices[i] + 1 << ". " << result.kept[i] << '\n';
  }
  for (const auto& p : result.removed_pairs) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", p.similarity);
    std::cout << "removed " << p.removed + 1 << " (duplicate of " << p.kept + 1 << ", similarity " << buf << ")\n";
  }
  return kExitOk;
}

int do_eval_summarize(const std::string& in, const std::string& by, bool as_json) {
  const auto ratings = evalkit::read_ratings_csv(in);
  const auto group = evalkit::parse_group_by(by);
  std::vector<evalkit::SummaryRow> rows;
  if (group == evalkit::GroupBy::Category) {
    std::map<std::string, evalkit::Category> categories;
    for (const auto& r : ratings) {
      auto [it, inserted] = categories.emplace(r.question_id, r.category);
      if (!inserted && it->second != r.category) {
        throw Error(ErrorCode::InvalidArgument, "question " + r.question_id + " appears under two categories");
      }
    }
    rows = evalkit::category_summary(ratings, categories);
  } else {
    rows = evalkit::likert_summary(ratings, group);
  }
  if (as_json) {
    json out = json::array();
    for (const auto& r : rows) out.push_back(evalkit::to_json(r));
    std::cout << out.dump(2) << '\n';
  } else {
    std::cout << evalkit::render_table(rows);
  }
  return kExitOk;
}

int do_eval_kappa(const std::string& in, int binarize, bool as_json) {
  const auto paired = evalkit::pair_raters(evalkit::read_ratings_csv(in));
  const double kappa = evalkit::cohen_kappa(paired.a, paired.b, binarize);
  if (as_json) {
    std::cout << json{{"kappa", kappa},
                      {"pairs", paired.a.size()},
                      {"unpaired", paired.unpaired},
                      {"rater_a", paired.rater_a},
                      {"rater_b", paired.rater_b},
                      {"binarize_at", binarize}}
                     .dump(2)
              << '\n';
    return kExitOk;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", kappa);
  std::cout << "raters   " << paired.rater_a << ", " << paired.rater_b << '\n'
            << "pairs    " << paired.a.size() << " (" << paired.unpaired << " unpaired)\n"
            << "cutoff   acceptable at score >= " << binarize << '\n'
            << "kappa    " << buf << '\n';
  return kExitOk;
}

struct ServeOptions {
  std::string bind;
  std::string sessions_dir;
  std::string index_path;
  std::string static_dir;
  bool no_literature = false;
  bool dry_run = false;
};

int do_serve(const ServeOptions& opt) {
  orchestrate::Dependencies deps;
  if (!opt.index_path.empty() && fs::exists(opt.index_path)) {
    deps.retrieval.index = std::make_shared<const vindex::HnswIndex>(vindex::HnswIndex::load(opt.index_path));
    spdlog::info("loaded index {} ({} items)", opt.index_path, deps.retrieval.index->size());
  } else {
    spdlog::warn("no index at '{}'; chat requests will report index_unavailable", opt.index_path);
  }
  const std::size_t dim = deps.retrieval.index ? deps.retrieval.index->dim() : embedding::kDefaultDim;
  const auto embedder = embedder_for(dim);
  deps.retrieval.embedder = embedder.get();
  if (!opt.no_literature) deps.retrieval.literature = literature_client();
  const auto llm = llm_provider();
  deps.llm = llm.get();

  service::ChatService chat(std::make_shared<service::SessionStore>(opt.sessions_dir), std::move(deps));
  service::HttpServer server(chat, opt.static_dir);
  const auto addr = service::parse_bind_address(opt.bind);
  const int port = server.bind(addr);
  spdlog::info("listening on {}:{}", addr.host, port);
  if (opt.dry_run) return kExitOk;

  // Route SIGINT/SIGTERM to a watcher thread that stops the server.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  std::thread watcher([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    spdlog::info("signal {} received, shutting down", sig);
    server.stop();
  });
  const bool ok = server.listen();
  pthread_kill(watcher.native_handle(), SIGTERM);
  watcher.join();
  return ok ? kExitOk : kExitInternal;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Evidence-grounded question answering over a regulatory corpus and the biomedical literature",
               "evrag"};
  app.require_subcommand(1);

  auto* ingest_cmd = app.add_subcommand("ingest", "Extract and normalize the documents of a corpus manifest");
  std::string manifest;
  std::string ingest_out;
  std::string extractors;
  ingest_cmd->add_option("--manifest", manifest, "Corpus manifest (JSON)")->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--out", ingest_out, "Output directory")->required();
  ingest_cmd->add_option("--extractors", extractors, "Extractor tier configuration (JSON)")
      ->check(CLI::ExistingFile);

  auto* chunk_cmd = app.add_subcommand("chunk", "Split normalized text into paragraph-bounded chunks");
  std::string chunk_in;
  std::size_t target = chunker::kDefaultTargetChars;
  std::string chunk_out;
  chunk_cmd->add_option("--in", chunk_in, "Normalized .txt file or directory of them")
      ->required()
      ->check(CLI::ExistingPath);
  chunk_cmd->add_option("--target", target, "Target chunk length in characters")->check(CLI::PositiveNumber);
  chunk_cmd->add_option("--out", chunk_out, "Output chunks.jsonl")->required();

  auto* embed_cmd = app.add_subcommand("embed", "Embed chunks into vectors.bin");
  std::string embed_in;
  std::string embed_out;
  std::size_t dim = embedding::kDefaultDim;
  embed_cmd->add_option("--in", embed_in, "chunks.jsonl")->required()->check(CLI::ExistingFile);
  embed_cmd->add_option("--out", embed_out, "Output vectors.bin")->required();
  embed_cmd->add_option("--dim", dim, "Embedding dimension")->check(CLI::PositiveNumber);

  auto* index_cmd = app.add_subcommand("index", "Build or query the vector index");
  index_cmd->require_subcommand(1);
  auto* build_cmd = index_cmd->add_subcommand("build", "Build an HNSW index from chunks and vectors");
  std::string build_chunks;
  std::string build_vectors;
  std::string build_out;
  std::string build_manifest;
  std::size_t m = vindex::HnswParams{}.M;
  std::uint64_t seed = vindex::HnswParams{}.rng_seed;
  std::size_t ef_construction = vindex::HnswParams{}.ef_construction;
  build_cmd->add_option("--chunks", build_chunks, "chunks.jsonl")->required()->check(CLI::ExistingFile);
  build_cmd->add_option("--vectors", build_vectors, "vectors.bin")->required()->check(CLI::ExistingFile);
  build_cmd->add_option("--out", build_out, "Output index file")->required();
  build_cmd->add_option("--manifest", build_manifest, "Corpus manifest, for document titles")
      ->check(CLI::ExistingFile);
  build_cmd->add_option("--m", m, "Neighbors per node");
  build_cmd->add_option("--seed", seed, "Level RNG seed");
  build_cmd->add_option("--ef-construction", ef_construction, "Candidate list size during insert");

  auto* query_cmd = index_cmd->add_subcommand("query", "Query an index with free text");
  std::string query_index;
  std::string query_text;
  std::size_t query_k = 3;
  std::optional<std::size_t> query_ef;
  query_cmd->add_option("--index", query_index, "Index file")->required()->check(CLI::ExistingFile);
  query_cmd->add_option("--text", query_text, "Query text")->required();
  query_cmd->add_option("--k", query_k, "Number of hits")->check(CLI::PositiveNumber);
  query_cmd->add_option("--ef", query_ef, "Candidate list size");

  auto* lit_cmd = app.add_subcommand("litsearch", "Search PubMed");
  std::string term;
  std::size_t lit_k = 3;
  int years_back = 5;
  bool no_reviews = false;
  lit_cmd->add_option("--term", term, "Search term")->required();
  lit_cmd->add_option("--k", lit_k, "Number of articles")->check(CLI::PositiveNumber);
  lit_cmd->add_option("--years-back", years_back, "Publication window in years")->check(CLI::NonNegativeNumber);
  lit_cmd->add_flag("--no-reviews", no_reviews, "Do not rank reviews first");

  auto* mcp_cmd = app.add_subcommand("mcp-serve", "Serve the literature tool over JSON-RPC on stdio");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluation utilities");
  eval_cmd->require_subcommand(1);
  bool as_json = false;
  auto* dedup_cmd = eval_cmd->add_subcommand("dedup", "Drop near-duplicate questions");
  std::string dedup_in;
  double threshold = 0.90;
  dedup_cmd->add_option("--in", dedup_in, "Questions, one per line")->required()->check(CLI::ExistingFile);
  dedup_cmd->add_option("--threshold", threshold, "Cosine similarity threshold")->check(CLI::Range(0.0, 1.0));
  dedup_cmd->add_flag("--json", as_json, "Machine-readable output");
  auto* summarize_cmd = eval_cmd->add_subcommand("summarize", "Likert mean (SD) summaries");
  std::string summarize_in;
  std::string by = "criterion";
  summarize_cmd->add_option("--in", summarize_in, "ratings.csv")->required()->check(CLI::ExistingFile);
  summarize_cmd->add_option("--by", by, "criterion | category | overall")
      ->check(CLI::IsMember({"criterion", "category", "overall"}));
  summarize_cmd->add_flag("--json", as_json, "Machine-readable output");
  auto* kappa_cmd = eval_cmd->add_subcommand("kappa", "Cohen's kappa between two raters");
  std::string kappa_in;
  int binarize = 3;
  kappa_cmd->add_option("--in", kappa_in, "ratings.csv")->required()->check(CLI::ExistingFile);
  kappa_cmd->add_option("--binarize", binarize, "Lowest acceptable score")->check(CLI::Range(1, 5));
  kappa_cmd->add_flag("--json", as_json, "Machine-readable output");

  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
  ServeOptions serve;
  serve.bind = env_or("BIND_ADDR", "127.0.0.1:8080");
  serve.sessions_dir = env_or("SESSIONS_DIR", "sessions");
  serve.index_path = env_or("INDEX_PATH", "index.evrx");
  serve_cmd->add_option("--bind", serve.bind, "host:port (BIND_ADDR)");
  serve_cmd->add_option("--sessions-dir", serve.sessions_dir, "Session storage (SESSIONS_DIR)");
  serve_cmd->add_option("--index", serve.index_path, "Index file (INDEX_PATH)");
  serve_cmd->add_option("--static-dir", serve.static_dir, "Directory of web client assets")
      ->check(CLI::ExistingDirectory);
  serve_cmd->add_flag("--no-literature", serve.no_literature, "Disable the literature path");
  serve_cmd->add_flag("--dry-run", serve.dry_run, "Load everything and bind, then exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUser;
  }

  if (*ingest_cmd) return do_ingest(manifest, ingest_out, extractors);
  if (*chunk_cmd) return do_chunk(chunk_in, target, chunk_out);
  if (*embed_cmd) return do_embed(embed_in, embed_out, dim);
  if (*build_cmd) {
    return do_index_build(build_chunks, build_vectors, build_out, build_manifest, m, seed, ef_construction);
  }
  if (*query_cmd) return do_index_query(query_index, query_text, query_k, query_ef);
  if (*lit_cmd) return do_litsearch(term, lit_k, years_back, no_reviews);
  if (*mcp_cmd) return do_mcp_serve();
  if (*dedup_cmd) return do_eval_dedup(dedup_in, threshold, as_json);
  if (*summarize_cmd) return do_eval_summarize(summarize_in, by, as_json);
  if (*kappa_cmd) return do_eval_kappa(kappa_in, binarize, as_json);
  if (*serve_cmd) return do_serve(serve);
  std::cerr << app.help();
  return kExitUser;
}

void use_stderr_logger() {
  static const bool installed = [] {
    auto logger = spdlog::get("evrag");
    if (!logger) logger = spdlog::stderr_color_mt("evrag");
    spdlog::set_default_logger(logger);
    if (const char* level = std::getenv("EVRAG_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(level));
    return true;
  }();
  (void)installed;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  use_stderr_logger();
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_user_error(e.code()) ? kExitUser : kExitInternal;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUser;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

int cli_main(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  for (const auto& a : args) argv.push_back(a.c_str());
  argv.push_back(nullptr);
  return cli_main(static_cast<int>(args.size()), argv.data());
}

}  // namespace evrag::cli
