#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "evrag/chunker.hpp"
#include "evrag/ingest.hpp"
#include "evrag/vindex.hpp"

namespace evrag::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUser = 1;
inline constexpr int kExitInternal = 2;

/// Entry point of the `evrag` tool. Returns the process exit code.
int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args);

struct DocumentInfo {
  std::string title;
  ingest::Origin origin = ingest::Origin::AgencyPublication;
};

/// Index payload for one chunk: {"doc_id","title","origin","text","char_span"}.
std::string chunk_payload(const chunker::Chunk& chunk, const DocumentInfo& info);

/// Inserts chunks in order; vectors are matched by chunk_id. Documents missing
/// from `docs` are titled with their doc_id.
vindex::HnswIndex build_chunk_index(const std::vector<chunker::Chunk>& chunks,
                                    const std::vector<vindex::VectorRecord>& vectors,
                                    const std::map<std::string, DocumentInfo>& docs,
                                    const vindex::HnswParams& params = {});

std::map<std::string, DocumentInfo> document_info(const std::vector<ingest::SourceDocument>& docs);

/// Chunks one normalized text file, or every *.txt file of a directory
/// (doc_id = file stem, in name order).
std::vector<chunker::Chunk> chunk_path(const std::filesystem::path& in, std::size_t target_chars);

}  // namespace evrag::cli
