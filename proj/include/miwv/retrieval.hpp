#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "miwv/embedding.hpp"

namespace miwv {

// Similarities within this absolute distance of the maximum count toward tie_count.
inline constexpr double kTieTolerance = 1e-9;

struct NeighborAssignment {
    std::size_t query_id = 0;
    std::size_t neighbor_id = 0;
    double similarity = 0.0;
    std::size_t tie_count = 1;
    bool degenerate = false;  // query or neighbor had zero norm

    friend bool operator==(const NeighborAssignment&, const NeighborAssignment&) = default;
};

struct NeighborMap {
    std::vector<NeighborAssignment> assignments;
    std::string dataset_hash;
    EmbeddingBackendDescriptor backend;
};

// argmax over j != query_id of cosine_similarity; exact ties go to the lowest id.
NeighborAssignment nearest_neighbor_exact(std::size_t query_id, const EmbeddingMatrix& matrix);

struct RetrievalOptions {
    std::size_t block_rows = 64;  // queries per work item
    std::size_t workers = 1;
};

// Same assignments as nearest_neighbor_exact for every id, computed on
// unit-normalized rows held in double precision. Each pairwise dot product uses
// a fixed order (8 interleaved partial sums combined pairwise), so the output
// does not depend on block_rows or workers.
NeighborMap all_nearest_neighbors(const EmbeddingMatrix& matrix, const RetrievalOptions& options = {});

// Same kernel over a dense row-major n x d float matrix.
std::vector<NeighborAssignment> all_nearest_neighbors(std::span<const float> rows, std::size_t n,
                                                      std::size_t d,
                                                      const RetrievalOptions& options = {});

// JSONL, one {"i","k","sim","ties"} object per query.
std::string serialize_neighbor_map(const NeighborMap& map);
std::vector<NeighborAssignment> parse_neighbor_lines(std::string_view jsonl);

}  // namespace miwv
