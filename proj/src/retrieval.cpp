#include "miwv/retrieval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>
#include <thread>

#include "json.hpp"
#include "miwv/error.hpp"
#include "miwv/json_text.hpp"

namespace miwv {
namespace {

constexpr std::size_t kLanes = 8;
using Lanes = double __attribute__((vector_size(kLanes * sizeof(double))));

inline double reduce(Lanes v) {
    return ((v[0] + v[1]) + (v[2] + v[3])) + ((v[4] + v[5]) + (v[6] + v[7]));
}

// Row-normalized copy of the matrix in double, each row zero-padded to a
// multiple of kLanes. Padding contributes exact zeros to every partial sum.
class UnitRows {
public:
    UnitRows(std::span<const float> rows, std::size_t n, std::size_t d)
        : n_(n), blocks_((d + kLanes - 1) / kLanes), data_(n * blocks_), zero_(n, false) {
        for (std::size_t i = 0; i < n; ++i) {
            const float* src = rows.data() + i * d;
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) acc += static_cast<double>(src[c]) * src[c];
            const double norm = std::sqrt(acc);
            auto* dst = reinterpret_cast<double*>(data_.data() + i * blocks_);
            std::fill(dst, dst + blocks_ * kLanes, 0.0);
            if (norm == 0.0) {
                zero_[i] = true;
                continue;
            }
            for (std::size_t c = 0; c < d; ++c) dst[c] = static_cast<double>(src[c]) / norm;
        }
    }

    std::size_t size() const noexcept { return n_; }
    std::size_t blocks() const noexcept { return blocks_; }
    const Lanes* row(std::size_t i) const noexcept { return data_.data() + i * blocks_; }
    bool zero(std::size_t i) const noexcept { return zero_[i]; }

private:
    std::size_t n_;
    std::size_t blocks_;
    std::vector<Lanes> data_;
    std::vector<bool> zero_;
};

inline double clamp_sim(double s) { return std::clamp(s, -1.0, 1.0); }

// Running argmax for one query. Candidates must be offered in ascending id
// order so that exact ties keep the lowest id.
class BestTracker {
public:
    void offer(double sim, std::size_t id) {
        if (sim > best_) {
            best_ = sim;
            id_ = id;
            std::erase_if(near_, [&](double v) { return best_ - v > kTieTolerance; });
            near_.push_back(sim);
        } else if (best_ - sim <= kTieTolerance) {
            near_.push_back(sim);
        }
    }
    std::size_t id() const noexcept { return id_; }
    double best() const noexcept { return best_; }
    std::size_t ties() const noexcept { return near_.size(); }

private:
    double best_ = -std::numeric_limits<double>::infinity();
    std::size_t id_ = std::numeric_limits<std::size_t>::max();
    std::vector<double> near_;
};

// Dot products of one query row against four candidate rows.
inline void dot4(const Lanes* q, const Lanes* c0, const Lanes* c1, const Lanes* c2,
                 const Lanes* c3, std::size_t blocks, double out[4]) {
    Lanes a0 = {}, a1 = {}, a2 = {}, a3 = {};
    for (std::size_t b = 0; b < blocks; ++b) {
        const Lanes x = q[b];
        a0 += x * c0[b];
        a1 += x * c1[b];
        a2 += x * c2[b];
        a3 += x * c3[b];
    }
    out[0] = reduce(a0);
    out[1] = reduce(a1);
    out[2] = reduce(a2);
    out[3] = reduce(a3);
}

inline double dot1(const Lanes* q, const Lanes* c, std::size_t blocks) {
    Lanes a = {};
    for (std::size_t b = 0; b < blocks; ++b) a += q[b] * c[b];
    return reduce(a);
}

void check_size(std::size_t n) {
    if (n < 2) {
        throw Error(ErrorKind::TooSmall,
                    "nearest-neighbor retrieval needs at least 2 rows, got " + std::to_string(n));
    }
}

std::vector<NeighborAssignment> search(const UnitRows& units, const RetrievalOptions& options) {
    const std::size_t n = units.size();
    const std::size_t blocks = units.blocks();
    const std::size_t block_rows = std::max<std::size_t>(1, options.block_rows);
    // candidate tile sized to stay around 256 KiB
    const std::size_t tile = std::max<std::size_t>(4, (256 * 1024) / (blocks * sizeof(Lanes)));
    const std::size_t n_blocks = (n + block_rows - 1) / block_rows;

    std::vector<NeighborAssignment> out(n);
    std::atomic<std::size_t> next{0};

    auto process_block = [&](std::size_t qb) {
        const std::size_t q0 = qb * block_rows;
        const std::size_t q1 = std::min(n, q0 + block_rows);
        std::vector<BestTracker> best(q1 - q0);
        for (std::size_t t0 = 0; t0 < n; t0 += tile) {
            const std::size_t t1 = std::min(n, t0 + tile);
            for (std::size_t q = q0; q < q1; ++q) {
                auto& tracker = best[q - q0];
                const Lanes* qrow = units.row(q);
                std::size_t j = t0;
                double sims[4];
                for (; j + 4 <= t1; j += 4) {
                    dot4(qrow, units.row(j), units.row(j + 1), units.row(j + 2), units.row(j + 3),
                         blocks, sims);
                    for (std::size_t k = 0; k < 4; ++k) {
                        if (j + k != q) tracker.offer(clamp_sim(sims[k]), j + k);
                    }
                }
                for (; j < t1; ++j) {
                    if (j != q) tracker.offer(clamp_sim(dot1(qrow, units.row(j), blocks)), j);
                }
            }
        }
        for (std::size_t q = q0; q < q1; ++q) {
            const auto& tracker = best[q - q0];
            out[q] = NeighborAssignment{q, tracker.id(), tracker.best(), tracker.ties(),
                                        units.zero(q) || units.zero(tracker.id())};
        }
    };

    auto worker = [&] {
        for (std::size_t qb; (qb = next.fetch_add(1)) < n_blocks;) process_block(qb);
    };
    const std::size_t n_threads = std::min(std::max<std::size_t>(1, options.workers), n_blocks);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    return out;
}

}  // namespace

NeighborAssignment nearest_neighbor_exact(std::size_t query_id, const EmbeddingMatrix& matrix) {
    const std::size_t n = matrix.size();
    check_size(n);
    if (query_id >= n) {
        throw Error(ErrorKind::IdOutOfRange, "query id " + std::to_string(query_id), query_id);
    }
    BestTracker tracker;
    bool degenerate_best = false;
    for (std::size_t j = 0; j < n; ++j) {
        if (j == query_id) continue;
        const auto s = cosine_similarity(matrix.rows[query_id], matrix.rows[j]);
        const auto before = tracker.id();
        tracker.offer(s.value, j);
        if (tracker.id() != before) degenerate_best = s.degenerate;
    }
    return NeighborAssignment{query_id, tracker.id(), tracker.best(), tracker.ties(),
                              degenerate_best};
}

std::vector<NeighborAssignment> all_nearest_neighbors(std::span<const float> rows, std::size_t n,
                                                      std::size_t d,
                                                      const RetrievalOptions& options) {
    check_size(n);
    if (d == 0 || rows.size() != n * d) {
        throw Error(ErrorKind::DimensionMismatch, "row buffer does not hold n x d values");
    }
    return search(UnitRows(rows, n, d), options);
}

NeighborMap all_nearest_neighbors(const EmbeddingMatrix& matrix, const RetrievalOptions& options) {
    const std::size_t n = matrix.size();
    check_size(n);
    const std::size_t d = matrix.dim();
    std::vector<float> dense;
    dense.reserve(n * d);
    for (const auto& r : matrix.rows) {
        if (r.dim() != d) throw Error(ErrorKind::DimensionMismatch, "ragged embedding matrix");
        dense.insert(dense.end(), r.components().begin(), r.components().end());
    }
    NeighborMap map;
    map.assignments = all_nearest_neighbors(dense, n, d, options);
    map.dataset_hash = matrix.dataset_hash;
    map.backend = matrix.backend;
    return map;
}

std::string serialize_neighbor_map(const NeighborMap& map) {
    std::string out;
    for (const auto& a : map.assignments) {
        out += "{\"i\":" + std::to_string(a.query_id) + ",\"k\":" + std::to_string(a.neighbor_id) +
               ",\"sim\":" + format_double(a.similarity) +
               ",\"ties\":" + std::to_string(a.tie_count) + "}\n";
    }
    return out;
}

std::vector<NeighborAssignment> parse_neighbor_lines(std::string_view jsonl) {
    std::vector<NeighborAssignment> out;
    std::size_t line_no = 0;
    while (!jsonl.empty()) {
        const auto nl = jsonl.find('\n');
        const auto line = jsonl.substr(0, nl);
        jsonl.remove_prefix(nl == std::string_view::npos ? jsonl.size() : nl + 1);
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            NeighborAssignment a;
            a.query_id = j.at("i").get<std::size_t>();
            a.neighbor_id = j.at("k").get<std::size_t>();
            a.similarity = j.at("sim").get<double>();
            a.tie_count = j.at("ties").get<std::size_t>();
            out.push_back(a);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Parse, "neighbor map line " + std::to_string(line_no) + ": " + e.what(),
                        line_no);
        }
    }
    return out;
}

}  // namespace miwv
