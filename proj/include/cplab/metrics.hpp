#ifndef CPLAB_METRICS_HPP_
#define CPLAB_METRICS_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include "cplab/dataset.hpp"

namespace cplab {

// Euclidean distances between columns: result(i, j) = ||q_i - g_j||.
// With normalize, both sets are L2-normalized first.
Matrix pairwise_distances(const Matrix& query, const Matrix& gallery, bool normalize);

struct RankingResult {
  // Per evaluated query: gallery indices by ascending distance (ties by index).
  std::vector<std::vector<std::size_t>> rankings;
  std::vector<std::size_t> query_index;   // batch column of each evaluated query
  std::vector<double> average_precision;  // per evaluated query
  std::vector<std::size_t> first_hit;     // 1-based rank of the first relevant item
  // cmc[k] = fraction of evaluated queries with a relevant item in the top k+1.
  std::vector<double> cmc;
  double mean_ap = 0.0;
  // Queries with no relevant gallery item; they are left out of every average.
  std::vector<std::size_t> excluded;

  double rank(std::size_t k) const;  // CMC at rank k (1-based), 0 if empty
};

RankingResult evaluate_retrieval(const LabeledBatch& query, const LabeledBatch& gallery,
                                 bool normalize = true);

// CSV "query,ap,first_hit_rank", one line per evaluated query.
void write_ranking_csv(std::ostream& os, const RankingResult& r);
// {"mAP":..,"cmc1":..,"cmc5":..,"queries":..,"excluded":..} on one line.
std::string ranking_summary_json(const RankingResult& r);

}  // namespace cplab

#endif  // CPLAB_METRICS_HPP_
