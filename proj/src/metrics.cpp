#include "cplab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "cplab/error.hpp"
#include "json.hpp"

namespace cplab {
namespace {

Matrix normalized_cols(const Matrix& m) {
  Matrix out = m;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, c) * m(r, c);
    const double n = std::sqrt(s);
    if (n == 0.0) continue;
    for (std::size_t r = 0; r < m.rows(); ++r) out(r, c) = m(r, c) / n;
  }
  return out;
}

}  // namespace

Matrix pairwise_distances(const Matrix& query, const Matrix& gallery, bool normalize) {
  if (query.rows() != gallery.rows())
    throw ShapeError("pairwise_distances: query " + query.shape_string() + " vs gallery " +
                     gallery.shape_string());
  const Matrix q = normalize ? normalized_cols(query) : query;
  const Matrix g = normalize ? normalized_cols(gallery) : gallery;
  Matrix d(q.cols(), g.cols());
  for (std::size_t i = 0; i < q.cols(); ++i) {
    for (std::size_t j = 0; j < g.cols(); ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < q.rows(); ++r) {
        const double diff = q(r, i) - g(r, j);
        s += diff * diff;
      }
      d(i, j) = std::sqrt(s);
    }
  }
  return d;
}

double RankingResult::rank(std::size_t k) const {
  if (k == 0 || cmc.empty()) return 0.0;
  return cmc[std::min(k, cmc.size()) - 1];
}

RankingResult evaluate_retrieval(const LabeledBatch& query, const LabeledBatch& gallery,
                                 bool normalize) {
  if (query.features.cols() != query.labels.size() || gallery.features.cols() != gallery.labels.size())
    throw ShapeError("evaluate_retrieval: label count does not match features");
  const Matrix dist = pairwise_distances(query.features, gallery.features, normalize);
  const std::size_t ng = gallery.size();
  RankingResult res;
  std::vector<double> hits_at(ng, 0.0);
  for (std::size_t qi = 0; qi < query.size(); ++qi) {
    std::vector<std::size_t> order(ng);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist(qi, a) < dist(qi, b); });
    // Extended precision so short lists round once (hits {1,3} give 5/6 exactly).
    long double hits = 0.0L, precision_sum = 0.0L;
    std::size_t first = 0;
    for (std::size_t pos = 0; pos < ng; ++pos) {
      if (gallery.labels[order[pos]] != query.labels[qi]) continue;
      hits += 1.0L;
      precision_sum += hits / static_cast<long double>(pos + 1);
      if (first == 0) first = pos + 1;
    }
    if (hits == 0.0L) {
      res.excluded.push_back(qi);
      continue;
    }
    res.query_index.push_back(qi);
    res.average_precision.push_back(static_cast<double>(precision_sum / hits));
    res.first_hit.push_back(first);
    res.rankings.push_back(std::move(order));
    hits_at[first - 1] += 1.0;
  }
  const double evaluated = static_cast<double>(res.query_index.size());
  res.cmc.assign(ng, 0.0);
  if (evaluated > 0) {
    double cum = 0.0;
    for (std::size_t k = 0; k < ng; ++k) {
      cum += hits_at[k];
      res.cmc[k] = cum / evaluated;
    }
    long double total = 0.0L;
    for (double ap : res.average_precision) total += ap;
    res.mean_ap = static_cast<double>(total / evaluated);
  }
  return res;
}

void write_ranking_csv(std::ostream& os, const RankingResult& r) {
  os << "query,ap,first_hit_rank\n";
  for (std::size_t i = 0; i < r.query_index.size(); ++i) {
    os << r.query_index[i] << ',' << format_double(r.average_precision[i]) << ',' << r.first_hit[i]
       << '\n';
  }
}

std::string ranking_summary_json(const RankingResult& r) {
  nlohmann::ordered_json j;
  j["mAP"] = r.mean_ap;
  j["cmc1"] = r.rank(1);
  j["cmc5"] = r.rank(5);
  j["queries"] = r.query_index.size();
  j["excluded"] = r.excluded.size();
  return j.dump();
}

}  // namespace cplab
