#include "cplab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "cplab/cifar.hpp"
#include "cplab/error.hpp"
#include "cplab/synthetic.hpp"

namespace cplab {

LabeledDataset load_dataset(const ExperimentConfig& cfg) {
  const DataConfig& d = cfg.data;
  if (d.source == "csv") return load_csv(d.path);
  if (d.source == "cifar") {
    return load_cifar_bin(d.path, CifarOptions{d.cifar_classes, d.cifar_max_per_class, d.cifar_downsample});
  }
  const std::uint64_t seed = derive_seed(cfg.seed, "data");
  if (d.fixture == "retrieval") {
    RetrievalTaskSpec spec = d.retrieval;
    if (d.dim > 0) spec.dim = d.dim;
    return retrieval_fixture(seed, spec);
  }
  FixtureOptions opts;
  if (d.fixture == "three-class") opts = {2, 200};
  if (d.fixture == "separable") opts = {4, 100};
  if (d.per_class > 0) opts.per_class = d.per_class;
  if (d.dim > 0) opts.dim = d.dim;
  if (d.fixture == "two-class") return two_class_fixture(seed, opts);
  if (d.fixture == "bimodal") return bimodal_fixture(seed, opts);
  if (d.fixture == "three-class") return three_class_fixture(seed, opts);
  if (d.fixture == "separable") return separable_fixture(seed, opts);
  throw ContractError("unknown fixture '" + d.fixture + "'");
}

std::map<int, double> class_mean_errors(const SurfaceGrid& grid) {
  std::map<int, double> sum;
  std::map<int, std::size_t> count;
  for (const auto& p : grid.points) {
    sum[p.label] += p.error;
    ++count[p.label];
  }
  for (auto& [label, s] : sum) s /= static_cast<double>(count[label]);
  return sum;
}

void write_surface_csv(std::ostream& os, const SurfaceGrid& grid) {
  os << "x,y,label,e_i,boundary\n";
  for (const auto& p : grid.points) {
    os << format_double(p.x) << ',' << format_double(p.y) << ',' << p.label << ','
       << format_double(p.error) << ',' << (p.boundary ? 1 : 0) << '\n';
  }
}

namespace {

void require_2d(const Matrix& features, const char* what) {
  if (features.rows() != 2)
    throw ContractError(std::string(what) + " needs 2-D points, got dim " + std::to_string(features.rows()));
}

// Identity-initialized predictor refit on the points; returns e_i per column.
std::vector<double> refit_errors(const Matrix& points, std::span<const int> labels, std::uint64_t seed,
                                 const RefitConfig& refit, std::size_t hidden, RefitResult* out) {
  Rng rng(seed);
  CenterPredictor predictor({points.rows(), hidden, 2, false, false}, rng);
  predictor.init_identity(rng);
  *out = refit_predictor(predictor, points, labels, refit, rng);
  const Var x = Var::constant(points);
  const Matrix targets = cpl_targets(x, labels, refit.cpl, &rng).value();
  predictor.set_mode(Mode::kEval);
  return cpl_sample_errors(predictor.forward(x).value(), targets);
}

}  // namespace

SurfaceResult run_loss_surface(const LabeledDataset& ds, const std::string& loss_kind,
                               std::uint64_t seed, const RefitConfig& refit,
                               std::size_t predictor_hidden) {
  require_2d(ds.features(), "loss surface");
  const Matrix& x = ds.features();
  SurfaceResult res;
  res.grid.loss_kind = loss_kind;
  res.grid.seed = seed;
  std::vector<double> errors(ds.size(), 0.0);
  if (loss_kind == "center") {
    for (const auto& [label, recs] : ds.index()) {
      double mx = 0.0, my = 0.0;
      for (std::size_t i : recs) {
        mx += x(0, i);
        my += x(1, i);
      }
      mx /= static_cast<double>(recs.size());
      my /= static_cast<double>(recs.size());
      for (std::size_t i : recs) errors[i] = (x(0, i) - mx) * (x(0, i) - mx) + (x(1, i) - my) * (x(1, i) - my);
    }
  } else if (loss_kind == "cpl") {
    errors = refit_errors(x, ds.labels(), derive_seed(seed, "surface/refit"), refit, predictor_hidden, &res.refit);
  } else {
    throw ContractError("surface loss must be center or cpl, got '" + loss_kind + "'");
  }
  for (std::size_t i = 0; i < ds.size(); ++i)
    res.grid.points.push_back({x(0, i), x(1, i), ds.labels()[i], errors[i], false});
  return res;
}

BoundaryResult run_boundary_experiment(const LabeledDataset& raw, const ExperimentConfig& cfg) {
  if (cfg.train.model.embedding_dim != 2) throw ContractError("boundary experiment needs a 2-D embedding");
  const std::size_t classes = raw.num_identities();
  if (classes < 2 || classes > 3) throw ContractError("boundary experiment needs 2 or 3 classes");
  const LabeledDataset ds(raw.features(), dense_labels(raw.labels()));

  TrainResult trained = train_run(ds, cfg.train);
  Model& model = trained.state.model;
  BoundaryResult res;
  res.timeline = std::move(trained.timeline);
  res.accuracy = train_accuracy(model, ds);

  Matrix emb = embed_all(model, ds.features());
  const Matrix logits = model.classifier.forward(Var::constant(emb)).value();
  for (std::size_t c = 0; c < emb.cols(); ++c) {
    const double n = std::sqrt(emb(0, c) * emb(0, c) + emb(1, c) * emb(1, c));
    if (!(n > 0.0)) throw NumericError("zero embedding cannot be normalized");
    emb(0, c) /= n;
    emb(1, c) /= n;
  }

  std::vector<double> margin(ds.size());
  for (std::size_t c = 0; c < ds.size(); ++c) {
    double best = -INFINITY, second = -INFINITY;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      const double v = logits(r, c);
      if (v > best) {
        second = best;
        best = v;
      } else if (v > second) {
        second = v;
      }
    }
    margin[c] = best - second;
  }
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return margin[a] < margin[b]; });
  const auto band = static_cast<std::size_t>(std::ceil(cfg.boundary_band * static_cast<double>(ds.size())));
  std::vector<bool> boundary(ds.size(), false);
  for (std::size_t i = 0; i < band && i < order.size(); ++i) boundary[order[i]] = true;

  const std::vector<double> errors = refit_errors(emb, ds.labels(), derive_seed(cfg.train.seed, "boundary/refit"),
                                                  cfg.refit, cfg.refit_hidden, &res.refit);
  double bsum = 0.0, isum = 0.0;
  std::size_t bn = 0, in = 0;
  res.grid.loss_kind = "cpl";
  res.grid.seed = cfg.seed;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    res.grid.points.push_back({emb(0, i), emb(1, i), ds.labels()[i], errors[i], boundary[i]});
    if (boundary[i]) {
      bsum += errors[i];
      ++bn;
    } else {
      isum += errors[i];
      ++in;
    }
  }
  res.boundary_mean = bn ? bsum / static_cast<double>(bn) : 0.0;
  res.interior_mean = in ? isum / static_cast<double>(in) : 0.0;
  res.ratio = res.interior_mean > 0.0 ? res.boundary_mean / res.interior_mean : INFINITY;
  return res;
}

RetrievalSplit split_retrieval(const LabeledDataset& ds, std::size_t train_identities) {
  if (train_identities < 2 || train_identities + 2 > ds.num_identities())
    throw ContractError("retrieval split needs >= 2 train and >= 2 test identities");
  std::vector<std::size_t> train_recs, query_recs, gallery_recs;
  std::size_t rank = 0;
  for (const auto& [id, recs] : ds.index()) {
    if (rank++ < train_identities) {
      train_recs.insert(train_recs.end(), recs.begin(), recs.end());
      continue;
    }
    if (recs.size() < 2) throw ContractError("test identity " + std::to_string(id) + " has a single record");
    const std::size_t nq = std::max<std::size_t>(1, recs.size() / 4);
    query_recs.insert(query_recs.end(), recs.begin(), recs.begin() + static_cast<std::ptrdiff_t>(nq));
    gallery_recs.insert(gallery_recs.end(), recs.begin() + static_cast<std::ptrdiff_t>(nq), recs.end());
  }
  std::sort(train_recs.begin(), train_recs.end());
  std::sort(query_recs.begin(), query_recs.end());
  std::sort(gallery_recs.begin(), gallery_recs.end());
  RetrievalSplit split;
  split.train = ds.subset(train_recs);
  split.query = as_batch(ds.subset(query_recs));
  split.gallery = as_batch(ds.subset(gallery_recs));
  return split;
}

RetrievalRun run_retrieval(const RetrievalSplit& split, const ExperimentConfig& cfg) {
  TrainResult trained = train_run(split.train, cfg.train);
  Model& model = trained.state.model;
  LabeledBatch q = split.query, g = split.gallery;
  q.features = embed_all(model, q.features);
  g.features = embed_all(model, g.features);
  return {evaluate_retrieval(q, g, cfg.eval_normalize), std::move(trained.timeline)};
}

namespace {

ExperimentConfig variant_base(const ExperimentConfig& cfg, const std::string& name) {
  ExperimentConfig v = cfg;
  v.kind = ExperimentKind::kTrain;
  v.train.seed = derive_seed(cfg.seed, name);
  return v;
}

AblationReport run_variants(const ExperimentConfig& cfg,
                            const std::vector<std::pair<std::string, ExperimentConfig>>& variants) {
  const RetrievalSplit split = split_retrieval(load_dataset(cfg), cfg.data.train_identities);
  AblationReport report;
  for (const auto& [name, vcfg] : variants) {
    validate_config(vcfg);
    RetrievalRun run = run_retrieval(split, vcfg);
    AblationRow row;
    row.variant = name;
    row.map = run.ranking.mean_ap;
    row.rank1 = run.ranking.rank(1);
    row.config_text = echo_config(vcfg, false);
    row.config_hash = config_hash(row.config_text);
    row.timeline = std::move(run.timeline);
    if (!std::isfinite(row.map) || !std::isfinite(row.rank1))
      throw NumericError("variant " + name + " produced non-finite metrics");
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace

std::vector<std::pair<std::string, ExperimentConfig>> target_ablation_variants(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, ExperimentConfig>> out;
  for (TargetMode mode : {TargetMode::kRandomPoint, TargetMode::kFarthestPoint, TargetMode::kSampleMean,
                          TargetMode::kLeaveOneOutMean}) {
    const std::string name(to_string(mode));
    ExperimentConfig v = variant_base(cfg, name);
    v.train.losses.cpl.mode = mode;
    out.emplace_back(name, v);
  }
  return out;
}

std::vector<std::pair<std::string, ExperimentConfig>> bn_ablation_variants(const ExperimentConfig& cfg) {
  struct Row {
    const char* name;
    bool predictor;
    int depth;
    bool target_bn, hidden_bn, output_bn;
  };
  const Row rows[] = {
      {"no-pred", false, 2, false, false, false},
      {"pred2", true, 2, false, false, false},
      {"pred2+target-bn", true, 2, true, false, false},
      {"pred2+target-bn+hidden-bn", true, 2, true, true, false},
      {"pred4+target-bn+hidden-bn", true, 4, true, true, false},
      {"pred2+target-bn+hidden-bn+output-bn", true, 2, true, true, true},
  };
  std::vector<std::pair<std::string, ExperimentConfig>> out;
  for (const Row& r : rows) {
    ExperimentConfig v = variant_base(cfg, r.name);
    v.train.losses.cpl_predictor = r.predictor;
    v.train.losses.cpl.target_bn = r.target_bn;
    v.train.model.predictor.depth = r.depth;
    v.train.model.predictor.hidden_bn = r.hidden_bn;
    v.train.model.predictor.output_bn = r.output_bn;
    v.train.model.identity_init_predictor = false;
    out.emplace_back(r.name, v);
  }
  return out;
}

AblationReport run_target_ablation(const ExperimentConfig& cfg) {
  return run_variants(cfg, target_ablation_variants(cfg));
}

AblationReport run_bn_ablation(const ExperimentConfig& cfg) { return run_variants(cfg, bn_ablation_variants(cfg)); }

void write_report_csv(std::ostream& os, const AblationReport& report) {
  os << "variant,mAP,rank1,config_hash\n";
  for (const auto& r : report.rows)
    os << r.variant << ',' << format_double(r.map) << ',' << format_double(r.rank1) << ',' << r.config_hash << '\n';
}

}  // namespace cplab
