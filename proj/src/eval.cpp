#include "envid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "envid/error.hpp"

namespace envid::eval {
namespace {

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

std::ofstream open_report(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kUnreadableFile, "cannot write " + path.string());
  out.precision(6);
  out << std::fixed;
  return out;
}

}  // namespace

std::vector<std::size_t> ranking_from_distances(std::span<const double> d) {
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
  return order;
}

double top_n_accuracy(const std::vector<std::vector<std::size_t>>& rankings,
                      std::span<const std::size_t> truths, std::size_t n) {
  if (rankings.size() != truths.size())
    throw Error(ErrorKind::kLengthMismatch, "rankings and truths differ in length");
  if (rankings.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    const auto& r = rankings[i];
    const auto end = r.begin() + static_cast<std::ptrdiff_t>(std::min(n, r.size()));
    if (std::find(r.begin(), end, truths[i]) != end) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

void ConfusionTally::add(std::size_t truth, std::size_t predicted) {
  if (truth >= tp.size() || predicted >= tp.size())
    throw Error(ErrorKind::kInvalidArgument, "class index outside the tally");
  ++total;
  if (truth == predicted) {
    ++tp[truth];
  } else {
    ++fn[truth];
    ++fp[predicted];
  }
}

double ConfusionTally::accuracy() const {
  const auto hits = std::accumulate(tp.begin(), tp.end(), std::size_t{0});
  return safe_div(static_cast<double>(hits), static_cast<double>(total));
}

std::vector<ClassScores> prf1(const ConfusionTally& t) {
  std::vector<ClassScores> out(t.tp.size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    const double tp = static_cast<double>(t.tp[c]);
    out[c].precision = safe_div(tp, tp + static_cast<double>(t.fp[c]));
    out[c].recall = safe_div(tp, tp + static_cast<double>(t.fn[c]));
    out[c].f1 = safe_div(2.0 * out[c].precision * out[c].recall, out[c].precision + out[c].recall);
  }
  return out;
}

std::vector<OpenSetScore> open_set_trial(const EmbeddedPool& references,
                                         const EmbeddedPool& queries, const OpenSetConfig& config,
                                         Rng& rng) {
  if (references.embeddings.empty() || queries.embeddings.empty())
    throw Error(ErrorKind::kEmptyPool, "open-set trial needs references and queries");
  if (references.embeddings.size() != references.classes.size() ||
      queries.embeddings.size() != queries.classes.size())
    throw Error(ErrorKind::kLengthMismatch, "pool embeddings and classes differ in length");
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < references.classes.size(); ++i)
    by_class[references.classes[i]].push_back(i);
  std::vector<std::size_t> class_ids;
  for (const auto& [c, _] : by_class) class_ids.push_back(c);
  // Unknown trials need n_way classes besides the query's own.
  if (class_ids.size() < config.n_way + 1)
    throw Error(ErrorKind::kInsufficientClasses,
                "open-set trials need " + std::to_string(config.n_way + 1) + " reference classes");

  std::vector<OpenSetScore> scores;
  scores.reserve(config.trials);
  std::bernoulli_distribution known_draw(config.p_known);
  for (std::size_t t = 0; t < config.trials; ++t) {
    const std::size_t qi = uniform_index(rng, queries.embeddings.size());
    const std::size_t qc = queries.classes[qi];
    const bool known = known_draw(rng) && by_class.count(qc) > 0;
    std::vector<std::size_t> others;
    for (std::size_t c : class_ids)
      if (c != qc) others.push_back(c);
    const std::size_t n_other = known ? config.n_way - 1 : config.n_way;
    for (std::size_t i = 0; i < n_other; ++i)
      std::swap(others[i], others[i + uniform_index(rng, others.size() - i)]);
    std::vector<std::size_t> chosen(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(n_other));
    if (known) chosen.push_back(qc);

    std::vector<std::vector<Vec>> support;
    for (std::size_t c : chosen) {
      auto pool = by_class[c];
      if (config.exclude_query) std::erase(pool, qi);
      const std::size_t k = std::min(config.k_shot, pool.size());
      for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
      std::vector<Vec> s;
      for (std::size_t i = 0; i < k; ++i) s.push_back(references.embeddings[pool[i]]);
      support.push_back(std::move(s));
    }
    const auto d = fewshot::distances(queries.embeddings[qi], fewshot::prototypes(support));
    scores.push_back({*std::min_element(d.begin(), d.end()), known});
  }
  return scores;
}

RocCurve roc_auc(std::span<const OpenSetScore> scores) {
  std::size_t n_unknown = 0, n_known = 0;
  for (const auto& s : scores) (s.known ? n_known : n_unknown)++;
  if (n_unknown == 0 || n_known == 0)
    throw Error(ErrorKind::kSingleClassScores, "ROC needs both known and unknown queries");
  std::vector<OpenSetScore> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const OpenSetScore& a, const OpenSetScore& b) { return a.distance > b.distance; });
  RocCurve roc;
  roc.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t rej_unknown = 0, rej_known = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double level = sorted[i].distance;
    while (i < sorted.size() && sorted[i].distance == level) {
      (sorted[i].known ? rej_known : rej_unknown)++;
      ++i;
    }
    // Threshold just below `level`: everything at or above it is rejected.
    const double threshold = i < sorted.size() ? 0.5 * (level + sorted[i].distance)
                                               : level - 1.0 - std::abs(level);
    RocPoint p{threshold, static_cast<double>(rej_known) / static_cast<double>(n_known),
               static_cast<double>(rej_unknown) / static_cast<double>(n_unknown)};
    const auto& prev = roc.points.back();
    roc.auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
    roc.points.push_back(p);
  }
  return roc;
}

double rmse(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size() || predictions.empty())
    throw Error(ErrorKind::kLengthMismatch, "rmse needs equal, non-empty inputs");
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = predictions[i] - targets[i];
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(predictions.size()));
}

std::size_t volume_bin(double v, std::size_t n_bins, double lo, double hi) {
  if (n_bins == 0 || !(hi > lo)) throw Error(ErrorKind::kInvalidArgument, "bad volume binning");
  const double x = std::clamp(v, lo, hi);
  const auto b = static_cast<std::size_t>(std::floor((x - lo) / (hi - lo) * static_cast<double>(n_bins)));
  return std::min(b, n_bins - 1);
}

double volume_bin_classify(std::span<const double> estimates, std::span<const double> targets,
                           std::size_t n_bins, double lo, double hi) {
  if (estimates.size() != targets.size())
    throw Error(ErrorKind::kLengthMismatch, "estimates and targets differ in length");
  if (estimates.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < estimates.size(); ++i)
    if (volume_bin(estimates[i], n_bins, lo, hi) == volume_bin(targets[i], n_bins, lo, hi)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(estimates.size());
}

PositionMap position_accuracy_map(std::span<const PositionResult> results, std::size_t rows,
                                  std::size_t cols) {
  PositionMap m;
  m.rows = rows;
  m.cols = cols;
  m.accuracy.assign(rows * cols, 0.0);
  m.counts.assign(rows * cols, 0);
  std::vector<std::size_t> hits(rows * cols, 0);
  for (const auto& r : results) {
    if (r.row >= rows || r.col >= cols)
      throw Error(ErrorKind::kInvalidArgument, "grid index outside the map");
    ++m.counts[r.row * cols + r.col];
    if (r.correct) ++hits[r.row * cols + r.col];
  }
  for (std::size_t i = 0; i < m.accuracy.size(); ++i)
    m.accuracy[i] = safe_div(static_cast<double>(hits[i]), static_cast<double>(m.counts[i]));
  auto cell = [&](std::size_t r, std::size_t c) { return m.accuracy[r * cols + c]; };
  m.center = cell(rows / 2, cols / 2);
  m.corners = (cell(0, 0) + cell(0, cols - 1) + cell(rows - 1, 0) + cell(rows - 1, cols - 1)) / 4.0;
  for (std::size_t c = 0; c < cols; ++c) m.middle_row += cell(rows / 2, c) / static_cast<double>(cols);
  for (std::size_t r = 0; r < rows; ++r) m.middle_col += cell(r, cols / 2) / static_cast<double>(rows);
  const double n = static_cast<double>(m.accuracy.size());
  m.mean = std::accumulate(m.accuracy.begin(), m.accuracy.end(), 0.0) / n;
  double var = 0.0;
  for (double a : m.accuracy) var += (a - m.mean) * (a - m.mean);
  m.std = std::sqrt(var / n);
  return m;
}

std::map<std::string, PositionMap> position_accuracy_maps(std::span<const PositionResult> results,
                                                         std::size_t rows, std::size_t cols) {
  std::map<std::string, PositionMap> out;
  out["all"] = position_accuracy_map(results, rows, cols);
  std::map<std::string, std::vector<PositionResult>> by_cat;
  for (const auto& r : results)
    if (!r.category.empty()) by_cat[r.category].push_back(r);
  for (const auto& [cat, rs] : by_cat) out[cat] = position_accuracy_map(rs, rows, cols);
  return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw Error(ErrorKind::kLengthMismatch, "pearson needs equal lengths >= 2");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> energy_decay_curve(std::span<const double> air) {
  std::vector<double> edc(air.size());
  double acc = 0.0;
  for (std::size_t i = air.size(); i-- > 0;) edc[i] = acc += air[i] * air[i];
  if (acc > 0.0)
    for (double& v : edc) v /= acc;
  return edc;
}

double air_pool_correlation(const std::vector<std::vector<double>>& pool_a,
                            const std::vector<std::vector<double>>& pool_b) {
  if (pool_a.empty() || pool_b.empty()) throw Error(ErrorKind::kEmptyPool, "AIR pool is empty");
  std::vector<std::vector<double>> ea, eb;
  for (const auto& a : pool_a) ea.push_back(energy_decay_curve(a));
  for (const auto& b : pool_b) eb.push_back(energy_decay_curve(b));
  double sum = 0.0;
  for (const auto& a : ea)
    for (const auto& b : eb) {
      // The shorter curve is extended with zeros: no energy remains past its end.
      const std::size_t n = std::max(a.size(), b.size());
      std::vector<double> pa(a), pb(b);
      pa.resize(n, 0.0);
      pb.resize(n, 0.0);
      sum += pearson(pa, pb);
    }
  return sum / static_cast<double>(ea.size() * eb.size());
}

void write_class_csv(const std::filesystem::path& path, const ConfusionTally& tally,
                     const std::vector<std::string>& class_names) {
  auto out = open_report(path);
  out << "class,tp,fp,fn,precision,recall,f1\n";
  const auto scores = prf1(tally);
  for (std::size_t c = 0; c < scores.size(); ++c)
    out << (c < class_names.size() ? class_names[c] : std::to_string(c)) << ',' << tally.tp[c]
        << ',' << tally.fp[c] << ',' << tally.fn[c] << ',' << scores[c].precision << ','
        << scores[c].recall << ',' << scores[c].f1 << '\n';
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& roc) {
  auto out = open_report(path);
  out << "threshold,fpr,tpr\n";
  for (const auto& p : roc.points) out << p.threshold << ',' << p.fpr << ',' << p.tpr << '\n';
}

void write_position_csv(const std::filesystem::path& path,
                        const std::map<std::string, PositionMap>& maps) {
  auto out = open_report(path);
  out << "category,row,col,count,accuracy\n";
  for (const auto& [cat, m] : maps)
    for (std::size_t r = 0; r < m.rows; ++r)
      for (std::size_t c = 0; c < m.cols; ++c)
        out << cat << ',' << r << ',' << c << ',' << m.counts[r * m.cols + c] << ','
            << m.accuracy[r * m.cols + c] << '\n';
}

}  // namespace envid::eval
