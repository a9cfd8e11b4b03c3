#include "ldpp/analysis.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "ldpp/error.hpp"
#include "ldpp/manifest.hpp"

namespace ldpp {

std::vector<CodeAssignment> assign_codes(const Codebook& codebook,
                                         const std::vector<TrainingTuple>& tuples) {
  std::vector<CodeAssignment> out;
  out.reserve(tuples.size());
  for (const auto& tuple : tuples) {
    if (!tuple.pseudo_label.has_value()) {
      throw ValidationError("assign_codes: tuple " + tuple.tuple_id() + " has no pseudo-label");
    }
    CodeAssignment a;
    a.tuple_id = tuple.tuple_id();
    a.latent = mix_latent(codebook, *tuple.pseudo_label);
    a.hard_code = 0;
    a.distance = (codebook.vectors.value.row(0).transpose() - a.latent.vector).norm();
    for (int code = 1; code < codebook.K(); ++code) {
      const double d = (codebook.vectors.value.row(code).transpose() - a.latent.vector).norm();
      if (d < a.distance) {
        a.distance = d;
        a.hard_code = code;
      }
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<int> codebook_usage(const std::vector<CodeAssignment>& assignments, int k) {
  if (k < 1) throw ValidationError("codebook_usage: k must be >= 1");
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (const auto& a : assignments) {
    if (a.hard_code < 0 || a.hard_code >= k) {
      throw ValidationError("codebook_usage: assignment " + a.tuple_id + " has code " +
                            std::to_string(a.hard_code) + " outside [0, " + std::to_string(k) +
                            ")");
    }
    ++counts[static_cast<std::size_t>(a.hard_code)];
  }
  return counts;
}

std::vector<std::pair<std::string, double>> representative_utterances(
    const std::vector<CodeAssignment>& assignments, const std::vector<TrainingTuple>& tuples,
    int code, int top_n, int k) {
  if (code < 0 || code >= k) {
    throw ValidationError("representative_utterances: code " + std::to_string(code) +
                          " outside [0, " + std::to_string(k) + ")");
  }
  if (top_n < 1) throw ValidationError("representative_utterances: top_n must be >= 1");

  std::map<std::string, const TrainingTuple*> by_id;
  for (const auto& tuple : tuples) by_id[tuple.tuple_id()] = &tuple;

  std::vector<std::pair<std::string, double>> matches;
  for (const auto& a : assignments) {
    if (a.hard_code != code) continue;
    auto it = by_id.find(a.tuple_id);
    if (it == by_id.end()) {
      throw ValidationError("representative_utterances: assignment " + a.tuple_id +
                            " has no matching tuple");
    }
    matches.emplace_back(it->second->sys_utterance.text, a.distance);
  }
  std::stable_sort(matches.begin(), matches.end(),
                   [](const auto& a, const auto& b) { return a.second < b.second; });
  if (static_cast<int>(matches.size()) > top_n) {
    matches.resize(static_cast<std::size_t>(top_n));
  }
  return matches;
}

std::vector<Eigen::Vector2d> project_2d(const std::vector<LatentPolicy>& latents) {
  const int n = static_cast<int>(latents.size());
  if (n < 2) throw ValidationError("project_2d: need at least 2 latents");
  const int d = static_cast<int>(latents.front().vector.size());
  if (d < 2) throw ValidationError("project_2d: latent dimension must be >= 2");

  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i) {
    if (latents[static_cast<std::size_t>(i)].vector.size() != d) {
      throw ValidationError("project_2d: latents have mixed dimensions");
    }
    x.row(i) = latents[static_cast<std::size_t>(i)].vector.transpose();
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;

  if (x.cwiseAbs().maxCoeff() < 1e-12) {
    spdlog::warn("project_2d: all latents identical, projecting to the origin");
    return std::vector<Eigen::Vector2d>(static_cast<std::size_t>(n), Eigen::Vector2d::Zero());
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(x.transpose() * x);
  if (solver.info() != Eigen::Success) {
    throw RuntimeFailure("project_2d: eigendecomposition failed");
  }
  // Eigen sorts eigenvalues ascending; the last two columns are the top-2.
  Eigen::MatrixXd components(d, 2);
  components.col(0) = solver.eigenvectors().col(d - 1);
  components.col(1) = solver.eigenvectors().col(d - 2);
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < d; ++i) {
      const double v = components(i, c);
      if (std::abs(v) > 1e-12) {
        if (v < 0.0) components.col(c) = -components.col(c);
        break;
      }
    }
  }

  const Eigen::MatrixXd projected = x * components;
  std::vector<Eigen::Vector2d> points(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    points[static_cast<std::size_t>(i)] = projected.row(i).transpose();
  }
  return points;
}

ClusterQuality clustering_quality(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size()) {
    throw ValidationError("clustering_quality: pred has " + std::to_string(pred.size()) +
                          " entries, truth has " + std::to_string(truth.size()));
  }
  if (pred.empty()) throw ValidationError("clustering_quality: empty input");

  const double n = static_cast<double>(pred.size());
  std::map<int, int> pred_counts;
  std::map<int, int> truth_counts;
  std::map<std::pair<int, int>, int> joint;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++pred_counts[pred[i]];
    ++truth_counts[truth[i]];
    ++joint[{pred[i], truth[i]}];
  }

  auto entropy = [n](const std::map<int, int>& counts) {
    double h = 0.0;
    for (const auto& [cls, c] : counts) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log(p);
    }
    return h;
  };
  const double h_pred = entropy(pred_counts);
  const double h_truth = entropy(truth_counts);

  double mi = 0.0;
  for (const auto& [pair, c] : joint) {
    const double p_joint = static_cast<double>(c) / n;
    const double p_pred = static_cast<double>(pred_counts.at(pair.first)) / n;
    const double p_truth = static_cast<double>(truth_counts.at(pair.second)) / n;
    mi += p_joint * std::log(p_joint / (p_pred * p_truth));
  }

  ClusterQuality q;
  const double denom = 0.5 * (h_pred + h_truth);
  // Both partitions trivial means they agree exactly.
  q.nmi = denom > 0.0 ? std::clamp(mi / denom, 0.0, 1.0) : 1.0;

  std::map<int, std::map<int, int>> per_cluster;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++per_cluster[pred[i]][truth[i]];
  }
  double majority = 0.0;
  for (const auto& [cluster, dist] : per_cluster) {
    int best = 0;
    for (const auto& [cls, c] : dist) best = std::max(best, c);
    majority += static_cast<double>(best);
  }
  q.purity = majority / n;
  return q;
}

std::optional<std::vector<int>> truth_labels_for_tuples(
    const std::vector<DialogueRecord>& records, const std::vector<TrainingTuple>& tuples) {
  std::map<std::string, const DialogueRecord*> by_id;
  for (const auto& rec : records) by_id[rec.id] = &rec;

  std::vector<int> labels;
  labels.reserve(tuples.size());
  for (const auto& tuple : tuples) {
    auto it = by_id.find(tuple.dialogue_id);
    if (it == by_id.end()) {
      throw ValidationError("truth_labels_for_tuples: tuple " + tuple.tuple_id() +
                            " references unknown dialogue");
    }
    const auto& truth = it->second->ground_truth_labels;
    if (!truth.has_value()) return std::nullopt;
    if (tuple.turn_index < 0 || tuple.turn_index >= static_cast<int>(truth->size())) {
      throw ValidationError("truth_labels_for_tuples: tuple " + tuple.tuple_id() +
                            " indexes past its dialogue's " +
                            std::to_string(truth->size()) + " labels");
    }
    labels.push_back((*truth)[static_cast<std::size_t>(tuple.turn_index)]);
  }
  return labels;
}

void write_assignments_csv(const std::filesystem::path& path,
                           const std::vector<CodeAssignment>& assignments) {
  std::ostringstream out;
  out << "tuple_id,hard_code,distance\n";
  for (const auto& a : assignments) {
    out << a.tuple_id << ',' << a.hard_code << ',' << format_double(a.distance) << '\n';
  }
  atomic_write_file(path, out.str());
}

void write_usage_csv(const std::filesystem::path& path, const std::vector<int>& usage) {
  std::ostringstream out;
  out << "code,count\n";
  for (std::size_t code = 0; code < usage.size(); ++code) {
    out << code << ',' << usage[code] << '\n';
  }
  atomic_write_file(path, out.str());
}

void write_points_csv(const std::filesystem::path& path,
                      const std::vector<Eigen::Vector2d>& points,
                      const std::vector<int>& hard_codes,
                      const std::optional<std::vector<int>>& truth_labels) {
  if (points.size() != hard_codes.size()) {
    throw ValidationError("write_points_csv: points/hard_codes size mismatch");
  }
  if (truth_labels.has_value() && truth_labels->size() != points.size()) {
    throw ValidationError("write_points_csv: truth_labels size mismatch");
  }
  std::ostringstream out;
  out << (truth_labels.has_value() ? "x,y,hard_code,truth_label\n" : "x,y,hard_code\n");
  for (std::size_t i = 0; i < points.size(); ++i) {
    out << format_double(points[i].x()) << ',' << format_double(points[i].y()) << ','
        << hard_codes[i];
    if (truth_labels.has_value()) out << ',' << (*truth_labels)[i];
    out << '\n';
  }
  atomic_write_file(path, out.str());
}

namespace {

std::string escape_markdown_cell(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    if (c == '|') {
      out += "\\|";
    } else if (c == '\n') {
      out += ' ';
    } else {
      out += c;
    }
  }
  return out;
}

}  // namespace

std::string representatives_markdown(const std::vector<CodeAssignment>& assignments,
                                     const std::vector<TrainingTuple>& tuples, int top_codes,
                                     int top_n, int k) {
  if (top_codes < 1) throw ValidationError("representatives_markdown: top_codes must be >= 1");
  const auto usage = codebook_usage(assignments, k);

  std::vector<int> order(usage.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&usage](int a, int b) { return usage[static_cast<std::size_t>(a)] >
                                                   usage[static_cast<std::size_t>(b)]; });
  if (static_cast<int>(order.size()) > top_codes) {
    order.resize(static_cast<std::size_t>(top_codes));
  }

  std::ostringstream out;
  for (int code : order) {
    out << "## Code " << code << " (" << usage[static_cast<std::size_t>(code)] << " uses)\n\n";
    out << "| rank | distance | utterance |\n";
    out << "| --- | --- | --- |\n";
    const auto reps = representative_utterances(assignments, tuples, code, top_n, k);
    int rank = 1;
    for (const auto& [utterance, distance] : reps) {
      out << "| " << rank << " | " << format_double(distance) << " | "
          << escape_markdown_cell(utterance) << " |\n";
      ++rank;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace ldpp
