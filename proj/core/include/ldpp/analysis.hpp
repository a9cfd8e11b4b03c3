#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ldpp/model.hpp"
#include "ldpp/types.hpp"

namespace ldpp {

struct CodeAssignment {
  std::string tuple_id;
  LatentPolicy latent;
  int hard_code = 0;   // argmin Euclidean distance to a codebook row, ties -> lowest
  double distance = 0.0;
};

// latent = codebook mixture of the tuple's pseudo-label. Tuples without a
// pseudo-label are a validation error.
std::vector<CodeAssignment> assign_codes(const Codebook& codebook,
                                         const std::vector<TrainingTuple>& tuples);

// Counts per code; sums to assignments.size(). k is the codebook size.
std::vector<int> codebook_usage(const std::vector<CodeAssignment>& assignments, int k);

// The top_n assignments with hard_code == code, ascending by distance, paired
// with the originating system utterance. code outside [0, k) is an error;
// fewer than top_n matches returns all of them.
std::vector<std::pair<std::string, double>> representative_utterances(
    const std::vector<CodeAssignment>& assignments, const std::vector<TrainingTuple>& tuples,
    int code, int top_n, int k);

// Projection onto the top-2 principal components of the centered latent
// matrix. Axis 1 carries at least as much variance as axis 2; each component
// is sign-fixed so its first nonzero loading is positive. All-identical
// inputs project to the origin with a warning.
std::vector<Eigen::Vector2d> project_2d(const std::vector<LatentPolicy>& latents);

struct ClusterQuality {
  double nmi = 0.0;     // arithmetic-mean normalization
  double purity = 0.0;
};

// pred and truth must have equal nonzero lengths. Two trivial single-class
// partitions score nmi = 1.
ClusterQuality clustering_quality(const std::vector<int>& pred, const std::vector<int>& truth);

// Ground-truth label per tuple via its dialogue's per-system-turn labels
// (tuple.turn_index is the system-turn ordinal). nullopt as soon as any
// referenced dialogue carries no labels.
std::optional<std::vector<int>> truth_labels_for_tuples(
    const std::vector<DialogueRecord>& records, const std::vector<TrainingTuple>& tuples);

void write_assignments_csv(const std::filesystem::path& path,
                           const std::vector<CodeAssignment>& assignments);
void write_usage_csv(const std::filesystem::path& path, const std::vector<int>& usage);
void write_points_csv(const std::filesystem::path& path,
                      const std::vector<Eigen::Vector2d>& points,
                      const std::vector<int>& hard_codes,
                      const std::optional<std::vector<int>>& truth_labels = std::nullopt);

// Markdown tables for the `top_codes` most frequent codes (ties -> lowest
// code), top_n utterances each.
std::string representatives_markdown(const std::vector<CodeAssignment>& assignments,
                                     const std::vector<TrainingTuple>& tuples, int top_codes,
                                     int top_n, int k);

}  // namespace ldpp
