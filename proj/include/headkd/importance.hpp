#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "headkd/model.hpp"

namespace headkd {

enum class CalibrationSplit { Train, Validation };

struct CalibrationConfig {
  std::size_t num_batches = 4;
  std::size_t batch_size = 32;
  CalibrationSplit split = CalibrationSplit::Train;
  std::uint64_t seed = 5;
  // Min-max normalize w and H within each site before combining them.
  bool normalize_per_site = false;

  nlohmann::json to_json() const;
  static CalibrationConfig from_json(const nlohmann::json& j);
};

// Sum of |entries| of the head's Q, K and V projections, divided by d_k.
// `head` is an original head index; throws IndexError if it was pruned.
double weight_norm(const Model& model, const AttentionSite& site, int head);

// -sum a*log(a) over one attention row; zero entries contribute nothing.
double row_entropy(std::span<const double> row);

// Mean row entropy of one head's attention maps, accumulated over batches.
class EntropyAccumulator {
 public:
  // maps: [B, Tq, Tk] flattened. Rows whose query is invalid are skipped and
  // only valid keys enter each row's sum.
  void add(std::span<const double> maps, std::size_t batch, std::size_t q_len, std::size_t kv_len,
           std::span<const std::uint8_t> query_valid, std::span<const std::uint8_t> key_valid);
  std::size_t rows() const { return rows_; }
  // Throws CalibrationError when no row was added.
  double mean() const;

 private:
  double sum_ = 0.0;
  std::size_t rows_ = 0;
};

// Convenience wrapper for a single capture of one head.
double attention_entropy(std::span<const double> maps, std::size_t batch, std::size_t q_len, std::size_t kv_len,
                         std::span<const std::uint8_t> query_valid, std::span<const std::uint8_t> key_valid);

struct HeadScore {
  int head = 0;
  double w = 0.0;
  double H = 0.0;
  double S = 0.0;
};

struct SiteScores {
  AttentionSite site;
  std::vector<HeadScore> heads;  // surviving heads in layout order
};

struct ImportanceMatrix {
  std::size_t layers = 0;
  double alpha = 0.5;
  bool normalized = false;
  std::vector<SiteScores> sites;  // all 3N sites, in site-index order

  const SiteScores& at(const AttentionSite& site) const { return sites.at(site.index(layers)); }
  std::size_t total_heads() const;

  nlohmann::json to_json() const;
  static ImportanceMatrix from_json(const nlohmann::json& j);
};

// Recombines stored w and H with a new alpha (throws ConfigError outside [0,1]).
ImportanceMatrix with_alpha(const ImportanceMatrix& scores, double alpha);

// S = alpha*w + (1-alpha)*H for every surviving head. Entropy comes from
// num_batches random batches of `examples`, drawn without replacement.
// Throws ConfigError for alpha outside [0,1] or a calibration set larger than
// `examples`.
ImportanceMatrix importance_scores(const Model& model, std::span<const EncodedExample> examples,
                                   const CalibrationConfig& calib, double alpha);

}  // namespace headkd
