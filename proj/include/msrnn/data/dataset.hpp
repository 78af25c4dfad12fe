#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msrnn/autodiff/tensor.hpp"
#include "msrnn/data/ohlc.hpp"

namespace msrnn::data {

/// Per-feature scaling fitted on the training slice: x'' = ((x − mean)/std)/max_abs.
struct NormStats {
  std::vector<std::string> names;
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<double> max_abs;

  std::size_t size() const { return mean.size(); }
  double apply(std::size_t feature, double x) const {
    return (x - mean[feature]) / std[feature] / max_abs[feature];
  }
};

/// Standardizes the columns of a [rows × features] tensor. With no stats the
/// statistics are fitted on `x` itself (population std); otherwise the given
/// stats are applied unchanged.
std::pair<ad::Tensor, NormStats> standardize(const ad::Tensor& x,
                                             const std::optional<NormStats>& stats = std::nullopt,
                                             std::span<const std::string> names = {});

/// Supervised windows. Sample i holds rows [t−L+1, t] with the label at t.
struct LabeledDataset {
  ad::Tensor windows;  // [samples, seq_len, features]
  std::vector<int> labels;
  std::size_t classes = 2;
  /// Label timestamp and raw asset log return at that timestamp; empty when
  /// the dataset was built without calendar information.
  std::vector<Date> dates;
  std::vector<double> returns;

  std::size_t size() const { return labels.size(); }
  std::size_t seq_len() const { return windows.shape()[1]; }
  std::size_t features() const { return windows.shape()[2]; }
  /// Copy of sample i as a [seq_len, features] tensor.
  ad::Tensor window(std::size_t i) const;
  LabeledDataset slice(std::size_t begin, std::size_t end) const;
  std::vector<double> one_hot_row(std::size_t i) const;
};

LabeledDataset make_windows(const ad::Tensor& features, std::span<const int> labels,
                            std::size_t seq_len, std::size_t classes = 2);

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

/// train+val = floor(n·train_frac); val = floor((train+val)·val_frac).
SplitSizes split_sizes(std::size_t n, double train_frac = 0.8, double val_frac_of_train = 0.2);

struct DatasetSplits {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
};

DatasetSplits chrono_split(const LabeledDataset& ds, double train_frac = 0.8,
                           double val_frac_of_train = 0.2);

struct PipelineParams {
  std::size_t horizon = 20;
  std::size_t seq_len = 20;
  double train_frac = 0.8;
  double val_frac = 0.2;
};

/// Feature columns produced by the pipeline: return, hml, iv.
inline const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names{"r", "hml", "iv"};
  return names;
}

struct PreparedData {
  std::vector<Date> dates;  // one per usable row
  ad::Tensor raw;           // [rows, 3] unscaled features
  std::vector<int> labels;  // one per usable row
  /// Every label produced, indexed from bar `label_first`.
  std::size_t label_first = 0;
  std::vector<int> all_labels;
  NormStats stats;
  DatasetSplits splits;
};

/// Bars → returns, covariates and labels → trim to rows that have all three →
/// fit scaling on the rows touched by training windows → window → split.
/// `labels_by_bar`, when given, replaces the horizon rule with one label per
/// bar (used for planted-regime data); the horizon trim then does not apply.
PreparedData prepare_dataset(std::span<const OhlcBar> bars, const PipelineParams& params,
                             std::optional<std::span<const int>> labels_by_bar = std::nullopt);

/// Writes returns.csv, covariates.csv, labels.csv, windows.csv, samples.csv
/// and norm_stats.json under `dir`. Layouts are in docs/formats.md.
void export_dataset(const PreparedData& data, std::span<const OhlcBar> bars,
                    const PipelineParams& params, const std::filesystem::path& dir);

std::string norm_stats_json(const NormStats& stats);
NormStats norm_stats_from_json(const std::string& text);

}  // namespace msrnn::data
