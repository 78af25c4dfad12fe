#include "msrnn/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "msrnn/data/features.hpp"
#include "msrnn/error.hpp"

namespace msrnn::data {

using ad::Shape;
using ad::Tensor;

std::pair<Tensor, NormStats> standardize(const Tensor& x, const std::optional<NormStats>& stats,
                                         std::span<const std::string> names) {
  if (x.shape().rank() != 2) throw ShapeError("standardize expects [rows, features], got " + x.shape().str());
  const std::size_t rows = x.shape()[0];
  const std::size_t cols = x.shape()[1];
  auto name_of = [&](std::size_t j) {
    return j < names.size() ? names[j] : "feature " + std::to_string(j);
  };

  NormStats st;
  if (stats) {
    st = *stats;
    if (st.size() != cols) {
      throw ShapeError("norm stats hold " + std::to_string(st.size()) + " features, data has " +
                       std::to_string(cols));
    }
  } else {
    st.mean.assign(cols, 0.0);
    st.std.assign(cols, 0.0);
    st.max_abs.assign(cols, 0.0);
    for (std::size_t j = 0; j < cols; ++j) {
      st.names.push_back(name_of(j));
      double mean = 0.0;
      for (std::size_t i = 0; i < rows; ++i) mean += x.at(i, j);
      mean /= static_cast<double>(rows);
      double ss = 0.0;
      for (std::size_t i = 0; i < rows; ++i) ss += (x.at(i, j) - mean) * (x.at(i, j) - mean);
      const double sd = std::sqrt(ss / static_cast<double>(rows));
      if (!(sd > 0.0)) throw ValidationError("feature '" + name_of(j) + "' has zero standard deviation");
      double mx = 0.0;
      for (std::size_t i = 0; i < rows; ++i) mx = std::max(mx, std::abs((x.at(i, j) - mean) / sd));
      st.mean[j] = mean;
      st.std[j] = sd;
      st.max_abs[j] = mx;
    }
  }

  Tensor out(x.shape());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = st.apply(j, x.at(i, j));
  return {std::move(out), std::move(st)};
}

Tensor LabeledDataset::window(std::size_t i) const {
  const std::size_t len = seq_len() * features();
  std::vector<double> v(windows.data().begin() + static_cast<std::ptrdiff_t>(i * len),
                        windows.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * len));
  return Tensor(Shape{seq_len(), features()}, std::move(v));
}

LabeledDataset LabeledDataset::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > size()) {
    throw ValidationError("empty or out-of-range dataset slice [" + std::to_string(begin) + ", " +
                          std::to_string(end) + ")");
  }
  LabeledDataset out;
  out.classes = classes;
  const std::size_t len = seq_len() * features();
  std::vector<double> v(windows.data().begin() + static_cast<std::ptrdiff_t>(begin * len),
                        windows.data().begin() + static_cast<std::ptrdiff_t>(end * len));
  out.windows = Tensor(Shape{end - begin, seq_len(), features()}, std::move(v));
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    labels.begin() + static_cast<std::ptrdiff_t>(end));
  if (!dates.empty()) {
    out.dates.assign(dates.begin() + static_cast<std::ptrdiff_t>(begin),
                     dates.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (!returns.empty()) {
    out.returns.assign(returns.begin() + static_cast<std::ptrdiff_t>(begin),
                       returns.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<double> LabeledDataset::one_hot_row(std::size_t i) const {
  std::vector<double> row(classes, 0.0);
  row[static_cast<std::size_t>(labels[i])] = 1.0;
  return row;
}

LabeledDataset make_windows(const Tensor& features, std::span<const int> labels, std::size_t seq_len,
                            std::size_t classes) {
  if (features.shape().rank() != 2) {
    throw ShapeError("make_windows expects [rows, features], got " + features.shape().str());
  }
  const std::size_t rows = features.shape()[0];
  const std::size_t cols = features.shape()[1];
  if (labels.size() != rows) {
    throw ShapeError("make_windows: " + std::to_string(rows) + " feature rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  if (seq_len == 0) throw ValidationError("seq_len must be positive");
  if (seq_len > rows) {
    throw InsufficientDataError("seq_len " + std::to_string(seq_len) + " exceeds the " +
                                std::to_string(rows) + " available rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ValidationError("label " + std::to_string(y) + " outside 0.." + std::to_string(classes - 1));
    }
  }
  const std::size_t n = rows - seq_len + 1;
  LabeledDataset ds;
  ds.classes = classes;
  ds.windows = Tensor(Shape{n, seq_len, cols});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < seq_len; ++s)
      for (std::size_t j = 0; j < cols; ++j)
        ds.windows[(i * seq_len + s) * cols + j] = features.at(i + s, j);
    ds.labels.push_back(labels[i + seq_len - 1]);
  }
  return ds;
}

SplitSizes split_sizes(std::size_t n, double train_frac, double val_frac) {
  if (!(train_frac > 0.0 && train_frac < 1.0) || !(val_frac > 0.0 && val_frac < 1.0)) {
    throw ValidationError("split fractions must lie in (0, 1)");
  }
  SplitSizes s;
  const auto fit = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_frac + 1e-9));
  s.val = static_cast<std::size_t>(std::floor(static_cast<double>(fit) * val_frac + 1e-9));
  s.train = fit - s.val;
  s.test = n - fit;
  if (s.train == 0 || s.val == 0 || s.test == 0) {
    throw ValidationError("split of " + std::to_string(n) + " samples leaves an empty part (train " +
                          std::to_string(s.train) + ", val " + std::to_string(s.val) + ", test " +
                          std::to_string(s.test) + ")");
  }
  return s;
}

DatasetSplits chrono_split(const LabeledDataset& ds, double train_frac, double val_frac) {
  const SplitSizes s = split_sizes(ds.size(), train_frac, val_frac);
  return {ds.slice(0, s.train), ds.slice(s.train, s.train + s.val),
          ds.slice(s.train + s.val, ds.size())};
}

PreparedData prepare_dataset(std::span<const OhlcBar> bars, const PipelineParams& params,
                             std::optional<std::span<const int>> labels_by_bar) {
  const std::size_t n = bars.size();
  std::vector<double> closes;
  for (const auto& b : bars) closes.push_back(b.close);

  PreparedData out;
  std::size_t first = 1;
  std::size_t last = 0;  // inclusive
  if (labels_by_bar) {
    if (labels_by_bar->size() != n) {
      throw ShapeError("expected one label per bar (" + std::to_string(n) + "), got " +
                       std::to_string(labels_by_bar->size()));
    }
    if (n < 2) throw InsufficientDataError("need at least 2 bars");
    out.label_first = 0;
    out.all_labels.assign(labels_by_bar->begin(), labels_by_bar->end());
    last = n - 1;
  } else {
    const RegimeLabels lab = label_regimes(closes, params.horizon);
    out.label_first = lab.first;
    out.all_labels = lab.labels;
    first = std::max<std::size_t>(1, lab.first);
    last = lab.first + lab.labels.size() - 1;
  }
  if (last < first) throw InsufficientDataError("no bar has both a return and a label");

  const std::size_t rows = last - first + 1;
  out.raw = Tensor(Shape{rows, 3});
  for (std::size_t k = 0; k < rows; ++k) {
    const std::size_t b = first + k;
    out.dates.push_back(bars[b].timestamp);
    out.raw.at(k, 0) = std::log(bars[b].close) - std::log(bars[b - 1].close);
    out.raw.at(k, 1) = hml(bars[b]);
    out.raw.at(k, 2) = intraday_variance(bars[b]);
    out.labels.push_back(out.all_labels[b - out.label_first]);
  }

  if (params.seq_len > rows) {
    throw InsufficientDataError("seq_len " + std::to_string(params.seq_len) + " exceeds the " +
                                std::to_string(rows) + " usable rows");
  }
  const std::size_t samples = rows - params.seq_len + 1;
  const SplitSizes sizes = split_sizes(samples, params.train_frac, params.val_frac);

  // Scaling sees only the rows that training windows touch.
  const std::size_t fit_rows = sizes.train + params.seq_len - 1;
  Tensor train_rows(Shape{fit_rows, 3},
                    std::vector<double>(out.raw.data().begin(),
                                        out.raw.data().begin() + static_cast<std::ptrdiff_t>(fit_rows * 3)));
  out.stats = standardize(train_rows, std::nullopt, feature_names()).second;
  const Tensor scaled = standardize(out.raw, out.stats).first;

  LabeledDataset all = make_windows(scaled, out.labels, params.seq_len, 2);
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t row = i + params.seq_len - 1;
    all.dates.push_back(out.dates[row]);
    all.returns.push_back(out.raw.at(row, 0));
  }
  out.splits = chrono_split(all, params.train_frac, params.val_frac);
  return out;
}

std::string norm_stats_json(const NormStats& s) {
  nlohmann::ordered_json j;
  j["features"] = s.names;
  j["mean"] = s.mean;
  j["std"] = s.std;
  j["max_abs"] = s.max_abs;
  return j.dump(2) + "\n";
}

NormStats norm_stats_from_json(const std::string& text) {
  NormStats s;
  try {
    const auto j = nlohmann::json::parse(text);
    s.names = j.at("features").get<std::vector<std::string>>();
    s.mean = j.at("mean").get<std::vector<double>>();
    s.std = j.at("std").get<std::vector<double>>();
    s.max_abs = j.at("max_abs").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("norm stats: ") + e.what());
  }
  if (s.std.size() != s.mean.size() || s.max_abs.size() != s.mean.size()) {
    throw ValidationError("norm stats arrays differ in length");
  }
  return s;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw IoError("cannot write " + p.string());
  return os;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void export_dataset(const PreparedData& data, std::span<const OhlcBar> bars, const PipelineParams& params,
                    const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto os = open_out(dir / "returns.csv");
    os << "date,r\n";
    const ReturnSeries rs = log_returns(bars);
    for (std::size_t i = 0; i < rs.r.size(); ++i) os << format_date(rs.timestamps[i]) << ',' << num(rs.r[i]) << '\n';
  }
  {
    auto os = open_out(dir / "covariates.csv");
    os << "date,hml,iv\n";
    const CovariateSeries cs = covariates(bars);
    for (std::size_t i = 0; i < cs.hml.size(); ++i) {
      os << format_date(cs.timestamps[i]) << ',' << num(cs.hml[i]) << ',' << num(cs.iv[i]) << '\n';
    }
  }
  {
    auto os = open_out(dir / "labels.csv");
    os << "date,label\n";
    for (std::size_t i = 0; i < data.all_labels.size(); ++i) {
      os << format_date(bars[data.label_first + i].timestamp) << ',' << data.all_labels[i] << '\n';
    }
  }
  {
    auto ws = open_out(dir / "windows.csv");
    auto ss = open_out(dir / "samples.csv");
    ws << "sample,step";
    for (const auto& name : data.stats.names) ws << ',' << name;
    ws << '\n';
    ss << "sample,split,date,label,r\n";
    std::size_t id = 0;
    const std::pair<const char*, const LabeledDataset*> parts[] = {
        {"train", &data.splits.train}, {"val", &data.splits.val}, {"test", &data.splits.test}};
    for (const auto& [name, ds] : parts) {
      for (std::size_t i = 0; i < ds->size(); ++i, ++id) {
        ss << id << ',' << name << ',' << format_date(ds->dates[i]) << ',' << ds->labels[i] << ','
           << num(ds->returns[i]) << '\n';
        for (std::size_t s = 0; s < ds->seq_len(); ++s) {
          ws << id << ',' << s;
          for (std::size_t j = 0; j < ds->features(); ++j) {
            ws << ',' << num(ds->windows[(i * ds->seq_len() + s) * ds->features() + j]);
          }
          ws << '\n';
        }
      }
    }
  }
  {
    auto os = open_out(dir / "norm_stats.json");
    nlohmann::ordered_json j = nlohmann::ordered_json::parse(norm_stats_json(data.stats));
    j["horizon"] = params.horizon;
    j["seq_len"] = params.seq_len;
    j["train_frac"] = params.train_frac;
    j["val_frac"] = params.val_frac;
    os << j.dump(2) << '\n';
  }
}

}  // namespace msrnn::data
