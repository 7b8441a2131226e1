#include "fpovi/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fpovi {

KdeSampler::KdeSampler(Matrix a, Vector bw) : anchors(std::move(a)), bandwidths(std::move(bw)) {
  if (anchors.rows() == 0) throw std::invalid_argument("KdeSampler: no anchors");
  if (bandwidths.size() != anchors.cols())
    throw std::invalid_argument("KdeSampler: bandwidth dimension mismatch");
  if ((bandwidths.array() <= 0.0).any())
    throw std::invalid_argument("KdeSampler: bandwidths must be positive");
}

KdeSampler KdeSampler::silverman(const Matrix& anchors) {
  const int n = static_cast<int>(anchors.rows());
  if (n == 0) throw std::invalid_argument("KdeSampler: no anchors");
  Vector bw(anchors.cols());
  for (int c = 0; c < anchors.cols(); ++c) {
    double mean = anchors.col(c).mean();
    double var = (anchors.col(c).array() - mean).square().sum() / std::max(n - 1, 1);
    double sd = std::sqrt(var);
    bw[c] = std::max(1.06 * sd * std::pow(static_cast<double>(n), -0.2), 1e-8);
  }
  return KdeSampler(anchors, bw);
}

Matrix KdeSampler::sample(int n, Rng& rng) const {
  std::uniform_int_distribution<int> pick(0, static_cast<int>(anchors.rows()) - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix out(n, anchors.cols());
  for (int i = 0; i < n; ++i) {
    int a = pick(rng);
    for (int c = 0; c < anchors.cols(); ++c)
      out(i, c) = anchors(a, c) + bandwidths[c] * gauss(rng);
  }
  return out;
}

Dataset gen_synthetic_1d(Rng& rng, bool noiseless) {
  std::uniform_real_distribution<double> lo(0.0, 0.6), hi(0.8, 1.0);
  std::normal_distribution<double> noise(0.0, 0.03);  // variance 0.0009
  Dataset ds;
  ds.X.resize(20, 1);
  ds.Y.resize(20, 1);
  for (int i = 0; i < 20; ++i) {
    double x = (i < 12) ? lo(rng) : hi(rng);
    double e = noiseless ? 0.0 : noise(rng);
    double xe = x + e;
    ds.X(i, 0) = x;
    ds.Y(i, 0) = xe + std::sin(4.0 * xe) + std::sin(13.0 * xe);
  }
  ds.names = {"x", "y"};
  return ds;
}

namespace {

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& target_column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV file: " + path);
  std::string line;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> header;
  int n_cols = -1, line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (line_no == 1) {
      double tmp;
      bool numeric = true;
      for (const auto& c : cells)
        if (!parse_double(c, tmp)) { numeric = false; break; }
      if (!numeric) {
        header = cells;
        n_cols = static_cast<int>(cells.size());
        continue;
      }
    }
    if (n_cols < 0) n_cols = static_cast<int>(cells.size());
    if (static_cast<int>(cells.size()) != n_cols)
      throw std::runtime_error("CSV row " + std::to_string(line_no) +
                               ": inconsistent column count");
    std::vector<double> row(n_cols);
    for (int c = 0; c < n_cols; ++c)
      if (!parse_double(cells[c], row[c]))
        throw std::runtime_error("CSV parse error at row " + std::to_string(line_no) +
                                 ", column " + std::to_string(c + 1));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("CSV file has no data rows: " + path);

  int target = n_cols - 1;
  if (!target_column.empty()) {
    auto it = std::find(header.begin(), header.end(), target_column);
    if (it == header.end())
      throw std::runtime_error("target column not found: " + target_column);
    target = static_cast<int>(it - header.begin());
  }

  Dataset ds;
  const int n = static_cast<int>(rows.size());
  ds.X.resize(n, n_cols - 1);
  ds.Y.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    int xc = 0;
    for (int c = 0; c < n_cols; ++c) {
      if (c == target)
        ds.Y(i, 0) = rows[i][c];
      else
        ds.X(i, xc++) = rows[i][c];
    }
  }
  if (!header.empty()) {
    for (int c = 0; c < n_cols; ++c)
      if (c != target) ds.names.push_back(header[c]);
    ds.names.push_back(header[target]);
  }
  return ds;
}

Dataset standardize(const Dataset& ds) {
  Dataset out = ds;
  StandardizeStats st;
  const int n = ds.size();
  auto col_stats = [n](const Matrix& M, Vector& mean, Vector& sd) {
    mean.resize(M.cols());
    sd.resize(M.cols());
    for (int c = 0; c < M.cols(); ++c) {
      mean[c] = M.col(c).mean();
      double var = (M.col(c).array() - mean[c]).square().sum() / std::max(n - 1, 1);
      sd[c] = std::sqrt(var);
      if (sd[c] < 1e-12) sd[c] = 1.0;  // constant column left unscaled
    }
  };
  col_stats(ds.X, st.x_mean, st.x_std);
  col_stats(ds.Y, st.y_mean, st.y_std);
  for (int c = 0; c < ds.X.cols(); ++c)
    out.X.col(c) = (ds.X.col(c).array() - st.x_mean[c]) / st.x_std[c];
  for (int c = 0; c < ds.Y.cols(); ++c)
    out.Y.col(c) = (ds.Y.col(c).array() - st.y_mean[c]) / st.y_std[c];
  // compose with pre-existing stats so standardize twice stays invertible
  if (ds.stats) {
    StandardizeStats prev = *ds.stats;
    for (int c = 0; c < st.x_mean.size(); ++c) {
      st.x_mean[c] = prev.x_mean[c] + prev.x_std[c] * st.x_mean[c];
      st.x_std[c] *= prev.x_std[c];
    }
    for (int c = 0; c < st.y_mean.size(); ++c) {
      st.y_mean[c] = prev.y_mean[c] + prev.y_std[c] * st.y_mean[c];
      st.y_std[c] *= prev.y_std[c];
    }
  }
  out.stats = st;
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double test_fraction, unsigned seed) {
  if (test_fraction < 0.0 || test_fraction >= 1.0)
    throw std::invalid_argument("test_fraction must be in [0, 1)");
  const int n = ds.size();
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const int n_test = static_cast<int>(std::floor(n * test_fraction));
  Dataset train = ds, test = ds;
  train.X.resize(n - n_test, ds.X.cols());
  train.Y.resize(n - n_test, ds.Y.cols());
  test.X.resize(n_test, ds.X.cols());
  test.Y.resize(n_test, ds.Y.cols());
  for (int i = 0; i < n_test; ++i) {
    test.X.row(i) = ds.X.row(idx[i]);
    test.Y.row(i) = ds.Y.row(idx[i]);
  }
  for (int i = n_test; i < n; ++i) {
    train.X.row(i - n_test) = ds.X.row(idx[i]);
    train.Y.row(i - n_test) = ds.Y.row(idx[i]);
  }
  return {train, test};
}

}  // namespace fpovi
