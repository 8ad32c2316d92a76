#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "nsdehaze/error.hpp"
#include "nsdehaze/metrics.hpp"

namespace nsd::metrics {

namespace fs = std::filesystem;

namespace {

constexpr int kFeaturesPerScale = 18;

// Gaussian-weighted local mean over a 7x7 window (sigma 7/6), zero padded.
Map local_mean(const Map& m) {
  constexpr int r = 3;
  std::array<double, 2 * r + 1> k{};
  double total = 0.0;
  const double s = 7.0 / 6.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-(i * i) / (2 * s * s));
    total += k[i + r];
  }
  for (double& v : k) v /= total;
  Map rows(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      double acc = 0.0;
      for (int t = -r; t <= r; ++t) {
        const int xx = std::clamp(x + t, 0, m.width() - 1);
        acc += k[t + r] * m.at(y, xx);
      }
      rows.at(y, x) = acc;
    }
  Map out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      double acc = 0.0;
      for (int t = -r; t <= r; ++t) {
        const int yy = std::clamp(y + t, 0, m.height() - 1);
        acc += k[t + r] * rows.at(yy, x);
      }
      out.at(y, x) = acc;
    }
  return out;
}

// Mean-subtracted contrast-normalized coefficients on a 0..255 scale.
Map mscn(const Map& gray) {
  Map sq(gray.height(), gray.width());
  for (std::size_t i = 0; i < gray.size(); ++i) sq.data()[i] = gray.data()[i] * gray.data()[i];
  const Map mu = local_mean(gray);
  const Map mu2 = local_mean(sq);
  Map out(gray.height(), gray.width());
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const double m = mu.data()[i];
    const double sigma = std::sqrt(std::abs(mu2.data()[i] - m * m));
    out.data()[i] = (gray.data()[i] - m) / (sigma + 1.0);
  }
  return out;
}

struct GammaTable {
  std::vector<double> shape;
  std::vector<double> ggd_ratio;   // G(1/g) G(3/g) / G(2/g)^2
  std::vector<double> aggd_ratio;  // G(2/g)^2 / (G(1/g) G(3/g))
};

const GammaTable& gamma_table() {
  static const GammaTable t = [] {
    GammaTable g;
    for (double a = 0.2; a <= 10.0 + 1e-12; a += 0.001) {
      const double g1 = std::tgamma(1.0 / a);
      const double g2 = std::tgamma(2.0 / a);
      const double g3 = std::tgamma(3.0 / a);
      g.shape.push_back(a);
      g.ggd_ratio.push_back(g1 * g3 / (g2 * g2));
      g.aggd_ratio.push_back(g2 * g2 / (g1 * g3));
    }
    return g;
  }();
  return t;
}

std::size_t nearest(const std::vector<double>& table, double v) {
  std::size_t best = 0;
  double err = std::abs(table[0] - v);
  for (std::size_t i = 1; i < table.size(); ++i) {
    const double e = std::abs(table[i] - v);
    if (e < err) {
      err = e;
      best = i;
    }
  }
  return best;
}

// (shape, variance)
std::array<double, 2> fit_ggd(const std::vector<double>& x) {
  double sq = 0.0;
  double ab = 0.0;
  for (double v : x) {
    sq += v * v;
    ab += std::abs(v);
  }
  sq /= static_cast<double>(x.size());
  ab /= static_cast<double>(x.size());
  const double rho = ab > 0.0 ? sq / (ab * ab) : 0.0;
  const GammaTable& t = gamma_table();
  return {t.shape[nearest(t.ggd_ratio, rho)], sq};
}

// (shape, mean, left variance, right variance)
std::array<double, 4> fit_aggd(const std::vector<double>& x) {
  double left = 0.0;
  double right = 0.0;
  std::size_t nl = 0;
  std::size_t nr = 0;
  double ab = 0.0;
  double sq = 0.0;
  for (double v : x) {
    if (v < 0) {
      left += v * v;
      ++nl;
    } else if (v > 0) {
      right += v * v;
      ++nr;
    }
    ab += std::abs(v);
    sq += v * v;
  }
  const double ls = nl ? std::sqrt(left / nl) : 0.0;
  const double rs = nr ? std::sqrt(right / nr) : 0.0;
  ab /= static_cast<double>(x.size());
  sq /= static_cast<double>(x.size());
  const GammaTable& t = gamma_table();
  if (ls == 0.0 || rs == 0.0 || sq == 0.0) return {t.shape.back(), 0.0, ls * ls, rs * rs};
  const double g = ls / rs;
  const double rhat = ab * ab / sq;
  const double rnorm = rhat * (g * g * g + 1) * (g + 1) / ((g * g + 1) * (g * g + 1));
  const double a = t.shape[nearest(t.aggd_ratio, rnorm)];
  const double mean = (rs - ls) * (std::tgamma(2.0 / a) / std::tgamma(1.0 / a)) *
                      std::sqrt(std::tgamma(1.0 / a) / std::tgamma(3.0 / a));
  return {a, mean, ls * ls, rs * rs};
}

// 18 features of one patch of MSCN coefficients.
void patch_features(const Map& m, int top, int left, int size, double* out) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(size) * size);
  for (int y = top; y < top + size; ++y)
    for (int x = left; x < left + size; ++x) v.push_back(m.at(y, x));
  const auto g = fit_ggd(v);
  out[0] = g[0];
  out[1] = g[1];
  static constexpr std::array<std::pair<int, int>, 4> kShifts = {{{0, 1}, {1, 0}, {1, 1}, {1, -1}}};
  int o = 2;
  for (const auto& [dy, dx] : kShifts) {
    std::vector<double> p;
    p.reserve(v.size());
    for (int y = top; y < top + size; ++y)
      for (int x = left; x < left + size; ++x) {
        const int yy = y + dy;
        const int xx = x + dx;
        if (yy < top || yy >= top + size || xx < left || xx >= left + size) continue;
        p.push_back(m.at(y, x) * m.at(yy, xx));
      }
    const auto a = fit_aggd(p);
    for (double f : a) out[o++] = f;
  }
}

Map gray255(const Image& img) {
  Map g = img.luminance();
  for (double& v : g.data()) v *= 255.0;
  return g;
}

std::vector<std::string> read_lines(std::istream& in, int n) {
  std::vector<std::string> out;
  std::string line;
  for (int i = 0; i < n && std::getline(in, line); ++i) out.push_back(line);
  return out;
}

}  // namespace

int niqe_patch_size(int height, int width) {
  const int side = std::min(height, width);
  const int p = std::min(96, (side / 2) & ~1);
  if (p < 8) throw ShapeError("niqe: image too small (needs at least 16x16)");
  return p;
}

Eigen::MatrixXd niqe_patch_features(const Image& img) {
  const int p = niqe_patch_size(img.height(), img.width());
  const Map g = gray255(img);
  const Map m1 = mscn(g);
  const Map m2 = mscn(imaging::resize(g, g.height() / 2, g.width() / 2));
  const int ph = img.height() / p;
  const int pw = img.width() / p;
  Eigen::MatrixXd f(ph * pw, kNiqeFeatures);
  for (int by = 0; by < ph; ++by)
    for (int bx = 0; bx < pw; ++bx) {
      const int row = by * pw + bx;
      Eigen::RowVectorXd r(kNiqeFeatures);
      patch_features(m1, by * p, bx * p, p, r.data());
      patch_features(m2, by * p / 2, bx * p / 2, p / 2, r.data() + kFeaturesPerScale);
      f.row(row) = r;
    }
  return f;
}

NiqeModel fit_niqe_model(std::span<const Image> images) {
  if (images.empty()) throw ArgumentError("niqe: no images to fit");
  std::vector<Eigen::MatrixXd> all;
  Eigen::Index rows = 0;
  for (const Image& img : images) {
    all.push_back(niqe_patch_features(img));
    rows += all.back().rows();
  }
  Eigen::MatrixXd f(rows, kNiqeFeatures);
  Eigen::Index r = 0;
  for (const auto& m : all) {
    f.middleRows(r, m.rows()) = m;
    r += m.rows();
  }
  NiqeModel model;
  model.mean = f.colwise().mean().transpose();
  const Eigen::MatrixXd centered = f.rowwise() - model.mean.transpose();
  model.covariance = centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(rows - 1));
  return model;
}

double niqe_score(const Image& img, const NiqeModel& model) {
  if (model.mean.size() != kNiqeFeatures || model.covariance.rows() != kNiqeFeatures ||
      model.covariance.cols() != kNiqeFeatures) {
    throw FormatError("niqe: model must have 36 features");
  }
  const Eigen::MatrixXd f = niqe_patch_features(img);
  const Eigen::VectorXd mu = f.colwise().mean().transpose();
  const Eigen::MatrixXd centered = f.rowwise() - mu.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(f.rows() - 1));
  const Eigen::MatrixXd pooled = (model.covariance + cov) / 2.0;
  const Eigen::VectorXd d = model.mean - mu;
  const Eigen::MatrixXd inv = pooled.completeOrthogonalDecomposition().pseudoInverse();
  return std::sqrt(std::max(0.0, d.dot(inv * d)));
}

void NiqeModel::save(const fs::path& path) const {
  const auto dim = mean.size();
  // Fixed-width offsets keep the header length independent of their values.
  char header[96];
  const int header_len = 3 * 16;
  const long mean_offset = header_len;
  const long cov_offset = mean_offset + static_cast<long>(dim * sizeof(double));
  std::snprintf(header, sizeof header, "%015ld\n%015ld\n%015ld\n", static_cast<long>(dim), mean_offset, cov_offset);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("niqe: cannot write " + path.string());
  out.write(header, header_len);
  out.write(reinterpret_cast<const char*>(mean.data()), static_cast<std::streamsize>(dim * sizeof(double)));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> c = covariance;
  out.write(reinterpret_cast<const char*>(c.data()), static_cast<std::streamsize>(dim * dim * sizeof(double)));
  if (!out) throw IoError("niqe: short write to " + path.string());
}

NiqeModel NiqeModel::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("niqe: cannot open model " + path.string());
  const auto lines = read_lines(in, 3);
  if (lines.size() != 3) throw FormatError("niqe: model header must have 3 lines");
  long vals[3];
  for (int i = 0; i < 3; ++i) {
    std::istringstream ss(lines[i]);
    if (!(ss >> vals[i]) || vals[i] < 0) throw FormatError("niqe: bad header line " + std::to_string(i + 1));
  }
  const long dim = vals[0];
  if (dim < 1 || dim > 4096) throw FormatError("niqe: implausible feature dimension");
  const auto size = static_cast<long>(fs::file_size(path));
  if (vals[1] + dim * 8 > size || vals[2] + dim * dim * 8 > size) throw FormatError("niqe: model file truncated");
  NiqeModel m;
  m.mean.resize(dim);
  in.clear();
  in.seekg(vals[1]);
  in.read(reinterpret_cast<char*>(m.mean.data()), dim * 8);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> c(dim, dim);
  in.seekg(vals[2]);
  in.read(reinterpret_cast<char*>(c.data()), dim * dim * 8);
  if (!in) throw FormatError("niqe: failed reading model data");
  m.covariance = c;
  if (!m.mean.allFinite() || !m.covariance.allFinite()) throw FormatError("niqe: non-finite model data");
  return m;
}

std::optional<double> niqe(const Image& img, const std::optional<fs::path>& model_path) {
  if (!model_path) return std::nullopt;
  return niqe_score(img, NiqeModel::load(*model_path));
}

}  // namespace nsd::metrics
