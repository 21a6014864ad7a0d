#include "mists/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string_view>

#include "mists/rng.hpp"

namespace mists {

namespace {

constexpr double kCircleStd = 0.25;
constexpr double kSineLow = -1.5;
constexpr double kSineHigh = 2.5;

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

DomainStream empty_like(const DomainStream& stream, std::string suffix) {
  DomainStream out;
  out.feature_dim = stream.feature_dim;
  out.n_classes = stream.n_classes;
  out.name = stream.name + suffix;
  return out;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string expected_header(std::size_t dim) {
  std::string h = "domain,y";
  for (std::size_t j = 0; j < dim; ++j) h += ",x" + std::to_string(j);
  return h;
}

template <typename T>
T parse_field(std::string_view field, std::size_t line, const char* what) {
  T value{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || field.empty()) {
    throw DataError("line " + std::to_string(line) + ": cannot parse " + what +
                    " from '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

void DomainStream::validate() const {
  if (domains.empty()) throw DataError("stream '" + name + "' has no domains");
  for (std::size_t k = 0; k < domains.size(); ++k) {
    const Domain& d = domains[k];
    if (k > 0 && d.index != domains[k - 1].index + 1) {
      throw DataError("domain indices are not consecutive: " +
                      std::to_string(domains[k - 1].index) + " then " +
                      std::to_string(d.index));
    }
    if (d.index < 1) throw DataError("domain index must be >= 1");
    if (d.y.empty()) {
      throw DataError("domain " + std::to_string(d.index) + " is empty");
    }
    if (static_cast<std::size_t>(d.X.rows()) != d.y.size() ||
        static_cast<std::size_t>(d.X.cols()) != feature_dim) {
      throw DataError("domain " + std::to_string(d.index) +
                      " has inconsistent shape");
    }
    if (!d.X.allFinite()) {
      throw DataError("domain " + std::to_string(d.index) +
                      " contains non-finite features");
    }
    for (int label : d.y) {
      if (label < 0 || static_cast<std::size_t>(label) >= n_classes) {
        throw DataError("domain " + std::to_string(d.index) + " has label " +
                        std::to_string(label) + " outside [0, " +
                        std::to_string(n_classes) + ")");
      }
    }
  }
}

std::vector<UnlabeledDomain> strip_labels(const DomainStream& stream) {
  std::vector<UnlabeledDomain> out;
  out.reserve(stream.size());
  for (const Domain& d : stream.domains) out.push_back({d.index, d.X});
  return out;
}

// ---------------------------------------------------------------------------

void ScmParams::validate() const {
  const auto dc = mu_c.size();
  const auto dt = mu_t_init.size();
  require(dc >= 1 && dt >= 1, "scm: latent dimensions must be positive");
  require(sigma_c > 0.0 && sigma_t > 0.0, "scm: sigmas must be positive");
  require(drift_matrix.rows() == dt && drift_matrix.cols() == dt,
          "scm: drift matrix must be d_t x d_t");
  require(drift_offset.size() == dt, "scm: drift offset must have length d_t");
  require(mix.rows() == dc + dt && mix.cols() == dc + dt,
          "scm: mix must be square of size d_c + d_t");
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(mix);
  const auto& s = svd.singularValues();
  const double smallest = s(s.size() - 1);
  require(smallest > 1e-12 && std::isfinite(s(0) / smallest),
          "scm: mix must be invertible");
}

ScmParams ScmParams::scalar(double mu_c, double sigma_c, double mu_t,
                            double sigma_t) {
  ScmParams p;
  p.mu_c = Eigen::VectorXd::Constant(1, mu_c);
  p.sigma_c = sigma_c;
  p.mu_t_init = Eigen::VectorXd::Constant(1, mu_t);
  p.drift_matrix = Eigen::MatrixXd::Identity(1, 1);
  p.drift_offset = Eigen::VectorXd::Zero(1);
  p.sigma_t = sigma_t;
  p.mix = Eigen::MatrixXd::Identity(2, 2);
  return p;
}

ScmParams ScmParams::drifting() {
  ScmParams p = scalar(1.0, 1.0, -1.5, 1.0);
  p.drift_offset(0) = 0.25;
  const double a = std::numbers::pi / 6.0;
  p.mix << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  return p;
}

Eigen::VectorXd scm_dynamic_mean(const ScmParams& params, int t) {
  require(t >= 1, "scm: domain index must be >= 1");
  Eigen::VectorXd mu = params.mu_t_init;
  for (int step = 1; step < t; ++step) {
    mu = params.drift_matrix * mu + params.drift_offset;
  }
  return mu;
}

// ---------------------------------------------------------------------------

DomainStream generate_circle(int n_domains, int n_per_domain, bool concept_shift,
                             std::uint64_t seed) {
  require(n_domains >= 2, "circle: need at least 2 domains");
  require(n_per_domain >= 2, "circle: need at least 2 samples per domain");

  DomainStream stream;
  stream.feature_dim = 2;
  stream.n_classes = 2;
  stream.name = concept_shift ? "circle-c" : "circle";
  for (int t = 1; t <= n_domains; ++t) {
    const double s = static_cast<double>(t - 1) / (n_domains - 1);
    const double angle = std::numbers::pi * s;
    const double cx = std::cos(angle), cy = std::sin(angle);
    // Labeling circle: fixed unit circle, or drifting centre and radius.
    const double lx = concept_shift ? 0.5 * s : 0.0;
    const double radius = concept_shift ? 1.0 + 0.3 * s : 1.0;

    Engine engine = make_engine(seed, stream.name, static_cast<std::uint64_t>(t));
    std::normal_distribution<double> normal(0.0, kCircleStd);
    Domain d;
    d.index = t;
    d.X.resize(n_per_domain, 2);
    d.y.resize(static_cast<std::size_t>(n_per_domain));
    for (int i = 0; i < n_per_domain; ++i) {
      const double x0 = cx + normal(engine);
      const double x1 = cy + normal(engine);
      d.X(i, 0) = x0;
      d.X(i, 1) = x1;
      const double dx = x0 - lx;
      d.y[static_cast<std::size_t>(i)] = (dx * dx + x1 * x1 < radius * radius) ? 1 : 0;
    }
    stream.domains.push_back(std::move(d));
  }
  return stream;
}

DomainStream generate_sine(int n_domains, int n_per_domain,
                           std::optional<int> flip_from, std::uint64_t seed) {
  require(n_domains >= 2, "sine: need at least 2 domains");
  require(n_per_domain >= 1, "sine: need at least 1 sample per domain");
  if (flip_from) {
    require(*flip_from >= 1 && *flip_from <= n_domains,
            "sine: flip_from must lie in [1, n_domains]");
  }

  DomainStream stream;
  stream.feature_dim = 2;
  stream.n_classes = 2;
  stream.name = flip_from ? "sine-c" : "sine";
  // Two full periods across the stream.
  const double width = 2.0 * std::numbers::pi / n_domains * 2.0;
  for (int t = 1; t <= n_domains; ++t) {
    // Seeded independently of flip_from so flipping only changes labels.
    Engine engine = make_engine(seed, "sine", static_cast<std::uint64_t>(t));
    std::uniform_real_distribution<double> ux((t - 1) * width, t * width);
    std::uniform_real_distribution<double> uy(kSineLow, kSineHigh);
    const bool flip = flip_from && t >= *flip_from;
    Domain d;
    d.index = t;
    d.X.resize(n_per_domain, 2);
    d.y.resize(static_cast<std::size_t>(n_per_domain));
    for (int i = 0; i < n_per_domain; ++i) {
      const double x0 = ux(engine);
      const double x1 = uy(engine);
      d.X(i, 0) = x0;
      d.X(i, 1) = x1;
      const int label = x1 > std::sin(x0) ? 1 : 0;
      d.y[static_cast<std::size_t>(i)] = flip ? 1 - label : label;
    }
    stream.domains.push_back(std::move(d));
  }
  return stream;
}

DomainStream generate_scm(const ScmParams& params, int n_domains,
                          int n_per_domain, std::uint64_t seed) {
  params.validate();
  require(n_domains >= 1, "scm: need at least 1 domain");
  require(n_per_domain >= 2 && n_per_domain % 2 == 0,
          "scm: n_per_domain must be even and >= 2");

  const auto dc = static_cast<Eigen::Index>(params.invariant_dim());
  const auto dt = static_cast<Eigen::Index>(params.dynamic_dim());
  DomainStream stream;
  stream.feature_dim = static_cast<std::size_t>(dc + dt);
  stream.n_classes = 2;
  stream.name = "scm";

  Eigen::VectorXd mu_t = params.mu_t_init;
  for (int t = 1; t <= n_domains; ++t) {
    if (t > 1) mu_t = params.drift_matrix * mu_t + params.drift_offset;
    Engine engine = make_engine(seed, "scm", static_cast<std::uint64_t>(t));
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<int> signs(static_cast<std::size_t>(n_per_domain));
    for (int i = 0; i < n_per_domain; ++i) signs[static_cast<std::size_t>(i)] = i < n_per_domain / 2 ? 1 : -1;
    std::shuffle(signs.begin(), signs.end(), engine);

    Domain d;
    d.index = t;
    d.X.resize(n_per_domain, dc + dt);
    d.y.resize(static_cast<std::size_t>(n_per_domain));
    Eigen::VectorXd z(dc + dt);
    for (int i = 0; i < n_per_domain; ++i) {
      const double y = signs[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < dc; ++j) {
        z(j) = y * params.mu_c(j) + params.sigma_c * normal(engine);
      }
      for (Eigen::Index j = 0; j < dt; ++j) {
        z(dc + j) = y * mu_t(j) + params.sigma_t * normal(engine);
      }
      d.X.row(i) = (params.mix * z).transpose();
      d.y[static_cast<std::size_t>(i)] = y > 0 ? 1 : 0;
    }
    stream.domains.push_back(std::move(d));
  }
  return stream;
}

// ---------------------------------------------------------------------------

StreamSplit split_stream(const DomainStream& stream,
                         const std::array<double, 3>& ratios) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must sum to 1");
  }
  for (double r : ratios) {
    if (r < 0.0) throw std::invalid_argument("split ratios must be non-negative");
  }
  const auto n = static_cast<long>(stream.size());
  const long n_source = std::lround(static_cast<double>(n) * ratios[0]);
  const long n_mid = std::lround(static_cast<double>(n) * ratios[1]);
  const long n_target = n - n_source - n_mid;
  if (n_source <= 0 || n_mid <= 0 || n_target <= 0) {
    throw std::invalid_argument(
        "split produces an empty part: " + std::to_string(n_source) + "/" +
        std::to_string(n_mid) + "/" + std::to_string(n_target));
  }
  StreamSplit out{empty_like(stream, ""), empty_like(stream, ""),
                  empty_like(stream, "")};
  for (long k = 0; k < n; ++k) {
    DomainStream& part = k < n_source ? out.source
                         : k < n_source + n_mid ? out.intermediate
                                                : out.target;
    part.domains.push_back(stream.domains[static_cast<std::size_t>(k)]);
  }
  return out;
}

DomainStream join_streams(const DomainStream& first, const DomainStream& second) {
  if (first.feature_dim != second.feature_dim ||
      first.n_classes != second.n_classes) {
    throw DataError("join_streams: incompatible streams");
  }
  DomainStream out = first;
  out.domains.insert(out.domains.end(), second.domains.begin(),
                     second.domains.end());
  out.validate();
  return out;
}

void save_stream(const DomainStream& stream, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << expected_header(stream.feature_dim) << '\n';
  char buf[64];
  for (const Domain& d : stream.domains) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      out << d.index << ',' << d.y[i];
      for (std::size_t j = 0; j < stream.feature_dim; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g",
                      d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        out << ',' << buf;
      }
      out << '\n';
    }
  }
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

DomainStream load_stream(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("line 1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  const std::size_t dim = header.size() >= 3 ? header.size() - 2 : 1;
  if (line != expected_header(dim)) {
    throw DataError("line 1: expected header '" +
                    (header.size() >= 3 ? expected_header(dim)
                                        : std::string("domain,y,x0,...")) +
                    "', got '" + line + "'");
  }

  DomainStream stream;
  stream.feature_dim = dim;
  stream.name = path.stem().string();
  int max_label = 1;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  int current = -1;
  auto flush = [&]() {
    if (current < 0) return;
    Domain d;
    d.index = current;
    d.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < dim; ++j)
        d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    d.y = labels;
    stream.domains.push_back(std::move(d));
    rows.clear();
    labels.clear();
  };

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != dim + 2) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(dim + 2) + " fields, got " +
                      std::to_string(fields.size()));
    }
    const int domain = parse_field<int>(fields[0], line_no, "domain");
    const int label = parse_field<int>(fields[1], line_no, "label");
    if (label < 0) {
      throw DataError("line " + std::to_string(line_no) + ": negative label");
    }
    std::vector<double> x(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      x[j] = parse_field<double>(fields[j + 2], line_no, "feature");
      if (!std::isfinite(x[j])) {
        throw DataError("line " + std::to_string(line_no) + ": non-finite feature");
      }
    }
    if (domain != current) {
      if (domain < current) {
        throw DataError("line " + std::to_string(line_no) +
                        ": domain indices must be nondecreasing");
      }
      if (current >= 0 && domain != current + 1) {
        throw DataError("line " + std::to_string(line_no) +
                        ": domain indices not consecutive (" +
                        std::to_string(current) + " then " +
                        std::to_string(domain) + ")");
      }
      flush();
      current = domain;
    }
    max_label = std::max(max_label, label);
    rows.push_back(std::move(x));
    labels.push_back(label);
  }
  flush();
  stream.n_classes = static_cast<std::size_t>(max_label) + 1;
  stream.validate();
  return stream;
}

Tensor to_tensor(const Matrix& m) {
  return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                std::vector<double>(m.data(), m.data() + m.size()));
}

}  // namespace mists
