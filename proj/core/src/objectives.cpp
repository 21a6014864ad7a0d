#include "mists/objectives.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "mists/model.hpp"

namespace mists {

namespace {

double value(const Tensor& t) { return t.item(); }

Tensor identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor({n, n}, std::move(v));
}

Tensor diagonal(const Tensor& square_matrix) {
  return sum(square_matrix * identity(square_matrix.rows()), 1);
}

void require_batch(const char* what, const Tensor& samples, const GaussianParams& p) {
  if (samples.rank() != 2 || samples.rows() < 2) {
    throw std::invalid_argument(std::string(what) + ": need a batch of at least 2, got " +
                                shape_string(samples.shape()));
  }
  if (p.mu.shape() != samples.shape() || p.logvar.shape() != samples.shape()) {
    throw std::invalid_argument(std::string(what) + ": parameter shape " +
                                shape_string(p.mu.shape()) + " vs samples " +
                                shape_string(samples.shape()));
  }
}

Tensor concat_defined(std::vector<Tensor> parts) {
  std::erase_if(parts, [](const Tensor& t) { return !t.defined(); });
  return parts.size() == 1 ? parts.front() : concat(std::span<const Tensor>(parts), 0);
}

void require_forward(const DomainForward& d) {
  const char* missing = nullptr;
  if (!d.x.defined()) missing = "x";
  else if (!d.x_hat.defined()) missing = "x_hat";
  else if (!d.zc_post.mu.defined()) missing = "static posterior";
  else if (!d.zc_sample.defined()) missing = "z_c sample";
  else if (!d.zt_post.mu.defined()) missing = "dynamic posterior";
  else if (!d.zt_prior.mu.defined()) missing = "dynamic prior";
  else if (!d.zt_sample.defined()) missing = "z_t sample";
  if (missing) throw std::invalid_argument(std::string("elbo_e: missing ") + missing);
}

}  // namespace

const std::vector<std::string>& LossBreakdown::field_names() {
  static const std::vector<std::string> names = {
      "recon", "kl_static", "kl_dynamic", "kl_classifier", "mi_zc_x",
      "mi_zt_x", "mi_zc_zt", "cls_nll", "total"};
  return names;
}

std::vector<double> LossBreakdown::values() const {
  return {recon, kl_static, kl_dynamic, kl_classifier, mi_zc_x,
          mi_zt_x, mi_zc_zt, cls_nll, total};
}

std::optional<std::string> LossBreakdown::first_non_finite() const {
  const auto v = values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) return field_names()[i];
  }
  return std::nullopt;
}

std::string LossBreakdown::to_json() const {
  std::string out = "{";
  const auto v = values();
  char buf[64];
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::isfinite(v[i])) {
      std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    } else {
      std::snprintf(buf, sizeof buf, "null");
    }
    out += (i ? ", \"" : "\"") + field_names()[i] + "\": " + buf;
  }
  return out + "}";
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  recon += o.recon;
  kl_static += o.kl_static;
  kl_dynamic += o.kl_dynamic;
  kl_classifier += o.kl_classifier;
  mi_zc_x += o.mi_zc_x;
  mi_zt_x += o.mi_zt_x;
  mi_zc_zt += o.mi_zc_zt;
  cls_nll += o.cls_nll;
  total += o.total;
  return *this;
}

LossBreakdown LossBreakdown::scaled(double f) const {
  LossBreakdown b = *this;
  b.recon *= f;
  b.kl_static *= f;
  b.kl_dynamic *= f;
  b.kl_classifier *= f;
  b.mi_zc_x *= f;
  b.mi_zt_x *= f;
  b.mi_zc_zt *= f;
  b.cls_nll *= f;
  b.total *= f;
  return b;
}

// ---------------------------------------------------------------------------

void MiMemory::append(const DomainForward& d) {
  const std::size_t n = std::min(per_domain_, d.size());
  if (n == 0) return;
  auto head = [n](const Tensor& t) { return slice(t.detach(), 0, 0, n); };
  zc_.push_back(head(d.zc_sample));
  zc_mu_.push_back(head(d.zc_post.mu));
  zc_logvar_.push_back(head(d.zc_post.logvar));
  zt_.push_back(repeat_rows(d.zt_sample.detach(), n));
  zt_mu_.push_back(repeat_rows(d.zt_post.mu.detach(), n));
  zt_logvar_.push_back(repeat_rows(d.zt_post.logvar.detach(), n));
  rows_ += n;
}

void MiMemory::clear() {
  rows_ = 0;
  zc_.clear();
  zc_mu_.clear();
  zc_logvar_.clear();
  zt_.clear();
  zt_mu_.clear();
  zt_logvar_.clear();
}

MiMemory::Pool MiMemory::pool() const {
  if (rows_ == 0) return {};
  auto cat = [](const std::vector<Tensor>& parts) {
    return parts.size() == 1 ? parts.front()
                             : concat(std::span<const Tensor>(parts), 0);
  };
  return {cat(zc_), cat(zc_mu_), cat(zc_logvar_), cat(zt_), cat(zt_mu_), cat(zt_logvar_)};
}

// ---------------------------------------------------------------------------

Tensor reconstruction_loss(const Tensor& x, const Tensor& x_hat) {
  if (x.shape() != x_hat.shape()) {
    throw std::invalid_argument("reconstruction_loss: shape mismatch " +
                                shape_string(x.shape()) + " vs " +
                                shape_string(x_hat.shape()));
  }
  return scale(sum(square(x - x_hat)), 0.5);
}

Tensor mi_minibatch(const Tensor& samples, const GaussianParams& params) {
  require_batch("mi_minibatch", samples, params);
  const std::size_t b = samples.rows();
  const Tensor L = pairwise_log_density(samples, params);
  const Tensor ratio = diagonal(L) - logsumexp(L, 1);
  return mean(ratio) + Tensor::scalar(std::log(static_cast<double>(b)));
}

Tensor mi_cross_minibatch(const Tensor& zc_samples, const GaussianParams& zc_params,
                          const Tensor& zt_samples, const GaussianParams& zt_params) {
  require_batch("mi_cross_minibatch", zc_samples, zc_params);
  require_batch("mi_cross_minibatch", zt_samples, zt_params);
  if (zc_samples.rows() != zt_samples.rows()) {
    throw std::invalid_argument("mi_cross_minibatch: batch sizes differ (" +
                                std::to_string(zc_samples.rows()) + " vs " +
                                std::to_string(zt_samples.rows()) + ")");
  }
  const std::size_t b = zc_samples.rows();
  const Tensor Lc = pairwise_log_density(zc_samples, zc_params);
  const Tensor Lt = pairwise_log_density(zt_samples, zt_params);
  const Tensor ratio = logsumexp(Lc + Lt, 1) - logsumexp(Lc, 1) - logsumexp(Lt, 1);
  return mean(ratio) + Tensor::scalar(std::log(static_cast<double>(b)));
}

std::pair<Tensor, LossBreakdown> elbo_e(std::span<const DomainForward> domains,
                                        double alpha, double beta,
                                        const MiMemory* memory) {
  if (domains.empty()) throw std::invalid_argument("elbo_e: no domains");
  LossBreakdown br;
  Tensor recon = Tensor::scalar(0.0), kl_static = Tensor::scalar(0.0),
         kl_dynamic = Tensor::scalar(0.0);
  for (const DomainForward& d : domains) {
    require_forward(d);
    const double inv_n = 1.0 / static_cast<double>(d.x.rows());
    recon = recon + scale(reconstruction_loss(d.x, d.x_hat), inv_n);
    const GaussianParams standard = GaussianParams::standard(d.zc_post.rows(),
                                                             d.zc_post.dim());
    kl_static = kl_static + scale(gaussian_kl(d.zc_post, standard), inv_n);
    kl_dynamic = kl_dynamic + gaussian_kl(d.zt_post, d.zt_prior);
  }
  br.recon = value(recon);
  br.kl_static = value(kl_static);
  br.kl_dynamic = value(kl_dynamic);
  Tensor loss = recon + scale(kl_static + kl_dynamic, alpha);

  if (beta != 0.0) {
    std::vector<Tensor> zc, zc_mu, zc_lv, zt, zt_mu, zt_lv;
    for (const DomainForward& d : domains) {
      const std::size_t n = d.size();
      zc.push_back(d.zc_sample);
      zc_mu.push_back(d.zc_post.mu);
      zc_lv.push_back(d.zc_post.logvar);
      zt.push_back(repeat_rows(d.zt_sample, n));
      zt_mu.push_back(repeat_rows(d.zt_post.mu, n));
      zt_lv.push_back(repeat_rows(d.zt_post.logvar, n));
    }
    if (memory != nullptr && memory->rows() > 0) {
      const MiMemory::Pool m = memory->pool();
      zc.push_back(m.zc);
      zc_mu.push_back(m.zc_mu);
      zc_lv.push_back(m.zc_logvar);
      zt.push_back(m.zt);
      zt_mu.push_back(m.zt_mu);
      zt_lv.push_back(m.zt_logvar);
    }
    const Tensor pzc = concat_defined(zc), pzt = concat_defined(zt);
    const GaussianParams qzc{concat_defined(zc_mu), concat_defined(zc_lv)};
    const GaussianParams qzt{concat_defined(zt_mu), concat_defined(zt_lv)};
    if (pzc.rows() >= 2) {
      const double count = static_cast<double>(domains.size());
      const Tensor mi_c = scale(mi_minibatch(pzc, qzc), count);
      const Tensor mi_t = scale(mi_minibatch(pzt, qzt), count);
      const Tensor mi_ct = scale(mi_cross_minibatch(pzc, qzc, pzt, qzt), count);
      br.mi_zc_x = value(mi_c);
      br.mi_zt_x = value(mi_t);
      br.mi_zc_zt = value(mi_ct);
      loss = loss - scale(mi_c + mi_t - mi_ct, beta);
    }
  }
  br.total = value(loss);
  return {loss, br};
}

std::pair<Tensor, LossBreakdown> loss_c(std::span<const DomainForward> domains,
                                        double lambda, double alpha) {
  if (domains.empty()) throw std::invalid_argument("loss_c: no domains");
  Tensor nll = Tensor::scalar(0.0), kl = Tensor::scalar(0.0);
  for (const DomainForward& d : domains) {
    if (!d.logits.defined()) throw std::invalid_argument("loss_c: missing logits");
    nll = nll + cross_entropy(d.logits, d.labels);
    if (d.w_post.has_value() != d.w_prior.has_value()) {
      throw std::invalid_argument("loss_c: classifier posterior and prior must "
                                  "both be present or both absent");
    }
    if (d.w_post) kl = kl + categorical_kl(*d.w_post, *d.w_prior);
  }
  LossBreakdown br;
  br.cls_nll = value(nll);
  br.kl_classifier = value(kl);
  Tensor loss = scale(nll + scale(kl, alpha), lambda);
  br.total = value(loss);
  return {loss, br};
}

std::pair<Tensor, LossBreakdown> total_loss(std::span<const DomainForward> domains,
                                            double alpha, double beta, double lambda,
                                            const MiMemory* memory) {
  auto [le, be] = elbo_e(domains, alpha, beta, memory);
  auto [lc, bc] = loss_c(domains, lambda, alpha);
  LossBreakdown br = be;
  br.kl_classifier = bc.kl_classifier;
  br.cls_nll = bc.cls_nll;
  Tensor total = le + lc;
  br.total = total.item();
  return {total, br};
}

// ---------------------------------------------------------------------------

double kl_mi_identity_residual(const std::vector<std::vector<double>>& joint,
                               const std::vector<double>& prior) {
  constexpr double kTol = 1e-9;
  constexpr std::size_t kMaxAlphabet = 32;
  const std::size_t nx = joint.size();
  const std::size_t nz = prior.size();
  if (nx == 0 || nz == 0 || nx > kMaxAlphabet || nz > kMaxAlphabet) {
    throw std::invalid_argument("alphabet sizes must lie in [1, 32]");
  }
  double total = 0.0;
  for (const auto& row : joint) {
    if (row.size() != nz) {
      throw std::invalid_argument("joint rows must match the prior's alphabet");
    }
    for (double v : row) {
      if (!(v >= 0.0)) throw std::invalid_argument("joint entries must be >= 0");
      total += v;
    }
  }
  if (std::abs(total - 1.0) > kTol) {
    throw std::invalid_argument("joint does not sum to 1");
  }
  double prior_total = 0.0;
  for (double v : prior) {
    if (!(v > 0.0)) throw std::invalid_argument("prior entries must be > 0");
    prior_total += v;
  }
  if (std::abs(prior_total - 1.0) > kTol) {
    throw std::invalid_argument("prior does not sum to 1");
  }

  std::vector<double> px(nx, 0.0), qz(nz, 0.0);
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t z = 0; z < nz; ++z) {
      px[x] += joint[x][z];
      qz[z] += joint[x][z];
    }
  }
  // q(x, z) log(q(z|x) / p(z)) etc.; zero-mass cells contribute nothing.
  double expected_kl = 0.0, mi = 0.0, kl_aggregate = 0.0;
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t z = 0; z < nz; ++z) {
      const double q = joint[x][z];
      if (q == 0.0) continue;
      const double cond = q / px[x];
      expected_kl += q * std::log(cond / prior[z]);
      mi += q * std::log(q / (px[x] * qz[z]));
    }
  }
  for (std::size_t z = 0; z < nz; ++z) {
    if (qz[z] > 0.0) kl_aggregate += qz[z] * std::log(qz[z] / prior[z]);
  }
  return std::abs(expected_kl - (mi + kl_aggregate));
}

}  // namespace mists
