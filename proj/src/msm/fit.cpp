#include "msrnn/msm/fit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "msrnn/autodiff/tape.hpp"
#include "msrnn/error.hpp"
#include "msrnn/msm/bfgs.hpp"

namespace msrnn::msm {

namespace {

using ad::Parameter;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

constexpr double kZ975 = 1.959963984540054;
constexpr int kStationarySquarings = 20;

Eigen::Index logits_count(std::size_t m) { return static_cast<Eigen::Index>(m * (m - 1)); }

double single_regime_loglik(const Eigen::VectorXd& theta, std::span<const double> r, Eigen::VectorXd* grad) {
  const double a = theta(0);
  const double l = theta(1);
  const double s2 = std::exp(l);
  double ll = 0.0;
  double ga = 0.0;
  double gl = 0.0;
  for (double x : r) {
    const double d = x - a;
    ll += -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * l - 0.5 * d * d / s2;
    ga += d / s2;
    gl += -0.5 + 0.5 * d * d / s2;
  }
  if (grad) {
    grad->resize(theta.size());
    grad->setZero();
    (*grad)(0) = ga;
    (*grad)(1) = gl;
  }
  return ll;
}

}  // namespace

Eigen::VectorXd pack(const MsmParams& p) {
  const auto m = p.alpha.size();
  const auto nb = p.beta.size();
  Eigen::VectorXd theta(2 * m + nb);
  theta.head(m) = p.alpha;
  theta.segment(m, m) = p.sigma2.array().log().matrix();
  theta.tail(nb) = Eigen::Map<const Eigen::VectorXd>(p.beta.data(), nb);
  return theta;
}

MsmParams unpack(const Eigen::VectorXd& theta, std::size_t regimes, std::size_t coef_dim) {
  const auto m = static_cast<Eigen::Index>(regimes);
  const auto k = static_cast<Eigen::Index>(coef_dim);
  const auto L = logits_count(regimes);
  if (theta.size() != 2 * m + k * L) {
    throw ShapeError("packed MSM vector has " + std::to_string(theta.size()) + " entries, expected " +
                     std::to_string(2 * m + k * L));
  }
  MsmParams p;
  p.alpha = theta.head(m);
  p.sigma2 = theta.segment(m, m).array().exp().matrix();
  p.beta = Eigen::Map<const Eigen::MatrixXd>(theta.data() + 2 * m, k, L);
  return p;
}

double loglik_with_gradient(const Eigen::VectorXd& theta, std::size_t regimes, std::span<const double> returns,
                            const Eigen::MatrixXd& covariates, Eigen::VectorXd* grad) {
  const std::size_t T = returns.size();
  const std::size_t m = regimes;
  const std::size_t K = static_cast<std::size_t>(covariates.cols()) + 1;
  if (T == 0) throw InsufficientDataError("log-likelihood needs at least one observation");
  if (m == 1) return single_regime_loglik(theta, returns, grad);
  const std::size_t L = m * (m - 1);
  if (static_cast<std::size_t>(theta.size()) != 2 * m + K * L) throw ShapeError("packed MSM vector size mismatch");
  const bool tv = K > 1;
  if (tv && static_cast<std::size_t>(covariates.rows()) + 1 < T) throw ShapeError("too few covariate rows");

  Parameter alpha("alpha", Tensor(Shape{m}, std::vector<double>(theta.data(), theta.data() + m)));
  Parameter log_s2("log_sigma2", Tensor(Shape{m}, std::vector<double>(theta.data() + m, theta.data() + 2 * m)));
  Tensor b(Shape{K, L});
  for (std::size_t c = 0; c < L; ++c)
    for (std::size_t k = 0; k < K; ++k) b.at(k, c) = theta(static_cast<Eigen::Index>(2 * m + c * K + k));
  Parameter beta("beta", std::move(b));

  Tape tape;
  Tensor rep(Shape{T, m});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < m; ++j) rep.at(t, j) = returns[t];
  Var a = tape.param(alpha);
  Var l = tape.param(log_s2);
  Var dev = tape.constant(std::move(rep)) - a;
  Var logd = ad::scale(dev * dev * ad::exp(ad::scale(l, -1.0)), -0.5) - ad::scale(l, 0.5);
  logd = logd + tape.constant(-0.5 * std::log(2.0 * std::numbers::pi));

  const std::size_t S = tv ? T - 1 : 1;
  Var logits;
  if (tv) {
    if (T < 2) {
      logits = Var();
    } else {
      Tensor z(Shape{S, K});
      for (std::size_t t = 0; t < S; ++t) {
        z.at(t, 0) = 1.0;
        for (std::size_t k = 1; k < K; ++k) z.at(t, k) = covariates(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k - 1));
      }
      logits = ad::matmul(tape.constant(std::move(z)), tape.param(beta));
    }
  } else {
    logits = tape.param(beta);
  }

  Var P;
  if (logits.valid()) {
    Var full = ad::concat({ad::reshape(logits, Shape{S, m, m - 1}), tape.constant(Tensor(Shape{S, m, 1}))});
    P = ad::softmax(full);
  }

  Var pi0;
  const Tensor uniform(Shape{m}, 1.0 / static_cast<double>(m));
  Var P0;
  if (!tv) {
    P0 = ad::slice(P, 0, 0, 1, false);
    Var q = P0;
    for (int i = 0; i < kStationarySquarings; ++i) q = ad::matmul(q, q);
    // Row sums drift by rounding with each squaring; renormalize exactly.
    pi0 = ad::softmax(ad::log(ad::matmul(tape.constant(uniform), q), 1e-300));
  } else {
    pi0 = tape.constant(uniform);
  }

  std::vector<Var> steps;
  steps.reserve(T);
  Var filt;
  for (std::size_t t = 0; t < T; ++t) {
    Var pred = pi0;
    if (t > 0) pred = ad::matmul(filt, tv ? ad::slice(P, 0, t - 1, t, false) : P0);
    Var av = ad::row(logd, t) + ad::log(pred, 1e-300);
    steps.push_back(ad::logsumexp(av));
    if (t + 1 < T) filt = ad::softmax(av);
  }
  Var ll = ad::sum(ad::concat(steps));
  const double value = ll.item();
  if (grad) {
    if (!std::isfinite(value)) {
      grad->setConstant(static_cast<Eigen::Index>(theta.size()), std::nan(""));
      return value;
    }
    tape.backward(ll);
    grad->resize(theta.size());
    for (std::size_t j = 0; j < m; ++j) {
      (*grad)(static_cast<Eigen::Index>(j)) = alpha.grad[j];
      (*grad)(static_cast<Eigen::Index>(m + j)) = log_s2.grad[j];
    }
    for (std::size_t c = 0; c < L; ++c)
      for (std::size_t k = 0; k < K; ++k)
        (*grad)(static_cast<Eigen::Index>(2 * m + c * K + k)) = beta.grad.at(k, c);
  }
  return value;
}

MsmParams canonicalize(const MsmParams& p) {
  const auto m = static_cast<Eigen::Index>(p.regimes());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p.sigma2(a) < p.sigma2(b); });

  const auto K = p.beta.rows();
  auto eta = [&](Eigen::Index i, Eigen::Index j) -> Eigen::VectorXd {
    if (j == m - 1) return Eigen::VectorXd::Zero(K);
    return p.beta.col(i * (m - 1) + j);
  };
  MsmParams q;
  q.alpha.resize(m);
  q.sigma2.resize(m);
  q.beta.resize(K, m * (m - 1));
  for (Eigen::Index a = 0; a < m; ++a) {
    const Eigen::Index pa = order[static_cast<std::size_t>(a)];
    q.alpha(a) = p.alpha(pa);
    q.sigma2(a) = p.sigma2(pa);
    const Eigen::VectorXd ref = eta(pa, order.back());
    for (Eigen::Index b = 0; b + 1 < m; ++b) {
      q.beta.col(a * (m - 1) + b) = eta(pa, order[static_cast<std::size_t>(b)]) - ref;
    }
  }
  return q;
}

std::optional<double> CoefRow::z() const {
  if (!std_err || !(*std_err > 0.0)) return std::nullopt;
  return coef / *std_err;
}

std::optional<double> CoefRow::p_value() const {
  const auto zz = z();
  if (!zz) return std::nullopt;
  return std::erfc(std::abs(*zz) / std::numbers::sqrt2);
}

std::optional<double> CoefRow::ci_low() const {
  if (!std_err) return std::nullopt;
  return coef - kZ975 * *std_err;
}

std::optional<double> CoefRow::ci_high() const {
  if (!std_err) return std::nullopt;
  return coef + kZ975 * *std_err;
}

namespace {

Eigen::VectorXd heuristic_start(std::size_t m, std::size_t K) {
  const auto mi = static_cast<Eigen::Index>(m);
  MsmParams p;
  p.alpha = Eigen::VectorXd::Zero(mi);
  p.sigma2.resize(mi);
  for (Eigen::Index j = 0; j < mi; ++j) {
    const double w = m == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(m - 1);
    p.sigma2(j) = std::exp(std::log(0.3) + w * (std::log(2.0) - std::log(0.3)));
  }
  p.beta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K), logits_count(m));
  for (Eigen::Index i = 0; i < mi; ++i) {
    for (Eigen::Index j = 0; j + 1 < mi; ++j) {
      p.beta(0, i * (mi - 1) + j) = 2.2 * (i == j) - 2.2 * (i == mi - 1);
    }
  }
  return pack(p);
}

Eigen::VectorXd perturbed_start(std::size_t m, std::size_t K, std::uint64_t seed, std::size_t start) {
  Eigen::VectorXd theta = heuristic_start(m, K);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(start)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto mi = static_cast<Eigen::Index>(m);
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double scale = i < 2 * mi ? 0.5 : 1.0;
    theta(i) += scale * n(rng);
  }
  return theta;
}

}  // namespace

FitResult fit_mle(std::span<const double> returns, const Eigen::MatrixXd& covariates, const MsmSpec& spec,
                  const FitOptions& opt) {
  const std::size_t T = returns.size();
  const std::size_t m = spec.regimes;
  const std::size_t K = spec.coef_dim();
  if (m < 1) throw ValidationError("MSM needs at least one regime");
  if (T < 2) throw InsufficientDataError("MSM fit needs at least 2 observations");
  if (static_cast<std::size_t>(covariates.cols()) != K - 1) {
    throw ShapeError("spec names " + std::to_string(K - 1) + " covariates, data has " +
                     std::to_string(covariates.cols()) + " columns");
  }
  if (K > 1 && static_cast<std::size_t>(covariates.rows()) < T - 1) {
    throw ShapeError("covariates must have at least T-1 rows");
  }
  if (K > 1 && !covariates.allFinite()) throw ValidationError("non-finite covariate value");
  for (double r : returns) {
    if (!std::isfinite(r)) throw ValidationError("non-finite return value");
  }
  if (opt.starts == 0) throw ValidationError("fit needs at least one start");

  // Optimize on standardized returns; the map back is affine.
  const double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(T);
  double ss = 0.0;
  for (double r : returns) ss += (r - mean) * (r - mean);
  const double sd = std::sqrt(ss / static_cast<double>(T));
  if (!(sd > 0.0)) throw ValidationError("returns have zero variance");
  std::vector<double> rs(T);
  for (std::size_t t = 0; t < T; ++t) rs[t] = (returns[t] - mean) / sd;

  auto to_scaled = [&](MsmParams p) {
    p.alpha = ((p.alpha.array() - mean) / sd).matrix();
    p.sigma2 = (p.sigma2.array() / (sd * sd)).matrix();
    return p;
  };
  auto from_scaled = [&](MsmParams p) {
    p.alpha = (p.alpha.array() * sd + mean).matrix();
    p.sigma2 = (p.sigma2.array() * (sd * sd)).matrix();
    return p;
  };

  const double Td = static_cast<double>(T);
  Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    const double ll = loglik_with_gradient(x, m, rs, covariates, g);
    if (g) *g /= -Td;
    return -ll / Td;
  };

  FitResult res;
  res.spec = spec;
  res.observations = T;
  BfgsOptions bo;
  bo.max_iter = opt.max_iter;
  bo.grad_tol = opt.grad_tol;

  Eigen::VectorXd best_x;
  double best_f = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < opt.starts; ++s) {
    Eigen::VectorXd x0;
    if (s == 0) {
      if (opt.init) {
        MsmParams init = *opt.init;
        init.check();
        if (init.regimes() != m || init.coef_dim() != K) throw ShapeError("initial parameters do not match the spec");
        x0 = pack(to_scaled(init));
      } else {
        x0 = heuristic_start(m, K);
      }
    } else {
      x0 = perturbed_start(m, K, opt.seed, s);
    }
    StartSummary sum;
    try {
      const BfgsResult r = minimize_bfgs(objective, x0, bo);
      sum.loglik = -r.f * Td;
      sum.iterations = r.iterations;
      sum.converged = r.converged;
      sum.status = r.status;
      sum.finite = std::isfinite(r.f);
      if (sum.finite && r.f < best_f) {
        best_f = r.f;
        best_x = r.x;
        res.best_start = s;
        res.converged = r.converged;
        res.iterations = r.iterations;
      }
    } catch (const NumericalError& e) {
      sum.finite = false;
      sum.status = e.what();
    }
    res.starts.push_back(sum);
  }
  if (best_x.size() == 0) throw NumericalError("MSM fit: every start produced a non-finite likelihood");

  const MsmParams scaled = canonicalize(unpack(best_x, m, K));
  const Eigen::VectorXd theta = pack(scaled);
  res.params = from_scaled(scaled);

  // Covariance of the packed coordinates from the numerical Hessian.
  const auto n = theta.size();
  Eigen::MatrixXd H(n, n);
  Eigen::VectorXd gp(n);
  Eigen::VectorXd gm(n);
  bool finite = true;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(theta(i)));
    Eigen::VectorXd x = theta;
    x(i) += h;
    objective(x, &gp);
    x(i) = theta(i) - h;
    objective(x, &gm);
    H.col(i) = (gp - gm) / (2.0 * h);
    finite = finite && gp.allFinite() && gm.allFinite();
  }
  std::optional<Eigen::MatrixXd> cov;
  if (finite) {
    const Eigen::MatrixXd fisher = 0.5 * (H + H.transpose()) * Td;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fisher);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (eig.info() == Eigen::Success && lo > 1e-10 * std::max(hi, 1.0)) {
      cov = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    }
  }
  res.hessian_singular = !cov.has_value();
  auto se = [&](const Eigen::VectorXd& jac) -> std::optional<double> {
    if (!cov) return std::nullopt;
    const double v = jac.dot(*cov * jac);
    if (!(v >= 0.0)) return std::nullopt;
    return std::sqrt(v);
  };

  const auto mi = static_cast<Eigen::Index>(m);
  for (Eigen::Index j = 0; j < mi; ++j) {
    const std::string group = "regime " + std::to_string(j + 1);
    Eigen::VectorXd ja = Eigen::VectorXd::Zero(n);
    ja(j) = sd;
    res.table.push_back({group, "const", res.params.alpha(j), se(ja)});
    Eigen::VectorXd js = Eigen::VectorXd::Zero(n);
    js(mi + j) = res.params.sigma2(j);
    res.table.push_back({group, "sigma2", res.params.sigma2(j), se(js)});
  }
  if (m > 1 && K == 1) {
    const Eigen::MatrixXd P = transition_matrix_tvtp(res.params, Eigen::VectorXd::Ones(1));
    for (Eigen::Index b = 0; b + 1 < mi; ++b) {
      for (Eigen::Index a = 0; a < mi; ++a) {
        Eigen::VectorXd jac = Eigen::VectorXd::Zero(n);
        for (Eigen::Index c = 0; c + 1 < mi; ++c) {
          jac(2 * mi + a * (mi - 1) + c) = P(a, b) * ((b == c ? 1.0 : 0.0) - P(a, c));
        }
        const std::string term = "p[" + std::to_string(a + 1) + "->" + std::to_string(b + 1) + "]";
        res.table.push_back({"transitions", term, P(a, b), se(jac)});
      }
    }
  } else if (m > 1) {
    const auto Ki = static_cast<Eigen::Index>(K);
    for (Eigen::Index k = 0; k < Ki; ++k) {
      const std::string name = k == 0 ? "const" : spec.covariates[static_cast<std::size_t>(k - 1)];
      for (Eigen::Index b = 0; b + 1 < mi; ++b) {
        for (Eigen::Index a = 0; a < mi; ++a) {
          const Eigen::Index c = a * (mi - 1) + b;
          Eigen::VectorXd jac = Eigen::VectorXd::Zero(n);
          jac(2 * mi + c * Ki + k) = 1.0;
          const std::string term =
              "p[" + std::to_string(a + 1) + "->" + std::to_string(b + 1) + "]." + name;
          res.table.push_back({"transitions", term, res.params.beta(k, c), se(jac)});
        }
      }
    }
  }

  res.filter = filter_and_smooth(returns, covariates, res.params);
  res.loglik = res.filter.loglik;
  return res;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? fmt("%.10g", *v) : ""; }

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

std::string coef_table_csv(const FitResult& fit) {
  std::ostringstream os;
  os << "group,term,coef,std_err,z,p_value,ci_low,ci_high\n";
  for (const auto& r : fit.table) {
    os << r.group << ',' << r.term << ',' << fmt("%.10g", r.coef) << ',' << opt_num(r.std_err) << ','
       << opt_num(r.z()) << ',' << opt_num(r.p_value()) << ',' << opt_num(r.ci_low()) << ','
       << opt_num(r.ci_high()) << '\n';
  }
  return os.str();
}

std::string coef_table_json(const FitResult& fit) {
  nlohmann::ordered_json j;
  j["regimes"] = fit.spec.regimes;
  j["covariates"] = fit.spec.covariates;
  j["observations"] = fit.observations;
  j["loglik"] = fit.loglik;
  j["converged"] = fit.converged;
  j["best_start"] = fit.best_start;
  j["iterations"] = fit.iterations;
  j["hessian_singular"] = fit.hessian_singular;
  auto& rows = j["coefficients"] = nlohmann::ordered_json::array();
  for (const auto& r : fit.table) {
    rows.push_back({{"group", r.group},
                    {"term", r.term},
                    {"coef", r.coef},
                    {"std_err", opt_json(r.std_err)},
                    {"z", opt_json(r.z())},
                    {"p_value", opt_json(r.p_value())},
                    {"ci_low", opt_json(r.ci_low())},
                    {"ci_high", opt_json(r.ci_high())}});
  }
  auto& p = j["params"];
  p["alpha"] = std::vector<double>(fit.params.alpha.data(), fit.params.alpha.data() + fit.params.alpha.size());
  p["sigma2"] = std::vector<double>(fit.params.sigma2.data(), fit.params.sigma2.data() + fit.params.sigma2.size());
  auto& b = p["beta"] = nlohmann::ordered_json::array();
  for (Eigen::Index k = 0; k < fit.params.beta.rows(); ++k) {
    std::vector<double> row;
    for (Eigen::Index c = 0; c < fit.params.beta.cols(); ++c) row.push_back(fit.params.beta(k, c));
    b.push_back(row);
  }
  auto& st = j["starts"] = nlohmann::ordered_json::array();
  for (const auto& s : fit.starts) {
    st.push_back({{"loglik", s.finite ? nlohmann::ordered_json(s.loglik) : nlohmann::ordered_json(nullptr)},
                  {"iterations", s.iterations},
                  {"converged", s.converged},
                  {"status", s.status}});
  }
  return j.dump(2) + "\n";
}

std::string probabilities_csv(const FitResult& fit, std::span<const std::string> dates) {
  const auto& f = fit.filter;
  const Eigen::Index T = f.filtered.rows();
  const Eigen::Index m = f.filtered.cols();
  std::ostringstream os;
  os << (dates.empty() ? "t" : "date");
  for (const char* kind : {"predicted", "filtered", "smoothed"})
    for (Eigen::Index j = 0; j < m; ++j) os << ',' << kind << '_' << j + 1;
  os << '\n';
  for (Eigen::Index t = 0; t < T; ++t) {
    if (dates.empty()) {
      os << t;
    } else {
      os << dates[static_cast<std::size_t>(t)];
    }
    for (const Eigen::MatrixXd* M : {&f.predicted, &f.filtered, &f.smoothed})
      for (Eigen::Index j = 0; j < m; ++j) os << ',' << fmt("%.10f", (*M)(t, j));
    os << '\n';
  }
  return os.str();
}

std::string coef_table_text(const FitResult& fit) {
  std::ostringstream os;
  os << "Markov switching model: " << fit.spec.regimes << " regimes, ";
  if (fit.spec.covariates.empty()) {
    os << "constant transitions\n";
  } else {
    os << "transition covariates:";
    for (const auto& c : fit.spec.covariates) os << ' ' << c;
    os << '\n';
  }
  os << "observations " << fit.observations << ", log-likelihood " << fmt("%.4f", fit.loglik)
     << (fit.converged ? "" : "  [NOT CONVERGED]") << '\n';
  std::string group;
  char line[200];
  for (const auto& r : fit.table) {
    if (r.group != group) {
      group = r.group;
      std::snprintf(line, sizeof line, "\n%-22s %12s %12s %10s %10s %12s %12s\n", group.c_str(), "coef", "std err",
                    "z", "P>|z|", "[0.025", "0.975]");
      os << line;
    }
    auto cell = [](const std::optional<double>& v, const char* f) { return v ? fmt(f, *v) : std::string("-"); };
    std::snprintf(line, sizeof line, "%-22s %12s %12s %10s %10s %12s %12s\n", r.term.c_str(),
                  fmt("%.4g", r.coef).c_str(), cell(r.std_err, "%.3g").c_str(), cell(r.z(), "%.3f").c_str(),
                  cell(r.p_value(), "%.3f").c_str(), cell(r.ci_low(), "%.3g").c_str(),
                  cell(r.ci_high(), "%.3g").c_str());
    os << line;
  }
  return os.str();
}

}  // namespace msrnn::msm
