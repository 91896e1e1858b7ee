#include "pfarb/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pfarb {

namespace {

constexpr int kPriceLags = 8;

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

/// Mean over the same intra-day slot of the D days preceding absolute index t.
double mean_at(const std::vector<double>& series, int t, int past_days, int steps_per_day) {
  double s = 0.0;
  for (int p = 1; p <= past_days; ++p) s += series[t - p * steps_per_day];
  return s / past_days;
}

}  // namespace

std::vector<double> daily_mean(const std::vector<double>& history, int past_days,
                               int steps_per_day) {
  if (past_days < 1 || steps_per_day < 1) {
    throw std::invalid_argument("daily_mean: counts must be positive");
  }
  const int h = static_cast<int>(history.size());
  if (h < past_days * steps_per_day) {
    throw std::invalid_argument("daily_mean: insufficient history");
  }
  std::vector<double> out(steps_per_day);
  for (int s = 0; s < steps_per_day; ++s) {
    double acc = 0.0;
    for (int p = 1; p <= past_days; ++p) acc += history[h + s - p * steps_per_day];
    out[s] = acc / past_days;
  }
  return out;
}

ArmaModel arma_fit(const std::vector<double>& history, int lag_count, int deviation_terms,
                   int past_days, int steps_per_day, double l1_weight) {
  if (lag_count < 1 || deviation_terms < 0 || past_days < 1) {
    throw std::invalid_argument("arma_fit: bad model orders");
  }
  const int h = static_cast<int>(history.size());
  const int base = past_days * steps_per_day;
  const int k_min = std::max(base + lag_count, base + deviation_terms * steps_per_day);
  const int rows = h - k_min;
  if (rows < lag_count + deviation_terms + 1) {
    throw std::invalid_argument("arma_fit: insufficient history");
  }

  // residuals against the rolling daily mean
  std::vector<double> resid(h, 0.0);
  for (int t = base; t < h; ++t) {
    resid[t] = history[t] - mean_at(history, t, past_days, steps_per_day);
  }

  const int nf = lag_count + deviation_terms;
  Eigen::MatrixXd X(rows, nf);
  Eigen::VectorXd m(rows);
  for (int r = 0; r < rows; ++r) {
    const int k = k_min + r;
    m(r) = resid[k];
    for (int j = 0; j < lag_count; ++j) X(r, j) = resid[k - 1 - j];
    for (int u = 0; u < deviation_terms; ++u) {
      X(r, lag_count + u) = resid[k - (u + 1) * steps_per_day];
    }
  }

  // ISTA with fixed step 1/L
  const Eigen::MatrixXd gram = X.transpose() * X;
  const double lip = 2.0 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram)
                               .eigenvalues()
                               .maxCoeff();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(nf);
  if (lip > 0.0) {
    const double step = 1.0 / lip;
    double prev_obj = (X * w - m).squaredNorm() + l1_weight * w.lpNorm<1>();
    for (int it = 0; it < 10000; ++it) {
      const Eigen::VectorXd grad = 2.0 * (gram * w - X.transpose() * m);
      for (int i = 0; i < nf; ++i) {
        w(i) = soft_threshold(w(i) - step * grad(i), l1_weight * step);
      }
      const double obj = (X * w - m).squaredNorm() + l1_weight * w.lpNorm<1>();
      if (std::abs(prev_obj - obj) <= 1e-8 * std::max(1.0, std::abs(prev_obj))) break;
      prev_obj = obj;
    }
  }

  ArmaModel model;
  model.lag_count = lag_count;
  model.deviation_terms = deviation_terms;
  model.past_days = past_days;
  model.steps_per_day = steps_per_day;
  model.alpha = w.head(lag_count);
  model.beta = w.tail(deviation_terms);
  model.daily_mean = daily_mean(history, past_days, steps_per_day);
  return model;
}

std::vector<double> arma_predict(const ArmaModel& model, const std::vector<double>& history,
                                 int horizon) {
  const int h = static_cast<int>(history.size());
  const int base = model.past_days * model.steps_per_day;
  const int need = std::max(base + model.lag_count,
                            base + model.deviation_terms * model.steps_per_day);
  if (h < need) throw std::invalid_argument("arma_predict: insufficient history");

  // extended series: realized values then forecasts as they are produced
  std::vector<double> series(history);
  std::vector<double> resid(h + horizon, 0.0);
  for (int t = base; t < h; ++t) {
    resid[t] = history[t] - mean_at(history, t, model.past_days, model.steps_per_day);
  }

  std::vector<double> out;
  out.reserve(horizon);
  for (int t = h; t < h + horizon; ++t) {
    const double vbar = mean_at(series, t, model.past_days, model.steps_per_day);
    double mhat = 0.0;
    for (int j = 0; j < model.lag_count; ++j) mhat += model.alpha(j) * resid[t - 1 - j];
    for (int u = 0; u < model.deviation_terms; ++u) {
      mhat += model.beta(u) * resid[t - (u + 1) * model.steps_per_day];
    }
    resid[t] = mhat;
    const double v = vbar + mhat;
    series.push_back(v);
    out.push_back(v);
  }
  return out;
}

ArimaModel arima_fit(const std::vector<double>& price_history) {
  const int h = static_cast<int>(price_history.size());
  if (h < kPriceLags + 2 + kPriceLags) {
    throw std::invalid_argument("arima_fit: insufficient price history");
  }

  std::vector<double> diff(h - 1);
  for (int t = 1; t < h; ++t) diff[t - 1] = price_history[t] - price_history[t - 1];

  const int rows = static_cast<int>(diff.size()) - kPriceLags;
  Eigen::MatrixXd X(rows, kPriceLags);
  Eigen::VectorXd y(rows);
  for (int r = 0; r < rows; ++r) {
    y(r) = diff[kPriceLags + r];
    for (int j = 0; j < kPriceLags; ++j) X(r, j) = diff[kPriceLags + r - 1 - j];
  }

  ArimaModel model;
  Eigen::MatrixXd gram = X.transpose() * X;
  const Eigen::VectorXd rhs = X.transpose() * y;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  Eigen::VectorXd gamma;
  const double cond_floor = 1e-12 * std::max(1.0, gram.diagonal().maxCoeff());
  if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > cond_floor) {
    gamma = ldlt.solve(rhs);
  } else {
    model.ridge_fallback = true;
    gram.diagonal().array() += 1e-8 * std::max(1.0, gram.diagonal().maxCoeff());
    gamma = gram.ldlt().solve(rhs);
  }
  model.gamma = gamma;
  model.last_levels.assign(price_history.end() - (kPriceLags + 1), price_history.end());
  return model;
}

std::vector<double> arima_predict(const ArimaModel& model, int horizon) {
  std::vector<double> lags(kPriceLags);  // most recent first
  for (int j = 0; j < kPriceLags; ++j) {
    const std::size_t n = model.last_levels.size();
    lags[j] = model.last_levels[n - 1 - j] - model.last_levels[n - 2 - j];
  }
  double level = model.last_levels.back();
  std::vector<double> out;
  out.reserve(horizon);
  for (int t = 0; t < horizon; ++t) {
    double d = 0.0;
    for (int j = 0; j < kPriceLags; ++j) d += model.gamma(j) * lags[j];
    level += d;
    out.push_back(level);
    std::rotate(lags.rbegin(), lags.rbegin() + 1, lags.rend());
    lags[0] = d;
  }
  return out;
}

}  // namespace pfarb
