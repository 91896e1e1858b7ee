#pragma once

#include <Eigen/Dense>

#include <vector>

namespace pfarb {

/// Daily-mean + autoregressive-residual model for load series.
struct ArmaModel {
  int lag_count = 4;        ///< J: residual lags
  int deviation_terms = 3;  ///< U: daily-deviation regressors
  int past_days = 7;        ///< D: days in the daily mean
  int steps_per_day = 96;   ///< N
  Eigen::VectorXd alpha;    ///< residual-lag coefficients, size J
  Eigen::VectorXd beta;     ///< deviation coefficients, size U
  std::vector<double> daily_mean;  ///< mean profile for the day after the fit window
};

/// Differenced autoregressive price model of order 8.
struct ArimaModel {
  Eigen::VectorXd gamma;            ///< lag coefficients, size 8
  std::vector<double> last_levels;  ///< most recent 9 raw values, oldest first
  bool ridge_fallback = false;      ///< set when the normal equations needed regularization
};

/// Mean profile over the last D days of history; entry s predicts the value
/// N*p steps after history position H - N + s.
std::vector<double> daily_mean(const std::vector<double>& history, int past_days,
                               int steps_per_day);

/// L1-regularized least-squares fit of the residual model by proximal gradient.
ArmaModel arma_fit(const std::vector<double>& history, int lag_count, int deviation_terms,
                   int past_days, int steps_per_day, double l1_weight);

/// Multi-step forecast; predicted residuals feed back as lags beyond the
/// history frontier.
std::vector<double> arma_predict(const ArmaModel& model, const std::vector<double>& history,
                                 int horizon);

ArimaModel arima_fit(const std::vector<double>& price_history);

std::vector<double> arima_predict(const ArimaModel& model, int horizon);

}  // namespace pfarb
