#ifndef STOCHINV_SPECIAL_HPP
#define STOCHINV_SPECIAL_HPP

namespace stochinv {

double std_normal_pdf(double z);
double std_normal_log_pdf(double z);
double std_normal_cdf(double z);

// Inverse standard normal CDF (Wichura's PPND16). p must lie in (0,1).
double std_normal_quantile(double p);

double log_beta_fn(double a, double b);

// Regularized incomplete beta I_x(a,b) for a,b > 0, x in [0,1].
double ibeta_reg(double a, double b, double x);

}  // namespace stochinv

#endif  // STOCHINV_SPECIAL_HPP
