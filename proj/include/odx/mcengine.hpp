#pragma once

// Monte Carlo face of the library: Euler paths of a diffusion
// dX = a(t, X) dt + sigma(t, X) dW, the pathwise numeraire wealth
// V_hat = prod (1 + <rho, dX>) with rho = c^+ a and c = sigma sigma^T,
// statistical martingale checks, and a cross-sectional regression version
// of the Kunita-Watanabe split.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace odx::mc {

enum class CoefficientForm { Const, Linear, Custom };

// Const:  a = a0.  Linear: a_i = a0_i + a1_i x_i.
// Custom: fn(t, x, out) writes a into out.
struct DriftSpec {
    CoefficientForm form = CoefficientForm::Const;
    Eigen::VectorXd a0;
    Eigen::VectorXd a1;
    std::function<void(double, const double*, double*)> fn;
};

// Const:  sigma = s0.  Linear: sigma_ij = s0_ij + s1_ij x_i.
// Custom: fn(t, x, out) writes sigma row-major (d x m) into out.
struct VolSpec {
    CoefficientForm form = CoefficientForm::Const;
    Eigen::MatrixXd s0;
    Eigen::MatrixXd s1;
    std::size_t factors = 0; // m; only read for the custom form
    std::function<void(double, const double*, double*)> fn;
};

struct DiffusionSpec {
    Eigen::VectorXd x0;
    DriftSpec drift;
    VolSpec vol;
    double horizon = 1.0;
    std::size_t steps = 256;
    std::size_t paths = 100000;
    std::uint64_t seed = 0;

    std::size_t dim() const { return static_cast<std::size_t>(x0.size()); }
    std::size_t factors() const;
    double dt() const { return horizon / static_cast<double>(steps); }
    bool constant_coefficients() const;
    void validate() const;

    void drift_at(double t, const double* x, double* out) const;
    void vol_at(double t, const double* x, double* out) const;

    static DiffusionSpec constant(const Eigen::VectorXd& a, const Eigen::MatrixXd& sigma, double horizon,
                                  std::size_t steps, std::size_t paths, std::uint64_t seed);
};

// Path-major array: value(path, time, component).
struct PathPanel {
    std::size_t paths = 0;
    std::size_t times = 0;
    std::size_t dim = 0;
    std::vector<double> data;

    PathPanel() = default;
    PathPanel(std::size_t paths, std::size_t times, std::size_t dim, double fill = 0.0);

    bool empty() const { return data.empty(); }
    double* row(std::size_t p, std::size_t t) { return data.data() + (p * times + t) * dim; }
    const double* row(std::size_t p, std::size_t t) const { return data.data() + (p * times + t) * dim; }
    double& operator()(std::size_t p, std::size_t t, std::size_t i = 0) { return row(p, t)[i]; }
    double operator()(std::size_t p, std::size_t t, std::size_t i = 0) const { return row(p, t)[i]; }
};

struct PathEnsemble {
    std::vector<double> time;
    PathPanel X;
    PathPanel V_hat;                     // empty until deflate_paths
    std::vector<std::uint8_t> aborted;   // per path; wealth step 1 + <rho, dX> <= 0
    std::size_t abort_count = 0;
    bool excessive_aborts = false;       // abort fraction above 1%
    Eigen::VectorXd rho_min;             // componentwise range of rho over all evaluations
    Eigen::VectorXd rho_max;
    std::uint64_t seed = 0;

    std::size_t paths() const { return X.paths; }
    std::size_t steps() const { return X.times == 0 ? 0 : X.times - 1; }
    bool deflated() const { return !V_hat.empty(); }
    double abort_fraction() const;

    PathPanel component(std::size_t i) const;
    PathPanel Y_hat() const;
    // Y_hat * X_i.
    PathPanel deflated_component(std::size_t i) const;
};

// Euler scheme; throws SimulationError at the first non-finite state.
// Worker threads are capped by the ODX_THREADS environment variable.
PathEnsemble simulate(const DiffusionSpec& spec);

// Adds V_hat; rho = c^+ a is evaluated at the start of every step.
PathEnsemble deflate_paths(PathEnsemble ens, const DiffusionSpec& spec, double tol = 1e-10);

// dM = dX - a(t, X) dt per step; times = steps.
PathPanel martingale_increments(const PathEnsemble& ens, const DiffusionSpec& spec);

struct SampleStats {
    double mean = 0.0;
    double se = 0.0;
    std::size_t count = 0;
};

// Mean and standard error of a scalar panel at one time over non-aborted paths.
SampleStats sample_stats(const PathPanel& z, std::size_t time, const std::vector<std::uint8_t>& exclude = {});

struct MartingaleTestOptions {
    std::size_t buckets = 16;
    double threshold = 4.0;
};

struct BucketStat {
    std::size_t t0 = 0;
    std::size_t t1 = 0;
    double mean = 0.0;
    double se = 0.0;
    double t_stat = 0.0;
};

struct MartingaleReport {
    bool pass = false;
    double max_abs_t = 0.0;
    std::size_t paths_used = 0;
    std::vector<BucketStat> buckets;
};

// t-statistic of the mean increment of a scalar panel over coarse buckets.
MartingaleReport martingale_test(const PathPanel& z, const std::vector<std::uint8_t>& exclude = {},
                                 const MartingaleTestOptions& options = {});

struct KwRegressOptions {
    std::size_t bins = 1; // quantile bins of U at the start of each step
};

struct KwStep {
    std::vector<Eigen::VectorXd> theta;    // per bin
    std::vector<Eigen::VectorXd> theta_se; // heteroskedasticity-robust
    std::vector<double> dB;
    std::vector<double> n_norm;
    std::vector<std::size_t> count;
};

struct KwRegression {
    std::vector<KwStep> steps;
    Eigen::VectorXd pooled_theta;    // count-weighted average over steps and bins
    Eigen::VectorXd pooled_theta_se;
    std::vector<double> B;           // cumulative count-weighted drift, B[0] = 0
    double n_norm = 0.0;             // residual RMS over all steps
    std::vector<std::string> warnings;
};

// Per step, regress dU on (1, dM) across paths.
KwRegression kw_regress(const PathPanel& u, const PathPanel& dm, const std::vector<std::uint8_t>& exclude = {},
                        const KwRegressOptions& options = {});

// rho of the one-period two-point node dX = a dt +- sigma sqrt(dt), p = 1/2,
// matched to a one-dimensional diffusion at (0, x0) with dt = horizon / steps.
double matched_binomial_rho(const DiffusionSpec& spec, std::size_t steps);

// Number of worker threads for `work` independent items.
std::size_t worker_count(std::size_t work);

} // namespace odx::mc
