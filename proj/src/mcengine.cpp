#include "odx/mcengine.hpp"

#include "odx/characteristics.hpp"
#include "odx/deflators.hpp"
#include "odx/error.hpp"
#include "odx/probtree.hpp"
#include "odx/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

namespace odx::mc {

namespace {

// Neumaier compensated sum.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

bool excluded(const std::vector<std::uint8_t>& exclude, std::size_t p) {
    return !exclude.empty() && exclude[p] != 0;
}

// Runs body(begin, end) over contiguous path blocks. If several blocks throw,
// the error from the lowest path index wins so failures are reproducible.
template <class Body>
void parallel_paths(std::size_t paths, Body body) {
    const std::size_t workers = worker_count(paths);
    if (workers <= 1) {
        body(std::size_t{0}, paths);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (paths + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = std::min(paths, w * chunk), end = std::min(paths, begin + chunk);
        pool.emplace_back([&, w, begin, end] {
            try {
                body(begin, end);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

} // namespace

std::size_t worker_count(std::size_t work) {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("ODX_THREADS")) {
        char* end = nullptr;
        const unsigned long cap = std::strtoul(env, &end, 10);
        if (end != env && cap > 0)
            n = std::min<std::size_t>(n, cap);
    }
    return std::max<std::size_t>(1, std::min(n, work / 1024 + 1));
}

// ---------------------------------------------------------------------------
// DiffusionSpec

std::size_t DiffusionSpec::factors() const {
    if (vol.form == CoefficientForm::Custom)
        return vol.factors;
    return static_cast<std::size_t>(vol.s0.cols());
}

bool DiffusionSpec::constant_coefficients() const {
    return drift.form == CoefficientForm::Const && vol.form == CoefficientForm::Const;
}

void DiffusionSpec::validate() const {
    const auto d = static_cast<Eigen::Index>(dim());
    ODX_REQUIRE(d >= 1, "diffusion needs at least one dimension");
    ODX_REQUIRE(x0.allFinite(), "initial state must be finite");
    ODX_REQUIRE(steps >= 1, "steps must be at least 1");
    ODX_REQUIRE(paths >= 1, "paths must be at least 1");
    ODX_REQUIRE(std::isfinite(horizon) && horizon > 0.0, "horizon must be positive (got " << horizon << ")");
    switch (drift.form) {
    case CoefficientForm::Linear:
        ODX_REQUIRE(drift.a1.size() == d && drift.a1.allFinite(), "linear drift slope must have " << d << " finite entries");
        [[fallthrough]];
    case CoefficientForm::Const:
        ODX_REQUIRE(drift.a0.size() == d && drift.a0.allFinite(), "drift must have " << d << " finite entries");
        break;
    case CoefficientForm::Custom:
        ODX_REQUIRE(static_cast<bool>(drift.fn), "custom drift needs a function");
        break;
    }
    switch (vol.form) {
    case CoefficientForm::Linear:
        ODX_REQUIRE(vol.s1.rows() == d && vol.s1.cols() == vol.s0.cols() && vol.s1.allFinite(),
                    "linear volatility slope must be a finite " << d << " x " << vol.s0.cols() << " matrix");
        [[fallthrough]];
    case CoefficientForm::Const:
        ODX_REQUIRE(vol.s0.rows() == d && vol.s0.cols() >= 1 && vol.s0.allFinite(),
                    "volatility must be a finite " << d << " x m matrix with m >= 1");
        break;
    case CoefficientForm::Custom:
        ODX_REQUIRE(static_cast<bool>(vol.fn) && vol.factors >= 1, "custom volatility needs a function and m >= 1");
        break;
    }
}

void DiffusionSpec::drift_at(double t, const double* x, double* out) const {
    const std::size_t d = dim();
    switch (drift.form) {
    case CoefficientForm::Const:
        for (std::size_t i = 0; i < d; ++i)
            out[i] = drift.a0(static_cast<Eigen::Index>(i));
        break;
    case CoefficientForm::Linear:
        for (std::size_t i = 0; i < d; ++i)
            out[i] = drift.a0(static_cast<Eigen::Index>(i)) + drift.a1(static_cast<Eigen::Index>(i)) * x[i];
        break;
    case CoefficientForm::Custom:
        drift.fn(t, x, out);
        break;
    }
}

void DiffusionSpec::vol_at(double t, const double* x, double* out) const {
    const std::size_t d = dim(), m = factors();
    switch (vol.form) {
    case CoefficientForm::Const:
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < m; ++j)
                out[i * m + j] = vol.s0(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        break;
    case CoefficientForm::Linear:
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
                out[i * m + j] = vol.s0(ii, jj) + vol.s1(ii, jj) * x[i];
            }
        break;
    case CoefficientForm::Custom:
        vol.fn(t, x, out);
        break;
    }
}

DiffusionSpec DiffusionSpec::constant(const Eigen::VectorXd& a, const Eigen::MatrixXd& sigma, double horizon,
                                      std::size_t steps, std::size_t paths, std::uint64_t seed) {
    DiffusionSpec s;
    s.x0 = Eigen::VectorXd::Zero(a.size());
    s.drift.a0 = a;
    s.vol.s0 = sigma;
    s.horizon = horizon;
    s.steps = steps;
    s.paths = paths;
    s.seed = seed;
    return s;
}

// ---------------------------------------------------------------------------
// Panels

PathPanel::PathPanel(std::size_t p, std::size_t t, std::size_t d, double fill)
    : paths(p), times(t), dim(d), data(p * t * d, fill) {}

double PathEnsemble::abort_fraction() const {
    return paths() == 0 ? 0.0 : static_cast<double>(abort_count) / static_cast<double>(paths());
}

PathPanel PathEnsemble::component(std::size_t i) const {
    ODX_REQUIRE(i < X.dim, "component " << i << " out of range");
    PathPanel out(X.paths, X.times, 1);
    for (std::size_t p = 0; p < X.paths; ++p)
        for (std::size_t t = 0; t < X.times; ++t)
            out(p, t) = X(p, t, i);
    return out;
}

PathPanel PathEnsemble::Y_hat() const {
    ODX_REQUIRE(deflated(), "ensemble has no numeraire wealth; run deflate_paths first");
    PathPanel out = V_hat;
    for (double& v : out.data)
        v = 1.0 / v;
    return out;
}

PathPanel PathEnsemble::deflated_component(std::size_t i) const {
    ODX_REQUIRE(deflated(), "ensemble has no numeraire wealth; run deflate_paths first");
    PathPanel out = component(i);
    for (std::size_t k = 0; k < out.data.size(); ++k)
        out.data[k] /= V_hat.data[k];
    return out;
}

// ---------------------------------------------------------------------------
// Simulation

PathEnsemble simulate(const DiffusionSpec& spec) {
    spec.validate();
    const std::size_t d = spec.dim(), m = spec.factors(), n = spec.steps, paths = spec.paths;
    const double dt = spec.dt(), sqdt = std::sqrt(dt);

    PathEnsemble ens;
    ens.seed = spec.seed;
    ens.time.resize(n + 1);
    for (std::size_t j = 0; j <= n; ++j)
        ens.time[j] = spec.horizon * static_cast<double>(j) / static_cast<double>(n);
    ens.X = PathPanel(paths, n + 1, d);
    ens.aborted.assign(paths, 0);

    parallel_paths(paths, [&](std::size_t begin, std::size_t end) {
        std::vector<double> a(d), sig(d * m), xi(m);
        for (std::size_t p = begin; p < end; ++p) {
            CounterEngine eng(spec.seed, p);
            std::normal_distribution<double> normal;
            double* x = ens.X.row(p, 0);
            for (std::size_t i = 0; i < d; ++i)
                x[i] = spec.x0(static_cast<Eigen::Index>(i));
            for (std::size_t j = 0; j < n; ++j) {
                const double* cur = ens.X.row(p, j);
                double* next = ens.X.row(p, j + 1);
                spec.drift_at(ens.time[j], cur, a.data());
                spec.vol_at(ens.time[j], cur, sig.data());
                for (std::size_t k = 0; k < m; ++k)
                    xi[k] = normal(eng);
                for (std::size_t i = 0; i < d; ++i) {
                    double noise = 0.0;
                    for (std::size_t k = 0; k < m; ++k)
                        noise += sig[i * m + k] * xi[k];
                    next[i] = cur[i] + a[i] * dt + noise * sqdt;
                    if (!std::isfinite(next[i])) {
                        std::ostringstream msg;
                        msg << "non-finite state on path " << p << " at step " << j + 1 << " (component " << i
                            << ")";
                        throw SimulationError(p, j + 1, msg.str());
                    }
                }
            }
        }
    });
    return ens;
}

PathEnsemble deflate_paths(PathEnsemble ens, const DiffusionSpec& spec, double tol) {
    spec.validate();
    ODX_REQUIRE(ens.X.dim == spec.dim(), "ensemble and diffusion dimensions differ");
    ODX_REQUIRE(ens.X.times == spec.steps + 1, "ensemble and diffusion step counts differ");
    const std::size_t d = spec.dim(), m = spec.factors(), n = ens.steps(), paths = ens.paths();
    const auto di = static_cast<Eigen::Index>(d);

    // rho = c^+ a; a drift outside the range of c is an arbitrage of the
    // continuous model and aborts the run.
    auto solve_rho = [&](double t, const double* x, std::vector<double>& a, std::vector<double>& sig,
                         Eigen::VectorXd& rho, std::size_t path, std::size_t step) {
        spec.drift_at(t, x, a.data());
        spec.vol_at(t, x, sig.data());
        if (d == 1) {
            double c = 0.0;
            for (std::size_t k = 0; k < m; ++k)
                c += sig[k] * sig[k];
            const bool solvable = c > tol ? true : std::abs(a[0]) <= tol;
            if (!solvable) {
                std::ostringstream msg;
                msg << "drift " << a[0] << " with zero diffusion on path " << path << " at step " << step
                    << ": arbitrage";
                throw SimulationError(path, step, msg.str());
            }
            rho(0) = c > tol ? a[0] / c : 0.0;
            return;
        }
        const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> s(
            sig.data(), di, static_cast<Eigen::Index>(m));
        const Eigen::Map<const Eigen::VectorXd> av(a.data(), di);
        const auto step_sol = solve_structure_step(s * s.transpose(), av, tol);
        if (!step_sol.solvable) {
            std::ostringstream msg;
            msg << "drift outside the range of the diffusion matrix on path " << path << " at step " << step
                << ": arbitrage along " << step_sol.zeta.transpose();
            throw SimulationError(path, step, msg.str());
        }
        rho = step_sol.rho;
    };

    ens.V_hat = PathPanel(paths, n + 1, 1, 1.0);
    ens.aborted.assign(paths, 0);

    std::optional<Eigen::VectorXd> fixed_rho;
    if (spec.constant_coefficients()) {
        std::vector<double> a(d), sig(d * m);
        Eigen::VectorXd rho(di);
        solve_rho(0.0, ens.X.row(0, 0), a, sig, rho, 0, 0);
        fixed_rho = rho;
    }

    const std::size_t workers = worker_count(paths);
    std::vector<Eigen::VectorXd> lo(workers, Eigen::VectorXd::Constant(di, std::numeric_limits<double>::infinity()));
    std::vector<Eigen::VectorXd> hi(workers, Eigen::VectorXd::Constant(di, -std::numeric_limits<double>::infinity()));
    const std::size_t chunk = (paths + workers - 1) / workers;

    parallel_paths(paths, [&](std::size_t begin, std::size_t end) {
        const std::size_t w = begin / std::max<std::size_t>(1, chunk);
        std::vector<double> a(d), sig(d * m);
        Eigen::VectorXd rho = fixed_rho ? *fixed_rho : Eigen::VectorXd(di);
        for (std::size_t p = begin; p < end; ++p) {
            double* v = ens.V_hat.row(p, 0);
            for (std::size_t j = 0; j < n; ++j) {
                const double* x = ens.X.row(p, j);
                const double* xn = ens.X.row(p, j + 1);
                if (!fixed_rho)
                    solve_rho(ens.time[j], x, a, sig, rho, p, j);
                lo[w] = lo[w].cwiseMin(rho);
                hi[w] = hi[w].cwiseMax(rho);
                double gross = 1.0;
                for (std::size_t i = 0; i < d; ++i)
                    gross += rho(static_cast<Eigen::Index>(i)) * (xn[i] - x[i]);
                if (!(gross > 0.0)) {
                    ens.aborted[p] = 1;
                    std::fill(v + j + 1, v + n + 1, std::numeric_limits<double>::quiet_NaN());
                    break;
                }
                v[j + 1] = v[j] * gross;
            }
        }
    });

    ens.rho_min = lo[0];
    ens.rho_max = hi[0];
    for (std::size_t w = 1; w < workers; ++w) {
        ens.rho_min = ens.rho_min.cwiseMin(lo[w]);
        ens.rho_max = ens.rho_max.cwiseMax(hi[w]);
    }
    ens.abort_count = static_cast<std::size_t>(std::count(ens.aborted.begin(), ens.aborted.end(), 1));
    ens.excessive_aborts = ens.abort_fraction() > 0.01;
    return ens;
}

PathPanel martingale_increments(const PathEnsemble& ens, const DiffusionSpec& spec) {
    ODX_REQUIRE(ens.X.dim == spec.dim() && ens.steps() == spec.steps, "ensemble does not match the diffusion");
    const std::size_t d = spec.dim(), n = ens.steps();
    const double dt = spec.dt();
    PathPanel out(ens.paths(), n, d);
    std::vector<double> a(d);
    for (std::size_t p = 0; p < ens.paths(); ++p)
        for (std::size_t j = 0; j < n; ++j) {
            const double* x = ens.X.row(p, j);
            const double* xn = ens.X.row(p, j + 1);
            spec.drift_at(ens.time[j], x, a.data());
            double* dm = out.row(p, j);
            for (std::size_t i = 0; i < d; ++i)
                dm[i] = xn[i] - x[i] - a[i] * dt;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Statistics

namespace {

SampleStats stats_of(const std::vector<double>& xs) {
    SampleStats s;
    s.count = xs.size();
    if (xs.empty())
        return s;
    CompensatedSum sum;
    for (double x : xs)
        sum.add(x);
    s.mean = sum.value() / static_cast<double>(xs.size());
    if (xs.size() < 2)
        return s;
    CompensatedSum sq;
    for (double x : xs)
        sq.add((x - s.mean) * (x - s.mean));
    const double var = sq.value() / static_cast<double>(xs.size() - 1);
    s.se = std::sqrt(var / static_cast<double>(xs.size()));
    return s;
}

} // namespace

SampleStats sample_stats(const PathPanel& z, std::size_t time, const std::vector<std::uint8_t>& exclude) {
    ODX_REQUIRE(z.dim == 1, "sample statistics need a scalar panel");
    ODX_REQUIRE(time < z.times, "time index " << time << " out of range");
    std::vector<double> xs;
    xs.reserve(z.paths);
    for (std::size_t p = 0; p < z.paths; ++p)
        if (!excluded(exclude, p) && std::isfinite(z(p, time)))
            xs.push_back(z(p, time));
    return stats_of(xs);
}

MartingaleReport martingale_test(const PathPanel& z, const std::vector<std::uint8_t>& exclude,
                                 const MartingaleTestOptions& options) {
    ODX_REQUIRE(z.dim == 1, "martingale test needs a scalar panel");
    ODX_REQUIRE(z.times >= 2, "martingale test needs at least one step");
    ODX_REQUIRE(options.buckets >= 1, "at least one bucket required");
    ODX_REQUIRE(options.threshold > 0.0, "threshold must be positive");
    const std::size_t n = z.times - 1;
    const std::size_t buckets = std::min(options.buckets, n);

    MartingaleReport rep;
    std::vector<std::size_t> use;
    for (std::size_t p = 0; p < z.paths; ++p) {
        if (excluded(exclude, p))
            continue;
        bool finite = true;
        for (std::size_t t = 0; t < z.times && finite; ++t)
            finite = std::isfinite(z(p, t));
        if (finite)
            use.push_back(p);
    }
    rep.paths_used = use.size();

    std::vector<double> inc(use.size());
    for (std::size_t b = 0; b < buckets; ++b) {
        BucketStat bs;
        bs.t0 = b * n / buckets;
        bs.t1 = (b + 1) * n / buckets;
        for (std::size_t k = 0; k < use.size(); ++k)
            inc[k] = z(use[k], bs.t1) - z(use[k], bs.t0);
        const SampleStats s = stats_of(inc);
        bs.mean = s.mean;
        bs.se = s.se;
        if (s.se > 0.0)
            bs.t_stat = s.mean / s.se;
        else
            bs.t_stat = s.mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), s.mean);
        rep.max_abs_t = std::max(rep.max_abs_t, std::abs(bs.t_stat));
        rep.buckets.push_back(bs);
    }
    rep.pass = rep.paths_used >= 2 && rep.max_abs_t <= options.threshold;
    return rep;
}

KwRegression kw_regress(const PathPanel& u, const PathPanel& dm, const std::vector<std::uint8_t>& exclude,
                        const KwRegressOptions& options) {
    ODX_REQUIRE(u.dim == 1, "regressand must be scalar");
    ODX_REQUIRE(u.paths == dm.paths && u.times == dm.times + 1, "regressand and increments have mismatched shapes");
    ODX_REQUIRE(options.bins >= 1, "at least one bin required");
    const std::size_t d = dm.dim, n = dm.times;
    const auto di = static_cast<Eigen::Index>(d);

    std::vector<std::size_t> use;
    for (std::size_t p = 0; p < u.paths; ++p) {
        if (excluded(exclude, p))
            continue;
        bool finite = true;
        for (std::size_t t = 0; t < u.times && finite; ++t)
            finite = std::isfinite(u(p, t));
        if (finite)
            use.push_back(p);
    }
    ODX_REQUIRE(use.size() >= options.bins * (d + 2), "too few paths for " << options.bins << " bins");

    KwRegression out;
    out.pooled_theta = Eigen::VectorXd::Zero(di);
    Eigen::VectorXd pooled_var = Eigen::VectorXd::Zero(di);
    double pooled_weight = 0.0;
    out.B.assign(n + 1, 0.0);
    CompensatedSum total_sq;
    std::size_t total_count = 0, deficient = 0;

    std::vector<std::size_t> order(use.size());
    for (std::size_t j = 0; j < n; ++j) {
        order = use;
        if (options.bins > 1)
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t l, std::size_t r) { return u(l, j) < u(r, j); });
        KwStep step;
        double db_weighted = 0.0;
        for (std::size_t b = 0; b < options.bins; ++b) {
            const std::size_t lo = b * order.size() / options.bins, hi = (b + 1) * order.size() / options.bins;
            const auto cnt = static_cast<Eigen::Index>(hi - lo);
            Eigen::MatrixXd z(cnt, di + 1);
            Eigen::VectorXd y(cnt);
            for (Eigen::Index k = 0; k < cnt; ++k) {
                const std::size_t p = order[lo + static_cast<std::size_t>(k)];
                z(k, 0) = 1.0;
                for (Eigen::Index i = 0; i < di; ++i)
                    z(k, i + 1) = dm(p, j, static_cast<std::size_t>(i));
                y(k) = u(p, j + 1) - u(p, j);
            }
            const Eigen::MatrixXd gram = z.transpose() * z;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
            const Eigen::VectorXd ev = es.eigenvalues();
            const double cutoff = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
            Eigen::VectorXd inv_ev = Eigen::VectorXd::Zero(ev.size());
            bool full_rank = true;
            for (Eigen::Index k = 0; k < ev.size(); ++k) {
                if (ev(k) > cutoff)
                    inv_ev(k) = 1.0 / ev(k);
                else
                    full_rank = false;
            }
            if (!full_rank)
                ++deficient;
            const Eigen::MatrixXd ginv = es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose();
            const Eigen::VectorXd beta = ginv * (z.transpose() * y);
            const Eigen::VectorXd resid = y - z * beta;

            const Eigen::MatrixXd zr = z.array().colwise() * resid.array();
            const Eigen::MatrixXd meat = zr.transpose() * zr;
            const Eigen::MatrixXd cov = ginv * meat * ginv;

            CompensatedSum sq;
            for (Eigen::Index k = 0; k < cnt; ++k) {
                sq.add(resid(k) * resid(k));
                total_sq.add(resid(k) * resid(k));
            }
            total_count += static_cast<std::size_t>(cnt);

            const Eigen::VectorXd theta = beta.tail(di);
            const Eigen::VectorXd theta_se = cov.diagonal().tail(di).cwiseMax(0.0).cwiseSqrt();
            step.theta.push_back(theta);
            step.theta_se.push_back(theta_se);
            step.dB.push_back(-beta(0));
            step.n_norm.push_back(std::sqrt(sq.value() / static_cast<double>(cnt)));
            step.count.push_back(static_cast<std::size_t>(cnt));

            const double w = static_cast<double>(cnt);
            out.pooled_theta += w * theta;
            pooled_var += w * w * theta_se.cwiseAbs2();
            pooled_weight += w;
            db_weighted += w * -beta(0);
        }
        out.B[j + 1] = out.B[j] + db_weighted / static_cast<double>(order.size());
        out.steps.push_back(std::move(step));
    }
    out.pooled_theta /= pooled_weight;
    out.pooled_theta_se = pooled_var.cwiseSqrt() / pooled_weight;
    out.n_norm = std::sqrt(total_sq.value() / static_cast<double>(total_count));
    if (deficient > 0) {
        std::ostringstream msg;
        msg << deficient << " of " << n * options.bins
            << " regressions had a rank-deficient design; used the pseudoinverse";
        out.warnings.push_back(msg.str());
    }
    return out;
}

double matched_binomial_rho(const DiffusionSpec& spec, std::size_t steps) {
    spec.validate();
    ODX_REQUIRE(spec.dim() == 1, "matched binomial check is one-dimensional");
    ODX_REQUIRE(steps >= 1, "steps must be at least 1");
    const double dt = spec.horizon / static_cast<double>(steps);
    std::vector<double> a(1), sig(spec.factors());
    spec.drift_at(0.0, spec.x0.data(), a.data());
    spec.vol_at(0.0, spec.x0.data(), sig.data());
    double c = 0.0;
    for (double s : sig)
        c += s * s;
    ODX_REQUIRE(c > 0.0, "matched binomial check needs a nonzero diffusion");
    const double up = a[0] * dt + std::sqrt(c * dt), down = a[0] * dt - std::sqrt(c * dt);
    const TreePtr tree = build_uniform_tree(1, {0.5, 0.5});
    Eigen::MatrixXd xv(1, 3);
    xv << spec.x0(0), spec.x0(0) + up, spec.x0(0) + down;
    const auto num = numeraire_portfolio(AdaptedProcess(tree, xv));
    return num.rho_hat.at(0)(0);
}

} // namespace odx::mc
