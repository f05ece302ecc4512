#include "osmforge/diffusion.hpp"

#include "osmforge/errors.hpp"
#include "osmforge/hash.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>

namespace osmforge {

namespace {

void require_same_size(std::span<const double> a, std::span<const double> b, const char* what)
{
    if (a.size() != b.size()) {
        throw ShapeError(std::string(what) + ": size " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    }
}

void require_step(const DiffusionSchedule& s, int t, int lo)
{
    if (t < lo || t > s.T) {
        throw ScheduleError("step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                            std::to_string(s.T) + "]");
    }
}

// Tolerates a radicand that rounding pushed just below zero.
double safe_sqrt(double v)
{
    return v < 0.0 && v > -1e-14 ? 0.0 : std::sqrt(v);
}

} // namespace

std::string DiffusionSchedule::id() const
{
    std::string bytes(reinterpret_cast<const char*>(&T), sizeof T);
    bytes.append(reinterpret_cast<const char*>(beta.data()), beta.size() * sizeof(double));
    return sha256_hex(bytes).substr(0, 16);
}

DiffusionSchedule make_schedule(int T, const BetaSpec& spec)
{
    if (T < 1) {
        throw ScheduleError("schedule needs at least one step");
    }
    DiffusionSchedule s;
    s.T = T;
    s.beta.assign(static_cast<std::size_t>(T) + 1, 0.0);
    if (const auto* lin = std::get_if<LinearBeta>(&spec)) {
        if (!(lin->min > 0.0 && lin->min <= lin->max && lin->max < 1.0)) {
            throw ScheduleError("linear betas need 0 < min <= max < 1");
        }
        for (int t = 1; t <= T; ++t) {
            const double f = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
            s.beta[t] = lin->min + (lin->max - lin->min) * f;
        }
    } else {
        const auto& values = std::get<ExplicitBeta>(spec).values;
        if (values.size() != static_cast<std::size_t>(T)) {
            throw ScheduleError("expected " + std::to_string(T) + " betas, got " + std::to_string(values.size()));
        }
        std::copy(values.begin(), values.end(), s.beta.begin() + 1);
    }
    s.alpha.assign(s.beta.size(), 1.0);
    s.alpha_bar.assign(s.beta.size(), 1.0);
    for (int t = 1; t <= T; ++t) {
        const double b = s.beta[t];
        if (!(b > 0.0 && b < 1.0)) {
            throw ScheduleError("beta_" + std::to_string(t) + " outside (0, 1)");
        }
        s.alpha[t] = 1.0 - b;
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
        if (!(s.alpha_bar[t] > 0.0 && s.alpha_bar[t] < s.alpha_bar[t - 1])) {
            throw ScheduleError("alpha_bar is not strictly decreasing at step " + std::to_string(t));
        }
    }
    return s;
}

std::vector<double> forward_marginal(std::span<const double> x0, int t, std::span<const double> eps,
                                     const DiffusionSchedule& s)
{
    require_same_size(x0, eps, "forward_marginal");
    require_step(s, t, 0);
    const double a = std::sqrt(s.alpha_bar[t]);
    const double b = std::sqrt(1.0 - s.alpha_bar[t]);
    std::vector<double> out(x0.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a * x0[i] + b * eps[i];
    }
    return out;
}

std::vector<double> predict_x0(std::span<const double> x_t, std::span<const double> eps_pred, int t,
                               const DiffusionSchedule& s)
{
    require_same_size(x_t, eps_pred, "predict_x0");
    require_step(s, t, 0);
    const double a = std::sqrt(s.alpha_bar[t]);
    const double b = std::sqrt(1.0 - s.alpha_bar[t]);
    std::vector<double> out(x_t.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (x_t[i] - b * eps_pred[i]) / a;
    }
    return out;
}

double ddpm_sigma(const DiffusionSchedule& s, int t)
{
    return ddpm_sigma(s, t, t - 1);
}

double ddpm_sigma(const DiffusionSchedule& s, int t, int t_prev)
{
    require_step(s, t, 1);
    if (t_prev < 0 || t_prev >= t) {
        throw ScheduleError("previous step must lie in [0, t)");
    }
    const double ab = s.alpha_bar[t];
    const double ab_prev = s.alpha_bar[t_prev];
    return std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
}

double posterior_variance(const DiffusionSchedule& s, int t)
{
    require_step(s, t, 1);
    return (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]) * s.beta[t];
}

SigmaPolicy SigmaPolicy::scaled(double eta)
{
    if (!(eta >= 0.0 && eta <= 1.0)) {
        throw PolicyError("eta must lie in [0, 1]");
    }
    return SigmaPolicy(Kind::Scaled, eta);
}

double SigmaPolicy::sigma(const DiffusionSchedule& s, int t, int t_prev) const
{
    if (m_kind == Kind::Ddim) {
        return 0.0;
    }
    return m_eta * ddpm_sigma(s, t, t_prev);
}

std::vector<double> ConstantDenoiser::predict_eps(std::span<const double> x, int, const Condition&) const
{
    require_same_size(x, m_eps, "constant denoiser");
    return m_eps;
}

AnalyticGaussianDenoiser::AnalyticGaussianDenoiser(std::vector<double> mu, double s2,
                                                   const DiffusionSchedule& schedule)
    : m_mu(std::move(mu)), m_s2(s2), m_alpha_bar(schedule.alpha_bar)
{
    if (!(s2 > 0.0) || !std::isfinite(s2)) {
        throw std::invalid_argument("data variance must be positive");
    }
}

const std::vector<double>& AnalyticGaussianDenoiser::mean_for(const Condition& c, std::size_t dim) const
{
    const auto& mu = c.params.size() == dim ? c.params : m_mu;
    if (mu.size() != dim) {
        throw ShapeError("analytic denoiser: state has " + std::to_string(dim) + " dims, mean has " +
                         std::to_string(mu.size()));
    }
    return mu;
}

std::vector<double> AnalyticGaussianDenoiser::predict_eps(std::span<const double> x, int t,
                                                          const Condition& c) const
{
    if (t < 0 || static_cast<std::size_t>(t) >= m_alpha_bar.size()) {
        throw ScheduleError("step outside the denoiser's schedule");
    }
    const auto& mu = mean_for(c, x.size());
    const double ab = m_alpha_bar[t];
    const double sa = std::sqrt(ab);
    // Algebraically (x - sqrt(ab) E[x0|x]) / sqrt(1 - ab), without the
    // division that is singular at t = 0.
    const double k = std::sqrt(1.0 - ab) / (ab * m_s2 + 1.0 - ab);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = k * (x[i] - sa * mu[i]);
    }
    return out;
}

std::vector<double> AnalyticGaussianDenoiser::posterior_mean(std::span<const double> x, int t,
                                                             const Condition& c) const
{
    if (t < 0 || static_cast<std::size_t>(t) >= m_alpha_bar.size()) {
        throw ScheduleError("step outside the denoiser's schedule");
    }
    const auto& mu = mean_for(c, x.size());
    const double ab = m_alpha_bar[t];
    const double den = ab * m_s2 + 1.0 - ab;
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (std::sqrt(ab) * m_s2 * x[i] + (1.0 - ab) * mu[i]) / den;
    }
    return out;
}

std::vector<double> cfg_combine(std::span<const double> eps_cond, std::span<const double> eps_uncond, double w)
{
    require_same_size(eps_cond, eps_uncond, "cfg_combine");
    std::vector<double> out(eps_cond.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (1.0 - w) * eps_uncond[i] + w * eps_cond[i];
    }
    return out;
}

std::vector<double> GuidedDenoiser::predict_eps(std::span<const double> x, int t, const Condition& c) const
{
    const auto cond = m_inner->predict_eps(x, t, c);
    const auto uncond = m_inner->predict_eps(x, t, m_uncond);
    return cfg_combine(cond, uncond, m_w);
}

TimestepGrid uniform_grid(const DiffusionSchedule& s, int steps)
{
    if (steps < 1 || steps > s.T) {
        throw ScheduleError("grid needs between 1 and T steps");
    }
    TimestepGrid grid(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) {
        grid[i] = static_cast<int>(static_cast<std::int64_t>(i) * s.T / steps);
    }
    return grid;
}

TimestepGrid full_grid(const DiffusionSchedule& s)
{
    return uniform_grid(s, s.T);
}

void validate_grid(const DiffusionSchedule& s, const TimestepGrid& grid)
{
    if (grid.empty() || grid.front() != 0) {
        throw ScheduleError("grid must start at step 0");
    }
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (grid[i] <= grid[i - 1]) {
            throw ScheduleError("grid must be strictly increasing");
        }
    }
    if (grid.back() > s.T) {
        throw ScheduleError("grid exceeds T");
    }
}

std::vector<double> reverse_update(std::span<const double> x_t, std::span<const double> eps, int t, int t_prev,
                                   const DiffusionSchedule& s, double sigma, std::span<const double> noise)
{
    require_same_size(x_t, eps, "reverse_update");
    require_step(s, t, 1);
    if (t_prev < 0 || t_prev >= t) {
        throw ScheduleError("previous step must lie in [0, t)");
    }
    if (sigma > 0.0) {
        if (noise.empty()) {
            throw PolicyError("a stochastic step needs noise");
        }
        require_same_size(x_t, noise, "reverse_update noise");
    } else if (!noise.empty()) {
        throw PolicyError("noise given to a deterministic step");
    }
    const double ab_prev = s.alpha_bar[t_prev];
    const double radicand = 1.0 - ab_prev - sigma * sigma;
    if (radicand < -1e-14) {
        throw PolicyError("sigma^2 exceeds 1 - alpha_bar at step " + std::to_string(t_prev));
    }
    const double dir = safe_sqrt(radicand);
    const double a_prev = std::sqrt(ab_prev);
    const auto x0 = predict_x0(x_t, eps, t, s);
    std::vector<double> out(x_t.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a_prev * x0[i] + dir * eps[i];
        if (sigma > 0.0) {
            out[i] += sigma * noise[i];
        }
    }
    return out;
}

std::vector<double> inversion_update(std::span<const double> x_t, std::span<const double> eps, int t, int t_next,
                                     const DiffusionSchedule& s)
{
    require_same_size(x_t, eps, "inversion_update");
    require_step(s, t, 0);
    if (t_next <= t || t_next > s.T) {
        throw ScheduleError("next step must lie in (t, T]");
    }
    const double a_next = std::sqrt(s.alpha_bar[t_next]);
    const double b_next = std::sqrt(1.0 - s.alpha_bar[t_next]);
    const auto x0 = predict_x0(x_t, eps, t, s);
    std::vector<double> out(x_t.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a_next * x0[i] + b_next * eps[i];
    }
    return out;
}

std::vector<double> ddim_step(std::span<const double> x_t, int t, const Condition& c, const Denoiser& d,
                              const DiffusionSchedule& s, const SigmaPolicy& policy, std::span<const double> noise)
{
    return ddim_step(x_t, t, t - 1, c, d, s, policy, noise);
}

std::vector<double> ddim_step(std::span<const double> x_t, int t, int t_prev, const Condition& c, const Denoiser& d,
                              const DiffusionSchedule& s, const SigmaPolicy& policy, std::span<const double> noise)
{
    require_step(s, t, 1);
    const double sigma = policy.sigma(s, t, t_prev);
    const auto eps = d.predict_eps(x_t, t, c);
    return reverse_update(x_t, eps, t, t_prev, s, sigma, noise);
}

std::string vector_checksum(std::span<const double> v)
{
    std::string bytes(v.size() * sizeof(double), '\0');
    for (std::size_t i = 0; i < v.size(); ++i) {
        auto bits = std::bit_cast<std::uint64_t>(v[i]);
        for (int b = 0; b < 8; ++b) {
            bytes[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
        }
    }
    return sha256_hex(bytes).substr(0, 16);
}

LatentState ddim_invert(std::span<const double> x_obs, const Condition& c_ref, int t_star, const Denoiser& d,
                        const DiffusionSchedule& s, const InversionOptions& options)
{
    for (double v : x_obs) {
        if (!std::isfinite(v)) {
            throw ShapeError("observation has non-finite values");
        }
    }
    LatentState state;
    state.grid = options.grid.empty() ? full_grid(s) : options.grid;
    validate_grid(s, state.grid);
    const auto it = std::find(state.grid.begin(), state.grid.end(), t_star);
    if (it == state.grid.end()) {
        throw ScheduleError("t* = " + std::to_string(t_star) + " is not on the step grid");
    }
    state.schedule_id = s.id();
    state.x.assign(x_obs.begin(), x_obs.end());
    if (options.keep_trajectory) {
        state.trajectory.push_back(state.x);
    }
    const auto end = static_cast<std::size_t>(it - state.grid.begin());
    for (std::size_t i = 0; i < end; ++i) {
        const int t = state.grid[i];
        const auto eps = d.predict_eps(state.x, t, c_ref);
        if (options.log) {
            options.log->push_back({t, vector_checksum(state.x), vector_checksum(eps)});
        }
        state.x = inversion_update(state.x, eps, t, state.grid[i + 1], s);
        if (options.keep_trajectory) {
            state.trajectory.push_back(state.x);
        }
    }
    state.t = t_star;
    return state;
}

std::vector<double> redenoise(const LatentState& state, const Condition& c_new, const Denoiser& d,
                              const DiffusionSchedule& s, const SigmaPolicy& policy, std::mt19937_64* rng,
                              std::vector<TrajectoryRecord>* log)
{
    if (state.schedule_id != s.id()) {
        throw ScheduleError("latent was inverted under a different schedule");
    }
    validate_grid(s, state.grid);
    const auto it = std::find(state.grid.begin(), state.grid.end(), state.t);
    if (it == state.grid.end()) {
        throw ScheduleError("latent step is not on its grid");
    }
    std::vector<double> x = state.x;
    for (auto i = static_cast<std::size_t>(it - state.grid.begin()); i > 0; --i) {
        const int t = state.grid[i];
        const int t_prev = state.grid[i - 1];
        const double sigma = policy.sigma(s, t, t_prev);
        const auto eps = d.predict_eps(x, t, c_new);
        if (log) {
            log->push_back({t, vector_checksum(x), vector_checksum(eps)});
        }
        std::vector<double> noise;
        if (sigma > 0.0) {
            if (!rng) {
                throw PolicyError("stochastic policy needs a random generator");
            }
            noise = standard_normal(x.size(), *rng);
        }
        x = reverse_update(x, eps, t, t_prev, s, sigma, noise);
    }
    return x;
}

std::vector<double> sample(std::size_t dim, const Condition& c, const Denoiser& d, const DiffusionSchedule& s,
                           std::mt19937_64& rng, const SigmaPolicy& policy, const TimestepGrid& grid)
{
    LatentState state;
    state.grid = grid.empty() ? full_grid(s) : grid;
    validate_grid(s, state.grid);
    state.t = state.grid.back();
    state.schedule_id = s.id();
    state.x = standard_normal(dim, rng);
    return redenoise(state, c, d, s, policy, &rng);
}

double diffusion_loss(std::span<const double> eps, std::span<const double> eps_pred)
{
    require_same_size(eps, eps_pred, "diffusion_loss");
    if (eps.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const double e = eps[i] - eps_pred[i];
        sum += e * e;
    }
    return sum / static_cast<double>(eps.size());
}

std::vector<double> standard_normal(std::size_t dim, std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> out(dim);
    for (auto& v : out) {
        v = n(rng);
    }
    return out;
}

std::string trajectory_jsonl(std::span<const TrajectoryRecord> records)
{
    std::string out;
    for (const auto& r : records) {
        out += nlohmann::json{{"t", r.t}, {"x", r.x_checksum}, {"eps", r.eps_checksum}}.dump();
        out += '\n';
    }
    return out;
}

} // namespace osmforge
