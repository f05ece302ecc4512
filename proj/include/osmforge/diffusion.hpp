#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace osmforge {

struct LinearBeta {
    double min = 1e-4;
    double max = 0.02;
};

struct ExplicitBeta {
    std::vector<double> values; ///< beta_1 .. beta_T
};

using BetaSpec = std::variant<LinearBeta, ExplicitBeta>;

/// Variance schedule. All vectors have T + 1 entries indexed by step, so
/// beta[0] = 0, alpha[0] = 1 and alpha_bar[0] = 1 are placeholders.
struct DiffusionSchedule {
    int T = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    /// Short hash of T and the betas.
    std::string id() const;
    friend bool operator==(const DiffusionSchedule&, const DiffusionSchedule&) = default;
};

inline constexpr int kDefaultSteps = 1000;

/// Linear betas are spaced evenly from min (t = 1) to max (t = T).
/// Throws ScheduleError for T < 1, betas outside (0, 1), min > max or an
/// explicit list whose length is not T.
DiffusionSchedule make_schedule(int T = kDefaultSteps, const BetaSpec& spec = LinearBeta{});

/// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps. Throws ShapeError on size mismatch.
std::vector<double> forward_marginal(std::span<const double> x0, int t, std::span<const double> eps,
                                     const DiffusionSchedule& s);

/// (x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t). Valid for t = 0 as well.
std::vector<double> predict_x0(std::span<const double> x_t, std::span<const double> eps_pred, int t,
                               const DiffusionSchedule& s);

/// sqrt((1 - abar_{t-1}) / (1 - abar_t)) sqrt(1 - abar_t / abar_{t-1}).
double ddpm_sigma(const DiffusionSchedule& s, int t);
/// Same expression for a jump from t to t_prev < t.
double ddpm_sigma(const DiffusionSchedule& s, int t, int t_prev);
/// ((1 - abar_{t-1}) / (1 - abar_t)) beta_t
double posterior_variance(const DiffusionSchedule& s, int t);

class SigmaPolicy {
public:
    enum class Kind { Ddim, Ddpm, Scaled };

    static SigmaPolicy ddim() { return SigmaPolicy(Kind::Ddim, 0.0); }
    static SigmaPolicy ddpm() { return SigmaPolicy(Kind::Ddpm, 1.0); }
    /// Throws PolicyError unless eta is in [0, 1].
    static SigmaPolicy scaled(double eta);

    Kind kind() const noexcept { return m_kind; }
    double eta() const noexcept { return m_eta; }
    double sigma(const DiffusionSchedule& s, int t, int t_prev) const;

private:
    SigmaPolicy(Kind kind, double eta) : m_kind(kind), m_eta(eta) {}

    Kind m_kind;
    double m_eta;
};

/// Opaque condition token. `id` names it (e.g. a bundle hash); `params`
/// carries toy parameters such as a target mean.
struct Condition {
    std::string id;
    std::vector<double> params;

    friend bool operator==(const Condition&, const Condition&) = default;
};

/// eps_theta(x_t, t, c). Implementations must be deterministic and safe for
/// concurrent const use.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual std::vector<double> predict_eps(std::span<const double> x, int t, const Condition& c) const = 0;
};

/// Returns the same vector for every input.
class ConstantDenoiser final : public Denoiser {
public:
    explicit ConstantDenoiser(std::vector<double> eps) : m_eps(std::move(eps)) {}

    std::vector<double> predict_eps(std::span<const double> x, int t, const Condition& c) const override;

private:
    std::vector<double> m_eps;
};

/// Posterior-optimal eps prediction for data N(mu, s2 I). A condition whose
/// params have the state dimension replaces mu.
class AnalyticGaussianDenoiser final : public Denoiser {
public:
    /// Throws std::invalid_argument unless s2 > 0.
    AnalyticGaussianDenoiser(std::vector<double> mu, double s2, const DiffusionSchedule& schedule);

    std::vector<double> predict_eps(std::span<const double> x, int t, const Condition& c) const override;
    /// E[x0 | x_t]
    std::vector<double> posterior_mean(std::span<const double> x, int t, const Condition& c) const;

    const std::vector<double>& mu() const noexcept { return m_mu; }
    double s2() const noexcept { return m_s2; }

private:
    const std::vector<double>& mean_for(const Condition& c, std::size_t dim) const;

    std::vector<double> m_mu;
    double m_s2;
    std::vector<double> m_alpha_bar;
};

/// eps_uncond + w (eps_cond - eps_uncond), evaluated as (1 - w) eps_uncond + w eps_cond
/// so w = 0 and w = 1 return the inputs exactly.
std::vector<double> cfg_combine(std::span<const double> eps_cond, std::span<const double> eps_uncond, double w);

/// Applies classifier-free guidance around another denoiser.
class GuidedDenoiser final : public Denoiser {
public:
    GuidedDenoiser(std::shared_ptr<const Denoiser> inner, Condition unconditional, double w)
        : m_inner(std::move(inner)), m_uncond(std::move(unconditional)), m_w(w)
    {
    }

    std::vector<double> predict_eps(std::span<const double> x, int t, const Condition& c) const override;

private:
    std::shared_ptr<const Denoiser> m_inner;
    Condition m_uncond;
    double m_w;
};

/// Strictly increasing step indices starting at 0 and ending at T.
using TimestepGrid = std::vector<int>;

/// round-down of i T / steps for i = 0..steps. Throws ScheduleError unless
/// 1 <= steps <= T.
TimestepGrid uniform_grid(const DiffusionSchedule& s, int steps);
TimestepGrid full_grid(const DiffusionSchedule& s);
/// Throws ScheduleError if the grid is not strictly increasing from 0 or
/// leaves [0, T].
void validate_grid(const DiffusionSchedule& s, const TimestepGrid& grid);

/// Reverse update from t to t_prev given a predicted eps:
/// sqrt(abar_prev) x0_hat + sqrt(1 - abar_prev - sigma^2) eps + sigma noise.
std::vector<double> reverse_update(std::span<const double> x_t, std::span<const double> eps, int t, int t_prev,
                                   const DiffusionSchedule& s, double sigma, std::span<const double> noise = {});

/// Deterministic forward update from t to t_next > t given eps(x_t, t).
std::vector<double> inversion_update(std::span<const double> x_t, std::span<const double> eps, int t, int t_next,
                                     const DiffusionSchedule& s);

/// One reverse step from t to t - 1. `noise` is required iff sigma_t > 0.
/// Throws PolicyError when sigma^2 exceeds 1 - abar_{t-1} or the noise
/// requirement is violated, ShapeError on size mismatch.
std::vector<double> ddim_step(std::span<const double> x_t, int t, const Condition& c, const Denoiser& d,
                              const DiffusionSchedule& s, const SigmaPolicy& policy,
                              std::span<const double> noise = {});
/// Reverse step over a skipped interval t -> t_prev.
std::vector<double> ddim_step(std::span<const double> x_t, int t, int t_prev, const Condition& c, const Denoiser& d,
                              const DiffusionSchedule& s, const SigmaPolicy& policy,
                              std::span<const double> noise = {});

struct TrajectoryRecord {
    int t = 0;
    std::string x_checksum;
    std::string eps_checksum;
};

/// 16 hex chars of SHA-256 over the little-endian doubles.
std::string vector_checksum(std::span<const double> v);

struct LatentState {
    std::vector<double> x;
    int t = 0;
    TimestepGrid grid;
    std::string schedule_id;
    std::vector<std::vector<double>> trajectory; ///< x at each visited step when kept
};

struct InversionOptions {
    TimestepGrid grid; ///< empty means every step
    bool keep_trajectory = false;
    std::vector<TrajectoryRecord>* log = nullptr;
};

/// Deterministic forward updates from 0 up to t_star under c_ref. t_star
/// must lie on the grid. Throws ScheduleError otherwise.
LatentState ddim_invert(std::span<const double> x_obs, const Condition& c_ref, int t_star, const Denoiser& d,
                        const DiffusionSchedule& s, const InversionOptions& options = {});

/// Reverse updates from the state's t down to 0 along the state's grid.
/// A stochastic policy needs `rng`. Throws ScheduleError when `s` is not the
/// schedule the state was inverted with.
std::vector<double> redenoise(const LatentState& state, const Condition& c_new, const Denoiser& d,
                              const DiffusionSchedule& s, const SigmaPolicy& policy = SigmaPolicy::ddim(),
                              std::mt19937_64* rng = nullptr, std::vector<TrajectoryRecord>* log = nullptr);

/// Ancestral sampling from x_T ~ N(0, I) under `policy` (DDPM by default).
std::vector<double> sample(std::size_t dim, const Condition& c, const Denoiser& d, const DiffusionSchedule& s,
                           std::mt19937_64& rng, const SigmaPolicy& policy = SigmaPolicy::ddpm(),
                           const TimestepGrid& grid = {});

/// Mean squared error between the true and predicted noise.
double diffusion_loss(std::span<const double> eps, std::span<const double> eps_pred);

std::vector<double> standard_normal(std::size_t dim, std::mt19937_64& rng);

/// One JSON object per line: {"t":..,"x":..,"eps":..}.
std::string trajectory_jsonl(std::span<const TrajectoryRecord> records);

} // namespace osmforge
