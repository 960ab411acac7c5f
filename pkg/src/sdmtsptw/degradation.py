"""Degradation signal model, Bayesian parameter update and remaining-life simulation.

The signal follows a log-linear exponential form::

    ln(D(t) - phi) = a + b*t + sigma*W(t)

with ``W`` a standard Brownian motion.  The vehicle-specific pair ``theta = (a, b)``
carries a bivariate normal prior that is updated in closed form from the observed
signal history.  Remaining life is obtained by Monte-Carlo first passage of the
failure threshold.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, ParseError

# Samples are simulated in fixed-size blocks, each with its own stream derived from
# (seed, block index); the result does not depend on how blocks are scheduled.
BLOCK_SIZE = 1024

# Stream tags keep the different random consumers of one seed apart.
_STREAM_RLD = 11
_STREAM_TRUTH = 23
_STREAM_FAILURE = 37


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(key)))


@dataclass(frozen=True)
class DegradationModel:
    offset_phi: float = 0.2
    noise_sigma: float = 0.02
    threshold: float = 1.0
    form: str = "log-linear"

    def __post_init__(self):
        if self.form != "log-linear":
            raise InvalidInputError(f"unsupported signal form {self.form!r}")
        if not self.noise_sigma >= 0:
            raise InvalidInputError("noise_sigma must be >= 0")
        if not self.threshold > self.offset_phi:
            raise InvalidInputError("threshold must exceed offset_phi")

    @property
    def log_threshold(self):
        return math.log(self.threshold - self.offset_phi)

    def log_signal(self, amplitude):
        amplitude = np.asarray(amplitude, dtype=float)
        if np.any(amplitude <= self.offset_phi):
            raise InvalidInputError("signal amplitude must exceed offset_phi")
        return np.log(amplitude - self.offset_phi)

    def amplitude(self, log_signal):
        return self.offset_phi + np.exp(log_signal)


def _check_spd(cov, name):
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (2, 2):
        raise InvalidInputError(f"{name} covariance must be 2x2")
    if not np.allclose(cov, cov.T, rtol=1e-12, atol=1e-15):
        raise InvalidInputError(f"{name} covariance must be symmetric")
    if np.any(np.linalg.eigvalsh(cov) <= 0):
        raise InvalidInputError(f"{name} covariance must be positive definite")
    return cov


@dataclass(frozen=True)
class ThetaPrior:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(2))
        object.__setattr__(self, "cov", _check_spd(self.cov, "prior"))


@dataclass(frozen=True)
class ThetaPosterior:
    """Posterior of ``(a, b)`` plus the signal level the forward simulation starts from.

    ``cov`` may be singular (a point mass is allowed for deterministic checks).
    """

    mean: np.ndarray
    cov: np.ndarray
    conditioned_amplitude: float
    t_o: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(2))
        cov = np.asarray(self.cov, dtype=float).reshape(2, 2)
        if np.any(np.linalg.eigvalsh(cov) < -1e-12 * max(1.0, np.abs(cov).max())):
            raise InvalidInputError("posterior covariance must be positive semi-definite")
        object.__setattr__(self, "cov", cov)

    def sample(self, rng, size):
        w, v = np.linalg.eigh(self.cov)
        root = v * np.sqrt(np.clip(w, 0.0, None))
        return self.mean + rng.standard_normal((size, 2)) @ root.T


@dataclass(frozen=True)
class SignalHistory:
    times: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        amps = np.asarray(self.amplitudes, dtype=float).reshape(-1)
        if times.size == 0 or times.size != amps.size:
            raise InvalidInputError("history needs matching, non-empty times and amplitudes")
        if np.any(np.diff(times) <= 0):
            raise InvalidInputError("observation times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def t_o(self):
        return float(self.times[-1])

    @classmethod
    def from_pairs(cls, pairs):
        pairs = list(pairs)
        return cls([t for t, _ in pairs], [d for _, d in pairs])


@dataclass(frozen=True)
class RemainingLifeDistribution:
    samples: np.ndarray
    t_o: float
    horizon: float
    step: float
    censored: int = 0
    already_failed: bool = False
    _sorted: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float).reshape(-1)
        if s.size == 0 or np.any(s < 0):
            raise InvalidInputError("remaining-life samples must be non-empty and >= 0")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "_sorted", np.sort(s))

    @property
    def m(self):
        return self.samples.size

    def survival(self, t):
        """Fraction of samples strictly greater than ``t`` (vectorised)."""
        t = np.asarray(t, dtype=float)
        below = np.searchsorted(self._sorted, t, side="right")
        out = 1.0 - below / self.samples.size
        return out if out.ndim else float(out)

    def integrated_survival(self, t):
        """Exact integral of the empirical survival function over ``[0, t]``.

        Equals ``mean(min(R, t))``; the survival step function is integrated
        piece by piece between its jump points.
        """
        t = np.asarray(t, dtype=float)
        s = self._sorted
        csum = np.concatenate(([0.0], np.cumsum(s)))
        k = np.searchsorted(s, t, side="right")
        out = (csum[k] + t * (s.size - k)) / s.size
        return out if out.ndim else float(out)

    def to_csv(self):
        buf = io.StringIO()
        buf.write(f"# t_o={self.t_o!r} horizon={self.horizon!r} step={self.step!r} "
                  f"censored={self.censored} already_failed={int(self.already_failed)}\n")
        buf.write("index,remaining_life\n")
        for i, r in enumerate(self.samples):
            buf.write(f"{i},{r!r}\n")
        return buf.getvalue()


def survival(rld, t):
    if np.any(np.asarray(t) < 0):
        raise InvalidInputError("survival is defined for t >= 0")
    return rld.survival(t)


def posterior_update(prior, history, model):
    """Conjugate normal update of ``(a, b)`` from a signal history.

    Brownian error makes the first log-observation and the later increments
    independent Gaussians, so the likelihood is a weighted least-squares term::

        y1          ~ N(a + b t1,   sigma^2 t1)
        y_k - y_k-1 ~ N(b (t_k - t_k-1), sigma^2 (t_k - t_k-1))

    Observation times must be positive (at t = 0 the signal carries no noise).
    """
    if not isinstance(prior, ThetaPrior):
        prior = ThetaPrior(*prior)
    y = model.log_signal(history.amplitudes)
    t = history.times
    if t[0] <= 0:
        raise InvalidInputError("observation times must be > 0")
    prior_prec = np.linalg.inv(prior.cov)
    if model.noise_sigma == 0:
        raise InvalidInputError("noise_sigma = 0 makes the likelihood degenerate")

    dt = np.diff(t, prepend=0.0)
    design = np.column_stack([np.r_[1.0, np.zeros(t.size - 1)], np.r_[t[0], dt[1:]]])
    z = np.diff(y, prepend=0.0)
    z[0] = y[0]
    weights = 1.0 / (dt * model.noise_sigma**2)

    prec = prior_prec + design.T @ (weights[:, None] * design)
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (prior_prec @ prior.mean + design.T @ (weights * z))
    return ThetaPosterior(mean, cov, float(history.amplitudes[-1]), history.t_o)


def prior_as_posterior(prior, amplitude, t_o=0.0):
    """Posterior equal to the prior (no observations), started from ``amplitude``."""
    return ThetaPosterior(prior.mean, prior.cov, float(amplitude), float(t_o))


def _first_passage_block(y0, slopes, sigma, step, n_steps, ythr, rng):
    """First grid index (1-based) where each path reaches ``ythr``; 0 if never."""
    nb = slopes.size
    incr = slopes[:, None] * step
    if sigma > 0:
        incr = incr + sigma * math.sqrt(step) * rng.standard_normal((nb, n_steps))
    else:
        incr = np.broadcast_to(incr, (nb, n_steps))
    path = y0 + np.cumsum(incr, axis=1)
    crossed = path >= ythr
    hit = crossed.any(axis=1)
    first = np.argmax(crossed, axis=1) + 1
    return np.where(hit, first, 0)


def simulate_rld(posterior, model, m_samples, horizon, step, seed):
    """Monte-Carlo remaining-life distribution from the posterior.

    Each sample draws ``theta`` from the posterior, propagates the log-signal from
    the conditioned level at ``t_o`` with fresh Brownian increments on a grid of
    width ``step`` and records the first grid time at which the signal reaches
    the threshold.  Paths that never cross are recorded at ``horizon``.
    """
    if m_samples < 1:
        raise InvalidInputError("m_samples must be >= 1")
    if not step > 0 or horizon < step:
        raise InvalidInputError("need step > 0 and horizon >= step")
    m_samples = int(m_samples)
    if posterior.conditioned_amplitude >= model.threshold:
        return RemainingLifeDistribution(np.zeros(m_samples), posterior.t_o, horizon, step,
                                         censored=0, already_failed=True)

    y0 = float(model.log_signal(posterior.conditioned_amplitude))
    ythr = model.log_threshold
    n_steps = int(math.floor(horizon / step + 1e-9))
    out = np.empty(m_samples)
    for block, start in enumerate(range(0, m_samples, BLOCK_SIZE)):
        nb = min(BLOCK_SIZE, m_samples - start)
        rng = _rng(seed, _STREAM_RLD, block)
        theta = posterior.sample(rng, nb)
        first = _first_passage_block(y0, theta[:, 1], model.noise_sigma, step, n_steps, ythr, rng)
        out[start:start + nb] = np.where(first > 0, first * step, horizon)
    censored = int(np.count_nonzero(out >= horizon))
    return RemainingLifeDistribution(out, posterior.t_o, horizon, step, censored=censored)


def analytic_crossing(model, slope, log_level):
    """Time for a noiseless log-signal starting at ``log_level`` to reach the threshold."""
    if slope <= 0:
        return math.inf
    return max(0.0, (model.log_threshold - log_level) / slope)


def sample_true_failure(model, true_theta, t_o, amplitude_at_to, step, seed, max_time=1e5):
    """Remaining life (time after ``t_o``) of a vehicle with known parameters.

    Ground truth for policy simulation: the slope is the true one, not a posterior
    draw.  With ``noise_sigma = 0`` the closed-form crossing time is returned.
    Returns ``inf`` if the path does not cross within ``max_time``.
    """
    if amplitude_at_to >= model.threshold:
        raise InvalidInputError("vehicle has already failed at t_o")
    slope = float(true_theta[1])
    y0 = float(model.log_signal(amplitude_at_to))
    if model.noise_sigma == 0:
        return analytic_crossing(model, slope, y0)
    rng = _rng(seed, _STREAM_FAILURE)
    ythr = model.log_threshold
    chunk = 512
    level, done = y0, 0
    while done * step < max_time:
        incr = slope * step + model.noise_sigma * math.sqrt(step) * rng.standard_normal(chunk)
        path = level + np.cumsum(incr)
        hit = np.flatnonzero(path >= ythr)
        if hit.size:
            return (done + hit[0] + 1) * step
        level, done = path[-1], done + chunk
    return math.inf


def draw_truth(prior, model, obs_times, seed):
    """Draw a vehicle: true ``theta`` from the prior and its observed signal history."""
    rng = _rng(seed, _STREAM_TRUTH)
    theta = rng.multivariate_normal(prior.mean, prior.cov)
    times = np.asarray(obs_times, dtype=float)
    dt = np.diff(times, prepend=0.0)
    w = np.cumsum(rng.standard_normal(times.size) * np.sqrt(dt))
    y = theta[0] + theta[1] * times + model.noise_sigma * w
    return theta, SignalHistory(times, model.amplitude(y))


# Calibrated defaults: observations every 4 time units up to dispatch at t_o = 20;
# the prior slope mean is tuned so the true remaining life after t_o averages 125.
DEFAULT_OBS_TIMES = (4.0, 8.0, 12.0, 16.0, 20.0)
DEFAULT_T_O = DEFAULT_OBS_TIMES[-1]
TARGET_MEAN_LIFE = 125.0
CALIBRATED_SLOPE = 0.01929
DEFAULT_HORIZON = 4 * TARGET_MEAN_LIFE
DEFAULT_STEP = 0.5


def default_model():
    return DegradationModel(offset_phi=0.2, noise_sigma=0.02, threshold=1.0)


def default_prior(slope=CALIBRATED_SLOPE):
    return ThetaPrior([-3.0, slope], np.diag([0.36, 1e-6]))


def mean_true_life(prior, model, obs_times=DEFAULT_OBS_TIMES, n=10_000, step=DEFAULT_STEP,
                   seed=0):
    """Average remaining life after dispatch over ``n`` vehicles drawn from the prior."""
    t_o = obs_times[-1]
    lives = np.empty(n)
    for i in range(n):
        theta, hist = draw_truth(prior, model, obs_times, seed + i)
        lives[i] = sample_true_failure(model, theta, t_o, hist.amplitudes[-1], step, seed + i)
    return float(lives.mean())


def calibrate_slope(model=None, target=TARGET_MEAN_LIFE, lo=0.010, hi=0.030, n=2000, tol=0.25,
                    seed=0, max_iter=40):
    """Bisection on the prior slope mean so the mean remaining life hits ``target``."""
    model = model or default_model()
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        life = mean_true_life(default_prior(mid), model, n=n, seed=seed)
        if abs(life - target) <= tol:
            return mid
        # larger slope -> faster degradation -> shorter life
        if life > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------- scenario files


@dataclass(frozen=True)
class DegradationScenario:
    model: DegradationModel
    prior: ThetaPrior
    history: SignalHistory
    seed: int = 0
    m_samples: int = 20_000
    horizon: float = DEFAULT_HORIZON
    step: float = DEFAULT_STEP
    cp: float = 1000.0
    cf: float = 4000.0


def _floats(value, lineno):
    try:
        return [float(v) for v in value.replace(",", " ").split()]
    except ValueError as exc:
        raise ParseError(f"expected numbers, got {value!r}", lineno) from exc


def parse_scenario(text):
    """Parse a ``key = value`` degradation scenario file.

    Recognised keys: offset_phi, noise_sigma, threshold, prior_mean (2 numbers),
    prior_cov (4 numbers, row-major), observations (``t:amplitude`` pairs), seed,
    m_samples, horizon, step, cp, cf.  ``#`` starts a comment.
    """
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        raw[key] = (value, lineno)

    def get(key, default, conv=float):
        if key not in raw:
            return default
        value, lineno = raw[key]
        try:
            return conv(value)
        except ValueError as exc:
            raise ParseError(f"bad value for {key}: {value!r}", lineno) from exc

    model = DegradationModel(get("offset_phi", 0.2), get("noise_sigma", 0.02),
                             get("threshold", 1.0))
    default = default_prior()
    mean = _floats(*raw["prior_mean"]) if "prior_mean" in raw else default.mean.tolist()
    cov = _floats(*raw["prior_cov"]) if "prior_cov" in raw else default.cov.ravel().tolist()
    if len(mean) != 2 or len(cov) != 4:
        raise ParseError("prior_mean needs 2 numbers and prior_cov 4")
    prior = ThetaPrior(mean, np.reshape(cov, (2, 2)))
    if "observations" not in raw:
        raise ParseError("scenario needs an 'observations' entry")
    value, lineno = raw["observations"]
    pairs = []
    for item in value.replace(",", " ").split():
        try:
            t, d = item.split(":")
            pairs.append((float(t), float(d)))
        except ValueError as exc:
            raise ParseError(f"bad observation {item!r}", lineno) from exc
    return DegradationScenario(
        model=model, prior=prior, history=SignalHistory.from_pairs(pairs),
        seed=get("seed", 0, int), m_samples=get("m_samples", 20_000, int),
        horizon=get("horizon", DEFAULT_HORIZON), step=get("step", DEFAULT_STEP),
        cp=get("cp", 1000.0), cf=get("cf", 4000.0))


def format_scenario(sc):
    m = sc.model
    obs = ", ".join(f"{float(t)!r}:{float(d)!r}"
                    for t, d in zip(sc.history.times, sc.history.amplitudes))
    lines = [
        f"offset_phi = {float(m.offset_phi)!r}",
        f"noise_sigma = {float(m.noise_sigma)!r}",
        f"threshold = {float(m.threshold)!r}",
        "prior_mean = " + ", ".join(repr(float(x)) for x in sc.prior.mean),
        "prior_cov = " + ", ".join(repr(float(x)) for x in sc.prior.cov.ravel()),
        f"observations = {obs}",
        f"seed = {sc.seed}",
        f"m_samples = {sc.m_samples}",
        f"horizon = {float(sc.horizon)!r}",
        f"step = {float(sc.step)!r}",
        f"cp = {float(sc.cp)!r}",
        f"cf = {float(sc.cf)!r}",
    ]
    return "\n".join(lines) + "\n"
