"""Achievable-rate estimation.

Two routes live here:

* a Monte-Carlo mismatched-decoding estimate from per-symbol posteriors
  (rate = log2 M minus the empirical cross-entropy of the receiver), and
* an exact small-scale oracle: a symbol-rate square-law channel with
  truncated memory whose per-stage rates are computed by forward recursions
  over the state trellis, with already-detected stages pinned to their true
  symbols.

The oracle deliberately uses white noise at the symbol rate and no receiver
filter: it validates the estimator and equalizer machinery on a model where
exact inference is tractable, not the full continuous-time front end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG2E = np.log2(np.e)


@dataclass(frozen=True)
class RateEstimate:
    """Monte-Carlo rate with its standard error.

    floored_events counts posterior entries at the true symbol that had to be
    clamped to the probability floor before taking logs.
    """

    rate_bpcu: float
    std_error_bpcu: float
    n_eval: int
    floored_events: int = 0


@dataclass(frozen=True)
class AirResult:
    """Per-stage and aggregate rates for one operating point."""

    stage_rates_bpcu: tuple[float, ...]
    stage_errors_bpcu: tuple[float, ...]
    aggregate_bpcu: float
    net_rate_bps: float
    mc_std_error_bpcu: float
    n_eval: int
    mode: str = "decision"

    @property
    def n_stages(self) -> int:
        return len(self.stage_rates_bpcu)


def air_from_posteriors(true_indices: np.ndarray, posteriors: np.ndarray,
                        order: int, floor: float = 1e-12) -> RateEstimate:
    """Mismatched-decoding rate: log2 M - mean(-log2 q(true symbol | obs)).

    The estimate is clamped below at 0 (a cross-entropy above log2 M means
    the auxiliary receiver is worse than guessing, and the achievable rate
    convention is nonnegative).
    """
    true_indices = np.asarray(true_indices)
    posteriors = np.asarray(posteriors)
    if posteriors.shape != (true_indices.shape[0], order):
        raise ValueError(f"posteriors must be (n, {order}), got {posteriors.shape}")
    picked = posteriors[np.arange(true_indices.shape[0]), true_indices]
    floored = int(np.count_nonzero(picked < floor))
    per_symbol = np.log2(order) + np.log2(np.maximum(picked, floor))
    rate = float(np.mean(per_symbol))
    se = float(np.std(per_symbol, ddof=1) / np.sqrt(per_symbol.size)) \
        if per_symbol.size > 1 else 0.0
    return RateEstimate(max(rate, 0.0), se, per_symbol.size, floored)


def net_bit_rate(aggregate_bpcu: float, symbol_rate_baud: float) -> float:
    """Net bit rate in bit/s: rate per channel use times the symbol rate."""
    if aggregate_bpcu < 0:
        raise ValueError("aggregate rate must be >= 0")
    return aggregate_bpcu * symbol_rate_baud


def combine_stage_rates(stage_rates: list[RateEstimate],
                        symbol_rate_baud: float, mode: str) -> AirResult:
    """Aggregate equal-share stages into the scheme rate and net bit rate."""
    rates = tuple(r.rate_bpcu for r in stage_rates)
    errors = tuple(r.std_error_bpcu for r in stage_rates)
    aggregate = float(np.mean(rates))
    se = float(np.sqrt(np.sum(np.square(errors))) / len(rates))
    return AirResult(
        stage_rates_bpcu=rates,
        stage_errors_bpcu=errors,
        aggregate_bpcu=aggregate,
        net_rate_bps=net_bit_rate(aggregate, symbol_rate_baud),
        mc_std_error_bpcu=se,
        n_eval=int(sum(r.n_eval for r in stage_rates)),
        mode=mode,
    )


# ---------------------------------------------------------------------------
# Gauss-Hermite quadrature reference for memoryless real-AWGN channels
# ---------------------------------------------------------------------------


def mi_points_awgn(points: np.ndarray, priors: np.ndarray | None,
                   sigma: float, n_nodes: int = 96) -> float:
    """Mutual information in bits of y = x + N(0, sigma^2), x in a finite
    real set with the given priors (uniform when None).

    Evaluated by Gauss-Hermite quadrature; exact up to quadrature error,
    independent of any Monte-Carlo machinery.
    """
    points = np.asarray(points, dtype=float)
    m = points.size
    priors = np.full(m, 1.0 / m) if priors is None else np.asarray(priors, float)
    if priors.shape != (m,) or abs(priors.sum() - 1.0) > 1e-9:
        raise ValueError("priors must match points and sum to 1")
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    nodes, weights = np.polynomial.hermite.hermgauss(n_nodes)
    total = 0.0
    for i in range(m):
        y = points[i] + np.sqrt(2.0) * sigma * nodes  # (k,)
        # log q(y) = logsumexp_j [log p_j - (y - x_j)^2 / (2 s^2)] - log Z
        expo = -((y[:, None] - points[None, :]) ** 2) / (2.0 * sigma ** 2) \
            + np.log(priors)[None, :]
        mx = expo.max(axis=1, keepdims=True)
        log_qy = (mx[:, 0] + np.log(np.sum(np.exp(expo - mx), axis=1)))
        log_py_xi = -(nodes ** 2)  # -(y - x_i)^2 / (2 s^2) with y = x_i + sqrt2 s u
        total += priors[i] * np.sum(weights * (log_py_xi - log_qy)) / np.sqrt(np.pi)
    return float(total * LOG2E)


def mi_ask_awgn(order: int, sigma: float, n_nodes: int = 96) -> float:
    """Quadrature MI of normalized M-ASK over the coherent AWGN channel."""
    levels = np.linspace(-1.0, 1.0, order)
    return mi_points_awgn(levels, None, sigma, n_nodes)


# ---------------------------------------------------------------------------
# Truncated symbol-rate surrogate model and its exact forward-recursion rates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncatedModel:
    """Square-law channel with memory nu at the symbol rate:

        y_k = | sum_m taps[m] * x_{k-m} + offset |^2 + N(0, noise_var)

    taps[0] is the current symbol; offset is the fitted constant field term
    (the scaled bias). State count is M^nu, so nu stays small by design.
    """

    taps: np.ndarray  # complex, length nu + 1
    noise_var: float
    offset: complex
    levels: np.ndarray  # real alphabet
    fit_residual: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "taps", np.asarray(self.taps, dtype=complex))
        object.__setattr__(self, "levels", np.asarray(self.levels, dtype=float))
        if self.taps.ndim != 1 or self.taps.size < 1:
            raise ValueError("taps must be a non-empty 1-D vector")
        if not self.noise_var > 0:
            raise ValueError("noise_var must be > 0")

    @property
    def memory(self) -> int:
        return self.taps.size - 1

    @property
    def order(self) -> int:
        return self.levels.size

    def state_count(self) -> int:
        return self.order ** self.memory

    def mean_output(self, context: np.ndarray) -> np.ndarray:
        """Noise-free output for contexts (..., nu+1) ordered oldest..newest."""
        context = np.asarray(context, dtype=float)
        taps_rev = self.taps[::-1]  # oldest tap last in time order
        return np.abs(context @ taps_rev + self.offset) ** 2


def fit_truncated_model(symbols: np.ndarray, field_at_symbols: np.ndarray,
                        memory: int, levels: np.ndarray,
                        noise_var: float = 1.0,
                        ridge: float = 0.0) -> TruncatedModel:
    """Least-squares fit of symbol-rate taps + constant to a sampled field.

    symbols must cover at least `memory` symbols before the first fitted
    output.  Ill-conditioned normal equations fall back to a ridge solve and
    the residual is reported either way.
    """
    symbols = np.asarray(symbols, dtype=float)
    target = np.asarray(field_at_symbols)
    n = target.size
    if symbols.size < n + memory:
        raise ValueError("need `memory` warmup symbols before the fitted span")
    offset_sym = symbols.size - n  # targets align to the last n symbols
    cols = [symbols[offset_sym - m: offset_sym - m + n] for m in range(memory + 1)]
    design = np.column_stack(cols + [np.ones(n)])
    gram = design.T @ design
    if ridge == 0.0 and np.linalg.cond(gram) > 1e12:
        ridge = 1e-9 * np.trace(gram) / gram.shape[0]
    if ridge > 0.0:
        sol = np.linalg.solve(gram + ridge * np.eye(gram.shape[0]),
                              design.T @ target)
    else:
        sol, *_ = np.linalg.lstsq(design, target, rcond=None)
    residual = float(np.linalg.norm(design @ sol - target)
                     / max(np.linalg.norm(target), 1e-300))
    return TruncatedModel(taps=sol[:memory + 1], noise_var=noise_var,
                          offset=complex(sol[-1]), levels=np.asarray(levels, float),
                          fit_residual=residual)


def _mean_table(model: TruncatedModel) -> np.ndarray:
    """means[state, input]: state encodes the last nu symbols, oldest digit
    in the lowest base-M position."""
    m, nu = model.order, model.memory
    n_states = model.state_count()
    means = np.empty((n_states, m))
    states = np.arange(n_states)
    digits = np.empty((n_states, nu), dtype=int)
    rem = states.copy()
    for i in range(nu):  # digit i = symbol x_{k-nu+i}
        digits[:, i] = rem % m
        rem //= m
    past = model.levels[digits] @ model.taps[::-1][:nu] if nu else np.zeros(n_states)
    for a in range(m):
        means[:, a] = np.abs(past + model.taps[0] * model.levels[a]
                             + model.offset) ** 2
    return means


def _forward_logprob(model: TruncatedModel, y: np.ndarray,
                     pinned: np.ndarray, x_indices: np.ndarray,
                     init_state: int, means: np.ndarray) -> float:
    """log p(y | pinned symbols), marginalizing the rest under uniform priors.

    pinned[k] selects whether x_k is revealed to the recursion; the initial
    state (the nu warmup symbols) is always known.
    """
    m, nu = model.order, model.memory
    n = y.size
    log_prior = -np.log(m)
    inv2v = 1.0 / (2.0 * model.noise_var)
    log_norm = -0.5 * np.log(2.0 * np.pi * model.noise_var)

    if nu == 0:
        ll = log_norm - (y[:, None] - means[0][None, :]) ** 2 * inv2v
        total = 0.0
        for k in range(n):
            if pinned[k]:
                total += ll[k, x_indices[k]]
            else:
                row = ll[k] + log_prior
                mx = row.max()
                total += mx + np.log(np.sum(np.exp(row - mx)))
        return float(total)

    n_states = model.state_count()
    m_pow = n_states // m  # M^(nu-1)
    alpha = np.full(n_states, -np.inf)
    alpha[init_state] = 0.0
    rest = np.arange(m_pow)
    for k in range(n):
        ll = log_norm - (y[k] - means) ** 2 * inv2v  # (n_states, m)
        alpha_r = alpha.reshape(m_pow, m).T  # [oldest digit, rest]
        ll_r = ll.reshape(m_pow, m, m).transpose(1, 0, 2)  # [oldest, rest, a]
        nxt = np.full(n_states, -np.inf)
        inputs = (x_indices[k],) if pinned[k] else range(m)
        for a in inputs:
            terms = alpha_r + ll_r[:, :, a]  # [oldest, rest]
            mx = terms.max(axis=0)
            with np.errstate(invalid="ignore"):
                merged = mx + np.log(np.sum(np.exp(terms - mx), axis=0))
            merged = np.where(np.isfinite(mx), merged, -np.inf)
            if not pinned[k]:
                merged = merged + log_prior
            nxt[a * m_pow + rest] = merged
        alpha = nxt
    mx = alpha.max()
    return float(mx + np.log(np.sum(np.exp(alpha - mx))))


def simulate_truncated(model: TruncatedModel, n: int,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw warmup + payload symbols and the noisy square-law outputs."""
    nu = model.memory
    idx = rng.integers(0, model.order, size=n + nu)
    ctx = np.lib.stride_tricks.sliding_window_view(model.levels[idx], nu + 1)
    y = model.mean_output(ctx) + rng.normal(0.0, np.sqrt(model.noise_var), n)
    return idx[:nu], idx[nu:], y


def _state_of(model: TruncatedModel, context_indices: np.ndarray) -> int:
    """Encode the last nu symbol indices (oldest first) as a trellis state."""
    state = 0
    for i, d in enumerate(context_indices):
        state += int(d) * model.order ** i
    return state


def fba_air(model: TruncatedModel, n_stages: int, n: int, seed: int,
            n_frames: int = 8, symbol_rate_baud: float = 1.0) -> AirResult:
    """Exact per-stage rates of the truncated model under staged detection.

    Stage assignment is k mod S.  For stage s the forward recursion is run
    twice: once with stages < s pinned to the true symbols and once with
    stage s pinned as well; the log-probability gap, normalized per stage-s
    symbol, is that stage's rate.  Chaining over all stages makes the per-
    frame sum telescopic, i.e. exactly log p(y|x) - log p(y).
    """
    if model.state_count() > 10 ** 5:
        raise ValueError(f"state count {model.state_count()} exceeds the "
                         "tractability bound of 1e5")
    if n_stages < 1 or n_stages > n:
        raise ValueError("need 1 <= n_stages <= n")
    means = _mean_table(model)
    stage_of = np.arange(n) % n_stages
    per_frame = np.empty((n_frames, n_stages))
    for f in range(n_frames):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(f,)))
        warmup, x_idx, y = simulate_truncated(model, n, rng)
        init_state = _state_of(model, warmup)
        logp = np.empty(n_stages + 1)
        for s in range(n_stages + 1):
            pinned = stage_of < s
            logp[s] = _forward_logprob(model, y, pinned, x_idx, init_state, means)
        for s in range(n_stages):
            n_s = int(np.count_nonzero(stage_of == s))
            per_frame[f, s] = (logp[s + 1] - logp[s]) * LOG2E / n_s
    rates = per_frame.mean(axis=0)
    if n_frames > 1:
        errs = per_frame.std(axis=0, ddof=1) / np.sqrt(n_frames)
    else:
        errs = np.zeros(n_stages)
    counts = [int(np.count_nonzero(stage_of == s)) for s in range(n_stages)]
    estimates = [RateEstimate(max(float(r), 0.0), float(e), n_frames * c)
                 for r, e, c in zip(rates, errs, counts)]
    return combine_stage_rates(estimates, symbol_rate_baud, mode="oracle")
