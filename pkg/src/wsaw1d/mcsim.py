"""Monte Carlo cross-checks for the transfer-operator numerics.

Everything here works directly with continuous-time walk trajectories and
their Gibbs weights exp(-g sum_x phi(L_x)); no integral operators, no
quadrature.  Agreement with the spectral route is therefore evidence that
both are right.

Two estimators:

* conditional displacement moments E[(X/T)^k | X > 0] under the weighted
  path measure, via importance sampling from a free walk.  The free walk
  concentrates near X = 0 where the target has almost no mass once T is
  large, so the proposal can be exponentially tilted (`tilt_speed`);
  the likelihood correction exp(-eta X + (a + b - 2) T), eta =
  asinh(tilt_speed / 2), makes the estimator exact for any tilt, and a
  tilt near the escape speed keeps the effective sample size usable.
  The tilt fixes the displacement mismatch but not the variance of the
  accumulated Gibbs exponent, which grows linearly in T; the estimators
  therefore advance the walk in time segments with incremental weights
  and systematic resampling whenever the effective sample size falls
  below half the population (one-shot sampling is the n_segments=1
  special case).  Standard errors come from independent replicate pods.

* the Laplace-transformed finite-volume two-point function
  sum_j int_0^inf e^{-nu T} E_box[w 1(X_T = j)] dT, by sampling T from a
  truncated exponential and walking in the box via uniformization (rate-2
  event clock everywhere; at the endpoints an event moves inward with
  probability 1/2 and otherwise stays, which reproduces the rate-1
  inward jumps).

Chunked sampling uses child streams spawned from one SeedSequence, so a
given (seed, n_samples) pair is reproducible bit for bit in serial runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, PhiSpec, phi_eval

_ESS_LOW = 30.0
_DEFAULT_CHUNK = 10000


class MCError(RuntimeError):
    """Estimator could not produce a usable value (e.g. no samples survive
    the conditioning)."""


@dataclass
class Trajectory:
    """One continuous-time path on the integers, started at `start`.

    jump_times are strictly increasing in (0, T); positions[i] is the site
    occupied after jump i.  local_times maps site -> total occupation time
    and sums to T.
    """

    T: float
    start: int
    jump_times: np.ndarray
    positions: np.ndarray
    local_times: dict[int, float]

    @property
    def final_position(self) -> int:
        return int(self.positions[-1]) if len(self.positions) else self.start


@dataclass
class WeightedEstimate:
    value: float
    std_error: float
    n_samples: int
    n_effective: float
    n_conditioned: int | None = None
    seed: int | None = None

    @property
    def low_confidence(self) -> bool:
        return self.n_effective < _ESS_LOW


def sample_trajectory(rng, T: float, start: int = 0, box: int | None = None) -> Trajectory:
    """One free (unweighted) trajectory, Gillespie style.

    box=N restricts to {-N..N} with rate-1 inward jumps at the endpoints;
    box=None is the full line with rate-1 jumps each direction.  Scalar
    and sequential on purpose: this is the reference implementation the
    vectorized bulk samplers are tested against.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if box is not None and (box < 0 or abs(start) > box):
        raise ValueError("start must lie inside the box")
    rng = np.random.default_rng(rng)
    x, t = start, 0.0
    times, sites = [], []
    local: dict[int, float] = {}
    while True:
        if box is None:
            moves = (-1, 1)
        else:
            moves = tuple(s for s in (-1, 1) if abs(x + s) <= box)
        rate = float(len(moves))
        dt = rng.exponential(1.0 / rate) if rate > 0 else math.inf
        if t + dt >= T:
            local[x] = local.get(x, 0.0) + (T - t)
            break
        local[x] = local.get(x, 0.0) + dt
        t += dt
        x += moves[rng.integers(len(moves))]
        times.append(t)
        sites.append(x)
    return Trajectory(
        T=T,
        start=start,
        jump_times=np.asarray(times),
        positions=np.asarray(sites, dtype=np.int64),
        local_times=local,
    )


def log_gibbs_weight(traj: Trajectory, g: float, phi: PhiSpec | None = None) -> float:
    """log of exp(-g sum_x phi(L_x)) for one trajectory."""
    phi = phi or PhiSpec.quadratic()
    if g < 0:
        raise ValueError("g must be nonnegative")
    total = sum(float(phi_eval(phi, ell)) for ell in traj.local_times.values())
    return -g * total


def gibbs_weight(traj: Trajectory, g: float, phi: PhiSpec | None = None) -> float:
    return math.exp(log_gibbs_weight(traj, g, phi))


def _free_walk_batch(rng, m: int, T: float, a: float, b: float, phi: PhiSpec):
    """m free-walk paths on [0, T] with jump rates a (right) and b (left).

    Returns (X, sum_phi): final displacements and sum_x phi(L_x).  Jump
    times come from the order-statistics representation: K ~ Poisson((a+b)T)
    and K sorted uniforms.  Unused slots are masked to +inf before the
    sort so short paths do not borrow times from the padding.
    """
    total = a + b
    K = rng.poisson(total * T, size=m)
    k_max = int(K.max()) if m else 0
    U = rng.random((m, k_max))
    steps_u = rng.random((m, k_max))

    mask = np.arange(k_max)[None, :] < K[:, None]
    tg = np.where(mask, U, np.inf)
    tg.sort(axis=1)
    tj = np.where(np.isfinite(tg), tg * T, T)

    bounds = np.concatenate([np.zeros((m, 1)), tj, np.full((m, 1), T)], axis=1)
    dt = np.diff(bounds, axis=1)  # (m, k_max + 1), holding time per interval

    steps = np.where(steps_u < a / total, 1, -1)
    steps[~mask] = 0
    pos = np.concatenate([np.zeros((m, 1), dtype=np.int64), np.cumsum(steps, axis=1)], axis=1)

    offset = k_max + 1
    width = 2 * k_max + 3
    idx = np.arange(m)[:, None] * width + (pos + offset)
    local = np.bincount(idx.ravel(), weights=dt.ravel(), minlength=m * width)
    local = local.reshape(m, width)

    sum_phi = phi_eval(phi, local).sum(axis=1)
    return pos[:, -1], sum_phi


def conditional_sample(
    params: ModelParams,
    T: float,
    n_samples: int,
    seed: int,
    tilt_speed: float | None,
    chunk_size: int,
):
    """Weighted sample of X conditioned on X > 0.

    Returns (x, w_norm, n_effective, n_conditioned) with w_norm summing
    to one over the surviving paths.
    """
    if T <= 0 or n_samples < 1:
        raise ValueError("need T > 0 and n_samples >= 1")
    if tilt_speed is None:
        eta = 0.0
    else:
        eta = math.asinh(tilt_speed / 2.0)
    a, b = math.exp(eta), math.exp(-eta)

    n_chunks = -(-n_samples // chunk_size)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    xs, logws = [], []
    done = 0
    for child in children:
        m = min(chunk_size, n_samples - done)
        done += m
        rng = np.random.default_rng(child)
        x, sum_phi = _free_walk_batch(rng, m, T, a, b, params.phi)
        logw = -params.g * sum_phi - eta * x + (a + b - 2.0) * T
        keep = x > 0
        xs.append(x[keep].astype(float))
        logws.append(logw[keep])

    x = np.concatenate(xs)
    logw = np.concatenate(logws)
    if x.size == 0:
        raise MCError(
            f"no paths with X > 0 among {n_samples} samples at T={T}; "
            "increase n_samples or set tilt_speed"
        )
    logw -= logw.max()
    w = np.exp(logw)
    w_norm = w / w.sum()
    n_eff = 1.0 / float(np.sum(w_norm**2))
    return x, w_norm, n_eff, int(x.size)


def _ess_of(logw: np.ndarray) -> float:
    w = np.exp(logw - logw.max())
    s = float(w.sum())
    return s * s / float(np.sum(w * w))


def _systematic_indices(rng, logw: np.ndarray) -> np.ndarray:
    m = logw.size
    w = np.exp(logw - logw.max())
    edges = np.cumsum(w / w.sum())
    edges[-1] = 1.0
    u = (rng.random() + np.arange(m)) / m
    return np.searchsorted(edges, u)


def _advance_particles(rng, pos, local, offset, dT, a, b, phi, g):
    """Advance every particle by dT, accumulating into its local-time row.

    Returns (new positions, Gibbs log-weight increment).  A segment of a
    nearest-neighbor walk only touches a contiguous site interval no wider
    than its jump count, so the increment -g [sum phi(L_new) - sum
    phi(L_old)] is evaluated on a per-particle window of that width rather
    than the whole row.
    """
    m = pos.size
    total = a + b
    K = rng.poisson(total * dT, size=m)
    k_max = int(K.max()) if m else 0
    if int(np.abs(pos).max(initial=0)) + k_max >= offset:
        raise MCError("particle displacement exceeded the preallocated window")
    U = rng.random((m, k_max))
    coin = rng.random((m, k_max))
    mask = np.arange(k_max)[None, :] < K[:, None]
    tg = np.where(mask, U, np.inf)
    tg.sort(axis=1)
    tj = np.where(np.isfinite(tg), tg * dT, dT)

    # site occupied during each holding interval, and the touched window
    pos_seq = np.empty((m, k_max + 1), dtype=np.int64)
    pos_seq[:, 0] = pos
    steps = np.where(coin < a / total, 1, -1)
    steps = np.where(mask, steps, 0)
    if k_max:
        pos_seq[:, 1:] = pos[:, None] + np.cumsum(steps, axis=1)
    lo = pos_seq.min(axis=1)

    rows = np.arange(m)
    win = lo[:, None] + np.arange(k_max + 1)[None, :] + offset
    before = phi_eval(phi, local[rows[:, None], win]).sum(axis=1)

    bounds = np.concatenate([np.zeros((m, 1)), tj, np.full((m, 1), dT)], axis=1)
    dt = np.diff(bounds, axis=1)
    flat = rows[:, None] * local.shape[1] + pos_seq + offset
    np.add.at(local.reshape(-1), flat.ravel(), dt.ravel())

    after = phi_eval(phi, local[rows[:, None], win]).sum(axis=1)
    return pos_seq[:, -1], -g * (after - before)


def _particle_pod(rng, m, T, a, b, eta, g, phi, n_segments):
    """One population of m weighted paths on [0, T]; returns (X, logw)."""
    total = a + b
    mean_jumps = total * T
    k_bound = int(mean_jumps + 10.0 * math.sqrt(mean_jumps) + 20.0)
    offset = k_bound + 1
    local = np.zeros((m, 2 * k_bound + 3))
    pos = np.zeros(m, dtype=np.int64)
    logw = np.zeros(m)
    dT = T / n_segments
    for seg in range(n_segments):
        pos0 = pos
        pos, dlogw = _advance_particles(rng, pos, local, offset, dT, a, b, phi, g)
        logw += dlogw - eta * (pos - pos0) + (total - 2.0) * dT
        if seg < n_segments - 1 and _ess_of(logw) < 0.5 * m:
            idx = _systematic_indices(rng, logw)
            pos = pos[idx]
            local = local[idx]
            logw = np.zeros(m)
    return pos, logw


def _conditional_pods(
    params: ModelParams,
    T: float,
    n_samples: int,
    seed: int,
    tilt_speed: float | None,
    n_replicates: int,
    segment_length: float,
):
    """Independent replicate populations, each conditioned on X > 0.

    Returns a list of (x, w_norm) pairs, one per pod that has survivors.
    """
    if T <= 0 or n_samples < 1:
        raise ValueError("need T > 0 and n_samples >= 1")
    if n_replicates < 1 or segment_length <= 0:
        raise ValueError("need n_replicates >= 1 and segment_length > 0")
    eta = 0.0 if tilt_speed is None else math.asinh(tilt_speed / 2.0)
    a, b = math.exp(eta), math.exp(-eta)
    m = n_samples // n_replicates
    if m < 2:
        raise ValueError("n_samples too small for the replicate count")
    n_segments = max(1, math.ceil(T / segment_length))

    pods = []
    for child in np.random.SeedSequence(seed).spawn(n_replicates):
        rng = np.random.default_rng(child)
        x, logw = _particle_pod(rng, m, T, a, b, eta, params.g, params.phi, n_segments)
        keep = x > 0
        if not np.any(keep):
            continue
        w = np.exp(logw[keep] - logw[keep].max())
        pods.append((x[keep].astype(float), w / w.sum()))
    if not pods:
        raise MCError(
            f"no paths with X > 0 among {n_samples} samples at T={T}; "
            "increase n_samples or set tilt_speed"
        )
    return pods


def _combine_pods(pods, f, n_samples, seed) -> WeightedEstimate:
    values = np.array([float(wn @ f(x)) for x, wn in pods])
    value = float(values.mean())
    if values.size >= 2:
        se = float(values.std(ddof=1)) / math.sqrt(values.size)
    else:
        x, wn = pods[0]
        fx = f(x)
        se = math.sqrt(float(np.sum(wn**2 * (fx - value) ** 2)))
    n_eff = sum(1.0 / float(np.sum(wn**2)) for _, wn in pods)
    n_cond = sum(x.size for x, _ in pods)
    return WeightedEstimate(
        value=value,
        std_error=se,
        n_samples=n_samples,
        n_effective=n_eff,
        n_conditioned=n_cond,
        seed=seed,
    )


def estimate_conditional_moment(
    params: ModelParams,
    T: float,
    k: int,
    n_samples: int,
    seed: int = 0,
    tilt_speed: float | None = None,
    n_replicates: int = 10,
    segment_length: float = 5.0,
) -> WeightedEstimate:
    """Self-normalized estimate of E[(X_T / T)^k | X_T > 0] under the
    weighted measure.

    tilt_speed only changes the proposal (variance), never the estimand;
    leave it None for an untilted free-walk proposal.  The population is
    split into n_replicates independent pods whose spread gives the
    standard error; n_effective sums the final-weight effective sizes.
    """
    if k < 1:
        raise ValueError("moment order k must be >= 1")
    pods = _conditional_pods(
        params, T, n_samples, seed, tilt_speed, n_replicates, segment_length
    )
    return _combine_pods(pods, lambda x: (x / T) ** k, n_samples, seed)


def estimate_concentration(
    params: ModelParams,
    T: float,
    center: float,
    radius: float,
    n_samples: int,
    seed: int = 0,
    tilt_speed: float | None = None,
    n_replicates: int = 10,
    segment_length: float = 5.0,
) -> WeightedEstimate:
    """P(|X_T / T - center| >= radius | X_T > 0) under the weighted measure."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    pods = _conditional_pods(
        params, T, n_samples, seed, tilt_speed, n_replicates, segment_length
    )
    return _combine_pods(
        pods, lambda x: (np.abs(x / T - center) >= radius).astype(float), n_samples, seed
    )


def _box_walk_batch(rng, T_row: np.ndarray, N: int, start: int, phi: PhiSpec):
    """Box walks on {-N..N} with per-row horizons T_row, via uniformization.

    Every site carries a rate-2 event clock; at the endpoints an event is
    a real inward jump with probability 1/2 and fictitious otherwise.
    Returns (final position, sum_x phi(L_x)).
    """
    m = len(T_row)
    K = rng.poisson(2.0 * T_row)
    k_max = int(K.max()) if m else 0
    U = rng.random((m, k_max))
    coin = rng.random((m, k_max))

    mask = np.arange(k_max)[None, :] < K[:, None]
    tg = np.where(mask, U, np.inf)
    tg.sort(axis=1)
    tj = np.where(np.isfinite(tg), tg * T_row[:, None], T_row[:, None])

    rows = np.arange(m)
    pos = np.full(m, start, dtype=np.int64)
    local = np.zeros((m, 2 * N + 1))
    prev = np.zeros(m)
    for c in range(k_max):
        t_c = tj[:, c]
        local[rows, pos + N] += t_c - prev
        prev = t_c
        active = mask[:, c]
        go = coin[:, c] < 0.5
        step = np.where(go, 1, -1)
        step = np.where(pos == N, np.where(go, -1, 0), step)
        step = np.where(pos == -N, np.where(go, 1, 0), step)
        pos = pos + np.where(active, step, 0)
    local[rows, pos + N] += T_row - prev
    return pos, phi_eval(phi, local).sum(axis=1)


def estimate_laplace_two_point(
    params: ModelParams,
    N: int,
    i: int,
    j: int,
    n_samples: int,
    seed: int = 0,
    T_max: float | None = None,
    chunk_size: int = 2 * _DEFAULT_CHUNK,
) -> WeightedEstimate:
    """Direct MC estimate of the finite-volume two-point function

        G^N_{ij}(nu) = int_0^inf e^{-nu T} E^box_i[w(L) 1(X_T = j)] dT,

    sampling T from Exp(nu) truncated at T_max and averaging
    (Z / nu) w 1(X_T = j), Z = 1 - e^{-nu T_max}.  Unbiased up to the
    e^{-nu T_max} tail of the Laplace integral (below 1e-8 by default).
    n_effective is computed from the Gibbs weights of the paths that land
    on j.
    """
    if params.nu <= 0:
        raise ValueError("Laplace sampling needs nu > 0")
    if N < 0 or not (-N <= i <= N and -N <= j <= N):
        raise ValueError("i and j must lie in {-N..N}")
    if n_samples < 2:
        raise ValueError("need at least two samples for a standard error")
    if T_max is None:
        T_max = math.log(1e9) / params.nu
    Z = -math.expm1(-params.nu * T_max)

    n_chunks = -(-n_samples // chunk_size)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    sum_y = sum_y2 = 0.0
    sum_w = sum_w2 = 0.0
    n_hits = 0
    done = 0
    for child in children:
        m = min(chunk_size, n_samples - done)
        done += m
        rng = np.random.default_rng(child)
        T_row = -np.log1p(-rng.random(m) * Z) / params.nu
        pos, sum_phi = _box_walk_batch(rng, T_row, N, i, phi=params.phi)
        w = np.exp(-params.g * sum_phi)
        hit = pos == j
        y = (Z / params.nu) * w * hit
        sum_y += float(y.sum())
        sum_y2 += float((y**2).sum())
        sum_w += float(w[hit].sum())
        sum_w2 += float((w[hit] ** 2).sum())
        n_hits += int(hit.sum())

    value = sum_y / n_samples
    var = max(sum_y2 - n_samples * value**2, 0.0) / (n_samples - 1)
    se = math.sqrt(var / n_samples)
    n_eff = (sum_w**2 / sum_w2) if sum_w2 > 0 else 0.0
    return WeightedEstimate(
        value=value,
        std_error=se,
        n_samples=n_samples,
        n_effective=n_eff,
        n_conditioned=n_hits,
        seed=seed,
    )
