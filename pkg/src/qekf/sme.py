"""Stochastic master equation simulator (homodyne and photon counting).

The conditional density matrix is propagated on a fixed time grid. Two
first-order schemes are available:

``"kraus"`` (default)
    ``rho' ∝ M rho M^dag (+ jumps)`` with
    ``M = I - (iH + 1/2 sum_k L_k^dag L_k) dt + sum_k L_k dy_k`` over the
    homodyne channels. Expanding to first order reproduces the Euler update
    below, but every step is a completely positive map, so the conditional
    state never acquires negative eigenvalues.
``"euler"``
    The plain Euler-Maruyama update
    ``rho' = rho + L*(rho) dt + sum_k H_k(rho) dW_k + sum_c G_c(rho)(dN_c - p_c)``
    followed by renormalization and re-Hermitization.

Outputs of the SLH model that carry no detector are treated as unmonitored
and only contribute dissipation.
"""

from dataclasses import dataclass, field

import numpy as np

from .operators import hermitize, ket2dm, lindblad_schrodinger

HOMODYNE = "homodyne"
COUNTING = "counting"
MAX_JUMP_PROBABILITY = 0.1


class SimulationError(RuntimeError):
    """Numerical breakdown of the SME integration (usually dt too large)."""


@dataclass(frozen=True)
class MeasurementChannel:
    kind: str
    index: int
    efficiency: float = 1.0

    def __post_init__(self):
        if self.kind not in (HOMODYNE, COUNTING):
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if self.efficiency != 1.0:
            raise ValueError("only unit-efficiency detection is supported")


def homodyne(index):
    return MeasurementChannel(HOMODYNE, index)


def counting(index):
    return MeasurementChannel(COUNTING, index)


def _validate_channels(channels, model):
    seen = set()
    for ch in channels:
        if not 0 <= ch.index < model.channels:
            raise ValueError(f"channel index {ch.index} outside 0..{model.channels - 1}")
        if ch.index in seen:
            raise ValueError(f"output channel {ch.index} has more than one detector")
        seen.add(ch.index)


@dataclass(frozen=True)
class SimConfig:
    """Time grid, seed and the observables to record.

    ``record_expectations`` maps a column name to an operator.
    """

    dt: float = 1e-4
    T: float = 1.0
    seed: int = 0
    record_expectations: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.T < 0:
            raise ValueError("T must be non-negative")
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"T={self.T} is not an integer multiple of dt={self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class TrajectoryRecord:
    """Measurement record and conditional expectations of one trajectory.

    ``dy[k]`` and ``dN[k]`` are the increments over ``[times[k], times[k+1]]``;
    ``expectations[k]`` is evaluated on the conditional state at ``times[k]``.
    Homodyne columns of ``dy`` and counting columns of ``dN`` follow the order
    of ``channels``.
    """

    times: np.ndarray
    channels: tuple
    dy: np.ndarray
    dN: np.ndarray
    expectation_names: tuple = ()
    expectations: np.ndarray = None
    final_state: np.ndarray = None

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def n_steps(self):
        return len(self.times) - 1

    def increments(self):
        """All channel increments as an ``(n_steps, m)`` array in channel order."""
        out = np.empty((self.n_steps, len(self.channels)))
        ih = ic = 0
        for j, ch in enumerate(self.channels):
            if ch.kind == HOMODYNE:
                out[:, j] = self.dy[:, ih]
                ih += 1
            else:
                out[:, j] = self.dN[:, ic]
                ic += 1
        return out


def trajectory_noise(seed, trial, n_steps, n_homodyne, n_counting, dt):
    """Wiener increments and jump uniforms for trial ``trial`` of ``seed``.

    The stream is a Philox counter-based generator keyed by ``(seed, trial)``,
    so any trial can be regenerated independently of the others.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial),))
    rng = np.random.Generator(np.random.Philox(ss))
    dW = rng.standard_normal((n_steps, n_homodyne)) * np.sqrt(dt)
    u = rng.random((n_steps, n_counting))
    return dW, u


def _trace_product(adjoint_flat, rho):
    # tr(rho X) == vdot(X^dag, rho)
    return np.vdot(adjoint_flat, rho.ravel())


class Propagator:
    """Precomputed single-step update for one model, detector set and dt."""

    def __init__(self, model, channels, dt, method="kraus"):
        if method not in ("kraus", "euler"):
            raise ValueError(f"unknown method {method!r}")
        channels = tuple(channels)
        _validate_channels(channels, model)
        self.model = model
        self.channels = channels
        self.dt = float(dt)
        self.method = method
        d = model.space.total_dim
        monitored = {ch.index for ch in channels}
        self.hom_L = [model.L[ch.index] for ch in channels if ch.kind == HOMODYNE]
        self.cnt_L = [model.L[ch.index] for ch in channels if ch.kind == COUNTING]
        self.unmonitored = [L for i, L in enumerate(model.L) if i not in monitored]
        # L + L^dag is Hermitian, so it is its own adjoint in the trace formula
        self.hom_X = [np.ascontiguousarray(L + L.conj().T).ravel() for L in self.hom_L]
        self.cnt_LdL = [np.ascontiguousarray(L.conj().T @ L).ravel() for L in self.cnt_L]
        LdL = sum((L.conj().T @ L for L in model.L), np.zeros((d, d), dtype=complex))
        self.M0 = np.eye(d, dtype=complex) - (1j * model.H + 0.5 * LdL) * self.dt

    # -- helpers ---------------------------------------------------------
    def homodyne_means(self, rho):
        return np.array([_trace_product(X, rho).real for X in self.hom_X])

    def jump_probabilities(self, rho):
        p = np.array([_trace_product(X, rho).real for X in self.cnt_LdL]) * self.dt
        if np.any(p > MAX_JUMP_PROBABILITY):
            raise SimulationError(
                f"jump probability {p.max():.3f} per step exceeds "
                f"{MAX_JUMP_PROBABILITY}; reduce dt"
            )
        return np.maximum(p, 0.0)

    # -- updates ---------------------------------------------------------
    def update(self, rho, dy, dN):
        """Advance ``rho`` given the homodyne increments ``dy`` and marks ``dN``."""
        # breakdown shows up as a bad trace and is raised below
        with np.errstate(over="ignore", invalid="ignore"):
            if self.method == "kraus":
                new = self._kraus(rho, dy, dN)
            else:
                new = self._euler(rho, dy, dN)
            tr = np.trace(new).real
        if not np.isfinite(tr) or tr <= 0:
            raise SimulationError("conditional state lost its trace; reduce dt")
        new = hermitize(new / tr)
        if not np.all(np.isfinite(new)):
            raise SimulationError("non-finite conditional state; reduce dt")
        return new

    def _kraus(self, rho, dy, dN):
        M = self.M0.copy()
        for L, y in zip(self.hom_L, dy):
            M += y * L
        Mrho = M @ rho
        new = Mrho @ M.conj().T
        for L in self.unmonitored:
            new += (L @ rho @ L.conj().T) * self.dt
        for L, n in zip(self.cnt_L, dN):
            if n:
                jumped = L @ new @ L.conj().T
                # a mark the state cannot produce (replay of a foreign record) is ignored
                if np.trace(jumped).real > 1e-300:
                    new = jumped
        return new

    def _euler(self, rho, dy, dN):
        means = self.homodyne_means(rho)
        dW = np.asarray(dy) - means * self.dt
        drift = lindblad_schrodinger(rho, self.model.H, self.model.L)
        new = rho + drift * self.dt
        for L, X, w in zip(self.hom_L, means, dW):
            Lrho = L @ rho
            new += (Lrho + Lrho.conj().T - X * rho) * w
        for L, LdL, n in zip(self.cnt_L, self.cnt_LdL, dN):
            rate = _trace_product(LdL, rho).real
            if rate <= 0:
                continue
            jump = L @ rho @ L.conj().T / rate - rho
            new += jump * (n - rate * self.dt)
        drift_tr = abs(np.trace(new).real - 1.0)
        if drift_tr > 1e-3:
            raise SimulationError(f"trace drift {drift_tr:.2e} before renormalization; reduce dt")
        return new

    def step(self, rho, dW, u):
        """Sample one step: returns ``(rho', dy, dN)``."""
        dy = self.homodyne_means(rho) * self.dt + np.asarray(dW, dtype=float)
        p = self.jump_probabilities(rho)
        dN = (np.asarray(u, dtype=float) < p).astype(np.int8)
        return self.update(rho, dy, dN), dy, dN


def _as_density(rho):
    rho = np.asarray(rho, dtype=complex)
    return ket2dm(rho) if rho.ndim == 1 else rho


def step_diffusive(rho, model, channels, dW, dt, method="kraus"):
    """One step under homodyne detection of ``channels``.

    Returns the updated state and the increments
    ``dy_k = tr((L_k + L_k^dag) rho) dt + dW_k``.
    """
    channels = tuple(channels)
    if any(ch.kind != HOMODYNE for ch in channels):
        raise ValueError("step_diffusive only takes homodyne channels")
    prop = Propagator(model, channels, dt, method)
    new, dy, _ = prop.step(_as_density(rho), dW, np.zeros(0))
    return new, dy


def step_jump(rho, model, channel, u, dt, method="kraus"):
    """One step under photon counting of ``channel``; returns ``(rho', dN)``.

    A jump occurs when ``u < tr(L rho L^dag) dt``.
    """
    if channel.kind != COUNTING:
        raise ValueError("step_jump needs a counting channel")
    prop = Propagator(model, (channel,), dt, method)
    new, _, dN = prop.step(_as_density(rho), np.zeros(0), [u])
    return new, int(dN[0])


def _observables(config_or_map):
    obs = dict(config_or_map or {})
    names = tuple(obs)
    adjoints = [np.ascontiguousarray(np.asarray(obs[n]).conj().T).ravel() for n in names]
    return names, adjoints


def _evaluate(adjoints, rho):
    return np.array([_trace_product(X, rho).real for X in adjoints])


def simulate(model, channels, config, rho0, *, trial=0, noise=None, method="kraus"):
    """Sample one conditional trajectory and its measurement record.

    Parameters
    ----------
    model : SLHTriple
    channels : sequence of MeasurementChannel
    config : SimConfig
    rho0 : ndarray
        Initial density matrix or ket.
    trial : int
        Trial index; with ``config.seed`` it selects the noise stream.
    noise : tuple, optional
        Explicit ``(dW, u)`` arrays overriding the generated stream.
    method : {"kraus", "euler"}

    Returns
    -------
    TrajectoryRecord
    """
    channels = tuple(channels)
    prop = Propagator(model, channels, config.dt, method)
    n = config.n_steps
    n_h, n_c = len(prop.hom_L), len(prop.cnt_L)
    if noise is None:
        dW, u = trajectory_noise(config.seed, trial, n, n_h, n_c, config.dt)
    else:
        dW, u = (np.asarray(a, dtype=float).reshape(n, -1) for a in noise)
    names, adjoints = _observables(config.record_expectations)
    rho = _as_density(rho0).copy()
    dy = np.zeros((n, n_h))
    dN = np.zeros((n, n_c), dtype=np.int8)
    values = np.zeros((n + 1, len(names)))
    values[0] = _evaluate(adjoints, rho)
    for k in range(n):
        rho, dy[k], dN[k] = prop.step(rho, dW[k], u[k])
        values[k + 1] = _evaluate(adjoints, rho)
    return TrajectoryRecord(
        times=np.arange(n + 1) * config.dt,
        channels=channels,
        dy=dy,
        dN=dN,
        expectation_names=names,
        expectations=values,
        final_state=rho,
    )


def replay(model, record, rho0, observables=None, method="kraus"):
    """Condition ``model`` on an existing measurement record.

    This is the SME used as a filter: the increments are taken from
    ``record`` instead of being sampled. Used to run reference or truncated
    SMEs on the record emitted by another simulation.
    """
    channels = record.channels
    prop = Propagator(model, channels, record.dt or 1.0, method)
    names, adjoints = _observables(observables)
    n = record.n_steps
    rho = _as_density(rho0).copy()
    values = np.zeros((n + 1, len(names)))
    values[0] = _evaluate(adjoints, rho)
    for k in range(n):
        prop.jump_probabilities(rho)
        rho = prop.update(rho, record.dy[k], record.dN[k])
        values[k + 1] = _evaluate(adjoints, rho)
    return TrajectoryRecord(
        times=record.times.copy(),
        channels=channels,
        dy=record.dy,
        dN=record.dN,
        expectation_names=names,
        expectations=values,
        final_state=rho,
    )


def conditional_mean(record, observables):
    """Recorded ``tr(rho_t x_i)`` series for the named observables."""
    if isinstance(observables, str):
        observables = [observables]
    missing = [o for o in observables if o not in record.expectation_names]
    if missing:
        raise KeyError(f"observables not recorded: {missing}")
    cols = [record.expectation_names.index(o) for o in observables]
    return record.expectations[:, cols]


__all__ = [
    "COUNTING",
    "HOMODYNE",
    "MeasurementChannel",
    "Propagator",
    "SimConfig",
    "SimulationError",
    "TrajectoryRecord",
    "conditional_mean",
    "counting",
    "homodyne",
    "replay",
    "simulate",
    "step_diffusive",
    "step_jump",
    "trajectory_noise",
]
