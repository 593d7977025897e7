"""Worked examples as matched (SLH model, filter model) pairs.

* ``kerr``: damped Kerr cavities, optionally coupled, homodyne on every output.
* ``counting``: a squeezed cavity whose output is split by a beam splitter,
  with homodyne detection on one port and photon counting on the other.
* ``linear``: the single-mode Kerr cavity with ``chi = 0``.

Filter models are derived from a linear coupling ``L = C x`` with
``x = [q_0, p_0, q_1, p_1, ...]``. For such couplings the quadrature noise
and measurement noise coefficients follow from the quantum Ito table; see
:func:`ito_covariances`.
"""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import operators as ops
from .ekf import FilterModel, linearize
from .sme import COUNTING, HOMODYNE, MeasurementChannel
from .slh import SLHTriple, beam_splitter, concatenate, series

# symplectic form of one mode, [x_i, x_j] = i J_ij
_J1 = np.array([[0.0, 1.0], [-1.0, 0.0]])

OFFSET_PATTERN = np.array([1.0, -1.0, -1.0, 1.0])


def symplectic(n_modes):
    return np.kron(np.eye(n_modes), _J1)


def offset_direction(n_modes):
    """``[1, -1, -1, 1]`` tiled (and cut) to length ``2 n_modes``."""
    reps = math.ceil(2 * n_modes / 4)
    return np.tile(OFFSET_PATTERN, reps)[: 2 * n_modes]


def mode_coupling(n_modes, amplitudes=1.0):
    """Rows ``C_i`` with ``a_i = C_i x`` for each mode, scaled by ``amplitudes``."""
    amps = np.broadcast_to(np.asarray(amplitudes, dtype=complex), (n_modes,))
    C = np.zeros((n_modes, 2 * n_modes), dtype=complex)
    for i in range(n_modes):
        C[i, 2 * i : 2 * i + 2] = amps[i] * np.array([1.0, 1.0j]) / math.sqrt(2.0)
    return C


def linear_drift_matrix(M, C):
    """Drift ``A`` of ``x`` for ``H = x^T M x / 2`` and coupling ``L = C x``.

    ``A = J (M + Im(C^dag C))``; the second term is the damping.
    """
    n_modes = C.shape[1] // 2
    return symplectic(n_modes) @ (M + np.imag(C.conj().T @ C))


def ito_covariances(G, Lm):
    """Symmetrized Ito products of the noise coefficients.

    ``G`` (n x m) and ``Lm`` (m x m) are the coefficients of the input
    creation increments ``dB^dag`` in the quadrature and measurement
    equations; the annihilation coefficients are their conjugates. With
    ``dB dB^dag = dt`` the covariances are

        Q = Re(conj(G) G^T),  R = Re(conj(Lm) Lm^T),  S = Re(conj(G) Lm^T).
    """
    G = np.atleast_2d(G)
    Lm = np.atleast_2d(Lm)
    Q = np.real(G.conj() @ G.T)
    R = np.real(Lm.conj() @ Lm.T)
    S = np.real(G.conj() @ Lm.T)
    return 0.5 * (Q + Q.T), 0.5 * (R + R.T), S


def noise_gain(C, S_scatter):
    """Quadrature noise coefficient ``G = i J C^T conj(S)``."""
    n_modes = C.shape[1] // 2
    return 1j * symplectic(n_modes) @ C.T @ np.conj(S_scatter)


# ---------------------------------------------------------------------------
# Kerr cavities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KerrParams:
    """Damped Kerr cavities with homodyne detection on every output.

    ``coupling`` is an ``n_modes x n_modes`` symmetric matrix of direct
    coupling strengths ``gamma_ij`` (empty means uncoupled).
    """

    n_modes: int = 2
    gamma: float = 32.0
    chi: float = 0.3 * math.pi
    coupling: tuple = ()
    alpha0: object = 1.0
    zeta: float = 0.0
    basis: int = 16
    nbar0: float = 0.0

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.basis < 4:
            raise ValueError("basis must be >= 4")
        if self.nbar0 < 0:
            raise ValueError("nbar0 must be non-negative")
        alpha = np.atleast_1d(np.asarray(self.alpha0, dtype=complex))
        if alpha.size not in (1, self.n_modes):
            raise ValueError(f"alpha0 needs 1 or {self.n_modes} entries, got {alpha.size}")
        alpha = tuple(complex(a) for a in np.broadcast_to(alpha, (self.n_modes,)))
        object.__setattr__(self, "alpha0", alpha)
        g = self.coupling_matrix()
        if np.any(g < 0) or not np.allclose(g, g.T):
            raise ValueError("coupling must be a symmetric matrix with entries >= 0")
        object.__setattr__(self, "coupling", tuple(map(tuple, g)))

    def coupling_matrix(self):
        if len(self.coupling) == 0:
            return np.zeros((self.n_modes, self.n_modes))
        g = np.array(self.coupling, dtype=float)
        if g.shape != (self.n_modes, self.n_modes):
            raise ValueError(f"coupling must be {self.n_modes}x{self.n_modes}, got {g.shape}")
        return g


def _coupling_hamiltonian_matrix(params):
    # i sqrt(g)(a_j a_i^dag - a_i a_j^dag) = -sqrt(g)(q_i p_j - p_i q_j)
    n = params.n_modes
    g = params.coupling_matrix()
    M = np.zeros((2 * n, 2 * n))
    for i in range(n):
        for j in range(i + 1, n):
            s = math.sqrt(g[i, j])
            M[2 * i, 2 * j + 1] = M[2 * j + 1, 2 * i] = -s
            M[2 * i + 1, 2 * j] = M[2 * j, 2 * i + 1] = s
    return M


def _kerr_linear(params):
    C = mode_coupling(params.n_modes, math.sqrt(params.gamma))
    return linear_drift_matrix(_coupling_hamiltonian_matrix(params), C)


def _check_dim(x, n_modes):
    x = np.asarray(x, dtype=float)
    if x.shape != (2 * n_modes,):
        raise ValueError(f"state must have length {2 * n_modes}, got shape {x.shape}")
    return x


def _kerr_terms(x, chi):
    q, p = x[0::2], x[1::2]
    out = np.empty_like(x)
    out[0::2] = chi * (p**3 + q * q * p - 2.0 * p)
    out[1::2] = -chi * (q**3 + p * p * q - 2.0 * q)
    return out


def _kerr_blocks(x, chi):
    q, p = x[0::2], x[1::2]
    n = len(q)
    F = np.zeros((2 * n, 2 * n))
    for i in range(n):
        qi, pi_ = q[i], p[i]
        F[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = chi * np.array(
            [
                [2.0 * qi * pi_, 3.0 * pi_**2 + qi**2 - 2.0],
                [-(3.0 * qi**2 + pi_**2 - 2.0), -2.0 * qi * pi_],
            ]
        )
    return F


def kerr_drift(x_hat, params):
    """Quadrature drift of the Kerr model at commuting estimates.

    Per mode the Kerr part is ``chi (p^3 + q^2 p - 2p)`` for ``q`` and
    ``-chi (q^3 + p^2 q - 2q)`` for ``p``; the linear part holds damping
    ``-gamma/2`` and the direct mode coupling.
    """
    x = _check_dim(x_hat, params.n_modes)
    return _kerr_linear(params) @ x + _kerr_terms(x, params.chi)


def kerr_jacobian(x_hat, params):
    x = _check_dim(x_hat, params.n_modes)
    return _kerr_linear(params) + _kerr_blocks(x, params.chi)


# ---------------------------------------------------------------------------
# Squeezed cavity with homodyne and counting outputs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CountingParams:
    """Squeezed cavity ``H = i(eta* a^2 - eta a^dag^2)`` behind a beam splitter.

    The initial state is ``|n> + |alpha>`` (normalized), defined on ``basis``
    levels; ``n`` defaults to ``basis // 2`` and ``alpha`` to
    ``sqrt(basis/2) exp(i pi/4)``. ``intensity_floor`` bounds the counting
    variance ``R_22`` away from zero in the filter.
    """

    gamma: float = 2.0
    eta: complex = 0.25
    r: float = math.sqrt(0.5)
    basis: int = 16
    n: int = None
    alpha: complex = None
    intensity_floor: float = 0.05
    zeta: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0.0 <= self.r <= 1.0:
            raise ValueError("beam splitter amplitude r must lie in [0, 1]")
        if self.basis < 8:
            raise ValueError("basis must be >= 8")
        if not self.intensity_floor > 0:
            raise ValueError("intensity_floor must be positive")
        object.__setattr__(self, "eta", complex(self.eta))
        if self.n is None:
            object.__setattr__(self, "n", self.basis // 2)
        if self.alpha is None:
            object.__setattr__(self, "alpha", math.sqrt(self.basis / 2) * np.exp(1j * math.pi / 4))
        object.__setattr__(self, "alpha", complex(self.alpha))
        if not 0 <= self.n < self.basis:
            raise ValueError(f"initial Fock level {self.n} outside basis {self.basis}")


def squeezing_matrix(eta):
    """``M`` with ``x^T M x / 2 = i(eta* a^2 - eta a^dag^2)`` for one mode."""
    er, ei = eta.real, eta.imag
    return np.array([[2.0 * ei, -2.0 * er], [-2.0 * er, -2.0 * ei]])


def counting_coupling(params):
    """Composite coupling rows ``C`` (2 x 2) and the scattering matrix."""
    S = beam_splitter(params.r)
    c0 = mode_coupling(1, math.sqrt(params.gamma))
    C_in = np.vstack([c0, np.zeros_like(c0)])
    return S @ C_in, S


# ---------------------------------------------------------------------------
# Scenario bundle
# ---------------------------------------------------------------------------

@dataclass
class Scenario:
    """Everything needed to simulate a scenario and filter its records.

    ``observables`` maps ``q0, p0, q1, ...`` to operators on ``slh.space``;
    ``x0`` holds their initial expectations. ``rebuild(basis)`` returns the
    same physical scenario on another truncation.
    """

    name: str
    params: object
    slh: SLHTriple
    channels: tuple
    model: FilterModel
    observables: dict
    rho0: np.ndarray
    x0: np.ndarray
    P0: np.ndarray
    offset: np.ndarray
    robust_default: bool
    builder: Callable = field(repr=False, default=None)

    @property
    def basis(self):
        return self.slh.space.mode_dims[0]

    def rebuild(self, basis):
        if basis == self.basis:
            return self
        return self.builder(self.params, basis=basis)

    def initial_estimate(self, zeta=None):
        z = getattr(self.params, "zeta", 0.0) if zeta is None else zeta
        return self.x0 + z * self.offset

    def initial_covariance(self):
        """Symmetrized covariance of the observables in ``rho0``."""
        X = list(self.observables.values())
        C = np.empty((len(X), len(X)))
        for i, A in enumerate(X):
            for j, B in enumerate(X):
                C[i, j] = ops.expectation(self.rho0, 0.5 * (A @ B + B @ A)) - self.x0[i] * self.x0[j]
        return 0.5 * (C + C.T)

    def initial_filter_covariance(self, p0=None):
        """``P0`` for a filter: the scenario default, ``p0 * I``, or ``"state"``
        for the covariance of the initial state."""
        if p0 is None:
            return self.P0
        if p0 == "state":
            return self.initial_covariance()
        if not float(p0) > 0:
            raise ValueError(f"p0 must be positive or 'state', got {p0!r}")
        return float(p0) * np.eye(len(self.x0))

    def filter_model(self, kind):
        """Filter model for ``kind`` in ``{"qekf", "robust-qekf", "qkf-linearized"}``."""
        if kind in ("qekf", "robust-qekf"):
            return self.model
        if kind == "qkf-linearized":
            # the uncontrolled scenarios all relax to the vacuum, x* = 0
            return linearize(self.model, np.zeros(self.model.n), name=f"{self.name}-linearized")
        raise ValueError(f"unknown filter kind {kind!r}")


def _resize_ket(psi, dim):
    psi = np.asarray(psi, dtype=complex)
    out = np.zeros(dim, dtype=complex)
    k = min(dim, psi.size)
    out[:k] = psi[:k]
    norm = np.linalg.norm(out)
    if norm == 0:
        raise ValueError("state has no weight inside the target basis")
    return out / norm


def _displaced_thermal(dim, alpha, nbar):
    """``D(alpha) rho_th D(alpha)^dag`` on ``dim`` levels (built on a padded basis)."""
    if nbar == 0:
        return ops.ket2dm(ops.coherent_state(dim, alpha))
    big = dim + 24
    D = ops.displacement(big, alpha)
    rho = D @ ops.thermal_state(big, nbar) @ D.conj().T
    rho = rho[:dim, :dim]
    return ops.hermitize(rho / np.trace(rho).real)


def _observables(space):
    names = []
    for i in range(space.n_modes):
        names += [f"q{i}", f"p{i}"]
    return dict(zip(names, ops.quadrature_list(space)))


def _initial_means(rho, observables):
    return np.array([ops.expectation(rho, X) for X in observables.values()])


def _kerr_hamiltonian(params, space):
    d = space.total_dim
    H = np.zeros((d, d), dtype=complex)
    a = [ops.annihilation(space, i) for i in range(space.n_modes)]
    for ai in a:
        ad = ai.conj().T
        H += params.chi * ad @ ad @ ai @ ai
    g = params.coupling_matrix()
    for i in range(space.n_modes):
        for j in range(i + 1, space.n_modes):
            if g[i, j] > 0:
                H += 1j * math.sqrt(g[i, j]) * (a[j] @ a[i].conj().T - a[i] @ a[j].conj().T)
    return ops.hermitize(H)


def kerr_filter_model(params, name="kerr"):
    n = params.n_modes
    C = mode_coupling(n, math.sqrt(params.gamma))
    A = _kerr_linear(params)
    chi = params.chi
    Hm = 2.0 * np.real(C)
    G = noise_gain(C, np.eye(n))
    Q, R, S = ito_covariances(G, np.eye(n, dtype=complex))
    return FilterModel(
        n=2 * n,
        m=n,
        f=lambda x: A @ x + _kerr_terms(np.asarray(x, dtype=float), chi),
        F=lambda x: A + _kerr_blocks(np.asarray(x, dtype=float), chi),
        h=lambda x: Hm @ x,
        H=lambda x: Hm,
        Q=lambda x: Q,
        R=lambda x: R,
        S=lambda x: S,
        name=name,
    )


def build_kerr(params, basis=None, name="kerr"):
    """Kerr cavities: ``H = sum chi a^dag^2 a^2 + H_int``, ``L_i = sqrt(gamma) a_i``."""
    basis = params.basis if basis is None else basis
    space = ops.FockSpace.uniform(basis, params.n_modes)
    L = tuple(math.sqrt(params.gamma) * ops.annihilation(space, i) for i in range(params.n_modes))
    slh = SLHTriple(np.eye(params.n_modes), L, _kerr_hamiltonian(params, space), space)
    channels = tuple(MeasurementChannel(HOMODYNE, i) for i in range(params.n_modes))
    rho_modes = [_displaced_thermal(basis, a0, params.nbar0) for a0 in params.alpha0]
    rho0 = rho_modes[0]
    for r in rho_modes[1:]:
        rho0 = np.kron(rho0, r)
    observables = _observables(space)
    return Scenario(
        name=name,
        params=params,
        slh=slh,
        channels=channels,
        model=kerr_filter_model(params, name),
        observables=observables,
        rho0=rho0,
        x0=_initial_means(rho0, observables),
        P0=(params.nbar0 + 0.5) * np.eye(2 * params.n_modes),
        offset=offset_direction(params.n_modes),
        robust_default=False,
        builder=lambda p, basis=None: build_kerr(p, basis, name),
    )


def linear_params(**kwargs):
    """Single-mode, Kerr-free parameters (``chi = 0``)."""
    kwargs.setdefault("n_modes", 1)
    kwargs["chi"] = 0.0
    return KerrParams(**kwargs)


def build_linear(params, basis=None):
    if params.chi != 0:
        raise ValueError("the linear scenario needs chi = 0")
    return build_kerr(params, basis, name="linear")


def counting_filter_model(params):
    C, Ssc = counting_coupling(params)
    A = linear_drift_matrix(squeezing_matrix(params.eta), C)
    G = noise_gain(C, Ssc)
    Q = np.real(G.conj() @ G.T)
    Q = 0.5 * (Q + Q.T)
    c_hom, c_cnt = C[0], C[1]
    floor = params.intensity_floor
    h_hom = 2.0 * np.real(c_hom)

    def lm(x):
        ell = c_cnt @ x
        E = np.diag([1.0, 0.0]).astype(complex)
        N = np.diag([0.0, 1.0]).astype(complex)
        return (E + N * ell) @ np.conj(Ssc)

    def h(x):
        return np.array([h_hom @ x, abs(c_cnt @ x) ** 2])

    def H(x):
        return np.vstack([h_hom, 2.0 * np.real(np.conj(c_cnt @ x) * c_cnt)])

    def R(x):
        _, Rx, _ = ito_covariances(G, lm(x))
        Rx[1, 1] = max(Rx[1, 1], floor)
        return Rx

    def S(x):
        return ito_covariances(G, lm(x))[2]

    return FilterModel(
        n=2, m=2, f=lambda x: A @ x, F=lambda x: A, h=h, H=H,
        Q=lambda x: Q, R=R, S=S, name="counting",
    )


def build_counting(params, basis=None):
    """Cavity ``G1 = (1, sqrt(gamma) a, H)`` joined with vacuum ``G2 = (1, 0, 0)``
    and passed through a beam splitter ``G3``: ``G = (G1 + G2) |> G3``.

    Output 0 is detected by homodyne, output 1 by photon counting.
    """
    basis = params.basis if basis is None else basis
    space = ops.FockSpace.uniform(basis)
    a = ops.annihilation(space)
    ad = a.conj().T
    eta = params.eta
    H = ops.hermitize(1j * (np.conj(eta) * a @ a - eta * ad @ ad))
    G1 = SLHTriple(np.eye(1), (math.sqrt(params.gamma) * a,), H, space)
    G2 = SLHTriple.trivial(space)
    G3 = SLHTriple(beam_splitter(params.r), (np.zeros_like(a),) * 2, np.zeros_like(a), space)
    slh = series(G3, concatenate(G1, G2))
    channels = (MeasurementChannel(HOMODYNE, 0), MeasurementChannel(COUNTING, 1))
    # the initial state lives on the scenario basis and is padded or cut elsewhere
    psi = ops.superpose(
        [0.5, 0.5],
        [ops.fock_state(params.basis, params.n),
         ops.coherent_state(params.basis, params.alpha, tail_tol=math.inf)],
    )
    rho0 = ops.ket2dm(_resize_ket(psi, basis))
    observables = _observables(space)
    return Scenario(
        name="counting",
        params=params,
        slh=slh,
        channels=channels,
        model=counting_filter_model(params),
        observables=observables,
        rho0=rho0,
        x0=_initial_means(rho0, observables),
        P0=0.5 * np.eye(2),
        offset=offset_direction(1),
        robust_default=True,
        builder=build_counting,
    )


BUILDERS = {"kerr": build_kerr, "counting": build_counting, "linear": build_linear}
PARAMS = {"kerr": KerrParams, "counting": CountingParams, "linear": linear_params}


def build(name, params=None, basis=None):
    """Build scenario ``name`` from a parameter object or a dict of fields."""
    if name not in BUILDERS:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(BUILDERS)}")
    if params is None or isinstance(params, dict):
        params = PARAMS[name](**(params or {}))
    return BUILDERS[name](params, basis)
