"""Dense operators on a truncated multi-mode Fock space.

Conventions used throughout the package:

* hbar = 1.
* Quadratures are ``q = (a + a^dag)/sqrt(2)`` and ``p = (a - a^dag)/(i sqrt(2))``,
  so that ``a = (q + i p)/sqrt(2)``, ``[q, p] = i`` and the vacuum variance of
  each quadrature is 1/2.
* Operators and density matrices are plain ``complex128`` numpy arrays.

Truncation breaks the canonical commutation relation on the highest Fock
level, so identities involving ladder operators only hold on the "interior"
block (all levels except the top one of each mode).
"""

import math
import warnings
from dataclasses import dataclass
from functools import reduce

import numpy as np


class TruncationWarning(UserWarning):
    """A state has non-negligible weight beyond the truncated basis."""


@dataclass(frozen=True)
class FockSpace:
    """Tensor product of truncated single-mode Fock spaces.

    Parameters
    ----------
    mode_dims : tuple of int
        Truncation dimension of every mode, each at least 2.
    """

    mode_dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in np.atleast_1d(self.mode_dims))
        if not dims:
            raise ValueError("a Fock space needs at least one mode")
        if any(d < 2 for d in dims):
            raise ValueError(f"every mode dimension must be >= 2, got {dims}")
        object.__setattr__(self, "mode_dims", dims)

    @classmethod
    def uniform(cls, dim: int, n_modes: int = 1) -> "FockSpace":
        return cls((dim,) * n_modes)

    @property
    def n_modes(self) -> int:
        return len(self.mode_dims)

    @property
    def total_dim(self) -> int:
        return math.prod(self.mode_dims)


def _check_mode(space, mode):
    if not 0 <= mode < space.n_modes:
        raise IndexError(f"mode {mode} out of range for {space.n_modes} mode(s)")


def identity(space):
    return np.eye(space.total_dim, dtype=complex)


def tensor_embed(op, mode, space):
    """Embed a single-mode operator into ``space`` at position ``mode``.

    The result is the Kronecker product with identities on all other modes,
    ordered so that mode 0 is the most significant tensor factor.
    """
    _check_mode(space, mode)
    op = np.asarray(op, dtype=complex)
    d = space.mode_dims[mode]
    if op.shape != (d, d):
        raise ValueError(f"operator shape {op.shape} does not match mode dimension {d}")
    factors = [np.eye(n, dtype=complex) for n in space.mode_dims]
    factors[mode] = op
    return reduce(np.kron, factors)


def _single_annihilation(dim):
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


def annihilation(space, mode=0):
    """Annihilation operator of ``mode``: ``a|n> = sqrt(n)|n-1>``."""
    _check_mode(space, mode)
    return tensor_embed(_single_annihilation(space.mode_dims[mode]), mode, space)


def creation(space, mode=0):
    return annihilation(space, mode).conj().T


def number(space, mode=0):
    _check_mode(space, mode)
    n = np.diag(np.arange(space.mode_dims[mode], dtype=float)).astype(complex)
    return tensor_embed(n, mode, space)


def quadratures(space, mode=0):
    """Return the quadrature pair ``(q, p)`` of ``mode``."""
    a = annihilation(space, mode)
    ad = a.conj().T
    q = (a + ad) / math.sqrt(2.0)
    p = (a - ad) / (1j * math.sqrt(2.0))
    return q, p


def quadrature_list(space):
    """Quadratures of all modes ordered ``[q_0, p_0, q_1, p_1, ...]``."""
    ops = []
    for mode in range(space.n_modes):
        ops.extend(quadratures(space, mode))
    return ops


def interior_mask(space):
    """Boolean mask of basis states below the top level in every mode."""
    levels = np.indices(space.mode_dims).reshape(space.n_modes, -1)
    top = np.array(space.mode_dims)[:, None] - 1
    return np.all(levels < top, axis=0)


def interior(op, space):
    """Restrict a matrix to the interior block of ``space``."""
    keep = interior_mask(space)
    return np.asarray(op)[np.ix_(keep, keep)]


def commutator(A, B):
    return A @ B - B @ A


def _check_square(*ops):
    dims = {np.shape(op) for op in ops}
    if len(dims) != 1:
        raise ValueError(f"operator dimensions do not match: {sorted(dims)}")
    (shape,) = dims
    if len(shape) != 2 or shape[0] != shape[1]:
        raise ValueError(f"operators must be square, got shape {shape}")


def lindblad_heisenberg(X, H, Ls):
    r"""Heisenberg-picture Lindblad generator.

    .. math::
        \mathcal{L}(X) = -i[X, H] + \sum_k \left(L_k^\dagger X L_k
        - \tfrac12 L_k^\dagger L_k X - \tfrac12 X L_k^\dagger L_k\right)
    """
    Ls = list(Ls)
    _check_square(X, H, *Ls)
    out = -1j * commutator(X, H)
    for L in Ls:
        Ld = L.conj().T
        LdL = Ld @ L
        out += Ld @ X @ L - 0.5 * (LdL @ X + X @ LdL)
    return out


def lindblad_schrodinger(rho, H, Ls):
    r"""Schrödinger-picture (adjoint) Lindblad generator.

    .. math::
        \mathcal{L}^*(\rho) = -i[H, \rho] + \sum_k \left(L_k \rho L_k^\dagger
        - \tfrac12 L_k^\dagger L_k \rho - \tfrac12 \rho L_k^\dagger L_k\right)
    """
    Ls = list(Ls)
    _check_square(rho, H, *Ls)
    out = -1j * commutator(H, rho)
    for L in Ls:
        Ld = L.conj().T
        LdL = Ld @ L
        out += L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
    return out


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------

def fock_state(dim, n):
    """Number state ``|n>`` as a ket of length ``dim``."""
    if not 0 <= n < dim:
        raise ValueError(f"Fock level {n} outside basis of dimension {dim}")
    psi = np.zeros(dim, dtype=complex)
    psi[n] = 1.0
    return psi


def coherent_state(dim, alpha, tail_tol=1e-6):
    """Truncated, renormalized coherent state ``|alpha>``.

    Amplitudes are the exact Poisson amplitudes on levels ``0..dim-1``.
    A :class:`TruncationWarning` is issued when the discarded probability
    mass exceeds ``tail_tol``.
    """
    alpha = complex(alpha)
    n = np.arange(dim)
    if alpha == 0:
        return fock_state(dim, 0)
    # log-space amplitudes avoid overflow of alpha**n / sqrt(n!)
    log_fact = np.array([math.lgamma(k + 1) for k in n])
    mag = np.exp(-0.5 * abs(alpha) ** 2 + n * math.log(abs(alpha)) - 0.5 * log_fact)
    psi = mag * np.exp(1j * np.angle(alpha) * n)
    tail = max(0.0, 1.0 - float(np.sum(np.abs(psi) ** 2)))
    if tail > tail_tol:
        warnings.warn(
            f"coherent state |alpha|^2={abs(alpha) ** 2:.3g} loses {tail:.2e} "
            f"probability beyond dimension {dim}",
            TruncationWarning,
            stacklevel=2,
        )
    return psi / np.linalg.norm(psi)


def superpose(weights, states):
    """Normalized superposition ``sum_i w_i |psi_i>``."""
    psi = sum(complex(w) * np.asarray(s, dtype=complex) for w, s in zip(weights, states))
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValueError("superposition has zero norm")
    return psi / norm


def product_state(kets):
    """Tensor product of single-mode kets (mode 0 first)."""
    return reduce(np.kron, [np.asarray(k, dtype=complex) for k in kets])


def ket2dm(psi):
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def thermal_state(dim, nbar):
    """Truncated thermal density matrix with mean occupation ``nbar``."""
    if nbar < 0:
        raise ValueError("nbar must be non-negative")
    if nbar == 0:
        return ket2dm(fock_state(dim, 0))
    x = nbar / (nbar + 1.0)
    w = x ** np.arange(dim)
    return np.diag(w / w.sum()).astype(complex)


def displacement(dim, alpha):
    """Displacement operator ``exp(alpha a^dag - alpha* a)`` on one mode.

    Computed on the truncated matrices, so it is only accurate on levels well
    below ``dim``.
    """
    from scipy.linalg import expm

    a = _single_annihilation(dim)
    return expm(alpha * a.conj().T - np.conj(alpha) * a)


def expectation(rho, X):
    """``tr(rho X)``; ``rho`` may be a density matrix or a ket.

    Hermitian ``X`` gives a float; an imaginary part larger than 1e-10 then
    raises ``ValueError``.
    """
    rho = np.asarray(rho)
    X = np.asarray(X)
    if rho.ndim == 1:
        if X.shape != (rho.size, rho.size):
            raise ValueError(f"operator shape {X.shape} does not match state size {rho.size}")
        value = np.vdot(rho, X @ rho)
    else:
        if rho.shape != X.shape:
            raise ValueError(f"shapes {rho.shape} and {X.shape} do not match")
        value = np.sum(rho * X.T)
    if np.allclose(X, X.conj().T, rtol=0.0, atol=1e-12):
        if abs(value.imag) > 1e-10:
            raise ValueError(f"expectation of Hermitian operator has imaginary part {value.imag:.3e}")
        return float(value.real)
    return complex(value)


def hermitize(M):
    return 0.5 * (M + M.conj().T)


def check_density(rho, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-8):
    """Raise ``ValueError`` if ``rho`` is not a valid density matrix."""
    rho = np.asarray(rho)
    if not np.all(np.isfinite(rho)):
        raise ValueError("density matrix has non-finite entries")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise ValueError(f"density matrix not Hermitian (deviation {herm:.2e})")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"density matrix trace {tr!r} differs from 1")
    min_eig = np.linalg.eigvalsh(hermitize(rho))[0]
    if min_eig < -eig_tol:
        raise ValueError(f"density matrix has negative eigenvalue {min_eig:.2e}")
    return rho
