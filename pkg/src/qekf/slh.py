"""SLH models of open quantum systems and their network products.

Only scalar ("single valued") scattering matrices are supported: every entry
of ``S`` is a complex number times the identity on the system space.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .operators import FockSpace


@dataclass(frozen=True)
class SLHTriple:
    """Open system with ``m`` field channels.

    Attributes
    ----------
    S : ndarray, shape (m, m)
        Unitary scattering matrix of complex scalars.
    L : tuple of ndarray
        ``m`` coupling operators on the system space.
    H : ndarray
        Hermitian system Hamiltonian.
    space : FockSpace
    """

    S: np.ndarray
    L: tuple
    H: np.ndarray
    space: FockSpace

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.S, dtype=complex))
        L = tuple(np.asarray(op, dtype=complex) for op in self.L)
        H = np.asarray(self.H, dtype=complex)
        d = self.space.total_dim
        m = len(L)
        if S.shape != (m, m):
            raise ValueError(f"S has shape {S.shape} but there are {m} coupling operators")
        if np.max(np.abs(S @ S.conj().T - np.eye(m))) > 1e-10:
            raise ValueError("scattering matrix is not unitary")
        for op in L + (H,):
            if op.shape != (d, d):
                raise ValueError(f"operator shape {op.shape} does not match space dimension {d}")
        if np.max(np.abs(H - H.conj().T), initial=0.0) > 1e-10:
            raise ValueError("Hamiltonian is not Hermitian")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "H", H)

    @property
    def channels(self) -> int:
        return len(self.L)

    @classmethod
    def trivial(cls, space, channels=1):
        """The identity component ``(I, 0, 0)``."""
        d = space.total_dim
        zero = np.zeros((d, d), dtype=complex)
        return cls(np.eye(channels), (zero,) * channels, zero, space)


def _same_space(G1, G2):
    if G1.space != G2.space:
        raise ValueError(f"system spaces differ: {G1.space} vs {G2.space}")


def concatenate(G1, G2):
    """Concatenation product: parallel channels on the same system."""
    _same_space(G1, G2)
    return SLHTriple(block_diag(G1.S, G2.S), G1.L + G2.L, G1.H + G2.H, G1.space)


def series(G_downstream, G_upstream):
    """Series product: the outputs of ``G_upstream`` feed ``G_downstream``.

    ``S = S2 S1``, ``L = L2 + S2 L1`` and
    ``H = H1 + H2 + Im(L2^dag S2 L1)`` with ``Im(A) = (A - A^dag)/(2i)``.
    """
    _same_space(G_downstream, G_upstream)
    if G_downstream.channels != G_upstream.channels:
        raise ValueError(
            f"channel counts differ: {G_downstream.channels} vs {G_upstream.channels}"
        )
    S1, L1, H1 = G_upstream.S, G_upstream.L, G_upstream.H
    S2, L2, H2 = G_downstream.S, G_downstream.L, G_downstream.H
    m = len(L1)
    L = tuple(L2[i] + sum(S2[i, j] * L1[j] for j in range(m)) for i in range(m))
    cross = sum(
        L2[i].conj().T @ (S2[i, j] * L1[j]) for i in range(m) for j in range(m)
    )
    H = H1 + H2 + (cross - cross.conj().T) / 2j
    return SLHTriple(S2 @ S1, L, H, G_upstream.space)


def beam_splitter(r):
    """``[[sqrt(1-r^2), i r], [i r, sqrt(1-r^2)]]`` for ``0 <= r <= 1``."""
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"beam splitter amplitude r={r} outside [0, 1]")
    t = np.sqrt(1.0 - r * r)
    return np.array([[t, 1j * r], [1j * r, t]], dtype=complex)
