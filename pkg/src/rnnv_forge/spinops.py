"""Operator algebra for a pair of spin-1/2 nuclei.

Everything lives in the 4-dimensional Zeeman product basis, ordered
``|aa>, |ab>, |ba>, |bb>`` (``a`` = alpha = m_z +1/2). All operators are
plain ``numpy`` complex arrays of shape ``(4, 4)``; state vectors have
shape ``(4,)``. Arrays returned by this module are marked read-only so
they can be shared between sweep workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SQRT2 = math.sqrt(2.0)

_SIGMA = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex) / 2,
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex) / 2,
    "z": np.array([[1, 0], [0, -1]], dtype=complex) / 2,
    "plus": np.array([[0, 1], [0, 0]], dtype=complex),
    "minus": np.array([[0, 0], [1, 0]], dtype=complex),
}

AXES = ("x", "y", "z", "plus", "minus")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EulerAngles:
    """Euler angles (rad) of ``R_z(alpha) R_y(beta) R_z(gamma)``."""

    alpha: float
    beta: float
    gamma: float


@lru_cache(maxsize=None)
def angular_momentum(spin_index: int, axis: str) -> np.ndarray:
    """Single-spin operator ``I_{k,axis}`` embedded in the two-spin space."""
    if spin_index not in (1, 2):
        raise ValueError(f"spin_index must be 1 or 2, got {spin_index!r}")
    if axis not in _SIGMA:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    eye = np.eye(2, dtype=complex)
    op = np.kron(_SIGMA[axis], eye) if spin_index == 1 else np.kron(eye, _SIGMA[axis])
    return _frozen(op)


@lru_cache(maxsize=None)
def total(axis: str) -> np.ndarray:
    """Total spin operator ``F_axis = I_{1,axis} + I_{2,axis}``."""
    return _frozen(angular_momentum(1, axis) + angular_momentum(2, axis))


@lru_cache(maxsize=None)
def identity() -> np.ndarray:
    return _frozen(np.eye(4))


@lru_cache(maxsize=None)
def exchange() -> np.ndarray:
    """Particle exchange operator (12), swapping ``|ab>`` and ``|ba>``."""
    p = np.zeros((4, 4), dtype=complex)
    for i, j in ((0, 0), (1, 2), (2, 1), (3, 3)):
        p[i, j] = 1
    return _frozen(p)


@lru_cache(maxsize=None)
def scalar_coupling() -> np.ndarray:
    """``I_1 . I_2`` (dimensionless)."""
    return _frozen(sum(angular_momentum(1, a) @ angular_momentum(2, a) for a in "xyz"))


@lru_cache(maxsize=None)
def singlet_triplet_states() -> dict[str, np.ndarray]:
    """Singlet and triplet kets keyed ``S0, Tp1, T0, Tm1``."""
    s = 1 / SQRT2
    states = {
        "S0": np.array([0, s, -s, 0], dtype=complex),
        "Tp1": np.array([1, 0, 0, 0], dtype=complex),
        "T0": np.array([0, s, s, 0], dtype=complex),
        "Tm1": np.array([0, 0, 0, 1], dtype=complex),
    }
    for v in states.values():
        v.setflags(write=False)
    return states


# Triplet label for each magnetic quantum number.
TRIPLET = {1: "Tp1", 0: "T0", -1: "Tm1"}


def ket_bra(a: str, b: str) -> np.ndarray:
    """``|a><b|`` for singlet/triplet labels."""
    st = singlet_triplet_states()
    return np.outer(st[a], st[b].conj())


@lru_cache(maxsize=None)
def st_basis() -> np.ndarray:
    """Unitary whose columns are ``S0, Tp1, T0, Tm1`` (Zeeman -> ST basis)."""
    st = singlet_triplet_states()
    return _frozen(np.column_stack([st[k] for k in ("S0", "Tp1", "T0", "Tm1")]))


def _check_m(m: int) -> None:
    if m not in (-1, 0, 1):
        raise ValueError(f"component index must be -1, 0 or +1, got {m!r}")


@lru_cache(maxsize=None)
def tensor_gerade(m: int) -> np.ndarray:
    """Exchange-symmetric rank-1 tensor built from total spin operators."""
    _check_m(m)
    if m == 1:
        op = -total("plus") / SQRT2
    elif m == 0:
        op = total("z")
    else:
        op = total("minus") / SQRT2
    return _frozen(op)


@lru_cache(maxsize=None)
def tensor_ungerade(m: int) -> np.ndarray:
    """Exchange-antisymmetric rank-1 tensor ``|T_m><S0|``."""
    _check_m(m)
    return _frozen(ket_bra(TRIPLET[m], "S0"))


@lru_cache(maxsize=None)
def single_transition(axis: str, branch: str) -> np.ndarray:
    """Fictitious spin-1/2 operators of the ``S0 <-> T_{+1}`` or ``S0 <-> T_{-1}`` transition."""
    if branch not in ("plus", "minus"):
        raise ValueError(f"branch must be 'plus' or 'minus', got {branch!r}")
    t = "Tp1" if branch == "plus" else "Tm1"
    up, down = ket_bra(t, "S0"), ket_bra("S0", t)
    if axis == "x":
        op = (up + down) / 2
    elif axis == "y":
        op = (up - down) / 2j
    elif axis == "z":
        op = (ket_bra(t, t) - ket_bra("S0", "S0")) / 2
    else:
        raise ValueError(f"axis must be x, y or z, got {axis!r}")
    return _frozen(op)


def rotation_axis(theta: float, axis: str) -> np.ndarray:
    """Total-spin rotation ``exp(-i theta F_axis)`` for ``axis`` in x, y, z.

    Closed form: the two-spin rotation is the Kronecker square of the
    single-spin SU(2) matrix.
    """
    u = su2_rotation_axis(theta, axis)
    return np.kron(u, u)


def su2_rotation_axis(theta: float, axis: str) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    if axis == "x":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if axis == "y":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if axis == "z":
        return np.array([[c - 1j * s, 0], [0, c + 1j * s]], dtype=complex)
    raise ValueError(f"axis must be x, y or z, got {axis!r}")


def su2_rotation(omega: EulerAngles) -> np.ndarray:
    return (
        su2_rotation_axis(omega.alpha, "z")
        @ su2_rotation_axis(omega.beta, "y")
        @ su2_rotation_axis(omega.gamma, "z")
    )


def rotation(omega: EulerAngles) -> np.ndarray:
    """``R_z(alpha) R_y(beta) R_z(gamma)`` on the two-spin space."""
    u = su2_rotation(omega)
    return np.kron(u, u)


def su2_pulse(theta: float, phase: float) -> np.ndarray:
    """Single-spin rotation by ``theta`` about ``(cos phase, sin phase, 0)``."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    e = complex(math.cos(phase), math.sin(phase))
    return np.array([[c, -1j * s * e.conjugate()], [-1j * s * e, c]], dtype=complex)


def _nearest(angle: float, ref: float) -> float:
    return angle + 2 * math.pi * round((ref - angle) / (2 * math.pi))


def euler_angles(u: np.ndarray, previous: EulerAngles | None = None, gimbal_tol: float = 1e-9) -> EulerAngles:
    """Euler angles of an SU(2) matrix in the ``R_z R_y R_z`` convention.

    ``beta`` lies in ``[0, pi]``. Near ``beta = 0`` or ``pi`` only one
    combination of ``alpha`` and ``gamma`` is defined; ``gamma`` is then
    held at its ``previous`` value (or 0) and the rest is assigned to
    ``alpha``. With ``previous`` given, ``alpha`` and ``gamma`` are moved by
    multiples of ``2 pi`` to the values closest to it, so that trajectories
    are continuous.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {u.shape}")
    a, b = abs(u[1, 1]), abs(u[1, 0])
    beta = 2 * math.atan2(b, a)
    if b < gimbal_tol:
        gamma = previous.gamma if previous else 0.0
        alpha = 2 * float(np.angle(u[1, 1])) - gamma
    elif a < gimbal_tol:
        gamma = previous.gamma if previous else 0.0
        alpha = 2 * float(np.angle(u[1, 0])) + gamma
    else:
        p11, p10 = float(np.angle(u[1, 1])), float(np.angle(u[1, 0]))
        alpha, gamma = p11 + p10, p11 - p10
    if previous is not None:
        gamma = _nearest(gamma, previous.gamma)
        alpha = _nearest(alpha, previous.alpha)
    return EulerAngles(alpha, beta, gamma)


def wigner_d1(mu_prime: int, mu: int, beta: float) -> float:
    """Reduced rank-1 Wigner element ``d^1_{mu' mu}(beta)``."""
    if mu_prime not in (-1, 0, 1) or mu not in (-1, 0, 1):
        raise ValueError(f"indices must lie in {{-1, 0, 1}}, got ({mu_prime}, {mu})")
    c, s = math.cos(beta), math.sin(beta)
    table = {
        (1, 1): (1 + c) / 2,
        (1, 0): -s / SQRT2,
        (1, -1): (1 - c) / 2,
        (0, 1): s / SQRT2,
        (0, 0): c,
        (0, -1): -s / SQRT2,
        (-1, 1): (1 - c) / 2,
        (-1, 0): s / SQRT2,
        (-1, -1): (1 + c) / 2,
    }
    return table[(mu_prime, mu)]


def wigner_D1(mu_prime: int, mu: int, omega: EulerAngles) -> complex:
    """Full rank-1 Wigner element ``D^1_{mu' mu}(alpha, beta, gamma)``."""
    return (
        np.exp(-1j * mu_prime * omega.alpha)
        * wigner_d1(mu_prime, mu, omega.beta)
        * np.exp(-1j * mu * omega.gamma)
    )


def is_hermitian(op: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(op - op.conj().T)) <= tol)


def is_unitary(op: np.ndarray, tol: float = 1e-10) -> bool:
    return bool(np.max(np.abs(op.conj().T @ op - np.eye(op.shape[0]))) <= tol)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def hs_inner(a: np.ndarray, b: np.ndarray) -> complex:
    """Hilbert-Schmidt inner product ``Tr(a^dagger b)``."""
    return complex(np.trace(a.conj().T @ b))
