"""Operator space: dense operators, vectorization, inner products and superoperators.

Vectorization is row-wise: ``vec(A) = A.reshape(-1)`` in C order, so that
``vec(A @ X @ B) = kron(A, B.T) @ vec(X)``.

The adjoint Lindbladian is stored in the form that gets tridiagonalized,

    Lo_dag(O) = [H, O] - i D(O),   D(O) = sum_k mu_k (+/- L_k^dag O L_k - 1/2 {L_k^dag L_k, O}),

so that Heisenberg evolution reads ``dO/dt = i Lo_dag(O)``. With all rates zero,
``Lo_dag`` is the Liouvillian ``[H, .]``.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import majorana

HERMITICITY_TOL = 1e-10
MATRIX_FREE_DIM = 128


def as_matrix(A) -> np.ndarray:
    if isinstance(A, DenseOperator):
        return A.entries
    M = np.asarray(A, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    return M


def hermitian_defect(A) -> float:
    M = as_matrix(A)
    scale = max(np.max(np.abs(M)), 1.0) if M.size else 1.0
    return float(np.max(np.abs(M - M.conj().T)) / scale) if M.size else 0.0


def require_hermitian(A, tol: float = HERMITICITY_TOL, name: str = "operator") -> np.ndarray:
    M = as_matrix(A)
    if hermitian_defect(M) > tol:
        raise ValueError(f"{name} is not Hermitian (defect {hermitian_defect(M):.2e})")
    return M


@dataclass(frozen=True)
class DenseOperator:
    """A finite d x d complex matrix with an optional role tag."""

    entries: np.ndarray
    tag: str = ""

    def __post_init__(self):
        M = np.array(self.entries, dtype=complex)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
            raise ValueError(f"expected a non-empty square matrix, got shape {M.shape}")
        if not np.all(np.isfinite(M)):
            raise ValueError("entries must be finite")
        M.flags.writeable = False
        object.__setattr__(self, "entries", M)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def is_hermitian(self, tol: float = HERMITICITY_TOL) -> bool:
        return hermitian_defect(self.entries) <= tol

    def dagger(self) -> "DenseOperator":
        return DenseOperator(self.entries.conj().T, self.tag)

    def save(self, path) -> None:
        """Write ``dim tag`` then one row per line of interleaved re/im values."""
        d = self.dim
        flat = np.empty((d, 2 * d))
        flat[:, 0::2] = self.entries.real
        flat[:, 1::2] = self.entries.imag
        buf = io.StringIO()
        buf.write(f"{d} {self.tag or '-'}\n")
        np.savetxt(buf, flat, delimiter=",", fmt="%.17g")
        Path(path).write_text(buf.getvalue())

    @classmethod
    def load(cls, path) -> "DenseOperator":
        text = Path(path).read_text().splitlines()
        head = text[0].split()
        d, tag = int(head[0]), head[1] if len(head) > 1 else "-"
        flat = np.loadtxt(text[1:], delimiter=",", ndmin=2)
        if flat.shape != (d, 2 * d):
            raise ValueError("matrix file body does not match its header")
        return cls(flat[:, 0::2] + 1j * flat[:, 1::2], "" if tag == "-" else tag)


# --- vectorization -----------------------------------------------------------

UNNORMALIZED = "unnormalized"
DIVIDED = "divided_by_sqrt_trace_identity"


@dataclass(frozen=True)
class VectorizedOperator:
    dim: int
    amplitudes: np.ndarray
    norm_convention: str = UNNORMALIZED

    def __post_init__(self):
        if self.amplitudes.shape != (self.dim * self.dim,):
            raise ValueError("amplitudes must have length dim**2")


def vectorize(A, convention: str = UNNORMALIZED) -> VectorizedOperator:
    M = as_matrix(A)
    if not np.all(np.isfinite(M)):
        raise ValueError("entries must be finite")
    d = M.shape[0]
    v = M.reshape(-1).copy()
    if convention == DIVIDED:
        v /= np.sqrt(d)
    elif convention != UNNORMALIZED:
        raise ValueError(f"unknown convention {convention!r}")
    return VectorizedOperator(d, v, convention)


def devectorize(v: VectorizedOperator) -> np.ndarray:
    M = v.amplitudes.reshape(v.dim, v.dim).copy()
    if v.norm_convention == DIVIDED:
        M *= np.sqrt(v.dim)
    return M


# --- inner products ----------------------------------------------------------

@dataclass(frozen=True)
class InnerProductSpec:
    """Kinds: ``infinite``, ``wightman``, ``standard`` or ``g`` (sampled weight).

    For ``g`` the samples sit on a uniform grid over [0, beta], must be
    non-negative and symmetric under lambda -> beta - lambda, and average 1.
    """

    kind: str = "infinite"
    beta: float = 0.0
    g: tuple = ()

    def __post_init__(self):
        if self.kind not in ("infinite", "wightman", "standard", "g"):
            raise ValueError(f"unknown inner product kind {self.kind!r}")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.kind == "g":
            g = np.asarray(self.g, dtype=float)
            if g.size < 2 or np.any(g < 0):
                raise ValueError("g needs at least two non-negative samples")
            if not np.allclose(g, g[::-1], rtol=1e-10, atol=1e-12):
                raise ValueError("g must be symmetric under lambda -> beta - lambda")
            mean = np.trapezoid(g, dx=1.0 / (g.size - 1))
            if abs(mean - 1) > 1e-8:
                raise ValueError(f"g must average to 1 on [0, beta], got {mean}")

    @property
    def thermal(self) -> bool:
        return self.kind != "infinite" and self.beta > 0

    def frame(self, H) -> "ThermalFrame":
        return ThermalFrame.build(H, self)


INFINITE = InnerProductSpec()


def Wightman(beta: float) -> InnerProductSpec:
    return InnerProductSpec("wightman", beta)


def Standard(beta: float) -> InnerProductSpec:
    return InnerProductSpec("standard", beta)


def GWeighted(beta: float, g: Sequence[float]) -> InnerProductSpec:
    return InnerProductSpec("g", beta, tuple(float(x) for x in g))


@dataclass(frozen=True)
class ThermalFrame:
    """Eigenbasis of H with the inner-product weights W[n, m].

    In this basis ``(A|B) = sum_nm W[n, m] conj(A'[n, m]) B'[n, m]`` with
    ``A' = V^dag A V``, and the Liouvillian acts as ``omega * A'`` with
    ``omega[n, m] = E_n - E_m``.
    """

    energies: np.ndarray
    vectors: np.ndarray
    weights: np.ndarray
    sectors: np.ndarray | None = None

    @classmethod
    def build(cls, H, spec: InnerProductSpec, symmetry=None) -> "ThermalFrame":
        """``symmetry`` is a Hermitian operator commuting with H.

        Eigenvectors are then taken inside its eigenspaces, so near-degenerate
        levels from different sectors are never mixed by the solver.
        """
        M = require_hermitian(H, name="H")
        if symmetry is None:
            E, V = np.linalg.eigh(M)
            return cls(E, V, thermal_weights(E, spec))
        E, V, sec = symmetry_resolved_eigh(M, symmetry)
        return cls(E, V, thermal_weights(E, spec), sec)

    def sector_mask(self, Ap, tol: float = 1e-10) -> np.ndarray:
        """Entries of A' lying in sector blocks where A' is not negligible.

        Rounding in the frame change leaves ~1e-16 entries in blocks a
        symmetric operator cannot reach; masking them keeps sectors exactly
        decoupled under the elementwise Liouvillian.
        """
        if self.sectors is None:
            return np.ones(Ap.shape, dtype=bool)
        labels = np.unique(self.sectors)
        total = np.linalg.norm(Ap)
        mask = np.zeros(Ap.shape, dtype=bool)
        for i in labels:
            ri = self.sectors == i
            for j in labels:
                cj = self.sectors == j
                if np.linalg.norm(Ap[np.ix_(ri, cj)]) > tol * total:
                    mask[np.ix_(ri, cj)] = True
        return mask

    def to_frame(self, A) -> np.ndarray:
        return self.vectors.conj().T @ as_matrix(A) @ self.vectors

    def from_frame(self, Ap) -> np.ndarray:
        return self.vectors @ Ap @ self.vectors.conj().T

    @cached_property
    def gaps(self) -> np.ndarray:
        return self.energies[:, None] - self.energies[None, :]

    def inner(self, Ap, Bp) -> complex:
        return complex(np.sum(self.weights * Ap.conj() * Bp))


def symmetry_resolved_eigh(H, S, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Eigenpairs of H computed block by block in the eigenspaces of S.

    Returns energies, eigenvectors and the sector label of each eigenvector.
    """
    M, S = as_matrix(H), require_hermitian(S, name="symmetry")
    scale = max(np.linalg.norm(M), 1.0) * max(np.linalg.norm(S), 1.0)
    if np.linalg.norm(M @ S - S @ M) > tol * scale:
        raise ValueError("symmetry does not commute with H")
    s, U = np.linalg.eigh(S)
    cuts = np.flatnonzero(np.diff(s) > tol * max(1.0, np.abs(s).max())) + 1
    Es, Vs, labels = [], [], []
    for k, idx in enumerate(np.split(np.arange(s.size), cuts)):
        B = U[:, idx]
        e, v = np.linalg.eigh(B.conj().T @ M @ B)
        Es.append(e)
        Vs.append(B @ v)
        labels.append(np.full(e.size, k))
    E, V, lab = np.concatenate(Es), np.hstack(Vs), np.concatenate(labels)
    order = np.argsort(E, kind="stable")
    return E[order], V[:, order], lab[order]


def thermal_weights(E: np.ndarray, spec: InnerProductSpec) -> np.ndarray:
    d = E.size
    if not spec.thermal:
        return np.full((d, d), 1.0 / d)
    beta = spec.beta
    e = E - E.min()
    Z = np.sum(np.exp(-beta * e))
    En, Em = e[:, None], e[None, :]
    if spec.kind == "wightman":
        return np.exp(-beta * (En + Em) / 2) / Z
    if spec.kind == "standard":
        return (np.exp(-beta * Em) + np.exp(-beta * En)) / (2 * Z)
    g = np.asarray(spec.g)
    lam = np.linspace(0.0, beta, g.size)
    # (1/beta) int g(l) exp(-(beta-l) E_m - l E_n) dl
    integrand = g[:, None, None] * np.exp(-(beta - lam[:, None, None]) * Em[None] - lam[:, None, None] * En[None])
    return np.trapezoid(integrand, lam, axis=0) / (beta * Z)


def inner_product(A, B, spec: InnerProductSpec = INFINITE, H=None) -> complex:
    MA, MB = as_matrix(A), as_matrix(B)
    if MA.shape != MB.shape:
        raise ValueError("operator dimensions differ")
    if not spec.thermal:
        return complex(np.vdot(MA, MB) / MA.shape[0])
    if H is None:
        raise ValueError("thermal inner products need H")
    fr = ThermalFrame.build(H, spec)
    if fr.energies.size != MA.shape[0]:
        raise ValueError("H dimension does not match the operators")
    return fr.inner(fr.to_frame(MA), fr.to_frame(MB))


def norm(A, spec: InnerProductSpec = INFINITE, H=None) -> float:
    return float(np.sqrt(max(inner_product(A, A, spec, H).real, 0.0)))


# --- superoperators ----------------------------------------------------------

@dataclass(frozen=True)
class _Jump:
    matrix: np.ndarray
    rate: float
    perm: np.ndarray | None = None  # monomial form: L[i, perm[i]] = vals[i]
    vals: np.ndarray | None = None

    @cached_property
    def LdL(self) -> np.ndarray:
        return self.matrix.conj().T @ self.matrix

    @cached_property
    def inv(self) -> np.ndarray:
        out = np.empty_like(self.perm)
        out[self.perm] = np.arange(self.perm.size)
        return out


def _monomial(L: np.ndarray):
    nz = L != 0
    if not np.all(nz.sum(axis=1) == 1) or not np.all(nz.sum(axis=0) == 1):
        return None, None
    perm = np.argmax(nz, axis=1)
    return perm, L[np.arange(L.shape[0]), perm]


def _sandwich(j: _Jump, X: np.ndarray, adjoint_first: bool) -> np.ndarray:
    """L^dag X L if adjoint_first else L X L^dag."""
    if j.perm is None:
        L = j.matrix
        return L.conj().T @ X @ L if adjoint_first else L @ X @ L.conj().T
    p, v, inv = j.perm, j.vals, j.inv
    if adjoint_first:
        # (L^dag X L)[a, b] = conj(v[a']) X[a', b'] v[b'] with a' = inv[a], b' = inv[b]
        w = v[inv]
        return (w.conj()[:, None] * X[np.ix_(inv, inv)]) * w[None, :]
    # (L X L^dag)[a, b] = v[a] X[p[a], p[b]] conj(v[b])
    return (v[:, None] * X[np.ix_(p, p)]) * v.conj()[None, :]


class SuperOperator:
    """Liouvillian ``[H, .]`` or adjoint Lindbladian ``[H, .] - i D``.

    ``apply`` accepts a d x d matrix or a length-d**2 vector and returns the
    same shape.
    """

    def __init__(self, H, jumps: Sequence[_Jump] = (), sign: int = +1,
                 kind: str = "liouvillian", matrix_free: bool | None = None):
        self.H = np.array(as_matrix(H))
        self.H.flags.writeable = False
        self.dim = self.H.shape[0]
        self.jumps = tuple(jumps)
        self.sign = sign
        self.kind = kind
        self.matrix_free = self.dim >= MATRIX_FREE_DIM if matrix_free is None else matrix_free

    def __repr__(self):
        return f"SuperOperator(kind={self.kind!r}, dim={self.dim}, jumps={len(self.jumps)}, sign={self.sign:+d})"

    @property
    def dissipative(self) -> bool:
        return any(j.rate > 0 for j in self.jumps)

    def _shape(self, X):
        X = np.asarray(X, dtype=complex)
        if X.shape == (self.dim, self.dim):
            return X, False
        if X.shape == (self.dim * self.dim,):
            return X.reshape(self.dim, self.dim), True
        raise ValueError(f"operand shape {X.shape} does not match dim {self.dim}")

    def hamiltonian_part(self, X):
        M, flat = self._shape(X)
        out = self.H @ M - M @ self.H
        return out.reshape(-1) if flat else out

    def _dissipator(self, M: np.ndarray, adjoint: bool) -> np.ndarray:
        out = np.zeros_like(M)
        for j in self.jumps:
            if j.rate == 0:
                continue
            jump_term = _sandwich(j, M, adjoint_first=not adjoint)
            out += j.rate * (self.sign * jump_term - 0.5 * (j.LdL @ M + M @ j.LdL))
        return out

    def dissipator(self, X):
        """D(X), the real-time dissipator of the Heisenberg equation."""
        M, flat = self._shape(X)
        out = self._dissipator(M, adjoint=False)
        return out.reshape(-1) if flat else out

    def dissipative_part(self, X):
        M, flat = self._shape(X)
        out = -1j * self._dissipator(M, adjoint=False)
        return out.reshape(-1) if flat else out

    def apply(self, X):
        if not self.matrix_free and self._materialized is not None:
            v = np.asarray(X, dtype=complex)
            if v.shape == (self.dim, self.dim):
                return (self._materialized @ v.reshape(-1)).reshape(self.dim, self.dim)
            return self._materialized @ v
        M, flat = self._shape(X)
        out = self.H @ M - M @ self.H
        if self.jumps:
            out = out - 1j * self._dissipator(M, adjoint=False)
        return out.reshape(-1) if flat else out

    def apply_adjoint(self, X):
        """Hermitian adjoint under the infinite-temperature inner product."""
        M, flat = self._shape(X)
        out = self.H @ M - M @ self.H
        if self.jumps:
            out = out + 1j * self._dissipator(M, adjoint=True)
        return out.reshape(-1) if flat else out

    def generator(self, X):
        """Right-hand side of dO/dt, i.e. i times ``apply``."""
        return 1j * self.apply(X)

    @cached_property
    def _materialized(self):
        if self.matrix_free:
            return None
        return self.materialize()

    def materialize(self, sparse: bool = True):
        d = self.dim
        I = sp.identity(d, format="csr", dtype=complex)
        H = sp.csr_matrix(self.H)
        out = sp.kron(H, I) - sp.kron(I, H.T)
        for j in self.jumps:
            if j.rate == 0:
                continue
            L = sp.csr_matrix(j.matrix)
            LdL = sp.csr_matrix(j.LdL)
            D = self.sign * sp.kron(L.conj().T, L.T) - 0.5 * (sp.kron(LdL, I) + sp.kron(I, LdL.T))
            out = out - 1j * j.rate * D
        out = out.tocsr()
        return out if sparse else out.toarray()


def build_liouvillian(H, matrix_free: bool | None = None) -> SuperOperator:
    M = require_hermitian(H, name="H")
    return SuperOperator(M, (), +1, "liouvillian", matrix_free)


def build_adjoint_lindbladian(H, jumps: Sequence, rates: Sequence[float], sign: int = +1,
                              matrix_free: bool | None = None) -> SuperOperator:
    M = require_hermitian(H, name="H")
    if len(jumps) != len(rates):
        raise ValueError("jumps and rates differ in length")
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    items = []
    for L, mu in zip(jumps, rates):
        if mu < 0:
            raise ValueError("rates must be non-negative")
        Lm = np.array(as_matrix(L))
        if Lm.shape != M.shape:
            raise ValueError("jump dimension does not match H")
        perm, vals = _monomial(Lm)
        items.append(_Jump(Lm, float(mu), perm, vals))
    return SuperOperator(M, items, sign, "adjoint_lindbladian", matrix_free)


# --- operator size -----------------------------------------------------------

def operator_size_distribution(A, N_majorana: int) -> np.ndarray:
    """Weight of A on Majorana strings of each length s = 0..N.

    Strings are normalised to unit infinite-temperature norm, so the weights
    add up to (A|A).
    """
    M = as_matrix(A)
    d = M.shape[0]
    if d & (d - 1) or d != 1 << (N_majorana // 2):
        raise ValueError("d must equal 2**(N/2)")
    c = majorana.pauli_coefficients(M)
    n = N_majorana // 2
    sizes = majorana.size_table(N_majorana).reshape(1 << n, 1 << n)
    return np.bincount(sizes.reshape(-1), weights=np.abs(c.reshape(-1)) ** 2, minlength=N_majorana + 1)


def random_operator(rng: np.random.Generator, d: int, hermitian: bool = False) -> np.ndarray:
    A = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (A + A.conj().T) / 2 if hermitian else A


MatVec = Callable[[np.ndarray], np.ndarray]
