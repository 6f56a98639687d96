"""Dynamics and observables on the Krylov chain.

Chain kinds and amplitude conventions (T is the tridiagonal matrix with
diagonal a_n and off-diagonals b_n):

* ``closed_operator`` and ``density_matrix``: real phi_n with
  dphi_n/dt = b_n phi_{n-1} - b_{n+1} phi_{n+1} (plus i a_n phi_n when a != 0).
  This is c(t) = exp(iTt) e_0 with phi_n = i^{-n} c_n. Density matrices evolve
  with exp(-iLt) and carry (-i)^n in the basis expansion instead.
* ``state``: psi(t) = exp(-iTt) e_0.
* ``open_bilanczos``: dphi_n/dt = b_n phi_{n-1} + i a_n phi_n - b_{n+1} phi_{n+1}
  with complex a_n. The same map from exp(iTt) holds, but T is only complex
  symmetric.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh_tridiagonal, expm

KINDS = ("closed_operator", "state", "open_bilanczos", "density_matrix")
EXPM_MAX_DIM = 2000


@dataclass(frozen=True)
class ChainSpec:
    b: np.ndarray
    a: np.ndarray | None = None
    kind: str = "closed_operator"
    complete: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        b = np.asarray(self.b)
        if b.ndim != 1:
            raise ValueError("b must be one-dimensional")
        if np.iscomplexobj(b):
            if np.max(np.abs(b.imag), initial=0.0) > 1e-12 * max(np.max(np.abs(b), initial=0.0), 1.0):
                raise ValueError("hop amplitudes must be real")
            b = b.real
        b = b.astype(float)
        if np.any(b <= 0):
            raise ValueError("hop amplitudes must be positive")
        a = np.zeros(b.size + 1) if self.a is None else np.asarray(self.a)
        if a.size != b.size + 1:
            raise ValueError("need len(a) == len(b) + 1")
        if self.kind != "open_bilanczos" and np.iscomplexobj(a):
            if np.max(np.abs(a.imag), initial=0.0) > 1e-12 * max(np.max(np.abs(a), initial=0.0), 1.0):
                raise ValueError("complex on-site terms need kind='open_bilanczos'")
            a = a.real
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "a", a)

    @property
    def size(self) -> int:
        return self.b.size + 1

    @property
    def hermitian(self) -> bool:
        return not np.iscomplexobj(self.a) or np.max(np.abs(self.a.imag), initial=0.0) == 0

    @property
    def unphysical_flag(self) -> bool:
        """Open chains from physical Lindbladians have a_n = i|a_n|; flags anything else."""
        if self.kind != "open_bilanczos":
            return False
        tol = 1e-10 * max(np.max(np.abs(self.a)), 1.0)
        return bool(np.any(np.abs(np.real(self.a)) > tol) or np.any(np.imag(self.a) < -tol))

    def matrix(self) -> np.ndarray:
        T = np.diag(self.a.astype(complex if np.iscomplexobj(self.a) else float))
        idx = np.arange(self.b.size)
        T[idx, idx + 1] = self.b
        T[idx + 1, idx] = self.b
        return T


@dataclass
class KrylovWavefunction:
    t_grid: np.ndarray
    amp: np.ndarray  # shape (len(t_grid), D)
    kind: str = "closed_operator"
    method: str = "eig"

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amp) ** 2

    def norm(self) -> np.ndarray:
        return self.probabilities.sum(axis=1)

    def norm_defect(self) -> float:
        return float(np.max(np.abs(self.norm() - 1)))


def _sign_vector(n: int, kind: str) -> np.ndarray:
    # phi_n = i^{-n} c_n for the operator-type chains
    return (-1j) ** np.arange(n) if kind != "state" else np.ones(n, dtype=complex)


def _eigh_chain(d, e):
    # stemr occasionally fails to converge on long disordered chains
    try:
        return eigh_tridiagonal(d, e)
    except np.linalg.LinAlgError:
        return eigh_tridiagonal(d, e, lapack_driver="stev")


def propagate(chain: ChainSpec, t_grid: Sequence[float], method: str = "eig") -> KrylovWavefunction:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or t[0] != 0 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be increasing and start at 0")
    if method not in ("eig", "expm", "adaptive_ode"):
        raise ValueError(f"unknown method {method!r}")
    if method == "eig" and not chain.hermitian:
        warnings.warn("eig needs a Hermitian chain; using expm", stacklevel=2)
        method = "expm"
    if method == "expm" and chain.size > EXPM_MAX_DIM:
        method = "adaptive_ode"
    sgn = 1.0 if chain.kind != "state" else -1.0
    D = chain.size
    if method == "eig":
        lam, V = _eigh_chain(chain.a.real, chain.b)
        # c(t) = V exp(sgn i lam t) V^T e_0
        W = V * V[0]
        ph = np.exp(sgn * 1j * np.outer(lam, t))
        c = (W @ ph).T
        c[0] = 0
        c[0, 0] = 1
    elif method == "expm":
        G = sgn * 1j * chain.matrix()
        c = np.empty((t.size, D), dtype=complex)
        c[0] = 0
        c[0, 0] = 1
        steps = np.diff(t)
        uniform = np.allclose(steps, steps[0], rtol=1e-12, atol=0)
        U = expm(G * steps[0]) if uniform and steps.size else None
        for k, h in enumerate(steps):
            c[k + 1] = (U if uniform else expm(G * h)) @ c[k]
    else:
        G = sgn * 1j * chain.matrix()
        from scipy.sparse import csr_matrix
        Gs = csr_matrix(G)
        y0 = np.zeros(D, dtype=complex)
        y0[0] = 1
        sol = solve_ivp(lambda _, y: Gs @ y, (t[0], t[-1]), y0, t_eval=t, method="DOP853",
                        rtol=1e-11, atol=1e-13)
        if not sol.success:
            raise RuntimeError(f"adaptive integration failed: {sol.message}")
        c = sol.y.T
    amp = c * _sign_vector(D, chain.kind)
    if chain.kind != "state" and chain.hermitian and not np.any(chain.a):
        amp = amp.real
    elif chain.kind == "open_bilanczos" and np.all(np.abs(np.real(chain.a)) == 0):
        amp = amp.real
    return KrylovWavefunction(t, amp, chain.kind, method)


# --- observables -------------------------------------------------------------

@dataclass
class ComplexityTrace:
    t: np.ndarray
    K: np.ndarray
    varK: np.ndarray
    S: np.ndarray
    Z: np.ndarray
    kappa3: np.ndarray | None = None
    kappa4: np.ndarray | None = None
    flags: tuple = ()

    @property
    def kappa1(self) -> np.ndarray:
        return self.K

    @property
    def kappa2(self) -> np.ndarray:
        return self.varK

    def to_csv(self, path) -> None:
        cols = [self.t, self.K, self.varK, self.S, self.Z,
                self.kappa3 if self.kappa3 is not None else np.full(self.t.size, np.nan),
                self.kappa4 if self.kappa4 is not None else np.full(self.t.size, np.nan)]
        np.savetxt(path, np.column_stack(cols), delimiter=",", header="t,K,varK,S,Z,kappa3,kappa4",
                   comments="", fmt="%.17g")


Z_FLOOR = 1e-280


def complexity_trace(wf: KrylovWavefunction, normalize: bool | None = None) -> ComplexityTrace:
    """K, variance, entropy and cumulants of the distribution |phi_n|^2.

    Open chains are normalized by Z(t) by default; closed chains use the raw
    probabilities.
    """
    if normalize is None:
        normalize = wf.kind == "open_bilanczos"
    p = wf.probabilities
    Z = p.sum(axis=1)
    flags = []
    t = wf.t_grid
    if normalize:
        good = Z > Z_FLOOR
        if not np.all(good):
            cut = int(np.argmin(good))
            flags.append(f"truncated_at_underflow:{cut}")
            p, Z, t = p[:cut], Z[:cut], t[:cut]
        p = p / Z[:, None]
    n = np.arange(p.shape[1], dtype=float)
    K = p @ n
    dn = n[None, :] - K[:, None]
    mu2 = np.sum(p * dn ** 2, axis=1)
    mu3 = np.sum(p * dn ** 3, axis=1)
    mu4 = np.sum(p * dn ** 4, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(p > 1e-300, np.log(np.where(p > 1e-300, p, 1.0)), 0.0)
    S = -np.sum(p * logs, axis=1)
    return ComplexityTrace(t, K, mu2, S, Z, mu3, mu4 - 3 * mu2 ** 2, tuple(flags))


def open_complexity_exact(gamma: float, u: float, eta: float, t_grid) -> ComplexityTrace:
    """Closed forms for the chain b_n^2 = gamma^2 (1-u^2) n (n-1+eta), a_n = i u gamma (2n+eta)."""
    if not 0 <= u < 1 or gamma <= 0 or eta <= 0:
        raise ValueError("need 0 <= u < 1, gamma > 0, eta > 0")
    t = np.asarray(t_grid, dtype=float)
    x = gamma * t
    if u == 0:
        sh = np.sinh(x)
        K = eta * sh ** 2
        var = eta * sh ** 2 * np.cosh(x) ** 2
        Z = np.ones_like(t)
    else:
        T = np.tanh(x)
        den = 1 + 2 * u * T - (1 - 2 * u * u) * T ** 2
        K = eta * (1 - u * u) * T ** 2 / den
        var = eta * (1 - u * u) * T ** 2 * (1 + u * T) ** 2 / den ** 2
        Z = (1 - u * u + u * (u * np.cosh(2 * x) + np.sinh(2 * x))) ** (-eta)
    return ComplexityTrace(t, K, var, np.full(t.size, np.nan), Z)


def open_saturation(u: float, eta: float) -> float:
    return eta / (2 * u) - eta / 2


# --- algebra and bounds ------------------------------------------------------

@dataclass
class AlgebraReport:
    km_error: float
    kl_error: float
    alpha: float
    gamma: float
    residual: float
    offdiag: float
    bkl_error: float | None
    rows_used: int


def chain_matrices(chain: ChainSpec):
    D = chain.size
    K = np.diag(np.arange(D, dtype=float))
    L = chain.matrix().real if chain.hermitian else chain.matrix()
    M = np.zeros((D, D))
    idx = np.arange(D - 1)
    M[idx + 1, idx] = chain.b
    M[idx, idx + 1] = -chain.b
    return K, L, M


def algebra_check(chain: ChainSpec, closure_tol: float = 1e-9) -> AlgebraReport:
    """Commutator identities and the closure [L, M] = alpha K + gamma I.

    The last diagonal row of [L, M] sees the chain boundary. It enters the
    fit only when ``chain.complete`` says the chain ends naturally.
    """
    if chain.size > 4096:
        raise ValueError("algebra_check materializes chains up to D = 4096")
    K, L, M = chain_matrices(chain)
    scale = max(np.max(np.abs(L)), 1.0)
    # commutator errors relative to the size of the products, so rounding stays O(eps)
    prod = scale * max(chain.size - 1, 1)
    km = float(np.max(np.abs(K @ M - M @ K - L)) / prod)
    kl = float(np.max(np.abs(K @ L - L @ K - M)) / prod)
    C = L @ M - M @ L
    diag = np.real(np.diag(C))
    off = float(np.max(np.abs(C - np.diag(np.diag(C)))) / scale ** 2)
    rows = chain.size if chain.complete else chain.size - 1
    n = np.arange(rows, dtype=float)
    A = np.column_stack([n, np.ones(rows)])
    (alpha, gamma), *_ = np.linalg.lstsq(A, diag[:rows], rcond=None)
    res = float(np.linalg.norm(A @ [alpha, gamma] - diag[:rows]) / max(np.linalg.norm(diag[:rows]), 1e-300))
    bkl = None
    if res <= closure_tol:
        nn = np.arange(1, chain.size, dtype=float)
        pred = 0.25 * alpha * nn * (nn - 1) + 0.5 * gamma * nn
        bkl = float(np.max(np.abs(pred - chain.b ** 2) / chain.b ** 2))
    return AlgebraReport(km, kl, float(alpha), float(gamma), res, off, bkl, rows)


def bkl_chain(alpha: float, gamma: float, length: int) -> ChainSpec:
    """b_n = sqrt(alpha n (n-1)/4 + gamma n/2); finite when alpha < 0."""
    n = np.arange(1, length + 1, dtype=float)
    b2 = 0.25 * alpha * n * (n - 1) + 0.5 * gamma * n
    pos = b2 > 1e-12 * np.max(np.abs(b2))
    complete = not np.all(pos)
    if complete:
        b2 = b2[:int(np.argmin(pos))]
    return ChainSpec(np.sqrt(b2), kind="closed_operator", complete=complete)


def central_derivative(y: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central differences, one-sided fourth order at the ends."""
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < 5:
        raise ValueError("need at least five samples")
    d = np.empty(n)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    for i in (0, 1):
        s = y[i:i + 5]
        d[i] = (-25 * s[0] + 48 * s[1] - 36 * s[2] + 16 * s[3] - 3 * s[4]) / (12 * h) if i == 0 else \
            (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]) / (12 * h)
    d[-1] = -(-25 * y[-1] + 48 * y[-2] - 36 * y[-3] + 16 * y[-4] - 3 * y[-5]) / (12 * h)
    d[-2] = -(-3 * y[-1] - 10 * y[-2] + 18 * y[-3] - 6 * y[-4] + y[-5]) / (12 * h)
    return d


@dataclass
class DispersionReport:
    holds: bool
    max_ratio: float
    ratio: np.ndarray
    t: np.ndarray


def dispersion_bound_check(wf: KrylovWavefunction, b1: float, tol: float = 1e-9,
                           floor: float = 1e-8, max_step: float = 0.05) -> DispersionReport:
    """Checks |dK/dt| <= 2 b_1 Delta K on a uniform grid.

    Points where 2 b_1 Delta K < ``floor`` are excluded from the ratio.
    """
    if wf.kind == "open_bilanczos":
        raise ValueError("dispersion bound applies to closed chains")
    t = wf.t_grid
    h = np.diff(t)
    if np.max(np.abs(h - h[0])) > 1e-9 * h[0]:
        raise ValueError("dispersion check needs a uniform grid")
    if h[0] * b1 > max_step:
        raise ValueError(f"grid step {h[0]} too coarse for b1 = {b1}")
    tr = complexity_trace(wf, normalize=False)
    dK = central_derivative(tr.K, h[0])
    bound = 2 * b1 * np.sqrt(np.maximum(tr.varK, 0))
    ok = bound > floor
    ratio = np.abs(dK[ok]) / bound[ok]
    holds = bool(np.all(np.abs(dK) <= bound * (1 + tol) + floor))
    return DispersionReport(holds, float(ratio.max(initial=0.0)), ratio, t[ok])


@dataclass
class CDResult:
    alpha: np.ndarray
    norm_sq: float


def cd_coefficients(b: Sequence[float], D_K: int | None = None, b0: float = 1.0) -> CDResult:
    """alpha_1 = -1/b_1, alpha_{k+1} = -(b_{2k}/b_{2k+1}) alpha_k for even D_K.

    ``b[i]`` holds b_{i+1}; D_K defaults to len(b) + 1. The gauge-potential
    norm is (A, A) = b0^2 sum_k alpha_k^2.
    """
    b = np.asarray(b, dtype=float)
    D = b.size + 1 if D_K is None else int(D_K)
    if D % 2:
        raise NotImplementedError("odd Krylov dimension needs the linear solve")
    if D - 1 > b.size:
        raise ValueError("not enough coefficients for D_K")
    alpha = [-1.0 / _nonzero(b, 1)]
    for k in range(1, D // 2):
        alpha.append(-(b[2 * k - 1] / _nonzero(b, 2 * k + 1)) * alpha[-1])
    alpha = np.array(alpha)
    return CDResult(alpha, float(b0 ** 2 * np.sum(alpha ** 2)))


def _nonzero(b, n):
    if b[n - 1] == 0:
        raise ZeroDivisionError(f"b_{n} vanishes")
    return b[n - 1]
