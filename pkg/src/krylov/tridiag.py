"""Lanczos, monic Lanczos, Arnoldi and bi-Lanczos engines.

Vectors are flat complex arrays. For operators this is the row-wise
vectorization, and the inner product carries the 1/d of the
infinite-temperature normalization. Liouvillian runs default to the
eigenbasis of H, where the generator is diagonal and every inner product is
a weighted elementwise sum.

All engines declare the Krylov space exhausted when the next hop amplitude
falls below ``TERMINATION_TOL`` times the largest one seen so far. The first
step compares against a norm bound of the generator instead.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import lapack

from .opspace import (INFINITE, InnerProductSpec, SuperOperator, ThermalFrame, as_matrix,
                      hermitian_defect)

TERMINATION_TOL = 1e-10
ORTHO_TOL = 1e-8


@dataclass
class LanczosResult:
    b: np.ndarray
    a: np.ndarray
    krylov_dim: int
    basis: np.ndarray | None = None
    stop: str = "breakdown"
    flags: tuple = ()
    inner_weights: np.ndarray | float | None = field(default=None, repr=False)

    @property
    def truncated(self) -> bool:
        return self.stop == "max_n"

    def gram_defect(self) -> float:
        if self.basis is None:
            raise ValueError("basis was not stored")
        Q = self.basis
        w = 1.0 if self.inner_weights is None else self.inner_weights
        G = Q.conj() @ (w * Q).T
        return float(np.max(np.abs(G - np.eye(len(Q)))))


@dataclass
class MonicResult:
    delta: np.ndarray
    a: np.ndarray
    krylov_dim: int
    stop: str = "breakdown"

    @property
    def b(self) -> np.ndarray:
        return np.sqrt(self.delta)


@dataclass
class ArnoldiResult:
    h: np.ndarray
    basis: np.ndarray
    stop: str = "max_n"

    @property
    def krylov_dim(self) -> int:
        return self.h.shape[1]


@dataclass
class BiLanczosResult:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    p_basis: np.ndarray | None
    q_basis: np.ndarray | None
    stop: str = "breakdown"
    flags: tuple = ()

    @property
    def d(self) -> np.ndarray:
        return np.sqrt(self.b * self.c)

    @property
    def krylov_dim(self) -> int:
        return len(self.a)

    def tridiagonal(self) -> np.ndarray:
        n = len(self.a)
        T = np.diag(self.a.astype(complex))
        k = min(n - 1, len(self.b))
        T[np.arange(k), np.arange(1, k + 1)] = self.b[:k]
        T[np.arange(1, k + 1), np.arange(k)] = self.c[:k]
        return T

    def eigenvalue_bound(self, tol: float = 1e-9) -> tuple[bool, np.ndarray]:
        """Eigenvalues of the tridiagonal and whether min Im a <= Im(lambda) <= max Im a.

        The bound needs b_n = c_n real, which makes T minus its adjoint
        equal to 2i diag(Im a).
        """
        ev = np.linalg.eigvals(self.tridiagonal())
        lo, hi = self.a.imag.min(), self.a.imag.max()
        span = tol * max(1.0, float(np.max(np.abs(self.a))))
        return bool(np.all((ev.imag >= lo - span) & (ev.imag <= hi + span))), ev


# --- generic Hermitian core --------------------------------------------------

def _hermitian_lanczos(apply: Callable, v0: np.ndarray, weights, max_n: int | None,
                       reortho: str, store: bool, scale: float,
                       project: Callable | None = None) -> LanczosResult:
    if reortho not in ("full", "none"):
        raise ValueError("reortho must be 'full' or 'none'")
    dim = v0.size
    w = weights

    def inner(u, v):
        return np.vdot(u, w * v)

    nrm = np.sqrt(inner(v0, v0).real)
    if nrm == 0:
        raise ValueError("seed is zero")
    flags = []
    if abs(nrm - 1) > 1e-8:
        warnings.warn("seed was not normalized; normalizing", stacklevel=3)
        flags.append("seed_normalized")
    cap = dim if max_n is None else min(max_n + 1, dim)
    keep = store or reortho == "full"
    Q = np.empty((cap, dim), dtype=complex) if keep else None
    q = v0 / nrm
    q_first, q_prev = q, None
    if keep:
        Q[0] = q
    a, b = [], []
    stop = "exhausted"
    for n in range(cap):
        r = apply(q)
        an = inner(q, r).real
        a.append(an)
        if n + 1 == cap:
            stop = "max_n" if max_n is not None and cap == max_n + 1 else "exhausted"
            break
        r = r - an * q
        if n > 0:
            r -= b[-1] * q_prev
        if project is not None:
            r = project(n + 1, r)
        if reortho == "full":
            for _ in range(2):
                c = (Q[:n + 1] @ np.conj(w * r)).conj()
                r -= c @ Q[:n + 1]
        bn = np.sqrt(max(inner(r, r).real, 0.0))
        ref = max(b) if b else scale
        if bn < TERMINATION_TOL * ref:
            stop = "breakdown"
            break
        b.append(bn)
        q_prev, q = q, r / bn
        if keep:
            Q[n + 1] = q
        elif n % 8 == 0 and abs(inner(q_first, q)) > ORTHO_TOL and "orthogonality_lost" not in flags:
            flags.append("orthogonality_lost")
    kd = len(b) + 1
    if reortho == "none" and store:
        G = Q[:kd].conj() @ (w * Q[:kd]).T
        if np.max(np.abs(G - np.eye(kd))) > ORTHO_TOL:
            flags.append("orthogonality_lost")
    return LanczosResult(np.array(b), np.array(a), kd, Q[:kd] if store else None, stop,
                         tuple(flags), w)


def _norm_bound(M: np.ndarray) -> float:
    return float(np.max(np.sum(np.abs(M), axis=1))) if M.size else 1.0


def lanczos_operator(L, seed, ip: InnerProductSpec = INFINITE, max_n: int | None = None,
                     reortho: str = "full", store_basis: bool = False,
                     method: str = "eigen", symmetry=None) -> LanczosResult:
    """Operator Lanczos for a Liouvillian, or for any Hermitian matrix acting on vectors.

    ``method='eigen'`` runs in the eigenbasis of H, where the Liouvillian is
    elementwise multiplication by the gaps. Passing a conserved ``symmetry``
    resolves that basis by sector, which keeps rounding noise from coupling
    sectors the seed does not connect. ``'commutator'`` applies [H, .]
    with matrix products and is restricted to the infinite-temperature inner
    product. ``'spectral'`` collapses the seed onto the distinct Liouvillian
    frequencies first (see :func:`spectral_measure`), so D_K is the number of
    resolved frequencies rather than a rounding-noise artefact; it stores no
    basis. A stored basis is always returned in the original basis as
    flattened d x d matrices.
    """
    if not isinstance(L, SuperOperator):
        return _vector_lanczos(L, seed, max_n, reortho, store_basis)
    if L.dissipative:
        raise ValueError("generator is not Hermitian; use arnoldi or bilanczos")
    O = as_matrix(seed)
    d = L.dim
    hermitian_seed = hermitian_defect(O) <= 1e-12
    scale = 2 * _norm_bound(L.H)
    if method == "eigen":
        fr = ThermalFrame.build(L.H, ip, symmetry)
        gaps = fr.gaps.reshape(-1)
        wts = fr.weights.reshape(-1)
        Op = fr.to_frame(O)
        if symmetry is not None:
            Op = np.where(fr.sector_mask(Op), Op, 0)
        project = None
        if hermitian_seed and not ip.thermal:
            # O_n is Hermitian for even n and anti-Hermitian for odd n
            def project(n, r):
                R = r.reshape(d, d)
                return ((R + (-1) ** n * R.conj().T) / 2).reshape(-1)
        res = _hermitian_lanczos(lambda v: gaps * v, Op.reshape(-1), wts,
                                 max_n, reortho, store_basis, scale, project)
        if res.basis is not None:
            if ip.thermal:
                # thermal Gram matrices need the frame weights; keep frame coordinates
                res.flags = res.flags + ("basis_in_eigenframe",)
            else:
                res.basis = np.array([fr.from_frame(v.reshape(d, d)).reshape(-1) for v in res.basis])
                res.inner_weights = 1.0 / d
    elif method == "spectral":
        if store_basis:
            raise ValueError("the spectral route keeps no operator basis")
        fr = ThermalFrame.build(L.H, ip, symmetry)
        omega, weight = spectral_measure(fr, O, symmetric=hermitian_seed and not ip.thermal)
        res = _hermitian_lanczos(lambda v: omega * v, np.sqrt(weight).astype(complex), 1.0,
                                 max_n, reortho, False, scale)
        if hermitian_seed and not ip.thermal:
            res.a = np.zeros_like(res.a)  # symmetric measure: odd moments vanish
    elif method == "commutator":
        if symmetry is not None:
            raise ValueError("symmetry resolution needs method='eigen'")
        if ip.thermal:
            raise ValueError("the commutator route supports the infinite-temperature inner product only")
        res = _hermitian_lanczos(L.apply, O.reshape(-1), 1.0 / d, max_n, reortho,
                                 store_basis, scale)
    else:
        raise ValueError(f"unknown method {method!r}")
    if res.krylov_dim == 1:
        res.flags = res.flags + ("seed_conserved",)
    if hermitian_seed:
        if res.b.size and np.max(np.abs(res.a)) > 1e-9 * np.max(res.b):
            res.flags = res.flags + ("nonzero_a_for_hermitian_seed",)
    return res


def spectral_measure(frame: ThermalFrame, seed, gap_tol: float = 1e-9, weight_tol: float = 1e-24,
                     symmetric: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Distinct Liouvillian frequencies carrying weight, and their weights.

    The autocorrelation is sum_k w_k exp(i omega_k t) with
    w_k = sum over (n, m) with E_n - E_m = omega_k of W[n, m] |A'[n, m]|^2.
    Frequencies closer than gap_tol * max|omega| are merged and weights below
    weight_tol * total are dropped. ``symmetric`` pairs +omega with -omega.
    """
    Ap = frame.to_frame(seed)
    w = (frame.weights * np.abs(Ap) ** 2).reshape(-1)
    g = frame.gaps.reshape(-1)
    keep = w > weight_tol * w.sum()
    g, w = g[keep], w[keep]
    if symmetric:
        g = np.abs(g)
    order = np.argsort(g, kind="stable")
    g, w = g[order], w[order]
    tol = gap_tol * max(float(np.max(np.abs(g))), 1.0)
    label = np.concatenate([[0], np.cumsum(np.diff(g) > tol)])
    n_cl = int(label[-1]) + 1
    wk = np.bincount(label, weights=w, minlength=n_cl)
    ok = np.bincount(label, weights=w * g, minlength=n_cl) / wk
    if symmetric:
        zero = np.abs(ok) <= tol
        pos_o, pos_w = ok[~zero], wk[~zero] / 2
        ok = np.concatenate([-pos_o[::-1], ok[zero][:1], pos_o])
        wk = np.concatenate([pos_w[::-1], wk[zero][:1], pos_w])
    return ok, wk


def _vector_lanczos(G, v0, max_n, reortho, store) -> LanczosResult:
    if callable(G) and not isinstance(G, np.ndarray):
        apply = G
        scale = float(np.linalg.norm(G(np.asarray(v0, dtype=complex))))
    else:
        M = np.asarray(G, dtype=complex)
        if hermitian_defect(M) > 1e-10:
            raise ValueError("generator must be Hermitian")
        apply = M.__matmul__
        scale = _norm_bound(M)
    return _hermitian_lanczos(apply, np.asarray(v0, dtype=complex).reshape(-1), 1.0,
                              max_n, reortho, store, scale)


def lanczos_state(H, psi0, max_n: int | None = None, reortho: str = "full",
                  store_basis: bool = False, mode: str = "lanczos") -> LanczosResult:
    """State Lanczos: real a_n = <K_n|H|K_n> and positive b_n.

    ``mode='hessenberg'`` reduces H to tridiagonal form with Householder
    reflections that fix the seed direction and takes the moduli of the
    off-diagonal entries. It is much faster for dense random matrices and
    returns no basis.
    """
    M = as_matrix(H)
    if hermitian_defect(M) > 1e-10:
        raise ValueError("H must be Hermitian")
    psi = np.asarray(psi0, dtype=complex).reshape(-1)
    if abs(np.linalg.norm(psi) - 1) > 1e-8:
        raise ValueError("psi0 must be normalized")
    if mode == "lanczos":
        res = _hermitian_lanczos(M.__matmul__, psi, 1.0, max_n, reortho, store_basis,
                                 _norm_bound(M))
    elif mode == "hessenberg":
        res = _hessenberg(M, psi, max_n)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if res.krylov_dim == 1:
        res.flags = res.flags + ("eigenstate",)
    return res


def _hessenberg(M: np.ndarray, psi: np.ndarray, max_n: int | None) -> LanczosResult:
    d = M.shape[0]
    e1 = np.zeros(d, dtype=complex)
    e1[0] = 1
    if not np.allclose(psi, e1 * psi[0]) or abs(abs(psi[0]) - 1) > 1e-12:
        # Householder reflector P with P psi proportional to e1
        alpha = -np.exp(1j * np.angle(psi[0])) if psi[0] != 0 else -1.0
        u = psi - alpha * e1
        u /= np.linalg.norm(u)
        PM = M - 2 * np.outer(u, u.conj() @ M)
        M = PM - 2 * np.outer(PM @ u, u.conj())
    # lower storage keeps e1 fixed: Q = H(1)...H(n-1) with v(1) = 0
    _, diag, off, _, info = lapack.zhetrd(np.asfortranarray(M), lower=1)
    if info != 0:
        raise np.linalg.LinAlgError(f"zhetrd failed with info={info}")
    b = np.abs(off)
    scale = _norm_bound(M)
    kd = d
    for n, bn in enumerate(b):
        ref = max(b[:n].max(initial=0.0), 0.0) if n else scale
        if bn < TERMINATION_TOL * ref:
            kd = n + 1
            break
    stop = "breakdown" if kd < d else "exhausted"
    if max_n is not None and max_n < kd - 1:
        kd, stop = max_n + 1, "max_n"
    return LanczosResult(b[:kd - 1].copy(), diag[:kd].real.copy(), kd, None, stop)


def lanczos_monic(L, seed, ip: InnerProductSpec = INFINITE, max_n: int | None = None,
                  reortho: str = "full") -> MonicResult:
    """Monic recursion P_{n+1} = L P_n - a_n P_n - Delta_n P_{n-1}.

    P_n are rescaled by a common factor every step to avoid overflow, which
    leaves a_n and Delta_n = |P_n|^2/|P_{n-1}|^2 unchanged.
    """
    if isinstance(L, SuperOperator):
        if L.dissipative:
            raise ValueError("generator is not Hermitian")
        fr = ThermalFrame.build(L.H, ip)
        gaps = fr.gaps.reshape(-1)
        apply = lambda v: gaps * v  # noqa: E731
        w = fr.weights.reshape(-1)
        v0 = fr.to_frame(as_matrix(seed)).reshape(-1)
        scale = 2 * _norm_bound(L.H)
    else:
        M = np.asarray(L, dtype=complex)
        apply, w, v0, scale = M.__matmul__, 1.0, np.asarray(seed, dtype=complex).reshape(-1), _norm_bound(M)

    def nsq(u):
        return np.vdot(u, w * u).real

    dim = v0.size
    cap = dim if max_n is None else min(max_n + 1, dim)
    directions = np.empty((cap, dim), dtype=complex)
    P_prev = np.zeros_like(v0)
    P = v0 / np.sqrt(nsq(v0))
    directions[0] = P
    a, delta = [], []
    n_prev_sq = None
    stop = "exhausted"
    for n in range(cap):
        n_sq = nsq(P)
        LP = apply(P)
        an = (np.vdot(P, w * LP) / n_sq).real
        a.append(an)
        if n > 0:
            delta.append(n_sq / n_prev_sq)
        if n + 1 >= cap:
            stop = "max_n" if max_n is not None and cap == max_n + 1 else "exhausted"
            break
        nxt = LP - an * P - (delta[-1] * P_prev if n > 0 else 0)
        if reortho == "full":
            for _ in range(2):
                c = (directions[:n + 1] @ np.conj(w * nxt)).conj()
                nxt -= c @ directions[:n + 1]
        nxt_sq = nsq(nxt)
        ref = max(delta) if delta else scale ** 2
        if nxt_sq / n_sq < TERMINATION_TOL ** 2 * ref:
            stop = "breakdown"
            break
        s = 1.0 / np.sqrt(n_sq)
        P_prev, P, n_prev_sq = P * s, nxt * s, n_sq * s * s
        directions[n + 1] = P / np.sqrt(nsq(P))
    return MonicResult(np.array(delta), np.array(a), len(a), stop)


# --- non-Hermitian engines ---------------------------------------------------

def _operator_setup(Lo, seed):
    if isinstance(Lo, SuperOperator):
        d = Lo.dim
        v0 = as_matrix(seed).reshape(-1)
        return (lambda v: Lo.apply(v)), (lambda v: Lo.apply_adjoint(v)), v0, 1.0 / d, \
            2 * _norm_bound(Lo.H) + sum(j.rate * _norm_bound(j.LdL) * 2 for j in Lo.jumps)
    M = np.asarray(Lo, dtype=complex)
    return M.__matmul__, M.conj().T.__matmul__, np.asarray(seed, dtype=complex).reshape(-1), 1.0, \
        _norm_bound(M)


def arnoldi(Lo, seed, max_n: int, reortho: bool = True) -> ArnoldiResult:
    """Arnoldi iteration; h[m, n] = (V_m | Lo V_n) with h of shape (k+1, k)."""
    apply, _, v0, w, scale = _operator_setup(Lo, seed)
    nrm = np.sqrt(np.vdot(v0, w * v0).real)
    dim = v0.size
    cap = min(max_n, dim)
    V = np.empty((cap + 1, dim), dtype=complex)
    V[0] = v0 / nrm
    h = np.zeros((cap + 1, cap), dtype=complex)
    stop = "max_n"
    for k in range(cap):
        r = apply(V[k])
        for _ in range(2 if reortho else 1):
            c = (V[:k + 1] @ np.conj(w * r)).conj()
            r -= c @ V[:k + 1]
            h[:k + 1, k] += c
        hk = np.sqrt(np.vdot(r, w * r).real)
        sub = np.abs(np.diag(h, -1)[:k])
        ref = sub.max() if k and sub.max() > 0 else scale
        if hk < TERMINATION_TOL * ref:
            return ArnoldiResult(h[:k + 1, :k + 1], V[:k + 1], "breakdown")
        h[k + 1, k] = hk
        V[k + 1] = r / hk
    return ArnoldiResult(h, V, stop)


def bilanczos(Lo, seed, max_n: int, reortho: str = "full", store_basis: bool = True) -> BiLanczosResult:
    """Two-sided Lanczos with c_{j+1} = sqrt|omega_j| and b_{j+1} = conj(omega_j)/c_{j+1}."""
    apply, apply_adj, v0, w, scale = _operator_setup(Lo, seed)

    def inner(u, v):
        return np.vdot(u, w * v)

    v0 = v0 / np.sqrt(inner(v0, v0).real)
    flags = []
    if isinstance(Lo, SuperOperator) and abs(np.trace(v0.reshape(Lo.dim, Lo.dim))) > 1e-10 * np.sqrt(Lo.dim):
        flags.append("seed_not_traceless")
    dim = v0.size
    cap = min(max_n + 1, dim)
    P = np.empty((cap, dim), dtype=complex)
    Qb = np.empty((cap, dim), dtype=complex)
    P[0] = Qb[0] = v0
    a, b, c = [], [], []
    stop = "max_n"
    for j in range(cap):
        Lp = apply(P[j])
        aj = inner(Qb[j], Lp)
        a.append(aj)
        if j + 1 >= cap:
            stop = "max_n" if cap == max_n + 1 else "exhausted"
            break
        r = Lp - aj * P[j]
        s = apply_adj(Qb[j]) - np.conj(aj) * Qb[j]
        if j > 0:
            r -= b[-1] * P[j - 1]
            s -= c[-1] * Qb[j - 1]
        if reortho == "full":
            for _ in range(2):
                r -= (Qb[:j + 1] @ np.conj(w * r)).conj() @ P[:j + 1]
                s -= (P[:j + 1] @ np.conj(w * s)).conj() @ Qb[:j + 1]
        nr = np.sqrt(inner(r, r).real)
        ns = np.sqrt(inner(s, s).real)
        ref = max(c) if c else scale
        if nr < TERMINATION_TOL * ref or ns < TERMINATION_TOL * ref:
            stop = "breakdown"
            break
        omega = inner(r, s)
        if abs(omega) < TERMINATION_TOL * nr * ns:
            stop = "serious_breakdown"
            flags.append("serious_breakdown")
            break
        cj = np.sqrt(abs(omega))
        bj = np.conj(omega) / cj
        if abs(bj.imag) > 1e-8 * abs(bj) or bj.real < 0:
            if "complex_b_phase" not in flags:
                flags.append("complex_b_phase")
        c.append(cj)
        b.append(bj)
        P[j + 1] = r / cj
        Qb[j + 1] = s / np.conj(bj)
    n = len(a)
    bb = np.array(b, dtype=complex)
    if "complex_b_phase" not in flags:
        bb = bb.real.copy()
    return BiLanczosResult(np.array(a, dtype=complex), bb, np.array(c),
                           P[:n] if store_basis else None, Qb[:n] if store_basis else None,
                           stop, tuple(flags))
