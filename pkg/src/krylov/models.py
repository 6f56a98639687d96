"""Model Hamiltonians, random ensembles, and closed-form Krylov oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from mpmath import mp
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import gammaln

from . import majorana
from . import series as ser
from .lattice import ChainSpec
from .opspace import DenseOperator
from .recursion import AutocorrSpec, MomentSequence, tangent_numbers

SYK_MAX_N = 26
MFIM_MAX_N = 14


# --- SYK ---------------------------------------------------------------------

@dataclass(frozen=True)
class SykSpec:
    """q-body SYK with <J^2> = (q-1)! J^2 / N^{q-1}.

    Give either ``J`` or the rescaled coupling ``calJ`` with calJ^2 = 2^{1-q} q J^2.
    ``sample`` selects an ensemble member; the generator is seeded by
    (seed, sample).
    """

    N: int
    q: int = 4
    J: float | None = None
    calJ: float | None = None
    seed: int = 0
    sample: int = 0

    def __post_init__(self):
        if self.N % 2 or self.N < 2:
            raise ValueError("N must be a positive even integer")
        if self.q % 2 or self.q < 2 or self.q > self.N:
            raise ValueError("q must be even with 2 <= q <= N")
        if (self.J is None) == (self.calJ is None):
            raise ValueError("give exactly one of J and calJ")

    @property
    def coupling(self) -> float:
        if self.J is not None:
            return float(self.J)
        return float(self.calJ) * math.sqrt(2.0 ** (self.q - 1) / self.q)

    @property
    def script_J(self) -> float:
        return self.coupling * math.sqrt(2.0 ** (1 - self.q) * self.q)

    @property
    def variance(self) -> float:
        return math.factorial(self.q - 1) * self.coupling ** 2 / self.N ** (self.q - 1)

    def couplings(self) -> np.ndarray:
        """One Gaussian draw per index tuple, tuples in lexicographic order."""
        count = math.comb(self.N, self.q)
        rng = np.random.default_rng([self.seed, self.sample])
        return rng.normal(0.0, math.sqrt(self.variance), size=count)


def syk_hamiltonian(spec: SykSpec) -> DenseOperator:
    if spec.N > SYK_MAX_N:
        raise MemoryError(f"dense SYK limited to N <= {SYK_MAX_N}")
    terms = majorana.syk_terms(spec.N, spec.q, spec.couplings())
    H = majorana.assemble(spec.N // 2, terms)
    H = 0.5 * (H + H.conj().T)
    return DenseOperator(H, f"syk N={spec.N} q={spec.q} seed={spec.seed}:{spec.sample}")


def majorana_seed(N: int, index: int = 0) -> np.ndarray:
    """sqrt(2) psi_index, unit norm under the infinite-temperature product."""
    return majorana.majorana_strings(N)[index].matrix()


@dataclass(frozen=True)
class JumpSet:
    """Jump operators with rates; ``sign`` returns the sandwich sign for a seed parity."""

    jumps: tuple
    rates: tuple
    fermionic_odd: bool
    kind: str

    def sign(self, seed_parity: int) -> int:
        # odd jumps pick up a minus sign when sandwiching odd operators
        return -1 if (self.fermionic_odd and seed_parity % 2) else +1


def syk_jumps(spec: SykSpec, kind: str = "linear", lam: float = 0.0, p: int = 2,
              V: float = 0.0, M: int | None = None, seed: int = 0) -> JumpSet:
    """Linear jumps sqrt(lam) psi_i, or M random p-body jumps with <|V|^2> = p! V^2 / N^p."""
    N = spec.N
    psis = majorana.majorana_operators(N)
    if kind == "linear":
        if lam < 0:
            raise ValueError("lam must be non-negative")
        if lam == 0:
            return JumpSet((), (), True, kind)
        return JumpSet(tuple(psis), (float(lam),) * N, True, kind)
    if kind != "p_body":
        raise ValueError(f"unknown jump kind {kind!r}")
    if p % 2:
        raise ValueError("odd p is not supported")
    if V < 0:
        raise ValueError("V must be non-negative")
    M = N if M is None else M
    rng = np.random.default_rng([seed, spec.seed, spec.sample])
    var = math.factorial(p) * V ** 2 / N ** p
    idx = list(combinations(range(N), p))
    strings = majorana.majorana_strings(N)
    prods = [majorana.string_product(strings, t) for t in idx]
    out = []
    for _ in range(M):
        coef = rng.normal(0, math.sqrt(var / 2), len(idx)) + 1j * rng.normal(0, math.sqrt(var / 2), len(idx))
        terms = [(s, c * 2.0 ** (-p / 2)) for s, c in zip(prods, coef)]
        out.append(majorana.assemble(N // 2, terms))
    return JumpSet(tuple(out), (1.0,) * M, False, kind)


def p_body_rate(R: float, V: float, p: int, s: int, N: int | None = None) -> float:
    """Ensemble decay rate of a size-s string; with N given, the exact p = 2 value."""
    if N is not None and p == 2:
        return R * V ** 2 * s * (N - s) / N
    return R * V ** 2 * p * s / 2 ** (p - 1)


# --- spin chains -------------------------------------------------------------

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]])
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def site_operator(op: np.ndarray, site: int, N: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for k in range(N):
        out = np.kron(out, op if k == site else np.eye(2))
    return out


def mfim_hamiltonian(N: int, g: float, h: float, bc: str = "periodic") -> DenseOperator:
    """H = -sum Z_i Z_{i+1} - g sum X_i - h sum Z_i."""
    if N > MFIM_MAX_N:
        raise MemoryError(f"dense MFIM limited to N <= {MFIM_MAX_N}")
    if bc not in ("open", "periodic"):
        raise ValueError("bc must be 'open' or 'periodic'")
    Z = [site_operator(_SZ, i, N) for i in range(N)]
    X = [site_operator(_SX, i, N) for i in range(N)]
    bonds = N if (bc == "periodic" and N > 2) else N - 1
    H = -sum(Z[i] @ Z[(i + 1) % N] for i in range(bonds))
    H = H - g * sum(X) - h * sum(Z)
    if (g, h) == (1, 0):
        tag = "integrable"
    elif (g, h) == (-1.05, 0.5):
        tag = "chaotic"
    else:
        tag = "generic"
    return DenseOperator(np.asarray(H), f"mfim N={N} g={g} h={h} {bc} {tag}")


def spin_matrices(s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """S_x, S_y, S_z for spin s in the S_z eigenbasis m = s, s-1, ..., -s."""
    d = int(round(2 * s)) + 1
    if abs(2 * s - (d - 1)) > 1e-12 or s <= 0:
        raise ValueError("s must be a positive half-integer")
    m = s - np.arange(d)
    Sz = np.diag(m).astype(complex)
    # <m+1|S_+|m> = sqrt(s(s+1) - m(m+1))
    sp = np.zeros((d, d), dtype=complex)
    for k in range(1, d):
        sp[k - 1, k] = math.sqrt(s * (s + 1) - m[k] * (m[k] + 1))
    Sx = (sp + sp.T) / 2
    Sy = (sp - sp.T) / 2j
    return Sx, Sy, Sz


def lmg_hamiltonian(s: float) -> DenseOperator:
    """Rescaled H / hbar_eff = S_x + 2 S_z^2 / s."""
    Sx, _, Sz = spin_matrices(s)
    return DenseOperator(Sx + 2 * Sz @ Sz / s, f"lmg s={s}")


def lmg_seed(s: float) -> np.ndarray:
    return spin_matrices(s)[2] / s


def lmg_parity(s: float) -> np.ndarray:
    """Pi-rotation about x in the S_z basis: |m> -> |-m>. Commutes with H, flips S_z."""
    d = int(round(2 * s)) + 1
    return np.eye(d, dtype=complex)[::-1]


# --- random matrices ---------------------------------------------------------

@dataclass(frozen=True)
class RmtSpec:
    ensemble: str
    N: int
    sigma: float | None = None
    seed: int = 0
    sample: int = 0

    def __post_init__(self):
        if self.ensemble not in ("GOE", "GUE", "GSE"):
            raise ValueError("ensemble must be GOE, GUE or GSE")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def std(self) -> float:
        # defaults put the GOE/GUE semicircle on [-2, 2]
        if self.sigma is not None:
            return float(self.sigma)
        return math.sqrt({"GOE": 2.0, "GUE": 1.0, "GSE": 0.5}[self.ensemble] / self.N)


def rmt_sample(spec: RmtSpec) -> DenseOperator:
    """Diagonal N(0, sigma^2); every off-diagonal component N(0, sigma^2/2).

    GSE samples are N x N quaternion matrices returned as 2N x 2N complex
    matrices [[A, B], [-conj(B), conj(A)]], so every level is doubly degenerate.
    """
    rng = np.random.default_rng([spec.seed, spec.sample])
    N, s = spec.N, spec.std
    off = s / math.sqrt(2)

    def upper(comp):
        return np.triu(rng.normal(0, off, (N, N)), 1) if comp else None

    diag = rng.normal(0, s, N)
    if spec.ensemble == "GOE":
        U = upper(1)
        H = U + U.T + np.diag(diag)
    elif spec.ensemble == "GUE":
        U = upper(1) + 1j * upper(1)
        H = U + U.conj().T + np.diag(diag)
    else:
        e0, e1, e2, e3 = (upper(1) for _ in range(4))
        A = (e0 + 1j * e1)
        A = A + A.conj().T + np.diag(diag)
        B = e2 + 1j * e3
        B = B - B.T
        H = np.block([[A, B], [-B.conj(), A.conj()]])
    return DenseOperator(H, f"{spec.ensemble} N={N} seed={spec.seed}:{spec.sample}")


def kramers_reduce(energies: np.ndarray) -> np.ndarray:
    """One level from each degenerate GSE pair."""
    E = np.sort(np.asarray(energies))
    return E[::2]


def semicircle_density(E, radius: float = 2.0):
    E = np.asarray(E, dtype=float)
    return np.where(np.abs(E) < radius, 2 * np.sqrt(np.clip(radius ** 2 - E ** 2, 0, None)) / (np.pi * radius ** 2), 0.0)


def semicircle_cdf(E, radius: float = 2.0):
    x = np.clip(np.asarray(E, dtype=float) / radius, -1, 1)
    return 0.5 + (x * np.sqrt(1 - x * x) + np.arcsin(x)) / np.pi


# --- density of states <-> mean Lanczos coefficients -------------------------

def _positive_intervals(f, n_scan: int = 400):
    xs = np.linspace(0.0, 1.0, n_scan + 1)
    vals = np.array([f(x) for x in xs])
    out, start = [], None
    for k, (x, v) in enumerate(zip(xs, vals)):
        if v > 0 and start is None:
            start = xs[0] if k == 0 else brentq(f, xs[k - 1], x)
        elif v <= 0 and start is not None:
            out.append((start, brentq(f, xs[k - 1], x)))
            start = None
    if start is not None:
        out.append((start, 1.0))
    return out


def dos_from_mean_lanczos(a, b, E_grid) -> np.ndarray:
    """rho(E) = int_0^1 dx Theta(4b^2 - (E-a)^2) / (pi sqrt(4b^2 - (E-a)^2)).

    ``a`` and ``b`` are callables on [0, 1]. Each interval where the
    integrand is real is integrated with x = x1 + (x2-x1)(1 - cos th)/2,
    which removes the inverse-square-root endpoint singularities.
    """
    out = []
    for E in np.atleast_1d(np.asarray(E_grid, dtype=float)):
        def f(x, E=E):
            return 4 * b(x) ** 2 - (E - a(x)) ** 2

        total = 0.0
        for x1, x2 in _positive_intervals(f):
            half = 0.5 * (x2 - x1)

            def integrand(th):
                x = x1 + half * (1 - math.cos(th))
                v = f(x)
                return half * math.sin(th) / (math.pi * math.sqrt(v)) if v > 0 else 0.0

            total += quad(integrand, 0, math.pi, limit=200, epsabs=1e-12, epsrel=1e-10)[0]
        out.append(total)
    return np.array(out)


def mean_lanczos_from_dos(rho, x_grid, support: float, tol: float = 1e-10,
                          max_iter: int = 200) -> np.ndarray:
    """Inverse map for symmetric rho, a = 0 and non-increasing b.

    The forward map gives x(w) = 2 int_0^{sqrt(W^2-w^2)} rho(sqrt(w^2+s^2)) ds
    for the fraction of sites with 2b > w. Each x is matched by bisection in w.
    """
    W = float(support)

    def G(w):
        top = math.sqrt(max(W * W - w * w, 0.0))
        if top == 0:
            return 0.0
        # s = top sin(th) absorbs the square-root edge of rho
        val = quad(lambda th: rho(math.sqrt(w * w + (top * math.sin(th)) ** 2)) * top * math.cos(th),
                   0, math.pi / 2, limit=200, epsabs=1e-13)[0]
        return 2 * val

    out = []
    for x in np.asarray(x_grid, dtype=float):
        lo, hi = 0.0, W
        if x <= 0:
            out.append(W / 2)
            continue
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            if G(mid) > x:
                lo = mid
            else:
                hi = mid
            if hi - lo < tol * W:
                break
        else:
            raise RuntimeError(f"bisection did not converge at x = {x}")
        out.append(0.25 * (lo + hi))
    return np.array(out)


# --- closed-form oracles -----------------------------------------------------

_TINY = 1e-300


def _log_poch_ratio(eta: float, n: np.ndarray) -> np.ndarray:
    """log((eta)_n / n!)."""
    return gammaln(n + eta) - gammaln(eta) - gammaln(n + 1)


@dataclass(frozen=True)
class OracleSpec:
    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {sorted(FAMILIES)}")
        object.__setattr__(self, "params", dict(self.params))


class Oracle:
    """Closed-form coefficients, wavefunctions, complexity and autocorrelation."""

    finite: bool = False
    open: bool = False

    def a(self, n_max: int) -> np.ndarray:
        return np.zeros(n_max + 1)

    def b(self, n_max: int) -> np.ndarray:
        raise NotImplementedError

    def chain(self, n_max: int) -> ChainSpec:
        kind = "open_bilanczos" if self.open else "closed_operator"
        return ChainSpec(self.b(n_max), self.a(n_max), kind, complete=self.finite and n_max >= self.length - 1)

    def phi(self, t, n_max: int) -> np.ndarray:
        raise NotImplementedError

    def K(self, t) -> np.ndarray:
        raise NotImplementedError

    def varK(self, t) -> np.ndarray:
        raise NotImplementedError

    def Z(self, t) -> np.ndarray:
        return np.ones_like(np.asarray(t, dtype=float))

    def autocorr(self) -> AutocorrSpec:
        raise NotImplementedError


class SL2R(Oracle):
    def __init__(self, alpha: float, eta: float):
        if alpha <= 0 or eta <= 0:
            raise ValueError("need alpha > 0 and eta > 0")
        self.alpha, self.eta = float(alpha), float(eta)

    def b(self, n_max):
        n = np.arange(1, n_max + 1, dtype=float)
        return self.alpha * np.sqrt(n * (n - 1 + self.eta))

    def phi(self, t, n_max):
        x = self.alpha * np.asarray(t, dtype=float)[:, None]
        n = np.arange(n_max + 1)
        lt = np.log(np.maximum(np.tanh(x), _TINY))
        return np.exp(0.5 * _log_poch_ratio(self.eta, n) - self.eta * np.log(np.cosh(x)) + n * lt)

    def K(self, t):
        return self.eta * np.sinh(self.alpha * np.asarray(t, dtype=float)) ** 2

    def varK(self, t):
        return 0.25 * self.eta * np.sinh(2 * self.alpha * np.asarray(t, dtype=float)) ** 2

    def autocorr(self):
        a, eta = self.alpha, self.eta
        return AutocorrSpec(func=lambda t: mp.sech(a * t) ** eta, tag=f"sech^{eta}")


class HW(Oracle):
    def __init__(self, alpha: float):
        if alpha <= 0:
            raise ValueError("need alpha > 0")
        self.alpha = float(alpha)

    def b(self, n_max):
        return self.alpha * np.sqrt(np.arange(1, n_max + 1, dtype=float))

    def phi(self, t, n_max):
        x = self.alpha * np.asarray(t, dtype=float)[:, None]
        n = np.arange(n_max + 1)
        return np.exp(-0.5 * x ** 2 + n * np.log(np.maximum(x, _TINY)) - 0.5 * gammaln(n + 1))

    def K(self, t):
        return (self.alpha * np.asarray(t, dtype=float)) ** 2

    def varK(self, t):
        return self.K(t)

    def autocorr(self):
        a = self.alpha
        return AutocorrSpec(func=lambda t: mp.exp(-(a * t) ** 2 / 2), tag="gaussian")


class SU2(Oracle):
    finite = True

    def __init__(self, alpha: float, j: float):
        if alpha <= 0 or j <= 0 or abs(2 * j - round(2 * j)) > 1e-12:
            raise ValueError("need alpha > 0 and positive half-integer j")
        self.alpha, self.j = float(alpha), float(j)
        self.length = int(round(2 * j)) + 1

    def b(self, n_max):
        n = np.arange(1, min(n_max, self.length - 1) + 1, dtype=float)
        return self.alpha * np.sqrt(n * (2 * self.j - n + 1))

    def a(self, n_max):
        return np.zeros(min(n_max, self.length - 1) + 1)

    def phi(self, t, n_max):
        x = self.alpha * np.asarray(t, dtype=float)[:, None]
        n = np.arange(min(n_max, self.length - 1) + 1)
        two_j = self.length - 1
        binom = np.array([math.comb(two_j, int(k)) for k in n], dtype=float)
        return np.sqrt(binom) * np.cos(x) ** (two_j - n) * np.sin(x) ** n

    def K(self, t):
        return 2 * self.j * np.sin(self.alpha * np.asarray(t, dtype=float)) ** 2

    def varK(self, t):
        return 0.5 * self.j * np.sin(2 * self.alpha * np.asarray(t, dtype=float)) ** 2

    def autocorr(self):
        a, p = self.alpha, 2 * self.j
        return AutocorrSpec(func=lambda t: mp.cos(a * t) ** p, tag="cos^2j")


class OpenExact(Oracle):
    """b_n^2 = gamma^2 (1-u^2) n (n-1+eta), a_n = i u gamma (2n + eta)."""

    open = True

    def __init__(self, gamma: float, u: float, eta: float):
        if gamma <= 0 or eta <= 0 or not 0 <= u < 1:
            raise ValueError("need gamma > 0, eta > 0 and 0 <= u < 1")
        self.gamma, self.u, self.eta = float(gamma), float(u), float(eta)

    def a(self, n_max):
        return 1j * self.u * self.gamma * (2 * np.arange(n_max + 1) + self.eta)

    def b(self, n_max):
        n = np.arange(1, n_max + 1, dtype=float)
        return self.gamma * np.sqrt((1 - self.u ** 2) * n * (n - 1 + self.eta))

    def phi(self, t, n_max):
        x = self.gamma * np.asarray(t, dtype=float)[:, None]
        u, eta = self.u, self.eta
        T = np.tanh(x)
        n = np.arange(n_max + 1)
        base = -eta * np.log(np.cosh(x)) - eta * np.log1p(u * T)
        r = np.log(np.maximum(T, _TINY) / (1 + u * T))
        return np.exp(base + 0.5 * n * np.log1p(-u * u) + 0.5 * _log_poch_ratio(eta, n) + n * r)

    def _trace(self, t):
        from .lattice import open_complexity_exact
        return open_complexity_exact(self.gamma, self.u, self.eta, t)

    def K(self, t):
        return self._trace(t).K

    def varK(self, t):
        return self._trace(t).varK

    def Z(self, t):
        return self._trace(t).Z

    def saturation(self) -> float:
        return self.eta / (2 * self.u) - self.eta / 2

    def autocorr(self):
        g, u, eta = self.gamma, self.u, self.eta
        return AutocorrSpec(func=lambda t: (mp.cosh(g * t) + u * mp.sinh(g * t)) ** (-eta), tag="open-exact")


class LargeQSyk(SL2R):
    """Large-q SYK as the SL(2,R) chain with alpha = calJ and eta = 2/q.

    The leading-order coefficients b_1 = calJ sqrt(2/q), b_n = calJ sqrt(n(n-1))
    differ from this chain at O(1/q); see ``leading_b``.
    """

    def __init__(self, calJ: float, q: float):
        if q <= 0:
            raise ValueError("q must be positive")
        super().__init__(calJ, 2.0 / q)
        self.calJ, self.q = float(calJ), float(q)

    def leading_b(self, n_max):
        n = np.arange(1, n_max + 1, dtype=float)
        b = self.calJ * np.sqrt(n * (n - 1))
        b[0] = self.calJ * math.sqrt(2 / self.q)
        return b

    def moments(self, n_max: int, dps: int = 60) -> MomentSequence:
        """m_{2n} = (2/q) calJ^{2n} T_{n-1} for n >= 1, odd moments zero."""
        T = tangent_numbers(n_max // 2 + 1)
        with mp.workdps(dps):
            m = [mp.one]
            for k in range(1, n_max + 1):
                m.append(mp.mpf(2) / self.q * mp.mpf(self.calJ) ** k * T[k // 2 - 1] if k % 2 == 0 else mp.zero)
        return MomentSequence(tuple(m), "operator", dps)


class Cft(SL2R):
    """Thermal CFT two-point function: alpha = pi/beta, eta = 2 Delta."""

    def __init__(self, Delta: float, beta: float):
        if Delta <= 0 or beta <= 0:
            raise ValueError("need Delta > 0 and beta > 0")
        super().__init__(math.pi / beta, 2 * Delta)
        self.Delta, self.beta = float(Delta), float(beta)

    def euclidean_autocorr(self) -> AutocorrSpec:
        b, D = self.beta, self.Delta
        return AutocorrSpec(func=lambda tau: mp.sec(mp.pi * tau / b) ** (2 * D), euclidean=True, tag="sec^2Delta")


def dissipative_triangle(n_max: int) -> list[list[int]]:
    """T(n, k) = (k+1) T(n-1, k) + (2n - 4k) T(n-1, k-1) with T(1, 0) = 1."""
    T = [[], [1]]
    for n in range(2, n_max + 1):
        row = []
        for k in range((n - 1) // 2 + 1):
            prev = T[n - 1]
            x = (k + 1) * (prev[k] if k < len(prev) else 0)
            if k >= 1:
                x += (2 * n - 4 * k) * (prev[k - 1] if k - 1 < len(prev) else 0)
            row.append(x)
        T.append(row)
    return T


class DissSykAutocorr(OpenExact):
    """Leading large-q dissipative SYK autocorrelation 1 + g/q.

    exp(g/q) = (cosh(alpha t) + u sinh(alpha t))^{-2/q} with alpha^2 = lt^2/4 + calJ^2
    and u = lt/(2 alpha), so the oracle is the exact open chain at eta = 2/q.
    Leading coefficients: a_n = i lt n, b_n as for the closed model.
    """

    def __init__(self, calJ: float, lam_tilde: float, q: float):
        if calJ <= 0 or lam_tilde < 0 or q <= 0:
            raise ValueError("need calJ > 0, lam_tilde >= 0, q > 0")
        alpha = math.sqrt(lam_tilde ** 2 / 4 + calJ ** 2)
        super().__init__(alpha, lam_tilde / (2 * alpha), 2.0 / q)
        self.calJ, self.lam_tilde, self.q = float(calJ), float(lam_tilde), float(q)

    def leading_a(self, n_max):
        return 1j * self.lam_tilde * np.arange(n_max + 1)

    def leading_b(self, n_max):
        return LargeQSyk(self.calJ, self.q).leading_b(n_max)

    def g_autocorr(self) -> AutocorrSpec:
        """1 + g/q with g = log(alpha^2 / (calJ^2 cosh^2(alpha t + aleph)))."""
        a, J, q = self.gamma, self.calJ, self.q
        aleph = math.asinh(self.lam_tilde / (2 * J))
        return AutocorrSpec(func=lambda t: 1 + mp.log(a ** 2 / (J ** 2 * mp.cosh(a * t + aleph) ** 2)) / q,
                            tag="diss-syk-g")

    def reduced_moments(self, n_max: int) -> list:
        """m~_n as polynomials in w = i lt / calJ: coefficient lists, highest power first."""
        T = dissipative_triangle(max(n_max - 1, 1))
        out = [None, {1: 0.5}]
        for n in range(2, n_max + 1):
            out.append({n - 2 * k - 2: T[n - 1][k] for k in range(n // 2) if k < len(T[n - 1])})
        return out

    def moments(self, n_max: int, dps: int = 60) -> MomentSequence:
        """m_n = (2/q) calJ^n m~_n(w) for n >= 1."""
        red = self.reduced_moments(n_max)
        with mp.workdps(dps):
            w = 1j * mp.mpf(self.lam_tilde) / self.calJ
            m = [mp.one]
            for n in range(1, n_max + 1):
                val = mp.fsum(c * w ** p for p, c in red[n].items())
                m.append(2 * val * mp.mpf(self.calJ) ** n / self.q)
        return MomentSequence(tuple(m), "operator", dps)


FAMILIES = {
    "SL2R": SL2R,
    "HW": HW,
    "SU2": SU2,
    "OpenExact": OpenExact,
    "LargeQSyk": LargeQSyk,
    "Cft": Cft,
    "DissSykAutocorr": DissSykAutocorr,
}


def oracle(spec: OracleSpec) -> Oracle:
    return FAMILIES[spec.family](**spec.params)


def mock_autocorr_series(K: int, dps: int = 60) -> list:
    """Taylor coefficients of (exp(e^{it}-1) + exp(e^{-it}-1))/2."""
    with mp.workdps(dps):
        e1 = ser.exp_linear(1j, K)
        e1[0] -= 1
        e2 = ser.exp_linear(-1j, K)
        e2[0] -= 1
        s = ser.add(ser.exp(e1), ser.exp(e2))
        return [mp.re(x) / 2 for x in s]
