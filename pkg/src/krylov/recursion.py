"""Lanczos coefficients from autocorrelation data.

Conventions
-----------
Operator moments are the power moments of the Liouvillian, m_n = (O|L^n|O).
With C(t) = sum_n c_n t^n they are m_n = i^{-n} n! c_n. For a Euclidean
(Wick-rotated) autocorrelation C_E(tau) = C(-i tau), the Taylor coefficients
give m_n = n! c_n directly.

State moments are the raw derivatives mu_n = n! c_n of the survival amplitude
S(t) = <psi|exp(-iHt)|psi>. The recursion turns them into power moments
<H^n> = i^n mu_n before running.

Arithmetic is mpmath at a chosen number of digits. With integer or Fraction
inputs and ``exact=True`` it is exact rational arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from mpmath import mp

from . import series as ser

DEFAULT_DPS = 60


class PrecisionError(ArithmeticError):
    """The moment recursion cancelled below the working precision."""


@dataclass(frozen=True)
class MomentSequence:
    m: tuple
    kind: str = "operator"
    dps: int | None = DEFAULT_DPS
    exact: bool = False
    low_confidence: bool = False

    def __post_init__(self):
        if self.kind not in ("operator", "state"):
            raise ValueError("kind must be 'operator' or 'state'")
        object.__setattr__(self, "m", tuple(self.m))

    def __len__(self):
        return len(self.m)

    def __getitem__(self, n):
        return self.m[n]

    def as_complex(self) -> np.ndarray:
        return np.array([complex(x) for x in self.m])


@dataclass(frozen=True)
class AutocorrSpec:
    """An autocorrelation given by Taylor coefficients, a callable, or samples.

    ``func`` must accept mpmath numbers. ``euclidean`` marks C_E(tau) = C(-i tau).
    """

    taylor: tuple | None = None
    func: Callable | None = None
    t: np.ndarray | None = None
    values: np.ndarray | None = None
    euclidean: bool = False
    tag: str = ""

    def taylor_coefficients(self, K: int, dps: int = DEFAULT_DPS) -> list:
        with mp.workdps(dps):
            if self.taylor is not None:
                if len(self.taylor) < K:
                    raise ValueError(f"need {K} Taylor coefficients, have {len(self.taylor)}")
                return [mp.mpmathify(c) for c in self.taylor[:K]]
            if self.func is not None:
                return [mp.mpmathify(c) for c in mp.taylor(self.func, 0, K - 1)]
        raise ValueError("no analytic data; use sampled moments")


@dataclass
class LanczosCoefficients:
    a: list
    b: list
    b_squared: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.a, self.b))

    def as_complex(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([complex(x) for x in self.a]), np.array([complex(x) for x in self.b]))

    def as_real(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([float(mp.re(x)) for x in self.a]), np.array([float(mp.re(x)) for x in self.b]))


# --- exact integer sequences -------------------------------------------------

def bell_numbers(n_max: int) -> list[int]:
    """B_0..B_{n_max} from the Bell triangle."""
    out, row = [1], [1]
    for _ in range(n_max):
        nxt = [row[-1]]
        for x in row:
            nxt.append(nxt[-1] + x)
        row = nxt
        out.append(row[0])
    return out


def zigzag_numbers(n_max: int) -> list[int]:
    """Euler zigzag numbers E_0..E_{n_max} (Seidel boustrophedon)."""
    out, row = [1], [1]
    for n in range(1, n_max + 1):
        nxt = [0]
        for x in reversed(row):
            nxt.append(nxt[-1] + x)
        row = nxt
        out.append(row[-1])
    return out


def tangent_numbers(n: int) -> list[int]:
    """T_0..T_{n-1} = 1, 2, 16, 272, ... with tan x = sum T_k x^{2k+1}/(2k+1)!."""
    z = zigzag_numbers(2 * n)
    return [z[2 * k + 1] for k in range(n)]


def euler_secant_numbers(n: int) -> list[int]:
    """|E_{2k}| for k < n: 1, 1, 5, 61, 1385, ..."""
    z = zigzag_numbers(2 * n)
    return [z[2 * k] for k in range(n)]


# --- moments -----------------------------------------------------------------

def moments_from_autocorr(ac: AutocorrSpec, n_max: int, kind: str = "operator",
                          dps: int = DEFAULT_DPS, norm_tol: float = 1e-8) -> MomentSequence:
    if ac.taylor is None and ac.func is None:
        return _sampled_moments(ac, n_max, kind)
    with mp.workdps(dps):
        c = ac.taylor_coefficients(n_max + 1, dps)
        if abs(c[0] - 1) > norm_tol:
            raise ValueError(f"autocorrelation is not normalized: C(0) = {c[0]}")
        m = []
        for n, cn in enumerate(c):
            v = mp.factorial(n) * cn
            if kind == "operator" and not ac.euclidean:
                v = v * (-1j) ** n
            m.append(_clean(v))
        m[0] = mp.one
    return MomentSequence(tuple(m), kind, dps)


def _sampled_moments(ac: AutocorrSpec, n_max: int, kind: str) -> MomentSequence:
    """Local polynomial fit around t = 0; low accuracy, capped at m_8."""
    if n_max > 8:
        raise ValueError("sampled data support moments up to m_8 only")
    t = np.asarray(ac.t, dtype=float)
    C = np.asarray(ac.values, dtype=complex)
    i0 = int(np.argmin(np.abs(t)))
    if abs(t[i0]) > 1e-12:
        raise ValueError("sample grid must contain t = 0")
    if abs(C[i0] - 1) > 1e-8:
        raise ValueError(f"autocorrelation is not normalized: C(0) = {C[i0]}")
    deg = n_max + 4
    sel = np.argsort(np.abs(t - t[i0]))[:deg + 6]
    coef = np.polynomial.polynomial.polyfit(t[sel], C[sel], deg)
    m = []
    for n in range(n_max + 1):
        v = math.factorial(n) * coef[n]
        if kind == "operator" and not ac.euclidean:
            v *= (-1j) ** n
        m.append(mp.mpmathify(v))
    m[0] = mp.one
    return MomentSequence(tuple(m), kind, None, low_confidence=True)


def _clean(x):
    x = mp.mpmathify(x)
    if isinstance(x, mp.mpc):
        eps = mp.mpf(10) ** (-mp.dps + 5)
        if abs(x.imag) <= eps * max(abs(x.real), 1):
            return mp.mpf(x.real)
        if abs(x.real) <= eps * max(abs(x.imag), 1):
            return mp.mpc(0, x.imag)
    return x


def _power_moments(m: MomentSequence) -> list:
    if m.kind == "state":
        return [(1j) ** n * mp.mpmathify(v) if not m.exact else v for n, v in enumerate(m.m)]
    return list(m.m)


def lanczos_from_moments(m: MomentSequence, n_max: int | None = None, exact: bool | None = None,
                         dps: int | None = None) -> LanczosCoefficients:
    """Moment recursion: returns a_0..a_{n_max} and b_1..b_{n_max}.

    Needs m_0..m_{2 n_max + 1}; shorter sequences cap n_max.
    """
    exact = m.exact if exact is None else exact
    dps = dps or m.dps or 15
    K = len(m.m)
    if n_max is None:
        n_max = (K - 2) // 2
    if 2 * n_max + 1 >= K:
        raise ValueError(f"need moments up to m_{2 * n_max + 1}")
    if exact:
        if m.kind == "state":
            raise ValueError("exact mode supports operator moments only")
        return _recursion_exact(list(m.m), n_max, dps)
    with mp.workdps(dps):
        mom = [mp.mpmathify(v) for v in _power_moments(m)]
        real_case = all(mp.im(v) == 0 for v in mom)
        if real_case:
            mom = [mp.re(v) for v in mom]
        floor = mp.mpf(10) ** (-(dps - 3))
        M_prev = [(-1) ** k * mom[k] for k in range(2 * n_max + 2)]
        L_prev = [(-1) ** (k + 1) * mom[k + 1] for k in range(2 * n_max + 1)]
        a = [_clean(-L_prev[0])]
        b, b2 = [], []
        for n in range(1, n_max + 1):
            M = [None] * (2 * n_max + 2)
            for k in range(n, 2 * n_max + 2 - n):
                t1 = L_prev[k]
                t2 = L_prev[n - 1] * M_prev[k] / M_prev[n - 1]
                M[k] = t1 - t2
                if k == n and abs(M[k]) < floor * max(abs(t1), abs(t2)):
                    raise PrecisionError(f"cancellation at n={n}: raise dps above {dps}")
            if real_case and M[n] <= 0:
                raise ValueError(f"Hankel positivity fails at n={n}")
            L = [None] * (2 * n_max + 1)
            for k in range(n, 2 * n_max + 1 - n):
                L[k] = M[k + 1] / M[n] - M_prev[k] / M_prev[n - 1]
            b2.append(_clean(M[n]))
            b.append(_clean(mp.sqrt(M[n])))
            a.append(_clean(-L[n]))
            M_prev, L_prev = M, L
    return LanczosCoefficients(a, b, b2)


def _recursion_exact(mom: list, n_max: int, dps: int) -> LanczosCoefficients:
    mom = [Fraction(v) for v in mom]
    M_prev = [(-1) ** k * mom[k] for k in range(2 * n_max + 2)]
    L_prev = [(-1) ** (k + 1) * mom[k + 1] for k in range(2 * n_max + 1)]
    a, b2 = [-L_prev[0]], []
    for n in range(1, n_max + 1):
        M = [None] * (2 * n_max + 2)
        for k in range(n, 2 * n_max + 2 - n):
            M[k] = L_prev[k] - L_prev[n - 1] * M_prev[k] / M_prev[n - 1]
        if M[n] <= 0:
            raise ValueError(f"Hankel positivity fails at n={n}")
        L = [None] * (2 * n_max + 1)
        for k in range(n, 2 * n_max + 1 - n):
            L[k] = M[k + 1] / M[n] - M_prev[k] / M_prev[n - 1]
        b2.append(M[n])
        a.append(-L[n])
        M_prev, L_prev = M, L
    with mp.workdps(dps):
        b = [mp.sqrt(mp.mpf(x.numerator) / x.denominator) for x in b2]
    return LanczosCoefficients(a, b, b2)


def moments_from_lanczos(a: Sequence, b: Sequence, n_max: int, j: int | None = None,
                         k: int | None = None, method: str = "tridiagonal"):
    """Moments (O_j|L^n|O_k) for n = 0..n_max of the chain (a, b).

    ``b[i]`` is b_{i+1}, the hop between sites i and i+1. With no site indices
    the result is the MomentSequence of site 0; with both it is the single
    matrix element for n = n_max. Python arithmetic is kept throughout, so
    integer or Fraction inputs give exact results.
    """
    a = list(a)
    b = list(b)
    if len(a) < len(b) + 1:
        a = a + [0] * (len(b) + 1 - len(a))
    if method == "paths":
        fn = _motzkin
    elif method == "tridiagonal":
        fn = _tridiagonal_power
    else:
        raise ValueError(f"unknown method {method!r}")
    if j is None and k is None:
        vals = fn(a, b, n_max, 0, 0)
        return MomentSequence(tuple(vals), "operator", None, exact=all(
            isinstance(x, (int, Fraction)) for x in list(a) + list(b)))
    jj, kk = (0 if j is None else j), (0 if k is None else k)
    return fn(a, b, n_max, jj, kk)[-1]


def _tridiagonal_power(a, b, n_max, j, k):
    """<e_j|T^n|e_k> for n = 0..n_max by repeated multiplication."""
    size = len(a)
    if max(j, k) >= size:
        raise ValueError("site index beyond the chain")
    if n_max > 0 and size < min(size, max(j, k) + n_max):
        raise ValueError("chain too short")
    v = [0] * size
    v[k] = 1
    out = [v[j]]
    for _ in range(n_max):
        w = [0] * size
        for s in range(size):
            if v[s] == 0:
                continue
            w[s] += a[s] * v[s]
            if s + 1 < size:
                w[s + 1] += b[s] * v[s]
            if s > 0:
                w[s - 1] += b[s - 1] * v[s]
        v = w
        out.append(v[j])
    return out


def _motzkin(a, b, n_max, j, k):
    """Weighted Motzkin-path sums by explicit path enumeration."""
    size = len(a)
    out = []
    for n in range(n_max + 1):
        total = 0
        if abs(j - k) <= n:
            total = sum(_paths(a, b, size, k, j, n))
        out.append(total)
    return out


def _paths(a, b, size, start, end, n):
    # iterative depth-first enumeration of all n-step paths start -> end
    stack = [(start, 0, 1)]
    while stack:
        s, steps, w = stack.pop()
        if steps == n:
            if s == end:
                yield w
            continue
        left = n - steps - 1
        for nxt, weight in ((s, a[s]), (s + 1, b[s] if s + 1 < size else 0),
                            (s - 1, b[s - 1] if s > 0 else 0)):
            if weight == 0 or nxt < 0 or nxt >= size or abs(nxt - end) > left:
                continue
            stack.append((nxt, steps + 1, w * weight))


def greens_function_cf(a: Sequence, b: Sequence, z, depth: int):
    """G(z) = 1/(z - a_0 - b_1^2/(z - a_1 - ...)) truncated after ``depth`` levels."""
    if depth < 1 or depth > len(a) or depth - 1 > len(b):
        raise ValueError("depth exceeds the available coefficients")
    t = z - a[depth - 1]
    for lvl in range(depth - 2, -1, -1):
        if t == 0:
            raise ZeroDivisionError(f"continued fraction level {lvl + 1} vanished")
        t = z - a[lvl] - b[lvl] ** 2 / t
    if t == 0:
        raise ZeroDivisionError("continued fraction level 0 vanished")
    return 1 / t


def resolvent_series(m: Sequence, z, n_terms: int):
    """Partial sum of G(z) = sum_n m_n / z^{n+1}."""
    return sum(m[n] / z ** (n + 1) for n in range(n_terms))


# --- Toda / Hankel route -----------------------------------------------------

@dataclass
class TodaTable:
    tau0: object
    tau: list
    tau_dot: list
    tau_ddot: list
    a: list
    b: list
    stencil: str

    def hirota_residuals(self) -> list:
        """Relative residuals of tau_n tau_n'' - tau_n'^2 - tau_{n+1} tau_{n-1}."""
        out = []
        for n in range(len(self.tau) - 1):
            prev = self.tau[n - 1] if n > 0 else 1
            r = self.tau[n] * self.tau_ddot[n] - self.tau_dot[n] ** 2 - self.tau[n + 1] * prev
            out.append(abs(r) / abs(self.tau[n]) ** 2)
        return out


def _euclidean_derivatives(ac: AutocorrSpec, tau0, K: int, dps: int) -> tuple[list, str]:
    with mp.workdps(dps):
        if tau0 == 0 and ac.taylor is not None:
            c = ac.taylor_coefficients(K, dps)
            if not ac.euclidean:
                c = [cn * (-1j) ** n for n, cn in enumerate(c)]
            return [_clean(mp.factorial(n) * cn) for n, cn in enumerate(c)], "taylor"
        if ac.func is None:
            raise ValueError("Toda derivatives away from tau=0 need a callable")
        f = ac.func if ac.euclidean else (lambda tau: ac.func(-1j * tau))
        with mp.workdps(2 * dps):
            d = mp.diffs(f, mp.mpmathify(tau0), K - 1)
            out = [_clean(mp.mpmathify(x)) for x in d]
        return out, f"mpmath-diff(order<={K - 1}, {2 * dps} digits)"


def toda_lanczos(ac: AutocorrSpec, n_max: int, tau0=0, dps: int = DEFAULT_DPS) -> TodaTable:
    """Coefficients from Hankel determinants tau_n = det[C^{(j+k)}(tau0)]_{j,k<=n}.

    a_n = d/dtau log(tau_n/tau_{n-1}) and b_{n+1}^2 = tau_{n+1} tau_{n-1}/tau_n^2,
    with tau_{-1} = 1. Returns a_0..a_{n_max} and b_1..b_{n_max}.
    """
    K = 2 * n_max + 3
    D, stencil = _euclidean_derivatives(ac, tau0, K, dps)
    with mp.workdps(dps):
        tau, td, tdd = [], [], []
        for n in range(n_max + 1):
            size = n + 1
            Hm = mp.matrix(size, size)
            H1 = mp.matrix(size, size)
            H2 = mp.matrix(size, size)
            for r in range(size):
                for c in range(size):
                    Hm[r, c] = D[r + c]
                    H1[r, c] = D[r + c + 1]
                    H2[r, c] = D[r + c + 2]
            det = mp.det(Hm)
            if det == 0:
                raise PrecisionError(f"Hankel determinant vanished at n={n}")
            inv = mp.inverse(Hm)
            X = inv * H1
            tr1 = sum(X[i, i] for i in range(size))
            X2 = X * X
            tr2 = sum(X2[i, i] for i in range(size))
            trH2 = sum((inv * H2)[i, i] for i in range(size))
            tau.append(_clean(det))
            td.append(_clean(det * tr1))
            tdd.append(_clean(det * (tr1 ** 2 - tr2 + trH2)))
        a, b = [], []
        for n in range(n_max + 1):
            prev = td[n - 1] / tau[n - 1] if n > 0 else 0
            a.append(_clean(td[n] / tau[n] - prev))
        for n in range(n_max):
            prev = tau[n - 1] if n > 0 else 1
            b.append(_clean(mp.sqrt(tau[n + 1] * prev / tau[n] ** 2)))
    return TodaTable(tau0, tau, td, tdd, a, b, stencil)


# --- spectral function -------------------------------------------------------

@dataclass
class SpectralResult:
    omega: np.ndarray
    phi: np.ndarray
    windowed: bool = False


def spectral_function(t: np.ndarray, C: np.ndarray, omega: np.ndarray | None = None,
                      tail_tol: float = 1e-8, alias_tol: float = 1e-6,
                      pad: int = 4) -> SpectralResult:
    """Phi(omega) = int dt exp(-i omega t) C(t) by trapezoid quadrature.

    The grid must be uniform. If |C| at the grid ends exceeds ``tail_tol``
    relative to its maximum, a Hann window is applied and the result is
    marked as windowed.
    """
    t = np.asarray(t, dtype=float)
    C = np.asarray(C, dtype=complex)
    dt = np.diff(t)
    if t.size < 4 or np.max(np.abs(dt - dt[0])) > 1e-9 * abs(dt[0]):
        raise ValueError("spectral_function needs a uniform time grid")
    h = dt[0]
    peak = np.max(np.abs(C))
    windowed = max(abs(C[0]), abs(C[-1])) > tail_tol * peak
    if windowed:
        mid = 0.5 * (t[0] + t[-1])
        half = 0.5 * (t[-1] - t[0])
        C = C * np.cos(np.pi * (t - mid) / (2 * half)) ** 2
    w = np.full(t.size, h)
    w[0] = w[-1] = h / 2
    if omega is not None:
        omega = np.asarray(omega, dtype=float)
        if np.max(np.abs(omega)) >= np.pi / h:
            raise ValueError("requested frequencies exceed the Nyquist limit of the grid")
        phi = np.exp(-1j * np.outer(omega, t)) @ (w * C)
        return SpectralResult(omega, phi, windowed)
    n = pad * t.size
    buf = np.zeros(n, dtype=complex)
    buf[:t.size] = w * C
    om = 2 * np.pi * np.fft.fftfreq(n, h)
    phi = np.fft.fft(buf) * np.exp(-1j * om * t[0])
    order = np.argsort(om)
    om, phi = om[order], phi[order]
    edge = max(abs(phi[0]), abs(phi[-1]))
    if edge > alias_tol * np.max(np.abs(phi)):
        raise ValueError("spectrum does not decay before the Nyquist frequency; refine the grid")
    return SpectralResult(om, phi, windowed)


def mock_autocorr_moments(n_max: int) -> MomentSequence:
    """Moments of C(t) = (exp(e^{it}-1) + exp(e^{-it}-1))/2: m_{2n} = B_{2n}, odd zero."""
    bell = bell_numbers(n_max)
    m = [bell[n] if n % 2 == 0 else 0 for n in range(n_max + 1)]
    return MomentSequence(tuple(m), "operator", DEFAULT_DPS, exact=True)
