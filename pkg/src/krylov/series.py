"""Truncated power series in mpmath arithmetic.

A series is a list ``c`` with ``f(t) = sum_k c[k] t**k``. All operations keep
the length of their first argument and run at the ambient ``mp.dps``.
"""
from __future__ import annotations

from mpmath import mp


def const(x, K: int) -> list:
    return [mp.mpmathify(x)] + [mp.zero] * (K - 1)


def exp_linear(c, K: int, shift=0) -> list:
    """Series of exp(shift + c t)."""
    c = mp.mpmathify(c)
    e = mp.exp(shift)
    out, term = [], mp.one
    for k in range(K):
        out.append(e * term)
        term = term * c / (k + 1)
    return out


def add(a: list, b: list, sa=1, sb=1) -> list:
    return [sa * x + sb * y for x, y in zip(a, b)]


def scale(a: list, s) -> list:
    return [s * x for x in a]


def mul(a: list, b: list) -> list:
    K = len(a)
    return [mp.fsum(a[i] * b[k - i] for i in range(k + 1)) for k in range(K)]


def recip(a: list) -> list:
    if a[0] == 0:
        raise ZeroDivisionError("series has zero constant term")
    K = len(a)
    out = [1 / a[0]]
    for k in range(1, K):
        out.append(-mp.fsum(a[i] * out[k - i] for i in range(1, k + 1)) / a[0])
    return out


def div(a: list, b: list) -> list:
    return mul(a, recip(b))


def derivative(a: list) -> list:
    return [k * a[k] for k in range(1, len(a))] + [mp.zero]


def integral(a: list, c0=0) -> list:
    return [mp.mpmathify(c0)] + [a[k - 1] / k for k in range(1, len(a))]


def log(a: list) -> list:
    return integral(div(derivative(a), a)[:len(a)], mp.log(a[0]))


def exp(a: list) -> list:
    # f' = a' f solved term by term
    K = len(a)
    da = derivative(a)
    out = [mp.exp(a[0])]
    for k in range(1, K):
        out.append(mp.fsum(da[i] * out[k - 1 - i] for i in range(k)) / k)
    return out


def power(a: list, p) -> list:
    """a**p for a[0] != 0 via the J.C.P. Miller recurrence."""
    K = len(a)
    p = mp.mpmathify(p)
    out = [a[0] ** p]
    for k in range(1, K):
        s = mp.fsum((p * i - (k - i)) * a[i] * out[k - i] for i in range(1, k + 1))
        out.append(s / (k * a[0]))
    return out


def cosh_linear(c, K: int, shift=0) -> list:
    return scale(add(exp_linear(c, K, shift), exp_linear(-c, K, -shift)), mp.mpf(1) / 2)


def sinh_linear(c, K: int, shift=0) -> list:
    return scale(add(exp_linear(c, K, shift), exp_linear(-c, K, -shift), 1, -1), mp.mpf(1) / 2)


def cos_linear(c, K: int, shift=0) -> list:
    e1 = exp_linear(1j * mp.mpmathify(c), K, 1j * mp.mpmathify(shift))
    e2 = exp_linear(-1j * mp.mpmathify(c), K, -1j * mp.mpmathify(shift))
    return [mp.re(x) if mp.im(mp.mpmathify(c)) == 0 and mp.im(mp.mpmathify(shift)) == 0 else x
            for x in scale(add(e1, e2), mp.mpf(1) / 2)]


def evaluate(a: list, t) -> object:
    return mp.polyval(a[::-1], t)
