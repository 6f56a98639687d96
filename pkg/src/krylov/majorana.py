"""Pauli strings and Jordan-Wigner Majorana operators.

A Pauli string on ``n`` qubits is stored as ``i**phase * X^x Z^z`` with integer
bit masks ``x`` and ``z``. Qubit 0 is the most significant bit, so dense
matrices agree with ``np.kron(P_0, np.kron(P_1, ...))``.

Acting on a computational basis state,

    X^x Z^z |j> = (-1)^{popcount(j & z)} |j ^ x>,

so every string is a signed permutation. Products and dense assembly use this
instead of Kronecker products.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

_PHASES = np.array([1, 1j, -1, -1j])


def parity(masks: np.ndarray) -> np.ndarray:
    """Bit parity of each integer in ``masks`` (0 or 1)."""
    return np.bitwise_count(np.asarray(masks, dtype=np.uint64)) & 1


@dataclass(frozen=True)
class PauliString:
    n: int
    x: int
    z: int
    phase: int = 0

    def __mul__(self, other: "PauliString") -> "PauliString":
        if self.n != other.n:
            raise ValueError("qubit counts differ")
        # Z^z1 X^x2 = (-1)^{|z1 & x2|} X^x2 Z^z1
        sign = 2 * (bin(self.z & other.x).count("1") & 1)
        return PauliString(self.n, self.x ^ other.x, self.z ^ other.z,
                           (self.phase + other.phase + sign) % 4)

    def signs(self) -> np.ndarray:
        j = np.arange(1 << self.n, dtype=np.uint64)
        return 1 - 2 * parity(j & np.uint64(self.z)).astype(np.int64)

    def matrix(self) -> np.ndarray:
        d = 1 << self.n
        j = np.arange(d)
        out = np.zeros((d, d), dtype=complex)
        out[j ^ self.x, j] = _PHASES[self.phase] * self.signs()
        return out


def _bit(n: int, qubit: int) -> int:
    return 1 << (n - 1 - qubit)


def majorana_strings(N: int) -> list[PauliString]:
    """Jordan-Wigner strings with psi_a = string_a / sqrt(2)."""
    if N % 2 or N < 2:
        raise ValueError("N must be a positive even integer")
    n = N // 2
    out = []
    for k in range(n):
        zs = sum(_bit(n, q) for q in range(k))
        out.append(PauliString(n, _bit(n, k), zs, 0))
        # Y = i X Z
        out.append(PauliString(n, _bit(n, k), zs | _bit(n, k), 1))
    return out


def majorana_operators(N: int) -> list[np.ndarray]:
    """Dense Majoranas normalised to {psi_a, psi_b} = delta_ab."""
    return [s.matrix() / np.sqrt(2) for s in majorana_strings(N)]


def string_product(strings: list[PauliString], indices) -> PauliString:
    out = PauliString(strings[0].n, 0, 0, 0)
    for i in indices:
        out = out * strings[i]
    return out


def assemble(n: int, terms: list[tuple[PauliString, complex]]) -> np.ndarray:
    """Dense matrix of sum_t c_t P_t, grouped by X mask."""
    d = 1 << n
    j = np.arange(d, dtype=np.uint64)
    groups: dict[int, np.ndarray] = {}
    for s, c in terms:
        w = c * _PHASES[s.phase] * (1 - 2 * parity(j & np.uint64(s.z)).astype(float))
        if s.x in groups:
            groups[s.x] += w
        else:
            groups[s.x] = w.astype(complex)
    out = np.zeros((d, d), dtype=complex)
    cols = np.arange(d)
    for x, w in groups.items():
        out[cols ^ x, cols] += w
    return out


def size_table(N: int) -> np.ndarray:
    """Majorana length of every Pauli string, indexed by ``x << n | z``."""
    strings = majorana_strings(N)
    n = N // 2
    codes = np.zeros(1, dtype=np.int64)
    sizes = np.zeros(1, dtype=np.int64)
    for s in strings:
        g = (s.x << n) | s.z
        codes = np.concatenate([codes, codes ^ g])
        sizes = np.concatenate([sizes, sizes + 1])
    table = np.empty(1 << (2 * n), dtype=np.int64)
    table[codes] = sizes
    return table


def pauli_coefficients(A: np.ndarray) -> np.ndarray:
    """Coefficients c[x, z] = Tr((X^x Z^z)^dagger A) / d via Walsh-Hadamard transforms."""
    A = np.asarray(A, dtype=complex)
    d = A.shape[0]
    n = d.bit_length() - 1
    if d != 1 << n or A.shape != (d, d):
        raise ValueError("dimension must be a power of two")
    cols = np.arange(d)
    # w[x, j] = A[j ^ x, j]
    w = A[cols[None, :] ^ cols[:, None], cols[None, :]]
    h = 1
    while h < d:
        w = w.reshape(d, -1, 2, h)
        a, b = w[:, :, 0, :].copy(), w[:, :, 1, :].copy()
        w[:, :, 0, :] = a + b
        w[:, :, 1, :] = a - b
        w = w.reshape(d, d)
        h *= 2
    return w / d


def syk_terms(N: int, q: int, couplings: np.ndarray) -> list[tuple[PauliString, complex]]:
    """Terms of i^{q/2} sum_{i1<...<iq} J psi_i1 ... psi_iq in Pauli form."""
    strings = majorana_strings(N)
    scale = (1j ** (q // 2)) * 2.0 ** (-q / 2)
    out = []
    for c, idx in zip(couplings, combinations(range(N), q)):
        out.append((string_product(strings, idx), scale * c))
    return out
