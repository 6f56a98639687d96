"""State-space observables: TFD states, SFF, spread and spectral complexity,
and the Krylov chain of a density matrix."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from mpmath import mp

from .lattice import ChainSpec, ComplexityTrace, KrylovWavefunction, complexity_trace, propagate
from .opspace import as_matrix, build_liouvillian, hermitian_defect
from .tridiag import LanczosResult, lanczos_operator, lanczos_state


@dataclass(frozen=True)
class SpectrumDecomp:
    energies: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        E = np.asarray(self.energies, dtype=float)
        if np.any(np.diff(E) < 0):
            raise ValueError("energies must be sorted ascending")
        object.__setattr__(self, "energies", E)

    @classmethod
    def from_hamiltonian(cls, H, tol: float = 1e-9) -> "SpectrumDecomp":
        M = as_matrix(H)
        if hermitian_defect(M) > 1e-10:
            raise ValueError("H must be Hermitian")
        E, V = np.linalg.eigh(M)
        out = cls(E, V)
        if out.reconstruction_error(M) > tol * max(np.max(np.abs(E)), 1.0):
            raise np.linalg.LinAlgError("eigendecomposition failed to reconstruct H")
        return out

    @classmethod
    def from_energies(cls, energies) -> "SpectrumDecomp":
        E = np.sort(np.asarray(energies, dtype=float))
        return cls(E, np.eye(E.size))

    @property
    def dim(self) -> int:
        return self.energies.size

    def reconstruction_error(self, H) -> float:
        V = self.vectors
        return float(np.max(np.abs(as_matrix(H) - (V * self.energies) @ V.conj().T)))

    def boltzmann(self, beta: float) -> np.ndarray:
        """Gibbs probabilities, shifted by the ground energy against overflow."""
        if beta < 0:
            raise ValueError("beta must be non-negative")
        w = np.exp(-beta * (self.energies - self.energies[0]))
        return w / w.sum()


def partition_ratio(spec: SpectrumDecomp, beta: float, t) -> np.ndarray:
    """Z(beta + i t) / Z(beta)."""
    p = spec.boltzmann(beta)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.exp(-1j * np.outer(t, spec.energies)) @ p


def tfd_state(spec: SpectrumDecomp, beta: float) -> np.ndarray:
    """sum_n sqrt(p_n) |n> (x) |n*> as a length-d^2 vector."""
    V = spec.vectors
    return np.einsum("in,jn,n->ij", V, V.conj(), np.sqrt(spec.boltzmann(beta))).reshape(-1)


def evolve_tfd(spec: SpectrumDecomp, beta: float, t: float, symmetric: bool = False) -> np.ndarray:
    """exp(-i H t) (x) 1 on the TFD, or exp(-i (H (x) 1 + 1 (x) H^T) t / 2).

    Row-major vectorization gives (A (x) B) vec(M) = vec(A M B^T).
    """
    V, E = spec.vectors, spec.energies
    M = tfd_state(spec, beta).reshape(V.shape[0], V.shape[0])
    if symmetric:
        U = (V * np.exp(-0.5j * E * t)) @ V.conj().T
        return (U @ M @ U).reshape(-1)
    U = (V * np.exp(-1j * E * t)) @ V.conj().T
    return (U @ M).reshape(-1)


def survival_amplitude(psi0: np.ndarray, spec: SpectrumDecomp, t) -> np.ndarray:
    c = spec.vectors.conj().T @ np.asarray(psi0, dtype=complex)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.exp(-1j * np.outer(t, spec.energies)) @ (np.abs(c) ** 2)


def sff(spec: SpectrumDecomp, beta: float, t_grid, filter=None) -> np.ndarray:
    """|Z(beta+it)/Z(beta)|^2, or |sum_n g(E_n) exp(-i E_n t)|^2 with a filter g."""
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if filter is None:
        return np.abs(partition_ratio(spec, beta, t)) ** 2
    g = np.asarray(filter(spec.energies), dtype=complex)
    return np.abs(np.exp(-1j * np.outer(t, spec.energies)) @ g) ** 2


# --- spread complexity -------------------------------------------------------

@dataclass
class SpreadResult:
    trace: ComplexityTrace
    lanczos: LanczosResult
    wavefunction: KrylovWavefunction


def spread_complexity(H, psi0, t_grid, max_n: int | None = None, mode: str = "lanczos",
                      method: str = "eig") -> SpreadResult:
    res = lanczos_state(H, psi0, max_n=max_n, mode=mode)
    return _spread_from_chain(res, t_grid, method)


def _spread_from_chain(res: LanczosResult, t_grid, method: str) -> SpreadResult:
    if res.krylov_dim == 1:
        t = np.asarray(t_grid, dtype=float)
        amp = np.exp(-1j * res.a[0] * t)[:, None]
        wf = KrylovWavefunction(t, amp, "state", "trivial")
    else:
        wf = propagate(ChainSpec(res.b, res.a, "state"), t_grid, method)
    return SpreadResult(complexity_trace(wf), res, wf)


def spread_complexity_tfd(spec: SpectrumDecomp, beta: float, t_grid, max_n: int | None = None,
                          method: str = "eig") -> SpreadResult:
    """Spread complexity of the TFD under H (x) 1.

    The Krylov space of the TFD is spanned by sum_n sqrt(p_n) E_n^k |n>|n*>,
    so the chain equals that of diag(E) with seed sqrt(p).
    """
    E = spec.energies
    seed = np.sqrt(spec.boltzmann(beta)).astype(complex)
    res = lanczos_operator(lambda v: E * v, seed, max_n=max_n)
    return _spread_from_chain(res, t_grid, method)


def direct_spread(H, psi0, t_grid, basis: np.ndarray) -> np.ndarray:
    """K_S(t) from projections |<K_n|psi(t)>|^2 onto a stored Krylov basis (rows)."""
    spec = SpectrumDecomp.from_hamiltonian(H)
    c = spec.vectors.conj().T @ np.asarray(psi0, dtype=complex)
    t = np.asarray(t_grid, dtype=float)
    psi_t = (spec.vectors @ (c[:, None] * np.exp(-1j * np.outer(spec.energies, t)))).T
    P = np.abs(psi_t @ basis.conj().T) ** 2
    return P @ np.arange(basis.shape[0])


def basis_complexity(psi_t: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """sum_n n |<B_n|psi(t)>|^2 for an arbitrary orthonormal basis (rows)."""
    P = np.abs(np.atleast_2d(psi_t) @ basis.conj().T) ** 2
    return P @ np.arange(basis.shape[0])


# --- spectral complexity -----------------------------------------------------

@dataclass
class SpectralComplexity:
    t: np.ndarray
    C: np.ndarray
    plateau: float
    skipped_pairs: int


def spectral_complexity(spec: SpectrumDecomp, beta: float, t_grid, chunk: int = 1 << 16) -> SpectralComplexity:
    """C_E(t) = 1/(Z(2 beta) d) sum_{E_i != E_j} (sin(t dE/2)/(dE/2))^2 exp(-beta(E_i+E_j)).

    Pairs with |E_i - E_j| below 1e-12 times the spectral width are skipped
    and counted.
    """
    E = spec.energies
    d = E.size
    E0 = E[0]
    w1 = np.exp(-beta * (E - E0))
    Z2 = np.sum(w1 ** 2)
    i, j = np.triu_indices(d, 1)
    gap = E[j] - E[i]
    width = max(E[-1] - E[0], 1e-300)
    keep = np.abs(gap) > 1e-12 * width
    skipped = 2 * int(np.count_nonzero(~keep))
    gap = gap[keep]
    wt = 2 * w1[i[keep]] * w1[j[keep]]  # ordered pairs counted twice
    t = np.asarray(t_grid, dtype=float)
    # (sin(t g/2)/(g/2))^2 = 2 (1 - cos(t g)) / g^2
    coef = 2 * wt / gap ** 2
    C = np.zeros(t.size)
    for s in range(0, gap.size, chunk):
        g = gap[s:s + chunk]
        c = coef[s:s + chunk]
        C += (1 - np.cos(np.outer(t, g))) @ c
    norm = Z2 * d
    return SpectralComplexity(t, C / norm, float(np.sum(coef) / norm), skipped)


def gue_spectral_complexity_analytic(N: int, t_grid) -> np.ndarray:
    """Closed-form GUE spectral complexity at infinite temperature (semicircle radius 2)."""
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    hyp = np.array([float(mp.hyp1f2(-0.5, 1, 2, -4 * x * x)) for x in t])
    r = np.sqrt((1 - t ** 2 / (4.0 * N * N)).astype(complex))
    tail = (t / (6 * np.pi)) * (t ** 2 / N ** 2 + 26) * r - (2 * N / np.pi) * (t ** 2 / N ** 2 + 1) * np.arcsin(r)
    return hyp - 1 + N - 16 * t / (3 * np.pi) + tail.real


# --- density matrices --------------------------------------------------------

@dataclass
class DensityChain:
    """Krylov chain of rho_0 under the Liouvillian, with rho_0 kept at unit trace.

    Elements are rho_n = s O_n with O_n orthonormal under Tr(A^dag B)/d and
    s^2 = P/d, so rho(t) = sum_n (-i)^n phi_n(t) rho_n with sum phi_n^2 = 1.
    """

    b: np.ndarray
    traces: np.ndarray
    purity: float
    elements: np.ndarray  # (D_K, d, d)
    flags: tuple = ()

    @property
    def krylov_dim(self) -> int:
        return self.elements.shape[0]

    def trace_products(self) -> np.ndarray:
        """(-1)^k prod_{j<=k} b_{2j-1}/b_{2j} for every even index 2k < D_K."""
        out = [1.0]
        for k in range(1, (self.krylov_dim - 1) // 2 + 1):
            out.append(-out[-1] * self.b[2 * k - 2] / self.b[2 * k - 1])
        return np.array(out)

    def identity_projection(self) -> np.ndarray:
        """(1/P) sum_k Tr(rho_2k) rho_2k, the projection of the identity on the Krylov space."""
        d = self.elements.shape[1]
        out = np.zeros((d, d), dtype=complex)
        for n in range(0, self.krylov_dim, 2):
            out += self.traces[n] * self.elements[n]
        return out / self.purity

    def amplitudes(self, t_grid, method: str = "eig") -> KrylovWavefunction:
        if self.krylov_dim == 1:
            t = np.asarray(t_grid, dtype=float)
            return KrylovWavefunction(t, np.ones((t.size, 1)), "density_matrix", "trivial")
        return propagate(ChainSpec(self.b, None, "density_matrix"), t_grid, method)

    def reconstruct(self, phi: np.ndarray) -> np.ndarray:
        """rho(t) from one row of amplitudes."""
        ph = (-1j) ** np.arange(self.krylov_dim) * np.asarray(phi)
        return np.tensordot(ph, self.elements, axes=1)

    def trace_constraint(self, phi: np.ndarray) -> np.ndarray:
        """sum_k phi_2k(t) (-1)^k Tr(rho_2k), which must stay 1."""
        phi = np.atleast_2d(phi)
        ev = np.arange(0, self.krylov_dim, 2)
        return phi[:, ev] @ ((-1.0) ** (ev // 2) * self.traces[ev].real)


def density_krylov(H, rho0, max_n: int | None = None, tol: float = 1e-10) -> DensityChain:
    Hm = as_matrix(H)
    rho = as_matrix(rho0)
    d = rho.shape[0]
    if hermitian_defect(rho) > tol:
        raise ValueError("rho0 must be Hermitian")
    if abs(np.trace(rho) - 1) > 1e-8:
        raise ValueError("rho0 must have unit trace")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -1e-8:
        raise ValueError("rho0 is not positive semidefinite")
    P = float(np.real(np.trace(rho @ rho)))
    s = np.sqrt(P / d)
    L = build_liouvillian(Hm)
    res = lanczos_operator(L, rho / s, max_n=max_n, store_basis=True)
    O = res.basis.reshape(-1, d, d)
    elements = s * O
    traces = np.trace(elements, axis1=1, axis2=2)
    flags = list(res.flags)
    for n, X in enumerate(elements):
        target = X if n % 2 == 0 else -X
        if np.max(np.abs(X.conj().T - target)) > 1e-8 * max(np.max(np.abs(X)), 1e-300):
            flags.append(f"hermiticity_alternation_broken:{n}")
            break
    return DensityChain(res.b, traces, P, elements, tuple(flags))
