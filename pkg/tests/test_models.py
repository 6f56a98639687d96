import math

import numpy as np
import pytest
from mpmath import mp
from scipy import stats

from krylov import majorana
from krylov.lattice import complexity_trace, propagate
from krylov.models import (FAMILIES, HW, SL2R, SU2, Cft, DissSykAutocorr, LargeQSyk, OpenExact,
                           OracleSpec, RmtSpec, SykSpec, dissipative_triangle, dos_from_mean_lanczos,
                           kramers_reduce, lmg_hamiltonian, lmg_parity, lmg_seed, majorana_seed,
                           mean_lanczos_from_dos, mfim_hamiltonian, oracle, p_body_rate, rmt_sample,
                           semicircle_cdf, semicircle_density, site_operator, syk_hamiltonian,
                           syk_jumps)
from krylov.opspace import Wightman, build_adjoint_lindbladian, build_liouvillian, norm
from krylov.recursion import lanczos_from_moments, moments_from_autocorr
from krylov.tridiag import lanczos_operator

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)


# --- SYK ---------------------------------------------------------------------

def test_syk_spec_conventions():
    s = SykSpec(10, 4, J=1.3)
    assert s.variance == pytest.approx(math.factorial(3) * 1.3 ** 2 / 10 ** 3)
    assert s.script_J == pytest.approx(math.sqrt(2 ** -3 * 4) * 1.3)
    t = SykSpec(10, 4, calJ=s.script_J)
    assert t.coupling == pytest.approx(1.3)
    for bad in [dict(N=7, J=1), dict(N=8, q=3, J=1), dict(N=4, q=6, J=1), dict(N=8), dict(N=8, J=1, calJ=1)]:
        with pytest.raises(ValueError):
            SykSpec(**bad)


def test_syk_couplings_reproducible():
    a = SykSpec(8, 4, J=1, seed=3, sample=2).couplings()
    b = SykSpec(8, 4, J=1, seed=3, sample=2).couplings()
    c = SykSpec(8, 4, J=1, seed=3, sample=1).couplings()
    assert a.size == math.comb(8, 4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_majorana_anticommutators_exact():
    # strings have entries in {0, +-1, +-i}, so {S_a, S_b} = 2 delta_ab holds exactly;
    # 1/sqrt(2) squared is not representable, which costs one ulp after normalizing
    S = [s.matrix() for s in majorana.majorana_strings(8)]
    psi = majorana.majorana_operators(8)
    I = np.eye(16)
    worst_s = worst_psi = 0.0
    for a in range(8):
        for b in range(8):
            worst_s = max(worst_s, np.max(np.abs(S[a] @ S[b] + S[b] @ S[a] - 2 * (a == b) * I)))
            ac = psi[a] @ psi[b] + psi[b] @ psi[a]
            worst_psi = max(worst_psi, np.max(np.abs(ac - (a == b) * I)))
    assert worst_s == 0
    assert worst_psi <= np.finfo(float).eps


def test_syk_hamiltonian_structure():
    spec = SykSpec(10, 4, J=1.0, seed=1)
    H = syk_hamiltonian(spec).entries
    assert H.shape == (32, 32)
    assert np.max(np.abs(H - H.conj().T)) == 0
    # Majorana strings are orthonormal, so Tr H^2 / d = 2^{-q} sum J^2
    assert np.trace(H @ H).real / 32 == pytest.approx(np.sum(spec.couplings() ** 2) / 16, rel=1e-12)
    with pytest.raises(MemoryError):
        syk_hamiltonian(SykSpec(28, 4, J=1))


def test_majorana_seed_unit_norm():
    O = majorana_seed(8, 3)
    assert norm(O) == pytest.approx(1)
    assert np.allclose(O @ O, np.eye(16))


def test_free_syk_coefficients_bounded():
    N = 10
    H = syk_hamiltonian(SykSpec(N, 2, calJ=1.0)).entries
    width = np.ptp(np.linalg.eigvalsh(H))
    for method in ("commutator", "spectral"):
        res = lanczos_operator(build_liouvillian(H), majorana_seed(N), max_n=60, method=method)
        # a single Majorana only mixes with the N one-body Majoranas
        assert res.krylov_dim == N
        assert np.max(res.b) <= width


def test_interacting_syk_initial_growth():
    N = 12
    H = syk_hamiltonian(SykSpec(N, 4, calJ=1 / np.sqrt(2))).entries
    res = lanczos_operator(build_liouvillian(H), majorana_seed(N), max_n=10)
    assert np.all(np.diff(res.b[:4]) > 0)


def test_linear_jumps():
    spec = SykSpec(8, 4, J=1)
    assert syk_jumps(spec, "linear", lam=0).jumps == ()
    js = syk_jumps(spec, "linear", lam=0.3)
    assert len(js.jumps) == 8 and js.rates == (0.3,) * 8
    assert js.sign(1) == -1 and js.sign(2) == 1
    with pytest.raises(ValueError):
        syk_jumps(spec, "linear", lam=-1)
    with pytest.raises(ValueError):
        syk_jumps(spec, "p_body", p=3, V=1)
    with pytest.raises(ValueError):
        syk_jumps(spec, "p_body", p=2, V=-1)
    with pytest.raises(ValueError):
        syk_jumps(spec, "bath")


@pytest.mark.parametrize("s", [1, 2, 3])
def test_linear_jump_size_eigenrelation(s):
    N, lam = 8, 0.37
    spec = SykSpec(N, 4, J=1)
    js = syk_jumps(spec, "linear", lam=lam)
    strings = majorana.majorana_strings(N)
    O = majorana.string_product(strings, range(1, 2 * s, 2)[:s]).matrix()
    L = build_adjoint_lindbladian(np.zeros((16, 16)), js.jumps, js.rates, sign=js.sign(s))
    out = L.dissipative_part(O)
    assert np.max(np.abs(out - 1j * lam * s * O)) <= 1e-14


def test_two_body_jump_rate():
    # ensemble-mean diagonal element of D on a size-s string, M = N jumps (R = 1)
    N, V, samples = 12, 0.8, 12
    spec = SykSpec(N, 4, J=1)
    strings = majorana.majorana_strings(N)
    d = 2 ** (N // 2)
    zeros = np.zeros((d, d))
    for s in (1, 2, 3):
        O = majorana.string_product(strings, range(s)).matrix()
        diag, leak = [], []
        for k in range(samples):
            js = syk_jumps(spec, "p_body", p=2, V=V, M=N, seed=k)
            L = build_adjoint_lindbladian(zeros, js.jumps, js.rates, sign=js.sign(s))
            DO = L.dissipator(O)
            diag.append(np.vdot(O, DO).real / d)
            leak.append(DO - diag[-1] * O)
        mean, se = np.mean(diag), np.std(diag, ddof=1) / np.sqrt(samples)
        assert abs(-mean - p_body_rate(1.0, V, 2, s, N)) <= 3 * se
        # the off-string part has zero ensemble mean: its mean shrinks like 1/sqrt(samples)
        single = np.sqrt(np.mean([np.linalg.norm(x) ** 2 for x in leak]))
        assert np.linalg.norm(np.mean(leak, axis=0)) <= 3 * single / np.sqrt(samples)
    assert p_body_rate(1.0, V, 2, 3) == pytest.approx(V ** 2 * 3)


# --- spin chains -------------------------------------------------------------

def test_mfim_two_sites_by_hand():
    H = mfim_hamiltonian(2, 1.0, 0.0, bc="open")
    ZZ = np.kron(SZ, SZ)
    X = np.kron(SX, np.eye(2)) + np.kron(np.eye(2), SX)
    assert np.allclose(H.entries, -ZZ - X)
    assert "integrable" in H.tag
    assert "chaotic" in mfim_hamiltonian(4, -1.05, 0.5).tag
    with pytest.raises(MemoryError):
        mfim_hamiltonian(15, 1, 0)
    with pytest.raises(ValueError):
        mfim_hamiltonian(4, 1, 0, bc="twisted")


def test_mfim_periodic_bonds():
    H = mfim_hamiltonian(3, 0.0, 0.0).entries
    # all-up state: three bonds
    assert H[0, 0].real == pytest.approx(-3)


def test_site_operator():
    Z1 = site_operator(SZ, 1, 3)
    assert np.allclose(Z1, np.kron(np.eye(2), np.kron(SZ, np.eye(2))))


def test_lmg_half_spin_by_hand():
    H = lmg_hamiltonian(0.5).entries
    assert np.allclose(H, SX / 2 + np.eye(2))
    assert np.allclose(lmg_seed(0.5), SZ)


def test_lmg_parity():
    s = 4
    H, P, Z = lmg_hamiltonian(s).entries, lmg_parity(s), lmg_seed(s)
    assert np.allclose(P @ H, H @ P)
    assert np.allclose(P @ Z @ P, -Z)


# --- random matrices ---------------------------------------------------------

def test_rmt_symmetry_classes():
    goe = rmt_sample(RmtSpec("GOE", 20, seed=1)).entries
    assert np.all(goe.imag == 0) and np.array_equal(goe, goe.T)
    gue = rmt_sample(RmtSpec("GUE", 20, seed=1)).entries
    assert np.array_equal(gue, gue.conj().T)
    gse = rmt_sample(RmtSpec("GSE", 8, seed=1)).entries
    assert gse.shape == (16, 16) and np.allclose(gse, gse.conj().T)
    E = np.linalg.eigvalsh(gse)
    assert np.max(np.abs(E[0::2] - E[1::2])) <= 1e-12
    assert np.allclose(kramers_reduce(E), E[0::2])
    with pytest.raises(ValueError):
        RmtSpec("GXE", 4)
    with pytest.raises(ValueError):
        RmtSpec("GUE", 4, sigma=0)


def test_gue_component_variances():
    N, sigma = 400, 0.7
    H = rmt_sample(RmtSpec("GUE", N, sigma=sigma, seed=2)).entries
    iu = np.triu_indices(N, 1)
    assert np.var(np.diag(H).real) == pytest.approx(sigma ** 2, rel=0.15)
    assert np.var(H[iu].real) == pytest.approx(sigma ** 2 / 2, rel=0.02)
    assert np.var(H[iu].imag) == pytest.approx(sigma ** 2 / 2, rel=0.02)


def test_gue_semicircle():
    E = np.concatenate([np.linalg.eigvalsh(rmt_sample(RmtSpec("GUE", 1024, seed=0, sample=k)).entries)
                        for k in range(20)])
    ks = stats.kstest(E, semicircle_cdf).statistic
    assert ks <= 0.02
    x = np.linspace(-2, 2, 2001)
    assert np.trapezoid(semicircle_density(x), x) == pytest.approx(1, abs=1e-4)
    assert semicircle_density(np.array([0.0]))[0] == pytest.approx(1 / np.pi)


# --- density of states and mean coefficients ----------------------------------

def test_dos_from_sqrt_profile_is_semicircle():
    E = np.linspace(-1.9, 1.9, 39)
    rho = dos_from_mean_lanczos(lambda x: 0.0, lambda x: math.sqrt(1 - x), E)
    assert np.max(np.abs(rho - np.sqrt(4 - E ** 2) / (2 * np.pi))) <= 1e-3


def test_dos_constant_profile_is_arcsine():
    E = np.linspace(-1.9, 1.9, 39)
    rho = dos_from_mean_lanczos(lambda x: 0.0, lambda x: 1.0, E)
    assert np.max(np.abs(rho - 1 / (np.pi * np.sqrt(4 - E ** 2)))) <= 1e-8


def test_mean_lanczos_inverse_round_trip():
    x = np.linspace(0.02, 0.9, 23)
    rho = lambda E: math.sqrt(max(4 - E * E, 0.0)) / (2 * math.pi)
    b = mean_lanczos_from_dos(rho, x, support=2.0)
    assert np.max(np.abs(b - np.sqrt(1 - x))) <= 5e-3


# --- oracles -------------------------------------------------------------------

ORACLES = [SL2R(1.0, 1.0), SL2R(0.8, 1.5), HW(1.2), SU2(1.0, 3), SU2(0.7, 2.5),
           OpenExact(1.0, 0.1, 1.5), OpenExact(0.7, 0.4, 0.8), LargeQSyk(1.0, 8),
           Cft(1.0, 2 * np.pi), DissSykAutocorr(1.0, 0.5, 4)]


@pytest.mark.parametrize("orc", ORACLES, ids=lambda o: type(o).__name__)
def test_oracle_propagation_reproduces_closed_forms(orc):
    t = np.linspace(0, 2.5, 126) if not orc.finite else np.linspace(0, np.pi / orc.alpha, 126)
    chain = orc.chain(orc.length - 1 if orc.finite else 2000)
    method = "expm" if orc.open else "eig"
    wf = propagate(chain, t, method)
    n_cmp = min(30, chain.size - 1)
    assert np.max(np.abs(wf.amp[:, :n_cmp + 1] - orc.phi(t, n_cmp))) <= 1e-7
    tr = complexity_trace(wf)
    assert np.max(np.abs(tr.K - orc.K(t))) <= 1e-7
    assert np.max(np.abs(tr.Z - orc.Z(t))) <= 1e-7


@pytest.mark.parametrize("orc", ORACLES, ids=lambda o: type(o).__name__)
def test_oracle_autocorrelation_reproduces_coefficients(orc):
    n = 20 if not orc.finite else orc.length - 1
    with mp.workdps(80):
        mom = moments_from_autocorr(orc.autocorr(), 2 * n + 1, dps=80)
        a, b = lanczos_from_moments(mom, n, dps=80).as_complex()
    b_ref = orc.b(n)
    a_ref = orc.a(n)
    a, b = a[:n], b[:n]
    assert np.max(np.abs(b - b_ref) / np.abs(b_ref)) <= 1e-8
    # moments use exp(i L t); the open-chain on-site terms come out as +i|a_n|
    assert np.max(np.abs(a - a_ref[:n])) <= 1e-8 * max(1.0, np.max(np.abs(a_ref)))


@pytest.mark.parametrize("orc", ORACLES, ids=lambda o: type(o).__name__)
def test_oracle_internal_consistency(orc):
    t = np.linspace(0.05, 1.5, 30) if not orc.finite else np.linspace(0.05, 1.2, 30)
    n = 25 if not orc.finite else orc.length - 1
    h = 1e-3
    phi = orc.phi(t, n + 1) if not orc.finite else orc.phi(t, n)
    Z = (phi ** 2).sum(axis=1) if not orc.finite else (phi ** 2).sum(axis=1)
    if orc.finite:
        assert np.max(np.abs(Z - 1)) <= 1e-10
    # fourth-order central difference of each amplitude against the chain equation
    stencil = [(orc.phi(t + k * h, n + 1 if not orc.finite else n)) for k in (-2, -1, 1, 2)]
    dphi = (stencil[0] - 8 * stencil[1] + 8 * stencil[2] - stencil[3]) / (12 * h)
    b = np.concatenate([[0.0], orc.b(n + 1 if not orc.finite else n), [0.0]])
    a = np.abs(orc.a(n + 1 if not orc.finite else n))
    m = phi.shape[1] - 1
    rhs = np.zeros_like(phi)
    for k in range(m):
        rhs[:, k] = -a[k] * phi[:, k] + b[k] * (phi[:, k - 1] if k else 0) - b[k + 1] * phi[:, k + 1]
    assert np.max(np.abs(dphi[:, :m] - rhs[:, :m])) <= 1e-10 * max(1.0, np.max(b)) * 1e2


def test_largeq_leading_coefficients():
    orc = LargeQSyk(1.3, 10)
    b = orc.leading_b(5)
    assert b[0] == pytest.approx(1.3 * math.sqrt(0.2))
    assert np.allclose(b[1:], 1.3 * np.sqrt(np.arange(2, 6) * np.arange(1, 5)))
    # the SL(2,R) chain at eta = 2/q agrees with the leading form up to O(1/q)
    assert np.max(np.abs(orc.b(5) - b) / b) <= 2 / 10


def test_open_exact_loss_closed_form():
    orc = OpenExact(1.2, 0.3, 1.5)
    t = np.linspace(0, 3, 31)
    phi = orc.phi(t, 600)
    Z = (1 - 0.09 + 0.3 * (0.3 * np.cosh(2.4 * t) + np.sinh(2.4 * t))) ** (-1.5)
    assert np.max(np.abs((phi ** 2).sum(axis=1) - Z)) <= 1e-10


def test_cft_unit_dimension():
    beta = 3.0
    b = Cft(1.0, beta).b(6)
    n = np.arange(1, 7)
    assert np.allclose(b, (np.pi / beta) * np.sqrt(n * (n + 1)), rtol=1e-14)


def test_dissipative_leading_coefficients():
    orc = DissSykAutocorr(1.0, 0.6, 1e6)
    assert np.allclose(orc.leading_a(3), 1j * 0.6 * np.arange(4))
    assert orc.gamma == pytest.approx(math.sqrt(0.09 + 1))
    assert orc.u == pytest.approx(0.3 / orc.gamma)


def test_dissipative_reduced_moments():
    T = dissipative_triangle(7)
    assert T[3] == [1, 2] and T[5] == [1, 22, 16]
    red = DissSykAutocorr(1.0, 0.5, 4).reduced_moments(8)
    listed = {1: {1: 0.5}, 2: {0: 1}, 3: {1: 1}, 4: {2: 1, 0: 2}, 5: {3: 1, 1: 8},
              6: {4: 1, 2: 22, 0: 16}, 8: {6: 1, 4: 114, 2: 720, 0: 272}}
    for n, poly in listed.items():
        assert red[n] == poly
    # m~_7 from the triangle; the listed w^2 and constant terms do not fit the sequence
    assert red[7] == {5: 1, 3: 52, 1: 136}


def test_oracle_factory_and_domains():
    assert isinstance(oracle(OracleSpec("SU2", {"alpha": 1.0, "j": 2})), SU2)
    assert set(FAMILIES) == {"SL2R", "HW", "SU2", "OpenExact", "LargeQSyk", "Cft", "DissSykAutocorr"}
    with pytest.raises(ValueError):
        OracleSpec("Toy")
    for bad in [lambda: SL2R(0, 1), lambda: SL2R(1, 0), lambda: HW(-1), lambda: SU2(1, 1.3),
                lambda: OpenExact(1, 1.0, 1), lambda: Cft(0, 1), lambda: LargeQSyk(1, 0),
                lambda: DissSykAutocorr(1, -0.1, 4)]:
        with pytest.raises(ValueError):
            bad()


def test_finite_temperature_growth_decreases_with_beta():
    # growth rate from b_n = alpha n over the operator-growth window n <= 3
    N = 16
    slopes = []
    for bJ in (0.0, 1.0, 3.0):
        vals = []
        for sample in range(3):
            spec = SykSpec(N, 4, calJ=1 / np.sqrt(2), sample=sample)
            H = syk_hamiltonian(spec).entries
            ip = Wightman(bJ / spec.script_J)
            O = majorana_seed(N)
            res = lanczos_operator(build_liouvillian(H), O / norm(O, ip, H), ip=ip, max_n=3)
            n = np.arange(1, 4)
            vals.append(np.dot(n, res.b[:3]) / np.dot(n, n))
        slopes.append(np.mean(vals))
    assert slopes[0] > slopes[1] > slopes[2]
    assert slopes[0] <= 1 / np.sqrt(2) * 1.05


@pytest.mark.slow
def test_lmg_growth_slope():
    s = 25
    H = lmg_hamiltonian(s).entries
    res = lanczos_operator(build_liouvillian(H), lmg_seed(s) / norm(lmg_seed(s)), symmetry=lmg_parity(s))
    # H is already rescaled, so res.b are the rescaled coefficients
    n = np.arange(1, 13)
    slope = stats.linregress(n, res.b[:12]).slope
    assert slope == pytest.approx(np.sqrt(3) / 2, rel=0.1)
