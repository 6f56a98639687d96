"""End-to-end acceptance checks, one test per criterion.

Each test records a single ACC line (shown in the terminal summary) before asserting.
"""
import warnings

import mpmath as mp
import numpy as np
import pytest
from scipy.linalg import eigh_tridiagonal

from krylov.cli import fit_series, log_variance
from krylov.lattice import (ChainSpec, algebra_check, bkl_chain, central_derivative,
                            complexity_trace, dispersion_bound_check, open_saturation, propagate)
from krylov.models import (HW, SL2R, SU2, Cft, LargeQSyk, OpenExact, RmtSpec, SykSpec,
                           lmg_hamiltonian, lmg_parity, lmg_seed, majorana_seed, mfim_hamiltonian,
                           rmt_sample, site_operator, syk_hamiltonian, syk_jumps)
from krylov.opspace import build_adjoint_lindbladian, build_liouvillian, norm, random_operator
from krylov.recursion import (MomentSequence, lanczos_from_moments, mock_autocorr_moments,
                              moments_from_autocorr, toda_lanczos)
from krylov.states import (SpectrumDecomp, density_krylov, gue_spectral_complexity_analytic, sff,
                           spectral_complexity, spread_complexity_tfd)
from krylov.tridiag import arnoldi, bilanczos, lanczos_operator, lanczos_state

EPS = np.finfo(float).eps


def within(value: float, target: float, rel: float) -> tuple[bool, str]:
    return abs(value - target) <= rel * abs(target), f"{value:.6g} vs {target:.6g} (rel {rel:g})"


def at_most(value: float, bound: float) -> tuple[bool, str]:
    return value <= bound, f"{value:.3g} <= {bound:g}"


def gue_spectrum(N: int, sample: int) -> SpectrumDecomp:
    H = rmt_sample(RmtSpec("GUE", N, sample=sample)).entries
    return SpectrumDecomp.from_energies(np.linalg.eigvalsh(H))


def infinite_time_K(b: np.ndarray) -> float:
    # time average of sum_n n |phi_n|^2 for a non-degenerate chain spectrum
    _, V = eigh_tridiagonal(np.zeros(b.size + 1), b, lapack_driver="stev")
    n = np.arange(b.size + 1)
    return float(np.sum(V[0] ** 2 * (n @ V ** 2)))


# --- 1 -----------------------------------------------------------------------------

def test_acc01_coherent_state_oracles(verdict):
    t = np.linspace(0, 3, 301)
    parts = {}
    for eta in (1.0, 1.5):
        K = complexity_trace(propagate(SL2R(1.0, eta).chain(3000), t)).K
        parts[f"SL2R eta={eta}"] = at_most(np.max(np.abs(K - eta * np.sinh(t) ** 2)), 1e-6)
    K = complexity_trace(propagate(HW(1.0).chain(3000), t)).K
    parts["HW"] = at_most(np.max(np.abs(K - t ** 2)), 1e-6)
    period = np.linspace(0, np.pi, 315)
    for j in (3, 25):
        K = complexity_trace(propagate(SU2(1.0, j).chain(2 * j), period)).K
        parts[f"SU2 j={j}"] = at_most(np.max(np.abs(K - 2 * j * np.sin(period) ** 2)), 1e-6)
    verdict(1, "coherent-state oracles", parts)


# --- 2 -----------------------------------------------------------------------------

def test_acc02_moment_method_sech_gaussian(verdict):
    n = np.arange(1, 21)
    parts = {}
    for name, orc, target in (("sech", SL2R(1.0, 1.0), n.astype(float)),
                              ("gaussian", HW(1.0), np.sqrt(n))):
        with mp.workdps(60):
            m = moments_from_autocorr(orc.autocorr(), 41, dps=60)
            _, b = lanczos_from_moments(m, 20, dps=60).as_real()
        parts[name] = at_most(np.max(np.abs(b - target) / target), 1e-10)
    verdict(2, "moment method on sech and Gaussian", parts)


# --- 3 -----------------------------------------------------------------------------

def test_acc03_toda_equals_moments(verdict):
    n = np.arange(1, 16)
    beta = np.pi
    parts = {}
    for Delta in (0.5, 1.0, 2.0):
        orc = Cft(Delta, beta)
        target = (np.pi / beta) * np.sqrt(n * (n - 1 + 2 * Delta))
        with mp.workdps(60):
            m = moments_from_autocorr(orc.autocorr(), 31, dps=60)
            b_mom = lanczos_from_moments(m, 15, dps=60).as_real()[1]
            tab = toda_lanczos(orc.autocorr(), 15, dps=60)
            b_toda = np.array([float(mp.re(x)) for x in tab.b])
        err = max(np.max(np.abs(b_mom - target) / target), np.max(np.abs(b_toda - target) / target))
        parts[f"Delta={Delta}"] = at_most(err, 1e-8)
    verdict(3, "Toda and moment routes on the CFT autocorrelation", parts)


# --- 4 -----------------------------------------------------------------------------

def test_acc04_large_q_syk(verdict):
    parts = {}
    calJ = 1.0
    dev = {}
    for q in (4, 100, 1000):
        orc = LargeQSyk(calJ, q)
        with mp.workdps(60):
            _, b = lanczos_from_moments(orc.moments(42, dps=60), 20, dps=60).as_real()
        lead = orc.leading_b(20)
        if q == 4:
            parts["b1 = calJ sqrt(2/q)"] = at_most(abs(b[0] / lead[0] - 1), 1e-12)
        dev[q] = np.max(np.abs(b[1:] - lead[1:]))
    # corrections to the n > 1 coefficients are O(1/q)
    ratio = dev[100] / dev[1000]
    parts["b_n>1 leading order"] = (8 <= ratio <= 12, f"deviation ratio q=100/q=1000 is {ratio:.3f}")
    q = 4
    t = np.linspace(0, 3, 301)[1:]
    tr = complexity_trace(propagate(LargeQSyk(calJ, q).chain(3000), np.concatenate([[0], t])))
    K_exact = (2 / q) * np.sinh(calJ * t) ** 2
    V_exact = (1 / (2 * q)) * np.sinh(2 * calJ * t) ** 2
    parts["K"] = at_most(np.max(np.abs(tr.K[1:] / K_exact - 1)), 1e-6)
    parts["Delta K^2"] = at_most(np.max(np.abs(tr.varK[1:] / V_exact - 1)), 1e-6)
    verdict(4, "large-q SYK oracle", parts)


# --- 5 -----------------------------------------------------------------------------

@pytest.mark.slow
def test_acc05_syk_q4_plateau(verdict):
    parts = {}
    for N in (14, 16, 18):
        B = []
        for s in range(20):
            spec = SykSpec(N, 4, calJ=1 / np.sqrt(2), sample=s)
            H = syk_hamiltonian(spec).entries
            res = lanczos_operator(build_liouvillian(H), majorana_seed(N), max_n=26)
            B.append(res.b[:25])
        b = np.mean(B, axis=0)
        plateau = float(np.mean(b[14:25]))
        rise = np.polyfit(np.arange(1, 5), b[:4], 1)[0]
        flat = np.polyfit(np.arange(15, 26), b[14:25], 1)[0]
        parts[f"N={N} plateau"] = within(plateau, 0.0465 * N + 0.0337, 0.10)
        parts[f"N={N} linear then flat"] = (rise > 5 * abs(flat),
                                           f"slope {rise:.3f} early, {flat:.4f} on plateau")
    verdict(5, "SYK q=4 Lanczos plateau", parts)


# --- 6 -----------------------------------------------------------------------------

@pytest.mark.slow
def test_acc06_dissipative_syk(verdict):
    N, samples, n_max = 16, 10, 8
    window = np.arange(4)  # 2n+1 <= N/2
    runs = {}
    for lam in (0.0, 0.1, 0.2):
        A, B, Hd = [], [], []
        for s in range(samples):
            spec = SykSpec(N, 4, calJ=1 / np.sqrt(2), sample=s)
            H = syk_hamiltonian(spec).entries
            js = syk_jumps(spec, "linear", lam=lam)
            Lo = build_adjoint_lindbladian(H, list(js.jumps), list(js.rates), sign=js.sign(1))
            res = bilanczos(Lo, majorana_seed(N), max_n=n_max, store_basis=False)
            A.append(res.a[:n_max])
            B.append(res.b[:n_max])
            if lam > 0:
                Hd.append(np.abs(np.diag(arnoldi(Lo, majorana_seed(N), max_n=n_max).h)[:n_max]))
        runs[lam] = (np.array(A), np.array(B).real, np.array(Hd))
    B0 = runs[0.0][1]
    parts = {}
    for lam in (0.1, 0.2):
        A, B, Hd = runs[lam]
        abs_a = np.abs(A).mean(axis=0)
        slope = np.polyfit(window, abs_a[window], 1)[0]
        parts[f"lam={lam} |a_n| slope"] = within(slope, 2 * lam, 0.15)
        se = np.sqrt(B.var(axis=0, ddof=1) / samples + B0.var(axis=0, ddof=1) / samples)
        n_b = window[1:] - 1  # b_1..b_3
        dev = np.abs(B.mean(axis=0) - B0.mean(axis=0))[n_b] / (2 * se[n_b])
        parts[f"lam={lam} b_n vs lam=0"] = at_most(float(np.max(dev)), 1.0)
        re = np.max(np.abs(A.real) / np.abs(A))
        parts[f"lam={lam} Re a_n"] = at_most(float(re), 1e-6)
        h = Hd.mean(axis=0)
        parts[f"lam={lam} Arnoldi"] = at_most(float(np.max(np.abs(h[window] / abs_a[window] - 1))), 0.10)
    verdict(6, "dissipative SYK bi-Lanczos", parts)


# --- 7 -----------------------------------------------------------------------------

def test_acc07_exact_open_chain(verdict):
    h = 0.01
    t = np.arange(0, 20 + h / 2, h)
    parts = {}
    for gamma, u, eta in ((1.0, 0.05, 1.5), (1.0, 0.2, 1.0)):
        orc = OpenExact(gamma, u, eta)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tr = complexity_trace(propagate(orc.chain(400), t, "expm"))
        tag = f"(gamma,u,eta)=({gamma},{u},{eta})"
        parts[f"{tag} K"] = at_most(float(np.max(np.abs(tr.K - orc.K(t)))), 1e-6)
        sat = open_saturation(u, eta)
        parts[f"{tag} saturation"] = at_most(abs(tr.K[-1] - sat) + abs(sat - (eta / (2 * u) - eta / 2)), 1e-6)
        dlogZ = central_derivative(np.log(tr.Z), h)[2:-2]
        rhs = -2 * u * gamma * (2 * tr.K + eta)[2:-2]
        parts[f"{tag} dlogZ"] = at_most(float(np.max(np.abs(dlogZ / rhs - 1))), 1e-4)
    verdict(7, "exact open chain", parts)


# --- 8 -----------------------------------------------------------------------------

@pytest.mark.slow
def test_acc08_gue_mean_state_lanczos(verdict):
    N = 1024
    e1 = np.zeros(N, dtype=complex)
    e1[0] = 1
    A, B = [], []
    for s in range(20):
        H = rmt_sample(RmtSpec("GUE", N, sample=s)).entries
        res = lanczos_state(H, e1, mode="hessenberg")
        A.append(res.a)
        B.append(res.b)
    a, b = np.mean(A, axis=0), np.mean(B, axis=0)
    x = np.arange(1, N) / N
    sel = x <= 0.9
    verdict(8, "GUE mean state-Lanczos coefficients", {
        "b(x) vs sqrt(1-x)": at_most(float(np.max(np.abs(b[sel] - np.sqrt(1 - x[sel])))), 0.05),
        "|a(x)|": at_most(float(np.max(np.abs(a))), 0.05),
    })


# --- 9 -----------------------------------------------------------------------------

@pytest.mark.slow
def test_acc09_spread_plateau(verdict):
    N = 512
    t = np.concatenate([np.linspace(0, 50, 101)[:-1], np.geomspace(50, 1e5, 60)])
    late = t >= 1e4
    plateaus = {0.0: [], 2.0: [], 5.0: []}
    for s in range(100):
        spec = gue_spectrum(N, s)
        for beta in plateaus:
            K = spread_complexity_tfd(spec, beta, t).trace.K
            plateaus[beta].append(np.mean(K[late]))
    p = {beta: float(np.mean(v)) for beta, v in plateaus.items()}
    verdict(9, "spread complexity plateau", {
        "beta=0 plateau": within(p[0.0], (N - 1) / 2, 0.05),
        "decreasing in beta": (p[0.0] > p[2.0] > p[5.0],
                               f"{p[0.0]:.2f} > {p[2.0]:.2f} > {p[5.0]:.2f}"),
    })


# --- 10 ----------------------------------------------------------------------------

@pytest.mark.slow
def test_acc10_spectral_complexity(verdict):
    N, samples = 512, 100
    early = np.geomspace(1e-3, 1e-2, 10)
    slope_t = np.linspace(5, 25, 21)
    ramp = np.linspace(0.5, N, 60)
    t = np.concatenate([early, slope_t, ramp])
    C = np.zeros(t.size)
    plateau = []
    for s in range(samples):
        sc = spectral_complexity(gue_spectrum(N, s), 0.0, t)
        C += sc.C
        plateau.append(sc.plateau)
    C /= samples
    ne, ns = early.size, slope_t.size
    analytic = gue_spectral_complexity_analytic(N, ramp)
    exponent = fit_series(early, C[:ne], "loglog").slope
    slope = fit_series(slope_t, C[ne:ne + ns], "linear").slope
    verdict(10, "spectral complexity", {
        "ramp vs analytic": at_most(float(np.max(np.abs(C[ne + ns:] / analytic - 1))), 0.05),
        "plateau": within(float(np.mean(plateau)), N - 1, 0.05),
        "early exponent": (abs(exponent - 2) <= 0.05, f"{exponent:.4f} vs 2 (+-0.05)"),
        "ramp slope": within(slope, 16 / (3 * np.pi), 0.10),
    })


# --- 11 ----------------------------------------------------------------------------

@pytest.mark.slow
def test_acc11_sff_plateau(verdict):
    d = 128
    t = np.geomspace(1e3, 1e4, 50)
    acc = np.zeros(t.size)
    for s in range(1000):
        acc += sff(gue_spectrum(d, s), 0.0, t)
    late = float(np.mean(acc / 1000))
    verdict(11, "SFF dip-ramp-plateau", {"plateau": within(late, 1 / d, 0.15)})


# --- 12 ----------------------------------------------------------------------------

def test_acc12_algebra_and_bounds(verdict):
    rng = np.random.default_rng(12)
    closure = [SL2R(1.0, 1.0).chain(2500), SL2R(0.7, 2.5).chain(2500), HW(1.3).chain(2500),
               SU2(1.0, 3).chain(6), SU2(1.0, 25).chain(50), bkl_chain(4, 202, 2500)]
    randoms = [ChainSpec(rng.uniform(0.3, 2.0, 80)) for _ in range(50)]
    comm = max(max(r.km_error, r.kl_error) for r in map(algebra_check, closure + randoms))
    t = np.linspace(0, 3, 1001)
    holds = [dispersion_bound_check(propagate(c, t), c.b[0]).holds for c in randoms]
    tt = np.linspace(0, 1.5, 1501)  # keeps K well inside the 2500-site chains
    sat = max(float(np.max(np.abs(dispersion_bound_check(propagate(c, tt), c.b[0], floor=1e-6).ratio - 1)))
              for c in closure)
    verdict(12, "algebra and dispersion bound", {
        "commutators": at_most(comm / EPS, 2.0),
        "bound on 50 random chains": (all(holds), f"{sum(holds)}/50 hold"),
        "saturation": at_most(sat, 1e-6),
    })


# --- 13 ----------------------------------------------------------------------------

def test_acc13_density_chain(verdict):
    rng = np.random.default_rng(13)
    odd = prod = purity = ident = 0.0
    t = np.linspace(0, 5, 26)
    for k in range(20):
        d = 4 if k < 10 else 8
        H = random_operator(rng, d, hermitian=True)
        A = random_operator(rng, d)
        rho = A @ A.conj().T
        rho /= np.trace(rho).real
        ch = density_krylov(H, rho)
        odd = max(odd, float(np.max(np.abs(ch.traces[1::2]), initial=0.0)))
        even = ch.traces[0::2].real
        prod = max(prod, float(np.max(np.abs(even / ch.trace_products() - 1))))
        wf = ch.amplitudes(t)
        for row in wf.amp:
            r = ch.reconstruct(row)
            purity = max(purity, abs(np.trace(r @ r).real - ch.purity))
        L = build_liouvillian(H)
        ident = max(ident, float(np.max(np.abs(L.apply(ch.identity_projection())))) / np.max(np.abs(H)))
    verdict(13, "density-matrix chain", {
        "odd traces": at_most(odd, 1e-10),
        "even-trace products": at_most(prod, 1e-8),
        "purity": at_most(purity, 1e-9),
        "identity annihilated": at_most(ident, 1e-8),
    })


# --- 14 ----------------------------------------------------------------------------

@pytest.fixture(scope="module")
def mfim_chains():
    N = 6
    Z = site_operator(np.diag([1.0, -1.0]).astype(complex), 0, N)
    out = {}
    for name, g, h in (("integrable", 1.0, 0.0), ("chaotic", -1.05, 0.5)):
        H = mfim_hamiltonian(N, g, h, "periodic")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = lanczos_operator(build_liouvillian(H), Z / norm(Z))
        out[name] = res
    return out


@pytest.mark.slow
def test_acc14_mfim_integrability_contrast(verdict, mfim_chains):
    integ, chaos = mfim_chains["integrable"], mfim_chains["chaotic"]
    dv_i, dv_c = log_variance(integ.b), log_variance(chaos.b)
    K_i, K_c = infinite_time_K(integ.b), infinite_time_K(chaos.b)
    verdict(14, "MFIM integrability contrast", {
        "D_K integrable": (integ.krylov_dim == 4033, f"{integ.krylov_dim} vs 4033"),
        "D_K chaotic": (chaos.krylov_dim == 4033, f"{chaos.krylov_dim} vs 4033"),
        "log-variance contrast": (dv_i >= 2 * dv_c, f"{dv_i:.3f} vs {dv_c:.3f}"),
        "late-time K": (K_c > K_i, f"{K_c:.1f} > {K_i:.1f}"),
    })


# --- 15 ----------------------------------------------------------------------------

@pytest.mark.slow
def test_acc15_lmg_saddle(verdict):
    s = 25
    O = lmg_seed(s)
    res = lanczos_operator(build_liouvillian(lmg_hamiltonian(s)), O / norm(O), symmetry=lmg_parity(s))
    slope = fit_series(np.arange(1, 13), res.b[:12], "linear").slope
    verdict(15, "LMG saddle scrambling", {
        "b_n slope": within(slope, np.sqrt(3) / 2, 0.10),
        "D_K": within(res.krylov_dim, 1250, 0.05),
    })


# --- 16 ----------------------------------------------------------------------------

def test_acc16_mock_autocorrelation_splitting(verdict):
    n_max = 80
    bell = mock_autocorr_moments(2 * n_max + 2)
    m = MomentSequence(bell.m, "operator", 60)
    with mp.workdps(60):
        _, b = lanczos_from_moments(m, n_max, exact=False, dps=60).as_real()
    n = np.arange(1, n_max + 1)
    tail = n >= 30
    even = fit_series(n[tail & (n % 2 == 0)], b[tail & (n % 2 == 0)], "loglog").slope
    odd = fit_series(n[tail & (n % 2 == 1)], b[tail & (n % 2 == 1)], "loglog").slope
    gap = b[29:n_max - 2:2] - b[30:n_max - 1:2]  # b_2k - b_2k+1 for 2k = 30..78
    verdict(16, "mock autocorrelation splitting", {
        "even branch exponent": (abs(even - 1) <= 0.15, f"{even:.3f} vs 1 (+-0.15)"),
        "odd branch exponent": (abs(odd - 0.5) <= 0.15, f"{odd:.3f} vs 0.5 (+-0.15)"),
        "branches diverge": (bool(np.all(np.diff(gap) > 0)), f"gap {gap[0]:.2f} -> {gap[-1]:.2f}"),
    })
