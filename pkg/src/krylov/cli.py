"""Command-line driver.

Every subcommand builds a :class:`RunConfig` from inline flags, optionally
overridden by a TOML file passed with ``--config``, runs it, and writes CSV
data plus a ``manifest.json`` into ``--out``. Exit codes: 0 ok, 2 config
error, 3 flagged numerical breakdown, 4 resource guard.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import re
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from mpmath import mp
from scipy import stats

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .lattice import ChainSpec, cd_coefficients, complexity_trace, propagate
from .models import (FAMILIES, OracleSpec, RmtSpec, SykSpec, kramers_reduce, lmg_hamiltonian,
                     lmg_parity, lmg_seed, majorana_seed, mfim_hamiltonian, oracle, rmt_sample,
                     site_operator, syk_hamiltonian, syk_jumps)
from .opspace import (INFINITE, InnerProductSpec, build_adjoint_lindbladian, build_liouvillian,
                      norm, random_operator)
from .recursion import (PrecisionError, lanczos_from_moments, mock_autocorr_moments,
                        moments_from_autocorr, toda_lanczos)
from .states import (SpectrumDecomp, density_krylov, sff, spectral_complexity,
                     spread_complexity_tfd)
from .tridiag import arnoldi, bilanczos, lanczos_monic, lanczos_operator, lanczos_state

log = logging.getLogger("krylov")

EXIT_OK, EXIT_CONFIG, EXIT_BREAKDOWN, EXIT_RESOURCE = 0, 2, 3, 4
BREAKDOWN_FLAGS = {"serious_breakdown", "orthogonality_lost"}

KINDS = ("lanczos", "monic", "arnoldi", "bilanczos", "moments", "toda", "propagate",
         "complexity", "spread", "sff", "spectral-complexity", "density", "dos",
         "oracle-check", "cd")

# section -> key -> accepted types; anything else in a config file is an error
SCHEMA = {
    "run": {"kind": str, "out": str, "precision": str, "workers": int},
    "model": {"name": str, "N": int, "q": int, "J": float, "calJ": float, "seed_op": str,
              "g": float, "h": float, "bc": str, "s": float, "lam": float, "jumps": str,
              "family": str, "alpha": float, "eta": float, "j": float, "gamma": float,
              "u": float, "Delta": float, "beta": float, "lam_tilde": float, "d": int,
              "b": list, "D_K": int},
    "engine": {"max_n": int, "method": str, "mode": str, "symmetry": bool},
    "inner_product": {"kind": str, "beta": float},
    "time": {"t_min": float, "t_max": float, "n_t": int, "log": bool},
    "ensemble": {"samples": int, "seed": int},
    "postprocess": {"moving_average_order": int, "fit": str, "window": list},
}


class ConfigError(ValueError):
    pass


class Breakdown(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    kind: str
    model: dict = field(default_factory=dict)
    engine: dict = field(default_factory=dict)
    inner_product: dict = field(default_factory=dict)
    time: dict = field(default_factory=dict)
    ensemble: dict = field(default_factory=dict)
    postprocess: dict = field(default_factory=dict)
    out: str = "krylov-out"
    precision: str = "double"
    workers: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        for section in ("model", "engine", "inner_product", "time", "ensemble", "postprocess"):
            _check_section(section, getattr(self, section))
        precision_dps(self.precision)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("workers")  # parallelism never changes results
        return d

    @property
    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def samples(self) -> int:
        return int(self.ensemble.get("samples", 1))

    @property
    def seed(self) -> int:
        return int(self.ensemble.get("seed", 0))

    @property
    def dps(self) -> int:
        return precision_dps(self.precision)

    def sample_seeds(self) -> list[list[int]]:
        return [[self.seed, i] for i in range(self.samples)]


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    wall_time: float
    flags: list
    sample_seeds: list
    failed_samples: int
    outputs: list
    summary: dict

    def write(self, out: Path) -> Path:
        path = out / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, default=_json_default) + "\n")
        return path


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _check_section(name: str, values: dict) -> None:
    allowed = SCHEMA[name]
    for k, v in values.items():
        if k not in allowed:
            raise ConfigError(f"unknown key {name}.{k}")
        want = allowed[k]
        if want is float and isinstance(v, int) and not isinstance(v, bool):
            continue
        if want is int and isinstance(v, bool) or not isinstance(v, want):
            raise ConfigError(f"{name}.{k} must be {want.__name__}, got {type(v).__name__}")


def precision_dps(precision: str) -> int:
    if precision == "double":
        return 15
    m = re.fullmatch(r"ext:(\d+)", precision)
    if not m or int(m.group(1)) < 16:
        raise ConfigError("precision must be 'double' or 'ext:N' with N >= 16")
    return int(m.group(1))


def load_config_file(path) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for section in raw:
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(raw[section], dict):
            raise ConfigError(f"[{section}] must be a table")
        _check_section(section, raw[section])
    return raw


# --- postprocessing ------------------------------------------------------------

@dataclass
class FitReport:
    kind: str
    window: tuple
    slope: float
    intercept: float
    slope_stderr: float
    intercept_stderr: float


@dataclass
class PostprocessReport:
    raw: np.ndarray
    smoothed: np.ndarray
    fit: FitReport | None


def moving_average(y, k: int) -> np.ndarray:
    """Centered moving average of order k; the window shrinks at the ends."""
    y = np.asarray(y, dtype=float)
    if k < 1:
        raise ValueError("moving-average order must be >= 1")
    if k == 1:
        return y.copy()
    lo, hi = (k - 1) // 2, k // 2
    c = np.concatenate([[0.0], np.cumsum(y)])
    idx = np.arange(y.size)
    left = np.clip(idx - lo, 0, y.size)
    right = np.clip(idx + hi + 1, 0, y.size)
    return (c[right] - c[left]) / (right - left)


def fit_series(x, y, kind: str = "linear", window=None) -> FitReport:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    lo, hi = (x.min(), x.max()) if window is None else window
    sel = (x >= lo) & (x <= hi)
    if kind == "loglog":
        sel &= (x > 0) & (y > 0)
    if sel.sum() < 3:
        raise ValueError("fit window holds fewer than 3 points")
    xs, ys = x[sel], y[sel]
    if kind == "loglog":
        xs, ys = np.log(xs), np.log(ys)
    elif kind != "linear":
        raise ValueError("fit must be 'linear' or 'loglog'")
    r = stats.linregress(xs, ys)
    return FitReport(kind, (float(lo), float(hi)), float(r.slope), float(r.intercept),
                     float(r.stderr), float(r.intercept_stderr))


def log_variance(b, window=None) -> float:
    """Var(log(b_n / b_{n+1})) over n in the window (indices into b)."""
    b = np.asarray(b, dtype=float)
    lo, hi = (0, b.size - 1) if window is None else window
    seg = b[lo:hi + 1]
    if seg.size < 3:
        raise ValueError("window too small")
    return float(np.var(np.log(seg[:-1] / seg[1:])))


def postprocess(series, moving_average_order: int = 1, fit: str | None = None, window=None,
                x=None) -> PostprocessReport:
    y = np.asarray(series, dtype=float)
    sm = moving_average(y, moving_average_order)
    x = np.arange(1, y.size + 1) if x is None else np.asarray(x, dtype=float)
    rep = fit_series(x, sm, fit, window) if fit else None
    return PostprocessReport(y, sm, rep)


# --- model assembly --------------------------------------------------------------

def _ip(cfg: RunConfig) -> InnerProductSpec:
    kind = cfg.inner_product.get("kind", "infinite")
    if kind == "infinite":
        return INFINITE
    return InnerProductSpec(kind, float(cfg.inner_product.get("beta", 0.0)))


def _syk_spec(model: dict, sample: int, seed: int) -> SykSpec:
    return SykSpec(model.get("N", 10), model.get("q", 4), J=model.get("J"),
                   calJ=model.get("calJ", None if "J" in model else 1 / np.sqrt(2)),
                   seed=seed, sample=sample)


def _operator_problem(model: dict, sample: int, seed: int):
    """(H, seed operator, symmetry or None) for operator-growth runs."""
    name = model.get("name", "syk")
    if name == "syk":
        spec = _syk_spec(model, sample, seed)
        m = re.fullmatch(r"psi(\d+)", model.get("seed_op", "psi1"))
        if not m:
            raise ConfigError("syk seed_op must look like psi1")
        return syk_hamiltonian(spec), majorana_seed(spec.N, int(m.group(1)) - 1), None
    if name == "mfim":
        N = model.get("N", 6)
        H = mfim_hamiltonian(N, model.get("g", 1.0), model.get("h", 0.0), model.get("bc", "periodic"))
        m = re.fullmatch(r"([xyz])(\d+)", model.get("seed_op", "z1"))
        if not m:
            raise ConfigError("mfim seed_op must look like z1")
        pauli = {"x": [[0, 1], [1, 0]], "y": [[0, -1j], [1j, 0]], "z": [[1, 0], [0, -1]]}
        return H, site_operator(np.array(pauli[m.group(1)], dtype=complex), int(m.group(2)) - 1, N), None
    if name == "lmg":
        s = model.get("s", 25)
        return lmg_hamiltonian(s), lmg_seed(s), lmg_parity(s)
    raise ConfigError(f"model {name!r} has no operator-growth setup")


def _rmt_spectrum(model: dict, sample: int, seed: int) -> SpectrumDecomp:
    ens = model.get("name", "gue").upper()
    H = rmt_sample(RmtSpec(ens, model.get("N", 64), seed=seed, sample=sample))
    E = np.linalg.eigvalsh(H.entries)
    if ens == "GSE":
        E = kramers_reduce(E)
    return SpectrumDecomp.from_energies(E)


def _time_grid(cfg: RunConfig, t_max: float = 10.0, n_t: int = 201, log_default: bool = False):
    t0 = cfg.time.get("t_min", 1e-2 if cfg.time.get("log", log_default) else 0.0)
    t1 = cfg.time.get("t_max", t_max)
    n = cfg.time.get("n_t", n_t)
    if cfg.time.get("log", log_default):
        if t0 <= 0:
            raise ConfigError("log time grids need t_min > 0")
        return np.geomspace(t0, t1, n)
    return np.linspace(t0, t1, n)


def _spread_grid(cfg: RunConfig) -> np.ndarray:
    # the TFD plateau sets in near t ~ N for the default semicircle width
    return _time_grid(cfg, 10.0 * cfg.model.get("N", 64), 400)


def _oracle(model: dict):
    fam = model.get("family")
    if fam is None:
        raise ConfigError("an oracle family is required (--family)")
    names = {k.lower(): k for k in FAMILIES}
    if fam.lower() not in names:
        raise ConfigError(f"family must be one of {sorted(FAMILIES)}")
    cls = FAMILIES[names[fam.lower()]]
    keys = cls.__init__.__code__.co_varnames[1:cls.__init__.__code__.co_argcount]
    missing = [k for k in keys if k not in model]
    if missing:
        raise ConfigError(f"family {cls.__name__} needs {', '.join(missing)}")
    return oracle(OracleSpec(cls.__name__, {k: model[k] for k in keys}))


# --- per-sample workers (module level so they pickle) ---------------------------

def _sample_operator(kind: str, cfg: RunConfig, i: int) -> dict:
    H, O, sym = _operator_problem(cfg.model, i, cfg.seed)
    O = O / norm(O, _ip(cfg), H)
    L = build_liouvillian(H)
    max_n = cfg.engine.get("max_n")
    if kind == "monic":
        r = lanczos_monic(L, O, _ip(cfg), max_n=max_n)
        return {"a": r.a, "Delta": r.delta, "flags": []}
    r = lanczos_operator(L, O, _ip(cfg), max_n=max_n, method=cfg.engine.get("method", "eigen"),
                         symmetry=sym if cfg.engine.get("symmetry", False) else None)
    return {"b": r.b, "krylov_dim": r.krylov_dim, "flags": list(r.flags)}


def _sample_open(kind: str, cfg: RunConfig, i: int) -> dict:
    spec = _syk_spec(cfg.model, i, cfg.seed)
    H = syk_hamiltonian(spec).entries
    lam = cfg.model.get("lam", 0.0)
    js = syk_jumps(spec, cfg.model.get("jumps", "linear"), lam=lam)
    Lo = build_adjoint_lindbladian(H, list(js.jumps), list(js.rates), sign=js.sign(1))
    seed_op = majorana_seed(spec.N)
    max_n = cfg.engine.get("max_n", 20)
    if kind == "arnoldi":
        r = arnoldi(Lo, seed_op, max_n=max_n)
        return {"h_diag": np.diag(r.h[:-1]), "flags": list(getattr(r, "flags", ()))}
    r = bilanczos(Lo, seed_op, max_n=max_n, store_basis=False)
    return {"a": r.a, "b": r.b, "c": r.c, "flags": list(r.flags)}


def _sample_state(kind: str, cfg: RunConfig, i: int) -> dict:
    spec = _rmt_spectrum(cfg.model, i, cfg.seed)
    beta = cfg.model.get("beta", 0.0)
    if kind == "spread":
        res = spread_complexity_tfd(spec, beta, _spread_grid(cfg))
        return {"y": res.trace.K, "flags": list(res.lanczos.flags)}
    if kind == "sff":
        return {"y": sff(spec, beta, _time_grid(cfg, 1e3, 200, True)), "flags": []}
    if kind == "spectral-complexity":
        sc = spectral_complexity(spec, beta, _time_grid(cfg, 1e3, 200, True))
        return {"y": sc.C, "plateau": sc.plateau, "flags": []}
    # dos: mean state-Lanczos coefficients with the e_1 seed in the original basis
    ens = cfg.model.get("name", "gue").upper()
    H = rmt_sample(RmtSpec(ens, cfg.model.get("N", 64), seed=cfg.seed, sample=i)).entries
    e1 = np.zeros(H.shape[0], dtype=complex)
    e1[0] = 1
    r = lanczos_state(H, e1, mode=cfg.engine.get("mode", "hessenberg"))
    return {"a": r.a, "b": r.b, "flags": list(r.flags)}


def _dispatch(kind: str, cfg: RunConfig, i: int) -> dict:
    if kind in ("lanczos", "monic"):
        return _sample_operator(kind, cfg, i)
    if kind in ("arnoldi", "bilanczos"):
        return _sample_open(kind, cfg, i)
    return _sample_state(kind, cfg, i)


def _ensemble(cfg: RunConfig, workers: int) -> tuple[list[dict], int]:
    idx = range(cfg.samples)
    failed = 0
    out: list[dict] = []
    if workers > 1 and cfg.samples > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_dispatch, cfg.kind, cfg, i) for i in idx]
            results = []
            for i, f in enumerate(futs):
                try:
                    results.append(f.result())
                except (ArithmeticError, np.linalg.LinAlgError) as exc:
                    log.warning("sample %d excluded: %s", i, exc)
                    failed += 1
            return results, failed
    for i in idx:
        try:
            out.append(_dispatch(cfg.kind, cfg, i))
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            log.warning("sample %d excluded: %s", i, exc)
            failed += 1
    return out, failed


def _stack(rows: list, key: str) -> np.ndarray:
    """Ragged per-sample sequences padded with NaN to a common length."""
    seqs = [np.asarray(r[key]) for r in rows]
    n = max(s.size for s in seqs)
    dtype = complex if any(np.iscomplexobj(s) for s in seqs) else float
    M = np.full((len(seqs), n), np.nan, dtype=dtype)
    for k, s in enumerate(seqs):
        M[k, :s.size] = s
    return M


def _mean_err(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(M, axis=0)
        cnt = np.sum(~np.isnan(M), axis=0)
        err = np.where(cnt > 1, np.nanstd(M, axis=0, ddof=1) / np.sqrt(np.maximum(cnt, 1)), np.nan) \
            if M.shape[0] > 1 else np.zeros(M.shape[1])
    return mean, err


# --- writers --------------------------------------------------------------------

class _Writer:
    def __init__(self, out: Path, cfg: RunConfig):
        self.out, self.cfg, self.files = out, cfg, []

    def csv(self, name: str, header: list[str], cols) -> None:
        path = self.out / name
        data = np.column_stack([np.asarray(c) for c in cols])
        with open(path, "w") as fh:
            fh.write(f"# manifest=manifest.json config_hash={self.cfg.hash}\n")
            fh.write(",".join(header) + "\n")
            np.savetxt(fh, data, delimiter=",", fmt="%.17g")
        self.files.append(name)

    def json(self, name: str, obj) -> None:
        (self.out / name).write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")
        self.files.append(name)


PLOT_STUB = '''"""Plot any CSV written by krylov: first column on x, the rest on y."""
import sys

import matplotlib.pyplot as plt
import numpy as np

path = sys.argv[1]
with open(path) as fh:
    fh.readline()
    names = fh.readline().strip().split(",")
data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
for k in range(1, data.shape[1]):
    plt.plot(data[:, 0], data[:, k], label=names[k])
plt.xlabel(names[0])
plt.legend()
plt.show()
'''


# --- handlers -------------------------------------------------------------------

def _postprocess_block(cfg: RunConfig, y, x=None) -> dict:
    pp = cfg.postprocess
    if not pp:
        return {}
    rep = postprocess(y, pp.get("moving_average_order", 1), pp.get("fit"),
                      tuple(pp["window"]) if "window" in pp else None, x)
    out = {"smoothed": rep.smoothed}
    if rep.fit is not None:
        out["fit"] = asdict(rep.fit)
    if "window" in pp and x is None:
        lo, hi = (int(v) - 1 for v in pp["window"])
        out["log_variance"] = log_variance(y, (max(lo, 0), min(hi, len(y) - 1)))
    return out


def _run_ensemble_kind(cfg: RunConfig, w: _Writer, workers: int) -> tuple[dict, list, int]:
    rows, failed = _ensemble(cfg, workers)
    if not rows:
        raise Breakdown("every sample failed")
    flags = sorted({f for r in rows for f in r.get("flags", [])})
    summary: dict = {"samples_used": len(rows)}
    k = cfg.kind
    if k == "lanczos":
        B = _stack(rows, "b")
        mean, err = _mean_err(B)
        n = np.arange(1, mean.size + 1)
        w.csv("coefficients.csv", ["n", "b_mean", "b_stderr"], [n, mean, err])
        w.csv("coefficients_samples.csv", ["sample", "n", "b"],
              [np.repeat(np.arange(B.shape[0]), B.shape[1]), np.tile(n, B.shape[0]), B.reshape(-1)])
        summary["krylov_dim"] = [r["krylov_dim"] for r in rows]
        summary.update(_postprocess_block(cfg, mean))
    elif k == "monic":
        A, D = _stack(rows, "a"), _stack(rows, "Delta")
        am, dm = _mean_err(A)[0], _mean_err(D)[0]
        w.csv("monic.csv", ["n", "a", "Delta"], [np.arange(am.size), am, np.concatenate([[np.nan], dm])[:am.size]])
    elif k == "arnoldi":
        Hd = np.abs(_stack(rows, "h_diag"))
        mean, err = _mean_err(Hd)
        w.csv("arnoldi.csv", ["n", "abs_h_nn", "stderr"], [np.arange(mean.size), mean, err])
    elif k == "bilanczos":
        A, B, C = _stack(rows, "a"), _stack(rows, "b"), _stack(rows, "c")
        am = np.nanmean(A, axis=0)
        bm = np.nanmean(B, axis=0)
        cm = np.nanmean(C.real, axis=0)
        n = np.arange(am.size)
        pad = lambda v: np.concatenate([[np.nan], v])[:am.size]  # noqa: E731
        w.csv("bilanczos.csv", ["n", "a_re", "a_im", "b", "c"], [n, am.real, am.imag, pad(bm.real), pad(cm)])
        summary.update(_postprocess_block(cfg, np.abs(am), x=n))
    elif k in ("spread", "sff", "spectral-complexity"):
        Y = _stack(rows, "y")
        mean, err = _mean_err(Y)
        t = _spread_grid(cfg) if k == "spread" else _time_grid(cfg, 1e3, 200, True)
        name = {"spread": "K", "sff": "sff", "spectral-complexity": "C"}[k]
        w.csv(f"{k.replace('-', '_')}.csv", ["t", name, "stderr"], [t, mean, err])
        tail = mean[int(0.8 * mean.size):]
        summary["late_time_mean"] = float(np.mean(tail))
        if k == "spectral-complexity":
            summary["plateau"] = float(np.mean([r["plateau"] for r in rows]))
    elif k == "dos":
        A, B = _stack(rows, "a"), _stack(rows, "b")
        am, bm = _mean_err(A)[0], _mean_err(B)[0]
        N = am.size
        w.csv("mean_lanczos.csv", ["x", "a", "b"],
              [np.arange(N - 1) / N, am[:N - 1], bm])
    return summary, flags, failed


def _run_single(cfg: RunConfig, w: _Writer) -> tuple[dict, list]:
    k, m = cfg.kind, cfg.model
    summary: dict = {}
    flags: list = []
    n_max = cfg.engine.get("max_n", 20)
    if k in ("moments", "toda"):
        fam = m.get("family", "")
        with mp.workdps(cfg.dps):
            if fam.lower() == "mock":
                mom = mock_autocorr_moments(2 * n_max + 2)
                co = lanczos_from_moments(mom, n_max, exact=True, dps=cfg.dps)
                ref = None
            else:
                orc = _oracle(m)
                if k == "moments":
                    mom = moments_from_autocorr(orc.autocorr(), 2 * n_max + 2, dps=cfg.dps)
                    co = lanczos_from_moments(mom, n_max, dps=cfg.dps)
                else:
                    tab = toda_lanczos(orc.autocorr(), n_max, dps=cfg.dps)
                    co = None
                    a_t, b_t = tab.a, tab.b
                    summary["hirota_max_residual"] = float(max(tab.hirota_residuals(), default=0))
                ref = orc.b(n_max)
            if k == "moments":
                a_c, b_c = co.as_complex()
                w.csv("moments.csv", ["n", "m_re", "m_im"],
                      [np.arange(len(mom)), mom.as_complex().real, mom.as_complex().imag])
            else:
                a_c = np.array([complex(x) for x in a_t])
                b_c = np.array([complex(x) for x in b_t])
        n = np.arange(1, b_c.size + 1)
        cols = [n, b_c.real, a_c[1:b_c.size + 1].real, a_c[1:b_c.size + 1].imag]
        head = ["n", "b", "a_re", "a_im"]
        if ref is not None:
            r = np.asarray(ref)[:b_c.size]
            cols.append(r)
            head.append("b_oracle")
            summary["max_rel_err_vs_oracle"] = float(np.max(np.abs(b_c.real - r) / np.abs(r)))
        w.csv("coefficients.csv", head, cols)
    elif k in ("propagate", "complexity"):
        if "b" in m:
            chain = ChainSpec(np.asarray(m["b"], dtype=float), None, "closed_operator")
            orc = None
        else:
            orc = _oracle(m)
            # finite chains are taken whole; infinite ones are cut at max_n
            chain = orc.chain(orc.length - 1 if orc.finite else cfg.engine.get("max_n", 3000))
        t = _time_grid(cfg, 3.0, 301)
        wf = propagate(chain, t)
        if k == "propagate":
            P = wf.probabilities
            w.csv("probabilities.csv", ["t"] + [f"p{j}" for j in range(P.shape[1])], [t, *P.T])
        else:
            tr = complexity_trace(wf)
            cols, head = [t, tr.K, tr.varK, tr.S, tr.Z], ["t", "K", "varK", "S", "Z"]
            if orc is not None:
                cols.append(orc.K(t))
                head.append("K_exact")
                summary["max_abs_err_K"] = float(np.max(np.abs(tr.K - orc.K(t))))
            w.csv("complexity.csv", head, cols)
            flags = list(tr.flags)
    elif k == "oracle-check":
        summary, flags = oracle_check(_oracle(m), cfg)
        w.json("residuals.json", summary)
    elif k == "density":
        d = m.get("d", 4)
        rng = np.random.default_rng([cfg.seed, 0])
        H = random_operator(rng, d, hermitian=True)
        A = random_operator(rng, d)
        rho = A @ A.conj().T
        rho /= np.trace(rho).real
        ch = density_krylov(H, rho)
        w.csv("density_chain.csv", ["n", "trace"], [np.arange(ch.traces.size), ch.traces.real])
        w.csv("density_b.csv", ["n", "b"], [np.arange(1, ch.b.size + 1), ch.b])
        summary = {"krylov_dim": ch.krylov_dim, "purity": ch.purity}
        flags = list(ch.flags)
    elif k == "cd":
        b = m.get("b")
        if b is None:
            raise ConfigError("cd needs coefficients (--b)")
        res = cd_coefficients(b, m.get("D_K"))
        w.csv("cd.csv", ["k", "alpha"], [np.arange(1, res.alpha.size + 1), res.alpha])
        summary = {"norm_sq": float(res.norm_sq)}
    return summary, flags


def oracle_check(orc, cfg: RunConfig) -> tuple[dict, list]:
    """Residuals of an oracle against the moment route and the propagated chain."""
    n_coef = min(cfg.engine.get("max_n", 10), 15)
    out: dict = {}
    with mp.workdps(max(cfg.dps, 40)):
        mom = moments_from_autocorr(orc.autocorr(), 2 * n_coef + 2, dps=max(cfg.dps, 40))
        a_m, b_m = lanczos_from_moments(mom, n_coef).as_complex()
    b_o = np.asarray(orc.b(n_coef))[:b_m.size]
    out["coefficients_max_rel_err"] = float(np.max(np.abs(b_m - b_o) / np.abs(b_o)))
    a_o = np.asarray(orc.a(n_coef))[:a_m.size]
    out["a_max_abs_err"] = float(np.max(np.abs(a_m - a_o)))
    t = _time_grid(cfg, 2.0, 101)
    n_chain = 4000  # tail weight beyond this is below 1e-16 on the default grid
    chain = orc.chain(n_chain if not orc.finite else orc.length - 1)
    tr = complexity_trace(propagate(chain, t, "eig" if chain.hermitian else "expm"))
    Kx, Vx = orc.K(t), orc.varK(t)
    scale = max(1.0, float(np.max(np.abs(Kx))))
    out["K_max_err"] = float(np.max(np.abs(tr.K - Kx))) / scale
    out["varK_max_err"] = float(np.max(np.abs(tr.varK - Vx))) / max(1.0, float(np.max(np.abs(Vx))))
    out["max_residual"] = max(out.values())
    return out, list(tr.flags)


def run(cfg: RunConfig, workers: int | None = None) -> RunManifest:
    t0 = time.perf_counter()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    w = _Writer(out, cfg)
    workers = workers or cfg.workers or os.cpu_count() or 1
    failed = 0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if cfg.kind in ("lanczos", "monic", "arnoldi", "bilanczos", "spread", "sff",
                        "spectral-complexity", "dos"):
            summary, flags, failed = _run_ensemble_kind(cfg, w, workers)
        else:
            summary, flags = _run_single(cfg, w)
    flags = list(flags) + sorted({f"warning: {c.message}" for c in caught})
    (out / "plot_stub.py").write_text(PLOT_STUB)
    w.files.append("plot_stub.py")
    w.json("config.json", cfg.to_dict())
    man = RunManifest(cfg.hash, __version__, time.perf_counter() - t0, flags, cfg.sample_seeds(),
                      failed, w.files, summary)
    man.write(out)
    return man


# --- argument parsing ---------------------------------------------------------------

# flag dest -> (section, key)
FLAG_MAP = {
    "model": ("model", "name"), "N": ("model", "N"), "q": ("model", "q"), "J": ("model", "J"),
    "calJ": ("model", "calJ"), "seed_op": ("model", "seed_op"), "g": ("model", "g"),
    "h": ("model", "h"), "bc": ("model", "bc"), "s": ("model", "s"), "lam": ("model", "lam"),
    "jumps": ("model", "jumps"), "family": ("model", "family"), "alpha": ("model", "alpha"),
    "eta": ("model", "eta"), "j": ("model", "j"), "gamma": ("model", "gamma"), "u": ("model", "u"),
    "Delta": ("model", "Delta"), "beta": ("model", "beta"), "lam_tilde": ("model", "lam_tilde"),
    "d": ("model", "d"), "b": ("model", "b"), "D_K": ("model", "D_K"),
    "max_n": ("engine", "max_n"), "method": ("engine", "method"), "mode": ("engine", "mode"),
    "symmetry": ("engine", "symmetry"),
    "ip": ("inner_product", "kind"), "ip_beta": ("inner_product", "beta"),
    "t_min": ("time", "t_min"), "t_max": ("time", "t_max"), "n_t": ("time", "n_t"),
    "log_time": ("time", "log"),
    "samples": ("ensemble", "samples"), "seed": ("ensemble", "seed"),
    "ma_order": ("postprocess", "moving_average_order"), "fit": ("postprocess", "fit"),
    "fit_window": ("postprocess", "window"),
}


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run")
    g.add_argument("--config", help="TOML file; its values override inline flags")
    g.add_argument("--out", help="output directory")
    g.add_argument("--samples", type=int)
    g.add_argument("--seed", type=int, help="master seed")
    g.add_argument("--precision", help="double or ext:N (N significant digits)")
    g.add_argument("--workers", type=int, help="worker processes (default: all cores)")
    g = common.add_argument_group("model")
    g.add_argument("--model", help="syk, mfim, lmg, gue, goe or gse")
    for name, typ in [("N", int), ("q", int), ("J", float), ("calJ", float), ("g", float),
                      ("h", float), ("s", float), ("lam", float), ("alpha", float),
                      ("eta", float), ("j", float), ("gamma", float), ("u", float),
                      ("Delta", float), ("beta", float), ("d", int), ("D-K", int)]:
        g.add_argument(f"--{name}", type=typ, dest=name.replace("-", "_"))
    g.add_argument("--lam-tilde", type=float, dest="lam_tilde")
    g.add_argument("--seed-op", dest="seed_op", help="psi1 (syk), z1 (mfim)")
    g.add_argument("--bc", choices=["open", "periodic"])
    g.add_argument("--jumps", choices=["linear", "p_body"])
    g.add_argument("--family", help="oracle family, or 'mock' for the Bell-number moments")
    g.add_argument("--b", type=_floats, help="comma-separated chain coefficients")
    g = common.add_argument_group("engine")
    g.add_argument("--max-n", type=int, dest="max_n")
    g.add_argument("--method", choices=["eigen", "commutator"])
    g.add_argument("--mode", choices=["lanczos", "hessenberg"])
    g.add_argument("--symmetry", action="store_true", default=None,
                   help="resolve the model's conserved parity (lmg)")
    g.add_argument("--ip", choices=["infinite", "wightman", "standard"])
    g.add_argument("--ip-beta", type=float, dest="ip_beta")
    g = common.add_argument_group("time grid")
    g.add_argument("--t-min", type=float, dest="t_min")
    g.add_argument("--t-max", type=float, dest="t_max")
    g.add_argument("--n-t", type=int, dest="n_t")
    g.add_argument("--log-time", action="store_true", default=None, dest="log_time")
    g = common.add_argument_group("postprocess")
    g.add_argument("--ma-order", type=int, dest="ma_order")
    g.add_argument("--fit", choices=["linear", "loglog"])
    g.add_argument("--fit-window", type=_floats, dest="fit_window")

    p = argparse.ArgumentParser(prog="krylov", description="Krylov-space numerics.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="kind", required=True)
    for k in KINDS:
        sub.add_parser(k, parents=[common])
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    sections: dict = {s: {} for s in SCHEMA}
    for dest, (sec, key) in FLAG_MAP.items():
        v = getattr(ns, dest, None)
        if v is not None:
            sections[sec][key] = v
    run_sec = {"kind": ns.kind, "out": ns.out or f"krylov-out/{ns.kind}",
               "precision": ns.precision or "double"}
    if ns.workers is not None:
        run_sec["workers"] = ns.workers
    if ns.config:
        raw = load_config_file(ns.config)
        for sec, vals in raw.items():
            if sec == "run":
                run_sec.update(vals)
            else:
                sections[sec].update(vals)
    if run_sec["kind"] != ns.kind:
        raise ConfigError(f"config kind {run_sec['kind']!r} does not match subcommand {ns.kind!r}")
    return RunConfig(kind=run_sec["kind"], out=run_sec["out"], precision=run_sec["precision"],
                     workers=run_sec.get("workers"),
                     **{s: sections[s] for s in SCHEMA if s != "run"})


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(ns)
        man = run(cfg, ns.workers)
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MemoryError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (Breakdown, PrecisionError, np.linalg.LinAlgError) as exc:
        print(f"numerical breakdown: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps({"out": cfg.out, "config_hash": man.config_hash, "flags": man.flags,
                      "summary": {k: v for k, v in man.summary.items() if np.ndim(v) == 0}},
                     default=_json_default))
    if BREAKDOWN_FLAGS & set(man.flags):
        return EXIT_BREAKDOWN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
