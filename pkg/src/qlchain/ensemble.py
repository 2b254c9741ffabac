"""Disorder ensembles: sampling, per-realization runs and aggregation.

Realization ``i`` draws its couplings from the stream
``SeedSequence(seed, spawn_key=(i, attempt))``. A draw whose poles turn out
degenerate or unresolved is replaced by the next attempt, so results depend
only on ``(seed, i)`` and never on worker count or completion order.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.optimize import curve_fit

from .errors import DegeneracyError, StabilityError, ValidationError
from .model import BathConfig, ChainSpec, PinningStyle, onsite_frequencies

__all__ = [
    "DisorderSpec",
    "Aggregate",
    "EnsembleResult",
    "ScalingFit",
    "OccupationScatter",
    "OBSERVABLES",
    "realization_rng",
    "sample_chain",
    "run_realization",
    "run_ensemble",
    "interior_slopes",
    "fit_scaling",
    "flux_length_scan",
    "occupation_ensemble",
]

OBSERVABLES = ("J", "G_th", "E", "T_R", "omega_eff", "Omega_eff", "n", "T_fit")
_NEEDS_GROUND = {"T_R", "omega_eff", "Omega_eff", "n", "T_fit"}
MAX_REJECTION_RATE = 0.10


@dataclass(frozen=True)
class DisorderSpec:
    """Couplings ``f = mean +- width``, Gaussian, truncated at ``cutoff * mean``."""

    mean: float
    width: float
    symmetric: bool = False
    cutoff: float = 0.05
    omega0: float = 1.0
    pinning: str = PinningStyle.ONSITE_EVERYWHERE.value

    def __post_init__(self):
        if not math.isfinite(self.mean) or self.mean <= 0:
            raise ValidationError(f"disorder.mean: must be positive, got {self.mean!r}")
        if not math.isfinite(self.width) or self.width < 0:
            raise ValidationError(f"disorder.width: must be non-negative, got {self.width!r}")
        if not 0 < self.cutoff < 1:
            raise ValidationError(f"disorder.cutoff: must lie in (0, 1), got {self.cutoff!r}")
        if self.width >= self.mean:
            raise ValidationError("disorder.width: must be below the mean for the cutoff to be harmless")
        PinningStyle.parse(self.pinning)


def realization_rng(seed: int, index: int, attempt: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index), int(attempt))))


def _draw(disorder: DisorderSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    out = rng.normal(disorder.mean, disorder.width, n)
    floor = disorder.cutoff * disorder.mean
    bad = out < floor
    while np.any(bad):
        out[bad] = rng.normal(disorder.mean, disorder.width, int(bad.sum()))
        bad = out < floor
    return out


def sample_chain(disorder: DisorderSpec, length: int, rng: np.random.Generator) -> ChainSpec:
    if length < 2:
        raise ValidationError("length: chain needs at least 2 sites")
    bonds = length - 1
    if disorder.symmetric:
        half = _draw(disorder, math.ceil(bonds / 2), rng)
        f = np.concatenate([half, half[: bonds // 2][::-1]])
    else:
        f = _draw(disorder, bonds, rng)
    return ChainSpec(onsite_frequencies(length, disorder.pinning, disorder.omega0), f)


@dataclass(frozen=True)
class Aggregate:
    """Mean over ``k`` realizations with both error-of-mean conventions.

    ``std`` is the population standard deviation; ``stderr = std / sqrt(k-1)``
    and ``stderr_linear = std / (k-1)``.
    """

    mean: np.ndarray
    std: np.ndarray
    k: int

    @property
    def stderr(self):
        return self.std / math.sqrt(self.k - 1) if self.k > 1 else np.full_like(self.std, np.nan)

    @property
    def stderr_linear(self):
        return self.std / (self.k - 1) if self.k > 1 else np.full_like(self.std, np.nan)

    @classmethod
    def of(cls, samples) -> "Aggregate":
        a = np.asarray(samples, dtype=float)
        return cls(a.mean(axis=0), a.std(axis=0), a.shape[0])


@dataclass
class EnsembleResult:
    disorder: DisorderSpec
    length: int
    bath: BathConfig
    seed: int
    rows: list = field(repr=False)
    rejections: int = 0

    @property
    def k(self) -> int:
        return len(self.rows)

    def samples(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def aggregate(self, name: str) -> Aggregate:
        return Aggregate.of(self.samples(name))

    @property
    def observables(self) -> list[str]:
        return [k for k in OBSERVABLES if self.rows and k in self.rows[0]]


def run_realization(disorder: DisorderSpec, length: int, bath: BathConfig, observables, seed: int, index: int,
                    classical: bool = False, max_attempts: int = 20) -> dict:
    """One realization as a JSON-ready row; rejected draws are counted."""
    from .observables import solve_steady_state

    wanted = set(observables)
    unknown = wanted - set(OBSERVABLES)
    if unknown:
        raise ValidationError(f"unknown observables: {sorted(unknown)}")
    rejected = []
    for attempt in range(max_attempts):
        spec = sample_chain(disorder, length, realization_rng(seed, index, attempt))
        try:
            st = solve_steady_state(spec, bath, classical=classical)
            row = {"index": index, "attempt": attempt, "couplings": spec.couplings.tolist()}
            if wanted & {"J", "G_th"}:
                fl = st.flux()
                row["J"], row["G_th"] = fl.J, fl.G_th
            if "E" in wanted:
                row["E"] = st.energies().tolist()
            if wanted & {"T_R", "omega_eff"}:
                prof = st.profile()
                row["T_R"], row["omega_eff"] = prof.T_R.tolist(), prof.omega_eff.tolist()
            if wanted & {"Omega_eff", "n", "T_fit"}:
                occ = st.occupations()
                order = np.argsort(occ.Omega_eff)
                row["Omega_eff"] = occ.Omega_eff[order].tolist()
                row["n"] = occ.n[order].tolist()
                row["T_fit"] = occ.T_fit
            row["rejected"] = rejected
            return {k: v for k, v in row.items() if k not in OBSERVABLES or k in wanted}
        except (DegeneracyError, StabilityError) as exc:
            rejected.append(f"{type(exc).__name__}: {exc}")
    raise ValidationError(f"realization {index}: {max_attempts} consecutive draws rejected")


def _job(args):
    return run_realization(*args)


def _load_rows(store: Path, seed: int) -> dict[int, dict]:
    done = {}
    if store.exists():
        with store.open() as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError:
                    continue  # torn final line from an interrupted run
                if row.get("seed") == seed:
                    done[row["index"]] = row
    return done


def _append(store: Path, row: dict) -> None:
    with store.open("a") as fh:
        fh.write(json.dumps(row) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def run_ensemble(
    disorder: DisorderSpec,
    length: int,
    bath: BathConfig,
    observables=("J",),
    k: int = 1,
    seed: int = 0,
    workers: int = 1,
    classical: bool = False,
    store: str | Path | None = None,
) -> EnsembleResult:
    """Run realizations ``0..k-1``; ``store`` is a JSONL file enabling resume."""
    if k < 1:
        raise ValidationError("k: need at least one realization")
    observables = tuple(observables)
    store = Path(store) if store is not None else None
    done = _load_rows(store, seed) if store is not None else {}
    todo = [i for i in range(k) if i not in done]
    args = [(disorder, length, bath, observables, seed, i, classical) for i in todo]

    def finish(row):
        row["seed"] = seed
        if store is not None:
            _append(store, row)
        done[row["index"]] = row

    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for row in pool.map(_job, args):
                finish(row)
    else:
        for a in args:
            finish(_job(a))

    rows = [done[i] for i in range(k)]
    rejections = sum(len(r["rejected"]) for r in rows)
    if rejections > MAX_REJECTION_RATE * (k + rejections):
        raise ValidationError(
            f"{rejections} of {k + rejections} draws rejected (> {MAX_REJECTION_RATE:.0%}); parameters look pathological"
        )
    return EnsembleResult(disorder, length, bath, seed, rows, rejections)


def interior_slopes(result: EnsembleResult, name: str = "T_R", first: int = 3, last: int | None = None) -> Aggregate:
    """Least-squares slope of a site profile over sites ``first..last`` (1-based), per realization."""
    prof = result.samples(name)
    last = result.length - 2 if last is None else last
    sites = np.arange(first, last + 1)
    slopes = np.polyfit(sites, prof[:, first - 1 : last].T, 1)[0]
    return Aggregate.of(slopes)


@dataclass(frozen=True)
class ScalingFit:
    """``J = dT / (R_c + R x)`` with ``x = l`` or ``x = sqrt(l)``."""

    model: str
    R_c: float
    R: float
    residual: float
    preferred: bool = False


def _fit_one(x, J, err, scale):
    y = 1.0 / J
    R, Rc = np.polyfit(x, y * scale, 1)

    def model(x, Rc, R):
        return scale / (Rc + R * x)

    sigma = err if np.all(err > 0) else None
    try:
        (Rc, R), _ = curve_fit(model, x, J, p0=(Rc, R), sigma=sigma, absolute_sigma=sigma is not None, maxfev=10000)
    except RuntimeError:
        pass
    r = (J - model(x, Rc, R)) / (sigma if sigma is not None else 1.0)
    return float(Rc), float(R), float(np.sum(r**2))


def fit_scaling(lengths, J, stderr, dT: float = 1.0) -> tuple[ScalingFit, ScalingFit]:
    """Weighted fits of both resistance laws; the one with smaller residual is preferred."""
    l = np.asarray(lengths, float)
    J, err = np.asarray(J, float), np.asarray(stderr, float)
    err = np.where(np.isfinite(err), err, 0.0)
    fits = []
    for name, x in (("linear", l), ("sqrt", np.sqrt(l))):
        fits.append((name, *_fit_one(x, J, err, dT)))
    best = min(range(2), key=lambda i: fits[i][3])
    return tuple(ScalingFit(n, rc, r, res, i == best) for i, (n, rc, r, res) in enumerate(fits))


def flux_length_scan(disorder: DisorderSpec, bath: BathConfig, lengths, k: int, seed: int = 0, workers: int = 1,
                     store_dir: str | Path | None = None):
    """Rows ``(l, J_mean, sigma_J, stderr, stderr_linear)`` and both scaling fits.

    Also returns the Spearman rank correlation of mean J against l.
    """
    lengths = [int(x) for x in lengths]
    if any(b <= a for a, b in zip(lengths, lengths[1:])):
        raise ValidationError("lengths must be ascending")
    if lengths[-1] > 75:
        raise ValidationError("lengths: chains beyond l = 75 are out of range")
    rows = []
    for l in lengths:
        store = Path(store_dir) / f"flux_l{l}.jsonl" if store_dir is not None else None
        res = run_ensemble(disorder, l, bath, ("J",), k, seed, workers, store=store)
        a = res.aggregate("J")
        rows.append((l, float(a.mean), float(a.std), float(a.stderr), float(a.stderr_linear)))
    arr = np.array(rows)
    fits = fit_scaling(arr[:, 0], arr[:, 1], arr[:, 3], bath.Ta - bath.Tb)
    rho = stats.spearmanr(arr[:, 0], arr[:, 1]) if len(rows) > 2 else None
    return rows, fits, rho


@dataclass(frozen=True)
class OccupationScatter:
    Omega: np.ndarray
    n: np.ndarray
    references: dict

    def rms_deviation(self, T: float) -> float:
        from .observables import bose_einstein

        return float(np.sqrt(np.mean((self.n - bose_einstein(self.Omega, T)) ** 2)))

    def mode_temperatures(self) -> np.ndarray:
        return self.Omega / np.log1p(1.0 / self.n)

    def quartile_variances(self) -> tuple[float, float]:
        """Variance of per-mode temperatures in the bottom and top quartile of Omega."""
        T = self.mode_temperatures()
        lo, hi = np.quantile(self.Omega, [0.25, 0.75])
        return float(np.var(T[self.Omega <= lo])), float(np.var(T[self.Omega >= hi]))

    def rows(self):
        return list(zip(self.Omega.tolist(), self.n.tolist()))


def occupation_ensemble(disorder: DisorderSpec, length: int, bath: BathConfig, k: int, seed: int = 0,
                        workers: int = 1, store: str | Path | None = None) -> OccupationScatter:
    res = run_ensemble(disorder, length, bath, ("Omega_eff", "n", "T_fit"), k, seed, workers, store=store)
    Om = res.samples("Omega_eff").ravel()
    n = res.samples("n").ravel()
    refs = {
        "T_a": bath.Ta,
        "T_b": bath.Tb,
        "T_m": 0.5 * (bath.Ta + bath.Tb),
        "T_fit_mean": float(res.aggregate("T_fit").mean),
    }
    return OccupationScatter(Om, n, refs)
