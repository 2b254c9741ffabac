"""Command-line entry point: ``qlchain VERB --config FILE --out DIR``.

Each verb writes CSV/JSON data plus ``manifest.json`` listing every output
with its sha256. Exit codes: 0 success, 2 invalid input, 3 numerical
failure, 4 oracle disagreement.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import as_list, load_config
from .errors import NumericError, OracleDisagreement, OracleInconclusive, QLChainError, ValidationError
from .model import BathConfig, ChainSpec, onsite_frequencies

VERBS = (
    "profile",
    "flux-length",
    "flux-surface",
    "conductivity",
    "occupations",
    "localization",
    "negativity",
    "transient",
    "verify",
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_ORACLE = 0, 2, 3, 4


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class RunManifest:
    """Config echo, timings, rejection counts and hashed outputs of one run."""

    def __init__(self, verb: str, config: dict, seed: int, out: Path):
        self.out = out
        self.data = {
            "verb": verb,
            "config": config,
            "seed": seed,
            "version": __version__,
            "started": datetime.now(timezone.utc).isoformat(),
            "stages": {},
            "rejections": 0,
            "outputs": {},
        }
        self._t = time.perf_counter()

    @property
    def path(self) -> Path:
        return self.out / "manifest.json"

    def stage(self, name: str) -> None:
        now = time.perf_counter()
        self.data["stages"][name] = now - self._t
        self._t = now

    def add(self, path: Path) -> Path:
        self.data["outputs"][path.name] = sha256(path)
        return path

    def write(self) -> None:
        self.data["finished"] = datetime.now(timezone.utc).isoformat()
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    def completed_match(self) -> bool:
        """True if a finished manifest for the same run exists and all outputs still hash the same."""
        if not self.path.exists():
            return False
        try:
            old = json.loads(self.path.read_text())
        except json.JSONDecodeError:
            return False
        same = all(old.get(k) == self.data[k] for k in ("verb", "config", "seed"))
        if not same or "finished" not in old:
            return False
        return all((self.out / n).exists() and sha256(self.out / n) == h for n, h in old["outputs"].items())


def _write(path: Path, header, rows) -> Path:
    from .observables import write_rows

    return write_rows(path, header, rows)


def _bath(cfg) -> BathConfig:
    return BathConfig(cfg["bath.gamma"], cfg["bath.cutoff"], cfg["bath.Ta"], cfg["bath.Tb"])


def _chain(cfg, length=None, coupling=None) -> ChainSpec:
    l = cfg["chain.length"] if length is None else length
    explicit = as_list(cfg["chain.couplings"])
    if explicit and length is None and coupling is None:
        f = np.array(explicit)
        l = f.size + 1
    else:
        f = np.full(l - 1, cfg["chain.coupling"] if coupling is None else coupling)
    return ChainSpec(onsite_frequencies(l, cfg["chain.pinning"], cfg["chain.omega0"]), f)


def _disorder(cfg, coupling=None):
    from .ensemble import DisorderSpec

    if cfg["disorder.width"] <= 0:
        return None
    return DisorderSpec(
        cfg["chain.coupling"] if coupling is None else coupling,
        cfg["disorder.width"],
        cfg["disorder.symmetric"],
        cfg["disorder.cutoff"],
        cfg["chain.omega0"],
        cfg["chain.pinning"],
    )


def _dump_poles(resp, out: Path, man: RunManifest, name="poles.csv") -> None:
    rows = [(float(p.real), float(p.imag), f) for p, f in zip(resp.poles, resp.family)]
    man.add(_write(out / name, ["re", "im", "family"], rows))


# --- verbs ------------------------------------------------------------------


def run_profile(cfg, out, man, args):
    from .ensemble import interior_slopes, run_ensemble
    from .observables import solve_steady_state

    bath = _bath(cfg)
    dis = _disorder(cfg)
    if dis is None:
        st = solve_steady_state(_chain(cfg), bath, classical=cfg["run.classical"])
        man.stage("solve")
        prof, occ, fl = st.profile(), st.occupations(), st.flux()
        man.add(prof.write_csv(out / "profile.csv"))
        man.add(occ.write_csv(out / "modes.csv"))
        summary = {"J": fl.J, "G_th": fl.G_th, "T_fit": occ.T_fit, "bond_spread": fl.spread}
        if args.dump_poles:
            _dump_poles(st.response, out, man)
    else:
        res = run_ensemble(dis, cfg["chain.length"], bath, ("J", "E", "T_R"), cfg["ensemble.k"], args.seed,
                           args.workers, cfg["run.classical"], store=out / "profile_rows.jsonl")
        man.stage("ensemble")
        man.data["rejections"] = res.rejections
        E, T = res.aggregate("E"), res.aggregate("T_R")
        rows = [(i + 1, E.mean[i], T.mean[i], T.std[i], T.stderr[i], T.stderr_linear[i]) for i in range(res.length)]
        man.add(_write(out / "profile.csv", ["site", "E", "T_R", "T_R_std", "T_R_stderr", "T_R_stderr_linear"], rows))
        J = res.aggregate("J")
        summary = {"J": float(J.mean), "J_std": float(J.std), "k": res.k}
        if res.length >= 6 and res.k > 1:
            s = interior_slopes(res)
            summary.update(slope=float(s.mean), slope_stderr=float(s.stderr))
    return summary


def run_flux_length(cfg, out, man, args):
    from .ensemble import flux_length_scan
    from .observables import solve_steady_state

    bath = _bath(cfg)
    lengths = as_list(cfg["scan.lengths"], int)
    dis = _disorder(cfg)
    if dis is None:
        rows = [(l, solve_steady_state(_chain(cfg, l), bath).flux().J) for l in lengths]
        man.add(_write(out / "flux_length.csv", ["l", "J"], rows))
        J = np.array([r[1] for r in rows])
        return {"relative_spread": float((J.max() - J.min()) / J.mean())}
    rows, fits, rho = flux_length_scan(dis, bath, lengths, cfg["ensemble.k"], args.seed, args.workers, out)
    man.stage("ensemble")
    man.add(_write(out / "flux_length.csv", ["l", "J", "sigma_J", "stderr", "stderr_linear"], rows))
    fit_rows = [(f.model, f.R_c, f.R, f.residual, int(f.preferred)) for f in fits]
    man.add(_write(out / "flux_length_fits.csv", ["model", "R_c", "R", "residual", "preferred"], fit_rows))
    return {"preferred": [f.model for f in fits if f.preferred][0],
            "spearman": None if rho is None else float(rho.statistic)}


def run_flux_surface(cfg, out, man, args):
    from .observables import flux_coupling_scan

    fs, gs = as_list(cfg["scan.couplings"]), as_list(cfg["scan.gammas"])
    surface, gmax = flux_coupling_scan(cfg["chain.length"], fs, gs, _bath(cfg), cfg["chain.omega0"])
    rows = [(f, g, surface[i, j]) for i, f in enumerate(fs) for j, g in enumerate(gs)]
    man.add(_write(out / "flux_surface.csv", ["f", "gamma", "J"], rows))
    man.add(_write(out / "gamma_max.csv", ["f", "gamma_max"], list(zip(fs, gmax.tolist()))))
    return {}


def run_conductivity(cfg, out, man, args):
    from .observables import conductivity_scan

    rows = conductivity_scan(_chain(cfg), _bath(cfg), as_list(cfg["scan.Tm"]), cfg["scan.eps"], cfg["run.classical"])
    man.add(_write(out / "conductivity.csv", ["Tm", "G_th"], rows))
    return {}


def run_occupations(cfg, out, man, args):
    from .ensemble import occupation_ensemble
    from .observables import solve_steady_state

    bath = _bath(cfg)
    dis = _disorder(cfg)
    if dis is None:
        occ = solve_steady_state(_chain(cfg), bath).occupations()
        man.add(occ.write_csv(out / "occupations.csv"))
        return {"T_fit": occ.T_fit}
    sc = occupation_ensemble(dis, cfg["chain.length"], bath, cfg["ensemble.k"], args.seed, args.workers,
                             store=out / "occupation_rows.jsonl")
    man.add(_write(out / "occupations.csv", ["Omega_eff", "n"], sc.rows()))
    refs = dict(sc.references)
    refs.update({f"rms_{k}": sc.rms_deviation(v) for k, v in sc.references.items() if v > 0})
    return refs


def run_localization(cfg, out, man, args):
    from .ensemble import realization_rng, sample_chain
    from .spectral import localization, mode_basis

    dis = _disorder(cfg)
    if dis is None:
        localization(mode_basis(_chain(cfg))).write_csv(out / "localization.csv")
        man.add(out / "localization.csv")
        return {}
    rows = []
    for i in range(cfg["ensemble.k"]):
        rep = localization(mode_basis(sample_chain(dis, cfg["chain.length"], realization_rng(args.seed, i))))
        rows.extend((i, float(w), float(x)) for w, x in zip(rep.frequencies, rep.xi))
    man.add(_write(out / "localization.csv", ["realization", "Omega", "xi"], rows))
    return {}


def run_negativity(cfg, out, man, args):
    from .entanglement import negativity_temperature_scan

    cuts = None if cfg["scan.cuts"].strip() == "all" else as_list(cfg["scan.cuts"], int)
    rows = negativity_temperature_scan(_chain(cfg), _bath(cfg), as_list(cfg["scan.Tm"]), cfg["scan.eps"], cuts)
    man.add(_write(out / "negativity.csv", ["Tm", "cut", "N", "Gth"], rows))
    return {}


def run_transient(cfg, out, man, args):
    from .correlations import thermal_chain_state, to_real_space, transient_correlations
    from .observables import site_energies
    from .response import response_set
    from .spectral import mode_basis

    spec, bath = _chain(cfg), _bath(cfg)
    basis = mode_basis(spec)
    resp = response_set(basis, bath)
    init = thermal_chain_state(basis, cfg["transient.T_chain"])
    rows = []
    for t in as_list(cfg["transient.times"]):
        c = to_real_space(transient_correlations(resp, t, init, bath, cfg["run.classical"]), basis)
        E = site_energies(c, spec)
        rows.extend((t, n + 1, c.XX[n, n], c.PP[n, n], E[n]) for n in range(spec.length))
    man.add(_write(out / "transient.csv", ["t", "site", "XX", "PP", "E"], rows))
    if args.dump_poles:
        _dump_poles(resp, out, man)
    return {}


def run_verify(cfg, out, man, args):
    from .oracles import verify_triangle

    spec, bath = _chain(cfg), _bath(cfg)
    N = cfg["verify.N"] or None  # 0 sizes the bath from the relaxation time
    reports = [("config", verify_triangle(spec, bath, N=N))]
    rng = np.random.default_rng(args.seed)
    for i in range(cfg["verify.random_configs"]):
        l = int(rng.integers(2, 7))
        s = ChainSpec(rng.uniform(0.5, 1.5, l), rng.uniform(0.5, 1.5, l - 1))
        b = BathConfig(rng.uniform(0.3, 3.0), rng.uniform(2.0, 15.0), rng.uniform(0, 5), rng.uniform(0, 5))
        reports.append((f"random{i}", verify_triangle(s, b, N=N)))
    lines = []
    for name, rep in reports:
        lines.append(f"[{'PASS' if rep.passed else 'FAIL'}] {name}")
        lines.extend("    " + x for x in rep.lines())
    (out / "verify.txt").write_text("\n".join(lines) + "\n")
    man.add(out / "verify.txt")
    print("\n".join(lines))
    if not all(r.passed for _, r in reports):
        man.write()
        raise OracleDisagreement("oracle triangle failed; see verify.txt")
    return {}


HANDLERS = {
    "profile": run_profile,
    "flux-length": run_flux_length,
    "flux-surface": run_flux_surface,
    "conductivity": run_conductivity,
    "occupations": run_occupations,
    "localization": run_localization,
    "negativity": run_negativity,
    "transient": run_transient,
    "verify": run_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qlchain", description="Heat transport through harmonic chains between two baths.")
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--seed", type=int, default=0, help="unsigned 64-bit seed")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--resume", action="store_true", help="reuse finished outputs and partial ensemble rows")
    p.add_argument("--dump-poles", action="store_true", help="also write the response poles")
    return p


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if not 0 <= args.seed < 2**64:
            raise ValidationError("--seed must be an unsigned 64-bit integer")
        if args.workers < 1:
            raise ValidationError("--workers must be >= 1")
        cfg = load_config(args.config)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        man = RunManifest(args.verb, cfg, args.seed, out)
        if args.resume and man.completed_match():
            print(f"{args.verb}: outputs in {out} are complete, nothing to do")
            return EXIT_OK
        if not args.resume:
            for stale in out.glob("*_rows.jsonl"):
                stale.unlink()
            for stale in out.glob("flux_l*.jsonl"):
                stale.unlink()
        summary = HANDLERS[args.verb](cfg, out, man, args)
        man.stage("total")
        summary = {k: _jsonable(v) for k, v in summary.items()}
        if summary:
            summary_path = out / "summary.json"
            summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
            man.add(summary_path)
        man.write()
        return EXIT_OK
    except ValidationError as exc:
        print(f"qlchain: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OracleDisagreement as exc:
        print(f"qlchain: oracle disagreement: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except (NumericError, OracleInconclusive) as exc:
        print(f"qlchain: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except QLChainError as exc:  # pragma: no cover
        print(f"qlchain: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
