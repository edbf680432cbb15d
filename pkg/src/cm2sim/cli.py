"""Command-line front end.

Every run writes ``manifest.json`` (configuration, seed, code version and a
sha256 over them) next to its outputs; ``cm2sim rerun manifest.json``
repeats the run. Worker threads come from ``CM2_THREADS`` and never affect
the output bytes.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, classical, ensemble, output, presets, thermo
from .errors import CM2Error, InvalidArgument, NotIncoherent
from .model import CM2Model, load_model, model_from_dict, model_to_dict, validate

EXIT_OK, EXIT_INPUT, EXIT_VERIFY = 0, 1, 2
CLASSICAL_MAX_STEPS = 8


# -- model resolution ------------------------------------------------------------


def _initial_state(name: str, model: CM2Model) -> np.ndarray:
    d = model.system_dim
    if name == "xplus":
        return presets.xplus()
    if name == "fixed-point":
        return presets.fixed_point_start(model).rho_x0
    if name.startswith("thermal:"):
        return presets.thermal_qubit(float(name.split(":", 1)[1]))
    if name.isdigit() and int(name) < d:
        rho = np.zeros((d, d), dtype=complex)
        rho[int(name), int(name)] = 1.0
        return rho
    raise InvalidArgument(f"unknown initial state {name!r}; use xplus, fixed-point, thermal:F or a basis index")


def model_config(args) -> dict:
    if (args.model is None) == (args.preset is None):
        raise InvalidArgument("give exactly one of --model FILE or --preset NAME")
    if args.model is not None:
        cfg = {"file": str(args.model), "definition": model_to_dict(load_model(args.model))}
    else:
        if args.preset not in presets.PRESETS:
            raise InvalidArgument(f"unknown preset {args.preset!r}; choose from {', '.join(presets.PRESETS)}")
        cfg = {"preset": args.preset,
               "params": {"f": args.f, "g": args.g, "g1": args.g1, "g2": args.g2, "epsilon_mix": args.epsilon_mix}}
    if args.x0 is not None:
        cfg["x0"] = args.x0
    return cfg


def build_model(cfg: dict) -> CM2Model:
    if "definition" in cfg:
        model = model_from_dict(cfg["definition"])
    else:
        model = presets.build_preset(cfg["preset"], **cfg["params"])
    if cfg.get("x0"):
        model = model.with_initial_state(_initial_state(cfg["x0"], model))
    return model


# -- drivers ------------------------------------------------------------------------


def _prepare(out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(out: Path, manifest: dict) -> None:
    output.write_json(out / "manifest.json", manifest)


def run_validate(cfg: dict, out: Path | None, manifest: dict) -> int:
    rep = validate(build_model(cfg["model"]))
    print(rep.summary())
    if out is not None:
        output.write_json(out / "validation.json", rep.to_dict(), manifest["sha256"])
    return EXIT_OK if rep.ok else EXIT_INPUT


def _iss_kwargs(cfg: dict) -> dict:
    iss = cfg.get("iss", {})
    return {k: iss[k] for k in ("eps_I", "eps_G") if iss.get(k) is not None} | (
        {"eps_sigma": iss["eps_sigma"]} if iss.get("eps_sigma") is not None else {})


def _series_plots(out: Path, series, h: str, stem: str = "") -> None:
    t = np.arange(series.steps + 1)
    v = series.values
    groups = {
        "entropies": {"S_u": v["S_u"], "S_c": v["S_c"], "I": v["I"]},
        "information": {"G": v["G"], "L": v["L"], "dI": v["dI"]},
        "production": {"dSigma_u": v["dSigma_u"], "dSigma_c": v["dSigma_c"]},
        "flux": {"dPhi_u": v["dPhi_u"], "dPhi_c": v["dPhi_c"]},
        "integrated": {"Sigma_u": v["Sigma_u_int"], "Sigma_c": v["Sigma_c_int"]},
    }
    for name, curves in groups.items():
        svg = output.line_plot(t, curves, name, comment=f"manifest_sha256={h}")
        (out / f"{stem}{name}.svg").write_text(svg)


def _unit_flux_rows(series):
    pu = series.per_unit_flux
    for t in range(series.steps + 1):
        yield [t, *pu[t]]


def run_ensemble_mode(cfg: dict, out: Path, manifest: dict) -> int:
    model = build_model(cfg["model"])
    series = ensemble.run_ensemble(model, cfg["steps"], cfg["traj"], cfg["seed"])
    rep = thermo.iss_detect(series, **_iss_kwargs(cfg))
    h = manifest["sha256"]
    window = rep.window if rep.verdict == "ISS" else None
    output.write_csv(out / "series.csv", output.SERIES_COLUMNS, output.series_rows(series, window), h)
    n_units = len(model.ancilla_units)
    output.write_csv(out / "unit_flux.csv", ["t", *(f"dPhi_u_unit{j}" for j in range(n_units))],
                     _unit_flux_rows(series), h,
                     note="units: nats; finite on-support part for divergent units")
    iss = {k: output.json_float(x) if isinstance(x, float) else x for k, x in rep.to_dict().items()}
    iss["divergent_units"] = list(series.divergent_units)
    output.write_json(out / "iss.json", iss, h)
    if cfg.get("svg"):
        _series_plots(out, series, h)
    print(f"verdict: {rep.verdict}  tail G={rep.mean_G:.4e} L={rep.mean_L:.4e} dI={rep.mean_dI:.4e} "
          f"(SE {rep.se_dI:.1e})")
    if series.divergent:
        print(f"note: flux of ancilla unit(s) {list(series.divergent_units)} diverges; "
              "columns hold the finite on-support part")
    return EXIT_OK


def run_single_shot_mode(cfg: dict, out: Path, manifest: dict) -> int:
    model = build_model(cfg["model"])
    ss = ensemble.run_single_shot(model, cfg["steps"], cfg["seed"])
    h = manifest["sha256"]
    cols = ["t", "z", "S_c", "S_u", "G", "dI", "L", "dSigma_u", "dSigma_c", "Z_acc", "G_acc", "dSigma_c_acc"]
    arrays = [ss.t, ss.z, ss.S_c, ss.S_u, ss.G, ss.dI, ss.L, ss.dSigma_u, ss.dSigma_c,
              ss.clicks, ss.accumulated("G"), ss.accumulated("dSigma_c")]
    if model.system_dim == 2:
        cols += ["bloch_x", "bloch_y", "bloch_z"]
        arrays += list(ss.bloch().T)
    rows = ([int(a[i]) if k < 2 else a[i] for k, a in enumerate(arrays)] for i in range(len(ss.t)))
    output.write_csv(out / "trajectory.csv", cols, rows, h)

    discard = cfg.get("discard", 20)
    bins = cfg.get("bins", 30)
    hist_rows = []
    for name in ("S_c", "G", "dSigma_c"):
        counts, edges = output.histogram_counts(getattr(ss, name)[discard:], bins)
        hist_rows += [[name, edges[i], edges[i + 1], int(counts[i])] for i in range(bins)]
    buf = [f"# manifest_sha256={h} first {discard} steps discarded", "quantity,bin_lo,bin_hi,count"]
    buf += [f"{q},{lo!r},{hi!r},{c}" for q, lo, hi, c in ((r[0], float(r[1]), float(r[2]), r[3]) for r in hist_rows)]
    (out / "histograms.csv").write_text("\n".join(buf) + "\n")

    summary = {
        "steps": cfg["steps"],
        "Z_T": float(ss.clicks[-1]),
        "mean_G": float(np.mean(ss.G)),
        "se_G": ensemble.block_standard_error(ss.G),
        "mean_dSigma_c": output.json_float(np.mean(ss.dSigma_c)),
        "se_dSigma_c": output.json_float(ensemble.block_standard_error(ss.dSigma_c)),
        "mean_dSigma_u": output.json_float(np.mean(ss.dSigma_u)),
        "divergent_units": list(ss.divergent_units),
    }
    output.write_json(out / "summary.json", summary, h)
    if cfg.get("svg"):
        c = f"manifest_sha256={h}"
        (out / "accumulated.svg").write_text(output.line_plot(
            ss.t, {"Z_t": ss.clicks}, "accumulated clicks", ylabel="Z_t", comment=c))
        (out / "single_shot.svg").write_text(output.line_plot(
            ss.t, {"S_c": ss.S_c, "S_u": ss.S_u}, "conditional entropy", comment=c))
        (out / "rates_accumulated.svg").write_text(output.line_plot(
            ss.t, {"G": ss.accumulated("G"), "dSigma_c": ss.accumulated("dSigma_c"),
                   "dSigma_u": ss.dSigma_u}, "accumulated averages", comment=c))
        for name in ("S_c", "G", "dSigma_c"):
            (out / f"hist_{name}.svg").write_text(output.histogram_plot(
                getattr(ss, name)[discard:], bins, f"{name} (first {discard} discarded)", name, comment=c))
    print(f"Z_T = {summary['Z_T']:.4f}  <G> = {summary['mean_G']:.4e} +- {summary['se_G']:.1e}")
    return EXIT_OK


EXACT_EXTRAS = ("bound_rhs", "bound_rhs_current", "marginal_residual", "discarded")


def run_exact_mode(cfg: dict, out: Path, manifest: dict) -> int:
    model = build_model(cfg["model"])
    run = thermo.exact_series(model, cfg["steps"], prune=cfg.get("prune", 1e-14))
    s = run.series
    h = manifest["sha256"]
    cols = [c for c in output.SERIES_COLUMNS if c not in ("SE_Sc", "iss_flag")] + ["n_branches", *EXACT_EXTRAS]
    rows = ([t, *(s.values[c][t] for c in cols[1:12]), len(run.ensembles[t]),
             *(s.extras[k][t] for k in EXACT_EXTRAS)] for t in range(s.steps + 1))
    output.write_csv(out / "ledger.csv", cols, rows, h)
    checks = thermo.verify_exact(run)
    report = {
        "pass": all(c.ok for c in checks),
        "measurement_condition": run.condition.holds,
        "divergent_units": list(s.divergent_units),
        "checks": [{"name": c.name, "margin": output.json_float(c.margin), "ok": c.ok, "note": c.note}
                   for c in checks],
    }
    output.write_json(out / "verify.json", report, h)
    if cfg.get("svg"):
        _series_plots(out, s, h, stem="exact_")
    for c in checks:
        print(f"{'ok  ' if c.ok else 'FAIL'} {c.name}  margin {c.margin:.3e} {c.note}".rstrip())
    return EXIT_OK if report["pass"] else EXIT_VERIFY


def run_classical_mode(cfg: dict, out: Path, manifest: dict) -> int:
    steps = cfg["steps"]
    if steps > CLASSICAL_MAX_STEPS:
        raise InvalidArgument(f"classical cross-check supports at most {CLASSICAL_MAX_STEPS} steps")
    model = build_model(cfg["model"])
    try:
        cc = classical.crosscheck(model, steps)
    except NotIncoherent as exc:
        output.write_json(out / "classical.json", {"refused": str(exc)}, manifest["sha256"])
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_INPUT
    output.write_json(out / "classical.json", cc.to_dict(), manifest["sha256"])
    print(f"{'PASS' if cc.ok else 'FAIL'} max |P_quantum - P_classical| = {cc.max_diff:.3e} "
          f"over {cc.n_sequences} outcome strings")
    return EXIT_OK if cc.ok else EXIT_VERIFY


DRIVERS = {
    "ensemble": run_ensemble_mode,
    "single-shot": run_single_shot_mode,
    "exact": run_exact_mode,
    "classical": run_classical_mode,
}


def execute(cfg: dict, out) -> int:
    """Run a configuration (as stored in a manifest) and write its outputs."""
    manifest = output.make_manifest(cfg)
    if cfg["mode"] == "validate":
        d = _prepare(out) if out is not None else None
        code = run_validate(cfg, d, manifest)
        if d is not None:
            _finish(d, manifest)
        return code
    d = _prepare(out)
    code = DRIVERS[cfg["mode"]](cfg, d, manifest)
    _finish(d, manifest)
    return code


# -- argument parsing ------------------------------------------------------------------


def _positive(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _model_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--model", type=Path, help="model definition (JSON)")
    g.add_argument("--preset", help=f"one of: {', '.join(presets.PRESETS)}")
    g.add_argument("--f", type=float, default=0.3, help="ground-state population of the thermal unit")
    g.add_argument("--g", type=float, default=0.3, help="single-qubit partial-SWAP angle")
    g.add_argument("--g1", type=float, default=0.3)
    g.add_argument("--g2", type=float, default=0.1)
    g.add_argument("--epsilon-mix", type=float, default=0.0, help="mix pure ancilla units with I/d")
    g.add_argument("--x0", help="initial system state: xplus, fixed-point, thermal:F or a basis index")


class _Parser(argparse.ArgumentParser):
    """Usage errors are invalid input (exit 1); exit 2 is reserved for verifier failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cm2sim", description="Continuously monitored collisional models.")
    ap.add_argument("--version", action="version", version=f"cm2sim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model's physical invariants")
    _model_args(p)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("ensemble", help="trajectory-averaged ledger")
    _model_args(p)
    p.add_argument("--steps", type=_positive, required=True)
    p.add_argument("--traj", type=_positive, default=2000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--svg", action="store_true")
    p.add_argument("--eps-i", type=float, help="ISS threshold on |dI| (default max(3 SE, 1e-3))")
    p.add_argument("--eps-g", type=float, help="ISS threshold on G (default max(3 SE, 1e-6))")
    p.add_argument("--eps-sigma", type=float, help="threshold on dSigma_u for a NESS (default 1e-3)")

    p = sub.add_parser("single-shot", help="one trajectory with running averages")
    _model_args(p)
    p.add_argument("--steps", type=_positive, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--svg", action="store_true")
    p.add_argument("--bins", type=_positive, default=30)
    p.add_argument("--discard", type=int, default=20, help="leading steps left out of histograms")

    p = sub.add_parser("exact", help="exhaustive enumeration with inequality verification")
    _model_args(p)
    p.add_argument("--steps", type=_positive, required=True)
    p.add_argument("--prune", type=float, default=1e-14, help="drop branches with P <= prune; negative keeps all")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--svg", action="store_true")

    p = sub.add_parser("classical", help="compare outcome statistics with the hidden-Markov chain")
    _model_args(p)
    p.add_argument("--steps", type=_positive, default=CLASSICAL_MAX_STEPS)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("presets", help="built-in models")
    p.add_argument("action", choices=["list"])

    p = sub.add_parser("rerun", help="repeat the run recorded in a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, required=True)
    return ap


def config_from_args(args) -> dict:
    cfg = {"mode": args.command, "model": model_config(args)}
    for key in ("steps", "traj", "seed", "svg", "bins", "discard"):
        if hasattr(args, key):
            cfg[key] = getattr(args, key)
    if args.command == "exact":
        cfg["prune"] = None if args.prune < 0 else args.prune
    if args.command == "ensemble":
        cfg["iss"] = {"eps_I": args.eps_i, "eps_G": args.eps_g, "eps_sigma": args.eps_sigma}
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            for name, desc in presets.PRESETS.items():
                print(f"{name:14s} {desc}")
            return EXIT_OK
        if args.command == "rerun":
            manifest = json.loads(args.manifest.read_text())
            output.check_manifest(manifest)
            if manifest["version"] != __version__:
                print(f"warning: manifest written by version {manifest['version']}", file=sys.stderr)
            cfg = manifest["config"]
            out = args.out
        else:
            cfg = config_from_args(args)
            out = getattr(args, "out", None)
        t0 = time.perf_counter()
        code = execute(cfg, out)
        print(f"[{cfg['mode']}] {time.perf_counter() - t0:.2f} s", file=sys.stderr)
        return code
    except (CM2Error, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
