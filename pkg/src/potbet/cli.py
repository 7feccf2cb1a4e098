"""Batch CLI: synthesize/ingest runs, reduce, fit, select a level, estimate.

Every stage writes files, so the pipeline is resumable and each stage is
independently testable.  All outputs carry the seed and a config hash in a
leading comment line; a fixed seed makes the whole run byte-reproducible.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import betting, estimate, ingest, potmodel
from . import reduce as reduce_mod


@dataclass
class PipelineConfig:
    """Everything needed to reproduce a full run."""

    data_paths: list = field(default_factory=list)
    synth: dict = None                 # SynthSpec fields; used when data_paths is empty
    targets: list = field(default_factory=lambda: ["T1", "T2", "T3"])
    seed: int = 0
    k_list: list = field(default_factory=lambda: [3, 5])
    level_grid: list = field(default_factory=lambda: list(betting.DEFAULT_LEVEL_GRID))
    max_level: float = 0.9997
    alpha: float = 0.05
    clip: float = 1.0
    n_basis: int = potmodel.DEFAULT_N_BASIS
    n_replications: int = 1000
    confidence: float = 0.92
    total_runs: int = 50
    given_runs: int = 4
    years: int = 165
    emit_plot_data: bool = True
    out_dir: str = "."

    def __post_init__(self):
        if not self.level_grid:
            raise ValueError("level_grid must be non-empty")
        if not self.k_list:
            raise ValueError("k_list must be non-empty")
        unknown = [t for t in self.targets if t not in ("T1", "T2", "T3")]
        if unknown:
            raise ValueError(f"unknown targets: {unknown}")

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(**json.load(fh))

    def config_hash(self) -> str:
        # where the outputs land must not change what they contain
        fields = {k: v for k, v in asdict(self).items() if k != "out_dir"}
        blob = json.dumps(fields, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def game_config(self, k: int) -> betting.GameConfig:
        return betting.GameConfig(
            K=k, alpha=self.alpha, clip=self.clip,
            level_grid=tuple(self.level_grid), max_level=self.max_level,
            seed=self.seed, n_basis=self.n_basis,
        )

    def estimate_config(self) -> estimate.EstimateConfig:
        return estimate.EstimateConfig(
            n_replications=self.n_replications, total_runs=self.total_runs,
            given_runs=self.given_runs, years=self.years,
            confidence=self.confidence, seed=self.seed,
        )


def _comment(cfg: PipelineConfig) -> str:
    return f"# seed={cfg.seed} config_hash={cfg.config_hash()}\n"


def _write_csv(path, cfg: PipelineConfig, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_comment(cfg))
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(str(x) for x in row) + "\n")


def _fmt(x: float) -> str:
    return repr(float(x))


def _load_data(cfg: PipelineConfig) -> ingest.Dataset:
    if cfg.data_paths:
        return ingest.load_dataset(cfg.data_paths)
    if cfg.synth is None:
        raise ValueError("config needs data_paths or a synth spec")
    synth = dict(cfg.synth)
    synth.setdefault("seed", cfg.seed)
    return ingest.generate_synthetic(ingest.SynthSpec(**synth))


def _score_rows(cfg, target_id, k, selection):
    alpha = cfg.alpha
    for p in sorted(selection.scores):
        res = selection.results[p]
        rejected = betting.ville_rejects(res, alpha)
        rr = res.rejection_round if res.rejection_round is not None else ""
        yield (target_id, k, p, _fmt(res.terminal_wealth), rejected, rr, cfg.seed)


def _emit_plot_data(outdir, cfg, target, model, exc, scale):
    tid = target.target_id
    grid = np.arange(1, 366)
    _write_csv(outdir / f"seasonal_{tid}.csv", cfg, "day_of_year,scale",
               ((int(d), _fmt(v)) for d, v in zip(grid, scale(grid))))
    adj = potmodel.adjust(exc, scale)
    _write_csv(outdir / f"adjusted_{tid}.csv", cfg, "day_of_year,adjusted_excess",
               ((int(d), _fmt(v)) for d, v in zip(exc.days, adj.values)))
    qq = potmodel.qq_exponential(adj)
    _write_csv(outdir / f"qq_{tid}.csv", cfg, "theoretical,observed",
               ((_fmt(a), _fmt(b)) for a, b in zip(qq.theoretical, qq.observed)))
    if target.has_aux:
        rep = reduce_mod.angular_diagnostic(target, model.p)
        _write_csv(
            outdir / f"angular_{tid}.csv", cfg, "bin_left,bin_right,count",
            ((_fmt(rep.bin_edges[i]), _fmt(rep.bin_edges[i + 1]), int(c))
             for i, c in enumerate(rep.hist_counts)),
        )


def _emit_poisson_plot(outdir, cfg, tid, est):
    from scipy import stats as sstats
    counts = est.counts
    hi = int(counts.max()) + 1
    ks = np.arange(hi + 1)
    pois = sstats.poisson.pmf(ks, est.lam)
    emp = np.bincount(counts, minlength=hi + 1)[: hi + 1] / len(counts)
    _write_csv(outdir / f"poisson_{tid}.csv", cfg, "count,poisson_prob,empirical_freq",
               ((int(k), _fmt(p), _fmt(e)) for k, p, e in zip(ks, pois, emp)))


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Full pipeline for every configured target; returns per-target summaries."""
    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    data = _load_data(cfg)
    report = {}
    errors = {}
    answer_rows = []
    for tid in cfg.targets:
        try:
            spec = reduce_mod.TargetSpec.canonical(tid)
            target = reduce_mod.reduce_target(data, spec)
            selection = None
            for k in cfg.k_list:
                sel = betting.select_level(target, cfg.game_config(k))
                _write_csv(
                    outdir / f"scores_{tid}_K{k}.csv", cfg,
                    "target_id,K,p,terminal_wealth,rejected,rejection_round,seed",
                    _score_rows(cfg, tid, k, sel),
                )
                if selection is None:
                    selection = sel  # first K in the list decides the level
            p_star = selection.p_star
            model = potmodel.fit_pot_model(target, p_star, n_basis=cfg.n_basis)
            (outdir / f"model_{tid}.json").write_text(model.to_json() + "\n")
            observed = reduce_mod.count_events(target, spec)
            est = estimate.estimate_frequency(model, spec, observed, cfg.estimate_config())
            answer_rows.append((
                tid, _fmt(est.point), _fmt(est.ci_lo), _fmt(est.ci_hi),
                _fmt(est.achieved_coverage), _fmt(est.lam),
                cfg.n_replications, cfg.seed,
            ))
            if cfg.emit_plot_data:
                exc = potmodel.extract_exceedances(target, p_star,
                                                   use_aux=target.has_aux)
                _emit_plot_data(outdir, cfg, target, model, exc, model.scale)
                _emit_poisson_plot(outdir, cfg, tid, est)
            report[tid] = {
                "p_star": p_star,
                "scores": selection.scores,
                "observed_count": observed,
                "point": est.point,
                "ci": (est.ci_lo, est.ci_hi),
            }
        except Exception as exc:  # keep remaining targets running
            errors[tid] = f"{type(exc).__name__}: {exc}"
    _write_csv(
        outdir / "answer.csv", cfg,
        "target_id,point,ci_lo,ci_hi,confidence_achieved,lambda,N,seed",
        answer_rows,
    )
    report["errors"] = errors
    return report


# ---------------------------------------------------------------- subcommands

def _add_common(sp):
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--config", default=None, help="JSON config file")


def _build_config(args, **overrides) -> PipelineConfig:
    if args.config:
        cfg = PipelineConfig.from_file(args.config)
    else:
        cfg = PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    cfg.__post_init__()
    return cfg


def _cmd_synth(args) -> int:
    cfg = _build_config(args)
    synth = dict(cfg.synth or {})
    for key, flag in (("n_runs", args.runs), ("years_per_run", args.years),
                      ("seasonal_amplitude", args.amplitude),
                      ("tail_scale", args.tail_scale)):
        if flag is not None:
            synth[key] = flag
    synth.setdefault("seed", cfg.seed)
    spec = ingest.SynthSpec(**synth)
    data = ingest.generate_synthetic(spec)
    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [outdir / f"run_{r.run_id:02d}.csv" for r in data.runs]
    ingest.write_dataset(data, paths)
    for p in paths:
        print(p)
    return 0


def _cmd_reduce(args) -> int:
    cfg = _build_config(args, data_paths=args.data or None)
    data = _load_data(cfg)
    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    for tid in args.target or cfg.targets:
        spec = reduce_mod.TargetSpec.canonical(tid)
        target = reduce_mod.reduce_target(data, spec)
        path = outdir / f"target_{tid}.csv"
        reduce_mod.write_target_csv(
            target, path,
            header_comment=f"seed={cfg.seed} config_hash={cfg.config_hash()}",
        )
        print(f"{path} events={reduce_mod.count_events(target, spec)}")
    return 0


def _cmd_fit(args) -> int:
    cfg = _build_config(args, data_paths=args.data or None)
    if args.p > cfg.max_level:
        print(f"warning: p={args.p} exceeds max selectable level {cfg.max_level}",
              file=sys.stderr)
    data = _load_data(cfg)
    spec = reduce_mod.TargetSpec.canonical(args.target)
    target = reduce_mod.reduce_target(data, spec)
    model = potmodel.fit_pot_model(target, args.p, n_basis=cfg.n_basis)
    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / f"model_{args.target}.json"
    path.write_text(model.to_json() + "\n")
    print(path)
    return 0


def _cmd_select(args) -> int:
    cfg = _build_config(args, data_paths=args.data or None)
    data = _load_data(cfg)
    spec = reduce_mod.TargetSpec.canonical(args.target)
    target = reduce_mod.reduce_target(data, spec)
    k = args.K if args.K is not None else cfg.k_list[0]
    sel = betting.select_level(target, cfg.game_config(k))
    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_csv(
        outdir / f"scores_{args.target}_K{k}.csv", cfg,
        "target_id,K,p,terminal_wealth,rejected,rejection_round,seed",
        _score_rows(cfg, args.target, k, sel),
    )
    print(f"p_star = {sel.p_star}")
    return 0


def _cmd_estimate(args) -> int:
    cfg = _build_config(args, data_paths=args.data or None)
    model = potmodel.PotModel.from_json(Path(args.model).read_text())
    if args.p is not None and not math.isclose(args.p, model.p):
        print(f"error: model fitted at p={model.p}, requested p={args.p}",
              file=sys.stderr)
        return 2
    spec = reduce_mod.TargetSpec.canonical(model.target_id)
    if args.observed_count is not None:
        observed = args.observed_count
    else:
        data = _load_data(cfg)
        target = reduce_mod.reduce_target(data, spec)
        observed = reduce_mod.count_events(target, spec)
    est = estimate.estimate_frequency(model, spec, observed, cfg.estimate_config())
    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_csv(
        outdir / "answer.csv", cfg,
        "target_id,point,ci_lo,ci_hi,confidence_achieved,lambda,N,seed",
        [(model.target_id, _fmt(est.point), _fmt(est.ci_lo), _fmt(est.ci_hi),
          _fmt(est.achieved_coverage), _fmt(est.lam), cfg.n_replications, cfg.seed)],
    )
    print(f"{model.target_id}: point={est.point} ci=[{est.ci_lo}, {est.ci_hi}]")
    return 0


def _cmd_report(args) -> int:
    cfg = _build_config(args, data_paths=args.data or None)
    data = _load_data(cfg)
    model = potmodel.PotModel.from_json(Path(args.model).read_text())
    spec = reduce_mod.TargetSpec.canonical(model.target_id)
    target = reduce_mod.reduce_target(data, spec)
    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    exc = potmodel.extract_exceedances(target, model.p, use_aux=target.has_aux)
    _emit_plot_data(outdir, cfg, target, model, exc, model.scale)
    print(outdir)
    return 0


def _cmd_run(args) -> int:
    cfg = _build_config(args, data_paths=args.data or None,
                        targets=args.target or None)
    report = run_pipeline(cfg)
    errors = report.pop("errors")
    for tid, info in report.items():
        print(f"{tid}: p_star={info['p_star']} point={info['point']} "
              f"ci={info['ci']}")
    for tid, msg in errors.items():
        print(f"{tid}: FAILED ({msg})", file=sys.stderr)
    wanted = args.target or cfg.targets
    return 0 if all(t in report for t in wanted) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="potbet",
        description="Seasonal POT frequency estimation with betting-based "
                    "threshold selection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate synthetic run files")
    _add_common(sp)
    sp.add_argument("--runs", type=int)
    sp.add_argument("--years", type=int)
    sp.add_argument("--amplitude", type=float)
    sp.add_argument("--tail-scale", type=float, dest="tail_scale")
    sp.set_defaults(func=_cmd_synth)

    sp = sub.add_parser("reduce", help="reduce runs to univariate target series")
    _add_common(sp)
    sp.add_argument("--data", nargs="+")
    sp.add_argument("--target", action="append", choices=["T1", "T2", "T3"])
    sp.set_defaults(func=_cmd_reduce)

    sp = sub.add_parser("fit", help="fit a POT model at a given level")
    _add_common(sp)
    sp.add_argument("--data", nargs="+")
    sp.add_argument("--target", required=True, choices=["T1", "T2", "T3"])
    sp.add_argument("--p", type=float, required=True)
    sp.set_defaults(func=_cmd_fit)

    sp = sub.add_parser("select", help="score the level grid and pick p*")
    _add_common(sp)
    sp.add_argument("--data", nargs="+")
    sp.add_argument("--target", required=True, choices=["T1", "T2", "T3"])
    sp.add_argument("--K", type=int)
    sp.set_defaults(func=_cmd_select)

    sp = sub.add_parser("estimate", help="frequency estimate from a fitted model")
    _add_common(sp)
    sp.add_argument("--data", nargs="+")
    sp.add_argument("--model", required=True)
    sp.add_argument("--p", type=float)
    sp.add_argument("--observed-count", type=int, dest="observed_count")
    sp.set_defaults(func=_cmd_estimate)

    sp = sub.add_parser("report", help="emit plot data for a fitted model")
    _add_common(sp)
    sp.add_argument("--data", nargs="+")
    sp.add_argument("--model", required=True)
    sp.set_defaults(func=_cmd_report)

    sp = sub.add_parser("run", help="full pipeline for all targets")
    _add_common(sp)
    sp.add_argument("--data", nargs="+")
    sp.add_argument("--target", action="append", choices=["T1", "T2", "T3"])
    sp.set_defaults(func=_cmd_run)

    return parser


def main(argv=None) -> int:
    # POTX_THREADS caps worker parallelism; the current implementation is
    # sequential, which respects any cap.
    os.environ.setdefault("POTX_THREADS", "0")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
