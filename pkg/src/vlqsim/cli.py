"""Batch experiment driver.

Subcommands: codebook build|verify, sweep, fit, compare, bounds, selftest.
Exit codes: 0 success, 2 config error, 3 invariant failure, 4 numeric
non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from . import estimate as est
from .channel import RngStream
from .codebook import (
    BeamformingCodebook,
    CoveringError,
    build_covering_codebook,
    load_codebook,
    precoding_codebook,
    save_codebook,
    verify_covering,
)
from .numerics import QuadratureError, q_function
from .quantizer import VlqBeamformingSpec, VlqPrecodingSpec, kraft_check
from .stbc import ostbc_generator

__all__ = ["SimulationConfig", "ConfigError", "run_config", "selftest", "main"]

_STRATEGIES = ("bf-full", "bf-flq", "bf-vlq", "pc-full", "pc-vlq", "open-loop")
_CODED = ("bf-flq", "bf-vlq", "pc-vlq")
_KNOWN_KEYS = {
    "t",
    "strategy",
    "delta",
    "schedule",
    "P-grid-dB",
    "samples",
    "seed",
    "codebook-path",
    "output-path",
    "conditioning",
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimulationConfig:
    t: int
    strategy: str
    P_grid_dB: tuple
    samples: int
    seed: int
    delta: float | None = None
    schedule: dict | None = None
    codebook_path: str | None = None
    output_path: str = "sweep.csv"
    conditioning: str = "radial"

    @classmethod
    def from_dict(cls, doc: dict) -> "SimulationConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - _KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("t", "strategy", "P-grid-dB", "samples", "seed", "output-path"):
            if key not in doc:
                raise ConfigError(f"missing required key {key!r}")
        t = doc["t"]
        if not isinstance(t, int) or not 1 <= t <= 8:
            raise ConfigError("t must be an integer in [1, 8]")
        strategy = doc["strategy"]
        if strategy not in _STRATEGIES:
            raise ConfigError(f"strategy must be one of {_STRATEGIES}")
        grid = doc["P-grid-dB"]
        if not isinstance(grid, list) or not grid:
            raise ConfigError("P-grid-dB must be a nonempty list")
        if any(not isinstance(g, (int, float)) for g in grid):
            raise ConfigError("P-grid-dB entries must be numbers")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("P-grid-dB must be strictly ascending")
        samples = doc["samples"]
        if not isinstance(samples, int) or samples < 1:
            raise ConfigError("samples must be a positive integer")
        seed = doc["seed"]
        if not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        delta = doc.get("delta")
        schedule = doc.get("schedule")
        cb_path = doc.get("codebook-path")
        if strategy in _CODED:
            given = [k for k, v in (("delta", delta), ("schedule", schedule), ("codebook-path", cb_path)) if v is not None]
            if not given:
                raise ConfigError(f"strategy {strategy} needs delta, schedule or codebook-path")
            if len(given) > 1:
                raise ConfigError(f"give exactly one of delta/schedule/codebook-path, got {given}")
        else:
            if delta is not None or schedule is not None or cb_path is not None:
                raise ConfigError(f"strategy {strategy} takes no codebook fields")
        if delta is not None and not 0.0 < float(delta) < 1.0:
            raise ConfigError("delta must be in (0, 1)")
        if schedule is not None:
            if strategy != "bf-vlq":
                raise ConfigError("schedule form is only supported for bf-vlq")
            if set(schedule) != {"f", "c0"}:
                raise ConfigError('schedule must have exactly keys {"f", "c0"}')
            if schedule["f"] not in ("logP", "sqrtP"):
                raise ConfigError('schedule f must be "logP" or "sqrtP"')
            if not isinstance(schedule["c0"], (int, float)) or schedule["c0"] <= 0:
                raise ConfigError("schedule c0 must be positive")
        conditioning = doc.get("conditioning", "radial")
        if conditioning not in ("none", "radial"):
            raise ConfigError('conditioning must be "none" or "radial"')
        return cls(
            t=t,
            strategy=strategy,
            P_grid_dB=tuple(float(g) for g in grid),
            samples=samples,
            seed=seed,
            delta=None if delta is None else float(delta),
            schedule=None if schedule is None else dict(schedule),
            codebook_path=cb_path,
            output_path=doc["output-path"],
            conditioning=conditioning,
        )

    def to_dict(self) -> dict:
        doc = {
            "t": self.t,
            "strategy": self.strategy,
            "P-grid-dB": list(self.P_grid_dB),
            "samples": self.samples,
            "seed": self.seed,
            "output-path": self.output_path,
            "conditioning": self.conditioning,
        }
        if self.delta is not None:
            doc["delta"] = self.delta
        if self.schedule is not None:
            doc["schedule"] = dict(self.schedule)
        if self.codebook_path is not None:
            doc["codebook-path"] = self.codebook_path
        return doc

    @property
    def P_grid(self) -> tuple:
        return tuple(10.0 ** (dB / 10.0) for dB in self.P_grid_dB)


def _load_config(path: str) -> SimulationConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return SimulationConfig.from_dict(doc)


def _resolve_codebook(config: SimulationConfig, delta: float | None = None) -> BeamformingCodebook:
    if config.codebook_path is not None:
        p = Path(config.codebook_path)
        if not p.exists():
            raise ConfigError(
                f"codebook file not found: {config.codebook_path} "
                "(build one with: vlqsim codebook build)"
            )
        try:
            book = load_codebook(p)
        except ValueError as exc:
            raise CoveringError(f"codebook file {p} failed validation: {exc}") from exc
        if book.t != config.t:
            raise ConfigError(f"codebook has t={book.t}, config has t={config.t}")
        return book
    d = config.delta if delta is None else delta
    return build_covering_codebook(config.t, d, RngStream(config.seed, 101), stop_streak=400)


def _make_spec(config: SimulationConfig, delta: float | None = None):
    t = config.t
    if config.strategy == "bf-full":
        return est.FullCsitBeamforming(t)
    if config.strategy == "pc-full":
        return est.FullCsitPrecoding(t)
    if config.strategy == "open-loop":
        return est.OpenLoopPrecoding(t)
    book = _resolve_codebook(config, delta)
    if config.strategy == "bf-flq":
        return est.FixedLengthBeamforming(book)
    if config.strategy == "bf-vlq":
        return est.VariableLengthBeamforming(VlqBeamformingSpec(book))
    return est.VariableLengthPrecoding(VlqPrecodingSpec(precoding_codebook(book)))


def run_config(config: SimulationConfig, workers: int = 1, output: str | None = None) -> list:
    """Execute a sweep config; writes the CSV and a JSON summary next to it."""
    stream = RngStream(config.seed)
    if config.schedule is not None:
        f_map = {"logP": math.log, "sqrtP": math.sqrt}
        f = f_map[config.schedule["f"]]
        records = []
        for P in config.P_grid:
            d = bounds_mod.delta_schedule(f(P), config.t, config.schedule["c0"])
            spec = _make_spec(config, delta=d)
            records.extend(
                est.ser_rate_sweep(
                    [spec], [P], config.samples, stream,
                    workers=workers, conditioning=config.conditioning,
                )
            )
    else:
        spec = _make_spec(config)
        records = est.ser_rate_sweep(
            [spec], list(config.P_grid), config.samples, stream,
            workers=workers, conditioning=config.conditioning,
        )
    out = Path(output if output is not None else config.output_path)
    est.write_records_csv(records, out)
    summary = {"config": config.to_dict(), "records": len(records)}
    c1, _ = bounds_mod.derive_c1()
    summary["constants"] = {"c1": c1}
    summary["converse-violations"] = bounds_mod.converse_check(records, config.t, c1)
    if len(config.P_grid) >= 3 and config.P_grid[-1] / config.P_grid[0] >= 100.0:
        gains = est.estimate_gains(records, top_decades=2)
        summary["gains"] = {"diversity": gains.diversity, "array-gain": gains.array_gain}
    Path(str(out) + ".summary.json").write_text(json.dumps(summary, indent=1))
    return records


def selftest(seed: int = 0, verbose: bool = True) -> list:
    """Reduced invariant suite; returns (name, passed, detail) tuples."""
    results = []

    def check(name, fn):
        t0 = time.time()
        try:
            fn()
            results.append((name, True, f"{time.time() - t0:.1f}s"))
        except Exception as exc:  # noqa: BLE001 - report, do not crash
            results.append((name, False, f"{type(exc).__name__}: {exc}"))

    def q_sandwich():
        c1, _ = bounds_mod.derive_c1()
        x = np.arange(-5.0, 8.0, 0.01)
        q = q_function(x)
        assert np.all(q >= c1 * np.exp(-(x**2)) - 1e-15), "lower sandwich violated"
        pos = x[x >= 0.0]
        assert np.all(q_function(pos) <= 0.5 * np.exp(-(pos**2) / 2.0) + 1e-15), (
            "upper sandwich violated"
        )
        assert abs(q_function(0.0) - 0.5) < 1e-14

    def kraft():
        book = build_covering_codebook(2, 0.3, RngStream(seed, 11), stop_streak=200)
        for code in (VlqBeamformingSpec(book).prefix_code(),
                     VlqPrecodingSpec(precoding_codebook(book)).prefix_code()):
            ok, total = kraft_check(code)
            assert ok, "prefix condition violated"
            assert total <= 1.0 + 1e-12, f"Kraft sum {total} > 1"

    def covering():
        book = build_covering_codebook(2, 0.3, RngStream(seed, 12), stop_streak=200)
        report = verify_covering(book, 0.3, probes=2000, stream=RngStream(seed, 13))
        assert report.passed, f"worst correlation^2 {report.worst_correlation_sq}"
        # fault injection: a corrupted codeword must be rejected on load
        bad = book.vectors.copy()
        bad[0] *= 1.5
        try:
            BeamformingCodebook(vectors=bad, delta=book.delta)
        except ValueError:
            pass
        else:
            raise AssertionError("non-unit codeword slipped through validation")

    def orthogonality():
        gen = np.random.default_rng(seed)
        for t in (2, 3, 4):
            code = ostbc_generator(t)
            for _ in range(100):
                s = gen.standard_normal(code.k) + 1j * gen.standard_normal(code.k)
                S = code.generator(s)
                err = np.max(np.abs(S.conj().T @ S - np.sum(np.abs(s) ** 2) * np.eye(t)))
                assert err < 1e-12, f"t={t} orthogonality defect {err}"

    def dominance():
        book = build_covering_codebook(2, 0.3, RngStream(seed, 14), stop_streak=200)
        specs = [
            est.FixedLengthBeamforming(book),
            est.VariableLengthBeamforming(VlqBeamformingSpec(book)),
            est.VariableLengthPrecoding(VlqPrecodingSpec(precoding_codebook(book))),
        ]
        full = est.FullCsitBeamforming(2)
        for spec in specs:
            _, _, frac, worst = est.paired_compare(
                spec, full, 10.0, 20000, RngStream(seed, 15)
            )
            assert frac == 1.0 and worst == 0.0, (
                f"{spec.quantizer_id} beat full-CSIT on some draw ({worst})"
            )

    def bound_consistency():
        book = build_covering_codebook(2, 0.3, RngStream(seed, 16), stop_streak=200)
        specs = [
            est.FixedLengthBeamforming(book),
            est.VariableLengthBeamforming(VlqBeamformingSpec(book)),
            est.VariableLengthPrecoding(VlqPrecodingSpec(precoding_codebook(book))),
        ]
        records = est.ser_rate_sweep(specs, [10.0, 100.0], 20000, RngStream(seed, 17))
        c1, _ = bounds_mod.derive_c1()
        violations = bounds_mod.converse_check(records, 2, c1)
        assert not violations, f"converse violations: {violations}"

    def quadrature():
        from .numerics import bpsk_mrc_ser

        for t in (1, 2, 3):
            for P in (1.0, 10.0, 100.0):
                a = est.ser_full_analytic(t, P)
                b = float(bpsk_mrc_ser(t, P))
                assert abs(a - b) <= 1e-8 * b, f"t={t} P={P}: {a} vs {b}"

    check("q-function-sandwich", q_sandwich)
    check("kraft-inequality", kraft)
    check("covering-certificate", covering)
    check("ostbc-orthogonality", orthogonality)
    check("pathwise-dominance", dominance)
    check("converse-consistency", bound_consistency)
    check("quadrature-closed-form", quadrature)
    if verbose:
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'}  {name:24s} {detail}")
    return results


def _cmd_codebook(args) -> int:
    if args.action == "build":
        book = build_covering_codebook(
            args.t, args.delta, RngStream(args.seed, 101), stop_streak=args.stop_streak
        )
        save_codebook(book, args.output)
        print(f"built |B| = {len(book)} codewords (t={args.t}, delta={args.delta}) -> {args.output}")
        return 0
    book = load_codebook(args.input)
    report = verify_covering(
        book, args.delta if args.delta is not None else book.delta,
        probes=args.probes, stream=RngStream(args.seed, 102),
    )
    print(
        f"verify |B| = {len(book)}: worst correlation^2 {report.worst_correlation_sq:.6f} "
        f"{'>=' if report.passed else '<'} {1 - report.delta:.6f} "
        f"over {report.probes_tested} probes -> {'PASS' if report.passed else 'FAIL'}"
    )
    return 0 if report.passed else 3


def _cmd_sweep(args) -> int:
    config = _load_config(args.config)
    records = run_config(config, workers=args.workers, output=args.output)
    out = args.output if args.output is not None else config.output_path
    print(f"wrote {len(records)} records -> {out}")
    return 0


def _cmd_fit(args) -> int:
    rows = []
    with open(args.input, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(row)
    if not rows:
        raise ConfigError(f"no records in {args.input}")
    by_q: dict[str, list] = {}
    for row in rows:
        by_q.setdefault(row["quantizer"], []).append(
            est.SweepRecord(
                quantizer_id=row["quantizer"],
                P=float(row["P_linear"]),
                ser=float(row["ser"]),
                ser_stderr=float(row["ser_stderr"]),
                rate=float(row["rate"]),
                rate_stderr=float(row["rate_stderr"]),
                samples=int(row["samples"]),
                seed=int(row["seed"]),
            )
        )
    for qid, recs in by_q.items():
        gains = est.estimate_gains(recs, top_decades=args.top_decades)
        print(
            f"{qid}: diversity {gains.diversity:.4f}  array gain {gains.array_gain:.5g}  "
            f"max |residual| {gains.fit.max_abs_residual:.3g}"
        )
    return 0


def _cmd_compare(args) -> int:
    config = _load_config(args.config)
    spec = _make_spec(config)
    base_doc = config.to_dict()
    base_doc["strategy"] = args.baseline
    for key in ("delta", "schedule", "codebook-path"):
        base_doc.pop(key, None)
    if args.baseline in _CODED:
        base_doc["delta"] = config.delta if config.delta is not None else 0.3
    baseline = _make_spec(SimulationConfig.from_dict(base_doc))
    print(f"pairwise {config.strategy} vs {args.baseline} ({config.samples} draws/point)")
    for P in config.P_grid:
        gap, se, frac, worst = est.paired_compare(
            spec, baseline, P, config.samples, RngStream(config.seed, 5)
        )
        print(
            f"  P = {P:10.4g}: mean gap {gap:+.4e} +- {se:.1e}  "
            f"A>=B on {100 * frac:.2f}% of draws  max violation {worst:+.2e}"
        )
    return 0


def _cmd_bounds(args) -> int:
    c1, _ = bounds_mod.derive_c1()
    _, _, c3 = bounds_mod.thm6_constants(args.t, Fraction(args.r))
    constants = bounds_mod.BoundConstants(
        c0_hat=args.c0,
        c1=c1,
        c2_hat=bounds_mod.c2_hat(args.c0, args.t, args.delta),
        c3=c3,
        t=args.t,
        r=Fraction(args.r),
    )
    print(bounds_mod.constants_table(constants))
    return 0


def _cmd_selftest(args) -> int:
    results = selftest(seed=args.seed)
    return 0 if all(ok for _, ok, _ in results) else 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vlqsim",
        description="Variable-length limited-feedback quantizer simulations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_cb = sub.add_parser("codebook", help="build or verify covering codebooks")
    cb_sub = p_cb.add_subparsers(dest="action", required=True)
    p_build = cb_sub.add_parser("build")
    p_build.add_argument("--t", type=int, required=True)
    p_build.add_argument("--delta", type=float, required=True)
    p_build.add_argument("--seed", type=int, default=0)
    p_build.add_argument("--stop-streak", type=int, default=400)
    p_build.add_argument("--output", required=True)
    p_verify = cb_sub.add_parser("verify")
    p_verify.add_argument("--input", required=True)
    p_verify.add_argument("--delta", type=float, default=None)
    p_verify.add_argument("--probes", type=int, default=20000)
    p_verify.add_argument("--seed", type=int, default=0)

    p_sweep = sub.add_parser("sweep", help="run a configured SER/rate sweep")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--output", default=None)

    p_fit = sub.add_parser("fit", help="diversity/array-gain fit on a sweep CSV")
    p_fit.add_argument("--input", required=True)
    p_fit.add_argument("--top-decades", type=int, default=2)

    p_cmp = sub.add_parser("compare", help="pathwise comparison against a baseline")
    p_cmp.add_argument("--config", required=True)
    p_cmp.add_argument("--baseline", default="bf-full", choices=_STRATEGIES)

    p_bounds = sub.add_parser("bounds", help="print the bound constants table")
    p_bounds.add_argument("--t", type=int, default=2)
    p_bounds.add_argument("--r", default="1")
    p_bounds.add_argument("--c0", type=float, default=0.0224)
    p_bounds.add_argument("--delta", type=float, default=0.35)

    p_self = sub.add_parser("selftest", help="run the reduced invariant suite")
    p_self.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "codebook": _cmd_codebook,
        "sweep": _cmd_sweep,
        "fit": _cmd_fit,
        "compare": _cmd_compare,
        "bounds": _cmd_bounds,
        "selftest": _cmd_selftest,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CoveringError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 3
    except QuadratureError as exc:
        print(f"numeric non-convergence: {exc}", file=sys.stderr)
        return 4
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
