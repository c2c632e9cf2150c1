"""Command line interface: ``cachelattice <command> --config FILE``.

Exit codes: 0 success, 2 configuration error, 3 infeasible analysis,
4 internal invariant violation.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .cachesim import AccessTrace, gen_trace, read_trace, restrict_report, simulate, write_trace
from .codegen import build_schedule, emit_c
from .config import RunConfig, load_config
from .core import make_index_map, residue_point
from .errors import (CacheLatticeError, ConfigError, DomainError, InfeasibleAnalysis,
                     InvalidArgument, InvariantViolation, SizeError)
from .lattice import build_lattices, lattice_basis
from .model import count_misses, count_misses_all_tiles, count_misses_direct, resolve_sets
from .tiling import (baseline_rect_plan, choose_plan, lattice_tiles_from, max_rectangle,
                     oriented, volume_savings, whole_domain_plan, worst_case_count)

DIRECT_ORACLE_LIMIT = 5000


def _sets(cfg: RunConfig, lattices):
    return resolve_sets(lattices, cfg.sets)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def run_analyze(cfg: RunConfig) -> dict:
    spec = cfg.spec
    if cfg.op is not None:
        dom = cfg.domain()
        ops = [(op.name, op.imap) for op in dom.operands if not op.virtual]
    else:
        ops = [(t.name, make_index_map(t, layout)) for t, layout in cfg.tables]
    rows = []
    for name, imap in ops:
        lat = lattice_basis(spec, imap)
        base = residue_point(imap, 0, spec.set_stride)
        rows.append({"operand": name, "dims": list(imap.dims), "weights": list(imap.weights),
                     "offset": imap.offset, "modulus": spec.set_stride,
                     "basis_raw": [list(r) for r in lat.raw],
                     "basis_reduced": [list(r) for r in lat.reduced],
                     "det": lat.det, "base_point": list(base) if base is not None else None})
    if rows and all(r["base_point"] is None for r in rows):
        raise InfeasibleAnalysis("no operand has a potential conflict (empty generator set)")
    return {"config_hash": cfg.hash, "cache": _cache_dict(cfg), "operands": rows}


def _cache_dict(cfg: RunConfig) -> dict:
    s = cfg.spec
    return {"capacity": s.capacity, "line": s.line, "assoc": s.assoc, "level": s.level,
            "sets": s.n_sets, "set_stride": s.set_stride}


def _plan(cfg: RunConfig, dom, lattices):
    return choose_plan(cfg.spec, dom, lattices, cfg.alpha, cfg.beta, cfg.target)


def run_misses(cfg: RunConfig, tiled: bool = False, per_set: bool = False) -> dict:
    dom = cfg.domain()
    lats = build_lattices(cfg.spec, dom)
    order = cfg.iteration_order(dom)
    sets = _sets(cfg, lats)
    K = cfg.spec.assoc
    out = {"config_hash": cfg.hash, "sets": sets}
    rep = count_misses(dom, lats, order, K, sets=sets)
    out["untiled"] = rep.to_dict()
    if tiled:
        plan = _plan(cfg, dom, lats)
        total, per_tile = count_misses_all_tiles(dom, plan.tiles, lats, order, K, sets)
        out["plan"] = plan.to_dict()
        out["tiled"] = total.to_dict()
        out["tiled"]["tiles"] = len(per_tile)
    if not per_set:
        for key in ("untiled", "tiled"):
            if key in out:
                out[key].pop("per_set")
    return out


def _trace(cfg: RunConfig, tiled: bool):
    dom = cfg.domain()
    order = cfg.iteration_order(dom)
    if tiled:
        lats = build_lattices(cfg.spec, dom)
        order = _plan(cfg, dom, lats).order(order)
    return gen_trace(dom, order)


def run_simulate(cfg: RunConfig, trace_file: Optional[str] = None, tiled: bool = False,
                 policy: Optional[str] = None, write_to: Optional[str] = None) -> dict:
    policy = policy or cfg.policy
    if trace_file:
        trace = read_trace(trace_file)
    elif cfg.op is not None:
        trace = _trace(cfg, tiled)
    else:
        trace = AccessTrace.empty()
    if write_to:
        write_trace(write_to, trace)
    rep = simulate(cfg.spec, policy, trace)
    if rep.total != len(trace):
        raise InvariantViolation("hits + cold + conflict differs from the trace length")
    return {"config_hash": cfg.hash, "policy": policy, "records": len(trace), **rep.to_dict()}


def run_tile(cfg: RunConfig, baseline_rect: bool = False) -> tuple[dict, list[dict]]:
    """Tiling plan (kernel configs) or lattice tile vs rectangles (table configs)."""
    target = cfg.target if cfg.target is not None else max(cfg.spec.assoc - cfg.alpha, 1)
    rows: list[dict] = []
    if cfg.op is None:
        t, layout = cfg.tables[0]
        lat = lattice_basis(cfg.spec, make_index_map(t, layout))
        if lat.dim != 2:
            raise InvalidArgument("table-only tiling reports need a 2-d table")
        scales = (target, 1)
        tile = lattice_tiles_from(lat, scales)
        box = cfg.search_box or tuple(t.dims)
        rows.append({"kind": "lattice", "label": "scaled reduced basis", "w": "", "h": "",
                     "volume": tile.volume, "lattice_points": target, "savings_pct": 0.0})
        report = {"config_hash": cfg.hash, "table": t.name, "det": lat.det,
                  "basis_reduced": [list(r) for r in lat.reduced],
                  "tile_vectors": [list(v) for v in tile.vectors], "tile_volume": tile.volume,
                  "lattice_points_per_tile": target}
        if baseline_rect:
            rect = max_rectangle(lat, target, box)
            rows.append(_rect_row("max_rect", rect.extents, rect.count, tile.volume))
            report["max_rectangle"] = {"extents": list(rect.extents), "volume": rect.volume,
                                       "search_box": list(box),
                                       "maximizers": [list(m) for m in rect.maximizers]}
            if cfg.reference_rect:
                ref = tuple(cfg.reference_rect)
                lo, hi = worst_case_count(lat, ref)
                rows.append(_rect_row("reference_rect", ref, hi, tile.volume))
                report["reference_rect"] = {"extents": list(ref), "volume": ref[0] * ref[1],
                                            "min_points": lo, "max_points": hi}
            report["rectangles"] = rows[1:]
        return report, rows
    dom = cfg.domain()
    lats = build_lattices(cfg.spec, dom)
    plan = _plan(cfg, dom, lats)
    report = {"config_hash": cfg.hash, "plan": plan.to_dict()}
    rows.append({"kind": plan.kind, "label": plan.operand or "", "w": "", "h": "",
                 "volume": plan.tiles.volume, "lattice_points": plan.points_per_tile or "",
                 "savings_pct": 0.0})
    if baseline_rect and plan.kind == "lattice":
        base = baseline_rect_plan(dom, plan, lats, cfg.search_box)
        report["baseline_rect"] = base.to_dict()
        extents = [max(abs(x) for x in v) for v in base.operand_vectors]
        lattice_volume = lats[dom.operand_index(plan.operand)].det * plan.points_per_tile
        rows.append(_rect_row("max_rect", extents, base.points_per_tile, lattice_volume))
    return report, rows


def _rect_row(label, extents, points, lattice_volume) -> dict:
    w, h = (list(extents) + [1, 1])[:2]
    vol = int(np.prod(extents))
    return {"kind": "rect", "label": label, "w": w, "h": h, "volume": vol,
            "lattice_points": points,
            "savings_pct": round(100 * volume_savings(lattice_volume, vol), 2)}


def run_codegen(cfg: RunConfig, parallel: bool = False, dtype: str = "f64",
                tiled: bool = True) -> tuple[dict, str]:
    dom = cfg.domain()
    lats = build_lattices(cfg.spec, dom)
    plan = _plan(cfg, dom, lats) if tiled else whole_domain_plan(dom)
    sched = build_schedule(dom, plan, cfg.iteration_order(dom))
    s = cfg.spec
    header = (f"cache: capacity {s.capacity} line {s.line} assoc {s.assoc} (elements)\n"
              f"plan: {plan.kind} operand {plan.operand} scales {list(plan.scales)}")
    prog = emit_c(sched, parallel, dtype, cfg.hash, header)
    return {"config_hash": cfg.hash, "symbol": prog.symbol, "parallel": parallel,
            "dtype": dtype, "plan": plan.to_dict()}, prog.source


def run_compare(cfg: RunConfig) -> dict:
    """Model vs. simulator, untiled and tiled, plus the rectangular baseline."""
    stage = "analyze"
    try:
        dom = cfg.domain()
        lats = build_lattices(cfg.spec, dom)
        order = cfg.iteration_order(dom)
        sets = _sets(cfg, lats)
        K = cfg.spec.assoc
        stage = "misses"
        model = count_misses(dom, lats, order, K, sets=sets)
        direct = None
        if model.upper_bound <= DIRECT_ORACLE_LIMIT:
            direct = count_misses_direct(dom, cfg.spec.set_stride, cfg.spec.line, order, K, sets)
            if direct != model.total:
                raise InvariantViolation(f"model {model.total} != direct oracle {direct}")
        stage = "simulate"
        trace = gen_trace(dom, order)
        sim = simulate(cfg.spec, cfg.policy, trace)
        stage = "restrict"
        rsim = restrict_report(sim, trace, dom, lats, cfg.spec, sets)
        stage = "tile"
        plan = _plan(cfg, dom, lats)
        tiled_model, per_tile = count_misses_all_tiles(dom, plan.tiles, lats, order, K, sets)
        ttrace = gen_trace(dom, plan.order(order))
        tsim = simulate(cfg.spec, cfg.policy, ttrace)
        trsim = restrict_report(tsim, ttrace, dom, lats, cfg.spec, sets)
        out = {"config_hash": cfg.hash, "seed": cfg.seed, "policy": cfg.policy, "sets": sets,
               "untiled": {"model": model.to_dict(), "direct_oracle": direct,
                           "sim": sim.to_dict(), "sim_restricted": rsim.to_dict(),
                           "delta": model.total - rsim.misses},
               "plan": plan.to_dict(),
               "tiled": {"model": tiled_model.to_dict(), "sim": tsim.to_dict(),
                         "sim_restricted": trsim.to_dict(),
                         "delta": tiled_model.total - trsim.misses,
                         "tiles": len(per_tile),
                         "per_tile_model": _tile_stats([r.total for r in per_tile.values()])}}
        if plan.kind == "lattice":
            base = baseline_rect_plan(dom, plan, lats, cfg.search_box)
            btrace = gen_trace(dom, base.order(order))
            bsim = simulate(cfg.spec, cfg.policy, btrace)
            out["baseline_rect"] = {"plan": base.to_dict(), "sim": bsim.to_dict(),
                                    "lattice_tile_volume": plan.tiles.volume,
                                    "rect_tile_volume": base.tiles.volume}
        out["tiled_beats_untiled"] = tsim.misses < sim.misses
        return out
    except CacheLatticeError as exc:
        exc.args = (f"[{stage}] {exc}",)
        raise


def _tile_stats(vals) -> dict:
    if not vals:
        return {"min": 0, "max": 0, "mean": 0.0}
    a = np.asarray(vals)
    return {"min": int(a.min()), "max": int(a.max()), "mean": round(float(a.mean()), 4)}


# ---------------------------------------------------------------------------
# argument parsing and output
# ---------------------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    fields = ["kind", "label", "w", "h", "volume", "lattice_points", "savings_pct"]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _human(obj, indent: int = 0) -> str:
    pad = "  " * indent
    lines = []
    for k, v in (obj.items() if isinstance(obj, dict) else enumerate(obj)):
        if isinstance(v, (dict, list)) and v and not all(isinstance(x, (int, float, str)) for x in v):
            lines.append(f"{pad}{k}:")
            lines.append(_human(v, indent + 1))
        else:
            lines.append(f"{pad}{k}: {v}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--out", help="directory for report files")
    common.add_argument("--json", action="store_true", help="print JSON instead of text")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, help="cap internal parallelism")

    p = argparse.ArgumentParser(prog="cachelattice",
                                description="Lattice cache-miss models and lattice tiling.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="conflict lattices per operand")
    m = sub.add_parser("misses", parents=[common], help="analytic miss counts")
    g = m.add_mutually_exclusive_group()
    g.add_argument("--tiled", action="store_true")
    g.add_argument("--untiled", action="store_true")
    m.add_argument("--per-set", action="store_true")
    s = sub.add_parser("simulate", parents=[common], help="trace-driven cache simulation")
    s.add_argument("--policy", choices=["lru", "plru"])
    src = s.add_mutually_exclusive_group()
    src.add_argument("--trace", help="trace file to replay")
    src.add_argument("--from-config", action="store_true", help="generate the trace (default)")
    s.add_argument("--tiled", action="store_true", help="trace the tiled order")
    s.add_argument("--write-trace", help="also write the replayed trace to this file")
    t = sub.add_parser("tile", parents=[common], help="tiling plan and rectangle baseline")
    t.add_argument("--alpha", type=int)
    t.add_argument("--beta", type=int)
    t.add_argument("--target", type=int)
    t.add_argument("--baseline-rect", action="store_true")
    c = sub.add_parser("codegen", parents=[common], help="emit a tiled C loop nest")
    c.add_argument("--parallel", action="store_true")
    c.add_argument("--dtype", choices=["f64", "i64"], default="f64")
    c.add_argument("--untiled", action="store_true")
    c.add_argument("--c-out", dest="c_out", help="write the C file here (default: stdout)")
    sub.add_parser("compare", parents=[common], help="model vs simulator report")
    return p


def _set_threads(n: Optional[int]) -> None:
    if not n:
        return
    try:
        import numba
        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))
    except (ImportError, ValueError):  # pragma: no cover
        pass


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        _set_threads(args.threads)
        for key in ("alpha", "beta", "target"):
            val = getattr(args, key, None)
            if val is not None:
                setattr(cfg, key, val)
        out_dir = Path(args.out or cfg.out) if (args.out or cfg.out) else None
        files: dict[str, str] = {}
        cmd = args.command
        if cmd == "analyze":
            report = run_analyze(cfg)
        elif cmd == "misses":
            report = run_misses(cfg, tiled=args.tiled, per_set=args.per_set)
        elif cmd == "simulate":
            report = run_simulate(cfg, args.trace, args.tiled, args.policy, args.write_trace)
        elif cmd == "tile":
            report, rows = run_tile(cfg, args.baseline_rect)
            files["tile.csv"] = _csv(rows)
        elif cmd == "codegen":
            report, source = run_codegen(cfg, args.parallel, args.dtype, not args.untiled)
            name = Path(args.c_out).name if args.c_out else f"{report['symbol']}.c"
            files[name] = source
            if args.c_out:
                Path(args.c_out).write_text(source)
            elif not out_dir:
                sys.stdout.write(source)
                return 0
        else:
            report = run_compare(cfg)
        text = _dump(report)
        if out_dir:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / f"{cmd}.json").write_text(text)
            for name, body in files.items():
                (out_dir / name).write_text(body)
        sys.stdout.write(text if args.json else _human(report) + "\n")
        if cmd == "tile" and not args.json and files.get("tile.csv"):
            sys.stdout.write("\n" + files["tile.csv"])
        return 0
    except (ConfigError, InvalidArgument, DomainError, SizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleAnalysis as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {getattr(exc, 'filename', '') or ''} {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
