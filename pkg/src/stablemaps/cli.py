"""Command-line front end.

Every subcommand builds a :class:`RunConfig` and hands it to :func:`run`;
outputs depend only on the config, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .bijection import PointedMap, tree_to_map, validate_map
from .continuum import (brownian_excursion, snake_head, stable_label_field,
                        stable_proxy_excursion, MAX_SNAKE_GRID)
from .formats import (CsvAppender, decode_tree, encode_tree, law_to_json, load_law_document,
                      map_edge_list, map_from_record, map_to_record, read_jsonl, tree_from_json,
                      tree_to_json, write_jsonl)
from .labels import LabelledTree, label_tree
from .metrics import radius_delta_profile, summarise_sweep, sweep_cell
from .seeds import rng_for
from .trees import ConditioningSpec, PlaneTree, SamplingError, sample_conditioned
from .weights import (CriticalityReport, OffspringLaw, WeightSeq, classify, make_stable_offspring,
                      offspring_law)

__all__ = ["RunConfig", "run", "main", "resolve_law", "CONDITIONING", "NonCriticalLaw"]

CONDITIONING = {"edges": "all", "vertices": "leaves", "faces": "internal"}
_SHORT = {"E": "edges", "V": "vertices", "F": "faces"}


class NonCriticalLaw(RuntimeError):
    def __init__(self, report: CriticalityReport):
        super().__init__(f"weights are {report.classification}: " + json.dumps(report.as_dict()))
        self.report = report


def _angulation(kappa: int) -> WeightSeq:
    q = (kappa - 1) ** (kappa - 1) / (math.comb(2 * kappa - 1, kappa - 1) * kappa**kappa)
    return WeightSeq({kappa: q})


def resolve_law(source: str) -> tuple[OffspringLaw, WeightSeq | None, CriticalityReport | None]:
    """Preset name or JSON file to a critical offspring law.

    Presets: ``quadrangulation``, ``2k-angulation:<k>``, ``stable:<alpha>[:<cutoff>]``.
    """
    if source == "quadrangulation":
        obj = _angulation(2)
    elif source.startswith("2k-angulation:"):
        obj = _angulation(int(source.split(":", 1)[1]))
    elif source.startswith("stable:"):
        parts = source.split(":")
        alpha = float(parts[1])
        cutoff = int(parts[2]) if len(parts) > 2 else (2 if alpha < 2 else 50)
        obj = make_stable_offspring(alpha, cutoff)
    else:
        obj = load_law_document(json.loads(Path(source).read_text()))
    if isinstance(obj, OffspringLaw):
        obj.check_critical()
        return obj, None, None
    report = classify(obj)
    if not report.is_critical:
        raise NonCriticalLaw(report)
    return offspring_law(obj, report), obj, report


@dataclass
class RunConfig:
    command: str
    law: str | None = None
    cond: str = "edges"
    ns: list[int] = field(default_factory=list)
    reps: int = 1
    seed: int = 0
    out: str | None = None
    threads: int = 1
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        self.cond = _SHORT.get(self.cond, self.cond)
        if self.cond not in CONDITIONING:
            raise ValueError(f"--cond must be one of {sorted(CONDITIONING)}")
        if self.reps < 1:
            raise ValueError("--reps must be positive")

    @property
    def which(self) -> str:
        return CONDITIONING[self.cond]


# -- helpers -----------------------------------------------------------------


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _check_conditioning(m: PointedMap, cond: str, n: int) -> None:
    if cond == "vertices" and m.n_vertices != n + 1:
        raise AssertionError(f"S=V: expected {n + 1} vertices, got {m.n_vertices}")
    if cond == "faces" and m.n_faces != n:
        raise AssertionError(f"S=F: expected {n} faces, got {m.n_faces}")
    if cond == "edges" and m.n_edges != n - 1:
        raise AssertionError(f"S=E: expected {n - 1} edges, got {m.n_edges}")


def _sample_labelled(law: OffspringLaw, which: str, n: int, seed: int, rep: int) -> LabelledTree:
    tree = sample_conditioned(law, ConditioningSpec(which, n), rng_for(seed, n, rep, "tree"))
    return label_tree(tree, rng_for(seed, n, rep, "labels"))


def _exhausted(exc: SamplingError, **meta) -> dict:
    return dict(meta, status="exhausted", attempts=exc.attempts,
                acceptance_rate=exc.acceptance_rate)


def _map_cell(args) -> dict:
    law, cond, n, seed, rep = args
    try:
        lt = _sample_labelled(law, CONDITIONING[cond], n, seed, rep)
    except SamplingError as exc:
        return _exhausted(exc, seed=seed, n=n, S=cond[0].upper(), rep=rep)
    m = tree_to_map(lt)
    _check_conditioning(m, cond, n)
    return map_to_record(m, seed=seed, n=n, S=cond[0].upper(), rep=rep)


def _sweep_cell(args) -> dict:
    law, which, n, rep, seed = args
    try:
        return dict(sweep_cell(law, which, n, rep, seed), status="ok")
    except SamplingError as exc:
        return _exhausted(exc, seed=seed, n=n, rep=rep)


def _pool_map(fn: Callable, items: list, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))


# -- subcommands -------------------------------------------------------------


def _cmd_weights_check(cfg: RunConfig) -> dict:
    src = cfg.options["file"]
    try:
        law, q, report = resolve_law(src)
    except NonCriticalLaw as exc:
        summary = exc.report.as_dict()
    else:
        summary = report.as_dict() if report is not None else {"classification": "critical", "Z_q": None}
        summary["offspring"] = law_to_json(law)
        summary["mean"] = law.mean
        summary["variance"] = law.variance if math.isfinite(law.variance) else "inf"
        summary["alpha"] = law.alpha
    fh, own = _open_out(cfg.out)
    fh.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if own:
        fh.close()
    return summary


def _cmd_sample_tree(cfg: RunConfig) -> dict:
    law, _, _ = resolve_law(cfg.law)
    n = cfg.ns[0]
    tree: PlaneTree | LabelledTree = sample_conditioned(
        law, ConditioningSpec(cfg.which, n), rng_for(cfg.seed, n, 0, "tree"))
    if cfg.options.get("labels"):
        tree = label_tree(tree, rng_for(cfg.seed, n, 0, "labels"))
    if cfg.options.get("format") == "binary":
        if cfg.out is None:
            sys.stdout.buffer.write(encode_tree(tree))
        else:
            Path(cfg.out).write_bytes(encode_tree(tree))
    else:
        fh, own = _open_out(cfg.out)
        doc = tree_to_json(tree)
        doc.update(seed=cfg.seed, n=n, S=cfg.cond[0].upper())
        fh.write(json.dumps(doc, sort_keys=True) + "\n")
        if own:
            fh.close()
    base = tree.tree if isinstance(tree, LabelledTree) else tree
    return {"vertices": base.n_vertices, "leaves": base.n_leaves}


def _cmd_sample_map(cfg: RunConfig) -> dict:
    law, _, _ = resolve_law(cfg.law)
    cells = [(law, cfg.cond, n, cfg.seed, r) for n in cfg.ns for r in range(cfg.reps)]
    recs = _pool_map(_map_cell, cells, cfg.threads)
    exhausted = sum(r.get("status") == "exhausted" for r in recs)
    fh, own = _open_out(cfg.out)
    write_jsonl(fh, recs, header={"kind": "map", "law": cfg.law, "S": cfg.cond[0].upper(),
                                  "seed": cfg.seed, "version": __version__})
    if own:
        fh.close()
    return {"maps": len(recs) - exhausted, "exhausted": exhausted}


STATS_COLUMNS = ["seed", "n", "S", "rep", "vertices", "edges", "faces", "R", "Delta",
                 "max_face_degree", "valid"]


def _cmd_stats(cfg: RunConfig) -> dict:
    with open(cfg.options["input"]) as fh:
        _, recs = read_jsonl(fh)
    fh, own = _open_out(cfg.out)
    bad = 0
    with CsvAppender(fh, STATS_COLUMNS, "stats") as out:
        for rec in recs:
            if rec.get("status") == "exhausted":
                continue
            m = map_from_record(rec)
            R, delta, _ = radius_delta_profile(m)
            ok = validate_map(m).ok
            bad += not ok
            out.write({
                "seed": rec.get("seed"), "n": rec.get("n"), "S": rec.get("S"), "rep": rec.get("rep"),
                "vertices": m.n_vertices, "edges": m.n_edges, "faces": m.n_faces, "R": R,
                "Delta": delta, "max_face_degree": int(m.face_degrees.max()), "valid": int(ok),
            })
    if own:
        fh.close()
    return {"maps": len(recs), "invalid": bad}


SWEEP_COLUMNS = ["seed", "n", "S", "rep", "zeta", "R", "Delta", "lambda", "status"]


def _cmd_scaling_sweep(cfg: RunConfig) -> dict:
    law, _, _ = resolve_law(cfg.law)
    timing = bool(cfg.options.get("timing"))
    cols = SWEEP_COLUMNS + (["runtime"] if timing else [])
    cells = [(law, cfg.which, n, r, cfg.seed) for n in cfg.ns for r in range(cfg.reps)]
    rows = _pool_map(_sweep_cell, cells, cfg.threads)
    S = cfg.cond[0].upper()
    fh, own = _open_out(cfg.out)
    with CsvAppender(fh, cols, "sweep") as out:
        for row in rows:
            out.write(dict(row, S=S))
    if own:
        fh.close()
    good = [r for r in rows if r["status"] == "ok"]
    res = summarise_sweep(law, good, cfg.ns, cfg.seed, reps=cfg.reps)
    res.flagged |= len(good) < len(rows)
    summary = {"seed": cfg.seed, "S": S, "replicates": len(good), "exhausted": len(rows) - len(good), "slope": res.slope, "slope_se": res.slope_se, "predicted": res.predicted,
               "within_2se": res.within(2.0), "flagged": res.flagged}
    if cfg.out not in (None, "-"):
        p = Path(cfg.out)
        with CsvAppender(p.with_name(p.stem + ".summary.csv"), list(summary), "sweep-summary") as s:
            s.write(summary)
    return summary


def _cmd_continuum_ref(cfg: RunConfig) -> dict:
    alpha = float(cfg.options["alpha"])
    m = int(cfg.options["grid"])
    rng = rng_for(cfg.seed, m, 0, "continuum")
    meta = {}
    if alpha == 2.0:
        path = brownian_excursion(m, rng)
        L = snake_head(path.H, rng, method="cholesky" if m <= MAX_SNAKE_GRID else "sequential")
    else:
        law = make_stable_offspring(alpha, int(cfg.options.get("cutoff") or 2))
        path = stable_proxy_excursion(law, m, rng)
        field_ = stable_label_field(path, int(cfg.options.get("jumps") or 50), rng)
        L = field_.L
        meta["tail_bound"] = field_.tail_bound
    fh, own = _open_out(cfg.out)
    with CsvAppender(fh, ["seed", "n", "t", "X", "H", "L"], "continuum") as out:
        for row in zip(path.t.tolist(), path.X.tolist(), path.H.tolist(), L.tolist()):
            rec = dict(zip(["t", "X", "H", "L"], (f"{v:.12g}" for v in row)))
            out.write(dict(rec, seed=cfg.seed, n=m))
    if own:
        fh.close()
    return {"alpha": alpha, "grid": m, "provenance": path.provenance, **meta}


def _cmd_export(cfg: RunConfig) -> dict:
    src = Path(cfg.options["input"])
    raw = src.read_bytes()
    obj = decode_tree(raw) if raw[:4] == b"SMTR" else tree_from_json(json.loads(raw))
    fmt = cfg.options["format"]
    if fmt == "binary":
        data = encode_tree(obj)
        if cfg.out is None:
            sys.stdout.buffer.write(data)
        else:
            Path(cfg.out).write_bytes(data)
        return {"format": fmt}
    if fmt == "json":
        text = json.dumps(tree_to_json(obj), sort_keys=True) + "\n"
    else:
        if not isinstance(obj, LabelledTree):
            raise SystemExit("map export needs a labelled tree")
        m = tree_to_map(obj)
        if fmt == "edgelist":
            text = map_edge_list(m)
        else:
            buf = io.StringIO()
            write_jsonl(buf, [map_to_record(m)], header={"kind": "map"})
            text = buf.getvalue()
    fh, own = _open_out(cfg.out)
    fh.write(text)
    if own:
        fh.close()
    return {"format": fmt}


COMMANDS = {
    "weights-check": _cmd_weights_check,
    "sample-tree": _cmd_sample_tree,
    "sample-map": _cmd_sample_map,
    "stats": _cmd_stats,
    "scaling-sweep": _cmd_scaling_sweep,
    "continuum-ref": _cmd_continuum_ref,
    "export": _cmd_export,
}


def run(cfg: RunConfig) -> dict:
    """Execute one subcommand; returns a machine-readable summary."""
    try:
        fn = COMMANDS[cfg.command]
    except KeyError:
        raise ValueError(f"unknown command {cfg.command!r}") from None
    return fn(cfg)


# -- argument parsing --------------------------------------------------------


def _parse_ns(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if part:
            out.append(int(float(part)))
    if not out:
        raise argparse.ArgumentTypeError("empty n list")
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--threads", type=int, default=1, help="worker processes")

    p = argparse.ArgumentParser(prog="stablemaps", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    w = sub.add_parser("weights", help="weight sequence tools")
    wsub = w.add_subparsers(dest="action", required=True)
    wc = wsub.add_parser("check", parents=[common], help="classify a weight sequence")
    wc.add_argument("file", help="JSON document or preset name")

    def law_args(sp):
        sp.add_argument("--law", required=True, help="JSON file or preset")
        sp.add_argument("--cond", default="edges", help="edges|vertices|faces (or E|V|F)")

    st = sub.add_parser("sample-tree", parents=[common], help="sample a conditioned tree")
    law_args(st)
    st.add_argument("--n", type=int, required=True)
    st.add_argument("--labels", action="store_true", help="attach uniform labels")
    st.add_argument("--format", choices=["json", "binary"], default="json")

    sm = sub.add_parser("sample-map", parents=[common], help="sample pointed maps as JSONL")
    law_args(sm)
    sm.add_argument("--n", type=int, required=True)
    sm.add_argument("--reps", type=int, default=1)

    ss = sub.add_parser("stats", parents=[common], help="radius, Delta and validity per map")
    ss.add_argument("--in", dest="input", required=True)

    sw = sub.add_parser("scaling-sweep", parents=[common], help="radius growth across n")
    law_args(sw)
    sw.add_argument("--ns", type=_parse_ns, required=True, help="comma separated, e.g. 1e3,2e3")
    sw.add_argument("--reps", type=int, default=200)
    sw.add_argument("--timing", action="store_true", help="add a runtime column (not reproducible)")

    cr = sub.add_parser("continuum-ref", parents=[common], help="continuum reference path as CSV")
    cr.add_argument("--alpha", type=float, required=True)
    cr.add_argument("--grid", type=int, required=True)
    cr.add_argument("--jumps", type=int, default=50)
    cr.add_argument("--cutoff", type=int, default=None, help="tail start of the proxy law")

    ex = sub.add_parser("export", parents=[common], help="convert a tree file")
    ex.add_argument("--in", dest="input", required=True)
    ex.add_argument("--format", choices=["json", "binary", "jsonl", "edgelist"], required=True)
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    base = dict(seed=ns.seed, out=ns.out, threads=ns.threads)
    if ns.command == "weights":
        return RunConfig("weights-check", options={"file": ns.file}, **base)
    if ns.command == "sample-tree":
        return RunConfig("sample-tree", law=ns.law, cond=ns.cond, ns=[ns.n],
                         options={"labels": ns.labels, "format": ns.format}, **base)
    if ns.command == "sample-map":
        return RunConfig("sample-map", law=ns.law, cond=ns.cond, ns=[ns.n], reps=ns.reps, **base)
    if ns.command == "stats":
        return RunConfig("stats", options={"input": ns.input}, **base)
    if ns.command == "scaling-sweep":
        return RunConfig("scaling-sweep", law=ns.law, cond=ns.cond, ns=ns.ns, reps=ns.reps,
                         options={"timing": ns.timing}, **base)
    if ns.command == "continuum-ref":
        return RunConfig("continuum-ref", options={"alpha": ns.alpha, "grid": ns.grid,
                                                    "jumps": ns.jumps, "cutoff": ns.cutoff}, **base)
    if ns.command == "export":
        return RunConfig("export", options={"input": ns.input, "format": ns.format}, **base)
    raise ValueError(ns.command)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = config_from_args(args)
    try:
        summary = run(cfg)
    except NonCriticalLaw as exc:
        print(json.dumps(exc.report.as_dict()), file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"stablemaps: {exc}", file=sys.stderr)
        return 1
    if cfg.out not in (None, "-") and cfg.command not in ("weights-check",):
        print(json.dumps(summary, sort_keys=True, default=str), file=sys.stderr)
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
