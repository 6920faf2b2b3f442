#!/usr/bin/env python3
"""
scenegraph: generate synthetic layouts, train the room/wall edge classifiers,
infer Rooms and Walls, score them, plot them and refine them.

    scenegraph_cli.py gen-dataset --out data --count 200 --seed 0
    scenegraph_cli.py train --data data --relation room --out room.json
    scenegraph_cli.py infer --model room.json --model wall.json --layout data/layout_00000.json --out pred.json
    scenegraph_cli.py eval --pred pred.json --gt data/layout_00000.json

Exit codes: 0 success, 2 usage or input error, 3 numeric failure.
"""

import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from cluster import CONSERVATIVE, MODES, ClusterConfig, classify_edges
from errors import EmptyDatasetError, InvalidArgumentError, SceneGraphError
from evalkit import aggregate_layouts, format_report_table, score_rooms, score_walls, threshold_sweep
from factors import RefineConfig, SceneFactorGraph, refine
from neural import EdgeClassifierModel, TrainConfig, train
from proxgraph import DEFAULT_K, build_graph, graph_for_layout
from run_history import RunHistory
from scene_io import (FORMAT_VERSION, check_prediction_refs, load_checkpoint, load_layout, load_prediction,
                      plane_to_dict, save_checkpoint, save_layout, save_prediction, write_json)
from scene_pipeline import ScenePipeline
from settings import configure_logging, history_db_path
from svg_plot import plot_scene
from synthgen import SAME_ROOM, SAME_WALL, GenConfig, generate_dataset

RELATION_FLAGS = {'room': SAME_ROOM, 'wall': SAME_WALL}
LAYOUT_GLOB = "layout_*.json"


def _range(text: str):
    """'A..B' -> (A, B)"""
    try:
        lo, hi = (int(part) for part in text.split(".."))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}")
    return lo, hi


def _open_history() -> Optional[RunHistory]:
    path = history_db_path()
    return RunHistory(path) if path else None


def _layout_files(data_dir) -> List[Path]:
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise InvalidArgumentError(f"data directory {data_dir} does not exist")
    files = sorted(data_dir.glob(LAYOUT_GLOB))
    if not files:
        raise EmptyDatasetError(f"no {LAYOUT_GLOB} files in {data_dir}")
    return files


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:.3f}"


def _record_args(args):
    return {k: v for k, v in vars(args).items() if k != "handler"}


# -- commands ---------------------------------------------------------------

def cmd_gen_dataset(args) -> int:
    overrides = {'seed': args.seed}
    if args.rooms:
        overrides['n_rooms'] = args.rooms
    if args.corridor_prob is not None:
        overrides['corridor_prob'] = args.corridor_prob
    config = GenConfig(**overrides)

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InvalidArgumentError(f"cannot create {out}: {e.strerror or e}") from e

    layouts = generate_dataset(config, args.count)
    for index, layout in enumerate(layouts):
        save_layout(out / f"layout_{index:05d}.json", layout)
    planes = sum(len(layout.planes) for layout in layouts)
    print(f"✅ wrote {len(layouts)} layouts ({planes} planes) to {out}")
    return 0


def cmd_train(args) -> int:
    relation = RELATION_FLAGS[args.relation]
    files = _layout_files(args.data)
    dataset = [graph_for_layout(load_layout(f), args.k) for f in files]
    print(f"📂 {len(dataset)} layouts loaded from {args.data}")

    overrides = {'epochs': args.epochs, 'seed': args.seed, 'hidden_dim': args.hidden,
                 'learning_rate': args.lr, 'layouts_per_epoch': args.layouts_per_epoch}
    if args.pos_weight is not None:
        overrides['pos_weight'] = args.pos_weight
    config = TrainConfig.for_relation(relation, **overrides)
    model = EdgeClassifierModel(relation, hidden_dim=config.hidden_dim, seed=config.seed)

    history = _open_history()
    run_id = history.start_run('train', _record_args(args), relation, args.seed) if history else None

    def report(metrics):
        print(f"   epoch {metrics.epoch:3d}  loss {metrics.loss:.5f}  "
              f"P {_fmt(metrics.precision)}  R {_fmt(metrics.recall)}")
        if history:
            history.add_epoch(run_id, metrics.epoch, metrics.loss, metrics.precision, metrics.recall)

    try:
        result = train(model, dataset, config, on_epoch=report)
        save_checkpoint(args.out, result.model)
        if history:
            last = result.history[-1]
            history.finish_run(run_id, str(args.out), {'final_loss': last.loss, 'precision': last.precision,
                                                       'recall': last.recall})
    finally:
        if history:
            history.close()
    print(f"✅ {args.relation} model saved to {args.out}")
    return 0


def cmd_infer(args) -> int:
    models = [load_checkpoint(path) for path in args.model]
    pipeline = ScenePipeline.from_models(models, k=args.k)
    layout = load_layout(args.layout)
    prediction = pipeline.predict(layout.planes, args.mode, preprocess=args.preprocess)
    save_prediction(args.out, prediction, include_planes=args.preprocess)

    history = _open_history()
    if history:
        run_id = history.start_run('infer', _record_args(args))
        history.finish_run(run_id, str(args.out), {'rooms': len(prediction.rooms), 'walls': len(prediction.walls)})
        history.close()

    print(f"✅ {args.mode}: {len(prediction.rooms)} rooms, {len(prediction.walls)} walls "
          f"(tau_room={prediction.tau_room}, tau_wall={prediction.tau_wall}) -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    prediction = load_prediction(args.pred)
    layout = load_layout(args.gt)
    if prediction.planes:
        print("⚠️  prediction was made on preprocessed planes; plane ids may not match the ground truth")
    rooms = score_rooms(prediction.rooms, layout, name=Path(args.gt).stem)
    walls = score_walls(prediction.walls, layout, name=Path(args.gt).stem)
    print(format_report_table(rooms))
    print(format_report_table(walls).split("\n", 1)[1])

    if args.json_out:
        write_json(args.json_out, {'format_version': FORMAT_VERSION,
                                   'rooms': rooms.to_dict(), 'walls': walls.to_dict()})
    history = _open_history()
    if history:
        run_id = history.start_run('eval', _record_args(args))
        history.add_report(run_id, rooms)
        history.add_report(run_id, walls)
        history.close()
    return 0


def cmd_plot(args) -> int:
    layout = load_layout(args.layout)
    planes, rooms, walls = layout.planes, layout.rooms, layout.walls
    if args.pred:
        prediction = load_prediction(args.pred)
        planes = prediction.planes or planes
        rooms, walls = prediction.rooms, prediction.walls
        check_prediction_refs(prediction, planes)
    summary = plot_scene(planes, args.out, rooms, walls, title=args.title)
    print(f"✅ {summary.segments} segments, {summary.rooms} rooms, {summary.walls} walls -> {args.out}")
    return 0


def cmd_refine(args) -> int:
    layout = load_layout(args.layout)
    planes, rooms, walls = layout.planes, layout.rooms, layout.walls
    if args.pred:
        prediction = load_prediction(args.pred)
        planes = prediction.planes or planes
        rooms, walls = prediction.rooms, prediction.walls
        check_prediction_refs(prediction, planes)

    graph = SceneFactorGraph.from_detections(
        planes,
        rooms=[(r.id, r.plane_ids) for r in rooms],
        walls=[(w.id, w.plane_ids) for w in walls],
        prior_weight=args.prior_weight,
    )
    result = refine(graph, RefineConfig(max_iters=args.max_iters))
    refined = result.graph
    write_json(args.out, {
        'format_version': FORMAT_VERSION,
        'initial_cost': result.initial_cost,
        'final_cost': result.final_cost,
        'iterations': result.iterations,
        'converged': result.converged,
        'planes': [plane_to_dict(p) for p in refined.refined_planes()],
        'nodes': [{'id': n.id, 'plane_ids': list(n.plane_ids),
                   'center': [float(n.center[0]), float(n.center[1])]} for n in refined.nodes],
    })

    history = _open_history()
    if history:
        run_id = history.start_run('refine', _record_args(args))
        history.finish_run(run_id, str(args.out), {'initial_cost': result.initial_cost,
                                                   'final_cost': result.final_cost,
                                                   'iterations': result.iterations})
        history.close()

    marker = "✅" if result.converged else "⚠️ "
    print(f"{marker} cost {result.initial_cost:.6e} -> {result.final_cost:.6e} "
          f"in {result.iterations} iterations ({len(refined.nodes)} nodes) -> {args.out}")
    return 0


def cmd_sweep(args) -> int:
    model = load_checkpoint(args.model)
    if model.relation_type != SAME_ROOM:
        raise InvalidArgumentError("sweep needs a room model")
    layouts = [load_layout(f) for f in _layout_files(args.data)]
    preds = [classify_edges(model, build_graph(layout.planes, args.k)) for layout in layouts]
    points = threshold_sweep(preds, layouts, args.taus, ClusterConfig())
    # R_* columns: spread of per-layout recall
    stats = ('mean', 'std', 'min', 'max')
    print(f"{'tau':>6}{'kept':>8}{'precision':>12}{'recall':>10}" + "".join(f"{'R_' + s:>10}" for s in stats))
    for point in points:
        spread = aggregate_layouts(point.report)['recall'] or {}
        cells = "".join(f"{_fmt(spread.get(s)):>10}" for s in stats)
        print(f"{point.tau:>6.2f}{point.kept_edges:>8}{_fmt(point.report.precision):>12}"
              f"{_fmt(point.report.recall):>10}{cells}")
    return 0


def cmd_history(args) -> int:
    history = _open_history()
    if history is None:
        print("⚠️  run history is disabled (SCENEGRAPH_DB=off)")
        return 0
    try:
        runs = history.get_runs(limit=args.limit)
        stats = history.get_stats()
    finally:
        history.close()
    if not runs:
        print("No recorded runs.")
        return 0
    for run in runs:
        relation = f" {run['relation']}" if run['relation'] else ""
        artifact = f" -> {run['artifact_path']}" if run['artifact_path'] else ""
        print(f"{run['created_at']}  {run['command']}{relation}{artifact}")
    print(f"\n{stats['total_runs']} runs, {stats['total_epochs']} recorded epochs")
    return 0


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scenegraph", description="Room and Wall inference from plane features")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="write synthetic labeled layouts")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rooms", type=_range, help="room count range A..B")
    p.add_argument("--corridor-prob", type=float)
    p.set_defaults(handler=cmd_gen_dataset)

    p = sub.add_parser("train", help="train one edge classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--relation", choices=sorted(RELATION_FLAGS), required=True)
    p.add_argument("--epochs", type=int, default=35)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--layouts-per-epoch", type=int, default=200)
    p.add_argument("--pos-weight", type=float)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("infer", help="detect Rooms and Walls in a layout")
    p.add_argument("--model", action="append", required=True, help="checkpoint; repeat for room and wall")
    p.add_argument("--layout", required=True)
    p.add_argument("--mode", choices=MODES, default=CONSERVATIVE)
    p.add_argument("--out", required=True)
    p.add_argument("--preprocess", action="store_true", help="dedup and split planes first")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.set_defaults(handler=cmd_infer)

    p = sub.add_parser("eval", help="score a prediction against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--json-out")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("plot", help="draw a layout (and prediction) as SVG")
    p.add_argument("--layout", required=True)
    p.add_argument("--pred")
    p.add_argument("--out", required=True)
    p.add_argument("--title")
    p.set_defaults(handler=cmd_plot)

    p = sub.add_parser("refine", help="Gauss-Newton refinement of detected nodes")
    p.add_argument("--pred", help="defaults to the layout's ground-truth rooms and walls")
    p.add_argument("--layout", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--prior-weight", type=float, default=1.0)
    p.add_argument("--max-iters", type=int, default=50)
    p.set_defaults(handler=cmd_refine)

    p = sub.add_parser("sweep", help="room precision/recall across thresholds")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--taus", type=float, nargs="+", default=[0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3])
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("history", help="list recorded runs")
    p.add_argument("--limit", type=int, default=20)
    p.set_defaults(handler=cmd_history)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging()
    try:
        return args.handler(args)
    except SceneGraphError as e:
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
