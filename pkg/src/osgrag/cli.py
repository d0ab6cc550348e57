"""Command-line entry point.

    osgrag synth    --output-dir scene/ --objects 10 --seed 3
    osgrag build    --frames scene/ --graph graph.json
    osgrag index    --graph graph.json --db scene.osgv
    osgrag query    --db scene.osgv "How many chairs are there in the room?"
    osgrag ground   --db scene.osgv --graph graph.json "Where is the red book?"
    osgrag retrieve --db scene.osgv --graph graph.json --text "a red chair" [--image CROP]
    osgrag plan     --graph graph.json "Put the mug on the shelf"
    osgrag eval     --graph graph.json --gt scene/gt.json
    osgrag ablate   --gt scene/gt.json [--graph graph.json]

Exit codes: 0 success, 1 pipeline error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig, load_config
from .errors import OsgError
from .evaluation import MatchConfig, evaluate, run_ablation
from .frames import read_frames
from .model_clients import make_backend
from .pipeline import PipelineConfig, build_graph
from .rag_tasks import (
    answer_question,
    envelope,
    ground_query,
    map_doc,
    plan_task,
    render_map_svg,
    retrieve_instance,
)
from .scene_model import deserialize_graph, serialize_graph
from .synthetic import (
    RenderConfig,
    SceneSpec,
    generate_plans,
    generate_qa,
    generate_scene,
    orbit_trajectory,
    render_observations,
    write_scene,
)
from .vector_store import build_chunks, index_chunks, load, persist

log = logging.getLogger("osgrag")


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [section] key = value settings")
    common.add_argument("--seed", type=int, help="seed for every mock output and synthetic draw")
    common.add_argument("--backend", choices=["mock", "http"])
    common.add_argument("--k", type=int, help="top-k chunks to retrieve")
    common.add_argument("--d-thresh", type=float, dest="d_thresh", help="pair filter distance (m)")
    common.add_argument("--output-dir", dest="output_dir", help="where artifacts are written")
    common.add_argument("--format", choices=["json", "table"], default="json")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="osgrag", description="Scene graphs from RGB-D frames, and tasks over them.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic scene and its frames")
    s.add_argument("--objects", type=int, default=10)
    s.add_argument("--frames", type=int, default=24, dest="n_frames")
    s.add_argument("--feature-noise", type=float, default=0.0)

    s = sub.add_parser("build", parents=[common], help="frames directory -> scene graph")
    s.add_argument("--frames", dest="frames_dir")
    s.add_argument("--graph", dest="graph_file")

    s = sub.add_parser("index", parents=[common], help="scene graph -> vector database")
    s.add_argument("--graph", dest="graph_file")
    s.add_argument("--db", dest="db_file")

    for name, helptext in (("query", "answer a question"), ("ground", "ground a question in the scene")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("question")
        s.add_argument("--db", dest="db_file")
        s.add_argument("--graph", dest="graph_file")
        s.add_argument("--frames", dest="frames_dir")

    s = sub.add_parser("retrieve", parents=[common], help="find one instance by text and/or image")
    s.add_argument("--text")
    s.add_argument("--image")
    s.add_argument("--db", dest="db_file")
    s.add_argument("--graph", dest="graph_file")
    s.add_argument("--frames", dest="frames_dir")

    s = sub.add_parser("plan", parents=[common], help="instruction -> action plan")
    s.add_argument("instruction")
    s.add_argument("--graph", dest="graph_file")

    s = sub.add_parser("eval", parents=[common], help="score a graph against ground truth")
    s.add_argument("--graph", dest="graph_file")
    s.add_argument("--gt", dest="gt_file")

    s = sub.add_parser("ablate", parents=[common], help="pair-filter ablation against ground truth")
    s.add_argument("--gt", dest="gt_file")
    s.add_argument("--graph", dest="graph_file", help="relate these nodes instead of the GT nodes")
    return p


def _effective_config(args) -> RunConfig:
    cfg = load_config(args.config)
    for attr, section, key in (
        ("seed", "run", "seed"),
        ("backend", "run", "backend"),
        ("k", "run", "k"),
        ("d_thresh", "pairs", "d_thresh"),
        ("output_dir", "paths", "output_dir"),
        ("frames_dir", "paths", "frames_dir"),
        ("graph_file", "paths", "graph_file"),
        ("db_file", "paths", "db_file"),
        ("gt_file", "paths", "gt_file"),
    ):
        v = getattr(args, attr, None)
        if v is not None:
            cfg = cfg.set(section, key, v)
    return cfg


def _need_file(value: str, flag: str, directory: bool = False) -> Path:
    if not value:
        raise UsageError(f"{flag} is required")
    p = Path(value)
    if directory and not p.is_dir():
        raise UsageError(f"{flag}: directory {value!r} does not exist")
    if not directory and not p.is_file():
        raise UsageError(f"{flag}: file {value!r} does not exist")
    return p


def _out(cfg: RunConfig, explicit: str, default_name: str) -> Path:
    p = Path(explicit) if explicit else Path(cfg.paths.output_dir) / default_name
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _backend(cfg: RunConfig, image_root=None):
    return make_backend(cfg.run.backend, seed=cfg.run.seed, cfg=cfg.client, image_root=image_root)


def _load_graph(cfg: RunConfig, flag: str = "--graph"):
    return deserialize_graph(_need_file(cfg.paths.graph_file, flag).read_bytes())


def _image_root(cfg: RunConfig):
    if cfg.paths.frames_dir:
        return _need_file(cfg.paths.frames_dir, "--frames", directory=True)
    return Path(cfg.paths.graph_file).parent if cfg.paths.graph_file else None


def cmd_synth(args, cfg: RunConfig) -> dict:
    if args.objects < 1:
        raise UsageError("--objects must be >= 1")
    if args.n_frames < 1:
        raise UsageError("--frames must be >= 1")
    spec = SceneSpec(seed=cfg.run.seed, object_count=args.objects)
    scene = generate_scene(spec)
    obs, images = render_observations(
        scene, orbit_trajectory(spec, args.n_frames), cfg=RenderConfig(feature_noise=args.feature_noise)
    )
    out = Path(cfg.paths.output_dir)
    gt_path = write_scene(out, scene, obs, images, generate_qa(scene.graph), generate_plans(scene.graph))
    return {
        "task": "synth",
        "frames_dir": str(out),
        "gt_file": str(gt_path),
        "objects": len(scene.graph.nodes),
        "edges": len(scene.graph.edges),
        "frames": len(obs),
    }


def cmd_build(args, cfg: RunConfig) -> dict:
    frames_dir = _need_file(cfg.paths.frames_dir, "--frames", directory=True)
    backend = _backend(cfg, frames_dir)
    pcfg = PipelineConfig(
        fusion=cfg.fusion, view=cfg.view, pairs=cfg.pairs, max_parallel=cfg.run.max_parallel, seed=cfg.run.seed
    )
    graph = build_graph(read_frames(frames_dir), backend, pcfg)
    path = _out(cfg, cfg.paths.graph_file, "graph.json")
    path.write_bytes(serialize_graph(graph))
    return {"task": "build", "graph_file": str(path), "nodes": len(graph.nodes), "edges": len(graph.edges)}


def cmd_index(args, cfg: RunConfig) -> dict:
    graph = _load_graph(cfg)
    db = index_chunks(build_chunks(graph), _backend(cfg))
    path = _out(cfg, cfg.paths.db_file, "scene.osgv")
    persist(db, path)
    return {"task": "index", "db_file": str(path), "records": len(db), "dim": db.dim, "encoder": db.encoder_name}


def _load_db(cfg: RunConfig):
    return load(_need_file(cfg.paths.db_file, "--db"))


def _write_artifacts(cfg: RunConfig, name: str, doc: dict, svg: str | None = None) -> None:
    out = Path(cfg.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    if svg is not None:
        (out / f"{name}.svg").write_text(svg)


def cmd_query(args, cfg: RunConfig) -> dict:
    db = _load_db(cfg)
    backend = _backend(cfg, _image_root(cfg))
    r = answer_question(args.question, db, backend, backend, cfg.run.k)
    doc = envelope(
        "qa",
        args.question,
        answer=r.answer,
        context_facts=list(r.prompt.context_facts),
        node_ids=[i for e in r.context.entries for i in e.node_ids],
        scores=list(r.context.source_scores),
        template_id=r.prompt.template_id,
    )
    _write_artifacts(cfg, "query", doc)
    return doc


def cmd_ground(args, cfg: RunConfig) -> dict:
    db = _load_db(cfg)
    graph = _load_graph(cfg)
    backend = _backend(cfg, _image_root(cfg))
    r = ground_query(args.question, db, backend, backend, graph, cfg.run.k)
    doc = envelope(
        "ground",
        args.question,
        answer=r.text,
        description=r.description,
        context_facts=list(r.prompt.context_facts),
        node_ids=[r.node_id],
        map=map_doc(r.map),
        crop_refs=[r.crop_ref],
        scores=[r.score],
        template_id=r.prompt.template_id,
    )
    _write_artifacts(cfg, "ground", doc, render_map_svg(graph, [r.node_id]))
    return doc


def cmd_retrieve(args, cfg: RunConfig) -> dict:
    if not args.text and not args.image:
        raise UsageError("--text or --image is required")
    db = _load_db(cfg)
    graph = _load_graph(cfg)
    backend = _backend(cfg, _image_root(cfg))
    r = retrieve_instance(db, backend, graph, text=args.text, image_ref=args.image, k=cfg.run.k)
    doc = envelope(
        "retrieve",
        {"text": args.text, "image": args.image},
        answer=graph.nodes[r.node_id].description,
        node_ids=[r.node_id],
        map=map_doc(r.map),
        crop_refs=[r.crop_ref],
        scores=[r.score],
    )
    _write_artifacts(cfg, "retrieve", doc, render_map_svg(graph, [r.node_id]))
    return doc


def cmd_plan(args, cfg: RunConfig) -> dict:
    graph = _load_graph(cfg)
    backend = _backend(cfg)
    r = plan_task(args.instruction, graph, backend, backend)
    doc = envelope(
        "plan",
        args.instruction,
        plan=[str(a) for a in r.plan.steps],
        bindings=dict(sorted(r.plan.target_bindings.items())),
        context_facts=list(r.prompt.context_facts),
        node_ids=sorted(r.subgraph.nodes),
        template_id=r.prompt.template_id,
    )
    _write_artifacts(cfg, "plan", doc)
    return doc


def _match(cfg: RunConfig) -> MatchConfig:
    return MatchConfig(cfg.match.object_threshold, cfg.match.predicate_threshold, _backend(cfg))


def cmd_eval(args, cfg: RunConfig):
    pred = _load_graph(cfg)
    gt = deserialize_graph(_need_file(cfg.paths.gt_file, "--gt").read_bytes())
    report = evaluate(pred, gt, _match(cfg))
    doc = {"task": "eval", **report.to_dict()}
    _write_artifacts(cfg, "eval", doc)
    return doc if args.format == "json" else report.table()


def cmd_ablate(args, cfg: RunConfig):
    gt = deserialize_graph(_need_file(cfg.paths.gt_file, "--gt").read_bytes())
    nodes = _load_graph(cfg) if cfg.paths.graph_file else None
    match = _match(cfg)
    report = run_ablation(gt, match.encoder, match, cfg.pairs.d_thresh, nodes)
    doc = {"task": "ablate", "d_thresh": cfg.pairs.d_thresh, **report.to_dict()}
    _write_artifacts(cfg, "ablate", doc)
    return doc if args.format == "json" else report.table()


COMMANDS = {
    "synth": cmd_synth,
    "build": cmd_build,
    "index": cmd_index,
    "query": cmd_query,
    "ground": cmd_ground,
    "retrieve": cmd_retrieve,
    "plan": cmd_plan,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def _emit(result, cfg: RunConfig, fmt: str) -> None:
    if isinstance(result, str):
        sys.stdout.write(result)
        return
    result = {**result, "config": cfg.to_dict()}
    if fmt == "table":
        for key in sorted(result):
            if not isinstance(result[key], (dict, list)):
                sys.stdout.write(f"{key:<14} {result[key]}\n")
        return
    sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        cfg = _effective_config(args)
    except FileNotFoundError as exc:
        parser.error(f"--config: {exc}")
    except (KeyError, ValueError) as exc:
        parser.error(f"--config: {exc}")
    try:
        result = COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        parser.error(str(exc))
    except OsgError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    _emit(result, cfg, args.format)
    return 0


if __name__ == "__main__":
    sys.exit(main())
