#!/usr/bin/env python3
"""
Command-line entry points
validate, run, plan, export-pomdp, bench and serve over a scenario manifest
"""

import argparse
import asyncio
import sys
from pathlib import Path
from typing import List, Optional

import structlog
from tabulate import tabulate

import config
from belief import init_belief
from config import get_settings, load_settings_from_file, setup_logging
from errors import AOSError, LinkError
from executor import PlannerKind, run_batch, run_remote_batch, world_seed, write_trace
from explicit import build_explicit, export_pomdp, oracle_plan
from harness import WorldSimulator, serve
from planner import PlannerConfig, plan
from sampler import RandomStream, bench_sampler
from spec_model import ProjectModel, load_project

logger = structlog.get_logger(__name__)


def _print_error(e: AOSError):
    kind = e.kind if isinstance(e, LinkError) else type(e).__name__
    where = f" at {e.path}" if e.path else ""
    print(f"error: {kind}{where}: {e.message}", file=sys.stderr)


def _planner_config(project: ProjectModel, args) -> PlannerConfig:
    return PlannerConfig.from_settings(
        project,
        simulations=args.sims,
        max_depth=args.depth,
        gamma=args.gamma,
        uct_c=args.uct_c,
        seed=args.seed,
    )


def cmd_validate(args) -> int:
    project = load_project(args.manifest)
    rows = [
        (name, len(project.skill_actions(name)), ", ".join(skill.responses))
        for name, skill in project.skills.items()
    ]
    print(f"{project.name}: ok")
    print(tabulate(rows, headers=["skill", "grounded actions", "observations"], tablefmt="grid"))
    print(f"state slots: {project.state.size}  special states: {len(project.special_states)}  "
          f"discount: {project.gamma}")
    return 0


def cmd_run(args) -> int:
    project = load_project(args.manifest)
    config = _planner_config(project, args)
    trace_dir = Path(args.trace_dir or get_settings().trace_dir)

    if args.connect:
        host, _, port = args.connect.rpartition(":")
        summary = asyncio.run(run_remote_batch(project, config, host or "127.0.0.1", int(port), args.episodes, args.seed,
                                               args.particles, args.step_cap, args.planner, args.horizon))
    else:
        summary = asyncio.run(run_batch(project, config, args.world, args.episodes, args.seed, args.particles,
                                        args.step_cap, args.planner, args.horizon))

    paths = []
    for i, trace in enumerate(summary.traces):
        paths.append(write_trace(trace, trace_dir / f"{project.name}-{args.seed}-{i:03d}.jsonl"))
    print(tabulate(summary.rows(), headers=["metric", "value"], tablefmt="grid"))
    faulted = [p for p, t in zip(paths, summary.traces) if t.fault]
    for path in faulted:
        print(f"fault trace: {path}", file=sys.stderr)
    return 1 if faulted else 0


def cmd_plan(args) -> int:
    project = load_project(args.manifest)
    if args.planner == PlannerKind.OFFLINE.value:
        pomdp = build_explicit(project, args.eps, args.max_states)
        action, value = oracle_plan(pomdp, pomdp.b0, args.horizon)
        print(f"action: {action.label}  value: {value:.4f}  horizon: {args.horizon}")
        return 0

    config = _planner_config(project, args)
    belief_rng, plan_rng = RandomStream(args.seed).split(2)
    belief = init_belief(project, args.particles or get_settings().particles, belief_rng)
    action, diagnostics = plan(project, belief, config, rng=plan_rng)
    print(f"action: {action.label}")
    if args.explain:
        print(tabulate(diagnostics.rows(), headers=["action", "visits", "value"], tablefmt="grid"))
        print(f"simulations: {diagnostics.simulations}  uct_c: {diagnostics.uct_c:.3f}  "
              f"nodes: {diagnostics.tree_nodes}  elapsed: {diagnostics.elapsed_ms:.1f} ms")
    return 0


def cmd_export(args) -> int:
    project = load_project(args.manifest)
    pomdp = build_explicit(project, args.eps, args.max_states)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as f:
        export_pomdp(pomdp, f, project.state)
    print(tabulate([(out, pomdp.n_states, len(pomdp.actions), len(pomdp.observations))],
                   headers=["file", "states", "actions", "observations"], tablefmt="grid"))
    return 0


def cmd_bench(args) -> int:
    project = load_project(args.manifest)
    rate = bench_sampler(project, args.steps, args.seed)
    logger.info("Sampler benchmark finished", project=project.name, steps=args.steps)
    print(f"{rate:.1f}")
    return 0


def cmd_serve(args) -> int:
    project = load_project(args.manifest)

    async def run():
        world = WorldSimulator(project, args.world, seed=world_seed(args.seed))
        server = await serve(world, args.host, args.port)
        address = server.sockets[0].getsockname()
        print(f"serving {project.name} ({args.world}) on {address[0]}:{address[1]}", flush=True)
        async with server:
            await server.serve_forever()

    try:
        asyncio.run(run())
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(description="Skill-documentation planning toolchain")
    parser.add_argument("--log-level", default=None, help="Override AOS_LOG_LEVEL")
    parser.add_argument("--env-file", default=None, help="Read AOS_* settings from this file instead of .env")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_manifest(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("manifest", help="Scenario manifest.json")
        p.add_argument("--seed", type=int, default=settings.seed, help="Base seed (default AOS_SEED)")
        return p

    def planning_flags(p: argparse.ArgumentParser):
        p.add_argument("--sims", type=int, help="Simulations per decision")
        p.add_argument("--depth", type=int, help="Search depth")
        p.add_argument("--gamma", type=float, help="Discount override")
        p.add_argument("--uct-c", type=float, dest="uct_c", help="Exploration constant")
        p.add_argument("--particles", type=int, help="Belief particle count")
        p.add_argument("--planner", choices=[k.value for k in PlannerKind], default=PlannerKind.POMCP.value)
        p.add_argument("--horizon", type=int, default=4, help="Offline planner horizon")

    def explicit_flags(p: argparse.ArgumentParser):
        p.add_argument("--eps", type=float, help="Enumeration pruning threshold")
        p.add_argument("--max-states", type=int, dest="max_states", help="Reachable state cap")

    p = with_manifest("validate", "Load and link a manifest")
    p.set_defaults(handler=cmd_validate)

    p = with_manifest("run", "Run closed-loop episodes")
    planning_flags(p)
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--step-cap", type=int, dest="step_cap", help="Steps per episode")
    p.add_argument("--world", default="faithful", help="World variant from the manifest")
    p.add_argument("--trace-dir", dest="trace_dir", help="Where trace files go")
    p.add_argument("--connect", help="host:port of a skill server")
    p.set_defaults(handler=cmd_run)

    p = with_manifest("plan", "Choose the first action from the initial belief")
    planning_flags(p)
    explicit_flags(p)
    p.add_argument("--explain", action="store_true", help="Print per-action statistics")
    p.set_defaults(handler=cmd_plan)

    p = with_manifest("export-pomdp", "Write the explicit POMDP tables")
    explicit_flags(p)
    p.add_argument("-o", "--output", default="pomdp.txt")
    p.set_defaults(handler=cmd_export)

    p = with_manifest("bench", "Measure sampler throughput")
    p.add_argument("--steps", type=int, default=100_000)
    p.set_defaults(handler=cmd_bench)

    p = with_manifest("serve", "Expose a world over the wire protocol")
    p.add_argument("--world", default="faithful")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7800)
    p.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    # settings feed parser defaults, so the env file is applied first
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--env-file", default=None)
    known, _ = pre.parse_known_args(argv)
    if known.env_file:
        config.settings = load_settings_from_file(known.env_file)
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(level=args.log_level)
    if getattr(args, "episodes", 1) < 1:
        parser.error("--episodes must be >= 1")
    try:
        return args.handler(args)
    except AOSError as e:
        _print_error(e)
        return 1
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
