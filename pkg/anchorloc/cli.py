"""
Command line entry point.

Every subcommand reads JSON or CSV files, runs one pipeline stage and writes its outputs.
Domain and schema errors exit with status 1, argument errors with status 2.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from anchorloc.exception import AnchorLocError, LengthMismatchError
from anchorloc.models.config import RunConfig
from anchorloc.models.evaluation import SweepSpec
from anchorloc.models.localization import LocalizationModeEnum, LocalizationRun
from anchorloc.models.simulation import PerturbationSpec, SceneSpec
from anchorloc.objects.anchor_weights import group_by_camera, limit_anchors
from anchorloc.objects.anchorloc import AnchorLoc
from anchorloc.utils import configure_logging, custom_encoder

logger = logging.getLogger("anchorloc")

EXIT_OK = 0
EXIT_FAILURE = 1
RUN_CONFIG_PATHS = {"cameras", "anchors", "targets", "observations", "detections", "out"}


def _summary(values: Sequence[float]) -> Dict[str, float]:
    if not values:
        return {"mean": 0.0, "max": 0.0}
    return {"mean": float(np.mean(values)), "max": float(np.max(values))}


def diagnostics(run: LocalizationRun, config: RunConfig, n_skipped: int, n_init_failed: int) -> Dict[str, Any]:
    """
    Iteration and residual statistics of a localization run.
    :param run: Localization run
    :param config: Run configuration, paths are left out
    :param n_skipped: Frames without any visible camera
    :param n_init_failed: Frames whose initial estimate failed, already part of run.failures
    :return: JSON document
    """
    residuals = [
        float(np.hypot(*item.residual)) for result in run.results for item in result.per_camera_residuals
    ]
    return {
        "mode": config.mode.value,
        "n_frames": len(run.results),
        "n_converged": run.n_converged,
        "n_failed": len(run.failures),
        "n_init_failed": n_init_failed,
        "n_skipped": n_skipped,
        "iterations": _summary([result.iterations for result in run.results]),
        "objective": _summary([result.final_objective for result in run.results]),
        "residual_px": _summary(residuals),
        "failures": [failure.model_dump(mode="json") for failure in run.failures],
        "config": config.model_dump(mode="json", by_alias=True, exclude=RUN_CONFIG_PATHS),
    }


def cmd_simulate(args: argparse.Namespace) -> None:
    app = AnchorLoc()
    scene = app.dataset.read_model(args.config, SceneSpec)
    if args.seed is not None:
        scene = scene.model_copy(update={"rng_seed": args.seed})
    app.dataset.write_scene(args.out, app.simulator.simulate_scene(scene))


def cmd_perturb(args: argparse.Namespace) -> None:
    app = AnchorLoc()
    spec = app.dataset.read_model(args.config, PerturbationSpec)
    cams = app.dataset.read_cameras(args.cameras)
    perturbed = app.simulator.perturb_cameras(cams, spec, seed=args.seed if args.seed is not None else 0)
    app.dataset.write_cameras(Path(args.out) / "cameras_perturbed.json", perturbed)


def cmd_localize(args: argparse.Namespace) -> None:
    config_path = Path(args.config)
    config = AnchorLoc().dataset.read_model(config_path, RunConfig).resolve(config_path.parent)
    if args.out is not None:
        config = config.model_copy(update={"out": Path(args.out)})
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    app = AnchorLoc.from_run_config(config)

    cams = app.dataset.read_cameras(config.cameras)
    if config.perturbation is not None and not config.perturbation.is_zero:
        logger.info("Perturbing %d cameras with %s, seed %d", len(cams), config.perturbation.label, config.seed)
        cams = app.simulator.perturb_cameras(cams, config.perturbation, seed=config.seed)
        app.dataset.write_cameras(config.out / "cameras_perturbed.json", cams)
    anchors = None
    if config.mode == LocalizationModeEnum.anchor and config.anchors is not None:
        anchors = limit_anchors(group_by_camera(app.dataset.read_anchors(config.anchors)), config.anchor_count_limit)
    if config.observations is not None:
        observations = app.dataset.read_observations(config.observations)
    else:
        observations = app.dataset.read_detections(
            config.detections,  # type: ignore[arg-type]
            [cam.id for cam in cams],
            config.representative,
        )
    seen = [obs for obs in observations if obs.n_visible > 0]
    if len(seen) < len(observations):
        logger.debug("%d frames without visible cameras skipped", len(observations) - len(seen))

    heights = app.dataset.read_targets(config.targets) if config.targets is not None else {}
    heights.update(config.target_heights)
    initialized, init_failures = app.initializer.initialize_all(seen, cams, heights, config.head_height)
    run = app.localizer.localize_all(initialized, cams, anchors, config.mode, config.smoothing, config.solver)
    run = run.model_copy(update={"failures": [*init_failures, *run.failures]})

    app.dataset.write_estimates(config.out / "estimates.csv", run.results)
    app.dataset.write_initials(config.out / "initials.csv", run.initials)
    app.dataset.write_json(
        config.out / "diagnostics.json",
        diagnostics(run, config, len(observations) - len(seen), len(init_failures)),
    )


def cmd_evaluate(args: argparse.Namespace) -> None:
    app = AnchorLoc()
    estimates = app.dataset.read_positions(args.estimates)
    truth = app.dataset.read_positions(args.truth)
    initials = {initial.key: initial for initial in app.dataset.read_initials(args.initials)}
    keys = sorted(estimates)
    missing = [key for key in keys if key not in truth or key not in initials]
    if missing:
        logger.error("%d estimates have no ground truth or initial estimate", len(missing))
        raise LengthMismatchError(f"No ground truth or initial estimate for (frame, target) {missing[:5]}")
    report = app.evaluator.evaluate_positions(
        [estimates[key] for key in keys],
        [truth[key] for key in keys],
        [initials[key].position for key in keys],
        single_camera=[initials[key].n_cameras == 1 for key in keys],
        target_ids=[key[1] for key in keys],
    )
    app.dataset.write_metrics(args.out, report)


def cmd_sweep(args: argparse.Namespace) -> None:
    app = AnchorLoc()
    spec = app.dataset.read_model(args.config, SweepSpec)
    if args.seed is not None:
        spec = spec.model_copy(update={"seeds": [args.seed]})
    if args.dry_run:
        for cell in app.evaluator.enumerate_cells(spec):
            print(cell.key)  # noqa: T201
        return
    app.evaluator.run_sweep(spec, args.out, args.jobs)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="Increase log verbosity.")
    common.add_argument("--error-json", action="store_true", help="Print errors as JSON on stderr.")

    parser = argparse.ArgumentParser(prog="anchorloc", description="Anchor-based multi-camera pedestrian localization.")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", parents=[common], help="Simulate a scene.")
    simulate.add_argument("--config", required=True, help="Scene spec JSON.")
    simulate.add_argument("--seed", type=int, default=None, help="Override the scene seed.")
    simulate.add_argument("--out", required=True, help="Output directory.")
    simulate.set_defaults(handler=cmd_simulate)

    perturb = commands.add_parser("perturb", parents=[common], help="Add calibration errors to cameras.")
    perturb.add_argument("--config", required=True, help="Perturbation spec JSON.")
    perturb.add_argument("--cameras", required=True, help="Camera JSON file.")
    perturb.add_argument("--seed", type=int, default=None, help="Perturbation seed, 0 by default.")
    perturb.add_argument("--out", required=True, help="Output directory.")
    perturb.set_defaults(handler=cmd_perturb)

    localize = commands.add_parser("localize", parents=[common], help="Localize targets.")
    localize.add_argument("--config", required=True, help="Run config JSON.")
    localize.add_argument("--out", default=None, help="Override the output directory.")
    localize.add_argument("--seed", type=int, default=None, help="Override the perturbation seed.")
    localize.set_defaults(handler=cmd_localize)

    evaluate = commands.add_parser("evaluate", parents=[common], help="Compare estimates with ground truth.")
    evaluate.add_argument("--estimates", required=True, help="estimates.csv")
    evaluate.add_argument("--truth", required=True, help="trajectories.csv")
    evaluate.add_argument("--initials", required=True, help="initials.csv")
    evaluate.add_argument("--out", required=True, help="Output directory.")
    evaluate.set_defaults(handler=cmd_evaluate)

    sweep = commands.add_parser("sweep", parents=[common], help="Run an experiment sweep.")
    sweep.add_argument("--config", required=True, help="Sweep spec JSON.")
    sweep.add_argument("--out", required=True, help="Output directory.")
    sweep.add_argument("--jobs", type=int, default=1, help="Worker processes.")
    sweep.add_argument("--seed", type=int, default=None, help="Run a single seed.")
    sweep.add_argument("--dry-run", action="store_true", help="List the cells without running them.")
    sweep.set_defaults(handler=cmd_sweep)
    return parser


def error_payload(error: Exception) -> Dict[str, Any]:
    path = getattr(error, "path", None)
    if path is None and isinstance(error, OSError):
        path = error.filename
    return {
        "error": type(error).__name__,
        "message": str(error).splitlines()[0] if str(error) else "",
        "path": str(path) if path is not None else None,
        "line": getattr(error, "line", None),
    }


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        args.handler(args)
    except (AnchorLocError, ValidationError, OSError) as error:
        payload = error_payload(error)
        print(f"anchorloc: error: {payload['message']}", file=sys.stderr)  # noqa: T201
        if args.error_json:
            print(json.dumps(payload, default=custom_encoder), file=sys.stderr)  # noqa: T201
        return EXIT_FAILURE
    return EXIT_OK
