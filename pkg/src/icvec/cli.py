"""Command-line front end.

    icvec chanest|mud|throughput|convergence --scenario FILE --out DIR
          [--threads N] [--seed S] [--server URL]

By default the experiment runs in-process.  With --server the scenario is
posted to a running icvec service and the returned files are written
locally; either way the CSV bodies are identical for the same scenario.
The seed can also be overridden with the ICVEC_SEED environment variable
(--seed wins over the environment, which wins over the scenario file).

Exit codes: 0 success, 2 scenario validation failure, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .experiments import run_experiment
from .scenarios import ScenarioError, parse_scenario, scenario_to_dict

__all__ = ["main"]

EXIT_OK = 0
EXIT_SCENARIO = 2
EXIT_RUNTIME = 3

EXPERIMENTS = ("chanest", "mud", "throughput", "convergence")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icvec",
        description="Multi-operator interference-cooperation simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run a {name} scenario")
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="trial-level worker threads (results identical)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
        p.add_argument("--server", default=None,
                       help="run against an icvec service at this base URL")
    return parser


def _load_scenario(path: str, command: str, seed_override):
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    doc.setdefault("experiment", command)
    if doc["experiment"] != command:
        raise ScenarioError(
            f"scenario declares experiment {doc['experiment']!r}, "
            f"expected {command!r}")
    if seed_override is not None:
        doc.setdefault("link", {})
        doc["link"]["seed"] = int(seed_override)
    return parse_scenario(doc)


def _make_client(server: str):
    import httpx

    return httpx.Client(base_url=server, timeout=3600.0)


def _run_remote(server: str, scenario, threads: int):
    client = _make_client(server)
    try:
        resp = client.post(f"/run/{scenario.experiment}",
                           params={"threads": threads},
                           json=scenario_to_dict(scenario))
    finally:
        client.close()
    if resp.status_code == 422:
        raise ScenarioError(f"server rejected scenario: {resp.json()}")
    if resp.status_code != 200:
        raise RuntimeError(f"server error {resp.status_code}: {resp.text}")
    body = resp.json()
    return body["files"], body["summary"]


def _write_outputs(out_dir: str, experiment: str, files: dict, summary: dict,
                   runtime_s: float, seed_used) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, body in files.items():
        (out / name).write_text(body)
    document = {
        "experiment": experiment,
        "summary": summary,
        "outputs": sorted(files),
        "metadata": {
            "version": __version__,
            "runtime_s": runtime_s,
            "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "seed_override": seed_used,
        },
    }
    (out / "summary.json").write_text(json.dumps(document, indent=2,
                                                 sort_keys=True) + "\n")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    seed = args.seed
    if seed is None and os.environ.get("ICVEC_SEED"):
        try:
            seed = int(os.environ["ICVEC_SEED"])
        except ValueError:
            print("icvec: ICVEC_SEED must be an integer", file=sys.stderr)
            return EXIT_SCENARIO

    try:
        scenario = _load_scenario(args.scenario, args.command, seed)
    except ScenarioError as exc:
        print(f"icvec: {exc}", file=sys.stderr)
        return EXIT_SCENARIO

    start = time.monotonic()
    try:
        if args.server:
            files, summary = _run_remote(args.server, scenario, args.threads)
        else:
            result = run_experiment(scenario, threads=args.threads)
            files, summary = result.files, result.summary
    except ScenarioError as exc:
        print(f"icvec: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except Exception as exc:
        print(f"icvec: run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    try:
        _write_outputs(args.out, scenario.experiment, files, summary,
                       time.monotonic() - start, seed)
    except OSError as exc:
        print(f"icvec: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for name in sorted(files):
        print(f"wrote {Path(args.out) / name}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
